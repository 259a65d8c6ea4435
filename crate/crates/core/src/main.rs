use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use poseselect::pipeline::{commands, with_workers, KvConfig, RunConfig};
use poseselect::{Error, Result};

/// Value-based selection of synthetic training views for pose regression.
#[derive(Parser, Debug)]
#[command(name = "poseselect", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    config: ConfigFlags,
}

/// Configuration. `--config` supplies the base file; every other flag
/// overrides the key named in its help text.
#[derive(Args, Debug)]
struct ConfigFlags {
    /// Base config file (`section.key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any key, e.g. `--set scoring.alpha=2`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    /// train.poses
    #[arg(long, global = true)]
    train: Option<String>,
    /// train.trajectory (use the toy scene's built-in trajectory of N poses)
    #[arg(long, global = true, value_name = "N")]
    trajectory: Option<String>,
    /// train.views (directory of real `<id>_c.png` views)
    #[arg(long, global = true)]
    train_views: Option<String>,
    /// errors.path
    #[arg(long, global = true)]
    errors: Option<String>,
    /// views.dir (ingestion directory of rendered triplets)
    #[arg(long, global = true)]
    views: Option<String>,
    /// perturb.profile (indoor | outdoor)
    #[arg(long, global = true)]
    profile: Option<String>,
    /// perturb.delta_t
    #[arg(long, global = true)]
    delta_t: Option<String>,
    /// perturb.delta_r (degrees)
    #[arg(long, global = true)]
    delta_r: Option<String>,
    /// perturb.m_per_pose
    #[arg(long, global = true)]
    m_per_pose: Option<String>,
    /// perturb.seed
    #[arg(long, global = true)]
    seed: Option<String>,
    /// metric.lambda
    #[arg(long, global = true)]
    lambda: Option<String>,
    /// scoring.alpha
    #[arg(long, global = true)]
    alpha: Option<String>,
    /// scoring.beta
    #[arg(long, global = true)]
    beta: Option<String>,
    /// scoring.gamma
    #[arg(long, global = true)]
    gamma: Option<String>,
    /// scoring.k_neighbors
    #[arg(long, global = true)]
    k_neighbors: Option<String>,
    /// scoring.bandwidth (median | <value>)
    #[arg(long, global = true)]
    bandwidth: Option<String>,
    /// select.k
    #[arg(short = 'k', long = "k", global = true)]
    k: Option<String>,
    /// eval.test_per_pose
    #[arg(long, global = true)]
    test_per_pose: Option<String>,
    /// compare.seeds (space separated)
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// compare.budgets (space separated; `0.5N` means half the training set)
    #[arg(long, global = true)]
    budgets: Option<String>,
    /// run.workers
    #[arg(long, global = true)]
    workers: Option<String>,
}

impl ConfigFlags {
    fn resolve(&self) -> Result<RunConfig> {
        let mut kv = match &self.config {
            Some(path) => KvConfig::load(path)?,
            None => KvConfig::default(),
        };
        let flags = [
            ("train.poses", &self.train),
            ("train.trajectory", &self.trajectory),
            ("train.views", &self.train_views),
            ("errors.path", &self.errors),
            ("views.dir", &self.views),
            ("perturb.profile", &self.profile),
            ("perturb.delta_t", &self.delta_t),
            ("perturb.delta_r", &self.delta_r),
            ("perturb.m_per_pose", &self.m_per_pose),
            ("perturb.seed", &self.seed),
            ("metric.lambda", &self.lambda),
            ("scoring.alpha", &self.alpha),
            ("scoring.beta", &self.beta),
            ("scoring.gamma", &self.gamma),
            ("scoring.k_neighbors", &self.k_neighbors),
            ("scoring.bandwidth", &self.bandwidth),
            ("select.k", &self.k),
            ("eval.test_per_pose", &self.test_per_pose),
            ("compare.seeds", &self.seeds),
            ("compare.budgets", &self.budgets),
            ("run.workers", &self.workers),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                kv.set(key, v.as_str())?;
            }
        }
        for pair in &self.overrides {
            kv.set_pair(pair)?;
        }
        RunConfig::from_kv(&kv)
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Perturb every training pose into a candidate pool.
    GenCandidates {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render view triplets of a pose or pool file from the toy scene.
    RenderToy {
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Render without the artifact patches.
        #[arg(long)]
        clean: bool,
    },
    /// Score every candidate of a pool.
    Score {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Keep the top-K rows of a score table.
    Select {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Localize test views with the selected candidates added to the database.
    EvalProxy {
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Test pose file; drawn from the seed when omitted.
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, default_value = "value")]
        method: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Value-based against random selection over seeds and budgets.
    Compare {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate, score, select and evaluate into a run directory.
    Pipeline {
        #[arg(long)]
        run_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<String> {
    let cfg = cli.config.resolve()?;
    let workers = cfg.workers;
    with_workers(workers, move || match &cli.command {
        Command::GenCandidates { out } => commands::gen_candidates(&cfg, out.as_deref()),
        Command::RenderToy {
            poses,
            out_dir,
            clean,
        } => commands::render_toy(&cfg, poses, out_dir, *clean),
        Command::Score { pool, out } => commands::score(&cfg, pool, out.as_deref()),
        Command::Select { scores, out } => commands::select(&cfg, scores, out.as_deref()),
        Command::EvalProxy {
            pool,
            manifest,
            test,
            method,
            out,
        } => commands::eval_proxy(&cfg, pool, manifest, test.as_deref(), method, out.as_deref()),
        Command::Compare { out } => commands::compare(&cfg, out.as_deref()),
        Command::Pipeline { run_dir } => commands::pipeline(&cfg, run_dir),
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(summary) => {
            eprintln!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    e.exit_code() as u8
}
