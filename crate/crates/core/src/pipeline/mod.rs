//! Orchestration shared by the CLI subcommands: loading the training set and
//! its views, scoring a pool, and the paired value-vs-random experiment.

pub mod commands;
pub mod config;

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use self::config::{Budget, KvConfig, RunConfig, TrainSource};
use crate::candidate_gen::{generate_pool, CandidatePose, PerturbConfig};
use crate::error::{Error, Result};
use crate::formats::{read_poses, read_text, parse_errors};
use crate::pose_math::{compute_stats, DatasetStats, Pose};
use crate::proxy_eval::{
    build_database, evaluate_augmentation, leave_one_out_errors, DbEntry, EvalReport,
};
use crate::render_bridge::{view_path, ImageBuffer, ViewSource};
use crate::scoring::{build_scores, score_pool, select_top_k, TrainError, TrainIndex, ValueScore};

/// Mixed into the run seed to draw the held-out test poses.
pub const TEST_SEED_SALT: u64 = 0x7465_7374;
/// Mixed into the run seed to draw the random-selection baseline.
pub const RANDOM_SEED_SALT: u64 = 0x7261_6e64;

pub const METHOD_NONE: &str = "none";
pub const METHOD_VALUE: &str = "value";
pub const METHOD_RANDOM: &str = "random";

/// Runs `f` on a dedicated rayon pool with `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(f)
}

/// Training poses with their real views and zero-shot errors.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub poses: Vec<Pose>,
    pub views: Vec<(Pose, ImageBuffer)>,
    pub errors: Vec<TrainError>,
    /// `file` or `leave-one-out`.
    pub error_source: &'static str,
    pub stats: DatasetStats,
}

pub fn train_poses(cfg: &RunConfig) -> Result<Vec<Pose>> {
    let mut poses = match cfg.require_train()? {
        TrainSource::File(p) => read_poses(p)?,
        TrainSource::Trajectory(n) => cfg.scene.trajectory(*n),
    };
    poses.sort_by_key(|p| p.id);
    Ok(poses)
}

/// A real (artifact-free) view of `pose`: loaded from `train.views` when
/// set, otherwise rendered from the clean toy scene.
pub fn real_views(cfg: &RunConfig, poses: &[Pose]) -> Result<Vec<(Pose, ImageBuffer)>> {
    use rayon::prelude::*;
    let clean = cfg.scene.without_artifacts();
    poses
        .par_iter()
        .map(|p| {
            let img = match &cfg.train_views {
                Some(dir) => load_central(dir, p.id)?,
                None => clean.render(p)?.0,
            };
            Ok((*p, img))
        })
        .collect()
}

/// Synthetic views: loaded from `views.dir` when set, otherwise rendered
/// from the toy scene including its artifact patches.
pub fn synthetic_views(
    cfg: &RunConfig,
    candidates: &[CandidatePose],
) -> Result<Vec<(Pose, ImageBuffer)>> {
    use rayon::prelude::*;
    candidates
        .par_iter()
        .map(|c| {
            let img = match &cfg.views_dir {
                Some(dir) => load_central(dir, c.pose.id)?,
                None => cfg.scene.render(&c.pose)?.0,
            };
            Ok((c.pose, img))
        })
        .collect()
}

fn load_central(dir: &Path, id: u64) -> Result<ImageBuffer> {
    let path = view_path(dir, id, 'c');
    if !path.exists() {
        return Err(Error::MissingView(path));
    }
    ImageBuffer::load_png(&path)
}

pub fn view_source(cfg: &RunConfig) -> ViewSource {
    match &cfg.views_dir {
        Some(dir) => ViewSource::Directory(dir.clone()),
        None => ViewSource::Toy(cfg.scene.clone()),
    }
}

pub fn load_training_set(cfg: &RunConfig) -> Result<TrainingSet> {
    let poses = train_poses(cfg)?;
    let stats = compute_stats(&poses)?;
    let views = real_views(cfg, &poses)?;
    let (errors, error_source) = match &cfg.errors_path {
        Some(path) => (
            parse_errors(&read_text(path)?, &path.display().to_string())?,
            "file",
        ),
        None => (leave_one_out_errors(&views, &cfg.descriptor)?, "leave-one-out"),
    };
    Ok(TrainingSet {
        poses,
        views,
        errors,
        error_source,
        stats,
    })
}

/// Scores every candidate; the result is ranked (rank 1 first) with nothing
/// selected yet.
pub fn score_candidates(
    cfg: &RunConfig,
    train: &TrainingSet,
    pool: &[CandidatePose],
) -> Result<Vec<ValueScore>> {
    let index = TrainIndex::with_errors(&train.poses, &train.errors, &train.stats, &cfg.scoring)?;
    let raw = score_pool(pool, &index, &view_source(cfg), &cfg.scoring)?;
    let scores = build_scores(pool, &raw, &cfg.scoring)?;
    Ok(select_top_k(scores, 0)?.ranked)
}

/// Held-out test poses for `seed`: the same perturbation distribution as the
/// candidate pool, drawn from an independent stream.
pub fn test_poses(cfg: &RunConfig, train: &[Pose], seed: u64) -> Result<Vec<Pose>> {
    let pc = PerturbConfig {
        m_per_pose: cfg.test_per_pose,
        seed: seed ^ TEST_SEED_SALT,
        ..cfg.perturb
    };
    Ok(generate_pool(train, &pc)?.into_iter().map(|c| c.pose).collect())
}

/// Pool indices in random order; prefixes give nested random subsets.
pub fn random_order(pool_size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ RANDOM_SEED_SALT);
    rand::seq::index::sample(&mut rng, pool_size, pool_size).into_vec()
}

/// Paired summary for one budget.
#[derive(Clone, Debug, PartialEq)]
pub struct PairedSummary {
    pub k: usize,
    pub wins: usize,
    pub seeds: usize,
    /// Mean over seeds of `(random - value) / random` median translation error.
    pub mean_rel_improvement: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Comparison {
    /// Baseline rows (`none`), one per seed.
    pub baseline: Vec<EvalReport>,
    /// `value` and `random` rows per seed and budget.
    pub arms: Vec<EvalReport>,
    pub summary: Vec<PairedSummary>,
}

impl Comparison {
    pub fn rows(&self) -> impl Iterator<Item = &EvalReport> {
        self.baseline.iter().chain(&self.arms)
    }

    pub fn find(&self, method: &str, seed: u64, k: usize) -> Option<&EvalReport> {
        self.rows()
            .find(|r| r.method == method && r.seed == seed && r.k == k)
    }

    /// Mean over seeds of one arm's median translation error at budget `k`.
    pub fn mean_median_t(&self, method: &str, k: usize) -> f64 {
        let v: Vec<f64> = self
            .arms
            .iter()
            .filter(|r| r.method == method && r.k == k)
            .map(|r| r.median_t_error)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut s = format!("{}\n", crate::formats::SUMMARY_HEADER);
        for r in self.rows() {
            let _ = writeln!(s, "{}", r.summary_line());
        }
        s.push_str("\nK,wins,seeds,win_rate,mean_rel_improvement\n");
        for p in &self.summary {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                p.k,
                p.wins,
                p.seeds,
                p.wins as f64 / p.seeds as f64,
                p.mean_rel_improvement
            );
        }
        s
    }
}

fn entries(views: &[(Pose, ImageBuffer)], cfg: &RunConfig) -> Vec<DbEntry> {
    build_database(views, &cfg.descriptor)
}

/// Value-based against random selection over `cfg.seeds` and `cfg.budgets`.
/// Both arms share the pool, the synthetic renderings and the test set of a
/// seed; only the selection rule differs.
pub fn compare(cfg: &RunConfig) -> Result<Comparison> {
    let train = load_training_set(cfg).map_err(|e| e.in_stage("load-train"))?;
    let train_db = entries(&train.views, cfg);
    let n = train.poses.len();
    let mut ks: Vec<usize> = cfg.budgets.iter().map(|b| b.resolve(n)).collect();
    ks.sort_unstable();
    ks.dedup();

    let mut out = Comparison::default();
    for &seed in &cfg.seeds {
        let mut run = cfg.clone();
        run.perturb.seed = seed;
        let pool = generate_pool(&train.poses, &run.perturb).map_err(|e| e.in_stage("gen-candidates"))?;
        let k_max = ks.last().copied().unwrap_or(0);
        if k_max > pool.len() {
            return Err(Error::Config(format!(
                "budget {k_max} exceeds the pool size {}",
                pool.len()
            ))
            .in_stage("select"));
        }
        let ranked = score_candidates(&run, &train, &pool).map_err(|e| e.in_stage("score"))?;
        let order = random_order(pool.len(), seed);

        // render each needed synthetic view once and share it between arms
        let pos_of: std::collections::HashMap<u64, usize> =
            pool.iter().enumerate().map(|(i, c)| (c.pose.id, i)).collect();
        let value_idx: Vec<usize> = ranked[..k_max].iter().map(|s| pos_of[&s.candidate_id]).collect();
        let random_idx: Vec<usize> = order[..k_max].to_vec();
        let mut needed: Vec<usize> = value_idx.iter().chain(&random_idx).copied().collect();
        needed.sort_unstable();
        needed.dedup();
        let needed_cands: Vec<CandidatePose> = needed.iter().map(|&i| pool[i]).collect();
        let rendered = synthetic_views(&run, &needed_cands).map_err(|e| e.in_stage("render"))?;
        let rendered_db = entries(&rendered, cfg);
        let db_at = |i: usize| rendered_db[needed.binary_search(&i).expect("rendered")].clone();

        let test = test_poses(&run, &train.poses, seed).map_err(|e| e.in_stage("evaluate"))?;
        let test_db = entries(&real_views(&run, &test).map_err(|e| e.in_stage("evaluate"))?, cfg);

        let eval = |method: &str, idx: &[usize], k: usize| {
            let syn: Vec<DbEntry> = idx.iter().map(|&i| db_at(i)).collect();
            evaluate_augmentation(&train_db, &syn, &test_db, (method, seed, k))
                .map_err(|e| e.in_stage("evaluate"))
        };
        out.baseline.push(eval(METHOD_NONE, &[], 0)?);
        for &k in &ks {
            out.arms.push(eval(METHOD_VALUE, &value_idx[..k], k)?);
            out.arms.push(eval(METHOD_RANDOM, &random_idx[..k], k)?);
        }
        log::info!("compare: seed {seed} done");
    }

    for &k in &ks {
        let mut wins = 0;
        let mut rel = Vec::new();
        for &seed in &cfg.seeds {
            let v = out.find(METHOD_VALUE, seed, k).expect("value row").median_t_error;
            let r = out.find(METHOD_RANDOM, seed, k).expect("random row").median_t_error;
            if v < r {
                wins += 1;
            }
            rel.push(if r > 0.0 { (r - v) / r } else { 0.0 });
        }
        out.summary.push(PairedSummary {
            k,
            wins,
            seeds: cfg.seeds.len(),
            mean_rel_improvement: rel.iter().sum::<f64>() / rel.len().max(1) as f64,
        });
    }
    Ok(out)
}
