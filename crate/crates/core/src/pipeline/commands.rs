//! One function per CLI subcommand. Each writes its artifacts (or prints them
//! to stdout when no output path is given) and returns a one-line summary.

use std::collections::HashSet;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use super::{
    compare as run_compare, load_training_set, real_views, score_candidates, synthetic_views,
    test_poses, view_source, RunConfig, METHOD_VALUE,
};
use crate::candidate_gen::{generate_pool, CandidatePose};
use crate::error::{Error, Result};
use crate::formats::{
    parse_pose_lines, parse_score_table, provenance_get, read_pool, read_poses, read_text,
    write_pool, write_report, write_score_table, write_text, Provenance,
};
use crate::proxy_eval::{build_database, evaluate_augmentation, EvalReport};
use crate::render_bridge::{make_triplet, write_triplet, ViewSource};
use crate::scoring::{select_top_k, SelectionManifest, ValueScore};

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("writing stdout", e)),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

pub fn gen_candidates(cfg: &RunConfig, out: Option<&Path>) -> Result<String> {
    cfg.check_paths()?;
    let train = super::train_poses(cfg)?;
    let pool = generate_pool(&train, &cfg.perturb)?;
    emit(out, &write_pool(&pool))?;
    Ok(format!(
        "N={} M={} pool={}",
        train.len(),
        cfg.perturb.m_per_pose,
        pool.len()
    ))
}

/// Renders a view triplet (plus opacity) for every pose of an 8- or 9-column
/// pose file into `out_dir`, in the ingestion layout.
pub fn render_toy(cfg: &RunConfig, poses: &Path, out_dir: &Path, clean: bool) -> Result<String> {
    let parsed = parse_pose_lines(&read_text(poses)?, &poses.display().to_string(), None)?;
    let scene = if clean {
        cfg.scene.without_artifacts()
    } else {
        cfg.scene.clone()
    };
    let source = ViewSource::Toy(scene);
    create_dir(out_dir)?;
    parsed.par_iter().try_for_each(|(pose, parent)| {
        let c = CandidatePose {
            pose: *pose,
            parent_id: parent.unwrap_or(pose.id),
        };
        write_triplet(out_dir, &make_triplet(&source, &c)?)
    })?;
    Ok(format!("rendered {} triplets into {}", parsed.len(), out_dir.display()))
}

pub fn score(cfg: &RunConfig, pool_path: &Path, out: Option<&Path>) -> Result<String> {
    cfg.check_paths()?;
    let pool = read_pool(pool_path)?;
    let train = load_training_set(cfg)?;
    let ranked = score_candidates(cfg, &train, &pool)?;
    let prov = score_provenance(cfg, pool.len(), train.error_source);
    emit(out, &write_score_table(&prov, &ranked))?;
    Ok(format!("scored {} candidates ({} errors)", pool.len(), train.error_source))
}

fn score_provenance(cfg: &RunConfig, pool_size: usize, error_source: &str) -> Provenance {
    let views = match view_source(cfg) {
        ViewSource::Toy(_) => "toy".to_string(),
        ViewSource::Directory(d) => d.display().to_string(),
    };
    vec![
        ("seed".into(), cfg.perturb.seed.to_string()),
        ("config_digest".into(), cfg.digest.clone()),
        ("pool_size".into(), pool_size.to_string()),
        ("error_source".into(), error_source.to_string()),
        ("view_source".into(), views),
    ]
}

fn manifest_text(
    cfg: &RunConfig,
    seed: &str,
    pool_size: usize,
    manifest: &SelectionManifest,
) -> String {
    let prov = vec![
        ("seed".into(), seed.to_string()),
        ("config_digest".into(), cfg.digest.clone()),
        ("pool_size".into(), pool_size.to_string()),
        ("k".into(), manifest.k.to_string()),
    ];
    write_score_table(&prov, manifest.selected())
}

pub fn select(cfg: &RunConfig, scores: &Path, out: Option<&Path>) -> Result<String> {
    let k = cfg.require_k()?;
    let (prov, rows) = parse_score_table(&read_text(scores)?, &scores.display().to_string())?;
    if k > rows.len() {
        return Err(Error::Config(format!(
            "select.k = {k} exceeds the pool size {}",
            rows.len()
        )));
    }
    let seed = provenance_get(&prov, "seed")
        .map(str::to_string)
        .unwrap_or_else(|| cfg.perturb.seed.to_string());
    let n = rows.len();
    let manifest = select_top_k(rows, k)?;
    emit(out, &manifest_text(cfg, &seed, n, &manifest))?;
    Ok(format!("selected {k} of {n} candidates"))
}

/// Evaluates the retrieval proxy with the manifest's candidates added to the
/// training database. Test poses come from `test` or are drawn from the
/// configured seed.
pub fn eval_proxy(
    cfg: &RunConfig,
    pool_path: &Path,
    manifest: &Path,
    test: Option<&Path>,
    method: &str,
    out: Option<&Path>,
) -> Result<String> {
    cfg.check_paths()?;
    let train = super::train_poses(cfg)?;
    let pool = read_pool(pool_path)?;
    let (_, rows) = parse_score_table(&read_text(manifest)?, &manifest.display().to_string())?;
    let chosen: HashSet<u64> = rows
        .iter()
        .filter(|r| r.selected)
        .map(|r| r.candidate_id)
        .collect();
    let synthetic: Vec<CandidatePose> = pool
        .iter()
        .filter(|c| chosen.contains(&c.pose.id))
        .copied()
        .collect();
    if synthetic.len() != chosen.len() {
        return Err(Error::invalid("manifest names candidates missing from the pool"));
    }
    let test = match test {
        Some(p) => read_poses(p)?,
        None => test_poses(cfg, &train, cfg.perturb.seed)?,
    };
    let report = evaluate(cfg, &train, &synthetic, &test, method)?;
    emit(out, &write_report(&report))?;
    Ok(report.summary_line())
}

fn evaluate(
    cfg: &RunConfig,
    train: &[crate::pose_math::Pose],
    synthetic: &[CandidatePose],
    test: &[crate::pose_math::Pose],
    method: &str,
) -> Result<EvalReport> {
    let train_db = build_database(&real_views(cfg, train)?, &cfg.descriptor);
    let syn_db = build_database(&synthetic_views(cfg, synthetic)?, &cfg.descriptor);
    let test_db = build_database(&real_views(cfg, test)?, &cfg.descriptor);
    evaluate_augmentation(
        &train_db,
        &syn_db,
        &test_db,
        (method, cfg.perturb.seed, synthetic.len()),
    )
}

pub fn compare(cfg: &RunConfig, out: Option<&Path>) -> Result<String> {
    cfg.check_paths()?;
    let cmp = run_compare(cfg)?;
    emit(out, &cmp.to_csv())?;
    Ok(cmp
        .summary
        .iter()
        .map(|p| {
            format!(
                "K={}: value wins {}/{} (mean relative improvement {:.3})",
                p.k, p.wins, p.seeds, p.mean_rel_improvement
            )
        })
        .collect::<Vec<_>>()
        .join("; "))
}

/// Full run: generate, score, select, evaluate. Writes `pool.txt`,
/// `scores.csv`, `manifest.csv`, `views/`, `report.csv` and
/// `config.snapshot` into `run_dir`.
pub fn pipeline(cfg: &RunConfig, run_dir: &Path) -> Result<String> {
    let k = cfg.require_k()?;
    cfg.check_paths()?;
    create_dir(run_dir)?;
    write_text(
        &run_dir.join("config.snapshot"),
        &format!("# digest = {}\n{}", cfg.digest, cfg.snapshot),
    )?;

    let train = load_training_set(cfg).map_err(|e| e.in_stage("load-train"))?;
    let pool = generate_pool(&train.poses, &cfg.perturb).map_err(|e| e.in_stage("gen-candidates"))?;
    write_text(&run_dir.join("pool.txt"), &write_pool(&pool))?;

    let ranked = score_candidates(cfg, &train, &pool).map_err(|e| e.in_stage("score"))?;
    let prov = score_provenance(cfg, pool.len(), train.error_source);
    write_text(&run_dir.join("scores.csv"), &write_score_table(&prov, &ranked))?;

    if k > pool.len() {
        return Err(Error::Config(format!(
            "select.k = {k} exceeds the pool size {}",
            pool.len()
        ))
        .in_stage("select"));
    }
    let manifest = select_top_k(ranked, k).map_err(|e| e.in_stage("select"))?;
    write_text(
        &run_dir.join("manifest.csv"),
        &manifest_text(cfg, &cfg.perturb.seed.to_string(), pool.len(), &manifest),
    )?;

    let chosen: Vec<CandidatePose> = selected_candidates(&pool, manifest.selected());
    let views_dir = run_dir.join("views");
    create_dir(&views_dir)?;
    let source = view_source(cfg);
    chosen
        .par_iter()
        .try_for_each(|c| write_triplet(&views_dir, &make_triplet(&source, c)?))
        .map_err(|e| e.in_stage("render"))?;

    let test = test_poses(cfg, &train.poses, cfg.perturb.seed).map_err(|e| e.in_stage("evaluate"))?;
    let report = evaluate(cfg, &train.poses, &chosen, &test, METHOD_VALUE)
        .map_err(|e| e.in_stage("evaluate"))?;
    write_text(&run_dir.join("report.csv"), &write_report(&report))?;
    Ok(report.summary_line())
}

fn selected_candidates(pool: &[CandidatePose], selected: &[ValueScore]) -> Vec<CandidatePose> {
    let ids: HashSet<u64> = selected.iter().map(|s| s.candidate_id).collect();
    pool.iter().filter(|c| ids.contains(&c.pose.id)).copied().collect()
}
