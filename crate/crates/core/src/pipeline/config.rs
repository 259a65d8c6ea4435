//! Flat `section.key = value` configuration with `#` comments.
//!
//! Every key has a default except the ones a stage explicitly requires.
//! Unknown keys are rejected so typos do not silently fall back to defaults.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::candidate_gen::PerturbConfig;
use crate::error::{Error, Result};
use crate::formats::read_text;
use crate::image_metrics::{ObservabilityConfig, SsimConfig};
use crate::pose_math::MetricConfig;
use crate::proxy_eval::DescriptorConfig;
use crate::render_bridge::{Face, Patch, ToyScene, WallTexture};
use crate::scoring::{Bandwidth, ScoringConfig};

const KEYS: &[&str] = &[
    "perturb.profile",
    "perturb.delta_t",
    "perturb.delta_r",
    "perturb.m_per_pose",
    "perturb.seed",
    "metric.lambda",
    "scoring.alpha",
    "scoring.beta",
    "scoring.gamma",
    "scoring.k_neighbors",
    "scoring.bandwidth",
    "obs.tau_alpha",
    "obs.tau_b",
    "obs.tau_h",
    "obs.steepness",
    "obs.epsilon",
    "obs.entropy_window",
    "obs.entropy_bins",
    "obs.ssim_window",
    "obs.ssim_sigma",
    "obs.ssim_c1",
    "obs.ssim_c2",
    "scene.half_extents",
    "scene.open_face",
    "scene.width",
    "scene.height",
    "scene.focal",
    "scene.cx",
    "scene.cy",
    "scene.textureless",
    "scene.artifacts",
    "select.k",
    "train.poses",
    "train.trajectory",
    "train.views",
    "errors.path",
    "views.dir",
    "eval.test_per_pose",
    "eval.descriptor_w",
    "eval.descriptor_h",
    "compare.seeds",
    "compare.budgets",
    "run.workers",
];

fn is_known(key: &str) -> bool {
    if KEYS.contains(&key) {
        return true;
    }
    // scene.wall.<face>.<field>
    let parts: Vec<&str> = key.split('.').collect();
    parts.len() == 4
        && parts[0] == "scene"
        && parts[1] == "wall"
        && parts[2].parse::<Face>().is_ok()
        && matches!(parts[3], "checker_freq" | "albedo_lo" | "albedo_hi" | "ripple_amp" | "ripple_freq")
}

/// Raw key/value entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn parse(text: &str, path: &str) -> Result<Self> {
        let mut cfg = KvConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse {
                path: path.to_string(),
                line: i + 1,
                msg,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, found `{line}`")))?;
            let (k, v) = (k.trim(), v.trim());
            if !is_known(k) {
                return Err(err(format!("unknown config key `{k}`")));
            }
            if cfg.entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(err(format!("duplicate config key `{k}`")));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_text(path)?, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        if !is_known(key) {
            return Err(Error::Config(format!("unknown config key `{key}`")));
        }
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{pair}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse()
                    .map_err(|_| Error::Config(format!("invalid value `{v}` for `{key}`")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| Error::MissingKey(key.to_string()))
    }

    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| {
                v.split_whitespace()
                    .map(|x| {
                        x.parse()
                            .map_err(|_| Error::Config(format!("invalid item `{x}` in `{key}`")))
                    })
                    .collect()
            })
            .transpose()
    }

    /// Canonical text: sorted keys, one `key = value` per line.
    pub fn snapshot(&self) -> String {
        self.canonical(|_| true)
    }

    /// SHA-256 (hex) of the canonical text without the execution-only
    /// `run.*` keys, so the digest identifies results, not how they were run.
    pub fn digest(&self) -> String {
        let text = self.canonical(|k| !k.starts_with(EXECUTION_PREFIX));
        Sha256::digest(text.as_bytes())
            .iter()
            .fold(String::with_capacity(64), |mut s, b| {
                let _ = write!(s, "{b:02x}");
                s
            })
    }

    fn canonical(&self, keep: impl Fn(&str) -> bool) -> String {
        let mut s = String::new();
        for (k, v) in self.entries.iter().filter(|(k, _)| keep(k)) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

/// Keys under this prefix change how a run executes but never its outputs.
const EXECUTION_PREFIX: &str = "run.";

/// Synthetic-view budget: absolute, or a fraction of the training-set size
/// (written with an `N` suffix, e.g. `0.5N`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Budget {
    Absolute(usize),
    FractionOfN(f64),
}

impl Budget {
    pub fn resolve(&self, n_train: usize) -> usize {
        match *self {
            Budget::Absolute(k) => k,
            Budget::FractionOfN(f) => (f * n_train as f64).round() as usize,
        }
    }
}

impl FromStr for Budget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid budget `{s}`"));
        if let Some(f) = s.strip_suffix('N') {
            let f = if f.is_empty() { 1.0 } else { f.parse().map_err(|_| bad())? };
            if !(f >= 0.0 && f64::is_finite(f)) {
                return Err(bad());
            }
            Ok(Budget::FractionOfN(f))
        } else {
            s.parse().map(Budget::Absolute).map_err(|_| bad())
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainSource {
    File(PathBuf),
    /// The scene's built-in trajectory with this many poses.
    Trajectory(usize),
}

/// Fully resolved configuration of a run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub perturb: PerturbConfig,
    pub scoring: ScoringConfig,
    pub scene: ToyScene,
    pub descriptor: DescriptorConfig,
    pub k: Option<usize>,
    pub train: Option<TrainSource>,
    pub train_views: Option<PathBuf>,
    pub errors_path: Option<PathBuf>,
    pub views_dir: Option<PathBuf>,
    pub test_per_pose: usize,
    pub seeds: Vec<u64>,
    pub budgets: Vec<Budget>,
    pub workers: usize,
    pub snapshot: String,
    pub digest: String,
}

fn parse_patches(kv: &KvConfig, key: &str) -> Result<Option<Vec<Patch>>> {
    let Some(raw) = kv.raw(key) else {
        return Ok(None);
    };
    let mut out = Vec::new();
    for item in raw.split(';').map(str::trim).filter(|s| !s.is_empty()) {
        let f: Vec<&str> = item.split_whitespace().collect();
        if f.len() != 6 {
            return Err(Error::Config(format!(
                "`{key}`: patch `{item}` must be `face u0 u1 v0 v1 level`"
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Config(format!("`{key}`: invalid number `{s}`")))
        };
        out.push(Patch {
            face: f[0].parse()?,
            u: [num(f[1])?, num(f[2])?],
            v: [num(f[3])?, num(f[4])?],
            level: num(f[5])?,
        });
    }
    Ok(Some(out))
}

fn scene_from(kv: &KvConfig) -> Result<ToyScene> {
    let mut s = ToyScene::default();
    if let Some(h) = kv.get_list::<f64>("scene.half_extents")? {
        s.half_extents = h
            .try_into()
            .map_err(|_| Error::Config("scene.half_extents needs 3 values".into()))?;
    }
    if let Some(f) = kv.raw("scene.open_face") {
        s.open_face = if f == "none" { None } else { Some(f.parse()?) };
    }
    s.width = kv.get_or("scene.width", s.width)?;
    s.height = kv.get_or("scene.height", s.height)?;
    s.focal = kv.get_or("scene.focal", s.focal)?;
    s.cx = kv.get_or("scene.cx", s.width as f64 / 2.0)?;
    s.cy = kv.get_or("scene.cy", s.height as f64 / 2.0)?;
    for face in Face::ALL {
        let w: &mut WallTexture = &mut s.walls[face.index()];
        let key = |field: &str| format!("scene.wall.{face}.{field}");
        w.checker_freq = kv.get_or(&key("checker_freq"), w.checker_freq)?;
        w.albedo_lo = kv.get_or(&key("albedo_lo"), w.albedo_lo)?;
        w.albedo_hi = kv.get_or(&key("albedo_hi"), w.albedo_hi)?;
        w.ripple_amp = kv.get_or(&key("ripple_amp"), w.ripple_amp)?;
        w.ripple_freq = kv.get_or(&key("ripple_freq"), w.ripple_freq)?;
    }
    if let Some(p) = parse_patches(kv, "scene.textureless")? {
        s.textureless = p;
    }
    if let Some(p) = parse_patches(kv, "scene.artifacts")? {
        s.artifacts = p;
    }
    s.validate()?;
    Ok(s)
}

impl RunConfig {
    pub fn from_kv(kv: &KvConfig) -> Result<Self> {
        let mut perturb = match kv.raw("perturb.profile") {
            None | Some("indoor") => PerturbConfig::indoor(),
            Some("outdoor") => PerturbConfig::outdoor(),
            Some(other) => {
                return Err(Error::Config(format!(
                    "perturb.profile must be indoor or outdoor, got `{other}`"
                )))
            }
        };
        perturb.delta_t = kv.get_or("perturb.delta_t", perturb.delta_t)?;
        perturb.delta_r = kv.get_or("perturb.delta_r", perturb.delta_r)?;
        perturb.m_per_pose = kv.get_or("perturb.m_per_pose", perturb.m_per_pose)?;
        perturb.seed = kv.get_or("perturb.seed", perturb.seed)?;
        perturb.validate().map_err(|e| Error::Config(e.to_string()))?;

        let d = ScoringConfig::default();
        let od = ObservabilityConfig::default();
        let sd = SsimConfig::default();
        let bandwidth = match kv.raw("scoring.bandwidth") {
            None | Some("median") => Bandwidth::AdaptiveMedian,
            Some(v) => Bandwidth::Fixed(
                v.parse()
                    .map_err(|_| Error::Config(format!("invalid scoring.bandwidth `{v}`")))?,
            ),
        };
        let scoring = ScoringConfig {
            alpha: kv.get_or("scoring.alpha", d.alpha)?,
            beta: kv.get_or("scoring.beta", d.beta)?,
            gamma: kv.get_or("scoring.gamma", d.gamma)?,
            k_neighbors: kv.get_or("scoring.k_neighbors", d.k_neighbors)?,
            bandwidth,
            metric: MetricConfig {
                lambda: kv.get_or("metric.lambda", d.metric.lambda)?,
            },
            observability: ObservabilityConfig {
                tau_alpha: kv.get_or("obs.tau_alpha", od.tau_alpha)?,
                tau_b: kv.get_or("obs.tau_b", od.tau_b)?,
                tau_h: kv.get_or("obs.tau_h", od.tau_h)?,
                steepness: kv.get_or("obs.steepness", od.steepness)?,
                epsilon: kv.get_or("obs.epsilon", od.epsilon)?,
                entropy_window: kv.get_or("obs.entropy_window", od.entropy_window)?,
                entropy_bins: kv.get_or("obs.entropy_bins", od.entropy_bins)?,
                ssim: SsimConfig {
                    window: kv.get_or("obs.ssim_window", sd.window)?,
                    sigma: kv.get_or("obs.ssim_sigma", sd.sigma)?,
                    c1: kv.get_or("obs.ssim_c1", sd.c1)?,
                    c2: kv.get_or("obs.ssim_c2", sd.c2)?,
                },
            },
        };
        scoring.validate().map_err(|e| match e {
            Error::InvalidArgument(m) => Error::Config(m),
            e => e,
        })?;

        let train = match (kv.raw("train.poses"), kv.get::<usize>("train.trajectory")?) {
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "set only one of train.poses and train.trajectory".into(),
                ))
            }
            (Some(p), None) => Some(TrainSource::File(PathBuf::from(p))),
            (None, Some(n)) => Some(TrainSource::Trajectory(n)),
            (None, None) => None,
        };

        let descriptor = DescriptorConfig {
            grid_w: kv.get_or("eval.descriptor_w", 16)?,
            grid_h: kv.get_or("eval.descriptor_h", 16)?,
        };
        if descriptor.grid_w == 0 || descriptor.grid_h == 0 {
            return Err(Error::Config("descriptor grid must be non-empty".into()));
        }
        let test_per_pose = kv.get_or("eval.test_per_pose", 2)?;
        if test_per_pose == 0 {
            return Err(Error::Config("eval.test_per_pose must be >= 1".into()));
        }
        let workers = kv.get_or("run.workers", 1)?;
        if workers == 0 {
            return Err(Error::Config("run.workers must be >= 1".into()));
        }

        Ok(Self {
            perturb,
            scoring,
            scene: scene_from(kv)?,
            descriptor,
            k: kv.get("select.k")?,
            train,
            train_views: kv.raw("train.views").map(PathBuf::from),
            errors_path: kv.raw("errors.path").map(PathBuf::from),
            views_dir: kv.raw("views.dir").map(PathBuf::from),
            test_per_pose,
            seeds: kv
                .get_list("compare.seeds")?
                .unwrap_or_else(|| (0..10).collect()),
            budgets: kv.get_list("compare.budgets")?.unwrap_or_else(|| {
                vec![
                    Budget::FractionOfN(0.2),
                    Budget::FractionOfN(0.5),
                    Budget::FractionOfN(1.0),
                ]
            }),
            workers,
            snapshot: kv.snapshot(),
            digest: kv.digest(),
        })
    }

    pub fn require_k(&self) -> Result<usize> {
        self.k.ok_or_else(|| Error::MissingKey("select.k".into()))
    }

    pub fn require_train(&self) -> Result<&TrainSource> {
        self.train
            .as_ref()
            .ok_or_else(|| Error::MissingKey("train.poses (or train.trajectory)".into()))
    }

    /// Checks that every path the config names exists.
    pub fn check_paths(&self) -> Result<()> {
        let mut paths: Vec<&Path> = Vec::new();
        if let Some(TrainSource::File(p)) = &self.train {
            paths.push(p);
        }
        paths.extend(self.train_views.as_deref());
        paths.extend(self.errors_path.as_deref());
        paths.extend(self.views_dir.as_deref());
        match paths.into_iter().find(|p| !p.exists()) {
            Some(p) => Err(Error::Config(format!("path {} does not exist", p.display()))),
            None => Ok(()),
        }
    }
}
