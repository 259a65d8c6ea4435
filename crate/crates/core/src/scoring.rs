//! Candidate value: localization difficulty, coverage novelty and rendering
//! observability, each quantile-normalized over the pool and fused as
//!
//! ```text
//! V = diff^alpha * (1 + nov)^beta * obs^gamma
//! ```
//!
//! Selecting the K largest values maximizes the (additive) total value of a
//! K-subset, so ranking is all the selection step needs.

use std::cmp::Ordering;
use std::collections::HashMap;

use rayon::prelude::*;

use crate::candidate_gen::CandidatePose;
use crate::error::{Error, Result};
use crate::image_metrics::{
    normalized_gradient, stability, symmetric_response, visibility_mask, ObservabilityConfig,
};
use crate::pose_math::{DatasetStats, HybridMetric, MetricConfig, Pose};
use crate::render_bridge::{ViewSource, ViewTriplet};

/// Smallest kernel bandwidth used by the adaptive policy.
pub const MIN_BANDWIDTH: f64 = 1e-6;

/// Zero-shot localization error of one training pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainError {
    pub pose_id: u64,
    /// Meters.
    pub e_t: f64,
    /// Radians.
    pub e_r: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Bandwidth {
    /// Median of the k neighbour distances, floored at [`MIN_BANDWIDTH`].
    AdaptiveMedian,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoringConfig {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub k_neighbors: usize,
    pub bandwidth: Bandwidth,
    pub metric: MetricConfig,
    pub observability: ObservabilityConfig,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            alpha: 1.5,
            beta: 1.0,
            gamma: 2.0,
            k_neighbors: 32,
            bandwidth: Bandwidth::AdaptiveMedian,
            metric: MetricConfig::default(),
            observability: ObservabilityConfig::default(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0, got {v}")));
            }
        }
        if self.k_neighbors == 0 {
            return Err(Error::Config("k_neighbors must be >= 1".into()));
        }
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::Config(format!("fixed bandwidth must be > 0, got {h}")));
            }
        }
        self.metric.validate()?;
        self.observability.validate()
    }
}

/// Un-normalized scores of one candidate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RawScores {
    pub f_diff: f64,
    pub f_nov: f64,
    pub f_gs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ValueScore {
    pub candidate_id: u64,
    pub parent_id: u64,
    pub f_diff: f64,
    pub f_nov: f64,
    pub f_gs: f64,
    pub f_diff_n: f64,
    pub f_nov_n: f64,
    pub f_gs_n: f64,
    pub value: f64,
    /// 1-based position after ranking; 0 until ranked.
    pub rank: usize,
    pub selected: bool,
}

/// A ranked pool with the first `k` entries selected.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionManifest {
    pub ranked: Vec<ValueScore>,
    pub k: usize,
}

impl SelectionManifest {
    pub fn selected(&self) -> &[ValueScore] {
        &self.ranked[..self.k]
    }
}

/// Gaussian-kernel weighted mean `sum(w v) / sum(w)`, `w = exp(-d^2 / 2h^2)`.
pub fn kernel_weighted_mean(distances: &[f64], values: &[f64], bandwidth: f64) -> f64 {
    let two_h2 = 2.0 * bandwidth * bandwidth;
    let (num, den) = distances
        .iter()
        .zip(values)
        .fold((0.0, 0.0), |(num, den), (d, v)| {
            let w = (-d * d / two_h2).exp();
            (num + w * v, den + w)
        });
    if den > 0.0 {
        num / den
    } else {
        // every weight underflowed: fall back to the nearest neighbour
        distances
            .iter()
            .zip(values)
            .min_by(|a, b| a.0.total_cmp(b.0))
            .map_or(0.0, |(_, v)| *v)
    }
}

/// Median of the distances (mean of the middle pair for even counts),
/// floored at [`MIN_BANDWIDTH`].
pub fn median_bandwidth(distances: &[f64]) -> f64 {
    let mut d = distances.to_vec();
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let m = if n == 0 {
        0.0
    } else if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    m.max(MIN_BANDWIDTH)
}

/// Training set with per-pose scalarized errors, prepared once per pool.
#[derive(Clone, Debug)]
pub struct TrainIndex {
    poses: Vec<Pose>,
    /// `e_t / sigma_t + lambda e_r`, aligned with `poses`.
    errors: Option<Vec<f64>>,
    metric: HybridMetric,
    k: usize,
    bandwidth: Bandwidth,
}

impl TrainIndex {
    /// Index for novelty only (no error data).
    pub fn new(train: &[Pose], stats: &DatasetStats, cfg: &ScoringConfig) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::invalid("training set is empty"));
        }
        let mut poses = train.to_vec();
        poses.sort_by_key(|p| p.id);
        if poses.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::invalid("duplicate training pose id"));
        }
        Ok(Self {
            poses,
            errors: None,
            metric: HybridMetric::new(stats, &cfg.metric)?,
            k: cfg.k_neighbors,
            bandwidth: cfg.bandwidth,
        })
    }

    pub fn with_errors(
        train: &[Pose],
        errors: &[TrainError],
        stats: &DatasetStats,
        cfg: &ScoringConfig,
    ) -> Result<Self> {
        let mut index = Self::new(train, stats, cfg)?;
        if index.k > index.poses.len() {
            return Err(Error::invalid(format!(
                "k_neighbors = {} exceeds the {} training poses",
                index.k,
                index.poses.len()
            )));
        }
        let mut by_id = HashMap::with_capacity(errors.len());
        for e in errors {
            if !(e.e_t.is_finite() && e.e_t >= 0.0 && e.e_r.is_finite() && e.e_r >= 0.0) {
                return Err(Error::invalid(format!("invalid error entry for pose {}", e.pose_id)));
            }
            if by_id.insert(e.pose_id, *e).is_some() {
                return Err(Error::invalid(format!("duplicate error entry for pose {}", e.pose_id)));
            }
        }
        if let Some(stray) = errors
            .iter()
            .find(|e| index.poses.binary_search_by_key(&e.pose_id, |p| p.id).is_err())
        {
            return Err(Error::invalid(format!(
                "error entry for unknown training pose {}",
                stray.pose_id
            )));
        }
        let scalar = index
            .poses
            .iter()
            .map(|p| {
                by_id
                    .get(&p.id)
                    .map(|e| index.metric.scalarize(e.e_t, e.e_r))
                    .ok_or_else(|| Error::invalid(format!("missing error entry for training pose {}", p.id)))
            })
            .collect::<Result<Vec<_>>>()?;
        index.errors = Some(scalar);
        Ok(index)
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn metric(&self) -> &HybridMetric {
        &self.metric
    }

    /// Minimum hybrid distance to any training pose.
    pub fn novelty(&self, candidate: &Pose) -> f64 {
        self.poses
            .iter()
            .map(|p| self.metric.distance(candidate, p))
            .fold(f64::INFINITY, f64::min)
    }

    /// Indices of the `k` nearest training poses, nearest first; ties by id.
    pub fn nearest(&self, candidate: &Pose, k: usize) -> Vec<(usize, f64)> {
        let mut d: Vec<(usize, f64)> = self
            .poses
            .iter()
            .enumerate()
            .map(|(i, p)| (i, self.metric.distance(candidate, p)))
            .collect();
        // poses are sorted by id, so index order is id order
        let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
        let k = k.min(d.len());
        if k < d.len() {
            d.select_nth_unstable_by(k, cmp);
            d.truncate(k);
        }
        d.sort_by(cmp);
        d
    }

    /// Kernel-weighted mean of the scalarized errors of the k nearest training poses.
    pub fn difficulty(&self, candidate: &Pose) -> Result<f64> {
        let errors = self
            .errors
            .as_ref()
            .ok_or_else(|| Error::invalid("difficulty needs training errors"))?;
        let nn = self.nearest(candidate, self.k);
        let dists: Vec<f64> = nn.iter().map(|(_, d)| *d).collect();
        let vals: Vec<f64> = nn.iter().map(|(i, _)| errors[*i]).collect();
        let h = match self.bandwidth {
            Bandwidth::AdaptiveMedian => median_bandwidth(&dists),
            Bandwidth::Fixed(h) => h,
        };
        Ok(kernel_weighted_mean(&dists, &vals, h))
    }
}

pub fn difficulty(
    candidate: &Pose,
    train: &[Pose],
    errors: &[TrainError],
    stats: &DatasetStats,
    cfg: &ScoringConfig,
) -> Result<f64> {
    TrainIndex::with_errors(train, errors, stats, cfg)?.difficulty(candidate)
}

pub fn novelty(
    candidate: &Pose,
    train: &[Pose],
    stats: &DatasetStats,
    cfg: &ScoringConfig,
) -> Result<f64> {
    Ok(TrainIndex::new(train, stats, cfg)?.novelty(candidate))
}

/// Stability times the visibility-weighted mean of gradient times response.
pub fn observability(triplet: &ViewTriplet, cfg: &ObservabilityConfig) -> Result<f64> {
    let s = stability(triplet, cfg)?;
    let g = normalized_gradient(&triplet.central, cfg);
    let r = symmetric_response(&triplet.plus, &triplet.minus, cfg)?;
    let w = visibility_mask(&triplet.opacity, &triplet.central, cfg)?;
    let sum: f64 = w
        .data
        .iter()
        .zip(&g.data)
        .zip(&r.data)
        .map(|((w, g), r)| w * g * r)
        .sum();
    Ok(s * sum / w.data.len() as f64)
}

/// Maps values to `(average rank - 1) / (n - 1)`; a single value maps to 0.5.
pub fn quantile_normalize(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::invalid("quantile_normalize needs at least one value"));
    }
    if let Some(v) = raw.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite score {v}")));
    }
    let n = raw.len();
    if n == 1 {
        return Ok(vec![0.5]);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| raw[*a].total_cmp(&raw[*b]));
    let mut out = vec![0.0; n];
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && raw[order[end]] == raw[order[start]] {
            end += 1;
        }
        // 1-based ranks start+1..=end share their average
        let avg_rank = (start + 1 + end) as f64 / 2.0;
        let q = (avg_rank - 1.0) / (n - 1) as f64;
        for &i in &order[start..end] {
            out[i] = q;
        }
        start = end;
    }
    Ok(out)
}

pub fn fuse_value(f_diff_n: f64, f_nov_n: f64, f_gs_n: f64, cfg: &ScoringConfig) -> f64 {
    f_diff_n.powf(cfg.alpha) * (1.0 + f_nov_n).powf(cfg.beta) * f_gs_n.powf(cfg.gamma)
}

/// Raw scores for every candidate. Runs on the current rayon pool; the
/// output order is the input order regardless of thread count.
pub fn score_pool(
    candidates: &[CandidatePose],
    index: &TrainIndex,
    source: &ViewSource,
    cfg: &ScoringConfig,
) -> Result<Vec<RawScores>> {
    candidates
        .par_iter()
        .map(|c| {
            let triplet = source.triplet(c)?;
            Ok(RawScores {
                f_diff: index.difficulty(&c.pose)?,
                f_nov: index.novelty(&c.pose),
                f_gs: observability(&triplet, &cfg.observability)?,
            })
        })
        .collect()
}

/// Normalizes each score dimension over the pool and fuses the value.
/// Returned scores are unranked, in candidate order.
pub fn build_scores(
    candidates: &[CandidatePose],
    raw: &[RawScores],
    cfg: &ScoringConfig,
) -> Result<Vec<ValueScore>> {
    if candidates.len() != raw.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} candidates but {} score rows",
            candidates.len(),
            raw.len()
        )));
    }
    let column = |f: fn(&RawScores) -> f64| raw.iter().map(f).collect::<Vec<_>>();
    let diff_n = quantile_normalize(&column(|r| r.f_diff))?;
    let nov_n = quantile_normalize(&column(|r| r.f_nov))?;
    let gs_n = quantile_normalize(&column(|r| r.f_gs))?;
    Ok(candidates
        .iter()
        .zip(raw)
        .enumerate()
        .map(|(i, (c, r))| ValueScore {
            candidate_id: c.pose.id,
            parent_id: c.parent_id,
            f_diff: r.f_diff,
            f_nov: r.f_nov,
            f_gs: r.f_gs,
            f_diff_n: diff_n[i],
            f_nov_n: nov_n[i],
            f_gs_n: gs_n[i],
            value: fuse_value(diff_n[i], nov_n[i], gs_n[i], cfg),
            rank: 0,
            selected: false,
        })
        .collect())
}

fn rank_order(a: &ValueScore, b: &ValueScore) -> Ordering {
    b.value
        .total_cmp(&a.value)
        .then(a.candidate_id.cmp(&b.candidate_id))
}

/// Sorts by value (descending, ties by ascending id), assigns 1-based ranks
/// and flags the first `k` as selected.
pub fn select_top_k(mut scores: Vec<ValueScore>, k: usize) -> Result<SelectionManifest> {
    if k > scores.len() {
        return Err(Error::invalid(format!(
            "K = {k} exceeds the pool size {}",
            scores.len()
        )));
    }
    scores.sort_by(rank_order);
    for (i, s) in scores.iter_mut().enumerate() {
        s.rank = i + 1;
        s.selected = i < k;
    }
    Ok(SelectionManifest { ranked: scores, k })
}
