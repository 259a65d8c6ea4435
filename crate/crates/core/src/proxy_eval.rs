//! Retrieval proxy for a pose regressor.
//!
//! Views are summarized by an area-averaged grayscale thumbnail and a query
//! takes the pose of its nearest database thumbnail. This supplies the
//! leave-one-out errors for the difficulty score and measures how much a set
//! of synthetic views improves localization of held-out queries.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pose_math::{rotation_distance, Pose};
use crate::render_bridge::ImageBuffer;
use crate::scoring::TrainError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DescriptorConfig {
    pub grid_w: usize,
    pub grid_h: usize,
}

impl Default for DescriptorConfig {
    fn default() -> Self {
        Self {
            grid_w: 16,
            grid_h: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor(pub Vec<f64>);

impl Descriptor {
    pub fn sq_distance(&self, other: &Descriptor) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }
}

/// Overlap of pixel `[p, p+1)` with the output cell `[lo, hi)`, in pixel units.
#[inline]
fn overlap(p: usize, lo: f64, hi: f64) -> f64 {
    let (a, b) = (p as f64, p as f64 + 1.0);
    (b.min(hi) - a.max(lo)).max(0.0)
}

/// Grayscale area-averaged downsample to the configured grid, row-major.
pub fn descriptor(img: &ImageBuffer, cfg: &DescriptorConfig) -> Descriptor {
    let (w, h) = (img.width(), img.height());
    let sx = w as f64 / cfg.grid_w as f64;
    let sy = h as f64 / cfg.grid_h as f64;
    let mut out = Vec::with_capacity(cfg.grid_w * cfg.grid_h);
    for gy in 0..cfg.grid_h {
        let (y0, y1) = (gy as f64 * sy, (gy + 1) as f64 * sy);
        for gx in 0..cfg.grid_w {
            let (x0, x1) = (gx as f64 * sx, (gx + 1) as f64 * sx);
            let mut acc = 0.0;
            for y in (y0.floor() as usize)..(y1.ceil() as usize).min(h) {
                let wy = overlap(y, y0, y1);
                for x in (x0.floor() as usize)..(x1.ceil() as usize).min(w) {
                    acc += wy * overlap(x, x0, x1) * img.luma(x, y);
                }
            }
            out.push(acc / (sx * sy));
        }
    }
    Descriptor(out)
}

/// A view in a retrieval database.
#[derive(Clone, Debug)]
pub struct DbEntry {
    pub descriptor: Descriptor,
    pub pose: Pose,
}

/// Pose of the nearest database descriptor (squared Euclidean distance),
/// ties broken by ascending pose id.
pub fn predict_pose<'a>(query: &Descriptor, database: &'a [DbEntry]) -> Result<&'a Pose> {
    nearest(query, database, |_| true)
}

fn nearest<'a>(
    query: &Descriptor,
    database: &'a [DbEntry],
    keep: impl Fn(usize) -> bool,
) -> Result<&'a Pose> {
    database
        .iter()
        .enumerate()
        .filter(|(i, _)| keep(*i))
        .map(|(_, e)| (query.sq_distance(&e.descriptor), e))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.pose.id.cmp(&b.1.pose.id)))
        .map(|(_, e)| &e.pose)
        .ok_or_else(|| Error::invalid("retrieval database is empty"))
}

/// Translation (meters) and rotation (radians) error of a prediction.
pub fn pose_error(predicted: &Pose, truth: &Pose) -> (f64, f64) {
    (
        (predicted.t - truth.t).norm(),
        rotation_distance(predicted.rotation(), truth.rotation()),
    )
}

pub fn build_database(views: &[(Pose, ImageBuffer)], cfg: &DescriptorConfig) -> Vec<DbEntry> {
    views
        .par_iter()
        .map(|(pose, img)| DbEntry {
            descriptor: descriptor(img, cfg),
            pose: *pose,
        })
        .collect()
}

/// Each training view localized against all the others.
pub fn leave_one_out_errors(
    train_views: &[(Pose, ImageBuffer)],
    cfg: &DescriptorConfig,
) -> Result<Vec<TrainError>> {
    if train_views.len() < 2 {
        return Err(Error::invalid(format!(
            "leave-one-out needs at least 2 views, got {}",
            train_views.len()
        )));
    }
    let db = build_database(train_views, cfg);
    (0..db.len())
        .into_par_iter()
        .map(|i| {
            let predicted = nearest(&db[i].descriptor, &db, |j| j != i)?;
            let (e_t, e_r) = pose_error(predicted, &db[i].pose);
            Ok(TrainError {
                pose_id: db[i].pose.id,
                e_t,
                e_r,
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QueryError {
    pub query_id: u64,
    /// Meters.
    pub e_t: f64,
    /// Degrees.
    pub e_r_deg: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub method: String,
    pub seed: u64,
    pub k: usize,
    /// Meters.
    pub median_t_error: f64,
    /// Degrees.
    pub median_r_error: f64,
    pub per_query: Vec<QueryError>,
}

impl EvalReport {
    pub fn from_errors(method: &str, seed: u64, k: usize, per_query: Vec<QueryError>) -> Self {
        let t: Vec<f64> = per_query.iter().map(|q| q.e_t).collect();
        let r: Vec<f64> = per_query.iter().map(|q| q.e_r_deg).collect();
        Self {
            method: method.to_string(),
            seed,
            k,
            median_t_error: median(&t),
            median_r_error: median(&r),
            per_query,
        }
    }

    /// `method,seed,K,median_t_cm,median_r_deg` row.
    pub fn summary_line(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.method,
            self.seed,
            self.k,
            self.median_t_error * 100.0,
            self.median_r_error
        )
    }
}

/// Median; mean of the middle pair for even counts, NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => f64::NAN,
        _ if n % 2 == 1 => v[n / 2],
        _ => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Localizes every test view against `train ∪ synthetic`.
pub fn evaluate_augmentation(
    train: &[DbEntry],
    synthetic: &[DbEntry],
    test: &[DbEntry],
    label: (&str, u64, usize),
) -> Result<EvalReport> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::invalid("evaluation needs non-empty train and test sets"));
    }
    let db: Vec<DbEntry> = train.iter().chain(synthetic).cloned().collect();
    let per_query = test
        .par_iter()
        .map(|q| {
            let predicted = predict_pose(&q.descriptor, &db)?;
            let (e_t, e_r) = pose_error(predicted, &q.pose);
            Ok(QueryError {
                query_id: q.pose.id,
                e_t,
                e_r_deg: e_r.to_degrees(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (method, seed, k) = label;
    Ok(EvalReport::from_errors(method, seed, k, per_query))
}
