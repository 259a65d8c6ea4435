//! SE(3) poses and the hybrid translation/rotation distance used throughout
//! candidate scoring.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// A camera-to-world pose: `t` is the camera centre in world coordinates and
/// `q` rotates camera-frame vectors into the world frame.
///
/// The quaternion is normalized on construction and stored with `w >= 0`, so
/// `q` and `-q` produce the same `Pose`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub id: u64,
    pub t: Vector3<f64>,
    q: UnitQuaternion<f64>,
}

impl Pose {
    /// Builds a pose from a translation and a `(w, x, y, z)` quaternion.
    pub fn new(id: u64, t: [f64; 3], wxyz: [f64; 4]) -> Result<Self> {
        if t.iter().chain(wxyz.iter()).any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("pose {id}: non-finite component")));
        }
        let raw = Quaternion::new(wxyz[0], wxyz[1], wxyz[2], wxyz[3]);
        let norm_sq = raw.norm_squared();
        if norm_sq < 1e-24 {
            return Err(Error::invalid(format!("pose {id}: zero-norm quaternion")));
        }
        // already unit to machine precision: keep the bits so text round-trips are exact
        let q = if (norm_sq - 1.0).abs() <= 4.0 * f64::EPSILON {
            raw
        } else {
            raw / norm_sq.sqrt()
        };
        Ok(Self::from_parts(
            id,
            Vector3::from(t),
            UnitQuaternion::new_unchecked(q),
        ))
    }

    pub fn from_parts(id: u64, t: Vector3<f64>, q: UnitQuaternion<f64>) -> Self {
        Self {
            id,
            t,
            q: canonical(q),
        }
    }

    pub fn identity(id: u64) -> Self {
        Self::from_parts(id, Vector3::zeros(), UnitQuaternion::identity())
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.q
    }

    /// Quaternion coefficients in `(w, x, y, z)` order.
    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.q.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn with_id(mut self, id: u64) -> Self {
        self.id = id;
        self
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    let c = q.quaternion().coords; // (i, j, k, w)
    let lead = [c[3], c[0], c[1], c[2]]
        .into_iter()
        .find(|v| *v != 0.0)
        .unwrap_or(1.0);
    if lead < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

/// Geodesic angle between two rotations, in `[0, pi]`.
///
/// Computed from the relative quaternion `q_i^-1 q_j` as `2 atan2(|v|, |w|)`,
/// which equals `arccos((tr(R_i^T R_j) - 1) / 2)` but stays accurate near 0
/// and is exactly symmetric and invariant to quaternion sign.
pub fn rotation_distance(qi: &UnitQuaternion<f64>, qj: &UnitQuaternion<f64>) -> f64 {
    let a = qi.quaternion();
    let b = qj.quaternion();
    let (wa, va) = (a.w, Vector3::new(a.i, a.j, a.k));
    let (wb, vb) = (b.w, Vector3::new(b.i, b.j, b.k));
    let w = wa * wb + va.dot(&vb);
    let cross = va.cross(&vb);
    let v = Vector3::new(
        (wa * vb.x - wb * va.x) - cross.x,
        (wa * vb.y - wb * va.y) - cross.y,
        (wa * vb.z - wb * va.z) - cross.z,
    );
    2.0 * v.norm().atan2(w.abs())
}

/// Scene-scale statistics of a training set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatasetStats {
    /// Translation standard deviation, meters.
    pub sigma_t: f64,
    pub n_train: usize,
}

impl DatasetStats {
    pub fn new(sigma_t: f64, n_train: usize) -> Result<Self> {
        if !(sigma_t.is_finite() && sigma_t > 0.0) {
            return Err(Error::invalid(format!("sigma_t must be > 0, got {sigma_t}")));
        }
        Ok(Self { sigma_t, n_train })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricConfig {
    /// Weight of the rotation term, per radian.
    pub lambda: f64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self { lambda: 1.0 }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::invalid(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Translation standard deviation of a training set: the root-mean-square
/// distance of the camera centres from their centroid.
pub fn compute_stats(train: &[Pose]) -> Result<DatasetStats> {
    if train.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 training poses, got {}",
            train.len()
        )));
    }
    let n = train.len() as f64;
    let centroid = train.iter().fold(Vector3::zeros(), |acc, p| acc + p.t) / n;
    let mean_sq = train
        .iter()
        .map(|p| (p.t - centroid).norm_squared())
        .sum::<f64>()
        / n;
    let sigma_t = mean_sq.sqrt();
    if sigma_t <= 0.0 {
        return Err(Error::invalid(
            "all training translations are identical; sigma_t would be 0",
        ));
    }
    Ok(DatasetStats {
        sigma_t,
        n_train: train.len(),
    })
}

/// Pre-validated hybrid distance `|t_i - t_j| / sigma_t + lambda * angle(R_i, R_j)`.
#[derive(Clone, Copy, Debug)]
pub struct HybridMetric {
    inv_sigma_t: f64,
    lambda: f64,
}

impl HybridMetric {
    pub fn new(stats: &DatasetStats, cfg: &MetricConfig) -> Result<Self> {
        DatasetStats::new(stats.sigma_t, stats.n_train)?;
        cfg.validate()?;
        Ok(Self {
            inv_sigma_t: 1.0 / stats.sigma_t,
            lambda: cfg.lambda,
        })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma_t(&self) -> f64 {
        1.0 / self.inv_sigma_t
    }

    #[inline]
    pub fn distance(&self, a: &Pose, b: &Pose) -> f64 {
        (a.t - b.t).norm() * self.inv_sigma_t + self.lambda * rotation_distance(&a.q, &b.q)
    }

    /// Combines a translation error (meters) and rotation error (radians)
    /// with the same unit handling as [`HybridMetric::distance`].
    #[inline]
    pub fn scalarize(&self, e_t: f64, e_r: f64) -> f64 {
        e_t * self.inv_sigma_t + self.lambda * e_r
    }
}

pub fn hybrid_distance(
    a: &Pose,
    b: &Pose,
    stats: &DatasetStats,
    cfg: &MetricConfig,
) -> Result<f64> {
    Ok(HybridMetric::new(stats, cfg)?.distance(a, b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn axis_angle(axis: [f64; 3], angle: f64) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&nalgebra::Unit::new_normalize(Vector3::from(axis)), angle)
    }

    #[test]
    fn identity_distance_is_zero() {
        let q = UnitQuaternion::identity();
        assert_eq!(rotation_distance(&q, &q), 0.0);
    }

    #[test]
    fn half_turn_is_pi() {
        let q = axis_angle([0.0, 0.0, 1.0], PI);
        let d = rotation_distance(&UnitQuaternion::identity(), &q);
        assert!((d - PI).abs() < 1e-12, "{d}");
    }

    #[test]
    fn ten_degrees_about_x() {
        let q = axis_angle([1.0, 0.0, 0.0], 10f64.to_radians());
        let d = rotation_distance(&UnitQuaternion::identity(), &q);
        assert!((d - 0.174_532_925_199_432_95).abs() < 1e-12, "{d}");
    }

    #[test]
    fn sign_flip_is_exact() {
        let q = axis_angle([0.3, -0.2, 0.9], 1.234);
        let r = axis_angle([-0.5, 0.1, 0.2], 0.4);
        let flipped = UnitQuaternion::new_unchecked(-r.into_inner());
        assert_eq!(rotation_distance(&q, &r), rotation_distance(&q, &flipped));
    }

    #[test]
    fn construction_normalizes_and_canonicalizes() {
        let p = Pose::new(3, [0.0; 3], [-2.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(p.wxyz(), [1.0, 0.0, 0.0, 0.0]);
        let p = Pose::new(3, [0.0; 3], [-1.0, 2.0, 0.5, -1.0]).unwrap();
        let n: f64 = p.wxyz().iter().map(|v| v * v).sum();
        assert!((n - 1.0).abs() < 1e-12);
        assert!(p.wxyz()[0] > 0.0);
        assert!(Pose::new(0, [0.0; 3], [0.0; 4]).is_err());
        assert!(Pose::new(0, [f64::NAN, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn hybrid_examples() {
        let stats = DatasetStats::new(0.5, 2).unwrap();
        let cfg = MetricConfig::default();
        let a = Pose::identity(0);
        assert_eq!(hybrid_distance(&a, &a, &stats, &cfg).unwrap(), 0.0);

        let b = Pose::new(1, [1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!((hybrid_distance(&a, &b, &stats, &cfg).unwrap() - 2.0).abs() < 1e-12);

        let c = Pose::from_parts(2, Vector3::zeros(), axis_angle([0.0, 1.0, 0.0], PI / 2.0));
        let d = hybrid_distance(&a, &c, &stats, &cfg).unwrap();
        assert!((d - PI / 2.0).abs() < 1e-12, "{d}");
    }

    #[test]
    fn hybrid_rejects_bad_sigma() {
        let stats = DatasetStats {
            sigma_t: 0.0,
            n_train: 2,
        };
        let a = Pose::identity(0);
        assert!(hybrid_distance(&a, &a, &stats, &MetricConfig::default()).is_err());
        let neg = MetricConfig { lambda: -1.0 };
        let ok = DatasetStats::new(1.0, 2).unwrap();
        assert!(hybrid_distance(&a, &a, &ok, &neg).is_err());
    }

    #[test]
    fn stats_two_points() {
        let a = Pose::new(0, [0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).unwrap();
        let b = Pose::new(1, [2.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]).unwrap();
        let s = compute_stats(&[a, b]).unwrap();
        assert!((s.sigma_t - 1.0).abs() < 1e-15);
        assert_eq!(s.n_train, 2);
    }

    #[test]
    fn stats_rejects_degenerate_sets() {
        let a = Pose::identity(0);
        assert!(compute_stats(&[a]).is_err());
        assert!(compute_stats(&[a, a.with_id(1)]).is_err());
    }
}
