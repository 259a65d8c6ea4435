//! Trajectory-constrained candidate generation.
//!
//! Every training pose spawns `m_per_pose` candidates. Translation offsets are
//! drawn independently per world axis in `[-delta_t, delta_t]`. Rotation
//! offsets are drawn independently per camera axis in `[-delta_r, delta_r]`
//! and applied jointly as a local rotation vector, so a candidate's geodesic
//! distance to its parent never exceeds `sqrt(3) * delta_r`.
//!
//! Randomness comes from ChaCha8 keyed by `seed`; the poses spawned by the
//! i-th training pose (in ascending id order) use ChaCha stream `i`. The pool
//! therefore does not depend on how many threads generate it.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::pose_math::Pose;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbConfig {
    /// Per-axis translation bound, meters.
    pub delta_t: f64,
    /// Per-axis rotation bound, degrees.
    pub delta_r: f64,
    pub m_per_pose: usize,
    pub seed: u64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        Self::indoor()
    }
}

impl PerturbConfig {
    pub const DEFAULT_M: usize = 4;

    pub fn indoor() -> Self {
        Self {
            delta_t: 0.20,
            delta_r: 10.0,
            m_per_pose: Self::DEFAULT_M,
            seed: 0,
        }
    }

    pub fn outdoor() -> Self {
        Self {
            delta_t: 1.50,
            delta_r: 4.0,
            m_per_pose: Self::DEFAULT_M,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_t.is_finite() && self.delta_t > 0.0) {
            return Err(Error::invalid(format!("delta_t must be > 0, got {}", self.delta_t)));
        }
        if !(self.delta_r.is_finite() && self.delta_r > 0.0) {
            return Err(Error::invalid(format!("delta_r must be > 0, got {}", self.delta_r)));
        }
        if self.m_per_pose == 0 {
            return Err(Error::invalid("m_per_pose must be >= 1"));
        }
        Ok(())
    }

    /// Largest geodesic offset a candidate can have from its parent, radians.
    pub fn rotation_bound(&self) -> f64 {
        3f64.sqrt() * self.delta_r.to_radians()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidatePose {
    pub pose: Pose,
    pub parent_id: u64,
}

/// Perturbs every training pose `m_per_pose` times.
///
/// Candidates are numbered `0..N*M` following the training poses in ascending
/// id order.
pub fn generate_pool(train: &[Pose], cfg: &PerturbConfig) -> Result<Vec<CandidatePose>> {
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    cfg.validate()?;
    let mut parents: Vec<&Pose> = train.iter().collect();
    parents.sort_by_key(|p| p.id);

    let m = cfg.m_per_pose;
    let delta_r = cfg.delta_r.to_radians();
    let pool = parents
        .par_iter()
        .enumerate()
        .flat_map_iter(|(i, parent)| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(i as u64);
            (0..m)
                .map(|j| {
                    let dt = Vector3::new(
                        rng.random_range(-cfg.delta_t..=cfg.delta_t),
                        rng.random_range(-cfg.delta_t..=cfg.delta_t),
                        rng.random_range(-cfg.delta_t..=cfg.delta_t),
                    );
                    let omega = Vector3::new(
                        rng.random_range(-delta_r..=delta_r),
                        rng.random_range(-delta_r..=delta_r),
                        rng.random_range(-delta_r..=delta_r),
                    );
                    let q = parent.rotation() * UnitQuaternion::from_scaled_axis(omega);
                    CandidatePose {
                        pose: Pose::from_parts((i * m + j) as u64, parent.t + dt, q),
                        parent_id: parent.id,
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();
    Ok(pool)
}
