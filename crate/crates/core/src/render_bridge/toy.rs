//! Deterministic box-room raycaster standing in for a trained radiance model.
//!
//! The room is an axis-aligned box centred on the origin. Five faces carry a
//! tinted checker texture; one face may be left open, in which case rays
//! leaving through it come back black with zero opacity. Textureless patches
//! render at constant albedo, and artifact patches add noise seeded by a hash
//! of the camera pose, so two nearby viewpoints disagree there the way
//! floaters and splat artifacts do.
//!
//! Cameras follow the pinhole convention: +z forward, +x right, +y down.

use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use nalgebra::{UnitQuaternion, Vector3};

use super::image::ImageBuffer;
use crate::error::{Error, Result};
use crate::pose_math::Pose;

/// Edge length of one artifact noise cell on the wall, meters.
const ARTIFACT_CELL: f64 = 0.08;
/// Sub-pixel sample offsets (2x2 supersampling).
const SUBSAMPLES: [f64; 2] = [0.25, 0.75];
/// Default wall ripple: fine enough to pass the entropy gate, coarse enough
/// to stay stable under the observability perturbation.
const RIPPLE_AMP: f64 = 0.5;
const RIPPLE_FREQ: f64 = 1.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Face {
    PosX,
    NegX,
    PosY,
    NegY,
    PosZ,
    NegZ,
}

impl Face {
    pub const ALL: [Face; 6] = [
        Face::PosX,
        Face::NegX,
        Face::PosY,
        Face::NegY,
        Face::PosZ,
        Face::NegZ,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    fn axis(self) -> usize {
        self.index() / 2
    }

    fn from_axis(axis: usize, positive: bool) -> Face {
        Face::ALL[axis * 2 + usize::from(!positive)]
    }

    /// World axes spanned by the face's `(u, v)` coordinates.
    fn uv_axes(self) -> (usize, usize) {
        let a = self.axis();
        ((a + 1) % 3, (a + 2) % 3)
    }

    fn tint(self) -> [f64; 3] {
        match self {
            Face::PosX => [1.0, 0.85, 0.7],
            Face::NegX => [0.7, 0.85, 1.0],
            Face::PosY => [0.9, 0.9, 0.9],
            Face::NegY => [1.0, 1.0, 0.8],
            Face::PosZ => [0.8, 1.0, 0.8],
            Face::NegZ => [1.0, 0.75, 0.9],
        }
    }
}

impl fmt::Display for Face {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = ["+x", "-x", "+y", "-y", "+z", "-z"][self.index()];
        f.write_str(s)
    }
}

impl FromStr for Face {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let face = match s {
            "+x" => Face::PosX,
            "-x" => Face::NegX,
            "+y" => Face::PosY,
            "-y" => Face::NegY,
            "+z" => Face::PosZ,
            "-z" => Face::NegZ,
            _ => return Err(Error::Config(format!("unknown face `{s}` (expected +x, -x, ...)"))),
        };
        Ok(face)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WallTexture {
    /// Checker cells per meter.
    pub checker_freq: f64,
    pub albedo_lo: f64,
    pub albedo_hi: f64,
    /// Relative amplitude of a fine sinusoidal texture on top of the checker.
    pub ripple_amp: f64,
    /// Ripple cycles per meter.
    pub ripple_freq: f64,
}

/// Axis-aligned rectangle on a wall, in the wall's `(u, v)` coordinates.
///
/// `level` is the constant albedo of a textureless patch, or the noise
/// amplitude of an artifact patch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Patch {
    pub face: Face,
    pub u: [f64; 2],
    pub v: [f64; 2],
    pub level: f64,
}

impl Patch {
    fn contains(&self, u: f64, v: f64) -> bool {
        (self.u[0]..=self.u[1]).contains(&u) && (self.v[0]..=self.v[1]).contains(&v)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ToyScene {
    pub half_extents: [f64; 3],
    pub open_face: Option<Face>,
    /// Indexed by [`Face::index`].
    pub walls: [WallTexture; 6],
    pub textureless: Vec<Patch>,
    pub artifacts: Vec<Patch>,
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for ToyScene {
    fn default() -> Self {
        let wall = |checker_freq, albedo_lo, albedo_hi| WallTexture {
            checker_freq,
            albedo_lo,
            albedo_hi,
            ripple_amp: RIPPLE_AMP,
            ripple_freq: RIPPLE_FREQ,
        };
        Self {
            // low ceiling and a wide field of view keep the floor, the open
            // ceiling and the corners in frame, so translation shows up as parallax
            half_extents: [2.5, 0.8, 2.5],
            open_face: Some(Face::NegY),
            walls: [
                wall(0.5, 0.25, 0.85),
                wall(0.6, 0.3, 0.9),
                wall(0.45, 0.35, 0.8),
                wall(0.5, 0.3, 0.8),
                wall(0.55, 0.2, 0.8),
                wall(0.5, 0.3, 0.95),
            ],
            textureless: vec![Patch {
                face: Face::PosX,
                u: [-0.8, 0.8],
                v: [-2.0, -0.3],
                level: 0.55,
            }],
            artifacts: vec![
                Patch {
                    face: Face::NegZ,
                    u: [-1.0, 2.0],
                    v: [-0.8, 0.8],
                    level: 0.6,
                },
                Patch {
                    face: Face::PosZ,
                    u: [-2.0, 0.0],
                    v: [-0.8, 0.8],
                    level: 0.6,
                },
            ],
            focal: 32.0,
            cx: 32.0,
            cy: 24.0,
            width: 64,
            height: 48,
        }
    }
}

impl ToyScene {
    pub fn validate(&self) -> Result<()> {
        if self.half_extents.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::Config("scene half extents must be > 0".into()));
        }
        if self.width < 16 || self.height < 16 {
            return Err(Error::Config(format!(
                "image size must be at least 16x16, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.focal.is_finite() && self.focal > 0.0) || !self.cx.is_finite() || !self.cy.is_finite()
        {
            return Err(Error::Config("invalid camera intrinsics".into()));
        }
        for w in &self.walls {
            let ok = w.checker_freq.is_finite()
                && w.checker_freq > 0.0
                && (0.0..=1.0).contains(&w.ripple_amp)
                && w.ripple_freq.is_finite()
                && w.ripple_freq >= 0.0
                && (0.0..=1.0).contains(&w.albedo_lo)
                && (0.0..=1.0).contains(&w.albedo_hi);
            if !ok {
                return Err(Error::Config(format!("invalid wall texture {w:?}")));
            }
        }
        for p in self.textureless.iter().chain(&self.artifacts) {
            let (ua, va) = p.face.uv_axes();
            let (hu, hv) = (self.half_extents[ua], self.half_extents[va]);
            let inside = p.u[0] <= p.u[1]
                && p.v[0] <= p.v[1]
                && p.u[0] >= -hu
                && p.u[1] <= hu
                && p.v[0] >= -hv
                && p.v[1] <= hv;
            if !inside {
                return Err(Error::Config(format!("patch {p:?} lies outside its wall")));
            }
            if !(0.0..=1.0).contains(&p.level) {
                return Err(Error::Config(format!("patch level {} outside [0, 1]", p.level)));
            }
        }
        Ok(())
    }

    /// The same room with every artifact patch removed: what a real camera sees.
    pub fn without_artifacts(&self) -> ToyScene {
        ToyScene {
            artifacts: Vec::new(),
            ..self.clone()
        }
    }

    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|k| p[k].abs() < self.half_extents[k])
    }

    /// Renders the RGB view and accumulated opacity seen from `pose`.
    pub fn render(&self, pose: &Pose) -> Result<(ImageBuffer, ImageBuffer)> {
        if !self.contains(&pose.t) {
            return Err(Error::invalid(format!(
                "pose {} at ({}, {}, {}) lies outside the room",
                pose.id, pose.t.x, pose.t.y, pose.t.z
            )));
        }
        let rot = pose.rotation().to_rotation_matrix();
        let seed = pose_hash(pose);
        let n_sub = (SUBSAMPLES.len() * SUBSAMPLES.len()) as f64;
        let mut rgb = Vec::with_capacity(self.width * self.height * 3);
        let mut alpha = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let mut acc = [0.0; 3];
                let mut a = 0.0;
                for sy in SUBSAMPLES {
                    for sx in SUBSAMPLES {
                        let d_cam = Vector3::new(
                            (x as f64 + sx - self.cx) / self.focal,
                            (y as f64 + sy - self.cy) / self.focal,
                            1.0,
                        );
                        let (c, o) = self.trace(&pose.t, &(rot * d_cam), seed);
                        for k in 0..3 {
                            acc[k] += c[k];
                        }
                        a += o;
                    }
                }
                rgb.extend(acc.iter().map(|v| (v / n_sub).clamp(0.0, 1.0)));
                alpha.push(a / n_sub);
            }
        }
        Ok((
            ImageBuffer::from_raw_unchecked(self.width, self.height, 3, rgb),
            ImageBuffer::from_raw_unchecked(self.width, self.height, 1, alpha),
        ))
    }

    fn trace(&self, origin: &Vector3<f64>, dir: &Vector3<f64>, seed: u64) -> ([f64; 3], f64) {
        let mut best = f64::INFINITY;
        let mut face = Face::PosX;
        for k in 0..3 {
            let d = dir[k];
            if d == 0.0 {
                continue;
            }
            let bound = if d > 0.0 { self.half_extents[k] } else { -self.half_extents[k] };
            let s = (bound - origin[k]) / d;
            if s < best {
                best = s;
                face = Face::from_axis(k, d > 0.0);
            }
        }
        if Some(face) == self.open_face || !best.is_finite() {
            return ([0.0; 3], 0.0);
        }
        let hit = origin + dir * best;
        let (ua, va) = face.uv_axes();
        let (u, v) = (hit[ua], hit[va]);
        let tint = face.tint();

        if let Some(p) = self.textureless.iter().find(|p| p.face == face && p.contains(u, v)) {
            return (tint.map(|t| t * p.level), 1.0);
        }

        let wall = &self.walls[face.index()];
        let cell = (u * wall.checker_freq).floor() as i64 + (v * wall.checker_freq).floor() as i64;
        let level = if cell.rem_euclid(2) == 0 {
            wall.albedo_lo
        } else {
            wall.albedo_hi
        };
        // slow shading ramp so distant cells of the same parity differ
        let phase = face.index() as f64 * 1.7;
        let ramp = 0.7 + 0.3 * (1.3 * u + 0.9 * v + phase).sin();
        let w = TAU * wall.ripple_freq;
        let ripple = 1.0 + 0.5 * wall.ripple_amp * ((w * u).sin() + (w * v + phase).sin());
        let mut color = tint.map(|t| t * level * ramp * ripple);

        if let Some(p) = self.artifacts.iter().find(|p| p.face == face && p.contains(u, v)) {
            let cu = (u / ARTIFACT_CELL).floor() as i64 as u64;
            let cv = (v / ARTIFACT_CELL).floor() as i64 as u64;
            let cell_key = mix(mix(face.index() as u64 ^ mix(cu)) ^ cv);
            for (ch, c) in color.iter_mut().enumerate() {
                let h = mix(seed ^ mix(cell_key ^ ch as u64));
                let noise = (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0;
                *c = (*c + p.level * noise).clamp(0.0, 1.0);
            }
        }
        (color, 1.0)
    }

    /// Closed loop of `n` camera poses at mid-height, each looking outward at
    /// the walls with a gentle pitch and radius wobble.
    pub fn trajectory(&self, n: usize) -> Vec<Pose> {
        let [hx, _, hz] = self.half_extents;
        let radius = 0.5 * hx.min(hz);
        (0..n)
            .map(|i| {
                let theta = TAU * i as f64 / n as f64;
                let r = radius * (1.0 + 0.15 * (3.0 * theta).sin());
                let t = Vector3::new(r * theta.cos(), 0.0, r * theta.sin());
                // forward (local +z) = (cos theta, 0, sin theta)
                let yaw = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), TAU / 4.0 - theta);
                let pitch = UnitQuaternion::from_axis_angle(
                    &Vector3::x_axis(),
                    5f64.to_radians() * (2.0 * theta).sin(),
                );
                Pose::from_parts(i as u64, t, yaw * pitch)
            })
            .collect()
    }
}

#[inline]
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn pose_hash(p: &Pose) -> u64 {
    p.t.iter()
        .chain(p.wxyz().iter())
        .fold(0x5eed_u64, |h, v| mix(h ^ v.to_bits()))
}
