//! View triplets for the observability score: a central view plus two
//! symmetrically perturbed views, either rendered by the toy raycaster or
//! ingested from a directory of externally rendered PNGs.

mod image;
pub mod toy;

use std::path::{Path, PathBuf};

use nalgebra::{UnitQuaternion, Vector3};

pub use self::image::{luminance, ImageBuffer};
pub use self::toy::{Face, Patch, ToyScene, WallTexture};
use crate::candidate_gen::CandidatePose;
use crate::error::{Error, Result};
use crate::pose_math::Pose;

/// Translation offset of the perturbed views along camera-right, meters.
pub const OBS_SHIFT_M: f64 = 0.02;
/// Yaw offset of the perturbed views, degrees.
pub const OBS_YAW_DEG: f64 = 2.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ViewTriplet {
    pub candidate_id: u64,
    pub central: ImageBuffer,
    pub plus: ImageBuffer,
    pub minus: ImageBuffer,
    /// Per-pixel accumulated opacity of the central view.
    pub opacity: ImageBuffer,
}

impl ViewTriplet {
    pub fn new(
        candidate_id: u64,
        central: ImageBuffer,
        plus: ImageBuffer,
        minus: ImageBuffer,
        opacity: ImageBuffer,
    ) -> Result<Self> {
        for (name, img) in [("plus", &plus), ("minus", &minus), ("opacity", &opacity)] {
            if !img.same_size(&central) {
                return Err(Error::DimensionMismatch(format!(
                    "candidate {candidate_id}: {name} view is {}x{}, central is {}x{}",
                    img.width(),
                    img.height(),
                    central.width(),
                    central.height()
                )));
            }
        }
        if opacity.channels() != 1 {
            return Err(Error::invalid("opacity map must be single-channel"));
        }
        Ok(Self {
            candidate_id,
            central,
            plus,
            minus,
            opacity,
        })
    }
}

/// The `(plus, minus)` poses: +/-2 cm along the camera's right axis combined
/// with +/-2 degrees of yaw about its vertical axis.
pub fn perturb_for_observability(p: &Pose) -> (Pose, Pose) {
    let shift = p.rotation() * Vector3::new(OBS_SHIFT_M, 0.0, 0.0);
    let yaw = |deg: f64| UnitQuaternion::from_axis_angle(&Vector3::y_axis(), deg.to_radians());
    let plus = Pose::from_parts(p.id, p.t + shift, p.rotation() * yaw(OBS_YAW_DEG));
    let minus = Pose::from_parts(p.id, p.t - shift, p.rotation() * yaw(-OBS_YAW_DEG));
    (plus, minus)
}

/// Where view triplets come from.
#[derive(Clone, Debug)]
pub enum ViewSource {
    Toy(ToyScene),
    /// Directory holding `<id>_c.png`, `<id>_p.png`, `<id>_m.png` and
    /// optionally `<id>_a.png` (opacity) per candidate.
    Directory(PathBuf),
}

impl ViewSource {
    pub fn triplet(&self, candidate: &CandidatePose) -> Result<ViewTriplet> {
        make_triplet(self, candidate)
    }
}

pub fn make_triplet(source: &ViewSource, candidate: &CandidatePose) -> Result<ViewTriplet> {
    let id = candidate.pose.id;
    match source {
        ViewSource::Toy(scene) => {
            let (plus_pose, minus_pose) = perturb_for_observability(&candidate.pose);
            let (central, opacity) = scene.render(&candidate.pose)?;
            let (plus, _) = scene.render(&plus_pose)?;
            let (minus, _) = scene.render(&minus_pose)?;
            ViewTriplet::new(id, central, plus, minus, opacity)
        }
        ViewSource::Directory(dir) => {
            let central = load_view(dir, id, 'c')?;
            let plus = load_view(dir, id, 'p')?;
            let minus = load_view(dir, id, 'm')?;
            let alpha_path = view_path(dir, id, 'a');
            let opacity = if alpha_path.exists() {
                ImageBuffer::load_png(&alpha_path)?.to_gray()
            } else {
                ImageBuffer::filled(central.width(), central.height(), 1, 1.0)?
            };
            ViewTriplet::new(id, central, plus, minus, opacity)
        }
    }
}

pub fn view_path(dir: &Path, id: u64, suffix: char) -> PathBuf {
    dir.join(format!("{id}_{suffix}.png"))
}

fn load_view(dir: &Path, id: u64, suffix: char) -> Result<ImageBuffer> {
    let path = view_path(dir, id, suffix);
    if !path.exists() {
        return Err(Error::MissingView(path));
    }
    ImageBuffer::load_png(&path)
}

/// Writes a triplet in the ingestion layout, so it can be read back with
/// [`ViewSource::Directory`].
pub fn write_triplet(dir: &Path, triplet: &ViewTriplet) -> Result<()> {
    let id = triplet.candidate_id;
    triplet.central.save_png(&view_path(dir, id, 'c'))?;
    triplet.plus.save_png(&view_path(dir, id, 'p'))?;
    triplet.minus.save_png(&view_path(dir, id, 'm'))?;
    triplet.opacity.save_png(&view_path(dir, id, 'a'))
}
