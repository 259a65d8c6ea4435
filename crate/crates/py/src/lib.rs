//! Python bindings. Images cross the boundary as flat row-major float lists.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use poseselect::pipeline::{commands, with_workers, KvConfig, RunConfig};
use poseselect::{image_metrics, scoring, Error};

fn to_py(e: Error) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

#[pyclass(name = "Pose", frozen, from_py_object)]
#[derive(Clone)]
struct PyPose {
    inner: poseselect::Pose,
}

#[pymethods]
impl PyPose {
    /// `t` is the camera centre, `q` the camera-to-world rotation as (w, x, y, z).
    #[new]
    fn new(id: u64, t: [f64; 3], q: [f64; 4]) -> PyResult<Self> {
        Ok(Self {
            inner: poseselect::Pose::new(id, t, q).map_err(to_py)?,
        })
    }

    #[getter]
    fn id(&self) -> u64 {
        self.inner.id
    }

    #[getter]
    fn t(&self) -> [f64; 3] {
        self.inner.t.into()
    }

    #[getter]
    fn q(&self) -> [f64; 4] {
        self.inner.wxyz()
    }

    fn __repr__(&self) -> String {
        let [w, x, y, z] = self.inner.wxyz();
        let t = self.inner.t;
        format!(
            "Pose(id={}, t=[{}, {}, {}], q=[{w}, {x}, {y}, {z}])",
            self.inner.id, t.x, t.y, t.z
        )
    }
}

fn poses(list: &[PyPose]) -> Vec<poseselect::Pose> {
    list.iter().map(|p| p.inner).collect()
}

/// Geodesic angle between the two rotations, radians.
#[pyfunction]
fn rotation_distance(a: &PyPose, b: &PyPose) -> f64 {
    poseselect::rotation_distance(a.inner.rotation(), b.inner.rotation())
}

/// Translation standard deviation (RMS distance from the centroid).
#[pyfunction]
fn compute_stats(train: Vec<PyPose>) -> PyResult<f64> {
    Ok(poseselect::compute_stats(&poses(&train)).map_err(to_py)?.sigma_t)
}

#[pyfunction]
#[pyo3(signature = (a, b, sigma_t, lam=1.0))]
fn hybrid_distance(a: &PyPose, b: &PyPose, sigma_t: f64, lam: f64) -> PyResult<f64> {
    let stats = poseselect::DatasetStats::new(sigma_t, 0).map_err(to_py)?;
    poseselect::hybrid_distance(&a.inner, &b.inner, &stats, &poseselect::MetricConfig { lambda: lam })
        .map_err(to_py)
}

/// Returns `(candidate, parent_id)` pairs.
#[pyfunction]
#[pyo3(signature = (train, delta_t=0.20, delta_r=10.0, m_per_pose=4, seed=0))]
fn generate_pool(
    train: Vec<PyPose>,
    delta_t: f64,
    delta_r: f64,
    m_per_pose: usize,
    seed: u64,
) -> PyResult<Vec<(PyPose, u64)>> {
    let cfg = poseselect::PerturbConfig {
        delta_t,
        delta_r,
        m_per_pose,
        seed,
    };
    Ok(poseselect::generate_pool(&poses(&train), &cfg)
        .map_err(to_py)?
        .into_iter()
        .map(|c| (PyPose { inner: c.pose }, c.parent_id))
        .collect())
}

#[pyfunction]
fn quantile_normalize(raw: Vec<f64>) -> PyResult<Vec<f64>> {
    scoring::quantile_normalize(&raw).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (f_diff, f_nov, f_gs, alpha=1.5, beta=1.0, gamma=2.0))]
fn fuse_value(f_diff: f64, f_nov: f64, f_gs: f64, alpha: f64, beta: f64, gamma: f64) -> f64 {
    let cfg = poseselect::ScoringConfig {
        alpha,
        beta,
        gamma,
        ..Default::default()
    };
    scoring::fuse_value(f_diff, f_nov, f_gs, &cfg)
}

/// Ids of the `k` highest values (ties by ascending id), best first.
#[pyfunction]
fn select_top_k(ids: Vec<u64>, values: Vec<f64>, k: usize) -> PyResult<Vec<u64>> {
    if ids.len() != values.len() {
        return Err(PyValueError::new_err("ids and values differ in length"));
    }
    let rows = ids
        .iter()
        .zip(&values)
        .map(|(&id, &value)| poseselect::ValueScore {
            candidate_id: id,
            parent_id: id,
            f_diff: 0.0,
            f_nov: 0.0,
            f_gs: 0.0,
            f_diff_n: 0.0,
            f_nov_n: 0.0,
            f_gs_n: 0.0,
            value,
            rank: 0,
            selected: false,
        })
        .collect();
    let manifest = scoring::select_top_k(rows, k).map_err(to_py)?;
    Ok(manifest.selected().iter().map(|s| s.candidate_id).collect())
}

fn gray(width: usize, height: usize, data: Vec<f64>) -> PyResult<poseselect::ImageBuffer> {
    poseselect::ImageBuffer::new(width, height, 1, data).map_err(to_py)
}

/// SSIM of two grayscale images in [0, 1].
#[pyfunction]
fn ssim(width: usize, height: usize, a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    let cfg = poseselect::ObservabilityConfig::default();
    image_metrics::ssim(&gray(width, height, a)?, &gray(width, height, b)?, &cfg).map_err(to_py)
}

/// Renders the default toy scene: `(width, height, rgb, opacity)`.
#[pyfunction]
#[pyo3(signature = (pose, clean=false))]
fn render_toy(pose: &PyPose, clean: bool) -> PyResult<(usize, usize, Vec<f64>, Vec<f64>)> {
    let mut scene = poseselect::ToyScene::default();
    if clean {
        scene = scene.without_artifacts();
    }
    let (rgb, alpha) = scene.render(&pose.inner).map_err(to_py)?;
    Ok((rgb.width(), rgb.height(), rgb.data().to_vec(), alpha.data().to_vec()))
}

/// Runs the full pipeline into `run_dir`. `overrides` maps config keys to
/// values on top of the optional base `config` file.
#[pyfunction]
#[pyo3(signature = (run_dir, overrides=Vec::new(), config=None))]
fn run_pipeline(
    py: Python<'_>,
    run_dir: std::path::PathBuf,
    overrides: Vec<(String, String)>,
    config: Option<std::path::PathBuf>,
) -> PyResult<String> {
    let mut kv = match config {
        Some(p) => KvConfig::load(&p).map_err(to_py)?,
        None => KvConfig::default(),
    };
    for (k, v) in overrides {
        kv.set(&k, v).map_err(to_py)?;
    }
    let cfg = RunConfig::from_kv(&kv).map_err(to_py)?;
    py.detach(|| with_workers(cfg.workers, || commands::pipeline(&cfg, &run_dir)))
        .map_err(to_py)
}

#[pymodule]
fn pyposeselect(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPose>()?;
    m.add_function(wrap_pyfunction!(rotation_distance, m)?)?;
    m.add_function(wrap_pyfunction!(compute_stats, m)?)?;
    m.add_function(wrap_pyfunction!(hybrid_distance, m)?)?;
    m.add_function(wrap_pyfunction!(generate_pool, m)?)?;
    m.add_function(wrap_pyfunction!(quantile_normalize, m)?)?;
    m.add_function(wrap_pyfunction!(fuse_value, m)?)?;
    m.add_function(wrap_pyfunction!(select_top_k, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(render_toy, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
