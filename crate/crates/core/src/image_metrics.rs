//! Image measurements behind the rendering observability score.
//!
//! Everything operates on luminance: RGB inputs are converted with
//! 0.299 R + 0.587 G + 0.114 B before any metric is evaluated.

use crate::error::{Error, Result};
use crate::render_bridge::{ImageBuffer, ViewTriplet};

/// Windowed SSIM parameters for intensities in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimConfig {
    /// Side of the Gaussian window, pixels (odd).
    pub window: usize,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            c1: 0.01 * 0.01,
            c2: 0.03 * 0.03,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObservabilityConfig {
    pub tau_alpha: f64,
    pub tau_b: f64,
    /// Entropy threshold, bits.
    pub tau_h: f64,
    /// Sigmoid steepness `k`.
    pub steepness: f64,
    pub epsilon: f64,
    /// Side of the local-entropy window, pixels (odd).
    pub entropy_window: usize,
    pub entropy_bins: usize,
    pub ssim: SsimConfig,
}

impl Default for ObservabilityConfig {
    fn default() -> Self {
        Self {
            tau_alpha: 0.5,
            tau_b: 0.2,
            tau_h: 3.0,
            steepness: 10.0,
            epsilon: 1e-8,
            entropy_window: 9,
            entropy_bins: 32,
            ssim: SsimConfig::default(),
        }
    }
}

impl ObservabilityConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.tau_alpha, self.tau_b, self.tau_h, self.steepness, self.ssim.sigma];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("observability thresholds must be finite".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("epsilon must be > 0".into()));
        }
        for (name, w) in [("entropy_window", self.entropy_window), ("ssim_window", self.ssim.window)] {
            if w < 3 || w % 2 == 0 {
                return Err(Error::Config(format!("{name} must be odd and >= 3, got {w}")));
            }
        }
        if self.entropy_bins < 2 {
            return Err(Error::Config("entropy_bins must be >= 2".into()));
        }
        if !(self.ssim.sigma > 0.0 && self.ssim.c1 > 0.0 && self.ssim.c2 > 0.0) {
            return Err(Error::Config("SSIM sigma and stabilizers must be > 0".into()));
        }
        Ok(())
    }
}

/// Real-valued per-pixel map, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelMap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl PixelMap {
    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }
}

fn check_same_size(a: &ImageBuffer, b: &ImageBuffer, what: &str) -> Result<()> {
    if a.same_size(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "{what}: {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )))
    }
}

fn gray(img: &ImageBuffer) -> Vec<f64> {
    (0..img.height())
        .flat_map(|y| (0..img.width()).map(move |x| (x, y)))
        .map(|(x, y)| img.luma(x, y))
        .collect()
}

fn gaussian_kernel(window: usize, sigma: f64) -> Vec<f64> {
    let r = (window / 2) as f64;
    let k: Vec<f64> = (0..window)
        .map(|i| {
            let d = i as f64 - r;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable "valid" filtering: output is `(w - n + 1) x (h - n + 1)`.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut tmp = vec![0.0; ow * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..ow {
            tmp[y * ow + x] = k.iter().zip(&row[x..x + n]).map(|(a, b)| a * b).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[(y + i) * ow + x])
                .sum();
        }
    }
    out
}

/// Mean SSIM over every Gaussian window that fits entirely inside the image.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer, cfg: &ObservabilityConfig) -> Result<f64> {
    check_same_size(a, b, "ssim")?;
    let sc = &cfg.ssim;
    let (w, h) = (a.width(), a.height());
    if w < sc.window || h < sc.window {
        return Err(Error::invalid(format!(
            "{w}x{h} image is smaller than the {0}x{0} SSIM window",
            sc.window
        )));
    }
    let ga = gray(a);
    let gb = gray(b);
    let k = gaussian_kernel(sc.window, sc.sigma);
    let sq = |v: &[f64], u: &[f64]| v.iter().zip(u).map(|(x, y)| x * y).collect::<Vec<_>>();
    let mu_a = filter_valid(&ga, w, h, &k);
    let mu_b = filter_valid(&gb, w, h, &k);
    let e_aa = filter_valid(&sq(&ga, &ga), w, h, &k);
    let e_bb = filter_valid(&sq(&gb, &gb), w, h, &k);
    let e_ab = filter_valid(&sq(&ga, &gb), w, h, &k);
    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + sc.c1) * (2.0 * cov + sc.c2))
                / ((ma * ma + mb * mb + sc.c1) * (va + vb + sc.c2))
        })
        .sum();
    Ok(total / mu_a.len() as f64)
}

/// Photometric stability: the worse of the two perturbed-vs-central SSIMs.
pub fn stability(triplet: &ViewTriplet, cfg: &ObservabilityConfig) -> Result<f64> {
    let plus = ssim(&triplet.plus, &triplet.central, cfg)?;
    let minus = ssim(&triplet.minus, &triplet.central, cfg)?;
    Ok(plus.min(minus))
}

/// Central-difference gradient magnitude with replicated borders.
pub fn gradient_magnitude(img: &ImageBuffer) -> PixelMap {
    let (w, h) = (img.width(), img.height());
    let g = gray(img);
    let at = |x: usize, y: usize| g[y * w + x];
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let dx = (at((x + 1).min(w - 1), y) - at(x.saturating_sub(1), y)) / 2.0;
            let dy = (at(x, (y + 1).min(h - 1)) - at(x, y.saturating_sub(1))) / 2.0;
            data.push((dx * dx + dy * dy).sqrt());
        }
    }
    PixelMap {
        width: w,
        height: h,
        data,
    }
}

/// Gradient magnitude divided by its image mean (plus epsilon).
pub fn normalized_gradient(img: &ImageBuffer, cfg: &ObservabilityConfig) -> PixelMap {
    let mut g = gradient_magnitude(img);
    let denom = g.mean() + cfg.epsilon;
    for v in &mut g.data {
        *v /= denom;
    }
    g
}

/// `|I+ - I-| / (|I+| + |I-| + eps)` per pixel.
pub fn symmetric_response(
    plus: &ImageBuffer,
    minus: &ImageBuffer,
    cfg: &ObservabilityConfig,
) -> Result<PixelMap> {
    check_same_size(plus, minus, "symmetric_response")?;
    let gp = gray(plus);
    let gm = gray(minus);
    let data = gp
        .iter()
        .zip(&gm)
        .map(|(p, m)| (p - m).abs() / (p.abs() + m.abs() + cfg.epsilon))
        .collect();
    Ok(PixelMap {
        width: plus.width(),
        height: plus.height(),
        data,
    })
}

#[inline]
fn bin_of(v: f64, bins: usize) -> usize {
    ((v * bins as f64) as usize).min(bins - 1)
}

fn entropy_bits(hist: &[u32], n: f64) -> f64 {
    hist.iter()
        .filter(|c| **c > 0)
        .map(|c| {
            let p = f64::from(*c) / n;
            -p * p.log2()
        })
        .sum()
}

/// Shannon entropy (bits) of the intensity histogram in a square window
/// around each pixel; borders are replicated.
pub fn local_entropy(img: &ImageBuffer, cfg: &ObservabilityConfig) -> PixelMap {
    let (w, h) = (img.width(), img.height());
    let bins = cfg.entropy_bins;
    let r = (cfg.entropy_window / 2) as isize;
    let binned: Vec<usize> = gray(img).into_iter().map(|v| bin_of(v, bins)).collect();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let n = (cfg.entropy_window * cfg.entropy_window) as f64;

    let mut data = vec![0.0; w * h];
    let mut hist = vec![0u32; bins];
    for y in 0..h {
        let rows: Vec<usize> = (-r..=r).map(|dy| clamp(y as isize + dy, h)).collect();
        hist.iter_mut().for_each(|c| *c = 0);
        for dx in -r..=r {
            let cx = clamp(dx, w);
            for &ry in &rows {
                hist[binned[ry * w + cx]] += 1;
            }
        }
        data[y * w] = entropy_bits(&hist, n);
        for x in 1..w {
            let out_col = clamp(x as isize - r - 1, w);
            let in_col = clamp(x as isize + r, w);
            for &ry in &rows {
                hist[binned[ry * w + out_col]] -= 1;
                hist[binned[ry * w + in_col]] += 1;
            }
            data[y * w + x] = entropy_bits(&hist, n);
        }
    }
    PixelMap {
        width: w,
        height: h,
        data,
    }
}

/// `1 / (1 + exp(-k (z - tau)))`.
#[inline]
pub fn sigmoid_gate(z: f64, tau: f64, k: f64) -> f64 {
    1.0 / (1.0 + (-k * (z - tau)).exp())
}

/// Soft visibility gate from opacity, central-view brightness and local entropy.
pub fn visibility_mask(
    opacity: &ImageBuffer,
    central: &ImageBuffer,
    cfg: &ObservabilityConfig,
) -> Result<PixelMap> {
    check_same_size(opacity, central, "visibility_mask")?;
    let alpha = gray(opacity);
    let bright = gray(central);
    let entropy = local_entropy(central, cfg);
    let k = cfg.steepness;
    let data = alpha
        .iter()
        .zip(&bright)
        .zip(&entropy.data)
        .map(|((a, b), e)| {
            sigmoid_gate(*a, cfg.tau_alpha, k)
                * sigmoid_gate(*b, cfg.tau_b, k)
                * sigmoid_gate(*e, cfg.tau_h, k)
        })
        .collect();
    Ok(PixelMap {
        width: central.width(),
        height: central.height(),
        data,
    })
}
