//! Naive reference implementations, written from the definitions rather
//! than from the library code, plus random input generators.
#![allow(dead_code)]

use std::collections::HashMap;

use nalgebra::{UnitQuaternion, Vector3};
use poseselect::image_metrics::ObservabilityConfig;
use poseselect::scoring::TrainError;
use poseselect::{ImageBuffer, Pose, ViewTriplet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------- random inputs ----------

pub fn random_pose(r: &mut impl Rng, id: u64, spread: f64) -> Pose {
    let t = [
        r.random_range(-spread..spread),
        r.random_range(-spread..spread),
        r.random_range(-spread..spread),
    ];
    // normalized Gaussian 4-vector is uniform on the rotation group
    let q: [f64; 4] = std::array::from_fn(|_| gauss(r));
    Pose::new(id, t, q).unwrap()
}

pub fn gauss(r: &mut impl Rng) -> f64 {
    let u1: f64 = r.random_range(f64::EPSILON..1.0);
    let u2: f64 = r.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn random_image(r: &mut impl Rng, w: usize, h: usize, channels: usize) -> ImageBuffer {
    // smooth structure plus noise, so windows are neither flat nor white noise
    let (fx, fy, ph): (f64, f64, f64) = (r.random_range(0.1..0.9), r.random_range(0.1..0.9), r.random());
    let amp: f64 = r.random_range(0.0..0.4);
    let data = (0..w * h * channels)
        .map(|i| {
            let p = i / channels;
            let (x, y) = ((p % w) as f64, (p / w) as f64);
            let base = 0.5 + amp * (fx * x + fy * y + 6.0 * ph).sin();
            (base + r.random_range(-0.1..0.1)).clamp(0.0, 1.0)
        })
        .collect();
    ImageBuffer::new(w, h, channels, data).unwrap()
}

pub fn random_triplet(r: &mut impl Rng, w: usize, h: usize) -> ViewTriplet {
    let central = random_image(r, w, h, 3);
    let plus = jitter(r, &central, 0.05);
    let minus = jitter(r, &central, 0.05);
    let opacity = random_image(r, w, h, 1);
    ViewTriplet::new(0, central, plus, minus, opacity).unwrap()
}

pub fn jitter(r: &mut impl Rng, img: &ImageBuffer, amount: f64) -> ImageBuffer {
    let data = img
        .data()
        .iter()
        .map(|v| (v + r.random_range(-amount..amount)).clamp(0.0, 1.0))
        .collect();
    ImageBuffer::new(img.width(), img.height(), img.channels(), data).unwrap()
}

// ---------- image oracles ----------

pub fn luma_at(img: &ImageBuffer, x: usize, y: usize) -> f64 {
    if img.channels() == 1 {
        img.at(x, y, 0)
    } else {
        0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2)
    }
}

/// Direct 2-D windowed SSIM with two-pass moments.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer, cfg: &ObservabilityConfig) -> f64 {
    let n = cfg.ssim.window;
    let sigma = cfg.ssim.sigma;
    let c = (n / 2) as f64;
    let mut wgt = vec![vec![0.0; n]; n];
    let mut total = 0.0;
    for (i, row) in wgt.iter_mut().enumerate() {
        for (j, w) in row.iter_mut().enumerate() {
            let d2 = (i as f64 - c).powi(2) + (j as f64 - c).powi(2);
            *w = (-d2 / (2.0 * sigma * sigma)).exp();
            total += *w;
        }
    }
    let mut acc = 0.0;
    let mut count = 0usize;
    for y0 in 0..=(a.height() - n) {
        for x0 in 0..=(a.width() - n) {
            let (mut ma, mut mb) = (0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let w = wgt[i][j] / total;
                    ma += w * luma_at(a, x0 + j, y0 + i);
                    mb += w * luma_at(b, x0 + j, y0 + i);
                }
            }
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for i in 0..n {
                for j in 0..n {
                    let w = wgt[i][j] / total;
                    let da = luma_at(a, x0 + j, y0 + i) - ma;
                    let db = luma_at(b, x0 + j, y0 + i) - mb;
                    va += w * da * da;
                    vb += w * db * db;
                    cov += w * da * db;
                }
            }
            let (c1, c2) = (cfg.ssim.c1, cfg.ssim.c2);
            acc += (2.0 * ma * mb + c1) * (2.0 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    acc / count as f64
}

fn clamp_idx(v: i64, n: usize) -> usize {
    v.max(0).min(n as i64 - 1) as usize
}

pub fn gradient(img: &ImageBuffer) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let mut out = Vec::new();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let l = |xx: i64, yy: i64| luma_at(img, clamp_idx(xx, w), clamp_idx(yy, h));
            let gx = 0.5 * (l(x + 1, y) - l(x - 1, y));
            let gy = 0.5 * (l(x, y + 1) - l(x, y - 1));
            out.push(gx.hypot(gy));
        }
    }
    out
}

pub fn normalized_gradient(img: &ImageBuffer, eps: f64) -> Vec<f64> {
    let g = gradient(img);
    let mean = g.iter().sum::<f64>() / g.len() as f64;
    g.iter().map(|v| v / (mean + eps)).collect()
}

pub fn response(plus: &ImageBuffer, minus: &ImageBuffer, eps: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for y in 0..plus.height() {
        for x in 0..plus.width() {
            let (p, m) = (luma_at(plus, x, y), luma_at(minus, x, y));
            out.push((p - m).abs() / (p.abs() + m.abs() + eps));
        }
    }
    out
}

pub fn entropy(img: &ImageBuffer, window: usize, bins: usize) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let r = (window / 2) as i64;
    let mut out = Vec::new();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut counts: HashMap<usize, usize> = HashMap::new();
            for dy in -r..=r {
                for dx in -r..=r {
                    let v = luma_at(img, clamp_idx(x + dx, w), clamp_idx(y + dy, h));
                    let b = ((v * bins as f64).floor() as usize).min(bins - 1);
                    *counts.entry(b).or_default() += 1;
                }
            }
            let n = (window * window) as f64;
            out.push(
                counts
                    .values()
                    .map(|&c| {
                        let p = c as f64 / n;
                        -p * p.log2()
                    })
                    .sum(),
            );
        }
    }
    out
}

pub fn sigmoid(z: f64, tau: f64, k: f64) -> f64 {
    1.0 / (1.0 + (-k * (z - tau)).exp())
}

pub fn observability(t: &ViewTriplet, cfg: &ObservabilityConfig) -> f64 {
    let s = ssim(&t.plus, &t.central, cfg).min(ssim(&t.minus, &t.central, cfg));
    let g = normalized_gradient(&t.central, cfg.epsilon);
    let r = response(&t.plus, &t.minus, cfg.epsilon);
    let e = entropy(&t.central, cfg.entropy_window, cfg.entropy_bins);
    let (w, h) = (t.central.width(), t.central.height());
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let gate = sigmoid(t.opacity.at(x, y, 0), cfg.tau_alpha, cfg.steepness)
                * sigmoid(luma_at(&t.central, x, y), cfg.tau_b, cfg.steepness)
                * sigmoid(e[i], cfg.tau_h, cfg.steepness);
            sum += gate * g[i] * r[i];
        }
    }
    s * sum / (w * h) as f64
}

// ---------- pose oracles ----------

/// `arccos((tr(R_a^T R_b) - 1) / 2)` from rotation matrices.
pub fn rotation_angle(a: &UnitQuaternion<f64>, b: &UnitQuaternion<f64>) -> f64 {
    let ra = a.to_rotation_matrix();
    let rb = b.to_rotation_matrix();
    let m = ra.matrix().transpose() * rb.matrix();
    ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

pub fn hybrid(a: &Pose, b: &Pose, sigma_t: f64, lambda: f64) -> f64 {
    (a.t - b.t).norm() / sigma_t + lambda * rotation_angle(a.rotation(), b.rotation())
}

pub fn sigma_t(poses: &[Pose]) -> f64 {
    let n = poses.len() as f64;
    let c: Vector3<f64> = poses.iter().map(|p| p.t).sum::<Vector3<f64>>() / n;
    (poses.iter().map(|p| (p.t - c).norm_squared()).sum::<f64>() / n).sqrt()
}

/// Brute-force k nearest (distance, id), ties by id.
pub fn knn(candidate: &Pose, train: &[Pose], k: usize, sigma: f64, lambda: f64) -> Vec<(f64, u64)> {
    let mut all: Vec<(f64, u64)> = train
        .iter()
        .map(|p| (hybrid(candidate, p, sigma, lambda), p.id))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    all.truncate(k);
    all
}

/// Kernel-weighted mean of neighbour errors with the median bandwidth.
pub fn difficulty(
    candidate: &Pose,
    train: &[Pose],
    errors: &[TrainError],
    k: usize,
    sigma: f64,
    lambda: f64,
) -> f64 {
    let nn = knn(candidate, train, k, sigma, lambda);
    let mut d: Vec<f64> = nn.iter().map(|x| x.0).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = if d.len() % 2 == 1 {
        d[d.len() / 2]
    } else {
        (d[d.len() / 2 - 1] + d[d.len() / 2]) / 2.0
    };
    let h = med.max(1e-6);
    let scalar = |id: u64| {
        let e = errors.iter().find(|e| e.pose_id == id).unwrap();
        e.e_t / sigma + lambda * e.e_r
    };
    let (mut num, mut den) = (0.0, 0.0);
    for (dist, id) in &nn {
        let w = (-(dist * dist) / (2.0 * h * h)).exp();
        num += w * scalar(*id);
        den += w;
    }
    if den > 0.0 {
        num / den
    } else {
        scalar(nn[0].1)
    }
}

// ---------- retrieval oracles ----------

/// Area-averaged thumbnail: upsample by the grid size (pixel replication),
/// then take plain block means.
pub fn descriptor(img: &ImageBuffer, gw: usize, gh: usize) -> Vec<f64> {
    let (w, h) = (img.width(), img.height());
    let (bw, bh) = (w, h); // each block spans w x h fine pixels
    let mut out = Vec::new();
    for cy in 0..gh {
        for cx in 0..gw {
            let mut acc = 0.0;
            for fy in cy * bh..(cy + 1) * bh {
                for fx in cx * bw..(cx + 1) * bw {
                    acc += luma_at(img, fx / gw, fy / gh);
                }
            }
            out.push(acc / (bw * bh) as f64);
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Index of the nearest descriptor, ties by smaller pose id.
pub fn nearest(query: &[f64], db: &[(Pose, Vec<f64>)], skip: Option<usize>) -> usize {
    let mut best: Option<(f64, u64, usize)> = None;
    for (i, (p, d)) in db.iter().enumerate() {
        if Some(i) == skip {
            continue;
        }
        let dist = sq_dist(query, d);
        let better = match best {
            None => true,
            Some((bd, bid, _)) => dist < bd || (dist == bd && p.id < bid),
        };
        if better {
            best = Some((dist, p.id, i));
        }
    }
    best.unwrap().2
}

/// Leave-one-out (translation, rotation) errors in database order.
pub fn leave_one_out(db: &[(Pose, Vec<f64>)]) -> Vec<(u64, f64, f64)> {
    (0..db.len())
        .map(|i| {
            let j = nearest(&db[i].1, db, Some(i));
            let (a, b) = (&db[i].0, &db[j].0);
            (a.id, (a.t - b.t).norm(), rotation_angle(a.rotation(), b.rotation()))
        })
        .collect()
}

// ---------- selection oracles ----------

/// `(rank - 1) / (n - 1)` with average ranks for ties, by counting.
pub fn quantile(raw: &[f64]) -> Vec<f64> {
    let n = raw.len();
    if n == 1 {
        return vec![0.5];
    }
    raw.iter()
        .map(|v| {
            let less = raw.iter().filter(|u| *u < v).count() as f64;
            let equal = raw.iter().filter(|u| *u == v).count() as f64;
            let avg_rank = less + (equal + 1.0) / 2.0;
            (avg_rank - 1.0) / (n - 1) as f64
        })
        .collect()
}

/// Exhaustive subset search: the best total value, and among optimal
/// subsets the lexicographically smallest sorted id list.
pub fn best_subset(ids: &[u64], values: &[f64], k: usize) -> (f64, Vec<u64>) {
    let n = ids.len();
    let mut best: Option<(f64, Vec<u64>)> = None;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != k {
            continue;
        }
        let mut chosen: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        // sum in a canonical order so equal multisets give equal sums
        chosen.sort_by(|a, b| values[*a].partial_cmp(&values[*b]).unwrap());
        let total: f64 = chosen.iter().map(|i| values[*i]).sum();
        let mut sel: Vec<u64> = chosen.iter().map(|i| ids[*i]).collect();
        sel.sort_unstable();
        best = match best {
            None => Some((total, sel)),
            Some((bt, bs)) => {
                if total > bt || (total == bt && sel < bs) {
                    Some((total, sel))
                } else {
                    Some((bt, bs))
                }
            }
        };
    }
    best.unwrap()
}
