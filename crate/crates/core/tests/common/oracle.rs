//! Brute-force reference implementations and random fixtures.
//!
//! Everything here is written as straight nested loops in `f64`, without
//! sharing code with the library, so the library can be checked against it.

#![allow(dead_code, clippy::needless_range_loop)]

use patchground_core::{AnnotationMask, FeatureGrid, IccdParams, KappaMode};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn dot64(a: &[f32], b: &[f32]) -> f64 {
    let mut s = 0.0f64;
    for k in 0..a.len() {
        s += f64::from(a[k]) * f64::from(b[k]);
    }
    s
}

pub fn row(grid: &FeatureGrid, p: usize) -> &[f32] {
    &grid.data()[p * grid.dim()..(p + 1) * grid.dim()]
}

/// First patch with the largest dot product.
pub fn nn(v: &[f32], grid: &FeatureGrid) -> (u32, f64) {
    let mut best = (0u32, f64::NEG_INFINITY);
    for p in 0..grid.grid_h() * grid.grid_w() {
        let s = dot64(v, row(grid, p));
        if s > best.1 {
            best = (p as u32, s);
        }
    }
    best
}

/// `(good, bad, score)` over held-out targets, each a grid plus its
/// foreground list.
pub fn coherence(
    v: &[f32],
    targets: &[(&FeatureGrid, &[u32])],
    xi: f32,
    eta_min: u32,
) -> (u32, u32, f32) {
    let mut good = 0;
    let mut bad = 0;
    for (grid, fg) in targets {
        let (p, s) = nn(v, grid);
        if s >= f64::from(xi) {
            let mut inside = false;
            for &q in fg.iter() {
                if q == p {
                    inside = true;
                }
            }
            if inside {
                good += 1;
            } else {
                bad += 1;
            }
        }
    }
    let score = if good + bad >= eta_min {
        good as f32 / (good + bad) as f32
    } else {
        -1.0
    };
    (good, bad, score)
}

pub fn q75(values: &[f32]) -> f64 {
    let mut s: Vec<f64> = values.iter().map(|&x| f64::from(x)).collect();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = 0.75 * (s.len() as f64 - 1.0);
    let lo = h.floor() as usize;
    let hi = if lo + 1 < s.len() { lo + 1 } else { lo };
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

fn threshold(scores: &[f32], p: &IccdParams) -> f32 {
    match p.kappa {
        KappaMode::Fixed(v) => v,
        KappaMode::Adaptive => {
            let psi: Vec<f32> = scores.iter().copied().filter(|&s| s >= 0.0).collect();
            if psi.is_empty() {
                return p.kappa_hi;
            }
            let mut k = f64::from(p.scale) * q75(&psi);
            if k > f64::from(p.kappa_hi) {
                k = f64::from(p.kappa_hi);
            }
            if k < f64::from(p.kappa_lo) {
                k = f64::from(p.kappa_lo);
            }
            k as f32
        }
    }
}

/// Keeps `(id, patch, score)` entries with score >= 0 and >= kappa, ranked
/// by score desc, id asc, patch asc, capped at `k`.
fn select(mut scored: Vec<(String, u32, f32)>, kappa: f32, k: usize) -> Vec<(String, u32, f32)> {
    scored.retain(|e| e.2 >= 0.0 && e.2 >= kappa);
    // Stable sort on the tie keys first, then on score.
    scored.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap());
    scored.truncate(k);
    scored
}

/// One annotated reference image for the distillation oracle.
pub struct OracleImage {
    pub id: String,
    pub grid: FeatureGrid,
    pub bank_fg: Vec<u32>,
    pub target_fg: Vec<u32>,
}

/// Full recomputation of multi-reference distillation. Returns the kept
/// entries and the threshold.
pub fn distill(images: &[OracleImage], p: &IccdParams) -> (Vec<(String, u32, f32)>, f32) {
    let mut order: Vec<&OracleImage> = images.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let mut scored = Vec::new();
    for (n, img) in order.iter().enumerate() {
        if n >= p.n_s {
            break;
        }
        for &q in &img.bank_fg {
            let v = row(&img.grid, q as usize);
            let targets: Vec<(&FeatureGrid, &[u32])> = order
                .iter()
                .filter(|o| o.id != img.id)
                .map(|o| (&o.grid, o.target_fg.as_slice()))
                .collect();
            let (_, _, s) = coherence(v, &targets, p.xi, p.eta_min);
            scored.push((img.id.clone(), q, s));
        }
    }
    let scores: Vec<f32> = scored.iter().map(|e| e.2).collect();
    let kappa = threshold(&scores, p);
    (select(scored, kappa, p.k), kappa)
}

/// Within-image scores: full cosine matrix, row max off the diagonal.
pub fn within_image(vectors: &[Vec<f32>]) -> Vec<f64> {
    let n = vectors.len();
    let mut m = vec![vec![0.0f64; n]; n];
    for a in 0..n {
        for b in 0..n {
            m[a][b] = dot64(&vectors[a], &vectors[b]);
        }
    }
    (0..n)
        .map(|a| {
            let mut best = f64::NEG_INFINITY;
            for b in 0..n {
                if b != a && m[a][b] > best {
                    best = m[a][b];
                }
            }
            best.clamp(-1.0, 1.0)
        })
        .collect()
}

/// Single-reference distillation over the foreground patches of one image.
pub fn distill_single(img: &OracleImage, p: &IccdParams) -> (Vec<(String, u32, f32)>, f32) {
    let vectors: Vec<Vec<f32>> = img
        .bank_fg
        .iter()
        .map(|&q| row(&img.grid, q as usize).to_vec())
        .collect();
    let scores = within_image(&vectors);
    let scored: Vec<(String, u32, f32)> = img
        .bank_fg
        .iter()
        .zip(&scores)
        .map(|(&q, &s)| (img.id.clone(), q, s as f32))
        .collect();
    let s32: Vec<f32> = scored.iter().map(|e| e.2).collect();
    let kappa = threshold(&s32, p);
    (select(scored, kappa, p.k), kappa)
}

/// Clamped max dot of every query patch over the bank vectors.
pub fn similarity(query: &FeatureGrid, bank: &[Vec<f32>]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 0..query.grid_h() {
        for j in 0..query.grid_w() {
            let q = row(query, i * query.grid_w() + j);
            let mut best = f64::NEG_INFINITY;
            for b in bank {
                let mut s = 0.0f64;
                for k in 0..q.len() {
                    s += f64::from(q[k]) * f64::from(b[k]);
                }
                if s > best {
                    best = s;
                }
            }
            out.push(best.clamp(-1.0, 1.0));
        }
    }
    out
}

fn flood(
    bits: &[bool],
    h: usize,
    w: usize,
    i: usize,
    j: usize,
    seen: &mut [bool],
    acc: &mut Vec<(u32, u32)>,
) {
    if seen[i * w + j] || !bits[i * w + j] {
        return;
    }
    seen[i * w + j] = true;
    acc.push((i as u32, j as u32));
    for di in [-1i64, 0, 1] {
        for dj in [-1i64, 0, 1] {
            let (a, b) = (i as i64 + di, j as i64 + dj);
            if a >= 0 && b >= 0 && (a as usize) < h && (b as usize) < w {
                flood(bits, h, w, a as usize, b as usize, seen, acc);
            }
        }
    }
}

/// 8-connected components with at least `eta` members, each sorted, in
/// order of their first row-major patch.
pub fn components(bits: &[bool], h: usize, w: usize, eta: usize) -> Vec<Vec<(u32, u32)>> {
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    for i in 0..h {
        for j in 0..w {
            let mut acc = Vec::new();
            flood(bits, h, w, i, j, &mut seen, &mut acc);
            if !acc.is_empty() && acc.len() >= eta {
                acc.sort();
                out.push(acc);
            }
        }
    }
    out
}

/// Patches of `comp` that are >= every other member within Chebyshev
/// distance `delta`, ranked and thinned by O(n^2) greedy NMS.
pub fn peaks(values: &[f32], w: usize, comp: &[(u32, u32)], delta: usize) -> Vec<(u32, u32, f32)> {
    let at = |p: &(u32, u32)| values[p.0 as usize * w + p.1 as usize];
    let mut cands = Vec::new();
    for a in comp {
        let mut is_max = true;
        for b in comp {
            let di = (i64::from(a.0) - i64::from(b.0)).unsigned_abs() as usize;
            let dj = (i64::from(a.1) - i64::from(b.1)).unsigned_abs() as usize;
            if di <= delta && dj <= delta && at(b) > at(a) {
                is_max = false;
            }
        }
        if is_max {
            cands.push((a.0, a.1, at(a)));
        }
    }
    cands.sort_by(|x, y| {
        y.2.partial_cmp(&x.2)
            .unwrap()
            .then(x.0.cmp(&y.0))
            .then(x.1.cmp(&y.1))
    });
    let mut kept: Vec<(u32, u32, f32)> = Vec::new();
    for c in cands {
        let mut ok = true;
        for k in &kept {
            let di = f64::from(c.0) - f64::from(k.0);
            let dj = f64::from(c.1) - f64::from(k.1);
            if (di * di + dj * dj).sqrt() <= delta as f64 {
                ok = false;
            }
        }
        if ok {
            kept.push(c);
        }
    }
    kept
}

pub fn confusion(pred: &AnnotationMask, gt: &AnnotationMask) -> [u64; 4] {
    let mut c = [0u64; 4];
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            let (p, g) = (pred.get(y, x) == 1, gt.get(y, x) == 1);
            let k = match (p, g) {
                (true, true) => 0,
                (true, false) => 1,
                (false, true) => 2,
                (false, false) => 3,
            };
            c[k] += 1;
        }
    }
    c
}

/// Nearest-neighbour resize to the grid's pixel extent, then per-block
/// pixel counting.
pub fn align(mask: &AnnotationMask, gh: usize, gw: usize, patch: usize) -> Vec<f32> {
    let (rh, rw) = (gh * patch, gw * patch);
    let mut resized = vec![vec![0u8; rw]; rh];
    for y in 0..rh {
        for x in 0..rw {
            let sy = (y * mask.height()) / rh;
            let sx = (x * mask.width()) / rw;
            resized[y][x] = mask.get(sy, sx);
        }
    }
    let mut out = Vec::new();
    for i in 0..gh {
        for j in 0..gw {
            let mut n = 0u32;
            for y in i * patch..(i + 1) * patch {
                for x in j * patch..(j + 1) * patch {
                    n += u32::from(resized[y][x]);
                }
            }
            out.push(n as f32 / (patch * patch) as f32);
        }
    }
    out
}

// ---- fixtures ----

pub fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 {
            return v.iter().map(|x| (x / n) as f32).collect();
        }
    }
}

/// `dir` perturbed by uniform noise of size `noise`, renormalized.
pub fn near(rng: &mut ChaCha8Rng, dir: &[f32], noise: f64) -> Vec<f32> {
    let v: Vec<f64> = dir
        .iter()
        .map(|&x| f64::from(x) + rng.random_range(-noise..noise))
        .collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| (x / n) as f32).collect()
}

pub fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize, dim: usize) -> FeatureGrid {
    let data: Vec<f32> = (0..h * w).flat_map(|_| unit_vector(rng, dim)).collect();
    FeatureGrid::new(h, w, dim, data, true).unwrap()
}

/// A class image: random background with a rectangle of patches near
/// `dir`. Returns the grid and the rectangle's flat indices.
pub fn planted_image(
    rng: &mut ChaCha8Rng,
    h: usize,
    w: usize,
    dir: &[f32],
    noise: f64,
) -> (FeatureGrid, Vec<u32>) {
    let dim = dir.len();
    let rh = rng.random_range(1..=h.min(4));
    let rw = rng.random_range(1..=w.min(4));
    let i0 = rng.random_range(0..=h - rh);
    let j0 = rng.random_range(0..=w - rw);
    let mut data = Vec::with_capacity(h * w * dim);
    let mut fg = Vec::new();
    for i in 0..h {
        for j in 0..w {
            if i >= i0 && i < i0 + rh && j >= j0 && j < j0 + rw {
                data.extend(near(rng, dir, noise));
                fg.push((i * w + j) as u32);
            } else {
                data.extend(unit_vector(rng, dim));
            }
        }
    }
    (FeatureGrid::new(h, w, dim, data, true).unwrap(), fg)
}

/// Random subset of `0..n` in increasing order.
pub fn random_subset(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<u32> {
    (0..n as u32).filter(|_| rng.random_bool(p)).collect()
}
