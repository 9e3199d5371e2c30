//! Similarity-landscape grounding: from a query grid and a refined bank to a
//! ranked list of pixel-space point prompts.
//!
//! The landscape holds, for every query patch, its best cosine to any bank
//! prototype. Patches at or above the loose threshold form a candidate mask;
//! its 8-connected components smaller than `eta_cc` are dropped. Inside each
//! surviving component, patches that equal the maximum of the component over
//! their `(2 * delta + 1)^2` Chebyshev window are peak candidates, thinned by
//! greedy Euclidean NMS at radius `delta`.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

#[cfg(feature = "rayon")]
use rayon::prelude::*;

use crate::bank::ClassBank;
use crate::error::{Error, Result};
use crate::grid::FeatureGrid;
use crate::kernel::dot;

/// Per-patch max cosine to a bank, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMap {
    pub grid_h: usize,
    pub grid_w: usize,
    pub values: Vec<f32>,
}

impl SimilarityMap {
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f32 {
        self.values[i * self.grid_w + j]
    }
}

/// Binary patch mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatchMask {
    pub grid_h: usize,
    pub grid_w: usize,
    pub bits: Vec<bool>,
}

impl PatchMask {
    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.grid_w + j]
    }
}

/// A maximal 8-connected region of a patch mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub id: u32,
    /// `(i, j)` positions in row-major order.
    pub patches: Vec<(u32, u32)>,
}

impl Component {
    pub fn size(&self) -> usize {
        self.patches.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub i: u32,
    pub j: u32,
    pub score: f32,
    pub component_id: u32,
}

/// A point prompt at a patch centre, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prompt {
    pub x: f64,
    pub y: f64,
    pub score: f32,
}

/// Prompts ordered by descending score.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub prompts: Vec<Prompt>,
    pub image_w: u32,
    pub image_h: u32,
}

impl PromptSet {
    pub fn len(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prompts.is_empty()
    }
}

/// Max dot product of every query patch against every bank entry, clamped
/// to `[-1, 1]`.
pub fn similarity_map(query: &FeatureGrid, bank: &ClassBank) -> Result<SimilarityMap> {
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    if query.dim() != bank.dim {
        return Err(Error::DimMismatch {
            expected: bank.dim,
            found: query.dim(),
        });
    }
    query.require_normalized()?;
    if let Some(e) = bank.entries.iter().find(|e| e.vector.len() != bank.dim) {
        return Err(Error::DimMismatch {
            expected: bank.dim,
            found: e.vector.len(),
        });
    }
    let best = |p: usize| {
        let q = query.patch(p);
        bank.entries
            .iter()
            .map(|e| dot(q, &e.vector))
            .fold(f32::NEG_INFINITY, f32::max)
            .clamp(-1.0, 1.0)
    };
    let n = query.num_patches();
    #[cfg(feature = "rayon")]
    let values = (0..n).into_par_iter().map(best).collect();
    #[cfg(not(feature = "rayon"))]
    let values = (0..n).map(best).collect();
    Ok(SimilarityMap {
        grid_h: query.grid_h(),
        grid_w: query.grid_w(),
        values,
    })
}

/// Patches with similarity `>= tau_l`.
pub fn loose_mask(map: &SimilarityMap, tau_l: f32) -> PatchMask {
    PatchMask {
        grid_h: map.grid_h,
        grid_w: map.grid_w,
        bits: map.values.iter().map(|&s| s >= tau_l).collect(),
    }
}

/// 8-connected components of `mask` with at least `eta_cc` patches.
///
/// Components are discovered in row-major order of their first patch; ids
/// number the survivors consecutively in that order.
pub fn connected_components(mask: &PatchMask, eta_cc: usize) -> Vec<Component> {
    let (h, w) = (mask.grid_h, mask.grid_w);
    let mut seen = vec![false; h * w];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..h * w {
        if !mask.bits[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut members = Vec::new();
        while let Some(p) = queue.pop_front() {
            members.push(p);
            let (i, j) = (p / w, p % w);
            for di in -1isize..=1 {
                for dj in -1isize..=1 {
                    let (ni, nj) = (i as isize + di, j as isize + dj);
                    if ni < 0 || nj < 0 || ni >= h as isize || nj >= w as isize {
                        continue;
                    }
                    let q = ni as usize * w + nj as usize;
                    if mask.bits[q] && !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        if members.len() >= eta_cc.max(1) {
            members.sort_unstable();
            out.push(Component {
                id: out.len() as u32,
                patches: members
                    .into_iter()
                    .map(|p| ((p / w) as u32, (p % w) as u32))
                    .collect(),
            });
        }
    }
    out
}

/// Sliding max over a window of radius `r` along rows of a `h x w` buffer.
fn max_filter_rows(src: &[f32], h: usize, w: usize, r: usize) -> Vec<f32> {
    let mut out = vec![f32::NEG_INFINITY; h * w];
    for i in 0..h {
        let row = &src[i * w..(i + 1) * w];
        for j in 0..w {
            let lo = j.saturating_sub(r);
            let hi = (j + r).min(w - 1);
            out[i * w + j] = row[lo..=hi]
                .iter()
                .copied()
                .fold(f32::NEG_INFINITY, f32::max);
        }
    }
    out
}

fn max_filter_cols(src: &[f32], h: usize, w: usize, r: usize) -> Vec<f32> {
    let mut out = vec![f32::NEG_INFINITY; h * w];
    for i in 0..h {
        let lo = i.saturating_sub(r);
        let hi = (i + r).min(h - 1);
        for j in 0..w {
            let mut m = f32::NEG_INFINITY;
            for k in lo..=hi {
                m = m.max(src[k * w + j]);
            }
            out[i * w + j] = m;
        }
    }
    out
}

/// Windowed local maxima of `map` restricted to `comp`, thinned by greedy
/// NMS: a candidate is dropped when a kept peak lies at Euclidean distance
/// `<= delta`. Always returns at least one peak.
pub fn extract_peaks(map: &SimilarityMap, comp: &Component, delta: usize) -> Result<Vec<Peak>> {
    if comp.patches.is_empty() {
        return Err(Error::EmptyComponent);
    }
    // Work on the component's bounding box; everything outside the
    // component is -inf, so the window max never sees beyond it.
    let (mut i0, mut j0, mut i1, mut j1) = (u32::MAX, u32::MAX, 0u32, 0u32);
    for &(i, j) in &comp.patches {
        i0 = i0.min(i);
        j0 = j0.min(j);
        i1 = i1.max(i);
        j1 = j1.max(j);
    }
    let bh = (i1 - i0 + 1) as usize;
    let bw = (j1 - j0 + 1) as usize;
    let mut masked = vec![f32::NEG_INFINITY; bh * bw];
    for &(i, j) in &comp.patches {
        masked[(i - i0) as usize * bw + (j - j0) as usize] = map.at(i as usize, j as usize);
    }
    let window = max_filter_cols(&max_filter_rows(&masked, bh, bw, delta), bh, bw, delta);

    let mut candidates: Vec<Peak> = comp
        .patches
        .iter()
        .filter_map(|&(i, j)| {
            let b = (i - i0) as usize * bw + (j - j0) as usize;
            (masked[b] == window[b]).then(|| Peak {
                i,
                j,
                score: masked[b],
                component_id: comp.id,
            })
        })
        .collect();
    candidates.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.i.cmp(&b.i))
            .then(a.j.cmp(&b.j))
    });

    let d2 = (delta * delta) as i64;
    let mut kept: Vec<Peak> = Vec::new();
    for c in candidates {
        let clear = kept.iter().all(|k| {
            let di = i64::from(c.i) - i64::from(k.i);
            let dj = i64::from(c.j) - i64::from(k.j);
            di * di + dj * dj > d2
        });
        if clear {
            kept.push(c);
        }
    }
    if kept.is_empty() {
        // Unreachable for finite maps; keep the component's best patch.
        let &(i, j) = comp
            .patches
            .iter()
            .max_by(|a, b| {
                map.at(a.0 as usize, a.1 as usize)
                    .total_cmp(&map.at(b.0 as usize, b.1 as usize))
                    .then(b.cmp(a))
            })
            .expect("nonempty component");
        kept.push(Peak {
            i,
            j,
            score: map.at(i as usize, j as usize),
            component_id: comp.id,
        });
    }
    Ok(kept)
}

/// Maps peaks to patch-centre pixel coordinates, sorts them by descending
/// score (ties by row, then column) and applies the optional budget.
pub fn to_prompt_set(
    peaks: &[Peak],
    image_w: u32,
    image_h: u32,
    grid_h: usize,
    grid_w: usize,
    b_max: Option<usize>,
) -> PromptSet {
    let mut sorted = peaks.to_vec();
    sorted.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.i.cmp(&b.i))
            .then(a.j.cmp(&b.j))
    });
    if let Some(b) = b_max {
        sorted.truncate(b);
    }
    let sx = f64::from(image_w) / grid_w as f64;
    let sy = f64::from(image_h) / grid_h as f64;
    PromptSet {
        prompts: sorted
            .iter()
            .map(|p| Prompt {
                x: (f64::from(p.j) + 0.5) * sx,
                y: (f64::from(p.i) + 0.5) * sy,
                score: p.score,
            })
            .collect(),
        image_w,
        image_h,
    }
}

/// Grounding hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsgParams {
    /// Loose candidate-mask threshold.
    pub tau_l: f32,
    /// Minimum component size in patches.
    pub eta_cc: usize,
    /// Peak window radius and NMS distance, in patches.
    pub delta: usize,
    /// Optional cap on emitted prompts.
    pub b_max: Option<usize>,
}

impl Default for TsgParams {
    fn default() -> Self {
        Self {
            tau_l: 0.80,
            eta_cc: 4,
            delta: 10,
            b_max: None,
        }
    }
}

impl TsgParams {
    /// Alternative defaults listed with the implementation details
    /// (`tau_l = 0.5`, `eta_cc = 5`, `delta = 3`).
    pub fn implementation_defaults() -> Self {
        Self {
            tau_l: 0.5,
            eta_cc: 5,
            delta: 3,
            b_max: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_l > 0.0 && self.tau_l < 1.0) {
            return Err(Error::InvalidThreshold(self.tau_l));
        }
        if self.eta_cc < 1 {
            return Err(Error::InvalidParams("eta_cc must be at least 1"));
        }
        if self.delta < 1 {
            return Err(Error::InvalidParams("delta must be at least 1"));
        }
        Ok(())
    }
}

/// Every intermediate of one grounding pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Grounding {
    pub map: SimilarityMap,
    pub mask: PatchMask,
    pub components: Vec<Component>,
    pub peaks: Vec<Peak>,
    pub prompts: PromptSet,
}

/// Full landscape-to-prompts pass for one query and one bank.
pub fn ground(
    query: &FeatureGrid,
    bank: &ClassBank,
    params: &TsgParams,
    image_w: u32,
    image_h: u32,
) -> Result<Grounding> {
    params.validate()?;
    if (image_w as usize) < query.grid_w() || (image_h as usize) < query.grid_h() {
        return Err(Error::InvalidParams(
            "image must be at least as large as the grid",
        ));
    }
    let map = similarity_map(query, bank)?;
    let mask = loose_mask(&map, params.tau_l);
    let components = connected_components(&mask, params.eta_cc);
    let mut peaks = Vec::new();
    for c in &components {
        peaks.extend(extract_peaks(&map, c, params.delta)?);
    }
    let prompts = to_prompt_set(
        &peaks,
        image_w,
        image_h,
        map.grid_h,
        map.grid_w,
        params.b_max,
    );
    Ok(Grounding {
        map,
        mask,
        components,
        peaks,
        prompts,
    })
}
