//! Grid-level primitives: normalization, mask alignment and foreground
//! selection.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::grid::{AnnotationMask, FeatureGrid, PatchCoverage, PatchIndexSet};
use crate::kernel::norm_f64;

/// Scales every patch vector to unit L2 norm.
pub fn l2_normalize(grid: &FeatureGrid) -> Result<FeatureGrid> {
    let dim = grid.dim();
    let mut data = Vec::with_capacity(grid.data().len());
    for (index, v) in grid.data().chunks_exact(dim).enumerate() {
        let n = norm_f64(v);
        if n < 1e-12 {
            return Err(Error::ZeroVector { index });
        }
        data.extend(v.iter().map(|&x| (f64::from(x) / n) as f32));
    }
    FeatureGrid::new(grid.grid_h(), grid.grid_w(), dim, data, true)
}

/// Nearest-neighbour source index for each of `dst_len` destination samples
/// (`floor(dst * src_len / dst_len)`).
fn nearest_lookup(src_len: usize, dst_len: usize) -> Vec<usize> {
    (0..dst_len).map(|d| d * src_len / dst_len).collect()
}

/// Resizes `mask` to `(grid_h * patch) x (grid_w * patch)` by nearest-neighbour
/// sampling and average-pools it with a `patch x patch` kernel and stride.
pub fn align_mask(
    mask: &AnnotationMask,
    grid_h: usize,
    grid_w: usize,
    patch: usize,
) -> Result<PatchCoverage> {
    if patch == 0 {
        return Err(Error::InvalidParams("patch size must be at least 1"));
    }
    if grid_h == 0 || grid_w == 0 {
        return Err(Error::InvalidGrid("grid dimensions must be positive"));
    }
    if mask.height() == 0 || mask.width() == 0 {
        return Err(Error::EmptyMask);
    }
    let rows = nearest_lookup(mask.height(), grid_h * patch);
    let cols = nearest_lookup(mask.width(), grid_w * patch);
    let area = (patch * patch) as f32;

    let mut coverage = Vec::with_capacity(grid_h * grid_w);
    for i in 0..grid_h {
        for j in 0..grid_w {
            let mut count = 0usize;
            for &sy in &rows[i * patch..(i + 1) * patch] {
                for &sx in &cols[j * patch..(j + 1) * patch] {
                    count += usize::from(mask.get(sy, sx));
                }
            }
            coverage.push(count as f32 / area);
        }
    }
    PatchCoverage::new(grid_h, grid_w, coverage)
}

/// Flat indices whose coverage is strictly greater than `tau`.
pub fn select_foreground(cov: &PatchCoverage, tau: f32) -> PatchIndexSet {
    let indices = cov
        .values()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > tau)
        .map(|(p, _)| p as u32)
        .collect();
    PatchIndexSet::from_sorted_unchecked(indices)
}
