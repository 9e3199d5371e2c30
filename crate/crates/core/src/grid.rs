//! Grid-shaped domain types.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::kernel::norm_f64;

/// Maximum deviation of a patch vector's L2 norm from 1 for a grid flagged
/// as normalized.
pub const NORM_TOLERANCE: f64 = 1e-4;

/// Dense `grid_h x grid_w x dim` patch descriptor grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGrid {
    grid_h: usize,
    grid_w: usize,
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl FeatureGrid {
    pub fn new(
        grid_h: usize,
        grid_w: usize,
        dim: usize,
        data: Vec<f32>,
        normalized: bool,
    ) -> Result<Self> {
        if grid_h == 0 || grid_w == 0 || dim == 0 {
            return Err(Error::InvalidGrid("grid dimensions must be positive"));
        }
        let expected = grid_h
            .checked_mul(grid_w)
            .and_then(|n| n.checked_mul(dim))
            .ok_or(Error::InvalidGrid("grid size overflows"))?;
        if data.len() != expected {
            return Err(Error::DimMismatch {
                expected,
                found: data.len(),
            });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidGrid("non-finite feature value"));
        }
        let grid = Self {
            grid_h,
            grid_w,
            dim,
            data,
            normalized,
        };
        if normalized {
            grid.check_unit_norm()?;
        }
        Ok(grid)
    }

    fn check_unit_norm(&self) -> Result<()> {
        for (index, v) in self.data.chunks_exact(self.dim).enumerate() {
            let n = norm_f64(v);
            if n < 1e-12 {
                return Err(Error::ZeroVector { index });
            }
            if (n - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::UnnormalizedGrid { index });
            }
        }
        Ok(())
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Number of patches, `grid_h * grid_w`.
    pub fn num_patches(&self) -> usize {
        self.grid_h * self.grid_w
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Feature vector at flat index `p`.
    #[inline]
    pub fn patch(&self, p: usize) -> &[f32] {
        &self.data[p * self.dim..(p + 1) * self.dim]
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> &[f32] {
        self.patch(i * self.grid_w + j)
    }

    pub(crate) fn require_normalized(&self) -> Result<()> {
        if self.normalized {
            Ok(())
        } else {
            Err(Error::UnnormalizedGrid { index: 0 })
        }
    }
}

/// Binary pixel mask for one class.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
    class_name: String,
}

impl AnnotationMask {
    /// Builds a mask from values that must already be 0 or 1.
    pub fn new(height: usize, width: usize, data: Vec<u8>, class_name: String) -> Result<Self> {
        Self::check_shape(height, width, data.len())?;
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, v)| **v > 1) {
            return Err(Error::NonBinaryMask { index, value });
        }
        Ok(Self {
            height,
            width,
            data,
            class_name,
        })
    }

    /// Builds a mask mapping every nonzero value to 1.
    pub fn from_nonzero(
        height: usize,
        width: usize,
        mut data: Vec<u8>,
        class_name: String,
    ) -> Result<Self> {
        Self::check_shape(height, width, data.len())?;
        for v in &mut data {
            *v = u8::from(*v != 0);
        }
        Ok(Self {
            height,
            width,
            data,
            class_name,
        })
    }

    fn check_shape(height: usize, width: usize, len: usize) -> Result<()> {
        if height == 0 || width == 0 {
            return Err(Error::EmptyMask);
        }
        if height.checked_mul(width) != Some(len) {
            return Err(Error::DimMismatch {
                expected: height.saturating_mul(width),
                found: len,
            });
        }
        Ok(())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn class_name(&self) -> &str {
        &self.class_name
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }
}

/// Per-patch foreground fraction in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchCoverage {
    grid_h: usize,
    grid_w: usize,
    coverage: Vec<f32>,
}

impl PatchCoverage {
    pub fn new(grid_h: usize, grid_w: usize, coverage: Vec<f32>) -> Result<Self> {
        if grid_h == 0 || grid_w == 0 {
            return Err(Error::InvalidGrid("grid dimensions must be positive"));
        }
        if grid_h * grid_w != coverage.len() {
            return Err(Error::DimMismatch {
                expected: grid_h * grid_w,
                found: coverage.len(),
            });
        }
        if coverage.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidGrid("coverage outside [0, 1]"));
        }
        Ok(Self {
            grid_h,
            grid_w,
            coverage,
        })
    }

    pub fn grid_h(&self) -> usize {
        self.grid_h
    }

    pub fn grid_w(&self) -> usize {
        self.grid_w
    }

    pub fn values(&self) -> &[f32] {
        &self.coverage
    }
}

/// Strictly increasing flat patch indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PatchIndexSet {
    indices: Vec<u32>,
}

impl PatchIndexSet {
    /// Validates that `indices` is strictly increasing and below `num_patches`.
    pub fn new(indices: Vec<u32>, num_patches: usize) -> Result<Self> {
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::UnsortedIndices);
        }
        if let Some(&last) = indices.last() {
            if last as usize >= num_patches {
                return Err(Error::IndexOutOfRange {
                    index: last as usize,
                    len: num_patches,
                });
            }
        }
        Ok(Self { indices })
    }

    pub(crate) fn from_sorted_unchecked(indices: Vec<u32>) -> Self {
        Self { indices }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, p: u32) -> bool {
        self.indices.binary_search(&p).is_ok()
    }

    /// True when every index is valid for a grid of `num_patches`.
    pub fn fits(&self, num_patches: usize) -> bool {
        self.indices
            .last()
            .is_none_or(|&p| (p as usize) < num_patches)
    }
}
