//! Offline prototype bank construction and cohesion distillation.
//!
//! A raw bank holds every strictly-covered foreground patch vector of every
//! reference image of a class. Distillation scores each candidate by how
//! often its nearest neighbour in the *other* reference images lands inside
//! that image's (loosely thresholded) foreground, derives a per-class
//! eligibility threshold from the upper quartile of those scores, and keeps
//! the best `K` eligible vectors. A class with a single reference image is
//! scored instead by each vector's best cosine to the other foreground
//! vectors of the same image; the threshold rule and output format are the
//! same on both paths.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;

#[cfg(feature = "rayon")]
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{FeatureGrid, PatchIndexSet, NORM_TOLERANCE};
use crate::kernel::{argmax_dot, dot, norm_f64};

/// Score carried by a vector that has not been (or could not be) scored.
pub const UNSCORED: f32 = -1.0;

/// One unit-norm prototype with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct BankVector {
    pub vector: Vec<f32>,
    pub source_image_id: String,
    pub patch_flat_index: u32,
    /// Coherence (multi-reference) or within-image similarity (single
    /// reference); [`UNSCORED`] before scoring.
    pub score: f32,
}

/// One annotated reference image: its normalized grid and the flat indices
/// of its strictly covered foreground patches.
#[derive(Debug, Clone, Copy)]
pub struct Reference<'a> {
    pub id: &'a str,
    pub grid: &'a FeatureGrid,
    pub foreground: &'a PatchIndexSet,
}

/// A held-out target image: its normalized grid and loosely thresholded
/// foreground.
#[derive(Debug, Clone, Copy)]
pub struct Target<'a> {
    pub grid: &'a FeatureGrid,
    pub foreground: &'a PatchIndexSet,
}

/// Per-class union of foreground vectors, grouped by source image and
/// iterated in ascending image-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct RawBank {
    class_name: String,
    dim: usize,
    per_image: BTreeMap<String, Vec<BankVector>>,
}

impl RawBank {
    pub fn class_name(&self) -> &str {
        &self.class_name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_images(&self) -> usize {
        self.per_image.len()
    }

    /// Total number of vectors across images.
    pub fn len(&self) -> usize {
        self.per_image.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.per_image.keys().map(String::as_str)
    }

    pub fn images(&self) -> impl Iterator<Item = (&str, &[BankVector])> {
        self.per_image
            .iter()
            .map(|(id, v)| (id.as_str(), v.as_slice()))
    }

    pub fn vectors(&self, image_id: &str) -> Option<&[BankVector]> {
        self.per_image.get(image_id).map(Vec::as_slice)
    }

    /// Keeps only the first `n` images in id order.
    pub fn first_images(&self, n: usize) -> RawBank {
        RawBank {
            class_name: self.class_name.clone(),
            dim: self.dim,
            per_image: self
                .per_image
                .iter()
                .take(n)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

/// Harvests one [`BankVector`] per (image, foreground patch).
pub fn build_raw_bank<'a>(
    class_name: &str,
    refs: impl IntoIterator<Item = Reference<'a>>,
) -> Result<RawBank> {
    let mut dim = None;
    let mut per_image = BTreeMap::new();
    for r in refs {
        let d = *dim.get_or_insert(r.grid.dim());
        if r.grid.dim() != d {
            return Err(Error::DimMismatch {
                expected: d,
                found: r.grid.dim(),
            });
        }
        r.grid.require_normalized()?;
        if !r.foreground.fits(r.grid.num_patches()) {
            return Err(Error::IndexOutOfRange {
                index: r.foreground.indices().last().copied().unwrap_or(0) as usize,
                len: r.grid.num_patches(),
            });
        }
        let vectors = r
            .foreground
            .indices()
            .iter()
            .map(|&p| BankVector {
                vector: r.grid.patch(p as usize).to_vec(),
                source_image_id: r.id.to_string(),
                patch_flat_index: p,
                score: UNSCORED,
            })
            .collect();
        if per_image.insert(r.id.to_string(), vectors).is_some() {
            return Err(Error::DuplicateImage(r.id.to_string()));
        }
    }
    let dim = dim.ok_or(Error::InvalidParams(
        "at least one reference image is required",
    ))?;
    Ok(RawBank {
        class_name: class_name.to_string(),
        dim,
        per_image,
    })
}

/// How the per-class eligibility threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KappaMode {
    /// `clip(scale * Q75(scores), kappa_lo, kappa_hi)`, Q75 by linear
    /// interpolation between closest ranks.
    Adaptive,
    /// A fixed global threshold inside `[kappa_lo, kappa_hi]`.
    Fixed(f32),
}

/// Distillation parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IccdParams {
    /// Strict coverage threshold for bank harvesting.
    pub tau_b: f32,
    /// Looser coverage threshold for held-out target foregrounds.
    pub tau_t: f32,
    /// Similarity floor a best match must reach to count as evidence.
    pub xi: f32,
    /// Minimum number of valid targets for a vector to be scored.
    pub eta_min: u32,
    /// Number of source images (in id order) whose vectors are scored.
    pub n_s: usize,
    /// Maximum refined bank size.
    pub k: usize,
    pub kappa_lo: f32,
    pub kappa_hi: f32,
    /// Multiplier applied to the upper quartile.
    pub scale: f32,
    pub kappa: KappaMode,
}

impl Default for IccdParams {
    fn default() -> Self {
        Self {
            tau_b: 0.7,
            tau_t: 0.3,
            xi: 0.0,
            eta_min: 3,
            n_s: 50,
            k: 500,
            kappa_lo: 0.65,
            kappa_hi: 0.82,
            scale: 0.90,
            kappa: KappaMode::Adaptive,
        }
    }
}

impl IccdParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.tau_b) {
            return Err(Error::InvalidParams("tau_b must lie in [0, 1)"));
        }
        if !(0.0 <= self.tau_t && self.tau_t < self.tau_b) {
            return Err(Error::InvalidParams(
                "tau_t must satisfy 0 <= tau_t < tau_b",
            ));
        }
        // Also rejects NaN.
        if self.xi.is_nan() || self.xi < 0.0 {
            return Err(Error::InvalidParams("xi must be non-negative"));
        }
        if self.eta_min < 1 {
            return Err(Error::InvalidParams("eta_min must be at least 1"));
        }
        if self.n_s < 1 {
            return Err(Error::InvalidParams("n_s must be at least 1"));
        }
        if !(0.0 <= self.kappa_lo && self.kappa_lo <= self.kappa_hi && self.kappa_hi <= 1.0) {
            return Err(Error::InvalidParams(
                "kappa bounds must satisfy 0 <= kappa_lo <= kappa_hi <= 1",
            ));
        }
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(Error::InvalidParams("scale must lie in (0, 1]"));
        }
        if let KappaMode::Fixed(v) = self.kappa {
            if !(self.kappa_lo <= v && v <= self.kappa_hi) {
                return Err(Error::InvalidParams(
                    "fixed kappa must lie in [kappa_lo, kappa_hi]",
                ));
            }
        }
        Ok(())
    }
}

/// Parameters and outcome recorded with a refined bank.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildRecord {
    pub params: IccdParams,
    pub fallback_used: bool,
    pub kappa_c: f32,
}

/// Refined per-class bank, the unit stored on disk and consumed at
/// inference time.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassBank {
    pub class_name: String,
    pub dim: usize,
    /// Ordered by (score desc, source image id asc, patch index asc).
    pub entries: Vec<BankVector>,
    pub record: BuildRecord,
}

impl ClassBank {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks every stored invariant.
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidGrid("bank dimension must be positive"));
        }
        self.record.params.validate()?;
        let p = &self.record.params;
        if self.entries.len() > p.k {
            return Err(Error::InvalidParams("bank holds more than K entries"));
        }
        let kc = self.record.kappa_c;
        if !(p.kappa_lo <= kc && kc <= p.kappa_hi) {
            return Err(Error::InvalidParams("kappa_c outside [kappa_lo, kappa_hi]"));
        }
        for (index, e) in self.entries.iter().enumerate() {
            if e.vector.len() != self.dim {
                return Err(Error::DimMismatch {
                    expected: self.dim,
                    found: e.vector.len(),
                });
            }
            if (norm_f64(&e.vector) - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::UnnormalizedGrid { index });
            }
            if !(-1.0..=1.0).contains(&e.score) {
                return Err(Error::InvalidParams("entry score outside [-1, 1]"));
            }
        }
        Ok(())
    }
}

/// Best match of a vector in a target grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnMatch {
    pub index: u32,
    pub sim: f32,
}

/// Nearest patch of `target` to `v` by dot product; ties go to the smallest
/// flat index.
pub fn nn_match(v: &[f32], target: &FeatureGrid) -> Result<NnMatch> {
    if v.len() != target.dim() {
        return Err(Error::DimMismatch {
            expected: target.dim(),
            found: v.len(),
        });
    }
    let (p, sim) = argmax_dot(v, target.data(), target.dim());
    Ok(NnMatch {
        index: p as u32,
        sim,
    })
}

/// Good/bad tallies over valid targets and the resulting score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coherence {
    pub good: u32,
    pub bad: u32,
    /// `good / (good + bad)` when at least `eta_min` targets are valid,
    /// otherwise [`UNSCORED`].
    pub score: f32,
}

impl Coherence {
    /// Number of valid targets.
    pub fn valid(&self) -> u32 {
        self.good + self.bad
    }
}

/// Cross-image coherence of `v` against held-out targets (which must not
/// include the vector's own image).
pub fn score_coherence<'a>(
    v: &[f32],
    heldout: impl IntoIterator<Item = Target<'a>>,
    params: &IccdParams,
) -> Result<Coherence> {
    let (mut good, mut bad) = (0u32, 0u32);
    for t in heldout {
        let m = nn_match(v, t.grid)?;
        if m.sim >= params.xi {
            if t.foreground.contains(m.index) {
                good += 1;
            } else {
                bad += 1;
            }
        }
    }
    let valid = good + bad;
    let score = if valid >= params.eta_min {
        good as f32 / valid as f32
    } else {
        UNSCORED
    };
    Ok(Coherence { good, bad, score })
}

/// Upper quartile by linear interpolation between closest ranks
/// (`h = 0.75 * (n - 1)`).
pub fn upper_quartile(scores: &[f32]) -> Option<f64> {
    if scores.is_empty() {
        return None;
    }
    let mut s: Vec<f32> = scores.to_vec();
    s.sort_by(f32::total_cmp);
    let h = 0.75 * (s.len() - 1) as f64;
    let lo = libm::floor(h) as usize;
    let frac = h - lo as f64;
    let a = f64::from(s[lo]);
    let b = f64::from(s[(lo + 1).min(s.len() - 1)]);
    Some(a + frac * (b - a))
}

fn clip(x: f64, lo: f32, hi: f32) -> f32 {
    x.min(f64::from(hi)).max(f64::from(lo)) as f32
}

/// Adaptive eligibility threshold `clip(scale * Q75(scores), kappa_lo,
/// kappa_hi)` over scored (non-negative) values.
pub fn adaptive_threshold(scores: &[f32], params: &IccdParams) -> Result<f32> {
    let q = upper_quartile(scores).ok_or(Error::EmptyScoreSet)?;
    Ok(clip(
        f64::from(params.scale) * q,
        params.kappa_lo,
        params.kappa_hi,
    ))
}

fn rank_order(a: &BankVector, b: &BankVector) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then_with(|| a.source_image_id.cmp(&b.source_image_id))
        .then_with(|| a.patch_flat_index.cmp(&b.patch_flat_index))
}

/// Shared threshold / eligibility / top-K step for both scoring paths.
fn refine(
    class_name: &str,
    dim: usize,
    scored: Vec<BankVector>,
    params: &IccdParams,
    fallback_used: bool,
) -> Result<ClassBank> {
    let kept: Vec<f32> = scored
        .iter()
        .map(|v| v.score)
        .filter(|&s| s >= 0.0)
        .collect();
    let kappa_c = match params.kappa {
        KappaMode::Fixed(v) => v,
        // No scored vector: nothing can be eligible; record the ceiling.
        KappaMode::Adaptive if kept.is_empty() => params.kappa_hi,
        KappaMode::Adaptive => adaptive_threshold(&kept, params)?,
    };
    let mut eligible: Vec<BankVector> = scored
        .into_iter()
        .filter(|v| v.score >= 0.0 && v.score >= kappa_c)
        .collect();
    eligible.sort_by(rank_order);
    eligible.truncate(params.k);
    Ok(ClassBank {
        class_name: class_name.to_string(),
        dim,
        entries: eligible,
        record: BuildRecord {
            params: *params,
            fallback_used,
            kappa_c,
        },
    })
}

/// Scores every vector of the first `n_s` images against all other images of
/// the class, in bank iteration order.
pub fn score_candidates(
    raw: &RawBank,
    heldout: &BTreeMap<String, Target<'_>>,
    params: &IccdParams,
) -> Result<Vec<Coherence>> {
    let mut targets: Vec<(&str, Target<'_>)> = Vec::with_capacity(raw.num_images());
    for id in raw.image_ids() {
        let t = heldout
            .get(id)
            .ok_or_else(|| Error::MissingTarget(id.to_string()))?;
        if t.grid.dim() != raw.dim() {
            return Err(Error::DimMismatch {
                expected: raw.dim(),
                found: t.grid.dim(),
            });
        }
        t.grid.require_normalized()?;
        if !t.foreground.fits(t.grid.num_patches()) {
            return Err(Error::IndexOutOfRange {
                index: t.foreground.indices().last().copied().unwrap_or(0) as usize,
                len: t.grid.num_patches(),
            });
        }
        targets.push((id, *t));
    }

    let candidates: Vec<&BankVector> = raw
        .images()
        .take(params.n_s)
        .flat_map(|(_, vs)| vs.iter())
        .collect();

    let score_one = |v: &&BankVector| {
        let others = targets
            .iter()
            .filter(|(id, _)| *id != v.source_image_id)
            .map(|(_, t)| *t);
        score_coherence(&v.vector, others, params)
    };

    #[cfg(feature = "rayon")]
    let scores = candidates.par_iter().map(score_one).collect();
    #[cfg(not(feature = "rayon"))]
    let scores = candidates.iter().map(score_one).collect();
    scores
}

/// Multi-reference distillation: coherence scoring, adaptive threshold and
/// top-K selection. Requires at least two reference images.
pub fn distill(
    raw: &RawBank,
    heldout: &BTreeMap<String, Target<'_>>,
    params: &IccdParams,
) -> Result<ClassBank> {
    params.validate()?;
    if raw.num_images() < 2 {
        return Err(Error::SingleReference);
    }
    let scores = score_candidates(raw, heldout, params)?;
    let scored = raw
        .images()
        .take(params.n_s)
        .flat_map(|(_, vs)| vs.iter())
        .zip(scores)
        .map(|(v, c)| BankVector {
            score: c.score,
            ..v.clone()
        })
        .collect();
    refine(raw.class_name(), raw.dim(), scored, params, false)
}

/// Best cosine of each vector to any *other* vector of the same set,
/// clamped to `[-1, 1]`.
pub fn within_image_scores(vectors: &[BankVector]) -> Vec<f32> {
    let score_one = |i: usize| {
        let v = &vectors[i].vector;
        let best = vectors
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .map(|(_, w)| dot(v, &w.vector))
            .fold(f32::NEG_INFINITY, f32::max);
        best.clamp(-1.0, 1.0)
    };
    #[cfg(feature = "rayon")]
    let scores = (0..vectors.len()).into_par_iter().map(score_one).collect();
    #[cfg(not(feature = "rayon"))]
    let scores = (0..vectors.len()).map(score_one).collect();
    scores
}

/// Single-reference fallback: within-image similarity scoring with the same
/// threshold rule and top-K cap as [`distill`].
pub fn distill_single_reference(raw: &RawBank, params: &IccdParams) -> Result<ClassBank> {
    params.validate()?;
    if raw.num_images() != 1 {
        return Err(Error::NotSingleReference(raw.num_images()));
    }
    let (_, vectors) = raw.images().next().expect("one image");
    if vectors.len() < 2 {
        return Err(Error::TooFewVectors(vectors.len()));
    }
    let scored = vectors
        .iter()
        .zip(within_image_scores(vectors))
        .map(|(v, score)| BankVector { score, ..v.clone() })
        .collect();
    refine(raw.class_name(), raw.dim(), scored, params, true)
}

/// Routes to [`distill`] or [`distill_single_reference`] by reference count.
pub fn distill_auto(
    raw: &RawBank,
    heldout: &BTreeMap<String, Target<'_>>,
    params: &IccdParams,
) -> Result<ClassBank> {
    if raw.num_images() == 1 {
        distill_single_reference(raw, params)
    } else {
        distill(raw, heldout, params)
    }
}
