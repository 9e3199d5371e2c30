//! End-to-end glue: references on disk to a class bank, a query plus a bank
//! to a payload, and a payload to a pixel mask.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{info, warn};
use patchground_core::bank::distill_auto;
use patchground_core::tsg::SimilarityMap;
use patchground_core::{
    align_mask, build_payload, build_raw_bank, ground, l2_normalize, select_foreground,
    validate_prompts, AnnotationMask, ClassBank, ClassName, FeatureGrid, Grounding,
    GroundingPayload, IccdParams, PatchIndexSet, PromptSet, Reference, Target, TsgParams,
};

use crate::interchange::{read_feature_grid, read_mask, FormatError, Result};

/// Default patch side in pixels for ViT-style backbones.
pub const DEFAULT_PATCH: usize = 16;

#[derive(Debug, Clone)]
pub struct LoadedReference {
    pub id: String,
    pub grid: FeatureGrid,
    pub mask: AnnotationMask,
}

/// Loads every `<id>.srfg` in `refs_dir` with its `<id>.pgm` from
/// `masks_dir`, sorted by id.
pub fn load_references(refs_dir: &Path, masks_dir: &Path) -> Result<Vec<LoadedReference>> {
    let entries = std::fs::read_dir(refs_dir).map_err(|source| FormatError::Io {
        path: refs_dir.to_path_buf(),
        source,
    })?;
    let mut grids: Vec<PathBuf> = Vec::new();
    for e in entries {
        let e = e.map_err(|source| FormatError::Io {
            path: refs_dir.to_path_buf(),
            source,
        })?;
        let p = e.path();
        if p.extension().is_some_and(|x| x == "srfg") {
            grids.push(p);
        }
    }
    grids.sort();
    grids
        .into_iter()
        .map(|p| {
            let id = p
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| FormatError::Malformed(format!("bad file name {}", p.display())))?
                .to_string();
            let grid = read_feature_grid(&p)?;
            let mask = read_mask(&masks_dir.join(format!("{id}.pgm")))?;
            Ok(LoadedReference { id, grid, mask })
        })
        .collect()
}

fn normalized(grid: &FeatureGrid) -> Result<FeatureGrid> {
    if grid.is_normalized() {
        Ok(grid.clone())
    } else {
        Ok(l2_normalize(grid)?)
    }
}

/// Aligns each mask to its grid, harvests patches with coverage above
/// `tau_b`, and distills the bank against targets at `tau_t`. A single
/// reference routes to within-image scoring.
pub fn build_class_bank(
    class: &str,
    refs: &[LoadedReference],
    params: &IccdParams,
    patch: usize,
) -> Result<ClassBank> {
    params.validate()?;
    let mut grids = Vec::with_capacity(refs.len());
    let mut banked = Vec::with_capacity(refs.len());
    let mut targets = Vec::with_capacity(refs.len());
    for r in refs {
        let g = normalized(&r.grid)?;
        let cov = align_mask(&r.mask, g.grid_h(), g.grid_w(), patch)?;
        banked.push(select_foreground(&cov, params.tau_b));
        targets.push(select_foreground(&cov, params.tau_t));
        grids.push(g);
    }
    let raw = build_raw_bank(
        class,
        refs.iter()
            .zip(&grids)
            .zip(&banked)
            .map(|((r, g), f)| Reference {
                id: &r.id,
                grid: g,
                foreground: f,
            }),
    )?;
    let heldout: BTreeMap<String, Target<'_>> = refs
        .iter()
        .zip(&grids)
        .zip(&targets)
        .map(
            |((r, g), f): ((&LoadedReference, &FeatureGrid), &PatchIndexSet)| {
                (
                    r.id.clone(),
                    Target {
                        grid: g,
                        foreground: f,
                    },
                )
            },
        )
        .collect();
    let bank = distill_auto(&raw, &heldout, params)?;
    if bank.is_empty() {
        warn!(
            "class '{class}': bank is empty after distillation (kappa_c = {}); grounding will be text-only",
            bank.record.kappa_c
        );
    } else {
        info!(
            "class '{class}': {} of {} raw vectors kept, kappa_c = {}{}",
            bank.len(),
            raw.len(),
            bank.record.kappa_c,
            if bank.record.fallback_used {
                " (single-reference fallback)"
            } else {
                ""
            }
        );
    }
    Ok(bank)
}

/// Result of grounding one class in one query.
#[derive(Debug, Clone)]
pub struct GroundOutcome {
    /// `None` when the bank was empty and no landscape was computed.
    pub grounding: Option<Grounding>,
    pub validated: PromptSet,
    pub payload: GroundingPayload,
}

/// Grounds `bank` in `query` and assembles the payload. An empty bank
/// yields a text-only payload.
pub fn ground_class(
    query: &FeatureGrid,
    bank: &ClassBank,
    tsg: &TsgParams,
    tau_v: f32,
    image_w: u32,
    image_h: u32,
) -> Result<GroundOutcome> {
    let name = ClassName::new(&bank.class_name)?;
    let query = normalized(query)?;
    let (grounding, validated) = if bank.is_empty() {
        tsg.validate()?;
        let empty = PromptSet {
            prompts: Vec::new(),
            image_w,
            image_h,
        };
        (None, validate_prompts(&empty, tau_v)?)
    } else {
        let g = ground(&query, bank, tsg, image_w, image_h)?;
        let v = validate_prompts(&g.prompts, tau_v)?;
        (Some(g), v)
    };
    let payload = build_payload(&name, &validated, image_w, image_h)?;
    payload.validate()?;
    if payload.degraded_to_text_only {
        warn!(
            "class '{}': no validated points, text-only payload",
            bank.class_name
        );
    }
    Ok(GroundOutcome {
        grounding,
        validated,
        payload,
    })
}

/// Stand-in for the promptable segmenter: the union of the surviving
/// components that contain a validated prompt, upsampled to pixels. A
/// text-only outcome gives an empty mask.
pub fn surrogate_mask(outcome: &GroundOutcome, class: &str) -> AnnotationMask {
    let (w, h) = (
        outcome.payload.image_w as usize,
        outcome.payload.image_h as usize,
    );
    let mut data = vec![0u8; w * h];
    if let Some(g) = &outcome.grounding {
        let (gh, gw) = (g.map.grid_h, g.map.grid_w);
        let mut chosen = vec![false; gh * gw];
        for c in &g.components {
            let hit = outcome.validated.prompts.iter().any(|p| {
                let i = ((p.y * gh as f64 / h as f64) as usize).min(gh - 1);
                let j = ((p.x * gw as f64 / w as f64) as usize).min(gw - 1);
                c.patches
                    .iter()
                    .any(|&(a, b)| (a as usize, b as usize) == (i, j))
            });
            if hit {
                for &(a, b) in &c.patches {
                    chosen[a as usize * gw + b as usize] = true;
                }
            }
        }
        for y in 0..h {
            let i = y * gh / h;
            for x in 0..w {
                data[y * w + x] = u8::from(chosen[i * gw + x * gw / w]);
            }
        }
    }
    AnnotationMask::new(h, w, data, class.to_string()).expect("binary mask")
}

/// 8-bit rendering of a similarity landscape, one pixel per patch, mapping
/// `[tau_l - 0.2, 1]` linearly onto `[0, 255]`.
pub fn render_landscape(map: &SimilarityMap, tau_l: f32) -> Vec<u8> {
    let lo = f64::from(tau_l) - 0.2;
    map.values
        .iter()
        .map(|&s| {
            let t = ((f64::from(s) - lo) / (1.0 - lo)).clamp(0.0, 1.0);
            (t * 255.0).round() as u8
        })
        .collect()
}
