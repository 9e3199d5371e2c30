//! One randomized fixture per seed, checked op by op against the oracles.

#![allow(dead_code)]

use std::collections::BTreeMap;

use patchground_core::tsg::PatchMask;
use patchground_core::{
    align_mask, build_raw_bank, confusion, connected_components, distill, distill_single_reference,
    extract_peaks, nn_match, score_coherence, similarity_map, AnnotationMask, BankVector,
    BuildRecord, ClassBank, FeatureGrid, IccdParams, PatchIndexSet, Reference, Target,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle::{self, OracleImage};

pub const TOL: f64 = 1e-6;

/// Operations covered by [`check_fixture`], in report order.
pub const OPS: [&str; 9] = [
    "nn_match",
    "score_coherence",
    "distill",
    "distill_single_reference",
    "similarity_map",
    "connected_components",
    "extract_peaks",
    "confusion",
    "align_mask",
];

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() < TOL
}

fn fail<T>(op: &str, seed: u64, what: String) -> Result<T, String> {
    Err(format!("{op} (seed {seed}): {what}"))
}

fn bank_of(vectors: &[Vec<f32>]) -> ClassBank {
    ClassBank {
        class_name: "c".into(),
        dim: vectors[0].len(),
        entries: vectors
            .iter()
            .enumerate()
            .map(|(k, v)| BankVector {
                vector: v.clone(),
                source_image_id: "b".into(),
                patch_flat_index: k as u32,
                score: 1.0,
            })
            .collect(),
        record: BuildRecord {
            params: IccdParams::default(),
            fallback_used: false,
            kappa_c: 0.82,
        },
    }
}

fn entries(bank: &ClassBank) -> Vec<(String, u32, f32)> {
    bank.entries
        .iter()
        .map(|e| (e.source_image_id.clone(), e.patch_flat_index, e.score))
        .collect()
}

fn same_entries(a: &[(String, u32, f32)], b: &[(String, u32, f32)]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.0 == y.0 && x.1 == y.1 && close(f64::from(x.2), f64::from(y.2)))
}

/// Builds fixture `seed` and compares every op with its oracle. Returns
/// the names of the ops checked.
pub fn check_fixture(seed: u64) -> Result<Vec<&'static str>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = rng.random_range(3..=20);
    let w = rng.random_range(3..=20);
    let dim = rng.random_range(2..=16);
    let mut done = Vec::new();

    // nn_match
    let grid = oracle::random_grid(&mut rng, h, w, dim);
    let v = oracle::unit_vector(&mut rng, dim);
    let m = nn_match(&v, &grid).map_err(|e| e.to_string())?;
    let (p, s) = oracle::nn(&v, &grid);
    if m.index != p || !close(f64::from(m.sim), s) {
        return fail("nn_match", seed, format!("{m:?} vs ({p}, {s})"));
    }
    done.push("nn_match");

    // Class images for coherence and distillation.
    let dir = oracle::unit_vector(&mut rng, dim);
    let n_img = rng.random_range(2..=6);
    let noise = rng.random_range(0.05..0.6);
    let mut images: Vec<OracleImage> = (0..n_img)
        .map(|k| {
            let (g, fg) = oracle::planted_image(&mut rng, h, w, &dir, noise);
            let mut target_fg = fg.clone();
            for extra in oracle::random_subset(&mut rng, h * w, 0.05) {
                if !target_fg.contains(&extra) {
                    target_fg.push(extra);
                }
            }
            target_fg.sort_unstable();
            OracleImage {
                id: format!("img{:02}", (k * 7 + seed as usize) % 97),
                grid: g,
                bank_fg: fg,
                target_fg,
            }
        })
        .collect();
    images.sort_by(|a, b| a.id.cmp(&b.id));
    images.dedup_by(|a, b| a.id == b.id);

    let params = IccdParams {
        xi: if rng.random_bool(0.5) {
            0.0
        } else {
            rng.random_range(0.0..0.5)
        },
        eta_min: rng.random_range(1..=3),
        n_s: rng.random_range(1..=6),
        k: rng.random_range(1..=64),
        ..IccdParams::default()
    };
    let bank_sets: Vec<PatchIndexSet> = images
        .iter()
        .map(|i| PatchIndexSet::new(i.bank_fg.clone(), h * w).unwrap())
        .collect();
    let target_sets: Vec<PatchIndexSet> = images
        .iter()
        .map(|i| PatchIndexSet::new(i.target_fg.clone(), h * w).unwrap())
        .collect();

    // score_coherence for the first vector of the first image.
    let q = images[0].bank_fg[0] as usize;
    let v0 = oracle::row(&images[0].grid, q).to_vec();
    let held: Vec<Target<'_>> = images
        .iter()
        .zip(&target_sets)
        .skip(1)
        .map(|(i, f)| Target {
            grid: &i.grid,
            foreground: f,
        })
        .collect();
    let c = score_coherence(&v0, held.iter().copied(), &params).map_err(|e| e.to_string())?;
    let oracle_targets: Vec<(&FeatureGrid, &[u32])> = images
        .iter()
        .skip(1)
        .map(|i| (&i.grid, i.target_fg.as_slice()))
        .collect();
    let (g, b, sc) = oracle::coherence(&v0, &oracle_targets, params.xi, params.eta_min);
    if (c.good, c.bad) != (g, b) || c.score != sc {
        return fail(
            "score_coherence",
            seed,
            format!("{c:?} vs ({g}, {b}, {sc})"),
        );
    }
    done.push("score_coherence");

    // distill
    if images.len() >= 2 {
        let raw = build_raw_bank(
            "c",
            images.iter().zip(&bank_sets).map(|(i, f)| Reference {
                id: &i.id,
                grid: &i.grid,
                foreground: f,
            }),
        )
        .map_err(|e| e.to_string())?;
        let heldout: BTreeMap<String, Target<'_>> = images
            .iter()
            .zip(&target_sets)
            .map(|(i, f)| {
                (
                    i.id.clone(),
                    Target {
                        grid: &i.grid,
                        foreground: f,
                    },
                )
            })
            .collect();
        let bank = distill(&raw, &heldout, &params).map_err(|e| e.to_string())?;
        let (want, kappa) = oracle::distill(&images, &params);
        if !same_entries(&entries(&bank), &want)
            || !close(f64::from(bank.record.kappa_c), f64::from(kappa))
        {
            return fail(
                "distill",
                seed,
                format!(
                    "{:?} / {} vs {want:?} / {kappa}",
                    entries(&bank),
                    bank.record.kappa_c
                ),
            );
        }
        done.push("distill");
    }

    // distill_single_reference on a widened foreground.
    let mut single = OracleImage {
        id: "solo".into(),
        grid: images[0].grid.clone(),
        bank_fg: images[0].bank_fg.clone(),
        target_fg: Vec::new(),
    };
    for extra in oracle::random_subset(&mut rng, h * w, 0.1) {
        if !single.bank_fg.contains(&extra) {
            single.bank_fg.push(extra);
        }
    }
    single.bank_fg.sort_unstable();
    if single.bank_fg.len() < 2 {
        single.bank_fg = vec![0, 1];
    }
    let set = PatchIndexSet::new(single.bank_fg.clone(), h * w).unwrap();
    let raw = build_raw_bank(
        "c",
        [Reference {
            id: "solo",
            grid: &single.grid,
            foreground: &set,
        }],
    )
    .map_err(|e| e.to_string())?;
    let bank = distill_single_reference(&raw, &params).map_err(|e| e.to_string())?;
    let (want, kappa) = oracle::distill_single(&single, &params);
    if !same_entries(&entries(&bank), &want)
        || !close(f64::from(bank.record.kappa_c), f64::from(kappa))
    {
        return fail(
            "distill_single_reference",
            seed,
            format!("{:?} vs {want:?}", entries(&bank)),
        );
    }
    done.push("distill_single_reference");

    // similarity_map on a planted query against a bank of <= 64 vectors.
    let (query, _) = oracle::planted_image(&mut rng, h, w, &dir, noise);
    let nb = rng.random_range(1..=64);
    let vectors: Vec<Vec<f32>> = (0..nb)
        .map(|_| {
            if rng.random_bool(0.7) {
                oracle::near(&mut rng, &dir, noise)
            } else {
                oracle::unit_vector(&mut rng, dim)
            }
        })
        .collect();
    let map = similarity_map(&query, &bank_of(&vectors)).map_err(|e| e.to_string())?;
    let want = oracle::similarity(&query, &vectors);
    if let Some(k) = (0..want.len()).find(|&k| !close(f64::from(map.values[k]), want[k])) {
        return fail(
            "similarity_map",
            seed,
            format!("patch {k}: {} vs {}", map.values[k], want[k]),
        );
    }
    done.push("similarity_map");

    // connected_components on a random mask.
    let density = rng.random_range(0.2..0.7);
    let bits: Vec<bool> = (0..h * w).map(|_| rng.random_bool(density)).collect();
    let eta = rng.random_range(1..=5);
    let mask = PatchMask {
        grid_h: h,
        grid_w: w,
        bits: bits.clone(),
    };
    let got: Vec<Vec<(u32, u32)>> = connected_components(&mask, eta)
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            assert_eq!(c.id as usize, k);
            c.patches
        })
        .collect();
    let want = oracle::components(&bits, h, w, eta);
    if got != want {
        return fail("connected_components", seed, format!("{got:?} vs {want:?}"));
    }
    done.push("connected_components");

    // extract_peaks on the landscape's components.
    let mut sorted = map.values.clone();
    sorted.sort_by(f32::total_cmp);
    let tau = sorted[sorted.len() / 2];
    let loose = PatchMask {
        grid_h: h,
        grid_w: w,
        bits: map.values.iter().map(|&s| s >= tau).collect(),
    };
    let delta = rng.random_range(1..=5);
    for comp in connected_components(&loose, 1) {
        let got: Vec<(u32, u32, f32)> = extract_peaks(&map, &comp, delta)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|p| (p.i, p.j, p.score))
            .collect();
        let want = oracle::peaks(&map.values, w, &comp.patches, delta);
        if got != want {
            return fail("extract_peaks", seed, format!("{got:?} vs {want:?}"));
        }
    }
    done.push("extract_peaks");

    // confusion on random masks.
    let (mh, mw) = (rng.random_range(1..=40), rng.random_range(1..=40));
    let a = AnnotationMask::new(
        mh,
        mw,
        (0..mh * mw).map(|_| rng.random_range(0..=1)).collect(),
        String::new(),
    )
    .unwrap();
    let b = AnnotationMask::new(
        mh,
        mw,
        (0..mh * mw).map(|_| rng.random_range(0..=1)).collect(),
        String::new(),
    )
    .unwrap();
    let c = confusion(&a, &b).map_err(|e| e.to_string())?;
    if [c.tp, c.fp, c.fn_, c.tn] != oracle::confusion(&a, &b) {
        return fail("confusion", seed, format!("{c:?}"));
    }
    done.push("confusion");

    // align_mask on an irregular mask.
    let patch = rng.random_range(1..=6);
    let cov = align_mask(&a, h, w, patch).map_err(|e| e.to_string())?;
    let want = oracle::align(&a, h, w, patch);
    if cov.values() != want.as_slice() {
        return fail("align_mask", seed, "coverage differs".into());
    }
    done.push("align_mask");

    Ok(done)
}
