//! Property checks over generated inputs, each run for [`CASES`] cases with
//! a deterministic RNG.

#![allow(dead_code)]

use std::collections::BTreeMap;

use patchground_core::tsg::PatchMask;
use patchground_core::{
    adaptive_threshold, build_payload, build_raw_bank, connected_components, distill,
    extract_peaks, ground, loose_mask, score_coherence, select_foreground, validate_prompts,
    BankVector, BuildRecord, ClassBank, ClassName, IccdParams, PatchCoverage, PatchIndexSet,
    Reference, Target, TsgParams,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::oracle;

pub const CASES: u32 = 1000;

fn run<S: Strategy>(
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<u32, String> {
    let config = Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner =
        TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())?;
    Ok(CASES)
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if cond {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

fn err(e: impl std::fmt::Display) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

struct ClassFixture {
    images: Vec<oracle::OracleImage>,
    h: usize,
    w: usize,
}

fn class_fixture(seed: u64) -> ClassFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = rng.random_range(3..=8);
    let w = rng.random_range(3..=8);
    let dim = rng.random_range(2..=8);
    let dir = oracle::unit_vector(&mut rng, dim);
    let noise = rng.random_range(0.05..0.8);
    let n = rng.random_range(2..=5);
    let images = (0..n)
        .map(|k| {
            let (grid, fg) = oracle::planted_image(&mut rng, h, w, &dir, noise);
            oracle::OracleImage {
                id: format!("r{k}"),
                grid,
                target_fg: fg.clone(),
                bank_fg: fg,
            }
        })
        .collect();
    ClassFixture { images, h, w }
}

fn distilled(f: &ClassFixture, params: &IccdParams) -> Result<(ClassBank, usize), TestCaseError> {
    let n = f.h * f.w;
    let sets: Vec<PatchIndexSet> = f
        .images
        .iter()
        .map(|i| PatchIndexSet::new(i.bank_fg.clone(), n).unwrap())
        .collect();
    let raw = build_raw_bank(
        "c",
        f.images.iter().zip(&sets).map(|(i, s)| Reference {
            id: &i.id,
            grid: &i.grid,
            foreground: s,
        }),
    )
    .map_err(err)?;
    let heldout: BTreeMap<String, Target<'_>> = f
        .images
        .iter()
        .zip(&sets)
        .map(|(i, s)| {
            (
                i.id.clone(),
                Target {
                    grid: &i.grid,
                    foreground: s,
                },
            )
        })
        .collect();
    let candidates = raw.images().take(params.n_s).map(|(_, v)| v.len()).sum();
    Ok((distill(&raw, &heldout, params).map_err(err)?, candidates))
}

/// Adaptive threshold stays within the clip range for any score set.
pub fn kappa_in_range() -> Result<u32, String> {
    run(prop::collection::vec(0.0f32..=1.0, 1..64), |scores| {
        let p = IccdParams::default();
        let k = adaptive_threshold(&scores, &p).map_err(err)?;
        check((0.65..=0.82).contains(&k), || format!("kappa {k}"))
    })
}

/// Distilled banks respect the cap, the threshold and the clip range.
pub fn bank_bounded() -> Result<u32, String> {
    run((any::<u64>(), 1usize..40, 1usize..6), |(seed, k, n_s)| {
        let f = class_fixture(seed);
        let params = IccdParams {
            k,
            n_s,
            eta_min: 1,
            ..IccdParams::default()
        };
        let (bank, candidates) = distilled(&f, &params)?;
        let kc = bank.record.kappa_c;
        check((0.65..=0.82).contains(&kc), || format!("kappa_c {kc}"))?;
        check(bank.len() <= k && bank.len() <= candidates, || {
            format!("{} entries, k = {k}, candidates = {candidates}", bank.len())
        })?;
        check(bank.entries.iter().all(|e| e.score >= kc), || {
            "entry below kappa_c".into()
        })
    })
}

/// `good + bad` equals the number of targets whose best match clears xi.
pub fn accounting_identity() -> Result<u32, String> {
    run((any::<u64>(), 0.0f32..0.9), |(seed, xi)| {
        let f = class_fixture(seed);
        let sets: Vec<PatchIndexSet> = f
            .images
            .iter()
            .map(|i| PatchIndexSet::new(i.target_fg.clone(), f.h * f.w).unwrap())
            .collect();
        let v = oracle::row(&f.images[0].grid, f.images[0].bank_fg[0] as usize);
        let params = IccdParams {
            xi,
            ..IccdParams::default()
        };
        let targets = f.images.iter().zip(&sets).skip(1).map(|(i, s)| Target {
            grid: &i.grid,
            foreground: s,
        });
        let c = score_coherence(v, targets, &params).map_err(err)?;
        let valid = f.images[1..]
            .iter()
            .filter(|i| oracle::nn(v, &i.grid).1 >= f64::from(xi))
            .count() as u32;
        check(c.good + c.bad == valid, || format!("{c:?} vs {valid}"))
    })
}

fn landscape_case(seed: u64) -> (patchground_core::FeatureGrid, ClassBank) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = rng.random_range(3..=16);
    let w = rng.random_range(3..=16);
    let dim = rng.random_range(2..=8);
    let dir = oracle::unit_vector(&mut rng, dim);
    let noise = rng.random_range(0.05..0.8);
    let (query, _) = oracle::planted_image(&mut rng, h, w, &dir, noise);
    let n = rng.random_range(1..=16);
    let entries = (0..n)
        .map(|k| BankVector {
            vector: oracle::near(&mut rng, &dir, noise),
            source_image_id: "r".into(),
            patch_flat_index: k,
            score: 1.0,
        })
        .collect();
    let bank = ClassBank {
        class_name: "c".into(),
        dim,
        entries,
        record: BuildRecord {
            params: IccdParams::default(),
            fallback_used: false,
            kappa_c: 0.82,
        },
    };
    (query, bank)
}

fn tsg_strategy() -> impl Strategy<Value = (u64, f32, usize, usize)> {
    (any::<u64>(), 0.05f32..0.95, 1usize..6, 1usize..6)
}

/// Every prompt score is at least tau_l.
pub fn prompts_above_tau_l() -> Result<u32, String> {
    run(tsg_strategy(), |(seed, tau_l, eta_cc, delta)| {
        let (q, bank) = landscape_case(seed);
        let p = TsgParams {
            tau_l,
            eta_cc,
            delta,
            b_max: None,
        };
        let g = ground(&q, &bank, &p, 1536, 1536).map_err(err)?;
        check(g.prompts.prompts.iter().all(|x| x.score >= tau_l), || {
            "prompt below tau_l".into()
        })
    })
}

/// Every surviving component yields at least one peak, all inside it.
pub fn component_has_peak() -> Result<u32, String> {
    run(tsg_strategy(), |(seed, tau_l, eta_cc, delta)| {
        let (q, bank) = landscape_case(seed);
        let map = patchground_core::similarity_map(&q, &bank).map_err(err)?;
        for c in connected_components(&loose_mask(&map, tau_l), eta_cc) {
            let peaks = extract_peaks(&map, &c, delta).map_err(err)?;
            check(!peaks.is_empty(), || {
                format!("component {} has no peak", c.id)
            })?;
            check(
                peaks.iter().all(|p| c.patches.contains(&(p.i, p.j))),
                || "peak outside component".into(),
            )?;
        }
        Ok(())
    })
}

/// Kept peaks of one component are more than delta apart.
pub fn peaks_separated() -> Result<u32, String> {
    run(tsg_strategy(), |(seed, tau_l, eta_cc, delta)| {
        let (q, bank) = landscape_case(seed);
        let map = patchground_core::similarity_map(&q, &bank).map_err(err)?;
        for c in connected_components(&loose_mask(&map, tau_l), eta_cc) {
            let peaks = extract_peaks(&map, &c, delta).map_err(err)?;
            for a in 0..peaks.len() {
                for b in a + 1..peaks.len() {
                    let di = f64::from(peaks[a].i) - f64::from(peaks[b].i);
                    let dj = f64::from(peaks[a].j) - f64::from(peaks[b].j);
                    check((di * di + dj * dj).sqrt() > delta as f64, || {
                        format!("{:?} and {:?} within {delta}", peaks[a], peaks[b])
                    })?;
                }
            }
        }
        Ok(())
    })
}

/// The text-only flag is set exactly when no point survives validation.
pub fn degraded_iff_empty() -> Result<u32, String> {
    run(
        (tsg_strategy(), 0.05f32..0.99),
        |((seed, tau_l, eta_cc, delta), tau_v)| {
            let (q, bank) = landscape_case(seed);
            let p = TsgParams {
                tau_l,
                eta_cc,
                delta,
                b_max: None,
            };
            let g = ground(&q, &bank, &p, 640, 480).map_err(err)?;
            let v = validate_prompts(&g.prompts, tau_v).map_err(err)?;
            let name = ClassName::new("bean_leaf").map_err(err)?;
            let payload = build_payload(&name, &v, 640, 480).map_err(err)?;
            payload.validate().map_err(err)?;
            check(
                payload.degraded_to_text_only == payload.points.is_empty(),
                || "flag disagrees with points".into(),
            )?;
            check(
                payload
                    .points
                    .iter()
                    .all(|p| p.x_norm > 0.0 && p.x_norm < 1.0 && p.y_norm > 0.0 && p.y_norm < 1.0),
                || "point on the border".into(),
            )
        },
    )
}

/// Raising a threshold only removes members, for both masks.
pub fn threshold_monotone() -> Result<u32, String> {
    let values = prop::collection::vec(-1.0f32..=1.0, 1..400);
    run((values, -1.0f32..=1.0, -1.0f32..=1.0), |(values, a, b)| {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let n = values.len();
        let map = patchground_core::SimilarityMap {
            grid_h: 1,
            grid_w: n,
            values: values.clone(),
        };
        let (ml, mh): (PatchMask, PatchMask) = (loose_mask(&map, lo), loose_mask(&map, hi));
        check((0..n).all(|k| !mh.bits[k] || ml.bits[k]), || {
            "loose mask grew".into()
        })?;
        let cov =
            PatchCoverage::new(1, n, values.iter().map(|v| v.abs()).collect()).map_err(err)?;
        let (fl, fh) = (
            select_foreground(&cov, lo.abs().min(hi.abs())),
            select_foreground(&cov, lo.abs().max(hi.abs())),
        );
        check(fh.indices().iter().all(|&p| fl.contains(p)), || {
            "foreground grew".into()
        })
    })
}

pub type Check = fn() -> Result<u32, String>;

/// All invariant checks with their names.
pub fn all() -> Vec<(&'static str, Check)> {
    vec![
        ("kappa_c within [0.65, 0.82]", kappa_in_range as Check),
        ("bank size <= K and scores >= kappa_c", bank_bounded),
        ("good + bad = valid targets", accounting_identity),
        ("prompt scores >= tau_l", prompts_above_tau_l),
        ("every component yields a peak", component_has_peak),
        ("kept peaks more than delta apart", peaks_separated),
        ("degraded flag iff no points", degraded_iff_empty),
        ("loose mask / foreground monotone", threshold_monotone),
    ]
}
