//! Pixel-level evaluation, synthetic-world runs and parameter sweeps.
//!
//! IoU, precision, recall and F1 pool confusion counts over every
//! (query, class) pair. mIoU pools per class and averages the IoU of the
//! non-degenerate classes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use patchground_core::metrics::mean_iou;
use patchground_core::{
    confusion, AnnotationMask, ClassBank, ConfusionCounts, IccdParams, KappaMode, Metrics,
    TsgParams,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::interchange::{read_mask, FormatError, Result};
use crate::pipeline::{build_class_bank, ground_class, surrogate_mask, LoadedReference};
use crate::synth::World;

/// Pooled scores of one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub iou: f64,
    pub miou: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScores {
    pub class: String,
    pub iou: f64,
    pub precision: f64,
    pub recall: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub pairs: usize,
    pub scores: Scores,
    pub per_class: Vec<ClassScores>,
}

/// Tallies (class, counts) pairs.
pub fn summarize(pairs: &[(String, ConfusionCounts)]) -> Evaluation {
    let mut total = ConfusionCounts::default();
    let mut by_class: BTreeMap<&str, ConfusionCounts> = BTreeMap::new();
    for (class, c) in pairs {
        total = total.merge(*c);
        let e = by_class.entry(class).or_default();
        *e = e.merge(*c);
    }
    let per: Vec<(&str, Metrics)> = by_class.iter().map(|(k, c)| (*k, c.metrics())).collect();
    let m = total.metrics();
    let metrics: Vec<Metrics> = per.iter().map(|(_, m)| *m).collect();
    Evaluation {
        pairs: pairs.len(),
        scores: Scores {
            iou: m.iou,
            miou: mean_iou(&metrics).unwrap_or(0.0),
            f1: m.f1,
            precision: m.precision,
            recall: m.recall,
        },
        per_class: per
            .into_iter()
            .map(|(class, m)| ClassScores {
                class: class.to_string(),
                iou: m.iou,
                precision: m.precision,
                recall: m.recall,
                degenerate: m.degenerate,
            })
            .collect(),
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let io = |source| FormatError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(io)? {
        out.push(e.map_err(io)?.path());
    }
    out.sort();
    Ok(out)
}

/// Compares `pred/<query>/<class>.pgm` against every
/// `gt/<query>/<class>.pgm`. A missing prediction counts as an empty mask.
pub fn evaluate_dirs(pred: &Path, gt: &Path) -> Result<Evaluation> {
    let mut pairs = Vec::new();
    for qdir in sorted_entries(gt)? {
        if !qdir.is_dir() {
            continue;
        }
        let qid = qdir.file_name().expect("entry name");
        for g in sorted_entries(&qdir)? {
            if g.extension().is_none_or(|x| x != "pgm") {
                continue;
            }
            let class = g
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| FormatError::Malformed(format!("bad file name {}", g.display())))?
                .to_string();
            let gt_mask = read_mask(&g)?;
            let p = pred.join(qid).join(g.file_name().expect("entry name"));
            let pred_mask = if p.exists() {
                read_mask(&p)?
            } else {
                AnnotationMask::new(
                    gt_mask.height(),
                    gt_mask.width(),
                    vec![0; gt_mask.height() * gt_mask.width()],
                    class.clone(),
                )?
            };
            pairs.push((class, confusion(&pred_mask, &gt_mask)?));
        }
    }
    Ok(summarize(&pairs))
}

/// One full configuration of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunConfig {
    pub iccd: IccdParams,
    pub tsg: TsgParams,
    /// Prompt validation threshold; `None` ties it to `tsg.tau_l`.
    pub tau_v: Option<f32>,
    /// Use only the first `shots` references of each class.
    pub shots: Option<usize>,
}

impl RunConfig {
    pub fn tau_v(&self) -> f32 {
        self.tau_v.unwrap_or(self.tsg.tau_l)
    }
}

/// Builds one bank per class from the world's references.
pub fn world_banks(world: &World, cfg: &RunConfig) -> Result<Vec<ClassBank>> {
    world
        .class_names
        .iter()
        .map(|class| {
            let refs: Vec<LoadedReference> = world
                .references_of(class)
                .take(cfg.shots.unwrap_or(usize::MAX))
                .map(|r| LoadedReference {
                    id: r.image.id.clone(),
                    grid: r.image.grid.clone(),
                    mask: r.mask.clone(),
                })
                .collect();
            build_class_bank(class, &refs, &cfg.iccd, world.config.patch)
        })
        .collect()
}

/// Grounds every class present in every query, segments with the surrogate
/// and scores against the planted ground truth.
pub fn evaluate_world(world: &World, cfg: &RunConfig) -> Result<Evaluation> {
    let banks = world_banks(world, cfg)?;
    let size = world.image_size();
    let per_query: Vec<Result<Vec<(String, ConfusionCounts)>>> = world
        .queries
        .par_iter()
        .map(|q| {
            q.classes()
                .into_iter()
                .map(|class| {
                    let bank = banks
                        .iter()
                        .find(|b| b.class_name == class)
                        .expect("bank per class");
                    let out = ground_class(&q.grid, bank, &cfg.tsg, cfg.tau_v(), size, size)?;
                    let pred = surrogate_mask(&out, &class);
                    let gt = q.mask(&class, world.config.patch);
                    Ok((class, confusion(&pred, &gt)?))
                })
                .collect()
        })
        .collect();
    let mut pairs = Vec::new();
    for r in per_query {
        pairs.extend(r?);
    }
    Ok(summarize(&pairs))
}

/// Instance-level hit rates on a synthetic world.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct InstanceReport {
    pub instances: usize,
    /// Instances with at least one validated prompt inside their region.
    pub hit: usize,
    pub queries: usize,
    /// Queries whose primary class yields exactly one surviving component
    /// per planted instance.
    pub exact_components: usize,
}

pub fn instance_report(world: &World, cfg: &RunConfig) -> Result<InstanceReport> {
    let banks = world_banks(world, cfg)?;
    let size = world.image_size();
    let patch = world.config.patch;
    let per_query: Vec<Result<(usize, usize, bool)>> = world
        .queries
        .par_iter()
        .map(|q| {
            let mut counts: Vec<(usize, String)> = q
                .classes()
                .into_iter()
                .map(|c| (q.instances_of(&c).count(), c))
                .collect();
            // Most instances first; ties by name.
            counts.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
            let (mut total, mut hit, mut exact) = (0, 0, false);
            for (n, class) in &counts {
                let bank = banks
                    .iter()
                    .find(|b| &b.class_name == class)
                    .expect("bank per class");
                let out = ground_class(&q.grid, bank, &cfg.tsg, cfg.tau_v(), size, size)?;
                for inst in q.instances_of(class) {
                    total += 1;
                    if out
                        .validated
                        .prompts
                        .iter()
                        .any(|p| inst.contains_pixel(patch, p.x, p.y))
                    {
                        hit += 1;
                    }
                }
                if class == &counts[0].1 {
                    let found = out.grounding.as_ref().map_or(0, |g| g.components.len());
                    exact = found == *n;
                }
            }
            Ok((total, hit, exact))
        })
        .collect();
    let mut r = InstanceReport {
        instances: 0,
        hit: 0,
        queries: 0,
        exact_components: 0,
    };
    for q in per_query {
        let (t, h, e) = q?;
        r.instances += t;
        r.hit += h;
        r.queries += 1;
        r.exact_components += usize::from(e);
    }
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    TauL,
    EtaCc,
    Delta,
    Shots,
    Kappa,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::TauL => "tau_l",
            SweepParam::EtaCc => "eta_cc",
            SweepParam::Delta => "delta",
            SweepParam::Shots => "shots",
            SweepParam::Kappa => "kappa",
        }
    }

    /// Applies one sweep value given as text. `kappa` takes `adaptive` or a
    /// number.
    pub fn apply(self, base: &RunConfig, value: &str) -> std::result::Result<RunConfig, String> {
        let mut cfg = *base;
        let bad = |e: &dyn std::fmt::Display| format!("{}: bad value '{value}': {e}", self.name());
        match self {
            SweepParam::TauL => cfg.tsg.tau_l = value.parse().map_err(|e| bad(&e))?,
            SweepParam::EtaCc => cfg.tsg.eta_cc = value.parse().map_err(|e| bad(&e))?,
            SweepParam::Delta => cfg.tsg.delta = value.parse().map_err(|e| bad(&e))?,
            SweepParam::Shots => cfg.shots = Some(value.parse().map_err(|e| bad(&e))?),
            SweepParam::Kappa => {
                cfg.iccd.kappa = if value == "adaptive" {
                    KappaMode::Adaptive
                } else {
                    KappaMode::Fixed(value.parse().map_err(|e| bad(&e))?)
                }
            }
        }
        Ok(cfg)
    }
}

impl std::str::FromStr for SweepParam {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Ok(match s {
            "tau-l" | "tau_l" => SweepParam::TauL,
            "eta-cc" | "eta_cc" => SweepParam::EtaCc,
            "delta" => SweepParam::Delta,
            "shots" => SweepParam::Shots,
            "kappa" => SweepParam::Kappa,
            _ => return Err(format!("unknown sweep parameter '{s}'")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub setting: String,
    pub scores: Scores,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub parameter: String,
    pub rows: Vec<SweepRow>,
}

/// Runs every sweep point; rows follow the order of `values`.
pub fn sweep(
    world: &World,
    base: &RunConfig,
    param: SweepParam,
    values: &[String],
) -> std::result::Result<SweepReport, String> {
    let configs = values
        .iter()
        .map(|v| param.apply(base, v))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let rows = values
        .par_iter()
        .zip(configs.par_iter())
        .map(|(v, cfg)| {
            evaluate_world(world, cfg)
                .map(|e| SweepRow {
                    setting: format!("{}={v}", param.name()),
                    scores: e.scores,
                })
                .map_err(|e| e.to_string())
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(SweepReport {
        parameter: param.name().to_string(),
        rows,
    })
}

/// Aligned text table with three decimals.
pub fn format_table(rows: &[(String, Scores)]) -> String {
    let width = rows
        .iter()
        .map(|(s, _)| s.len())
        .chain(["setting".len()])
        .max()
        .unwrap_or(0);
    let mut out = format!(
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>9}  {:>6}\n",
        "setting", "IoU", "mIoU", "F1", "Precision", "Recall"
    );
    for (s, m) in rows {
        let _ = writeln!(
            out,
            "{s:<width$}  {:>6.3}  {:>6.3}  {:>6.3}  {:>9.3}  {:>6.3}",
            m.iou, m.miou, m.f1, m.precision, m.recall
        );
    }
    out
}

impl SweepReport {
    pub fn table(&self) -> String {
        let rows: Vec<_> = self
            .rows
            .iter()
            .map(|r| (r.setting.clone(), r.scores))
            .collect();
        format_table(&rows)
    }
}
