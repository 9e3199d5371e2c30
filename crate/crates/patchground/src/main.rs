use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use patchground::eval::{evaluate_dirs, format_table, sweep, RunConfig, SweepParam};
use patchground::interchange::{
    encode_gray, read_bank, read_feature_grid, write_bank, write_file, write_mask,
    write_payload_file, FormatError,
};
use patchground::pipeline::{
    build_class_bank, ground_class, load_references, render_landscape, surrogate_mask,
    DEFAULT_PATCH,
};
use patchground::synth::{generate, SynthConfig, World};
use patchground_core::{IccdParams, KappaMode, TsgParams};

/// Training-free prototype banks and point-prompt grounding over
/// precomputed patch feature grids.
///
/// Exit status: 0 on success (including text-only degradation), 1 on a
/// validation failure, 2 on an I/O failure.
#[derive(Parser)]
#[command(name = "patchground", version)]
struct Cli {
    /// Worker threads for parallel stages (default: all cores). Output does
    /// not depend on this value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic world of feature grids, masks and ground truth.
    Synth(SynthArgs),
    /// Distill a class bank from reference grids and masks.
    BuildBank(BuildBankArgs),
    /// Ground a class bank in a query grid and write the point payload.
    Ground(GroundArgs),
    /// Score predicted masks against ground-truth masks.
    Eval(EvalArgs),
    /// Evaluate a synthetic world over a range of one parameter.
    Sweep(SweepArgs),
    /// Render the similarity landscape of a query as an 8-bit PGM.
    Render(RenderArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    classes: usize,
    /// References per class.
    #[arg(long, default_value_t = 10)]
    refs: usize,
    #[arg(long, default_value_t = 20)]
    queries: usize,
    /// Most instances of the primary class in one query.
    #[arg(long, default_value_t = 4)]
    max_instances: usize,
    /// Grid side in patches.
    #[arg(long, default_value_t = 24)]
    grid: usize,
    /// Patch side in pixels.
    #[arg(long, default_value_t = 8)]
    patch: usize,
    #[arg(long, default_value_t = 16)]
    dim: usize,
}

#[derive(Args, Clone)]
struct IccdArgs {
    /// Coverage above which a reference patch enters the raw bank.
    #[arg(long, default_value_t = 0.7)]
    tau_b: f32,
    /// Coverage above which a patch counts as held-out foreground.
    #[arg(long, default_value_t = 0.3)]
    tau_t: f32,
    /// Minimum nearest-neighbour similarity for a held-out match to count.
    #[arg(long, default_value_t = 0.0)]
    xi: f32,
    /// Minimum valid matches for a vector to be scored.
    #[arg(long, default_value_t = 3)]
    eta_min: u32,
    /// Images whose vectors are scored.
    #[arg(long, default_value_t = 50)]
    n_s: usize,
    /// Bank size cap.
    #[arg(long, default_value_t = 500)]
    k: usize,
    /// Bank threshold: `adaptive` (0.9 x upper quartile, clipped to
    /// [0.65, 0.82]) or a fixed value inside that range.
    #[arg(long, default_value = "adaptive")]
    kappa: String,
}

impl IccdArgs {
    fn params(&self) -> Result<IccdParams, CliError> {
        let kappa = if self.kappa == "adaptive" {
            KappaMode::Adaptive
        } else {
            KappaMode::Fixed(self.kappa.parse().map_err(|_| {
                CliError::Validation(format!(
                    "--kappa: expected 'adaptive' or a number, got '{}'",
                    self.kappa
                ))
            })?)
        };
        let p = IccdParams {
            tau_b: self.tau_b,
            tau_t: self.tau_t,
            xi: self.xi,
            eta_min: self.eta_min,
            n_s: self.n_s,
            k: self.k,
            kappa,
            ..IccdParams::default()
        };
        p.validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(p)
    }
}

/// Grounding thresholds. Two default sets exist: 0.80 / 4 / 10 (used here)
/// and 0.5 / 5 / 3; pass the flags explicitly to select the other one.
#[derive(Args, Clone)]
struct TsgArgs {
    /// Loose candidate-mask threshold (alternative default: 0.5).
    #[arg(long, default_value_t = 0.80)]
    tau_l: f32,
    /// Minimum component size in patches (alternative default: 5).
    #[arg(long, default_value_t = 4)]
    eta_cc: usize,
    /// Peak window radius and NMS distance in patches (alternative default: 3).
    #[arg(long, default_value_t = 10)]
    delta: usize,
    /// Prompt validation threshold; defaults to --tau-l.
    #[arg(long)]
    tau_v: Option<f32>,
    /// Keep at most this many prompts.
    #[arg(long)]
    b_max: Option<usize>,
}

impl TsgArgs {
    fn params(&self) -> Result<TsgParams, CliError> {
        let p = TsgParams {
            tau_l: self.tau_l,
            eta_cc: self.eta_cc,
            delta: self.delta,
            b_max: self.b_max,
        };
        p.validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(p)
    }

    fn tau_v(&self) -> f32 {
        self.tau_v.unwrap_or(self.tau_l)
    }
}

#[derive(Args)]
struct BuildBankArgs {
    /// Directory of `<id>.srfg` reference grids.
    #[arg(long)]
    refs: PathBuf,
    /// Directory of `<id>.pgm` masks (default: the refs directory).
    #[arg(long)]
    masks: Option<PathBuf>,
    #[arg(long)]
    class: String,
    /// Output `.srbk` file.
    #[arg(long)]
    out: PathBuf,
    /// Patch side in pixels.
    #[arg(long, default_value_t = DEFAULT_PATCH)]
    patch: usize,
    /// Use only the first N references (sorted by id).
    #[arg(long)]
    shots: Option<usize>,
    #[command(flatten)]
    iccd: IccdArgs,
}

#[derive(Args)]
struct GroundArgs {
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    image_w: u32,
    #[arg(long)]
    image_h: u32,
    /// Output payload JSON.
    #[arg(long)]
    out: PathBuf,
    /// Also write the similarity landscape here.
    #[arg(long)]
    render: Option<PathBuf>,
    /// Also write the surrogate segmentation mask here.
    #[arg(long)]
    mask_out: Option<PathBuf>,
    #[command(flatten)]
    tsg: TsgArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Predictions laid out as `<query>/<class>.pgm`.
    #[arg(long)]
    pred: PathBuf,
    /// Ground truth laid out as `<query>/<class>.pgm`.
    #[arg(long)]
    gt: PathBuf,
    /// Write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Synthetic world directory.
    #[arg(long)]
    world: PathBuf,
    /// One of tau-l, eta-cc, delta, shots, kappa.
    #[arg(long)]
    param: SweepParam,
    /// Comma-separated values.
    #[arg(long, value_delimiter = ',', required = true)]
    values: Vec<String>,
    /// Write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[command(flatten)]
    iccd: IccdArgs,
    #[command(flatten)]
    tsg: TsgArgs,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    query: PathBuf,
    #[arg(long)]
    bank: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Lower end of the grey ramp is tau_l - 0.2.
    #[arg(long, default_value_t = 0.80)]
    tau_l: f32,
}

#[derive(Debug)]
enum CliError {
    Io(String),
    Validation(String),
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

impl From<patchground_core::Error> for CliError {
    fn from(e: patchground_core::Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    Ok(write_file(path, text.as_bytes())?)
}

fn run_synth(a: SynthArgs) -> Result<(), CliError> {
    let cfg = SynthConfig {
        seed: a.seed,
        classes: a.classes,
        refs_per_class: a.refs,
        queries: a.queries,
        max_instances: a.max_instances,
        grid: a.grid,
        patch: a.patch,
        dim: a.dim,
        ..SynthConfig::default()
    };
    let world = generate(&cfg).map_err(CliError::Validation)?;
    world.save(&a.out)?;
    info!(
        "wrote {} references and {} queries to {}",
        world.references.len(),
        world.queries.len(),
        a.out.display()
    );
    Ok(())
}

fn run_build_bank(a: BuildBankArgs) -> Result<(), CliError> {
    let params = a.iccd.params()?;
    let masks = a.masks.as_ref().unwrap_or(&a.refs);
    let mut refs = load_references(&a.refs, masks)?;
    if let Some(n) = a.shots {
        refs.truncate(n);
    }
    if refs.is_empty() {
        return Err(CliError::Validation(format!(
            "no .srfg references in {}",
            a.refs.display()
        )));
    }
    let bank = build_class_bank(&a.class, &refs, &params, a.patch)?;
    write_bank(&bank, &a.out)?;
    println!(
        "{}: {} vectors, kappa_c = {}, fallback_used = {}",
        bank.class_name,
        bank.len(),
        bank.record.kappa_c,
        bank.record.fallback_used
    );
    Ok(())
}

fn run_ground(a: GroundArgs) -> Result<(), CliError> {
    let tsg = a.tsg.params()?;
    let query = read_feature_grid(&a.query)?;
    let bank = read_bank(&a.bank)?;
    let out = ground_class(&query, &bank, &tsg, a.tsg.tau_v(), a.image_w, a.image_h)?;
    write_payload_file(&out.payload, &a.out)?;
    if let Some(path) = &a.render {
        match &out.grounding {
            Some(g) => {
                let px = render_landscape(&g.map, tsg.tau_l);
                write_file(
                    path,
                    &encode_gray(g.map.grid_w, g.map.grid_h, &px, Some(&bank.class_name)),
                )?;
            }
            None => warn!("empty bank: no landscape to render"),
        }
    }
    if let Some(path) = &a.mask_out {
        write_mask(&surrogate_mask(&out, &bank.class_name), path)?;
    }
    println!(
        "{}: {} points{}",
        out.payload.class_name,
        out.payload.points.len(),
        if out.payload.degraded_to_text_only {
            " (text-only)"
        } else {
            ""
        }
    );
    Ok(())
}

fn run_eval(a: EvalArgs) -> Result<(), CliError> {
    let e = evaluate_dirs(&a.pred, &a.gt)?;
    print!("{}", format_table(&[("all".to_string(), e.scores)]));
    if let Some(path) = &a.json {
        let mut text = serde_json::to_string_pretty(&e).map_err(FormatError::from)?;
        text.push('\n');
        write_text(path, &text)?;
    }
    Ok(())
}

fn run_sweep(a: SweepArgs) -> Result<(), CliError> {
    let base = RunConfig {
        iccd: a.iccd.params()?,
        tsg: a.tsg.params()?,
        tau_v: a.tsg.tau_v,
        shots: None,
    };
    let world = World::load(&a.world)?;
    // Validate every point up front so a bad value fails before any work.
    for v in &a.values {
        let cfg = a.param.apply(&base, v).map_err(CliError::Validation)?;
        cfg.iccd.validate()?;
        cfg.tsg.validate()?;
    }
    let report = sweep(&world, &base, a.param, &a.values).map_err(CliError::Validation)?;
    print!("{}", report.table());
    if let Some(path) = &a.json {
        let mut text = serde_json::to_string_pretty(&report).map_err(FormatError::from)?;
        text.push('\n');
        write_text(path, &text)?;
    }
    Ok(())
}

fn run_render(a: RenderArgs) -> Result<(), CliError> {
    if !(a.tau_l > 0.0 && a.tau_l < 1.0) {
        return Err(CliError::Validation(format!(
            "--tau-l {} outside (0, 1)",
            a.tau_l
        )));
    }
    let query = read_feature_grid(&a.query)?;
    let bank = read_bank(&a.bank)?;
    let query = if query.is_normalized() {
        query
    } else {
        patchground_core::l2_normalize(&query)?
    };
    let map = patchground_core::similarity_map(&query, &bank)?;
    let px = render_landscape(&map, a.tau_l);
    write_file(
        &a.out,
        &encode_gray(map.grid_w, map.grid_h, &px, Some(&bank.class_name)),
    )?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::BuildBank(a) => run_build_bank(a),
        Command::Ground(a) => run_ground(a),
        Command::Eval(a) => run_eval(a),
        Command::Sweep(a) => run_sweep(a),
        Command::Render(a) => run_render(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Io(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
