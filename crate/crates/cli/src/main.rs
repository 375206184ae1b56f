//! `tbdsim`: beam profiles, β sweeps, phase fits and sensitivity estimates
//! for the tunable beam displacer.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 validation error, 3 numerical or
//! degeneracy error.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use tbdsim::inference;
use tbdsim::io::{read_sweep_csv, write_profile_csv, write_sweep_csv};
use tbdsim::pipeline::{self, SensitivityReport};
use tbdsim::{Error, ErrorKind, RunConfig, SweepMode};

#[derive(Parser)]
#[command(name = "tbdsim", version, about = "Weak-value tunable beam displacer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Output intensity profiles (CSV: beta_deg, x_um, intensity_norm).
    Profile(ProfileArgs),
    /// Centroid and loss versus polarizer angle (CSV).
    Sweep(SweepArgs),
    /// Fit the phase to a sweep CSV (JSON report).
    Fit(FitArgs),
    /// Displacement resolution from a slope and an angular resolution (JSON).
    Sensitivity(SensitivityArgs),
}

#[derive(Args)]
struct Common {
    /// Run configuration (key = value file).
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    #[command(flatten)]
    common: Common,
    /// Polarizer angles in degrees, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    betas: Option<Vec<f64>>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long, allow_negative_numbers = true)]
    beta_start: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    beta_stop: Option<f64>,
    #[arg(long)]
    beta_step: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    grid: GridArgs,
    /// `analytic` (closed form) or `ccd` (synthetic frames).
    #[arg(long)]
    mode: Option<SweepMode>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write every synthesized frame as PGM into this directory.
    #[arg(long, value_name = "DIR")]
    frames_dir: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    common: Common,
    /// Sweep CSV produced by `sweep` or by measurement.
    input: PathBuf,
    #[arg(long)]
    lambda_um: Option<f64>,
    #[arg(long)]
    resolution_arcmin: Option<f64>,
    /// Fit Δx together with φ.
    #[arg(long)]
    joint: bool,
    #[arg(long, allow_negative_numbers = true)]
    linear_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    linear_max: Option<f64>,
}

#[derive(Args)]
struct SensitivityArgs {
    #[command(flatten)]
    common: Common,
    /// Centroid slope in µm/deg.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "input", required_unless_present = "input")]
    slope: Option<f64>,
    /// Sweep CSV; the slope comes from its linear fit.
    #[arg(long, value_name = "PATH")]
    input: Option<PathBuf>,
    #[arg(long)]
    resolution_arcmin: Option<f64>,
}

fn load_config(common: &Common) -> Result<RunConfig, Error> {
    match &common.config {
        Some(path) => RunConfig::from_path(path),
        None => Ok(RunConfig::default()),
    }
}

fn out_path(common: &Common, cfg: &RunConfig) -> Option<PathBuf> {
    common.out.clone().or_else(|| cfg.output_path.as_ref().map(PathBuf::from))
}

/// Writes `bytes` to `path`, or stdout. Called only once the whole output is
/// computed, so a failed run leaves no file behind.
fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), Error> {
    match path {
        Some(p) => {
            let mut f = BufWriter::new(File::create(p)?);
            f.write_all(bytes)?;
            f.flush()?;
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
        }
    }
    Ok(())
}

fn json_bytes<T: serde::Serialize>(value: &T) -> Result<Vec<u8>, Error> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn profile(args: ProfileArgs) -> Result<(), Error> {
    let mut cfg = load_config(&args.common)?;
    if let Some(betas) = args.betas {
        cfg.profile.betas_deg = betas;
    }
    cfg.validate()?;
    let rows = pipeline::run_profile(&cfg, &cfg.profile.betas_deg)?;
    let mut buf = Vec::new();
    write_profile_csv(&rows, &mut buf)?;
    emit(out_path(&args.common, &cfg).as_deref(), &buf)
}

fn sweep(args: SweepArgs) -> Result<(), Error> {
    let mut cfg = load_config(&args.common)?;
    if let Some(v) = args.grid.beta_start {
        cfg.sweep.beta_start_deg = v;
    }
    if let Some(v) = args.grid.beta_stop {
        cfg.sweep.beta_stop_deg = v;
    }
    if let Some(v) = args.grid.beta_step {
        cfg.sweep.beta_step_deg = v;
    }
    if let Some(m) = args.mode {
        cfg.sweep.mode = m;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    pipeline::beta_grid(cfg.sweep.beta_start_deg, cfg.sweep.beta_stop_deg, cfg.sweep.beta_step_deg)?;

    let mut frames = Vec::new();
    let keep_frames = args.frames_dir.is_some() && cfg.sweep.mode == SweepMode::Ccd;
    let output = pipeline::run_sweep_with_frames(&cfg, cfg.sweep.mode, |b, f| {
        if keep_frames {
            frames.push((b, f.clone()));
        }
        Ok(())
    })?;
    for b in &output.saturated_betas {
        eprintln!("warning: frame at beta = {b}° saturated; raise ccd.nd_attenuation_db");
    }
    let mut buf = Vec::new();
    write_sweep_csv(&output.rows, &mut buf)?;
    if let Some(dir) = &args.frames_dir {
        for (b, f) in &frames {
            pipeline::write_frame(dir, *b, f)?;
        }
    }
    emit(out_path(&args.common, &cfg).as_deref(), &buf)
}

fn fit(args: FitArgs) -> Result<(), Error> {
    let mut cfg = load_config(&args.common)?;
    if let Some(v) = args.lambda_um {
        cfg.fit.lambda_um = v;
    }
    if let Some(v) = args.resolution_arcmin {
        cfg.fit.resolution_arcmin = v;
    }
    if let Some(v) = args.linear_min {
        cfg.fit.linear_min_deg = v;
    }
    if let Some(v) = args.linear_max {
        cfg.fit.linear_max_deg = v;
    }
    cfg.fit.joint |= args.joint;
    cfg.validate()?;
    let records = read_sweep_csv(File::open(&args.input)?)?;
    let report = pipeline::run_fit(&records, &cfg)?;
    emit(out_path(&args.common, &cfg).as_deref(), &json_bytes(&report)?)
}

fn sensitivity(args: SensitivityArgs) -> Result<(), Error> {
    let mut cfg = load_config(&args.common)?;
    if let Some(v) = args.resolution_arcmin {
        cfg.fit.resolution_arcmin = v;
    }
    cfg.validate()?;
    let report: SensitivityReport = match (args.slope, &args.input) {
        (Some(slope), _) => pipeline::sensitivity_for_slope(slope, cfg.fit.resolution_arcmin)?,
        (None, Some(path)) => {
            let records = read_sweep_csv(File::open(path)?)?;
            let fit = inference::linear_region_fit(&records, (cfg.fit.linear_min_deg, cfg.fit.linear_max_deg))?;
            pipeline::sensitivity_for_slope(fit.slope_um_per_deg, cfg.fit.resolution_arcmin)?
        }
        (None, None) => unreachable!("clap requires --slope or --input"),
    };
    emit(out_path(&args.common, &cfg).as_deref(), &json_bytes(&report)?)
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Io => 1,
        ErrorKind::Validation => 2,
        ErrorKind::Numerical => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Profile(a) => profile(a),
        Command::Sweep(a) => sweep(a),
        Command::Fit(a) => fit(a),
        Command::Sensitivity(a) => sensitivity(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
