//! The `sftip` command-line tool.
//!
//! Three subcommands: `deconvolve` recovers a PSF and object from one
//! image, `simulate` writes a synthetic aberrated observation with its
//! ground truth, and `convergence-bench` runs the PSF-recovery benchmark.
//!
//! Exit codes: 0 on success, 2 for unreadable inputs or bad flags, 3 when
//! the solver rejects its input, 1 when outputs cannot be written.

pub mod config;
pub mod io;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::grid::RealField;
use crate::metrics::{run_convergence_benchmark, BenchmarkOptions, BenchmarkSummary};
use crate::sftip::{psf_psnr, sftip_run, TipConfig, TipOutcome};
use crate::simkit::{
    ConvergenceScenario, ScenarioSpec, SceneKind, DEFAULT_MODE_COUNT, DEFAULT_PUPIL_FRACTION,
    DEFAULT_SIGMA,
};
use io::{encode_image, encode_matrix, encode_traces, ImageKind, Manifest, Staged};

/// Flags that take no value. In config files they are `true` or `false`.
pub const SWITCHES: &[&str] = &["no-align", "shift-scene"];

const SUBCOMMANDS: &[&str] = &["deconvolve", "simulate", "convergence-bench"];

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: 1, message: message.into() }
    }

    /// Bad parameters map to the usage code, everything else the solver
    /// rejects to 3.
    pub fn solver(err: Error) -> Self {
        match err {
            Error::InvalidArgument(_) => Self::usage(err.to_string()),
            _ => Self { code: 3, message: err.to_string() },
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Parser)]
#[command(name = "sftip", version, about = "Single-frame blind deconvolution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate the PSF and the object from one blurred image.
    Deconvolve(DeconvolveArgs),
    /// Write a synthetic aberrated observation with its ground truth.
    Simulate(SimulateArgs),
    /// Measure PSF recovery over random scenes and aberrations.
    ConvergenceBench(BenchArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    /// Patches per axis.
    #[arg(long, default_value_t = 4)]
    pub patches: usize,
    /// PSF support side in pixels.
    #[arg(long, default_value_t = 32)]
    pub support: usize,
    #[arg(long, default_value_t = 100)]
    pub iters: usize,
    /// OTF-update regularization, relative to the mean patch power.
    #[arg(long, default_value_t = 1e-3)]
    pub eps_h: f64,
    /// Object-update regularization, relative to the mean OTF power.
    #[arg(long, default_value_t = 1e-3)]
    pub eps_o: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Compare PSFs without shift alignment.
    #[arg(long)]
    pub no_align: bool,
}

impl SolverArgs {
    pub fn tip_config(&self) -> TipConfig {
        TipConfig {
            grid_p: self.patches,
            support_s: self.support,
            iters: self.iters,
            eps_h: self.eps_h,
            eps_o: self.eps_o,
            seed: self.seed,
            align: !self.no_align,
        }
    }

    fn record(&self, m: &mut Manifest) {
        m.set("patches", self.patches);
        m.set("support", self.support);
        m.set("iters", self.iters);
        m.set("eps-h", self.eps_h);
        m.set("eps-o", self.eps_o);
        m.set("seed", self.seed);
        m.set("no-align", self.no_align);
    }
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct DeconvolveArgs {
    /// Grayscale PNG or TIFF, 8 or 16 bit.
    pub input: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value = "sftip-out")]
    pub out_dir: PathBuf,
    /// Ground-truth PSF matrix (as written by `simulate`) for PSNR tracking.
    #[arg(long)]
    pub truth_psf: Option<PathBuf>,
    /// Trace CSV destination; defaults to `trace.csv` in the output directory.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "png")]
    pub format: ImageKind,
    /// `key = value` file whose entries act as flags given before the
    /// command line.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SceneArgs {
    /// Side of the square scene in pixels.
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    /// Standard deviation of each Zernike coefficient, in radians.
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    pub sigma: f64,
    /// Number of Zernike modes after piston.
    #[arg(long, default_value_t = DEFAULT_MODE_COUNT)]
    pub modes: usize,
    /// Pupil radius as a fraction of half the grid.
    #[arg(long, default_value_t = DEFAULT_PUPIL_FRACTION)]
    pub pupil_fraction: f64,
    /// Gaussian noise standard deviation in scene units.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// bar-target, checkerboard or flat.
    #[arg(long, default_value = "bar-target")]
    pub scene: SceneKind,
}

impl SceneArgs {
    fn spec(&self, seed: u64, shift_scene: bool) -> ScenarioSpec {
        ScenarioSpec {
            size: self.size,
            scene: self.scene,
            mode_count: self.modes,
            sigma: self.sigma,
            pupil_fraction: self.pupil_fraction,
            noise_sigma: self.noise,
            shift_scene,
            seed,
        }
    }

    fn record(&self, m: &mut Manifest) {
        m.set("size", self.size);
        m.set("sigma", self.sigma);
        m.set("modes", self.modes);
        m.set("pupil-fraction", self.pupil_fraction);
        m.set("noise", self.noise);
        m.set("scene", self.scene);
    }
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Use this image as the scene instead of a procedural one.
    #[arg(long)]
    pub scene_file: Option<PathBuf>,
    /// Translate the procedural scene by a seeded random offset.
    #[arg(long)]
    pub shift_scene: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "sftip-out")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value = "png")]
    pub format: ImageKind,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
#[command(args_override_self = true)]
pub struct BenchArgs {
    /// Number of scenarios.
    #[arg(long, default_value_t = 20)]
    pub count: usize,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub scene: SceneArgs,
    #[arg(long, default_value = "sftip-out")]
    pub out_dir: PathBuf,
    /// Per-scenario trace CSV destination; defaults to `traces.csv` in the
    /// output directory.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Entry point for the binary.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match parse_with_config(args) {
        Ok(cli) => cli,
        Err(ParseFailure::Clap(e)) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code().clamp(0, 255) as u8);
        }
        Err(ParseFailure::Cli(e)) => {
            eprintln!("sftip: {e}");
            return ExitCode::from(e.code);
        }
    };
    match execute(&cli) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("sftip: {e}");
            ExitCode::from(e.code)
        }
    }
}

#[derive(Debug)]
pub enum ParseFailure {
    Clap(clap::Error),
    Cli(CliError),
}

/// Parses arguments after splicing in the entries of any `--config` file
/// right after the subcommand name, so explicit flags override them.
pub fn parse_with_config(mut args: Vec<OsString>) -> Result<Cli, ParseFailure> {
    if let Some(path) = config::find_config_path(&args) {
        let extra = config::load_config_args(Path::new(&path)).map_err(ParseFailure::Cli)?;
        if let Some(pos) = args.iter().position(|a| SUBCOMMANDS.iter().any(|s| a == *s)) {
            args.splice(pos + 1..pos + 1, extra);
        }
    }
    Cli::try_parse_from(args).map_err(ParseFailure::Clap)
}

/// Runs a parsed command and returns a one-line report.
pub fn execute(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Deconvolve(a) => cmd_deconvolve(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::ConvergenceBench(a) => cmd_convergence_bench(a),
    }
}

/// Extends a field to `(w, h)` by repeating its last column and row.
pub fn pad_edge(field: &RealField, w: usize, h: usize) -> RealField {
    let (fw, fh) = field.shape();
    RealField::from_fn(w, h, |x, y| field.get(x.min(fw - 1), y.min(fh - 1)))
}

pub fn crop(field: &RealField, w: usize, h: usize) -> RealField {
    RealField::from_fn(w, h, |x, y| field.get(x, y))
}

pub fn cmd_deconvolve(args: &DeconvolveArgs) -> Result<String, CliError> {
    let started = Instant::now();
    let image = io::read_image(&args.input)?;
    let truth = args.truth_psf.as_deref().map(io::read_matrix).transpose()?;
    let config = args.solver.tip_config();
    config.validate().map_err(CliError::solver)?;

    let (w, h) = image.shape();
    let p = config.grid_p;
    let (pw, ph) = (w.div_ceil(p) * p, h.div_ceil(p) * p);
    let working = if (pw, ph) == (w, h) { image } else { pad_edge(&image, pw, ph) };
    if let Some(t) = &truth {
        if t.shape() != (pw, ph) {
            return Err(CliError::usage(format!(
                "ground-truth PSF is {}x{} but the working grid is {pw}x{ph}",
                t.width(),
                t.height()
            )));
        }
    }

    let TipOutcome { psf, object, trace } =
        sftip_run(&working, config, truth.as_ref()).map_err(CliError::solver)?;
    let object = crop(&object, w, h);

    let ext = args.format.extension();
    let trace_path = args.trace.clone().unwrap_or_else(|| args.out_dir.join("trace.csv"));
    let mut staged = Staged::default();
    staged.add(args.out_dir.join(format!("object.{ext}")), encode_image(&object, args.format)?);
    staged.add(args.out_dir.join(format!("psf.{ext}")), encode_image(&psf, args.format)?);
    staged.add(args.out_dir.join("psf.txt"), encode_matrix(&psf, "center"));
    staged.add(&trace_path, encode_traces([(0, trace.records())])?);

    let mut m = Manifest::new("deconvolve");
    m.set("input", args.input.display());
    m.set("out-dir", args.out_dir.display());
    args.solver.record(&mut m);
    m.set("format", ext_name(args.format));
    if let Some(t) = &args.truth_psf {
        m.set("truth-psf", t.display());
    }
    if let Some(t) = &args.trace {
        m.set("trace", t.display());
    }
    m.set("output.width", w);
    m.set("output.height", h);
    m.set("output.psf_width", pw);
    m.set("output.psf_height", ph);
    let last = trace.records().last().expect("at least one iteration");
    m.set("output.final_residual", last.residual);
    m.set("output.delta_fallbacks", last.delta_fallbacks);
    let mut report = format!("deconvolved {}x{} in {} iterations, residual {:.6e}", w, h, trace.len(), last.residual);
    if let (Some(t), Some(improvement)) = (&truth, trace.improvement_db()) {
        let delta = psf_psnr(t, &RealField::centered_delta(pw, ph), config.align).map_err(CliError::solver)?;
        m.set("output.psnr_final_db", trace.psnr_final().unwrap_or(f64::NAN));
        m.set("output.psnr_delta_db", delta);
        report.push_str(&format!(", PSF PSNR improved {improvement:.2} dB"));
    }
    m.set("wall_clock_seconds", started.elapsed().as_secs_f64());
    staged.add(args.out_dir.join("manifest.txt"), m.encode());
    staged.commit()?;
    Ok(report)
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<String, CliError> {
    let started = Instant::now();
    let spec = args.scene.spec(args.seed, args.shift_scene);
    let scenario = match &args.scene_file {
        Some(path) => ConvergenceScenario::from_scene(io::read_image(path)?, &spec),
        None => ConvergenceScenario::generate(&spec),
    }
    .map_err(CliError::solver)?;

    let ext = args.format.extension();
    let mut staged = Staged::default();
    staged.add(args.out_dir.join(format!("scene.{ext}")), encode_image(&scenario.scene, args.format)?);
    staged.add(args.out_dir.join(format!("image.{ext}")), encode_image(&scenario.image, args.format)?);
    staged.add(args.out_dir.join(format!("psf.{ext}")), encode_image(&scenario.psf, args.format)?);
    staged.add(args.out_dir.join("psf.txt"), encode_matrix(&scenario.psf, "center"));

    let mut m = Manifest::new("simulate");
    m.set("out-dir", args.out_dir.display());
    args.scene.record(&mut m);
    if let Some(path) = &args.scene_file {
        m.set("scene-file", path.display());
    }
    m.set("shift-scene", args.shift_scene);
    m.set("seed", args.seed);
    m.set("format", ext_name(args.format));
    let coefficients: Vec<String> = scenario.aberration.coefficients().iter().map(f64::to_string).collect();
    m.set("coefficients", coefficients.join(","));
    m.set("wall_clock_seconds", started.elapsed().as_secs_f64());
    staged.add(args.out_dir.join("manifest.txt"), m.encode());
    staged.commit()?;
    let (w, h) = scenario.image.shape();
    Ok(format!("simulated {w}x{h} observation in {}", args.out_dir.display()))
}

pub fn cmd_convergence_bench(args: &BenchArgs) -> Result<String, CliError> {
    let started = Instant::now();
    let options = BenchmarkOptions {
        count: args.count,
        config: args.solver.tip_config(),
        scenario: args.scene.spec(0, true),
        seed: args.solver.seed,
    };
    let summary = run_convergence_benchmark(&options).map_err(CliError::solver)?;

    let trace_path = args.trace.clone().unwrap_or_else(|| args.out_dir.join("traces.csv"));
    let mut staged = Staged::default();
    staged.add(args.out_dir.join("summary.csv"), encode_summary(&summary)?);
    staged.add(
        &trace_path,
        encode_traces(summary.scenarios.iter().map(|s| (s.id, s.trace.records())))?,
    );

    let mut m = Manifest::new("convergence-bench");
    m.set("out-dir", args.out_dir.display());
    m.set("count", args.count);
    args.solver.record(&mut m);
    args.scene.record(&mut m);
    if let Some(t) = &args.trace {
        m.set("trace", t.display());
    }
    m.set("output.mean_improvement_db", summary.mean_improvement_db);
    m.set("output.std_improvement_db", summary.std_improvement_db);
    m.set("wall_clock_seconds", started.elapsed().as_secs_f64());
    staged.add(args.out_dir.join("manifest.txt"), m.encode());
    staged.commit()?;
    Ok(format!(
        "mean PSF PSNR improvement {:.3} dB ± {:.3} dB over {} scenarios",
        summary.mean_improvement_db,
        summary.std_improvement_db,
        summary.scenarios.len()
    ))
}

fn ext_name(kind: ImageKind) -> &'static str {
    match kind {
        ImageKind::Png => "png",
        ImageKind::Tiff => "tiff",
    }
}

fn encode_summary(summary: &BenchmarkSummary) -> Result<Vec<u8>, CliError> {
    let mut out = format!("# format_version = {}\n", io::FORMAT_VERSION).into_bytes();
    {
        let mut writer = csv::Writer::from_writer(&mut out);
        writer
            .write_record(["scenario_id", "seed", "psnr_initial_db", "psnr_final_db", "improvement_db"])
            .map_err(io::csv_error)?;
        for s in &summary.scenarios {
            writer
                .write_record([
                    s.id.to_string(),
                    s.seed.to_string(),
                    s.psnr_initial.to_string(),
                    s.psnr_final.to_string(),
                    s.improvement_db.to_string(),
                ])
                .map_err(io::csv_error)?;
        }
        writer.flush().map_err(|e| CliError::io(e.to_string()))?;
    }
    Ok(out)
}
