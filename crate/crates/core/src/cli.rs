//! Command-line front end.
//!
//! Every numeric setting resolves as: command-line flag, else the
//! `key = value` config file given with `--config`, else the built-in
//! default. Exit codes: 0 success, 1 runtime failure, 2 usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::{Display, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::deconv::{blind_deconvolve, BlurKernel, DeconvConfig};
use crate::error::Error;
use crate::image::ScalarImage;
use crate::io::{load_flow, load_image, save_flow, save_image16, write_atomic};
use crate::metrics::{kernel_correlation, mean_endpoint_error, psnr, MetricReport};
use crate::pipeline::{restore, PipelineConfig, PipelineKind};
use crate::registration::{register, CauchyNavierParams, RegistrationConfig};
use crate::simulate::{simulate, SimConfig};
use crate::temporal::{Sequence, TemporalFilter};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "turbrest", version, about = "Restore image sequences degraded by turbulence-like warping, blur and noise")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Plain-text key = value file supplying defaults for numeric flags.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a degraded sequence with ground truth from a clean image.
    Simulate(SimulateArgs),
    /// Fuse frames with a temporal mean or median.
    Tfilter(TfilterArgs),
    /// Blind deconvolution of one image.
    Deconv(DeconvArgs),
    /// Register a moving image onto a reference.
    Register(RegisterArgs),
    /// Run the FRD or DFR pipeline on a sequence.
    Restore(RestoreArgs),
    /// Score a restoration against simulator ground truth.
    Score(ScoreArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub blur_sigma: Option<f64>,
    #[arg(long)]
    pub warp_amplitude: Option<f64>,
    #[arg(long)]
    pub warp_correlation_length: Option<f64>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TfilterArgs {
    /// Directory or glob pattern; frames are taken in lexicographic order.
    #[arg(long)]
    pub frames: String,
    #[arg(long, default_value = "median")]
    pub mode: TemporalFilter,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct DeconvFlags {
    #[arg(long)]
    pub alpha1: Option<f64>,
    #[arg(long)]
    pub alpha2: Option<f64>,
    #[arg(long)]
    pub kernel_size: Option<usize>,
    /// Outer alternation count.
    #[arg(long)]
    pub iters: Option<usize>,
}

#[derive(Debug, Args)]
pub struct DeconvArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Estimated kernel, 16-bit PGM (default: <out stem>_kernel.pgm).
    #[arg(long)]
    pub kernel_out: Option<PathBuf>,
    /// Energy trace CSV (default: <out stem>_energy.csv).
    #[arg(long)]
    pub energy_out: Option<PathBuf>,
    #[command(flatten)]
    pub deconv: DeconvFlags,
}

#[derive(Debug, Args, Default)]
pub struct RegistrationFlags {
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Time steps T of the flow.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub data_weight: Option<f64>,
    #[arg(long)]
    pub step_size: Option<f64>,
    #[arg(long)]
    pub grid_spacing: Option<f64>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub moving: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub out_warped: PathBuf,
    /// Forward displacement map in the simulator's field format.
    #[arg(long)]
    pub out_map: Option<PathBuf>,
    #[command(flatten)]
    pub registration: RegistrationFlags,
}

#[derive(Debug, Args)]
pub struct RestoreArgs {
    #[arg(long)]
    pub frames: String,
    #[arg(long)]
    pub pipeline: PipelineKind,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Reference refinement rounds.
    #[arg(short = 'K', long = "iterations")]
    pub k: Option<usize>,
    #[arg(long)]
    pub filter: Option<TemporalFilter>,
    #[command(flatten)]
    pub deconv: DeconvFlags,
    #[command(flatten)]
    pub registration: RegistrationFlags,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub restored: PathBuf,
    #[arg(long)]
    pub truth_dir: PathBuf,
    /// Estimated displacement map, compared with warp_<frame>.flo.
    #[arg(long)]
    pub map: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Estimated kernel image, compared with kernel.pgm.
    #[arg(long)]
    pub kernel: Option<PathBuf>,
    /// Append a row to this CSV file instead of printing key=value lines.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub label: Option<String>,
}

/// Failure with its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig(_) | Error::EvenKernelSize(..) | Error::KernelTooLarge { .. } => 2,
            _ => 1,
        };
        Self { code, message: e.to_string() }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Flag / config file / default resolution with a snapshot of the values used.
struct Settings {
    file: BTreeMap<String, String>,
    used: BTreeMap<String, String>,
}

fn normalize_key(k: &str) -> String {
    k.trim().trim_start_matches("--").replace('_', "-").to_ascii_lowercase()
}

pub fn parse_key_values(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("config line {}: expected key = value", n + 1)))?;
        out.insert(normalize_key(k), v.trim().to_string());
    }
    Ok(out)
}

impl Settings {
    fn load(path: Option<&Path>) -> CliResult<Self> {
        let file = match path {
            None => BTreeMap::new(),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", p.display())))?;
                parse_key_values(&text)?
            }
        };
        Ok(Self { file, used: BTreeMap::new() })
    }

    fn get<T: FromStr + Display + Clone>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T> {
        let value = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(s) => s
                    .parse()
                    .map_err(|_| CliError::usage(format!("config key {key}: cannot parse '{s}'")))?,
                None => default,
            },
        };
        self.used.insert(key.to_string(), value.to_string());
        Ok(value)
    }

    fn deconv(&mut self, flags: &DeconvFlags, base: DeconvConfig) -> CliResult<DeconvConfig> {
        Ok(DeconvConfig {
            alpha1: self.get("alpha1", flags.alpha1, base.alpha1)?,
            alpha2: self.get("alpha2", flags.alpha2, base.alpha2)?,
            kernel_size: self.get("kernel-size", flags.kernel_size, base.kernel_size)?,
            outer_iterations: self.get("iters", flags.iters, base.outer_iterations)?,
            ..base
        })
    }

    fn registration(&mut self, flags: &RegistrationFlags) -> CliResult<RegistrationConfig> {
        let base = RegistrationConfig::default();
        Ok(RegistrationConfig {
            params: CauchyNavierParams {
                alpha: self.get("alpha", flags.alpha, base.params.alpha)?,
                gamma: self.get("gamma", flags.gamma, base.params.gamma)?,
                grid_spacing: self.get("grid-spacing", flags.grid_spacing, base.params.grid_spacing)?,
            },
            data_weight: self.get("data-weight", flags.data_weight, base.data_weight)?,
            time_steps: self.get("steps", flags.steps, base.time_steps)?,
            step_size: self.get("step-size", flags.step_size, base.step_size)?,
            max_iterations: self.get("max-iterations", flags.max_iterations, base.max_iterations)?,
            ..base
        })
    }
}

/// Plain-text record written next to a command's outputs.
struct Manifest {
    command: &'static str,
    argv: Vec<String>,
    settings: BTreeMap<String, String>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl Manifest {
    fn write(&self, path: &Path) -> CliResult<()> {
        let mut s = String::new();
        let _ = writeln!(s, "command={}", self.command);
        let _ = writeln!(s, "argv={}", self.argv.join(" "));
        let _ = writeln!(s, "version={VERSION}");
        for (k, v) in &self.settings {
            let _ = writeln!(s, "config.{k}={v}");
        }
        for p in &self.inputs {
            let _ = writeln!(s, "input={}", p.display());
        }
        for p in &self.outputs {
            let _ = writeln!(s, "output={}", p.display());
        }
        let _ = writeln!(s, "duration_s={:.3}", self.started.elapsed().as_secs_f64());
        write_atomic(path, s.as_bytes())?;
        Ok(())
    }
}

fn is_image_path(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
        Some("png" | "pgm")
    )
}

/// Frames from a directory (every PNG/PGM inside) or a glob pattern,
/// sorted lexicographically.
pub fn discover_frames(spec: &str) -> CliResult<Vec<PathBuf>> {
    let dir = Path::new(spec);
    let mut paths: Vec<PathBuf> = if dir.is_dir() {
        fs::read_dir(dir)
            .map_err(|e| CliError { code: 1, message: format!("{}: {e}", dir.display()) })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && is_image_path(p))
            .collect()
    } else {
        glob::glob(spec)
            .map_err(|e| CliError::usage(format!("bad frame pattern '{spec}': {e}")))?
            .filter_map(|p| p.ok())
            .filter(|p| p.is_file())
            .collect()
    };
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::usage(format!("no frames found at '{spec}'")));
    }
    Ok(paths)
}

fn load_sequence(paths: &[PathBuf]) -> CliResult<Sequence> {
    let frames = paths
        .iter()
        .map(load_image)
        .collect::<crate::Result<Vec<ScalarImage>>>()?;
    Ok(Sequence::new(frames)?)
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError { code: 1, message: format!("{}: {e}", dir.display()) })
}

/// Kernel written as a 16-bit image scaled so its peak is white.
pub fn save_kernel(kernel: &BlurKernel, path: &Path) -> crate::Result<()> {
    let w = kernel.weights();
    let peak = w.min_max().1;
    save_image16(&w.map(|v| v / peak), path)
}

pub fn load_kernel(path: &Path) -> crate::Result<BlurKernel> {
    BlurKernel::project(&load_image(path)?)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

pub const SIM_MANIFEST: &str = "manifest.txt";

pub fn frame_name(n: usize) -> String {
    format!("frame_{n:04}.png")
}

pub fn warp_name(n: usize) -> String {
    format!("warp_{n:04}.flo")
}

fn cmd_simulate(a: &SimulateArgs, st: &mut Settings, argv: Vec<String>) -> CliResult<()> {
    let started = Instant::now();
    let d = SimConfig::default();
    let cfg = SimConfig {
        seed: st.get("seed", a.seed, d.seed)?,
        frames: st.get("frames", a.frames, d.frames)?,
        blur_sigma: st.get("blur-sigma", a.blur_sigma, d.blur_sigma)?,
        warp_amplitude: st.get("warp-amplitude", a.warp_amplitude, d.warp_amplitude)?,
        warp_correlation_length: st.get("warp-correlation-length", a.warp_correlation_length, d.warp_correlation_length)?,
        noise_sigma: st.get("noise-sigma", a.noise_sigma, d.noise_sigma)?,
    };
    cfg.validate()?;
    let clean = load_image(&a.input)?;
    let gt = simulate(&clean, &cfg)?;
    create_dir(&a.out)?;
    let mut outputs = vec![a.out.join("clean.png"), a.out.join("kernel.pgm")];
    save_image16(&gt.clean, &outputs[0])?;
    save_kernel(&gt.kernel, &outputs[1])?;
    for (n, (frame, warp)) in gt.degraded.frames().iter().zip(&gt.warps).enumerate() {
        let f = a.out.join(frame_name(n));
        let w = a.out.join(warp_name(n));
        save_image16(frame, &f)?;
        save_flow(warp, &w)?;
        outputs.push(f);
        outputs.push(w);
    }
    Manifest {
        command: "simulate",
        argv,
        settings: std::mem::take(&mut st.used),
        inputs: vec![a.input.clone()],
        outputs,
        started,
    }
    .write(&a.out.join(SIM_MANIFEST))?;
    println!("frames={}", cfg.frames);
    Ok(())
}

fn cmd_tfilter(a: &TfilterArgs) -> CliResult<()> {
    let paths = discover_frames(&a.frames)?;
    let seq = load_sequence(&paths)?;
    save_image16(&a.mode.apply(&seq), &a.out)?;
    println!("frames={}", paths.len());
    Ok(())
}

fn cmd_deconv(a: &DeconvArgs, st: &mut Settings) -> CliResult<()> {
    let cfg = st.deconv(&a.deconv, DeconvConfig::default())?;
    cfg.validate()?;
    let observed = load_image(&a.input)?;
    let r = blind_deconvolve(&observed, &cfg)?;
    save_image16(&r.image, &a.out)?;
    let kernel_out = a.kernel_out.clone().unwrap_or_else(|| sibling(&a.out, "_kernel.pgm"));
    save_kernel(&r.kernel, &kernel_out)?;
    let energy_out = a.energy_out.clone().unwrap_or_else(|| sibling(&a.out, "_energy.csv"));
    let mut csv = String::from("iteration,energy\n");
    for (i, e) in r.energy_trace.iter().enumerate() {
        let _ = writeln!(csv, "{i},{e:.17e}");
    }
    write_atomic(&energy_out, csv.as_bytes())?;
    if r.degenerate_kernel {
        eprintln!("warning: image is flat, kernel left at its initial value");
    }
    println!("final_energy={:.10e}", r.energy_trace.last().copied().unwrap_or(0.0));
    Ok(())
}

fn cmd_register(a: &RegisterArgs, st: &mut Settings) -> CliResult<()> {
    let cfg = st.registration(&a.registration)?;
    cfg.validate()?;
    let moving = load_image(&a.moving)?;
    let reference = load_image(&a.reference)?;
    let r = register(&moving, &reference, &cfg)?;
    for w in &r.warnings {
        eprintln!("warning: {w}");
    }
    save_image16(&r.warped, &a.out_warped)?;
    if let Some(p) = &a.out_map {
        save_flow(&r.forward_map, p)?;
    }
    println!("final_energy={:.10e}", r.final_energy());
    println!("iterations={}", r.iterations);
    Ok(())
}

fn cmd_restore(a: &RestoreArgs, st: &mut Settings, argv: Vec<String>) -> CliResult<()> {
    let started = Instant::now();
    let base = PipelineConfig::default();
    let filter_flag = a.filter.map(|f| f.name().to_string());
    let filter: TemporalFilter = st
        .get("filter", filter_flag, base.reference_filter.name().to_string())?
        .parse()
        .map_err(|e: Error| CliError::usage(e.to_string()))?;
    let cfg = PipelineConfig {
        iterations: st.get("k", a.k, base.iterations)?,
        reference_filter: filter,
        deconv: st.deconv(&a.deconv, base.deconv.clone())?,
        registration: st.registration(&a.registration)?,
    };
    cfg.validate()?;
    for w in cfg.registration.params.warnings() {
        eprintln!("warning: {w}");
    }
    st.used.insert("pipeline".into(), a.pipeline.to_string());
    let paths = discover_frames(&a.frames)?;
    let seq = load_sequence(&paths)?;
    let report = restore(a.pipeline, &seq, &cfg)?;
    create_dir(&a.out)?;
    let mut outputs = vec![a.out.join("restored.png")];
    save_image16(&report.restored, &outputs[0])?;
    for (k, r) in report.references.iter().enumerate() {
        let p = a.out.join(format!("reference_{k:02}.png"));
        save_image16(r, &p)?;
        outputs.push(p);
    }
    let mut csv = String::from("round,frame,energy\n");
    for (k, row) in report.per_frame_registration_energies.iter().enumerate() {
        for (n, e) in row.iter().enumerate() {
            let v = e.map(|e| format!("{e:.10e}")).unwrap_or_default();
            let _ = writeln!(csv, "{},{n},{v}", k + 1);
        }
    }
    let energies = a.out.join("registration_energies.csv");
    write_atomic(&energies, csv.as_bytes())?;
    outputs.push(energies);
    for d in &report.dropped {
        eprintln!("warning: frame {} dropped in round {}: {}", d.frame, d.round, d.reason);
    }
    st.used.insert("deconvolutions".into(), report.deconvolutions.to_string());
    Manifest {
        command: "restore",
        argv,
        settings: std::mem::take(&mut st.used),
        inputs: paths,
        outputs,
        started,
    }
    .write(&a.out.join("manifest.txt"))?;
    println!("deconvolutions={}", report.deconvolutions);
    println!("references={}", report.references.len());
    Ok(())
}

fn cmd_score(a: &ScoreArgs) -> CliResult<()> {
    let mut required = vec![PathBuf::from("clean.png"), PathBuf::from(SIM_MANIFEST)];
    if a.kernel.is_some() {
        required.push("kernel.pgm".into());
    }
    if a.map.is_some() {
        required.push(warp_name(a.frame).into());
    }
    let missing: Vec<String> = required
        .iter()
        .filter(|p| !a.truth_dir.join(p).is_file())
        .map(|p| p.display().to_string())
        .collect();
    if !missing.is_empty() {
        return Err(CliError::usage(format!(
            "truth directory {} is missing: {}",
            a.truth_dir.display(),
            missing.join(", ")
        )));
    }
    let clean = load_image(a.truth_dir.join("clean.png"))?;
    let restored = load_image(&a.restored)?;
    let mut report = MetricReport {
        psnr_db: Some(psnr(&restored, &clean)?),
        ..MetricReport::default()
    };
    if let Some(m) = &a.map {
        let truth = load_flow(a.truth_dir.join(warp_name(a.frame)))?;
        report.mean_endpoint_error_px = Some(mean_endpoint_error(&load_flow(m)?, &truth)?);
    }
    if let Some(k) = &a.kernel {
        let truth = load_kernel(&a.truth_dir.join("kernel.pgm"))?;
        report.kernel_correlation = Some(kernel_correlation(&load_kernel(k)?, &truth));
    }
    match &a.csv {
        None => print!("{}", report.to_key_value()),
        Some(path) => {
            let mut text = fs::read_to_string(path).unwrap_or_default();
            if text.is_empty() {
                text.push_str(&report.csv_header());
            }
            let label = a.label.clone().unwrap_or_else(|| a.restored.display().to_string());
            text.push_str(&report.csv_row(&label));
            write_atomic(path, text.as_bytes())?;
        }
    }
    Ok(())
}

fn dispatch(cli: &Cli, argv: Vec<String>) -> CliResult<()> {
    let mut st = Settings::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a, &mut st, argv),
        Command::Tfilter(a) => cmd_tfilter(a),
        Command::Deconv(a) => cmd_deconv(a, &mut st),
        Command::Register(a) => cmd_register(a, &mut st),
        Command::Restore(a) => cmd_restore(a, &mut st, argv),
        Command::Score(a) => cmd_score(a),
    }
}

/// Parses `args` (including the program name) and runs the command;
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let argv: Vec<String> = args.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match pool.install(|| dispatch(&cli, argv)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}
