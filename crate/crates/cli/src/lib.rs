//! The `splatwalk` command line: plan → extract → (external SfM) → init →
//! train → render/eval → export.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
pub mod project;

pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_VERSION"), " (", env!("SPLATWALK_BUILD"), ")");
pub const PROJECT_ENV: &str = "SPLATWALK_PROJECT";
pub const DEFAULT_SEED: u64 = 42;

/// A problem with how the tool was invoked rather than with the data.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "splatwalk", version = BUILD_ID, about = "Gaussian splat reconstruction from 360° walk-through captures")]
pub struct Cli {
    /// Project directory; every output is written below it.
    #[arg(long, short = 'C', global = true, env = PROJECT_ENV, default_value = ".")]
    pub project: PathBuf,

    /// Worker threads (1 gives bitwise-reproducible output).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Frame extraction rate and ground sampling distance for a capture walk.
    Plan(PlanArgs),
    /// Reproject equirectangular frames into pinhole views.
    Extract(ExtractArgs),
    /// Validate an SfM text model and write the initial splat cloud.
    Init(InitArgs),
    /// Optimize splats against posed images.
    Train(TrainArgs),
    /// Render a color, depth or accumulation image.
    Render(RenderArgs),
    /// Write a compressed splat container.
    Export(ExportArgs),
    /// PSNR and SSIM against posed images.
    Eval(EvalArgs),
    /// Splat count, SH degree and storage size per compression level.
    Info(InfoArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PlanFormat {
    Text,
    Kv,
}

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// Walking speed, m/s.
    #[arg(long)]
    pub speed: f64,
    /// Camera height above ground, m.
    #[arg(long, default_value_t = 1.0)]
    pub height: f64,
    /// Forward overlap between consecutive views, in [0, 1).
    #[arg(long, default_value_t = splatwalk_core::capture::DEFAULT_OVERLAP)]
    pub overlap: f64,
    /// Ground length covered by one view along the walk, m.
    #[arg(long, default_value_t = splatwalk_core::capture::DEFAULT_FOOTPRINT_M)]
    pub footprint: f64,
    /// Decoded source frame rate, frames/s.
    #[arg(long = "source-fps", default_value_t = 30.0)]
    pub source_fps: f64,
    /// Equirectangular frame width, px.
    #[arg(long, default_value_t = splatwalk_core::capture::DEFAULT_EQUIRECT_WIDTH)]
    pub width: u32,
    #[arg(long, value_enum, default_value_t = PlanFormat::Text)]
    pub format: PlanFormat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ExtractMode {
    Cubemap,
    Single,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Directory of equirectangular PNG/JPEG frames. Manifest indices refer
    /// to the frames in file-name order.
    #[arg(long, default_value = "frames")]
    pub frames_dir: PathBuf,
    /// `index, timestamp_seconds` per line (default: <frames-dir>/manifest.txt).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Keep every Nth manifest entry.
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, value_enum, default_value_t = ExtractMode::Cubemap)]
    pub mode: ExtractMode,
    /// Field of view for single mode, degrees.
    #[arg(long, default_value_t = 90.0)]
    pub fov: f64,
    /// Yaw for single mode, degrees.
    #[arg(long, default_value_t = 0.0)]
    pub yaw: f64,
    /// Pitch for single mode, degrees.
    #[arg(long, default_value_t = 0.0)]
    pub pitch: f64,
    /// Output view width and height, px.
    #[arg(long, default_value_t = 512)]
    pub size: usize,
    #[arg(long, default_value = "views")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct InitArgs {
    /// Directory holding cameras.txt, images.txt and points3D.txt.
    #[arg(long, default_value = "sfm")]
    pub sfm_dir: PathBuf,
    /// `key = value` training config; only the init keys are used.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "checkpoints/init.ply")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long, default_value = "sfm")]
    pub sfm_dir: PathBuf,
    /// Directory holding the images named in images.txt.
    #[arg(long, default_value = "views")]
    pub images_dir: PathBuf,
    #[arg(long)]
    pub iters: Option<usize>,
    /// `key = value` file with training config fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Start from this splat file instead of initializing from the SfM points.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Leave every Nth view out of training (0 keeps all).
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    #[arg(long, default_value = "checkpoints/splat.ply")]
    pub out: PathBuf,
    /// Per-iteration log as CSV.
    #[arg(long, default_value = "logs/train.csv")]
    pub log: PathBuf,
}

#[derive(Args, Debug)]
pub struct RenderArgs {
    #[arg(long, default_value = "checkpoints/splat.ply")]
    pub splat: PathBuf,
    #[arg(long, default_value = "sfm")]
    pub sfm_dir: PathBuf,
    /// Image index into images.txt, or a pose file
    /// (`width height fx fy cx cy qw qx qy qz tx ty tz`).
    #[arg(long, default_value = "0")]
    pub camera: String,
    #[arg(long, default_value = "color")]
    pub mode: splatwalk_core::RenderMode,
    /// Background colour as `r,g,b` in [0, 1].
    #[arg(long, default_value = "0,0,0", value_parser = parse_rgb)]
    pub background: [f64; 3],
    /// Output image; `.pfm` writes raw floats (default: renders/<camera>_<mode>.png,
    /// or .pfm for depth and accumulation).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ExportArgs {
    #[arg(long, default_value = "checkpoints/splat.ply")]
    pub splat: PathBuf,
    #[arg(long, default_value = "half")]
    pub level: splatwalk_core::io::CompressionLevel,
    /// Default: checkpoints/splat.<level>.spwk
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long, default_value = "checkpoints/splat.ply")]
    pub splat: PathBuf,
    #[arg(long, default_value = "sfm")]
    pub sfm_dir: PathBuf,
    #[arg(long, default_value = "views")]
    pub images_dir: PathBuf,
    /// Evaluate every Nth view only (0 evaluates all).
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    #[arg(long, default_value = "0,0,0", value_parser = parse_rgb)]
    pub background: [f64; 3],
    #[arg(long, default_value = "logs/eval.csv")]
    pub csv: PathBuf,
}

#[derive(Args, Debug)]
pub struct InfoArgs {
    #[arg(long, default_value = "checkpoints/splat.ply")]
    pub splat: PathBuf,
}

fn parse_rgb(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [r, g, b] if parts.iter().all(|v| (0.0..=1.0).contains(v)) => Ok([r, g, b]),
        _ => Err("expected three comma-separated values in [0, 1]".into()),
    }
}

/// The error chain, skipping causes already quoted by their parent.
fn error_text(e: &anyhow::Error) -> String {
    let mut text = e.to_string();
    for cause in e.chain().skip(1) {
        let c = cause.to_string();
        if !text.contains(&c) {
            text = format!("{text}: {c}");
        }
    }
    text
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match commands::dispatch(&cli, &argv) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", error_text(&e));
            if e.downcast_ref::<UsageError>().is_some() {
                1
            } else {
                2
            }
        }
    }
}
