//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Decision rule for the χ² residual test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModeArg {
    /// REJECT iff 1 − CDF(stat) < alpha (standard residual test).
    CdfTest,
    /// REJECT iff pdf(stat) > tau (literal density rule).
    PaperLiteral,
}

#[derive(Debug, Parser)]
#[command(
    name = "pose-integrity",
    about = "Runway pose estimation with runtime integrity monitoring",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the integrity check on every frame of a prediction file.
    ///
    /// Prints one JSON line per frame. Exit code: 0 if all frames ACCEPT,
    /// 2 if any frame REJECTs, 1 on input error.
    Check(CheckArgs),
    /// Solve the weighted PNP problem for every frame.
    ///
    /// Prints one JSON line per frame. Exit code: 0 if all frames
    /// converge, 2 otherwise, 1 on input error.
    Pnp(PnpArgs),
    /// Extract sub-pixel keypoints from per-frame heatmaps.
    Softargmax(SoftargmaxArgs),
    /// Evaluate marginal calibration and sharpness against truth pixels.
    Calibrate(CalibrateArgs),
    /// Run seeded Monte Carlo trials of the full pipeline, optionally
    /// with an injected fault; writes a CSV trial table and prints a JSON
    /// summary.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
pub struct InitFlags {
    /// Initializer glide slope in degrees (overrides the file's init
    /// block).
    #[arg(long)]
    pub init_glide: Option<f64>,
    /// Initializer distance to the threshold in meters.
    #[arg(long)]
    pub init_distance: Option<f64>,
    /// Initializer lateral offset in meters.
    #[arg(long)]
    pub init_offset: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// PredictionFile (JSON) to check.
    pub input: PathBuf,
    /// False-alarm probability for the χ² test.
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Decision rule.
    #[arg(long, value_enum, default_value_t = ModeArg::CdfTest)]
    pub mode: ModeArg,
    /// Density threshold, used only with --mode paper_literal.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[command(flatten)]
    pub init: InitFlags,
    /// Process frames with this many threads (output order preserved).
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct PnpArgs {
    /// PredictionFile (JSON) to solve.
    pub input: PathBuf,
    #[command(flatten)]
    pub init: InitFlags,
    /// Levenberg-Marquardt iteration cap.
    #[arg(long, default_value_t = 100)]
    pub max_iterations: usize,
    /// Convergence tolerance on max(|Δcost|/cost, ‖step‖).
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
    /// Process frames with this many threads (output order preserved).
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SoftargmaxArgs {
    /// PredictionFile (JSON) whose frames carry heatmaps.
    pub input: PathBuf,
    /// Crop size WxH in pixels for coordinate scaling.
    #[arg(long, value_parser = parse_crop_size, default_value = "224x224")]
    pub crop_size: (u32, u32),
}

fn parse_crop_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let w: u32 = w.trim().parse().map_err(|e| format!("bad width: {e}"))?;
    let h: u32 = h.trim().parse().map_err(|e| format!("bad height: {e}"))?;
    Ok((w, h))
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// PredictionFile (JSON) with truth_px in every frame.
    pub input: PathBuf,
    /// Comma-separated nominal levels in (0,1); default 0.05..0.95 step
    /// 0.05.
    #[arg(long)]
    pub levels: Option<String>,
    /// Multiply every predicted sigma by this factor before evaluating.
    #[arg(long)]
    pub recalibrate_factor: Option<f64>,
    /// Also emit one calibration curve per keypoint index.
    #[arg(long)]
    pub per_keypoint: bool,
    /// Write the pooled curve as CSV (rho,coverage) to this path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Number of Monte Carlo trials.
    #[arg(long, default_value_t = 1000)]
    pub trials: u64,
    /// Master seed; per-trial seeds derive from it.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Runway length in meters.
    #[arg(long, default_value_t = 2000.0)]
    pub runway_length: f64,
    /// Runway width in meters.
    #[arg(long, default_value_t = 45.0)]
    pub runway_width: f64,
    /// Glide slope in degrees.
    #[arg(long, default_value_t = 3.0)]
    pub glide: f64,
    /// Distance to the threshold in meters.
    #[arg(long, default_value_t = 2000.0)]
    pub distance: f64,
    /// Lateral offset from the centerline in meters.
    #[arg(long, default_value_t = 0.0)]
    pub lateral_offset: f64,
    #[arg(long, default_value_t = 20000.0)]
    pub fx: f64,
    #[arg(long, default_value_t = 20000.0)]
    pub fy: f64,
    #[arg(long, default_value_t = 539.5)]
    pub cx: f64,
    #[arg(long, default_value_t = 539.5)]
    pub cy: f64,
    #[arg(long, default_value_t = 1080)]
    pub image_width: u32,
    #[arg(long, default_value_t = 1080)]
    pub image_height: u32,
    /// Pixel-noise standard deviation for all keypoints.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// Per-keypoint sigmas (comma-separated, overrides --sigma).
    #[arg(long)]
    pub sigma_per_keypoint: Option<String>,
    /// False-alarm probability for the integrity test.
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Decision rule.
    #[arg(long, value_enum, default_value_t = ModeArg::CdfTest)]
    pub mode: ModeArg,
    /// Density threshold, used only with --mode paper_literal.
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    /// Inject a fault into every trial:
    /// kind:magnitude[:idx,idx,...] with kind one of far_threshold_shift,
    /// near_threshold_shift, single_keypoint_offset, correlated_shift
    /// (magnitude in meters for the threshold shifts, pixels otherwise).
    #[arg(long)]
    pub fault: Option<String>,
    /// Write the per-trial CSV table to this path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write all trials as a PredictionFile (one frame per trial) with
    /// truth pixels and the approach prior embedded.
    #[arg(long)]
    pub emit_predictions: Option<PathBuf>,
}
