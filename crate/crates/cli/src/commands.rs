//! The five subcommands. Each returns the process exit code:
//! 0 = success / all frames accepted, 1 = input error (mapped by main),
//! 2 = any frame rejected or non-convergent.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use pose_integrity::geometry::{project, Pose};
use pose_integrity::pnp::{initial_pose_from_prior, solve_weighted_pnp, PnpOptions, PnpProblem};
use pose_integrity::raim::{check_rejection, Decision, IntegrityConfig, IntegrityMode};
use pose_integrity::sim::{
    run_monte_carlo, FaultKind, FaultSpec, ScenarioConfig, SigmaSpec, TrialRecord,
};
use pose_integrity::softargmax::{scale_to_pixels, soft_argmax};
use pose_integrity::uncertainty::{
    calibration_curve, default_levels, per_keypoint_calibration_curves, recalibrate,
    sharpness_histogram,
};

use crate::cli::{
    CalibrateArgs, CheckArgs, InitFlags, ModeArg, PnpArgs, SimulateArgs, SoftargmaxArgs,
};
use crate::formats::{
    decision_str, fmt_f64, CameraJson, FrameJson, InitJson, IntegrityJson, KeypointJson,
    PredictionFile, SolutionJson, FORMAT_VERSION,
};

/// Resolves the initializer pose from flags, falling back to the file's
/// embedded init block.
fn resolve_init(file: &PredictionFile, flags: &InitFlags) -> Result<Pose<f64>> {
    let glide = flags
        .init_glide
        .or(file.init.map(|i| i.glide_deg))
        .context("no initializer: pass --init-glide/--init-distance or embed an init block")?;
    let distance = flags
        .init_distance
        .or(file.init.map(|i| i.distance_m))
        .context("no initializer distance: pass --init-distance or embed an init block")?;
    let offset = flags
        .init_offset
        .unwrap_or_else(|| file.init.map(|i| i.lateral_offset_m).unwrap_or(0.0));
    Ok(initial_pose_from_prior(glide, distance, offset)?)
}

fn integrity_mode(mode: ModeArg) -> IntegrityMode {
    match mode {
        ModeArg::CdfTest => IntegrityMode::CdfTest,
        ModeArg::PaperLiteral => IntegrityMode::PaperLiteral,
    }
}

fn with_pool<T: Send>(jobs: usize, work: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs <= 1 {
        return Ok(work());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building thread pool")?;
    Ok(pool.install(work))
}

fn print_json_lines<T: Serialize>(rows: &[T]) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn cmd_check(args: &CheckArgs) -> Result<i32> {
    let file = PredictionFile::load(&args.input)?;
    if file.frames.is_empty() {
        bail!("input has no frames");
    }
    let camera = file.camera()?;
    let world_points = file.world_points();
    let init = resolve_init(&file, &args.init)?;
    let cfg = IntegrityConfig::new(args.alpha, integrity_mode(args.mode), args.tau)?;

    // Validate every frame before doing any work, so malformed input exits
    // 1 without partial output.
    let problems = (0..file.frames.len())
        .map(|i| {
            Ok(PnpProblem::new(
                world_points.clone(),
                file.predictions(i)?,
                camera,
            )?)
        })
        .collect::<Result<Vec<_>>>()?;

    let results = with_pool(args.jobs, || {
        use rayon::prelude::*;
        problems
            .par_iter()
            .map(|prob| check_rejection(prob, &init, &cfg))
            .collect::<Vec<_>>()
    })?;

    let mut rows = Vec::with_capacity(results.len());
    let mut any_reject = false;
    for (i, res) in results.into_iter().enumerate() {
        let res = res?;
        any_reject |= res.decision == Decision::Reject;
        rows.push(IntegrityJson::new(i, &res));
    }
    print_json_lines(&rows)?;
    Ok(if any_reject { 2 } else { 0 })
}

pub fn cmd_pnp(args: &PnpArgs) -> Result<i32> {
    let file = PredictionFile::load(&args.input)?;
    if file.frames.is_empty() {
        bail!("input has no frames");
    }
    let camera = file.camera()?;
    let world_points = file.world_points();
    let init = resolve_init(&file, &args.init)?;

    let problems = (0..file.frames.len())
        .map(|i| {
            Ok(PnpProblem::new(
                world_points.clone(),
                file.predictions(i)?,
                camera,
            )?)
        })
        .collect::<Result<Vec<_>>>()?;

    let opts = PnpOptions {
        max_iterations: args.max_iterations,
        tol: args.tol,
        ..PnpOptions::default()
    };
    let solutions = with_pool(args.jobs, || {
        use rayon::prelude::*;
        problems
            .par_iter()
            .map(|prob| solve_weighted_pnp(prob, &init, &opts))
            .collect::<Vec<_>>()
    })?;

    let mut rows = Vec::with_capacity(solutions.len());
    let mut any_failed = false;
    for (i, sol) in solutions.into_iter().enumerate() {
        let sol = sol?;
        any_failed |= !sol.converged;
        rows.push(SolutionJson::new(i, &sol));
    }
    print_json_lines(&rows)?;
    Ok(if any_failed { 2 } else { 0 })
}

#[derive(Serialize)]
struct SoftargmaxKeypointJson {
    normalized: [f64; 2],
    pixel: [f64; 2],
}

#[derive(Serialize)]
struct SoftargmaxFrameJson {
    frame: usize,
    keypoints: Vec<SoftargmaxKeypointJson>,
}

pub fn cmd_softargmax(args: &SoftargmaxArgs) -> Result<i32> {
    let file = PredictionFile::load(&args.input)?;
    if file.frames.is_empty() {
        bail!("input has no frames");
    }
    let mut rows = Vec::with_capacity(file.frames.len());
    for i in 0..file.frames.len() {
        let heatmaps = file.heatmaps(i)?;
        let (crop_w, crop_h) = args.crop_size;
        let keypoints = heatmaps
            .iter()
            .map(|h| {
                let k = soft_argmax(h);
                let px = scale_to_pixels(&k, crop_w, crop_h)?;
                Ok(SoftargmaxKeypointJson {
                    normalized: [k.x, k.y],
                    pixel: [px.u, px.v],
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(SoftargmaxFrameJson { frame: i, keypoints });
    }
    print_json_lines(&rows)?;
    Ok(0)
}

#[derive(Serialize)]
struct SharpnessJson {
    mean: f64,
    median: f64,
    n_values: usize,
    bin_edges: Vec<f64>,
    counts: Vec<usize>,
}

#[derive(Serialize)]
struct CalibrateJson {
    curve: Vec<[f64; 2]>,
    sharpness: SharpnessJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    per_keypoint: Option<Vec<Vec<[f64; 2]>>>,
}

pub fn cmd_calibrate(args: &CalibrateArgs) -> Result<i32> {
    let file = PredictionFile::load(&args.input)?;
    if file.frames.is_empty() {
        bail!("input has no frames");
    }
    let mut preds = Vec::with_capacity(file.frames.len());
    let mut truths = Vec::with_capacity(file.frames.len());
    for i in 0..file.frames.len() {
        let mut p = file.predictions(i)?;
        if let Some(factor) = args.recalibrate_factor {
            p = recalibrate(&p, factor)?;
        }
        preds.push(p);
        truths.push(file.truths(i)?);
    }

    let levels = match &args.levels {
        Some(spec) => parse_f64_list(spec).context("parsing --levels")?,
        None => default_levels(),
    };
    let curve = calibration_curve(&preds, &truths, &levels)?;

    let edges: Vec<f64> = (0..=50).map(|i| i as f64 * 0.1).collect();
    let sharp = sharpness_histogram(&preds, &edges)?;

    let per_keypoint = if args.per_keypoint {
        let curves = per_keypoint_calibration_curves(&preds, &truths, &levels)?;
        Some(
            curves
                .iter()
                .map(|c| c.points().iter().map(|&(r, c)| [r, c]).collect())
                .collect(),
        )
    } else {
        None
    };

    if let Some(path) = &args.out {
        write_curve_csv(path, curve.points())?;
    }

    let out = CalibrateJson {
        curve: curve.points().iter().map(|&(r, c)| [r, c]).collect(),
        sharpness: SharpnessJson {
            mean: sharp.mean,
            median: sharp.median,
            n_values: sharp.n_values,
            bin_edges: sharp.bin_edges,
            counts: sharp.counts,
        },
        per_keypoint,
    };
    println!("{}", serde_json::to_string(&out)?);
    Ok(0)
}

fn write_curve_csv(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut text = String::from("rho,coverage\n");
    for &(rho, cov) in points {
        text.push_str(&format!("{},{}\n", fmt_f64(rho), fmt_f64(cov)));
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[derive(Serialize)]
struct FaultJson {
    kind: &'static str,
    magnitude: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    affected: Vec<usize>,
}

#[derive(Serialize)]
struct SummaryJson {
    n_trials: u64,
    n_valid: u64,
    n_infeasible: u64,
    rejection_rate: f64,
    alpha: f64,
    dof: u32,
    mean_stat: f64,
    median_stat: f64,
    stat_quantiles: Vec<[f64; 2]>,
    ks_distance: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    fault: Option<FaultJson>,
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<i32> {
    let camera = pose_integrity::geometry::CameraIntrinsics::new(
        args.fx,
        args.fy,
        args.cx,
        args.cy,
        args.image_width,
        args.image_height,
    )?;
    let sigma_px = match &args.sigma_per_keypoint {
        Some(spec) => SigmaSpec::PerKeypoint(parse_f64_list(spec).context("parsing --sigma-per-keypoint")?),
        None => SigmaSpec::Uniform(args.sigma),
    };
    let cfg = ScenarioConfig {
        runway_length: args.runway_length,
        runway_width: args.runway_width,
        glide_deg: args.glide,
        distance: args.distance,
        lateral_offset: args.lateral_offset,
        camera,
        sigma_px,
        seed: args.seed,
    };
    let integrity = IntegrityConfig::new(args.alpha, integrity_mode(args.mode), args.tau)?;
    let fault = args.fault.as_deref().map(parse_fault).transpose()?;

    let run = run_monte_carlo(&cfg, &integrity, args.trials, fault.as_ref())?;

    if let Some(path) = &args.out {
        write_trials_csv(path, &run.records)?;
    }
    if let Some(path) = &args.emit_predictions {
        emit_predictions(path, &cfg, &run.records)?;
    }

    let s = &run.summary;
    let out = SummaryJson {
        n_trials: s.n_trials,
        n_valid: s.n_valid,
        n_infeasible: s.n_infeasible,
        rejection_rate: s.rejection_rate,
        alpha: s.alpha,
        dof: s.dof,
        mean_stat: s.mean_stat,
        median_stat: s.median_stat(),
        stat_quantiles: s.stat_quantiles.iter().map(|&(q, v)| [q, v]).collect(),
        ks_distance: s.ks_distance,
        fault: fault.as_ref().map(|f| FaultJson {
            kind: f.kind.name(),
            magnitude: f.magnitude,
            affected: f.affected.clone(),
        }),
    };
    println!("{}", serde_json::to_string(&out)?);
    Ok(0)
}

fn write_trials_csv(path: &Path, records: &[TrialRecord]) -> Result<()> {
    let mut text = String::from("seed,stat,p_value,decision,pos_err_m,rot_err_rad\n");
    for r in records {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.seed,
            fmt_f64(r.result.stat),
            fmt_f64(r.result.p_value),
            decision_str(r.result.decision),
            fmt_f64(r.position_error_m),
            fmt_f64(r.rotation_error_rad),
        ));
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes the run's per-trial predictions as a PredictionFile (one frame
/// per trial), with truth pixels and the approach prior embedded so
/// `check` and `calibrate` reproduce the in-process results.
fn emit_predictions(path: &Path, cfg: &ScenarioConfig, records: &[TrialRecord]) -> Result<()> {
    let world_points =
        pose_integrity::geometry::runway_corners(cfg.runway_length, cfg.runway_width)?;
    let frames = records
        .iter()
        .map(|r| {
            let keypoints = r
                .predictions
                .keypoints()
                .iter()
                .map(|k| KeypointJson {
                    mu_px: [k.mu.u, k.mu.v],
                    sigma_px: [k.sigma_x(), k.sigma_y()],
                })
                .collect();
            let truth = world_points
                .iter()
                .map(|w| {
                    let px = project(w, &r.true_pose, &cfg.camera)?;
                    Ok([px.u, px.v])
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FrameJson {
                keypoints: Some(keypoints),
                truth_px: Some(truth),
                heatmaps: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let file = PredictionFile {
        version: FORMAT_VERSION.to_string(),
        camera: CameraJson {
            fx: cfg.camera.fx,
            fy: cfg.camera.fy,
            cx: cfg.camera.cx,
            cy: cfg.camera.cy,
            width: cfg.camera.width,
            height: cfg.camera.height,
        },
        world_points: world_points.iter().map(|w| [w.0.x, w.0.y, w.0.z]).collect(),
        init: Some(InitJson {
            glide_deg: cfg.glide_deg,
            distance_m: cfg.distance,
            lateral_offset_m: cfg.lateral_offset,
        }),
        frames,
    };
    file.save(path)
}

/// Parses `kind:magnitude` or `kind:magnitude:idx,idx,...`.
pub fn parse_fault(spec: &str) -> Result<FaultSpec> {
    let mut parts = spec.splitn(3, ':');
    let kind = match parts.next().unwrap_or("") {
        "far_threshold_shift" => FaultKind::FarThresholdShift,
        "near_threshold_shift" => FaultKind::NearThresholdShift,
        "single_keypoint_offset" => FaultKind::SingleKeypointOffset,
        "correlated_shift" => FaultKind::CorrelatedShift,
        other => bail!(
            "unknown fault kind {other:?} (expected far_threshold_shift, \
             near_threshold_shift, single_keypoint_offset, or correlated_shift)"
        ),
    };
    let magnitude: f64 = parts
        .next()
        .context("fault spec needs kind:magnitude")?
        .parse()
        .context("fault magnitude must be a number")?;
    let affected = match parts.next() {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse::<usize>().context("fault index must be an integer"))
            .collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };
    Ok(FaultSpec { kind, magnitude, affected })
}

fn parse_f64_list(spec: &str) -> Result<Vec<f64>> {
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(Into::into))
        .collect()
}
