//! Synthetic approach-scenario generation, noise and fault injection, and
//! seeded Monte Carlo harnesses.
//!
//! A scenario places the camera on an approach prior (glide slope,
//! distance, lateral offset), projects the four runway corners, and adds
//! independent Gaussian pixel noise with the configured σ; the prediction
//! set carries the true σ, i.e. the well-calibrated-by-construction regime.
//! Everything is `f64` and fully determined by the 64-bit seed: noise comes
//! from a counter-based generator (ChaCha8), and per-trial seeds are
//! derived from the master seed with a SplitMix64 step, so any recorded
//! trial can be reproduced standalone from its own seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Error;
use crate::geometry::{project, runway_corners, CameraIntrinsics, PixelPoint, Pose, WorldPoint};
use crate::numerics::ChiSquared;
use crate::pnp::{initial_pose_from_prior, PnpProblem};
use crate::raim::{check_rejection, Decision, IntegrityConfig, IntegrityResult};
use crate::uncertainty::{GaussianKeypoint, PredictionSet};

/// Pixel-noise standard deviation: one value for all keypoints, or one per
/// keypoint (applied to both axes).
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaSpec {
    Uniform(f64),
    PerKeypoint(Vec<f64>),
}

impl SigmaSpec {
    fn resolve(&self, k: usize) -> Result<Vec<f64>, Error> {
        let sigmas = match self {
            SigmaSpec::Uniform(s) => vec![*s; k],
            SigmaSpec::PerKeypoint(v) => {
                if v.len() != k {
                    return Err(Error::MismatchedLengths {
                        left: v.len(),
                        right: k,
                        context: "per-keypoint sigma list vs keypoint count",
                    });
                }
                v.clone()
            }
        };
        if sigmas.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Error::domain("sigma_px must be positive and finite"));
        }
        Ok(sigmas)
    }
}

/// Full description of a synthetic approach scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub runway_length: f64,
    pub runway_width: f64,
    /// Approach glide slope in degrees (≥ 1 for validity).
    pub glide_deg: f64,
    /// Along-track distance to the threshold in meters.
    pub distance: f64,
    pub lateral_offset: f64,
    pub camera: CameraIntrinsics<f64>,
    pub sigma_px: SigmaSpec,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    /// A narrow-field zoom crop of a 2000 m approach, chosen so the
    /// canonical 184 m far-threshold fault is geometrically observable
    /// while all corners stay inside the image.
    fn default() -> Self {
        Self {
            runway_length: 2000.0,
            runway_width: 45.0,
            glide_deg: 3.0,
            distance: 2000.0,
            lateral_offset: 0.0,
            camera: CameraIntrinsics::new(20000.0, 20000.0, 539.5, 539.5, 1080, 1080)
                .expect("default intrinsics are valid"),
            sigma_px: SigmaSpec::Uniform(1.0),
            seed: 42,
        }
    }
}

/// One realized scenario: ground truth plus the noisy prediction set.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub true_pose: Pose<f64>,
    pub world_points: Vec<WorldPoint<f64>>,
    pub true_pixels: Vec<PixelPoint<f64>>,
    pub predictions: PredictionSet<f64>,
    pub camera: CameraIntrinsics<f64>,
    /// The noise realization (μ − true pixel) per keypoint, kept so faults
    /// can re-apply the identical noise on top of shifted reprojections.
    noise: Vec<(f64, f64)>,
    sigmas: Vec<f64>,
}

/// Kinds of injected keypoint faults.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultKind {
    /// Far corners re-projected as if the runway were `magnitude` meters
    /// shorter (far threshold closer to the camera).
    FarThresholdShift,
    /// Near corners re-projected as if the threshold were `magnitude`
    /// meters farther along the centerline.
    NearThresholdShift,
    /// `magnitude` pixels added to the u coordinate of each affected
    /// keypoint.
    SingleKeypointOffset,
    /// The same pixel vector magnitude·(1/√2, 1/√2) added to every
    /// keypoint; perfectly correlated errors evade the residual test.
    CorrelatedShift,
}

impl FaultKind {
    pub fn name(&self) -> &'static str {
        match self {
            FaultKind::FarThresholdShift => "far_threshold_shift",
            FaultKind::NearThresholdShift => "near_threshold_shift",
            FaultKind::SingleKeypointOffset => "single_keypoint_offset",
            FaultKind::CorrelatedShift => "correlated_shift",
        }
    }
}

/// A fault to inject into a scenario's predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct FaultSpec {
    pub kind: FaultKind,
    /// Meters for the threshold shifts, pixels for the pixel offsets;
    /// must be ≥ 0.
    pub magnitude: f64,
    /// Keypoint indices, consulted only by `SingleKeypointOffset`.
    pub affected: Vec<usize>,
}

impl FaultSpec {
    pub fn new(kind: FaultKind, magnitude: f64) -> Self {
        Self { kind, magnitude, affected: Vec::new() }
    }
}

/// Generates a scenario: prior-geometry pose, exact corner projections,
/// and noisy Gaussian predictions carrying the true σ.
///
/// Fails with [`Error::ScenarioInfeasible`] if any corner projects behind
/// the camera or outside the image.
pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario, Error> {
    if cfg.glide_deg < 1.0 {
        return Err(Error::domain("scenario glide slope must be at least 1 degree"));
    }
    let true_pose = initial_pose_from_prior(cfg.glide_deg, cfg.distance, cfg.lateral_offset)?;
    let world_points = runway_corners(cfg.runway_length, cfg.runway_width)?.to_vec();
    let sigmas = cfg.sigma_px.resolve(world_points.len())?;

    let mut true_pixels = Vec::with_capacity(world_points.len());
    for (i, point) in world_points.iter().enumerate() {
        let px = project(point, &true_pose, &cfg.camera).map_err(|e| match e {
            Error::BehindCamera { depth } => Error::ScenarioInfeasible(format!(
                "corner {i} behind the camera (depth {depth:e})"
            )),
            other => other,
        })?;
        let (w, h) = (f64::from(cfg.camera.width), f64::from(cfg.camera.height));
        if !(0.0..=w).contains(&px.u) || !(0.0..=h).contains(&px.v) {
            return Err(Error::ScenarioInfeasible(format!(
                "corner {i} projects to ({:.1}, {:.1}), outside the {w}x{h} image",
                px.u, px.v
            )));
        }
        true_pixels.push(px);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut noise = Vec::with_capacity(world_points.len());
    let mut keypoints = Vec::with_capacity(world_points.len());
    for (px, sigma) in true_pixels.iter().zip(&sigmas) {
        let nu: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
        let nv: f64 = rng.sample::<f64, _>(StandardNormal) * sigma;
        noise.push((nu, nv));
        keypoints.push(GaussianKeypoint::new(
            PixelPoint::new(px.u + nu, px.v + nv),
            *sigma,
            *sigma,
        )?);
    }

    Ok(Scenario {
        true_pose,
        world_points,
        true_pixels,
        predictions: PredictionSet::new(keypoints)?,
        camera: cfg.camera,
        noise,
        sigmas,
    })
}

/// Applies a fault to a scenario's predictions, re-applying the scenario's
/// stored noise realization on top of the shifted reprojections (so
/// magnitude 0 is the identity). σ values are unchanged.
pub fn inject_fault(scenario: &Scenario, fault: &FaultSpec) -> Result<PredictionSet<f64>, Error> {
    if !(fault.magnitude >= 0.0 && fault.magnitude.is_finite()) {
        return Err(Error::domain("fault magnitude must be nonnegative and finite"));
    }
    let k = scenario.world_points.len();
    for &idx in &fault.affected {
        if idx >= k {
            return Err(Error::InvalidKeypointIndex { index: idx, count: k });
        }
    }

    let mut faulted_true: Vec<PixelPoint<f64>> = scenario.true_pixels.clone();
    match fault.kind {
        FaultKind::FarThresholdShift | FaultKind::NearThresholdShift => {
            // Corner layout is near-left, near-right, far-left, far-right.
            let (indices, dx) = match fault.kind {
                FaultKind::FarThresholdShift => (&[2usize, 3][..], -fault.magnitude),
                _ => (&[0usize, 1][..], fault.magnitude),
            };
            for &i in indices {
                let mut shifted = scenario.world_points[i];
                shifted.0.x += dx;
                faulted_true[i] = project(&shifted, &scenario.true_pose, &scenario.camera)?;
            }
        }
        FaultKind::SingleKeypointOffset => {
            if fault.affected.is_empty() {
                return Err(Error::EmptyInput(
                    "single_keypoint_offset needs at least one affected index",
                ));
            }
            for &i in &fault.affected {
                faulted_true[i].u += fault.magnitude;
            }
        }
        FaultKind::CorrelatedShift => {
            let d = fault.magnitude / std::f64::consts::SQRT_2;
            for px in &mut faulted_true {
                px.u += d;
                px.v += d;
            }
        }
    }

    let keypoints = faulted_true
        .iter()
        .zip(&scenario.noise)
        .zip(&scenario.sigmas)
        .map(|((px, (nu, nv)), sigma)| {
            GaussianKeypoint::new(PixelPoint::new(px.u + nu, px.v + nv), *sigma, *sigma)
        })
        .collect::<Result<Vec<_>, _>>()?;
    PredictionSet::new(keypoints)
}

/// One Monte Carlo trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    /// Trial index within the run.
    pub trial: u64,
    /// Standalone scenario seed for this trial; rerunning
    /// [`generate_scenario`] with it reproduces the trial exactly.
    pub seed: u64,
    pub true_pose: Pose<f64>,
    pub predictions: PredictionSet<f64>,
    pub fault: Option<FaultSpec>,
    pub result: IntegrityResult<f64>,
    pub position_error_m: f64,
    pub rotation_error_rad: f64,
}

/// Aggregate statistics over a Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloSummary {
    pub n_trials: u64,
    pub n_valid: u64,
    pub n_infeasible: u64,
    /// Fraction of valid trials rejected at the configured test.
    pub rejection_rate: f64,
    pub mean_stat: f64,
    /// (quantile level, stat value) at 5/25/50/75/95%.
    pub stat_quantiles: Vec<(f64, f64)>,
    /// Kolmogorov–Smirnov distance between the empirical stat distribution
    /// and the χ²_dof CDF.
    pub ks_distance: f64,
    pub dof: u32,
    pub alpha: f64,
}

impl MonteCarloSummary {
    pub fn median_stat(&self) -> f64 {
        self.stat_quantiles
            .iter()
            .find(|(q, _)| (*q - 0.5).abs() < 1e-12)
            .map(|(_, v)| *v)
            .expect("median quantile is always present")
    }
}

/// A full Monte Carlo run: per-trial records plus the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRun {
    pub records: Vec<TrialRecord>,
    pub summary: MonteCarloSummary,
}

/// SplitMix64 mixing step.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Standalone per-trial seed derived from the master seed.
pub fn trial_seed(master: u64, trial: u64) -> u64 {
    splitmix64(master ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Runs `n_trials` independent seeded trials of the integrity check,
/// optionally injecting the same fault into every trial.
///
/// Infeasible scenarios are counted, not fatal; the run fails only if no
/// trial is feasible. Fully deterministic given the master seed in
/// `cfg.seed`.
pub fn run_monte_carlo(
    cfg: &ScenarioConfig,
    integrity: &IntegrityConfig<f64>,
    n_trials: u64,
    fault: Option<&FaultSpec>,
) -> Result<MonteCarloRun, Error> {
    if n_trials == 0 {
        return Err(Error::domain("n_trials must be at least 1"));
    }
    let init = initial_pose_from_prior(cfg.glide_deg, cfg.distance, cfg.lateral_offset)?;
    let mut records = Vec::with_capacity(n_trials as usize);
    let mut n_infeasible = 0u64;

    for trial in 0..n_trials {
        let seed = trial_seed(cfg.seed, trial);
        let trial_cfg = ScenarioConfig { seed, ..cfg.clone() };
        let scenario = match generate_scenario(&trial_cfg) {
            Ok(s) => s,
            Err(Error::ScenarioInfeasible(_)) => {
                n_infeasible += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let predictions = match fault {
            Some(f) => inject_fault(&scenario, f)?,
            None => scenario.predictions.clone(),
        };
        let problem =
            PnpProblem::new(scenario.world_points.clone(), predictions.clone(), cfg.camera)?;
        let result = check_rejection(&problem, &init, integrity)?;
        let position_error_m =
            (result.pose.pose.position() - scenario.true_pose.position()).norm();
        let rotation_error_rad = result.pose.pose.rotation_angle_to(&scenario.true_pose);
        records.push(TrialRecord {
            trial,
            seed,
            true_pose: scenario.true_pose,
            predictions,
            fault: fault.cloned(),
            result,
            position_error_m,
            rotation_error_rad,
        });
    }

    if records.is_empty() {
        return Err(Error::ScenarioInfeasible(format!(
            "all {n_trials} trials were infeasible"
        )));
    }

    let summary = summarize(&records, integrity.alpha(), n_trials, n_infeasible)?;
    Ok(MonteCarloRun { records, summary })
}

fn summarize(
    records: &[TrialRecord],
    alpha: f64,
    n_trials: u64,
    n_infeasible: u64,
) -> Result<MonteCarloSummary, Error> {
    let mut stats: Vec<f64> = records.iter().map(|r| r.result.stat).collect();
    stats.sort_by(|a, b| a.partial_cmp(b).expect("stats are finite"));
    let n = stats.len();
    let n_rejected = records
        .iter()
        .filter(|r| r.result.decision == Decision::Reject)
        .count();
    let mean_stat = stats.iter().sum::<f64>() / n as f64;
    let quantile = |q: f64| {
        let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
        stats[idx]
    };
    let stat_quantiles = [0.05, 0.25, 0.5, 0.75, 0.95]
        .iter()
        .map(|&q| (q, quantile(q)))
        .collect();
    let dof = records[0].result.dof;
    let ks_distance = ks_distance_to_chi2(&stats, dof)?;
    Ok(MonteCarloSummary {
        n_trials,
        n_valid: n as u64,
        n_infeasible,
        rejection_rate: n_rejected as f64 / n as f64,
        mean_stat,
        stat_quantiles,
        ks_distance,
        dof,
        alpha,
    })
}

/// Kolmogorov–Smirnov distance between a *sorted* sample and the χ²_dof
/// CDF.
pub fn ks_distance_to_chi2(sorted_stats: &[f64], dof: u32) -> Result<f64, Error> {
    if sorted_stats.is_empty() {
        return Err(Error::EmptyInput("KS distance needs samples"));
    }
    let chi2 = ChiSquared::new(dof)?;
    let n = sorted_stats.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted_stats.iter().enumerate() {
        let f = chi2.cdf(x)?;
        let hi = (i as f64 + 1.0) / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi.max(lo));
    }
    Ok(d)
}
