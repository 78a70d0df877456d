//! Runway pose estimation with runtime integrity assurance.
//!
//! This crate implements the non-neural core of a vision-based approach
//! pipeline. A keypoint detector (external to this crate) produces heatmaps
//! or Gaussian pixel predictions for known runway landmarks; everything
//! downstream of that lives here:
//!
//! 1. **[`softargmax`]** — differentiable sub-pixel coordinate extraction
//!    from activation heatmaps.
//! 2. **[`uncertainty`]** — Gaussian keypoint predictions, the NLL
//!    objective, and calibration/sharpness evaluation.
//! 3. **[`geometry`]** — pinhole projection and its analytic 2×6 pose
//!    Jacobian.
//! 4. **[`pnp`]** — uncertainty-weighted Pose-from-N-Points via
//!    Levenberg–Marquardt.
//! 5. **[`raim`]** — a residual-based integrity check that flags keypoint
//!    sets inconsistent with the known runway geometry, using a χ² test on
//!    the whitened post-fit residual.
//! 6. **[`sim`]** — a seeded synthetic approach simulator with fault
//!    injection and Monte Carlo harnesses.
//!
//! Core math is generic over the scalar type via [`Real`] (`f32` or `f64`);
//! concrete `f64` aliases are exported at the crate root. The simulator and
//! all file interfaces are `f64`.
//!
//! # Example
//!
//! One synthetic approach frame through the full pipeline:
//!
//! ```
//! use pose_integrity::pnp::{initial_pose_from_prior, PnpProblem};
//! use pose_integrity::raim::{check_rejection, Decision, IntegrityConfig};
//! use pose_integrity::sim::{generate_scenario, inject_fault, FaultKind, FaultSpec, ScenarioConfig};
//!
//! let cfg = ScenarioConfig::default();
//! let scenario = generate_scenario(&cfg)?;
//! let init = initial_pose_from_prior(cfg.glide_deg, cfg.distance, cfg.lateral_offset)?;
//! let test = IntegrityConfig::with_alpha(1e-3)?;
//!
//! // Nominal predictions are consistent with the runway geometry.
//! let nominal = PnpProblem::new(
//!     scenario.world_points.clone(),
//!     scenario.predictions.clone(),
//!     cfg.camera,
//! )?;
//! let result = check_rejection(&nominal, &init, &test)?;
//! assert_eq!(result.decision, Decision::Accept);
//!
//! // A far threshold predicted 184 m short is flagged.
//! let faulted = inject_fault(&scenario, &FaultSpec::new(FaultKind::FarThresholdShift, 184.0))?;
//! let problem = PnpProblem::new(scenario.world_points.clone(), faulted, cfg.camera)?;
//! let result = check_rejection(&problem, &init, &test)?;
//! assert_eq!(result.decision, Decision::Reject);
//! # Ok::<(), pose_integrity::Error>(())
//! ```

pub mod error;
pub mod geometry;
pub mod numerics;
pub mod pnp;
pub mod raim;
mod scalar;
pub mod sim;
pub mod softargmax;
pub mod uncertainty;

pub use error::Error;
pub use scalar::Real;

pub use geometry::{CameraIntrinsics, PixelPoint, Pose, WorldPoint};
pub use numerics::ChiSquared;
pub use pnp::{PnpOptions, PnpProblem, PnpSolution};
pub use raim::{Decision, IntegrityConfig, IntegrityMode, IntegrityResult};
pub use softargmax::{Heatmap, NormalizedKeypoint, ProbabilityGrid};
pub use uncertainty::{CalibrationCurve, GaussianKeypoint, NllForm, PredictionSet};

/// Concrete `f64` aliases for the generic core types.
pub type CameraIntrinsicsF64 = CameraIntrinsics<f64>;
pub type WorldPointF64 = WorldPoint<f64>;
pub type PixelPointF64 = PixelPoint<f64>;
pub type PoseF64 = Pose<f64>;
pub type HeatmapF64 = Heatmap<f64>;
pub type NormalizedKeypointF64 = NormalizedKeypoint<f64>;
pub type GaussianKeypointF64 = GaussianKeypoint<f64>;
pub type PredictionSetF64 = PredictionSet<f64>;
pub type CalibrationCurveF64 = CalibrationCurve<f64>;
pub type PnpProblemF64 = PnpProblem<f64>;
pub type PnpOptionsF64 = PnpOptions<f64>;
pub type PnpSolutionF64 = PnpSolution<f64>;
pub type IntegrityConfigF64 = IntegrityConfig<f64>;
pub type IntegrityResultF64 = IntegrityResult<f64>;
