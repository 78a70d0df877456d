//! Residual-based integrity check over a full prediction set.
//!
//! After the weighted PNP solve, the known world points are reprojected at
//! the estimated pose and compared against the predictions. The whitened
//! innovation Δ = L⁻¹(y^reproject − μ) is projected onto the orthogonal
//! complement of the whitened Jacobian's column space, removing the
//! directions absorbed by the 6 estimated pose parameters; under the null
//! (errors drawn from the predicted Gaussians) the squared norm of what
//! remains is χ²-distributed with 2K − 6 degrees of freedom.
//!
//! Whitening happens *before* the projection (H_w = L⁻¹H), which is the
//! form under which the statistic is exactly χ² for heteroscedastic
//! per-keypoint σ; with uniform σ it coincides with projecting first and
//! whitening after.

use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::Error;
use crate::geometry::{project, Pose};
use crate::numerics::ChiSquared;
use crate::pnp::{solve_weighted_pnp, PnpOptions, PnpProblem, PnpSolution};
use crate::scalar::{cast, Real};

/// How the residual statistic is turned into an accept/reject decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntegrityMode {
    /// Standard residual-RAIM test: REJECT iff 1 − CDF(stat) < α.
    CdfTest,
    /// Literal density rule: REJECT iff pdf(χ²_dof, stat) > τ.
    PaperLiteral,
}

/// Integrity-check configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrityConfig<T> {
    alpha: T,
    mode: IntegrityMode,
    tau: T,
}

impl<T: Real> IntegrityConfig<T> {
    /// `alpha` is the false-alarm probability in (0, 1); `tau` is only
    /// consulted in [`IntegrityMode::PaperLiteral`].
    pub fn new(alpha: T, mode: IntegrityMode, tau: T) -> Result<Self, Error> {
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(Error::domain("alpha must lie in (0, 1)"));
        }
        if !tau.is_finite() {
            return Err(Error::domain("tau must be finite"));
        }
        Ok(Self { alpha, mode, tau })
    }

    /// CDF-test configuration at the given false-alarm probability.
    pub fn with_alpha(alpha: T) -> Result<Self, Error> {
        Self::new(alpha, IntegrityMode::CdfTest, T::zero())
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn mode(&self) -> IntegrityMode {
        self.mode
    }

    pub fn tau(&self) -> T {
        self.tau
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject,
}

/// Outcome of one integrity check.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrityResult<T> {
    /// ‖(I − H_w H_w†) L⁻¹(y^reproject − μ)‖².
    pub stat: T,
    /// Residual degrees of freedom, 2K − rank(H_w) (2K − 6 when well posed).
    pub dof: u32,
    /// 1 − CDF(χ²_dof, stat), in both modes.
    pub p_value: T,
    pub decision: Decision,
    pub pose: PnpSolution<T>,
    /// Raw per-keypoint reprojection residuals y^reproject − μ, in pixels.
    pub residuals: Vec<Vector2<T>>,
    /// True when rank(H_w) < 6; dof is reduced accordingly.
    pub rank_deficient: bool,
}

/// Residual-space projector S = I − H_w H_w† onto the orthogonal
/// complement of col(H_w), with the numerical rank used to form it.
///
/// S is symmetric and idempotent, S·H_w = 0, and trace(S) = 2K − rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualProjector<T> {
    pub matrix: DMatrix<T>,
    pub rank: usize,
}

/// Builds the residual projector from the whitened 2K×6 Jacobian via a
/// column-pivoted QR factorization, with rank tolerance 1e−10·‖H_w‖.
pub fn residual_projector<T: Real>(h_w: &DMatrix<T>) -> ResidualProjector<T> {
    let m = h_w.nrows();
    let qr = h_w.clone().col_piv_qr();
    let rank_tol = cast::<T>(1e-10) * h_w.norm();
    let r = qr.r();
    let rank = (0..r.nrows().min(r.ncols()))
        .take_while(|&i| r[(i, i)].abs() > rank_tol)
        .count();
    let q = qr.q();
    let mut s = DMatrix::identity(m, m);
    for col in 0..rank {
        let qc = q.column(col);
        // S -= q_c q_cᵀ
        for i in 0..m {
            for j in 0..m {
                s[(i, j)] -= qc[i] * qc[j];
            }
        }
    }
    ResidualProjector { matrix: s, rank }
}

/// Runs the full integrity check: weighted PNP solve, reprojection,
/// whitened residual projection, χ² test.
///
/// Requires K ≥ 4 so the test has at least 2 degrees of freedom. Solver
/// non-convergence forces a REJECT decision (the statistic is still
/// reported).
pub fn check_rejection<T: Real>(
    prob: &PnpProblem<T>,
    init: &Pose<T>,
    cfg: &IntegrityConfig<T>,
) -> Result<IntegrityResult<T>, Error> {
    let k = prob.len();
    if 2 * k < 7 {
        return Err(Error::InsufficientKeypoints {
            got: k,
            min: 4,
            context: "integrity test needs dof = 2K - 6 >= 1",
        });
    }

    let solution = solve_weighted_pnp(prob, init, &PnpOptions::default())?;

    // Whitened innovation and raw per-keypoint residuals at the solution.
    let mut innovation = DVector::zeros(2 * k);
    let mut residuals = Vec::with_capacity(k);
    for (i, (point, kp)) in prob
        .world_points()
        .iter()
        .zip(prob.predictions().keypoints())
        .enumerate()
    {
        let reproj = project(point, &solution.pose, prob.camera())?;
        let du = reproj.u - kp.mu.u;
        let dv = reproj.v - kp.mu.v;
        residuals.push(Vector2::new(du, dv));
        innovation[2 * i] = du / kp.sigma_x();
        innovation[2 * i + 1] = dv / kp.sigma_y();
    }

    let h_w = prob.whitened_jacobian(&solution.pose)?;
    let projector = residual_projector(&h_w);
    let projected = &projector.matrix * innovation;
    let stat = projected.norm_squared();

    let dof = (2 * k - projector.rank) as u32;
    let chi2 = ChiSquared::new(dof)?;
    let p_value = T::one() - chi2.cdf(stat)?;

    let mut decision = match cfg.mode {
        IntegrityMode::CdfTest => {
            if p_value < cfg.alpha {
                Decision::Reject
            } else {
                Decision::Accept
            }
        }
        IntegrityMode::PaperLiteral => {
            if chi2.pdf(stat)? > cfg.tau {
                Decision::Reject
            } else {
                Decision::Accept
            }
        }
    };
    if !solution.converged {
        decision = Decision::Reject;
    }

    Ok(IntegrityResult {
        stat,
        dof,
        p_value,
        decision,
        pose: solution,
        residuals,
        rank_deficient: projector.rank < 6,
    })
}
