//! Uncertainty-weighted Pose-from-N-Points.
//!
//! Minimizes Σ_k ‖L_k⁻¹(project(ξ_k, pose) − μ_k)‖² over the 6 pose
//! parameters (translation + local axis-angle) with Levenberg–Marquardt,
//! where L_k = diag(σ_{x,k}, σ_{y,k}). Whitening by L_k⁻¹ means the solver
//! cost and the integrity-check statistic share one residual definition.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::Error;
use crate::geometry::{project, projection_jacobian, CameraIntrinsics, Pose, WorldPoint};
use crate::scalar::{cast, Real};
use crate::uncertainty::PredictionSet;

/// A weighted PNP problem: K ≥ 3 world points, their Gaussian pixel
/// predictions (same order), and the camera model.
#[derive(Debug, Clone)]
pub struct PnpProblem<T> {
    world_points: Vec<WorldPoint<T>>,
    predictions: PredictionSet<T>,
    camera: CameraIntrinsics<T>,
}

impl<T: Real> PnpProblem<T> {
    pub fn new(
        world_points: Vec<WorldPoint<T>>,
        predictions: PredictionSet<T>,
        camera: CameraIntrinsics<T>,
    ) -> Result<Self, Error> {
        if world_points.len() != predictions.len() {
            return Err(Error::MismatchedLengths {
                left: world_points.len(),
                right: predictions.len(),
                context: "world points vs predictions",
            });
        }
        if world_points.len() < 3 {
            return Err(Error::InsufficientKeypoints {
                got: world_points.len(),
                min: 3,
                context: "6 pose unknowns need at least 6 scalar measurements",
            });
        }
        Ok(Self { world_points, predictions, camera })
    }

    pub fn len(&self) -> usize {
        self.world_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.world_points.is_empty()
    }

    pub fn world_points(&self) -> &[WorldPoint<T>] {
        &self.world_points
    }

    pub fn predictions(&self) -> &PredictionSet<T> {
        &self.predictions
    }

    pub fn camera(&self) -> &CameraIntrinsics<T> {
        &self.camera
    }

    /// Stacked whitened residual r ∈ R^{2K} (rows L_k⁻¹(proj − μ)) and its
    /// squared norm, at the given pose.
    pub(crate) fn residuals(&self, pose: &Pose<T>) -> Result<(DVector<T>, T), Error> {
        let mut r = DVector::zeros(2 * self.len());
        for (k, (point, kp)) in self
            .world_points
            .iter()
            .zip(self.predictions.keypoints())
            .enumerate()
        {
            let px = project(point, pose, &self.camera)?;
            r[2 * k] = (px.u - kp.mu.u) / kp.sigma_x();
            r[2 * k + 1] = (px.v - kp.mu.v) / kp.sigma_y();
        }
        let cost = r.norm_squared();
        Ok((r, cost))
    }

    /// Stacked whitened Jacobian H_w = L⁻¹H ∈ R^{2K×6} at the given pose.
    pub(crate) fn whitened_jacobian(&self, pose: &Pose<T>) -> Result<DMatrix<T>, Error> {
        let mut jac = DMatrix::zeros(2 * self.len(), 6);
        for (k, (point, kp)) in self
            .world_points
            .iter()
            .zip(self.predictions.keypoints())
            .enumerate()
        {
            let block = projection_jacobian(point, pose, &self.camera)?;
            for c in 0..6 {
                jac[(2 * k, c)] = block[(0, c)] / kp.sigma_x();
                jac[(2 * k + 1, c)] = block[(1, c)] / kp.sigma_y();
            }
        }
        Ok(jac)
    }
}

/// Levenberg–Marquardt settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpOptions<T> {
    /// Convergence threshold on max(|Δcost|/cost, ‖step‖).
    pub tol: T,
    /// Convergence threshold on the gradient ∞-norm.
    pub gradient_tol: T,
    pub max_iterations: usize,
    /// Initial damping λ₀ (×10 on a rejected step, ÷10 on an accepted one).
    pub lambda_init: T,
}

impl<T: Real> Default for PnpOptions<T> {
    fn default() -> Self {
        Self {
            tol: cast(1e-10),
            gradient_tol: cast(1e-8),
            max_iterations: 100,
            lambda_init: cast(1e-3),
        }
    }
}

/// Solver output. `converged` means a convergence test fired before the
/// iteration cap; `condition_flag` reports near-singular normal equations
/// encountered along the way.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnpSolution<T> {
    pub pose: Pose<T>,
    /// Final weighted sum of squared residuals.
    pub cost: T,
    pub iterations: usize,
    pub converged: bool,
    pub condition_flag: bool,
}

const MAX_INNER_REJECTS: usize = 30;

/// Solves the weighted PNP problem from the given initial pose.
///
/// Trial steps that put any point behind the camera are rejected (damping
/// increased), so the current pose always sees every point in front. An
/// initial pose violating that is an error.
pub fn solve_weighted_pnp<T: Real>(
    prob: &PnpProblem<T>,
    init: &Pose<T>,
    opts: &PnpOptions<T>,
) -> Result<PnpSolution<T>, Error> {
    let mut pose = *init;
    let (mut r, mut cost) = prob.residuals(&pose)?;
    let mut lambda = opts.lambda_init;
    let mut converged = false;
    let mut condition_flag = false;
    let mut iterations = 0;
    let mut accepted_since_renorm = 0usize;

    while iterations < opts.max_iterations {
        let jac = prob.whitened_jacobian(&pose)?;
        let grad = jac.transpose() * &r;
        if grad.amax() < opts.gradient_tol {
            converged = true;
            break;
        }
        let jtj = jac.transpose() * &jac;
        if jtj.clone().cholesky().is_none() {
            condition_flag = true;
        }
        iterations += 1;

        // Marquardt scaling: damp each diagonal entry multiplicatively so
        // steps are invariant under uniform rescaling of the residuals.
        let diag_floor = (0..6)
            .map(|d| jtj[(d, d)])
            .fold(T::zero(), |a, b| a.max(b))
            * cast::<T>(1e-12)
            + cast::<T>(1e-300);
        let mut accepted = false;
        for _ in 0..MAX_INNER_REJECTS {
            let mut damped = jtj.clone();
            for d in 0..6 {
                damped[(d, d)] += lambda * jtj[(d, d)].max(diag_floor);
            }
            let Some(chol) = damped.cholesky() else {
                condition_flag = true;
                lambda *= cast(10.0);
                continue;
            };
            let delta = chol.solve(&(-&grad));
            let dp = Vector3::new(delta[0], delta[1], delta[2]);
            let dtheta = Vector3::new(delta[3], delta[4], delta[5]);
            let trial = pose.retract(&dp, &dtheta);
            match prob.residuals(&trial) {
                // Behind-camera (or otherwise invalid) trial: reject.
                Err(_) => lambda *= cast(10.0),
                Ok((r_new, cost_new)) if cost_new < cost => {
                    let rel_dcost = (cost - cost_new) / cost;
                    let step_norm = delta.norm();
                    pose = trial;
                    r = r_new;
                    cost = cost_new;
                    lambda = (lambda / cast(10.0)).max(cast(1e-15));
                    accepted = true;
                    accepted_since_renorm += 1;
                    if accepted_since_renorm >= 20 {
                        pose.renormalize();
                        let refreshed = prob.residuals(&pose)?;
                        r = refreshed.0;
                        cost = refreshed.1;
                        accepted_since_renorm = 0;
                    }
                    if rel_dcost.max(step_norm) < opts.tol {
                        converged = true;
                    }
                    break;
                }
                Ok((_, cost_new)) => {
                    // Rejected step that changed the cost by less than
                    // rounding noise: numerically stationary. (The depth
                    // constraint cannot trap a descent here: finite pixel
                    // predictions make the cost diverge at the wall, so
                    // interior stagnation is a minimum.)
                    if (cost_new - cost).abs() <= cast::<T>(1e-12) * cost {
                        converged = true;
                        break;
                    }
                    lambda *= cast(10.0);
                }
            }
        }
        if !accepted || converged {
            break;
        }
    }

    Ok(PnpSolution { pose, cost, iterations, converged, condition_flag })
}

/// Approach-prior pose: camera at
/// `(−distance·cos γ, lateral_offset, distance·sin γ)` with the boresight
/// aimed at the runway near-threshold center (the world origin).
///
/// `glide_deg` is in degrees and must lie in (0.5, 15); internal math is in
/// radians.
pub fn initial_pose_from_prior<T: Real>(
    glide_deg: T,
    distance: T,
    lateral_offset: T,
) -> Result<Pose<T>, Error> {
    if !(glide_deg > cast(0.5) && glide_deg < cast(15.0)) {
        return Err(Error::domain("glide slope must lie in (0.5, 15) degrees"));
    }
    if !(distance > T::zero() && distance.is_finite()) {
        return Err(Error::domain("distance must be positive and finite"));
    }
    if !lateral_offset.is_finite() {
        return Err(Error::domain("lateral offset must be finite"));
    }
    let gamma = glide_deg * T::pi() / cast(180.0);
    let position = Vector3::new(-distance * gamma.cos(), lateral_offset, distance * gamma.sin());
    let forward = (-position).normalize();
    let right = forward.cross(&Vector3::z()).normalize();
    let down = forward.cross(&right);
    let rotation = nalgebra::Matrix3::from_columns(&[right, down, forward]);
    Pose::new(position, rotation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{runway_corners, PixelPoint};
    use crate::uncertainty::GaussianKeypoint;

    fn camera() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(4000.0, 4000.0, 111.5, 111.5, 224, 224).unwrap()
    }

    fn exact_problem(pose: &Pose<f64>, sigma: f64) -> PnpProblem<f64> {
        let cam = camera();
        let corners = runway_corners(2000.0, 45.0).unwrap();
        let keypoints = corners
            .iter()
            .map(|c| {
                let px = project(c, pose, &cam).unwrap();
                GaussianKeypoint::new(px, sigma, sigma).unwrap()
            })
            .collect();
        PnpProblem::new(corners.to_vec(), PredictionSet::new(keypoints).unwrap(), cam).unwrap()
    }

    #[test]
    fn problem_validation() {
        let cam = camera();
        let kp = GaussianKeypoint::new(PixelPoint::new(0.0, 0.0), 1.0, 1.0).unwrap();
        let preds = PredictionSet::new(vec![kp, kp]).unwrap();
        let pts = vec![WorldPoint::new(0.0, 0.0, 0.0); 2];
        assert!(matches!(
            PnpProblem::new(pts, preds, cam),
            Err(Error::InsufficientKeypoints { .. })
        ));
        let kp3 = PredictionSet::new(vec![kp, kp, kp]).unwrap();
        assert!(matches!(
            PnpProblem::new(vec![WorldPoint::new(0.0, 0.0, 0.0); 4], kp3, cam),
            Err(Error::MismatchedLengths { .. })
        ));
    }

    #[test]
    fn prior_boresight_hits_principal_point() {
        let cam = camera();
        let pose = initial_pose_from_prior(3.0, 2000.0, 0.0).unwrap();
        let px = project(&WorldPoint::new(0.0, 0.0, 0.0), &pose, &cam).unwrap();
        assert!((px.u - cam.cx).abs() < 1e-9);
        assert!((px.v - cam.cy).abs() < 1e-9);

        let g = 3.0_f64.to_radians();
        assert!((pose.position() - Vector3::new(-2000.0 * g.cos(), 0.0, 2000.0 * g.sin())).norm() < 1e-9);
    }

    #[test]
    fn prior_zero_offset_is_laterally_symmetric() {
        let cam = camera();
        let pose = initial_pose_from_prior(3.0, 2000.0, 0.0).unwrap();
        let corners = runway_corners(2000.0, 45.0).unwrap();
        let left = project(&corners[0], &pose, &cam).unwrap();
        let right = project(&corners[1], &pose, &cam).unwrap();
        assert!((left.u - cam.cx + (right.u - cam.cx)).abs() < 1e-9);
        assert!((left.v - right.v).abs() < 1e-9);
    }

    #[test]
    fn prior_validation() {
        assert!(initial_pose_from_prior(0.5, 2000.0, 0.0).is_err());
        assert!(initial_pose_from_prior(15.0, 2000.0, 0.0).is_err());
        assert!(initial_pose_from_prior(3.0, 0.0, 0.0).is_err());
        assert!(initial_pose_from_prior(3.0, -5.0, 0.0).is_err());
    }

    #[test]
    fn zero_noise_recovery_from_perturbed_init() {
        let truth = initial_pose_from_prior(3.0, 2000.0, 0.0).unwrap();
        let prob = exact_problem(&truth, 1.0);
        let init = initial_pose_from_prior(3.4, 2150.0, 30.0).unwrap();
        let sol = solve_weighted_pnp(&prob, &init, &PnpOptions::default()).unwrap();
        assert!(sol.converged);
        assert!(sol.cost <= 1e-16, "cost {}", sol.cost);
        assert!((sol.pose.position() - truth.position()).norm() < 1e-6);
        assert!(sol.pose.rotation_angle_to(&truth) < 1e-8);
    }

    #[test]
    fn uniform_sigma_scaling_does_not_move_minimizer() {
        let truth = initial_pose_from_prior(3.0, 2000.0, 0.0).unwrap();
        let cam = camera();
        let corners = runway_corners(2000.0, 45.0).unwrap();
        // Fixed, reproducible pixel perturbations standing in for noise.
        let bumps = [(0.4, -0.7), (-0.3, 0.5), (0.8, 0.2), (-0.6, -0.1)];
        let build = |sigma: f64| {
            let keypoints = corners
                .iter()
                .zip(bumps)
                .map(|(c, (du, dv))| {
                    let px = project(c, &truth, &cam).unwrap();
                    GaussianKeypoint::new(PixelPoint::new(px.u + du, px.v + dv), sigma, sigma)
                        .unwrap()
                })
                .collect();
            PnpProblem::new(corners.to_vec(), PredictionSet::new(keypoints).unwrap(), cam).unwrap()
        };
        let init = initial_pose_from_prior(3.2, 2100.0, 10.0).unwrap();
        let a = solve_weighted_pnp(&build(1.0), &init, &PnpOptions::default()).unwrap();
        let b = solve_weighted_pnp(&build(3.0), &init, &PnpOptions::default()).unwrap();
        assert!(a.converged && b.converged);
        // The minimizer is exactly shared; the two runs stop within their
        // own termination slop of it.
        assert!(
            (a.pose.position() - b.pose.position()).norm() < 1e-5,
            "position diff {}",
            (a.pose.position() - b.pose.position()).norm()
        );
        assert!(
            a.pose.rotation_angle_to(&b.pose) < 5e-8,
            "rotation diff {} (pos diff {}, iters {}/{}, costs {}/{})",
            a.pose.rotation_angle_to(&b.pose),
            (a.pose.position() - b.pose.position()).norm(),
            a.iterations,
            b.iterations,
            a.cost,
            b.cost
        );
        // Cost scales by c⁻².
        let rel = (b.cost - a.cost / 9.0).abs() / b.cost;
        assert!(rel < 1e-6, "cost ratio off by {rel}");
    }

    #[test]
    fn deterministic_bit_identical() {
        let truth = initial_pose_from_prior(3.0, 2000.0, 0.0).unwrap();
        let prob = exact_problem(&truth, 1.0);
        let init = initial_pose_from_prior(3.5, 1800.0, -40.0).unwrap();
        let a = solve_weighted_pnp(&prob, &init, &PnpOptions::default()).unwrap();
        let b = solve_weighted_pnp(&prob, &init, &PnpOptions::default()).unwrap();
        assert_eq!(a.cost.to_bits(), b.cost.to_bits());
        for i in 0..3 {
            assert_eq!(a.pose.position()[i].to_bits(), b.pose.position()[i].to_bits());
        }
        for i in 0..9 {
            assert_eq!(a.pose.rotation()[i].to_bits(), b.pose.rotation()[i].to_bits());
        }
        assert_eq!(a.iterations, b.iterations);
    }

    #[test]
    fn behind_camera_init_is_an_error() {
        let truth = initial_pose_from_prior(3.0, 2000.0, 0.0).unwrap();
        let prob = exact_problem(&truth, 1.0);
        // Face the camera away from the runway.
        let away = Pose::new(
            *truth.position(),
            truth.rotation() * crate::geometry::exp_so3(&Vector3::new(0.0, std::f64::consts::PI, 0.0)),
        )
        .unwrap();
        assert!(matches!(
            solve_weighted_pnp(&prob, &away, &PnpOptions::default()),
            Err(Error::BehindCamera { .. })
        ));
    }

    #[test]
    fn degenerate_geometry_does_not_converge() {
        // Three collinear world points: the 6-dof problem is rank-deficient.
        let cam = camera();
        let truth = initial_pose_from_prior(3.0, 2000.0, 0.0).unwrap();
        let pts = vec![
            WorldPoint::new(0.0, 0.0, 0.0),
            WorldPoint::new(500.0, 0.0, 0.0),
            WorldPoint::new(1000.0, 0.0, 0.0),
        ];
        let keypoints = pts
            .iter()
            .map(|p| {
                let px = project(p, &truth, &cam).unwrap();
                GaussianKeypoint::new(PixelPoint::new(px.u + 0.5, px.v - 0.25), 1.0, 1.0).unwrap()
            })
            .collect();
        let prob = PnpProblem::new(pts, PredictionSet::new(keypoints).unwrap(), cam).unwrap();
        let init = initial_pose_from_prior(3.3, 2100.0, 20.0).unwrap();
        let sol = solve_weighted_pnp(&prob, &init, &PnpOptions::default()).unwrap();
        assert!(sol.condition_flag);
    }
}
