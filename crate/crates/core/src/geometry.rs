//! World/camera frames, pinhole projection, and the analytic 2×6 Jacobian
//! of the projection with respect to the pose.
//!
//! Frames:
//! - **World (runway) frame**: origin at the near-threshold center, x along
//!   the centerline toward the far end, y to the left, z up.
//! - **Camera frame**: x right, y down, z forward (boresight). A world
//!   point maps to the camera frame as `q = Rᵀ (ξ − p)` where `p` is the
//!   camera center and `R` the camera-to-world rotation.
//!
//! Pose increments are right-multiplied axis-angle perturbations,
//! `R ← R·exp([δθ]×)`, which keeps the 6-dof parameterization
//! singularity-free.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::error::Error;
use crate::scalar::{cast, Real};

/// Minimum camera-frame depth (meters). Projection of anything at or below
/// this depth is a [`Error::BehindCamera`]; valid approach geometry never
/// comes near it.
pub const MIN_DEPTH: f64 = 1e-6;

/// Pinhole camera model: focal lengths and principal point in pixels,
/// plus the image size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: u32, height: u32) -> Result<Self, Error> {
        if !(fx > T::zero() && fy > T::zero() && fx.is_finite() && fy.is_finite()) {
            return Err(Error::domain("focal lengths must be positive and finite"));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::domain("principal point must be finite"));
        }
        if width == 0 || height == 0 {
            return Err(Error::domain("image size must be at least 1x1"));
        }
        Ok(Self { fx, fy, cx, cy, width, height })
    }
}

/// A 3D point in the runway world frame (meters).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldPoint<T>(pub Vector3<T>);

impl<T: Real> WorldPoint<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        WorldPoint(Vector3::new(x, y, z))
    }
}

/// A (sub-pixel) image location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelPoint<T> {
    pub u: T,
    pub v: T,
}

impl<T: Real> PixelPoint<T> {
    pub fn new(u: T, v: T) -> Self {
        PixelPoint { u, v }
    }
}

/// Camera pose: center `p` in the world frame and camera-to-world
/// rotation `R` (orthonormal, det +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T> {
    position: Vector3<T>,
    rotation: Matrix3<T>,
}

impl<T: Real> Pose<T> {
    /// Builds a pose, validating that `rotation` is a proper rotation
    /// (‖RᵀR − I‖_F and |det R − 1| within tolerance).
    pub fn new(position: Vector3<T>, rotation: Matrix3<T>) -> Result<Self, Error> {
        let tol = cast::<T>(1e-9).max(T::default_epsilon() * cast(100.0));
        let defect = (rotation.transpose() * rotation - Matrix3::identity()).norm();
        if defect > tol {
            return Err(Error::domain(format!(
                "rotation is not orthonormal (defect {:e})",
                defect.to_f64().unwrap_or(f64::NAN)
            )));
        }
        if (rotation.determinant() - T::one()).abs() > tol {
            return Err(Error::domain("rotation must have determinant +1"));
        }
        if !position.iter().all(|c| c.is_finite()) {
            return Err(Error::domain("position must be finite"));
        }
        Ok(Self { position, rotation })
    }

    pub fn position(&self) -> &Vector3<T> {
        &self.position
    }

    pub fn rotation(&self) -> &Matrix3<T> {
        &self.rotation
    }

    /// Applies the 6-dof increment `(δp, δθ)`: `p ← p + δp`,
    /// `R ← R·exp([δθ]×)`.
    pub fn retract(&self, delta_p: &Vector3<T>, delta_theta: &Vector3<T>) -> Self {
        Self {
            position: self.position + delta_p,
            rotation: self.rotation * exp_so3(delta_theta),
        }
    }

    /// Geodesic rotation distance to `other`, in radians.
    ///
    /// Uses atan2 of the skew norm against the trace, which stays accurate
    /// for tiny angles where acos((tr−1)/2) floors at √ε.
    pub fn rotation_angle_to(&self, other: &Pose<T>) -> T {
        let rel = self.rotation.transpose() * other.rotation;
        let two: T = cast(2.0);
        let s = Vector3::new(
            rel[(2, 1)] - rel[(1, 2)],
            rel[(0, 2)] - rel[(2, 0)],
            rel[(1, 0)] - rel[(0, 1)],
        )
        .norm()
            / two;
        let c = (rel.trace() - T::one()) / two;
        s.atan2(c)
    }

    /// Re-orthonormalizes the rotation (guards against drift accumulated
    /// over many multiplicative updates).
    pub(crate) fn renormalize(&mut self) {
        let c0 = self.rotation.column(0).into_owned().normalize();
        let c2 = c0.cross(&self.rotation.column(1).into_owned()).normalize();
        let c1 = c2.cross(&c0);
        self.rotation = Matrix3::from_columns(&[c0, c1, c2]);
    }
}

/// Rodrigues exponential map so3 → SO(3), Taylor-expanded near zero.
pub(crate) fn exp_so3<T: Real>(w: &Vector3<T>) -> Matrix3<T> {
    let theta2 = w.norm_squared();
    let theta = theta2.sqrt();
    let k = skew(w);
    let (a, b) = if theta < cast(1e-5) {
        // sin θ/θ and (1−cos θ)/θ² to O(θ⁴).
        let six: T = cast(6.0);
        let twenty_four: T = cast(24.0);
        (T::one() - theta2 / six, cast::<T>(0.5) - theta2 / twenty_four)
    } else {
        (theta.sin() / theta, (T::one() - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

#[inline]
pub(crate) fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(
        T::zero(), -v.z, v.y,
        v.z, T::zero(), -v.x,
        -v.y, v.x, T::zero(),
    )
}

/// World point expressed in the camera frame: `Rᵀ (ξ − p)`.
#[inline]
pub(crate) fn camera_frame<T: Real>(point: &WorldPoint<T>, pose: &Pose<T>) -> Vector3<T> {
    pose.rotation.transpose() * (point.0 - pose.position)
}

/// Pinhole projection of a world point. The result may fall outside the
/// image bounds; no clipping is applied.
pub fn project<T: Real>(
    point: &WorldPoint<T>,
    pose: &Pose<T>,
    cam: &CameraIntrinsics<T>,
) -> Result<PixelPoint<T>, Error> {
    let q = camera_frame(point, pose);
    if q.z <= cast(MIN_DEPTH) {
        return Err(Error::BehindCamera {
            depth: q.z.to_f64().unwrap_or(f64::NEG_INFINITY),
        });
    }
    Ok(PixelPoint {
        u: cam.fx * q.x / q.z + cam.cx,
        v: cam.fy * q.y / q.z + cam.cy,
    })
}

/// Analytic Jacobian of the projection with respect to the 6 pose
/// parameters, ordered `[δp_x, δp_y, δp_z, δθ_x, δθ_y, δθ_z]` with the
/// rotation perturbed as `R·exp([δθ]×)`.
///
/// With `q = Rᵀ(ξ − p)`: ∂q/∂p = −Rᵀ and ∂q/∂δθ = \[q\]×, so the chain
/// rule through the pinhole map `A = ∂(u,v)/∂q` gives `J = [A(−Rᵀ) | A[q]×]`.
pub fn projection_jacobian<T: Real>(
    point: &WorldPoint<T>,
    pose: &Pose<T>,
    cam: &CameraIntrinsics<T>,
) -> Result<SMatrix<T, 2, 6>, Error> {
    let q = camera_frame(point, pose);
    if q.z <= cast(MIN_DEPTH) {
        return Err(Error::BehindCamera {
            depth: q.z.to_f64().unwrap_or(f64::NEG_INFINITY),
        });
    }
    let z_inv = T::one() / q.z;
    let a = SMatrix::<T, 2, 3>::new(
        cam.fx * z_inv, T::zero(), -cam.fx * q.x * z_inv * z_inv,
        T::zero(), cam.fy * z_inv, -cam.fy * q.y * z_inv * z_inv,
    );
    let d_pos = a * (-pose.rotation.transpose());
    let d_rot = a * skew(&q);
    let mut jac = SMatrix::<T, 2, 6>::zeros();
    jac.fixed_view_mut::<2, 3>(0, 0).copy_from(&d_pos);
    jac.fixed_view_mut::<2, 3>(0, 3).copy_from(&d_rot);
    Ok(jac)
}

/// The four runway-corner correspondence points for a runway of the given
/// dimensions, ordered near-left, near-right, far-left, far-right.
pub fn runway_corners<T: Real>(length: T, width: T) -> Result<[WorldPoint<T>; 4], Error> {
    if !(length > T::zero() && width > T::zero()) {
        return Err(Error::domain("runway length and width must be positive"));
    }
    let half = width / cast(2.0);
    Ok([
        WorldPoint::new(T::zero(), half, T::zero()),
        WorldPoint::new(T::zero(), -half, T::zero()),
        WorldPoint::new(length, half, T::zero()),
        WorldPoint::new(length, -half, T::zero()),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cam() -> CameraIntrinsics<f64> {
        CameraIntrinsics::new(1000.0, 1000.0, 111.5, 111.5, 224, 224).unwrap()
    }

    /// Level camera at `(−d, 0, h)` looking along world +x:
    /// camera x (right) = −y_w, camera y (down) = −z_w, camera z = +x_w.
    fn level_camera(d: f64, h: f64) -> Pose<f64> {
        let rot = Matrix3::from_columns(&[
            Vector3::new(0.0, -1.0, 0.0),
            Vector3::new(0.0, 0.0, -1.0),
            Vector3::new(1.0, 0.0, 0.0),
        ]);
        Pose::new(Vector3::new(-d, 0.0, h), rot).unwrap()
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 2, 2).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0, 2).is_err());
        assert!(CameraIntrinsics::new(f64::NAN, 1.0, 0.0, 0.0, 2, 2).is_err());
    }

    #[test]
    fn pose_rejects_non_rotation() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Pose::new(Vector3::zeros(), m).is_err());
        // Reflection: orthonormal but det = −1.
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0);
        assert!(Pose::new(Vector3::zeros(), m).is_err());
    }

    #[test]
    fn optical_axis_maps_to_principal_point() {
        let pose = level_camera(100.0, 0.0);
        // Points straight ahead of the camera sit on the world x axis.
        let px = project(&WorldPoint::new(50.0, 0.0, 0.0), &pose, &cam()).unwrap();
        assert!((px.u - 111.5).abs() < 1e-12);
        assert!((px.v - 111.5).abs() < 1e-12);
    }

    #[test]
    fn level_camera_threshold_projection() {
        // Camera at (−d, 0, h) level, ξ = origin: u = cx, v = cy + f·h/d.
        let (d, h) = (2000.0, 100.0);
        let pose = level_camera(d, h);
        let px = project(&WorldPoint::new(0.0, 0.0, 0.0), &pose, &cam()).unwrap();
        assert!((px.u - 111.5).abs() < 1e-12);
        assert!((px.v - (111.5 + 1000.0 * h / d)).abs() < 1e-9);
    }

    #[test]
    fn doubling_fx_doubles_u_offset() {
        let pose = level_camera(500.0, 40.0);
        let p = WorldPoint::new(0.0, 12.0, 3.0);
        let c1 = cam();
        let c2 = CameraIntrinsics::new(2000.0, 1000.0, 111.5, 111.5, 224, 224).unwrap();
        let a = project(&p, &pose, &c1).unwrap();
        let b = project(&p, &pose, &c2).unwrap();
        assert!((b.u - c2.cx - 2.0 * (a.u - c1.cx)).abs() < 1e-9);
        assert!((b.v - a.v).abs() < 1e-12);
    }

    #[test]
    fn behind_camera_rejected() {
        let pose = level_camera(100.0, 0.0);
        let err = project(&WorldPoint::new(-200.0, 0.0, 0.0), &pose, &cam()).unwrap_err();
        assert!(matches!(err, Error::BehindCamera { .. }));
        assert!(projection_jacobian(&WorldPoint::new(-200.0, 0.0, 0.0), &pose, &cam()).is_err());
    }

    #[test]
    fn on_axis_depth_translation_has_zero_jacobian_columns() {
        // For an on-axis point, translating the camera along its boresight
        // (world +x here) changes neither u nor v.
        let pose = level_camera(100.0, 0.0);
        let jac = projection_jacobian(&WorldPoint::new(50.0, 0.0, 0.0), &pose, &cam()).unwrap();
        // Boresight is world +x, i.e. the δp_x column.
        assert!(jac[(0, 0)].abs() < 1e-12);
        assert!(jac[(1, 0)].abs() < 1e-12);
    }

    #[test]
    fn lateral_translation_rate_matches_hand_derivation() {
        // Frame chosen so that camera-right aligns with world +y: then a
        // pure δp_y translation changes u at rate −fx/z_c for an on-axis
        // point (hand differentiation of the pinhole map).
        let rot = Matrix3::from_columns(&[
            Vector3::new(0.0, 1.0, 0.0),  // camera x (right) = +y_w
            Vector3::new(0.0, 0.0, 1.0),  // camera y (down)  = +z_w
            Vector3::new(1.0, 0.0, 0.0),  // camera z (fwd)   = +x_w
        ]);
        let pose = Pose::new(Vector3::new(-100.0, 0.0, 0.0), rot).unwrap();
        let jac = projection_jacobian(&WorldPoint::new(0.0, 0.0, 0.0), &pose, &cam()).unwrap();
        let z_c = 100.0;
        assert!((jac[(0, 1)] - (-1000.0 / z_c)).abs() < 1e-9, "got {}", jac[(0, 1)]);
    }

    #[test]
    fn runway_corners_layout() {
        let c = runway_corners(3000.0, 45.0).unwrap();
        assert_eq!(c[0].0, Vector3::new(0.0, 22.5, 0.0));
        assert_eq!(c[1].0, Vector3::new(0.0, -22.5, 0.0));
        assert_eq!(c[2].0, Vector3::new(3000.0, 22.5, 0.0));
        assert_eq!(c[3].0, Vector3::new(3000.0, -22.5, 0.0));
        // Symmetric under y-negation: left corners mirror right corners.
        assert_eq!(c[0].0.y, -c[1].0.y);
        assert_eq!(c[2].0.y, -c[3].0.y);
    }

    #[test]
    fn runway_corners_rejects_nonpositive() {
        assert!(runway_corners(3000.0, 0.0).is_err());
        assert!(runway_corners(-1.0, 45.0).is_err());
    }

    #[test]
    fn exp_so3_small_angle_matches_large_branch() {
        let w = Vector3::new(3e-6, -2e-6, 1e-6);
        let r_small = exp_so3(&w);
        // Scale up, apply the closed form, and compare first-order.
        let r_id = exp_so3(&Vector3::<f64>::zeros());
        assert!((r_id - Matrix3::identity()).norm() < 1e-15);
        assert!(((r_small.transpose() * r_small) - Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn retract_preserves_orthonormality() {
        let mut pose = level_camera(1000.0, 50.0);
        for i in 0..200 {
            let t = i as f64;
            pose = pose.retract(
                &Vector3::new(0.01, -0.02, 0.005),
                &Vector3::new(1e-3 * (t * 0.1).sin(), -2e-3, 1e-3),
            );
        }
        let defect = (pose.rotation().transpose() * pose.rotation() - Matrix3::identity()).norm();
        assert!(defect < 1e-9, "defect {defect}");
        pose.renormalize();
        let defect = (pose.rotation().transpose() * pose.rotation() - Matrix3::identity()).norm();
        assert!(defect < 1e-14, "defect {defect}");
    }
}
