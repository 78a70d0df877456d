//! Shared oracle machinery for the integration tests. Everything here is
//! deliberately independent of the library's implementation paths: plain
//! quadrature, compensated brute-force sums, golden-section search, and a
//! homogeneous-matrix projection.

#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use pose_integrity::geometry::{CameraIntrinsics, Pose, WorldPoint};
use pose_integrity::Heatmap;

/// Adaptive Simpson quadrature.
pub fn integrate<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb) = (f(a), f(b));
    let (whole, m, fm) = simpson(&f, a, fa, b, fb);
    recurse(&f, a, fa, b, fb, whole, m, fm, tol, 48)
}

/// Kahan–Babuška compensated accumulator.
#[derive(Default, Clone, Copy)]
pub struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// Brute-force soft-argmax expectation: direct softmax (no max shift, safe
/// for logits in [−20, 20]) with compensated sums.
pub fn soft_argmax_oracle(h: &Heatmap<f64>) -> (f64, f64) {
    let m = h.matrix();
    let mut den = Kahan::default();
    let mut num_x = Kahan::default();
    let mut num_y = Kahan::default();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let e = m[(i, j)].exp();
            den.add(e);
            num_x.add(e * j as f64 / (m.ncols() - 1) as f64);
            num_y.add(e * i as f64 / (m.nrows() - 1) as f64);
        }
    }
    (num_x.value() / den.value(), num_y.value() / den.value())
}

/// Golden-section minimizer on [a, b].
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Independent pinhole projection through the homogeneous 3×4 matrix
/// K·[Rᵀ | −Rᵀp].
pub fn project_homogeneous_oracle(
    point: &WorldPoint<f64>,
    pose: &Pose<f64>,
    cam: &CameraIntrinsics<f64>,
) -> (f64, f64) {
    let k = Matrix3::new(cam.fx, 0.0, cam.cx, 0.0, cam.fy, 0.0, 0.0, 0.0, 1.0);
    // K with fy in the (1,1) slot and cy in (1,2):
    let k = {
        let mut k = k;
        k[(1, 2)] = cam.cy;
        k
    };
    let rt = pose.rotation().transpose();
    let t = -(rt * pose.position());
    let q = rt * point.0 + t;
    let hom = k * q;
    (hom[0] / hom[2], hom[1] / hom[2])
}

/// Random valid approach configuration: a pose near real approach geometry
/// plus a world point that sits well in front of the camera.
pub fn random_valid_config(rng: &mut ChaCha8Rng) -> (Pose<f64>, WorldPoint<f64>) {
    use pose_integrity::pnp::initial_pose_from_prior;
    loop {
        let glide = rng.random_range(1.0..10.0);
        let dist = rng.random_range(500.0..5000.0);
        let offset = rng.random_range(-200.0..200.0);
        let base = initial_pose_from_prior(glide, dist, offset).unwrap();
        // Perturb attitude by up to ~2 degrees and position by ±50 m.
        let dtheta = Vector3::new(
            rng.random_range(-0.03..0.03),
            rng.random_range(-0.03..0.03),
            rng.random_range(-0.03..0.03),
        );
        let dp = Vector3::new(
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
            rng.random_range(-50.0..50.0),
        );
        let pose = base.retract(&dp, &dtheta);
        let point = WorldPoint::new(
            rng.random_range(0.0..4000.0),
            rng.random_range(-60.0..60.0),
            rng.random_range(0.0..5.0),
        );
        let depth = pose.rotation().transpose() * (point.0 - pose.position());
        if depth.z > 100.0 {
            return (pose, point);
        }
    }
}
