//! Gaussian keypoint predictions, the NLL objective, and
//! calibration/sharpness evaluation.
//!
//! Each keypoint carries an axis-aligned Gaussian: mean μ in pixels and
//! per-axis standard deviations (σ_x, σ_y), i.e. Σ = diag(σ_x², σ_y²) with
//! Cholesky factor L = diag(σ_x, σ_y).

use crate::error::Error;
use crate::geometry::PixelPoint;
use crate::numerics::std_normal_quantile;
use crate::scalar::{cast, Real};

/// One probabilistic keypoint prediction: mean pixel location and per-axis
/// standard deviations in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKeypoint<T> {
    pub mu: PixelPoint<T>,
    sigma_x: T,
    sigma_y: T,
}

impl<T: Real> GaussianKeypoint<T> {
    pub fn new(mu: PixelPoint<T>, sigma_x: T, sigma_y: T) -> Result<Self, Error> {
        if !(sigma_x > T::zero() && sigma_y > T::zero() && sigma_x.is_finite() && sigma_y.is_finite())
        {
            return Err(Error::domain("keypoint sigmas must be positive and finite"));
        }
        if !(mu.u.is_finite() && mu.v.is_finite()) {
            return Err(Error::domain("keypoint mean must be finite"));
        }
        Ok(Self { mu, sigma_x, sigma_y })
    }

    pub fn sigma_x(&self) -> T {
        self.sigma_x
    }

    pub fn sigma_y(&self) -> T {
        self.sigma_y
    }
}

/// An ordered set of K ≥ 1 Gaussian keypoints. The order must match the
/// world-point list (near-left, near-right, far-left, far-right for
/// runways).
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet<T> {
    keypoints: Vec<GaussianKeypoint<T>>,
}

impl<T: Real> PredictionSet<T> {
    pub fn new(keypoints: Vec<GaussianKeypoint<T>>) -> Result<Self, Error> {
        if keypoints.is_empty() {
            return Err(Error::EmptyInput("prediction set needs at least one keypoint"));
        }
        Ok(Self { keypoints })
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn keypoints(&self) -> &[GaussianKeypoint<T>] {
        &self.keypoints
    }
}

/// Which Gaussian NLL variant to evaluate.
///
/// `Paper` weights the log-determinant with a full (not half) coefficient:
/// (1/K) Σ [½‖L⁻¹(y−μ)‖² + log|Σ|]. Its σ-minimizer for a fixed error e is
/// σ² = e²/2 per coordinate. `Standard` is the exact Gaussian NLL,
/// (1/K) Σ [½‖L⁻¹(y−μ)‖² + ½log|Σ| + log 2π], minimized at σ² = e².
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NllForm {
    #[default]
    Paper,
    Standard,
}

/// Mean whitened squared residual and mean log-determinant over keypoints:
/// `( (1/K) Σ ‖L⁻¹(y−μ)‖² , (1/K) Σ log|Σ| )`. The NLL variants are
/// affine combinations of these two terms.
pub fn nll_components<T: Real>(
    preds: &PredictionSet<T>,
    truths: &[PixelPoint<T>],
) -> Result<(T, T), Error> {
    if preds.len() != truths.len() {
        return Err(Error::MismatchedLengths {
            left: preds.len(),
            right: truths.len(),
            context: "predictions vs truths",
        });
    }
    let mut resid = T::zero();
    let mut logdet = T::zero();
    for (kp, y) in preds.keypoints().iter().zip(truths) {
        let ex = (y.u - kp.mu.u) / kp.sigma_x;
        let ey = (y.v - kp.mu.v) / kp.sigma_y;
        resid += ex * ex + ey * ey;
        logdet += (kp.sigma_x * kp.sigma_x).ln() + (kp.sigma_y * kp.sigma_y).ln();
    }
    let k: T = cast(preds.len() as f64);
    Ok((resid / k, logdet / k))
}

/// Gaussian negative log-likelihood of the truths under the predictions.
pub fn nll_loss<T: Real>(
    preds: &PredictionSet<T>,
    truths: &[PixelPoint<T>],
    form: NllForm,
) -> Result<T, Error> {
    let (resid, logdet) = nll_components(preds, truths)?;
    let half: T = cast(0.5);
    Ok(match form {
        NllForm::Paper => half * resid + logdet,
        NllForm::Standard => {
            half * resid + half * logdet + cast::<T>(2.0 * std::f64::consts::PI).ln()
        }
    })
}

/// Multiplies every predicted σ by `factor`, leaving the means unchanged.
pub fn recalibrate<T: Real>(preds: &PredictionSet<T>, factor: T) -> Result<PredictionSet<T>, Error> {
    if !(factor > T::zero() && factor.is_finite()) {
        return Err(Error::domain("recalibration factor must be positive and finite"));
    }
    let keypoints = preds
        .keypoints()
        .iter()
        .map(|kp| GaussianKeypoint {
            mu: kp.mu,
            sigma_x: kp.sigma_x * factor,
            sigma_y: kp.sigma_y * factor,
        })
        .collect();
    PredictionSet::new(keypoints)
}

/// Marginal calibration curve: (nominal level ρ, empirical coverage).
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve<T> {
    points: Vec<(T, T)>,
}

impl<T: Real> CalibrationCurve<T> {
    pub fn points(&self) -> &[(T, T)] {
        &self.points
    }

    /// Largest |coverage − ρ| over the curve.
    pub fn max_deviation(&self) -> T {
        self.points
            .iter()
            .map(|&(rho, cov)| (cov - rho).abs())
            .fold(T::zero(), |a, b| a.max(b))
    }
}

/// The default quantile grid ρ ∈ {0.05, 0.10, …, 0.95}.
pub fn default_levels<T: Real>() -> Vec<T> {
    (1..=19).map(|i| cast::<T>(i as f64) * cast(0.05)).collect()
}

fn validate_levels<T: Real>(levels: &[T]) -> Result<(), Error> {
    if levels.is_empty() {
        return Err(Error::EmptyInput("calibration levels"));
    }
    for w in levels.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::domain("calibration levels must be strictly increasing"));
        }
    }
    if levels[0] <= T::zero() || levels[levels.len() - 1] >= T::one() {
        return Err(Error::domain("calibration levels must lie in (0, 1)"));
    }
    Ok(())
}

/// Iterates every scalar coordinate (x and y of every keypoint of every
/// frame) as one (truth, μ, σ) marginal, optionally restricted to one
/// keypoint index.
fn marginals<'a, T: Real>(
    preds: &'a [PredictionSet<T>],
    truths: &'a [Vec<PixelPoint<T>>],
    only_keypoint: Option<usize>,
) -> impl Iterator<Item = (T, T, T)> + 'a {
    preds.iter().zip(truths).flat_map(move |(ps, ts)| {
        ps.keypoints()
            .iter()
            .zip(ts)
            .enumerate()
            .filter(move |(k, _)| only_keypoint.is_none_or(|ok| *k == ok))
            .flat_map(|(_, (kp, y))| {
                [
                    (y.u, kp.mu.u, kp.sigma_x),
                    (y.v, kp.mu.v, kp.sigma_y),
                ]
            })
    })
}

fn curve_from_marginals<T: Real>(
    coords: &[(T, T, T)],
    levels: &[T],
) -> Result<CalibrationCurve<T>, Error> {
    let n: T = cast(coords.len() as f64);
    let mut points = Vec::with_capacity(levels.len());
    for &rho in levels {
        let z = std_normal_quantile(rho)?;
        let mut hits = 0usize;
        for &(truth, mu, sigma) in coords {
            if truth <= mu + sigma * z {
                hits += 1;
            }
        }
        points.push((rho, cast::<T>(hits as f64) / n));
    }
    Ok(CalibrationCurve { points })
}

/// Marginal calibration curve pooling all scalar coordinates: empirical
/// coverage at ρ is the fraction of coordinates with truth ≤ μ + σ·Φ⁻¹(ρ).
pub fn calibration_curve<T: Real>(
    preds: &[PredictionSet<T>],
    truths: &[Vec<PixelPoint<T>>],
    levels: &[T],
) -> Result<CalibrationCurve<T>, Error> {
    validate_levels(levels)?;
    if preds.is_empty() {
        return Err(Error::EmptyInput("calibration needs at least one frame"));
    }
    if preds.len() != truths.len() {
        return Err(Error::MismatchedLengths {
            left: preds.len(),
            right: truths.len(),
            context: "prediction frames vs truth frames",
        });
    }
    for (ps, ts) in preds.iter().zip(truths) {
        if ps.len() != ts.len() {
            return Err(Error::MismatchedLengths {
                left: ps.len(),
                right: ts.len(),
                context: "keypoints vs truths within a frame",
            });
        }
    }
    let coords: Vec<_> = marginals(preds, truths, None).collect();
    curve_from_marginals(&coords, levels)
}

/// One calibration curve per keypoint index (diagnostic companion to the
/// pooled [`calibration_curve`]). All frames must share the same K.
pub fn per_keypoint_calibration_curves<T: Real>(
    preds: &[PredictionSet<T>],
    truths: &[Vec<PixelPoint<T>>],
    levels: &[T],
) -> Result<Vec<CalibrationCurve<T>>, Error> {
    validate_levels(levels)?;
    if preds.is_empty() {
        return Err(Error::EmptyInput("calibration needs at least one frame"));
    }
    let k = preds[0].len();
    if preds.iter().any(|ps| ps.len() != k) {
        return Err(Error::domain("per-keypoint curves require a uniform keypoint count"));
    }
    if preds.len() != truths.len() {
        return Err(Error::MismatchedLengths {
            left: preds.len(),
            right: truths.len(),
            context: "prediction frames vs truth frames",
        });
    }
    (0..k)
        .map(|kp| {
            let coords: Vec<_> = marginals(preds, truths, Some(kp)).collect();
            curve_from_marginals(&coords, levels)
        })
        .collect()
}

/// Histogram of all predicted σ values (both axes pooled), with mean and
/// median.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessHistogram<T> {
    /// Counts per bin `[edges[i], edges[i+1])`; the final bin includes its
    /// upper edge.
    pub counts: Vec<usize>,
    pub bin_edges: Vec<T>,
    pub mean: T,
    pub median: T,
    /// Total number of σ values (2 per keypoint per frame).
    pub n_values: usize,
}

pub fn sharpness_histogram<T: Real>(
    preds: &[PredictionSet<T>],
    bin_edges: &[T],
) -> Result<SharpnessHistogram<T>, Error> {
    if preds.is_empty() {
        return Err(Error::EmptyInput("sharpness histogram needs predictions"));
    }
    if bin_edges.len() < 2 {
        return Err(Error::domain("need at least two bin edges"));
    }
    for w in bin_edges.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::domain("bin edges must be strictly increasing"));
        }
    }
    let mut sigmas: Vec<T> = preds
        .iter()
        .flat_map(|ps| ps.keypoints().iter().flat_map(|kp| [kp.sigma_x, kp.sigma_y]))
        .collect();
    sigmas.sort_by(|a, b| a.partial_cmp(b).expect("sigmas are finite"));

    let mut counts = vec![0usize; bin_edges.len() - 1];
    let last = bin_edges.len() - 1;
    for &s in &sigmas {
        for i in 0..counts.len() {
            let in_bin = s >= bin_edges[i]
                && (s < bin_edges[i + 1] || (i == last - 1 && s == bin_edges[last]));
            if in_bin {
                counts[i] += 1;
                break;
            }
        }
    }

    let n = sigmas.len();
    let sum: T = sigmas.iter().copied().fold(T::zero(), |a, b| a + b);
    let mean = sum / cast(n as f64);
    let median = if n % 2 == 1 {
        sigmas[n / 2]
    } else {
        (sigmas[n / 2 - 1] + sigmas[n / 2]) / cast(2.0)
    };
    Ok(SharpnessHistogram {
        counts,
        bin_edges: bin_edges.to_vec(),
        mean,
        median,
        n_values: n,
    })
}
