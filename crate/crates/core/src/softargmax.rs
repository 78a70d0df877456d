//! Differentiable sub-pixel coordinate extraction from activation heatmaps.
//!
//! A heatmap is turned into a probability grid with a spatial softmax and
//! the keypoint is the expected grid coordinate under that distribution,
//! normalized to [0, 1] with the (n − 1) endpoint convention: column j maps
//! to j/(W′−1), row i to i/(H′−1).

use nalgebra::DMatrix;

use crate::error::Error;
use crate::geometry::PixelPoint;
use crate::scalar::{cast, Real};

/// An H′×W′ grid of real-valued activations (logits) for one keypoint.
///
/// Both dimensions must be at least 2 so the normalized-coordinate
/// denominators W′−1 and H′−1 are positive; all entries must be finite.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap<T> {
    data: DMatrix<T>,
}

impl<T: Real> Heatmap<T> {
    /// Builds a heatmap from row-major values.
    pub fn new(rows: usize, cols: usize, row_major: Vec<T>) -> Result<Self, Error> {
        if row_major.len() != rows * cols {
            return Err(Error::MismatchedLengths {
                left: row_major.len(),
                right: rows * cols,
                context: "heatmap values vs rows*cols",
            });
        }
        Self::from_matrix(DMatrix::from_row_slice(rows, cols, &row_major))
    }

    pub fn from_matrix(data: DMatrix<T>) -> Result<Self, Error> {
        if data.nrows() < 2 || data.ncols() < 2 {
            return Err(Error::domain(format!(
                "heatmap must be at least 2x2, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::domain("heatmap entries must be finite"));
        }
        Ok(Self { data })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.data
    }
}

/// Softmax-normalized heatmap: nonnegative entries summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityGrid<T> {
    data: DMatrix<T>,
}

impl<T: Real> ProbabilityGrid<T> {
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.data
    }
}

/// Expected keypoint location as fractions of the heatmap extent, each
/// in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedKeypoint<T> {
    pub x: T,
    pub y: T,
}

/// Spatial softmax over all grid cells.
///
/// The maximum logit is subtracted before exponentiation; algebraically a
/// no-op, numerically it keeps `exp` in range for arbitrary finite logits.
pub fn spatial_softmax<T: Real>(h: &Heatmap<T>) -> ProbabilityGrid<T> {
    let max = h.data.iter().copied().fold(h.data[(0, 0)], |a, b| a.max(b));
    let mut data = h.data.map(|v| (v - max).exp());
    let sum: T = data.iter().copied().fold(T::zero(), |a, b| a + b);
    data /= sum;
    ProbabilityGrid { data }
}

/// Expected normalized coordinates under the spatial softmax:
/// x̂ = Σ P_{i,j}·j/(W′−1), ŷ = Σ P_{i,j}·i/(H′−1).
///
/// Evaluated as (Σ e·j)/(Σ e·(W′−1)) with a single final division, so a
/// uniform heatmap yields exactly (0.5, 0.5): the shifted exponentials are
/// all exactly 1 and the integer-valued sums are exact in floating point.
pub fn soft_argmax<T: Real>(h: &Heatmap<T>) -> NormalizedKeypoint<T> {
    let max = h.data.iter().copied().fold(h.data[(0, 0)], |a, b| a.max(b));
    let mut sum = T::zero();
    let mut sum_j = T::zero();
    let mut sum_i = T::zero();
    for j in 0..h.cols() {
        let jf: T = cast(j as f64);
        for i in 0..h.rows() {
            let e = (h.data[(i, j)] - max).exp();
            sum += e;
            sum_j += e * jf;
            sum_i += e * cast::<T>(i as f64);
        }
    }
    let w1: T = cast((h.cols() - 1) as f64);
    let h1: T = cast((h.rows() - 1) as f64);
    NormalizedKeypoint {
        x: sum_j / (sum * w1),
        y: sum_i / (sum * h1),
    }
}

/// Analytic gradients of the soft-argmax coordinates with respect to each
/// logit: ∂x̂/∂h\[i,j\] = P_{i,j}·(j/(W′−1) − x̂), and likewise for ŷ.
/// Returned as `(d x̂/d h, d ŷ/d h)`.
pub fn soft_argmax_gradient<T: Real>(h: &Heatmap<T>) -> (DMatrix<T>, DMatrix<T>) {
    let p = spatial_softmax(h);
    let k = soft_argmax(h);
    let w1: T = cast((p.cols() - 1) as f64);
    let h1: T = cast((p.rows() - 1) as f64);
    let mut gx = DMatrix::zeros(p.rows(), p.cols());
    let mut gy = DMatrix::zeros(p.rows(), p.cols());
    for j in 0..p.cols() {
        for i in 0..p.rows() {
            let pij = p.data[(i, j)];
            gx[(i, j)] = pij * (cast::<T>(j as f64) / w1 - k.x);
            gy[(i, j)] = pij * (cast::<T>(i as f64) / h1 - k.y);
        }
    }
    (gx, gy)
}

/// Scales normalized coordinates to pixel coordinates in a crop of the
/// given size, using the same endpoint convention as the heatmap
/// normalization: u = x̂·(crop_w − 1), v = ŷ·(crop_h − 1).
///
/// Standard deviations follow the same convention: a σ expressed in
/// normalized units converts to pixels as σ_px = σ_norm·(crop − 1). All
/// downstream interfaces take σ in pixels.
pub fn scale_to_pixels<T: Real>(
    k: &NormalizedKeypoint<T>,
    crop_w: u32,
    crop_h: u32,
) -> Result<PixelPoint<T>, Error> {
    if crop_w == 0 || crop_h == 0 {
        return Err(Error::domain("crop size must be at least 1x1"));
    }
    Ok(PixelPoint {
        u: k.x * cast((crop_w - 1) as f64),
        v: k.y * cast((crop_h - 1) as f64),
    })
}
