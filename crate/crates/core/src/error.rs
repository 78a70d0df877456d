use thiserror::Error;

/// Errors produced by the pose-integrity pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violated a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A world point fell behind (or within 1 µm of) the camera plane.
    #[error("point behind camera: camera-frame depth {depth} <= 1e-6 m")]
    BehindCamera { depth: f64 },

    /// Paired inputs have inconsistent lengths.
    #[error("mismatched lengths: {left} vs {right} ({context})")]
    MismatchedLengths {
        left: usize,
        right: usize,
        context: &'static str,
    },

    /// A nonempty input was required.
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// Too few keypoints for the requested operation.
    #[error("insufficient keypoints: got {got}, need at least {min} ({context})")]
    InsufficientKeypoints {
        got: usize,
        min: usize,
        context: &'static str,
    },

    /// A keypoint index referenced a keypoint that does not exist.
    #[error("invalid keypoint index {index} for {count} keypoints")]
    InvalidKeypointIndex { index: usize, count: usize },

    /// The scenario geometry cannot be realized (corner behind the camera
    /// or outside the image).
    #[error("scenario infeasible: {0}")]
    ScenarioInfeasible(String),

    /// An iterative numerical routine failed to converge.
    #[error("numerical routine failed to converge: {0}")]
    Convergence(&'static str),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
