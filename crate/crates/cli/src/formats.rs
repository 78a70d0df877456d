//! File formats: the versioned PredictionFile JSON schema carrying camera
//! intrinsics, world points, and per-frame keypoint predictions (plus
//! optional truth pixels and heatmaps), and the JSON shapes the commands
//! print.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use pose_integrity::geometry::{CameraIntrinsics, PixelPoint, Pose, WorldPoint};
use pose_integrity::pnp::PnpSolution;
use pose_integrity::raim::{Decision, IntegrityResult};
use pose_integrity::softargmax::Heatmap;
use pose_integrity::uncertainty::{GaussianKeypoint, PredictionSet};

pub const FORMAT_VERSION: &str = "pose-integrity/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionFile {
    pub version: String,
    pub camera: CameraJson,
    /// Ordered world correspondence points in meters (near-left,
    /// near-right, far-left, far-right for runways).
    pub world_points: Vec<[f64; 3]>,
    /// Approach prior used to initialize the PNP solve; command-line
    /// flags override it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<InitJson>,
    pub frames: Vec<FrameJson>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CameraJson {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct InitJson {
    pub glide_deg: f64,
    pub distance_m: f64,
    #[serde(default)]
    pub lateral_offset_m: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameJson {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keypoints: Option<Vec<KeypointJson>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_px: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heatmaps: Option<Vec<HeatmapJson>>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KeypointJson {
    pub mu_px: [f64; 2],
    pub sigma_px: [f64; 2],
}

/// Row-major float grid with its shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeatmapJson {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl PredictionFile {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let file: PredictionFile =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if file.version != FORMAT_VERSION {
            bail!(
                "unsupported file version {:?} (expected {:?})",
                file.version,
                FORMAT_VERSION
            );
        }
        Ok(file)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(())
    }

    pub fn camera(&self) -> Result<CameraIntrinsics<f64>> {
        let c = &self.camera;
        Ok(CameraIntrinsics::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height)?)
    }

    pub fn world_points(&self) -> Vec<WorldPoint<f64>> {
        self.world_points
            .iter()
            .map(|p| WorldPoint::new(p[0], p[1], p[2]))
            .collect()
    }

    /// The frame's keypoints as a validated prediction set, checked
    /// against the world-point count.
    pub fn predictions(&self, frame: usize) -> Result<PredictionSet<f64>> {
        let kps = self.frames[frame]
            .keypoints
            .as_ref()
            .with_context(|| format!("frame {frame} has no keypoints"))?;
        if kps.len() != self.world_points.len() {
            bail!(
                "frame {frame}: {} keypoints vs {} world points",
                kps.len(),
                self.world_points.len()
            );
        }
        let keypoints = kps
            .iter()
            .map(|k| {
                GaussianKeypoint::new(
                    PixelPoint::new(k.mu_px[0], k.mu_px[1]),
                    k.sigma_px[0],
                    k.sigma_px[1],
                )
            })
            .collect::<Result<Vec<_>, _>>()
            .with_context(|| format!("frame {frame}: invalid keypoint"))?;
        Ok(PredictionSet::new(keypoints)?)
    }

    pub fn truths(&self, frame: usize) -> Result<Vec<PixelPoint<f64>>> {
        let t = self.frames[frame]
            .truth_px
            .as_ref()
            .with_context(|| format!("frame {frame} has no truth_px"))?;
        if t.len() != self.world_points.len() {
            bail!(
                "frame {frame}: {} truths vs {} world points",
                t.len(),
                self.world_points.len()
            );
        }
        Ok(t.iter().map(|p| PixelPoint::new(p[0], p[1])).collect())
    }

    pub fn heatmaps(&self, frame: usize) -> Result<Vec<Heatmap<f64>>> {
        let hms = self.frames[frame]
            .heatmaps
            .as_ref()
            .with_context(|| format!("frame {frame} has no heatmaps"))?;
        hms.iter()
            .enumerate()
            .map(|(i, h)| {
                Heatmap::new(h.rows, h.cols, h.values.clone())
                    .with_context(|| format!("frame {frame}, heatmap {i}"))
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Output shapes

#[derive(Debug, Serialize)]
pub struct PoseJson {
    pub position: [f64; 3],
    /// Camera-to-world rotation, row-major.
    pub rotation: [[f64; 3]; 3],
}

impl PoseJson {
    pub fn from_pose(pose: &Pose<f64>) -> Self {
        let p = pose.position();
        let r = pose.rotation();
        PoseJson {
            position: [p.x, p.y, p.z],
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SolutionJson {
    pub frame: usize,
    pub converged: bool,
    pub iterations: usize,
    pub cost: f64,
    pub condition_flag: bool,
    #[serde(flatten)]
    pub pose: PoseJson,
}

impl SolutionJson {
    pub fn new(frame: usize, sol: &PnpSolution<f64>) -> Self {
        SolutionJson {
            frame,
            converged: sol.converged,
            iterations: sol.iterations,
            cost: sol.cost,
            condition_flag: sol.condition_flag,
            pose: PoseJson::from_pose(&sol.pose),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct IntegrityJson {
    pub frame: usize,
    pub stat: f64,
    pub dof: u32,
    pub p_value: f64,
    pub decision: &'static str,
    pub converged: bool,
    pub rank_deficient: bool,
    pub cost: f64,
    #[serde(flatten)]
    pub pose: PoseJson,
    /// Per-keypoint reprojection residuals (reprojected − predicted), px.
    pub residuals_px: Vec<[f64; 2]>,
}

impl IntegrityJson {
    pub fn new(frame: usize, res: &IntegrityResult<f64>) -> Self {
        IntegrityJson {
            frame,
            stat: res.stat,
            dof: res.dof,
            p_value: res.p_value,
            decision: decision_str(res.decision),
            converged: res.pose.converged,
            rank_deficient: res.rank_deficient,
            cost: res.pose.cost,
            pose: PoseJson::from_pose(&res.pose.pose),
            residuals_px: res.residuals.iter().map(|r| [r.x, r.y]).collect(),
        }
    }
}

pub fn decision_str(d: Decision) -> &'static str {
    match d {
        Decision::Accept => "ACCEPT",
        Decision::Reject => "REJECT",
    }
}

/// Fixed-width scientific formatting (17 significant digits) used for all
/// CSV output; locale-independent and stable across runs.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
