//! The per-frame orchestration loop: pre-estimate from prior motion, score
//! the frame's detections with pseudo-entropy, tune the search area,
//! associate, adjust measurement covariance from recent corrections, extend
//! the pose graph, and run a sliding-window solve.
//!
//! Five configurations share this loop and differ only in gating and
//! weighting:
//!
//! - `self_tuning_cov`: entropy-tuned search area plus covariance adjustment.
//! - `self_tuning_nocov`: entropy-tuned area, fixed measurement information.
//! - `static_dcsac`: full search area every frame, fixed information.
//! - `static_nn`: zero search area every frame (pure nearest neighbour).
//! - `baseline_dcs`: full area with a covariance-scaling robustifier in the
//!   back end instead of front-end gating.

use crate::association::{
    associate, tune_area, AssociationError, AssociationStatus, DcSacConfig, SearchArea,
};
use crate::covariance::{
    association_covariance, detection_jacobian, information_matrix, propagate, CovarianceError,
    TransformHistory,
};
use crate::entropy::{pseudo_entropy, DeltaSignal, EntropyScore};
use crate::geometry::{FrameDetections, GeometryError, LandmarkMap, Pose2, Trajectory};
use crate::graph::{PoseGraph, Robustifier, SolverConfig, SolverError};
use nalgebra::{Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("prior has {prior} frames but detections have {detections}")]
    LengthMismatch { prior: usize, detections: usize },
    #[error("landmark map has no points")]
    EmptyMap,
    #[error("invalid pipeline configuration: {0}")]
    BadConfig(&'static str),
    #[error(transparent)]
    Association(#[from] AssociationError),
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("solver failed at frame {frame}: {source}")]
    Solver {
        frame: usize,
        #[source]
        source: SolverError,
    },
}

/// Which of the five compared configurations to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineMode {
    SelfTuningCov,
    SelfTuningNocov,
    StaticDcsac,
    StaticNn,
    BaselineDcs,
}

impl PipelineMode {
    pub const ALL: [PipelineMode; 5] = [
        PipelineMode::SelfTuningCov,
        PipelineMode::SelfTuningNocov,
        PipelineMode::StaticDcsac,
        PipelineMode::StaticNn,
        PipelineMode::BaselineDcs,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PipelineMode::SelfTuningCov => "self_tuning_cov",
            PipelineMode::SelfTuningNocov => "self_tuning_nocov",
            PipelineMode::StaticDcsac => "static_dcsac",
            PipelineMode::StaticNn => "static_nn",
            PipelineMode::BaselineDcs => "baseline_dcs",
        }
    }
}

impl fmt::Display for PipelineMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PipelineMode::ALL
            .iter()
            .find(|m| m.as_str() == s)
            .copied()
            .ok_or_else(|| {
                format!(
                    "unknown mode '{s}' (expected one of: {})",
                    PipelineMode::ALL.map(|m| m.as_str()).join(", ")
                )
            })
    }
}

/// Full configuration of one session run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: PipelineMode,
    /// Delta-angle channel weight of the augmented representation.
    pub dalmr_weight: f64,
    /// Match detections with the delta-angle-augmented metric instead of
    /// plain 2D distance.
    pub dalmr_matching: bool,
    pub dcsac: DcSacConfig,
    /// Sliding optimization window, in frames.
    pub window: usize,
    /// Number of recent corrections feeding covariance adjustment.
    pub history_window: usize,
    /// Variance floor on the association covariance diagonal (m², m², rad²).
    pub covariance_floor: (f64, f64, f64),
    /// Variance floor added when propagating to a detection (m²).
    pub detection_floor: f64,
    /// Fixed detection noise sigma when covariance adjustment is off (m).
    pub static_sigma: f64,
    /// Diagonal odometry information (1/m², 1/m², 1/rad²).
    pub odometry_information: (f64, f64, f64),
    pub solver: SolverConfig,
    /// Robustifier parameter used by `baseline_dcs`.
    pub dcs_phi: f64,
    /// Feed zero entropy to the area tuner (diagnostic; the recorded entropy
    /// stays the measured value).
    pub force_zero_entropy: bool,
    /// Re-solve the whole graph once after the last frame.
    pub final_batch: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            mode: PipelineMode::SelfTuningCov,
            dalmr_weight: 5.0,
            dalmr_matching: false,
            dcsac: DcSacConfig::default(),
            window: 50,
            history_window: 20,
            covariance_floor: (1e-4, 1e-4, 1e-6),
            detection_floor: 1e-2,
            static_sigma: 0.3,
            odometry_information: (400.0, 400.0, 1e4),
            solver: SolverConfig::default(),
            dcs_phi: 1.0,
            force_zero_entropy: false,
            final_batch: false,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if !(self.dalmr_weight >= 0.0) || !self.dalmr_weight.is_finite() {
            return Err(PipelineError::BadConfig("dalmr_weight must be finite, >= 0"));
        }
        self.dcsac.validate()?;
        if self.window < 1 {
            return Err(PipelineError::BadConfig("window must be >= 1"));
        }
        if self.history_window < 1 {
            return Err(PipelineError::BadConfig("history_window must be >= 1"));
        }
        let (fx, fy, ft) = self.covariance_floor;
        if !(fx >= 0.0 && fy >= 0.0 && ft >= 0.0) || !(fx + fy + ft).is_finite() {
            return Err(PipelineError::BadConfig("covariance floors must be >= 0"));
        }
        if !(self.detection_floor >= 0.0) || !self.detection_floor.is_finite() {
            return Err(PipelineError::BadConfig("detection_floor must be >= 0"));
        }
        if !(self.static_sigma > 0.0) || !self.static_sigma.is_finite() {
            return Err(PipelineError::BadConfig("static_sigma must be > 0"));
        }
        let (ox, oy, ot) = self.odometry_information;
        if !(ox > 0.0 && oy > 0.0 && ot > 0.0) || !(ox + oy + ot).is_finite() {
            return Err(PipelineError::BadConfig("odometry information must be > 0"));
        }
        self.solver
            .validate()
            .map_err(|e| PipelineError::Solver { frame: 0, source: e })?;
        if !(self.dcs_phi > 0.0) {
            return Err(PipelineError::BadConfig("dcs_phi must be > 0"));
        }
        Ok(())
    }

    /// Solver settings with the mode's robustifier applied.
    fn effective_solver(&self) -> SolverConfig {
        let mut solver = self.solver;
        if self.mode == PipelineMode::BaselineDcs
            && matches!(solver.robustifier, Robustifier::None)
        {
            solver.robustifier = Robustifier::CovarianceScaling { phi: self.dcs_phi };
        }
        solver
    }
}

/// Per-frame debug/analysis record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub frame_index: usize,
    /// Measured pseudo-entropy of the frame's detections.
    pub entropy: f64,
    /// Search area the association actually used.
    pub tuned_area: SearchArea,
    pub status: AssociationStatus,
    /// Winning correction of the pre-estimate.
    pub delta_t: Pose2,
    pub pair_count: usize,
    pub inlier_count: usize,
    pub mean_inlier_error: f64,
    /// Diagonal of the adjusted association covariance (cov modes only).
    pub sigma_diag: Option<[f64; 3]>,
    /// Per-pair detection information entries (xx, xy, yy), cov modes only.
    pub omega: Option<Vec<[f64; 3]>>,
    /// Node estimate right after this frame's windowed solve.
    pub pose: Pose2,
}

/// Mixes the base seed with the frame index so per-frame sampling draws are
/// decorrelated while the whole session stays reproducible.
fn frame_seed(seed: u64, frame: usize) -> u64 {
    let mut z = seed ^ (frame as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the full per-frame loop and returns the estimated trajectory plus
/// one record per frame.
pub fn run_session(
    map: &LandmarkMap,
    prior: &Trajectory,
    detections: &[FrameDetections],
    cfg: &PipelineConfig,
) -> Result<(Trajectory, Vec<FrameRecord>), PipelineError> {
    cfg.validate()?;
    if prior.len() != detections.len() {
        return Err(PipelineError::LengthMismatch {
            prior: prior.len(),
            detections: detections.len(),
        });
    }
    if map.point_count() == 0 {
        return Err(PipelineError::EmptyMap);
    }

    let n = prior.len();
    let solver = cfg.effective_solver();
    let cov_adjust = cfg.mode == PipelineMode::SelfTuningCov;
    let zero_area = SearchArea::new(0.0, 0.0, 0.0).expect("zero area is valid");
    let odo_info = Matrix3::from_diagonal(&Vector3::new(
        cfg.odometry_information.0,
        cfg.odometry_information.1,
        cfg.odometry_information.2,
    ));
    let static_omega = Matrix2::identity() / (cfg.static_sigma * cfg.static_sigma);

    let mut graph = PoseGraph::new();
    let mut history = TransformHistory::new(cfg.history_window);
    let mut records = Vec::with_capacity(n);

    for i in 0..n {
        let pre = if i == 0 {
            prior.get(0)
        } else {
            let prev = graph.node(i - 1).expect("node added last frame").estimate;
            prev.compose(&prior.get(i - 1).relative(&prior.get(i)))
        };

        let signals: Vec<DeltaSignal> = detections[i]
            .polylines
            .iter()
            .map(|pl| {
                DeltaSignal::new(pl.delta_angles())
                    .expect("delta angles are in [0, pi] by construction")
            })
            .collect();
        let entropy = pseudo_entropy(&signals);
        let tuning_entropy = if cfg.force_zero_entropy {
            EntropyScore { s: 0.0 }
        } else {
            entropy
        };

        let tuned = match cfg.mode {
            PipelineMode::SelfTuningCov | PipelineMode::SelfTuningNocov => {
                tune_area(&cfg.dcsac.base_area, tuning_entropy, cfg.dcsac.s_min)?
            }
            PipelineMode::StaticDcsac | PipelineMode::BaselineDcs => cfg.dcsac.base_area,
            PipelineMode::StaticNn => zero_area,
        };

        let mut frame_cfg = cfg.dcsac.clone();
        frame_cfg.rng_seed = frame_seed(cfg.dcsac.rng_seed, i);
        if cfg.dalmr_matching {
            frame_cfg.dalmr_match_weight = Some(cfg.dalmr_weight);
        }
        let assoc = associate(&detections[i], map, &pre, &frame_cfg, &tuned)?;

        let node_pose = if assoc.pairs.is_empty() {
            pre
        } else {
            history.push(assoc.delta_t_star);
            pre.compose(&assoc.delta_t_star)
        };
        let node = graph.add_node(node_pose);
        debug_assert_eq!(node, i);
        if i > 0 {
            graph
                .add_odometry(i - 1, i, prior.get(i - 1).relative(&prior.get(i)), odo_info)
                .map_err(|e| PipelineError::Solver { frame: i, source: e })?;
        }

        let (sigma_diag, omega) = if cov_adjust {
            let sigma = association_covariance(&history, cfg.covariance_floor);
            let d = sigma.matrix().diagonal();
            let mut entries = Vec::with_capacity(assoc.pairs.len());
            for (det, lm) in &assoc.pairs {
                let j = detection_jacobian(&node_pose, *det);
                let cov2 = propagate(&sigma, &j, cfg.detection_floor);
                let omega = information_matrix(&cov2)?;
                entries.push([omega[(0, 0)], omega[(0, 1)], omega[(1, 1)]]);
                graph
                    .add_landmark(i, *det, *lm, omega)
                    .map_err(|e| PipelineError::Solver { frame: i, source: e })?;
            }
            (Some([d.x, d.y, d.z]), Some(entries))
        } else {
            for (det, lm) in &assoc.pairs {
                graph
                    .add_landmark(i, *det, *lm, static_omega)
                    .map_err(|e| PipelineError::Solver { frame: i, source: e })?;
            }
            (None, None)
        };

        let first_free = (i + 1).saturating_sub(cfg.window);
        if graph.landmark_edge_count_from(first_free) > 0 {
            graph
                .solve_window(first_free, &solver)
                .map_err(|e| PipelineError::Solver { frame: i, source: e })?;
        }

        records.push(FrameRecord {
            frame_index: i,
            entropy: entropy.value(),
            tuned_area: assoc.tuned_area,
            status: assoc.status,
            delta_t: assoc.delta_t_star,
            pair_count: assoc.pairs.len(),
            inlier_count: assoc.inlier_count,
            mean_inlier_error: assoc.mean_inlier_error,
            sigma_diag,
            omega,
            pose: graph.node(i).expect("node exists").estimate,
        });
    }

    if cfg.final_batch {
        graph
            .solve(&solver)
            .map_err(|e| PipelineError::Solver { frame: n - 1, source: e })?;
    }

    Ok((graph.trajectory()?, records))
}
