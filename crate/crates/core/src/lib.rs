//! Self-tuning geo-referencing of vehicle trajectories against lane-marking maps.
//!
//! The pipeline aligns a locally smooth but globally inconsistent prior trajectory
//! to a planar map of lane-marking polylines:
//!
//! 1. [`geometry`]: SE(2) poses, polylines, the delta-angle augmented
//!    representation, and the landmark map with its spatial index.
//! 2. [`entropy`]: a pseudo-entropy score quantifying how much curvature
//!    information a frame's detections carry.
//! 3. [`association`]: entropy-gated sample-consensus data association inside
//!    a self-tuned search area.
//! 4. [`covariance`]: measurement covariance adjusted from recent association
//!    corrections and propagated to per-detection weights.
//! 5. [`graph`]: sliding-window Gauss-Newton pose-graph optimization with an
//!    optional covariance-scaling robustifier.
//!
//! All coordinates are meters in a local planar frame; angles are radians
//! normalized to (−π, π]. Every algorithm here is deterministic for a fixed seed,
//! independent of thread count.

pub mod association;
pub mod covariance;
pub mod entropy;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod sim;

pub use association::{
    associate, procrustes_2pt, tune_area, AssociationError, AssociationResult, AssociationStatus,
    DcSacConfig, Hypothesis, SearchArea,
};
pub use covariance::{
    association_covariance, detection_jacobian, information_matrix, propagate, Cov2, Cov3,
    CovarianceError, TransformHistory,
};
pub use entropy::{pseudo_entropy, DeltaSignal, EntropyScore};
pub use geometry::{
    normalize_angle, resample_polyline, DalmrPolyline, FrameDetections, GeometryError,
    LandmarkMap, Polyline, Pose2, Trajectory,
};
pub use graph::{
    LandmarkEdge, OdometryEdge, PoseGraph, PoseNode, Robustifier, SolveReport, SolverConfig,
    SolverError, StopReason,
};
pub use io::{
    sig9, ConfigFile, DetectionsFile, IoError, MapFile, ScenarioSpecFile, TrajectoryFile,
};
pub use metrics::{ate, entropy_error_correlation, rpe, MetricReport, MetricsError};
pub use pipeline::{
    run_session, FrameRecord, PipelineConfig, PipelineError, PipelineMode,
};
pub use sim::{
    generate_scenario, IntersectionSpec, MarkingStyle, NoiseModel, RoadElement, RoadLayout,
    Scenario, SimError,
};
