//! File formats: JSON map and detection documents, CSV trajectories, flat
//! TOML pipeline configuration, and TOML scenario specs.
//!
//! Maps, detections, and trajectories round-trip exactly: floats are written
//! in shortest form that parses back to the identical bit pattern. Reports
//! meant for reading rather than re-parsing use [`sig9`] instead.

use crate::geometry::{FrameDetections, GeometryError, LandmarkMap, Polyline, Pose2, Trajectory};
use crate::graph::{Robustifier, SolverConfig};
use crate::pipeline::{PipelineConfig, PipelineMode};
use crate::sim::{NoiseModel, RoadLayout};
use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Version stamp written into the JSON documents.
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("failed to read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error("unsupported format version {found}, expected {expected}")]
    Version { found: u32, expected: u32 },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn read_to_string(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })
}

fn write_string(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// Formats with 9 significant digits; for human-facing report numbers whose
/// byte stability matters more than exact round-tripping.
pub fn sig9(x: f64) -> String {
    format!("{x:.8e}")
}

fn polyline_to_doc(pl: &Polyline) -> Vec<[f64; 2]> {
    pl.points().iter().map(|p| [p.x, p.y]).collect()
}

fn polyline_from_doc(doc: &[[f64; 2]]) -> Result<Polyline, IoError> {
    Ok(Polyline::new(
        doc.iter().map(|&[x, y]| Vector2::new(x, y)).collect(),
    )?)
}

fn check_version(found: u32) -> Result<(), IoError> {
    if found != FORMAT_VERSION {
        return Err(IoError::Version {
            found,
            expected: FORMAT_VERSION,
        });
    }
    Ok(())
}

// ---------------------------------------------------------------- map file

/// Landmark map document: world-frame polylines plus free-form metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct MapFile {
    pub name: Option<String>,
    pub crs_note: Option<String>,
    pub polylines: Vec<Polyline>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDoc {
    version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    crs_note: Option<String>,
    polylines: Vec<Vec<[f64; 2]>>,
}

impl MapFile {
    pub fn new(polylines: Vec<Polyline>) -> Self {
        MapFile {
            name: None,
            crs_note: None,
            polylines,
        }
    }

    pub fn to_map(&self) -> LandmarkMap {
        LandmarkMap::new(self.polylines.clone())
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let doc: MapDoc = serde_json::from_str(text)?;
        check_version(doc.version)?;
        let polylines = doc
            .polylines
            .iter()
            .map(|pl| polyline_from_doc(pl))
            .collect::<Result<_, _>>()?;
        Ok(MapFile {
            name: doc.name,
            crs_note: doc.crs_note,
            polylines,
        })
    }

    pub fn serialize(&self) -> String {
        let doc = MapDoc {
            version: FORMAT_VERSION,
            name: self.name.clone(),
            crs_note: self.crs_note.clone(),
            polylines: self.polylines.iter().map(polyline_to_doc).collect(),
        };
        let mut s = serde_json::to_string(&doc).expect("map serializes");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        write_string(path, &self.serialize())
    }
}

// --------------------------------------------------------- detections file

/// Per-frame sensor-frame detection polylines.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionsFile {
    pub frames: Vec<FrameDetections>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionsDoc {
    version: u32,
    frames: Vec<FrameDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameDoc {
    frame_index: usize,
    polylines: Vec<Vec<[f64; 2]>>,
}

impl DetectionsFile {
    pub fn new(frames: Vec<FrameDetections>) -> Self {
        DetectionsFile { frames }
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let doc: DetectionsDoc = serde_json::from_str(text)?;
        check_version(doc.version)?;
        let mut frames = Vec::with_capacity(doc.frames.len());
        for (i, f) in doc.frames.iter().enumerate() {
            if f.frame_index != i {
                return Err(IoError::Invalid(format!(
                    "frame {i} carries index {}; indices must be contiguous from 0",
                    f.frame_index
                )));
            }
            let polylines = f
                .polylines
                .iter()
                .map(|pl| polyline_from_doc(pl))
                .collect::<Result<_, _>>()?;
            frames.push(FrameDetections::new(f.frame_index, polylines));
        }
        Ok(DetectionsFile { frames })
    }

    pub fn serialize(&self) -> String {
        let doc = DetectionsDoc {
            version: FORMAT_VERSION,
            frames: self
                .frames
                .iter()
                .map(|f| FrameDoc {
                    frame_index: f.frame_index,
                    polylines: f.polylines.iter().map(polyline_to_doc).collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&doc).expect("detections serialize");
        s.push('\n');
        s
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        write_string(path, &self.serialize())
    }
}

// --------------------------------------------------------- trajectory file

const TRAJECTORY_HEADER: &str = "index,x,y,theta";

/// CSV pose table: `index,x,y,theta`, indices contiguous from 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryFile {
    pub trajectory: Trajectory,
}

impl TrajectoryFile {
    pub fn new(trajectory: Trajectory) -> Self {
        TrajectoryFile { trajectory }
    }

    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end() == TRAJECTORY_HEADER => {}
            Some((_, h)) => {
                return Err(IoError::Format {
                    line: 1,
                    msg: format!("expected header '{TRAJECTORY_HEADER}', got '{h}'"),
                })
            }
            None => {
                return Err(IoError::Format {
                    line: 1,
                    msg: "empty trajectory file".to_string(),
                })
            }
        }
        let mut poses = Vec::new();
        for (li, raw) in lines {
            let line = li + 1;
            let row = raw.trim_end_matches('\r');
            if row.is_empty() {
                return Err(IoError::Format {
                    line,
                    msg: "blank row".to_string(),
                });
            }
            let fields: Vec<&str> = row.split(',').collect();
            if fields.len() != 4 {
                return Err(IoError::Format {
                    line,
                    msg: format!("expected 4 comma-separated fields, got {}", fields.len()),
                });
            }
            let bad = |what: &str| IoError::Format {
                line,
                msg: format!("invalid {what} '{}'", fields[if what == "index" { 0 } else { 1 }]),
            };
            let index: usize = fields[0]
                .parse()
                .map_err(|_| bad("index"))?;
            if index != poses.len() {
                return Err(IoError::Format {
                    line,
                    msg: format!("index {index} out of order; expected {}", poses.len()),
                });
            }
            let mut nums = [0.0f64; 3];
            for (k, f) in fields[1..].iter().enumerate() {
                nums[k] = f.parse().map_err(|_| IoError::Format {
                    line,
                    msg: format!("invalid number '{f}'"),
                })?;
            }
            poses.push(Pose2::new(nums[0], nums[1], nums[2]));
        }
        Ok(TrajectoryFile {
            trajectory: Trajectory::new(poses)?,
        })
    }

    pub fn serialize(&self) -> String {
        let mut s = String::from(TRAJECTORY_HEADER);
        s.push('\n');
        for (i, p) in self.trajectory.poses().iter().enumerate() {
            s.push_str(&format!("{i},{},{},{}\n", p.x, p.y, p.theta));
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        write_string(path, &self.serialize())
    }
}

// ------------------------------------------------------------- config file

/// Flat TOML pipeline configuration.
///
/// Every key is optional; a missing key takes the library default and is
/// listed in `defaulted` so callers can log the substitution. Unknown keys
/// are rejected outright.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigFile {
    pub config: PipelineConfig,
    pub defaulted: Vec<&'static str>,
}

#[derive(Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    mode: Option<PipelineMode>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dalmr_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dalmr_matching: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dalmr_match_weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    base_area: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    s_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_hypotheses: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    distance_compat_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inlier_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    min_pair_separation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    map_query_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rng_seed: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    history_window: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    covariance_floor: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    detection_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    static_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    odometry_information: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    max_iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    update_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    cost_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    damping: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    robustifier: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    robustifier_phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dcs_phi: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    force_zero_entropy: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_batch: Option<bool>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let raw: RawConfig = toml::from_str(text)?;
        let mut config = PipelineConfig::default();
        let mut defaulted = Vec::new();

        macro_rules! take {
            ($key:ident => $slot:expr) => {
                match raw.$key {
                    Some(v) => $slot = v,
                    None => defaulted.push(stringify!($key)),
                }
            };
        }

        take!(mode => config.mode);
        take!(dalmr_weight => config.dalmr_weight);
        take!(dalmr_matching => config.dalmr_matching);
        match raw.base_area {
            Some([x, y, t]) => {
                config.dcsac.base_area = crate::association::SearchArea::new(x, y, t)
                    .map_err(|e| IoError::Invalid(format!("base_area: {e}")))?;
            }
            None => defaulted.push("base_area"),
        }
        take!(s_min => config.dcsac.s_min);
        take!(n_hypotheses => config.dcsac.n_hypotheses);
        take!(distance_compat_tol => config.dcsac.distance_compat_tol);
        take!(inlier_threshold => config.dcsac.inlier_threshold);
        take!(min_pair_separation => config.dcsac.min_pair_separation);
        take!(map_query_radius => config.dcsac.map_query_radius);
        match raw.rng_seed {
            // TOML integers are signed; the bit pattern carries the seed.
            Some(v) => config.dcsac.rng_seed = v as u64,
            None => defaulted.push("rng_seed"),
        }
        match raw.dalmr_match_weight {
            Some(v) => config.dcsac.dalmr_match_weight = Some(v),
            None => defaulted.push("dalmr_match_weight"),
        }
        take!(window => config.window);
        take!(history_window => config.history_window);
        match raw.covariance_floor {
            Some([x, y, t]) => config.covariance_floor = (x, y, t),
            None => defaulted.push("covariance_floor"),
        }
        take!(detection_floor => config.detection_floor);
        take!(static_sigma => config.static_sigma);
        match raw.odometry_information {
            Some([x, y, t]) => config.odometry_information = (x, y, t),
            None => defaulted.push("odometry_information"),
        }
        take!(max_iterations => config.solver.max_iterations);
        take!(update_tol => config.solver.update_tol);
        take!(cost_tol => config.solver.cost_tol);
        take!(damping => config.solver.damping);
        match raw.robustifier.as_deref() {
            None => {
                if raw.robustifier_phi.is_some() {
                    return Err(IoError::Invalid(
                        "robustifier_phi given without robustifier = 'covariance_scaling'"
                            .to_string(),
                    ));
                }
                defaulted.push("robustifier");
            }
            Some("none") => {
                if raw.robustifier_phi.is_some() {
                    return Err(IoError::Invalid(
                        "robustifier_phi given without robustifier = 'covariance_scaling'"
                            .to_string(),
                    ));
                }
                config.solver.robustifier = Robustifier::None;
            }
            Some("covariance_scaling") => {
                let phi = match raw.robustifier_phi {
                    Some(p) => p,
                    None => {
                        defaulted.push("robustifier_phi");
                        1.0
                    }
                };
                config.solver.robustifier = Robustifier::CovarianceScaling { phi };
            }
            Some(other) => {
                return Err(IoError::Invalid(format!(
                    "unknown robustifier '{other}' (expected 'none' or 'covariance_scaling')"
                )))
            }
        }
        take!(dcs_phi => config.dcs_phi);
        take!(force_zero_entropy => config.force_zero_entropy);
        take!(final_batch => config.final_batch);

        Ok(ConfigFile { config, defaulted })
    }

    /// Dumps every key explicitly, so `parse(serialize(c))` defaults nothing.
    pub fn serialize(config: &PipelineConfig) -> String {
        let SolverConfig {
            max_iterations,
            update_tol,
            cost_tol,
            robustifier,
            damping,
        } = config.solver;
        let (robustifier, robustifier_phi) = match robustifier {
            Robustifier::None => ("none".to_string(), None),
            Robustifier::CovarianceScaling { phi } => {
                ("covariance_scaling".to_string(), Some(phi))
            }
        };
        let raw = RawConfig {
            mode: Some(config.mode),
            dalmr_weight: Some(config.dalmr_weight),
            dalmr_matching: Some(config.dalmr_matching),
            dalmr_match_weight: config.dcsac.dalmr_match_weight,
            base_area: Some([
                config.dcsac.base_area.x_max,
                config.dcsac.base_area.y_max,
                config.dcsac.base_area.theta_max,
            ]),
            s_min: Some(config.dcsac.s_min),
            n_hypotheses: Some(config.dcsac.n_hypotheses),
            distance_compat_tol: Some(config.dcsac.distance_compat_tol),
            inlier_threshold: Some(config.dcsac.inlier_threshold),
            min_pair_separation: Some(config.dcsac.min_pair_separation),
            map_query_radius: Some(config.dcsac.map_query_radius),
            rng_seed: Some(config.dcsac.rng_seed as i64),
            window: Some(config.window),
            history_window: Some(config.history_window),
            covariance_floor: Some([
                config.covariance_floor.0,
                config.covariance_floor.1,
                config.covariance_floor.2,
            ]),
            detection_floor: Some(config.detection_floor),
            static_sigma: Some(config.static_sigma),
            odometry_information: Some([
                config.odometry_information.0,
                config.odometry_information.1,
                config.odometry_information.2,
            ]),
            max_iterations: Some(max_iterations),
            update_tol: Some(update_tol),
            cost_tol: Some(cost_tol),
            damping: Some(damping),
            robustifier: Some(robustifier),
            robustifier_phi,
            dcs_phi: Some(config.dcs_phi),
            force_zero_entropy: Some(config.force_zero_entropy),
            final_batch: Some(config.final_batch),
        };
        toml::to_string(&raw).expect("config serializes")
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read_to_string(path)?)
    }
}

// ------------------------------------------------------- scenario spec file

/// TOML scenario description for the generator: road layout plus noise model.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpecFile {
    pub layout: RoadLayout,
    pub noise: NoiseModel,
}

impl ScenarioSpecFile {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        Ok(toml::from_str(text)?)
    }

    pub fn serialize(&self) -> String {
        toml::to_string(self).expect("scenario spec serializes")
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), IoError> {
        write_string(path, &self.serialize())
    }
}
