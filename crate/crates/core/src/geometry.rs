//! Planar rigid-body math and the polyline/lane-marking model.
//!
//! Conventions:
//! - A [`Pose2`] is the transform from its local frame into the world frame:
//!   `world = R(theta) * local + t`.
//! - Angles are radians, always normalized to (−π, π] by remainder arithmetic.
//! - Polylines are ordered point lists with strictly positive segment lengths.
//! - The delta-angle representation augments each polyline point with
//!   `z = Δα·w`, where Δα is the absolute heading change between the adjacent
//!   segments (in [0, π], zero at endpoints) and w a unitless weight.

use nalgebra::{Matrix2, Vector2, Vector3};
use std::collections::HashMap;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

/// Minimum admissible polyline segment length in meters.
pub const MIN_SEGMENT_LEN: f64 = 1e-9;

/// Errors from constructing or transforming geometric values.
#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("polyline needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("polyline segment {0} is shorter than {MIN_SEGMENT_LEN} m")]
    DegenerateSegment(usize),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("resample step must be > 0, got {0}")]
    BadStep(f64),
    #[error("delta-angle weight must be finite and >= 0, got {0}")]
    BadWeight(f64),
    #[error("trajectory must be non-empty")]
    EmptyTrajectory,
    #[error("delta signal value {0} outside [0, pi]")]
    DeltaOutOfRange(f64),
}

/// Wraps an angle to (−π, π].
pub fn normalize_angle(a: f64) -> f64 {
    // Already-normalized angles pass through untouched; the remainder round
    // trip below costs about an ulp, which matters for exact inverses.
    if a > -PI && a <= PI {
        return a;
    }
    // rem_euclid lands in [0, 2π); shift the upper half down.
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// SE(2) pose: translation in meters, heading in radians in (−π, π].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    /// Builds a pose, normalizing the heading.
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    /// The identity transform.
    pub fn identity() -> Self {
        Pose2 {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    /// Translation part as a vector.
    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    /// Rotation part as a 2×2 matrix.
    pub fn rotation(&self) -> Matrix2<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    /// `self ∘ other`: applies `other` in this pose's frame.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2 {
            x: self.x + other.x * c - other.y * s,
            y: self.y + other.x * s + other.y * c,
            theta: normalize_angle(self.theta + other.theta),
        }
    }

    /// The inverse transform.
    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2 {
            x: -(self.x * c + self.y * s),
            y: self.x * s - self.y * c,
            theta: normalize_angle(-self.theta),
        }
    }

    /// Relative transform taking `self` onto `to`: `self ∘ relative = to`.
    pub fn relative(&self, to: &Pose2) -> Pose2 {
        self.inverse().compose(to)
    }

    /// Maps a point from this pose's local frame into the world frame.
    pub fn transform_point(&self, d: Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.theta.sin_cos();
        Vector2::new(d.x * c - d.y * s + self.x, d.x * s + d.y * c + self.y)
    }
}

/// Ordered 2D point chain with strictly positive segment lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyline {
    points: Vec<Vector2<f64>>,
}

impl Polyline {
    /// Validates and wraps a point list.
    pub fn new(points: Vec<Vector2<f64>>) -> Result<Self, GeometryError> {
        if points.len() < 2 {
            return Err(GeometryError::TooFewPoints(points.len()));
        }
        for (i, p) in points.iter().enumerate() {
            if !(p.x.is_finite() && p.y.is_finite()) {
                return Err(GeometryError::NonFinite(i));
            }
        }
        for i in 1..points.len() {
            if (points[i] - points[i - 1]).norm() <= MIN_SEGMENT_LEN {
                return Err(GeometryError::DegenerateSegment(i - 1));
            }
        }
        Ok(Polyline { points })
    }

    /// Convenience constructor from (x, y) tuples.
    pub fn from_xy(points: &[(f64, f64)]) -> Result<Self, GeometryError> {
        Polyline::new(points.iter().map(|&(x, y)| Vector2::new(x, y)).collect())
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false // by construction: at least 2 points
    }

    /// Sum of segment lengths in meters.
    pub fn arc_length(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .sum()
    }

    /// Applies a rigid transform to every point.
    pub fn transform(&self, pose: &Pose2) -> Polyline {
        Polyline {
            points: self
                .points
                .iter()
                .map(|&p| pose.transform_point(p))
                .collect(),
        }
    }

    /// Reverses the point order.
    pub fn reversed(&self) -> Polyline {
        let mut points = self.points.clone();
        points.reverse();
        Polyline { points }
    }

    /// Per-point absolute heading change Δα in [0, π]; endpoints get 0.
    pub fn delta_angles(&self) -> Vec<f64> {
        let n = self.points.len();
        let mut out = vec![0.0; n];
        if n < 3 {
            return out;
        }
        let heading = |a: Vector2<f64>, b: Vector2<f64>| (b.y - a.y).atan2(b.x - a.x);
        let mut prev = heading(self.points[0], self.points[1]);
        for i in 1..n - 1 {
            let next = heading(self.points[i], self.points[i + 1]);
            out[i] = normalize_angle(next - prev).abs();
            prev = next;
        }
        out
    }

    /// Augments with the delta-angle channel `z = Δα·w`.
    pub fn to_dalmr(&self, w: f64) -> Result<DalmrPolyline, GeometryError> {
        if !w.is_finite() || w < 0.0 {
            return Err(GeometryError::BadWeight(w));
        }
        let deltas = self.delta_angles();
        let points = self
            .points
            .iter()
            .zip(&deltas)
            .map(|(p, &d)| Vector3::new(p.x, p.y, d * w))
            .collect();
        Ok(DalmrPolyline { points, weight: w })
    }

    /// Arc-length resampling: every segment is subdivided into equal pieces no
    /// longer than `step` (within a 1e−9 relative tolerance). Original
    /// vertices (corners included) are preserved, so delta-angles and total
    /// arc length survive resampling exactly. The tolerance keeps resampling
    /// idempotent: a segment already exactly `step` long is never split by a
    /// rounding ulp.
    pub fn resample(&self, step: f64) -> Result<Polyline, GeometryError> {
        if !(step > 0.0) {
            return Err(GeometryError::BadStep(step));
        }
        let mut out = Vec::with_capacity(self.points.len());
        out.push(self.points[0]);
        for w in self.points.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = (b - a).norm();
            let pieces = (len / step - 1e-9).ceil().max(1.0) as usize;
            for j in 1..pieces {
                let t = j as f64 / pieces as f64;
                out.push(a + (b - a) * t);
            }
            out.push(b);
        }
        Ok(Polyline { points: out })
    }
}

/// Arc-length resampling of a polyline; see [`Polyline::resample`].
pub fn resample_polyline(pl: &Polyline, step: f64) -> Result<Polyline, GeometryError> {
    pl.resample(step)
}

// On the wire a polyline is a plain sequence of [x, y] pairs; construction
// rules are enforced on deserialize so a file can't smuggle in a degenerate
// polyline.
impl serde::Serialize for Polyline {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = ser.serialize_seq(Some(self.points.len()))?;
        for p in &self.points {
            seq.serialize_element(&[p.x, p.y])?;
        }
        seq.end()
    }
}

impl<'de> serde::Deserialize<'de> for Polyline {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        let raw: Vec<[f64; 2]> = Vec::deserialize(de)?;
        Polyline::new(raw.iter().map(|&[x, y]| Vector2::new(x, y)).collect())
            .map_err(serde::de::Error::custom)
    }
}

/// Polyline augmented with the weighted delta-angle channel.
#[derive(Debug, Clone, PartialEq)]
pub struct DalmrPolyline {
    points: Vec<Vector3<f64>>,
    weight: f64,
}

impl DalmrPolyline {
    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    /// The w-free delta-angle sequence of this polyline.
    pub fn delta_signal(&self) -> crate::entropy::DeltaSignal {
        // Recomputed from the xy channel rather than dividing z by w, so a
        // zero weight stays well defined; both routes agree for w > 0.
        let xy: Vec<Vector2<f64>> = self.points.iter().map(|p| Vector2::new(p.x, p.y)).collect();
        let pl = Polyline { points: xy };
        crate::entropy::DeltaSignal::new(pl.delta_angles())
            .expect("delta angles are in [0, pi] by construction")
    }
}

/// Pose sequence indexed densely by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose2>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose2>) -> Result<Self, GeometryError> {
        if poses.is_empty() {
            return Err(GeometryError::EmptyTrajectory);
        }
        Ok(Trajectory { poses })
    }

    pub fn poses(&self) -> &[Pose2] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        false // by construction: at least one pose
    }

    pub fn get(&self, i: usize) -> Pose2 {
        self.poses[i]
    }
}

/// One frame's detected lane-marking polylines, expressed in the sensor frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameDetections {
    pub frame_index: usize,
    pub polylines: Vec<Polyline>,
}

impl FrameDetections {
    pub fn new(frame_index: usize, polylines: Vec<Polyline>) -> Self {
        FrameDetections {
            frame_index,
            polylines,
        }
    }

    /// Total point count across all polylines.
    pub fn point_count(&self) -> usize {
        self.polylines.iter().map(|p| p.len()).sum()
    }
}

/// World-frame lane-marking map with a uniform-grid index over every
/// constituent point. Each point also carries its w-free delta-angle so the
/// optional augmented distance metric can use it without reshaping the map.
#[derive(Debug, Clone)]
pub struct LandmarkMap {
    polylines: Vec<Polyline>,
    points: Vec<Vector2<f64>>,
    deltas: Vec<f64>,
    grid: GridIndex,
}

/// Default grid cell edge in meters. Queries are dominated by short
/// inlier-radius lookups (~0.5 m), so the cell matches that scale; the rare
/// long-radius candidate scans just visit more cells.
const DEFAULT_CELL: f64 = 1.0;

impl LandmarkMap {
    pub fn new(polylines: Vec<Polyline>) -> Self {
        Self::with_cell_size(polylines, DEFAULT_CELL)
    }

    pub fn with_cell_size(polylines: Vec<Polyline>, cell: f64) -> Self {
        let mut points = Vec::new();
        let mut deltas = Vec::new();
        for pl in &polylines {
            points.extend_from_slice(pl.points());
            deltas.extend_from_slice(&pl.delta_angles());
        }
        let grid = GridIndex::build(&points, cell);
        LandmarkMap {
            polylines,
            points,
            deltas,
            grid,
        }
    }

    pub fn polylines(&self) -> &[Polyline] {
        &self.polylines
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> Vector2<f64> {
        self.points[i]
    }

    /// W-free delta-angle of point `i` within its source polyline.
    pub fn delta(&self, i: usize) -> f64 {
        self.deltas[i]
    }

    pub fn point_count(&self) -> usize {
        self.points.len()
    }

    /// Indices of every point within `radius` of `center`, ascending.
    pub fn points_within(&self, center: Vector2<f64>, radius: f64) -> Vec<usize> {
        self.grid.within(&self.points, center, radius)
    }

    /// Nearest point within `radius` of `p`, if any, as (index, distance).
    /// Ties on distance resolve to the smallest index.
    pub fn nearest_within(&self, p: Vector2<f64>, radius: f64) -> Option<(usize, f64)> {
        self.grid.nearest(&self.points, p, radius)
    }
}

/// Uniform hash-grid over points; queries are exact (candidate cells cover the
/// query disc, candidates are distance-filtered) and deterministic.
#[derive(Debug, Clone)]
struct GridIndex {
    cell: f64,
    cells: HashMap<(i64, i64), Vec<u32>>,
}

impl GridIndex {
    fn build(points: &[Vector2<f64>], cell: f64) -> Self {
        assert!(cell > 0.0, "grid cell must be positive");
        let mut cells: HashMap<(i64, i64), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells
                .entry(Self::key(p, cell))
                .or_default()
                .push(i as u32);
        }
        GridIndex { cell, cells }
    }

    fn key(p: &Vector2<f64>, cell: f64) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    fn cell_range(&self, center: Vector2<f64>, radius: f64) -> (i64, i64, i64, i64) {
        let x0 = ((center.x - radius) / self.cell).floor() as i64;
        let x1 = ((center.x + radius) / self.cell).floor() as i64;
        let y0 = ((center.y - radius) / self.cell).floor() as i64;
        let y1 = ((center.y + radius) / self.cell).floor() as i64;
        (x0, x1, y0, y1)
    }

    fn within(&self, points: &[Vector2<f64>], center: Vector2<f64>, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !(radius >= 0.0) {
            return out;
        }
        let r2 = radius * radius;
        let (x0, x1, y0, y1) = self.cell_range(center, radius);
        for cx in x0..=x1 {
            for cy in y0..=y1 {
                if let Some(idxs) = self.cells.get(&(cx, cy)) {
                    for &i in idxs {
                        if (points[i as usize] - center).norm_squared() <= r2 {
                            out.push(i as usize);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }

    fn nearest(
        &self,
        points: &[Vector2<f64>],
        p: Vector2<f64>,
        radius: f64,
    ) -> Option<(usize, f64)> {
        if !(radius >= 0.0) {
            return None;
        }
        let r2 = radius * radius;
        let (x0, x1, y0, y1) = self.cell_range(p, radius);
        let mut best: Option<(f64, usize)> = None;
        for cx in x0..=x1 {
            for cy in y0..=y1 {
                if let Some(idxs) = self.cells.get(&(cx, cy)) {
                    for &i in idxs {
                        let d2 = (points[i as usize] - p).norm_squared();
                        if d2 <= r2 {
                            let cand = (d2, i as usize);
                            best = Some(match best {
                                None => cand,
                                Some(b) if cand < b => cand,
                                Some(b) => b,
                            });
                        }
                    }
                }
            }
        }
        best.map(|(d2, i)| (i, d2.sqrt()))
    }
}
