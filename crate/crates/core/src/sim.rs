//! Synthetic scenario generation: road layouts, lane-marking maps, ground
//! truth drives, biased/drifting priors, and simulated detections.
//!
//! A layout is a chain of straight and circular-arc elements driven along at
//! fixed frame spacing. Lane markings are offset curves of the drive line;
//! dashed styles cut them into short polylines, which is what makes straight
//! roads longitudinally ambiguous. Intersections add a perpendicular road
//! plus nested L-shaped corner furniture whose sharp vertices carry large
//! delta-angles, so frames near an intersection score strongly negative
//! pseudo-entropy while straight stretches score near zero.
//!
//! The prior is the ground truth left-composed with a constant world-frame
//! bias, then right-composed with a body-frame random walk. With zero drift
//! the prior's relative motions equal the truth's exactly, which is what
//! makes zero-noise end-to-end recovery testable to tight tolerance.

use crate::geometry::{FrameDetections, GeometryError, LandmarkMap, Polyline, Pose2, Trajectory};
use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("layout has no road elements")]
    EmptyLayout,
    #[error("invalid layout: {0}")]
    BadLayout(&'static str),
    #[error("invalid noise model: {0}")]
    BadNoise(&'static str),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Lane-marking rendering style.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarkingStyle {
    Solid,
    Dashed { dash: f64, gap: f64 },
}

/// One centerline element; elements chain tangentially.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RoadElement {
    Straight { length: f64 },
    /// Circular arc of given radius; positive angle turns left.
    Arc { radius: f64, angle: f64 },
}

impl RoadElement {
    fn length(&self) -> f64 {
        match self {
            RoadElement::Straight { length } => *length,
            RoadElement::Arc { radius, angle } => radius * angle.abs(),
        }
    }

    /// Pose reached after driving `s` meters into this element, relative to
    /// its entry pose.
    fn advance(&self, s: f64) -> Pose2 {
        match self {
            RoadElement::Straight { .. } => Pose2::new(s, 0.0, 0.0),
            RoadElement::Arc { radius, angle } => {
                let tau = s / radius;
                let sign = angle.signum();
                Pose2::new(
                    radius * tau.sin(),
                    sign * radius * (1.0 - tau.cos()),
                    sign * tau,
                )
            }
        }
    }
}

/// A perpendicular cross road with corner furniture, centered on the drive
/// line at arc length `at`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntersectionSpec {
    /// Arc length along the main road where the cross road crosses.
    pub at: f64,
    /// Cross-road length to each side of the main road.
    pub arm: f64,
    /// Distance from the crossing center to the innermost corner vertex.
    pub corner_offset: f64,
    /// Leg length of each L-shaped corner marking.
    pub corner_arm: f64,
    /// Number of nested L rings per corner.
    pub nested: usize,
    /// Radial spacing between nested rings.
    pub nest_spacing: f64,
}

impl Default for IntersectionSpec {
    fn default() -> Self {
        IntersectionSpec {
            at: 0.0,
            arm: 25.0,
            corner_offset: 8.0,
            corner_arm: 4.0,
            nested: 2,
            nest_spacing: 1.5,
        }
    }
}

impl IntersectionSpec {
    pub fn at(at: f64) -> Self {
        IntersectionSpec {
            at,
            ..IntersectionSpec::default()
        }
    }
}

/// Declarative road description the scenario generator consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RoadLayout {
    pub elements: Vec<RoadElement>,
    /// Lane count; markings are drawn on `lanes + 1` boundary lines, with the
    /// vehicle driving the center of the first lane.
    pub lanes: usize,
    pub lane_width: f64,
    pub marking: MarkingStyle,
    /// Meters driven between consecutive frames.
    pub frame_spacing: f64,
    /// Target spacing of map and detection polyline points.
    pub point_spacing: f64,
    pub intersections: Vec<IntersectionSpec>,
}

impl Default for RoadLayout {
    fn default() -> Self {
        RoadLayout {
            elements: Vec::new(),
            lanes: 2,
            lane_width: 3.5,
            marking: MarkingStyle::Dashed { dash: 2.0, gap: 4.0 },
            frame_spacing: 1.0,
            point_spacing: 1.0,
            intersections: Vec::new(),
        }
    }
}

impl RoadLayout {
    /// A plain straight road with the default lane structure.
    pub fn straight(length: f64) -> Self {
        RoadLayout {
            elements: vec![RoadElement::Straight { length }],
            ..RoadLayout::default()
        }
    }

    pub fn total_length(&self) -> f64 {
        self.elements.iter().map(|e| e.length()).sum()
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.elements.is_empty() {
            return Err(SimError::EmptyLayout);
        }
        for e in &self.elements {
            match *e {
                RoadElement::Straight { length } => {
                    if !(length > 0.0) || !length.is_finite() {
                        return Err(SimError::BadLayout("straight length must be > 0"));
                    }
                }
                RoadElement::Arc { radius, angle } => {
                    if !(radius > 0.0) || !radius.is_finite() {
                        return Err(SimError::BadLayout("arc radius must be > 0"));
                    }
                    if angle == 0.0 || !angle.is_finite() {
                        return Err(SimError::BadLayout("arc angle must be nonzero"));
                    }
                    if radius <= self.lanes as f64 * self.lane_width {
                        return Err(SimError::BadLayout(
                            "arc radius must exceed the road half-width",
                        ));
                    }
                }
            }
        }
        if self.lanes == 0 {
            return Err(SimError::BadLayout("need at least one lane"));
        }
        if !(self.lane_width > 0.0) {
            return Err(SimError::BadLayout("lane width must be > 0"));
        }
        if let MarkingStyle::Dashed { dash, gap } = self.marking {
            if !(dash > 0.0) || !(gap >= 0.0) {
                return Err(SimError::BadLayout("dash must be > 0 and gap >= 0"));
            }
        }
        if !(self.frame_spacing > 0.0) {
            return Err(SimError::BadLayout("frame spacing must be > 0"));
        }
        if !(self.point_spacing > 0.0) {
            return Err(SimError::BadLayout("point spacing must be > 0"));
        }
        let total = self.total_length();
        if total < self.frame_spacing {
            return Err(SimError::BadLayout("road shorter than one frame step"));
        }
        for x in &self.intersections {
            if !(0.0..=total).contains(&x.at) {
                return Err(SimError::BadLayout("intersection lies outside the road"));
            }
            if !(x.arm > 0.0) || !(x.corner_arm > 0.0) || !(x.nest_spacing > 0.0) {
                return Err(SimError::BadLayout("intersection lengths must be > 0"));
            }
            if x.corner_offset <= (self.lanes as f64 + 0.5) * self.lane_width - self.lane_width {
                return Err(SimError::BadLayout(
                    "corner offset must clear the road width",
                ));
            }
            if x.nested == 0 {
                return Err(SimError::BadLayout("need at least one corner ring"));
            }
        }
        Ok(())
    }

    /// Drive-line pose `s` meters along the road (clamped to its ends).
    pub fn pose_at(&self, s: f64) -> Pose2 {
        let mut cursor = Pose2::identity();
        let mut remaining = s.max(0.0);
        for e in &self.elements {
            let len = e.length();
            if remaining <= len {
                return cursor.compose(&e.advance(remaining));
            }
            cursor = cursor.compose(&e.advance(len));
            remaining -= len;
        }
        cursor
    }

    /// Points along the lateral-offset curve of the drive line from arc
    /// length `s0` to `s1`, spaced `point_spacing` with exact endpoints.
    fn sample_offset(&self, s0: f64, s1: f64, offset: f64) -> Vec<Vector2<f64>> {
        let span = s1 - s0;
        let n = (span / self.point_spacing + 1e-9).floor() as usize;
        let mut stations: Vec<f64> = (0..=n)
            .map(|k| s0 + k as f64 * self.point_spacing)
            .collect();
        let last = *stations.last().unwrap();
        if s1 - last > 1e-9 {
            stations.push(s1);
        } else {
            *stations.last_mut().unwrap() = s1;
        }
        stations
            .iter()
            .map(|&s| self.pose_at(s).transform_point(Vector2::new(0.0, offset)))
            .collect()
    }

    /// Lateral offsets of the lane-boundary marking lines.
    fn marking_offsets(&self) -> Vec<f64> {
        (0..=self.lanes)
            .map(|k| k as f64 * self.lane_width - 0.5 * self.lane_width)
            .collect()
    }

    /// Renders the full lane-marking map.
    pub fn build_map(&self) -> Result<LandmarkMap, SimError> {
        self.validate()?;
        let total = self.total_length();
        let mut polylines = Vec::new();

        for &offset in &self.marking_offsets() {
            match self.marking {
                MarkingStyle::Solid => {
                    polylines.push(Polyline::new(self.sample_offset(0.0, total, offset))?);
                }
                MarkingStyle::Dashed { dash, gap } => {
                    let period = dash + gap;
                    let mut start = 0.0;
                    while start < total - 1e-6 {
                        let end = (start + dash).min(total);
                        if end - start > 1e-6 {
                            polylines.push(Polyline::new(self.sample_offset(start, end, offset))?);
                        }
                        start += period;
                    }
                }
            }
        }

        for x in &self.intersections {
            let center = self.pose_at(x.at);
            // Cross road: same lane structure, rotated a quarter turn, solid.
            for &offset in &self.marking_offsets() {
                let pts: Vec<Vector2<f64>> = {
                    let n = (2.0 * x.arm / self.point_spacing + 1e-9).floor() as usize;
                    let mut stations: Vec<f64> =
                        (0..=n).map(|k| -x.arm + k as f64 * self.point_spacing).collect();
                    if x.arm - *stations.last().unwrap() > 1e-9 {
                        stations.push(x.arm);
                    } else {
                        *stations.last_mut().unwrap() = x.arm;
                    }
                    stations
                        .iter()
                        .map(|&t| center.transform_point(Vector2::new(offset, t)))
                        .collect()
                };
                polylines.push(Polyline::new(pts)?);
            }
            // Nested L-shaped corner furniture in all four quadrants. The
            // sharp vertex carries a delta-angle of π/2, so each ring is a
            // strong entropy anchor.
            for su in [-1.0, 1.0] {
                for sv in [-1.0, 1.0] {
                    for ring in 0..x.nested {
                        let a = x.corner_offset + ring as f64 * x.nest_spacing;
                        let mut local = Vec::new();
                        let steps = (x.corner_arm / self.point_spacing).ceil().max(1.0) as usize;
                        for k in (1..=steps).rev() {
                            let d = x.corner_arm * k as f64 / steps as f64;
                            local.push(Vector2::new(su * (a + d), sv * a));
                        }
                        local.push(Vector2::new(su * a, sv * a));
                        for k in 1..=steps {
                            let d = x.corner_arm * k as f64 / steps as f64;
                            local.push(Vector2::new(su * a, sv * (a + d)));
                        }
                        let pts: Vec<Vector2<f64>> =
                            local.iter().map(|p| center.transform_point(*p)).collect();
                        polylines.push(Polyline::new(pts)?);
                    }
                }
            }
        }

        Ok(LandmarkMap::new(polylines))
    }
}

/// Prior and detection corruption parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// Constant world-frame pose error applied to the whole prior (m, m, rad).
    pub prior_bias: (f64, f64, f64),
    /// Body-frame random-walk intensity (m/√m, rad/√m).
    pub prior_drift_rate: (f64, f64),
    /// Per-axis i.i.d. detection point noise, meters.
    pub detection_noise_sigma: f64,
    /// Probability of dropping each detected polyline.
    pub detection_dropout: f64,
    /// Detection clipping radius around the ground-truth pose, meters.
    pub sensor_range: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            prior_bias: (0.0, 3.0, 0.0),
            prior_drift_rate: (0.0, 0.0),
            detection_noise_sigma: 0.0,
            detection_dropout: 0.0,
            sensor_range: 30.0,
        }
    }
}

impl NoiseModel {
    /// A noiseless, unbiased model; the prior equals the ground truth.
    pub fn noiseless() -> Self {
        NoiseModel {
            prior_bias: (0.0, 0.0, 0.0),
            ..NoiseModel::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let (bx, by, bt) = self.prior_bias;
        if !(bx.is_finite() && by.is_finite() && bt.is_finite()) {
            return Err(SimError::BadNoise("prior bias must be finite"));
        }
        if !(self.prior_drift_rate.0 >= 0.0 && self.prior_drift_rate.1 >= 0.0) {
            return Err(SimError::BadNoise("drift rates must be >= 0"));
        }
        if !(self.detection_noise_sigma >= 0.0) {
            return Err(SimError::BadNoise("detection sigma must be >= 0"));
        }
        if !(0.0..1.0).contains(&self.detection_dropout) {
            return Err(SimError::BadNoise("dropout must be in [0, 1)"));
        }
        if !(self.sensor_range > 0.0) {
            return Err(SimError::BadNoise("sensor range must be > 0"));
        }
        Ok(())
    }
}

/// A complete synthetic session: map, truth, corrupted prior, detections.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub map: LandmarkMap,
    pub ground_truth: Trajectory,
    pub prior: Trajectory,
    pub detections: Vec<FrameDetections>,
    pub rng_seed: u64,
}

/// Splits a world-frame polyline into in-range runs and returns each run in
/// the sensor frame of `pose`, resampled to `step`.
fn clip_to_sensor(
    pl: &Polyline,
    pose: &Pose2,
    range: f64,
    step: f64,
) -> Result<Vec<Polyline>, GeometryError> {
    let inv = pose.inverse();
    let center = pose.translation();
    let r2 = range * range;
    let mut out = Vec::new();
    let mut run: Vec<Vector2<f64>> = Vec::new();
    for p in pl.points() {
        if (p - center).norm_squared() <= r2 {
            run.push(inv.transform_point(*p));
        } else if run.len() >= 2 {
            out.push(Polyline::new(std::mem::take(&mut run))?.resample(step)?);
        } else {
            run.clear();
        }
    }
    if run.len() >= 2 {
        out.push(Polyline::new(run)?.resample(step)?);
    }
    Ok(out)
}

/// Generates the full scenario for a layout, noise model, and seed.
///
/// Deterministic: the same arguments always produce bit-identical output.
pub fn generate_scenario(
    layout: &RoadLayout,
    noise: &NoiseModel,
    seed: u64,
) -> Result<Scenario, SimError> {
    layout.validate()?;
    noise.validate()?;
    let map = layout.build_map()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let total = layout.total_length();
    let frames = (total / layout.frame_spacing + 1e-9).floor() as usize + 1;
    let truth: Vec<Pose2> = (0..frames)
        .map(|i| layout.pose_at(i as f64 * layout.frame_spacing))
        .collect();

    // Prior: constant world-frame bias, then an integrated body-frame walk.
    let bias = Pose2::new(noise.prior_bias.0, noise.prior_bias.1, noise.prior_bias.2);
    let (drift_t, drift_r) = noise.prior_drift_rate;
    let step_sigma_t = drift_t * layout.frame_spacing.sqrt();
    let step_sigma_r = drift_r * layout.frame_spacing.sqrt();
    let walk_t = Normal::new(0.0, step_sigma_t).expect("validated sigma");
    let walk_r = Normal::new(0.0, step_sigma_r).expect("validated sigma");
    let mut eps = Pose2::identity();
    let mut prior = Vec::with_capacity(frames);
    for t in &truth {
        prior.push(bias.compose(t).compose(&eps));
        if drift_t > 0.0 || drift_r > 0.0 {
            let step = Pose2::new(
                walk_t.sample(&mut rng),
                walk_t.sample(&mut rng),
                walk_r.sample(&mut rng),
            );
            eps = eps.compose(&step);
        }
    }

    let gauss = Normal::new(0.0, noise.detection_noise_sigma).expect("validated sigma");
    let mut detections = Vec::with_capacity(frames);
    for (i, pose) in truth.iter().enumerate() {
        let mut frame_polylines = Vec::new();
        for pl in map.polylines() {
            for clipped in clip_to_sensor(pl, pose, noise.sensor_range, layout.point_spacing)? {
                if noise.detection_dropout > 0.0
                    && rng.random_range(0.0..1.0) < noise.detection_dropout
                {
                    continue;
                }
                if noise.detection_noise_sigma > 0.0 {
                    let noisy: Vec<Vector2<f64>> = clipped
                        .points()
                        .iter()
                        .map(|p| {
                            Vector2::new(p.x + gauss.sample(&mut rng), p.y + gauss.sample(&mut rng))
                        })
                        .collect();
                    // Noise can push a point over the range bound or collapse
                    // a segment; re-clip and keep the surviving runs.
                    let r2 = noise.sensor_range * noise.sensor_range;
                    let mut run: Vec<Vector2<f64>> = Vec::new();
                    let flush = |run: &mut Vec<Vector2<f64>>,
                                 out: &mut Vec<Polyline>| {
                        if run.len() >= 2 {
                            if let Ok(p) = Polyline::new(std::mem::take(run)) {
                                out.push(p);
                            }
                        } else {
                            run.clear();
                        }
                    };
                    for p in noisy {
                        if p.norm_squared() <= r2 {
                            run.push(p);
                        } else {
                            flush(&mut run, &mut frame_polylines);
                        }
                    }
                    flush(&mut run, &mut frame_polylines);
                } else {
                    frame_polylines.push(clipped);
                }
            }
        }
        detections.push(FrameDetections::new(i, frame_polylines));
    }

    debug_assert!(detections.iter().enumerate().all(|(i, f)| {
        f.polylines.iter().all(|pl| {
            pl.points()
                .iter()
                .all(|p| p.norm() <= noise.sensor_range + 1e-9 && {
                    let w = truth[i].transform_point(*p);
                    (w - truth[i].translation()).norm() <= noise.sensor_range + 1e-9
                })
        })
    }));

    Ok(Scenario {
        map,
        ground_truth: Trajectory::new(truth)?,
        prior: Trajectory::new(prior)?,
        detections,
        rng_seed: seed,
    })
}
