//! Data association between frame detections and the landmark map.
//!
//! The associator searches for a correction ΔT of the pre-estimated pose x̄ᵢ
//! under which the detected polyline points overlap map points. Hypotheses
//! are generated by distance-compatible sample consensus (DC-SAC): draw a
//! detection point pair, draw a map point pair with a compatible separation,
//! fit the two-point Procrustes transform, keep it only if the implied ΔT
//! stays inside the search area Φ, then score by inlier count over all
//! detection points. An all-zero area skips sampling entirely: the result is
//! plain nearest-neighbour (NN) pairing at x̄ᵢ.
//!
//! The search area itself is tuned per frame from the detections'
//! pseudo-entropy: straight, feature-poor frames shrink the area toward the
//! NN limit (aliasing along the road cannot be resolved, so the associator
//! is not allowed to guess), while curvature-rich frames open it up to the
//! configured maximum.
//!
//! Determinism: each hypothesis draws from its own counter-derived RNG
//! stream and the winner is selected by a total order, so the result is
//! bit-identical for a fixed seed regardless of how many threads score the
//! hypothesis pool.

use crate::entropy::{pseudo_entropy, DeltaSignal, EntropyScore};
use crate::geometry::{FrameDetections, LandmarkMap, Pose2};
use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

/// Rejection cap: a hypothesis gives up after this many failed draws.
pub const MAX_DRAW_ATTEMPTS: usize = 20;

/// Errors from association configuration and fitting.
#[derive(Debug, Error, PartialEq)]
pub enum AssociationError {
    #[error("search area components must be non-negative")]
    NegativeArea,
    #[error("minimum entropy must be negative, got {0}")]
    BadSMin(f64),
    #[error("degenerate point pair (separation {0} m)")]
    DegeneratePair(f64),
    #[error("invalid configuration: {0}")]
    BadConfig(&'static str),
}

/// Search area Φ = (x_max, y_max, θ_max) bounding admissible corrections.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SearchArea {
    /// Longitudinal bound, meters.
    pub x_max: f64,
    /// Lateral bound, meters.
    pub y_max: f64,
    /// Heading bound, radians.
    pub theta_max: f64,
}

impl SearchArea {
    pub fn new(x_max: f64, y_max: f64, theta_max: f64) -> Result<Self, AssociationError> {
        if !(x_max >= 0.0 && y_max >= 0.0 && theta_max >= 0.0) {
            return Err(AssociationError::NegativeArea);
        }
        Ok(SearchArea {
            x_max,
            y_max,
            theta_max,
        })
    }

    /// All-zero area: the NN degenerate limit.
    pub fn is_zero(&self) -> bool {
        self.x_max == 0.0 && self.y_max == 0.0 && self.theta_max == 0.0
    }

    fn scaled(&self, f: f64) -> SearchArea {
        SearchArea {
            x_max: self.x_max * f,
            y_max: self.y_max * f,
            theta_max: self.theta_max * f,
        }
    }

    /// True when `delta` lies inside the area (bounds inclusive).
    pub fn contains(&self, delta: &Pose2) -> bool {
        delta.x.abs() <= self.x_max
            && delta.y.abs() <= self.y_max
            && delta.theta.abs() <= self.theta_max
    }
}

/// Scales the base search area by the frame's pseudo-entropy:
/// the factor is min(1, |s / s_min|), so the area saturates at `base` once
/// the score passes `s_min` and collapses to the NN limit as s → 0.
pub fn tune_area(
    base: &SearchArea,
    s: EntropyScore,
    s_min: f64,
) -> Result<SearchArea, AssociationError> {
    if !(s_min < 0.0) {
        return Err(AssociationError::BadSMin(s_min));
    }
    debug_assert!(s.s <= 0.0, "pseudo-entropy must be non-positive");
    let factor = (s.s / s_min).abs().min(1.0);
    if factor == 1.0 {
        // Saturation branch returns the base exactly, bit for bit.
        return Ok(*base);
    }
    Ok(base.scaled(factor))
}

/// Least-squares SE(2) fit of two point correspondences: the rotation aligns
/// the difference vector d2−d1 onto l2−l1, the translation aligns the
/// rotated midpoints. This is the exact minimizer of
/// |T(d1)−l1|² + |T(d2)−l2|².
pub fn procrustes_2pt(
    d1: Vector2<f64>,
    d2: Vector2<f64>,
    l1: Vector2<f64>,
    l2: Vector2<f64>,
) -> Result<Pose2, AssociationError> {
    let vd = d2 - d1;
    let vl = l2 - l1;
    let nd = vd.norm();
    let nl = vl.norm();
    if nd <= 1e-12 || nl <= 1e-12 {
        return Err(AssociationError::DegeneratePair(nd.min(nl)));
    }
    let theta = (vd.x * vl.y - vd.y * vl.x).atan2(vd.dot(&vl));
    let (s, c) = theta.sin_cos();
    let dm = (d1 + d2) * 0.5;
    let lm = (l1 + l2) * 0.5;
    let t = lm - Vector2::new(dm.x * c - dm.y * s, dm.x * s + dm.y * c);
    Ok(Pose2::new(t.x, t.y, theta))
}

/// One scored correction hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis {
    /// Correction relative to the pre-estimated pose.
    pub delta_t: Pose2,
    /// Detection points within the inlier threshold under this correction.
    pub inlier_count: usize,
    /// Mean matching distance over inliers; +∞ when there are none.
    pub mean_inlier_error: f64,
}

/// How the returned association was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssociationStatus {
    /// Winner chosen from the sampled hypothesis pool (NN included).
    DcSac,
    /// All-zero search area: plain nearest-neighbour pairing.
    NearestNeighbour,
    /// Sampling produced no admissible hypothesis; NN result returned.
    NnFallback,
    /// The frame carried no detection points.
    EmptyDetections,
    /// No map points within the query radius of the pre-estimate.
    NoMapNearby,
}

/// Result of one association execution.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationResult {
    /// (detection point in sensor frame, landmark point in world frame).
    pub pairs: Vec<(Vector2<f64>, Vector2<f64>)>,
    /// Winning correction of the pre-estimated pose.
    pub delta_t_star: Pose2,
    /// Number of pairs.
    pub inlier_count: usize,
    /// Mean matching distance over pairs; 0 when there are none.
    pub mean_inlier_error: f64,
    /// The search area actually used this frame.
    pub tuned_area: SearchArea,
    /// Pseudo-entropy of the frame's detections.
    pub entropy: EntropyScore,
    pub status: AssociationStatus,
}

/// DC-SAC configuration.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DcSacConfig {
    /// Maximum search area, reached at or below `s_min`.
    pub base_area: SearchArea,
    /// Entropy saturation threshold (< 0).
    pub s_min: f64,
    /// Hypotheses sampled per frame.
    pub n_hypotheses: usize,
    /// Map pair separation must match the detection pair's within this, meters.
    pub distance_compat_tol: f64,
    /// Matching distance below which a detection point is an inlier, meters.
    pub inlier_threshold: f64,
    /// Minimum separation of a sampled pair, meters.
    pub min_pair_separation: f64,
    /// Radius around the pre-estimate for candidate map points, meters.
    pub map_query_radius: f64,
    pub rng_seed: u64,
    /// When set, inlier matching uses the delta-angle-augmented distance
    /// with this weight on the angle channel; 2D position otherwise.
    pub dalmr_match_weight: Option<f64>,
}

impl Default for DcSacConfig {
    fn default() -> Self {
        DcSacConfig {
            base_area: SearchArea {
                x_max: 5.0,
                y_max: 5.0,
                theta_max: 0.2,
            },
            s_min: -4.0,
            n_hypotheses: 2000,
            distance_compat_tol: 0.3,
            inlier_threshold: 0.5,
            min_pair_separation: 2.0,
            map_query_radius: 60.0,
            rng_seed: 0,
            dalmr_match_weight: None,
        }
    }
}

impl DcSacConfig {
    pub fn validate(&self) -> Result<(), AssociationError> {
        if !(self.s_min < 0.0) {
            return Err(AssociationError::BadSMin(self.s_min));
        }
        if self.n_hypotheses < 1 {
            return Err(AssociationError::BadConfig("n_hypotheses must be >= 1"));
        }
        if !(self.distance_compat_tol > 0.0) {
            return Err(AssociationError::BadConfig(
                "distance_compat_tol must be > 0",
            ));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(AssociationError::BadConfig("inlier_threshold must be > 0"));
        }
        if !(self.min_pair_separation > 0.0) {
            return Err(AssociationError::BadConfig(
                "min_pair_separation must be > 0",
            ));
        }
        if !(self.map_query_radius > 0.0) {
            return Err(AssociationError::BadConfig("map_query_radius must be > 0"));
        }
        if self.base_area.x_max < 0.0
            || self.base_area.y_max < 0.0
            || self.base_area.theta_max < 0.0
        {
            return Err(AssociationError::NegativeArea);
        }
        if let Some(w) = self.dalmr_match_weight {
            if !(w >= 0.0) {
                return Err(AssociationError::BadConfig(
                    "dalmr_match_weight must be >= 0",
                ));
            }
        }
        Ok(())
    }
}

/// Nearest admissible map point for a corrected detection point `q` carrying
/// delta-angle `delta_d`, as (map point index, matching distance).
fn match_point(
    map: &LandmarkMap,
    q: Vector2<f64>,
    delta_d: f64,
    cfg: &DcSacConfig,
) -> Option<(usize, f64)> {
    match cfg.dalmr_match_weight {
        None => map.nearest_within(q, cfg.inlier_threshold),
        Some(w) => {
            // Any point within the augmented threshold is within the planar
            // threshold too, so the disc query is an exact candidate cover.
            let mut best: Option<(f64, usize)> = None;
            for idx in map.points_within(q, cfg.inlier_threshold) {
                let planar2 = (map.point(idx) - q).norm_squared();
                let dz = w * (map.delta(idx) - delta_d);
                let dist = (planar2 + dz * dz).sqrt();
                if dist <= cfg.inlier_threshold {
                    let cand = (dist, idx);
                    best = Some(match best {
                        None => cand,
                        Some(b) if cand < b => cand,
                        Some(b) => b,
                    });
                }
            }
            best.map(|(dist, idx)| (idx, dist))
        }
    }
}

/// Scores a world-frame correction: transforms every detection point already
/// expressed in the world frame and counts matches.
fn score_world_transform(
    t_corr: &Pose2,
    world_pts: &[Vector2<f64>],
    deltas: &[f64],
    map: &LandmarkMap,
    cfg: &DcSacConfig,
) -> (usize, f64) {
    let mut count = 0usize;
    let mut err_sum = 0.0f64;
    for (p, &dd) in world_pts.iter().zip(deltas) {
        let q = t_corr.transform_point(*p);
        if let Some((_, dist)) = match_point(map, q, dd, cfg) {
            count += 1;
            err_sum += dist;
        }
    }
    let mean = if count > 0 {
        err_sum / count as f64
    } else {
        f64::INFINITY
    };
    (count, mean)
}

#[derive(Debug, Clone, Copy)]
struct Scored {
    delta_t: Pose2,
    t_corr: Pose2,
    inlier_count: usize,
    mean_inlier_error: f64,
}

/// Strictly-better-than under the winner's total order:
/// more inliers, then lower mean error, then smaller |Δx|+|Δy|, then
/// smaller |Δθ|. Full ties keep the incumbent (lower hypothesis index).
fn strictly_better(a: &Scored, b: &Scored) -> bool {
    if a.inlier_count != b.inlier_count {
        return a.inlier_count > b.inlier_count;
    }
    match a.mean_inlier_error.total_cmp(&b.mean_inlier_error) {
        std::cmp::Ordering::Less => return true,
        std::cmp::Ordering::Greater => return false,
        std::cmp::Ordering::Equal => {}
    }
    let la = a.delta_t.x.abs() + a.delta_t.y.abs();
    let lb = b.delta_t.x.abs() + b.delta_t.y.abs();
    match la.total_cmp(&lb) {
        std::cmp::Ordering::Less => return true,
        std::cmp::Ordering::Greater => return false,
        std::cmp::Ordering::Equal => {}
    }
    a.delta_t.theta.abs() < b.delta_t.theta.abs()
}

/// One DC-SAC execution for a frame.
///
/// The detections stay in the sensor frame; the map and `pre_estimate` are
/// world frame. The returned correction ΔT* satisfies: corrected pose =
/// x̄ᵢ ∘ ΔT*, and every returned pair obeys
/// |x̄ᵢ∘ΔT*(d) − l| ≤ inlier_threshold.
pub fn associate(
    detections: &FrameDetections,
    map: &LandmarkMap,
    pre_estimate: &Pose2,
    cfg: &DcSacConfig,
    tuned: &SearchArea,
) -> Result<AssociationResult, AssociationError> {
    cfg.validate()?;

    let entropy = pseudo_entropy(
        &detections
            .polylines
            .iter()
            .map(|pl| {
                DeltaSignal::new(pl.delta_angles())
                    .expect("delta angles are in [0, pi] by construction")
            })
            .collect::<Vec<_>>(),
    );

    let empty = |status: AssociationStatus| AssociationResult {
        pairs: Vec::new(),
        delta_t_star: Pose2::identity(),
        inlier_count: 0,
        mean_inlier_error: 0.0,
        tuned_area: *tuned,
        entropy,
        status,
    };

    // Candidate map points near the pre-estimate, with a cache-friendly
    // coordinate copy for the annulus scans.
    let local_idx = map.points_within(pre_estimate.translation(), cfg.map_query_radius);
    if local_idx.is_empty() {
        return Ok(empty(AssociationStatus::NoMapNearby));
    }
    let local_pts: Vec<Vector2<f64>> = local_idx.iter().map(|&i| map.point(i)).collect();

    // Flatten detections once: sensor points, their world images under x̄ᵢ,
    // and their delta-angles (used only by the augmented matching metric).
    let mut sensor_pts = Vec::with_capacity(detections.point_count());
    let mut deltas = Vec::with_capacity(detections.point_count());
    for pl in &detections.polylines {
        sensor_pts.extend_from_slice(pl.points());
        deltas.extend_from_slice(&pl.delta_angles());
    }
    if sensor_pts.is_empty() {
        return Ok(empty(AssociationStatus::EmptyDetections));
    }
    let world_pts: Vec<Vector2<f64>> = sensor_pts
        .iter()
        .map(|&p| pre_estimate.transform_point(p))
        .collect();

    // Implicit hypothesis 0: the NN result at the uncorrected pre-estimate.
    let (nn_count, nn_mean) =
        score_world_transform(&Pose2::identity(), &world_pts, &deltas, map, cfg);
    let nn = Scored {
        delta_t: Pose2::identity(),
        t_corr: Pose2::identity(),
        inlier_count: nn_count,
        mean_inlier_error: nn_mean,
    };

    let build = |winner: &Scored, status: AssociationStatus| {
        let mut pairs = Vec::with_capacity(winner.inlier_count);
        let mut err_sum = 0.0;
        for (k, p) in world_pts.iter().enumerate() {
            let q = winner.t_corr.transform_point(*p);
            if let Some((idx, dist)) = match_point(map, q, deltas[k], cfg) {
                pairs.push((sensor_pts[k], map.point(idx)));
                err_sum += dist;
            }
        }
        let inlier_count = pairs.len();
        let mean_inlier_error = if inlier_count > 0 {
            err_sum / inlier_count as f64
        } else {
            0.0
        };
        AssociationResult {
            pairs,
            delta_t_star: winner.delta_t,
            inlier_count,
            mean_inlier_error,
            tuned_area: *tuned,
            entropy,
            status,
        }
    };

    if tuned.is_zero() {
        return Ok(build(&nn, AssociationStatus::NearestNeighbour));
    }

    let pre_inv = pre_estimate.inverse();
    let n_det = sensor_pts.len();
    let min_sep2 = cfg.min_pair_separation * cfg.min_pair_separation;

    let sampled: Vec<Option<Scored>> = (1..=cfg.n_hypotheses as u64)
        .into_par_iter()
        .map_init(
            Vec::new,
            |annulus: &mut Vec<usize>, h| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
                rng.set_stream(h);

                let mut drawn: Option<Pose2> = None;
                for _ in 0..MAX_DRAW_ATTEMPTS {
                    let ia = rng.random_range(0..n_det);
                    let ib = rng.random_range(0..n_det);
                    if ia == ib {
                        continue;
                    }
                    let sep2 = (world_pts[ia] - world_pts[ib]).norm_squared();
                    if sep2 <= min_sep2 {
                        continue;
                    }
                    let dist_d = sep2.sqrt();

                    let m1_local = rng.random_range(0..local_pts.len());
                    let p1 = local_pts[m1_local];
                    let lo = (dist_d - cfg.distance_compat_tol).max(0.0);
                    let hi = dist_d + cfg.distance_compat_tol;
                    let (lo2, hi2) = (lo * lo, hi * hi);
                    annulus.clear();
                    for (j, pj) in local_pts.iter().enumerate() {
                        let d2 = (pj - p1).norm_squared();
                        if d2 >= lo2 && d2 <= hi2 && d2 > min_sep2 {
                            annulus.push(j);
                        }
                    }
                    if annulus.is_empty() {
                        continue;
                    }
                    let m2_local = annulus[rng.random_range(0..annulus.len())];
                    match procrustes_2pt(
                        world_pts[ia],
                        world_pts[ib],
                        p1,
                        local_pts[m2_local],
                    ) {
                        Ok(t) => {
                            drawn = Some(t);
                            break;
                        }
                        Err(_) => continue,
                    }
                }

                let t_corr = drawn?;
                let delta_t = pre_inv.compose(&t_corr).compose(pre_estimate);
                if !tuned.contains(&delta_t) {
                    return None;
                }
                let (inlier_count, mean_inlier_error) =
                    score_world_transform(&t_corr, &world_pts, &deltas, map, cfg);
                Some(Scored {
                    delta_t,
                    t_corr,
                    inlier_count,
                    mean_inlier_error,
                })
            },
        )
        .collect();

    let mut any_survivor = false;
    let mut best = nn;
    for s in sampled.into_iter().flatten() {
        any_survivor = true;
        if strictly_better(&s, &best) {
            best = s;
        }
    }

    let status = if any_survivor {
        AssociationStatus::DcSac
    } else {
        AssociationStatus::NnFallback
    };
    Ok(build(&best, status))
}
