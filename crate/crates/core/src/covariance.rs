//! Dynamic covariance adjustment.
//!
//! The recent history of data-association corrections ΔT is summarized into a
//! per-frame pose covariance (scatter of the window, per component), then
//! propagated through the detection model's Jacobian to a 2×2 covariance per
//! detected point. Inverting that yields the information matrix weighting the
//! point's residual in the graph: noisy association ⇒ wide scatter ⇒ weak
//! landmark constraints, and the estimate leans on odometry instead.
//!
//! A stable ΔT history can also mean association is stuck in a consistent
//! local minimum; no detector for that case exists here, the entropy-driven
//! tuning layer is what limits how far association may wander.

use crate::geometry::{normalize_angle, Pose2};
use nalgebra::{Matrix2, Matrix2x3, Matrix3, Vector2};
use std::collections::VecDeque;
use thiserror::Error;

/// Errors from covariance construction and inversion.
#[derive(Debug, Error, PartialEq)]
pub enum CovarianceError {
    #[error("matrix is not symmetric within tolerance")]
    NotSymmetric,
    #[error("non-finite covariance entry")]
    NonFinite,
    #[error("covariance not positive definite (det = {0})")]
    NotPositiveDefinite(f64),
}

/// Sliding FIFO window over the last correction transforms.
#[derive(Debug, Clone)]
pub struct TransformHistory {
    window: VecDeque<Pose2>,
    capacity: usize,
}

impl TransformHistory {
    /// Creates an empty history holding at most `capacity` transforms.
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "history capacity must be at least 1");
        TransformHistory {
            window: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    /// Appends a transform, evicting the oldest when full.
    pub fn push(&mut self, t: Pose2) {
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Pose2> {
        self.window.iter()
    }

    pub fn clear(&mut self) {
        self.window.clear();
    }
}

/// Symmetric 3×3 covariance over (x m², y m², θ rad²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cov3 {
    m: Matrix3<f64>,
}

impl Cov3 {
    pub fn diagonal(xx: f64, yy: f64, tt: f64) -> Self {
        Cov3 {
            m: Matrix3::from_diagonal(&nalgebra::Vector3::new(xx, yy, tt)),
        }
    }

    /// Wraps a matrix, requiring symmetry within 1e-9 and finite entries.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, CovarianceError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(CovarianceError::NonFinite);
        }
        if (m - m.transpose()).abs().max() > 1e-9 {
            return Err(CovarianceError::NotSymmetric);
        }
        Ok(Cov3 {
            m: (m + m.transpose()) * 0.5,
        })
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }
}

/// Symmetric 2×2 covariance in m².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cov2 {
    m: Matrix2<f64>,
}

impl Cov2 {
    pub fn diagonal(xx: f64, yy: f64) -> Self {
        Cov2 {
            m: Matrix2::from_diagonal(&Vector2::new(xx, yy)),
        }
    }

    /// Wraps a matrix, requiring symmetry within 1e-9 and finite entries.
    pub fn from_matrix(m: Matrix2<f64>) -> Result<Self, CovarianceError> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(CovarianceError::NonFinite);
        }
        if (m - m.transpose()).abs().max() > 1e-9 {
            return Err(CovarianceError::NotSymmetric);
        }
        Ok(Cov2 {
            m: (m + m.transpose()) * 0.5,
        })
    }

    pub fn matrix(&self) -> &Matrix2<f64> {
        &self.m
    }
}

/// Per-component scatter of the correction window as a diagonal covariance.
///
/// Each diagonal entry is the unbiased sample variance (divisor max(1, n−1))
/// of that pose component over the window, maxed with its floor; the heading
/// component uses wrapped deviations from the window's circular mean so the
/// ±π seam cannot inflate it. An empty history yields the floor-only
/// covariance; the caller is expected to flag that frame.
pub fn association_covariance(hist: &TransformHistory, floor: (f64, f64, f64)) -> Cov3 {
    assert!(
        floor.0 >= 0.0 && floor.1 >= 0.0 && floor.2 >= 0.0,
        "variance floors must be non-negative"
    );
    let n = hist.len();
    if n == 0 {
        return Cov3::diagonal(floor.0, floor.1, floor.2);
    }
    let div = (n.max(2) - 1) as f64;

    let mean_x = hist.iter().map(|t| t.x).sum::<f64>() / n as f64;
    let mean_y = hist.iter().map(|t| t.y).sum::<f64>() / n as f64;
    let var_x = hist.iter().map(|t| (t.x - mean_x).powi(2)).sum::<f64>() / div;
    let var_y = hist.iter().map(|t| (t.y - mean_y).powi(2)).sum::<f64>() / div;

    let sin_sum = hist.iter().map(|t| t.theta.sin()).sum::<f64>();
    let cos_sum = hist.iter().map(|t| t.theta.cos()).sum::<f64>();
    let mean_t = sin_sum.atan2(cos_sum);
    let var_t = hist
        .iter()
        .map(|t| normalize_angle(t.theta - mean_t).powi(2))
        .sum::<f64>()
        / div;

    Cov3::diagonal(
        var_x.max(floor.0),
        var_y.max(floor.1),
        var_t.max(floor.2),
    )
}

/// Jacobian of the world position of sensor-frame point `d` with respect to
/// the pose (x, y, θ):
///
/// ```text
/// [ 1  0  −d.x·sinθ − d.y·cosθ ]
/// [ 0  1   d.x·cosθ − d.y·sinθ ]
/// ```
pub fn detection_jacobian(pose: &Pose2, d: Vector2<f64>) -> Matrix2x3<f64> {
    let (s, c) = pose.theta.sin_cos();
    Matrix2x3::new(
        1.0,
        0.0,
        -d.x * s - d.y * c,
        0.0,
        1.0,
        d.x * c - d.y * s,
    )
}

/// First-order propagation `J Σ Jᵀ + floor·I` of a pose covariance onto one
/// detected point. The added floor keeps the result invertible even when Σ is
/// rank-deficient along the point's sensitive directions.
pub fn propagate(sigma: &Cov3, jac: &Matrix2x3<f64>, floor: f64) -> Cov2 {
    assert!(floor >= 0.0, "covariance floor must be non-negative");
    let core = jac * sigma.m * jac.transpose();
    let sym = (core + core.transpose()) * 0.5;
    Cov2 {
        m: sym + Matrix2::identity() * floor,
    }
}

/// Exact 2×2 inverse of a positive-definite covariance.
pub fn information_matrix(cov: &Cov2) -> Result<Matrix2<f64>, CovarianceError> {
    let m = &cov.m;
    let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    let det = a * d - b * b;
    if !det.is_finite() || det <= 0.0 || a <= 0.0 {
        return Err(CovarianceError::NotPositiveDefinite(det));
    }
    Ok(Matrix2::new(d, -b, -b, a) / det)
}
