//! Pseudo-entropy of a detection set.
//!
//! The score `S = −Σ_h Σ_l Δα·ln(Δα + 1)` over all delta-angle values of all
//! detected polylines is zero for perfectly straight detections and grows in
//! magnitude (more negative) with curvature content. It is not an entropy in
//! the probabilistic sense; it is a cheap monotone information proxy used to
//! gate how aggressively data association may search.
//!
//! Overlapping detections of the same physical marking are each counted; the
//! score is additive by design and no deduplication is attempted here.

use crate::geometry::GeometryError;
use std::f64::consts::PI;

/// Unitless pseudo-entropy score, always ≤ 0.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, serde::Serialize, serde::Deserialize)]
pub struct EntropyScore {
    pub s: f64,
}

impl EntropyScore {
    pub fn value(&self) -> f64 {
        self.s
    }
}

/// Delta-angle sequence of one polyline; every value lies in [0, π].
///
/// These are the w-free Δα values, i.e. the z-channel of the augmented
/// representation divided by its weight.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSignal {
    values: Vec<f64>,
}

impl DeltaSignal {
    pub fn new(values: Vec<f64>) -> Result<Self, GeometryError> {
        for &v in &values {
            if !(0.0..=PI).contains(&v) || !v.is_finite() {
                return Err(GeometryError::DeltaOutOfRange(v));
            }
        }
        Ok(DeltaSignal { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Pseudo-entropy over a detection set; natural log, empty input scores 0.
pub fn pseudo_entropy(detections: &[DeltaSignal]) -> EntropyScore {
    let s = -detections
        .iter()
        .flat_map(|d| d.values.iter())
        .map(|&da| da * (da + 1.0).ln())
        .sum::<f64>();
    // -0.0 from an empty or all-zero sum normalizes to 0.0 for clean equality.
    EntropyScore { s: s + 0.0 }
}
