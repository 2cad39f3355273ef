//! Trajectory evaluation: absolute trajectory error, relative pose error,
//! and the entropy-to-error correlation used to judge association quality.
//!
//! ATE compares geo-referenced trajectories directly, with no alignment step,
//! and scores translation only. RPE compares relative motions over a fixed
//! frame step, which localizes errors: a single bad pose shows up as spikes
//! at the steps entering and leaving it instead of polluting the whole tail.

use crate::geometry::{Pose2, Trajectory};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("trajectory lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("step {step} must be >= 1 and < trajectory length {len}")]
    BadStep { step: usize, len: usize },
    #[error("need at least {needed} paired samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("correlation undefined: an input series has zero variance")]
    ZeroVariance,
}

/// Root-mean-square of translation errors between index-aligned poses.
pub fn ate(estimate: &Trajectory, truth: &Trajectory) -> Result<f64, MetricsError> {
    if estimate.len() != truth.len() {
        return Err(MetricsError::LengthMismatch(estimate.len(), truth.len()));
    }
    let se: f64 = estimate
        .poses()
        .iter()
        .zip(truth.poses())
        .map(|(e, t)| (e.x - t.x).powi(2) + (e.y - t.y).powi(2))
        .sum();
    Ok((se / estimate.len() as f64).sqrt())
}

/// Per-index relative pose error over `step` frames.
///
/// Entry i compares the motion est_i → est_{i+step} against the reference
/// motion; returns (translation errors in meters, rotation errors in
/// degrees), each of length `len - step`.
pub fn rpe(
    estimate: &Trajectory,
    reference: &Trajectory,
    step: usize,
) -> Result<(Vec<f64>, Vec<f64>), MetricsError> {
    if estimate.len() != reference.len() {
        return Err(MetricsError::LengthMismatch(estimate.len(), reference.len()));
    }
    let len = estimate.len();
    if step < 1 || step >= len {
        return Err(MetricsError::BadStep { step, len });
    }
    let n = len - step;
    let mut trans = Vec::with_capacity(n);
    let mut rot = Vec::with_capacity(n);
    for i in 0..n {
        let d_est = estimate.get(i).relative(&estimate.get(i + step));
        let d_ref = reference.get(i).relative(&reference.get(i + step));
        let e: Pose2 = d_ref.inverse().compose(&d_est);
        trans.push(e.translation().norm());
        rot.push(e.theta.abs().to_degrees());
    }
    Ok((trans, rot))
}

fn rmse(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt()
}

/// Bundled evaluation of one estimated trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub ate_rmse: f64,
    /// RPE frame step the lists below were computed with.
    pub step: usize,
    pub rpe_trans: Vec<f64>,
    pub rpe_trans_rmse: f64,
    pub rpe_rot_deg: Vec<f64>,
    pub rpe_rot_rmse_deg: f64,
    /// Per-frame pseudo-entropy, same length as the trajectory.
    pub entropy: Vec<f64>,
}

impl MetricReport {
    pub fn compute(
        estimate: &Trajectory,
        truth: &Trajectory,
        step: usize,
        entropy: Vec<f64>,
    ) -> Result<Self, MetricsError> {
        if entropy.len() != estimate.len() {
            return Err(MetricsError::LengthMismatch(entropy.len(), estimate.len()));
        }
        let ate_rmse = ate(estimate, truth)?;
        let (rpe_trans, rpe_rot_deg) = rpe(estimate, truth, step)?;
        Ok(MetricReport {
            ate_rmse,
            step,
            rpe_trans_rmse: rmse(&rpe_trans),
            rpe_rot_rmse_deg: rmse(&rpe_rot_deg),
            rpe_trans,
            rpe_rot_deg,
            entropy,
        })
    }
}

/// Pearson correlation between per-frame entropy and per-frame RPE
/// translation error, paired by frame index over the shorter list.
pub fn entropy_error_correlation(report: &MetricReport) -> Result<f64, MetricsError> {
    pearson(&report.entropy, &report.rpe_trans)
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    let n = a.len().min(b.len());
    if n < 3 {
        return Err(MetricsError::TooFewSamples { needed: 3, got: n });
    }
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for k in 0..n {
        let da = a[k] - ma;
        let db = b[k] - mb;
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va <= 0.0 || vb <= 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn straight(n: usize) -> Trajectory {
        Trajectory::new((0..n).map(|i| Pose2::new(i as f64, 0.0, 0.0)).collect()).unwrap()
    }

    #[test]
    fn ate_zero_for_identical() {
        let t = straight(20);
        assert_eq!(ate(&t, &t).unwrap(), 0.0);
    }

    #[test]
    fn ate_constant_offset_is_three_four_five() {
        let t = straight(20);
        let shifted = Trajectory::new(
            t.poses()
                .iter()
                .map(|p| Pose2::new(p.x + 0.3, p.y + 0.4, p.theta))
                .collect(),
        )
        .unwrap();
        assert_relative_eq!(ate(&shifted, &t).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn ate_matches_direct_formula_on_random_offsets() {
        let t = straight(64);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let offsets: Vec<(f64, f64)> = (0..64)
            .map(|_| (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect();
        let est = Trajectory::new(
            t.poses()
                .iter()
                .zip(&offsets)
                .map(|(p, (dx, dy))| Pose2::new(p.x + dx, p.y + dy, p.theta))
                .collect(),
        )
        .unwrap();
        let oracle = {
            let mut acc = 0.0;
            for (dx, dy) in &offsets {
                acc += dx * dx + dy * dy;
            }
            (acc / 64.0).sqrt()
        };
        assert_relative_eq!(ate(&est, &t).unwrap(), oracle, epsilon = 1e-12);
    }

    #[test]
    fn ate_rejects_length_mismatch() {
        assert_eq!(
            ate(&straight(3), &straight(4)).unwrap_err(),
            MetricsError::LengthMismatch(3, 4)
        );
    }

    #[test]
    fn rpe_zero_for_identical() {
        let t = straight(15);
        let (trans, rot) = rpe(&t, &t, 1).unwrap();
        assert_eq!(trans.len(), 14);
        assert!(trans.iter().all(|&v| v == 0.0));
        assert!(rot.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rpe_jump_spikes_only_at_entry_and_exit() {
        let t = straight(30);
        let k = 12;
        let mut poses = t.poses().to_vec();
        poses[k] = Pose2::new(poses[k].x + 9.0, poses[k].y, poses[k].theta);
        let est = Trajectory::new(poses).unwrap();
        let (trans, _) = rpe(&est, &t, 1).unwrap();
        for (i, v) in trans.iter().enumerate() {
            if i == k - 1 || i == k {
                assert_relative_eq!(*v, 9.0, epsilon = 1e-12);
            } else {
                assert!(*v < 1e-12, "unexpected spike at {i}: {v}");
            }
        }
    }

    #[test]
    fn rpe_heading_spike_reported_in_degrees() {
        let t = straight(10);
        let mut poses = t.poses().to_vec();
        poses[5] = Pose2::new(poses[5].x, poses[5].y, 0.1);
        let est = Trajectory::new(poses).unwrap();
        let (_, rot) = rpe(&est, &t, 1).unwrap();
        assert_relative_eq!(rot[4], 0.1f64.to_degrees(), epsilon = 1e-12);
        assert_relative_eq!(rot[5], 0.1f64.to_degrees(), epsilon = 1e-12);
        assert!(rot[3] < 1e-12);
    }

    #[test]
    fn rpe_invariant_under_common_rigid_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let poses: Vec<Pose2> = (0..40)
            .map(|i| {
                Pose2::new(
                    i as f64 + rng.random_range(-0.5..0.5),
                    rng.random_range(-0.5..0.5),
                    rng.random_range(-0.3..0.3),
                )
            })
            .collect();
        let reference = straight(40);
        let est = Trajectory::new(poses.clone()).unwrap();
        let g = Pose2::new(120.0, -40.0, 2.1);
        let moved = Trajectory::new(poses.iter().map(|p| g.compose(p)).collect()).unwrap();
        let (t0, r0) = rpe(&est, &reference, 3).unwrap();
        let (t1, r1) = rpe(&moved, &reference, 3).unwrap();
        for k in 0..t0.len() {
            assert!((t0[k] - t1[k]).abs() < 1e-10);
            assert!((r0[k] - r1[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn rpe_rejects_bad_step() {
        let t = straight(5);
        assert!(matches!(
            rpe(&t, &t, 0),
            Err(MetricsError::BadStep { step: 0, len: 5 })
        ));
        assert!(matches!(
            rpe(&t, &t, 5),
            Err(MetricsError::BadStep { step: 5, len: 5 })
        ));
    }

    #[test]
    fn correlation_flags_constant_entropy() {
        let report = MetricReport {
            ate_rmse: 0.0,
            step: 1,
            rpe_trans: vec![0.1, 0.2, 0.3, 0.4],
            rpe_trans_rmse: 0.0,
            rpe_rot_deg: vec![0.0; 4],
            rpe_rot_rmse_deg: 0.0,
            entropy: vec![-1.0; 5],
        };
        assert_eq!(
            entropy_error_correlation(&report).unwrap_err(),
            MetricsError::ZeroVariance
        );
    }

    #[test]
    fn correlation_exact_linear_relation_is_plus_minus_one() {
        let entropy = vec![-3.0, -2.5, -1.0, -0.2, 0.0];
        let up: Vec<f64> = entropy.iter().map(|s| 2.0 * s + 7.0).collect();
        let down: Vec<f64> = entropy.iter().map(|s| -0.5 * s + 1.0).collect();
        let mk = |rpe_trans: Vec<f64>| MetricReport {
            ate_rmse: 0.0,
            step: 1,
            rpe_trans,
            rpe_trans_rmse: 0.0,
            rpe_rot_deg: vec![0.0; 5],
            rpe_rot_rmse_deg: 0.0,
            entropy: entropy.clone(),
        };
        assert_relative_eq!(
            entropy_error_correlation(&mk(up)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_relative_eq!(
            entropy_error_correlation(&mk(down)).unwrap(),
            -1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn correlation_small_hand_case() {
        // a = [1,2,3], b = [3,1,2]: covariance -1/n, sd sqrt(2/n) each,
        // coefficient exactly -0.5.
        assert_relative_eq!(
            pearson(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(),
            -0.5,
            epsilon = 1e-12
        );
    }

    #[test]
    fn report_bundles_consistent_lengths() {
        let t = straight(12);
        let est = Trajectory::new(
            t.poses()
                .iter()
                .map(|p| Pose2::new(p.x, p.y + 0.25, p.theta))
                .collect(),
        )
        .unwrap();
        let report = MetricReport::compute(&est, &t, 2, vec![0.0; 12]).unwrap();
        assert_eq!(report.rpe_trans.len(), 10);
        assert_eq!(report.rpe_rot_deg.len(), 10);
        assert_relative_eq!(report.ate_rmse, 0.25, epsilon = 1e-12);
        // A constant lateral offset is invisible to RPE.
        assert!(report.rpe_trans_rmse < 1e-12);
        assert_eq!(
            MetricReport::compute(&est, &t, 2, vec![0.0; 5]).unwrap_err(),
            MetricsError::LengthMismatch(5, 12)
        );
    }

    proptest! {
        #[test]
        fn prop_rpe_self_zero_and_ate_self_zero(
            seed in 0u64..1000,
            n in 4usize..40,
            step in 1usize..3,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let poses: Vec<Pose2> = (0..n)
                .map(|_| {
                    Pose2::new(
                        rng.random_range(-50.0..50.0),
                        rng.random_range(-50.0..50.0),
                        rng.random_range(-3.0..3.0),
                    )
                })
                .collect();
            let t = Trajectory::new(poses).unwrap();
            prop_assert_eq!(ate(&t, &t).unwrap(), 0.0);
            let step = step.min(n - 1);
            // Identical inputs cancel up to rounding in the pose algebra.
            let (trans, rot) = rpe(&t, &t, step).unwrap();
            prop_assert!(trans.iter().all(|&v| v < 1e-12));
            prop_assert!(rot.iter().all(|&v| v < 1e-12));
        }

        #[test]
        fn prop_pearson_bounded_and_scale_invariant(
            seed in 0u64..1000,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a: Vec<f64> = (0..20).map(|_| rng.random_range(-5.0..5.0)).collect();
            let b: Vec<f64> = (0..20).map(|_| rng.random_range(-5.0..5.0)).collect();
            if let Ok(r) = pearson(&a, &b) {
                prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&r));
                let a2: Vec<f64> = a.iter().map(|v| 3.0 * v + 11.0).collect();
                let r2 = pearson(&a2, &b).unwrap();
                prop_assert!((r - r2).abs() < 1e-9);
            }
        }
    }
}
