//! Acceptance suite: eleven numbered criteria covering Jacobian correctness,
//! association optimality, entropy behavior, end-to-end recovery and ordering,
//! covariance propagation, determinism, and the runtime budget.
//!
//! One `#[test]` walks every criterion in order and prints a PASS/FAIL line
//! for each, so a single run shows the whole scoreboard; the test panics at
//! the end if any criterion failed.

use georef_core::{
    ate, detection_jacobian, entropy_error_correlation, generate_scenario, procrustes_2pt,
    propagate, pseudo_entropy, run_session, tune_area, Cov3, DcSacConfig, DeltaSignal,
    EntropyScore, IntersectionSpec, MarkingStyle, MetricReport, NoiseModel, OdometryEdge,
    PipelineConfig, PipelineMode, Polyline, Pose2, RoadElement, RoadLayout, SearchArea,
    TrajectoryFile,
};
use nalgebra::{Matrix3, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

// ------------------------------------------------------------ shared fixtures

/// Association settings shared by the end-to-end criteria. The inlier radius
/// sits below half the map point spacing so lattice-shifted fits stop earning
/// partial credit, pairs must span 6 m so they cross structure boundaries,
/// and the candidate radius keeps the sampler's search space small enough
/// that the true correspondence is drawn with high probability.
fn acceptance_dcsac(n_hypotheses: usize, distance_compat_tol: f64) -> DcSacConfig {
    DcSacConfig {
        n_hypotheses,
        distance_compat_tol,
        inlier_threshold: 0.3,
        min_pair_separation: 6.0,
        map_query_radius: 15.0,
        ..DcSacConfig::default()
    }
}

fn pipeline_cfg(mode: PipelineMode, n_hypotheses: usize, tol: f64) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        mode,
        ..PipelineConfig::default()
    };
    cfg.dcsac = acceptance_dcsac(n_hypotheses, tol);
    cfg
}

fn junction(at: f64) -> IntersectionSpec {
    IntersectionSpec {
        at,
        arm: 10.0,
        nested: 3,
        ..IntersectionSpec::default()
    }
}

/// 333-frame mixed drive: straight approach, a sweeping curve, junctions at
/// 12 m and 200 m. Dash period 4 m keeps the road self-similar under
/// longitudinal shifts, which is what breaks the static-area modes.
fn mixed_layout() -> RoadLayout {
    RoadLayout {
        elements: vec![
            RoadElement::Straight { length: 150.0 },
            RoadElement::Arc {
                radius: 80.0,
                angle: FRAC_PI_4,
            },
            RoadElement::Straight { length: 120.0 },
        ],
        marking: MarkingStyle::Dashed { dash: 2.0, gap: 2.0 },
        intersections: vec![junction(12.0), junction(200.0)],
        ..RoadLayout::default()
    }
}

fn mixed_noise() -> NoiseModel {
    NoiseModel {
        prior_bias: (1.5, 0.5, 0.01),
        prior_drift_rate: (0.02, 0.001),
        detection_noise_sigma: 0.05,
        detection_dropout: 0.10,
        sensor_range: 30.0,
    }
}

fn frame_entropy(records: &[georef_core::FrameRecord]) -> Vec<f64> {
    records.iter().map(|r| r.entropy).collect()
}

struct SeedOutcome {
    seed: u64,
    prior: f64,
    cov: f64,
    nocov: f64,
    baseline: f64,
    static_corr: f64,
}

static MIXED_SUITE: OnceLock<Result<Vec<SeedOutcome>, String>> = OnceLock::new();

/// Runs the four modes criteria 7 and 8 need on the mixed noisy scenario,
/// once per seed, and caches the outcomes so both criteria share the work.
fn mixed_suite() -> Result<&'static [SeedOutcome], String> {
    let built = MIXED_SUITE.get_or_init(|| {
        let layout = mixed_layout();
        let noise = mixed_noise();
        let mut out = Vec::new();
        for seed in 1..=5u64 {
            let sc = generate_scenario(&layout, &noise, seed)
                .map_err(|e| format!("seed {seed}: scenario: {e}"))?;
            let prior =
                ate(&sc.prior, &sc.ground_truth).map_err(|e| format!("seed {seed}: {e}"))?;
            let run = |mode: PipelineMode| -> Result<(f64, f64), String> {
                let mut cfg = pipeline_cfg(mode, 3000, 0.2);
                cfg.dcsac.rng_seed = seed;
                let (est, records) = run_session(&sc.map, &sc.prior, &sc.detections, &cfg)
                    .map_err(|e| format!("seed {seed} {mode}: {e}"))?;
                let report =
                    MetricReport::compute(&est, &sc.ground_truth, 1, frame_entropy(&records))
                        .map_err(|e| format!("seed {seed} {mode}: {e}"))?;
                let corr = entropy_error_correlation(&report)
                    .map_err(|e| format!("seed {seed} {mode}: {e}"))?;
                Ok((report.ate_rmse, corr))
            };
            let (cov, _) = run(PipelineMode::SelfTuningCov)?;
            let (nocov, _) = run(PipelineMode::SelfTuningNocov)?;
            let (baseline, _) = run(PipelineMode::BaselineDcs)?;
            let (_, static_corr) = run(PipelineMode::StaticDcsac)?;
            out.push(SeedOutcome {
                seed,
                prior,
                cov,
                nocov,
                baseline,
                static_corr,
            });
        }
        Ok(out)
    });
    built.as_deref().map_err(Clone::clone)
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose2 {
    Pose2::new(
        rng.random_range(-20.0..20.0),
        rng.random_range(-20.0..20.0),
        rng.random_range(-1.2..1.2),
    )
}

// ------------------------------------------------------------- the criteria

/// Criterion 1: analytic Jacobians of the odometry residual (both blocks) and
/// of the detection-to-world map agree with central finite differences to a
/// relative error of 1e-6 on 1000 random instances, in under a second.
fn criterion_1() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let h = 1e-5;
    let mut max_rel = 0.0f64;
    let mut check = |analytic: f64, fd: f64| {
        let rel = (analytic - fd).abs() / analytic.abs().max(1.0);
        if rel > max_rel {
            max_rel = rel;
        }
    };
    for _ in 0..1000 {
        let pose_i = random_pose(&mut rng);
        let pose_j = random_pose(&mut rng);
        let measured = pose_i.relative(&pose_j).compose(&Pose2::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.2..0.2),
        ));
        let edge = OdometryEdge {
            i: 0,
            j: 1,
            measured,
            information: Matrix3::identity(),
        };
        let (ji, jj) = edge.jacobians(&pose_i, &pose_j);
        let perturbed = |p: &Pose2, k: usize, d: f64| match k {
            0 => Pose2::new(p.x + d, p.y, p.theta),
            1 => Pose2::new(p.x, p.y + d, p.theta),
            _ => Pose2::new(p.x, p.y, p.theta + d),
        };
        for k in 0..3 {
            let rp = edge.residual(&perturbed(&pose_i, k, h), &pose_j);
            let rm = edge.residual(&perturbed(&pose_i, k, -h), &pose_j);
            let sp = edge.residual(&pose_i, &perturbed(&pose_j, k, h));
            let sm = edge.residual(&pose_i, &perturbed(&pose_j, k, -h));
            for row in 0..3 {
                check(ji[(row, k)], (rp[row] - rm[row]) / (2.0 * h));
                check(jj[(row, k)], (sp[row] - sm[row]) / (2.0 * h));
            }
        }

        let d = Vector2::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
        let jac = detection_jacobian(&pose_i, d);
        for k in 0..3 {
            let gp = perturbed(&pose_i, k, h).transform_point(d);
            let gm = perturbed(&pose_i, k, -h).transform_point(d);
            for row in 0..2 {
                check(jac[(row, k)], (gp[row] - gm[row]) / (2.0 * h));
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    if max_rel > 1e-6 {
        return Err(format!("max relative error {max_rel:.3e} > 1e-6"));
    }
    if elapsed >= 1.0 {
        return Err(format!("took {elapsed:.2} s, budget 1 s"));
    }
    Ok(format!("max rel err {max_rel:.2e}, {elapsed:.2} s"))
}

/// Criterion 2: the closed-form two-pair fit never loses to a brute-force
/// sweep. The sweep grids the heading at 1e-3 resolution with the optimal
/// translation solved per heading, so its minimum plus a second-order
/// resolution bound must dominate the closed-form cost.
fn criterion_2() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let res = 1e-3;
    let mut worst_gap = f64::NEG_INFINITY;
    for case in 0..200 {
        let d1 = Vector2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        let mut d2 = d1;
        while (d2 - d1).norm() < 1.0 {
            d2 = Vector2::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
        }
        let t_true = Pose2::new(
            rng.random_range(-3.0..3.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(-0.5..0.5),
        );
        let jitter = |rng: &mut ChaCha8Rng| {
            Vector2::new(rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2))
        };
        let l1 = t_true.transform_point(d1) + jitter(&mut rng);
        let l2 = t_true.transform_point(d2) + jitter(&mut rng);
        let cost = |p: &Pose2| {
            (p.transform_point(d1) - l1).norm_squared() + (p.transform_point(d2) - l2).norm_squared()
        };
        let closed = procrustes_2pt(d1, d2, l1, l2).map_err(|e| format!("case {case}: {e}"))?;
        let closed_cost = cost(&closed);

        let dm = (d1 + d2) * 0.5;
        let lm = (l1 + l2) * 0.5;
        let steps = (2.0 * PI / res).ceil() as usize;
        let mut grid_min = f64::INFINITY;
        for k in 0..steps {
            let theta = -PI + k as f64 * res;
            let (s, c) = theta.sin_cos();
            let rot = |v: Vector2<f64>| Vector2::new(v.x * c - v.y * s, v.x * s + v.y * c);
            let t = lm - rot(dm);
            let p = Pose2::new(t.x, t.y, theta);
            let c = cost(&p);
            if c < grid_min {
                grid_min = c;
            }
        }
        // Curvature of the per-heading cost is bounded by the centered point
        // energies, so half a grid step can hide at most this much.
        let bound = (res / 2.0).powi(2)
            * ((d1 - dm).norm_squared()
                + (d2 - dm).norm_squared()
                + (l1 - lm).norm_squared()
                + (l2 - lm).norm_squared())
            + 1e-9;
        if closed_cost > grid_min + bound {
            return Err(format!(
                "case {case}: closed cost {closed_cost:.6e} > grid min {grid_min:.6e} + bound {bound:.1e}"
            ));
        }
        worst_gap = worst_gap.max(closed_cost - grid_min);
    }
    let elapsed = start.elapsed().as_secs_f64();
    if elapsed >= 30.0 {
        return Err(format!("took {elapsed:.1} s, budget 30 s"));
    }
    Ok(format!(
        "200 cases, worst closed-minus-grid gap {worst_gap:.2e}, {elapsed:.2} s"
    ))
}

/// Criterion 3: entropy scores zero exactly on straight geometry, matches the
/// closed-form value for a single quarter-turn term to 1e-12, and satisfies
/// additivity over detection sets plus monotonicity under appended terms on
/// 500 randomized cases each.
fn criterion_3() -> Result<String, String> {
    let straight = Polyline::new((0..12).map(|i| Vector2::new(i as f64, 2.0)).collect())
        .map_err(|e| e.to_string())?;
    let s = pseudo_entropy(&[DeltaSignal::new(straight.delta_angles()).map_err(|e| e.to_string())?]);
    if s.value() != 0.0 {
        return Err(format!("straight polyline scored {:.3e}, want exact 0", s.value()));
    }
    let diagonal = Polyline::new((0..8).map(|i| Vector2::new(i as f64, i as f64 * 0.5)).collect())
        .map_err(|e| e.to_string())?;
    let s = pseudo_entropy(&[DeltaSignal::new(diagonal.delta_angles()).map_err(|e| e.to_string())?]);
    if s.value() != 0.0 {
        return Err(format!("diagonal polyline scored {:.3e}, want exact 0", s.value()));
    }

    let single = pseudo_entropy(&[DeltaSignal::new(vec![FRAC_PI_2]).map_err(|e| e.to_string())?]);
    let expected = -(FRAC_PI_2) * (FRAC_PI_2 + 1.0).ln();
    if (single.value() - expected).abs() > 1e-12 {
        return Err(format!(
            "quarter-turn term: got {:.15}, want {expected:.15}",
            single.value()
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let random_signal = |rng: &mut ChaCha8Rng| {
        let len = rng.random_range(1..20);
        DeltaSignal::new((0..len).map(|_| rng.random_range(0.0..PI)).collect()).unwrap()
    };
    for case in 0..500 {
        let a = random_signal(&mut rng);
        let b = random_signal(&mut rng);
        let joint = pseudo_entropy(&[a.clone(), b.clone()]).value();
        let split = pseudo_entropy(&[a.clone()]).value() + pseudo_entropy(&[b]).value();
        if (joint - split).abs() > 1e-12 * joint.abs().max(1.0) {
            return Err(format!("case {case}: additivity broke: {joint} vs {split}"));
        }
        let extra = rng.random_range(0.0..PI);
        let mut grown = a.values().to_vec();
        grown.push(extra);
        let before = pseudo_entropy(&[a]).value();
        let after = pseudo_entropy(&[DeltaSignal::new(grown).unwrap()]).value();
        if after > before + 1e-12 {
            return Err(format!(
                "case {case}: appending a term raised the score: {before} -> {after}"
            ));
        }
    }
    Ok("exact zeros, closed-form value, 500 additivity + 500 monotonicity cases".to_string())
}

/// Criterion 4: the area tuner saturates to the base bit-for-bit at and below
/// the threshold, scales linearly above it, stays continuous at the knee, and
/// the nearest-neighbour mode is byte-identical to self-tuning fed zero
/// entropy.
fn criterion_4() -> Result<String, String> {
    let base = SearchArea::new(5.0, 3.0, 0.2).map_err(|e| e.to_string())?;
    let s_min = -4.0;
    let bits = |a: &SearchArea| {
        (
            a.x_max.to_bits(),
            a.y_max.to_bits(),
            a.theta_max.to_bits(),
        )
    };
    for s in [s_min, s_min * 1.0001, s_min * 3.0, -40.0] {
        let tuned = tune_area(&base, EntropyScore { s }, s_min).map_err(|e| e.to_string())?;
        if bits(&tuned) != bits(&base) {
            return Err(format!("saturated area at s={s} is not the base bit-for-bit"));
        }
    }
    for frac in [0.05, 0.37, 0.93] {
        let tuned =
            tune_area(&base, EntropyScore { s: s_min * frac }, s_min).map_err(|e| e.to_string())?;
        for (got, want) in [
            (tuned.x_max, base.x_max * frac),
            (tuned.y_max, base.y_max * frac),
            (tuned.theta_max, base.theta_max * frac),
        ] {
            if (got - want).abs() > 1e-15 * want {
                return Err(format!("scaling at factor {frac}: got {got}, want {want}"));
            }
        }
    }
    let near = tune_area(&base, EntropyScore { s: s_min * (1.0 - 5e-13) }, s_min)
        .map_err(|e| e.to_string())?;
    for (got, want) in [
        (near.x_max, base.x_max),
        (near.y_max, base.y_max),
        (near.theta_max, base.theta_max),
    ] {
        if (got / want - 1.0).abs() > 1e-12 {
            return Err(format!("knee discontinuity: {got} vs {want}"));
        }
    }

    let layout = RoadLayout {
        elements: vec![RoadElement::Straight { length: 120.0 }],
        marking: MarkingStyle::Dashed { dash: 2.0, gap: 2.0 },
        intersections: vec![junction(12.0)],
        ..RoadLayout::default()
    };
    let sc = generate_scenario(&layout, &mixed_noise(), 5).map_err(|e| e.to_string())?;
    let nn_cfg = pipeline_cfg(PipelineMode::StaticNn, 800, 0.2);
    let mut forced_cfg = pipeline_cfg(PipelineMode::SelfTuningNocov, 800, 0.2);
    forced_cfg.force_zero_entropy = true;
    let (nn, _) =
        run_session(&sc.map, &sc.prior, &sc.detections, &nn_cfg).map_err(|e| e.to_string())?;
    let (forced, _) =
        run_session(&sc.map, &sc.prior, &sc.detections, &forced_cfg).map_err(|e| e.to_string())?;
    let nn_bytes = TrajectoryFile::new(nn).serialize();
    let forced_bytes = TrajectoryFile::new(forced).serialize();
    if nn_bytes != forced_bytes {
        return Err("nearest-neighbour and zero-entropy trajectories differ".to_string());
    }
    Ok("saturation exact, scaling exact, knee continuous, NN byte-identical".to_string())
}

/// Criterion 5: with exact detections and a (3 m, 1 m, 0.02 rad) prior bias,
/// the covariance-adjusted mode recovers the ground truth to 1e-3 m ATE on
/// the 333-frame mixed drive, in under 30 s.
fn criterion_5() -> Result<String, String> {
    let start = Instant::now();
    let noise = NoiseModel {
        prior_bias: (3.0, 1.0, 0.02),
        ..NoiseModel::noiseless()
    };
    let sc = generate_scenario(&mixed_layout(), &noise, 21).map_err(|e| e.to_string())?;
    if sc.prior.len() < 300 {
        return Err(format!("scenario too short: {} frames", sc.prior.len()));
    }
    let cfg = pipeline_cfg(PipelineMode::SelfTuningCov, 2000, 0.05);
    let (est, _) =
        run_session(&sc.map, &sc.prior, &sc.detections, &cfg).map_err(|e| e.to_string())?;
    let err = ate(&est, &sc.ground_truth).map_err(|e| e.to_string())?;
    let prior_err = ate(&sc.prior, &sc.ground_truth).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    if err > 1e-3 {
        return Err(format!("ATE {err:.3e} > 1e-3 (prior {prior_err:.2})"));
    }
    if elapsed >= 30.0 {
        return Err(format!("took {elapsed:.1} s, budget 30 s"));
    }
    Ok(format!(
        "{} frames, prior ATE {prior_err:.2} -> {err:.1e}, {elapsed:.1} s",
        sc.prior.len()
    ))
}

/// Criterion 6: on a 421-frame straight dashed road with 0.1 m detection
/// noise, the static-area mode suffers at least 10x the per-step translation
/// error of the self-tuned mode, whose own RPE stays at or below 0.1 m.
fn criterion_6() -> Result<String, String> {
    let layout = RoadLayout {
        elements: vec![RoadElement::Straight { length: 420.0 }],
        marking: MarkingStyle::Dashed { dash: 2.0, gap: 2.0 },
        intersections: vec![IntersectionSpec::at(10.0)],
        ..RoadLayout::default()
    };
    let noise = NoiseModel {
        prior_bias: (0.5, 0.2, 0.01),
        prior_drift_rate: (0.02, 0.001),
        detection_noise_sigma: 0.1,
        detection_dropout: 0.0,
        sensor_range: 30.0,
    };
    let sc = generate_scenario(&layout, &noise, 13).map_err(|e| e.to_string())?;
    if sc.prior.len() < 400 {
        return Err(format!("scenario too short: {} frames", sc.prior.len()));
    }
    let rpe_of = |mode: PipelineMode| -> Result<f64, String> {
        let cfg = pipeline_cfg(mode, 3000, 0.2);
        let (est, records) =
            run_session(&sc.map, &sc.prior, &sc.detections, &cfg).map_err(|e| e.to_string())?;
        let report = MetricReport::compute(&est, &sc.ground_truth, 1, frame_entropy(&records))
            .map_err(|e| e.to_string())?;
        Ok(report.rpe_trans_rmse)
    };
    let tuned = rpe_of(PipelineMode::SelfTuningCov)?;
    let static_area = rpe_of(PipelineMode::StaticDcsac)?;
    if tuned > 0.1 {
        return Err(format!("self-tuned RPE {tuned:.3} > 0.1 m"));
    }
    if static_area < 10.0 * tuned {
        return Err(format!(
            "static RPE {static_area:.3} < 10x tuned RPE {tuned:.3}"
        ));
    }
    Ok(format!(
        "static {static_area:.2} m vs tuned {tuned:.3} m ({:.0}x)",
        static_area / tuned
    ))
}

/// Criterion 7: on each of five seeds of the mixed noisy scenario, the ATE
/// ordering cov <= nocov <= robustified-baseline holds with 5% slack, and the
/// covariance-adjusted mode lands below a tenth of the prior's ATE.
fn criterion_7() -> Result<String, String> {
    let runs = mixed_suite()?;
    for r in runs {
        if r.cov > r.nocov * 1.05 {
            return Err(format!(
                "seed {}: cov ATE {:.4} > nocov ATE {:.4} + 5%",
                r.seed, r.cov, r.nocov
            ));
        }
        if r.nocov > r.baseline * 1.05 {
            return Err(format!(
                "seed {}: nocov ATE {:.4} > baseline ATE {:.4} + 5%",
                r.seed, r.nocov, r.baseline
            ));
        }
        if r.cov >= r.prior / 10.0 * 1.05 {
            return Err(format!(
                "seed {}: cov ATE {:.4} not under prior/10 = {:.4}",
                r.seed,
                r.cov,
                r.prior / 10.0
            ));
        }
    }
    let worst = runs
        .iter()
        .map(|r| r.cov / r.prior)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(format!(
        "5 seeds ordered, worst cov/prior ratio {worst:.4} (need < 0.105)"
    ))
}

/// Criterion 8: the static-area mode's per-frame entropy correlates with its
/// per-step translation error at Pearson >= 0.4 on every seed.
fn criterion_8() -> Result<String, String> {
    let runs = mixed_suite()?;
    for r in runs {
        if r.static_corr < 0.4 {
            return Err(format!(
                "seed {}: correlation {:.3} < 0.4",
                r.seed, r.static_corr
            ));
        }
    }
    let min = runs
        .iter()
        .map(|r| r.static_corr)
        .fold(f64::INFINITY, f64::min);
    Ok(format!("5 seeds, min Pearson {min:.3} (need >= 0.4)"))
}

/// Criterion 9: first-order propagation keeps covariances positive
/// semidefinite on 1000 random PSD inputs, and a detection farther from the
/// sensor inherits strictly more variance from pure heading uncertainty on
/// 500 cases.
fn criterion_9() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for case in 0..1000 {
        let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let sigma = Cov3::from_matrix(a * a.transpose()).map_err(|e| format!("case {case}: {e}"))?;
        let pose = random_pose(&mut rng);
        let d = Vector2::new(rng.random_range(-30.0..30.0), rng.random_range(-30.0..30.0));
        let floor = rng.random_range(0.0..0.1);
        let out = propagate(&sigma, &detection_jacobian(&pose, d), floor);
        let m = out.matrix();
        let trace = m[(0, 0)] + m[(1, 1)];
        let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
        let asym = (m[(0, 1)] - m[(1, 0)]).abs();
        if trace < -1e-12 || det < -1e-9 * trace.max(1.0) || asym > 1e-12 {
            return Err(format!(
                "case {case}: not PSD (trace {trace:.3e}, det {det:.3e}, asym {asym:.1e})"
            ));
        }
    }
    for case in 0..500 {
        let sigma = Cov3::diagonal(0.0, 0.0, rng.random_range(1e-6..0.1));
        let pose = random_pose(&mut rng);
        let dir = rng.random_range(0.0..2.0 * PI);
        let near_r = rng.random_range(0.5..20.0);
        let far_r = near_r * rng.random_range(1.1..3.0);
        let unit = Vector2::new(dir.cos(), dir.sin());
        let trace_of = |r: f64| {
            let m = *propagate(&sigma, &detection_jacobian(&pose, unit * r), 1e-4).matrix();
            m[(0, 0)] + m[(1, 1)]
        };
        if trace_of(far_r) <= trace_of(near_r) {
            return Err(format!(
                "case {case}: trace did not grow with the lever arm ({near_r:.2} -> {far_r:.2})"
            ));
        }
    }
    Ok("1000 PSD cases, 500 lever-arm cases".to_string())
}

/// Criterion 10: the run command is bitwise deterministic: the same seed
/// yields byte-identical trajectory and record files across repeated runs and
/// across worker thread counts.
fn criterion_10() -> Result<String, String> {
    let bin = env!("CARGO_BIN_EXE_georef");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = dir.path().join("scenario.toml");
    std::fs::write(
        &spec,
        r#"
[layout]
lanes = 2
lane_width = 3.5
frame_spacing = 1.0
point_spacing = 1.0

[[layout.elements]]
kind = "straight"
length = 90.0

[layout.marking]
kind = "dashed"
dash = 2.0
gap = 2.0

[[layout.intersections]]
at = 12.0
arm = 10.0
nested = 3

[noise]
prior_bias = [1.5, 0.5, 0.01]
prior_drift_rate = [0.02, 0.001]
detection_noise_sigma = 0.05
detection_dropout = 0.1
sensor_range = 30.0
"#,
    )
    .map_err(|e| e.to_string())?;
    let sc = dir.path().join("sc");
    let run_cli = |args: &[&str], threads: &str| -> Result<(), String> {
        let out = Command::new(bin)
            .args(args)
            .env("RAYON_NUM_THREADS", threads)
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!(
                "georef {args:?} failed: {}",
                String::from_utf8_lossy(&out.stderr)
            ));
        }
        Ok(())
    };
    run_cli(
        &["generate", spec.to_str().unwrap(), "--seed", "7", "--out", sc.to_str().unwrap()],
        "1",
    )?;
    let map = sc.join("map.json");
    let prior = sc.join("prior.csv");
    let det = sc.join("detections.json");
    let mut outputs = Vec::new();
    for (name, threads) in [("a", "1"), ("b", "1"), ("c", "4")] {
        let out = dir.path().join(name);
        run_cli(
            &[
                "run",
                "--map",
                map.to_str().unwrap(),
                "--prior",
                prior.to_str().unwrap(),
                "--detections",
                det.to_str().unwrap(),
                "--seed",
                "99",
                "--out",
                out.to_str().unwrap(),
            ],
            threads,
        )?;
        let est = std::fs::read(out.join("estimate.csv")).map_err(|e| e.to_string())?;
        let rec = std::fs::read(out.join("records.json")).map_err(|e| e.to_string())?;
        outputs.push((est, rec));
    }
    if outputs[0] != outputs[1] {
        return Err("repeat run at 1 thread differed".to_string());
    }
    if outputs[0] != outputs[2] {
        return Err("run at 4 threads differed from 1 thread".to_string());
    }
    Ok("3 runs byte-identical (1, 1, and 4 threads)".to_string())
}

/// Criterion 11: a 1000-frame session at 2000 hypotheses per frame with a
/// 50-frame optimization window finishes in under 60 s.
fn criterion_11() -> Result<String, String> {
    let layout = RoadLayout {
        elements: vec![
            RoadElement::Straight { length: 400.0 },
            RoadElement::Arc {
                radius: 150.0,
                angle: PI / 3.0,
            },
            RoadElement::Straight { length: 442.9 },
        ],
        marking: MarkingStyle::Dashed { dash: 2.0, gap: 2.0 },
        intersections: vec![junction(12.0), junction(350.0), junction(700.0)],
        ..RoadLayout::default()
    };
    let sc = generate_scenario(&layout, &mixed_noise(), 6).map_err(|e| e.to_string())?;
    if sc.prior.len() < 1000 {
        return Err(format!("scenario too short: {} frames", sc.prior.len()));
    }
    let mut cfg = pipeline_cfg(PipelineMode::SelfTuningCov, 2000, 0.2);
    cfg.dcsac.rng_seed = 6;
    cfg.window = 50;
    let start = Instant::now();
    let (est, _) =
        run_session(&sc.map, &sc.prior, &sc.detections, &cfg).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let err = ate(&est, &sc.ground_truth).map_err(|e| e.to_string())?;
    if elapsed >= 60.0 {
        return Err(format!("{} frames took {elapsed:.1} s, budget 60 s", sc.prior.len()));
    }
    if err > 0.5 {
        return Err(format!("run finished but ATE {err:.3} is not a working session"));
    }
    Ok(format!(
        "{} frames in {elapsed:.1} s (ATE {err:.1e})",
        sc.prior.len()
    ))
}

#[test]
fn acceptance_criteria() {
    let criteria: &[(usize, fn() -> Result<String, String>)] = &[
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    let mut failures = Vec::new();
    for (n, run) in criteria {
        match run() {
            Ok(detail) => println!("criterion {n}: PASS ({detail})"),
            Err(detail) => {
                println!("criterion {n}: FAIL ({detail})");
                failures.push(*n);
            }
        }
    }
    assert!(
        failures.is_empty(),
        "acceptance criteria failed: {failures:?}"
    );
}
