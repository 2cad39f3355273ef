//! Pose-graph back end.
//!
//! Nodes are per-frame SE(2) poses. Two edge families constrain them:
//! odometry edges between consecutive nodes (weighted by a 3×3 information
//! matrix) and landmark edges tying one node's detected point to a map point
//! (weighted by a per-detection 2×2 information matrix). The solver runs
//! Gauss-Newton with a small constant diagonal damping on the stacked normal
//! equations, optionally over a suffix window with every earlier node frozen.
//!
//! An optional covariance-scaling robustifier multiplies each landmark
//! edge's information by s², s = min(1, 2φ/(φ + χ²)), recomputed from the
//! current residual every iteration, which fades out gross outliers instead
//! of letting them bend the trajectory.
//!
//! Windows here are at most a few dozen poses, so the normal equations are
//! assembled densely and factored with a plain Cholesky decomposition; that
//! is the first thing to revisit if graphs ever grow past a few hundred
//! variables.

use crate::covariance::detection_jacobian;
use crate::geometry::{normalize_angle, GeometryError, Pose2, Trajectory};
use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use thiserror::Error;

/// Errors from graph construction and solving.
#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("node {0} does not exist")]
    NodeOutOfRange(usize),
    #[error("odometry edge must connect consecutive nodes, got {i} -> {j}")]
    NonConsecutiveEdge { i: usize, j: usize },
    #[error("information matrix must be finite and symmetric")]
    BadInformation,
    #[error("invalid solver configuration: {0}")]
    BadConfig(&'static str),
    #[error(
        "normal matrix is singular: the active window has gauge freedom or a degenerate edge set"
    )]
    SingularSystem,
}

/// One trajectory pose being estimated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseNode {
    pub index: usize,
    pub estimate: Pose2,
}

/// Relative-motion constraint between consecutive nodes i and j = i+1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryEdge {
    pub i: usize,
    pub j: usize,
    /// Relative transform measured by the prior, expressed in frame i.
    pub measured: Pose2,
    /// 3×3 information over (x, y, θ).
    pub information: Matrix3<f64>,
}

impl OdometryEdge {
    /// Residual (measured − estimated relative), heading wrapped.
    pub fn residual(&self, node_i: &Pose2, node_j: &Pose2) -> Vector3<f64> {
        let (s, c) = node_i.theta.sin_cos();
        let dx = node_j.x - node_i.x;
        let dy = node_j.y - node_i.y;
        Vector3::new(
            self.measured.x - (c * dx + s * dy),
            self.measured.y - (-s * dx + c * dy),
            normalize_angle(self.measured.theta - (node_j.theta - node_i.theta)),
        )
    }

    /// Analytic Jacobians of the residual w.r.t. node i and node j.
    pub fn jacobians(&self, node_i: &Pose2, node_j: &Pose2) -> (Matrix3<f64>, Matrix3<f64>) {
        let (s, c) = node_i.theta.sin_cos();
        let dx = node_j.x - node_i.x;
        let dy = node_j.y - node_i.y;
        let ji = Matrix3::new(
            c,
            s,
            s * dx - c * dy,
            -s,
            c,
            c * dx + s * dy,
            0.0,
            0.0,
            1.0,
        );
        let jj = Matrix3::new(-c, -s, 0.0, s, -c, 0.0, 0.0, 0.0, -1.0);
        (ji, jj)
    }
}

/// One detected point tied to its associated map point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LandmarkEdge {
    /// Node the detection belongs to.
    pub node: usize,
    /// Detected point in the sensor frame, meters.
    pub detection: Vector2<f64>,
    /// Associated landmark in the world frame, meters.
    pub landmark: Vector2<f64>,
    /// 2×2 information weighting this residual.
    pub information: Matrix2<f64>,
}

impl LandmarkEdge {
    /// Residual: world image of the detection minus the landmark.
    pub fn residual(&self, node: &Pose2) -> Vector2<f64> {
        node.transform_point(self.detection) - self.landmark
    }

    /// Jacobian w.r.t. the node, identical to the propagation Jacobian.
    pub fn jacobian(&self, node: &Pose2) -> nalgebra::Matrix2x3<f64> {
        detection_jacobian(node, self.detection)
    }
}

/// Landmark robustification strategy.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Robustifier {
    None,
    /// Dynamic covariance scaling with parameter φ.
    CovarianceScaling { phi: f64 },
}

/// Scale factor s = min(1, 2φ/(φ + χ²)); s = 1 exactly while χ² ≤ φ.
pub fn covariance_scale(phi: f64, chi2: f64) -> f64 {
    (2.0 * phi / (phi + chi2)).min(1.0)
}

/// Gauss-Newton settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop when the update's infinity norm falls below this.
    pub update_tol: f64,
    /// Stop when the relative cost decrease falls below this.
    pub cost_tol: f64,
    pub robustifier: Robustifier,
    /// Constant diagonal damping added to the normal matrix; grows ×10 on a
    /// rejected step and resets on acceptance.
    pub damping: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 50,
            update_tol: 1e-8,
            cost_tol: 1e-10,
            robustifier: Robustifier::None,
            damping: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.max_iterations < 1 {
            return Err(SolverError::BadConfig("max_iterations must be >= 1"));
        }
        if !(self.update_tol > 0.0) {
            return Err(SolverError::BadConfig("update_tol must be > 0"));
        }
        if !(self.cost_tol > 0.0) {
            return Err(SolverError::BadConfig("cost_tol must be > 0"));
        }
        if !(self.damping >= 0.0) {
            return Err(SolverError::BadConfig("damping must be >= 0"));
        }
        if let Robustifier::CovarianceScaling { phi } = self.robustifier {
            if !(phi > 0.0) {
                return Err(SolverError::BadConfig("phi must be > 0"));
            }
        }
        Ok(())
    }
}

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Update infinity-norm fell below the tolerance.
    SmallUpdate,
    /// Relative cost decrease fell below the tolerance.
    SmallCostDecrease,
    /// Iteration cap reached.
    MaxIterations,
    /// Cost failed to decrease three consecutive times; best state kept.
    Stalled,
    /// Nothing to optimize (no free variables in the window).
    Empty,
}

/// Outcome of one solve call.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    /// Gauss-Newton steps attempted (accepted or rejected).
    pub iterations: usize,
    /// Active-window cost before iterating, then after every step.
    pub cost_log: Vec<f64>,
    pub stop: StopReason,
    /// Cost of the returned estimates.
    pub final_cost: f64,
}

/// The pose graph: a dense odometry chain plus landmark edges.
#[derive(Debug, Clone, Default)]
pub struct PoseGraph {
    nodes: Vec<PoseNode>,
    odometry: Vec<OdometryEdge>,
    /// Landmark edges grouped by owning node.
    landmarks: Vec<Vec<LandmarkEdge>>,
}

fn check_sym3(m: &Matrix3<f64>) -> Result<(), SolverError> {
    if m.iter().any(|v| !v.is_finite()) || (m - m.transpose()).abs().max() > 1e-9 {
        return Err(SolverError::BadInformation);
    }
    Ok(())
}

fn check_sym2(m: &Matrix2<f64>) -> Result<(), SolverError> {
    if m.iter().any(|v| !v.is_finite()) || (m - m.transpose()).abs().max() > 1e-9 {
        return Err(SolverError::BadInformation);
    }
    Ok(())
}

impl PoseGraph {
    pub fn new() -> Self {
        PoseGraph::default()
    }

    /// Appends a node, returning its index.
    pub fn add_node(&mut self, estimate: Pose2) -> usize {
        let index = self.nodes.len();
        self.nodes.push(PoseNode { index, estimate });
        self.landmarks.push(Vec::new());
        index
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> Option<&PoseNode> {
        self.nodes.get(i)
    }

    pub fn set_estimate(&mut self, i: usize, estimate: Pose2) -> Result<(), SolverError> {
        self.nodes
            .get_mut(i)
            .map(|n| n.estimate = estimate)
            .ok_or(SolverError::NodeOutOfRange(i))
    }

    pub fn estimates(&self) -> Vec<Pose2> {
        self.nodes.iter().map(|n| n.estimate).collect()
    }

    pub fn trajectory(&self) -> Result<Trajectory, GeometryError> {
        Trajectory::new(self.estimates())
    }

    pub fn add_odometry(
        &mut self,
        i: usize,
        j: usize,
        measured: Pose2,
        information: Matrix3<f64>,
    ) -> Result<(), SolverError> {
        if j != i + 1 {
            return Err(SolverError::NonConsecutiveEdge { i, j });
        }
        if j >= self.nodes.len() {
            return Err(SolverError::NodeOutOfRange(j));
        }
        check_sym3(&information)?;
        self.odometry.push(OdometryEdge {
            i,
            j,
            measured,
            information,
        });
        Ok(())
    }

    pub fn add_landmark(
        &mut self,
        node: usize,
        detection: Vector2<f64>,
        landmark: Vector2<f64>,
        information: Matrix2<f64>,
    ) -> Result<(), SolverError> {
        if node >= self.nodes.len() {
            return Err(SolverError::NodeOutOfRange(node));
        }
        check_sym2(&information)?;
        self.landmarks[node].push(LandmarkEdge {
            node,
            detection,
            landmark,
            information,
        });
        Ok(())
    }

    pub fn odometry_edges(&self) -> &[OdometryEdge] {
        &self.odometry
    }

    pub fn landmark_edges_for(&self, node: usize) -> &[LandmarkEdge] {
        &self.landmarks[node]
    }

    /// Landmark edges owned by nodes at or after `from`.
    pub fn landmark_edge_count_from(&self, from: usize) -> usize {
        self.landmarks[from.min(self.landmarks.len())..]
            .iter()
            .map(|v| v.len())
            .sum()
    }

    /// Full-batch solve: every node free (modulo the gauge anchor rule).
    pub fn solve(&mut self, cfg: &SolverConfig) -> Result<SolveReport, SolverError> {
        self.solve_window(0, cfg)
    }

    /// Optimizes nodes `first_free..`, holding earlier nodes fixed. Frozen
    /// nodes still constrain the boundary through the crossing odometry edge.
    ///
    /// Gauge: when `first_free` is 0 and the graph has no landmark edges,
    /// node 0 is held fixed for this call only, so a pure odometry chain
    /// dead-reckons from its anchor instead of going singular.
    pub fn solve_window(
        &mut self,
        first_free: usize,
        cfg: &SolverConfig,
    ) -> Result<SolveReport, SolverError> {
        cfg.validate()?;
        let mut f0 = first_free;
        if f0 == 0 && self.landmarks.iter().all(|v| v.is_empty()) {
            f0 = 1;
        }
        let n = self.nodes.len();
        if f0 >= n {
            return Ok(SolveReport {
                iterations: 0,
                cost_log: vec![0.0],
                stop: StopReason::Empty,
                final_cost: 0.0,
            });
        }

        let mut est = self.estimates();
        let m = (n - f0) * 3;

        let (mut cost, mut h, mut b) = self.linearize(&est, f0, cfg.robustifier);
        // Damping would mask a structurally rank-deficient system (an
        // unconstrained node, a broken chain), so probe the undamped normal
        // matrix once up front.
        if h.clone().cholesky().is_none() {
            return Err(SolverError::SingularSystem);
        }
        let mut cost_log = vec![cost];
        let mut best_est = est.clone();
        let mut best_cost = cost;
        let mut lambda = cfg.damping;
        let mut stall = 0usize;
        let mut iterations = 0usize;
        let mut stop = StopReason::MaxIterations;

        while iterations < cfg.max_iterations {
            let mut damped = h.clone();
            for k in 0..m {
                damped[(k, k)] += lambda;
            }
            let chol = damped.cholesky().ok_or(SolverError::SingularSystem)?;
            let delta = chol.solve(&(-&b));
            let delta_inf = delta.amax();

            let mut candidate = est.clone();
            for k in 0..(n - f0) {
                let p = &mut candidate[f0 + k];
                *p = Pose2::new(
                    p.x + delta[3 * k],
                    p.y + delta[3 * k + 1],
                    p.theta + delta[3 * k + 2],
                );
            }
            let (new_cost, new_h, new_b) = self.linearize(&candidate, f0, cfg.robustifier);
            iterations += 1;

            let accepted = new_cost < cost;
            if accepted {
                let prev = cost;
                est = candidate;
                cost = new_cost;
                h = new_h;
                b = new_b;
                lambda = cfg.damping;
                stall = 0;
                if cost < best_cost {
                    best_cost = cost;
                    best_est = est.clone();
                }
                cost_log.push(cost);
                if delta_inf < cfg.update_tol {
                    stop = StopReason::SmallUpdate;
                    break;
                }
                if (prev - cost) < cfg.cost_tol * prev.max(f64::MIN_POSITIVE) {
                    stop = StopReason::SmallCostDecrease;
                    break;
                }
            } else {
                stall += 1;
                lambda = (lambda * 10.0).max(1e-12);
                cost_log.push(cost);
                if delta_inf < cfg.update_tol {
                    stop = StopReason::SmallUpdate;
                    break;
                }
                if stall >= 3 {
                    stop = StopReason::Stalled;
                    break;
                }
            }
        }

        if best_cost < cost {
            est = best_est;
            cost = best_cost;
        }
        for (k, e) in est.into_iter().enumerate() {
            self.nodes[k].estimate = e;
        }
        Ok(SolveReport {
            iterations,
            cost_log,
            stop,
            final_cost: cost,
        })
    }

    /// Builds the active-window cost, normal matrix, and gradient at `est`.
    fn linearize(
        &self,
        est: &[Pose2],
        f0: usize,
        robust: Robustifier,
    ) -> (f64, DMatrix<f64>, DVector<f64>) {
        let m = (est.len() - f0) * 3;
        let mut h = DMatrix::zeros(m, m);
        let mut b = DVector::zeros(m);
        let mut cost = 0.0;

        let add3 = |h: &mut DMatrix<f64>, r0: usize, c0: usize, blk: &Matrix3<f64>| {
            for r in 0..3 {
                for c in 0..3 {
                    h[(r0 + r, c0 + c)] += blk[(r, c)];
                }
            }
        };

        for e in &self.odometry {
            if e.j < f0 {
                continue;
            }
            let r = e.residual(&est[e.i], &est[e.j]);
            let omega_r = e.information * r;
            cost += r.dot(&omega_r);
            let (ji, jj) = e.jacobians(&est[e.i], &est[e.j]);
            let cj = (e.j - f0) * 3;
            add3(&mut h, cj, cj, &(jj.transpose() * e.information * jj));
            let gj = jj.transpose() * omega_r;
            for k in 0..3 {
                b[cj + k] += gj[k];
            }
            if e.i >= f0 {
                let ci = (e.i - f0) * 3;
                add3(&mut h, ci, ci, &(ji.transpose() * e.information * ji));
                let cross = ji.transpose() * e.information * jj;
                add3(&mut h, ci, cj, &cross);
                add3(&mut h, cj, ci, &cross.transpose());
                let gi = ji.transpose() * omega_r;
                for k in 0..3 {
                    b[ci + k] += gi[k];
                }
            }
        }

        for node in f0..est.len() {
            let c0 = (node - f0) * 3;
            for e in &self.landmarks[node] {
                let r = e.residual(&est[node]);
                let chi2 = r.dot(&(e.information * r));
                let s = match robust {
                    Robustifier::None => 1.0,
                    Robustifier::CovarianceScaling { phi } => covariance_scale(phi, chi2),
                };
                let w = s * s;
                cost += w * chi2;
                let j = e.jacobian(&est[node]);
                add3(&mut h, c0, c0, &((j.transpose() * e.information * j) * w));
                let g = (j.transpose() * (e.information * r)) * w;
                for k in 0..3 {
                    b[c0 + k] += g[k];
                }
            }
        }

        (cost, h, b)
    }
}
