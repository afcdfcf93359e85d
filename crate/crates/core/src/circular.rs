//! 1-DoF rotation averaging by robust circular regression.
//!
//! Every camera with a known gravity direction reduces to a single angle
//! around the y-axis. The solver alternates two steps until the angles stop
//! moving: an integer period assignment that picks, per edge, the branch of
//! the wrapped residual closest to zero, and a weighted linear solve over the
//! graph incidence structure with the periods held fixed. Robustness comes
//! from a two-stage IRLS schedule (L1 weights first, then Geman-McClure).
//!
//! A solve is deterministic; the per-edge passes are data-parallel and
//! reductions run sequentially over ordered buffers, so results do not depend
//! on thread count.

use crate::exec;
use crate::geometry::{extract_y_angle, wrap_radians, WrappedAngle};
use crate::linsys;
use crate::pose_graph::{ComponentFilter, PoseGraph, VertexId};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("vertex {0} has no gravity direction")]
    MissingGravity(VertexId),
    #[error("graph is not connected ({0} components); solve each component separately")]
    Disconnected(usize),
    #[error("graph has no vertices")]
    Empty,
    #[error(transparent)]
    LinSys(#[from] linsys::LinSysError),
}

/// Robust weighting stage of the IRLS schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// IRLS weights `1 / max(|eps|, l1_epsilon)`, approximating an L1 fit.
    L1,
    /// Geman-McClure weights `(s^2 / (s^2 + eps^2))^2`, unit weight at zero.
    GemanMcClure,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::L1 => "l1",
            Stage::GemanMcClure => "gm",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    /// Global cap on outer iterations across both stages.
    pub max_iterations: usize,
    /// Convergence threshold on `max |delta theta|` (radians).
    pub convergence_tol: f64,
    /// Outer-iteration cap for the L1 stage.
    pub stage1_iterations: usize,
    /// Outer-iteration cap for the Geman-McClure stage.
    pub stage2_iterations: usize,
    /// Geman-McClure scale (radians).
    pub gm_scale: f64,
    /// Clamp for the L1 IRLS weight denominator (radians).
    pub l1_epsilon: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            convergence_tol: 1e-7,
            stage1_iterations: 10,
            stage2_iterations: 100,
            gm_scale: 0.1,
            l1_epsilon: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) {
        assert!(self.max_iterations >= 1);
        assert!(self.convergence_tol > 0.0);
        assert!(self.gm_scale > 0.0);
        assert!(self.l1_epsilon > 0.0);
    }

    fn weight(&self, stage: Stage, eps_abs: f64) -> f64 {
        match stage {
            Stage::L1 => 1.0 / eps_abs.max(self.l1_epsilon),
            Stage::GemanMcClure => {
                let s2 = self.gm_scale * self.gm_scale;
                let w = s2 / (s2 + eps_abs * eps_abs);
                w * w
            }
        }
    }

    pub(crate) fn rho(&self, stage: Stage, eps_abs: f64) -> f64 {
        match stage {
            Stage::L1 => eps_abs,
            Stage::GemanMcClure => {
                let s2 = self.gm_scale * self.gm_scale;
                s2 * eps_abs * eps_abs / (s2 + eps_abs * eps_abs)
            }
        }
    }
}

/// One edge of the reduced 1-DoF problem. `src`/`dst` index into
/// [`OneDofProblem::vertex_ids`]; the constraint reads
/// `theta[dst] - theta[src] = theta_tilde (mod 2 pi)`.
#[derive(Debug, Clone)]
pub struct ProblemEdge {
    pub src: usize,
    pub dst: usize,
    /// Wrapped y-angle of the gravity-aligned relative rotation.
    pub theta_tilde: f64,
    /// Yaw/roll deviation of the aligned relative rotation (diagnostic only;
    /// the gravity refinement consumes it, the solver ignores it).
    pub off_axis: f64,
    pub kappa: f64,
}

/// The 1-DoF problem extracted from a fully gravity-annotated graph.
#[derive(Debug, Clone)]
pub struct OneDofProblem {
    vertex_ids: Vec<VertexId>,
    edges: Vec<ProblemEdge>,
    gauge: usize,
}

impl OneDofProblem {
    /// Vertex ids in ascending order; positions match theta indices.
    pub fn vertex_ids(&self) -> &[VertexId] {
        &self.vertex_ids
    }

    pub fn edges(&self) -> &[ProblemEdge] {
        &self.edges
    }

    /// Index of the gauge vertex (smallest id), pinned to `theta = 0`.
    pub fn gauge(&self) -> usize {
        self.gauge
    }

    pub fn num_vertices(&self) -> usize {
        self.vertex_ids.len()
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub thetas: BTreeMap<VertexId, WrappedAngle>,
    /// Per-edge period, keyed by the edge's (src, dst) ids, in problem edge
    /// order. Values are always in {-1, 0, 1}.
    pub periods: Vec<(VertexId, VertexId, i32)>,
    /// Objective after each outer iteration, tagged with the active stage.
    /// Non-increasing within each stage; a stage switch may reset the value.
    pub objective_trace: Vec<(Stage, f64)>,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveReport {
    pub fn final_objective(&self) -> f64 {
        self.objective_trace.last().map(|&(_, v)| v).unwrap_or(0.0)
    }
}

/// Extracts the 1-DoF measurement for every edge of `graph`.
///
/// Requires gravity on every vertex and a connected graph. The gauge vertex
/// is the smallest id.
pub fn build_problem(graph: &PoseGraph) -> Result<OneDofProblem, SolveError> {
    if graph.num_vertices() == 0 {
        return Err(SolveError::Empty);
    }
    for v in graph.vertices() {
        if v.gravity.is_none() {
            return Err(SolveError::MissingGravity(v.id));
        }
    }
    let comps = graph.connected_components(ComponentFilter::All);
    if comps.len() != 1 {
        return Err(SolveError::Disconnected(comps.len()));
    }

    let vertex_ids = graph.vertex_ids();
    let index_of: HashMap<VertexId, usize> = vertex_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, i))
        .collect();
    let alignments: Vec<_> = graph
        .vertices()
        .map(|v| v.alignment.expect("gravity checked above"))
        .collect();

    let edges = exec::map_slice(graph.edges(), |e| {
        let si = index_of[&e.src];
        let di = index_of[&e.dst];
        let aligned = alignments[di].transpose() * e.rel * alignments[si];
        let (theta, off_axis) = extract_y_angle(&aligned);
        ProblemEdge {
            src: si,
            dst: di,
            theta_tilde: theta.radians(),
            off_axis,
            kappa: e.kappa,
        }
    });

    Ok(OneDofProblem {
        vertex_ids,
        edges,
        gauge: 0,
    })
}

/// The integer period minimizing `|raw + 2 k pi|`, together with the attained
/// residual in `[-pi, pi)`. Ties at `|residual| = pi` resolve to `-pi`.
#[inline]
pub(crate) fn period_and_residual(raw: f64) -> (i32, f64) {
    let eps = wrap_radians(raw);
    let k = ((eps - raw) / TAU).round() as i32;
    (k, eps)
}

/// The period `k*` minimizing `|theta_tilde - (theta_j - theta_i) + 2 k pi|`.
pub fn optimal_period(
    theta_tilde: WrappedAngle,
    theta_i: WrappedAngle,
    theta_j: WrappedAngle,
) -> i32 {
    let raw = theta_tilde.radians() - (theta_j.radians() - theta_i.radians());
    period_and_residual(raw).0
}

/// Exact minimizer of the weighted quadratic with periods held fixed.
///
/// `loss_weights` are the combined IRLS-times-kappa weights. The result is
/// raw (unwrapped) with the gauge entry at zero; callers wrap and re-assign
/// periods atomically afterwards.
pub fn solve_linear_stage(
    problem: &OneDofProblem,
    periods: &[i32],
    loss_weights: &[f64],
) -> Result<Vec<f64>, SolveError> {
    let pairs: Vec<(usize, usize)> = problem.edges.iter().map(|e| (e.src, e.dst)).collect();
    let targets: Vec<f64> = problem
        .edges
        .iter()
        .zip(periods)
        .map(|(e, &k)| e.theta_tilde + TAU * k as f64)
        .collect();
    Ok(linsys::solve_difference_system(
        problem.num_vertices(),
        problem.gauge,
        &pairs,
        loss_weights,
        &targets,
    )?)
}

/// Evaluates `sum kappa * rho(eps_hat)` for the given stage.
pub fn objective(
    problem: &OneDofProblem,
    thetas: &[f64],
    periods: &[i32],
    config: &SolverConfig,
    stage: Stage,
) -> f64 {
    problem
        .edges
        .iter()
        .zip(periods)
        .map(|(e, &k)| {
            let eps = e.theta_tilde + TAU * k as f64 - (thetas[e.dst] - thetas[e.src]);
            e.kappa * config.rho(stage, eps.abs())
        })
        .sum()
}

/// Runs the alternating optimization on a fully gravity-annotated graph.
pub fn solve(
    graph: &PoseGraph,
    config: &SolverConfig,
    init: Option<&BTreeMap<VertexId, f64>>,
) -> Result<SolveReport, SolveError> {
    let problem = build_problem(graph)?;
    solve_problem(&problem, config, init)
}

/// Runs the alternating optimization on an already extracted problem.
pub fn solve_problem(
    problem: &OneDofProblem,
    config: &SolverConfig,
    init: Option<&BTreeMap<VertexId, f64>>,
) -> Result<SolveReport, SolveError> {
    config.validate();
    let n = problem.num_vertices();
    let mut thetas: Vec<f64> = match init {
        Some(map) => problem
            .vertex_ids
            .iter()
            .map(|id| wrap_radians(*map.get(id).unwrap_or(&0.0)))
            .collect(),
        None => vec![0.0; n],
    };

    let assign = |thetas: &[f64]| -> Vec<(i32, f64)> {
        exec::map_slice(&problem.edges, |e| {
            period_and_residual(e.theta_tilde - (thetas[e.dst] - thetas[e.src]))
        })
    };

    let mut period_residual = assign(&thetas);
    let mut trace: Vec<(Stage, f64)> = Vec::new();
    let mut iterations = 0usize;
    let mut converged = false;

    'stages: for (stage, cap) in [
        (Stage::L1, config.stage1_iterations),
        (Stage::GemanMcClure, config.stage2_iterations),
    ] {
        for _ in 0..cap {
            if iterations >= config.max_iterations {
                break 'stages;
            }
            let weights: Vec<f64> = problem
                .edges
                .iter()
                .zip(&period_residual)
                .map(|(e, &(_, eps))| e.kappa * config.weight(stage, eps.abs()))
                .collect();
            let periods: Vec<i32> = period_residual.iter().map(|&(k, _)| k).collect();
            let raw = solve_linear_stage(problem, &periods, &weights)?;

            // Wrap and re-assign periods atomically.
            let new_thetas: Vec<f64> = raw.iter().map(|&t| wrap_radians(t)).collect();
            let new_assign = assign(&new_thetas);
            let max_delta = thetas
                .iter()
                .zip(&new_thetas)
                .map(|(&a, &b)| wrap_radians(b - a).abs())
                .fold(0.0f64, f64::max);

            thetas = new_thetas;
            period_residual = new_assign;
            iterations += 1;

            let obj: f64 = problem
                .edges
                .iter()
                .zip(&period_residual)
                .map(|(e, &(_, eps))| e.kappa * config.rho(stage, eps.abs()))
                .sum();
            trace.push((stage, obj));

            if max_delta < config.convergence_tol {
                if stage == Stage::GemanMcClure {
                    converged = true;
                }
                break;
            }
        }
    }

    debug_assert!(period_residual.iter().all(|&(k, _)| (-1..=1).contains(&k)));

    let thetas_map: BTreeMap<VertexId, WrappedAngle> = problem
        .vertex_ids
        .iter()
        .zip(&thetas)
        .map(|(&id, &t)| (id, WrappedAngle::new(t).expect("finite")))
        .collect();
    let periods = problem
        .edges
        .iter()
        .zip(&period_residual)
        .map(|(e, &(k, _))| {
            (
                problem.vertex_ids[e.src],
                problem.vertex_ids[e.dst],
                k,
            )
        })
        .collect();

    Ok(SolveReport {
        thetas: thetas_map,
        periods,
        objective_trace: trace,
        iterations,
        converged,
    })
}

/// Asserts the per-stage monotonicity contract of an objective trace.
/// Returns the first violating index, if any.
pub fn monotonicity_violation(trace: &[(Stage, f64)]) -> Option<usize> {
    for i in 1..trace.len() {
        let (prev_stage, prev) = trace[i - 1];
        let (stage, cur) = trace[i];
        if stage == prev_stage && cur > prev + 1e-12 {
            return Some(i);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gravity_alignment, wrap, Rotation3, UnitVector3};
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn two_camera_graph(rel: Rotation3) -> PoseGraph {
        let mut g = PoseGraph::new();
        g.add_vertex(0, Some(UnitVector3::y_axis())).unwrap();
        g.add_vertex(1, Some(UnitVector3::y_axis())).unwrap();
        g.add_edge(0, 1, rel, 1.0).unwrap();
        g
    }

    #[test]
    fn build_problem_aligned_cameras() {
        let g = two_camera_graph(Rotation3::about_y(0.7));
        let p = build_problem(&g).unwrap();
        assert_eq!(p.num_vertices(), 2);
        assert_abs_diff_eq!(p.edges()[0].theta_tilde, 0.7, epsilon = 1e-12);
        assert_abs_diff_eq!(p.edges()[0].off_axis, 0.0, epsilon = 1e-7);
    }

    #[test]
    fn build_problem_recovers_angle_under_known_alignments() {
        let mut rng = StdRng::seed_from_u64(2);
        let gi = crate::synth::random_unit_vector(&mut rng);
        let gj = crate::synth::random_unit_vector(&mut rng);
        let ui = gravity_alignment(&gi);
        let uj = gravity_alignment(&gj);
        let rel = uj * Rotation3::about_y(0.7) * ui.transpose();
        let mut g = PoseGraph::new();
        g.add_vertex(0, Some(gi)).unwrap();
        g.add_vertex(1, Some(gj)).unwrap();
        g.add_edge(0, 1, rel, 1.0).unwrap();
        let p = build_problem(&g).unwrap();
        assert_abs_diff_eq!(p.edges()[0].theta_tilde, 0.7, epsilon = 1e-9);
        assert_abs_diff_eq!(p.edges()[0].off_axis, 0.0, epsilon = 1e-7);
    }

    #[test]
    fn build_problem_reports_off_axis_motion() {
        let g = two_camera_graph(Rotation3::about_x(0.2));
        let p = build_problem(&g).unwrap();
        assert_abs_diff_eq!(p.edges()[0].theta_tilde, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.edges()[0].off_axis, 0.2, epsilon = 1e-9);
    }

    #[test]
    fn build_problem_rejects_missing_gravity_and_disconnection() {
        let mut g = PoseGraph::new();
        g.add_vertex(0, Some(UnitVector3::y_axis())).unwrap();
        g.add_vertex(1, None).unwrap();
        g.add_edge(0, 1, Rotation3::identity(), 1.0).unwrap();
        assert!(matches!(
            build_problem(&g),
            Err(SolveError::MissingGravity(1))
        ));

        let mut g = PoseGraph::new();
        g.add_vertex(0, Some(UnitVector3::y_axis())).unwrap();
        g.add_vertex(1, Some(UnitVector3::y_axis())).unwrap();
        assert!(matches!(build_problem(&g), Err(SolveError::Disconnected(2))));
    }

    #[test]
    fn optimal_period_examples() {
        let w = |x: f64| wrap(x).unwrap();
        // In-range residual keeps k = 0.
        assert_eq!(optimal_period(w(0.5), w(0.0), w(0.4)), 0);
        let (k, eps) = period_and_residual(0.5 - (0.4 - 0.0));
        assert_eq!(k, 0);
        assert_abs_diff_eq!(eps, 0.1, epsilon = 1e-12);

        // Raw residual 6.0 wraps down: k = -1.
        let (k, eps) = period_and_residual(3.0 - (-3.0 - 0.0));
        assert_eq!(k, -1);
        assert_abs_diff_eq!(eps, 6.0 - TAU, epsilon = 1e-12);

        // Symmetric case wraps up: k = +1.
        let (k, eps) = period_and_residual(-3.0 - (3.0 - 0.0));
        assert_eq!(k, 1);
        assert_abs_diff_eq!(eps, -6.0 + TAU, epsilon = 1e-12);

        // Tie at pi resolves toward -pi, consistent with wrap.
        let (_, eps) = period_and_residual(std::f64::consts::PI);
        assert_eq!(eps, -std::f64::consts::PI);
    }

    #[test]
    fn period_residual_always_in_range() {
        let mut rng = StdRng::seed_from_u64(4);
        for _ in 0..1000 {
            let raw = rng.random_range(-9.0..9.0);
            let (k, eps) = period_and_residual(raw);
            assert!((-2..=2).contains(&k));
            assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&eps));
        }
    }

    #[test]
    fn linear_stage_single_edge_exact_fit() {
        let g = two_camera_graph(Rotation3::about_y(0.5));
        let p = build_problem(&g).unwrap();
        let t = solve_linear_stage(&p, &[0], &[1.0]).unwrap();
        assert_abs_diff_eq!(t[0], 0.0);
        assert_abs_diff_eq!(t[1], 0.5, epsilon = 1e-12);
    }

    fn triangle_problem(measurements: [f64; 3]) -> OneDofProblem {
        let mut g = PoseGraph::new();
        for id in 0..3 {
            g.add_vertex(id, Some(UnitVector3::y_axis())).unwrap();
        }
        g.add_edge(0, 1, Rotation3::about_y(measurements[0]), 1.0)
            .unwrap();
        g.add_edge(1, 2, Rotation3::about_y(measurements[1]), 1.0)
            .unwrap();
        g.add_edge(2, 0, Rotation3::about_y(measurements[2]), 1.0)
            .unwrap();
        build_problem(&g).unwrap()
    }

    #[test]
    fn linear_stage_consistent_cycle() {
        let p = triangle_problem([0.3, 0.4, -0.7]);
        let t = solve_linear_stage(&p, &[0; 3], &[1.0; 3]).unwrap();
        assert_abs_diff_eq!(t[1] - t[0], 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(t[2] - t[1], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn linear_stage_spreads_cycle_error() {
        let p = triangle_problem([0.3, 0.4, -0.6]);
        let t = solve_linear_stage(&p, &[0; 3], &[1.0; 3]).unwrap();
        assert_abs_diff_eq!(t[1], 0.3 - 1.0 / 30.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t[2], 0.7 - 2.0 / 30.0, epsilon = 1e-12);
        for e in p.edges() {
            let r = e.theta_tilde - (t[e.dst] - t[e.src]);
            assert_abs_diff_eq!(r.abs(), 1.0 / 30.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn solve_single_edge() {
        let g = two_camera_graph(Rotation3::about_y(0.8));
        let report = solve(&g, &SolverConfig::default(), None).unwrap();
        assert!(report.converged);
        assert!(report.iterations <= 3);
        assert_abs_diff_eq!(report.thetas[&0].radians(), 0.0);
        assert_abs_diff_eq!(report.thetas[&1].radians(), 0.8, epsilon = 1e-9);
        assert_eq!(report.periods[0].2, 0);
        assert!(monotonicity_violation(&report.objective_trace).is_none());
    }

    #[test]
    fn solve_matches_objective_reevaluation() {
        let mut rng = StdRng::seed_from_u64(9);
        let cfg = crate::synth::SynthConfig {
            topology: crate::synth::Topology::Sequential,
            n: 12,
            neighbors: 4,
            rot_noise: 0.05,
            grav_noise: 0.01,
            outlier_fraction: 0.0,
            gravity_known_fraction: 1.0,
            alpha: 1.0,
            seed: rng.random(),
        };
        let (graph, _) = crate::synth::generate(&cfg).unwrap();
        let config = SolverConfig::default();
        let report = solve(&graph, &config, None).unwrap();
        let problem = build_problem(&graph).unwrap();
        let thetas: Vec<f64> = problem
            .vertex_ids()
            .iter()
            .map(|id| report.thetas[id].radians())
            .collect();
        let periods: Vec<i32> = report.periods.iter().map(|&(_, _, k)| k).collect();
        let recomputed = objective(&problem, &thetas, &periods, &config, Stage::GemanMcClure);
        assert_abs_diff_eq!(recomputed, report.final_objective(), epsilon = 1e-12);
    }

    #[test]
    fn gauge_invariance_of_measurements() {
        // Measurements built from theta and from theta + c coincide, so the
        // recovered solution does too (theta_tilde only sees differences).
        let thetas = [0.4, -1.3, 2.2, 0.9];
        let shift = 1.1;
        let build = |offset: f64| {
            let mut g = PoseGraph::new();
            for id in 0..4 {
                g.add_vertex(id, Some(UnitVector3::y_axis())).unwrap();
            }
            for i in 0..4u64 {
                for j in (i + 1)..4 {
                    let d = (thetas[j as usize] + offset) - (thetas[i as usize] + offset);
                    g.add_edge(i, j, Rotation3::about_y(d), 1.0).unwrap();
                }
            }
            solve(&g, &SolverConfig::default(), None).unwrap()
        };
        let a = build(0.0);
        let b = build(shift);
        for id in 0..4 {
            assert_abs_diff_eq!(
                a.thetas[&id].radians(),
                b.thetas[&id].radians(),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn noise_free_exact_recovery_sequential() {
        let cfg = crate::synth::SynthConfig {
            topology: crate::synth::Topology::Sequential,
            n: 50,
            neighbors: 6,
            rot_noise: 0.0,
            grav_noise: 0.0,
            outlier_fraction: 0.0,
            gravity_known_fraction: 1.0,
            alpha: 1.0,
            seed: 31,
        };
        let (graph, gt) = crate::synth::generate(&cfg).unwrap();
        let report = solve(&graph, &SolverConfig::default(), None).unwrap();
        assert!(report.converged);
        assert!(report.final_objective() < 1e-12);

        // Compare up to gauge: estimated rotations vs ground truth.
        let est: BTreeMap<VertexId, Rotation3> = report
            .thetas
            .iter()
            .map(|(&id, t)| {
                let u = graph.vertex(id).unwrap().alignment.unwrap();
                (id, u * Rotation3::about_y(t.radians()))
            })
            .collect();
        let align = crate::eval::align(&est, &gt.rotations).unwrap();
        for (id, r) in &est {
            let err =
                crate::geometry::geodesic_distance(&(*r * align), &gt.rotations[id]).unwrap();
            assert!(err < 1e-8, "vertex {id} error {err}");
        }
    }
}
