//! Rotation averaging when only a subset of cameras has a known gravity
//! direction.
//!
//! Cameras with gravity keep their single-angle parameterization; the rest
//! carry a full 3-DoF axis-angle increment. The solve is stratified: first
//! the 1-DoF solver runs on the largest gravity-connected component, then all
//! remaining rotations start from the identity and a joint IRLS refines
//! everything together. Three edge classes feed one linear system per
//! iteration:
//!
//! * both endpoints with gravity: the scalar wrapped-residual equation;
//! * neither endpoint with gravity: the linearized log-map constraint
//!   (3 rows over two 3-vector increments);
//! * one endpoint each: the same 3 rows with the gravity side restricted to
//!   its y-axis component.

use crate::circular::{self, period_and_residual, SolverConfig, Stage};
use crate::exec;
use crate::geometry::{
    exp_map, extract_y_angle, log_map, right_jacobian_inv, wrap_radians, Rotation3,
};
use crate::linsys::BlockSystem;
use crate::pose_graph::{ComponentFilter, PoseGraph, VertexId};
use nalgebra::{Matrix3, Vector3};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;

pub use crate::circular::SolveError;

/// Constraint class of an edge, by gravity availability at its endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeClass {
    GravityGravity,
    FreeFree,
    GravityFree,
}

#[derive(Debug, Clone)]
pub struct MixedReport {
    pub rotations: BTreeMap<VertexId, Rotation3>,
    pub iterations: usize,
    pub objective_trace: Vec<(Stage, f64)>,
    pub converged: bool,
}

/// A dense Jacobian block: `rows x cols`, row-major.
#[derive(Debug, Clone)]
pub struct JacBlock {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl JacBlock {
    fn from_matrix3(m: &Matrix3<f64>) -> Self {
        let mut data = Vec::with_capacity(9);
        for r in 0..3 {
            for c in 0..3 {
                data.push(m[(r, c)]);
            }
        }
        Self { rows: 3, cols: 3, data }
    }

    fn from_column(v: &Vector3<f64>) -> Self {
        Self {
            rows: 3,
            cols: 1,
            data: vec![v.x, v.y, v.z],
        }
    }

    fn scalar(v: f64) -> Self {
        Self {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    /// `self^T * other`, a `cols x other.cols` block.
    fn t_mul(&self, other: &JacBlock) -> Vec<f64> {
        debug_assert_eq!(self.rows, other.rows);
        let mut out = vec![0.0; self.cols * other.cols];
        for r in 0..self.rows {
            for a in 0..self.cols {
                let lhs = self.data[r * self.cols + a];
                for b in 0..other.cols {
                    out[a * other.cols + b] += lhs * other.data[r * other.cols + b];
                }
            }
        }
        out
    }

    /// `self^T * v`, length `cols`.
    fn t_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(self.rows, v.len());
        let mut out = vec![0.0; self.cols];
        for r in 0..self.rows {
            for c in 0..self.cols {
                out[c] += self.data[r * self.cols + c] * v[r];
            }
        }
        out
    }
}

/// First-order expansion of one edge residual at the current estimates:
/// `r(d) ~= residual + jac_src * d_src + jac_dst * d_dst`.
#[derive(Debug, Clone)]
pub struct EdgeLinearization {
    pub class: EdgeClass,
    pub jac_src: JacBlock,
    pub jac_dst: JacBlock,
    pub residual: Vec<f64>,
    /// Scalar distance fed to the robust weight (|eps| or the residual angle).
    pub magnitude: f64,
}

/// Scalar constraint for a gravity-gravity edge with the period resolved:
/// `eps_hat = target - (theta_dst - theta_src)`.
pub fn linearize_gg(target: f64, theta_src: f64, theta_dst: f64) -> EdgeLinearization {
    let eps = target - (theta_dst - theta_src);
    EdgeLinearization {
        class: EdgeClass::GravityGravity,
        jac_src: JacBlock::scalar(1.0),
        jac_dst: JacBlock::scalar(-1.0),
        residual: vec![eps],
        magnitude: eps.abs(),
    }
}

/// Log-map constraint for a free-free edge. The residual is
/// `log(R_dst^T * rel * R_src)`; increments act by right multiplication.
pub fn linearize_ff(r_src: &Rotation3, r_dst: &Rotation3, rel: &Rotation3) -> EdgeLinearization {
    let err = r_dst.transpose() * *rel * *r_src;
    let r0 = log_map(&err);
    let jr_inv = right_jacobian_inv(&r0);
    EdgeLinearization {
        class: EdgeClass::FreeFree,
        jac_src: JacBlock::from_matrix3(&jr_inv),
        jac_dst: JacBlock::from_matrix3(&(-jr_inv.transpose())),
        residual: vec![r0.x, r0.y, r0.z],
        magnitude: r0.norm(),
    }
}

/// Log-map constraint for a gravity-free edge: the gravity endpoint keeps
/// only the y-axis component of its increment.
pub fn linearize_gf(
    r_src: &Rotation3,
    r_dst: &Rotation3,
    rel: &Rotation3,
    gravity_is_src: bool,
) -> EdgeLinearization {
    let full = linearize_ff(r_src, r_dst, rel);
    let restrict = |j: &JacBlock| {
        // Column for the y-axis (second) component only.
        JacBlock::from_column(&Vector3::new(j.data[1], j.data[4], j.data[7]))
    };
    if gravity_is_src {
        EdgeLinearization {
            class: EdgeClass::GravityFree,
            jac_src: restrict(&full.jac_src),
            jac_dst: full.jac_dst,
            residual: full.residual,
            magnitude: full.magnitude,
        }
    } else {
        EdgeLinearization {
            class: EdgeClass::GravityFree,
            jac_src: full.jac_src,
            jac_dst: restrict(&full.jac_dst),
            residual: full.residual,
            magnitude: full.magnitude,
        }
    }
}

struct MixedEdge {
    src: usize,
    dst: usize,
    kappa: f64,
    class: EdgeClass,
    rel: Rotation3,
    /// Wrapped 1-DoF measurement, gravity-gravity edges only.
    theta_tilde: f64,
    /// Current period, gravity-gravity edges only.
    period: i32,
}

struct State {
    ids: Vec<VertexId>,
    /// Gravity alignment for gravity vertices.
    alignment: Vec<Option<Rotation3>>,
    theta: Vec<f64>,
    rotation: Vec<Rotation3>,
    /// Unknown offset per vertex; `None` for the gauge vertex.
    col: Vec<Option<usize>>,
    dim: usize,
}

impl State {
    fn is_gravity(&self, v: usize) -> bool {
        self.alignment[v].is_some()
    }
}

fn stage_weight(config: &SolverConfig, stage: Stage, d: f64) -> f64 {
    match stage {
        Stage::L1 => 1.0 / d.max(config.l1_epsilon),
        Stage::GemanMcClure => {
            let s2 = config.gm_scale * config.gm_scale;
            let w = s2 / (s2 + d * d);
            w * w
        }
    }
}

fn linearize(state: &State, edge: &MixedEdge) -> EdgeLinearization {
    match edge.class {
        EdgeClass::GravityGravity => linearize_gg(
            edge.theta_tilde + TAU * edge.period as f64,
            state.theta[edge.src],
            state.theta[edge.dst],
        ),
        EdgeClass::FreeFree => linearize_ff(
            &state.rotation[edge.src],
            &state.rotation[edge.dst],
            &edge.rel,
        ),
        EdgeClass::GravityFree => linearize_gf(
            &state.rotation[edge.src],
            &state.rotation[edge.dst],
            &edge.rel,
            state.is_gravity(edge.src),
        ),
    }
}

/// Residual magnitude of one edge at the given state, re-resolving the
/// period for gravity-gravity edges. Returns `(magnitude, period)`.
fn edge_residual(state: &State, edge: &MixedEdge) -> (f64, i32) {
    match edge.class {
        EdgeClass::GravityGravity => {
            let raw = edge.theta_tilde - (state.theta[edge.dst] - state.theta[edge.src]);
            let (k, eps) = period_and_residual(raw);
            (eps.abs(), k)
        }
        _ => {
            let err = state.rotation[edge.dst].transpose() * edge.rel * state.rotation[edge.src];
            (err.angle(), edge.period)
        }
    }
}

fn objective(state: &State, edges: &[MixedEdge], config: &SolverConfig, stage: Stage) -> f64 {
    edges
        .iter()
        .map(|e| e.kappa * config.rho(stage, edge_residual(state, e).0))
        .sum()
}

/// Stratified solve: 1-DoF averaging on the largest gravity component, then
/// joint robust refinement of all rotations.
pub fn solve_mixed(graph: &PoseGraph, config: &SolverConfig) -> Result<MixedReport, SolveError> {
    config.validate();
    if graph.num_vertices() == 0 {
        return Err(SolveError::Empty);
    }
    let comps = graph.connected_components(ComponentFilter::All);
    if comps.len() != 1 {
        return Err(SolveError::Disconnected(comps.len()));
    }

    // Full gravity coverage delegates entirely to the 1-DoF solver.
    if graph.has_full_gravity() {
        let report = circular::solve(graph, config, None)?;
        let rotations = report
            .thetas
            .iter()
            .map(|(&id, t)| {
                let u = graph.vertex(id).unwrap().alignment.unwrap();
                (id, u * Rotation3::about_y(t.radians()))
            })
            .collect();
        return Ok(MixedReport {
            rotations,
            iterations: report.iterations,
            objective_trace: report.objective_trace,
            converged: report.converged,
        });
    }

    let ids = graph.vertex_ids();
    let index: HashMap<VertexId, usize> = ids.iter().enumerate().map(|(i, &v)| (v, i)).collect();

    // Stage A: 1-DoF solve on the largest gravity-connected component.
    let gravity_comps = graph.connected_components(ComponentFilter::GravityOnly);
    let stage_a = gravity_comps
        .iter()
        .max_by_key(|c| c.len())
        .cloned()
        .unwrap_or_default();
    let mut theta = vec![0.0; ids.len()];
    if stage_a.len() >= 2 {
        let sub = graph.induced_subgraph(&stage_a);
        let sub_comps = sub.connected_components(ComponentFilter::All);
        if sub_comps.len() == 1 {
            let report = circular::solve(&sub, config, None)?;
            for (&id, t) in &report.thetas {
                theta[index[&id]] = t.radians();
            }
        }
    }

    // Gauge: smallest id of the stage-A component when gravity exists
    // anywhere, otherwise the smallest id overall (full rotation pinned).
    let gauge_id = stage_a
        .iter()
        .next()
        .copied()
        .unwrap_or_else(|| ids[0]);
    let gauge = index[&gauge_id];

    let alignment: Vec<Option<Rotation3>> = graph.vertices().map(|v| v.alignment).collect();
    let rotation: Vec<Rotation3> = ids
        .iter()
        .enumerate()
        .map(|(i, _)| match alignment[i] {
            Some(u) => u * Rotation3::about_y(theta[i]),
            None => Rotation3::identity(),
        })
        .collect();

    let mut col = vec![None; ids.len()];
    let mut dim = 0usize;
    for i in 0..ids.len() {
        if i == gauge {
            continue;
        }
        let size = if alignment[i].is_some() { 1 } else { 3 };
        col[i] = Some(dim);
        dim += size;
    }

    let mut state = State {
        ids,
        alignment,
        theta,
        rotation,
        col,
        dim,
    };

    let mut edges: Vec<MixedEdge> = graph
        .edges()
        .iter()
        .map(|e| {
            let src = index[&e.src];
            let dst = index[&e.dst];
            let (class, theta_tilde) =
                match (state.alignment[src].as_ref(), state.alignment[dst].as_ref()) {
                    (Some(us), Some(ud)) => {
                        let aligned = ud.transpose() * e.rel * *us;
                        let (t, _) = extract_y_angle(&aligned);
                        (EdgeClass::GravityGravity, t.radians())
                    }
                    (None, None) => (EdgeClass::FreeFree, 0.0),
                    _ => (EdgeClass::GravityFree, 0.0),
                };
            MixedEdge {
                src,
                dst,
                kappa: e.kappa,
                class,
                rel: e.rel,
                theta_tilde,
                period: 0,
            }
        })
        .collect();
    // Initial period assignment at the initialized angles.
    for e in &mut edges {
        if e.class == EdgeClass::GravityGravity {
            e.period = edge_residual(&state, e).1;
        }
    }

    let mut trace: Vec<(Stage, f64)> = Vec::new();
    let mut iterations = 0usize;
    let mut converged = false;

    'stages: for (stage, cap) in [
        (Stage::L1, config.stage1_iterations),
        (Stage::GemanMcClure, config.stage2_iterations),
    ] {
        let mut current_obj = objective(&state, &edges, config, stage);
        for _ in 0..cap {
            if iterations >= config.max_iterations {
                break 'stages;
            }

            let linearized = exec::map_slice(&edges, |e| linearize(&state, e));
            let mut sys = BlockSystem::new(state.dim);
            for (e, lin) in edges.iter().zip(&linearized) {
                let w = e.kappa * stage_weight(config, stage, lin.magnitude);
                let neg_res: Vec<f64> = lin.residual.iter().map(|r| -r * w).collect();
                for (v, jac) in [(e.src, &lin.jac_src), (e.dst, &lin.jac_dst)] {
                    if let Some(c) = state.col[v] {
                        sys.add_rhs(c, &jac.t_vec(&neg_res));
                    }
                }
                for (va, ja) in [(e.src, &lin.jac_src), (e.dst, &lin.jac_dst)] {
                    let Some(ca) = state.col[va] else { continue };
                    for (vb, jb) in [(e.src, &lin.jac_src), (e.dst, &lin.jac_dst)] {
                        let Some(cb) = state.col[vb] else { continue };
                        let mut block = ja.t_mul(jb);
                        for v in &mut block {
                            *v *= w;
                        }
                        sys.add_block(ca, cb, ja.cols, jb.cols, &block);
                    }
                }
            }
            let delta = sys.solve()?;

            // Damped update: halve the step while the objective would rise.
            let mut scale = 1.0;
            let mut accepted = false;
            let mut max_step = 0.0;
            for _ in 0..=10 {
                let candidate = apply_step(&state, &delta, scale);
                let mut cand_edges_periods: Vec<i32> = Vec::with_capacity(edges.len());
                let mut obj = 0.0;
                for e in &edges {
                    let (d, k) = edge_residual(&candidate, e);
                    obj += e.kappa * config.rho(stage, d);
                    cand_edges_periods.push(k);
                }
                if obj <= current_obj + 1e-15 {
                    max_step = step_magnitude(&state, &delta, scale);
                    state = candidate;
                    for (e, k) in edges.iter_mut().zip(cand_edges_periods) {
                        if e.class == EdgeClass::GravityGravity {
                            e.period = k;
                        }
                    }
                    current_obj = obj;
                    accepted = true;
                    break;
                }
                scale *= 0.5;
            }

            iterations += 1;
            trace.push((stage, current_obj));

            if !accepted {
                // Stationary up to line search; nothing more to gain here.
                if stage == Stage::GemanMcClure {
                    converged = true;
                }
                break;
            }
            if max_step < config.convergence_tol {
                if stage == Stage::GemanMcClure {
                    converged = true;
                }
                break;
            }
        }
    }

    let rotations = state
        .ids
        .iter()
        .enumerate()
        .map(|(i, &id)| (id, state.rotation[i]))
        .collect();
    Ok(MixedReport {
        rotations,
        iterations,
        objective_trace: trace,
        converged,
    })
}

fn apply_step(state: &State, delta: &[f64], scale: f64) -> State {
    let mut theta = state.theta.clone();
    let mut rotation = state.rotation.clone();
    for v in 0..state.ids.len() {
        let Some(c) = state.col[v] else { continue };
        match state.alignment[v] {
            Some(u) => {
                theta[v] = wrap_radians(theta[v] + scale * delta[c]);
                rotation[v] = u * Rotation3::about_y(theta[v]);
            }
            None => {
                let d = Vector3::new(delta[c], delta[c + 1], delta[c + 2]) * scale;
                rotation[v] = rotation[v] * exp_map(&d);
            }
        }
    }
    State {
        ids: state.ids.clone(),
        alignment: state.alignment.clone(),
        theta,
        rotation,
        col: state.col.clone(),
        dim: state.dim,
    }
}

fn step_magnitude(state: &State, delta: &[f64], scale: f64) -> f64 {
    let mut max = 0.0f64;
    for v in 0..state.ids.len() {
        let Some(c) = state.col[v] else { continue };
        let m = if state.is_gravity(v) {
            delta[c].abs()
        } else {
            Vector3::new(delta[c], delta[c + 1], delta[c + 2]).norm()
        };
        max = max.max(m * scale);
    }
    max
}
