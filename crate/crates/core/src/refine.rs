//! Detection and robust re-estimation of error-prone gravity directions.
//!
//! A gravity-aligned relative rotation should be a pure y-rotation; yaw or
//! roll left over after alignment indicts the edge. Each bad edge votes
//! against both endpoints, vertices losing the majority vote get their
//! gravity re-estimated from their neighbors' candidate directions under an
//! Arctan robust loss.

use crate::exec;
use crate::geometry::{extract_y_angle, UnitVector3};
use crate::pose_graph::{PoseGraph, VertexId};
use nalgebra::Vector3;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone)]
pub struct RefineConfig {
    /// Yaw/roll deviation (radians) above which an edge votes against both
    /// endpoints. Default 0.035 (about 2 degrees).
    pub offaxis_threshold: f64,
    /// A vertex is flagged when votes exceed this fraction of its gravity
    /// neighbors. Degree-1 vertices degenerate: a single vote always exceeds
    /// half of one neighbor.
    pub vote_fraction: f64,
    /// Arctan loss scale `a` in `rho(s) = a * atan(s / a)` on squared
    /// residuals of the direction fit.
    pub arctan_scale: f64,
    pub max_iterations: usize,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            offaxis_threshold: 0.035,
            vote_fraction: 0.5,
            arctan_scale: 0.01,
            max_iterations: 50,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RefineReport {
    /// Per-vertex `(votes, gravity-neighbor count)`.
    pub votes: BTreeMap<VertexId, (usize, usize)>,
    pub flagged: BTreeSet<VertexId>,
    /// `(vertex, old gravity, new gravity)` for every refined vertex.
    pub refined: Vec<(VertexId, UnitVector3, UnitVector3)>,
    /// Flagged vertices left unchanged for lack of usable neighbors.
    pub skipped: BTreeSet<VertexId>,
}

/// Detection phase: counts off-axis votes per vertex and flags majorities.
///
/// Edges with a gravity-free endpoint are skipped entirely and excluded from
/// neighbor counts.
pub fn vote(graph: &PoseGraph, config: &RefineConfig) -> RefineReport {
    let offending = exec::map_slice(graph.edges(), |e| {
        let (Some(us), Some(ud)) = (
            graph.vertex(e.src).unwrap().alignment,
            graph.vertex(e.dst).unwrap().alignment,
        ) else {
            return None;
        };
        let aligned = ud.transpose() * e.rel * us;
        let (_, off_axis) = extract_y_angle(&aligned);
        Some((e.src, e.dst, off_axis > config.offaxis_threshold))
    });

    let mut report = RefineReport::default();
    for v in graph.vertices() {
        if v.gravity.is_some() {
            report.votes.insert(v.id, (0, 0));
        }
    }
    for item in offending.into_iter().flatten() {
        let (src, dst, offends) = item;
        for id in [src, dst] {
            let entry = report.votes.get_mut(&id).expect("gravity endpoint");
            entry.1 += 1;
            if offends {
                entry.0 += 1;
            }
        }
    }
    for (&id, &(votes, neighbors)) in &report.votes {
        if neighbors > 0 && (votes as f64) > config.vote_fraction * neighbors as f64 {
            report.flagged.insert(id);
        }
    }
    report
}

/// Candidate gravity directions for `target` from its neighbors: the second
/// column of `rel * U_neighbor` with the measurement oriented toward
/// `target`. Neighbors in `exclude` or without gravity contribute nothing.
fn candidate_directions(
    graph: &PoseGraph,
    target: VertexId,
    exclude: &BTreeSet<VertexId>,
) -> Vec<UnitVector3> {
    graph
        .neighbors(target)
        .into_iter()
        .filter_map(|(nbr, edge)| {
            if exclude.contains(&nbr) {
                return None;
            }
            let u = graph.vertex(nbr)?.alignment?;
            let toward_target = edge.oriented_from(nbr);
            let m = toward_target.matrix() * u.matrix();
            UnitVector3::normalize(Vector3::new(m[(0, 1)], m[(1, 1)], m[(2, 1)])).ok()
        })
        .collect()
}

/// Robust spherical mean under the Arctan loss: iteratively reweighted
/// normalized weighted mean, to convergence 1e-10.
fn robust_direction(candidates: &[UnitVector3], config: &RefineConfig) -> Option<UnitVector3> {
    if candidates.is_empty() {
        return None;
    }
    let mut sum = Vector3::zeros();
    for c in candidates {
        sum += c.as_vector();
    }
    let mut current = UnitVector3::normalize(sum)
        .ok()
        .unwrap_or(candidates[0]);

    let a = config.arctan_scale;
    for _ in 0..config.max_iterations {
        let mut weighted = Vector3::zeros();
        for c in candidates {
            let d = current.angle_to(c);
            let s = d * d;
            let ratio = s / a;
            let w = 1.0 / (1.0 + ratio * ratio);
            weighted += c.as_vector() * w;
        }
        let Ok(next) = UnitVector3::normalize(weighted) else {
            break;
        };
        let moved = current.angle_to(&next);
        current = next;
        if moved < 1e-10 {
            break;
        }
    }
    Some(current)
}

/// Re-estimates the gravity of `target` from all its gravity neighbors.
/// Returns `None` when fewer than two usable candidates exist.
pub fn refine_direction(
    graph: &PoseGraph,
    target: VertexId,
    config: &RefineConfig,
) -> Option<UnitVector3> {
    let candidates = candidate_directions(graph, target, &BTreeSet::new());
    if candidates.len() < 2 {
        return None;
    }
    robust_direction(&candidates, config)
}

/// Full pass: vote, then refine every flagged vertex.
///
/// Candidates come from non-flagged neighbors when at least two exist,
/// falling back to all gravity neighbors otherwise. All refinements read the
/// input graph; there is no cascading re-vote.
pub fn refine_all(graph: &PoseGraph, config: &RefineConfig) -> (PoseGraph, RefineReport) {
    let mut report = vote(graph, config);
    let flagged: Vec<VertexId> = report.flagged.iter().copied().collect();

    let updates = exec::map_slice(&flagged, |&id| {
        let mut candidates = candidate_directions(graph, id, &report.flagged);
        if candidates.len() < 2 {
            candidates = candidate_directions(graph, id, &BTreeSet::new());
        }
        if candidates.len() < 2 {
            return (id, None);
        }
        (id, robust_direction(&candidates, config))
    });

    let mut refined = graph.clone();
    for (id, update) in updates {
        match update {
            Some(new_gravity) => {
                let old = graph.vertex(id).unwrap().gravity.expect("flagged => gravity");
                refined.set_gravity(id, Some(new_gravity)).unwrap();
                report.refined.push((id, old, new_gravity));
            }
            None => {
                report.skipped.insert(id);
            }
        }
    }
    (refined, report)
}
