//! Evaluation metrics: gauge alignment against ground truth, geodesic errors,
//! AUC at angular thresholds, error CDFs, the gravity upper bound, and the
//! period correct-ratio diagnostic.

use crate::circular::{self, SolveReport};
use crate::exec;
use crate::geometry::{
    closest_y_rotation, exp_map, extract_y_angle, geodesic_distance, log_map, wrap_radians,
    Rotation3, UnitVector3,
};
use crate::pose_graph::{PoseGraph, VertexId};
use nalgebra::{Matrix3, Vector3};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::TAU;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("estimates and ground truth share no vertex")]
    EmptyOverlap,
    #[error("no errors to integrate")]
    EmptyErrors,
    #[error("threshold must be positive, got {0}")]
    BadThreshold(f64),
    #[error(transparent)]
    Solve(#[from] circular::SolveError),
    #[error(transparent)]
    Geometry(#[from] crate::geometry::GeometryError),
}

/// Cauchy scale (radians) for the gauge alignment fit.
pub const ALIGN_CAUCHY_SCALE: f64 = 0.1;
const ALIGN_TOL: f64 = 1e-10;
const ALIGN_MAX_ITERS: usize = 100;

#[derive(Debug, Clone)]
pub struct EvalReport {
    /// Per-vertex geodesic error after gauge alignment, ascending id.
    pub per_vertex: Vec<(VertexId, f64)>,
    pub mean: f64,
    pub median: f64,
    /// `(threshold_radians, score in [0, 100])` pairs.
    pub auc: Vec<(f64, f64)>,
    /// Sorted `(error, cumulative fraction)` samples.
    pub cdf: Vec<(f64, f64)>,
    /// Smallest achievable error per vertex under the measured gravity.
    pub gravity_bound: Option<Vec<(VertexId, f64)>>,
    pub period_correct_ratio: Option<f64>,
}

/// The global rotation `S` minimizing the Cauchy-robustified geodesic
/// distance between `estimate * S` and ground truth over common vertices.
///
/// `S` acts on the gauge side: relative constraints `R_ij = R_j R_i^T` are
/// invariant under `R_i -> R_i * G`, so the alignment composes on the right.
/// Initialized at the chordal mean of `est^T * gt`, then refined by IRLS on
/// the rotation manifold. Deterministic.
pub fn align(
    estimates: &BTreeMap<VertexId, Rotation3>,
    ground_truth: &BTreeMap<VertexId, Rotation3>,
) -> Result<Rotation3, EvalError> {
    let common: Vec<(&Rotation3, &Rotation3)> = estimates
        .iter()
        .filter_map(|(id, est)| ground_truth.get(id).map(|gt| (est, gt)))
        .collect();
    if common.is_empty() {
        return Err(EvalError::EmptyOverlap);
    }

    let mut sum = Matrix3::zeros();
    for (est, gt) in &common {
        sum += est.matrix().transpose() * gt.matrix();
    }
    let mut s = Rotation3::nearest_rotation(&sum)?;

    let scale2 = ALIGN_CAUCHY_SCALE * ALIGN_CAUCHY_SCALE;
    for _ in 0..ALIGN_MAX_ITERS {
        let mut num = Vector3::zeros();
        let mut den = 0.0;
        for (est, gt) in &common {
            let e = log_map(&((**est * s).transpose() * **gt));
            let w = 1.0 / (1.0 + e.norm_squared() / scale2);
            num += e * w;
            den += w;
        }
        let step = num / den;
        s = s * exp_map(&step);
        if step.norm() < ALIGN_TOL {
            break;
        }
    }
    Ok(s)
}

/// Geodesic error per vertex between the aligned estimates and ground truth.
pub fn rotation_errors(
    alignment: &Rotation3,
    estimates: &BTreeMap<VertexId, Rotation3>,
    ground_truth: &BTreeMap<VertexId, Rotation3>,
) -> Vec<(VertexId, f64)> {
    let common: Vec<(VertexId, Rotation3, Rotation3)> = estimates
        .iter()
        .filter_map(|(&id, est)| ground_truth.get(&id).map(|gt| (id, *est, *gt)))
        .collect();
    exec::map_slice(&common, |(id, est, gt)| {
        let err = geodesic_distance(&(*est * *alignment), gt).expect("valid rotations");
        (*id, err)
    })
}

/// AUC of the error-recall curve up to `threshold`, scaled to `[0, 100]`.
///
/// Exact integration of the recall step function:
/// `100 / (n * tau) * sum_i max(0, tau - e_i)`.
pub fn auc(errors: &[f64], threshold: f64) -> Result<f64, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptyErrors);
    }
    if !(threshold > 0.0) {
        return Err(EvalError::BadThreshold(threshold));
    }
    let total: f64 = errors.iter().map(|&e| (threshold - e).max(0.0)).sum();
    Ok(100.0 * total / (errors.len() as f64 * threshold))
}

/// Sorted `(error, cumulative fraction)` pairs.
pub fn cdf_samples(errors: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, e)| (e, (i + 1) as f64 / n))
        .collect()
}

pub fn mean(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().sum::<f64>() / errors.len() as f64
}

pub fn median(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 0 {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    } else {
        sorted[n / 2]
    }
}

/// Per-vertex lower bound on the error of any estimate forced to respect the
/// measured gravity: the geodesic distance from the true rotation to the
/// closest `U_i * R_y(theta)`.
pub fn gravity_bound(
    ground_truth: &BTreeMap<VertexId, Rotation3>,
    gravities: &BTreeMap<VertexId, UnitVector3>,
) -> Vec<(VertexId, f64)> {
    let items: Vec<(VertexId, Rotation3, UnitVector3)> = ground_truth
        .iter()
        .filter_map(|(&id, r)| gravities.get(&id).map(|g| (id, *r, *g)))
        .collect();
    exec::map_slice(&items, |(id, r_gt, g)| {
        let u = crate::geometry::gravity_alignment(g);
        let (_, bound) = closest_y_rotation(&(u.transpose() * *r_gt));
        (*id, bound)
    })
}

/// Fraction of edges whose estimated period matches the ground-truth period.
///
/// Ground-truth rotations are gauge-aligned to the estimate, their angles are
/// extracted in the measured gravity frames and shifted within `pi` of the
/// estimated angles, and the reference period is the optimal period at those
/// adjusted angles.
pub fn period_correct_ratio(
    report: &SolveReport,
    ground_truth: &BTreeMap<VertexId, Rotation3>,
    graph: &PoseGraph,
) -> Result<f64, EvalError> {
    if report.periods.is_empty() {
        return Err(EvalError::EmptyErrors);
    }
    // Align ground truth onto the estimated rotations.
    let estimates: BTreeMap<VertexId, Rotation3> = report
        .thetas
        .iter()
        .map(|(&id, t)| {
            let u = graph.vertex(id).unwrap().alignment.expect("gravity");
            (id, u * Rotation3::about_y(t.radians()))
        })
        .collect();
    let s = align(ground_truth, &estimates)?;

    // Adjusted ground-truth angle per vertex: within pi of the estimate.
    let adjusted: HashMap<VertexId, f64> = report
        .thetas
        .iter()
        .map(|(&id, t)| {
            let u = graph.vertex(id).unwrap().alignment.expect("gravity");
            let aligned_gt = u.transpose() * (ground_truth[&id] * s);
            let (gt_angle, _) = extract_y_angle(&aligned_gt);
            let est = t.radians();
            (id, est + wrap_radians(gt_angle.radians() - est))
        })
        .collect();

    let problem = circular::build_problem(graph)?;
    let theta_tilde: HashMap<(VertexId, VertexId), f64> = problem
        .edges()
        .iter()
        .map(|e| {
            (
                (
                    problem.vertex_ids()[e.src],
                    problem.vertex_ids()[e.dst],
                ),
                e.theta_tilde,
            )
        })
        .collect();

    let mut matches = 0usize;
    for &(src, dst, k_est) in &report.periods {
        let tilde = theta_tilde[&(src, dst)];
        let raw = tilde - (adjusted[&dst] - adjusted[&src]);
        let k_gt = (wrap_radians(raw) - raw) / TAU;
        if k_gt.round() as i32 == k_est {
            matches += 1;
        }
    }
    Ok(matches as f64 / report.periods.len() as f64)
}

/// Runs the full metric suite. `graph` enables the gravity bound (measured
/// gravities) and, together with `report`, the period correct-ratio.
pub fn evaluate(
    estimates: &BTreeMap<VertexId, Rotation3>,
    ground_truth: &BTreeMap<VertexId, Rotation3>,
    thresholds: &[f64],
    graph: Option<&PoseGraph>,
    report: Option<&SolveReport>,
) -> Result<EvalReport, EvalError> {
    let s = align(estimates, ground_truth)?;
    let per_vertex = rotation_errors(&s, estimates, ground_truth);
    let errors: Vec<f64> = per_vertex.iter().map(|&(_, e)| e).collect();
    let auc_scores = thresholds
        .iter()
        .map(|&t| auc(&errors, t).map(|score| (t, score)))
        .collect::<Result<Vec<_>, _>>()?;

    let gravity = graph.map(|g| {
        let gravities: BTreeMap<VertexId, UnitVector3> = g
            .vertices()
            .filter_map(|v| v.gravity.map(|grav| (v.id, grav)))
            .collect();
        gravity_bound(ground_truth, &gravities)
    });

    let ratio = match (graph, report) {
        (Some(g), Some(r)) if g.has_full_gravity() => {
            Some(period_correct_ratio(r, ground_truth, g)?)
        }
        _ => None,
    };

    Ok(EvalReport {
        mean: mean(&errors),
        median: median(&errors),
        auc: auc_scores,
        cdf: cdf_samples(&errors),
        per_vertex,
        gravity_bound: gravity,
        period_correct_ratio: ratio,
    })
}
