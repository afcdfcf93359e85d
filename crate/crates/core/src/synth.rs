//! Synthetic pose-graph generation: sequential and grid topologies, rotation
//! and gravity noise, outlier injection, gravity interpolation.
//!
//! Generation is a pure function of the config (including the seed). Every
//! random draw flows through per-item substreams derived from the seed, so
//! outputs are identical no matter how the work is scheduled.

use crate::circular::period_and_residual;
use crate::exec;
use crate::geometry::{
    exp_map, gravity_alignment, wrap_radians, GeometryError, Rotation3, UnitVector3,
};
use crate::pose_graph::{PoseGraph, VertexId};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("grid topology requires a perfect square camera count, got {0}")]
    NotAPerfectSquare(usize),
    #[error("grid neighbor count must be (2r+1)^2 - 1 for integer r (8, 24, 48, ...), got {0}")]
    InvalidGridNeighbors(usize),
    #[error("need at least 2 cameras, got {0}")]
    TooFewCameras(usize),
    #[error("fraction {name} = {value} out of range")]
    BadFraction { name: &'static str, value: f64 },
    #[error("noise level {name} = {value} must be >= 0 and finite")]
    BadNoise { name: &'static str, value: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    Sequential,
    Grid,
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Topology::Sequential => write!(f, "sequential"),
            Topology::Grid => write!(f, "grid"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub topology: Topology,
    /// Camera count; must be a perfect square for grid graphs.
    pub n: usize,
    /// Neighbor count: index distance for sequential graphs (split evenly
    /// forward/backward), Chebyshev neighborhood size for grids.
    pub neighbors: usize,
    /// Std dev of the random-axis rotation noise applied to measurements (rad).
    pub rot_noise: f64,
    /// Std dev of the gravity direction tilt (rad).
    pub grav_noise: f64,
    /// Fraction of measurements replaced by uniformly random rotations.
    pub outlier_fraction: f64,
    /// Fraction of cameras keeping their gravity annotation.
    pub gravity_known_fraction: f64,
    /// Gravity interpolation weight: 0 reproduces ground truth exactly,
    /// 1 keeps the noisy measurement, larger values extrapolate the noise.
    pub alpha: f64,
    pub seed: u64,
}

impl SynthConfig {
    /// Defaults matching the benchmark protocols: 20 neighbors sequential,
    /// 24 neighbors grid, clean measurements.
    pub fn new(topology: Topology, n: usize) -> Self {
        let neighbors = match topology {
            Topology::Sequential => 20,
            Topology::Grid => 24,
        };
        Self {
            topology,
            n,
            neighbors,
            rot_noise: 0.0,
            grav_noise: 0.0,
            outlier_fraction: 0.0,
            gravity_known_fraction: 1.0,
            alpha: 1.0,
            seed: 0,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.n < 2 {
            return Err(SynthError::TooFewCameras(self.n));
        }
        for (name, value) in [("rot_noise", self.rot_noise), ("grav_noise", self.grav_noise)] {
            if !value.is_finite() || value < 0.0 {
                return Err(SynthError::BadNoise { name, value });
            }
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(SynthError::BadFraction {
                name: "outlier_fraction",
                value: self.outlier_fraction,
            });
        }
        if !(0.0..=1.0).contains(&self.gravity_known_fraction) {
            return Err(SynthError::BadFraction {
                name: "gravity_known_fraction",
                value: self.gravity_known_fraction,
            });
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(SynthError::BadFraction {
                name: "alpha",
                value: self.alpha,
            });
        }
        Ok(())
    }
}

/// Everything the generator knows that the solver must not see.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub rotations: BTreeMap<VertexId, Rotation3>,
    pub gravities: BTreeMap<VertexId, UnitVector3>,
    /// True period per edge (graph edge order), computed from the clean
    /// measurement at the true angles.
    pub periods: Vec<i32>,
    /// The graph with exact measurements and exact gravity everywhere.
    pub clean_graph: PoseGraph,
}

// Substream domains for per-item rngs.
const DOMAIN_VERTEX: u64 = 1;
const DOMAIN_EDGE_NOISE: u64 = 2;
const DOMAIN_OUTLIER: u64 = 3;
const DOMAIN_GRAVITY: u64 = 4;

fn stream_rng(seed: u64, domain: u64, index: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream((domain << 48) ^ index as u64);
    rng
}

/// Uniform rotation via a normalized Gaussian quaternion.
pub fn random_rotation<R: Rng + ?Sized>(rng: &mut R) -> Rotation3 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| normal.sample(rng));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-6 {
            let q = [q[0] / n, q[1] / n, q[2] / n, q[3] / n];
            return Rotation3::from_quaternion_wxyz(q, 1e-6).expect("normalized");
        }
    }
}

/// Uniform direction on the sphere.
pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R) -> UnitVector3 {
    let normal = Normal::new(0.0, 1.0).unwrap();
    loop {
        let v = Vector3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
        if let Ok(u) = UnitVector3::normalize(v) {
            return u;
        }
    }
}

/// Composes `r` with a rotation of angle `N(0, sigma)` about a uniformly
/// random axis. `sigma = 0` returns the input unchanged.
pub fn perturb_rotation<R: Rng + ?Sized>(r: &Rotation3, sigma: f64, rng: &mut R) -> Rotation3 {
    if sigma == 0.0 {
        return *r;
    }
    let axis = random_unit_vector(rng);
    let angle: f64 = Normal::new(0.0, sigma).unwrap().sample(rng);
    exp_map(&(axis.as_vector() * angle)) * *r
}

/// Tilts `v` by an angle `N(0, sigma)` about a random axis orthogonal to it.
pub fn perturb_direction<R: Rng + ?Sized>(
    v: &UnitVector3,
    sigma: f64,
    rng: &mut R,
) -> UnitVector3 {
    if sigma == 0.0 {
        return *v;
    }
    let axis = loop {
        let raw = random_unit_vector(rng);
        let proj = raw.as_vector() - v.as_vector() * raw.as_vector().dot(v.as_vector());
        if let Ok(u) = UnitVector3::normalize(proj) {
            break u;
        }
    };
    let angle: f64 = Normal::new(0.0, sigma).unwrap().sample(rng);
    let rotated = exp_map(&(axis.as_vector() * angle)).apply(v.as_vector());
    UnitVector3::normalize(rotated).expect("rotation preserves norm")
}

fn topology_edges(config: &SynthConfig) -> Result<Vec<(VertexId, VertexId)>, SynthError> {
    let n = config.n;
    match config.topology {
        Topology::Sequential => {
            let half = (config.neighbors / 2).max(1);
            let mut edges = Vec::new();
            for i in 0..n {
                for d in 1..=half {
                    let j = i + d;
                    if j < n {
                        edges.push((i as VertexId, j as VertexId));
                    }
                }
            }
            Ok(edges)
        }
        Topology::Grid => {
            let side = (n as f64).sqrt().round() as usize;
            if side * side != n {
                return Err(SynthError::NotAPerfectSquare(n));
            }
            // neighbors = (2r+1)^2 - 1 for Chebyshev radius r.
            let radius = (((config.neighbors + 1) as f64).sqrt().round() as usize)
                .saturating_sub(1)
                / 2;
            if radius == 0 || (2 * radius + 1).pow(2) - 1 != config.neighbors {
                return Err(SynthError::InvalidGridNeighbors(config.neighbors));
            }
            let r = radius as isize;
            let s = side as isize;
            let mut edges = Vec::new();
            for row in 0..s {
                for col in 0..s {
                    let a = (row * s + col) as VertexId;
                    for dr in 0..=r {
                        for dc in -r..=r {
                            if dr == 0 && dc <= 0 {
                                continue;
                            }
                            let (nr, nc) = (row + dr, col + dc);
                            if nr < s && (0..s).contains(&nc) {
                                edges.push((a, (nr * s + nc) as VertexId));
                            }
                        }
                    }
                }
            }
            Ok(edges)
        }
    }
}

/// Draws `count` distinct indices from `0..len` (partial Fisher-Yates).
fn sample_indices<R: Rng + ?Sized>(rng: &mut R, len: usize, count: usize) -> BTreeSet<usize> {
    let count = count.min(len);
    let mut pool: Vec<usize> = (0..len).collect();
    for k in 0..count {
        let pick = rng.random_range(k..len);
        pool.swap(k, pick);
    }
    pool.truncate(count);
    pool.into_iter().collect()
}

/// Generates a measurement graph and its ground truth.
pub fn generate(config: &SynthConfig) -> Result<(PoseGraph, GroundTruth), SynthError> {
    config.validate()?;
    let n = config.n;
    let edge_list = topology_edges(config)?;
    let m = edge_list.len();

    // Global subset selections come from the master stream.
    let mut master = ChaCha12Rng::seed_from_u64(config.seed);
    let outlier_count = (config.outlier_fraction * m as f64).round() as usize;
    let outliers = sample_indices(&mut master, m, outlier_count);
    let known_count = (config.gravity_known_fraction * n as f64).round() as usize;
    let known = sample_indices(&mut master, n, known_count);

    // Ground truth: R_i = U_i R_y(theta_i); gravity in the camera frame is
    // then exactly R_i * (0,1,0)^T = U_i * (0,1,0)^T.
    let truth: Vec<(UnitVector3, f64)> = exec::map_indices(n, |i| {
        let mut rng = stream_rng(config.seed, DOMAIN_VERTEX, i);
        let g = random_unit_vector(&mut rng);
        let theta = rng.random_range(-PI..PI);
        (g, theta)
    });
    let rotations: Vec<Rotation3> = truth
        .iter()
        .map(|(g, theta)| gravity_alignment(g) * Rotation3::about_y(*theta))
        .collect();

    // Measurements: exact relative rotation, then noise or outlier.
    let measurements: Vec<(Rotation3, Rotation3)> = exec::map_indices(m, |e| {
        let (i, j) = edge_list[e];
        let clean = rotations[j as usize] * rotations[i as usize].transpose();
        let noisy = if outliers.contains(&e) {
            let mut rng = stream_rng(config.seed, DOMAIN_OUTLIER, e);
            random_rotation(&mut rng)
        } else {
            let mut rng = stream_rng(config.seed, DOMAIN_EDGE_NOISE, e);
            perturb_rotation(&clean, config.rot_noise, &mut rng)
        };
        (clean, noisy)
    });

    // Measured gravity: tilt noise, then interpolation toward ground truth.
    let measured_gravity: Vec<UnitVector3> = exec::map_indices(n, |i| {
        let mut rng = stream_rng(config.seed, DOMAIN_GRAVITY, i);
        let gt = truth[i].0;
        let noisy = perturb_direction(&gt, config.grav_noise, &mut rng);
        let mixed = noisy.as_vector() * config.alpha + gt.as_vector() * (1.0 - config.alpha);
        UnitVector3::normalize(mixed)
    })
    .into_iter()
    .collect::<Result<_, _>>()?;

    let mut graph = PoseGraph::new();
    let mut clean_graph = PoseGraph::new();
    for i in 0..n {
        let id = i as VertexId;
        let gravity = if known.contains(&i) {
            Some(measured_gravity[i])
        } else {
            None
        };
        graph.add_vertex(id, gravity).expect("fresh graph");
        clean_graph.add_vertex(id, Some(truth[i].0)).expect("fresh graph");
    }
    for (e, &(i, j)) in edge_list.iter().enumerate() {
        let (clean, noisy) = measurements[e];
        graph.add_edge(i, j, noisy, 1.0).expect("unique pair");
        clean_graph.add_edge(i, j, clean, 1.0).expect("unique pair");
    }

    let periods: Vec<i32> = edge_list
        .iter()
        .map(|&(i, j)| {
            let d = truth[j as usize].1 - truth[i as usize].1;
            period_and_residual(wrap_radians(d) - d).0
        })
        .collect();

    let gt = GroundTruth {
        rotations: (0..n).map(|i| (i as VertexId, rotations[i])).collect(),
        gravities: (0..n).map(|i| (i as VertexId, truth[i].0)).collect(),
        periods,
        clean_graph,
    };
    Ok((graph, gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::geodesic_distance;
    use approx::assert_abs_diff_eq;
    use rand::rngs::StdRng;

    #[test]
    fn noise_free_grid_satisfies_relative_constraint() {
        let mut cfg = SynthConfig::new(Topology::Grid, 4);
        cfg.neighbors = 24;
        let (graph, gt) = generate(&cfg).unwrap();
        // 2x2 grid: complete within the 24-neighbor cap -> 6 edges.
        assert_eq!(graph.num_edges(), 6);
        for e in graph.edges() {
            let expected = gt.rotations[&e.dst] * gt.rotations[&e.src].transpose();
            assert!(geodesic_distance(&e.rel, &expected).unwrap() < 1e-12);
        }
    }

    #[test]
    fn alpha_zero_reproduces_ground_truth_gravity() {
        let mut cfg = SynthConfig::new(Topology::Sequential, 10);
        cfg.neighbors = 4;
        cfg.grav_noise = 0.1;
        cfg.alpha = 0.0;
        let (graph, gt) = generate(&cfg).unwrap();
        for v in graph.vertices() {
            let g = v.gravity.unwrap();
            assert!(g.angle_to(&gt.gravities[&v.id]) < 1e-12);
        }
    }

    #[test]
    fn sequential_degrees() {
        let cfg = SynthConfig::new(Topology::Sequential, 100);
        let (graph, _) = generate(&cfg).unwrap();
        for v in graph.vertex_ids() {
            let deg = graph.neighbors(v).len();
            if (10..90).contains(&(v as usize)) {
                assert_eq!(deg, 20, "interior vertex {v}");
            } else {
                assert!(deg < 20);
            }
        }
    }

    #[test]
    fn grid_requires_square_and_valid_neighbors() {
        let cfg = SynthConfig::new(Topology::Grid, 15);
        assert!(matches!(
            generate(&cfg),
            Err(SynthError::NotAPerfectSquare(15))
        ));
        let mut cfg = SynthConfig::new(Topology::Grid, 16);
        cfg.neighbors = 10;
        assert!(matches!(
            generate(&cfg),
            Err(SynthError::InvalidGridNeighbors(10))
        ));
    }

    #[test]
    fn perturbation_sigma_zero_is_identity() {
        let mut rng = StdRng::seed_from_u64(1);
        let r = random_rotation(&mut rng);
        let p = perturb_rotation(&r, 0.0, &mut rng);
        assert_eq!(r.matrix(), p.matrix());
        let v = random_unit_vector(&mut rng);
        assert_eq!(v, perturb_direction(&v, 0.0, &mut rng));
    }

    #[test]
    fn perturbation_matches_half_normal_mean() {
        // E |N(0, sigma)| = sigma * sqrt(2/pi); check within 3 standard errors.
        let sigma = 0.1;
        let mut rng = StdRng::seed_from_u64(42);
        let r = random_rotation(&mut rng);
        let draws = 100_000;
        let mean = (0..draws)
            .map(|_| {
                geodesic_distance(&r, &perturb_rotation(&r, sigma, &mut rng)).unwrap()
            })
            .sum::<f64>()
            / draws as f64;
        let expected = sigma * (2.0 / PI).sqrt();
        let se = sigma * (1.0 - 2.0 / PI).sqrt() / (draws as f64).sqrt();
        assert!(
            (mean - expected).abs() < 3.0 * se,
            "mean {mean} vs {expected} (se {se})"
        );
    }

    #[test]
    fn perturbed_direction_stays_unit() {
        let mut rng = StdRng::seed_from_u64(3);
        for _ in 0..100 {
            let v = random_unit_vector(&mut rng);
            let p = perturb_direction(&v, 0.5, &mut rng);
            assert_abs_diff_eq!(p.as_vector().norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn outlier_count_is_exact() {
        let mut cfg = SynthConfig::new(Topology::Sequential, 40);
        cfg.neighbors = 6;
        cfg.outlier_fraction = 0.25;
        cfg.rot_noise = 0.0;
        let (graph, gt) = generate(&cfg).unwrap();
        let m = graph.num_edges();
        let want = (0.25 * m as f64).round() as usize;
        let corrupted = graph
            .edges()
            .iter()
            .zip(gt.clean_graph.edges())
            .filter(|(noisy, clean)| {
                geodesic_distance(&noisy.rel, &clean.rel).unwrap() > 1e-9
            })
            .count();
        assert_eq!(corrupted, want);
    }

    #[test]
    fn ground_truth_periods_zero_residual() {
        let mut cfg = SynthConfig::new(Topology::Grid, 16);
        cfg.neighbors = 8;
        let (_, gt) = generate(&cfg).unwrap();
        let problem = crate::circular::build_problem(&gt.clean_graph).unwrap();
        // The true angle of vertex v in its aligned frame.
        let true_angle = |id: VertexId| {
            let u = gt.clean_graph.vertex(id).unwrap().alignment.unwrap();
            crate::geometry::extract_y_angle(&(u.transpose() * gt.rotations[&id]))
                .0
                .radians()
        };
        for (e, edge) in gt.clean_graph.edges().iter().enumerate() {
            let pe = &problem.edges()[e];
            let res = pe.theta_tilde - (true_angle(edge.dst) - true_angle(edge.src))
                + std::f64::consts::TAU * gt.periods[e] as f64;
            assert!(res.abs() < 1e-9, "edge {e}: residual {res}");
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let mut cfg = SynthConfig::new(Topology::Grid, 25);
        cfg.neighbors = 8;
        cfg.rot_noise = 0.02;
        cfg.grav_noise = 0.01;
        cfg.outlier_fraction = 0.1;
        cfg.gravity_known_fraction = 0.6;
        cfg.seed = 77;
        let (g1, _) = generate(&cfg).unwrap();
        let (g2, _) = generate(&cfg).unwrap();
        assert_eq!(g1.num_edges(), g2.num_edges());
        for (a, b) in g1.edges().iter().zip(g2.edges()) {
            assert_eq!(a.rel.matrix(), b.rel.matrix());
        }
        for (a, b) in g1.vertices().zip(g2.vertices()) {
            assert_eq!(a.gravity.is_some(), b.gravity.is_some());
            if let (Some(ga), Some(gb)) = (&a.gravity, &b.gravity) {
                assert_eq!(ga.as_vector(), gb.as_vector());
            }
        }
    }
}
