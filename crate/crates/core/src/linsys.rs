//! Sparse symmetric positive-definite solves for the gauge-reduced normal
//! equations arising in both solvers.
//!
//! The systems are weighted graph Laplacians (scalar unknowns) or their block
//! generalization (mixed scalar / 3-vector unknowns). Factorization is an
//! LDL^T with reverse Cuthill-McKee ordering, which keeps the sequential and
//! grid topologies banded.

use sprs::{CsMat, TriMat};
use sprs_ldl::Ldl;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinSysError {
    #[error("linear system is singular (disconnected graph or rank-deficient constraints)")]
    Singular,
}

/// Solves the weighted least-squares problem over graph differences:
/// minimize `sum_e w_e * (x[j_e] - x[i_e] - b_e)^2` with `x[gauge] = 0`.
///
/// Returns the full-length solution vector including the gauge entry.
pub fn solve_difference_system(
    n: usize,
    gauge: usize,
    edges: &[(usize, usize)],
    weights: &[f64],
    targets: &[f64],
) -> Result<Vec<f64>, LinSysError> {
    assert_eq!(edges.len(), weights.len());
    assert_eq!(edges.len(), targets.len());
    assert!(gauge < n);
    if n == 1 {
        return Ok(vec![0.0]);
    }

    // Column index with the gauge unknown eliminated.
    let col = |v: usize| -> Option<usize> {
        match v.cmp(&gauge) {
            std::cmp::Ordering::Less => Some(v),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(v - 1),
        }
    };

    let m = n - 1;
    let mut tri = TriMat::new((m, m));
    let mut rhs = vec![0.0; m];
    for (e, &(i, j)) in edges.iter().enumerate() {
        let w = weights[e];
        let b = targets[e];
        let ci = col(i);
        let cj = col(j);
        if let Some(ci) = ci {
            tri.add_triplet(ci, ci, w);
            rhs[ci] -= w * b;
        }
        if let Some(cj) = cj {
            tri.add_triplet(cj, cj, w);
            rhs[cj] += w * b;
        }
        if let (Some(ci), Some(cj)) = (ci, cj) {
            tri.add_triplet(ci, cj, -w);
            tri.add_triplet(cj, ci, -w);
        }
    }

    let x = factor_and_solve(tri.to_csc(), &rhs)?;
    let mut full = vec![0.0; n];
    for (v, slot) in full.iter_mut().enumerate() {
        if let Some(c) = col(v) {
            *slot = x[c];
        }
    }
    Ok(full)
}

/// A sparse symmetric system assembled from dense blocks, for the mixed
/// solver's normal equations. Block `(r, c)` adds `values` at the given
/// unknown offsets.
pub struct BlockSystem {
    dim: usize,
    tri: TriMat<f64>,
    rhs: Vec<f64>,
}

impl BlockSystem {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            tri: TriMat::new((dim, dim)),
            rhs: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Adds `block` (rows x cols, row-major) at unknown offsets (`r0`, `c0`).
    pub fn add_block(&mut self, r0: usize, c0: usize, rows: usize, cols: usize, block: &[f64]) {
        debug_assert_eq!(block.len(), rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let v = block[r * cols + c];
                if v != 0.0 {
                    self.tri.add_triplet(r0 + r, c0 + c, v);
                }
            }
        }
    }

    pub fn add_rhs(&mut self, r0: usize, values: &[f64]) {
        for (k, v) in values.iter().enumerate() {
            self.rhs[r0 + k] += v;
        }
    }

    pub fn solve(self) -> Result<Vec<f64>, LinSysError> {
        if self.dim == 0 {
            return Ok(Vec::new());
        }
        factor_and_solve(self.tri.to_csc(), &self.rhs)
    }
}

fn factor_and_solve(mat: CsMat<f64>, rhs: &[f64]) -> Result<Vec<f64>, LinSysError> {
    // The LDL machinery rejects 1x1 systems; solve them directly.
    if mat.rows() == 1 {
        let a: f64 = mat.iter().map(|(v, _)| v).sum();
        if a == 0.0 || !a.is_finite() {
            return Err(LinSysError::Singular);
        }
        return Ok(vec![rhs[0] / a]);
    }
    let ldl = Ldl::new()
        .check_symmetry(sprs::SymmetryCheck::DontCheckSymmetry)
        .fill_in_reduction(sprs::FillInReduction::ReverseCuthillMcKee);
    let factor = ldl.numeric(mat.view()).map_err(|_| LinSysError::Singular)?;
    let d = factor.d();
    if d.iter().any(|&v| v == 0.0 || !v.is_finite()) {
        return Err(LinSysError::Singular);
    }
    Ok(factor.solve(rhs))
}
