//! Anderson Hamiltonians `H = Delta + lambda V^omega` on finite graphs.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::{GraphKind, GraphSpec};
use crate::linalg::{LdlFactor, LdlSymbolic};
use crate::ssd::BumpSsd;

/// Slack allowed when testing eigenvalues against the spectral interval.
pub const SUPPORT_TOLERANCE: f64 = 1e-10;

/// Disorder ensemble at one strength `lambda`.
///
/// Realizations are keyed by `(master_seed, index)` only, so two specs that
/// differ only in `lambda` produce identical potentials: `H_1 - H_2 =
/// (lambda_1 - lambda_2) diag(omega)` realization by realization.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub graph: Arc<GraphSpec>,
    pub ssd: Arc<BumpSsd>,
    pub lambda: f64,
    pub n_realizations: usize,
    pub master_seed: u64,
}

impl EnsembleSpec {
    pub fn new(
        graph: Arc<GraphSpec>,
        ssd: Arc<BumpSsd>,
        lambda: f64,
        n_realizations: usize,
        master_seed: u64,
    ) -> Result<Self> {
        if n_realizations == 0 {
            return Err(invalid("ensemble needs at least one realization"));
        }
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(invalid(format!("disorder strength must be finite and >= 0, got {lambda}")));
        }
        Ok(Self {
            graph,
            ssd,
            lambda,
            n_realizations,
            master_seed,
        })
    }

    /// Same graph, SSD, seed and size at a different strength.
    pub fn at_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(
            self.graph.clone(),
            self.ssd.clone(),
            lambda,
            self.n_realizations,
            self.master_seed,
        )
    }

    /// Rejects strengths outside the configured window `[lambda_0, lambda_0_tilde]`.
    pub fn check_window(&self, lambda_0: f64, lambda_0_tilde: f64) -> Result<()> {
        if self.lambda < lambda_0 || self.lambda > lambda_0_tilde {
            return Err(invalid(format!(
                "lambda = {} outside [{lambda_0}, {lambda_0_tilde}]",
                self.lambda
            )));
        }
        Ok(())
    }

    /// True when `other` shares graph, SSD, seed and ensemble size, i.e. the
    /// realizations of both are the same potentials.
    pub fn is_coupled_with(&self, other: &EnsembleSpec) -> bool {
        Arc::ptr_eq(&self.graph, &other.graph) || self.graph.kind() == other.graph.kind()
    }

    pub fn coupling_mismatch(&self, other: &EnsembleSpec) -> Option<String> {
        if self.master_seed != other.master_seed {
            return Some(format!("master seeds differ ({} vs {})", self.master_seed, other.master_seed));
        }
        if self.n_realizations != other.n_realizations {
            return Some("ensemble sizes differ".into());
        }
        if !self.is_coupled_with(other) {
            return Some("graphs differ".into());
        }
        if self.ssd.params() != other.ssd.params() {
            return Some("single-site distributions differ".into());
        }
        None
    }

    /// Spectral interval `[-r + lambda a, r + lambda b]` with `r` the
    /// finite-graph radius of the adjacency operator.
    pub fn support_interval(&self) -> (f64, f64) {
        let r = self.graph.kind().finite_laplacian_radius();
        let (a, b) = self.ssd.support();
        (-r + self.lambda * a, r + self.lambda * b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisorderRealization {
    pub master_seed: u64,
    pub index: usize,
    pub values: Vec<f64>,
}

/// Potential of realization `index`, drawn vertex by vertex in graph order
/// from stream `index` of a ChaCha8 generator seeded with `master_seed`.
pub fn realize_disorder(spec: &EnsembleSpec, index: usize) -> Result<DisorderRealization> {
    if index >= spec.n_realizations {
        return Err(Error::RealizationOutOfRange {
            index,
            count: spec.n_realizations,
        });
    }
    let mut rng = realization_rng(spec.master_seed, index);
    let values = spec.ssd.sample(&mut rng, spec.graph.vertex_count())?;
    Ok(DisorderRealization {
        master_seed: spec.master_seed,
        index,
        values,
    })
}

pub fn realization_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng
}

/// Real symmetric sparse operator: unit hopping on graph edges plus a
/// diagonal potential. Off-diagonal entries are stored in compressed rows.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    diag: Vec<f64>,
    lambda: f64,
    tridiagonal: bool,
}

pub fn assemble(graph: &GraphSpec, lambda: f64, omega: &DisorderRealization) -> Result<SparseOperator> {
    assemble_from_values(graph, lambda, &omega.values)
}

pub fn assemble_from_values(graph: &GraphSpec, lambda: f64, omega: &[f64]) -> Result<SparseOperator> {
    let n = graph.vertex_count();
    if omega.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: omega.len(),
        });
    }
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let mut col_idx = Vec::with_capacity(2 * graph.edge_count());
    for v in 0..n {
        col_idx.extend_from_slice(graph.neighbors(v));
        row_ptr.push(col_idx.len());
    }
    let values = vec![1.0; col_idx.len()];
    Ok(SparseOperator {
        row_ptr,
        col_idx,
        values,
        diag: omega.iter().map(|w| lambda * w).collect(),
        lambda,
        tridiagonal: graph.is_path_ordered(),
    })
}

impl SparseOperator {
    /// Operator with an arbitrary real symmetric matrix; nonzero
    /// off-diagonal entries define the sparsity pattern.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: m.ncols(),
            });
        }
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && m[(i, j)] != 0.0 {
                    col_idx.push(j);
                    values.push(m[(i, j)]);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Ok(Self {
            row_ptr,
            col_idx,
            values,
            diag: (0..n).map(|i| m[(i, i)]).collect(),
            lambda: 1.0,
            tridiagonal: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn is_tridiagonal(&self) -> bool {
        self.tridiagonal
    }

    /// Off-diagonal of a tridiagonal operator, `None` otherwise.
    pub fn sub_diagonal(&self) -> Option<Vec<f64>> {
        if !self.tridiagonal {
            return None;
        }
        Some(
            (0..self.dim().saturating_sub(1))
                .map(|i| self.entry(i, i + 1))
                .collect(),
        )
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(p) => self.values[self.row_ptr[i] + p],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let mut acc = self.diag[i] * x[i];
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += self.values[p] * x[self.col_idx[p]];
                }
                acc
            })
            .collect()
    }

    pub fn matvec_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim())
            .map(|i| {
                let mut acc = x[i] * self.diag[i];
                for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                    acc += x[self.col_idx[p]] * self.values[p];
                }
                acc
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[p])] = self.values[p];
            }
        }
        m
    }

    /// Gershgorin bound on the spectral radius.
    pub fn gershgorin_bound(&self) -> f64 {
        (0..self.dim())
            .map(|i| {
                self.diag[i].abs()
                    + self.values[self.row_ptr[i]..self.row_ptr[i + 1]]
                        .iter()
                        .map(|v| v.abs())
                        .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Symbolic factorization of `H - z` for the given elimination order.
    pub fn shifted_symbolic(&self, order: &[usize]) -> Result<LdlSymbolic> {
        LdlSymbolic::new(&self.row_ptr, &self.col_idx, order)
    }

    pub fn factor_shifted(&self, symbolic: &LdlSymbolic, ws: &mut LdlFactor, z: Complex64) -> Result<()> {
        symbolic.factor(ws, &self.diag, &self.values, z)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SupportCheck {
    pub passed: bool,
    /// Smallest distance from any eigenvalue to the outside of the interval
    /// (negative when an eigenvalue escapes).
    pub worst_margin: f64,
    pub interval: (f64, f64),
    /// Infinite-lattice interval (`2 sqrt(K)` for trees), informational.
    pub lattice_interval: (f64, f64),
}

/// Verifies every eigenvalue lies in `[-r + lambda a, r + lambda b]`.
pub fn spectrum_support_check(spec: &EnsembleSpec, eigenvalues: &[f64]) -> SupportCheck {
    let interval = spec.support_interval();
    let (a, b) = spec.ssd.support();
    let r_inf = spec.graph.kind().infinite_laplacian_radius();
    let worst_margin = eigenvalues
        .iter()
        .map(|&e| (e - interval.0).min(interval.1 - e))
        .fold(f64::INFINITY, f64::min);
    SupportCheck {
        passed: worst_margin >= -SUPPORT_TOLERANCE,
        worst_margin,
        interval,
        lattice_interval: (-r_inf + spec.lambda * a, r_inf + spec.lambda * b),
    }
}

/// Default `lambda_0`: eight times the coordination number.
pub fn default_lambda_0(kind: GraphKind) -> f64 {
    8.0 * kind.coordination() as f64
}
