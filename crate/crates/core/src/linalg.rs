//! Linear algebra kernels: symmetric tridiagonal eigensolver with single-row
//! eigenvector tracking, sparse complex-symmetric LDL^T for shifted solves,
//! and dense helpers for small matrices.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

const QL_MAX_SWEEPS: usize = 60;

/// Eigenvalues of the symmetric tridiagonal matrix `(diag, off)` together with
/// the `row`-th component of each normalized eigenvector, sorted ascending.
///
/// Implicit QL with Wilkinson-type shifts. Only one row of the eigenvector
/// matrix is carried through the rotations, so the cost is `O(n^2)`.
pub fn tridiagonal_eigen_row(diag: &[f64], off: &[f64], row: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    if n == 0 {
        return Ok((Vec::new(), Vec::new()));
    }
    if off.len() + 1 != n {
        return Err(Error::DimensionMismatch {
            expected: n - 1,
            got: off.len(),
        });
    }
    if row >= n {
        return Err(Error::VertexOutOfRange { index: row, count: n });
    }
    let mut d = diag.to_vec();
    let mut e = Vec::with_capacity(n);
    e.extend_from_slice(off);
    e.push(0.0);
    let mut z = vec![0.0; n];
    z[row] = 1.0;

    for l in 0..n {
        let mut sweeps = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            sweeps += 1;
            if sweeps > QL_MAX_SWEEPS {
                return Err(Error::EigenNonConvergence { realization: None });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                // entries are O(1)..O(1e3) here, so no overflow guard is needed
                r = (f * f + g * g).sqrt();
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                let inv = r.recip();
                s = f * inv;
                c = g * inv;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let zf = z[i + 1];
                z[i + 1] = s * z[i] + c * zf;
                z[i] = c * z[i] - s * zf;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    Ok((idx.iter().map(|&i| d[i]).collect(), idx.iter().map(|&i| z[i]).collect()))
}

/// Eigenvalues and `row` components of eigenvectors of a dense symmetric
/// matrix, sorted ascending.
pub fn dense_eigen_row(matrix: DMatrix<f64>, row: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = matrix.nrows();
    if row >= n {
        return Err(Error::VertexOutOfRange { index: row, count: n });
    }
    let eig = SymmetricEigen::try_new(matrix, f64::EPSILON, 0)
        .ok_or(Error::EigenNonConvergence { realization: None })?;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    Ok((
        idx.iter().map(|&i| eig.eigenvalues[i]).collect(),
        idx.iter().map(|&i| eig.eigenvectors[(row, i)]).collect(),
    ))
}

/// `exp(-i t A)` for real symmetric `A`, by eigendecomposition.
pub fn unitary_propagator(a: &DMatrix<f64>, t: f64) -> DMatrix<Complex64> {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let v = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| Complex64::from_polar(1.0, -t * e)));
    let out = &v * phases * v.transpose();
    debug_assert_eq!(out.nrows(), n);
    out
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<Complex64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// Gauss–Legendre nodes and weights on `[-1, 1]` (Golub–Welsch).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one quadrature node");
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / (4.0 * k * k - 1.0).sqrt()
        })
        .collect();
    let (nodes, first) = tridiagonal_eigen_row(&diag, &off, 0).expect("Jacobi matrix of Legendre weight");
    let weights = first.iter().map(|v| 2.0 * v * v).collect();
    (nodes, weights)
}

/// `LDL^T` of the complex-symmetric tridiagonal `T - z` (no pivoting), for
/// path-ordered operators where the general sparse factorization is
/// overkill.
#[derive(Debug, Clone)]
pub struct TridiagonalLdl {
    diag: Vec<f64>,
    off: Vec<f64>,
    pivots: Vec<Complex64>,
    mult: Vec<Complex64>,
}

impl TridiagonalLdl {
    pub fn new(diag: &[f64], off: &[f64]) -> Result<Self> {
        let n = diag.len();
        if off.len() + 1 != n.max(1) {
            return Err(Error::DimensionMismatch {
                expected: n.saturating_sub(1),
                got: off.len(),
            });
        }
        Ok(Self {
            diag: diag.to_vec(),
            off: off.to_vec(),
            pivots: vec![Complex64::new(0.0, 0.0); n],
            mult: vec![Complex64::new(0.0, 0.0); n.saturating_sub(1)],
        })
    }

    pub fn factor(&mut self, z: Complex64) -> Result<()> {
        let n = self.diag.len();
        let mut piv = self.diag[0] - z;
        for i in 0..n {
            if i > 0 {
                piv = self.diag[i] - z - self.mult[i - 1] * self.off[i - 1];
            }
            if piv.norm_sqr() == 0.0 || !piv.is_finite() {
                return Err(Error::SolverBreakdown(i));
            }
            // stored inverted so the solve only multiplies
            let inv = piv.conj() / piv.norm_sqr();
            self.pivots[i] = inv;
            if i + 1 < n {
                self.mult[i] = inv * self.off[i];
            }
        }
        Ok(())
    }

    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.pivots.len();
        for i in 1..n {
            let prev = b[i - 1];
            b[i] -= self.mult[i - 1] * prev;
        }
        for (v, p) in b.iter_mut().zip(&self.pivots) {
            *v *= p;
        }
        for i in (0..n.saturating_sub(1)).rev() {
            let next = b[i + 1];
            b[i] -= self.mult[i] * next;
        }
    }
}

/// Symbolic analysis for `LDL^T` of a symmetric sparse matrix given by its
/// off-diagonal pattern (compressed rows, both triangles) and an elimination
/// order.
#[derive(Debug, Clone)]
pub struct LdlSymbolic {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    perm: Vec<usize>,
    inv_perm: Vec<usize>,
    parent: Vec<usize>,
    col_start: Vec<usize>,
}

const NONE: usize = usize::MAX;

impl LdlSymbolic {
    pub fn new(row_ptr: &[usize], col_idx: &[usize], perm: &[usize]) -> Result<Self> {
        let n = row_ptr.len().saturating_sub(1);
        if perm.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: perm.len(),
            });
        }
        let mut inv_perm = vec![NONE; n];
        for (k, &p) in perm.iter().enumerate() {
            if p >= n || inv_perm[p] != NONE {
                return Err(Error::InvalidParameter("elimination order is not a permutation".into()));
            }
            inv_perm[p] = k;
        }
        let mut parent = vec![NONE; n];
        let mut flag = vec![NONE; n];
        let mut lnz = vec![0usize; n];
        for k in 0..n {
            flag[k] = k;
            let kk = perm[k];
            for &j in &col_idx[row_ptr[kk]..row_ptr[kk + 1]] {
                let mut i = inv_perm[j];
                if i < k {
                    while flag[i] != k {
                        if parent[i] == NONE {
                            parent[i] = k;
                        }
                        lnz[i] += 1;
                        flag[i] = k;
                        i = parent[i];
                    }
                }
            }
        }
        let mut col_start = Vec::with_capacity(n + 1);
        col_start.push(0);
        for k in 0..n {
            col_start.push(col_start[k] + lnz[k]);
        }
        Ok(Self {
            n,
            row_ptr: row_ptr.to_vec(),
            col_idx: col_idx.to_vec(),
            perm: perm.to_vec(),
            inv_perm,
            parent,
            col_start,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of stored entries of the unit lower factor (fill included).
    pub fn factor_nnz(&self) -> usize {
        self.col_start[self.n]
    }

    pub fn workspace(&self) -> LdlFactor {
        let n = self.n;
        LdlFactor {
            diag: vec![Complex64::new(0.0, 0.0); n],
            li: vec![0; self.factor_nnz()],
            lx: vec![Complex64::new(0.0, 0.0); self.factor_nnz()],
            lnz: vec![0; n],
            y: vec![Complex64::new(0.0, 0.0); n],
            pattern: vec![0; n],
            flag: vec![0; n],
            scratch: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    /// Factor `A - z I` where `A` has diagonal `diag` and off-diagonal values
    /// `values` aligned with the pattern. The factor is written into `ws`.
    pub fn factor(&self, ws: &mut LdlFactor, diag: &[f64], values: &[f64], z: Complex64) -> Result<()> {
        let n = self.n;
        if diag.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: diag.len(),
            });
        }
        let zero = Complex64::new(0.0, 0.0);
        for k in 0..n {
            ws.y[k] = zero;
            let mut top = n;
            ws.flag[k] = k;
            ws.lnz[k] = 0;
            let kk = self.perm[k];
            ws.y[k] += Complex64::new(diag[kk], 0.0) - z;
            for p in self.row_ptr[kk]..self.row_ptr[kk + 1] {
                let mut i = self.inv_perm[self.col_idx[p]];
                if i < k {
                    ws.y[i] += values[p];
                    let mut len = 0;
                    while ws.flag[i] != k {
                        ws.pattern[len] = i;
                        len += 1;
                        ws.flag[i] = k;
                        i = self.parent[i];
                    }
                    while len > 0 {
                        top -= 1;
                        len -= 1;
                        ws.pattern[top] = ws.pattern[len];
                    }
                }
            }
            let mut dk = ws.y[k];
            ws.y[k] = zero;
            while top < n {
                let i = ws.pattern[top];
                top += 1;
                let yi = ws.y[i];
                ws.y[i] = zero;
                let start = self.col_start[i];
                let end = start + ws.lnz[i];
                for p in start..end {
                    let r = ws.li[p];
                    ws.y[r] -= ws.lx[p] * yi;
                }
                let lki = yi / ws.diag[i];
                dk -= lki * yi;
                ws.li[end] = k;
                ws.lx[end] = lki;
                ws.lnz[i] += 1;
            }
            if dk.norm() == 0.0 || !dk.is_finite() {
                return Err(Error::SolverBreakdown(k));
            }
            ws.diag[k] = dk;
        }
        Ok(())
    }

    /// Overwrite `b` with `(A - z I)^{-1} b` using a factor from [`Self::factor`].
    pub fn solve_in_place(&self, ws: &mut LdlFactor, b: &mut [Complex64]) {
        let n = self.n;
        let x = &mut ws.scratch;
        for k in 0..n {
            x[k] = b[self.perm[k]];
        }
        for j in 0..n {
            let xj = x[j];
            if xj == Complex64::new(0.0, 0.0) {
                continue;
            }
            let start = self.col_start[j];
            for p in start..start + ws.lnz[j] {
                x[ws.li[p]] -= ws.lx[p] * xj;
            }
        }
        for j in 0..n {
            x[j] /= ws.diag[j];
        }
        for j in (0..n).rev() {
            let start = self.col_start[j];
            let mut acc = x[j];
            for p in start..start + ws.lnz[j] {
                acc -= ws.lx[p] * x[ws.li[p]];
            }
            x[j] = acc;
        }
        for k in 0..n {
            b[self.perm[k]] = x[k];
        }
    }
}

/// Numeric factor storage, reusable across shifts with the same pattern.
#[derive(Debug, Clone)]
pub struct LdlFactor {
    diag: Vec<Complex64>,
    li: Vec<usize>,
    lx: Vec<Complex64>,
    lnz: Vec<usize>,
    y: Vec<Complex64>,
    pattern: Vec<usize>,
    flag: Vec<usize>,
    scratch: Vec<Complex64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        (&a + a.transpose()) * 0.5
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [1usize, 2, 3, 7, 40] {
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let e: Vec<f64> = (0..n.saturating_sub(1)).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut m = DMatrix::zeros(n, n);
            for i in 0..n {
                m[(i, i)] = d[i];
                if i + 1 < n {
                    m[(i, i + 1)] = e[i];
                    m[(i + 1, i)] = e[i];
                }
            }
            let row = n / 2;
            let (ev, zr) = tridiagonal_eigen_row(&d, &e, row).unwrap();
            let (ev2, zr2) = dense_eigen_row(m, row).unwrap();
            for i in 0..n {
                assert!((ev[i] - ev2[i]).abs() < 1e-12);
                assert!((zr[i] * zr[i] - zr2[i] * zr2[i]).abs() < 1e-12);
            }
            let total: f64 = zr.iter().map(|v| v * v).sum();
            assert!((total - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn path_of_three() {
        let (ev, z) = tridiagonal_eigen_row(&[0.0; 3], &[1.0, 1.0], 1).unwrap();
        let s = 2f64.sqrt();
        assert!((ev[0] + s).abs() < 1e-14 && ev[1].abs() < 1e-14 && (ev[2] - s).abs() < 1e-14);
        let w: Vec<f64> = z.iter().map(|v| v * v).collect();
        assert!((w[0] - 0.5).abs() < 1e-14 && w[1].abs() < 1e-14 && (w[2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(8);
        for deg in 0..16 {
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((q - exact).abs() < 1e-14, "degree {deg}: {q} vs {exact}");
        }
    }

    fn csr_of(m: &DMatrix<f64>) -> (Vec<usize>, Vec<usize>, Vec<f64>, Vec<f64>) {
        let n = m.nrows();
        let (mut rp, mut ci, mut vals) = (vec![0], vec![], vec![]);
        for i in 0..n {
            for j in 0..n {
                if i != j && m[(i, j)] != 0.0 {
                    ci.push(j);
                    vals.push(m[(i, j)]);
                }
            }
            rp.push(ci.len());
        }
        (rp, ci, vals, (0..n).map(|i| m[(i, i)]).collect())
    }

    #[test]
    fn ldl_solves_shifted_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 12;
        let mut m = random_symmetric(n, &mut rng);
        // sparsify
        for i in 0..n {
            for j in 0..i {
                if rng.gen_bool(0.6) {
                    m[(i, j)] = 0.0;
                    m[(j, i)] = 0.0;
                }
            }
        }
        let (rp, ci, vals, diag) = csr_of(&m);
        let mut order: Vec<usize> = (0..n).collect();
        order.reverse();
        let sym = LdlSymbolic::new(&rp, &ci, &order).unwrap();
        let mut ws = sym.workspace();
        for z in [Complex64::new(0.3, 1e-3), Complex64::new(-2.0, 0.5)] {
            sym.factor(&mut ws, &diag, &vals, z).unwrap();
            let b: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen(), rng.gen())).collect();
            let mut x = b.clone();
            sym.solve_in_place(&mut ws, &mut x);
            let a = m.map(|v| Complex64::new(v, 0.0)) - DMatrix::identity(n, n) * z;
            let r = a * DVector::from_vec(x) - DVector::from_vec(b);
            assert!(r.norm() < 1e-10, "residual {}", r.norm());
        }
    }

    #[test]
    fn tridiagonal_ldl_matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 40;
        let diag: Vec<f64> = (0..n).map(|_| rng.gen_range(-16.0..16.0)).collect();
        let off = vec![1.0; n - 1];
        let mut t = TridiagonalLdl::new(&diag, &off).unwrap();
        let mut m = DMatrix::<Complex64>::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(diag[i], 0.0);
            if i + 1 < n {
                m[(i, i + 1)] = Complex64::new(1.0, 0.0);
                m[(i + 1, i)] = Complex64::new(1.0, 0.0);
            }
        }
        for z in [Complex64::new(0.1, 1e-3), Complex64::new(5.0, 2.0)] {
            t.factor(z).unwrap();
            let b: Vec<Complex64> = (0..n).map(|_| Complex64::new(rng.gen(), rng.gen())).collect();
            let mut x = b.clone();
            t.solve_in_place(&mut x);
            let a = &m - DMatrix::identity(n, n) * z;
            let r = a * DVector::from_vec(x) - DVector::from_vec(b);
            assert!(r.norm() < 1e-9, "residual {}", r.norm());
        }
        let mut single = TridiagonalLdl::new(&[2.0], &[]).unwrap();
        single.factor(Complex64::new(0.0, 1.0)).unwrap();
        let mut x = [Complex64::new(1.0, 0.0)];
        single.solve_in_place(&mut x);
        assert!((x[0] - Complex64::new(2.0, -1.0).inv()).norm() < 1e-15);
    }

    #[test]
    fn propagator_is_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let a = random_symmetric(6, &mut rng);
        let u = unitary_propagator(&a, 1.7);
        let eye = DMatrix::<Complex64>::identity(6, 6);
        assert!(operator_norm(&(&u * u.adjoint() - eye)) < 1e-13);
    }
}
