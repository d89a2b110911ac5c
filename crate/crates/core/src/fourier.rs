//! Characteristic functions of the density-of-states measure and the
//! split-integral reconstruction of IDS derivatives.
//!
//! Conventions: `nu_hat(t) = int e^{-itx} d nu(x)` and
//! `g^{(k)}(x) = (1/2pi) int (it)^k e^{itx} nu_hat(t) dt`.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::{gauss_legendre, operator_norm, unitary_propagator};
use crate::operator::EnsembleSpec;
use crate::spectral::{SpectralEnsemble, SpectralSample};
use crate::stats::{complex_mean_stderr, fit_line, LineFit};

/// Atoms lighter than this are dropped from the time sums.
const WEIGHT_FLOOR: f64 = 1e-20;

/// Steps between exact re-evaluations of the phase recurrence.
const REANCHOR: usize = 32;

/// Uniform grid `t_n = n dt`, `n = -n_pos..=n_pos`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub dt: f64,
    pub n_pos: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, t_max: f64) -> Result<Self> {
        if !(dt > 0.0) || !(t_max >= dt) {
            return Err(invalid("time grid needs 0 < dt <= t_max"));
        }
        Ok(Self {
            dt,
            n_pos: (t_max / dt + 1e-9).floor() as usize,
        })
    }

    /// `dt = 2pi / (8 |J|)` and `T = 4 A_max` with `A_max = min_gap^{-1/m}`.
    pub fn for_window(window_width: f64, min_gap: f64, m: usize) -> Result<Self> {
        if !(window_width > 0.0) || !(min_gap > 0.0) || m == 0 {
            return Err(invalid("time grid needs positive window, gap and m"));
        }
        let a_max = min_gap.powf(-1.0 / m as f64);
        Self::new(2.0 * PI / (8.0 * window_width), 4.0 * a_max)
    }

    pub fn t_max(&self) -> f64 {
        self.n_pos as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        2 * self.n_pos + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn points(&self) -> Vec<f64> {
        let n = self.n_pos as i64;
        (-n..=n).map(|i| i as f64 * self.dt).collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CharFunctionSamples {
    pub grid: TimeGrid,
    pub t: Vec<f64>,
    pub values: Vec<Complex64>,
    pub std_error: Vec<f64>,
    pub lambda: f64,
    pub master_seed: u64,
    pub n_realizations: usize,
}

impl CharFunctionSamples {
    /// Index of `t = 0`.
    pub fn zero_index(&self) -> usize {
        self.grid.n_pos
    }

    /// `(t, nu_hat, stderr)` for `t >= 0`.
    pub fn positive_half(&self) -> (&[f64], &[Complex64], &[f64]) {
        let z = self.zero_index();
        (&self.t[z..], &self.values[z..], &self.std_error[z..])
    }

    /// Largest deviation from `nu_hat(0) = 1`, conjugate symmetry and
    /// `|nu_hat| <= 1`.
    pub fn invariant_defect(&self) -> f64 {
        let z = self.zero_index();
        let mut worst = (self.values[z] - Complex64::new(1.0, 0.0)).norm();
        for i in 1..=self.grid.n_pos {
            worst = worst.max((self.values[z + i] - self.values[z - i].conj()).norm());
        }
        for v in &self.values {
            worst = worst.max(v.norm() - 1.0);
        }
        worst
    }
}

/// `sum_j w_j e^{-i t_n E_j}` for `t_n = n dt`, `n = 0..=n_pos`.
fn realization_transform(sample: &SpectralSample, dt: f64, n_pos: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); n_pos + 1];
    for (&e, &w) in sample.eigenvalues.iter().zip(&sample.weights) {
        if w < WEIGHT_FLOOR {
            continue;
        }
        let step = Complex64::from_polar(1.0, -dt * e);
        let mut p = Complex64::new(w, 0.0);
        for (n, slot) in out.iter_mut().enumerate() {
            *slot += p;
            if (n + 1) % REANCHOR == 0 {
                p = Complex64::from_polar(w, -((n + 1) as f64) * dt * e);
            } else {
                p *= step;
            }
        }
    }
    out[0] = Complex64::new(sample.weights.iter().sum(), 0.0);
    out
}

/// Ensemble characteristic function on a symmetric grid; negative times
/// by conjugation.
pub fn char_function(ensemble: &SpectralEnsemble, grid: TimeGrid) -> Result<CharFunctionSamples> {
    if ensemble.is_empty() {
        return Err(invalid("empty ensemble"));
    }
    let rows: Vec<Vec<Complex64>> = ensemble
        .samples
        .par_iter()
        .map(|s| realization_transform(s, grid.dt, grid.n_pos))
        .collect();
    let n = grid.n_pos;
    let mut pos_vals = Vec::with_capacity(n + 1);
    let mut pos_se = Vec::with_capacity(n + 1);
    let mut col = vec![Complex64::new(0.0, 0.0); rows.len()];
    for i in 0..=n {
        for (c, r) in col.iter_mut().zip(&rows) {
            *c = r[i];
        }
        let (m, se) = complex_mean_stderr(&col);
        pos_vals.push(m);
        pos_se.push(se);
    }
    let values: Vec<Complex64> = pos_vals[1..]
        .iter()
        .rev()
        .map(|v| v.conj())
        .chain(pos_vals.iter().copied())
        .collect();
    let std_error: Vec<f64> = pos_se[1..].iter().rev().chain(pos_se.iter()).copied().collect();
    Ok(CharFunctionSamples {
        grid,
        t: grid.points(),
        values,
        std_error,
        lambda: ensemble.lambda,
        master_seed: ensemble.master_seed,
        n_realizations: ensemble.len(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DuhamelBoundReport {
    pub lambda_1: f64,
    pub lambda_2: f64,
    /// `M = max(|a|, |b|)`.
    pub m_bound: f64,
    /// `sup_t |nu_1 - nu_2| / (M |lambda_1 - lambda_2| |t|)` over `t != 0`.
    pub ratio: f64,
    /// Grid points with `|nu_1 - nu_2| > M |dl| |t| + tol`.
    pub violations: usize,
    pub max_excess: f64,
    pub tolerance: f64,
}

impl DuhamelBoundReport {
    pub fn holds(&self) -> bool {
        self.violations == 0
    }
}

fn check_chf_matches(spec: &EnsembleSpec, chf: &CharFunctionSamples) -> Result<()> {
    if spec.lambda != chf.lambda
        || spec.master_seed != chf.master_seed
        || spec.n_realizations != chf.n_realizations
    {
        return Err(invalid("characteristic function does not come from the given ensemble"));
    }
    Ok(())
}

/// Pointwise check of `|nu_1(t) - nu_2(t)| <= M |lambda_1 - lambda_2| |t|`
/// for two ensembles sharing their disorder.
pub fn duhamel_bound_check(
    spec_1: &EnsembleSpec,
    chf_1: &CharFunctionSamples,
    spec_2: &EnsembleSpec,
    chf_2: &CharFunctionSamples,
    tolerance: f64,
) -> Result<DuhamelBoundReport> {
    if let Some(why) = spec_1.coupling_mismatch(spec_2) {
        return Err(Error::Uncoupled(why));
    }
    check_chf_matches(spec_1, chf_1)?;
    check_chf_matches(spec_2, chf_2)?;
    if chf_1.grid != chf_2.grid {
        return Err(invalid("characteristic functions on different time grids"));
    }
    let m_bound = spec_1.ssd.abs_bound();
    let dl = (spec_1.lambda - spec_2.lambda).abs();
    let (mut ratio, mut violations, mut max_excess) = (0.0f64, 0usize, f64::NEG_INFINITY);
    for ((t, a), b) in chf_1.t.iter().zip(&chf_1.values).zip(&chf_2.values) {
        let diff = (a - b).norm();
        let bound = m_bound * dl * t.abs();
        if bound > 0.0 {
            ratio = ratio.max(diff / bound);
        }
        let excess = diff - bound;
        max_excess = max_excess.max(excess);
        if excess > tolerance {
            violations += 1;
        }
    }
    Ok(DuhamelBoundReport {
        lambda_1: spec_1.lambda,
        lambda_2: spec_2.lambda,
        m_bound,
        ratio,
        violations,
        max_excess,
        tolerance,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub m: usize,
    /// `sup |t|^{m-1} |nu_hat(t)|` over `|t| in [T/4, T]`.
    pub tail_sup: f64,
    /// `sup |t|^{m-1} |nu_hat(t)|` over the valid window.
    pub profile_sup: f64,
    /// `profile_sup / bound_factor`.
    pub implied_constant: f64,
    /// `[t_lo, t_hi]`: from the profile maximum to the first time the
    /// transform drops below three standard errors.
    pub valid_window: (f64, f64),
    pub window_points: usize,
    /// Fit of `log |nu_hat|` against `log t` over the valid window.
    pub fit: Option<LineFit>,
    /// Slope of `log (t^{m-1} |nu_hat|)`, i.e. `fit.slope + m - 1`.
    pub profile_slope: f64,
    /// No significant growth of the profile (one-sided, 95%).
    pub no_growth: bool,
    /// Set when the window is too short or the profile still grows at `T`.
    pub flag: Option<String>,
}

/// Decay of `|t|^{m-1} |nu_hat(t)|` on the positive half of the grid.
pub fn decay_profile(chf: &CharFunctionSamples, m: usize, bound_factor: f64) -> Result<DecayReport> {
    let (t, vals, se) = chf.positive_half();
    if t.len() < 2 {
        return Err(invalid("decay window is empty"));
    }
    let p = m as i32 - 1;
    let profile: Vec<f64> = t.iter().zip(vals).map(|(t, v)| t.powi(p) * v.norm()).collect();
    let t_max = *t.last().unwrap();
    let tail_sup = t
        .iter()
        .zip(&profile)
        .filter(|(t, _)| **t >= 0.25 * t_max)
        .map(|(_, v)| *v)
        .fold(0.0, f64::max);
    let end = (1..t.len())
        .find(|&i| vals[i].norm() < 3.0 * se[i])
        .unwrap_or(t.len());
    let start = (1..end)
        .max_by(|&a, &b| profile[a].total_cmp(&profile[b]))
        .unwrap_or(1);
    let mut flag = None;
    if start + 1 >= end && end == t.len() {
        flag = Some("profile still growing at T: measure not decaying on the grid".to_string());
    } else if end - start < 4 {
        flag = Some(format!(
            "valid window [{:.4}, {:.4}] has fewer than 4 points",
            t[start],
            t[end - 1]
        ));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = (start..end)
        .filter(|&i| vals[i].norm() > 0.0)
        .map(|i| (t[i].ln(), vals[i].norm().ln()))
        .unzip();
    let fit = if lx.len() >= 3 { fit_line(&lx, &ly, None) } else { None };
    let profile_slope = fit.map(|f| f.slope + (m as f64 - 1.0)).unwrap_or(f64::NAN);
    let no_growth = fit
        .map(|f| f.slope + (m as f64 - 1.0) - f.slope_ci(0.9) <= 0.0)
        .unwrap_or(false);
    let profile_sup = profile[start..end].iter().cloned().fold(0.0, f64::max);
    Ok(DecayReport {
        m,
        tail_sup,
        profile_sup,
        implied_constant: profile_sup / bound_factor,
        valid_window: (t[start], t[end - 1]),
        window_points: end - start,
        fit,
        profile_slope,
        no_growth,
        flag,
    })
}

/// `(1/2pi) int_{|t| <= cutoff} (it)^k e^{itx} phi(t) taper(t) dt` by the
/// trapezoid rule, for `phi` given on the positive half of a symmetric
/// grid with `phi(-t) = conj(phi(t))`.
pub fn inverse_transform(
    t: &[f64],
    phi: &[Complex64],
    k: usize,
    xs: &[f64],
    cutoff: f64,
    gaussian_taper: Option<f64>,
) -> Vec<f64> {
    let last = t.iter().rposition(|&s| s <= cutoff * (1.0 + 1e-12)).unwrap_or(0);
    let dt = if t.len() > 1 { t[1] - t[0] } else { 0.0 };
    let terms: Vec<Complex64> = (0..=last)
        .map(|n| {
            let w = if n == last && n > 0 { 0.5 } else { 1.0 };
            let taper = gaussian_taper.map(|s| (-0.5 * (s * t[n]).powi(2)).exp()).unwrap_or(1.0);
            Complex64::new(0.0, t[n]).powu(k as u32) * phi[n] * (w * taper)
        })
        .collect();
    xs.par_iter()
        .map(|&x| {
            // the negative half contributes the complex conjugate
            let mut acc = 0.0;
            for (n, c) in terms.iter().enumerate().skip(1) {
                acc += (c * Complex64::from_polar(1.0, t[n] * x)).re;
            }
            dt * (2.0 * acc + terms[0].re) / (2.0 * PI)
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct Reconstruction {
    pub k: usize,
    pub split_point: f64,
    /// `g_1^{(k)} - g_2^{(k)}` from `|t| <= A` on the x grid.
    pub difference: Vec<f64>,
    /// `sup_x |difference|`.
    pub sup_difference: f64,
    /// Bound on the discarded `|t| > A` part from the decay constant.
    pub tail_bound: f64,
}

/// Split-integral reconstruction of `g_1^{(k)} - g_2^{(k)}`: the low
/// frequency part is integrated, the high frequency part is bounded by
/// `(2C/pi) A^{k-m+2}/(m-k-2)` with `C` the decay constant of the profiles.
pub fn reconstruct_derivative(
    chf_1: &CharFunctionSamples,
    chf_2: &CharFunctionSamples,
    k: usize,
    m: usize,
    xs: &[f64],
    split_point: f64,
    decay_constant: f64,
) -> Result<Reconstruction> {
    if k + 2 >= m {
        return Err(invalid(format!("derivative order k={k} requires k < m-2 (m={m})")));
    }
    if chf_1.grid != chf_2.grid {
        return Err(invalid("characteristic functions on different time grids"));
    }
    if !(split_point > 0.0) || split_point > chf_1.grid.t_max() * (1.0 + 1e-12) {
        return Err(invalid(format!(
            "split point {split_point} outside (0, T = {}]",
            chf_1.grid.t_max()
        )));
    }
    let (t, a, _) = chf_1.positive_half();
    let (_, b, _) = chf_2.positive_half();
    let diff: Vec<Complex64> = a.iter().zip(b).map(|(a, b)| a - b).collect();
    let difference = inverse_transform(t, &diff, k, xs, split_point, None);
    let sup_difference = difference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let e = (m - k - 2) as f64;
    let tail_bound = 2.0 * decay_constant / PI * split_point.powf(-e) / e;
    Ok(Reconstruction {
        k,
        split_point,
        difference,
        sup_difference,
        tail_bound,
    })
}

fn is_symmetric(a: &DMatrix<f64>) -> bool {
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    a.nrows() == a.ncols() && (a - a.transpose()).iter().all(|v| v.abs() <= 1e-12 * scale)
}

/// Operator-norm residual of
/// `e^{-itA} - e^{-itB} = int_0^t e^{-i(t-s)A} i(B-A) e^{-isB} ds`
/// with the integral by `n_quad`-point Gauss–Legendre.
pub fn duhamel_identity_check(a: &DMatrix<f64>, b: &DMatrix<f64>, t: f64, n_quad: usize) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    if !is_symmetric(a) || !is_symmetric(b) {
        return Err(invalid("Duhamel identity needs symmetric matrices"));
    }
    if n_quad < 2 {
        return Err(invalid("need at least two quadrature nodes"));
    }
    let lhs = unitary_propagator(a, t) - unitary_propagator(b, t);
    let coupling = (b - a).map(|v| Complex64::new(0.0, v));
    let (nodes, weights) = gauss_legendre(n_quad);
    let n = a.nrows();
    let mut rhs = DMatrix::<Complex64>::zeros(n, n);
    for (x, w) in nodes.iter().zip(&weights) {
        let s = 0.5 * t * (x + 1.0);
        let term = unitary_propagator(a, t - s) * &coupling * unitary_propagator(b, s);
        rhs += term * Complex64::new(0.5 * t * w, 0.0);
    }
    Ok(operator_norm(&(lhs - rhs)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphSpec;
    use crate::operator::assemble_from_values;
    use crate::spectral::local_spectral_sample;

    fn ens_of(samples: Vec<SpectralSample>) -> SpectralEnsemble {
        SpectralEnsemble {
            lambda: 1.0,
            master_seed: 0,
            samples,
        }
    }

    #[test]
    fn single_atom_is_pure_phase() {
        let e0 = 1.7;
        let ens = ens_of(vec![SpectralSample {
            index: 0,
            eigenvalues: vec![e0],
            weights: vec![1.0],
        }]);
        let grid = TimeGrid::new(0.01, 20.0).unwrap();
        let chf = char_function(&ens, grid).unwrap();
        for (t, v) in chf.t.iter().zip(&chf.values) {
            assert!((v - Complex64::from_polar(1.0, -t * e0)).norm() < 1e-13);
        }
        assert!(chf.invariant_defect() < 1e-13);
        let rep = decay_profile(&chf, 4, 1.0).unwrap();
        assert!(rep.flag.is_some());
    }

    #[test]
    fn free_path_matches_matrix_exponential() {
        let g = GraphSpec::build_box(1, 15).unwrap();
        let h = assemble_from_values(&g, 0.0, &[0.0; 15]).unwrap();
        let s = local_spectral_sample(&h, 7).unwrap();
        let grid = TimeGrid::new(0.05, 10.0).unwrap();
        let chf = char_function(&ens_of(vec![s]), grid).unwrap();
        let dense = h.to_dense();
        for (i, t) in chf.t.iter().enumerate().step_by(7) {
            let u = unitary_propagator(&dense, *t);
            assert!((u[(7, 7)] - chf.values[i]).norm() < 1e-10);
        }
    }

    #[test]
    fn duhamel_scalar_closed_form() {
        let a = DMatrix::from_element(1, 1, 2.0);
        let b = DMatrix::from_element(1, 1, 1.0);
        for t in [0.3, 1.0, 2.5] {
            assert!(duhamel_identity_check(&a, &b, t, 16).unwrap() < 1e-12);
        }
        assert!(duhamel_identity_check(&a, &a, 1.0, 2).unwrap() < 1e-14);
    }

    #[test]
    fn duhamel_rejects_bad_input() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        let b = DMatrix::identity(2, 2);
        assert!(duhamel_identity_check(&a, &b, 1.0, 8).is_err());
        assert!(duhamel_identity_check(&b, &DMatrix::identity(3, 3), 1.0, 8).is_err());
        assert!(duhamel_identity_check(&b, &b, 1.0, 1).is_err());
    }

    #[test]
    fn inverse_of_gaussian_transform() {
        // nu = N(0.3, s^2): nu_hat(t) = exp(-i 0.3 t - s^2 t^2 / 2)
        let s: f64 = 0.7;
        let grid = TimeGrid::new(0.02, 15.0).unwrap();
        let t: Vec<f64> = (0..=grid.n_pos).map(|n| n as f64 * grid.dt).collect();
        let phi: Vec<Complex64> = t
            .iter()
            .map(|t| Complex64::from_polar((-0.5 * s * s * t * t).exp(), -0.3 * t))
            .collect();
        let xs: Vec<f64> = (0..41).map(|i| -2.0 + 0.1 * i as f64).collect();
        let g0 = inverse_transform(&t, &phi, 0, &xs, 15.0, None);
        let g1 = inverse_transform(&t, &phi, 1, &xs, 15.0, None);
        for ((x, a), b) in xs.iter().zip(&g0).zip(&g1) {
            let u = (x - 0.3) / s;
            let exact = (-0.5 * u * u).exp() / ((2.0 * PI).sqrt() * s);
            assert!((a - exact).abs() < 1e-10);
            assert!((b + u / s * exact).abs() < 1e-10);
        }
    }

    #[test]
    fn reconstruct_rejects_bad_order_and_split() {
        let ens = ens_of(vec![SpectralSample {
            index: 0,
            eigenvalues: vec![0.0],
            weights: vec![1.0],
        }]);
        let chf = char_function(&ens, TimeGrid::new(0.1, 5.0).unwrap()).unwrap();
        let xs = [0.0];
        assert!(reconstruct_derivative(&chf, &chf, 4, 6, &xs, 1.0, 1.0).is_err());
        assert!(reconstruct_derivative(&chf, &chf, 0, 6, &xs, 6.0, 1.0).is_err());
        let r = reconstruct_derivative(&chf, &chf, 3, 6, &xs, 5.0, 1.0).unwrap();
        assert_eq!(r.sup_difference, 0.0);
    }
}
