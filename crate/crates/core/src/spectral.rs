//! Local spectral data at the origin and density-of-states estimators.
//!
//! Two independent routes estimate `g^{(k)}`:
//!
//! * **Borel route**: `F^{(k)}(z) = k! <delta_0, (H - z)^{-(k+1)} delta_0>`
//!   from sparse shifted solves, `g^{(k)}(E) ~ Im F^{(k)}(E + i eps) / pi`,
//!   Richardson-extrapolated over a halving schedule of `eps`;
//! * **spectral route**: eigenvalues and origin weights from a full
//!   eigendecomposition, smoothed by a Gaussian kernel and differentiated
//!   analytically through the kernel.
//!
//! Finite-volume local measures are atomic, so every density estimate
//! carries an explicit smoothing scale.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::GraphKind;
use crate::linalg::{dense_eigen_row, tridiagonal_eigen_row, LdlFactor, LdlSymbolic, TridiagonalLdl};
use crate::operator::{assemble, realize_disorder, EnsembleSpec, SparseOperator};
use crate::ssd::BumpSsd;
use crate::stats::{fit_line, mean_stderr, LineFit};

/// Largest dimension handled by the dense eigensolver.
pub const DENSE_EIGEN_BUDGET: usize = 4096;

/// Number of halvings in the default `eps` schedule.
pub const DEFAULT_HALVINGS: usize = 3;

/// Fraction by which the energy grid extends beyond `J` on each side.
pub const GRID_EXTENSION: f64 = 0.05;

pub const DEFAULT_GRID_POINTS: usize = 512;

/// Gaussian tails beyond this many bandwidths are dropped (`exp(-800) = 0`).
const KERNEL_CUTOFF: f64 = 40.0;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SpectralSample {
    pub index: usize,
    pub eigenvalues: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Eigendecomposition of `h`, keeping squared origin components as weights.
/// Tridiagonal operators use the `O(n^2)` QL path; others the dense solver.
pub fn local_spectral_sample(h: &SparseOperator, origin: usize) -> Result<SpectralSample> {
    let (eigenvalues, comps) = if let Some(off) = h.sub_diagonal() {
        tridiagonal_eigen_row(h.diagonal(), &off, origin)?
    } else if h.dim() <= DENSE_EIGEN_BUDGET {
        dense_eigen_row(h.to_dense(), origin)?
    } else {
        return Err(invalid(format!(
            "dimension {} exceeds the dense eigensolver budget {DENSE_EIGEN_BUDGET}",
            h.dim()
        )));
    };
    Ok(SpectralSample {
        index: 0,
        eigenvalues,
        weights: comps.iter().map(|c| c * c).collect(),
    })
}

/// Local spectral samples of every realization, with their ensemble context.
#[derive(Debug, Clone)]
pub struct SpectralEnsemble {
    pub lambda: f64,
    pub master_seed: u64,
    pub samples: Vec<SpectralSample>,
}

impl SpectralEnsemble {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// All atoms `(E, w / N)` of the ensemble-averaged measure, sorted.
    pub fn pooled_atoms(&self) -> Vec<(f64, f64)> {
        let n = self.samples.len() as f64;
        let mut atoms: Vec<(f64, f64)> = self
            .samples
            .iter()
            .flat_map(|s| s.eigenvalues.iter().zip(&s.weights).map(move |(&e, &w)| (e, w / n)))
            .collect();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        atoms
    }

    /// Mean first moment `E[sum_j w_j E_j]`.
    pub fn first_moment(&self) -> f64 {
        let per: Vec<f64> = self
            .samples
            .iter()
            .map(|s| s.eigenvalues.iter().zip(&s.weights).map(|(e, w)| e * w).sum())
            .collect();
        mean_stderr(&per).0
    }
}

/// Eigendecompose every realization of `spec` (in parallel, results in
/// index order).
pub fn sample_ensemble(spec: &EnsembleSpec) -> Result<SpectralEnsemble> {
    let origin = spec.graph.origin();
    let samples = (0..spec.n_realizations)
        .into_par_iter()
        .map(|i| {
            let omega = realize_disorder(spec, i)?;
            let h = assemble(&spec.graph, spec.lambda, &omega)?;
            let mut s = local_spectral_sample(&h, origin).map_err(|e| match e {
                Error::EigenNonConvergence { .. } => Error::EigenNonConvergence { realization: Some(i) },
                other => other,
            })?;
            s.index = i;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpectralEnsemble {
        lambda: spec.lambda,
        master_seed: spec.master_seed,
        samples,
    })
}

/// `N(x) = mean over realizations of sum_{E_j <= x} w_j`.
pub fn ids_empirical(ensemble: &[SpectralSample], x: f64) -> f64 {
    if ensemble.is_empty() {
        return f64::NAN;
    }
    let total: f64 = ensemble
        .iter()
        .map(|s| {
            let cut = s.eigenvalues.partition_point(|&e| e <= x);
            s.weights[..cut].iter().sum::<f64>()
        })
        .sum();
    total / ensemble.len() as f64
}

/// [`ids_empirical`] on a sorted grid, by a single sweep over pooled atoms.
pub fn ids_on_grid(ensemble: &SpectralEnsemble, xs: &[f64]) -> Vec<f64> {
    let atoms = ensemble.pooled_atoms();
    let mut out = Vec::with_capacity(xs.len());
    let (mut acc, mut j) = (0.0, 0usize);
    for &x in xs {
        while j < atoms.len() && atoms[j].0 <= x {
            acc += atoms[j].1;
            j += 1;
        }
        out.push(acc);
    }
    out
}

/// The window `J = [-r + lambda_0 a, r + lambda_0_tilde b]` containing the
/// spectra of all operators with `lambda` in `[lambda_0, lambda_0_tilde]`.
pub fn dos_window(kind: GraphKind, ssd: &BumpSsd, lambda_0: f64, lambda_0_tilde: f64) -> (f64, f64) {
    let r = kind.finite_laplacian_radius();
    let (a, b) = ssd.support();
    let lo = (-r + lambda_0 * a).min(-r + lambda_0_tilde * a);
    let hi = (r + lambda_0_tilde * b).max(r + lambda_0 * b);
    (lo, hi)
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct EnergyGrid {
    pub points: Vec<f64>,
    pub step: f64,
    /// The window the grid was built around (before extension).
    pub window: (f64, f64),
}

impl EnergyGrid {
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if n < 2 || !(hi > lo) {
            return Err(invalid("energy grid needs n >= 2 and hi > lo"));
        }
        let step = (hi - lo) / (n - 1) as f64;
        Ok(Self {
            points: (0..n).map(|i| lo + step * i as f64).collect(),
            step,
            window: (lo, hi),
        })
    }

    /// Uniform grid over `window` extended by [`GRID_EXTENSION`] on each side.
    pub fn over_window(window: (f64, f64), n: usize) -> Result<Self> {
        let ext = GRID_EXTENSION * (window.1 - window.0);
        let mut g = Self::uniform(window.0 - ext, window.1 + ext, n)?;
        g.window = window;
        Ok(g)
    }

    /// Indices of points within the central `fraction` of the window.
    pub fn central_indices(&self, fraction: f64) -> Vec<usize> {
        let (lo, hi) = self.window;
        let trim = 0.5 * (1.0 - fraction) * (hi - lo);
        self.points
            .iter()
            .enumerate()
            .filter(|(_, &x)| x >= lo + trim && x <= hi - trim)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DosMethod {
    Borel,
    Fourier,
    Histogram,
}

impl DosMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            DosMethod::Borel => "borel",
            DosMethod::Fourier => "fourier",
            DosMethod::Histogram => "histogram",
        }
    }
}

/// Estimates of `g^{(k)}` on an energy grid.
#[derive(Debug, Clone, Serialize)]
pub struct DosGrid {
    pub grid: EnergyGrid,
    pub k: usize,
    pub values: Vec<f64>,
    /// Method uncertainty (Richardson residual for the Borel route, standard
    /// error for the kernel route).
    pub uncertainty: Vec<f64>,
    /// Standard error over realizations.
    pub std_error: Vec<f64>,
    pub method: DosMethod,
    pub smoothing: f64,
    pub lambda: f64,
    pub n_realizations: usize,
    pub master_seed: u64,
}

impl DosGrid {
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Trapezoid integral over the grid.
    pub fn integral(&self) -> f64 {
        crate::quad::trapezoid(&self.values, self.grid.step)
    }

    pub fn first_moment(&self) -> f64 {
        let xv: Vec<f64> = self.grid.points.iter().zip(&self.values).map(|(x, v)| x * v).collect();
        crate::quad::trapezoid(&xv, self.grid.step)
    }
}

/// Halving schedule `eps_0, eps_0/2, ...` and the matched Gaussian bandwidth.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SmoothingSchedule {
    pub eps: Vec<f64>,
}

impl SmoothingSchedule {
    pub fn halving(eps_0: f64, halvings: usize) -> Result<Self> {
        if !(eps_0 > 0.0) || halvings == 0 {
            return Err(invalid("eps schedule needs eps_0 > 0 and at least two levels"));
        }
        Ok(Self {
            eps: (0..=halvings).map(|i| eps_0 / 2f64.powi(i as i32)).collect(),
        })
    }

    /// Top level `4 x spacing`, [`DEFAULT_HALVINGS`] halvings.
    pub fn from_spacing(spacing: f64) -> Result<Self> {
        Self::halving(4.0 * spacing, DEFAULT_HALVINGS)
    }

    pub fn finest(&self) -> f64 {
        *self.eps.last().unwrap()
    }

    /// Gaussian bandwidth matched to the finest Poisson level at
    /// half-maximum scale: `sigma = eps / sqrt(2)`.
    pub fn matched_bandwidth(&self) -> f64 {
        self.finest() / 2f64.sqrt()
    }
}

/// Mean atom spacing of the ensemble-averaged origin measure over `window`:
/// `|J| / N_eff` with `N_eff = 1 / sum (w/N)^2` the effective atom count.
pub fn mean_weighted_spacing(ensemble: &SpectralEnsemble, window: (f64, f64)) -> f64 {
    let ipr: f64 = ensemble.pooled_atoms().iter().map(|(_, w)| w * w).sum();
    (window.1 - window.0) * ipr
}

/// Richardson extrapolation to `eps = 0` of values `f(eps_i)` assumed
/// polynomial in `eps` (Neville–Aitken at zero).
pub fn richardson_to_zero(eps: &[f64], values: &[f64]) -> f64 {
    let mut p = values.to_vec();
    let n = p.len();
    for m in 1..n {
        for i in 0..n - m {
            p[i] = (eps[i + m] * p[i] - eps[i] * p[i + 1]) / (eps[i + m] - eps[i]);
        }
    }
    p[0]
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct BorelSample {
    pub z: Complex64,
    pub k: usize,
    pub value: Complex64,
    pub std_error: f64,
}

/// Shifted solver for one realization: keeps the operator, its symbolic
/// factorization and numeric storage, reused across spectral parameters.
pub struct ResolventWorker {
    h: SparseOperator,
    backend: Backend,
    origin: usize,
    rhs: Vec<Complex64>,
}

enum Backend {
    Chain(TridiagonalLdl),
    Sparse(LdlSymbolic, LdlFactor),
}

impl ResolventWorker {
    pub fn new(spec: &EnsembleSpec, index: usize) -> Result<Self> {
        let omega = realize_disorder(spec, index)?;
        let h = assemble(&spec.graph, spec.lambda, &omega)?;
        Self::from_operator(h, spec.graph.origin(), &spec.graph.elimination_order())
    }

    pub fn from_operator(h: SparseOperator, origin: usize, order: &[usize]) -> Result<Self> {
        let backend = match h.sub_diagonal() {
            Some(off) => Backend::Chain(TridiagonalLdl::new(h.diagonal(), &off)?),
            None => {
                let symbolic = h.shifted_symbolic(order)?;
                let factor = symbolic.workspace();
                Backend::Sparse(symbolic, factor)
            }
        };
        let rhs = vec![Complex64::new(0.0, 0.0); h.dim()];
        Ok(Self {
            h,
            backend,
            origin,
            rhs,
        })
    }

    pub fn operator(&self) -> &SparseOperator {
        &self.h
    }

    fn factor(&mut self, z: Complex64) -> Result<()> {
        match &mut self.backend {
            Backend::Chain(t) => t.factor(z),
            Backend::Sparse(sym, f) => self.h.factor_shifted(sym, f, z),
        }
    }

    fn solve(&mut self) {
        match &mut self.backend {
            Backend::Chain(t) => t.solve_in_place(&mut self.rhs),
            Backend::Sparse(sym, f) => sym.solve_in_place(f, &mut self.rhs),
        }
    }

    fn reset_rhs(&mut self) {
        self.rhs.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        self.rhs[self.origin] = Complex64::new(1.0, 0.0);
    }

    /// `(H - z)^{-1} delta_origin`.
    pub fn resolvent_column(&mut self, z: Complex64) -> Result<&[Complex64]> {
        self.factor(z)?;
        self.reset_rhs();
        self.solve();
        Ok(&self.rhs)
    }

    /// `d^j F / dz^j = j! <delta_0, (H - z)^{-(j+1)} delta_0>` for
    /// `j = 0..=k_max`.
    ///
    /// `R = (H - z)^{-1}` is complex symmetric, so with `v_i = R^{i+1} delta_0`
    /// the bilinear form `v_a^T v_b` equals `<delta_0, R^{a+b+2} delta_0>`;
    /// order `j` then needs only `ceil((j-1)/2)` solves beyond the first.
    pub fn borel_derivatives(&mut self, z: Complex64, k_max: usize) -> Result<Vec<Complex64>> {
        self.factor(z)?;
        self.reset_rhs();
        self.solve();
        let mut powers = vec![self.rhs.clone()];
        let mut out = Vec::with_capacity(k_max + 1);
        let mut fact = 1.0;
        for j in 0..=k_max {
            if j > 0 {
                fact *= j as f64;
            }
            let value = if j == 0 {
                powers[0][self.origin]
            } else {
                let a = (j - 1) / 2;
                let b = j - 1 - a;
                while powers.len() <= b {
                    let mut next = powers.last().unwrap().clone();
                    std::mem::swap(&mut self.rhs, &mut next);
                    self.solve();
                    std::mem::swap(&mut self.rhs, &mut next);
                    powers.push(next);
                }
                bilinear(&powers[a], &powers[b])
            };
            out.push(value * fact);
        }
        Ok(out)
    }
}

fn bilinear(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_upper(z: Complex64) -> Result<()> {
    if z.im > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("spectral parameter must have Im z > 0, got {z}")))
    }
}

/// Ensemble estimate of `d^k F / dz^k` at `z`.
pub fn borel_derivative(spec: &EnsembleSpec, z: Complex64, k: usize) -> Result<BorelSample> {
    check_upper(z)?;
    let per: Vec<Complex64> = (0..spec.n_realizations)
        .into_par_iter()
        .map(|i| ResolventWorker::new(spec, i)?.borel_derivatives(z, k).map(|v| v[k]))
        .collect::<Result<_>>()?;
    let (value, std_error) = crate::stats::complex_mean_stderr(&per);
    Ok(BorelSample {
        z,
        k,
        value,
        std_error,
    })
}

fn reduce_rows(rows: &[Vec<f64>], cols: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0; cols];
    let mut se = vec![0.0; cols];
    let mut buf = vec![0.0; rows.len()];
    for c in 0..cols {
        for (r, row) in rows.iter().enumerate() {
            buf[r] = row[c];
        }
        let (m, s) = mean_stderr(&buf);
        mean[c] = m;
        se[c] = s;
    }
    (mean, se)
}

/// Output of [`g_derivatives_borel`].
#[derive(Debug, Clone, Serialize)]
pub struct BorelRun {
    pub grids: Vec<DosGrid>,
    /// Smallest `Im F(z)` over every realization and sampled `z`.
    pub min_im_resolvent: f64,
}

/// Borel-route estimates of `g^{(k)}` on `grid` for each `k` in `ks`.
///
/// For each realization and energy `E`, `Im F^{(k)}(E + i eps)/pi` is taken at
/// every level of `schedule` and Richardson-extrapolated to `eps = 0`. The
/// value is the ensemble mean; `uncertainty` is the change in the ensemble
/// mean when the coarsest level is dropped from the extrapolation.
pub fn g_derivatives_borel(
    spec: &EnsembleSpec,
    ks: &[usize],
    grid: &EnergyGrid,
    schedule: &SmoothingSchedule,
) -> Result<BorelRun> {
    if schedule.eps.len() < 2 {
        return Err(invalid("eps schedule needs at least two levels"));
    }
    let k_max = *ks.iter().max().ok_or_else(|| invalid("no derivative orders requested"))?;
    let eps = &schedule.eps;
    let npts = grid.points.len();
    // per realization: (full[k], reduced[k], min Im F)
    type Rows = (Vec<Vec<f64>>, Vec<Vec<f64>>, f64);
    let per: Vec<Rows> = (0..spec.n_realizations)
        .into_par_iter()
        .map(|i| {
            let mut worker = ResolventWorker::new(spec, i)?;
            let mut full = vec![Vec::with_capacity(npts); ks.len()];
            let mut reduced = vec![Vec::with_capacity(npts); ks.len()];
            let mut levels = vec![vec![0.0; eps.len()]; ks.len()];
            let mut min_im = f64::INFINITY;
            for &x in &grid.points {
                for (l, &e) in eps.iter().enumerate() {
                    let d = worker.borel_derivatives(Complex64::new(x, e), k_max)?;
                    min_im = min_im.min(d[0].im);
                    for (j, &k) in ks.iter().enumerate() {
                        levels[j][l] = d[k].im / PI;
                    }
                }
                for j in 0..ks.len() {
                    full[j].push(richardson_to_zero(eps, &levels[j]));
                    reduced[j].push(richardson_to_zero(&eps[1..], &levels[j][1..]));
                }
            }
            Ok((full, reduced, min_im))
        })
        .collect::<Result<_>>()?;
    let min_im_resolvent = per.iter().map(|p| p.2).fold(f64::INFINITY, f64::min);
    let grids = ks
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let full: Vec<Vec<f64>> = per.iter().map(|p| p.0[j].clone()).collect();
            let reduced: Vec<Vec<f64>> = per.iter().map(|p| p.1[j].clone()).collect();
            let (values, std_error) = reduce_rows(&full, npts);
            let (alt, _) = reduce_rows(&reduced, npts);
            let uncertainty = values.iter().zip(&alt).map(|(a, b)| (a - b).abs()).collect();
            DosGrid {
                grid: grid.clone(),
                k,
                values,
                uncertainty,
                std_error,
                method: DosMethod::Borel,
                smoothing: schedule.finest(),
                lambda: spec.lambda,
                n_realizations: spec.n_realizations,
                master_seed: spec.master_seed,
            }
        })
        .collect();
    Ok(BorelRun {
        grids,
        min_im_resolvent,
    })
}

/// [`g_derivatives_borel`] for a single order.
pub fn g_derivative_borel(
    spec: &EnsembleSpec,
    k: usize,
    grid: &EnergyGrid,
    schedule: &SmoothingSchedule,
) -> Result<DosGrid> {
    Ok(g_derivatives_borel(spec, &[k], grid, schedule)?.grids.remove(0))
}

/// `(1/pi) Im F(E + i eps)` at a single level, no extrapolation.
pub fn poisson_smoothed_dos(spec: &EnsembleSpec, grid: &EnergyGrid, eps: f64) -> Result<DosGrid> {
    if !(eps > 0.0) {
        return Err(invalid("eps must be positive"));
    }
    let rows: Vec<Vec<f64>> = (0..spec.n_realizations)
        .into_par_iter()
        .map(|i| {
            let mut worker = ResolventWorker::new(spec, i)?;
            grid.points
                .iter()
                .map(|&x| Ok(worker.borel_derivatives(Complex64::new(x, eps), 0)?[0].im / PI))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let (values, std_error) = reduce_rows(&rows, grid.points.len());
    Ok(DosGrid {
        grid: grid.clone(),
        k: 0,
        uncertainty: std_error.clone(),
        values,
        std_error,
        method: DosMethod::Borel,
        smoothing: eps,
        lambda: spec.lambda,
        n_realizations: spec.n_realizations,
        master_seed: spec.master_seed,
    })
}

/// Probabilists' Hermite polynomial `He_k(u)`.
fn hermite_he(k: usize, u: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, u);
    if k == 0 {
        return h0;
    }
    for n in 1..k {
        let h2 = u * h1 - n as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Spectral-route estimate of `g^{(k)}`: Gaussian kernel density estimate of
/// each realization's origin measure, differentiated `k` times through the
/// kernel, averaged over realizations.
pub fn g_derivative_spectral(
    ensemble: &SpectralEnsemble,
    k: usize,
    grid: &EnergyGrid,
    bandwidth: f64,
) -> Result<DosGrid> {
    if !(bandwidth > 0.0) {
        return Err(invalid("bandwidth must be positive"));
    }
    if ensemble.is_empty() {
        return Err(invalid("empty ensemble"));
    }
    let norm = 1.0 / ((2.0 * PI).sqrt() * bandwidth.powi(k as i32 + 1));
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    let rows: Vec<Vec<f64>> = ensemble
        .samples
        .par_iter()
        .map(|s| {
            grid.points
                .iter()
                .map(|&x| {
                    let lo = s.eigenvalues.partition_point(|&e| e < x - KERNEL_CUTOFF * bandwidth);
                    let hi = s.eigenvalues.partition_point(|&e| e <= x + KERNEL_CUTOFF * bandwidth);
                    let mut acc = 0.0;
                    for j in lo..hi {
                        let u = (x - s.eigenvalues[j]) / bandwidth;
                        acc += s.weights[j] * hermite_he(k, u) * (-0.5 * u * u).exp();
                    }
                    sign * norm * acc
                })
                .collect()
        })
        .collect();
    let (values, std_error) = reduce_rows(&rows, grid.points.len());
    Ok(DosGrid {
        grid: grid.clone(),
        k,
        uncertainty: std_error.clone(),
        values,
        std_error,
        method: DosMethod::Histogram,
        smoothing: bandwidth,
        lambda: ensemble.lambda,
        n_realizations: ensemble.len(),
        master_seed: ensemble.master_seed,
    })
}

/// Direct weighted histogram of the ensemble-averaged origin measure:
/// density per bin with the given edges.
pub fn weighted_histogram(ensemble: &SpectralEnsemble, edges: &[f64]) -> Vec<f64> {
    let mut mass = vec![0.0; edges.len().saturating_sub(1)];
    for (e, w) in ensemble.pooled_atoms() {
        let pos = edges.partition_point(|&b| b <= e);
        if pos >= 1 && pos < edges.len() {
            mass[pos - 1] += w;
        }
    }
    mass.iter()
        .zip(edges.windows(2))
        .map(|(m, w)| m / (w[1] - w[0]))
        .collect()
}

/// Relative sup-distance `max_i |a_i - b_i| / max_i |b_i|` over `indices`.
pub fn relative_sup_error(a: &DosGrid, b: &DosGrid, indices: &[usize]) -> f64 {
    let num = indices
        .iter()
        .map(|&i| (a.values[i] - b.values[i]).abs())
        .fold(0.0, f64::max);
    let den = indices.iter().map(|&i| b.values[i].abs()).fold(0.0, f64::max);
    num / den
}

#[derive(Debug, Clone, Serialize)]
pub struct SupNormReport {
    pub k: usize,
    pub lambdas: Vec<f64>,
    pub sup_norms: Vec<f64>,
    pub max_sup: f64,
    pub min_sup: f64,
    /// `max / min - 1` across the grid of strengths.
    pub relative_variation: f64,
    /// `max / (1 + 4d + lambda_0_tilde b - lambda_0 a)`.
    pub implied_constant: f64,
    pub bound_factor: f64,
    /// Regression of sup-norm on `lambda`; `None` for fewer than three points.
    pub trend: Option<LineFit>,
    /// True when the slope is significantly positive at the 95% level
    /// (one-sided).
    pub increasing_trend: bool,
}

/// Summarize `sup_x |g^{(k)}|` over a set of grids at different strengths.
pub fn supnorm_bound_report(
    grids: &[DosGrid],
    k: usize,
    effective_dim: f64,
    lambda_window: (f64, f64),
    support: (f64, f64),
) -> Result<SupNormReport> {
    let chosen: Vec<&DosGrid> = grids.iter().filter(|g| g.k == k).collect();
    if chosen.is_empty() {
        return Err(invalid(format!("no density grids of order {k}")));
    }
    let lambdas: Vec<f64> = chosen.iter().map(|g| g.lambda).collect();
    let sup_norms: Vec<f64> = chosen.iter().map(|g| g.sup_norm()).collect();
    let max_sup = sup_norms.iter().cloned().fold(f64::MIN, f64::max);
    let min_sup = sup_norms.iter().cloned().fold(f64::MAX, f64::min);
    let bound_factor =
        1.0 + 4.0 * effective_dim + lambda_window.1 * support.1 - lambda_window.0 * support.0;
    let trend = if chosen.len() >= 3 {
        fit_line(&lambdas, &sup_norms, None)
    } else {
        None
    };
    let increasing_trend = trend.map(|t| t.slope_lower_bound(0.95) > 0.0).unwrap_or(false);
    Ok(SupNormReport {
        k,
        lambdas,
        sup_norms,
        max_sup,
        min_sup,
        relative_variation: if min_sup > 0.0 { max_sup / min_sup - 1.0 } else { f64::INFINITY },
        implied_constant: max_sup / bound_factor,
        bound_factor,
        trend,
        increasing_trend,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphSpec;
    use crate::operator::assemble_from_values;
    use std::sync::Arc;

    fn chain_spec(l: usize, lambda: f64, n: usize, m: usize) -> EnsembleSpec {
        EnsembleSpec::new(
            Arc::new(GraphSpec::build_box(1, l).unwrap()),
            Arc::new(BumpSsd::new(m, -1.0, 1.0).unwrap()),
            lambda,
            n,
            7,
        )
        .unwrap()
    }

    #[test]
    fn single_site_sample() {
        let g = GraphSpec::build_box(1, 1).unwrap();
        let h = assemble_from_values(&g, 2.0, &[0.35]).unwrap();
        let s = local_spectral_sample(&h, 0).unwrap();
        assert_eq!(s.eigenvalues, vec![0.7]);
        assert_eq!(s.weights, vec![1.0]);
    }

    #[test]
    fn path_of_three_center_weights() {
        let g = GraphSpec::build_box(1, 3).unwrap();
        let h = assemble_from_values(&g, 0.0, &[0.0; 3]).unwrap();
        let s = local_spectral_sample(&h, 1).unwrap();
        let expect = [0.5, 0.0, 0.5];
        for (w, e) in s.weights.iter().zip(expect) {
            assert!((w - e).abs() < 1e-14);
        }
    }

    #[test]
    fn samples_complete_and_sorted() {
        for g in [GraphSpec::build_box(2, 7).unwrap(), GraphSpec::build_bethe(2, 4).unwrap()] {
            let spec = EnsembleSpec::new(
                Arc::new(g),
                Arc::new(BumpSsd::new(2, -1.0, 1.0).unwrap()),
                12.0,
                5,
                3,
            )
            .unwrap();
            let ens = sample_ensemble(&spec).unwrap();
            for (i, s) in ens.samples.iter().enumerate() {
                assert_eq!(s.index, i);
                assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
                assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
                assert!(crate::operator::spectrum_support_check(&spec, &s.eigenvalues).passed);
            }
        }
    }

    #[test]
    fn ids_limits_and_partial_sums() {
        let spec = chain_spec(21, 10.0, 3, 2);
        let ens = sample_ensemble(&spec).unwrap();
        assert_eq!(ids_empirical(&ens.samples, -1e3), 0.0);
        assert!((ids_empirical(&ens.samples, 1e3) - 1.0).abs() < 1e-12);
        let s = &ens.samples[0];
        let x = 0.5 * (s.eigenvalues[9] + s.eigenvalues[10]);
        let direct: f64 = s.weights[..10].iter().sum();
        assert!((ids_empirical(&ens.samples[..1], x) - direct).abs() < 1e-15);
        let xs: Vec<f64> = (0..200).map(|i| -15.0 + 0.15 * i as f64).collect();
        let on_grid = ids_on_grid(&ens, &xs);
        for (x, v) in xs.iter().zip(&on_grid) {
            assert!((ids_empirical(&ens.samples, *x) - v).abs() < 1e-12);
        }
        assert!(on_grid.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn borel_scalar_cases() {
        let g = GraphSpec::build_box(1, 1).unwrap();
        let h = assemble_from_values(&g, 1.0, &[0.4]).unwrap();
        let mut w = ResolventWorker::from_operator(h, 0, &[0]).unwrap();
        let z = Complex64::new(0.1, 0.3);
        let d = w.borel_derivatives(z, 2).unwrap();
        let r = 1.0 / (Complex64::new(0.4, 0.0) - z);
        assert!((d[0] - r).norm() < 1e-15);
        assert!((d[1] - r * r).norm() < 1e-15);
        assert!((d[2] - 2.0 * r * r * r).norm() < 1e-14);
    }

    #[test]
    fn borel_rejects_lower_half_plane() {
        let spec = chain_spec(5, 10.0, 2, 2);
        assert!(borel_derivative(&spec, Complex64::new(0.0, 0.0), 0).is_err());
        assert!(borel_derivative(&spec, Complex64::new(0.0, -1.0), 0).is_err());
    }

    #[test]
    fn borel_derivatives_match_finite_differences() {
        use nalgebra::DMatrix;
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let a = DMatrix::<f64>::from_fn(8, 8, |_, _| rng.gen_range(-1.0..1.0));
        let m = (&a + a.transpose()) * 0.5;
        let z0 = Complex64::new(0.2, 0.7);
        let f = |z: Complex64| -> Complex64 {
            let shifted = m.map(|v| Complex64::new(v, 0.0)) - DMatrix::identity(8, 8) * z;
            shifted.try_inverse().unwrap()[(0, 0)]
        };
        let mut w = dense_worker(&m);
        let d = w.borel_derivatives(z0, 3).unwrap();
        assert!((d[0] - f(z0)).norm() < 1e-12);
        let h = 1e-4;
        let hh = Complex64::new(h, 0.0);
        let fd1 = (f(z0 + hh) - f(z0 - hh)) / (2.0 * h);
        let fd2 = (f(z0 + hh) - 2.0 * f(z0) + f(z0 - hh)) / (h * h);
        assert!((fd1 - d[1]).norm() <= 1e-5 * d[1].norm());
        assert!((fd2 - d[2]).norm() <= 1e-5 * d[2].norm());
        // third derivative: central difference of the exact second derivative
        let mut w2 = dense_worker(&m);
        let dp = w2.borel_derivatives(z0 + hh, 2).unwrap()[2];
        let dm = w2.borel_derivatives(z0 - hh, 2).unwrap()[2];
        let fd3 = (dp - dm) / (2.0 * h);
        assert!((fd3 - d[3]).norm() <= 1e-4 * d[3].norm());
    }

    fn dense_worker(m: &nalgebra::DMatrix<f64>) -> ResolventWorker {
        let h = SparseOperator::from_dense(m).unwrap();
        let order: Vec<usize> = (0..m.nrows()).collect();
        ResolventWorker::from_operator(h, 0, &order).unwrap()
    }

    #[test]
    fn herglotz_per_realization() {
        let spec = chain_spec(31, 16.0, 6, 6);
        for i in 0..6 {
            let mut w = ResolventWorker::new(&spec, i).unwrap();
            for re in [-20.0, -3.0, 0.0, 0.1, 8.0, 30.0] {
                for im in [1e-6, 1e-3, 1.0] {
                    let d = w.borel_derivatives(Complex64::new(re, im), 0).unwrap();
                    assert!(d[0].im > 0.0);
                }
            }
        }
    }

    #[test]
    fn poisson_kernel_for_single_atom() {
        let g = Arc::new(GraphSpec::build_box(1, 1).unwrap());
        let ssd = Arc::new(BumpSsd::new(2, -1.0, 1.0).unwrap());
        let spec = EnsembleSpec::new(g, ssd, 3.0, 1, 5).unwrap();
        let e0 = 3.0 * realize_disorder(&spec, 0).unwrap().values[0];
        let grid = EnergyGrid::uniform(-4.0, 4.0, 81).unwrap();
        let eps = 0.25;
        let dos = poisson_smoothed_dos(&spec, &grid, eps).unwrap();
        for (x, v) in grid.points.iter().zip(&dos.values) {
            let exact = eps / (PI * ((x - e0).powi(2) + eps * eps));
            assert!((v - exact).abs() < 1e-12);
        }
    }

    #[test]
    fn richardson_is_exact_for_polynomials() {
        let eps = [0.8, 0.4, 0.2, 0.1];
        let vals: Vec<f64> = eps.iter().map(|e| 3.0 - 2.0 * e + 0.5 * e * e - e * e * e).collect();
        assert!((richardson_to_zero(&eps, &vals) - 3.0).abs() < 1e-13);
    }

    #[test]
    fn spectral_route_mass_and_derivative_integral() {
        let spec = chain_spec(41, 16.0, 40, 6);
        let ens = sample_ensemble(&spec).unwrap();
        let window = dos_window(spec.graph.kind(), &spec.ssd, 16.0, 16.0);
        let grid = EnergyGrid::over_window(window, 1024).unwrap();
        let g0 = g_derivative_spectral(&ens, 0, &grid, 0.3).unwrap();
        assert!((g0.integral() - 1.0).abs() < 1e-6);
        assert!(g0.values.iter().all(|v| *v >= 0.0));
        let g1 = g_derivative_spectral(&ens, 1, &grid, 0.3).unwrap();
        assert!(g1.integral().abs() < 1e-6 * g1.sup_norm());
        assert!((g0.first_moment() - ens.first_moment()).abs() < 1e-6);
        // analytic kernel derivative vs differencing the k = 0 estimate
        let i = grid.points.len() / 2 + 17;
        let fd = (g0.values[i + 1] - g0.values[i - 1]) / (2.0 * grid.step);
        assert!((fd - g1.values[i]).abs() < 1e-3 * g1.sup_norm());
    }

    #[test]
    fn borel_and_kernel_routes_agree_on_small_ensemble() {
        let spec = chain_spec(21, 16.0, 60, 6);
        let ens = sample_ensemble(&spec).unwrap();
        let window = dos_window(spec.graph.kind(), &spec.ssd, 16.0, 16.0);
        let grid = EnergyGrid::over_window(window, 128).unwrap();
        let sched = SmoothingSchedule::halving(4.0, 3).unwrap();
        let borel = g_derivative_borel(&spec, 0, &grid, &sched).unwrap();
        let kernel = g_derivative_spectral(&ens, 0, &grid, sched.matched_bandwidth()).unwrap();
        let idx = grid.central_indices(0.8);
        let err = relative_sup_error(&borel, &kernel, &idx);
        assert!(err < 0.1, "relative sup error {err}");
        for (v, u) in borel.values.iter().zip(&borel.uncertainty) {
            assert!(*v >= -u - 1e-3 * borel.sup_norm());
        }
    }

    #[test]
    fn weighted_histogram_mass() {
        let spec = chain_spec(21, 16.0, 20, 2);
        let ens = sample_ensemble(&spec).unwrap();
        let edges: Vec<f64> = (0..=80).map(|i| -20.0 + 0.5 * i as f64).collect();
        let h = weighted_histogram(&ens, &edges);
        let mass: f64 = h.iter().map(|d| d * 0.5).sum();
        assert!((mass - 1.0).abs() < 1e-12);
    }

    #[test]
    fn supnorm_report_single_point_has_no_trend() {
        let grid = EnergyGrid::uniform(-1.0, 1.0, 3).unwrap();
        let g = DosGrid {
            grid,
            k: 0,
            values: vec![0.1, 0.5, 0.2],
            uncertainty: vec![0.0; 3],
            std_error: vec![0.0; 3],
            method: DosMethod::Borel,
            smoothing: 0.1,
            lambda: 16.0,
            n_realizations: 1,
            master_seed: 0,
        };
        let r = supnorm_bound_report(&[g], 0, 1.0, (16.0, 32.0), (-1.0, 1.0)).unwrap();
        assert_eq!(r.sup_norms, vec![0.5]);
        assert!(r.trend.is_none() && !r.increasing_trend);
        assert!((r.bound_factor - (1.0 + 4.0 + 32.0 + 16.0)).abs() < 1e-12);
    }
}
