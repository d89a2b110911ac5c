//! Fractional moments of the Green's function and exponential decay fits.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::GraphKind;
use crate::operator::EnsembleSpec;
use crate::spectral::ResolventWorker;
use crate::stats::{fit_line, mean_stderr, percentile_interval, resample_indices, t_quantile};

pub const DEFAULT_IM_Z: f64 = 1e-3;
pub const DEFAULT_S: f64 = 0.5;

/// Minimum number of distance rows for a decay fit.
pub const MIN_FIT_ROWS: usize = 4;

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct MomentRow {
    pub r: usize,
    pub moment: f64,
    pub std_error: f64,
    pub n_vertices: usize,
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct DecayFit {
    pub log_prefactor: f64,
    pub rate: f64,
    pub rate_se: f64,
    pub r_squared: f64,
    /// Rate significantly positive (one-sided, 95%).
    pub localized: bool,
}

impl DecayFit {
    pub fn prefactor(&self) -> f64 {
        self.log_prefactor.exp()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FracMomentTable {
    pub s: f64,
    pub z: Complex64,
    pub lambda: f64,
    pub master_seed: u64,
    pub n_realizations: usize,
    pub rows: Vec<MomentRow>,
    pub fit: Option<DecayFit>,
    /// Per-realization shell averages, `[realization][r]`.
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
}

impl FracMomentTable {
    /// Table from per-realization shell averages.
    pub fn from_samples(
        s: f64,
        z: Complex64,
        lambda: f64,
        master_seed: u64,
        shell_sizes: &[usize],
        samples: Vec<Vec<f64>>,
    ) -> Self {
        let rows = rows_of(&samples, shell_sizes, None);
        let mut table = Self {
            s,
            z,
            lambda,
            master_seed,
            n_realizations: samples.len(),
            rows,
            fit: None,
            samples,
        };
        table.fit = fit_decay(&table).ok();
        table
    }
}

fn rows_of(samples: &[Vec<f64>], shell_sizes: &[usize], pick: Option<&[usize]>) -> Vec<MomentRow> {
    let mut buf = Vec::with_capacity(samples.len());
    (0..shell_sizes.len())
        .map(|r| {
            buf.clear();
            match pick {
                Some(idx) => buf.extend(idx.iter().map(|&i| samples[i][r])),
                None => buf.extend(samples.iter().map(|row| row[r])),
            }
            let (moment, std_error) = mean_stderr(&buf);
            MomentRow {
                r,
                moment,
                std_error,
                n_vertices: shell_sizes[r],
            }
        })
        .collect()
}

/// `E |G(0, n; z)|^s` averaged over the vertices `n` at each distance
/// `r <= r_max` from the origin; one solve per realization.
pub fn fractional_moments(spec: &EnsembleSpec, z: Complex64, s: f64, r_max: usize) -> Result<FracMomentTable> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid(format!("fractional exponent must lie in (0, 1), got {s}")));
    }
    if !(z.im > 0.0) {
        return Err(invalid(format!("spectral parameter must have Im z > 0, got {z}")));
    }
    let radius = spec.graph.origin_radius();
    if r_max > radius {
        return Err(invalid(format!("r_max = {r_max} exceeds the graph radius {radius}")));
    }
    let dist = spec.graph.distances_from(spec.graph.origin())?;
    let mut shell_sizes = vec![0usize; r_max + 1];
    for &d in &dist {
        if d <= r_max {
            shell_sizes[d] += 1;
        }
    }
    let samples: Vec<Vec<f64>> = (0..spec.n_realizations)
        .into_par_iter()
        .map(|i| {
            let mut worker = ResolventWorker::new(spec, i)?;
            let col = worker.resolvent_column(z).map_err(|e| match e {
                Error::SolverBreakdown(_) => Error::SolverBreakdown(i),
                other => other,
            })?;
            let mut acc = vec![0.0; r_max + 1];
            for (v, &d) in col.iter().zip(&dist) {
                if d <= r_max {
                    acc[d] += v.norm().powf(s);
                }
            }
            Ok(acc.iter().zip(&shell_sizes).map(|(a, &n)| a / n as f64).collect())
        })
        .collect::<Result<_>>()?;
    Ok(FracMomentTable::from_samples(
        s,
        z,
        spec.lambda,
        spec.master_seed,
        &shell_sizes,
        samples,
    ))
}

fn fit_rows(rows: &[MomentRow]) -> Result<DecayFit> {
    let usable: Vec<&MomentRow> = rows
        .iter()
        .filter(|r| r.moment > 0.0 && r.moment.is_finite())
        .collect();
    if usable.len() < MIN_FIT_ROWS {
        return Err(Error::Degenerate(format!(
            "{} usable distance rows, need {MIN_FIT_ROWS}",
            usable.len()
        )));
    }
    let x: Vec<f64> = usable.iter().map(|r| r.r as f64).collect();
    let y: Vec<f64> = usable.iter().map(|r| r.moment.ln()).collect();
    // relative error of the mean is the standard error of its logarithm
    let weights: Option<Vec<f64>> = if usable.iter().all(|r| r.std_error > 0.0) {
        Some(usable.iter().map(|r| (r.moment / r.std_error).powi(2)).collect())
    } else {
        None
    };
    let f = fit_line(&x, &y, weights.as_deref()).ok_or_else(|| Error::Degenerate("collinear distances".into()))?;
    Ok(DecayFit {
        log_prefactor: f.intercept,
        rate: -f.slope,
        rate_se: f.slope_se,
        r_squared: f.r_squared,
        localized: -f.slope - f.slope_se * t_quantile(0.95, f.n.saturating_sub(2)) > 0.0,
    })
}

/// Weighted least squares of `log moment` against distance.
pub fn fit_decay(table: &FracMomentTable) -> Result<DecayFit> {
    fit_rows(&table.rows)
}

/// Bootstrap replicates of the fitted rate for several tables, resampling
/// the same realization indices in every table (the ensembles share their
/// disorder, so differences stay paired).
pub fn paired_bootstrap_rates(tables: &[&FracMomentTable], n_boot: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    let n = tables.first().map(|t| t.samples.len()).unwrap_or(0);
    if n < 2 || tables.iter().any(|t| t.samples.len() != n) {
        return Err(invalid("bootstrap needs tables with equal, nonzero realization counts"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<usize>> = (0..n_boot).map(|_| resample_indices(&mut rng, n)).collect();
    Ok(tables
        .iter()
        .map(|t| {
            let sizes: Vec<usize> = t.rows.iter().map(|r| r.n_vertices).collect();
            draws
                .par_iter()
                .map(|idx| {
                    fit_rows(&rows_of(&t.samples, &sizes, Some(idx)))
                        .map(|f| f.rate)
                        .unwrap_or(f64::NAN)
                })
                .collect()
        })
        .collect())
}

/// Percentile confidence interval of the rate of a single table.
pub fn bootstrap_rate_ci(table: &FracMomentTable, n_boot: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    let reps = paired_bootstrap_rates(&[table], n_boot, seed)?.remove(0);
    Ok(percentile_interval(reps, level))
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct PredictedRate {
    /// `-s ln(q C / lambda)` with `q = 2d` (box) or `K + 1` (tree).
    pub rate: f64,
    /// `(2 sqrt 2)^s / ((1 - s) lambda^s)`.
    pub prefactor: f64,
}

fn degree_factor(kind: GraphKind) -> f64 {
    match kind {
        GraphKind::ZdBox { dim, .. } => 2.0 * dim as f64,
        GraphKind::Bethe { connectivity, .. } => connectivity as f64 + 1.0,
    }
}

pub fn predicted_rate(s: f64, lambda: f64, kind: GraphKind, c_fit: f64) -> Result<PredictedRate> {
    if !(s > 0.0 && s < 1.0) || !(lambda > 0.0) || !(c_fit > 0.0) {
        return Err(invalid("predicted rate needs s in (0,1), lambda > 0, C > 0"));
    }
    let arg = degree_factor(kind) * c_fit / lambda;
    let rate = -s * arg.ln();
    if !(rate > 0.0) {
        return Err(Error::OutsideRegime(format!(
            "q C / lambda = {arg} >= 1: no decay at lambda = {lambda}"
        )));
    }
    Ok(PredictedRate {
        rate,
        prefactor: (2.0 * 2f64.sqrt()).powf(s) / ((1.0 - s) * lambda.powf(s)),
    })
}

/// The constant `C` for which [`predicted_rate`] reproduces `rate` at
/// `(s, lambda)`.
pub fn calibrate_constant(s: f64, lambda: f64, kind: GraphKind, rate: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) || !(lambda > 0.0) {
        return Err(invalid("calibration needs s in (0,1) and lambda > 0"));
    }
    Ok(lambda / degree_factor(kind) * (-rate / s).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::GraphSpec;
    use crate::ssd::BumpSsd;
    use std::sync::Arc;

    fn synthetic(rows: &[(usize, f64, f64)]) -> FracMomentTable {
        FracMomentTable {
            s: 0.5,
            z: Complex64::new(0.0, 1e-3),
            lambda: 1.0,
            master_seed: 0,
            n_realizations: 1,
            rows: rows
                .iter()
                .map(|&(r, m, se)| MomentRow {
                    r,
                    moment: m,
                    std_error: se,
                    n_vertices: 2,
                })
                .collect(),
            fit: None,
            samples: Vec::new(),
        }
    }

    #[test]
    fn exact_exponential_is_recovered() {
        let rows: Vec<_> = (0..10).map(|r| (r, 2.5 * (-0.7 * r as f64).exp(), 0.0)).collect();
        let f = fit_decay(&synthetic(&rows)).unwrap();
        assert!((f.rate - 0.7).abs() < 1e-10);
        assert!((f.prefactor() - 2.5).abs() < 1e-10);
        assert!(f.localized);
    }

    #[test]
    fn constant_input_is_not_localized() {
        let rows: Vec<_> = (0..8).map(|r| (r, 0.3, 0.0)).collect();
        let f = fit_decay(&synthetic(&rows)).unwrap();
        assert!(f.rate.abs() < 1e-12);
        assert!(!f.localized);
    }

    #[test]
    fn too_few_rows() {
        let rows: Vec<_> = (0..3).map(|r| (r, 1.0, 0.1)).collect();
        assert!(matches!(fit_decay(&synthetic(&rows)), Err(Error::Degenerate(_))));
    }

    #[test]
    fn predicted_rate_formula() {
        let kind = GraphKind::ZdBox { dim: 1, side: 11 };
        let a = predicted_rate(0.5, 16.0, kind, 0.5).unwrap();
        let b = predicted_rate(0.5, 32.0, kind, 0.5).unwrap();
        assert!((b.rate - a.rate - 0.5 * 2f64.ln()).abs() < 1e-14);
        assert!(b.prefactor < a.prefactor);
        let tiny = predicted_rate(1e-9, 16.0, kind, 0.5).unwrap();
        assert!(tiny.rate < 1e-8);
        assert!(matches!(predicted_rate(0.5, 0.5, kind, 0.5), Err(Error::OutsideRegime(_))));
        let c = calibrate_constant(0.5, 16.0, kind, 0.9).unwrap();
        assert!((predicted_rate(0.5, 16.0, kind, c).unwrap().rate - 0.9).abs() < 1e-14);
        let tree = GraphKind::Bethe { connectivity: 2, depth: 3 };
        let t = predicted_rate(0.5, 16.0, tree, 0.5).unwrap();
        assert!((t.rate + 0.5 * (1.5f64 / 16.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        let spec = EnsembleSpec::new(
            Arc::new(GraphSpec::build_box(1, 11).unwrap()),
            Arc::new(BumpSsd::new(2, -1.0, 1.0).unwrap()),
            16.0,
            4,
            1,
        )
        .unwrap();
        let z = Complex64::new(0.0, 1e-3);
        assert!(fractional_moments(&spec, z, 1.0, 3).is_err());
        assert!(fractional_moments(&spec, Complex64::new(0.0, 0.0), 0.5, 3).is_err());
        assert!(fractional_moments(&spec, z, 0.5, 6).is_err());
        let t = fractional_moments(&spec, z, 0.5, 5).unwrap();
        assert_eq!(t.rows.len(), 6);
        assert_eq!(t.rows[0].n_vertices, 1);
        assert_eq!(t.rows[3].n_vertices, 2);
    }
}
