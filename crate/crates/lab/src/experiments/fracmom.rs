//! Fractional moments of the Green's function across disorder strengths.

use anyhow::{bail, Result};
use idslab_core::localization::{
    calibrate_constant, fractional_moments, paired_bootstrap_rates, predicted_rate, FracMomentTable,
};
use idslab_core::stats::percentile_interval;
use num_complex::Complex64;
use serde::Serialize;

use super::{Check, EnsembleCache, Experiment, Table};

#[derive(Debug, Clone, Serialize)]
pub struct MomentCsvRow {
    pub s: f64,
    pub lambda: f64,
    pub re_z: f64,
    pub im_z: f64,
    pub r: usize,
    pub moment: f64,
    pub std_error: f64,
    pub n_realizations: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateSummary {
    pub lambda: f64,
    pub rate: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub r_squared: f64,
    pub predicted_rate: f64,
    pub prefactor_formula: f64,
    pub fitted_prefactor: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateDifference {
    pub lambda: f64,
    pub lambda_doubled: f64,
    pub difference: f64,
    pub expected: f64,
    /// Half-width of the paired-bootstrap 95% interval of the difference.
    pub ci_half_width: f64,
    pub within: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FracMomResult {
    pub s: f64,
    pub z: Complex64,
    pub rates: Vec<RateSummary>,
    pub differences: Vec<RateDifference>,
    pub calibrated_constant: f64,
    pub r2_min: f64,
    /// `(Re z, sup_r moment)` at `lambda_0`.
    pub re_sweep: Vec<(f64, f64)>,
    pub resolvent_bound: f64,
    #[serde(skip)]
    pub tables: Vec<FracMomentTable>,
}

pub fn run_fracmom_experiment(cache: &mut EnsembleCache) -> Result<FracMomResult> {
    let cfg = cache.config().clone();
    cfg.validate()?;
    let fm = &cfg.fracmom;
    if fm.lambdas.len() < 2 {
        bail!("fractional-moment experiment needs at least two strengths");
    }
    let kind = cfg.graph.build()?.kind();
    let z = Complex64::new(fm.re_z, fm.im_z);
    let mut tables = Vec::with_capacity(fm.lambdas.len());
    for &l in &fm.lambdas {
        let mut spec = cfg.ensemble(l)?;
        spec.n_realizations = fm.n_realizations;
        tables.push(fractional_moments(&spec, z, fm.s, fm.r_max)?);
    }
    let refs: Vec<&FracMomentTable> = tables.iter().collect();
    let reps = paired_bootstrap_rates(&refs, fm.n_boot, cfg.master_seed ^ 0x5eed)?;

    let fit0 = tables[0]
        .fit
        .ok_or_else(|| anyhow::anyhow!("no decay fit at lambda = {}", fm.lambdas[0]))?;
    let calibrated_constant = calibrate_constant(fm.s, fm.lambdas[0], kind, fit0.rate)?;
    let mut rates = Vec::with_capacity(tables.len());
    for (t, r) in tables.iter().zip(&reps) {
        let (ci_lo, ci_hi) = percentile_interval(r.clone(), 0.95);
        let fit = t.fit;
        let pred = predicted_rate(fm.s, t.lambda, kind, calibrated_constant)?;
        rates.push(RateSummary {
            lambda: t.lambda,
            rate: fit.map(|f| f.rate).unwrap_or(f64::NAN),
            ci_lo,
            ci_hi,
            r_squared: fit.map(|f| f.r_squared).unwrap_or(f64::NAN),
            predicted_rate: pred.rate,
            prefactor_formula: pred.prefactor,
            fitted_prefactor: fit.map(|f| f.prefactor()).unwrap_or(f64::NAN),
        });
    }

    let mut differences = Vec::new();
    for i in 0..tables.len() {
        for j in 0..tables.len() {
            if (tables[j].lambda - 2.0 * tables[i].lambda).abs() > 1e-12 {
                continue;
            }
            let diff_reps: Vec<f64> = reps[j].iter().zip(&reps[i]).map(|(b, a)| b - a).collect();
            let (lo, hi) = percentile_interval(diff_reps, 0.95);
            let half = 0.5 * (hi - lo);
            let difference = rates[j].rate - rates[i].rate;
            let expected = fm.s * 2f64.ln();
            differences.push(RateDifference {
                lambda: tables[i].lambda,
                lambda_doubled: tables[j].lambda,
                difference,
                expected,
                ci_half_width: half,
                within: (difference - expected).abs() <= 2.0 * half,
            });
        }
    }

    let spectrum_lo = -kind.finite_laplacian_radius() + cfg.lambda_0 * cfg.ssd.a;
    let spectrum_hi = kind.finite_laplacian_radius() + cfg.lambda_0 * cfg.ssd.b;
    let n_sweep = fm.re_sweep_points.max(1);
    let mut re_sweep = Vec::with_capacity(n_sweep);
    for i in 0..n_sweep {
        let re = if n_sweep == 1 {
            0.5 * (spectrum_lo + spectrum_hi)
        } else {
            spectrum_lo + (spectrum_hi - spectrum_lo) * i as f64 / (n_sweep - 1) as f64
        };
        let mut spec = cfg.ensemble(cfg.lambda_0)?;
        spec.n_realizations = fm.sweep_realizations;
        let t = fractional_moments(&spec, Complex64::new(re, fm.im_z), fm.s, fm.r_max)?;
        re_sweep.push((re, t.rows.iter().map(|r| r.moment).fold(0.0, f64::max)));
    }

    Ok(FracMomResult {
        s: fm.s,
        z,
        rates,
        differences,
        calibrated_constant,
        r2_min: fm.r2_min,
        re_sweep,
        resolvent_bound: fm.im_z.powf(-fm.s),
        tables,
    })
}

impl FracMomResult {
    pub fn fit_quality_check(&self) -> Check {
        let worst = self.rates.iter().map(|r| r.r_squared).fold(f64::INFINITY, f64::min);
        Check::new(
            "fracmom_fit_quality",
            worst >= self.r2_min,
            format!("min R^2 {worst:.4} (target >= {})", self.r2_min),
        )
    }

    pub fn monotonicity_check(&self) -> Check {
        let ok = self
            .rates
            .windows(2)
            .all(|w| w[1].lambda > w[0].lambda && w[1].rate > w[0].rate && w[1].ci_lo > w[0].ci_hi);
        let desc: Vec<String> = self
            .rates
            .iter()
            .map(|r| format!("{}: {:.4} [{:.4}, {:.4}]", r.lambda, r.rate, r.ci_lo, r.ci_hi))
            .collect();
        Check::new("fracmom_rate_increasing", ok, desc.join("; "))
    }

    pub fn doubling_check(&self) -> Check {
        let desc: Vec<String> = self
            .differences
            .iter()
            .map(|d| {
                format!(
                    "{}->{}: {:.4} vs {:.4} +/- 2x{:.4}",
                    d.lambda, d.lambda_doubled, d.difference, d.expected, d.ci_half_width
                )
            })
            .collect();
        Check::new(
            "fracmom_doubling_shift",
            !self.differences.is_empty() && self.differences.iter().all(|d| d.within),
            desc.join("; "),
        )
    }

    pub fn sweep_check(&self) -> Check {
        let worst = self.re_sweep.iter().map(|p| p.1).fold(0.0, f64::max);
        Check::new(
            "fracmom_uniform_in_re_z",
            self.re_sweep.iter().all(|p| p.1.is_finite() && p.1 <= self.resolvent_bound),
            format!(
                "sup over {} values of Re z: {worst:.4e} (resolvent bound {:.4e})",
                self.re_sweep.len(),
                self.resolvent_bound
            ),
        )
    }
}

impl Experiment for FracMomResult {
    fn name(&self) -> &'static str {
        "fracmom"
    }

    fn checks(&self) -> Vec<Check> {
        vec![
            self.fit_quality_check(),
            self.monotonicity_check(),
            self.doubling_check(),
            self.sweep_check(),
        ]
    }

    fn tables(&self) -> Result<Vec<Table>> {
        let rows: Vec<MomentCsvRow> = self
            .tables
            .iter()
            .flat_map(|t| {
                t.rows.iter().map(move |r| MomentCsvRow {
                    s: t.s,
                    lambda: t.lambda,
                    re_z: t.z.re,
                    im_z: t.z.im,
                    r: r.r,
                    moment: r.moment,
                    std_error: r.std_error,
                    n_realizations: t.n_realizations,
                    master_seed: t.master_seed,
                })
            })
            .collect();
        Ok(vec![
            Table::from_rows("fracmom.csv", &rows)?,
            Table::from_rows("fracmom_rates.csv", &self.rates)?,
        ])
    }

    fn summary(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}
