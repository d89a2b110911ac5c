//! Density-of-states estimation: spectrum support, Herglotz sign, agreement
//! of the Borel and spectral routes, and sup-norm bounds across strengths.

use anyhow::{bail, Result};
use idslab_core::operator::spectrum_support_check;
use idslab_core::spectral::{
    dos_window, g_derivative_spectral, g_derivatives_borel, mean_weighted_spacing, relative_sup_error,
    sample_ensemble, supnorm_bound_report, DosGrid, EnergyGrid, SmoothingSchedule, SupNormReport,
};
use serde::Serialize;

use super::{Check, EnsembleCache, Experiment, Table};

#[derive(Debug, Clone, Serialize)]
pub struct SupportRow {
    pub lambda: f64,
    pub realizations: usize,
    pub interval_lo: f64,
    pub interval_hi: f64,
    /// Smallest distance of an eigenvalue inside the interval (negative
    /// when outside).
    pub worst_margin: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DosRow {
    pub lambda: f64,
    pub k: usize,
    pub method: &'static str,
    pub energy: f64,
    pub value: f64,
    pub uncertainty: f64,
    pub std_error: f64,
    pub smoothing: f64,
    pub n_realizations: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DosResult {
    pub window: (f64, f64),
    pub spacing: f64,
    pub schedule: SmoothingSchedule,
    pub bandwidth: f64,
    pub support: Vec<SupportRow>,
    pub support_tol: f64,
    pub min_im_resolvent: f64,
    /// Relative sup error between the two routes at `lambda_0`, `k = 0`.
    pub agreement_error: f64,
    pub agreement_tol: f64,
    pub central_fraction: f64,
    pub supnorm: Vec<SupNormReport>,
    pub variation_tol: f64,
    #[serde(skip)]
    pub borel: Vec<DosGrid>,
    #[serde(skip)]
    pub spectral: DosGrid,
}

pub fn run_dos_experiment(cache: &mut EnsembleCache) -> Result<DosResult> {
    let cfg = cache.config().clone();
    cfg.validate()?;
    let dc = &cfg.dos;
    if dc.lambdas.is_empty() {
        bail!("dos experiment needs at least one strength");
    }
    let graph = cfg.graph.build()?;
    let ssd = cfg.ssd.build()?;
    let window = dos_window(graph.kind(), &ssd, cfg.lambda_0, cfg.lambda_0_tilde);
    let grid = EnergyGrid::over_window(window, dc.grid_points)?;

    let mut support = Vec::with_capacity(dc.lambdas.len());
    for &l in &dc.lambdas {
        let mut spec = cfg.ensemble(l)?;
        spec.n_realizations = dc.support_realizations.min(cfg.n_realizations);
        let ens = sample_ensemble(&spec)?;
        let mut worst = f64::INFINITY;
        let mut interval = (0.0, 0.0);
        for s in &ens.samples {
            let c = spectrum_support_check(&spec, &s.eigenvalues);
            worst = worst.min(c.worst_margin);
            interval = c.interval;
        }
        support.push(SupportRow {
            lambda: l,
            realizations: spec.n_realizations,
            interval_lo: interval.0,
            interval_hi: interval.1,
            worst_margin: worst,
            passed: worst >= -dc.support_tol,
        });
    }

    let reference = cache.get(cfg.lambda_0)?;
    let spacing = mean_weighted_spacing(&reference, window);
    let schedule = match dc.eps0 {
        Some(e) => SmoothingSchedule::halving(e, dc.halvings)?,
        None => SmoothingSchedule::halving(4.0 * spacing, dc.halvings)?,
    };
    let bandwidth = schedule.matched_bandwidth();
    let spectral = g_derivative_spectral(&reference, 0, &grid, bandwidth)?;

    let mut ks = dc.ks.clone();
    if !ks.contains(&0) {
        ks.insert(0, 0);
    }
    let mut lambdas = dc.lambdas.clone();
    if !lambdas.contains(&cfg.lambda_0) {
        lambdas.insert(0, cfg.lambda_0);
    }
    let mut borel = Vec::new();
    let mut min_im_resolvent = f64::INFINITY;
    for &l in &lambdas {
        let run = g_derivatives_borel(&cfg.ensemble(l)?, &ks, &grid, &schedule)?;
        min_im_resolvent = min_im_resolvent.min(run.min_im_resolvent);
        borel.extend(run.grids);
    }
    let at_ref = borel
        .iter()
        .find(|g| g.lambda == cfg.lambda_0 && g.k == 0)
        .expect("reference grid computed above");
    let central = grid.central_indices(dc.central_fraction);
    let agreement_error = relative_sup_error(at_ref, &spectral, &central);

    let in_list: Vec<DosGrid> = borel
        .iter()
        .filter(|g| dc.lambdas.contains(&g.lambda))
        .cloned()
        .collect();
    let supnorm = dc
        .ks
        .iter()
        .map(|&k| {
            supnorm_bound_report(
                &in_list,
                k,
                graph.kind().effective_dim(),
                (cfg.lambda_0, cfg.lambda_0_tilde),
                ssd.support(),
            )
        })
        .collect::<idslab_core::Result<Vec<_>>>()?;

    Ok(DosResult {
        window,
        spacing,
        schedule,
        bandwidth,
        support,
        support_tol: dc.support_tol,
        min_im_resolvent,
        agreement_error,
        agreement_tol: dc.agreement_tol,
        central_fraction: dc.central_fraction,
        supnorm,
        variation_tol: dc.variation_tol,
        borel,
        spectral,
    })
}

impl DosResult {
    pub fn support_check(&self) -> Check {
        let worst = self.support.iter().map(|r| r.worst_margin).fold(f64::INFINITY, f64::min);
        Check::new(
            "spectrum_support",
            self.support.iter().all(|r| r.passed),
            format!(
                "{} strengths, worst margin {worst:.3e} (tol {:.0e})",
                self.support.len(),
                self.support_tol
            ),
        )
    }

    pub fn herglotz_check(&self) -> Check {
        Check::new(
            "herglotz_sign",
            self.min_im_resolvent > 0.0,
            format!("min Im F over all sampled z and realizations = {:.3e}", self.min_im_resolvent),
        )
    }

    pub fn agreement_check(&self) -> Check {
        Check::new(
            "route_agreement",
            self.agreement_error <= self.agreement_tol,
            format!(
                "relative sup error {:.4} over central {:.0}% (tol {}); eps {:?}, sigma {:.4e}",
                self.agreement_error,
                100.0 * self.central_fraction,
                self.agreement_tol,
                self.schedule.eps,
                self.bandwidth
            ),
        )
    }

    pub fn supnorm_check(&self, r: &SupNormReport) -> Check {
        Check::new(
            format!("uniform_bound_k{}", r.k),
            r.relative_variation <= self.variation_tol && !r.increasing_trend,
            format!(
                "sup norms {:?} at lambda {:?}: variation {:.3} (tol {}), increasing trend {}",
                r.sup_norms, r.lambdas, r.relative_variation, self.variation_tol, r.increasing_trend
            ),
        )
    }
}

impl Experiment for DosResult {
    fn name(&self) -> &'static str {
        "dos"
    }

    fn checks(&self) -> Vec<Check> {
        let mut out = vec![self.support_check(), self.herglotz_check(), self.agreement_check()];
        out.extend(self.supnorm.iter().map(|r| self.supnorm_check(r)));
        out
    }

    fn tables(&self) -> Result<Vec<Table>> {
        let mut rows = Vec::new();
        for g in self.borel.iter().chain(std::iter::once(&self.spectral)) {
            for (i, &x) in g.grid.points.iter().enumerate() {
                rows.push(DosRow {
                    lambda: g.lambda,
                    k: g.k,
                    method: g.method.tag(),
                    energy: x,
                    value: g.values[i],
                    uncertainty: g.uncertainty[i],
                    std_error: g.std_error[i],
                    smoothing: g.smoothing,
                    n_realizations: g.n_realizations,
                    master_seed: g.master_seed,
                });
            }
        }
        Ok(vec![
            Table::from_rows("dos.csv", &rows)?,
            Table::from_rows("support.csv", &self.support)?,
        ])
    }

    fn summary(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}
