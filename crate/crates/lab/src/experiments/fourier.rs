//! Decay of Fourier transforms: the bump density itself, and the
//! ensemble-averaged local measure of a short chain.

use std::sync::Arc;

use anyhow::Result;
use idslab_core::fourier::{char_function, decay_profile, DecayReport, TimeGrid};
use idslab_core::quad;
use idslab_core::spectral::sample_ensemble;
use idslab_core::{BumpSsd, EnsembleSpec, GraphSpec};
use serde::Serialize;

use super::{Check, EnsembleCache, Experiment, PlotData, Table};

#[derive(Debug, Clone, Serialize)]
pub struct ToyRow {
    pub t: f64,
    pub abs_transform: f64,
    pub scaled: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChfRow {
    pub t: f64,
    pub re: f64,
    pub im: f64,
    pub abs: f64,
    pub std_error: f64,
    pub lambda: f64,
    pub n_realizations: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FourierResult {
    pub m: usize,
    /// `sup_t |t|^{m+1} |rho_hat(t)|` over the sampled window.
    pub toy_sup: f64,
    /// `int |rho^{(m+1)}|`, which bounds the quantity above.
    pub toy_bound: f64,
    pub decay: DecayReport,
    pub slope_target: f64,
    #[serde(skip)]
    pub toy_rows: Vec<ToyRow>,
    #[serde(skip)]
    pub chf_rows: Vec<ChfRow>,
}

pub fn run_fourier_experiment(cache: &mut EnsembleCache) -> Result<FourierResult> {
    let cfg = cache.config().clone();
    cfg.validate()?;
    let fc = &cfg.fourier;
    let m = fc.m;
    let ssd = Arc::new(BumpSsd::new(m, cfg.ssd.a, cfg.ssd.b)?);

    let toy_bound = quad::integrate(
        |x| ssd.density_derivative(m + 1, x).map(f64::abs).unwrap_or(f64::NAN),
        cfg.ssd.a,
        cfg.ssd.b,
        1e-12,
    );
    let toy_rows: Vec<ToyRow> = (1..=fc.toy_points)
        .map(|i| {
            let t = fc.toy_t_max * i as f64 / fc.toy_points as f64;
            let a = ssd.fourier_transform(t).norm();
            ToyRow {
                t,
                abs_transform: a,
                scaled: t.powi(m as i32 + 1) * a,
            }
        })
        .collect();
    let toy_sup = toy_rows.iter().map(|r| r.scaled).fold(0.0, f64::max);

    let spec = EnsembleSpec::new(
        Arc::new(GraphSpec::build_box(1, fc.side)?),
        ssd.clone(),
        fc.lambda,
        fc.n_realizations,
        cfg.master_seed,
    )?;
    let ens = sample_ensemble(&spec)?;
    let chf = char_function(&ens, TimeGrid::new(fc.dt, fc.t_max)?)?;
    let decay = decay_profile(&chf, m, cfg.bound_factor()?)?;
    let (t, v, se) = chf.positive_half();
    let chf_rows = t
        .iter()
        .zip(v)
        .zip(se)
        .map(|((t, v), se)| ChfRow {
            t: *t,
            re: v.re,
            im: v.im,
            abs: v.norm(),
            std_error: *se,
            lambda: fc.lambda,
            n_realizations: fc.n_realizations,
            master_seed: cfg.master_seed,
        })
        .collect();
    Ok(FourierResult {
        m,
        toy_sup,
        toy_bound,
        decay,
        slope_target: -(m as f64 - 1.0) + fc.slope_margin,
        toy_rows,
        chf_rows,
    })
}

impl FourierResult {
    pub fn toy_check(&self) -> Check {
        Check::new(
            "bump_transform_bounded",
            self.toy_sup <= self.toy_bound * (1.0 + 1e-9),
            format!(
                "sup |t|^{} |rho_hat| = {:.6e} <= int |rho^({})| = {:.6e}",
                self.m + 1,
                self.toy_sup,
                self.m + 1,
                self.toy_bound
            ),
        )
    }

    pub fn decay_check(&self) -> Check {
        let slope = self.decay.fit.map(|f| f.slope).unwrap_or(f64::NAN);
        Check::new(
            "ensemble_transform_decay",
            self.decay.flag.is_none() && slope <= self.slope_target,
            format!(
                "log-log slope {slope:.4} over t in [{:.4}, {:.4}] ({} points), target <= {:.2}; flag {:?}",
                self.decay.valid_window.0,
                self.decay.valid_window.1,
                self.decay.window_points,
                self.slope_target,
                self.decay.flag
            ),
        )
    }
}

impl Experiment for FourierResult {
    fn name(&self) -> &'static str {
        "fourier"
    }

    fn checks(&self) -> Vec<Check> {
        vec![self.toy_check(), self.decay_check()]
    }

    fn tables(&self) -> Result<Vec<Table>> {
        Ok(vec![
            Table::from_rows("char_function.csv", &self.chf_rows)?,
            Table::from_rows("bump_transform.csv", &self.toy_rows)?,
        ])
    }

    fn plots(&self) -> Vec<PlotData> {
        vec![PlotData {
            file: "loglog_char_function.dat".into(),
            columns: ["log_t".into(), "log_abs".into()],
            points: self
                .chf_rows
                .iter()
                .filter(|r| r.t > 0.0 && r.abs > 0.0)
                .map(|r| (r.t.ln(), r.abs.ln()))
                .collect(),
        }]
    }

    fn summary(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(self)?)
    }
}
