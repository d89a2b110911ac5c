//! Continuity of IDS derivatives in the disorder strength, and the IDS /
//! Kantorovich–Rubinstein experiment on the same coupled pairs.

use anyhow::{bail, Result};
use idslab_core::fourier::{
    char_function, decay_profile, duhamel_bound_check, reconstruct_derivative, CharFunctionSamples,
    DuhamelBoundReport, TimeGrid,
};
use idslab_core::spectral::{dos_window, ids_on_grid, EnergyGrid};
use idslab_core::stats::LineFit;
use serde::Serialize;

use super::{describe_fit, loglog_fit, Check, EnsembleCache, Experiment, PlotData, Table};

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityRow {
    pub k: usize,
    pub lambda_1: f64,
    pub lambda_2: f64,
    pub gap: f64,
    pub split_point: f64,
    pub sup_difference: f64,
    pub tail_bound: f64,
    pub exponent: f64,
    pub implied_constant: f64,
    pub n_realizations: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderFit {
    pub k: usize,
    /// `(m - k - 2) / m`.
    pub exponent: f64,
    pub fit: Option<LineFit>,
    pub slope_ci95: f64,
    /// Max and min of `sup_difference / gap^exponent` over rows.
    pub d_hat: f64,
    pub d_hat_min: f64,
    pub stability_ratio: f64,
    /// Every row satisfies `sup_difference <= d_hat gap^exponent`.
    pub bound_holds: bool,
    /// `2M/(k+2) + 4 C (1+4d+lambda_0_tilde b-lambda_0 a)/(m-k-2)` with `C`
    /// the fitted decay constant; heuristic.
    pub d_formula: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContinuityResult {
    pub m: usize,
    pub window: (f64, f64),
    pub time_grid: TimeGrid,
    pub rows: Vec<ContinuityRow>,
    pub fits: Vec<OrderFit>,
    pub duhamel: Vec<DuhamelBoundReport>,
    pub decay_constant: f64,
    pub slope_tolerance: f64,
    pub r2_min: f64,
    pub stability_max: f64,
}

/// Characteristic functions of every strength in the pair schedule.
fn pair_transforms(
    cache: &mut EnsembleCache,
    pairs: &[(f64, f64)],
    grid: TimeGrid,
) -> Result<Vec<(CharFunctionSamples, CharFunctionSamples)>> {
    let mut out = Vec::with_capacity(pairs.len());
    let mut memo: Vec<(f64, CharFunctionSamples)> = Vec::new();
    for &(l1, l2) in pairs {
        let mut get = |l: f64, cache: &mut EnsembleCache| -> Result<CharFunctionSamples> {
            if let Some((_, c)) = memo.iter().find(|(x, _)| *x == l) {
                return Ok(c.clone());
            }
            let c = char_function(&*cache.get(l)?, grid)?;
            memo.push((l, c.clone()));
            Ok(c)
        };
        let a = get(l1, cache)?;
        let b = get(l2, cache)?;
        out.push((a, b));
    }
    Ok(out)
}

pub fn run_continuity_experiment(cache: &mut EnsembleCache) -> Result<ContinuityResult> {
    let cfg = cache.config().clone();
    cfg.validate()?;
    let pairs = cfg.validate_pairs()?;
    let graph = cfg.graph.build()?;
    let ssd = cfg.ssd.build()?;
    let m = cfg.ssd.m;
    let window = dos_window(graph.kind(), &ssd, cfg.lambda_0, cfg.lambda_0_tilde);
    let xs = EnergyGrid::over_window(window, cfg.continuity.x_points)?;
    let min_gap = pairs
        .iter()
        .map(|(a, b)| (a - b).abs())
        .filter(|g| *g > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !min_gap.is_finite() {
        bail!("every pair in the schedule has equal strengths");
    }
    let time_grid = TimeGrid::for_window(window.1 - window.0, min_gap, m)?;
    let transforms = pair_transforms(cache, &pairs, time_grid)?;
    let bound_factor = cfg.bound_factor()?;

    let mut decay_constant = 0.0f64;
    for (a, b) in &transforms {
        for c in [a, b] {
            decay_constant = decay_constant.max(decay_profile(c, m, bound_factor)?.implied_constant);
        }
    }
    let profile_sup = decay_constant * bound_factor;

    let mut duhamel = Vec::with_capacity(pairs.len());
    let mut rows = Vec::new();
    for (&(l1, l2), (c1, c2)) in pairs.iter().zip(&transforms) {
        duhamel.push(duhamel_bound_check(
            &cfg.ensemble(l1)?,
            c1,
            &cfg.ensemble(l2)?,
            c2,
            cfg.continuity.bound_tolerance,
        )?);
        let gap = (l1 - l2).abs();
        for &k in &cfg.continuity.ks {
            let exponent = (m - k - 2) as f64 / m as f64;
            let (split_point, sup_difference, tail_bound) = if gap > 0.0 {
                let a = gap.powf(-1.0 / m as f64);
                let r = reconstruct_derivative(c1, c2, k, m, &xs.points, a, profile_sup)?;
                (a, r.sup_difference, r.tail_bound)
            } else {
                (f64::INFINITY, 0.0, 0.0)
            };
            rows.push(ContinuityRow {
                k,
                lambda_1: l1,
                lambda_2: l2,
                gap,
                split_point,
                sup_difference,
                tail_bound,
                exponent,
                implied_constant: if gap > 0.0 { sup_difference / gap.powf(exponent) } else { 0.0 },
                n_realizations: cfg.n_realizations,
                master_seed: cfg.master_seed,
            });
        }
    }

    let big_m = ssd.abs_bound();
    let fits = cfg
        .continuity
        .ks
        .iter()
        .map(|&k| fit_order(&rows, k, m, big_m, decay_constant, bound_factor))
        .collect();
    Ok(ContinuityResult {
        m,
        window,
        time_grid,
        rows,
        fits,
        duhamel,
        decay_constant,
        slope_tolerance: cfg.continuity.slope_tolerance,
        r2_min: cfg.continuity.r2_min,
        stability_max: cfg.continuity.stability_max,
    })
}

fn fit_order(rows: &[ContinuityRow], k: usize, m: usize, big_m: f64, c: f64, bound_factor: f64) -> OrderFit {
    let used: Vec<&ContinuityRow> = rows.iter().filter(|r| r.k == k && r.gap > 0.0).collect();
    let gaps: Vec<f64> = used.iter().map(|r| r.gap).collect();
    let sups: Vec<f64> = used.iter().map(|r| r.sup_difference).collect();
    let fit = loglog_fit(&gaps, &sups);
    let exponent = (m - k - 2) as f64 / m as f64;
    let d: Vec<f64> = used.iter().map(|r| r.implied_constant).collect();
    let d_hat = d.iter().cloned().fold(0.0, f64::max);
    let d_hat_min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let bound_holds = used
        .iter()
        .all(|r| r.sup_difference <= d_hat * r.gap.powf(exponent) * (1.0 + 1e-12));
    OrderFit {
        k,
        exponent,
        slope_ci95: fit.map(|f| f.slope_ci(0.95)).unwrap_or(f64::NAN),
        fit,
        d_hat,
        d_hat_min,
        stability_ratio: if d_hat_min > 0.0 { d_hat / d_hat_min } else { f64::INFINITY },
        bound_holds,
        d_formula: 2.0 * big_m / (k as f64 + 2.0) + 4.0 * c * bound_factor / (m - k - 2) as f64,
    }
}

impl ContinuityResult {
    pub fn fit(&self, k: usize) -> Option<&OrderFit> {
        self.fits.iter().find(|f| f.k == k)
    }

    pub fn duhamel_check(&self) -> Check {
        let violations: usize = self.duhamel.iter().map(|r| r.violations).sum();
        let worst = self.duhamel.iter().map(|r| r.ratio).fold(0.0, f64::max);
        let excess = self
            .duhamel
            .iter()
            .map(|r| r.max_excess)
            .fold(f64::NEG_INFINITY, f64::max);
        Check::new(
            "duhamel_difference_bound",
            violations == 0,
            format!(
                "{} pairs x {} times: {violations} violations, sup ratio {worst:.6}, max excess {excess:.3e}",
                self.duhamel.len(),
                self.time_grid.len()
            ),
        )
    }

    pub fn order_check(&self, f: &OrderFit) -> Check {
        let slope = f.fit.map(|x| x.slope).unwrap_or(f64::NAN);
        let r2 = f.fit.map(|x| x.r_squared).unwrap_or(f64::NAN);
        let passed = f.bound_holds
            && f.stability_ratio <= self.stability_max
            && slope >= f.exponent - self.slope_tolerance
            && r2 >= self.r2_min;
        Check::new(
            format!("continuity_k{}", f.k),
            passed,
            format!(
                "{}; target slope >= {:.4}; D_hat {:.4e}, max/min {:.3}; rows bounded {}",
                describe_fit(&f.fit),
                f.exponent - self.slope_tolerance,
                f.d_hat,
                f.stability_ratio,
                f.bound_holds
            ),
        )
    }
}

impl Experiment for ContinuityResult {
    fn name(&self) -> &'static str {
        "continuity"
    }

    fn checks(&self) -> Vec<Check> {
        let mut out = vec![self.duhamel_check()];
        out.extend(self.fits.iter().map(|f| self.order_check(f)));
        out
    }

    fn tables(&self) -> Result<Vec<Table>> {
        Ok(vec![
            Table::from_rows("continuity.csv", &self.rows)?,
            Table::from_rows("duhamel_bound.csv", &self.duhamel)?,
        ])
    }

    fn plots(&self) -> Vec<PlotData> {
        self.fits
            .iter()
            .map(|f| PlotData {
                file: format!("loglog_k{}.dat", f.k),
                columns: ["log_gap".into(), "log_sup_difference".into()],
                points: self
                    .rows
                    .iter()
                    .filter(|r| r.k == f.k && r.gap > 0.0 && r.sup_difference > 0.0)
                    .map(|r| (r.gap.ln(), r.sup_difference.ln()))
                    .collect(),
            })
            .collect()
    }

    fn summary(&self) -> Result<serde_json::Value> {
        Ok(serde_json::json!({
            "m": self.m,
            "window": self.window,
            "time_grid": self.time_grid,
            "decay_constant": self.decay_constant,
            "fits": self.fits,
            "duhamel_max_ratio": self.duhamel.iter().map(|r| r.ratio).fold(0.0, f64::max),
        }))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KrRow {
    pub lambda_1: f64,
    pub lambda_2: f64,
    pub gap: f64,
    pub sup_ids_difference: f64,
    pub d_kr: f64,
    pub d_kr_closed_form: f64,
    pub implied_constant: f64,
    pub n_realizations: usize,
    pub master_seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KrResult {
    pub rows: Vec<KrRow>,
    pub abs_moment: f64,
    pub fit: Option<LineFit>,
    pub c_hat: f64,
    pub bound_holds: bool,
    pub kr_max_error: f64,
    pub kr_tolerance: f64,
    pub slope_target: f64,
}

pub fn run_kr_experiment(cache: &mut EnsembleCache) -> Result<KrResult> {
    let cfg = cache.config().clone();
    cfg.validate()?;
    let pairs = cfg.validate_pairs()?;
    let graph = cfg.graph.build()?;
    let ssd = cfg.ssd.build()?;
    let window = dos_window(graph.kind(), &ssd, cfg.lambda_0, cfg.lambda_0_tilde);
    let xs = EnergyGrid::over_window(window, cfg.kr.ids_points)?;
    let abs_moment = ssd.abs_moment();
    let mut rows = Vec::with_capacity(pairs.len());
    for &(l1, l2) in &pairs {
        let n1 = ids_on_grid(&*cache.get(l1)?, &xs.points);
        let n2 = ids_on_grid(&*cache.get(l2)?, &xs.points);
        let sup = n1.iter().zip(&n2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let d_kr = ssd.kr_distance_scaled(l1, l2)?;
        rows.push(KrRow {
            lambda_1: l1,
            lambda_2: l2,
            gap: (l1 - l2).abs(),
            sup_ids_difference: sup,
            d_kr,
            d_kr_closed_form: (l1 - l2).abs() * abs_moment,
            implied_constant: if d_kr > 0.0 { sup / d_kr.sqrt() } else { 0.0 },
            n_realizations: cfg.n_realizations,
            master_seed: cfg.master_seed,
        });
    }
    let used: Vec<&KrRow> = rows.iter().filter(|r| r.gap > 0.0).collect();
    let fit = loglog_fit(
        &used.iter().map(|r| r.gap).collect::<Vec<_>>(),
        &used.iter().map(|r| r.sup_ids_difference).collect::<Vec<_>>(),
    );
    let c_hat = used.iter().map(|r| r.implied_constant).fold(0.0, f64::max);
    let bound_holds = used
        .iter()
        .all(|r| r.sup_ids_difference <= c_hat * r.d_kr.sqrt() * (1.0 + 1e-12));
    let kr_max_error = rows
        .iter()
        .map(|r| (r.d_kr - r.d_kr_closed_form).abs())
        .fold(0.0, f64::max);
    Ok(KrResult {
        rows,
        abs_moment,
        fit,
        c_hat,
        bound_holds,
        kr_max_error,
        kr_tolerance: cfg.kr.kr_tolerance,
        slope_target: 0.5 - cfg.kr.slope_tolerance,
    })
}

impl KrResult {
    pub fn slope_check(&self) -> Check {
        let slope = self.fit.map(|f| f.slope).unwrap_or(f64::NAN);
        Check::new(
            "ids_continuity_slope",
            slope >= self.slope_target && self.bound_holds,
            format!(
                "{}; target >= {:.3}; C_hat {:.4e}, rows bounded {}",
                describe_fit(&self.fit),
                self.slope_target,
                self.c_hat,
                self.bound_holds
            ),
        )
    }

    pub fn kr_check(&self) -> Check {
        Check::new(
            "kr_equals_gap_times_abs_moment",
            self.kr_max_error <= self.kr_tolerance,
            format!("max |d_KR - gap E|w|| = {:.3e} (tol {:.1e})", self.kr_max_error, self.kr_tolerance),
        )
    }
}

impl Experiment for KrResult {
    fn name(&self) -> &'static str {
        "kr"
    }

    fn checks(&self) -> Vec<Check> {
        vec![self.kr_check(), self.slope_check()]
    }

    fn tables(&self) -> Result<Vec<Table>> {
        Ok(vec![Table::from_rows("kr.csv", &self.rows)?])
    }

    fn plots(&self) -> Vec<PlotData> {
        vec![PlotData {
            file: "loglog_ids.dat".into(),
            columns: ["log_gap".into(), "log_sup_ids_difference".into()],
            points: self
                .rows
                .iter()
                .filter(|r| r.gap > 0.0 && r.sup_ids_difference > 0.0)
                .map(|r| (r.gap.ln(), r.sup_ids_difference.ln()))
                .collect(),
        }]
    }

    fn summary(&self) -> Result<serde_json::Value> {
        Ok(serde_json::json!({
            "abs_moment": self.abs_moment,
            "fit": self.fit,
            "c_hat": self.c_hat,
            "kr_max_error": self.kr_max_error,
        }))
    }
}
