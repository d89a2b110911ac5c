//! Numerical check of the Duhamel identity on random symmetric pairs.

use anyhow::{bail, Result};
use idslab_core::fourier::duhamel_identity_check;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Check, EnsembleCache, Experiment, Table};

/// Node counts of the convergence sweep.
pub const QUAD_SWEEP: [usize; 5] = [4, 8, 16, 32, 64];

#[derive(Debug, Clone, Serialize)]
pub struct DuhamelRow {
    pub pair: usize,
    pub t: f64,
    pub n_quad: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DuhamelResult {
    pub rows: Vec<DuhamelRow>,
    pub n_quad: usize,
    pub tolerance: f64,
    pub floor: f64,
    pub worst_at_n_quad: f64,
    /// Every doubling decreases the residual unless it is already within
    /// ten times the smallest residual of its sweep (or below `floor`).
    pub monotone: bool,
}

fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    (&a + a.transpose()) * 0.5
}

pub fn run_duhamel_check(cache: &mut EnsembleCache) -> Result<DuhamelResult> {
    let cfg = cache.config().clone();
    let dc = &cfg.duhamel;
    if dc.n_pairs == 0 || dc.times.is_empty() {
        bail!("Duhamel check needs at least one pair and one time");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.master_seed);
    let mut sweep: Vec<usize> = QUAD_SWEEP.to_vec();
    if !sweep.contains(&dc.n_quad) {
        sweep.push(dc.n_quad);
        sweep.sort_unstable();
    }
    let mut rows = Vec::new();
    let mut monotone = true;
    let mut worst = 0.0f64;
    for pair in 0..dc.n_pairs {
        let a = random_symmetric(&mut rng, dc.dim);
        let b = random_symmetric(&mut rng, dc.dim);
        for &t in &dc.times {
            let residuals = sweep
                .iter()
                .map(|&n| duhamel_identity_check(&a, &b, t, n))
                .collect::<idslab_core::Result<Vec<f64>>>()?;
            // Roundoff floor of this case: the plateau the sweep settles on.
            let case_floor = dc.floor.max(10.0 * residuals.iter().cloned().fold(f64::INFINITY, f64::min));
            for (i, (&n, &residual)) in sweep.iter().zip(&residuals).enumerate() {
                if i > 0 && residual > residuals[i - 1] && residual > case_floor {
                    monotone = false;
                }
                if n == dc.n_quad {
                    worst = worst.max(residual);
                }
                rows.push(DuhamelRow {
                    pair,
                    t,
                    n_quad: n,
                    residual,
                });
            }
        }
    }
    Ok(DuhamelResult {
        rows,
        n_quad: dc.n_quad,
        tolerance: dc.tolerance,
        floor: dc.floor,
        worst_at_n_quad: worst,
        monotone,
    })
}

impl DuhamelResult {
    pub fn check(&self) -> Check {
        Check::new(
            "duhamel_identity",
            self.worst_at_n_quad <= self.tolerance && self.monotone,
            format!(
                "worst residual at n_quad={} is {:.3e} (tol {:.0e}); monotone under doubling {}",
                self.n_quad, self.worst_at_n_quad, self.tolerance, self.monotone
            ),
        )
    }
}

impl Experiment for DuhamelResult {
    fn name(&self) -> &'static str {
        "duhamel-check"
    }

    fn checks(&self) -> Vec<Check> {
        vec![self.check()]
    }

    fn tables(&self) -> Result<Vec<Table>> {
        Ok(vec![Table::from_rows("duhamel_identity.csv", &self.rows)?])
    }

    fn summary(&self) -> Result<serde_json::Value> {
        Ok(serde_json::json!({
            "n_quad": self.n_quad,
            "worst_at_n_quad": self.worst_at_n_quad,
            "monotone": self.monotone,
        }))
    }
}
