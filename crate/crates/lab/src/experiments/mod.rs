//! Experiment drivers. Each returns a typed result that can list its
//! assertion checks, CSV tables and plot data for [`crate::report`].

use std::collections::BTreeMap;
use std::sync::Arc;

use anyhow::Result;
use idslab_core::spectral::{sample_ensemble, SpectralEnsemble};
use idslab_core::stats::{fit_line, LineFit};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub mod continuity;
pub mod dos;
pub mod duhamel;
pub mod fourier;
pub mod fracmom;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// A CSV table ready to be written.
#[derive(Debug, Clone)]
pub struct Table {
    pub file: String,
    pub contents: String,
}

impl Table {
    pub fn from_rows<T: Serialize>(file: &str, rows: &[T]) -> Result<Self> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        Ok(Self {
            file: file.to_string(),
            contents: String::from_utf8(w.into_inner()?)?,
        })
    }
}

/// Two-column whitespace-separated plot data.
#[derive(Debug, Clone)]
pub struct PlotData {
    pub file: String,
    pub columns: [String; 2],
    pub points: Vec<(f64, f64)>,
}

pub trait Experiment {
    fn name(&self) -> &'static str;
    fn checks(&self) -> Vec<Check>;
    fn tables(&self) -> Result<Vec<Table>>;
    fn plots(&self) -> Vec<PlotData> {
        Vec::new()
    }
    fn summary(&self) -> Result<serde_json::Value>;

    fn passed(&self) -> bool {
        self.checks().iter().all(|c| c.passed)
    }
}

/// Spectral ensembles of the configured graph and SSD, keyed by strength.
/// All share the master seed, so any two of them are coupled.
pub struct EnsembleCache {
    cfg: ExperimentConfig,
    map: BTreeMap<u64, Arc<SpectralEnsemble>>,
}

impl EnsembleCache {
    pub fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            map: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn get(&mut self, lambda: f64) -> Result<Arc<SpectralEnsemble>> {
        let key = lambda.to_bits();
        if let Some(e) = self.map.get(&key) {
            return Ok(e.clone());
        }
        let ens = Arc::new(sample_ensemble(&self.cfg.ensemble(lambda)?)?);
        self.map.insert(key, ens.clone());
        Ok(ens)
    }
}

/// Least-squares line through `(ln x, ln y)` over points with `x, y > 0`.
pub fn loglog_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    fit_line(&lx, &ly, None)
}

pub fn describe_fit(fit: &Option<LineFit>) -> String {
    match fit {
        Some(f) => format!(
            "slope {:.4} +/- {:.4} (95%), R^2 {:.4}, n {}",
            f.slope,
            f.slope_ci(0.95),
            f.r_squared,
            f.n
        ),
        None => "no fit (fewer than two usable points)".to_string(),
    }
}
