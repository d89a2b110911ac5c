//! Writes experiment results to disk: CSV tables, a JSON summary and
//! two-column plot files, all under `<out>/<experiment>/`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::experiments::{Check, Experiment, PlotData};

pub const SCHEMA_VERSION: u32 = 1;

/// The JSON schema describing `summary.json`, also shipped in `docs/`.
pub const SUMMARY_SCHEMA: &str = include_str!("../../../docs/summary.schema.json");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub experiment: String,
    pub master_seed: u64,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub results: serde_json::Value,
    pub config: ExperimentConfig,
}

pub fn build_summary(cfg: &ExperimentConfig, exp: &dyn Experiment) -> Result<Summary> {
    let checks = exp.checks();
    Ok(Summary {
        schema_version: SCHEMA_VERSION,
        experiment: exp.name().to_string(),
        master_seed: cfg.master_seed,
        passed: !checks.is_empty() && checks.iter().all(|c| c.passed),
        checks,
        results: exp.summary()?,
        config: cfg.clone(),
    })
}

pub fn render_plot(p: &PlotData) -> String {
    let mut s = format!("# {} {}\n", p.columns[0], p.columns[1]);
    for (x, y) in &p.points {
        let _ = writeln!(s, "{x:?} {y:?}");
    }
    s
}

/// Emits everything for one experiment and returns its directory.
pub fn emit_report(out_dir: &Path, cfg: &ExperimentConfig, exp: &dyn Experiment) -> Result<PathBuf> {
    let tables = exp.tables()?;
    if tables.is_empty() || tables.iter().all(|t| t.contents.lines().count() <= 1) {
        bail!("experiment `{}` produced no result rows", exp.name());
    }
    let summary = build_summary(cfg, exp)?;
    if summary.checks.is_empty() {
        bail!("experiment `{}` produced no checks", exp.name());
    }
    let dir = out_dir.join(exp.name());
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for t in &tables {
        let path = dir.join(&t.file);
        fs::write(&path, &t.contents).with_context(|| format!("writing {}", path.display()))?;
    }
    for p in exp.plots() {
        let path = dir.join(&p.file);
        fs::write(&path, render_plot(&p)).with_context(|| format!("writing {}", path.display()))?;
    }
    let path = dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary)?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(dir)
}
