//! Experiment configuration (TOML). Every key has a default, so an empty
//! file is a valid config describing the default 1-D run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use idslab_core::{BumpSsd, EnsembleSpec, GraphSpec};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub n_realizations: usize,
    pub lambda_0: f64,
    pub lambda_0_tilde: f64,
    pub output_dir: PathBuf,
    pub graph: GraphConfig,
    pub ssd: SsdConfig,
    pub continuity: ContinuityConfig,
    pub kr: KrConfig,
    pub dos: DosConfig,
    pub fourier: FourierConfig,
    pub fracmom: FracMomConfig,
    pub duhamel: DuhamelConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 20_240_601,
            n_realizations: 400,
            lambda_0: 16.0,
            lambda_0_tilde: 32.0,
            output_dir: PathBuf::from("idslab-out"),
            graph: GraphConfig::default(),
            ssd: SsdConfig::default(),
            continuity: ContinuityConfig::default(),
            kr: KrConfig::default(),
            dos: DosConfig::default(),
            fourier: FourierConfig::default(),
            fracmom: FracMomConfig::default(),
            duhamel: DuhamelConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphConfig {
    Box { dim: usize, side: usize },
    Bethe { connectivity: usize, depth: usize },
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig::Box { dim: 1, side: 1001 }
    }
}

impl GraphConfig {
    pub fn build(&self) -> Result<GraphSpec> {
        Ok(match *self {
            GraphConfig::Box { dim, side } => GraphSpec::build_box(dim, side)?,
            GraphConfig::Bethe { connectivity, depth } => GraphSpec::build_bethe(connectivity, depth)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SsdConfig {
    pub m: usize,
    pub a: f64,
    pub b: f64,
}

impl Default for SsdConfig {
    fn default() -> Self {
        Self { m: 6, a: -1.0, b: 1.0 }
    }
}

impl SsdConfig {
    pub fn build(&self) -> Result<BumpSsd> {
        Ok(BumpSsd::new(self.m, self.a, self.b)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ContinuityConfig {
    /// First strength of every generated pair.
    pub base: f64,
    /// Generated gaps are geometric in `[gap_min, gap_max]`.
    pub gap_min: f64,
    pub gap_max: f64,
    pub n_pairs: usize,
    /// Explicit `[lambda_1, lambda_2]` pairs; replaces the generated ones.
    pub pairs: Vec<[f64; 2]>,
    pub ks: Vec<usize>,
    pub slope_tolerance: f64,
    pub r2_min: f64,
    pub stability_max: f64,
    pub x_points: usize,
    pub bound_tolerance: f64,
}

impl Default for ContinuityConfig {
    fn default() -> Self {
        Self {
            base: 16.0,
            gap_min: 0.16,
            gap_max: 8.0,
            n_pairs: 8,
            pairs: Vec::new(),
            ks: vec![0, 1, 2],
            slope_tolerance: 0.15,
            r2_min: 0.85,
            stability_max: 10.0,
            x_points: 512,
            bound_tolerance: 1e-10,
        }
    }
}

impl ContinuityConfig {
    pub fn resolved_pairs(&self) -> Vec<(f64, f64)> {
        if !self.pairs.is_empty() {
            return self.pairs.iter().map(|p| (p[0], p[1])).collect();
        }
        match self.n_pairs {
            0 => Vec::new(),
            1 => vec![(self.base, self.base + self.gap_min)],
            n => {
                let ratio = (self.gap_max / self.gap_min).ln() / (n - 1) as f64;
                (0..n)
                    .map(|i| (self.base, self.base + self.gap_min * (ratio * i as f64).exp()))
                    .collect()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct KrConfig {
    pub slope_tolerance: f64,
    pub ids_points: usize,
    pub kr_tolerance: f64,
}

impl Default for KrConfig {
    fn default() -> Self {
        Self {
            slope_tolerance: 0.1,
            ids_points: 4096,
            kr_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DosConfig {
    pub lambdas: Vec<f64>,
    pub ks: Vec<usize>,
    pub grid_points: usize,
    /// Top smoothing level; `None` picks 4 x the mean weighted spacing.
    pub eps0: Option<f64>,
    pub halvings: usize,
    pub agreement_tol: f64,
    pub central_fraction: f64,
    pub variation_tol: f64,
    pub support_realizations: usize,
    pub support_tol: f64,
}

impl Default for DosConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![16.0, 20.0, 24.0, 28.0, 32.0],
            ks: vec![0, 1],
            grid_points: 512,
            eps0: None,
            halvings: 3,
            agreement_tol: 0.05,
            central_fraction: 0.8,
            variation_tol: 0.2,
            support_realizations: 100,
            support_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FourierConfig {
    pub m: usize,
    pub side: usize,
    pub lambda: f64,
    pub n_realizations: usize,
    pub dt: f64,
    pub t_max: f64,
    pub slope_margin: f64,
    /// Frequencies for the smooth-toy check of the bump density.
    pub toy_t_max: f64,
    pub toy_points: usize,
}

impl Default for FourierConfig {
    fn default() -> Self {
        Self {
            m: 4,
            side: 41,
            lambda: 16.0,
            n_realizations: 10_000,
            dt: 0.002,
            t_max: 3.0,
            slope_margin: 0.5,
            toy_t_max: 200.0,
            toy_points: 2000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct FracMomConfig {
    pub lambdas: Vec<f64>,
    pub s: f64,
    pub re_z: f64,
    pub im_z: f64,
    pub r_max: usize,
    pub n_realizations: usize,
    pub n_boot: usize,
    pub r2_min: f64,
    pub re_sweep_points: usize,
    pub sweep_realizations: usize,
}

impl Default for FracMomConfig {
    fn default() -> Self {
        Self {
            lambdas: vec![16.0, 32.0, 64.0],
            s: 0.5,
            re_z: 0.0,
            im_z: 1e-3,
            r_max: 12,
            n_realizations: 1000,
            n_boot: 500,
            r2_min: 0.9,
            re_sweep_points: 5,
            sweep_realizations: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DuhamelConfig {
    pub n_pairs: usize,
    pub dim: usize,
    pub times: Vec<f64>,
    pub n_quad: usize,
    pub tolerance: f64,
    /// Residuals below this count as the floating-point floor.
    pub floor: f64,
}

impl Default for DuhamelConfig {
    fn default() -> Self {
        Self {
            n_pairs: 20,
            dim: 8,
            times: vec![0.5, 1.0, 2.0],
            n_quad: 32,
            tolerance: 1e-10,
            floor: 1e-12,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text)
    }

    /// Checks shared by every experiment.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_0 > 0.0 && self.lambda_0_tilde >= self.lambda_0) {
            bail!("need 0 < lambda_0 <= lambda_0_tilde");
        }
        if self.n_realizations == 0 {
            bail!("n_realizations must be positive");
        }
        self.graph.build()?;
        self.ssd.build()?;
        Ok(())
    }

    /// Checks for the continuity and KR experiments.
    pub fn validate_pairs(&self) -> Result<Vec<(f64, f64)>> {
        let pairs = self.continuity.resolved_pairs();
        if pairs.is_empty() {
            bail!("the lambda-pair schedule is empty");
        }
        let (lo, hi) = (self.lambda_0, self.lambda_0_tilde);
        for &(l1, l2) in &pairs {
            for l in [l1, l2] {
                if !(l >= lo - 1e-12 && l <= hi + 1e-12) {
                    bail!("pair ({l1}, {l2}) leaves [{lo}, {hi}]");
                }
            }
        }
        let m = self.ssd.m;
        if let Some(&k) = self.continuity.ks.iter().find(|&&k| k + 2 >= m) {
            bail!("derivative order k={k} requires k < m-2 (m={m})");
        }
        if self.n_realizations < 100 {
            bail!("statistical runs need at least 100 realizations, got {}", self.n_realizations);
        }
        Ok(pairs)
    }

    pub fn ensemble(&self, lambda: f64) -> Result<EnsembleSpec> {
        Ok(EnsembleSpec::new(
            Arc::new(self.graph.build()?),
            Arc::new(self.ssd.build()?),
            lambda,
            self.n_realizations,
            self.master_seed,
        )?)
    }

    /// `1 + 4d + lambda_0_tilde b - lambda_0 a`.
    pub fn bound_factor(&self) -> Result<f64> {
        let d = self.graph.build()?.kind().effective_dim();
        Ok(1.0 + 4.0 * d + self.lambda_0_tilde * self.ssd.b - self.lambda_0 * self.ssd.a)
    }
}
