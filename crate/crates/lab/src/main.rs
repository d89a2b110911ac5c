use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use idslab::config::ExperimentConfig;
use idslab::experiments::{continuity, dos, duhamel, fourier, fracmom, EnsembleCache, Experiment};
use idslab::report::emit_report;

#[derive(Parser)]
#[command(name = "idslab", version, about = "Disorder-continuity experiments for random Schroedinger operators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Continuity exponents of IDS derivatives across coupled strength pairs.
    Continuity(Common),
    /// IDS sup-difference against the Kantorovich-Rubinstein distance.
    Kr(Common),
    /// Density-of-states estimation and uniform derivative bounds.
    Dos(Common),
    /// Decay of the ensemble-averaged Fourier transform.
    Fourier(Common),
    /// Fractional-moment decay rates.
    Fracmom(Common),
    /// Quadrature check of the Duhamel identity on random matrices.
    DuhamelCheck(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config file; defaults apply to omitted keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.master_seed = s;
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<bool> {
    let (common, which) = match &cli.command {
        Command::Continuity(c) => (c, 0),
        Command::Kr(c) => (c, 1),
        Command::Dos(c) => (c, 2),
        Command::Fourier(c) => (c, 3),
        Command::Fracmom(c) => (c, 4),
        Command::DuhamelCheck(c) => (c, 5),
    };
    let cfg = common.resolve()?;
    let mut cache = EnsembleCache::new(&cfg);
    let result: Box<dyn Experiment> = match which {
        0 => Box::new(continuity::run_continuity_experiment(&mut cache)?),
        1 => Box::new(continuity::run_kr_experiment(&mut cache)?),
        2 => Box::new(dos::run_dos_experiment(&mut cache)?),
        3 => Box::new(fourier::run_fourier_experiment(&mut cache)?),
        4 => Box::new(fracmom::run_fracmom_experiment(&mut cache)?),
        _ => Box::new(duhamel::run_duhamel_check(&mut cache)?),
    };
    let dir = emit_report(&cfg.output_dir, &cfg, result.as_ref())?;
    for c in result.checks() {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!("wrote {}", dir.display());
    Ok(result.passed())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
