//! Acceptance suite. Each test prints one `PASS`/`FAIL` line and asserts
//! the criterion. Expensive runs are shared through `OnceLock`s, so the
//! default ensembles are sampled once per process.

use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use idslab::config::ExperimentConfig;
use idslab::experiments::continuity::{run_continuity_experiment, run_kr_experiment, ContinuityResult, KrResult};
use idslab::experiments::dos::{run_dos_experiment, DosResult};
use idslab::experiments::duhamel::run_duhamel_check;
use idslab::experiments::fourier::run_fourier_experiment;
use idslab::experiments::fracmom::run_fracmom_experiment;
use idslab::experiments::{Check, EnsembleCache};
use idslab_core::BumpSsd;

fn config() -> &'static ExperimentConfig {
    static CFG: OnceLock<ExperimentConfig> = OnceLock::new();
    CFG.get_or_init(ExperimentConfig::default)
}

fn cache() -> &'static Mutex<EnsembleCache> {
    static CACHE: OnceLock<Mutex<EnsembleCache>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(EnsembleCache::new(config())))
}

fn continuity() -> &'static ContinuityResult {
    static R: OnceLock<ContinuityResult> = OnceLock::new();
    R.get_or_init(|| run_continuity_experiment(&mut cache().lock().unwrap()).expect("continuity run"))
}

fn kr() -> &'static KrResult {
    static R: OnceLock<KrResult> = OnceLock::new();
    R.get_or_init(|| run_kr_experiment(&mut cache().lock().unwrap()).expect("kr run"))
}

fn dos() -> &'static DosResult {
    static R: OnceLock<DosResult> = OnceLock::new();
    R.get_or_init(|| run_dos_experiment(&mut cache().lock().unwrap()).expect("dos run"))
}

fn verdict(id: usize, title: &str, checks: &[Check], started: Instant) {
    let passed = !checks.is_empty() && checks.iter().all(|c| c.passed);
    let detail: Vec<String> = checks
        .iter()
        .map(|c| format!("[{} {}] {}", if c.passed { "ok" } else { "x" }, c.name, c.detail))
        .collect();
    println!(
        "{} criterion {id} ({title}, {:.1} s): {}",
        if passed { "PASS" } else { "FAIL" },
        started.elapsed().as_secs_f64(),
        detail.join(" | ")
    );
    assert!(passed, "criterion {id} ({title}) failed");
}

#[test]
fn criterion_01_duhamel_identity() {
    let t = Instant::now();
    let r = run_duhamel_check(&mut EnsembleCache::new(config())).unwrap();
    assert_eq!(config().duhamel.n_pairs, 20);
    assert_eq!(config().duhamel.dim, 8);
    assert_eq!(config().duhamel.n_quad, 32);
    assert_eq!(config().duhamel.tolerance, 1e-10);
    verdict(1, "Duhamel identity", &[r.check()], t);
}

#[test]
fn criterion_02_duhamel_difference_bound() {
    let t = Instant::now();
    let r = continuity();
    assert_eq!(config().continuity.bound_tolerance, 1e-10);
    verdict(2, "Duhamel difference bound", &[r.duhamel_check()], t);
}

#[test]
fn criterion_03_kr_distance() {
    let t = Instant::now();
    let ssd = BumpSsd::new(2, -1.0, 1.0).unwrap();
    let closed = 63.0 / 256.0;
    let moment_err = (ssd.abs_moment() - closed).abs();
    let pairs = [
        (0.5, 1.0),
        (1.0, 3.0),
        (2.5, 2.6),
        (16.0, 32.0),
        (16.0, 16.16),
        (20.0, 4.0),
        (7.0, 11.5),
        (0.01, 0.02),
        (100.0, 101.0),
        (3.3, 33.0),
    ];
    let worst = pairs
        .iter()
        .map(|&(a, b)| (ssd.kr_distance_scaled(a, b).unwrap() - (a - b).abs() * ssd.abs_moment()).abs())
        .fold(0.0, f64::max);
    let checks = [
        Check::new("kr_linear", worst <= 1e-8, format!("worst |d_KR - gap E|w|| = {worst:.3e} over 10 pairs (tol 1e-8)")),
        Check::new(
            "abs_moment_closed_form",
            moment_err <= 1e-12,
            format!("E|w| = {:.15} vs 63/256, error {moment_err:.3e} (tol 1e-12)", ssd.abs_moment()),
        ),
    ];
    verdict(3, "KR distance", &checks, t);
}

#[test]
fn criterion_04_spectrum_support() {
    let t = Instant::now();
    let r = dos();
    assert!(r.support.iter().all(|s| s.realizations == 100));
    assert_eq!(r.support_tol, 1e-10);
    verdict(4, "spectrum support", &[r.support_check()], t);
}

#[test]
fn criterion_05_herglotz_and_route_agreement() {
    let t = Instant::now();
    let r = dos();
    assert_eq!(r.agreement_tol, 0.05);
    assert_eq!(r.central_fraction, 0.8);
    verdict(5, "Herglotz sign and route agreement", &[r.herglotz_check(), r.agreement_check()], t);
}

#[test]
fn criterion_06_uniform_derivative_bounds() {
    let t = Instant::now();
    let r = dos();
    assert_eq!(r.variation_tol, 0.2);
    let checks: Vec<Check> = r
        .supnorm
        .iter()
        .filter(|s| s.k <= 1)
        .map(|s| r.supnorm_check(s))
        .collect();
    assert_eq!(checks.len(), 2);
    verdict(6, "uniform derivative bounds", &checks, t);
}

#[test]
fn criterion_07_fourier_decay() {
    let t = Instant::now();
    let r = run_fourier_experiment(&mut EnsembleCache::new(config())).unwrap();
    assert_eq!(config().fourier.slope_margin, 0.5);
    verdict(7, "Fourier decay", &[r.toy_check(), r.decay_check()], t);
}

#[test]
fn criterion_08_continuity_exponents() {
    let t = Instant::now();
    let r = continuity();
    assert_eq!(config().continuity.slope_tolerance, 0.15);
    assert_eq!(config().continuity.r2_min, 0.85);
    assert_eq!(config().continuity.stability_max, 10.0);
    let checks: Vec<Check> = r.fits.iter().map(|f| r.order_check(f)).collect();
    assert_eq!(checks.len(), 3);
    verdict(8, "continuity exponents", &checks, t);
}

#[test]
fn criterion_09_ids_continuity() {
    let t = Instant::now();
    continuity();
    let r = kr();
    assert_eq!(config().kr.slope_tolerance, 0.1);
    verdict(9, "IDS continuity", &[r.slope_check()], t);
}

#[test]
fn criterion_10_fractional_moments() {
    let t = Instant::now();
    let r = run_fracmom_experiment(&mut EnsembleCache::new(config())).unwrap();
    assert_eq!(config().fracmom.s, 0.5);
    assert_eq!(config().fracmom.r2_min, 0.9);
    let checks = [r.fit_quality_check(), r.monotonicity_check(), r.doubling_check()];
    verdict(10, "fractional moments", &checks, t);
}
