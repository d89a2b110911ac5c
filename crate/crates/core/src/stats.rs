//! Small statistics toolkit: ensemble means, straight-line fits and
//! bootstrap intervals.

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

pub fn complex_mean_stderr(xs: &[Complex64]) -> (Complex64, f64) {
    let n = xs.len();
    if n == 0 {
        return (Complex64::new(f64::NAN, f64::NAN), f64::NAN);
    }
    let mean = xs.iter().sum::<Complex64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).norm_sqr()).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub r_squared: f64,
    pub n: usize,
}

impl LineFit {
    /// Half-width of the two-sided confidence interval on the slope.
    pub fn slope_ci(&self, level: f64) -> f64 {
        self.slope_se * t_quantile(0.5 + 0.5 * level, self.n.saturating_sub(2))
    }

    /// Upper end of the one-sided confidence bound below the slope, i.e. the
    /// slope is significantly positive iff this is > 0.
    pub fn slope_lower_bound(&self, level: f64) -> f64 {
        self.slope - self.slope_se * t_quantile(level, self.n.saturating_sub(2))
    }
}

/// Student-t quantile; falls back to the normal quantile for large or zero
/// degrees of freedom.
pub fn t_quantile(p: f64, dof: usize) -> f64 {
    if dof == 0 {
        return f64::INFINITY;
    }
    StudentsT::new(0.0, 1.0, dof as f64)
        .map(|d| d.inverse_cdf(p))
        .unwrap_or(f64::NAN)
}

/// Weighted least squares of `y` on `x`. With `weights = None` this is
/// ordinary least squares and standard errors use the residual variance;
/// with weights `1/sigma_i^2` the covariance is `(X^T W X)^{-1}` scaled by
/// the reduced chi-square when it exceeds one.
pub fn fit_line(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Option<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let w: Vec<f64> = match weights {
        Some(w) if w.len() == n => w.to_vec(),
        Some(_) => return None,
        None => vec![1.0; n],
    };
    let sw: f64 = w.iter().sum();
    let xm = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let ym = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = (0..n).map(|i| w[i] * (x[i] - xm).powi(2)).sum();
    let sxy: f64 = (0..n).map(|i| w[i] * (x[i] - xm) * (y[i] - ym)).sum();
    let syy: f64 = (0..n).map(|i| w[i] * (y[i] - ym).powi(2)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = (0..n)
        .map(|i| w[i] * (y[i] - intercept - slope * x[i]).powi(2))
        .sum();
    let r_squared = if syy > 0.0 { (1.0 - rss / syy).clamp(0.0, 1.0) } else { 1.0 };
    let dof = n.saturating_sub(2).max(1) as f64;
    let scale = if weights.is_some() {
        (rss / dof).max(1.0)
    } else {
        rss / dof
    };
    let slope_var = scale / sxx;
    let intercept_var = scale * (1.0 / sw + xm * xm / sxx);
    Some(LineFit {
        slope,
        intercept,
        slope_se: slope_var.sqrt(),
        intercept_se: intercept_var.sqrt(),
        r_squared,
        n,
    })
}

/// Percentile interval of bootstrap replicates.
pub fn percentile_interval(mut reps: Vec<f64>, level: f64) -> (f64, f64) {
    reps.retain(|v| v.is_finite());
    if reps.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    reps.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (reps.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        reps[lo] + (pos - lo as f64) * (reps[hi] - reps[lo])
    };
    let alpha = 0.5 * (1.0 - level);
    (q(alpha), q(1.0 - alpha))
}

/// Realization indices for one bootstrap resample.
pub fn resample_indices<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 2.5 - 0.75 * x).collect();
        let f = fit_line(&x, &y, None).unwrap();
        assert!((f.slope + 0.75).abs() < 1e-14);
        assert!((f.intercept - 2.5).abs() < 1e-13);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_line(&[1.0], &[2.0], None).is_none());
        assert!(fit_line(&[1.0, 1.0], &[2.0, 3.0], None).is_none());
    }

    #[test]
    fn slope_interval_covers_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut covered = 0;
        for _ in 0..400 {
            let x: Vec<f64> = (0..12).map(|i| i as f64).collect();
            let y: Vec<f64> = x.iter().map(|x| 1.0 + 0.3 * x + rng.gen_range(-1.0..1.0)).collect();
            let f = fit_line(&x, &y, None).unwrap();
            if (f.slope - 0.3).abs() <= f.slope_ci(0.95) {
                covered += 1;
            }
        }
        assert!((360..=395).contains(&covered), "coverage {covered}/400");
    }

    #[test]
    fn percentile_interval_of_uniform() {
        let reps: Vec<f64> = (0..=1000).map(|i| i as f64 / 1000.0).collect();
        let (lo, hi) = percentile_interval(reps, 0.9);
        assert!((lo - 0.05).abs() < 1e-12 && (hi - 0.95).abs() < 1e-12);
    }

    #[test]
    fn t_quantiles() {
        assert!((t_quantile(0.975, 1000) - 1.962).abs() < 1e-3);
        assert!((t_quantile(0.95, 3) - 2.353).abs() < 1e-3);
    }
}
