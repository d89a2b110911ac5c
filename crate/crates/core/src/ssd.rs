//! Single-site distributions: polynomial bumps `(1 - u^2)^(m+2)` rescaled to
//! `[a, b]`.
//!
//! With `p = m + 2` the density and its first `m + 1` derivatives vanish at
//! both endpoints, so the density lies in `C_c^{m+1}((a, b))`. Everything
//! here (normalization, CDF, moments, derivatives) is evaluated from exact
//! polynomial expressions in the reduced variable `u = (2x - a - b)/(b - a)`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::gauss_legendre;
use crate::quad;

/// Attempts per draw before the rejection sampler gives up.
pub const REJECTION_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SsdParams {
    pub m: usize,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone)]
pub struct BumpSsd {
    m: usize,
    a: f64,
    b: f64,
    p: usize,
    norm_const: f64,
    /// `derivs[k]` holds the coefficients (ascending powers of `u`) of
    /// `d^k/du^k (1 - u^2)^p`.
    derivs: Vec<Vec<f64>>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn horner(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
}

/// `int_{-1}^{1} (1 - u^2)^p du = 2 prod_{j=1}^{p} 2j/(2j+1)`.
pub fn bump_integral(p: usize) -> f64 {
    (1..=p).fold(2.0, |acc, j| acc * (2 * j) as f64 / (2 * j + 1) as f64)
}

impl BumpSsd {
    pub fn new(m: usize, a: f64, b: f64) -> Result<Self> {
        if !(a.is_finite() && b.is_finite()) || a >= b {
            return Err(invalid(format!("support requires a < b, got [{a}, {b}]")));
        }
        let p = m + 2;
        let mut base = vec![0.0; 2 * p + 1];
        for j in 0..=p {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            base[2 * j] = sign * binomial(p, j);
        }
        let mut derivs = vec![base];
        for _ in 0..=m + 1 {
            let prev = derivs.last().unwrap();
            let next: Vec<f64> = prev.iter().enumerate().skip(1).map(|(i, c)| c * i as f64).collect();
            derivs.push(next);
        }
        let norm_const = (2.0 / (b - a)) / bump_integral(p);
        Ok(Self {
            m,
            a,
            b,
            p,
            norm_const,
            derivs,
        })
    }

    pub fn from_params(params: SsdParams) -> Result<Self> {
        Self::new(params.m, params.a, params.b)
    }

    pub fn params(&self) -> SsdParams {
        SsdParams {
            m: self.m,
            a: self.a,
            b: self.b,
        }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn exponent(&self) -> usize {
        self.p
    }

    pub fn support(&self) -> (f64, f64) {
        (self.a, self.b)
    }

    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    /// `M = max{|a|, |b|}`.
    pub fn abs_bound(&self) -> f64 {
        self.a.abs().max(self.b.abs())
    }

    fn reduced(&self, x: f64) -> f64 {
        (2.0 * x - self.a - self.b) / (self.b - self.a)
    }

    fn half_width(&self) -> f64 {
        0.5 * (self.b - self.a)
    }

    fn midpoint(&self) -> f64 {
        0.5 * (self.a + self.b)
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= self.a || x >= self.b {
            return 0.0;
        }
        let u = self.reduced(x);
        self.norm_const * (1.0 - u * u).powi(self.exponent() as i32)
    }

    fn derivative_unchecked(&self, k: usize, x: f64) -> f64 {
        if x <= self.a || x >= self.b {
            return 0.0;
        }
        let u = self.reduced(x);
        self.norm_const * self.half_width().recip().powi(k as i32) * horner(&self.derivs[k], u)
    }

    /// `rho^{(k)}(x)` for `0 <= k <= m + 1`.
    pub fn density_derivative(&self, k: usize, x: f64) -> Result<f64> {
        if k > self.m + 1 {
            return Err(invalid(format!("derivative order {k} exceeds m + 1 = {}", self.m + 1)));
        }
        Ok(self.derivative_unchecked(k, x))
    }

    /// `sup_x |rho^{(k)}(x)|` for `k = 0..=m+1`, maximized over a fine grid
    /// of the reduced variable followed by golden-section polishing.
    pub fn derivative_sup_norms(&self) -> Vec<f64> {
        (0..=self.m + 1)
            .map(|k| {
                let coeffs = &self.derivs[k];
                let f = |u: f64| horner(coeffs, u).abs();
                let n = 4000;
                let h = 2.0 / n as f64;
                let (mut best_u, mut best) = (0.0, f(0.0));
                for i in 0..=n {
                    let u = -1.0 + i as f64 * h;
                    let v = f(u);
                    if v > best {
                        best = v;
                        best_u = u;
                    }
                }
                let (mut lo, mut hi) = ((best_u - h).max(-1.0), (best_u + h).min(1.0));
                let g = 0.5 * (5f64.sqrt() - 1.0);
                for _ in 0..80 {
                    let x1 = hi - g * (hi - lo);
                    let x2 = lo + g * (hi - lo);
                    if f(x1) > f(x2) {
                        hi = x2;
                    } else {
                        lo = x1;
                    }
                }
                let polished = f(0.5 * (lo + hi)).max(best);
                self.norm_const * self.half_width().recip().powi(k as i32) * polished
            })
            .collect()
    }

    /// Exact CDF by term-by-term integration of the bump polynomial.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.a {
            return 0.0;
        }
        if x >= self.b {
            return 1.0;
        }
        let u = self.reduced(x);
        let mut s = 0.0;
        for j in 0..=self.p {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            let e = 2 * j + 1;
            s += sign * binomial(self.p, j) * (u.powi(e as i32) + 1.0) / e as f64;
        }
        (s / bump_integral(self.p)).clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.midpoint()
    }

    /// `int_c^b x rho(x) dx` in closed form.
    fn upper_first_moment(&self, c: f64) -> f64 {
        let uc = self.reduced(c).clamp(-1.0, 1.0);
        let mass_above = 1.0 - self.cdf(c);
        // int_{uc}^{1} u (1-u^2)^p du = (1-uc^2)^{p+1} / (2(p+1))
        let u_moment = (1.0 - uc * uc).powi(self.p as i32 + 1) / (2.0 * (self.p + 1) as f64);
        self.midpoint() * mass_above + self.half_width() * u_moment / bump_integral(self.p)
    }

    /// `E|omega_0| = int |x| rho(x) dx`, exact.
    pub fn abs_moment(&self) -> f64 {
        if self.a >= 0.0 {
            self.mean()
        } else if self.b <= 0.0 {
            -self.mean()
        } else {
            2.0 * self.upper_first_moment(0.0) - self.mean()
        }
    }

    /// Draw `n` i.i.d. values by rejection under the uniform envelope of
    /// height `norm_const` on `[a, b]`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            out.push(self.sample_one(rng)?);
        }
        Ok(out)
    }

    pub fn sample_one<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        for _ in 0..REJECTION_CAP {
            let u: f64 = rng.gen_range(-1.0..1.0);
            let y: f64 = rng.gen();
            if y <= (1.0 - u * u).powi(self.p as i32) {
                return Ok(self.midpoint() + self.half_width() * u);
            }
        }
        Err(Error::SamplingExhausted(REJECTION_CAP))
    }

    /// Wasserstein-1 distance between the laws of `lambda1 * omega` and
    /// `lambda2 * omega`, computed as `int |F1 - F2|` by adaptive quadrature.
    pub fn kr_distance_scaled(&self, lambda1: f64, lambda2: f64) -> Result<f64> {
        if !(lambda1 > 0.0 && lambda2 > 0.0) {
            return Err(invalid(format!(
                "scaling factors must be positive, got {lambda1}, {lambda2}"
            )));
        }
        if lambda1 == lambda2 {
            return Ok(0.0);
        }
        let lo = (lambda1 * self.a).min(lambda2 * self.a);
        let hi = (lambda1 * self.b).max(lambda2 * self.b);
        let f = |x: f64| (self.cdf(x / lambda1) - self.cdf(x / lambda2)).abs();
        let mut cuts = vec![lo];
        for c in [0.0, lambda1 * self.a, lambda2 * self.a, lambda1 * self.b, lambda2 * self.b] {
            if c > lo && c < hi {
                cuts.push(c);
            }
        }
        cuts.push(hi);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        Ok(cuts.windows(2).map(|w| quad::integrate(f, w[0], w[1], 1e-14)).sum())
    }

    /// `rho_hat(t) = int e^{-itx} rho(x) dx` by composite Gauss–Legendre
    /// quadrature with panels resolving the oscillation.
    pub fn fourier_transform(&self, t: f64) -> Complex64 {
        let (nodes, weights) = gauss_legendre(20);
        let panels = ((t.abs() * (self.b - self.a)) / 2.0).ceil().max(4.0) as usize;
        let h = (self.b - self.a) / panels as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for k in 0..panels {
            let c = self.a + (k as f64 + 0.5) * h;
            for (x, w) in nodes.iter().zip(&weights) {
                let xx = c + 0.5 * h * x;
                acc += Complex64::from_polar(w * 0.5 * h * self.density(xx), -t * xx);
            }
        }
        acc
    }
}
