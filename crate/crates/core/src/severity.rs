//! Double-Pareto-Lognormal severities.
//!
//! `X = exp(Z + W)` with `Z ~ Normal(mu, sigma2)` and `W` an asymmetric
//! Laplace variable: `+Exp(alpha)` with probability `beta / (alpha + beta)`,
//! `-Exp(beta)` otherwise. Both tails of `X` are power laws, with exponent
//! `alpha` on the right and `beta` at zero.
//!
//! On the log scale, with `z = (y - mu) / sigma` and the Mills ratio
//! `R(w) = (1 - Phi(w)) / phi(w)`,
//!
//! ```text
//! g(y) = alpha beta / (alpha + beta) phi(z) [R(alpha sigma - z) + R(beta sigma + z)]
//! G(y) = Phi(z) - phi(z) [beta R(alpha sigma - z) - alpha R(beta sigma + z)] / (alpha + beta)
//! ```

use std::f64::consts::PI;

use libm::erfc;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::nelder_mead::{minimize, NelderMeadOptions};
use crate::exec::{for_each_chunk_mut, stream_rng, Execution};
use crate::stats;

const CHUNK: usize = 1 << 15;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Parameters `(alpha, beta, mu, sigma2)`; `sigma2` is the log-scale
/// variance, not the standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DplnParams {
    pub alpha: f64,
    pub beta: f64,
    pub mu: f64,
    pub sigma2: f64,
}

/// Something that can draw one severity.
pub trait Severity: Sync {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;

    /// `E[X]`.
    fn mean(&self) -> Result<f64>;

    /// `E[X^2]`, or [`Error::InfiniteMoment`].
    fn second_moment(&self) -> Result<f64>;
}

/// A point-mass severity, used for checks of the aggregation code.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantSeverity(pub f64);

impl Severity for ConstantSeverity {
    fn draw<R: Rng + ?Sized>(&self, _rng: &mut R) -> f64 {
        self.0
    }

    fn mean(&self) -> Result<f64> {
        Ok(self.0)
    }

    fn second_moment(&self) -> Result<f64> {
        Ok(self.0 * self.0)
    }
}

fn ln_phi(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// `ln R(w)`. For `w >= 6` the continued fraction
/// `R(w) = 1 / (w + 1 / (w + 2 / (w + 3 / ...)))` avoids the underflow of
/// the upper normal tail.
fn ln_mills(w: f64) -> f64 {
    if w < 6.0 {
        (0.5 * erfc(w / std::f64::consts::SQRT_2)).ln() - ln_phi(w)
    } else {
        // backward evaluation of the continued fraction
        let mut acc = w;
        for k in (1..=60).rev() {
            acc = w + k as f64 / acc;
        }
        -acc.ln()
    }
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

impl DplnParams {
    pub fn new(alpha: f64, beta: f64, mu: f64, sigma2: f64) -> Result<Self> {
        let p = DplnParams {
            alpha,
            beta,
            mu,
            sigma2,
        };
        p.check()?;
        Ok(p)
    }

    fn check(&self) -> Result<()> {
        let ok = self.alpha > 0.0
            && self.beta > 0.0
            && self.sigma2 > 0.0
            && [self.alpha, self.beta, self.mu, self.sigma2]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "dPlN parameters need alpha, beta, sigma2 > 0: {self:?}"
            )))
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// `E[X^r] = alpha beta / ((alpha - r)(beta + r)) exp(r mu + r^2 sigma2 / 2)`
    /// for `-beta < r < alpha`.
    pub fn moment(&self, r: f64) -> Result<f64> {
        if r >= self.alpha {
            return Err(Error::InfiniteMoment {
                order: r,
                alpha: self.alpha,
            });
        }
        if r <= -self.beta {
            return Err(Error::InvalidArgument(format!(
                "moment order {r} not above -beta = {}",
                -self.beta
            )));
        }
        let (a, b) = (self.alpha, self.beta);
        Ok(a * b / ((a - r) * (b + r)) * (r * self.mu + 0.5 * r * r * self.sigma2).exp())
    }

    /// One draw by composition.
    #[inline]
    pub fn draw_one<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(Exp1);
        let u: f64 = rng.random();
        let w = if u * (self.alpha + self.beta) < self.beta {
            e / self.alpha
        } else {
            -e / self.beta
        };
        (self.mu + self.sigma() * z + w).exp()
    }

    /// `n` independent draws; chunk `i` uses stream `i` of `seed`.
    pub fn sample(&self, n: usize, seed: u64, exec: Execution) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for_each_chunk_mut(&mut out, CHUNK, exec, |ci, chunk| {
            let mut rng = stream_rng(seed, ci as u64);
            for x in chunk.iter_mut() {
                *x = self.draw_one(&mut rng);
            }
        });
        out
    }

    /// Log density of `Y = ln X`.
    pub fn ln_pdf_log_scale(&self, y: f64) -> f64 {
        let s = self.sigma();
        let z = (y - self.mu) / s;
        let (a, b) = (self.alpha, self.beta);
        (a * b / (a + b)).ln() + ln_phi(z) + log_add_exp(ln_mills(a * s - z), ln_mills(b * s + z))
    }

    pub fn ln_pdf(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::NonpositiveX(x));
        }
        let y = x.ln();
        Ok(self.ln_pdf_log_scale(y) - y)
    }

    pub fn pdf(&self, x: f64) -> Result<f64> {
        Ok(self.ln_pdf(x)?.exp())
    }

    /// `P(ln X <= y)`.
    pub fn cdf_log_scale(&self, y: f64) -> f64 {
        let s = self.sigma();
        let z = (y - self.mu) / s;
        let (a, b) = (self.alpha, self.beta);
        let up = (ln_phi(z) + ln_mills(a * s - z)).exp();
        let down = (ln_phi(z) + ln_mills(b * s + z)).exp();
        let correction = (b * up - a * down) / (a + b);
        if z < 0.0 {
            let phi_cdf = 0.5 * erfc(-z / std::f64::consts::SQRT_2);
            (phi_cdf - correction).clamp(0.0, 1.0)
        } else {
            let phi_sf = 0.5 * erfc(z / std::f64::consts::SQRT_2);
            (1.0 - (phi_sf + correction)).clamp(0.0, 1.0)
        }
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) {
            return Err(Error::NonpositiveX(x));
        }
        Ok(self.cdf_log_scale(x.ln()))
    }

    /// Quantile by bisection on the log scale.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::OutOfRangeQuantile(q));
        }
        let s = self.sigma();
        let spread = s + 1.0 / self.alpha + 1.0 / self.beta;
        let (mut lo, mut hi) = (self.mu - 10.0 * spread, self.mu + 10.0 * spread);
        while self.cdf_log_scale(lo) > q {
            lo -= 10.0 * spread;
        }
        while self.cdf_log_scale(hi) < q {
            hi += 10.0 * spread;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf_log_scale(mid) < q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 * (1.0 + mid.abs()) {
                break;
            }
        }
        Ok((0.5 * (lo + hi)).exp())
    }

    /// Log-likelihood of positive data.
    pub fn log_likelihood(&self, data: &[f64]) -> Result<f64> {
        let mut total = 0.0;
        for &x in data {
            total += self.ln_pdf(x)?;
        }
        Ok(total)
    }
}

impl Severity for DplnParams {
    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.draw_one(rng)
    }

    fn mean(&self) -> Result<f64> {
        self.moment(1.0)
    }

    fn second_moment(&self) -> Result<f64> {
        self.moment(2.0)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DplnFitOptions {
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for DplnFitOptions {
    fn default() -> Self {
        DplnFitOptions {
            max_iter: 4000,
            tol: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DplnFit {
    pub params: DplnParams,
    pub loglik: f64,
    pub start: DplnParams,
    pub start_loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

fn params_from(z: &[f64]) -> DplnParams {
    DplnParams {
        alpha: z[0].exp(),
        beta: z[1].exp(),
        mu: z[2],
        sigma2: z[3].exp(),
    }
}

/// Maximum likelihood over `(ln alpha, ln beta, mu, ln sigma2)`.
///
/// The start splits the log-sample variance evenly between the normal and
/// Laplace parts with `alpha = beta`.
pub fn fit_dpln(data: &[f64], opts: &DplnFitOptions) -> Result<DplnFit> {
    if data.len() < 20 {
        return Err(Error::TooShort {
            got: data.len(),
            need: 20,
        });
    }
    if let Some(&bad) = data.iter().find(|x| !(**x > 0.0)) {
        return Err(Error::NonpositiveX(bad));
    }
    let logs: Vec<f64> = data.iter().map(|x| x.ln()).collect();
    let m = stats::mean(&logs);
    let v = stats::variance(&logs);
    if data.iter().all(|&x| x == data[0]) || !(v > 0.0) {
        return Err(Error::DegenerateVariance("severity data are constant"));
    }
    let rate = 2.0 / v.sqrt();
    let z0 = [rate.ln(), rate.ln(), m, (0.5 * v).ln()];
    let n = logs.len() as f64;
    let objective = |z: &[f64]| {
        if z.iter().any(|v| !v.is_finite()) || z[0].abs() > 30.0 || z[1].abs() > 30.0 {
            return f64::INFINITY;
        }
        let p = params_from(z);
        -logs.iter().map(|&y| p.ln_pdf_log_scale(y)).sum::<f64>() / n
    };
    let nm = NelderMeadOptions {
        max_iter: opts.max_iter,
        tol: opts.tol,
        step: 0.3,
    };
    let first = minimize(objective, &z0, &nm);
    let polished = minimize(objective, &first.x, &NelderMeadOptions { step: 0.05, ..nm });
    if !polished.fx.is_finite() {
        return Err(Error::OptimizerFailed("dPlN likelihood is not finite".into()));
    }
    let jacobian: f64 = logs.iter().sum();
    let start = params_from(&z0);
    Ok(DplnFit {
        params: params_from(&polished.x),
        loglik: -polished.fx * n - jacobian,
        start,
        start_loglik: -objective(&z0) * n - jacobian,
        converged: polished.converged,
        iterations: first.iterations + polished.iterations,
    })
}

/// Lognormal log-density on the log scale, for the nested-model limit.
pub fn ln_normal_pdf(y: f64, mu: f64, sigma2: f64) -> f64 {
    -0.5 * (y - mu).powi(2) / sigma2 - 0.5 * (2.0 * PI * sigma2).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper() -> DplnParams {
        DplnParams::new(1.24, 1.8, 10.4, 1.29 * 1.29).unwrap()
    }

    #[test]
    fn mills_branches_meet() {
        let left = ln_mills(6.0 - 1e-12);
        let right = ln_mills(6.0);
        assert!((left - right).abs() < 1e-10);
        // R(0) = sqrt(pi/2)
        assert!((ln_mills(0.0) - (PI / 2.0).sqrt().ln()).abs() < 1e-14);
        assert!(ln_mills(-40.0).is_finite() && ln_mills(1e4).is_finite());
    }

    #[test]
    fn first_moment() {
        let m = paper().moment(1.0).unwrap();
        assert!((m - 2.508e5).abs() < 100.0, "{m}");
        assert!(matches!(paper().moment(2.0), Err(Error::InfiniteMoment { .. })));
    }

    #[test]
    fn cdf_matches_density() {
        let p = paper();
        let (a, b) = (8.0, 12.0);
        let steps = 4000;
        let h = (b - a) / steps as f64;
        let integral: f64 = (0..=steps)
            .map(|i| {
                let y = a + i as f64 * h;
                let w = if i == 0 || i == steps { 0.5 } else { 1.0 };
                w * p.ln_pdf_log_scale(y).exp()
            })
            .sum::<f64>()
            * h;
        let diff = p.cdf_log_scale(b) - p.cdf_log_scale(a);
        assert!((integral - diff).abs() < 1e-7, "{integral} vs {diff}");
    }

    #[test]
    fn quantile_inverts_cdf() {
        let p = paper();
        for q in [1e-4, 0.025, 0.5, 0.975, 0.9999] {
            let x = p.quantile(q).unwrap();
            assert!((p.cdf(x).unwrap() - q).abs() < 1e-8);
        }
    }

    #[test]
    fn samples_positive_and_reproducible() {
        let p = paper();
        let a = p.sample(1000, 3, Execution::Parallel);
        assert!(a.iter().all(|&x| x > 0.0));
        assert_eq!(a, p.sample(1000, 3, Execution::Sequential));
    }

    #[test]
    fn fit_rejects_bad_input() {
        let opts = DplnFitOptions::default();
        assert!(matches!(fit_dpln(&[1.0; 5], &opts), Err(Error::TooShort { .. })));
        assert!(matches!(fit_dpln(&[3.0; 40], &opts), Err(Error::DegenerateVariance(_))));
        let mut d = vec![1.0; 30];
        d[4] = 0.0;
        assert!(matches!(fit_dpln(&d, &opts), Err(Error::NonpositiveX(_))));
    }
}
