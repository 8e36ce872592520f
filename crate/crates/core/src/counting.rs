//! Law and moments of the number of losses `N(tau)` in a window of length
//! `tau` for the stationary process.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::exec::{map_indexed, stream_rng, Execution};
use crate::linalg::{expm2, Mat2, Vec2};
use crate::map2::{CanonicalForm, CanonicalMap2, Map2};

/// Default truncation tolerance for [`count_distribution`].
pub const DEFAULT_EPS: f64 = 1e-10;

/// Homogeneous Poisson process, the renewal baseline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoissonProcess {
    rate: f64,
}

impl PoissonProcess {
    pub fn new(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("Poisson rate {rate}")));
        }
        Ok(PoissonProcess { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

/// Mean, variance, adjacent-window covariance and variance-to-mean ratio.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountMoments {
    pub tau: f64,
    pub mean: f64,
    pub variance: f64,
    pub vtm: f64,
    pub covariance: f64,
}

/// Closed-form count moments.
pub trait CountingProcess {
    /// Long-run loss rate.
    fn rate(&self) -> Result<f64>;

    /// `E[N(tau)] = lambda* tau`.
    fn count_mean(&self, tau: f64) -> Result<f64> {
        check_tau(tau, true)?;
        Ok(self.rate()? * tau)
    }

    fn count_variance(&self, tau: f64) -> Result<f64>;

    /// Covariance of counts in two adjacent windows of length `tau`.
    fn count_covariance(&self, tau: f64) -> Result<f64>;

    fn vtm(&self, tau: f64) -> Result<f64> {
        check_tau(tau, false)?;
        Ok(self.count_variance(tau)? / self.count_mean(tau)?)
    }

    fn count_moments(&self, tau: f64) -> Result<CountMoments> {
        let mean = self.count_mean(tau)?;
        let variance = self.count_variance(tau)?;
        Ok(CountMoments {
            tau,
            mean,
            variance,
            vtm: variance / mean,
            covariance: self.count_covariance(tau)?,
        })
    }
}

fn check_tau(tau: f64, allow_zero: bool) -> Result<()> {
    let ok = if allow_zero { tau >= 0.0 } else { tau > 0.0 };
    if ok && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("window length {tau}")))
    }
}

impl CountingProcess for PoissonProcess {
    fn rate(&self) -> Result<f64> {
        Ok(self.rate)
    }

    fn count_variance(&self, tau: f64) -> Result<f64> {
        check_tau(tau, false)?;
        Ok(self.rate * tau)
    }

    fn count_covariance(&self, tau: f64) -> Result<f64> {
        check_tau(tau, false)?;
        Ok(0.0)
    }
}

struct Pieces {
    pi: Vec2,
    d: Mat2,
    d1: Mat2,
    rate: f64,
}

impl Pieces {
    fn new(m: &Map2) -> Result<Self> {
        let st = m.stationary_objects()?;
        Ok(Pieces {
            pi: st.pi,
            d: m.generator(),
            d1: m.d1(),
            rate: (st.pi * m.d1()).sum(),
        })
    }

    fn e_pi(&self) -> Mat2 {
        Vec2::ONES.outer(&self.pi)
    }
}

impl CountingProcess for Map2 {
    fn rate(&self) -> Result<f64> {
        self.loss_rate()
    }

    /// `(1 + 2 lambda*) E[N] - 2 pi D1 (e pi + D)^{-1} D1 e tau
    ///  - 2 pi D1 (I - e^{D tau}) (e pi + D)^{-2} D1 e`.
    fn count_variance(&self, tau: f64) -> Result<f64> {
        check_tau(tau, false)?;
        let p = Pieces::new(self)?;
        let z = (p.e_pi() + p.d).inverse().ok_or(Error::SingularCorrection)?;
        let mean = p.rate * tau;
        let left = p.pi * p.d1;
        let right = p.d1 * Vec2::ONES;
        let linear = (left * z).dot(&right);
        let transient = (left * (Mat2::IDENTITY - expm2(&p.d, tau)) * z * z).dot(&right);
        Ok((1.0 + 2.0 * p.rate) * mean - 2.0 * linear * tau - 2.0 * transient)
    }

    /// `pi M1^2 e - (pi M1 e)(pi e^{D tau} M1 e)` with the asymptotic
    /// first-moment matrix
    /// `M1 = E eπ + (eπ - D)^{-1} D1 e π + e π D1 (eπ - D)^{-1} - 2 (E / tau) eπ`.
    ///
    /// The asymptotic `M1` does not depend on the phase at time 0 beyond
    /// constants, so this is a large-`tau` approximation; see
    /// [`count_covariance_exact`] for the exact value.
    fn count_covariance(&self, tau: f64) -> Result<f64> {
        check_tau(tau, false)?;
        let p = Pieces::new(self)?;
        let e_pi = p.e_pi();
        let z = (e_pi - p.d).inverse().ok_or(Error::SingularCorrection)?;
        let mean = p.rate * tau;
        let col = z * (p.d1 * Vec2::ONES);
        let row = p.pi * p.d1 * z;
        let m1 = e_pi.scale(mean) + col.outer(&p.pi) + Vec2::ONES.outer(&row) - e_pi.scale(2.0 * mean / tau);
        let second = (p.pi * (m1 * m1)).sum();
        let first = (p.pi * m1).sum();
        let shifted = (p.pi * expm2(&p.d, tau) * m1).sum();
        Ok(second - first * shifted)
    }
}

/// Exact covariance of counts in `[0, tau)` and `[tau, 2 tau)`, from
/// `V[N(2 tau)] = 2 V[N(tau)] + 2 Cov`.
pub fn count_covariance_exact<P: CountingProcess + ?Sized>(p: &P, tau: f64) -> Result<f64> {
    Ok(0.5 * (p.count_variance(2.0 * tau)? - 2.0 * p.count_variance(tau)?))
}

/// Truncated distribution of `N(tau)` from uniformization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CountingDist {
    pub tau: f64,
    /// Uniformization rate.
    pub theta: f64,
    /// `P(n, tau)[i][j] = P(N(tau) = n, J(tau) = j | J(0) = i)`.
    pub p_matrices: Vec<Mat2>,
    /// `P(N(tau) = n)` under the stationary phase law.
    pub mass: Vec<f64>,
    /// Probability beyond the last computed count.
    pub truncation_mass: f64,
}

fn log_poisson_weight(lambda: f64, k: usize) -> f64 {
    let kf = k as f64;
    if lambda == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    -lambda + kf * lambda.ln() - ln_gamma(kf + 1.0)
}

/// Chernoff bound on `P(X >= k)` for `X ~ Poisson(lambda)`, `k > lambda`.
fn chernoff_tail(lambda: f64, k: usize) -> f64 {
    let kf = k as f64;
    if kf <= lambda {
        return 1.0;
    }
    (-lambda + kf - kf * (kf / lambda).ln()).exp()
}

/// Poisson weights `w_0..=w_K` with `P(X > K) < eps`.
fn poisson_weights(lambda: f64, eps: f64) -> (Vec<f64>, f64) {
    let mut cap = (lambda + 1.0).ceil() as usize;
    while chernoff_tail(lambda, cap + 1) >= eps * 1e-3 {
        cap += 1 + cap / 16;
    }
    let w: Vec<f64> = (0..=cap).map(|k| log_poisson_weight(lambda, k).exp()).collect();
    let beyond_cap = chernoff_tail(lambda, cap + 1);
    // refine: smallest K whose tail (suffix sum plus the bound past cap) < eps
    let mut tail = beyond_cap;
    let mut k_max = cap;
    for k in (0..=cap).rev() {
        if tail + w[k] >= eps {
            k_max = k;
            break;
        }
        tail += w[k];
    }
    let mut w = w;
    w.truncate(k_max + 1);
    (w, tail)
}

/// Distribution of `N(tau)` for the stationary process.
///
/// With `theta = 1.01 max_i max(-D0_ii, -D_ii)`, `P0 = I + D0/theta` and
/// `P1 = D1/theta`, the count matrices are
/// `P(n, tau) = sum_k w_k V_k(n)` where `w_k` are Poisson(`theta tau`) weights
/// and `V_k(n) = V_{k-1}(n) P0 + V_{k-1}(n-1) P1`. The sum is cut where the
/// Poisson tail falls below `eps`.
pub fn count_distribution(m: &Map2, tau: f64, eps: f64) -> Result<CountingDist> {
    check_tau(tau, false)?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!("truncation tolerance {eps}")));
    }
    let st = m.stationary_objects()?;
    let (d0, d1, d) = (m.d0(), m.d1(), m.generator());
    let max_rate = (0..2).map(|i| (-d0.get(i, i)).max(-d.get(i, i))).fold(0.0, f64::max);
    let theta = 1.01 * max_rate;
    let p0 = Mat2::IDENTITY + d0.scale(1.0 / theta);
    let p1 = d1.scale(1.0 / theta);
    let (weights, tail) = poisson_weights(theta * tau, eps);

    let k_max = weights.len() - 1;
    let mut v = vec![Mat2::ZERO; k_max + 1];
    v[0] = Mat2::IDENTITY;
    let mut p = vec![Mat2::ZERO; k_max + 1];
    p[0] = v[0].scale(weights[0]);
    for (k, &w) in weights.iter().enumerate().skip(1) {
        for n in (0..=k).rev() {
            let stay = v[n] * p0;
            v[n] = if n > 0 { stay + v[n - 1] * p1 } else { stay };
        }
        if w > 0.0 {
            for n in 0..=k {
                p[n] = p[n] + v[n].scale(w);
            }
        }
    }
    // drop trailing counts carrying no mass
    while p.len() > 1 && p.last().is_some_and(|m| m.norm_inf() == 0.0) {
        p.pop();
    }
    let mass: Vec<f64> = p.iter().map(|pn| (st.pi * *pn).sum()).collect();
    // each dropped uniformization step carries exactly its Poisson weight
    Ok(CountingDist {
        tau,
        theta,
        p_matrices: p,
        mass,
        truncation_mass: tail,
    })
}

impl CountingDist {
    /// Largest count carried in the table.
    pub fn n_max(&self) -> usize {
        self.mass.len() - 1
    }

    pub fn pmf(&self, n: usize) -> f64 {
        self.mass.get(n).copied().unwrap_or(0.0)
    }

    /// `P(N >= n)`, including the truncated tail.
    pub fn sf(&self, n: usize) -> f64 {
        let below: f64 = self.mass.iter().take(n).sum();
        (1.0 - below).clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.mass.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.mass
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64 - mean).powi(2) * p)
            .sum()
    }

    /// `sum_n P(n, tau)`, which approaches `e^{D tau}`.
    pub fn matrix_total(&self) -> Mat2 {
        self.p_matrices.iter().fold(Mat2::ZERO, |acc, m| acc + *m)
    }

    /// Inverse-cdf sampler over the table.
    pub fn sampler(&self) -> CountSampler {
        let mut acc = 0.0;
        let cdf = self
            .mass
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        CountSampler { cdf }
    }
}

/// Inverse-cdf sampler for a count table. Draws falling in the truncated
/// tail are assigned the largest tabulated count.
#[derive(Clone, Debug)]
pub struct CountSampler {
    cdf: Vec<f64>,
}

impl CountSampler {
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.cdf.len() - 1)
    }
}

/// VtM of a canonical parameter set at several window lengths; `None` when
/// the parameters do not give an ergodic MAP₂.
pub fn vtm_for_canonical(c: &CanonicalMap2, taus: &[f64]) -> Option<Vec<f64>> {
    let m = c.expand().ok()?;
    taus.iter().map(|&t| m.vtm(t).ok()).collect()
}

/// One sampled model of the sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub model: CanonicalMap2,
    /// VtM per window length; empty when the draw was not ergodic.
    pub vtm: Vec<f64>,
}

/// Result of [`vtm_sweep`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub taus: Vec<f64>,
    pub rows: Vec<SweepRow>,
    /// Fraction of valid models with VtM < 1, per window length.
    pub fraction_below_one: Vec<f64>,
    /// Draws rejected as non-ergodic.
    pub rejected: usize,
}

/// Draw a canonical parameter set: `-x`, `-u` log-uniform on `[1e-2, 1e2]`,
/// `y` uniform on `[0, -x]`, `v` uniform on `[0, -u]`, each form with
/// probability one half.
pub fn sample_canonical<R: Rng + ?Sized>(rng: &mut R) -> CanonicalMap2 {
    let log_uniform = |rng: &mut R| 10f64.powf(rng.random_range(-2.0..=2.0));
    let form = if rng.random::<bool>() {
        CanonicalForm::GammaPositive
    } else {
        CanonicalForm::GammaNonpositive
    };
    let x = -log_uniform(rng);
    let u = -log_uniform(rng);
    let y = rng.random::<f64>() * -x;
    let v = rng.random::<f64>() * -u;
    CanonicalMap2 { form, x, y, u, v }
}

/// VtM over `n_models` random canonical MAP₂s at each window length.
pub fn vtm_sweep(n_models: usize, taus: &[f64], seed: u64, exec: Execution) -> Result<SweepTable> {
    if n_models == 0 {
        return Err(Error::InvalidArgument("sweep needs at least one model".into()));
    }
    for &t in taus {
        check_tau(t, false)?;
    }
    let rows = map_indexed(n_models, exec, |i| {
        let mut rng = stream_rng(seed, i as u64);
        let model = sample_canonical(&mut rng);
        let vtm = vtm_for_canonical(&model, taus).unwrap_or_default();
        SweepRow { index: i, model, vtm }
    });
    let valid: Vec<&SweepRow> = rows.iter().filter(|r| !r.vtm.is_empty()).collect();
    let rejected = rows.len() - valid.len();
    if rejected > 0 {
        log::warn!("{rejected} of {n_models} sweep draws were not ergodic and were skipped");
    }
    let fraction_below_one = (0..taus.len())
        .map(|j| {
            let below = valid.iter().filter(|r| r.vtm[j] < 1.0).count();
            below as f64 / valid.len().max(1) as f64
        })
        .collect();
    Ok(SweepTable {
        taus: taus.to_vec(),
        rows,
        fraction_below_one,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;

    #[test]
    fn poisson_weights_cover_mass() {
        for lambda in [0.01, 1.0, 38.0, 900.0] {
            let (w, tail) = poisson_weights(lambda, 1e-10);
            let s: f64 = w.iter().sum();
            assert!(tail < 1e-10);
            assert!((s + tail - 1.0).abs() < 1e-9, "{lambda}: {s}");
        }
    }

    #[test]
    fn published_model_mass_and_moments() {
        let m = reference::estimated_map2();
        let cd = count_distribution(&m, 365.0, 1e-10).unwrap();
        let total: f64 = cd.mass.iter().sum();
        assert!((total + cd.truncation_mass - 1.0).abs() < 1e-12);
        assert!(cd.truncation_mass < 1e-10);
        let mean = m.count_mean(365.0).unwrap();
        let var = m.count_variance(365.0).unwrap();
        assert!((cd.mean() - mean).abs() < 1e-6, "{} vs {}", cd.mean(), mean);
        assert!((cd.variance() - var).abs() < 1e-5, "{} vs {}", cd.variance(), var);
        let row_total = cd.matrix_total();
        assert!(row_total.max_abs_diff(&expm2(&m.generator(), 365.0)) < 1e-10);
        assert!(cd.p_matrices.iter().all(|p| p.0.iter().flatten().all(|&x| x >= 0.0)));
    }

    #[test]
    fn short_window_has_no_losses() {
        let m = reference::estimated_map2();
        let cd = count_distribution(&m, 1e-9, 1e-12).unwrap();
        assert!(cd.mass[0] > 1.0 - 1e-9);
    }

    #[test]
    fn poisson_embedding_counts_are_poisson() {
        let m = Map2::poisson(0.3).unwrap();
        let tau = 10.0;
        let cd = count_distribution(&m, tau, 1e-12).unwrap();
        for n in 0..15 {
            let expected = log_poisson_weight(3.0, n).exp();
            assert!((cd.pmf(n) - expected).abs() < 1e-11);
        }
        assert!((m.vtm(tau).unwrap() - 1.0).abs() < 1e-10);
        assert!(m.count_covariance(tau).unwrap().abs() < 1e-9);
        assert!(count_covariance_exact(&m, tau).unwrap().abs() < 1e-9);
    }

    #[test]
    fn poisson_process_path() {
        let p = PoissonProcess::new(2.5).unwrap();
        assert_eq!(p.count_mean(0.0).unwrap(), 0.0);
        assert_eq!(p.vtm(4.0).unwrap(), 1.0);
        assert_eq!(p.count_covariance(4.0).unwrap(), 0.0);
    }

    #[test]
    fn linear_mean() {
        let m = reference::estimated_map2();
        let a = m.count_mean(100.0).unwrap();
        let b = m.count_mean(200.0).unwrap();
        assert!((b - 2.0 * a).abs() < 1e-12);
    }

    #[test]
    fn sampler_inverts_cdf() {
        let cd = count_distribution(&Map2::poisson(1.0).unwrap(), 2.0, 1e-12).unwrap();
        let s = cd.sampler();
        let mut rng = stream_rng(5, 0);
        let n = 200_000;
        let zeros = (0..n).filter(|_| s.sample(&mut rng) == 0).count();
        let p0 = (-2.0f64).exp();
        let se = (p0 * (1.0 - p0) / n as f64).sqrt();
        assert!(((zeros as f64 / n as f64) - p0).abs() < 4.0 * se);
    }

    #[test]
    fn sweep_is_deterministic() {
        let a = vtm_sweep(50, &[1.0, 10.0], 3, Execution::Parallel).unwrap();
        let b = vtm_sweep(50, &[1.0, 10.0], 3, Execution::Sequential).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 50);
    }
}
