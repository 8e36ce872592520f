//! Annual aggregate losses `Z = X_1 + ... + X_N` by Monte Carlo, with
//! compound moments and empirical risk measures.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::counting::{count_distribution, CountingDist, DEFAULT_EPS};
use crate::error::{Error, Result};
use crate::exec::{derive_seed, for_each_chunk_mut, stream_rng, Execution};
use crate::map2::Map2;
use crate::reference::TAU_YEAR;
use crate::severity::Severity;
use crate::stats;

const CHUNK: usize = 1 << 14;

/// Law of the annual number of losses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FrequencyModel {
    /// Tabulated count law of a MAP₂ over one year.
    Map2Counting { dist: CountingDist },
    /// Poisson with `rate` losses per year.
    Poisson { rate: f64 },
}

impl FrequencyModel {
    /// Annual count law of a MAP₂ (days, `tau = 365`).
    pub fn from_map2(m: &Map2, eps: f64) -> Result<Self> {
        Ok(FrequencyModel::Map2Counting {
            dist: count_distribution(m, TAU_YEAR, eps)?,
        })
    }

    pub fn poisson(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("Poisson rate {rate}")));
        }
        Ok(FrequencyModel::Poisson { rate })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            FrequencyModel::Map2Counting { .. } => "map2",
            FrequencyModel::Poisson { .. } => "poisson",
        }
    }

    pub fn p_zero(&self) -> f64 {
        match self {
            FrequencyModel::Map2Counting { dist } => dist.pmf(0),
            FrequencyModel::Poisson { rate } => (-rate).exp(),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            FrequencyModel::Map2Counting { dist } => dist.mean(),
            FrequencyModel::Poisson { rate } => *rate,
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            FrequencyModel::Map2Counting { dist } => dist.variance(),
            FrequencyModel::Poisson { rate } => *rate,
        }
    }

    fn sampler(&self) -> CountDraw {
        match self {
            FrequencyModel::Map2Counting { dist } => CountDraw::Table(dist.sampler()),
            FrequencyModel::Poisson { rate } => CountDraw::Poisson(Poisson::new(*rate).expect("validated rate")),
        }
    }
}

enum CountDraw {
    Table(crate::counting::CountSampler),
    Poisson(Poisson<f64>),
}

impl CountDraw {
    #[inline]
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self {
            CountDraw::Table(t) => t.sample(rng),
            CountDraw::Poisson(p) => p.sample(rng) as usize,
        }
    }
}

/// `K` simulated annual totals and the counts behind them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateSample {
    pub seed: u64,
    pub frequency_kind: String,
    pub losses: Vec<f64>,
    pub counts: Vec<u32>,
}

impl AggregateSample {
    pub fn k(&self) -> usize {
        self.losses.len()
    }

    pub fn zero_fraction(&self) -> f64 {
        self.losses.iter().filter(|&&z| z == 0.0).count() as f64 / self.k() as f64
    }

    pub fn mean(&self) -> f64 {
        stats::mean(&self.losses)
    }
}

/// Draw `N`, then `N` severities, and sum; replicate `k` times. Replicates
/// are processed in fixed-size chunks, chunk `i` using stream `i` of
/// `seed`, so the output does not depend on the execution mode.
pub fn simulate_aggregate<S: Severity>(
    freq: &FrequencyModel,
    sev: &S,
    k: usize,
    seed: u64,
    exec: Execution,
) -> Result<AggregateSample> {
    if k == 0 {
        return Err(Error::InvalidArgument("need at least one replicate".into()));
    }
    let draw_n = freq.sampler();
    let mut pairs = vec![(0.0f64, 0u32); k];
    for_each_chunk_mut(&mut pairs, CHUNK, exec, |ci, chunk| {
        let mut rng = stream_rng(seed, ci as u64);
        for slot in chunk.iter_mut() {
            let n = draw_n.draw(&mut rng);
            let mut z = 0.0;
            for _ in 0..n {
                z += sev.draw(&mut rng);
            }
            *slot = (z, n as u32);
        }
    });
    let (losses, counts) = pairs.into_iter().unzip();
    Ok(AggregateSample {
        seed,
        frequency_kind: freq.kind().to_string(),
        losses,
        counts,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    Finite(f64),
    Infinite,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompoundMoments {
    pub mean: f64,
    pub variance: Moment,
}

/// `E(Z) = E(N) E(X)` and `V(Z) = E(N) V(X) + V(N) E(X)^2`, the latter
/// flagged infinite when the severity has no second moment.
pub fn compound_moments<S: Severity>(freq: &FrequencyModel, sev: &S) -> Result<CompoundMoments> {
    let ex = sev.mean()?;
    let (en, vn) = (freq.mean(), freq.variance());
    let variance = match sev.second_moment() {
        Ok(ex2) => Moment::Finite(en * (ex2 - ex * ex) + vn * ex * ex),
        Err(Error::InfiniteMoment { .. }) => Moment::Infinite,
        Err(e) => return Err(e),
    };
    Ok(CompoundMoments {
        mean: en * ex,
        variance,
    })
}

/// Descriptive statistics of a loss sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    #[serde(rename = "SD")]
    pub sd: f64,
    pub skewness: f64,
    #[serde(rename = "Q.025")]
    pub q025: f64,
    #[serde(rename = "Q.25")]
    pub q25: f64,
    #[serde(rename = "Q.50")]
    pub q50: f64,
    #[serde(rename = "Q.975")]
    pub q975: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskLevel {
    pub p: f64,
    #[serde(rename = "VaR")]
    pub var: f64,
    #[serde(rename = "ES")]
    pub es: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub k: usize,
    pub summary: Summary,
    pub levels: Vec<RiskLevel>,
    pub warnings: Vec<String>,
}

impl RiskReport {
    pub fn level(&self, p: f64) -> Option<&RiskLevel> {
        self.levels.iter().find(|l| l.p == p)
    }
}

/// Nearest-rank index: the sample at 1-based rank `floor(p K) + 1`.
fn rank_index(p: f64, k: usize) -> usize {
    ((p * k as f64 + 1e-9).floor() as usize).min(k - 1)
}

/// Nearest-rank quantile of a sorted sample.
pub fn sorted_quantile(sorted: &[f64], p: f64) -> f64 {
    sorted[rank_index(p, sorted.len())]
}

/// VaR and ES at each tolerance `p`, plus summary statistics.
///
/// `VaR_p` is the sample value at rank `floor(p K) + 1`; `ES_p` is the mean
/// of samples at or above `VaR_p`.
pub fn risk_measures(losses: &[f64], ps: &[f64]) -> Result<RiskReport> {
    if losses.is_empty() {
        return Err(Error::EmptyTrace);
    }
    for &p in ps {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::OutOfRangeQuantile(p));
        }
    }
    let mut sorted = losses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let k = sorted.len();
    let mut warnings = Vec::new();
    let mut levels = Vec::with_capacity(ps.len());
    for &p in ps {
        let tail = (1.0 - p) * k as f64;
        if tail < 10.0 || (p > 0.99 && k < 1000) {
            let msg = format!(
                "VaR at p={p} rests on {:.0} samples beyond the quantile (K={k}); estimate is unreliable",
                tail.floor()
            );
            warnings.push(msg);
        }
        let var = sorted_quantile(&sorted, p);
        let first = sorted.partition_point(|&z| z < var);
        let es = stats::mean(&sorted[first..]);
        levels.push(RiskLevel { p, var, es });
    }
    let sd = stats::variance(&sorted).sqrt();
    let summary = Summary {
        min: sorted[0],
        max: sorted[k - 1],
        mean: stats::mean(&sorted),
        sd,
        skewness: stats::skewness(&sorted),
        q025: sorted_quantile(&sorted, 0.025),
        q25: sorted_quantile(&sorted, 0.25),
        q50: sorted_quantile(&sorted, 0.50),
        q975: sorted_quantile(&sorted, 0.975),
    };
    Ok(RiskReport {
        k,
        summary,
        levels,
        warnings,
    })
}

/// Attach the heavy-tail note when the severity has no second moment.
pub fn note_severity_tail<S: Severity>(report: &mut RiskReport, sev: &S) {
    if let Err(Error::InfiniteMoment { alpha, .. }) = sev.second_moment() {
        report.warnings.push(format!(
            "severity tail index {alpha} <= 2: aggregate variance is infinite and ES estimates have high variance"
        ));
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    #[serde(rename = "K")]
    pub k: usize,
    pub repeat: usize,
    pub var_999: f64,
}

/// Spread of the VaR estimates at one `K`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceSpread {
    pub k: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub iqr: f64,
}

/// `repeats` independent `VaR_0.999` estimates at each replicate count.
pub fn convergence_study<S: Severity>(
    freq: &FrequencyModel,
    sev: &S,
    ks: &[usize],
    repeats: usize,
    seed: u64,
    exec: Execution,
) -> Result<Vec<ConvergenceRow>> {
    if ks.is_empty() || repeats == 0 {
        return Err(Error::InvalidArgument("empty convergence design".into()));
    }
    let mut rows = Vec::with_capacity(ks.len() * repeats);
    for (ki, &k) in ks.iter().enumerate() {
        for repeat in 0..repeats {
            let s = derive_seed(seed, ((ki as u64) << 32) | repeat as u64);
            let sample = simulate_aggregate(freq, sev, k, s, exec)?;
            let mut sorted = sample.losses;
            sorted.sort_by(f64::total_cmp);
            rows.push(ConvergenceRow {
                k,
                repeat,
                var_999: sorted_quantile(&sorted, 0.999),
            });
        }
    }
    Ok(rows)
}

/// Median and interquartile range of the estimates per `K`, in input order.
pub fn convergence_spread(rows: &[ConvergenceRow]) -> Vec<ConvergenceSpread> {
    let mut ks: Vec<usize> = Vec::new();
    for r in rows {
        if !ks.contains(&r.k) {
            ks.push(r.k);
        }
    }
    ks.into_iter()
        .map(|k| {
            let mut v: Vec<f64> = rows.iter().filter(|r| r.k == k).map(|r| r.var_999).collect();
            v.sort_by(f64::total_cmp);
            let q = |p: f64| sorted_quantile(&v, p);
            ConvergenceSpread {
                k,
                median: q(0.5),
                q25: q(0.25),
                q75: q(0.75),
                iqr: q(0.75) - q(0.25),
            }
        })
        .collect()
}

/// Paired MAP₂ and Poisson runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyComparison {
    pub map2: RiskReport,
    pub poisson: RiskReport,
    pub map2_p_zero: f64,
    pub poisson_p_zero: f64,
    pub map2_zero_fraction: f64,
    pub poisson_zero_fraction: f64,
}

/// Run the MAP₂ and Poisson pipelines on separate streams derived from
/// one master seed.
pub fn compare_frequencies<S: Severity>(
    m: &Map2,
    poisson_rate: f64,
    sev: &S,
    k: usize,
    ps: &[f64],
    seed: u64,
    exec: Execution,
) -> Result<FrequencyComparison> {
    let map2_freq = FrequencyModel::from_map2(m, DEFAULT_EPS)?;
    let poisson_freq = FrequencyModel::poisson(poisson_rate)?;
    let a = simulate_aggregate(&map2_freq, sev, k, derive_seed(seed, 1), exec)?;
    let b = simulate_aggregate(&poisson_freq, sev, k, derive_seed(seed, 2), exec)?;
    let mut map2 = risk_measures(&a.losses, ps)?;
    let mut poisson = risk_measures(&b.losses, ps)?;
    note_severity_tail(&mut map2, sev);
    note_severity_tail(&mut poisson, sev);
    Ok(FrequencyComparison {
        map2,
        poisson,
        map2_p_zero: map2_freq.p_zero(),
        poisson_p_zero: poisson_freq.p_zero(),
        map2_zero_fraction: a.zero_fraction(),
        poisson_zero_fraction: b.zero_fraction(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::severity::ConstantSeverity;

    #[test]
    fn nearest_rank_example() {
        let x: Vec<f64> = (1..=1000).map(f64::from).collect();
        let r = risk_measures(&x, &[0.99]).unwrap();
        assert_eq!(r.levels[0].var, 991.0);
        assert_eq!(r.levels[0].es, (991..=1000).map(f64::from).sum::<f64>() / 10.0);
    }

    #[test]
    fn compound_of_constants() {
        let freq = FrequencyModel::poisson(3.0).unwrap();
        let m = compound_moments(&freq, &ConstantSeverity(2.0)).unwrap();
        assert_eq!(m.mean, 6.0);
        assert_eq!(m.variance, Moment::Finite(12.0));
        let s = simulate_aggregate(&freq, &ConstantSeverity(2.0), 100_000, 1, Execution::Parallel).unwrap();
        let se = (12.0f64 / 1e5).sqrt();
        assert!((s.mean() - 6.0).abs() < 4.0 * se);
        assert!(s.losses.iter().zip(&s.counts).all(|(z, &n)| *z == 2.0 * n as f64));
    }

    #[test]
    fn modes_are_bit_identical() {
        let freq = FrequencyModel::poisson(5.0).unwrap();
        let sev = crate::severity::DplnParams::new(1.24, 1.8, 10.4, 1.6641).unwrap();
        let a = simulate_aggregate(&freq, &sev, 40_000, 9, Execution::Parallel).unwrap();
        let b = simulate_aggregate(&freq, &sev, 40_000, 9, Execution::Sequential).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn warns_on_thin_tail() {
        let x: Vec<f64> = (1..=1000).map(f64::from).collect();
        let r = risk_measures(&x, &[0.999]).unwrap();
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn spread_of_constant_severity_counts() {
        let freq = FrequencyModel::poisson(2.0).unwrap();
        let rows = convergence_study(&freq, &ConstantSeverity(1.0), &[500, 1000], 3, 4, Execution::Parallel).unwrap();
        assert_eq!(rows.len(), 6);
        let spread = convergence_spread(&rows);
        assert_eq!(spread.len(), 2);
    }
}
