//! Persistence of short and long inter-loss times.
//!
//! For a threshold `s`, a gap is short when `T < s` and long when `T >= s`
//! (ties count as long). With `E = e^{D0 s}`:
//!
//! * `p01(s) = P(T_{n+1} >= s | T_n < s) = phi (I - E) P* E P* e / (1 - phi E e)`
//! * `p11(s) = P(T_{n+1} >= s | T_n >= s) = phi E P* E P* e / (phi E e)`
//! * the number `S` of consecutive short gaps from a loss epoch has
//!   `P(S = 0) = phi E e` and `P(S = n) = phi [(I - E) P*]^n E P* e`;
//! * the number `L` of consecutive long gaps has `P(L = 0) = 1 - phi E e` and
//!   `P(L = n) = phi (E P*)^n (I - E) P* e`.

use serde::{Deserialize, Serialize};

use crate::counting::PoissonProcess;
use crate::error::{Error, Result};
use crate::linalg::{expm2, Mat2, Vec2};
use crate::map2::Map2;

const MIN_CONDITIONING: f64 = 1e-14;

/// Default spell table length.
pub const DEFAULT_N_MAX: usize = 100;

/// The loss-epoch chain of a Markov renewal process with phase-type gaps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbeddedChain {
    pub phi: Vec2,
    pub d0: Mat2,
    pub p_star: Mat2,
}

/// Processes whose gaps are driven by a loss-epoch phase chain.
pub trait MarkovRenewal {
    fn embedded_chain(&self) -> Result<EmbeddedChain>;
}

impl MarkovRenewal for Map2 {
    fn embedded_chain(&self) -> Result<EmbeddedChain> {
        let st = self.stationary_objects()?;
        Ok(EmbeddedChain {
            phi: st.phi,
            d0: self.d0(),
            p_star: st.p_star,
        })
    }
}

impl MarkovRenewal for PoissonProcess {
    fn embedded_chain(&self) -> Result<EmbeddedChain> {
        let r = self.rate();
        Ok(EmbeddedChain {
            phi: Vec2([1.0, 0.0]),
            d0: Mat2::diag(-r, -r),
            p_star: Mat2::new(1.0, 0.0, 1.0, 0.0),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersistenceReport {
    pub s: f64,
    /// Probability of a long gap after a short one.
    pub p01: f64,
    /// Probability of a long gap after a long one.
    pub p11: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpellKind {
    Short,
    Long,
}

impl SpellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SpellKind::Short => "short",
            SpellKind::Long => "long",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpellDist {
    pub s: f64,
    pub kind: SpellKind,
    /// `P(spell = n)` for `n = 0..=n_max`.
    pub mass: Vec<f64>,
    /// `P(spell > n_max)`.
    pub residual: f64,
}

fn check_threshold(s: f64) -> Result<()> {
    if s > 0.0 && s.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("threshold {s}")))
    }
}

/// `p01(s)` and `p11(s)`.
pub fn transition_probs<M: MarkovRenewal + ?Sized>(m: &M, s: f64) -> Result<PersistenceReport> {
    check_threshold(s)?;
    let c = m.embedded_chain()?;
    let e = expm2(&c.d0, s);
    let p_long = (c.phi * e).sum();
    let p_short = 1.0 - p_long;
    if p_short < MIN_CONDITIONING {
        return Err(Error::DegenerateConditioning(p_short));
    }
    if p_long < MIN_CONDITIONING {
        return Err(Error::DegenerateConditioning(p_long));
    }
    let tail = e * c.p_star * Vec2::ONES;
    let short_then = c.phi * (Mat2::IDENTITY - e) * c.p_star;
    let long_then = c.phi * e * c.p_star;
    Ok(PersistenceReport {
        s,
        p01: (short_then.dot(&tail) / p_short).clamp(0.0, 1.0),
        p11: (long_then.dot(&tail) / p_long).clamp(0.0, 1.0),
    })
}

/// Mass of the short or long spell length, with the exact tail beyond
/// `n_max` from the geometric matrix series.
pub fn spell_distribution<M: MarkovRenewal + ?Sized>(
    m: &M,
    s: f64,
    kind: SpellKind,
    n_max: usize,
) -> Result<SpellDist> {
    check_threshold(s)?;
    if n_max == 0 {
        return Err(Error::InvalidArgument("n_max must be at least 1".into()));
    }
    let c = m.embedded_chain()?;
    let e = expm2(&c.d0, s);
    let p_first_long = (c.phi * e).sum();
    // step matrix and the column that closes a spell
    let (step, close, zero) = match kind {
        SpellKind::Short => ((Mat2::IDENTITY - e) * c.p_star, e * c.p_star * Vec2::ONES, p_first_long),
        SpellKind::Long => (
            e * c.p_star,
            (Mat2::IDENTITY - e) * c.p_star * Vec2::ONES,
            1.0 - p_first_long,
        ),
    };
    let mut mass = Vec::with_capacity(n_max + 1);
    mass.push(zero);
    let mut row = c.phi;
    for _ in 1..=n_max {
        row = row * step;
        mass.push(row.dot(&close).max(0.0));
    }
    let resolvent = (Mat2::IDENTITY - step)
        .inverse()
        .ok_or(Error::SingularSystem("spell series does not converge"))?;
    let residual = ((row * step * resolvent).dot(&close)).max(0.0);
    Ok(SpellDist {
        s,
        kind,
        mass,
        residual,
    })
}

fn is_short(t: f64, s: f64) -> bool {
    t < s
}

/// Plug-in estimate of `p01(s)` and the number of conditioning pairs.
pub fn empirical_p01(times: &[f64], s: f64) -> Result<(f64, usize)> {
    conditional_long(times, s, true)
}

/// Plug-in estimate of `p11(s)` and the number of conditioning pairs.
pub fn empirical_p11(times: &[f64], s: f64) -> Result<(f64, usize)> {
    conditional_long(times, s, false)
}

fn conditional_long(times: &[f64], s: f64, after_short: bool) -> Result<(f64, usize)> {
    check_threshold(s)?;
    if times.len() < 2 {
        return Err(Error::TooShort {
            got: times.len(),
            need: 2,
        });
    }
    let mut events = 0usize;
    let mut hits = 0usize;
    for w in times.windows(2) {
        if is_short(w[0], s) == after_short {
            events += 1;
            if !is_short(w[1], s) {
                hits += 1;
            }
        }
    }
    if events == 0 {
        return Err(Error::InsufficientData(if after_short {
            "no short gap to condition on"
        } else {
            "no long gap to condition on"
        }));
    }
    Ok((hits as f64 / events as f64, events))
}

/// Empirical transition probabilities with the number of conditioning
/// pairs behind each.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalPersistence {
    pub report: PersistenceReport,
    pub n01: usize,
    pub n11: usize,
}

pub fn empirical_persistence(times: &[f64], s: f64) -> Result<EmpiricalPersistence> {
    let (p01, n01) = empirical_p01(times, s)?;
    let (p11, n11) = empirical_p11(times, s)?;
    Ok(EmpiricalPersistence {
        report: PersistenceReport { s, p01, p11 },
        n01,
        n11,
    })
}

/// Empirical spell-length law.
///
/// Every gap index is taken as a spell start, matching the stationary
/// analytic law, and the length is the number of consecutive gaps of the
/// given kind from there. Spells that reach the end of the trace are
/// censored and dropped. Returns the distribution and the number of
/// uncensored starts.
pub fn empirical_spells(times: &[f64], s: f64, kind: SpellKind, n_max: usize) -> Result<(SpellDist, usize)> {
    check_threshold(s)?;
    if times.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let wanted = |t: f64| is_short(t, s) == (kind == SpellKind::Short);
    // run[i] = length of the run of wanted gaps starting at i; None if censored
    let mut run: Option<usize> = None;
    let mut counts = vec![0usize; n_max + 1];
    let mut beyond = 0usize;
    let mut total = 0usize;
    for &t in times.iter().rev() {
        run = if wanted(t) { run.map(|r| r + 1) } else { Some(0) };
        if let Some(r) = run {
            total += 1;
            match counts.get_mut(r) {
                Some(c) => *c += 1,
                None => beyond += 1,
            }
        }
    }
    if total == 0 {
        return Err(Error::InsufficientData("every spell is censored"));
    }
    let n = total as f64;
    Ok((
        SpellDist {
            s,
            kind,
            mass: counts.iter().map(|&c| c as f64 / n).collect(),
            residual: beyond as f64 / n,
        },
        total,
    ))
}

/// Nearest-rank percentile: the value at rank `ceil(p/100 * n)` of the
/// sorted trace, `0 < p < 100`.
pub fn percentile_threshold(times: &[f64], p: f64) -> Result<f64> {
    if times.is_empty() {
        return Err(Error::EmptyTrace);
    }
    if !(p > 0.0 && p < 100.0) {
        return Err(Error::InvalidArgument(format!("percentile {p}")));
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// One line of the persistence report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersistenceRow {
    pub s: f64,
    pub quantity: String,
    pub analytic: f64,
    pub empirical: Option<f64>,
    pub n_events: usize,
}

/// Analytic `p01`, `p11` and, when a trace is given, their empirical
/// counterparts at each threshold.
pub fn persistence_rows<M: MarkovRenewal + ?Sized>(
    m: &M,
    thresholds: &[f64],
    times: Option<&[f64]>,
) -> Result<Vec<PersistenceRow>> {
    let mut rows = Vec::with_capacity(2 * thresholds.len());
    for &s in thresholds {
        let r = transition_probs(m, s)?;
        for (quantity, analytic, emp) in [
            ("p01", r.p01, times.map(|t| empirical_p01(t, s))),
            ("p11", r.p11, times.map(|t| empirical_p11(t, s))),
        ] {
            let (empirical, n_events) = match emp {
                Some(Ok((p, n))) => (Some(p), n),
                Some(Err(Error::InsufficientData(_))) | None => (None, 0),
                Some(Err(e)) => return Err(e),
            };
            rows.push(PersistenceRow {
                s,
                quantity: quantity.to_string(),
                analytic,
                empirical,
                n_events,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;

    #[test]
    fn poisson_is_memoryless() {
        let p = PoissonProcess::new(0.4).unwrap();
        let s = 2.0;
        let q = (-0.4f64 * s).exp();
        let r = transition_probs(&p, s).unwrap();
        assert!((r.p01 - q).abs() < 1e-14);
        assert!((r.p11 - q).abs() < 1e-14);
        let short = spell_distribution(&p, s, SpellKind::Short, 20).unwrap();
        for (n, &m) in short.mass.iter().enumerate() {
            assert!((m - (1.0 - q).powi(n as i32) * q).abs() < 1e-14);
        }
    }

    #[test]
    fn poisson_embedding_matches_scalar_path() {
        let a = transition_probs(&Map2::poisson(0.4).unwrap(), 3.0).unwrap();
        let b = transition_probs(&PoissonProcess::new(0.4).unwrap(), 3.0).unwrap();
        assert!((a.p01 - b.p01).abs() < 1e-14 && (a.p11 - b.p11).abs() < 1e-14);
    }

    #[test]
    fn spells_normalize_with_residual() {
        let m = reference::estimated_map2();
        for kind in [SpellKind::Short, SpellKind::Long] {
            for n_max in [3, 100, 500] {
                let d = spell_distribution(&m, 3.0, kind, n_max).unwrap();
                let total: f64 = d.mass.iter().sum::<f64>() + d.residual;
                assert!((total - 1.0).abs() < 1e-12, "{kind:?} {n_max}: {total}");
            }
        }
        let short = spell_distribution(&m, 7.0, SpellKind::Short, 10).unwrap();
        let long = spell_distribution(&m, 7.0, SpellKind::Long, 10).unwrap();
        assert!((short.mass[0] + long.mass[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_conditioning() {
        let m = reference::estimated_map2();
        assert!(matches!(
            transition_probs(&m, 1e-20),
            Err(Error::DegenerateConditioning(_))
        ));
    }

    #[test]
    fn empirical_small_cases() {
        let (p01, n) = empirical_p01(&[1.0, 1.0, 1.0, 1.0], 2.0).unwrap();
        assert_eq!((1.0 - p01, n), (1.0, 3));
        assert!(matches!(
            empirical_p01(&[5.0, 5.0, 5.0], 1.0),
            Err(Error::InsufficientData(_))
        ));
        // ties count as long
        let (p11, n) = empirical_p11(&[2.0, 2.0, 1.0], 2.0).unwrap();
        assert_eq!((p11, n), (0.5, 2));
    }

    #[test]
    fn empirical_spells_count_runs() {
        // short = 1, long = 9, s = 5
        let t = [1.0, 1.0, 9.0, 1.0, 9.0, 9.0, 1.0];
        let (d, n) = empirical_spells(&t, 5.0, SpellKind::Short, 5).unwrap();
        // starts 0..=5 are uncensored: lengths 2,1,0,1,0,0
        assert_eq!(n, 6);
        assert!((d.mass[0] - 0.5).abs() < 1e-15);
        assert!((d.mass[1] - 2.0 / 6.0).abs() < 1e-15);
        assert!((d.mass[2] - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn nearest_rank() {
        let grid: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile_threshold(&grid, 50.0).unwrap(), 50.0);
        assert_eq!(percentile_threshold(&grid, 0.5).unwrap(), 1.0);
        assert_eq!(percentile_threshold(&[4.0; 7], 90.0).unwrap(), 4.0);
        assert!(matches!(percentile_threshold(&[], 50.0), Err(Error::EmptyTrace)));
    }
}
