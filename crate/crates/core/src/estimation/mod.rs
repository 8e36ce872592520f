//! Fitting a MAP₂ to a trace of inter-loss times.
//!
//! Both canonical forms are searched over unconstrained coordinates
//! `(a, b, s1, s2)` with `x = -e^a`, `u = -e^b`, `y = e^a sigmoid(s1)` and
//! `v = e^b sigmoid(s2)`, so every iterate satisfies the sign constraints.
//! A moments-matching fit seeds the likelihood search, and the form with
//! the larger likelihood is returned.

pub mod nelder_mead;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{derive_seed, map_indexed, stream_rng, Execution};
use crate::linalg::Mat2;
use crate::map2::{CanonicalForm, CanonicalMap2, Map2};
use crate::stats;
use nelder_mead::{minimize, NelderMeadOptions};

/// Sample moments and lag-1 correlation of a trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSummary {
    pub n: usize,
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub rho: f64,
}

impl EmpiricalSummary {
    pub fn from_times(times: &[f64]) -> Result<Self> {
        if times.len() < 4 {
            return Err(Error::TooShort {
                got: times.len(),
                need: 4,
            });
        }
        if let Some((index, &value)) = times.iter().enumerate().find(|(_, t)| !(**t >= 0.0)) {
            return Err(Error::NegativeDuration { index, value });
        }
        let rho = stats::lag1_autocorrelation(times).ok_or(Error::DegenerateVariance("trace has zero variance"))?;
        Ok(EmpiricalSummary {
            n: times.len(),
            m1: stats::raw_moment(times, 1),
            m2: stats::raw_moment(times, 2),
            m3: stats::raw_moment(times, 3),
            rho,
        })
    }

    pub fn cv(&self) -> f64 {
        (self.m2 - self.m1 * self.m1).max(0.0).sqrt() / self.m1
    }
}

/// `(m1, m2, m3, rho)` implied by a model.
pub fn model_summary(m: &Map2) -> Result<[f64; 4]> {
    let ph = m.phase_type()?;
    Ok([ph.moment(1)?, ph.moment(2)?, ph.moment(3)?, m.lag1_correlation()?])
}

fn sigmoid(s: f64) -> f64 {
    1.0 / (1.0 + (-s).exp())
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

/// Map unconstrained coordinates to canonical parameters.
pub fn from_unconstrained(form: CanonicalForm, z: &[f64]) -> CanonicalMap2 {
    let (ea, eb) = (z[0].exp(), z[1].exp());
    CanonicalMap2 {
        form,
        x: -ea,
        y: ea * sigmoid(z[2]),
        u: -eb,
        v: eb * sigmoid(z[3]),
    }
}

/// Inverse of [`from_unconstrained`] on the interior of the constraint set.
pub fn to_unconstrained(c: &CanonicalMap2) -> [f64; 4] {
    [(-c.x).ln(), (-c.u).ln(), logit(c.y / -c.x), logit(c.v / -c.u)]
}

fn expand(form: CanonicalForm, z: &[f64]) -> Option<Map2> {
    if z.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let (d0, d1) = from_unconstrained(form, z).matrices();
    Map2::new(d0, d1).ok()
}

/// `(rho - rho_bar)^2 + sum_i ((m_i - m_bar_i) / m_bar_i)^2`.
pub fn delta(c: &CanonicalMap2, s: &EmpiricalSummary) -> f64 {
    let Ok(m) = c.expand() else {
        return f64::INFINITY;
    };
    delta_of(&m, s)
}

fn delta_of(m: &Map2, s: &EmpiricalSummary) -> f64 {
    match model_summary(m) {
        Ok([m1, m2, m3, rho]) => {
            let r = |a: f64, b: f64| ((a - b) / b).powi(2);
            let d = (rho - s.rho).powi(2) + r(m1, s.m1) + r(m2, s.m2) + r(m3, s.m3);
            if d.is_finite() {
                d
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Which canonical forms to search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormChoice {
    #[default]
    Auto,
    GammaPositive,
    GammaNonpositive,
}

impl FormChoice {
    pub fn forms(self) -> Vec<CanonicalForm> {
        match self {
            FormChoice::Auto => CanonicalForm::BOTH.to_vec(),
            FormChoice::GammaPositive => vec![CanonicalForm::GammaPositive],
            FormChoice::GammaNonpositive => vec![CanonicalForm::GammaNonpositive],
        }
    }
}

/// Best moments-matching point for one form.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentsMatch {
    pub model: CanonicalMap2,
    pub delta: f64,
}

fn random_start<R: Rng>(scale: f64, rng: &mut R) -> [f64; 4] {
    let base = (1.0 / scale).ln();
    [
        base + rng.random_range(-3.0..3.0),
        base + rng.random_range(-3.0..3.0),
        rng.random_range(-4.0..4.0),
        rng.random_range(-4.0..4.0),
    ]
}

/// Minimize `delta` over one canonical form from a few fixed and `restarts`
/// random starting points.
pub fn moments_match(
    summary: &EmpiricalSummary,
    form: CanonicalForm,
    restarts: usize,
    seed: u64,
) -> Result<MomentsMatch> {
    let base = (1.0 / summary.m1).ln();
    let mut starts: Vec<[f64; 4]> = vec![
        [base + 1.0, base - 1.5, 0.0, 0.0],
        [base - 1.5, base + 1.0, 0.0, 0.0],
        [base + 2.0, base - 2.5, -2.0, -2.0],
    ];
    let mut rng = stream_rng(seed, form as u64);
    starts.extend((0..restarts).map(|_| random_start(summary.m1, &mut rng)));

    let opts = NelderMeadOptions {
        max_iter: 3000,
        tol: 1e-12,
        step: 0.7,
    };
    let objective = |z: &[f64]| match expand(form, z) {
        Some(m) => delta_of(&m, summary),
        None => f64::INFINITY,
    };
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in &starts {
        let first = minimize(objective, start, &opts);
        let polished = minimize(objective, &first.x, &NelderMeadOptions { step: 0.1, ..opts });
        if polished.fx.is_finite() && best.as_ref().is_none_or(|(f, _)| polished.fx < *f) {
            best = Some((polished.fx, polished.x));
        }
    }
    let (delta, z) = best.ok_or(Error::NoFeasiblePoint)?;
    Ok(MomentsMatch {
        model: from_unconstrained(form, &z),
        delta,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FitOptions {
    /// Random restarts per form in addition to the warm start.
    pub restarts: usize,
    pub max_iter: usize,
    /// Relative tolerance on the log-likelihood.
    pub tol: f64,
    pub seed: u64,
    pub form: FormChoice,
    pub exec: Execution,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            restarts: 8,
            max_iter: 2000,
            tol: 1e-10,
            seed: 0,
            form: FormChoice::Auto,
            exec: Execution::default(),
        }
    }
}

/// Best likelihood run for one form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormFit {
    pub form: CanonicalForm,
    pub model: CanonicalMap2,
    pub loglik: f64,
    pub warm_start: CanonicalMap2,
    pub warm_loglik: f64,
    pub delta_at_start: f64,
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: CanonicalMap2,
    pub d0: Mat2,
    pub d1: Mat2,
    pub loglik: f64,
    pub warm_start: CanonicalMap2,
    pub delta_at_start: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Best run of every form that was searched.
    pub per_form: Vec<FormFit>,
}

impl FitResult {
    pub fn map2(&self) -> Result<Map2> {
        Map2::new(self.d0, self.d1)
    }
}

struct Run {
    z: Vec<f64>,
    fx: f64,
    converged: bool,
    iterations: usize,
}

fn fit_form(times: &[f64], summary: &EmpiricalSummary, form: CanonicalForm, opts: &FitOptions) -> Result<FormFit> {
    let tag = form as u64;
    let warm = moments_match(summary, form, opts.restarts, derive_seed(opts.seed, tag))?;
    let z0 = to_unconstrained(&warm.model);
    let scale = times.len() as f64;
    let objective = |z: &[f64]| match expand(form, z) {
        Some(m) => match m.log_likelihood(times) {
            Ok(ll) if ll.is_finite() => -ll / scale,
            _ => f64::INFINITY,
        },
        None => f64::INFINITY,
    };
    let warm_loglik = -objective(&z0) * scale;

    let nm = NelderMeadOptions {
        max_iter: opts.max_iter,
        tol: opts.tol,
        step: 0.5,
    };
    let start_seed = derive_seed(opts.seed, 100 + tag);
    let runs: Vec<Run> = map_indexed(opts.restarts + 1, opts.exec, |i| {
        let start = if i == 0 {
            z0.to_vec()
        } else {
            let mut rng = stream_rng(start_seed, i as u64);
            z0.iter().map(|v| v + rng.random_range(-1.5..1.5)).collect()
        };
        let first = minimize(objective, &start, &nm);
        let polished = minimize(objective, &first.x, &NelderMeadOptions { step: 0.1, ..nm });
        Run {
            converged: polished.converged,
            iterations: first.iterations + polished.iterations,
            z: polished.x,
            fx: polished.fx,
        }
    });
    let best = runs
        .into_iter()
        .filter(|r| r.fx.is_finite())
        .min_by(|a, b| {
            a.fx.total_cmp(&b.fx).then_with(|| {
                let norm = |z: &[f64]| z.iter().map(|v| v * v).sum::<f64>();
                norm(&a.z).total_cmp(&norm(&b.z))
            })
        })
        .ok_or_else(|| Error::OptimizerFailed(format!("no finite likelihood for {}", form.as_str())))?;
    if !best.converged {
        log::warn!(
            "{} fit stopped after {} iterations without meeting the tolerance",
            form.as_str(),
            best.iterations
        );
    }
    Ok(FormFit {
        form,
        model: from_unconstrained(form, &best.z),
        loglik: -best.fx * scale,
        warm_start: warm.model,
        warm_loglik,
        delta_at_start: warm.delta,
        converged: best.converged,
        iterations: best.iterations,
    })
}

/// Maximum likelihood MAP₂ over the requested canonical forms.
pub fn fit_mle(times: &[f64], opts: &FitOptions) -> Result<FitResult> {
    let summary = EmpiricalSummary::from_times(times)?;
    let mut per_form = Vec::new();
    for form in opts.form.forms() {
        per_form.push(fit_form(times, &summary, form, opts)?);
    }
    let best = per_form
        .iter()
        .max_by(|a, b| a.loglik.total_cmp(&b.loglik))
        .expect("at least one form")
        .clone();
    let m = best.model.expand()?;
    Ok(FitResult {
        model: best.model,
        d0: m.d0(),
        d1: m.d1(),
        loglik: best.loglik,
        warm_start: best.warm_start,
        delta_at_start: best.delta_at_start,
        converged: best.converged,
        iterations: best.iterations,
        per_form,
    })
}
