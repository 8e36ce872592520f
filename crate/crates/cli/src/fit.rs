use std::path::PathBuf;

use clap::{Args, ValueEnum};
use map2risk::estimation::{fit_mle, model_summary, EmpiricalSummary, FitOptions, FitResult, FormChoice, FormFit};
use map2risk::io::{self, fmt17, ModelDocument};
use map2risk::severity::{fit_dpln, DplnFit, DplnFitOptions, Severity};
use map2risk::{Error, Result};
use serde::Serialize;

use crate::output::{write_rows, OutputSet};
use crate::Globals;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Form {
    Auto,
    GammaPositive,
    GammaNonpositive,
}

impl From<Form> for FormChoice {
    fn from(f: Form) -> Self {
        match f {
            Form::Auto => FormChoice::Auto,
            Form::GammaPositive => FormChoice::GammaPositive,
            Form::GammaNonpositive => FormChoice::GammaNonpositive,
        }
    }
}

#[derive(Args, Debug)]
pub struct FitMap2Args {
    /// Inter-loss durations in days, one per line (a second severity column is ignored)
    pub trace: PathBuf,
    /// Canonical form(s) to search
    #[arg(long, value_enum, default_value_t = Form::Auto)]
    pub form: Form,
    /// Warm-start restarts per form
    #[arg(long, default_value_t = 8)]
    pub restarts: usize,
    #[arg(long, default_value_t = 4000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-10)]
    pub tol: f64,
}

#[derive(Serialize)]
struct FitDocument<'a> {
    #[serde(flatten)]
    model: ModelDocument,
    fit: FitMeta<'a>,
}

#[derive(Serialize)]
struct FitMeta<'a> {
    n: usize,
    seed: u64,
    loglik: f64,
    converged: bool,
    iterations: usize,
    delta_at_start: f64,
    per_form: &'a [FormFit],
}

#[derive(Serialize)]
struct SummaryRow {
    quantity: &'static str,
    empirical: f64,
    model: f64,
}

pub fn fit_map2(g: &Globals, a: &FitMap2Args, out: &mut OutputSet) -> Result<()> {
    let trace = io::ingest(&a.trace)?;
    let opts = FitOptions {
        restarts: a.restarts,
        max_iter: a.max_iter,
        tol: a.tol,
        seed: g.seed,
        form: a.form.into(),
        exec: g.exec,
    };
    let fit: FitResult = fit_mle(&trace.times, &opts)?;
    let m = fit.map2()?;
    log::info!(
        "fitted {} form, loglik {:.6}, converged {}",
        fit.model.form.as_str(),
        fit.loglik,
        fit.converged
    );
    out.json(
        "model.json",
        &FitDocument {
            model: ModelDocument::from_map2(&m, Some(fit.model)),
            fit: FitMeta {
                n: trace.n(),
                seed: g.seed,
                loglik: fit.loglik,
                converged: fit.converged,
                iterations: fit.iterations,
                delta_at_start: fit.delta_at_start,
                per_form: &fit.per_form,
            },
        },
    )?;

    let emp = EmpiricalSummary::from_times(&trace.times)?;
    let [m1, m2, m3, rho] = model_summary(&m)?;
    let model_cv = (m2 - m1 * m1).sqrt() / m1;
    let rows = [
        SummaryRow {
            quantity: "m1",
            empirical: emp.m1,
            model: m1,
        },
        SummaryRow {
            quantity: "m2",
            empirical: emp.m2,
            model: m2,
        },
        SummaryRow {
            quantity: "m3",
            empirical: emp.m3,
            model: m3,
        },
        SummaryRow {
            quantity: "cv",
            empirical: emp.cv(),
            model: model_cv,
        },
        SummaryRow {
            quantity: "rho",
            empirical: emp.rho,
            model: rho,
        },
    ];
    out.table("fit_summary", &rows[..], |p| {
        let body: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r.quantity.to_string(), fmt17(r.empirical), fmt17(r.model)])
            .collect();
        write_rows(p, &["quantity", "empirical", "model"], &body)
    })?;
    out.table("fit_forms", &fit.per_form[..], |p| {
        let body: Vec<Vec<String>> = fit
            .per_form
            .iter()
            .map(|f| {
                let c = f.model;
                vec![
                    f.form.as_str().to_string(),
                    fmt17(c.x),
                    fmt17(c.y),
                    fmt17(c.u),
                    fmt17(c.v),
                    fmt17(f.loglik),
                    fmt17(f.warm_loglik),
                    fmt17(f.delta_at_start),
                    f.converged.to_string(),
                    f.iterations.to_string(),
                ]
            })
            .collect();
        write_rows(
            p,
            &[
                "form",
                "x",
                "y",
                "u",
                "v",
                "loglik",
                "warm_loglik",
                "delta_at_start",
                "converged",
                "iterations",
            ],
            &body,
        )
    })
}

#[derive(Args, Debug)]
pub struct FitSeverityArgs {
    /// Loss amounts, one per line, or a two-column trace whose second column holds them
    pub data: PathBuf,
    #[arg(long, default_value_t = 4000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(Serialize)]
struct SeverityDocument<'a> {
    #[serde(flatten)]
    fit: &'a DplnFit,
    n: usize,
    /// `None` when the fitted tail index leaves the mean infinite.
    mean: Option<f64>,
    finite_variance: bool,
}

pub fn fit_severity(a: &FitSeverityArgs, out: &mut OutputSet) -> Result<()> {
    let trace = io::ingest(&a.data)?;
    let xs = trace.severities.unwrap_or(trace.times);
    if let Some(&x) = xs.iter().find(|x| **x <= 0.0) {
        return Err(Error::NonpositiveX(x));
    }
    let fit = fit_dpln(
        &xs,
        &DplnFitOptions {
            max_iter: a.max_iter,
            tol: a.tol,
        },
    )?;
    let p = fit.params;
    log::info!(
        "dPlN fit: alpha {:.4} beta {:.4} mu {:.4} sigma2 {:.4}, loglik {:.6}",
        p.alpha,
        p.beta,
        p.mu,
        p.sigma2,
        fit.loglik
    );
    let finite_variance = p.second_moment().is_ok();
    if !finite_variance {
        log::warn!("fitted tail index {:.4} <= 2: aggregate variance is infinite", p.alpha);
    }
    out.json(
        "severity.json",
        &SeverityDocument {
            fit: &fit,
            n: xs.len(),
            mean: p.mean().ok(),
            finite_variance,
        },
    )?;
    let names = ["alpha", "beta", "mu", "sigma2"];
    let est = [p.alpha, p.beta, p.mu, p.sigma2];
    let start = [fit.start.alpha, fit.start.beta, fit.start.mu, fit.start.sigma2];
    out.table("severity_fit", &fit, |path| {
        let body: Vec<Vec<String>> = (0..4)
            .map(|i| vec![names[i].to_string(), fmt17(est[i]), fmt17(start[i])])
            .collect();
        write_rows(path, &["parameter", "estimate", "start"], &body)
    })
}
