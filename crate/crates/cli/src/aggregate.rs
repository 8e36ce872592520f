use std::path::PathBuf;

use clap::{Args, ValueEnum};
use map2risk::aggregate::{
    compare_frequencies, compound_moments, convergence_spread, convergence_study, note_severity_tail, risk_measures,
    simulate_aggregate, CompoundMoments, ConvergenceSpread, FrequencyModel, RiskReport,
};
use map2risk::counting::count_distribution;
use map2risk::exec::derive_seed;
use map2risk::io::{self, fmt17};
use map2risk::reference::{POISSON_ANNUAL_RATE, TAU_YEAR};
use map2risk::severity::DplnParams;
use map2risk::{Error, Result};
use serde::Serialize;

use crate::inputs::{self, check_levels};
use crate::output::{write_rows, OutputSet};
use crate::{Format, Globals};

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Frequency {
    Map2,
    Poisson,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LossFormat {
    None,
    Csv,
    Bin,
}

/// Inputs shared by `aggregate` and `compare-poisson`.
#[derive(Args, Debug)]
pub struct RiskArgs {
    /// Model JSON (`d0`, `d1`); the built-in estimate when omitted
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Severity JSON (parameters or `fit-severity` output); the built-in estimate when omitted
    #[arg(long)]
    pub severity: Option<PathBuf>,
    /// Monte Carlo replicates
    #[arg(long, default_value_t = 1_000_000)]
    pub k: usize,
    /// VaR/ES tolerance levels
    #[arg(long = "p", value_delimiter = ',', default_value = "0.95,0.99,0.995,0.999")]
    pub levels: Vec<f64>,
    /// Annual Poisson rate
    #[arg(long, default_value_t = POISSON_ANNUAL_RATE)]
    pub rate: f64,
    /// Truncation tolerance for the annual count distribution
    #[arg(long, default_value_t = 1e-10)]
    pub eps: f64,
}

#[derive(Args, Debug)]
pub struct AggregateArgs {
    #[command(flatten)]
    pub risk: RiskArgs,
    #[arg(long, value_enum, default_value_t = Frequency::Map2)]
    pub frequency: Frequency,
    /// Also write the simulated annual losses
    #[arg(long, value_enum, default_value_t = LossFormat::None)]
    pub losses: LossFormat,
    /// Repeat the VaR_0.999 estimate at each of `--ks` sample sizes
    #[arg(long)]
    pub convergence: bool,
    #[arg(long, value_delimiter = ',', default_value = "10000,100000,1000000")]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 50)]
    pub repeats: usize,
}

#[derive(Serialize)]
struct AggregateDocument {
    frequency: &'static str,
    seed: u64,
    tau: f64,
    expected_count: f64,
    count_variance: f64,
    p_zero: f64,
    zero_fraction: f64,
    compound: CompoundMoments,
    severity: DplnParams,
    #[serde(flatten)]
    report: RiskReport,
}

fn frequency(a: &RiskArgs, which: Frequency) -> Result<FrequencyModel> {
    match which {
        Frequency::Map2 => {
            let m = inputs::model(a.model.as_deref())?;
            Ok(FrequencyModel::Map2Counting {
                dist: count_distribution(&m, TAU_YEAR, a.eps)?,
            })
        }
        Frequency::Poisson => FrequencyModel::poisson(a.rate),
    }
}

fn levels_table(out: &mut OutputSet, stem: &str, report: &RiskReport) -> Result<()> {
    out.table(stem, &report.levels[..], |p| {
        let body: Vec<Vec<String>> = report
            .levels
            .iter()
            .map(|l| vec![fmt17(l.p), fmt17(l.var), fmt17(l.es)])
            .collect();
        write_rows(p, &["p", "var", "es"], &body)
    })
}

fn emit_warnings(report: &RiskReport) {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
}

pub fn aggregate(g: &Globals, a: &AggregateArgs, out: &mut OutputSet) -> Result<()> {
    check_levels(&a.risk.levels)?;
    let sev = inputs::severity(a.risk.severity.as_deref())?;
    let freq = frequency(&a.risk, a.frequency)?;
    let sample = simulate_aggregate(&freq, &sev, a.risk.k, g.seed, g.exec)?;
    let mut report = risk_measures(&sample.losses, &a.risk.levels)?;
    note_severity_tail(&mut report, &sev);
    emit_warnings(&report);
    let doc = AggregateDocument {
        frequency: freq.kind(),
        seed: g.seed,
        tau: TAU_YEAR,
        expected_count: freq.mean(),
        count_variance: freq.variance(),
        p_zero: freq.p_zero(),
        zero_fraction: sample.zero_fraction(),
        compound: compound_moments(&freq, &sev)?,
        severity: sev,
        report,
    };
    out.json("risk_report.json", &doc)?;
    levels_table(out, "risk_levels", &doc.report)?;
    match a.losses {
        LossFormat::None => {}
        LossFormat::Csv => {
            let p = out.path("losses.csv");
            io::write_losses_csv(&p, &sample.losses)?;
        }
        LossFormat::Bin => {
            let p = out.path("losses.bin");
            io::write_losses_bin(&p, &sample.losses)?;
        }
    }
    if a.convergence {
        if a.ks.contains(&0) {
            return Err(Error::InvalidArgument("--ks entries must be positive".into()));
        }
        let rows = convergence_study(&freq, &sev, &a.ks, a.repeats, derive_seed(g.seed, 1), g.exec)?;
        let spread: Vec<ConvergenceSpread> = convergence_spread(&rows);
        out.table("convergence", &rows[..], |p| io::write_convergence_csv(p, &rows))?;
        out.table("convergence_spread", &spread[..], |p| {
            let body: Vec<Vec<String>> = spread
                .iter()
                .map(|s| {
                    vec![
                        s.k.to_string(),
                        fmt17(s.median),
                        fmt17(s.q25),
                        fmt17(s.q75),
                        fmt17(s.iqr),
                    ]
                })
                .collect();
            write_rows(p, &["K", "median", "q25", "q75", "iqr"], &body)
        })?;
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub risk: RiskArgs,
}

pub fn compare_poisson(g: &Globals, a: &CompareArgs, out: &mut OutputSet) -> Result<()> {
    let r = &a.risk;
    check_levels(&r.levels)?;
    let m = inputs::model(r.model.as_deref())?;
    let sev = inputs::severity(r.severity.as_deref())?;
    let cmp = compare_frequencies(&m, r.rate, &sev, r.k, &r.levels, g.seed, g.exec)?;
    emit_warnings(&cmp.map2);
    out.json("comparison.json", &cmp)?;
    if out.format() == Format::Json {
        return Ok(());
    }
    let p = out.path("comparison_table.csv");
    {
        let mut body: Vec<Vec<String>> = Vec::new();
        for (a, b) in cmp.map2.levels.iter().zip(&cmp.poisson.levels) {
            for (measure, x, y) in [("var", a.var, b.var), ("es", a.es, b.es)] {
                body.push(vec![measure.to_string(), fmt17(a.p), fmt17(x), fmt17(y), fmt17(x / y)]);
            }
        }
        body.push(vec![
            "p_zero".to_string(),
            String::new(),
            fmt17(cmp.map2_p_zero),
            fmt17(cmp.poisson_p_zero),
            String::new(),
        ]);
        body.push(vec![
            "zero_fraction".to_string(),
            String::new(),
            fmt17(cmp.map2_zero_fraction),
            fmt17(cmp.poisson_zero_fraction),
            String::new(),
        ]);
        write_rows(&p, &["measure", "p", "map2", "poisson", "ratio"], &body)
    }
}
