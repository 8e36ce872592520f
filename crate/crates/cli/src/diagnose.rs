use std::path::PathBuf;

use clap::Args;
use map2risk::counting::{count_distribution, vtm_sweep, CountMoments, CountingProcess};
use map2risk::io::{self, fmt17};
use map2risk::persistence::{
    empirical_spells, percentile_threshold, persistence_rows, spell_distribution, SpellDist, SpellKind,
};
use map2risk::{Error, Result};
use serde::Serialize;

use crate::inputs::{self, check_positive};
use crate::output::{tag, write_rows, OutputSet};
use crate::Globals;

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    /// Model JSON (`d0`, `d1`); the built-in estimate when omitted
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Observed inter-loss durations for empirical columns and percentile thresholds
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Count distribution and moments over windows `--tau`
    #[arg(long)]
    pub counting: bool,
    /// Transition probabilities and spell-length laws at each threshold
    #[arg(long)]
    pub persistence: bool,
    /// VtM sweep over randomly drawn canonical models
    #[arg(long)]
    pub vtm_sweep: bool,
    /// Window lengths in days
    #[arg(long, value_delimiter = ',', default_value = "365")]
    pub tau: Vec<f64>,
    /// Truncation tolerance for the count distribution
    #[arg(long, default_value_t = 1e-10)]
    pub eps: f64,
    /// Persistence thresholds in days
    #[arg(long, value_delimiter = ',', default_value = "3,11")]
    pub thresholds: Vec<f64>,
    /// Percentiles of the trace used as extra thresholds (needs `--trace`)
    #[arg(long, value_delimiter = ',')]
    pub percentiles: Vec<f64>,
    /// Largest spell length reported
    #[arg(long, default_value_t = 100)]
    pub n_max: usize,
    #[arg(long, default_value_t = 10_000)]
    pub sweep_models: usize,
    #[arg(long, value_delimiter = ',', default_value = "1,10,100")]
    pub sweep_taus: Vec<f64>,
}

pub fn run(g: &Globals, a: &DiagnoseArgs, out: &mut OutputSet) -> Result<()> {
    if !(a.counting || a.persistence || a.vtm_sweep) {
        return Err(Error::InvalidArgument(
            "choose at least one of --counting, --persistence, --vtm-sweep".into(),
        ));
    }
    let m = inputs::model(a.model.as_deref())?;
    let times = a.trace.as_deref().map(io::ingest).transpose()?.map(|t| t.times);
    if a.counting {
        counting(&m, a, out)?;
    }
    if a.persistence {
        persistence(&m, a, times.as_deref(), out)?;
    }
    if a.vtm_sweep {
        sweep(g, a, out)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct CountingEntry {
    #[serde(flatten)]
    moments: CountMoments,
    p_zero: f64,
    mass: Vec<f64>,
    truncation_mass: f64,
}

fn counting(m: &map2risk::Map2, a: &DiagnoseArgs, out: &mut OutputSet) -> Result<()> {
    check_positive("--tau", &a.tau)?;
    let mut entries = Vec::with_capacity(a.tau.len());
    let mut dists = Vec::with_capacity(a.tau.len());
    for &tau in &a.tau {
        let d = count_distribution(m, tau, a.eps)?;
        entries.push(CountingEntry {
            moments: m.count_moments(tau)?,
            p_zero: d.pmf(0),
            mass: d.mass.clone(),
            truncation_mass: d.truncation_mass,
        });
        dists.push(d);
    }
    match out.format() {
        crate::Format::Json => out.json("counting.json", &entries),
        crate::Format::Csv => {
            let body: Vec<Vec<String>> = entries
                .iter()
                .map(|e| {
                    let c = &e.moments;
                    vec![
                        fmt17(c.tau),
                        fmt17(c.mean),
                        fmt17(c.variance),
                        fmt17(c.vtm),
                        fmt17(c.covariance),
                        fmt17(e.p_zero),
                        fmt17(e.truncation_mass),
                    ]
                })
                .collect();
            let p = out.path("counting_moments.csv");
            write_rows(
                &p,
                &[
                    "tau",
                    "mean",
                    "variance",
                    "vtm",
                    "covariance",
                    "p_zero",
                    "truncation_mass",
                ],
                &body,
            )?;
            for d in &dists {
                let p = out.path(&format!("counting_tau{}.csv", tag(d.tau)));
                io::write_counting_csv(&p, d)?;
            }
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SpellEntry {
    analytic: SpellDist,
    empirical: Option<SpellDist>,
    uncensored_starts: Option<usize>,
}

fn persistence(m: &map2risk::Map2, a: &DiagnoseArgs, times: Option<&[f64]>, out: &mut OutputSet) -> Result<()> {
    let mut thresholds = a.thresholds.clone();
    if !a.percentiles.is_empty() {
        let t = times.ok_or_else(|| Error::InvalidArgument("--percentiles needs --trace".into()))?;
        for &p in &a.percentiles {
            thresholds.push(percentile_threshold(t, p)?);
        }
    }
    check_positive("--thresholds", &thresholds)?;
    let rows = persistence_rows(m, &thresholds, times)?;
    out.table("persistence", &rows[..], |p| io::write_persistence_csv(p, &rows))?;

    let mut spells = Vec::new();
    for &s in &thresholds {
        for kind in [SpellKind::Short, SpellKind::Long] {
            let analytic = spell_distribution(m, s, kind, a.n_max)?;
            let (empirical, uncensored_starts) = match times {
                Some(t) => {
                    let (d, n) = empirical_spells(t, s, kind, a.n_max)?;
                    (Some(d), Some(n))
                }
                None => (None, None),
            };
            spells.push(SpellEntry {
                analytic,
                empirical,
                uncensored_starts,
            });
        }
    }
    match out.format() {
        crate::Format::Json => out.json("spells.json", &spells),
        crate::Format::Csv => {
            for e in &spells {
                let d = &e.analytic;
                let p = out.path(&format!("spells_{}_s{}.csv", d.kind.as_str(), tag(d.s)));
                io::write_spells_csv(&p, d)?;
                if let Some(emp) = &e.empirical {
                    let p = out.path(&format!("spells_{}_s{}_empirical.csv", d.kind.as_str(), tag(d.s)));
                    io::write_spells_csv(&p, emp)?;
                }
            }
            Ok(())
        }
    }
}

fn sweep(g: &Globals, a: &DiagnoseArgs, out: &mut OutputSet) -> Result<()> {
    check_positive("--sweep-taus", &a.sweep_taus)?;
    let t = vtm_sweep(a.sweep_models, &a.sweep_taus, g.seed, g.exec)?;
    for (tau, f) in t.taus.iter().zip(&t.fraction_below_one) {
        log::info!("VtM({tau}) < 1 for a fraction {f:.4} of {} models", t.rows.len());
    }
    match out.format() {
        crate::Format::Json => out.json("vtm_sweep.json", &t),
        crate::Format::Csv => {
            let p = out.path("vtm_sweep.csv");
            io::write_sweep_csv(&p, &t)?;
            let body: Vec<Vec<String>> = t
                .taus
                .iter()
                .zip(&t.fraction_below_one)
                .map(|(tau, f)| vec![fmt17(*tau), fmt17(*f), t.rows.len().to_string(), t.rejected.to_string()])
                .collect();
            let p = out.path("vtm_sweep_summary.csv");
            write_rows(&p, &["tau", "fraction_below_one", "models", "rejected"], &body)
        }
    }
}
