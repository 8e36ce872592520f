use clap::{Args, ValueEnum};
use map2risk::aggregate::{compare_frequencies, compound_moments, simulate_aggregate, FrequencyModel};
use map2risk::counting::{count_distribution, sample_canonical, vtm_sweep, CountingProcess};
use map2risk::estimation::{fit_mle, FitOptions};
use map2risk::exec::{derive_seed, stream_rng};
use map2risk::io::{fmt17, ModelDocument};
use map2risk::map2::simulate_map2;
use map2risk::persistence::{spell_distribution, transition_probs, SpellKind};
use map2risk::reference::{self, POISSON_ANNUAL_RATE, TAU_YEAR};
use map2risk::{Error, Map2, Result};
use serde::Serialize;

use crate::inputs;
use crate::output::{write_rows, OutputSet};
use crate::Globals;

/// 225 inter-loss gaps simulated from the built-in model.
pub const SYNTHETIC_TRACE: &str = include_str!("../data/synthetic_trace.csv");

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Group {
    Moments,
    Counting,
    Persistence,
    Spells,
    Compound,
    Ordering,
    Sweep,
    Estimation,
}

impl Group {
    const ALL: [Group; 8] = [
        Group::Moments,
        Group::Counting,
        Group::Persistence,
        Group::Spells,
        Group::Compound,
        Group::Ordering,
        Group::Sweep,
        Group::Estimation,
    ];
}

#[derive(Args, Debug)]
pub struct ReproduceArgs {
    /// Monte Carlo replicates for the simulation checks
    #[arg(long, default_value_t = 1_000_000)]
    pub k: usize,
    /// Seeds in the risk-ordering check
    #[arg(long, default_value_t = 5)]
    pub ordering_seeds: u64,
    /// Gaps in the self-recovery fit
    #[arg(long, default_value_t = 100_000)]
    pub recovery_n: usize,
    /// Run only these groups
    #[arg(long, value_enum, value_delimiter = ',')]
    pub only: Vec<Group>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub group: Group,
    pub check: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Default)]
struct Table {
    checks: Vec<Check>,
}

impl Table {
    fn near(&mut self, group: Group, check: &str, value: f64, target: f64, tolerance: f64) {
        self.push(
            group,
            check,
            value,
            target,
            tolerance,
            (value - target).abs() <= tolerance,
        );
    }

    fn push(&mut self, group: Group, check: &str, value: f64, target: f64, tolerance: f64, pass: bool) {
        self.checks.push(Check {
            group,
            check: check.to_string(),
            value,
            target,
            tolerance,
            pass,
        });
    }
}

/// Run the selected groups, write the table and print it. Returns whether
/// every check passed.
pub fn run(g: &Globals, a: &ReproduceArgs, out: &mut OutputSet) -> Result<bool> {
    let groups: Vec<Group> = if a.only.is_empty() {
        Group::ALL.to_vec()
    } else {
        a.only.clone()
    };
    let m = reference::estimated_map2();
    let mut t = Table::default();
    for group in groups {
        log::info!("running {group:?}");
        match group {
            Group::Moments => moments(&m, &mut t)?,
            Group::Counting => counting(&m, &mut t)?,
            Group::Persistence => persistence(&m, &mut t)?,
            Group::Spells => spells(g, &m, &mut t)?,
            Group::Compound => compound(g, a, &m, &mut t)?,
            Group::Ordering => ordering(g, a, &m, &mut t)?,
            Group::Sweep => sweep(g, &mut t)?,
            Group::Estimation => estimation(g, a, &m, &mut t, out)?,
        }
    }
    let checks = t.checks;
    out.table("reproduce", &checks[..], |p| {
        let body: Vec<Vec<String>> = checks
            .iter()
            .map(|c| {
                vec![
                    group_name(c.group),
                    c.check.clone(),
                    fmt17(c.value),
                    fmt17(c.target),
                    fmt17(c.tolerance),
                    if c.pass { "PASS" } else { "FAIL" }.to_string(),
                ]
            })
            .collect();
        write_rows(p, &["group", "check", "value", "target", "tolerance", "result"], &body)
    })?;
    for c in &checks {
        println!(
            "{}  {:<12} {:<48} {:>14.6} target {:>12} tol {:e}",
            if c.pass { "PASS" } else { "FAIL" },
            group_name(c.group),
            c.check,
            c.value,
            c.target,
            c.tolerance
        );
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    println!(
        "{} checks, {} passed, {} failed",
        checks.len(),
        checks.len() - failed,
        failed
    );
    Ok(failed == 0)
}

fn group_name(g: Group) -> String {
    g.to_possible_value()
        .expect("no skipped variants")
        .get_name()
        .to_string()
}

fn moments(m: &Map2, t: &mut Table) -> Result<()> {
    let ph = m.phase_type()?;
    t.near(Group::Moments, "m1", ph.moment(1)?, 22.0047, 1e-3);
    t.near(Group::Moments, "CV", ph.cv()?, 2.8205, 1e-3);
    t.near(Group::Moments, "rho", m.lag1_correlation()?, 0.3545, 1e-3);
    t.near(Group::Moments, "median", ph.quantile(0.5)?, 7.52, 0.05);
    Ok(())
}

fn counting(m: &Map2, t: &mut Table) -> Result<()> {
    t.near(Group::Counting, "E[N(365)]", m.count_mean(TAU_YEAR)?, 16.5874, 1e-3);
    t.near(Group::Counting, "V[N(365)]", m.count_variance(TAU_YEAR)?, 240.0192, 0.1);
    let d = count_distribution(m, TAU_YEAR, 1e-10)?;
    t.near(Group::Counting, "P(N(365)>=30)", d.sf(30), 0.2836, 0.002);
    Ok(())
}

fn persistence(m: &Map2, t: &mut Table) -> Result<()> {
    t.near(
        Group::Persistence,
        "1-p01(3)",
        1.0 - transition_probs(m, 3.0)?.p01,
        0.262,
        0.002,
    );
    t.near(
        Group::Persistence,
        "p11(11)",
        transition_probs(m, 11.0)?.p11,
        0.4340,
        0.002,
    );
    let short = spell_distribution(m, 3.0, SpellKind::Short, 100)?;
    for (n, target) in [0.7535, 0.1419, 0.0476].into_iter().enumerate() {
        t.near(
            Group::Persistence,
            &format!("P(S={n}) at s=3"),
            short.mass[n],
            target,
            0.002,
        );
    }
    let long = spell_distribution(m, 11.0, SpellKind::Long, 100)?;
    for (n, target) in [0.6291, 0.2101, 0.0759].into_iter().enumerate() {
        t.near(
            Group::Persistence,
            &format!("P(L={n}) at s=11"),
            long.mass[n],
            target,
            0.002,
        );
    }
    Ok(())
}

fn spells(g: &Globals, m: &Map2, t: &mut Table) -> Result<()> {
    let mut rng = stream_rng(derive_seed(g.seed, 1), 0);
    let mut models = vec![(*m, vec![3.0, 11.0])];
    while models.len() < 101 {
        let Ok(r) = sample_canonical(&mut rng).expand() else {
            continue;
        };
        let Ok(ph) = r.phase_type() else { continue };
        models.push((r, vec![ph.quantile(0.3)?, ph.quantile(0.6)?]));
    }
    let mut worst: f64 = 0.0;
    for (r, thresholds) in &models {
        for &s in thresholds {
            for kind in [SpellKind::Short, SpellKind::Long] {
                let d = spell_distribution(r, s, kind, 500)?;
                worst = worst.max((d.mass.iter().sum::<f64>() - 1.0).abs());
            }
        }
    }
    t.push(
        Group::Spells,
        "max |sum P(n<=500) - 1|, 101 models",
        worst,
        0.0,
        1e-10,
        worst <= 1e-10,
    );
    Ok(())
}

fn compound(g: &Globals, a: &ReproduceArgs, m: &Map2, t: &mut Table) -> Result<()> {
    let sev = inputs::severity(None)?;
    let freq = FrequencyModel::from_map2(m, 1e-10)?;
    let analytic = compound_moments(&freq, &sev)?.mean;
    t.near(Group::Compound, "E(Z) analytic / 4.16e6", analytic / 4.16e6, 1.0, 0.01);
    let s = simulate_aggregate(&freq, &sev, a.k, derive_seed(g.seed, 6), g.exec)?;
    t.near(
        Group::Compound,
        &format!("E(Z) Monte Carlo / 4.16e6, K={}", a.k),
        s.mean() / 4.16e6,
        1.0,
        0.05,
    );
    t.near(Group::Compound, "MAP2 zero fraction", s.zero_fraction(), 0.06, 0.01);
    let pois = FrequencyModel::poisson(POISSON_ANNUAL_RATE)?;
    let ps = simulate_aggregate(&pois, &sev, a.k, derive_seed(g.seed, 7), g.exec)?;
    let z = ps.zero_fraction();
    t.push(Group::Compound, "Poisson zero fraction", z, 0.0, 1e-6, z < 1e-6);
    Ok(())
}

fn ordering(g: &Globals, a: &ReproduceArgs, m: &Map2, t: &mut Table) -> Result<()> {
    let sev = inputs::severity(None)?;
    for i in 0..a.ordering_seeds {
        let seed = derive_seed(g.seed, 80 + i);
        let c = compare_frequencies(m, POISSON_ANNUAL_RATE, &sev, a.k, &[0.99, 0.999], seed, g.exec)?;
        for (x, y) in c.map2.levels.iter().zip(&c.poisson.levels) {
            for (name, mv, pv) in [("VaR", x.var, y.var), ("ES", x.es, y.es)] {
                let what = format!("seed #{i} {name}_{} MAP2/Poisson", x.p);
                t.push(Group::Ordering, &what, mv / pv, 1.0, 0.0, mv > pv);
            }
        }
    }
    Ok(())
}

fn sweep(g: &Globals, t: &mut Table) -> Result<()> {
    let s = vtm_sweep(10_000, &[10.0], derive_seed(g.seed, 9), g.exec)?;
    t.near(
        Group::Sweep,
        "fraction with VtM(10) < 1",
        s.fraction_below_one[0],
        0.0674,
        0.01,
    );
    let taus: Vec<f64> = (1..=40).map(|i| 0.25 * i as f64).collect();
    for (i, r) in reference::illustration_models().iter().enumerate() {
        let v = taus.iter().map(|&x| r.vtm(x)).collect::<Result<Vec<f64>>>()?;
        let drop = v.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
        t.push(
            Group::Sweep,
            &format!("largest VtM decrease on (0, 10], R{}", i + 1),
            drop,
            0.0,
            1e-12,
            drop <= 1e-12,
        );
    }
    Ok(())
}

fn estimation(g: &Globals, a: &ReproduceArgs, m: &Map2, t: &mut Table, out: &mut OutputSet) -> Result<()> {
    let trace = parse_bundled()?;
    let opts = FitOptions {
        seed: derive_seed(g.seed, 11),
        exec: g.exec,
        ..FitOptions::default()
    };
    let fit = fit_mle(&trace, &opts)?;
    let gen = m.log_likelihood(&trace)?;
    t.push(
        Group::Estimation,
        "bundled 225 gaps: fitted - generator loglik",
        fit.loglik - gen,
        0.0,
        0.0,
        fit.loglik >= gen,
    );
    out.json(
        "reproduce_fit.json",
        &ModelDocument::from_map2(&fit.map2()?, Some(fit.model)),
    )?;

    let times = simulate_map2(m, a.recovery_n, derive_seed(g.seed, 10))?;
    let fit = fit_mle(&times, &opts)?;
    let f = fit.map2()?;
    let (ph, fph) = (m.phase_type()?, f.phase_type()?);
    let n = a.recovery_n;
    for (name, x, y) in [
        ("m1", fph.moment(1)?, ph.moment(1)?),
        ("CV", fph.cv()?, ph.cv()?),
        ("rho", f.lag1_correlation()?, m.lag1_correlation()?),
    ] {
        t.near(
            Group::Estimation,
            &format!("self-recovery n={n}: {name} fitted/true"),
            x / y,
            1.0,
            0.01,
        );
    }
    let gen = m.log_likelihood(&times)?;
    t.push(
        Group::Estimation,
        &format!("self-recovery n={n}: fitted - generator loglik"),
        fit.loglik - gen,
        0.0,
        0.0,
        fit.loglik >= gen,
    );
    Ok(())
}

/// The bundled trace as durations.
pub fn parse_bundled() -> Result<Vec<f64>> {
    SYNTHETIC_TRACE
        .lines()
        .skip(1)
        .enumerate()
        .map(|(i, l)| {
            l.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: i + 2,
                text: l.to_string(),
            })
        })
        .collect()
}
