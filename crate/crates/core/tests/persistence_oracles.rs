// oracle values are kept at the precision they were computed to
#![allow(clippy::excessive_precision)]

mod common;

use common::{batch_means, canonical_strategy, random_models};
use map2risk::counting::PoissonProcess;
use map2risk::error::Error;
use map2risk::linalg::{expm2, Mat2, Vec2};
use map2risk::map2::simulate_map2;
use map2risk::persistence::{
    empirical_p01, empirical_p11, empirical_persistence, empirical_spells, percentile_threshold, persistence_rows,
    spell_distribution, transition_probs, SpellKind,
};
use map2risk::reference;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

// Entrywise quadrature of the gap kernel over [0, s) and [s, inf), 30 digits.
const ONE_MINUS_P01_3: f64 = 0.261_981_014_065_441_07;
const P11_3: f64 = 0.758_655_302_453_246_56;
const P01_11: f64 = 0.333_944_381_976_855_73;
const P11_11: f64 = 0.433_966_567_084_692_96;
const SHORT_3: [f64; 3] = [
    0.753_569_892_760_518_49,
    0.181_870_097_848_626_73,
    0.047_583_306_222_248_074,
];
const LONG_3: [f64; 3] = [
    0.246_430_107_239_481_47,
    0.181_870_097_848_626_73,
    0.135_004_758_836_875_33,
];
const SHORT_11: [f64; 3] = [
    0.371_058_459_943_114_98,
    0.210_031_493_893_868_3,
    0.138_519_384_693_901_89,
];
const LONG_11: [f64; 3] = [
    0.628_941_540_056_884_98,
    0.210_031_493_893_868_3,
    0.075_885_356_943_230_666,
];

#[test]
fn published_transition_probabilities() {
    let m = reference::estimated_map2();
    let r3 = transition_probs(&m, 3.0).unwrap();
    assert!((1.0 - r3.p01 - ONE_MINUS_P01_3).abs() < 1e-13);
    assert!((r3.p11 - P11_3).abs() < 1e-13);
    let r11 = transition_probs(&m, 11.0).unwrap();
    assert!((r11.p01 - P01_11).abs() < 1e-13);
    assert!((r11.p11 - P11_11).abs() < 1e-13);
}

#[test]
fn published_spell_masses() {
    let m = reference::estimated_map2();
    for (s, short, long) in [(3.0, SHORT_3, LONG_3), (11.0, SHORT_11, LONG_11)] {
        let a = spell_distribution(&m, s, SpellKind::Short, 100).unwrap();
        let b = spell_distribution(&m, s, SpellKind::Long, 100).unwrap();
        for n in 0..3 {
            assert!((a.mass[n] - short[n]).abs() < 1e-13, "S={n} at {s}");
            assert!((b.mass[n] - long[n]).abs() < 1e-13, "L={n} at {s}");
        }
    }
}

#[test]
fn poisson_has_no_persistence() {
    let p = PoissonProcess::new(0.5).unwrap();
    for s in [0.1, 1.0, 4.0] {
        let r = transition_probs(&p, s).unwrap();
        let long = (-0.5 * s).exp();
        assert!((r.p01 - long).abs() < 1e-14);
        assert!((r.p11 - long).abs() < 1e-14);
        let short = spell_distribution(&p, s, SpellKind::Short, 50).unwrap();
        for (n, &q) in short.mass.iter().enumerate() {
            assert!((q - (1.0 - long).powi(n as i32) * long).abs() < 1e-14);
        }
    }
}

#[test]
fn invalid_inputs() {
    let m = reference::estimated_map2();
    assert!(transition_probs(&m, 0.0).is_err());
    assert!(transition_probs(&m, f64::NAN).is_err());
    assert!(matches!(
        transition_probs(&m, 1e-15),
        Err(Error::DegenerateConditioning(_))
    ));
    assert!(spell_distribution(&m, 3.0, SpellKind::Short, 0).is_err());
    assert!(matches!(percentile_threshold(&[], 50.0), Err(Error::EmptyTrace)));
    assert!(percentile_threshold(&[1.0], 100.0).is_err());
}

#[test]
fn nearest_rank_percentile() {
    let t: Vec<f64> = (1..=10).map(f64::from).collect();
    assert_eq!(percentile_threshold(&t, 10.0).unwrap(), 1.0);
    assert_eq!(percentile_threshold(&t, 25.0).unwrap(), 3.0);
    assert_eq!(percentile_threshold(&t, 50.0).unwrap(), 5.0);
    assert_eq!(percentile_threshold(&t, 99.0).unwrap(), 10.0);
}

#[test]
fn empirical_counts_on_a_small_trace() {
    // short, long, short, short, long, long with s = 2
    let t = [1.0, 3.0, 1.0, 1.5, 2.0, 5.0];
    let (p01, n01) = empirical_p01(&t, 2.0).unwrap();
    assert_eq!(n01, 3);
    assert!((p01 - 2.0 / 3.0).abs() < 1e-15);
    let (p11, n11) = empirical_p11(&t, 2.0).unwrap();
    assert_eq!(n11, 2);
    assert!((p11 - 0.5).abs() < 1e-15);
    let (short, starts) = empirical_spells(&t, 2.0, SpellKind::Short, 5).unwrap();
    // the last gap is long, so no spell is censored
    assert_eq!(starts, 6);
    assert_eq!(short.mass[0] * 6.0, 3.0);
    assert_eq!(short.mass[1] * 6.0, 2.0);
    assert_eq!(short.mass[2] * 6.0, 1.0);
    // the two trailing long gaps start censored long spells
    let (long, starts) = empirical_spells(&t, 2.0, SpellKind::Long, 5).unwrap();
    assert_eq!(starts, 4);
    assert_eq!(long.mass[0] * 4.0, 3.0);
    assert_eq!(long.mass[1] * 4.0, 1.0);
    assert!(long.mass.iter().sum::<f64>() + long.residual > 1.0 - 1e-15);
}

#[test]
fn rows_carry_both_quantities() {
    let m = reference::estimated_map2();
    let t = simulate_map2(&m, 10_000, 4).unwrap();
    let rows = persistence_rows(&m, &[3.0, 11.0], Some(&t)).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.empirical.is_some() && r.n_events > 0));
    let bare = persistence_rows(&m, &[3.0], None).unwrap();
    assert!(bare.iter().all(|r| r.empirical.is_none()));
}

#[test]
fn published_simulation_at_three_days() {
    let m = reference::estimated_map2();
    let t = simulate_map2(&m, 1_000_000, 2718).unwrap();
    let emp = empirical_persistence(&t, 3.0).unwrap();
    assert!((1.0 - emp.report.p01 - 0.262).abs() < 0.01);
}

#[test]
fn analytic_matches_simulation() {
    let models = random_models(10, 303);
    let quantiles = [0.1, 0.3, 0.5, 0.7, 0.9];
    // 10 models x 5 thresholds x 5 quantities, 1% family-wise level
    let z = Normal::standard().inverse_cdf(1.0 - 0.01 / 500.0);
    for (i, m) in models.iter().enumerate() {
        let ph = m.phase_type().unwrap();
        let t = simulate_map2(m, 1_000_000, 40 + i as u64).unwrap();
        for q in quantiles {
            let s = ph.quantile(q).unwrap();
            let r = transition_probs(m, s).unwrap();
            let short = spell_distribution(m, s, SpellKind::Short, 100).unwrap();
            let checks: [(&str, f64, Estimator); 5] = [
                ("p01", r.p01, Box::new(move |b| empirical_p01(b, s).ok().map(|x| x.0))),
                ("p11", r.p11, Box::new(move |b| empirical_p11(b, s).ok().map(|x| x.0))),
                ("S=0", short.mass[0], Box::new(move |b| spell_mass(b, s, 0))),
                ("S=1", short.mass[1], Box::new(move |b| spell_mass(b, s, 1))),
                ("S=2", short.mass[2], Box::new(move |b| spell_mass(b, s, 2))),
            ];
            for (name, exact, f) in checks {
                let (est, se) = batch_means(&t, 100, f);
                assert!(
                    (est - exact).abs() < z * se + 1e-4,
                    "model {i} q {q} {name}: {est} vs {exact} (se {se})"
                );
            }
        }
    }
}

type Estimator = Box<dyn Fn(&[f64]) -> Option<f64>>;

fn spell_mass(t: &[f64], s: f64, n: usize) -> Option<f64> {
    empirical_spells(t, s, SpellKind::Short, 10)
        .ok()
        .map(|(d, _)| d.mass[n])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn spells_normalize_and_agree_at_zero(c in canonical_strategy(), q in 0.3f64..0.7) {
        let m = c.expand().unwrap();
        let s = m.phase_type().unwrap().quantile(q).unwrap();
        let short = spell_distribution(&m, s, SpellKind::Short, 500).unwrap();
        let long = spell_distribution(&m, s, SpellKind::Long, 500).unwrap();
        for d in [&short, &long] {
            let total: f64 = d.mass.iter().sum::<f64>() + d.residual;
            prop_assert!((total - 1.0).abs() < 1e-10);
            prop_assert!(d.mass.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
        prop_assert!((short.mass[0] + long.mass[0] - 1.0).abs() < 1e-14);
        let st = m.stationary_objects().unwrap();
        let at_least_one: f64 = short.mass[1..].iter().sum::<f64>() + short.residual;
        let long_first = (st.phi * expm2(&m.d0(), s)).sum();
        prop_assert!((at_least_one - (1.0 - long_first)).abs() < 1e-10);
    }

    #[test]
    fn step_matrix_powers_decay(c in canonical_strategy(), q in 0.3f64..0.7) {
        let m = c.expand().unwrap();
        let s = m.phase_type().unwrap().quantile(q).unwrap();
        let st = m.stationary_objects().unwrap();
        let e = expm2(&m.d0(), s);
        let q_short = (Mat2::IDENTITY - e) * st.p_star;
        let q_long = e * st.p_star;
        for step in [q_short, q_long] {
            let p50 = step.powi(50).norm_inf();
            let p200 = step.powi(200).norm_inf();
            prop_assert!(p200 <= p50 + 1e-300);
            prop_assert!(p200 < 1e-3, "{p200}");
        }
    }

    #[test]
    fn transition_probabilities_are_probabilities(c in canonical_strategy(), q in 0.05f64..0.95) {
        let m = c.expand().unwrap();
        let s = m.phase_type().unwrap().quantile(q).unwrap();
        let r = transition_probs(&m, s).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.p01) && (0.0..=1.0).contains(&r.p11));
        // the stationary long fraction is a mixture of the two conditionals
        let long = (m.stationary_objects().unwrap().phi * expm2(&m.d0(), s)).dot(&Vec2::ONES);
        let mixed = (1.0 - long) * r.p01 + long * r.p11;
        prop_assert!((mixed - long).abs() < 1e-10);
    }
}
