use map2risk::estimation::{delta, fit_mle, model_summary, moments_match, EmpiricalSummary, FitOptions, FormChoice};
use map2risk::exec::stream_rng;
use map2risk::map2::{simulate_map2, CanonicalForm, CanonicalMap2};
use map2risk::{reference, stats, Execution};
use rand_distr::{Distribution, Exp};

fn exponential_trace(n: usize, rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, 0);
    let e = Exp::new(rate).unwrap();
    (0..n).map(|_| e.sample(&mut rng)).collect()
}

#[test]
fn exponential_trace_summary() {
    let t = exponential_trace(1_000_000, 1.0, 1);
    let s = EmpiricalSummary::from_times(&t).unwrap();
    let n = t.len() as f64;
    // Var(X^k) = (2k)! - (k!)^2 for a unit exponential
    for (est, exact, var) in [(s.m1, 1.0, 1.0), (s.m2, 2.0, 20.0), (s.m3, 6.0, 684.0)] {
        assert!((est - exact).abs() < 3.0 * (var / n).sqrt(), "{est} vs {exact}");
    }
    assert!(s.rho.abs() < 3.0 / n.sqrt());
}

#[test]
fn moments_match_is_self_consistent() {
    let models = [
        reference::ESTIMATED_CANONICAL,
        CanonicalMap2 {
            form: CanonicalForm::GammaPositive,
            x: -2.0,
            y: 0.3,
            u: -0.1,
            v: 0.01,
        },
        CanonicalMap2 {
            form: CanonicalForm::GammaNonpositive,
            x: -1.0,
            y: 0.4,
            u: -5.0,
            v: 1.0,
        },
    ];
    for c in models {
        let m = c.expand().unwrap();
        let [m1, m2, m3, rho] = model_summary(&m).unwrap();
        let s = EmpiricalSummary {
            n: 1000,
            m1,
            m2,
            m3,
            rho,
        };
        assert!(delta(&c, &s) < 1e-20);
        let fit = moments_match(&s, c.form, 4, 3).unwrap();
        assert!(fit.delta < 1e-8, "{c:?}: delta {}", fit.delta);
        let got = model_summary(&fit.model.expand().unwrap()).unwrap();
        for (a, b) in got.iter().zip([m1, m2, m3, rho]) {
            assert!((a - b).abs() <= 1e-3 * b.abs().max(1e-3), "{got:?}");
        }
    }
}

#[test]
fn exponential_summary_matches_to_a_renewal_model() {
    let s = EmpiricalSummary {
        n: 1000,
        m1: 2.0,
        m2: 8.0,
        m3: 48.0,
        rho: 0.0,
    };
    for form in CanonicalForm::BOTH {
        let fit = moments_match(&s, form, 4, 9).unwrap();
        let [m1, _, _, rho] = model_summary(&fit.model.expand().unwrap()).unwrap();
        assert!(rho.abs() < 1e-3, "{form:?}: rho {rho}");
        assert!((m1 - 2.0).abs() < 1e-3);
    }
}

#[test]
fn exponential_trace_fits_a_poisson_like_model() {
    let t = exponential_trace(20_000, 0.5, 2);
    let fit = fit_mle(
        &t,
        &FitOptions {
            restarts: 4,
            ..FitOptions::default()
        },
    )
    .unwrap();
    let [m1, _, _, rho] = model_summary(&fit.map2().unwrap()).unwrap();
    let se = 2.0 / (t.len() as f64).sqrt();
    assert!(rho.abs() < 0.01, "rho {rho}");
    assert!((m1 - 2.0).abs() < 3.0 * se, "m1 {m1}");
}

#[test]
fn fit_properties_on_a_short_trace() {
    let m = reference::estimated_map2();
    let t = simulate_map2(&m, 225, 99).unwrap();
    let fit = fit_mle(&t, &FitOptions::default()).unwrap();
    // maximum likelihood dominates the generating model on its own data
    assert!(fit.loglik >= m.log_likelihood(&t).unwrap() - 1e-6);
    // sign constraints hold exactly
    for f in &fit.per_form {
        let c = f.model;
        assert!(c.x < 0.0 && c.u < 0.0 && c.y >= 0.0 && c.v >= 0.0);
        assert!(c.x + c.y <= 0.0 && c.u + c.v <= 0.0);
        assert!(f.loglik >= f.warm_loglik - 1e-9);
    }
    let best = fit.per_form.iter().map(|f| f.loglik).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(fit.loglik, best);
    assert_eq!(fit.per_form.len(), 2);
    let refit = fit.map2().unwrap().log_likelihood(&t).unwrap();
    assert!((refit - fit.loglik).abs() < 1e-8 * fit.loglik.abs());
}

#[test]
fn single_form_fits_respect_the_choice() {
    let t = simulate_map2(&reference::estimated_map2(), 225, 5).unwrap();
    for (choice, form) in [
        (FormChoice::GammaPositive, CanonicalForm::GammaPositive),
        (FormChoice::GammaNonpositive, CanonicalForm::GammaNonpositive),
    ] {
        let fit = fit_mle(
            &t,
            &FitOptions {
                form: choice,
                restarts: 2,
                ..FitOptions::default()
            },
        )
        .unwrap();
        assert_eq!(fit.per_form.len(), 1);
        assert_eq!(fit.model.form, form);
    }
}

#[test]
fn fits_are_deterministic_across_executions() {
    let t = simulate_map2(&reference::estimated_map2(), 225, 6).unwrap();
    let opts = FitOptions {
        restarts: 3,
        ..FitOptions::default()
    };
    let a = fit_mle(
        &t,
        &FitOptions {
            exec: Execution::Parallel,
            ..opts
        },
    )
    .unwrap();
    let b = fit_mle(
        &t,
        &FitOptions {
            exec: Execution::Sequential,
            ..opts
        },
    )
    .unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.loglik, b.loglik);
}

#[test]
fn fits_from_different_seeds_agree_on_implied_moments() {
    let m = reference::estimated_map2();
    let t = simulate_map2(&m, 100_000, 12).unwrap();
    let opts = FitOptions {
        restarts: 2,
        form: FormChoice::GammaPositive,
        ..FitOptions::default()
    };
    let a = fit_mle(&t, &FitOptions { seed: 1, ..opts }).unwrap();
    let b = fit_mle(&t, &FitOptions { seed: 2, ..opts }).unwrap();
    let sa = model_summary(&a.map2().unwrap()).unwrap();
    let sb = model_summary(&b.map2().unwrap()).unwrap();
    for (x, y) in sa.iter().zip(&sb) {
        assert!((x - y).abs() <= 1e-3 * y.abs(), "{sa:?} vs {sb:?}");
    }
    // and the fitted mean is the trace mean to within sampling noise of the fit
    assert!((sa[0] - stats::mean(&t)).abs() < 0.01 * sa[0]);
}
