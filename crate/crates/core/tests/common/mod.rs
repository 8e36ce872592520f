#![allow(dead_code)]

use map2risk::counting::sample_canonical;
use map2risk::exec::stream_rng;
use map2risk::linalg::Mat2;
use map2risk::map2::{CanonicalForm, CanonicalMap2, Map2};
use proptest::prelude::*;

/// `n` ergodic models from the sweep sampling law.
pub fn random_models(n: usize, seed: u64) -> Vec<Map2> {
    let mut rng = stream_rng(seed, 0);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if let Ok(m) = sample_canonical(&mut rng).expand() {
            if m.stationary_objects().is_ok() {
                out.push(m);
            }
        }
    }
    out
}

/// Canonical parameters with rates in `[0.05, 20]` and both fractions
/// kept away from the reducible boundary.
pub fn canonical_strategy() -> impl Strategy<Value = CanonicalMap2> {
    (any::<bool>(), -3.0f64..3.0, -3.0f64..3.0, 0.02f64..0.98, 0.02f64..0.98).prop_map(|(pos, a, b, fy, fv)| {
        let (x, u) = (-a.exp(), -b.exp());
        CanonicalMap2 {
            form: if pos {
                CanonicalForm::GammaPositive
            } else {
                CanonicalForm::GammaNonpositive
            },
            x,
            y: -x * fy,
            u,
            v: -u * fv,
        }
    })
}

/// `e^{a t}` by scaling and squaring around a long Taylor series.
pub fn series_expm(a: &Mat2, t: f64, terms: usize) -> Mat2 {
    let norm = a.norm_inf() * t.abs();
    let mut k = 0;
    while norm / 2f64.powi(k) > 0.5 {
        k += 1;
    }
    let m = a.scale(t / 2f64.powi(k));
    let mut sum = Mat2::IDENTITY;
    let mut term = Mat2::IDENTITY;
    for j in 1..terms {
        term = (term * m).scale(1.0 / j as f64);
        sum = sum + term;
    }
    for _ in 0..k {
        sum = sum * sum;
    }
    sum
}

/// Estimate and batch-means standard error of a statistic computed on
/// consecutive blocks of a (possibly autocorrelated) series.
pub fn batch_means<F: Fn(&[f64]) -> Option<f64>>(x: &[f64], batches: usize, f: F) -> (f64, f64) {
    let size = x.len() / batches;
    let vals: Vec<f64> = x.chunks(size).take(batches).filter_map(&f).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * b.abs().max(1e-300)
}
