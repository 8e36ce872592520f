//! Published model inputs used for reproduction runs and tests.

use crate::linalg::Mat2;
use crate::map2::{CanonicalForm, CanonicalMap2, Map2};

/// Annual horizon in days.
pub const TAU_YEAR: f64 = 365.0;

/// Poisson rate equal to the observed average number of annual losses.
pub const POISSON_ANNUAL_RATE: f64 = 16.6154;

/// Published dPlN severity parameters `(alpha, beta, mu, sigma^2)`; the
/// log-scale standard deviation is reported as 1.29.
pub const DPLN: (f64, f64, f64, f64) = (1.24, 1.8, 10.4, 1.29 * 1.29);

/// Canonical parameters of the published fitted MAP₂ (days).
pub const ESTIMATED_CANONICAL: CanonicalMap2 = CanonicalMap2 {
    form: CanonicalForm::GammaPositive,
    x: -0.0063,
    y: 0.0011,
    u: -0.1036,
    v: 0.0016,
};

/// The published fitted MAP₂ as printed.
pub fn estimated_map2() -> Map2 {
    Map2::new(
        Mat2::new(-0.0063, 0.0011, 0.0, -0.1036),
        Mat2::new(0.0052, 0.0, 0.0016, 0.1020),
    )
    .expect("published model is valid")
}

/// Four illustration models: two with positive and two with nonpositive
/// `gamma`. Built from their canonical parameters because the printed
/// matrices are rounded.
pub const ILLUSTRATION: [CanonicalMap2; 4] = [
    CanonicalMap2 {
        form: CanonicalForm::GammaPositive,
        x: -1.1272,
        y: 0.0055,
        u: -42.4417,
        v: 0.2173,
    },
    CanonicalMap2 {
        form: CanonicalForm::GammaPositive,
        x: -1.4373,
        y: 0.0498,
        u: -14.2706,
        v: 0.5283,
    },
    CanonicalMap2 {
        form: CanonicalForm::GammaNonpositive,
        x: -0.6830,
        y: 0.0026,
        u: -34.6904,
        v: 0.1318,
    },
    CanonicalMap2 {
        form: CanonicalForm::GammaNonpositive,
        x: -0.9751,
        y: 0.5933,
        u: -46.6547,
        v: 35.8806,
    },
];

pub fn illustration_models() -> [Map2; 4] {
    ILLUSTRATION.map(|c| c.expand().expect("illustration model is valid"))
}
