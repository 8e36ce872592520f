//! Two-state Markovian arrival processes.
//!
//! A [`Map2`] is a pair of rate matrices `(D0, D1)`: `D0` holds phase changes
//! without a loss, `D1` the transitions that generate a loss. `D = D0 + D1` is
//! the generator of the phase process. Everything here is stationary: the
//! phase at a loss epoch is drawn from `phi`, the stationary law of the
//! embedded chain `P* = (-D0)^{-1} D1`.

mod phase_type;
mod simulate;

pub use phase_type::PhaseType2;
pub use simulate::{simulate_map2, simulate_window_counts};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{expm2, Mat2, Vec2};

const ROW_SUM_TOL: f64 = 1e-10;

/// A validated two-state MAP.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Map2 {
    d0: Mat2,
    d1: Mat2,
}

/// Which of the two canonical templates a parameter set expands through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalForm {
    /// `D0 = [[x, y], [0, u]]`, `D1 = [[-x-y, 0], [v, -u-v]]`.
    GammaPositive,
    /// `D0 = [[x, y], [0, u]]`, `D1 = [[0, -x-y], [-u-v, v]]`.
    GammaNonpositive,
}

impl CanonicalForm {
    pub const BOTH: [CanonicalForm; 2] = [CanonicalForm::GammaPositive, CanonicalForm::GammaNonpositive];

    pub fn as_str(self) -> &'static str {
        match self {
            CanonicalForm::GammaPositive => "gamma_positive",
            CanonicalForm::GammaNonpositive => "gamma_nonpositive",
        }
    }
}

/// Four-parameter canonical representation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanonicalMap2 {
    pub form: CanonicalForm,
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
}

/// Stationary quantities of a MAP₂.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryObjects {
    /// Stationary law of the phase process, `pi D = 0`.
    pub pi: Vec2,
    /// Phase law at loss epochs, `phi P* = phi`.
    pub phi: Vec2,
    /// Transition matrix of the phase observed at successive losses.
    pub p_star: Mat2,
    /// Non-unit eigenvalue of `p_star`.
    pub gamma: f64,
}

impl CanonicalMap2 {
    pub fn new(form: CanonicalForm, x: f64, y: f64, u: f64, v: f64) -> Result<Self> {
        let c = CanonicalMap2 { form, x, y, u, v };
        c.check()?;
        Ok(c)
    }

    fn check(&self) -> Result<()> {
        let CanonicalMap2 { x, y, u, v, .. } = *self;
        if ![x, y, u, v].iter().all(|p| p.is_finite()) {
            return Err(Error::ConstraintViolated("non-finite parameter".into()));
        }
        let mut broken = Vec::new();
        if x > 0.0 {
            broken.push("x <= 0");
        }
        if u > 0.0 {
            broken.push("u <= 0");
        }
        if y < 0.0 {
            broken.push("y >= 0");
        }
        if v < 0.0 {
            broken.push("v >= 0");
        }
        if x + y > 0.0 {
            broken.push("x + y <= 0");
        }
        if u + v > 0.0 {
            broken.push("u + v <= 0");
        }
        if broken.is_empty() {
            Ok(())
        } else {
            Err(Error::ConstraintViolated(broken.join(", ")))
        }
    }

    /// Rate matrices from the form's template, without validation.
    pub fn matrices(&self) -> (Mat2, Mat2) {
        let CanonicalMap2 { form, x, y, u, v } = *self;
        let d0 = Mat2::new(x, y, 0.0, u);
        let d1 = match form {
            CanonicalForm::GammaPositive => Mat2::new(-x - y, 0.0, v, -u - v),
            CanonicalForm::GammaNonpositive => Mat2::new(0.0, -x - y, -u - v, v),
        };
        (d0, d1)
    }

    /// Expand into a validated [`Map2`].
    pub fn expand(&self) -> Result<Map2> {
        self.check()?;
        let (d0, d1) = self.matrices();
        Map2::new(d0, d1)
    }

    pub fn params(&self) -> [f64; 4] {
        [self.x, self.y, self.u, self.v]
    }
}

impl Map2 {
    /// Validate a pair of rate matrices.
    pub fn new(d0: Mat2, d1: Mat2) -> Result<Self> {
        if !d0.is_finite() || !d1.is_finite() {
            return Err(Error::InvalidArgument("non-finite rate".into()));
        }
        for i in 0..2 {
            for j in 0..2 {
                if d1.get(i, j) < 0.0 {
                    return Err(Error::NegativeRate {
                        matrix: "D1",
                        row: i,
                        col: j,
                        value: d1.get(i, j),
                    });
                }
                if i != j && d0.get(i, j) < 0.0 {
                    return Err(Error::NegativeRate {
                        matrix: "D0",
                        row: i,
                        col: j,
                        value: d0.get(i, j),
                    });
                }
            }
        }
        let sums = (d0 + d1).row_sums();
        for (row, &sum) in sums.0.iter().enumerate() {
            let scale = d0.get(row, row).abs().max(1.0);
            if sum.abs() > ROW_SUM_TOL * scale {
                return Err(Error::NotAGenerator { row, sum });
            }
        }
        let (trace, det) = (d0.trace(), d0.det());
        if d0.get(0, 0) >= 0.0 || d0.get(1, 1) >= 0.0 || !(trace < 0.0 && det > 0.0) {
            return Err(Error::UnstableD0 { trace, det });
        }
        Ok(Map2 { d0, d1 })
    }

    /// Ergodic MAP₂ whose counting process is Poisson with the given rate:
    /// losses occur at rate `rate` in either phase and the phase flips at
    /// rate `rate` without a loss.
    pub fn poisson(rate: f64) -> Result<Self> {
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("Poisson rate {rate}")));
        }
        Map2::new(Mat2::new(-2.0 * rate, rate, rate, -2.0 * rate), Mat2::diag(rate, rate))
    }

    pub fn d0(&self) -> Mat2 {
        self.d0
    }

    pub fn d1(&self) -> Mat2 {
        self.d1
    }

    /// `D = D0 + D1`.
    pub fn generator(&self) -> Mat2 {
        self.d0 + self.d1
    }

    /// Solve for `pi`, `phi`, `P*` and `gamma`.
    pub fn stationary_objects(&self) -> Result<StationaryObjects> {
        let d = self.generator();
        let (a, b) = (d.get(0, 1), d.get(1, 0));
        if !(a + b > 0.0) {
            return Err(Error::SingularSystem("phase generator has no unique stationary law"));
        }
        let pi = Vec2([b / (a + b), a / (a + b)]);
        let flow = pi * self.d1;
        let rate = flow.sum();
        if !(rate > 0.0) {
            return Err(Error::SingularSystem("zero stationary loss rate"));
        }
        let phi = flow.scale(1.0 / rate);
        let inv = (-self.d0).inverse().ok_or(Error::SingularSystem("D0 is singular"))?;
        let p_star = inv * self.d1;
        if p_star.get(0, 1) == 0.0 || p_star.get(1, 0) == 0.0 {
            return Err(Error::Reducible);
        }
        let gamma = p_star.trace() - 1.0;
        if gamma.abs() > 1.0 - 1e-9 {
            log::warn!("MAP2 has |gamma| = {gamma} close to 1; embedded chain is nearly periodic or decoupled");
        }
        Ok(StationaryObjects { pi, phi, p_star, gamma })
    }

    /// Stationary inter-loss time law `{phi, D0}`.
    pub fn phase_type(&self) -> Result<PhaseType2> {
        let st = self.stationary_objects()?;
        Ok(PhaseType2::new_unchecked(st.phi, self.d0))
    }

    /// Long-run loss rate `lambda* = pi D1 e = 1 / m1`.
    pub fn loss_rate(&self) -> Result<f64> {
        let st = self.stationary_objects()?;
        Ok((st.pi * self.d1).sum())
    }

    /// Raw moment `E[T^n]` of the stationary inter-loss time.
    pub fn moment(&self, n: u32) -> Result<f64> {
        self.phase_type()?.moment(n)
    }

    /// Semi-Markov kernel `Q(t) = (I - e^{D0 t}) P*`.
    pub fn semi_markov_kernel(&self, t: f64) -> Result<Mat2> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        let st = self.stationary_objects()?;
        Ok((Mat2::IDENTITY - expm2(&self.d0, t)) * st.p_star)
    }

    /// Lag-1 correlation of consecutive inter-loss times,
    /// `gamma (m2/2 - m1^2) / (m2 - m1^2)`.
    pub fn lag1_correlation(&self) -> Result<f64> {
        let st = self.stationary_objects()?;
        let ph = PhaseType2::new_unchecked(st.phi, self.d0);
        let m1 = ph.moment(1)?;
        let m2 = ph.moment(2)?;
        let var = m2 - m1 * m1;
        if !(var > 1e-14 * m2) {
            return Err(Error::DegenerateVariance("inter-loss time variance is zero"));
        }
        Ok(st.gamma * (0.5 * m2 - m1 * m1) / var)
    }

    /// Log-likelihood of consecutive inter-loss durations,
    /// `log phi e^{D0 t1} D1 ... e^{D0 tn} D1 e`.
    ///
    /// The forward row vector is renormalized to unit mass after each step and
    /// the log normalizers are accumulated, so long traces do not underflow.
    pub fn log_likelihood(&self, times: &[f64]) -> Result<f64> {
        if times.is_empty() {
            return Err(Error::EmptyTrace);
        }
        let st = self.stationary_objects()?;
        let mut alpha = st.phi;
        let mut total = 0.0;
        for (index, &t) in times.iter().enumerate() {
            if !(t >= 0.0) {
                return Err(Error::NegativeDuration { index, value: t });
            }
            alpha = alpha * expm2(&self.d0, t) * self.d1;
            let mass = alpha.sum();
            if !(mass > 0.0) || !mass.is_finite() {
                return Ok(f64::NEG_INFINITY);
            }
            total += mass.ln();
            alpha = alpha.scale(1.0 / mass);
        }
        Ok(total)
    }
}
