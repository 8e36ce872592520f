use crate::error::{Error, Result};
use crate::linalg::{expm2, Mat2, Vec2};

/// Two-phase phase-type law `{phi, D0}`: the absorption time of a chain
/// started from `phi` with sub-generator `D0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseType2 {
    phi: Vec2,
    d0: Mat2,
}

impl PhaseType2 {
    pub fn new(phi: Vec2, d0: Mat2) -> Result<Self> {
        if phi.0.iter().any(|p| !(0.0..=1.0).contains(p)) || (phi.sum() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument("phi is not a probability vector".into()));
        }
        let (tr, det) = (d0.trace(), d0.det());
        if !(tr < 0.0 && det > 0.0) {
            return Err(Error::UnstableD0 { trace: tr, det });
        }
        Ok(PhaseType2 { phi, d0 })
    }

    pub(crate) fn new_unchecked(phi: Vec2, d0: Mat2) -> Self {
        PhaseType2 { phi, d0 }
    }

    pub fn phi(&self) -> Vec2 {
        self.phi
    }

    pub fn d0(&self) -> Mat2 {
        self.d0
    }

    /// `P(T > t) = phi e^{D0 t} e`.
    pub fn survival(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        Ok((self.phi * expm2(&self.d0, t)).sum())
    }

    pub fn cdf(&self, t: f64) -> Result<f64> {
        Ok(1.0 - self.survival(t)?)
    }

    /// Density `phi e^{D0 t} (-D0) e`.
    pub fn pdf(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t.is_nan() {
            return Err(Error::NegativeTime(t));
        }
        let exit = (-self.d0).row_sums();
        Ok((self.phi * expm2(&self.d0, t)).dot(&exit))
    }

    /// Smallest `t` with `F(t) = q`, found by bisection to `|F(t) - q| < 1e-10`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::OutOfRangeQuantile(q));
        }
        let mean = self.moment(1)?;
        let mut hi = mean.max(f64::MIN_POSITIVE);
        while self.cdf(hi)? < q {
            hi *= 2.0;
            if !hi.is_finite() {
                return Err(Error::OutOfRangeQuantile(q));
            }
        }
        let mut lo = 0.0;
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            let f = self.cdf(mid)?;
            if (f - q).abs() < 1e-10 {
                return Ok(mid);
            }
            if f < q {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `E[T^n] = n! phi (-D0)^{-n} e`.
    pub fn moment(&self, n: u32) -> Result<f64> {
        if n == 0 {
            return Ok(1.0);
        }
        let inv = (-self.d0).inverse().ok_or(Error::SingularSystem("D0 is singular"))?;
        let mut v = self.phi;
        let mut factorial = 1.0;
        for k in 1..=n {
            v = v * inv;
            factorial *= k as f64;
        }
        Ok(factorial * v.sum())
    }

    /// `1 / E[T]`.
    pub fn rate(&self) -> Result<f64> {
        Ok(1.0 / self.moment(1)?)
    }

    /// Coefficient of variation `sqrt(m2 - m1^2) / m1`.
    pub fn cv(&self) -> Result<f64> {
        let m1 = self.moment(1)?;
        let m2 = self.moment(2)?;
        Ok((m2 - m1 * m1).max(0.0).sqrt() / m1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_reduction() {
        let lambda = 1.3;
        let ph = PhaseType2::new(Vec2([1.0, 0.0]), Mat2::diag(-lambda, -5.0)).unwrap();
        for t in [0.0, 0.1, 1.0, 3.7] {
            let expected = 1.0 - (-lambda * t).exp();
            assert!((ph.cdf(t).unwrap() - expected).abs() < 1e-15);
            assert!((ph.pdf(t).unwrap() - lambda * (-lambda * t).exp()).abs() < 1e-15);
        }
        for n in 1..5u32 {
            let fact: f64 = (1..=n).map(|k| k as f64).product();
            let expected = fact / lambda.powi(n as i32);
            assert!((ph.moment(n).unwrap() - expected).abs() < 1e-13 * expected);
        }
        let median = ph.quantile(0.5).unwrap();
        assert!((median - 2f64.ln() / lambda).abs() < 1e-9);
    }

    #[test]
    fn quantile_range() {
        let ph = PhaseType2::new(Vec2([1.0, 0.0]), Mat2::diag(-1.0, -1.0)).unwrap();
        assert!(matches!(ph.quantile(0.0), Err(Error::OutOfRangeQuantile(_))));
        assert!(matches!(ph.quantile(1.0), Err(Error::OutOfRangeQuantile(_))));
    }
}
