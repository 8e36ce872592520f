//! Fixed-size 2×2 linear algebra.
//!
//! Everything in the model lives in two phases, so matrices are plain
//! `[[f64; 2]; 2]` values and vectors are row vectors unless a function says
//! otherwise. The matrix exponential is evaluated in closed form.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

/// A 2×2 real matrix, stored row-major.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat2(pub [[f64; 2]; 2]);

/// A length-2 real vector. Multiplying `Vec2 * Mat2` treats it as a row
/// vector, `Mat2 * Vec2` as a column vector.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vec2(pub [f64; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0, 0.0], [0.0, 0.0]]);
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn diag(a: f64, d: f64) -> Self {
        Mat2([[a, 0.0], [0.0, d]])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    pub fn scale(&self, s: f64) -> Self {
        let [[a, b], [c, d]] = self.0;
        Mat2([[a * s, b * s], [c * s, d * s]])
    }

    pub fn transpose(&self) -> Self {
        let [[a, b], [c, d]] = self.0;
        Mat2([[a, c], [b, d]])
    }

    /// `None` when the determinant is zero or not finite.
    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        let [[a, b], [c, d]] = self.0;
        Some(Mat2([[d / det, -b / det], [-c / det, a / det]]))
    }

    /// `M e`, the vector of row sums.
    pub fn row_sums(&self) -> Vec2 {
        Vec2([self.0[0][0] + self.0[0][1], self.0[1][0] + self.0[1][1]])
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let [[a, b], [c, d]] = self.0;
        (a.abs() + b.abs()).max(c.abs() + d.abs())
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                m = m.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn powi(&self, n: u32) -> Self {
        let mut result = Mat2::IDENTITY;
        let mut base = *self;
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                result = result * base;
            }
            base = base * base;
            k >>= 1;
        }
        result
    }
}

impl Vec2 {
    pub const ONES: Vec2 = Vec2([1.0, 1.0]);

    pub fn sum(&self) -> f64 {
        self.0[0] + self.0[1]
    }

    pub fn dot(&self, other: &Vec2) -> f64 {
        self.0[0] * other.0[0] + self.0[1] * other.0[1]
    }

    pub fn scale(&self, s: f64) -> Self {
        Vec2([self.0[0] * s, self.0[1] * s])
    }

    pub fn norm_inf(&self) -> f64 {
        self.0[0].abs().max(self.0[1].abs())
    }

    /// Outer product `self^T other`, i.e. column `self` times row `other`.
    pub fn outer(&self, other: &Vec2) -> Mat2 {
        Mat2([
            [self.0[0] * other.0[0], self.0[0] * other.0[1]],
            [self.0[1] * other.0[0], self.0[1] * other.0[1]],
        ])
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    fn add(self, o: Mat2) -> Mat2 {
        Mat2([
            [self.0[0][0] + o.0[0][0], self.0[0][1] + o.0[0][1]],
            [self.0[1][0] + o.0[1][0], self.0[1][1] + o.0[1][1]],
        ])
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    fn sub(self, o: Mat2) -> Mat2 {
        Mat2([
            [self.0[0][0] - o.0[0][0], self.0[0][1] - o.0[0][1]],
            [self.0[1][0] - o.0[1][0], self.0[1][1] - o.0[1][1]],
        ])
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    fn neg(self) -> Mat2 {
        self.scale(-1.0)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, o: Mat2) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        let [[e, f], [g, h]] = o.0;
        Mat2([[a * e + b * g, a * f + b * h], [c * e + d * g, c * f + d * h]])
    }
}

impl Mul<Mat2> for Vec2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, m: Mat2) -> Vec2 {
        let [x, y] = self.0;
        Vec2([x * m.0[0][0] + y * m.0[1][0], x * m.0[0][1] + y * m.0[1][1]])
    }
}

impl Mul<Vec2> for Mat2 {
    type Output = Vec2;
    #[inline]
    fn mul(self, v: Vec2) -> Vec2 {
        let [x, y] = v.0;
        Vec2([self.0[0][0] * x + self.0[0][1] * y, self.0[1][0] * x + self.0[1][1] * y])
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2([self.0[0] + o.0[0], self.0[1] + o.0[1]])
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2([self.0[0] - o.0[0], self.0[1] - o.0[1]])
    }
}

/// `(e^{hi} - e^{lo}) / (hi - lo)` for `hi > lo`, accurate when the two are close.
fn exp_divided_difference(hi: f64, lo: f64) -> f64 {
    let gap = hi - lo;
    if gap < 1.0 {
        lo.exp() * gap.exp_m1() / gap
    } else {
        (hi.exp() - lo.exp()) / gap
    }
}

/// Matrix exponential `e^{a t}`.
///
/// Uses the Newton form of the Lagrange–Sylvester interpolant on the two
/// eigenvalues, with exact diagonal handling for triangular input (the
/// canonical MAP₂ templates are upper triangular). Falls back to scaling and
/// squaring with an order-18 Taylor polynomial when the eigenvalues nearly
/// coincide, where the closed form loses accuracy.
pub fn expm2(a: &Mat2, t: f64) -> Mat2 {
    let m = a.scale(t);
    let norm = m.norm_inf();
    if norm == 0.0 {
        return Mat2::IDENTITY;
    }
    let [[p, q], [r, s]] = m.0;

    if r == 0.0 || q == 0.0 {
        // triangular: eigenvalues are the diagonal
        if p == s {
            let ep = p.exp();
            return Mat2([[ep, q * ep], [r * ep, ep]]);
        }
        let (hi, lo) = if p > s { (p, s) } else { (s, p) };
        let dd = exp_divided_difference(hi, lo);
        return Mat2([[p.exp(), q * dd], [r * dd, s.exp()]]);
    }

    let half_gap = 0.5 * (p - s);
    let mean = 0.5 * (p + s);
    let disc = half_gap * half_gap + q * r;

    // |l1 - l2| = 2 sqrt|disc|
    if 2.0 * disc.abs().sqrt() < 1e-8 * norm {
        return expm_scaled_taylor(&m);
    }

    if disc > 0.0 {
        let root = disc.sqrt();
        let hi = mean + root;
        let lo = mean - root;
        let e_hi = hi.exp();
        let e_lo = lo.exp();
        let gap = hi - lo;
        let dd = exp_divided_difference(hi, lo);
        // spectral projectors for the diagonal; when q*r >= 0 both terms are
        // nonnegative, so there is no cancellation
        let diag = |x: f64| (e_hi * (x - lo) + e_lo * (hi - x)) / gap;
        Mat2([[diag(p), q * dd], [r * dd, diag(s)]])
    } else {
        let omega = (-disc).sqrt();
        let em = mean.exp();
        let c = omega.cos();
        let sn = omega.sin() / omega;
        Mat2([
            [em * (c + sn * (p - mean)), em * sn * q],
            [em * sn * r, em * (c + sn * (s - mean))],
        ])
    }
}

/// Scaling and squaring with a truncated Taylor series of order 18.
pub(crate) fn expm_scaled_taylor(m: &Mat2) -> Mat2 {
    let norm = m.norm_inf();
    let mut squarings = 0u32;
    let mut scaled = *m;
    if norm >= 0.5 {
        squarings = (norm / 0.5).log2().floor() as u32 + 1;
        scaled = m.scale(0.5f64.powi(squarings as i32));
    }
    let mut term = Mat2::IDENTITY;
    let mut sum = Mat2::IDENTITY;
    for k in 1..=18 {
        term = (term * scaled).scale(1.0 / k as f64);
        sum = sum + term;
    }
    for _ in 0..squarings {
        sum = sum * sum;
    }
    sum
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(m: &Mat2, terms: usize) -> Mat2 {
        let mut term = Mat2::IDENTITY;
        let mut sum = Mat2::IDENTITY;
        for k in 1..terms {
            term = (term * *m).scale(1.0 / k as f64);
            sum = sum + term;
        }
        sum
    }

    #[test]
    fn zero_matrix_gives_identity() {
        assert_eq!(expm2(&Mat2::ZERO, 3.0), Mat2::IDENTITY);
        assert_eq!(expm2(&Mat2::new(1.0, 2.0, 3.0, 4.0), 0.0), Mat2::IDENTITY);
    }

    #[test]
    fn diagonal_matrix() {
        let e = expm2(&Mat2::diag(-1.0, -2.0), 1.0);
        assert!((e.get(0, 0) - (-1.0f64).exp()).abs() < 1e-16);
        assert!((e.get(1, 1) - (-2.0f64).exp()).abs() < 1e-16);
        assert_eq!(e.get(0, 1), 0.0);
        assert_eq!(e.get(1, 0), 0.0);
    }

    #[test]
    fn defective_jordan_block() {
        // [[l, 1], [0, l]] -> e^l [[1, 1], [0, 1]]
        let e = expm2(&Mat2::new(-0.5, 1.0, 0.0, -0.5), 1.0);
        let el = (-0.5f64).exp();
        assert!((e.get(0, 1) - el).abs() < 1e-15);
        // near-defective, full matrix: goes through the Taylor fallback
        let a = Mat2::new(-1.0, 1e-12, -1e-12, -1.0 + 1e-13);
        let reference = series(&a, 60);
        assert!(expm2(&a, 1.0).max_abs_diff(&reference) < 1e-14);
    }

    #[test]
    fn complex_eigenvalues_match_series() {
        let a = Mat2::new(-0.3, 1.2, -0.9, -0.1);
        let reference = series(&a, 80);
        assert!(expm2(&a, 1.0).max_abs_diff(&reference) < 1e-14);
    }

    #[test]
    fn inverse_roundtrip() {
        let a = Mat2::new(2.0, 1.0, 1.0, 3.0);
        let prod = a * a.inverse().unwrap();
        assert!(prod.max_abs_diff(&Mat2::IDENTITY) < 1e-15);
        assert!(Mat2::new(1.0, 2.0, 2.0, 4.0).inverse().is_none());
    }

    #[test]
    fn power_by_squaring() {
        let a = Mat2::new(0.5, 0.5, 0.25, 0.75);
        let mut direct = Mat2::IDENTITY;
        for _ in 0..7 {
            direct = direct * a;
        }
        assert!(a.powi(7).max_abs_diff(&direct) < 1e-15);
    }
}
