//! Complex 2x2 matrices.
//!
//! Density matrices, costates and operators of a two-level system are all
//! 2x2; a fixed-size value type keeps the integrator allocation-free and lets
//! the compiler keep everything in registers. The inner product used
//! throughout is the Hilbert-Schmidt pairing `<<A|B>> = Tr{A^dag B}`.

use num_complex::Complex64 as C64;
use std::ops::{Add, Mul, Neg, Sub};

/// Complex 2x2 matrix with named elements (row-major).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2 {
    pub e00: C64,
    pub e01: C64,
    pub e10: C64,
    pub e11: C64,
}

pub const ZERO: Mat2 = Mat2 {
    e00: C64::new(0.0, 0.0),
    e01: C64::new(0.0, 0.0),
    e10: C64::new(0.0, 0.0),
    e11: C64::new(0.0, 0.0),
};

impl Mat2 {
    #[inline]
    pub fn new(e00: C64, e01: C64, e10: C64, e11: C64) -> Self {
        Mat2 { e00, e01, e10, e11 }
    }

    #[inline]
    pub fn zero() -> Self {
        ZERO
    }

    #[inline]
    pub fn diag(a: f64, b: f64) -> Self {
        Mat2::new(
            C64::new(a, 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 0.0),
            C64::new(b, 0.0),
        )
    }

    pub fn identity() -> Self {
        Mat2::diag(1.0, 1.0)
    }

    /// Conjugate transpose.
    #[inline]
    pub fn dagger(self) -> Self {
        Mat2::new(self.e00.conj(), self.e10.conj(), self.e01.conj(), self.e11.conj())
    }

    #[inline]
    pub fn trace(self) -> C64 {
        self.e00 + self.e11
    }

    /// Hilbert-Schmidt inner product `Tr{self^dag other}` (antilinear in `self`).
    #[inline]
    pub fn inner(self, other: Mat2) -> C64 {
        self.e00.conj() * other.e00
            + self.e01.conj() * other.e01
            + self.e10.conj() * other.e10
            + self.e11.conj() * other.e11
    }

    /// Matrix commutator `[self, other]`.
    #[inline]
    pub fn commutator(self, other: Mat2) -> Mat2 {
        self * other - other * self
    }

    #[inline]
    pub fn scale(self, c: C64) -> Mat2 {
        Mat2::new(self.e00 * c, self.e01 * c, self.e10 * c, self.e11 * c)
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.e00.is_finite() && self.e01.is_finite() && self.e10.is_finite() && self.e11.is_finite()
    }

    /// Largest element magnitude; cheap divergence/size diagnostic.
    pub fn max_abs(&self) -> f64 {
        self.e00
            .norm()
            .max(self.e01.norm())
            .max(self.e10.norm())
            .max(self.e11.norm())
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    #[inline]
    fn add(self, rhs: Mat2) -> Mat2 {
        Mat2::new(
            self.e00 + rhs.e00,
            self.e01 + rhs.e01,
            self.e10 + rhs.e10,
            self.e11 + rhs.e11,
        )
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    #[inline]
    fn sub(self, rhs: Mat2) -> Mat2 {
        Mat2::new(
            self.e00 - rhs.e00,
            self.e01 - rhs.e01,
            self.e10 - rhs.e10,
            self.e11 - rhs.e11,
        )
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    #[inline]
    fn neg(self) -> Mat2 {
        Mat2::new(-self.e00, -self.e01, -self.e10, -self.e11)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, rhs: Mat2) -> Mat2 {
        Mat2::new(
            self.e00 * rhs.e00 + self.e01 * rhs.e10,
            self.e00 * rhs.e01 + self.e01 * rhs.e11,
            self.e10 * rhs.e00 + self.e11 * rhs.e10,
            self.e10 * rhs.e01 + self.e11 * rhs.e11,
        )
    }
}

impl Mul<f64> for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, rhs: f64) -> Mat2 {
        Mat2::new(self.e00 * rhs, self.e01 * rhs, self.e10 * rhs, self.e11 * rhs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sample_a() -> Mat2 {
        Mat2::new(c(1.0, 2.0), c(-0.5, 0.3), c(0.7, -1.1), c(0.0, 0.9))
    }

    fn sample_b() -> Mat2 {
        Mat2::new(c(0.2, -0.4), c(1.5, 0.0), c(-0.3, 0.8), c(2.0, -1.0))
    }

    #[test]
    fn dagger_is_involutive() {
        let a = sample_a();
        assert_eq!(a.dagger().dagger(), a);
    }

    #[test]
    fn trace_of_commutator_vanishes() {
        let t = sample_a().commutator(sample_b()).trace();
        assert!(t.norm() < 1e-14, "Tr[[A,B]] = {t}");
    }

    #[test]
    fn inner_product_matches_trace_form() {
        let (a, b) = (sample_a(), sample_b());
        let direct = a.inner(b);
        let via_trace = (a.dagger() * b).trace();
        assert!((direct - via_trace).norm() < 1e-14);
    }

    #[test]
    fn inner_product_is_sesquilinear() {
        let (a, b) = (sample_a(), sample_b());
        let s = c(0.3, -0.7);
        let left = a.scale(s).inner(b);
        let right = s.conj() * a.inner(b);
        assert!((left - right).norm() < 1e-14);
    }

    #[test]
    fn matrix_product_associates_with_identity() {
        let a = sample_a();
        assert_eq!(a * Mat2::identity(), a);
        assert_eq!(Mat2::identity() * a, a);
    }
}
