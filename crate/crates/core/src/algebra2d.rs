//! Exact 2x2 matrix kernels: determinant, cofactor and the mixed determinant.
//!
//! Everything except the norm is written over `num_traits::Num`, so the same
//! code runs on floats and on exact rationals.

use std::ops::{Add, Mul, Neg, Sub};

use num_traits::{Float, Num};
use serde::{Deserialize, Serialize};

/// A real 2x2 matrix, row major.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Mat2<T> {
    pub a11: T,
    pub a12: T,
    pub a21: T,
    pub a22: T,
}

impl<T: Copy + Num> Mat2<T> {
    pub const fn new(a11: T, a12: T, a21: T, a22: T) -> Self {
        Self { a11, a12, a21, a22 }
    }

    pub fn from_array(a: [T; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(self) -> [T; 4] {
        [self.a11, self.a12, self.a21, self.a22]
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero(), T::zero(), T::zero())
    }

    pub fn identity() -> Self {
        Self::new(T::one(), T::zero(), T::zero(), T::one())
    }

    pub fn diag(a: T, b: T) -> Self {
        Self::new(a, T::zero(), T::zero(), b)
    }

    /// Outer product `u ⊗ v`, entry `(i, j) = u_i v_j`.
    pub fn outer(u: [T; 2], v: [T; 2]) -> Self {
        Self::new(u[0] * v[0], u[0] * v[1], u[1] * v[0], u[1] * v[1])
    }

    pub fn transpose(self) -> Self {
        Self::new(self.a11, self.a21, self.a12, self.a22)
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.a11 * s, self.a12 * s, self.a21 * s, self.a22 * s)
    }

    pub fn det(&self) -> T {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    /// Cofactor matrix, laid out so that `d det(A) / dA_ij = cof(A)_ij`.
    pub fn cof(&self) -> Self {
        Self::new(self.a22, T::zero() - self.a21, T::zero() - self.a12, self.a11)
    }

    /// `tr(cof(self)^T other)`; bitwise symmetric in its two arguments.
    pub fn mixed_det(&self, other: &Self) -> T {
        (self.a11 * other.a22 + self.a22 * other.a11) - (self.a12 * other.a21 + self.a21 * other.a12)
    }

    /// Frobenius inner product `A : B`.
    pub fn dot(&self, other: &Self) -> T {
        self.a11 * other.a11 + self.a12 * other.a12 + self.a21 * other.a21 + self.a22 * other.a22
    }

    pub fn trace(&self) -> T {
        self.a11 + self.a22
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: [T; 2]) -> [T; 2] {
        [self.a11 * v[0] + self.a12 * v[1], self.a21 * v[0] + self.a22 * v[1]]
    }
}

impl<T: Float> Mat2<T> {
    pub fn norm_sq(&self) -> T {
        self.dot(self)
    }

    /// Frobenius norm, the matrix norm used throughout the crate.
    pub fn norm(&self) -> T {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.a11.abs().max(self.a12.abs()).max(self.a21.abs().max(self.a22.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.a11.is_finite() && self.a12.is_finite() && self.a21.is_finite() && self.a22.is_finite()
    }
}

impl<T: Copy + Num> Add for Mat2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.a11 + o.a11, self.a12 + o.a12, self.a21 + o.a21, self.a22 + o.a22)
    }
}

impl<T: Copy + Num> Sub for Mat2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.a11 - o.a11, self.a12 - o.a12, self.a21 - o.a21, self.a22 - o.a22)
    }
}

impl<T: Copy + Num> Mul<T> for Mat2<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

impl<T: Copy + Num + Neg<Output = T>> Neg for Mat2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.a11, -self.a12, -self.a21, -self.a22)
    }
}

pub fn det2<T: Copy + Num>(a: &Mat2<T>) -> T {
    a.det()
}

pub fn cof2<T: Copy + Num>(a: &Mat2<T>) -> Mat2<T> {
    a.cof()
}

pub fn mixed_det<T: Copy + Num>(a: &Mat2<T>, b: &Mat2<T>) -> T {
    a.mixed_det(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type M = Mat2<f64>;

    fn random_mat(rng: &mut ChaCha8Rng) -> M {
        M::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))
    }

    #[test]
    fn determinant_examples() {
        assert_eq!(det2(&M::identity()), 1.0);
        assert_eq!(det2(&M::diag(2.0, 3.0)), 6.0);
        let f = M::new(1.0, 0.5, -0.5, 1.0);
        assert_eq!(det2(&f), 1.25);
    }

    #[test]
    fn cofactor_examples() {
        assert_eq!(cof2(&M::identity()), M::identity());
        let rot = M::new(0.0, -1.0, 1.0, 0.0);
        assert_eq!(cof2(&rot), rot);
        let a = M::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(cof2(&a), M::new(4.0, -3.0, -2.0, 1.0));
    }

    #[test]
    fn det_is_half_self_pairing() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let a = random_mat(&mut rng);
            let lhs = det2(&a);
            let rhs = cof2(&a).dot(&a) / 2.0;
            assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
        }
    }

    #[test]
    fn mixed_det_examples() {
        assert_eq!(mixed_det(&M::identity(), &M::identity()), 2.0);
        let a = M::new(0.3, -1.2, 2.5, 0.7);
        assert_eq!(mixed_det(&a, &a), 2.0 * det2(&a));
    }

    #[test]
    fn cofactor_is_determinant_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = 1e-6;
        for _ in 0..200 {
            let a = random_mat(&mut rng);
            let c = cof2(&a).to_array();
            for idx in 0..4 {
                let mut plus = a.to_array();
                let mut minus = a.to_array();
                plus[idx] += h;
                minus[idx] -= h;
                let fd = (M::from_array(plus).det() - M::from_array(minus).det()) / (2.0 * h);
                assert!((fd - c[idx]).abs() <= 1e-7, "entry {idx}: {fd} vs {}", c[idx]);
            }
        }
    }

    #[test]
    fn polarization_exact_over_rationals() {
        let r = |n: i64, d: i64| Rational64::new(n, d);
        let a = Mat2::new(r(1, 2), r(-3, 4), r(5, 7), r(2, 1));
        let b = Mat2::new(r(-1, 3), r(2, 5), r(1, 1), r(-4, 9));
        let lam = r(2, 7);
        let one = r(1, 1);
        let lhs = (a.scale(lam) + b.scale(one - lam)).det();
        let rhs = lam * lam * a.det() + (one - lam) * (one - lam) * b.det() + lam * (one - lam) * a.mixed_det(&b);
        assert_eq!(lhs, rhs);
    }

    proptest! {
        #[test]
        fn mixed_det_is_bitwise_symmetric(
            a in proptest::array::uniform4(-1e3f64..1e3),
            b in proptest::array::uniform4(-1e3f64..1e3),
        ) {
            let (a, b) = (M::from_array(a), M::from_array(b));
            prop_assert_eq!(mixed_det(&a, &b).to_bits(), mixed_det(&b, &a).to_bits());
        }

        #[test]
        fn polarization_identity(
            a in proptest::array::uniform4(-2.0f64..2.0),
            b in proptest::array::uniform4(-2.0f64..2.0),
            lam in 0.0f64..1.0,
        ) {
            let (a, b) = (M::from_array(a), M::from_array(b));
            let lhs = det2(&(a * lam + b * (1.0 - lam)));
            let rhs = lam * lam * det2(&a) + (1.0 - lam).powi(2) * det2(&b)
                + lam * (1.0 - lam) * mixed_det(&a, &b);
            let scale = 1.0 + a.norm_sq() + b.norm_sq();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }
    }
}
