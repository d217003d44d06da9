//! Energy densities of the two-dimensional hyperelastic example.
//!
//! The effective domain is
//! `G = { ξ : min(1 + ξ11, 1 + ξ22) > max(|ξ12|, |ξ21|) }`, the barrier is
//! `g(ξ) = h(det(I + ξ))` with `h(s) = 1/s`, the growth density is
//! `G(ξ) = |ξ|^p + g(ξ)` and the stored energy is `W(x, ξ) = Φ(x, ξ) + g(ξ)`.
//! All of them are `+inf` off the domain.

use num_traits::{Num, Signed};
use serde::{Deserialize, Serialize};

use crate::algebra2d::Mat2;
use crate::error::{Error, Result};
use crate::scalar::{ExtReal, Real};

/// A point of the periodic variable `x ∈ R²`.
pub type Point<T> = [T; 2];

/// An extended-real integrand `L(x, ξ)` that is 1-periodic in `x`.
pub trait EnergyDensity<T: Real>: Send + Sync {
    /// Value in `[0, +inf]`.
    fn eval(&self, x: Point<T>, xi: &Mat2<T>) -> T;

    /// `∂L/∂ξ`; `None` off the effective domain.
    fn grad_xi(&self, x: Point<T>, xi: &Mat2<T>) -> Option<Mat2<T>>;

    /// Effective domain membership (x-independent for every density here).
    fn in_domain(&self, xi: &Mat2<T>) -> bool;

    /// Weight `a(x)` of the radial modulus.
    fn weight(&self, _x: Point<T>) -> T {
        T::one()
    }

    fn x_independent(&self) -> bool {
        false
    }

    fn name(&self) -> &str;
}

impl<T: Real, D: EnergyDensity<T> + ?Sized> EnergyDensity<T> for &D {
    fn eval(&self, x: Point<T>, xi: &Mat2<T>) -> T {
        (**self).eval(x, xi)
    }
    fn grad_xi(&self, x: Point<T>, xi: &Mat2<T>) -> Option<Mat2<T>> {
        (**self).grad_xi(x, xi)
    }
    fn in_domain(&self, xi: &Mat2<T>) -> bool {
        (**self).in_domain(xi)
    }
    fn weight(&self, x: Point<T>) -> T {
        (**self).weight(x)
    }
    fn x_independent(&self) -> bool {
        (**self).x_independent()
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

impl<T: Real> EnergyDensity<T> for Box<dyn EnergyDensity<T>> {
    fn eval(&self, x: Point<T>, xi: &Mat2<T>) -> T {
        (**self).eval(x, xi)
    }
    fn grad_xi(&self, x: Point<T>, xi: &Mat2<T>) -> Option<Mat2<T>> {
        (**self).grad_xi(x, xi)
    }
    fn in_domain(&self, xi: &Mat2<T>) -> bool {
        (**self).in_domain(xi)
    }
    fn weight(&self, x: Point<T>) -> T {
        (**self).weight(x)
    }
    fn x_independent(&self) -> bool {
        (**self).x_independent()
    }
    fn name(&self) -> &str {
        (**self).name()
    }
}

/// Exponents and growth constants of the example.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrandParams<T> {
    /// Growth exponent, `p > 2`.
    pub p: T,
    /// Scaling exponent of `h`, `r <= 1`.
    pub r: T,
}

impl<T: Real> Default for IntegrandParams<T> {
    fn default() -> Self {
        Self { p: T::of(4.0), r: T::one() }
    }
}

impl<T: Real> IntegrandParams<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > T::of(2.0)) || !self.p.is_finite() {
            return Err(Error::InvalidArgument(format!("growth exponent p = {} must exceed 2", self.p)));
        }
        if !(self.r <= T::one()) || !self.r.is_finite() {
            return Err(Error::InvalidArgument(format!("scaling exponent r = {} must be <= 1", self.r)));
        }
        Ok(())
    }
}

/// `(alpha, beta, c)` such that `αG ≤ W ≤ β(1 + G)` and `c|ξ|^p ≤ W`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrowthConstants<T> {
    pub alpha: T,
    pub beta: T,
    pub c: T,
}

// ---------------------------------------------------------------------------
// closed forms

/// `h(s) = 1/s` on `s > 0`.
pub fn h_eval<T: Real>(s: T) -> Result<T> {
    if s > T::zero() {
        Ok(T::one() / s)
    } else {
        Err(Error::Domain(format!("h is defined on s > 0, got {s}")))
    }
}

/// `h'(s) = -1/s²`.
pub fn h_prime<T: Real>(s: T) -> Result<T> {
    if s > T::zero() {
        Ok(-T::one() / (s * s))
    } else {
        Err(Error::Domain(format!("h' is defined on s > 0, got {s}")))
    }
}

/// Membership in the effective domain, `min(1+ξ11, 1+ξ22) > max(|ξ12|, |ξ21|)`.
pub fn in_g<T: Copy + Num + Signed + PartialOrd>(xi: &Mat2<T>) -> bool {
    let one = T::one();
    let lo = if one + xi.a11 < one + xi.a22 { one + xi.a11 } else { one + xi.a22 };
    let hi = if xi.a12.abs() > xi.a21.abs() { xi.a12.abs() } else { xi.a21.abs() };
    lo > hi
}

/// Barrier `g(ξ) = 1/det(I + ξ)` on the domain, exact over any ordered field.
pub fn g_exact<T: Copy + Num + Signed + PartialOrd>(xi: &Mat2<T>) -> ExtReal<T> {
    if !in_g(xi) {
        return ExtReal::Infinite;
    }
    let det = (Mat2::identity() + *xi).det();
    // det(I + ξ) > 0 on the domain
    debug_assert!(det > T::zero());
    ExtReal::Finite(T::one() / det)
}

pub fn g_eval<T: Real>(xi: &Mat2<T>) -> T {
    if !in_g(xi) {
        return T::infinity();
    }
    let det = (Mat2::identity() + *xi).det();
    if det > T::zero() {
        T::one() / det
    } else {
        // unreachable in exact arithmetic
        T::infinity()
    }
}

fn g_grad<T: Real>(xi: &Mat2<T>) -> Option<Mat2<T>> {
    if !in_g(xi) {
        return None;
    }
    let f = Mat2::identity() + *xi;
    let d = f.det();
    if !(d > T::zero()) {
        return None;
    }
    Some(f.cof().scale(-T::one() / (d * d)))
}

/// `|ξ|^p` with the Frobenius norm.
pub fn power_norm<T: Real>(xi: &Mat2<T>, p: T) -> T {
    xi.norm_sq().powf(p / T::of(2.0))
}

fn power_norm_grad<T: Real>(xi: &Mat2<T>, p: T) -> Mat2<T> {
    let n2 = xi.norm_sq();
    if n2 == T::zero() {
        return Mat2::zero();
    }
    xi.scale(p * n2.powf(p / T::of(2.0) - T::one()))
}

/// `G(ξ) = |ξ|^p + g(ξ)` on the domain, `+inf` otherwise.
pub fn growth_eval<T: Real>(xi: &Mat2<T>, p: T) -> T {
    if !in_g(xi) {
        return T::infinity();
    }
    power_norm(xi, p) + g_eval(xi)
}

/// Reduce a coordinate onto `[0, 1)`.
#[inline]
pub fn reduce_periodic<T: Real>(v: T) -> T {
    let r = v - v.floor();
    if r >= T::one() {
        T::zero()
    } else {
        r
    }
}

/// Choice of the quasiconvex p-growth part `Φ(x, ξ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhiModel<T> {
    /// `(1 + A sin(2πx₁) sin(2πx₂)) |ξ|^p`, with `0 <= A < 1`.
    SineModulated { amplitude: T },
    /// `|ξ|^p`.
    Homogeneous,
}

impl<T: Real> Default for PhiModel<T> {
    fn default() -> Self {
        PhiModel::SineModulated { amplitude: T::of(0.5) }
    }
}

impl<T: Real> PhiModel<T> {
    pub fn coefficient(&self, x: Point<T>) -> T {
        match *self {
            PhiModel::SineModulated { amplitude } => {
                let two_pi = T::TAU();
                let (u, v) = (reduce_periodic(x[0]), reduce_periodic(x[1]));
                T::one() + amplitude * (two_pi * u).sin() * (two_pi * v).sin()
            }
            PhiModel::Homogeneous => T::one(),
        }
    }

    /// Bounds `c_lo, c_hi` of the coefficient over `x`.
    pub fn coefficient_bounds(&self) -> (T, T) {
        match *self {
            PhiModel::SineModulated { amplitude } => (T::one() - amplitude, T::one() + amplitude),
            PhiModel::Homogeneous => (T::one(), T::one()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let PhiModel::SineModulated { amplitude } = *self {
            if !(amplitude >= T::zero() && amplitude < T::one()) {
                return Err(Error::InvalidArgument(format!("phi amplitude {amplitude} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

/// `Φ(x, ξ)`.
pub fn phi_eval<T: Real>(model: &PhiModel<T>, p: T, x: Point<T>, xi: &Mat2<T>) -> T {
    model.coefficient(x) * power_norm(xi, p)
}

/// `W(x, ξ) = Φ(x, ξ) + g(ξ)` on the domain, `+inf` otherwise.
pub fn energy_eval<T: Real>(model: &PhiModel<T>, p: T, x: Point<T>, xi: &Mat2<T>) -> T {
    if !in_g(xi) {
        return T::infinity();
    }
    phi_eval(model, p, x, xi) + g_eval(xi)
}

/// `∂W/∂ξ = c(x) p |ξ|^{p-2} ξ + h'(det(I+ξ)) cof(I+ξ)`.
pub fn energy_grad<T: Real>(model: &PhiModel<T>, p: T, x: Point<T>, xi: &Mat2<T>) -> Result<Mat2<T>> {
    let barrier = g_grad(xi).ok_or_else(|| Error::Domain(format!("{xi:?} is outside the effective domain")))?;
    Ok(power_norm_grad(xi, p).scale(model.coefficient(x)) + barrier)
}

/// Growth constants for `W = Φ + g` relative to `G = |ξ|^p + g`.
pub fn growth_constants<T: Real>(model: &PhiModel<T>) -> GrowthConstants<T> {
    let (lo, hi) = model.coefficient_bounds();
    GrowthConstants { alpha: lo.min(T::one()), beta: hi.max(T::one()), c: lo }
}

// ---------------------------------------------------------------------------
// densities

/// The x-independent growth density `G`.
#[derive(Clone, Copy, Debug)]
pub struct Growth<T> {
    pub p: T,
}

impl<T: Real> EnergyDensity<T> for Growth<T> {
    fn eval(&self, _x: Point<T>, xi: &Mat2<T>) -> T {
        growth_eval(xi, self.p)
    }
    fn grad_xi(&self, _x: Point<T>, xi: &Mat2<T>) -> Option<Mat2<T>> {
        g_grad(xi).map(|b| b + power_norm_grad(xi, self.p))
    }
    fn in_domain(&self, xi: &Mat2<T>) -> bool {
        in_g(xi)
    }
    fn x_independent(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "G"
    }
}

/// The determinant barrier `g` alone.
#[derive(Clone, Copy, Debug, Default)]
pub struct Barrier;

impl<T: Real> EnergyDensity<T> for Barrier {
    fn eval(&self, _x: Point<T>, xi: &Mat2<T>) -> T {
        g_eval(xi)
    }
    fn grad_xi(&self, _x: Point<T>, xi: &Mat2<T>) -> Option<Mat2<T>> {
        g_grad(xi)
    }
    fn in_domain(&self, xi: &Mat2<T>) -> bool {
        in_g(xi)
    }
    fn x_independent(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "g"
    }
}

/// The p-growth part `Φ` alone, finite everywhere.
#[derive(Clone, Copy, Debug)]
pub struct Phi<T> {
    pub p: T,
    pub model: PhiModel<T>,
}

impl<T: Real> EnergyDensity<T> for Phi<T> {
    fn eval(&self, x: Point<T>, xi: &Mat2<T>) -> T {
        phi_eval(&self.model, self.p, x, xi)
    }
    fn grad_xi(&self, x: Point<T>, xi: &Mat2<T>) -> Option<Mat2<T>> {
        Some(power_norm_grad(xi, self.p).scale(self.model.coefficient(x)))
    }
    fn in_domain(&self, _xi: &Mat2<T>) -> bool {
        true
    }
    fn x_independent(&self) -> bool {
        matches!(self.model, PhiModel::Homogeneous)
    }
    fn name(&self) -> &str {
        "phi"
    }
}

/// The stored energy `W = Φ + g`.
#[derive(Clone, Copy, Debug)]
pub struct StoredEnergy<T> {
    pub p: T,
    pub model: PhiModel<T>,
    /// Constant ru-usc weight; 2 for the sum of two weight-1 moduli.
    pub weight: T,
}

impl<T: Real> StoredEnergy<T> {
    pub fn new(params: IntegrandParams<T>, model: PhiModel<T>) -> Self {
        Self { p: params.p, model, weight: T::of(2.0) }
    }

    pub fn phi(&self) -> Phi<T> {
        Phi { p: self.p, model: self.model }
    }

    pub fn constants(&self) -> GrowthConstants<T> {
        growth_constants(&self.model)
    }
}

impl<T: Real> Default for StoredEnergy<T> {
    fn default() -> Self {
        Self::new(IntegrandParams::default(), PhiModel::default())
    }
}

impl<T: Real> EnergyDensity<T> for StoredEnergy<T> {
    fn eval(&self, x: Point<T>, xi: &Mat2<T>) -> T {
        energy_eval(&self.model, self.p, x, xi)
    }
    fn grad_xi(&self, x: Point<T>, xi: &Mat2<T>) -> Option<Mat2<T>> {
        energy_grad(&self.model, self.p, x, xi).ok()
    }
    fn in_domain(&self, xi: &Mat2<T>) -> bool {
        in_g(xi)
    }
    fn weight(&self, _x: Point<T>) -> T {
        self.weight
    }
    fn x_independent(&self) -> bool {
        matches!(self.model, PhiModel::Homogeneous)
    }
    fn name(&self) -> &str {
        "W"
    }
}

/// Double-well demonstration density `(|ξ|² - 1)²`, not quasiconvex.
#[derive(Clone, Copy, Debug, Default)]
pub struct DoubleWell;

impl<T: Real> EnergyDensity<T> for DoubleWell {
    fn eval(&self, _x: Point<T>, xi: &Mat2<T>) -> T {
        let s = xi.norm_sq() - T::one();
        s * s
    }
    fn grad_xi(&self, _x: Point<T>, xi: &Mat2<T>) -> Option<Mat2<T>> {
        Some(xi.scale(T::of(4.0) * (xi.norm_sq() - T::one())))
    }
    fn in_domain(&self, _xi: &Mat2<T>) -> bool {
        true
    }
    fn x_independent(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        "double_well"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type M = Mat2<f64>;

    fn witness() -> M {
        M::new(1.0, 0.5, -0.5, 1.0)
    }

    fn sample_domain(rng: &mut ChaCha8Rng) -> M {
        loop {
            let xi = M::new(
                rng.gen_range(-1.0..2.0),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-1.0..2.0),
            );
            if in_g(&xi) {
                return xi;
            }
        }
    }

    #[test]
    fn h_values() {
        assert_eq!(h_eval(1.0).unwrap(), 1.0);
        assert_eq!(h_eval(1.25).unwrap(), 0.8);
        assert_eq!(h_eval(0.5).unwrap(), 2.0 * h_eval(1.0).unwrap());
        assert!(h_eval(0.0).is_err());
        assert!(h_eval(-1.0).is_err());
        assert!(h_prime(0.0_f64).is_err());
    }

    #[test]
    fn h_scaling_bound_with_r_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let lam: f64 = rng.gen_range(0.01..1.0);
            let s: f64 = rng.gen_range(0.01..10.0);
            assert!(h_eval(lam * s).unwrap() <= h_eval(s).unwrap() / lam * (1.0 + 1e-14));
        }
    }

    #[test]
    fn domain_membership() {
        assert!(in_g(&M::zero()));
        assert!(!in_g(&M::new(-1.0, -1.0, 1.0, -1.0)));
        assert!(in_g(&M::new(0.0, 0.5, -0.5, 0.0)));
        assert!(!in_g(&M::new(0.0, 1.0, 0.0, 0.0)));
    }

    #[test]
    fn barrier_values() {
        assert_eq!(g_eval(&M::zero()), 1.0);
        assert_eq!(g_eval(&(witness() - M::identity())), 0.8);
        assert_eq!(g_eval(&M::new(-1.0, -1.0, 1.0, -1.0)), f64::INFINITY);
    }

    #[test]
    fn noconvex_witness_is_exact_over_rationals() {
        let r = |n: i64, d: i64| Rational64::new(n, d);
        let id = Mat2::<Rational64>::identity();
        let f = Mat2::new(r(1, 1), r(1, 2), r(-1, 2), r(1, 1));
        let g_hat = |m: Mat2<Rational64>| g_exact(&(m - id));
        let sym = (f + f.transpose()).scale(r(1, 2));
        assert_eq!(g_hat(sym), ExtReal::Finite(r(1, 1)));
        let avg = (g_hat(f).finite().unwrap() + g_hat(f.transpose()).finite().unwrap()) * r(1, 2);
        assert_eq!(avg, r(4, 5));
    }

    #[test]
    fn growth_values() {
        assert_eq!(growth_eval(&M::zero(), 4.0), 1.0);
        let xi = M::diag(0.5, 0.5);
        assert!((growth_eval(&xi, 4.0) - 25.0 / 36.0).abs() < 1e-15);
        assert_eq!(growth_eval(&M::new(0.0, 2.0, 0.0, 0.0), 4.0), f64::INFINITY);
    }

    #[test]
    fn phi_values() {
        let model = PhiModel::default();
        assert_eq!(phi_eval(&model, 4.0, [0.3, 0.7], &M::zero()), 0.0);
        let unit = M::new(0.5, 0.5, 0.5, 0.5);
        assert!((phi_eval(&model, 4.0, [0.25, 0.25], &unit) - 1.5).abs() < 1e-15);
        let xi = M::new(0.3, -0.2, 0.1, 0.4);
        assert_eq!(phi_eval(&model, 4.0, [0.0, 0.0], &xi), power_norm(&xi, 4.0));
    }

    #[test]
    fn stored_energy_values() {
        let w = StoredEnergy::<f64>::default();
        assert_eq!(w.eval([0.37, 0.81], &M::zero()), 1.0);
        assert!((w.eval([0.0, 0.0], &M::diag(0.5, 0.5)) - 25.0 / 36.0).abs() < 1e-15);
        assert_eq!(w.eval([0.1, 0.2], &M::new(-1.0, -1.0, 1.0, -1.0)), f64::INFINITY);
    }

    #[test]
    fn stored_energy_gradient() {
        let w = StoredEnergy::<f64>::default();
        assert_eq!(w.grad_xi([0.2, 0.9], &M::zero()).unwrap(), -M::identity());
        let d = w.grad_xi([0.3, 0.3], &M::diag(0.2, 0.2)).unwrap();
        assert_eq!(d.a12, 0.0);
        assert_eq!(d.a21, 0.0);
        assert!(energy_grad(&w.model, 4.0, [0.0, 0.0], &M::new(0.0, 3.0, 0.0, 0.0)).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let h = 1e-6;
        for _ in 0..200 {
            let xi = sample_domain(&mut rng).scale(0.8);
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            let an = w.grad_xi(x, &xi).unwrap().to_array();
            let scale = an.iter().fold(1e-3_f64, |m, v| m.max(v.abs()));
            for idx in 0..4 {
                let mut p = xi.to_array();
                let mut m = xi.to_array();
                p[idx] += h;
                m[idx] -= h;
                let fd = (w.eval(x, &M::from_array(p)) - w.eval(x, &M::from_array(m))) / (2.0 * h);
                assert!((fd - an[idx]).abs() <= 1e-6 * scale, "{fd} vs {}", an[idx]);
            }
        }
    }

    #[test]
    fn growth_constants_for_default_model() {
        let k = growth_constants(&PhiModel::<f64>::default());
        assert_eq!((k.alpha, k.beta, k.c), (0.5, 1.5, 0.5));

        let w = StoredEnergy::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let xi = sample_domain(&mut rng);
            let x = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let wv = w.eval(x, &xi);
            let gv = growth_eval(&xi, 4.0);
            assert!(k.alpha * gv <= wv && wv <= k.beta * (1.0 + gv));
            assert!(k.c * power_norm(&xi, 4.0) <= wv);
        }
    }

    #[test]
    fn periodic_in_x_on_dyadic_lattice() {
        let w = StoredEnergy::<f64>::default();
        let xi = M::new(0.3, 0.1, -0.2, 0.05);
        for i in 0..16 {
            for j in 0..16 {
                let x = [i as f64 / 16.0, j as f64 / 16.0];
                for z in [[1.0, 0.0], [-2.0, 3.0], [5.0, -7.0]] {
                    let shifted = [x[0] + z[0], x[1] + z[1]];
                    assert_eq!(w.eval(x, &xi).to_bits(), w.eval(shifted, &xi).to_bits());
                }
            }
        }
    }

    #[test]
    fn infinity_exactly_off_domain() {
        let w = StoredEnergy::<f64>::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            let xi = M::new(
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            );
            assert_eq!(w.eval([0.1, 0.4], &xi).is_infinite(), !w.in_domain(&xi));
        }
    }

    #[test]
    fn runs_in_single_precision() {
        let w = StoredEnergy::<f32>::default();
        assert_eq!(w.eval([0.0, 0.0], &Mat2::zero()), 1.0_f32);
        assert!(w.grad_xi([0.0, 0.0], &Mat2::diag(0.1, 0.1)).is_some());
    }
}
