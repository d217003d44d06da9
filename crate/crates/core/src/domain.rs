//! Geometry of the effective domain: membership, rays to the boundary, sampling.

use rand::Rng;

use crate::algebra2d::Mat2;
use crate::error::{Error, Result};
use crate::integrand::in_g;
use crate::scalar::Real;

/// Membership oracle of a convex set in matrix space containing 0 in its interior.
pub trait DomainGeometry<T: Real>: Send + Sync {
    fn contains(&self, xi: &Mat2<T>) -> bool;
}

/// The effective domain of the two-dimensional example.
#[derive(Clone, Copy, Debug, Default)]
pub struct EffectiveDomain;

impl<T: Real> DomainGeometry<T> for EffectiveDomain {
    fn contains(&self, xi: &Mat2<T>) -> bool {
        in_g(xi)
    }
}

/// Where the ray `s ↦ s·d` leaves the domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RayExit<T> {
    Finite(T),
    Unbounded,
}

impl<T: Real> RayExit<T> {
    pub fn finite(self) -> Option<T> {
        match self {
            RayExit::Finite(s) => Some(s),
            RayExit::Unbounded => None,
        }
    }
}

const RAY_CEILING: f64 = 1e12;

/// `sup { s > 0 : s·d ∈ domain }`, by doubling then bisection to `1e-10`
/// (relative once the exit exceeds 1).
pub fn boundary_ray<T: Real, D: DomainGeometry<T> + ?Sized>(domain: &D, direction: &Mat2<T>) -> Result<RayExit<T>> {
    if !direction.is_finite() || direction.max_abs() == T::zero() {
        return Err(Error::InvalidArgument("boundary ray needs a nonzero finite direction".into()));
    }
    let probe = T::of(1e-8) / direction.max_abs();
    if !domain.contains(&direction.scale(probe)) {
        return Err(Error::Domain("ray leaves the domain immediately; 0 is not interior along it".into()));
    }
    let mut lo = probe;
    let mut hi = T::one().max(probe + probe);
    while domain.contains(&direction.scale(hi)) {
        lo = hi;
        hi = hi + hi;
        if hi > T::of(RAY_CEILING) {
            return Ok(RayExit::Unbounded);
        }
    }
    let tol = T::of(1e-10).max(T::epsilon() * T::of(8.0));
    while hi - lo > tol * hi.max(T::one()) {
        let mid = lo + (hi - lo) / T::of(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        if domain.contains(&direction.scale(mid)) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(RayExit::Finite(lo + (hi - lo) / T::of(2.0)))
}

/// Exit parameter of the ray through the example domain in closed form.
///
/// The ray stays inside while `1 > s(|d_ij| - d_kk)` for every diagonal `k` and
/// off-diagonal `ij`.
pub fn boundary_ray_closed_form<T: Real>(direction: &Mat2<T>) -> RayExit<T> {
    let mut best: Option<T> = None;
    for diag in [direction.a11, direction.a22] {
        for off in [direction.a12.abs(), direction.a21.abs()] {
            let rate = off - diag;
            if rate > T::zero() {
                let s = T::one() / rate;
                best = Some(best.map_or(s, |b: T| b.min(s)));
            }
        }
    }
    best.map_or(RayExit::Unbounded, RayExit::Finite)
}

/// Rejection sample of a domain point from the box
/// `ξ11, ξ22 ∈ [-1, 2)`, `ξ12, ξ21 ∈ [-1.5, 1.5)`.
pub fn sample_in_domain<T: Real, D, R>(domain: &D, rng: &mut R) -> Mat2<T>
where
    D: DomainGeometry<T> + ?Sized,
    R: Rng + ?Sized,
{
    loop {
        let xi = Mat2::new(
            T::of(rng.gen_range(-1.0..2.0)),
            T::of(rng.gen_range(-1.5..1.5)),
            T::of(rng.gen_range(-1.5..1.5)),
            T::of(rng.gen_range(-1.0..2.0)),
        );
        if domain.contains(&xi) {
            return xi;
        }
    }
}

/// Uniform-ish sample on the Frobenius ball of radius `rho`.
pub fn sample_ball<T: Real, R: Rng + ?Sized>(rho: T, rng: &mut R) -> Mat2<T> {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n2: f64 = v.iter().map(|c| c * c).sum();
        if n2 <= 1.0 {
            return Mat2::from_array(v.map(T::of)).scale(rho);
        }
    }
}

/// Random direction on the unit Frobenius sphere.
pub fn sample_direction<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Mat2<T> {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n2: f64 = v.iter().map(|c| c * c).sum();
        if n2 > 1e-6 && n2 <= 1.0 {
            let n = n2.sqrt();
            return Mat2::from_array(v.map(|c| T::of(c / n)));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    type M = Mat2<f64>;

    #[test]
    fn ray_examples() {
        let s = boundary_ray(&EffectiveDomain, &M::new(0.0, 1.0, 0.0, 0.0)).unwrap().finite().unwrap();
        assert!((s - 1.0).abs() < 1e-10);
        assert_eq!(boundary_ray(&EffectiveDomain, &M::identity()).unwrap(), RayExit::Unbounded);
        let s = boundary_ray(&EffectiveDomain, &M::new(-1.0, 0.0, 0.0, 0.0)).unwrap().finite().unwrap();
        assert!((s - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ray_rejects_zero_direction() {
        assert!(boundary_ray(&EffectiveDomain, &M::zero()).is_err());
    }

    #[test]
    fn bisection_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..500 {
            let d: M = sample_direction(&mut rng);
            let num = boundary_ray(&EffectiveDomain, &d).unwrap();
            match (num, boundary_ray_closed_form(&d)) {
                (RayExit::Finite(a), RayExit::Finite(b)) => {
                    assert!((a - b).abs() <= 1e-10 * b.max(1.0) * 2.0, "{a} vs {b}")
                }
                (RayExit::Unbounded, RayExit::Unbounded) => {}
                (RayExit::Unbounded, RayExit::Finite(b)) => assert!(b > 1e11),
                other => panic!("mismatch {other:?}"),
            }
        }
    }

    #[test]
    fn samplers_stay_inside() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let xi: M = sample_in_domain(&EffectiveDomain, &mut rng);
            assert!(in_g(&xi));
            let b: M = sample_ball(0.25, &mut rng);
            assert!(b.norm() <= 0.25 + 1e-15);
        }
    }
}
