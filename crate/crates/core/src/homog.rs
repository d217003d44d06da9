//! Cell formula, radial extension, pointwise quasiconvexification and the
//! radial modulus `Δ`.
//!
//! `S_ξ(A)` is the minimal zero-trace energy over a grid rectangle `A`; the
//! homogenized density is `min_k S_ξ(kY)/k²` over a finite list of `k`.
//! Larger blocks are warm-started from periodic tilings of the smaller-block
//! minimizers, which are admissible competitors, so the computed densities are
//! monotone along divisibility chains.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra2d::Mat2;
use crate::error::{Error, Result};
use crate::fem_cell::{element_gradients, CellMesh, DisplacementField, GridRect};
use crate::integrand::{EnergyDensity, Point};
use crate::scalar::Real;
use crate::solver::{minimize_with_starts, CellSolution, SolveDiagnostics, SolverOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult<T> {
    pub xi: Mat2<T>,
    pub k: usize,
    pub n: usize,
    /// `S_ξ(kY) / k²`.
    pub density: T,
    pub diagnostics: SolveDiagnostics<T>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogRecord<T> {
    pub xi: Mat2<T>,
    pub cells: Vec<CellResult<T>>,
    /// Minimum of the per-k densities.
    pub hw: T,
    /// `(t, hW(tξ))` at strictly increasing `t < 1`.
    pub radial: Vec<(T, T)>,
    pub hw_hat: Option<T>,
    pub radial_gap: Option<T>,
    /// `(t, sampled Δ)` rows.
    pub delta: Vec<(T, T)>,
}

/// Which blocks `kY` to solve, and at how many squares per unit length.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellSchedule {
    pub k_list: Vec<usize>,
    pub n_list: Vec<usize>,
}

impl Default for CellSchedule {
    fn default() -> Self {
        Self { k_list: vec![1, 2, 4], n_list: vec![8, 8, 8] }
    }
}

impl CellSchedule {
    pub fn uniform(k_list: &[usize], n: usize) -> Self {
        Self { k_list: k_list.to_vec(), n_list: vec![n; k_list.len()] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_list.is_empty() || self.k_list.len() != self.n_list.len() {
            return Err(Error::InvalidArgument("k_list and n_list must be nonempty and of equal length".into()));
        }
        if self.k_list.contains(&0) || self.n_list.iter().any(|&n| n < 2) {
            return Err(Error::InvalidArgument("every k must be >= 1 and every N >= 2".into()));
        }
        Ok(())
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.k_list.iter().copied().zip(self.n_list.iter().copied())
    }
}

/// `S_ξ(rect)` at `n` squares per unit length: the minimized (unnormalized)
/// zero-trace energy. The returned solution's `energy` is the value.
pub fn s_xi<T: Real, D: EnergyDensity<T> + ?Sized>(
    xi: &Mat2<T>,
    rect: GridRect,
    density: &D,
    n: usize,
    opts: &SolverOptions,
) -> Result<CellSolution<T>> {
    s_xi_with_starts(xi, rect, density, n, opts, &[])
}

pub fn s_xi_with_starts<T: Real, D: EnergyDensity<T> + ?Sized>(
    xi: &Mat2<T>,
    rect: GridRect,
    density: &D,
    n: usize,
    opts: &SolverOptions,
    warm: &[DisplacementField<T>],
) -> Result<CellSolution<T>> {
    let mesh = CellMesh::for_rect(rect, n)?;
    minimize_with_starts(xi, density, &mesh, opts, warm)
}

/// A homogenization record together with the per-k meshes and minimizers.
#[derive(Clone, Debug)]
pub struct HomogSolve<T> {
    pub record: HomogRecord<T>,
    pub solutions: Vec<(CellMesh<T>, CellSolution<T>)>,
}

impl<T: Real> HomogSolve<T> {
    /// Minimizer fields scaled by `s`, one per k, for warm starts.
    pub fn scaled_fields(&self, s: T) -> Vec<Option<DisplacementField<T>>> {
        self.solutions.iter().map(|(_, sol)| Some(sol.field.scaled(s))).collect()
    }

    /// `(x_T, ξ + ∇φ_T)` over every element of every minimizer.
    pub fn element_samples(&self) -> Vec<(Point<T>, Mat2<T>)> {
        let xi = self.record.xi;
        let mut out = Vec::new();
        for (mesh, sol) in &self.solutions {
            if let Ok(grads) = element_gradients(mesh, &sol.field) {
                out.extend(mesh.elements().iter().zip(grads).map(|(el, (_, g))| (el.quad, xi + g)));
            }
        }
        out
    }
}

/// Homogenized density at `ξ` with per-k warm starts (`warm[i]` for `k_list[i]`).
pub fn hw_solve<T: Real, D: EnergyDensity<T> + ?Sized>(
    xi: &Mat2<T>,
    density: &D,
    schedule: &CellSchedule,
    opts: &SolverOptions,
    warm: &[Option<DisplacementField<T>>],
) -> Result<HomogSolve<T>> {
    schedule.validate()?;
    if !density.in_domain(xi) {
        return Err(Error::Infeasible(format!("{xi:?} is outside the effective domain")));
    }
    let mut solutions: Vec<(CellMesh<T>, CellSolution<T>)> = Vec::with_capacity(schedule.k_list.len());
    let mut cells = Vec::with_capacity(schedule.k_list.len());
    for (idx, (k, n)) in schedule.pairs().enumerate() {
        let mesh = CellMesh::build(k, n)?;
        let mut starts = Vec::new();
        for ((prev_k, prev_n), (prev_mesh, prev_sol)) in schedule.pairs().zip(&solutions) {
            if prev_n == n && prev_k < k && k % prev_k == 0 {
                starts.push(DisplacementField::tiled(&mesh, prev_mesh, &prev_sol.field)?);
            }
        }
        if let Some(Some(w)) = warm.get(idx) {
            if w.values.len() == mesh.n_nodes() {
                starts.push(w.clone());
            }
        }
        let sol = minimize_with_starts(xi, density, &mesh, opts, &starts)?;
        cells.push(CellResult { xi: *xi, k, n, density: sol.density, diagnostics: sol.diagnostics.clone() });
        solutions.push((mesh, sol));
    }
    let hw = cells.iter().map(|c| c.density).fold(T::infinity(), T::min);
    let record =
        HomogRecord { xi: *xi, cells, hw, radial: Vec::new(), hw_hat: None, radial_gap: None, delta: Vec::new() };
    Ok(HomogSolve { record, solutions })
}

/// `ℋL(ξ) ≈ min_k S_ξ(kY)/k²` over the schedule.
pub fn hw<T: Real, D: EnergyDensity<T> + ?Sized>(
    xi: &Mat2<T>,
    density: &D,
    schedule: &CellSchedule,
    opts: &SolverOptions,
) -> Result<HomogRecord<T>> {
    hw_solve(xi, density, schedule, opts, &[]).map(|s| s.record)
}

/// [`hw`] over many `ξ` in parallel; output order follows input order.
pub fn hw_many<T: Real, D: EnergyDensity<T> + ?Sized>(
    xis: &[Mat2<T>],
    density: &D,
    schedule: &CellSchedule,
    opts: &SolverOptions,
) -> Vec<Result<HomogRecord<T>>> {
    xis.par_iter().map(|xi| hw(xi, density, schedule, opts)).collect()
}

/// `t_j = 1 - 2^{-j}`, `j = 1..=levels`.
pub fn default_t_list<T: Real>(levels: usize) -> Vec<T> {
    (1..=levels).map(|j| T::one() - T::of(0.5f64.powi(j as i32))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialTrace<T> {
    pub xi: Mat2<T>,
    /// `(t, hW(tξ))`.
    pub trace: Vec<(T, T)>,
    /// Value at the last `t`.
    pub hw_hat: T,
    /// `|last - previous|`, zero for a one-point trace.
    pub gap: T,
    pub records: Vec<HomogRecord<T>>,
}

/// `hW(tξ)` along `t_list`; each level is warm-started from the previous one.
pub fn radial_extension<T: Real, D: EnergyDensity<T> + ?Sized>(
    xi: &Mat2<T>,
    density: &D,
    t_list: &[T],
    schedule: &CellSchedule,
    opts: &SolverOptions,
) -> Result<RadialTrace<T>> {
    if t_list.is_empty() {
        return Err(Error::InvalidArgument("empty t list".into()));
    }
    for w in t_list.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::InvalidArgument("t list must be strictly increasing".into()));
        }
    }
    if !(t_list[0] >= T::zero()) || !(t_list[t_list.len() - 1] < T::one()) {
        return Err(Error::InvalidArgument("t values must lie in [0, 1)".into()));
    }
    if let Some(t) = t_list.iter().find(|&&t| !density.in_domain(&xi.scale(t))) {
        return Err(Error::Domain(format!("t = {t} puts tξ outside the effective domain")));
    }
    let mut trace = Vec::with_capacity(t_list.len());
    let mut records = Vec::with_capacity(t_list.len());
    let mut prev: Option<(T, HomogSolve<T>)> = None;
    for &t in t_list {
        let warm = match &prev {
            Some((tp, solve)) if *tp > T::zero() => solve.scaled_fields(t / *tp),
            _ => Vec::new(),
        };
        let solve = hw_solve(&xi.scale(t), density, schedule, opts, &warm)?;
        trace.push((t, solve.record.hw));
        records.push(solve.record.clone());
        prev = Some((t, solve));
    }
    let hw_hat = trace[trace.len() - 1].1;
    let gap = if trace.len() > 1 { (hw_hat - trace[trace.len() - 2].1).abs() } else { T::zero() };
    Ok(RadialTrace { xi: *xi, trace, hw_hat, gap, records })
}

/// `L` with its periodic variable frozen at `x`.
struct Frozen<'a, T, D: ?Sized> {
    inner: &'a D,
    x: Point<T>,
}

impl<'a, T: Real, D: EnergyDensity<T> + ?Sized> EnergyDensity<T> for Frozen<'a, T, D> {
    fn eval(&self, _x: Point<T>, xi: &Mat2<T>) -> T {
        self.inner.eval(self.x, xi)
    }
    fn grad_xi(&self, _x: Point<T>, xi: &Mat2<T>) -> Option<Mat2<T>> {
        self.inner.grad_xi(self.x, xi)
    }
    fn in_domain(&self, xi: &Mat2<T>) -> bool {
        self.inner.in_domain(xi)
    }
    fn weight(&self, _x: Point<T>) -> T {
        self.inner.weight(self.x)
    }
    fn x_independent(&self) -> bool {
        true
    }
    fn name(&self) -> &str {
        self.inner.name()
    }
}

/// Upper bound for `Qf(x, ξ)`: single-cell zero-trace minimization of
/// `y ↦ f(x, ξ + ∇φ(y))` with `x` frozen.
pub fn quasiconvexify_point<T: Real, D: EnergyDensity<T> + ?Sized>(
    f: &D,
    x: Point<T>,
    xi: &Mat2<T>,
    n: usize,
    opts: &SolverOptions,
) -> Result<T> {
    if !f.eval(x, xi).is_finite() {
        return Err(Error::Infeasible(format!("f(x, ξ) is infinite at {xi:?}")));
    }
    let frozen = Frozen { inner: f, x };
    let mesh = CellMesh::build(1, n)?;
    Ok(minimize_with_starts(xi, &frozen, &mesh, opts, &[])?.density)
}

/// `(L(tξ) - L(ξ)) / (a + L(ξ))`.
pub fn delta_ratio<T: Real>(l_scaled: T, l: T, weight: T) -> T {
    (l_scaled - l) / (weight + l)
}

/// Sampled radial modulus: the maximum of [`delta_ratio`] over `samples`, a
/// lower bound of `Δ_L^a(t)`.
pub fn delta_estimate<T: Real, D: EnergyDensity<T> + ?Sized>(
    l: &D,
    t: T,
    samples: &[(Point<T>, Mat2<T>)],
) -> Result<T> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("delta estimate needs at least one sample".into()));
    }
    if !(t >= T::zero() && t <= T::one()) {
        return Err(Error::InvalidArgument(format!("t = {t} outside [0, 1]")));
    }
    let mut best = T::neg_infinity();
    for (x, xi) in samples {
        let base = l.eval(*x, xi);
        if !base.is_finite() {
            return Err(Error::Domain(format!("sample {xi:?} is outside the effective domain")));
        }
        best = best.max(delta_ratio(l.eval(*x, &xi.scale(t)), base, l.weight(*x)));
    }
    Ok(best)
}

/// Maximum ratio over tabulated `(L(tξ), L(ξ))` pairs with a constant weight.
pub fn delta_tabulated<T: Real>(rows: &[(T, T)], weight: T) -> Result<T> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("delta estimate needs at least one row".into()));
    }
    Ok(rows.iter().map(|&(lt, l)| delta_ratio(lt, l, weight)).fold(T::neg_infinity(), T::max))
}

/// Analytic bound `(1 - t^{2r}) / t^{2r}` of the barrier modulus.
pub fn barrier_delta_bound<T: Real>(t: T, r: T) -> T {
    let q = t.powf(r + r);
    (T::one() - q) / q
}
