//! Barrier-aware limited-memory quasi-Newton minimization of the cell energy.
//!
//! Trial points with infinite energy are rejected inside the line search by
//! halving the step, so every accepted iterate stays in the open feasible set.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::algebra2d::Mat2;
use crate::error::{Error, Result};
use crate::fem_cell::{CellMesh, CellProblem, DisplacementField};
use crate::integrand::EnergyDensity;
use crate::scalar::Real;

/// A smooth objective that may return `+inf` outside an open feasible set.
pub trait Objective<T> {
    fn dim(&self) -> usize;
    fn value(&self, x: &[T]) -> T;
    /// Writes the gradient into `grad` and returns the value.
    fn value_grad(&self, x: &[T], grad: &mut [T]) -> T;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Tolerance on the max-norm of the gradient.
    pub grad_tol: f64,
    /// Sufficient-decrease coefficient, in `(0, 1/2]`.
    pub armijo: f64,
    /// Step contraction factor, in `(0, 1)`.
    pub backtrack: f64,
    pub history: usize,
    /// Number of runs: the unperturbed start plus `multistart - 1` perturbed ones.
    pub multistart: usize,
    pub perturbation: f64,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            grad_tol: 1e-8,
            armijo: 1e-4,
            backtrack: 0.5,
            history: 10,
            multistart: 3,
            perturbation: 1e-2,
            seed: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidArgument(format!("solver option {what}")));
        if self.max_iters == 0 {
            return bad("max_iters must be positive");
        }
        if !(self.grad_tol > 0.0) {
            return bad("grad_tol must be positive");
        }
        if !(self.armijo > 0.0 && self.armijo <= 0.5) {
            return bad("armijo must lie in (0, 1/2]");
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad("backtrack must lie in (0, 1)");
        }
        if self.history == 0 {
            return bad("history must be positive");
        }
        if self.multistart == 0 {
            return bad("multistart must be >= 1");
        }
        if !(self.perturbation >= 0.0) {
            return bad("perturbation must be >= 0");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics<T> {
    pub final_energy: T,
    pub iterations: usize,
    pub grad_norm: T,
    /// Trial steps rejected because the energy was infinite.
    pub barrier_rejections: usize,
    /// Number of runs performed (multistart and warm starts).
    pub restarts: usize,
    /// Index of the winning run.
    pub best_run: usize,
    pub converged: bool,
}

/// Outcome of one local descent.
#[derive(Clone, Debug)]
pub struct LocalMin<T> {
    pub x: Vec<T>,
    pub value: T,
    pub iterations: usize,
    pub grad_norm: T,
    pub barrier_rejections: usize,
    pub converged: bool,
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

fn max_norm<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, v| m.max(v.abs()))
}

/// Largest admissible change of a single unknown in one step.
const MAX_STEP: f64 = 0.5;
const MAX_LINE_SEARCH: usize = 80;

/// L-BFGS with Armijo backtracking from a feasible `x0`.
pub fn lbfgs<T: Real, O: Objective<T> + ?Sized>(obj: &O, x0: Vec<T>, opts: &SolverOptions) -> Result<LocalMin<T>> {
    let n = obj.dim();
    if x0.len() != n {
        return Err(Error::InvalidArgument(format!("start has {} entries, objective has {n}", x0.len())));
    }
    let mut x = x0;
    let mut g = vec![T::zero(); n];
    let mut f = obj.value_grad(&x, &mut g);
    if !f.is_finite() {
        return Err(Error::Infeasible("objective is infinite at the start point".into()));
    }
    let tol = T::of(opts.grad_tol);
    let c1 = T::of(opts.armijo);
    let shrink = T::of(opts.backtrack);
    let half = T::of(0.5);
    let max_step = T::of(MAX_STEP);

    let mut memory: VecDeque<(Vec<T>, Vec<T>, T)> = VecDeque::with_capacity(opts.history);
    let mut rejections = 0usize;
    let mut iterations = 0usize;
    let mut gnorm = max_norm(&g);
    let mut d = vec![T::zero(); n];
    let mut x_new = vec![T::zero(); n];
    let mut g_new = vec![T::zero(); n];
    let mut alpha_hist = vec![T::zero(); opts.history];

    while gnorm > tol && iterations < opts.max_iters {
        // two-loop recursion
        d.iter_mut().zip(&g).for_each(|(di, &gi)| *di = -gi);
        for (k, (s, y, rho)) in memory.iter().enumerate().rev() {
            let a = *rho * dot(s, &d);
            alpha_hist[k] = a;
            d.iter_mut().zip(y).for_each(|(di, &yi)| *di = *di - a * yi);
        }
        if let Some((s, y, _)) = memory.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di = *di * gamma);
        }
        for (k, (s, y, rho)) in memory.iter().enumerate() {
            let b = *rho * dot(y, &d);
            let a = alpha_hist[k];
            d.iter_mut().zip(s).for_each(|(di, &si)| *di = *di + (a - b) * si);
        }
        let mut slope = dot(&g, &d);
        if !(slope < T::zero()) {
            memory.clear();
            d.iter_mut().zip(&g).for_each(|(di, &gi)| *di = -gi);
            slope = dot(&g, &d);
        }

        let dmax = max_norm(&d);
        let mut alpha = if memory.is_empty() { T::one().min(T::of(0.1) / dmax) } else { T::one() };
        if alpha * dmax > max_step {
            alpha = max_step / dmax;
        }

        let mut accepted = false;
        for _ in 0..MAX_LINE_SEARCH {
            x_new.iter_mut().zip(x.iter().zip(&d)).for_each(|(xn, (&xi, &di))| *xn = xi + alpha * di);
            let f_new = obj.value(&x_new);
            if !f_new.is_finite() {
                rejections += 1;
                alpha = alpha * half;
                continue;
            }
            if f_new <= f + c1 * alpha * slope && f_new < f {
                accepted = true;
                break;
            }
            alpha = alpha * shrink;
        }

        if !accepted {
            if memory.is_empty() {
                // no descent possible at working precision
                break;
            }
            memory.clear();
            continue;
        }

        let f_new = obj.value_grad(&x_new, &mut g_new);
        let s: Vec<T> = x_new.iter().zip(&x).map(|(&a, &b)| a - b).collect();
        let y: Vec<T> = g_new.iter().zip(&g).map(|(&a, &b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > T::epsilon() * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if memory.len() == opts.history {
                memory.pop_front();
            }
            memory.push_back((s, y, T::one() / sy));
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
        gnorm = max_norm(&g);
        iterations += 1;
    }

    Ok(LocalMin { x, value: f, iterations, grad_norm: gnorm, barrier_rejections: rejections, converged: gnorm <= tol })
}

/// Best of several local descents of one objective.
pub struct MultiStartResult<T> {
    pub best: LocalMin<T>,
    pub diagnostics: SolveDiagnostics<T>,
}

/// Runs `lbfgs` from every start; the lowest value wins, ties go to the lowest index.
pub fn multistart<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    starts: Vec<Vec<T>>,
    opts: &SolverOptions,
) -> Result<MultiStartResult<T>> {
    let mut best: Option<(usize, LocalMin<T>)> = None;
    let mut rejections = 0;
    let runs = starts.len();
    for (idx, x0) in starts.into_iter().enumerate() {
        let run = lbfgs(obj, x0, opts)?;
        rejections += run.barrier_rejections;
        let better = match &best {
            None => true,
            Some((_, b)) => run.value < b.value,
        };
        if better {
            best = Some((idx, run));
        }
    }
    let (best_run, best) = best.ok_or_else(|| Error::InvalidArgument("no start points".into()))?;
    let diagnostics = SolveDiagnostics {
        final_energy: best.value,
        iterations: best.iterations,
        grad_norm: best.grad_norm,
        barrier_rejections: rejections,
        restarts: runs,
        best_run,
        converged: best.converged,
    };
    Ok(MultiStartResult { best, diagnostics })
}

/// Seeded perturbation of `base`, shrunk until the objective is finite.
pub fn perturbed_start<T: Real, O: Objective<T> + ?Sized>(
    obj: &O,
    base: &[T],
    scale: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<T>> {
    let noise: Vec<f64> = (0..base.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut amp = scale;
    for _ in 0..40 {
        let x: Vec<T> = base.iter().zip(&noise).map(|(&b, &r)| b + T::of(amp * r)).collect();
        if obj.value(&x).is_finite() {
            return Some(x);
        }
        amp *= 0.5;
    }
    None
}

/// A solved cell problem.
#[derive(Clone, Debug)]
pub struct CellSolution<T> {
    pub field: DisplacementField<T>,
    /// `Σ_T |T| L(x_T, ξ + ∇φ_T)`.
    pub energy: T,
    /// Energy divided by the area of the rectangle.
    pub density: T,
    pub diagnostics: SolveDiagnostics<T>,
    /// Winning normalized unknowns, kept for warm starts.
    pub normalized: Vec<T>,
}

/// Minimizes the zero-trace cell energy at `ξ` over `mesh`.
pub fn minimize<T: Real, D: EnergyDensity<T> + ?Sized>(
    xi: &Mat2<T>,
    density: &D,
    mesh: &CellMesh<T>,
    opts: &SolverOptions,
) -> Result<CellSolution<T>> {
    minimize_with_starts(xi, density, mesh, opts, &[])
}

/// As [`minimize`], with extra warm-start fields tried after the multistart runs.
/// Infeasible warm starts are skipped.
pub fn minimize_with_starts<T: Real, D: EnergyDensity<T> + ?Sized>(
    xi: &Mat2<T>,
    density: &D,
    mesh: &CellMesh<T>,
    opts: &SolverOptions,
    warm: &[DisplacementField<T>],
) -> Result<CellSolution<T>> {
    opts.validate()?;
    if !density.in_domain(xi) {
        return Err(Error::Infeasible(format!("{xi:?} is outside the effective domain")));
    }
    let problem = CellProblem::new(mesh, *xi, density);
    let zero = vec![T::zero(); problem.dim()];
    if !problem.value(&zero).is_finite() {
        return Err(Error::Infeasible(format!("zero field has infinite energy at {xi:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut starts = vec![zero.clone()];
    for _ in 1..opts.multistart {
        if let Some(x) = perturbed_start(&problem, &zero, opts.perturbation, &mut rng) {
            starts.push(x);
        }
    }
    for w in warm {
        let v = w.normalized(mesh);
        if v.len() == problem.dim() && problem.value(&v).is_finite() {
            starts.push(v);
        }
    }
    let MultiStartResult { best, diagnostics } = multistart(&problem, starts, opts)?;
    let density_value = problem.density_of(best.value);
    let field = DisplacementField::from_normalized(mesh, &best.x)?;
    Ok(CellSolution {
        field,
        energy: density_value * mesh.total_area(),
        density: density_value,
        diagnostics,
        normalized: best.x,
    })
}
