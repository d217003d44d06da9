//! Verification suites: structural checks of the example, local Dirichlet
//! densities and convergence diagnostics, and the radial-modulus suite.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algebra2d::Mat2;
use crate::domain::{
    boundary_ray, sample_ball, sample_direction, sample_in_domain, DomainGeometry, EffectiveDomain, RayExit,
};
use crate::error::{Error, Result};
use crate::fem_cell::{CellMesh, GridRect};
use crate::homog::{
    barrier_delta_bound, default_t_list, delta_estimate, delta_tabulated, hw_solve, radial_extension, CellSchedule,
    HomogSolve,
};
use crate::integrand::{
    g_eval, growth_constants, growth_eval, in_g, phi_eval, power_norm, Barrier, EnergyDensity, IntegrandParams, Phi,
    PhiModel, Point, StoredEnergy,
};
use crate::solver::{minimize_with_starts, SolverOptions};

type M = Mat2<f64>;

/// Pass/fail outcome of one check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
    /// Headline number (sampled extreme, constant, gap), if any.
    pub value: Option<f64>,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String, value: Option<f64>) -> Self {
        Self { name: name.to_string(), passed, detail, value }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub title: String,
    pub checks: Vec<Check>,
}

impl Report {
    pub fn new(title: &str) -> Self {
        Self { title: title.to_string(), checks: Vec::new() }
    }

    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Aligned human-readable table.
    pub fn to_text(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        let mut out = format!("== {} ==\n", self.title);
        for c in &self.checks {
            let value = c.value.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<4}  {:<width$}  {:>13}  {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                value,
                c.detail
            );
        }
        out
    }
}

/// Sample sizes, seeds and tolerances shared by the suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub seed: u64,
    pub params: IntegrandParams<f64>,
    pub phi: PhiModel<f64>,
    /// Pairs for convexity and the barrier midpoint bound.
    pub pair_samples: usize,
    /// Boundary-ray points for the scaling check.
    pub boundary_samples: usize,
    /// Points for growth, Lipschitz and modulus sampling.
    pub point_samples: usize,
    /// Radius of the ball for the finite-supremum check.
    pub ball_radius: f64,
    pub delta_t: Vec<f64>,
    /// Shared ξ grid for the homogenized modulus.
    pub delta_grid: Vec<[f64; 4]>,
    pub delta_tol: f64,
    pub schedule: CellSchedule,
    /// Reciprocals `1/ε` of the local Dirichlet sweep.
    pub eps_inv: Vec<usize>,
    pub n: usize,
    pub radial_levels: usize,
    /// Relative tolerance of the convergence diagnostic.
    pub gap_tol: f64,
    pub solver: SolverOptions,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_917,
            params: IntegrandParams::default(),
            phi: PhiModel::default(),
            pair_samples: 10_000,
            boundary_samples: 1_000,
            point_samples: 1_000,
            ball_radius: 0.25,
            delta_t: vec![0.5, 0.9, 0.99],
            delta_grid: vec![
                [0.0, 0.0, 0.0, 0.0],
                [0.3, 0.0, 0.0, -0.2],
                [0.2, 0.4, -0.3, 0.1],
                [-0.4, 0.1, 0.2, 0.3],
                [0.5, 0.0, 0.0, 0.5],
            ],
            delta_tol: 1e-4,
            schedule: CellSchedule::default(),
            eps_inv: vec![1, 2, 4],
            n: 8,
            radial_levels: 6,
            gap_tol: 0.1,
            solver: SolverOptions::default(),
        }
    }
}

impl HarnessConfig {
    pub fn stored_energy(&self) -> StoredEnergy<f64> {
        StoredEnergy::new(self.params, self.phi)
    }

    fn rng(&self, salt: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
    }
}

// ---------------------------------------------------------------------------
// structure suite

/// One structural check; each draws from its own seeded stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructureCheck {
    ZeroInterior,
    Convexity,
    RadialScaling,
    RotationExcluded,
    NonconvexWitness,
    BarrierMidpoint,
    Periodicity,
    GrowthSandwich,
    Coercivity,
    FiniteOnBall,
    BumpConstant,
    PhiLipschitz,
}

impl StructureCheck {
    pub const ALL: [StructureCheck; 12] = [
        StructureCheck::ZeroInterior,
        StructureCheck::Convexity,
        StructureCheck::RadialScaling,
        StructureCheck::RotationExcluded,
        StructureCheck::NonconvexWitness,
        StructureCheck::BarrierMidpoint,
        StructureCheck::Periodicity,
        StructureCheck::GrowthSandwich,
        StructureCheck::Coercivity,
        StructureCheck::FiniteOnBall,
        StructureCheck::BumpConstant,
        StructureCheck::PhiLipschitz,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            StructureCheck::ZeroInterior => "zero_interior",
            StructureCheck::Convexity => "domain_convexity",
            StructureCheck::RadialScaling => "radial_scaling",
            StructureCheck::RotationExcluded => "rotation_excluded",
            StructureCheck::NonconvexWitness => "nonconvex_witness",
            StructureCheck::BarrierMidpoint => "barrier_midpoint",
            StructureCheck::Periodicity => "periodicity",
            StructureCheck::GrowthSandwich => "growth_sandwich",
            StructureCheck::Coercivity => "coercivity",
            StructureCheck::FiniteOnBall => "finite_on_ball",
            StructureCheck::BumpConstant => "bump_constant",
            StructureCheck::PhiLipschitz => "phi_lipschitz",
        }
    }

    pub fn run(&self, cfg: &HarnessConfig, domain: &dyn DomainGeometry<f64>) -> Check {
        let mut rng = cfg.rng(*self as u64 + 1);
        let p = cfg.params.p;
        let name = self.name();
        match self {
            StructureCheck::ZeroInterior => {
                let mut misses = 0;
                for _ in 0..cfg.point_samples {
                    if !domain.contains(&sample_ball(cfg.ball_radius, &mut rng)) {
                        misses += 1;
                    }
                }
                let ok = domain.contains(&M::zero()) && misses == 0;
                Check::new(
                    name,
                    ok,
                    format!("0 in domain, {misses} misses on the ball of radius {}", cfg.ball_radius),
                    None,
                )
            }
            StructureCheck::Convexity => {
                let mut violations = 0;
                for _ in 0..cfg.pair_samples {
                    let a = sample_in_domain(domain, &mut rng);
                    let b = sample_in_domain(domain, &mut rng);
                    let lam: f64 = rng.gen_range(0.0..1.0);
                    if !domain.contains(&(a * lam + b * (1.0 - lam))) {
                        violations += 1;
                    }
                }
                Check::new(
                    name,
                    violations == 0,
                    format!("{violations} of {} pairs left the domain", cfg.pair_samples),
                    Some(violations as f64),
                )
            }
            StructureCheck::RadialScaling => {
                let ts = [0.0, 0.25, 0.5, 0.9, 0.99, 0.999];
                let (mut points, mut violations, mut attempts) = (0usize, 0usize, 0usize);
                while points < cfg.boundary_samples && attempts < 100 * cfg.boundary_samples.max(1) {
                    attempts += 1;
                    let d = sample_direction(&mut rng);
                    let Ok(RayExit::Finite(s)) = boundary_ray(domain, &d) else { continue };
                    points += 1;
                    let b = d.scale(s);
                    violations += ts.iter().filter(|&&t| !domain.contains(&b.scale(t))).count();
                }
                let ok = violations == 0 && points == cfg.boundary_samples;
                Check::new(
                    name,
                    ok,
                    format!("{points} boundary points, {violations} scaled points outside"),
                    Some(violations as f64),
                )
            }
            StructureCheck::RotationExcluded => {
                let rot_minus_id = M::new(-1.0, -1.0, 1.0, -1.0);
                let ok = !domain.contains(&rot_minus_id);
                Check::new(name, ok, "quarter-turn rotation minus identity is outside".into(), None)
            }
            StructureCheck::NonconvexWitness => {
                let f = M::new(1.0, 0.5, -0.5, 1.0);
                let g_hat = |m: M| g_eval(&(m - M::identity()));
                let mid = g_hat((f + f.transpose()) * 0.5);
                let avg = 0.5 * (g_hat(f) + g_hat(f.transpose()));
                let ok = (mid - 1.0).abs() <= 1e-12 && (avg - 0.8).abs() <= 1e-12 && mid > avg;
                Check::new(name, ok, format!("g~(sym F) = {mid}, mean of g~(F), g~(F^T) = {avg}"), Some(mid - avg))
            }
            StructureCheck::BarrierMidpoint => {
                let mut violations = 0;
                let mut worst: f64 = f64::NEG_INFINITY;
                for _ in 0..cfg.pair_samples {
                    let a: M = sample_in_domain(&EffectiveDomain, &mut rng);
                    let b: M = sample_in_domain(&EffectiveDomain, &mut rng);
                    let lam: f64 = rng.gen_range(0.0..1.0);
                    let lhs = g_eval(&(a * lam + b * (1.0 - lam)));
                    let rhs = g_eval(&a) + g_eval(&b);
                    worst = worst.max(lhs / rhs);
                    if !(lhs <= rhs) {
                        violations += 1;
                    }
                }
                Check::new(name, violations == 0, format!("{violations} violations, max ratio {worst:.6}"), Some(worst))
            }
            StructureCheck::Periodicity => {
                let w = cfg.stored_energy();
                let mut mismatches = 0;
                for _ in 0..cfg.point_samples {
                    let xi = sample_in_domain(&EffectiveDomain, &mut rng);
                    let x = [rng.gen_range(0..64) as f64 / 64.0, rng.gen_range(0..64) as f64 / 64.0];
                    let z = [rng.gen_range(-5..=5) as f64, rng.gen_range(-5..=5) as f64];
                    if w.eval(x, &xi).to_bits() != w.eval([x[0] + z[0], x[1] + z[1]], &xi).to_bits() {
                        mismatches += 1;
                    }
                }
                Check::new(name, mismatches == 0, format!("{mismatches} mismatches on a dyadic x lattice"), None)
            }
            StructureCheck::GrowthSandwich => {
                let w = cfg.stored_energy();
                let k = growth_constants(&cfg.phi);
                let mut violations = 0;
                for _ in 0..cfg.point_samples {
                    let xi = sample_in_domain(&EffectiveDomain, &mut rng);
                    let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                    let (wv, gv) = (w.eval(x, &xi), growth_eval(&xi, p));
                    if !(k.alpha * gv <= wv && wv <= k.beta * (1.0 + gv)) {
                        violations += 1;
                    }
                }
                Check::new(
                    name,
                    violations == 0,
                    format!("alpha = {}, beta = {}, {violations} violations", k.alpha, k.beta),
                    None,
                )
            }
            StructureCheck::Coercivity => {
                let w = cfg.stored_energy();
                let k = growth_constants(&cfg.phi);
                let mut violations = 0;
                for _ in 0..cfg.point_samples {
                    let xi = sample_in_domain(&EffectiveDomain, &mut rng);
                    let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                    if !(k.c * power_norm(&xi, p) <= w.eval(x, &xi)) {
                        violations += 1;
                    }
                }
                Check::new(name, violations == 0, format!("c = {}, {violations} violations", k.c), None)
            }
            StructureCheck::FiniteOnBall => {
                let mut sup: f64 = growth_eval(&M::zero(), p);
                for _ in 0..cfg.point_samples {
                    sup = sup.max(growth_eval(&sample_ball(cfg.ball_radius, &mut rng), p));
                }
                Check::new(
                    name,
                    sup.is_finite(),
                    format!("sup of G on the ball of radius {} is {sup:.6}", cfg.ball_radius),
                    Some(sup),
                )
            }
            StructureCheck::BumpConstant => {
                let mut sup: f64 = 0.0;
                for _ in 0..cfg.pair_samples {
                    let a = sample_in_domain(&EffectiveDomain, &mut rng);
                    let b = sample_in_domain(&EffectiveDomain, &mut rng);
                    let t: f64 = rng.gen_range(0.0..1.0);
                    let r = growth_eval(&(a * t + b * (1.0 - t)), p) / (1.0 + growth_eval(&a, p) + growth_eval(&b, p));
                    sup = sup.max(r);
                }
                Check::new(name, sup.is_finite(), format!("sampled constant C3 = {sup:.6}"), Some(sup))
            }
            StructureCheck::PhiLipschitz => {
                let mut sup: f64 = 0.0;
                for _ in 0..cfg.point_samples {
                    let a = sample_ball(2.0, &mut rng);
                    let b = a + sample_ball(rng.gen_range(1e-4..1.0), &mut rng);
                    let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                    let num = (phi_eval(&cfg.phi, p, x, &a) - phi_eval(&cfg.phi, p, x, &b)).abs();
                    let den = (a - b).norm() * (1.0 + a.norm().powf(p - 1.0) + b.norm().powf(p - 1.0));
                    if den > 0.0 {
                        sup = sup.max(num / den);
                    }
                }
                Check::new(name, sup.is_finite(), format!("sampled Lipschitz constant K = {sup:.6}"), Some(sup))
            }
        }
    }
}

/// Every structural check against `domain` (the effective domain in normal use).
pub fn verify_structure(cfg: &HarnessConfig, domain: &dyn DomainGeometry<f64>) -> Report {
    let checks = StructureCheck::ALL.par_iter().map(|c| c.run(cfg, domain)).collect();
    Report { title: "structure".into(), checks }
}

// ---------------------------------------------------------------------------
// local Dirichlet problems

/// Grid-aligned square `origin/N + [0, side/N]²`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSquare {
    pub origin: [i64; 2],
    pub side: usize,
}

impl GridSquare {
    /// The unit cell at `n` squares per unit length.
    pub fn unit(n: usize) -> Self {
        Self { origin: [0, 0], side: n }
    }
}

/// `⨍_Q L(x/ε, ξ + ∇φ)` minimized over zero-trace φ, with `ε = 1/eps_inv`.
///
/// The mesh has side `ε/N`; in the unknowns the solver sees, this is exactly the
/// problem for `S_ξ(Q/ε)`, so the two agree bit for bit.
pub fn local_dirichlet_density<D: EnergyDensity<f64> + ?Sized>(
    xi: &M,
    q: GridSquare,
    eps_inv: usize,
    density: &D,
    n: usize,
    opts: &SolverOptions,
) -> Result<f64> {
    if eps_inv == 0 || q.side == 0 || n < 2 {
        return Err(Error::InvalidArgument("need 1/ε >= 1, a nonempty square and N >= 2".into()));
    }
    let m = eps_inv as i64;
    let rect = GridRect::new([q.origin[0] * m, q.origin[1] * m], q.side * eps_inv, q.side * eps_inv);
    let spacing = 1.0 / (n * eps_inv) as f64;
    let mesh = CellMesh::new(rect, n, spacing)?;
    Ok(minimize_with_starts(xi, density, &mesh, opts, &[])?.density)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaDiagnostic {
    pub xi: M,
    /// `(1/ε, density)` along the sweep.
    pub sweep: Vec<(usize, f64)>,
    pub hw: f64,
    pub hw_hat: f64,
    pub radial_gap: f64,
    /// `|last density - hW| / hW`.
    pub gap_density: f64,
    /// `|hW_hat - hW| / hW`.
    pub gap_hat: f64,
}

impl GammaDiagnostic {
    pub fn to_report(&self, tol: f64) -> Report {
        let mut r = Report::new("gamma diagnostic");
        r.checks.push(Check::new(
            "local_dirichlet_vs_hw",
            self.gap_density <= tol,
            format!("last density {:.8} vs hW {:.8}", self.sweep.last().map_or(f64::NAN, |s| s.1), self.hw),
            Some(self.gap_density),
        ));
        r.checks.push(Check::new(
            "radial_vs_hw",
            self.gap_hat <= tol,
            format!("hW_hat {:.8} vs hW {:.8}", self.hw_hat, self.hw),
            Some(self.gap_hat),
        ));
        r
    }
}

/// Local Dirichlet sweep over `cfg.eps_inv`, `hW(ξ)` and its radial extension.
pub fn gamma_diagnostic<D: EnergyDensity<f64> + ?Sized>(
    xi: &M,
    density: &D,
    cfg: &HarnessConfig,
) -> Result<GammaDiagnostic> {
    if !in_g(xi) || !density.in_domain(xi) {
        return Err(Error::Domain(format!("{xi:?} is not in the interior of the effective domain")));
    }
    let sweep = cfg
        .eps_inv
        .par_iter()
        .map(|&m| local_dirichlet_density(xi, GridSquare::unit(cfg.n), m, density, cfg.n, &cfg.solver).map(|d| (m, d)))
        .collect::<Result<Vec<_>>>()?;
    let hw = hw_solve(xi, density, &cfg.schedule, &cfg.solver, &[])?.record.hw;
    let radial = radial_extension(xi, density, &default_t_list(cfg.radial_levels), &cfg.schedule, &cfg.solver)?;
    let last = sweep.last().map_or(f64::NAN, |s| s.1);
    Ok(GammaDiagnostic {
        xi: *xi,
        sweep,
        hw,
        hw_hat: radial.hw_hat,
        radial_gap: radial.gap,
        gap_density: (last - hw).abs() / hw,
        gap_hat: (radial.hw_hat - hw).abs() / hw,
    })
}

// ---------------------------------------------------------------------------
// radial modulus suite

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeltaRow {
    pub t: f64,
    /// Sampled `Δ_g` with weight 1.
    pub delta_g: f64,
    /// `(1 - t^{2r}) / t^{2r}`.
    pub bound_g: f64,
    /// Sampled `Δ_Φ` with weight 1.
    pub delta_phi: f64,
    /// Sampled `Δ_W` with weight 2 on the random samples.
    pub delta_w: f64,
    /// Sampled `Δ_W` on the shared grid and the cell minimizers' gradients.
    pub delta_w_grid: f64,
    /// `Δ_{ℋW}` tabulated on the shared grid, weight `⟨a⟩`.
    pub delta_hw: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuUscReport {
    pub rows: Vec<DeltaRow>,
    pub report: Report,
}

/// Random domain points, the origin, and points just inside the boundary.
pub fn modulus_samples(cfg: &HarnessConfig) -> Vec<(Point<f64>, M)> {
    let mut rng = cfg.rng(101);
    let mut samples = vec![([0.0, 0.0], M::zero())];
    for _ in 0..cfg.point_samples {
        let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
        samples.push((x, sample_in_domain(&EffectiveDomain, &mut rng)));
    }
    // points just inside the boundary, where the barrier is steep
    let mut near = 0;
    while near < cfg.point_samples / 4 {
        let d: M = sample_direction(&mut rng);
        if let Ok(RayExit::Finite(s)) = boundary_ray(&EffectiveDomain, &d) {
            let x = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
            samples.push((x, d.scale(s * rng.gen_range(0.9..0.999))));
            near += 1;
        }
    }
    samples
}

/// Homogenized modulus on the shared grid next to the sampled integrand modulus.
///
/// Each `tξ` problem is warm-started from `t` times the minimizers at `ξ`, and
/// the integrand modulus is sampled on the element gradients of those
/// minimizers, which is where the comparison is decided.
pub fn hw_delta_rows<D: EnergyDensity<f64> + ?Sized>(
    density: &D,
    grid: &[M],
    ts: &[f64],
    cfg: &HarnessConfig,
) -> Result<Vec<(f64, f64, f64)>> {
    let bases: Vec<HomogSolve<f64>> =
        grid.par_iter().map(|xi| hw_solve(xi, density, &cfg.schedule, &cfg.solver, &[])).collect::<Result<_>>()?;
    let mut rng = cfg.rng(202);
    let mut samples: Vec<(Point<f64>, M)> = Vec::new();
    for b in &bases {
        samples.extend(b.element_samples());
        for _ in 0..16 {
            samples.push(([rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)], b.record.xi));
        }
    }
    let mean_weight = {
        let mesh = CellMesh::<f64>::build(1, cfg.n)?;
        let s: f64 = mesh.elements().iter().map(|e| density.weight(e.quad)).sum();
        s / mesh.elements().len() as f64
    };
    ts.iter()
        .map(|&t| {
            let rows = bases
                .par_iter()
                .map(|b| {
                    let scaled =
                        hw_solve(&b.record.xi.scale(t), density, &cfg.schedule, &cfg.solver, &b.scaled_fields(t))?;
                    Ok((scaled.record.hw, b.record.hw))
                })
                .collect::<Result<Vec<_>>>()?;
            let d_hw = delta_tabulated(&rows, mean_weight)?;
            let d_w = delta_estimate(density, t, &samples)?;
            Ok((t, d_hw, d_w))
        })
        .collect()
}

/// Sampled moduli of `g`, `Φ`, `W` and `ℋW` at `cfg.delta_t`.
pub fn ru_usc_suite(cfg: &HarnessConfig) -> Result<RuUscReport> {
    let w = cfg.stored_energy();
    let phi = Phi { p: cfg.params.p, model: cfg.phi };
    let samples = modulus_samples(cfg);
    let grid: Vec<M> = cfg.delta_grid.iter().map(|a| M::from_array(*a)).collect();
    let hw_rows = hw_delta_rows(&w, &grid, &cfg.delta_t, cfg)?;

    let mut rows = Vec::new();
    for (&t, &(_, delta_hw, delta_w_grid)) in cfg.delta_t.iter().zip(&hw_rows) {
        rows.push(DeltaRow {
            t,
            delta_g: delta_estimate(&Barrier, t, &samples)?,
            bound_g: barrier_delta_bound(t, cfg.params.r),
            delta_phi: delta_estimate(&phi, t, &samples)?,
            delta_w: delta_estimate(&w, t, &samples)?,
            delta_w_grid,
            delta_hw,
        });
    }

    let mut report = Report::new("radial modulus");
    for r in &rows {
        report.checks.push(Check::new(
            &format!("barrier_bound_t{}", r.t),
            r.delta_g <= r.bound_g,
            format!("sampled {:.6e} <= bound {:.6e}", r.delta_g, r.bound_g),
            Some(r.delta_g),
        ));
        let combined = r.delta_phi.max(r.delta_g);
        report.checks.push(Check::new(
            &format!("sum_modulus_t{}", r.t),
            r.delta_w <= combined,
            format!("Δ_W {:.6e} <= max(Δ_Φ, Δ_g) {:.6e}", r.delta_w, combined),
            Some(r.delta_w),
        ));
        report.checks.push(Check::new(
            &format!("homogenized_modulus_t{}", r.t),
            r.delta_hw <= r.delta_w_grid + cfg.delta_tol,
            format!("Δ_hW {:.6e} <= Δ_W {:.6e} + {}", r.delta_hw, r.delta_w_grid, cfg.delta_tol),
            Some(r.delta_hw),
        ));
    }
    let decreasing = |f: fn(&DeltaRow) -> f64| rows.windows(2).all(|w| f(&w[1]) <= f(&w[0]) + 1e-12);
    report.checks.push(Check::new(
        "barrier_modulus_decreasing",
        decreasing(|r| r.delta_g),
        "Δ_g decreases as t -> 1".into(),
        None,
    ));
    report.checks.push(Check::new(
        "stored_modulus_decreasing",
        decreasing(|r| r.delta_w),
        "Δ_W decreases as t -> 1".into(),
        None,
    ));
    report.checks.push(Check::new(
        "homogenized_modulus_decreasing",
        decreasing(|r| r.delta_hw),
        "Δ_hW decreases as t -> 1".into(),
        None,
    ));
    Ok(RuUscReport { rows, report })
}
