//! Experiment configuration: a TOML file with one section per concern.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algebra2d::Mat2;
use crate::domain::{boundary_ray, EffectiveDomain, RayExit};
use crate::error::{Error, Result};
use crate::harness::HarnessConfig;
use crate::homog::{default_t_list, CellSchedule};
use crate::integrand::{Barrier, DoubleWell, EnergyDensity, Growth, IntegrandParams, Phi, PhiModel, StoredEnergy};
use crate::solver::SolverOptions;

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), message: message.into() }
}

/// Which density a command evaluates or homogenizes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntegrandId {
    /// `Φ + g`.
    #[default]
    W,
    /// `|ξ|^p + g`.
    G,
    /// The barrier alone.
    #[serde(rename = "g")]
    Barrier,
    #[serde(rename = "phi")]
    Phi,
    #[serde(rename = "double_well")]
    DoubleWell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrandSection {
    pub id: IntegrandId,
    pub p: f64,
    pub r: f64,
    pub phi: PhiModel<f64>,
}

impl Default for IntegrandSection {
    fn default() -> Self {
        let params = IntegrandParams::<f64>::default();
        Self { id: IntegrandId::W, p: params.p, r: params.r, phi: PhiModel::default() }
    }
}

impl IntegrandSection {
    pub fn params(&self) -> IntegrandParams<f64> {
        IntegrandParams { p: self.p, r: self.r }
    }

    pub fn density(&self) -> Box<dyn EnergyDensity<f64>> {
        match self.id {
            IntegrandId::W => Box::new(StoredEnergy::new(self.params(), self.phi)),
            IntegrandId::G => Box::new(Growth { p: self.p }),
            IntegrandId::Barrier => Box::new(Barrier),
            IntegrandId::Phi => Box::new(Phi { p: self.p, model: self.phi }),
            IntegrandId::DoubleWell => Box::new(DoubleWell),
        }
    }
}

/// The set of `ξ` a command runs over, entries in the order `ξ11, ξ12, ξ21, ξ22`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum XiSpec {
    List {
        points: Vec<[f64; 4]>,
    },
    /// Tensor grid over the box `[lower, upper]`; `steps[i]` points per entry.
    Grid {
        lower: [f64; 4],
        upper: [f64; 4],
        steps: [usize; 4],
    },
    /// `t · direction` for each `t`; with `to_boundary` the direction is first
    /// scaled to the boundary of the effective domain.
    Ray {
        direction: [f64; 4],
        t: Vec<f64>,
        #[serde(default)]
        to_boundary: bool,
    },
}

impl Default for XiSpec {
    fn default() -> Self {
        XiSpec::List { points: vec![[0.0; 4]] }
    }
}

impl XiSpec {
    pub fn points(&self) -> Result<Vec<Mat2<f64>>> {
        match self {
            XiSpec::List { points } => Ok(points.iter().map(|a| Mat2::from_array(*a)).collect()),
            XiSpec::Grid { lower, upper, steps } => {
                let axis = |i: usize| -> Vec<f64> {
                    if steps[i] == 1 {
                        return vec![lower[i]];
                    }
                    (0..steps[i]).map(|j| lower[i] + (upper[i] - lower[i]) * j as f64 / (steps[i] - 1) as f64).collect()
                };
                let axes: Vec<Vec<f64>> = (0..4).map(axis).collect();
                let mut out = Vec::new();
                for &a in &axes[0] {
                    for &b in &axes[1] {
                        for &c in &axes[2] {
                            for &d in &axes[3] {
                                out.push(Mat2::new(a, b, c, d));
                            }
                        }
                    }
                }
                Ok(out)
            }
            XiSpec::Ray { direction, t, to_boundary } => {
                let mut d = Mat2::from_array(*direction);
                if *to_boundary {
                    match boundary_ray(&EffectiveDomain, &d)? {
                        RayExit::Finite(s) => d = d.scale(s),
                        RayExit::Unbounded => {
                            return Err(config_err("xi.direction", "the ray never leaves the effective domain"))
                        }
                    }
                }
                Ok(t.iter().map(|&s| d.scale(s)).collect())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |a: &[f64]| a.iter().all(|v| v.is_finite());
        match self {
            XiSpec::List { points } => {
                if points.is_empty() {
                    return Err(config_err("xi.points", "at least one point is required"));
                }
                if !points.iter().all(|p| finite(p)) {
                    return Err(config_err("xi.points", "entries must be finite"));
                }
            }
            XiSpec::Grid { lower, upper, steps } => {
                if !finite(lower) || !finite(upper) {
                    return Err(config_err("xi.lower", "bounds must be finite"));
                }
                if lower.iter().zip(upper).any(|(l, u)| l > u) {
                    return Err(config_err("xi.upper", "upper bound below lower bound"));
                }
                if steps.contains(&0) {
                    return Err(config_err("xi.steps", "every axis needs at least one step"));
                }
            }
            XiSpec::Ray { direction, t, .. } => {
                if !finite(direction) || direction.iter().all(|&v| v == 0.0) {
                    return Err(config_err("xi.direction", "direction must be finite and nonzero"));
                }
                if t.is_empty() || !finite(t) {
                    return Err(config_err("xi.t", "need at least one finite t"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomogSection {
    pub k_list: Vec<usize>,
    /// Squares per unit length, one per entry of `k_list`.
    pub n_list: Vec<usize>,
    /// Radial levels; ignored when `t_list` is given.
    pub levels: usize,
    pub t_list: Option<Vec<f64>>,
}

impl Default for HomogSection {
    fn default() -> Self {
        let s = CellSchedule::default();
        Self { k_list: s.k_list, n_list: s.n_list, levels: 6, t_list: None }
    }
}

impl HomogSection {
    pub fn schedule(&self) -> CellSchedule {
        CellSchedule { k_list: self.k_list.clone(), n_list: self.n_list.clone() }
    }

    pub fn t_values(&self) -> Vec<f64> {
        self.t_list.clone().unwrap_or_else(|| default_t_list(self.levels))
    }
}

/// Single-cell solve for `cell` and `qcx`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSection {
    pub k: usize,
    pub n: usize,
}

impl Default for CellSection {
    fn default() -> Self {
        Self { k: 1, n: 8 }
    }
}

/// Frozen periodic variable for `eval` and `qcx`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointSection {
    pub x: [f64; 2],
}

/// Sample sizes and tolerances of the verification suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessSection {
    pub pair_samples: usize,
    pub boundary_samples: usize,
    pub point_samples: usize,
    pub ball_radius: f64,
    pub delta_t: Vec<f64>,
    pub delta_grid: Vec<[f64; 4]>,
    pub delta_tol: f64,
    pub eps_inv: Vec<usize>,
    pub n: usize,
    pub gap_tol: f64,
}

impl Default for HarnessSection {
    fn default() -> Self {
        let h = HarnessConfig::default();
        Self {
            pair_samples: h.pair_samples,
            boundary_samples: h.boundary_samples,
            point_samples: h.point_samples,
            ball_radius: h.ball_radius,
            delta_t: h.delta_t,
            delta_grid: h.delta_grid,
            delta_tol: h.delta_tol,
            eps_inv: h.eps_inv,
            n: h.n,
            gap_tol: h.gap_tol,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Results directory; the `--out` flag takes precedence.
    pub out: Option<PathBuf>,
    pub integrand: IntegrandSection,
    pub xi: XiSpec,
    pub homog: HomogSection,
    pub cell: CellSection,
    pub point: PointSection,
    pub solver: SolverOptions,
    pub harness: HarnessSection,
}

impl ExperimentConfig {
    /// Parses and validates; errors name the offending line or field.
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let field = e.span().map(|s| format!("line {}", line_of(text, s.start))).unwrap_or_else(|| "config".into());
            config_err(&field, e.message().trim_end())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |field: &str, r: Result<()>| {
            r.map_err(|e| match e {
                Error::Config { .. } => e,
                other => config_err(field, other.to_string()),
            })
        };
        wrap("integrand", self.integrand.params().validate())?;
        wrap("integrand.phi", self.integrand.phi.validate())?;
        self.xi.validate()?;
        wrap("homog", self.homog.schedule().validate())?;
        let t = self.homog.t_values();
        if t.is_empty() {
            return Err(config_err("homog.t_list", "need at least one t"));
        }
        if t.windows(2).any(|w| !(w[0] < w[1])) || !(t[0] >= 0.0) || !(t[t.len() - 1] < 1.0) {
            return Err(config_err("homog.t_list", "t values must increase strictly inside [0, 1)"));
        }
        if self.cell.k == 0 || self.cell.n < 2 {
            return Err(config_err("cell", "need k >= 1 and n >= 2"));
        }
        if !self.point.x.iter().all(|v| v.is_finite()) {
            return Err(config_err("point.x", "coordinates must be finite"));
        }
        wrap("solver", self.solver.validate())?;
        let h = &self.harness;
        if h.delta_t.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return Err(config_err("harness.delta_t", "t values must lie in (0, 1)"));
        }
        if h.delta_grid.is_empty() || h.eps_inv.is_empty() || h.eps_inv.contains(&0) {
            return Err(config_err("harness", "delta_grid and eps_inv must be nonempty, eps_inv positive"));
        }
        if h.n < 2 || !(h.ball_radius > 0.0) || !(h.gap_tol > 0.0) || !(h.delta_tol >= 0.0) {
            return Err(config_err("harness", "need n >= 2 and positive radius and tolerances"));
        }
        Ok(())
    }

    /// Solver options with the experiment seed applied.
    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions { seed: self.seed, ..self.solver.clone() }
    }

    pub fn harness_config(&self) -> HarnessConfig {
        let h = &self.harness;
        HarnessConfig {
            seed: self.seed,
            params: self.integrand.params(),
            phi: self.integrand.phi,
            pair_samples: h.pair_samples,
            boundary_samples: h.boundary_samples,
            point_samples: h.point_samples,
            ball_radius: h.ball_radius,
            delta_t: h.delta_t.clone(),
            delta_grid: h.delta_grid.clone(),
            delta_tol: h.delta_tol,
            schedule: self.homog.schedule(),
            eps_inv: h.eps_inv.clone(),
            n: h.n,
            radial_levels: self.homog.levels,
            gap_tol: h.gap_tol,
            solver: self.solver_options(),
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn custom_round_trip() {
        let text = r#"
seed = 11
out = "runs/a"

[integrand]
id = "G"
p = 4.5

[integrand.phi]
kind = "homogeneous"

[xi]
kind = "ray"
direction = [0.2, 1.0, 0.0, 0.1]
t = [0.1, 0.30000000000000004]
to_boundary = true

[homog]
k_list = [1, 2]
n_list = [6, 6]
t_list = [0.5, 0.75]

[solver]
max_iters = 10
"#;
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.integrand.id, IntegrandId::G);
        assert_eq!(cfg.solver_options().seed, 11);
        let again = ExperimentConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
        let XiSpec::Ray { t, .. } = &again.xi else { panic!() };
        assert_eq!(t[1].to_bits(), 0.30000000000000004f64.to_bits());
    }

    #[test]
    fn unknown_field_reports_line() {
        let err = ExperimentConfig::parse("seed = 1\n\n[homog]\nk_lst = [1]\n").unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        assert!(err.contains("k_lst"), "{err}");
    }

    #[test]
    fn unknown_integrand_is_rejected() {
        let err = ExperimentConfig::parse("[integrand]\nid = \"V\"\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn semantic_errors_name_the_field() {
        let err = ExperimentConfig::parse("[homog]\nt_list = [0.5, 0.4]\n").unwrap_err().to_string();
        assert!(err.contains("homog.t_list"), "{err}");
        let err = ExperimentConfig::parse("[homog]\nk_list = [1, 2]\nn_list = [8]\n").unwrap_err().to_string();
        assert!(err.contains("at homog:"), "{err}");
    }

    #[test]
    fn grid_and_ray_points() {
        let grid = XiSpec::Grid { lower: [0.0, -1.0, 0.0, 0.0], upper: [0.5, 1.0, 0.0, 0.0], steps: [2, 3, 1, 1] };
        let pts = grid.points().unwrap();
        assert_eq!(pts.len(), 6);
        assert_eq!(pts[1], Mat2::new(0.0, 0.0, 0.0, 0.0));
        let ray = XiSpec::Ray { direction: [0.0, 2.0, 0.0, 0.0], t: vec![0.5], to_boundary: true };
        let p = ray.points().unwrap()[0];
        assert!((p.a12 - 0.5).abs() < 1e-9);
    }
}
