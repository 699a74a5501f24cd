//! Initial-data families and the normalized description of a run.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ConformalField;
use crate::flow::{
    evolve, Boundary, FlowState, FlowTrajectory, Monitor, SnapshotPlan, SolverConfig,
};
use crate::geometry::{active_nodes, scalar_curvature_values};
use crate::grid::{Constants, RadialGrid};
use crate::observables::{BracketMonitor, CurvatureSignMonitor, DecayMonitor, MassMonitor};
use crate::stencil::integrate;

/// Initial conformal factor `v0` against the flat metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioKind {
    Flat,
    /// `v0 = 1 + mass / (n-1) r^{2-n}`: scalar-flat with ADM mass `mass`.
    Schwarzschild { mass: f64 },
    /// `v0 = 1 + amplitude psi`, where `psi` is the discrete Newtonian potential
    /// of `rho = (1 - ((r - center)/width)^2)^3` on `|r - center| < width`,
    /// normalized to `psi(r_inner) = 1`. Because `-Delta_h psi = rho` holds
    /// exactly, `R(g0) >= 0` at every active node when `amplitude >= 0`, and
    /// `psi` is exactly harmonic outside the support.
    Bump { amplitude: f64, width: f64, center: f64 },
    /// `v0 = 1 + amplitude (1 + r^2)^{-tau/2}`.
    PowerTail { amplitude: f64, tau: f64 },
    /// Piecewise-linear profile through `(r, v)`; must cover the grid.
    Custom { r: Vec<f64>, v: Vec<f64> },
}

impl ScenarioKind {
    pub fn label(&self) -> &'static str {
        match self {
            ScenarioKind::Flat => "flat",
            ScenarioKind::Schwarzschild { .. } => "schwarzschild",
            ScenarioKind::Bump { .. } => "bump",
            ScenarioKind::PowerTail { .. } => "power_tail",
            ScenarioKind::Custom { .. } => "custom",
        }
    }

    /// Decay order of `v0 - 1`, when the family has one.
    pub fn tail_order(&self, n: usize) -> Option<f64> {
        match self {
            ScenarioKind::Schwarzschild { .. } | ScenarioKind::Bump { .. } => Some(n as f64 - 2.0),
            ScenarioKind::PowerTail { tau, .. } => Some(*tau),
            ScenarioKind::Flat | ScenarioKind::Custom { .. } => None,
        }
    }

    /// Parameter problems that do not need a grid.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let finite = |name: &str, x: f64, out: &mut Vec<String>| {
            if !x.is_finite() {
                out.push(format!("scenario.profile.{name} = {x} must be finite"));
            }
        };
        match self {
            ScenarioKind::Flat => {}
            ScenarioKind::Schwarzschild { mass } => finite("mass", *mass, &mut out),
            ScenarioKind::Bump {
                amplitude,
                width,
                center,
            } => {
                finite("amplitude", *amplitude, &mut out);
                finite("center", *center, &mut out);
                if !(*width > 0.0 && width.is_finite()) {
                    out.push(format!("scenario.profile.width = {width} must be positive"));
                }
                if *center < 0.0 {
                    out.push(format!("scenario.profile.center = {center} must be nonnegative"));
                }
            }
            ScenarioKind::PowerTail { amplitude, tau } => {
                finite("amplitude", *amplitude, &mut out);
                if !(*tau > 0.0 && tau.is_finite()) {
                    out.push(format!("scenario.profile.tau = {tau} must be positive"));
                }
            }
            ScenarioKind::Custom { r, v } => {
                if r.len() != v.len() {
                    out.push(format!(
                        "scenario.profile: r has {} entries but v has {}",
                        r.len(),
                        v.len()
                    ));
                }
                if r.len() < 2 {
                    out.push("scenario.profile: a custom table needs at least two rows".into());
                }
                if r.windows(2).any(|w| !(w[1] > w[0])) {
                    out.push("scenario.profile.r must be strictly increasing".into());
                }
                for (i, x) in v.iter().enumerate() {
                    if !(*x > 0.0 && x.is_finite()) {
                        out.push(format!("scenario.profile.v[{i}] = {x} must be positive"));
                    }
                }
            }
        }
        out
    }

    /// Samples `v0` on `grid` (no positivity check).
    pub fn initial_values(&self, grid: &RadialGrid) -> Result<Vec<f64>> {
        let n = grid.n();
        match self {
            ScenarioKind::Flat => Ok(vec![1.0; grid.len()]),
            ScenarioKind::Schwarzschild { mass } => {
                if grid.r_inner() <= 0.0 {
                    return Err(Error::Domain(
                        "schwarzschild data is singular at the origin; use r_inner > 0".into(),
                    ));
                }
                let c = mass / (n as f64 - 1.0);
                Ok(grid.sample(|r| 1.0 + c * r.powf(2.0 - n as f64)))
            }
            ScenarioKind::Bump {
                amplitude,
                width,
                center,
            } => {
                let psi = discrete_potential(grid, |r| bump_density(r, *width, *center))?;
                Ok(psi.iter().map(|p| 1.0 + amplitude * p).collect())
            }
            ScenarioKind::PowerTail { amplitude, tau } => {
                Ok(grid.sample(|r| 1.0 + amplitude * (1.0 + r * r).powf(-tau / 2.0)))
            }
            ScenarioKind::Custom { r, v } => {
                let (lo, hi) = (r[0], r[r.len() - 1]);
                if grid.r_inner() < lo || grid.r_outer() > hi {
                    return Err(Error::Domain(format!(
                        "custom table covers [{lo}, {hi}] but the grid spans [{}, {}]",
                        grid.r_inner(),
                        grid.r_outer()
                    )));
                }
                Ok(grid.sample(|x| interpolate(r, v, x)))
            }
        }
    }
}

fn bump_density(r: f64, width: f64, center: f64) -> f64 {
    let s = (r - center) / width;
    if s.abs() < 1.0 {
        (1.0 - s * s).powi(3)
    } else {
        0.0
    }
}

fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let k = xs.partition_point(|&t| t <= x).clamp(1, xs.len() - 1);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let s = (x - x0) / (x1 - x0);
    ys[k - 1] + s * (ys[k] - ys[k - 1])
}

/// Solves `-Delta_h psi = rho` at the active nodes with the decaying
/// harmonic tail `psi = F r^{2-n} / (n-2)` at the outer node, where `F` is
/// the total flux. The result is normalized to `psi[0] = 1`.
///
/// With an inner boundary at `r_inner > 0` the flux of `rho` inside the hole
/// is added by quadrature, so nested grids give identical values at shared
/// nodes.
pub fn discrete_potential(grid: &RadialGrid, rho: impl Fn(f64) -> f64) -> Result<Vec<f64>> {
    let len = grid.len();
    let nf = grid.n() as f64;
    let r = grid.nodes();
    let vol = grid.cell_volumes();
    let cond = grid.face_conductance();
    let density = grid.sample(&rho);
    if density[len - 1] != 0.0 || density[len - 2] != 0.0 {
        return Err(Error::Domain(format!(
            "source must vanish near the outer radius {}",
            grid.r_outer()
        )));
    }
    let mut flux = if grid.has_origin() {
        0.0
    } else {
        let m = 2048;
        let xs: Vec<f64> = (0..=m).map(|k| grid.r_inner() * k as f64 / m as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| rho(x) * x.powf(nf - 1.0)).collect();
        integrate(&xs, &ys)
    };
    // flux[i] crosses the face between nodes i and i+1
    let mut face_flux = vec![0.0; len - 1];
    let active = active_nodes(grid);
    for (i, f) in face_flux.iter_mut().enumerate() {
        if active.contains(&i) {
            flux += vol[i] * density[i];
        }
        *f = flux;
    }
    let total = face_flux[len - 2];
    if total <= 0.0 {
        return Err(Error::Domain("source has no mass on the grid".into()));
    }
    let mut psi = vec![0.0; len];
    psi[len - 1] = total * r[len - 1].powf(2.0 - nf) / (nf - 2.0);
    for i in (0..len - 1).rev() {
        psi[i] = psi[i + 1] + face_flux[i] / cond[i];
    }
    let top = psi[0];
    Ok(psi.into_iter().map(|p| p / top).collect())
}

/// Nodewise sign information for `R(g0)` over active nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureReport {
    pub sup_abs: f64,
    pub min: f64,
    pub max: f64,
    /// `R(g0) >= -tol` at every active node.
    pub nonnegative: bool,
    /// Truncated `int |R| dvol` over the grid (flat volume element, sphere area included).
    pub l1_truncated: f64,
}

pub fn curvature_report(v0: &ConformalField, tol: f64) -> Result<CurvatureReport> {
    let grid = v0.grid();
    let consts = grid.constants();
    let r = scalar_curvature_values(grid, v0.values(), &consts)?;
    let mut sup_abs = 0.0_f64;
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for i in active_nodes(grid) {
        sup_abs = sup_abs.max(r[i].abs());
        min = min.min(r[i]);
        max = max.max(r[i]);
    }
    let vol_exp = consts.nf() / (consts.nf() - 2.0) * 2.0;
    let l1 = active_nodes(grid)
        .map(|i| grid.cell_volumes()[i] * r[i].abs() * v0.values()[i].powf(vol_exp))
        .sum::<f64>()
        * consts.omega();
    Ok(CurvatureReport {
        sup_abs,
        min,
        max,
        nonnegative: min >= -tol,
        l1_truncated: l1,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    Geometric,
    LogUniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub r_inner: f64,
    pub r_outer: f64,
    pub nodes: usize,
    pub spacing: Spacing,
    /// Cell-to-cell growth factor for geometric spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
}

impl GridSpec {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.r_inner >= 0.0 && self.r_inner.is_finite()) {
            out.push(format!("grid.r_inner = {} must be finite and >= 0", self.r_inner));
        }
        if !(self.r_outer > self.r_inner && self.r_outer.is_finite()) {
            out.push(format!("grid.r_outer = {} must exceed r_inner", self.r_outer));
        }
        if self.nodes < 3 {
            out.push(format!("grid.nodes = {} must be at least 3", self.nodes));
        }
        match (self.spacing, self.ratio) {
            (Spacing::Geometric, None) => out.push("grid.ratio is required for geometric spacing".into()),
            (Spacing::Geometric, Some(q)) if !(q > 0.0 && q.is_finite()) => {
                out.push(format!("grid.ratio = {q} must be positive"))
            }
            (Spacing::Uniform | Spacing::LogUniform, Some(_)) => {
                out.push("grid.ratio only applies to geometric spacing".into())
            }
            (Spacing::LogUniform, None) if self.r_inner <= 0.0 => {
                out.push("log_uniform spacing needs r_inner > 0".into())
            }
            _ => {}
        }
        out
    }

    pub fn build(&self, n: usize) -> Result<RadialGrid> {
        match self.spacing {
            Spacing::Uniform => RadialGrid::uniform(n, self.r_inner, self.r_outer, self.nodes),
            Spacing::Geometric => {
                RadialGrid::geometric(n, self.r_inner, self.r_outer, self.nodes, self.ratio.unwrap_or(1.0))
            }
            Spacing::LogUniform => RadialGrid::log_uniform(n, self.r_inner, self.r_outer, self.nodes),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BracketSpec {
    #[serde(default = "default_bracket_tol")]
    pub tol: f64,
    /// Abort the run on the first violation.
    #[serde(default)]
    pub fatal: bool,
}

fn default_bracket_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MassSpec {
    pub radii: Vec<f64>,
    #[serde(default = "default_mass_tol")]
    pub tol: f64,
}

fn default_mass_tol() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecaySpec {
    /// Defaults to the scenario's own tail order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_asym: Option<f64>,
    #[serde(default = "default_decay_factor")]
    pub factor: f64,
}

fn default_decay_factor() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurvatureSignSpec {
    #[serde(default = "default_curvature_tol")]
    pub tol: f64,
}

fn default_curvature_tol() -> f64 {
    1e-8
}

/// Monitors attached to a run; absent sections are off.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bracket: Option<BracketSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<MassSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecaySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature_sign: Option<CurvatureSignSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_snapshots")]
    pub snapshots: SnapshotPlan,
    /// Default output directory (the CLI's `--out` wins).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    #[serde(default = "default_true")]
    pub checkpoint: bool,
}

fn default_snapshots() -> SnapshotPlan {
    SnapshotPlan::Equispaced(11)
}

fn default_true() -> bool {
    true
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec {
            snapshots: default_snapshots(),
            dir: None,
            checkpoint: true,
        }
    }
}

/// A validated run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub n: usize,
    pub kind: ScenarioKind,
    pub t_end: f64,
    pub grid: GridSpec,
    /// Boundary values are always explicit here.
    pub solver: SolverConfig,
    pub monitors: MonitorSpec,
    pub output: OutputSpec,
}

impl Scenario {
    /// A scenario with implicit u-form stepping, boundaries pinned to `v0`,
    /// no monitors and default output.
    pub fn new(name: impl Into<String>, n: usize, kind: ScenarioKind, grid: GridSpec, dt: f64, t_end: f64) -> Result<Self> {
        let g = Arc::new(grid.build(n)?);
        let values = kind.initial_values(&g)?;
        let v0 = ConformalField::new(g, values)?;
        let s = Scenario {
            name: name.into(),
            n,
            kind,
            t_end,
            grid,
            solver: SolverConfig::new(dt, Boundary::from_initial(&v0)),
            monitors: MonitorSpec::default(),
            output: OutputSpec::default(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn constants(&self) -> Result<Constants> {
        Constants::new(self.n)
    }

    pub fn build_grid(&self) -> Result<Arc<RadialGrid>> {
        Ok(Arc::new(self.grid.build(self.n)?))
    }

    pub fn initial_field(&self) -> Result<ConformalField> {
        let grid = self.build_grid()?;
        let values = self.kind.initial_values(&grid)?;
        ConformalField::new(grid, values)
    }

    /// Sign report of `R(g0)` with roundoff tolerance `1e-10`.
    pub fn curvature_report(&self) -> Result<CurvatureReport> {
        curvature_report(&self.initial_field()?, 1e-10)
    }

    /// Every problem found, including physics checks on the sampled data.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n < 3 {
            out.push(format!("scenario.n = {} must be at least 3", self.n));
        }
        if self.name.trim().is_empty() {
            out.push("scenario.name must not be empty".into());
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            out.push(format!("scenario.t_end = {} must be finite and >= 0", self.t_end));
        }
        out.extend(self.kind.problems());
        let grid_problems = self.grid.problems();
        let grid_ok = grid_problems.is_empty();
        out.extend(grid_problems);
        if matches!(self.kind, ScenarioKind::Schwarzschild { .. }) && self.grid.r_inner <= 0.0 {
            out.push("schwarzschild data is singular at the origin r = 0; set grid.r_inner > 0".into());
        }
        if let ScenarioKind::Bump { width, center, .. } = self.kind {
            if center + width >= self.grid.r_outer {
                out.push(format!(
                    "bump support [.., {}] must lie inside grid.r_outer = {}",
                    center + width,
                    self.grid.r_outer
                ));
            }
        }
        if let Some(m) = &self.monitors.mass {
            if m.radii.is_empty() {
                out.push("monitors.mass.radii must not be empty".into());
            }
            for r in &m.radii {
                if !(*r > self.grid.r_inner && *r < self.grid.r_outer) {
                    out.push(format!(
                        "monitors.mass.radii: {r} outside ({}, {})",
                        self.grid.r_inner, self.grid.r_outer
                    ));
                }
            }
        }
        if let Some(d) = &self.monitors.decay {
            if d.tau0.or_else(|| self.kind.tail_order(self.n)).is_none() {
                out.push("monitors.decay.tau0 is required for this profile".into());
            }
        }
        let grid = if self.n >= 3 && grid_ok {
            match self.grid.build(self.n) {
                Ok(g) => Some(g),
                Err(e) => {
                    out.push(format!("grid: {e}"));
                    None
                }
            }
        } else {
            None
        };
        out.extend(self.solver.problems(grid.as_ref()));
        if let Some(g) = grid {
            if out.is_empty() {
                match self.kind.initial_values(&g) {
                    Ok(v) => {
                        for (i, x) in v.iter().enumerate() {
                            if !(*x > 0.0 && x.is_finite()) {
                                out.push(format!("initial v0 = {x} is not positive at node {i} (r = {})", g.nodes()[i]));
                            }
                        }
                    }
                    Err(e) => out.push(e.to_string()),
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }

    /// Monitors requested by the scenario; the bracket uses `sup|R(g0)|` of the data.
    pub fn build_monitors(&self, v0: &ConformalField) -> Result<Vec<Box<dyn Monitor>>> {
        let mut out: Vec<Box<dyn Monitor>> = Vec::new();
        if let Some(b) = self.monitors.bracket {
            let sup = curvature_report(v0, 0.0)?.sup_abs;
            let m = BracketMonitor::new(sup, b.tol);
            out.push(Box::new(if b.fatal { m.fatal() } else { m }));
        }
        if let Some(m) = &self.monitors.mass {
            out.push(Box::new(MassMonitor::new(m.radii.clone(), m.tol)));
        }
        if let Some(d) = self.monitors.decay {
            let tau0 = d
                .tau0
                .or_else(|| self.kind.tail_order(self.n))
                .ok_or_else(|| Error::Config(vec!["monitors.decay.tau0 is required for this profile".into()]))?;
            out.push(Box::new(DecayMonitor::new(tau0, d.r_asym, d.factor)));
        }
        if let Some(c) = self.monitors.curvature_sign {
            out.push(Box::new(CurvatureSignMonitor::new(c.tol)));
        }
        Ok(out)
    }

    /// Evolves the scenario with its monitors.
    pub fn evolve(&self) -> Result<FlowTrajectory> {
        self.validate()?;
        let v0 = self.initial_field()?;
        let mut monitors = self.build_monitors(&v0)?;
        let state = FlowState::new(v0, 0.0, self.solver.form.time_tag())?;
        evolve(state, &self.solver, self.t_end, &self.output.snapshots, &mut monitors)
    }

    /// Same scenario on another grid, with the boundary re-pinned to the new `v0`
    /// when it was pinned to the old one.
    pub fn with_grid(&self, grid: GridSpec) -> Result<Self> {
        let old = self.initial_field()?;
        let old_bc = Boundary::from_initial(&old);
        let mut s = self.clone();
        s.grid = grid;
        if self.solver.boundary == old_bc {
            let v0 = s.initial_field()?;
            s.solver.boundary = Boundary::from_initial(&v0);
        }
        Ok(s)
    }
}
