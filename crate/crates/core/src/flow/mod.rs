//! Time integration of the flow `d/dt g = -R g` for `g = v^{4/(n-2)} delta`.
//!
//! Two equivalent forms are integrated:
//!
//! * u-form, `d/ds v^p = Delta v` (rescaled time `s`);
//! * w-form, `d/dt w = B[w]` with `w = v^{4/(n-2)}` (geometric time `t`),
//!   `B[w] = (n-1) (Delta w / w + (n-6)/4 |grad w|^2 / w^2) - R0`, where `R0`
//!   is the scalar curvature of the flat background (zero).
//!
//! Geometric and rescaled time are related by `s = c t`,
//! `c = `[`time_rescale_factor`].

mod bracket;
mod certificate;
mod consistency;
mod mms;
mod monitor;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{check_positive, ConformalField};
use crate::geometry;
use crate::grid::{Constants, RadialGrid};
use crate::observables::ObservableSeries;
use crate::stencil::Tridiagonal;

pub use bracket::{
    bracket_report, guaranteed_existence_time, maximum_principle_bracket, sup_abs_curvature, time_rescale_factor,
    Bracket, BracketReport,
};
pub use certificate::{fine_solution_certificate, fine_solution_certificate_with, CertificateThresholds, FineSolutionCertificate};
pub use consistency::{form_consistency, FormConsistency};
pub use mms::{linearization_check, manufactured_study, ManufacturedSolution, MmsReport, OrderStudy};
pub use monitor::{Monitor, MonitorEvent, MonitorStatus, SnapshotView};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeTag {
    /// Rescaled time of the u-form.
    UForm,
    Geometric,
}

/// Which equation is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Form {
    #[default]
    U,
    W,
}

impl Form {
    pub fn time_tag(self) -> TimeTag {
        match self {
            Form::U => TimeTag::UForm,
            Form::W => TimeTag::Geometric,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ExplicitEuler,
    #[default]
    ImplicitEulerNewton,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerBoundary {
    /// `v_r(0) = 0`; requires a grid starting at the origin.
    OriginRegular,
    Dirichlet(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterBoundary {
    Dirichlet(f64),
}

impl OuterBoundary {
    pub fn value(self) -> f64 {
        match self {
            OuterBoundary::Dirichlet(v) => v,
        }
    }
}

/// Boundary values are values of `v`, whatever form is integrated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Boundary {
    pub inner: InnerBoundary,
    pub outer: OuterBoundary,
}

impl Boundary {
    /// Pins both ends to the initial data (origin regularity when the grid
    /// starts at `r = 0`).
    pub fn from_initial(v0: &ConformalField) -> Self {
        let v = v0.values();
        let inner = if v0.grid().has_origin() {
            InnerBoundary::OriginRegular
        } else {
            InnerBoundary::Dirichlet(v[0])
        };
        Boundary {
            inner,
            outer: OuterBoundary::Dirichlet(v[v.len() - 1]),
        }
    }

    fn inner_value(&self) -> Option<f64> {
        match self.inner {
            InnerBoundary::OriginRegular => None,
            InnerBoundary::Dirichlet(v) => Some(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub form: Form,
    #[serde(default)]
    pub scheme: Scheme,
    pub dt: f64,
    #[serde(default = "default_cfl_safety")]
    pub cfl_safety: f64,
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_newton_max_iter")]
    pub newton_max_iter: usize,
    pub boundary: Boundary,
}

fn default_cfl_safety() -> f64 {
    0.5
}

fn default_newton_tol() -> f64 {
    1e-10
}

fn default_newton_max_iter() -> usize {
    25
}

impl SolverConfig {
    /// Implicit u-form stepping with default tolerances.
    pub fn new(dt: f64, boundary: Boundary) -> Self {
        SolverConfig {
            form: Form::U,
            scheme: Scheme::ImplicitEulerNewton,
            dt,
            cfl_safety: default_cfl_safety(),
            newton_tol: default_newton_tol(),
            newton_max_iter: default_newton_max_iter(),
            boundary,
        }
    }

    pub fn with_form(mut self, form: Form) -> Self {
        self.form = form;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    /// All violated constraints, as human-readable messages. With a grid,
    /// the boundary kinds are checked against its inner end.
    pub fn problems(&self, grid: Option<&RadialGrid>) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            out.push(format!("dt = {} must be positive and finite", self.dt));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            out.push(format!("cfl_safety = {} must lie in (0, 1]", self.cfl_safety));
        }
        if !(self.newton_tol > 0.0 && self.newton_tol.is_finite()) {
            out.push(format!("newton_tol = {} must be positive", self.newton_tol));
        }
        if self.newton_max_iter == 0 {
            out.push("newton_max_iter must be at least 1".into());
        }
        if let InnerBoundary::Dirichlet(v) = self.boundary.inner {
            if !(v > 0.0 && v.is_finite()) {
                out.push(format!("inner Dirichlet value {v} must be positive"));
            }
        }
        let outer = self.boundary.outer.value();
        if !(outer > 0.0 && outer.is_finite()) {
            out.push(format!("outer Dirichlet value {outer} must be positive"));
        }
        if let Some(g) = grid {
            match self.boundary.inner {
                InnerBoundary::OriginRegular if !g.has_origin() => out.push(format!(
                    "origin-regular inner boundary needs a grid starting at r = 0 (r_inner = {})",
                    g.r_inner()
                )),
                InnerBoundary::Dirichlet(_) if g.has_origin() => {
                    out.push("inner Dirichlet condition at r = 0; use origin_regular".into())
                }
                _ => {}
            }
        }
        out
    }

    pub fn validate(&self, grid: &RadialGrid) -> Result<()> {
        let p = self.problems(Some(grid));
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(p))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub v: ConformalField,
    pub t: f64,
    pub tag: TimeTag,
}

impl FlowState {
    pub fn new(v: ConformalField, t: f64, tag: TimeTag) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("time {t} must be finite and nonnegative")));
        }
        Ok(FlowState { v, t, tag })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        self.v.grid()
    }
}

/// Diagnostics of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepReport {
    pub dt: f64,
    pub newton_iterations: usize,
    /// Final scaled Newton residual (zero for explicit steps).
    pub residual: f64,
}

/// Source terms and time-dependent boundary data, used by manufactured
/// solutions.
pub trait Forcing: Sync {
    /// Added to the right side: to `d/ds v^p` (u-form) or `d/dt w` (w-form).
    fn source(&self, r: f64, t: f64) -> f64;

    /// Boundary values of `v` at time `t`, overriding the configured ones.
    fn boundary(&self, _t: f64) -> Option<(Option<f64>, f64)> {
        None
    }
}

/// `v_s = (1/p) v^{1-p} Delta v` nodewise (endpoint values are one-sided).
pub fn rhs_u_form(v: &ConformalField, consts: &Constants) -> Result<Vec<f64>> {
    check_dimension(v.grid(), consts)?;
    let lap = geometry::radial_laplacian(v.grid(), v.values())?;
    let p = consts.p();
    Ok(lap
        .iter()
        .zip(v.values())
        .map(|(l, vi)| vi.powf(1.0 - p) * l / p)
        .collect())
}

/// `B[w]` nodewise.
pub fn rhs_w_form(grid: &RadialGrid, w: &[f64], r0: &[f64], consts: &Constants) -> Result<Vec<f64>> {
    check_dimension(grid, consts)?;
    if r0.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: r0.len(),
        });
    }
    check_positive(grid.nodes(), w)?;
    let lap = geometry::radial_laplacian(grid, w)?;
    let grad = geometry::radial_gradient(grid, w)?;
    let n1 = consts.nf() - 1.0;
    let k = (consts.nf() - 6.0) / 4.0;
    Ok((0..grid.len())
        .map(|i| n1 * (lap[i] / w[i] + k * grad[i] * grad[i] / (w[i] * w[i])) - r0[i])
        .collect())
}

/// Tridiagonal discretization of the linearization of `B` at `w`:
/// `(n-1) (Delta phi / w - Delta w / w^2 phi - (n-6)/2 |grad w|^2 / w^3 phi
///  + (n-6)/(2 w^2) <grad w, grad phi>)`.
///
/// It is the exact Jacobian of the discrete `B` on active rows; boundary
/// rows are zero.
pub fn newton_linearization(grid: &RadialGrid, w: &[f64], consts: &Constants) -> Result<Tridiagonal> {
    check_dimension(grid, consts)?;
    if w.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: w.len(),
        });
    }
    check_positive(grid.nodes(), w)?;
    Ok(w_jacobian(grid, w, consts))
}

fn check_dimension(grid: &RadialGrid, consts: &Constants) -> Result<()> {
    if grid.n() != consts.n() {
        return Err(Error::Domain(format!(
            "constants for n = {} used on a grid of dimension {}",
            consts.n(),
            grid.n()
        )));
    }
    Ok(())
}

/// Interior/origin rows of the discrete Laplacian in difference form.
fn lap_active(l: &Tridiagonal, f: &[f64], i: usize) -> f64 {
    let mut s = 0.0;
    if i > 0 {
        s += l.lower[i] * (f[i - 1] - f[i]);
    }
    if i + 1 < f.len() {
        s += l.upper[i] * (f[i + 1] - f[i]);
    }
    s
}

fn grad_active(d: &Tridiagonal, f: &[f64], i: usize) -> f64 {
    let mut s = d.diag[i] * f[i];
    if i > 0 {
        s += d.lower[i] * f[i - 1];
    }
    if i + 1 < f.len() {
        s += d.upper[i] * f[i + 1];
    }
    s
}

fn active_range(grid: &RadialGrid) -> std::ops::Range<usize> {
    geometry::active_nodes(grid)
}

fn b_active(grid: &RadialGrid, w: &[f64], consts: &Constants, i: usize) -> f64 {
    let n1 = consts.nf() - 1.0;
    let k = (consts.nf() - 6.0) / 4.0;
    let lap = lap_active(grid.laplacian_matrix(), w, i);
    let d = grad_active(grid.gradient_matrix(), w, i);
    n1 * (lap / w[i] + k * d * d / (w[i] * w[i]))
}

fn w_jacobian(grid: &RadialGrid, w: &[f64], consts: &Constants) -> Tridiagonal {
    let n1 = consts.nf() - 1.0;
    let k2 = (consts.nf() - 6.0) / 2.0;
    let l = grid.laplacian_matrix();
    let g = grid.gradient_matrix();
    let mut j = Tridiagonal::zeros(grid.len());
    for i in active_range(grid) {
        let wi = w[i];
        let lap = lap_active(l, w, i);
        let d = grad_active(g, w, i);
        let cross = k2 * d / (wi * wi);
        j.lower[i] = n1 * (l.lower[i] / wi + cross * g.lower[i]);
        j.upper[i] = n1 * (l.upper[i] / wi + cross * g.upper[i]);
        j.diag[i] = n1 * (l.diag[i] / wi - lap / (wi * wi) - k2 * d * d / (wi * wi * wi) + cross * g.diag[i]);
    }
    j
}

/// The unknown actually stepped: `v` for the u-form, `w` for the w-form.
fn to_unknown(form: Form, consts: &Constants, v: f64) -> f64 {
    match form {
        Form::U => v,
        Form::W => v.powf(consts.metric_exponent()),
    }
}

fn from_unknown(form: Form, consts: &Constants, y: f64) -> f64 {
    match form {
        Form::U => y,
        Form::W => y.powf(1.0 / consts.metric_exponent()),
    }
}

struct Stage<'a> {
    grid: &'a RadialGrid,
    consts: Constants,
    cfg: &'a SolverConfig,
    forcing: Option<&'a dyn Forcing>,
}

impl Stage<'_> {
    fn boundary_at(&self, t: f64) -> (Option<f64>, f64) {
        self.forcing
            .and_then(|f| f.boundary(t))
            .unwrap_or((self.cfg.boundary.inner_value(), self.cfg.boundary.outer.value()))
    }

    fn source(&self, t: f64) -> Option<Vec<f64>> {
        self.forcing.map(|f| self.grid.nodes().iter().map(|&r| f.source(r, t)).collect())
    }

    fn pin(&self, y: &mut [f64], t: f64) {
        let (inner, outer) = self.boundary_at(t);
        let form = self.cfg.form;
        if let Some(b) = inner {
            y[0] = to_unknown(form, &self.consts, b);
        }
        let last = y.len() - 1;
        y[last] = to_unknown(form, &self.consts, outer);
    }

    fn explicit(&self, y: &[f64], t: f64, dt: f64) -> Result<Vec<f64>> {
        let l = self.grid.laplacian_matrix();
        let src = self.source(t);
        let mut out = y.to_vec();
        match self.cfg.form {
            Form::U => {
                let p = self.consts.p();
                let mut limit = f64::INFINITY;
                for i in active_range(self.grid) {
                    limit = limit.min(p * y[i].powf(p - 1.0) / l.diag[i].abs());
                }
                let limit = self.cfg.cfl_safety * limit;
                if dt > limit {
                    return Err(Error::Cfl { dt, limit });
                }
                for i in active_range(self.grid) {
                    let s = src.as_ref().map_or(0.0, |s| s[i]);
                    let z = y[i].powf(p) + dt * (lap_active(l, y, i) + s);
                    if !(z > 0.0) {
                        return Err(self.positivity(i, z));
                    }
                    out[i] = z.powf(1.0 / p);
                }
            }
            Form::W => {
                let n1 = self.consts.nf() - 1.0;
                let mut limit = f64::INFINITY;
                for i in active_range(self.grid) {
                    limit = limit.min(y[i] / (n1 * l.diag[i].abs()));
                }
                let limit = self.cfg.cfl_safety * limit;
                if dt > limit {
                    return Err(Error::Cfl { dt, limit });
                }
                for i in active_range(self.grid) {
                    let s = src.as_ref().map_or(0.0, |s| s[i]);
                    out[i] = y[i] + dt * (b_active(self.grid, y, &self.consts, i) + s);
                }
            }
        }
        self.pin(&mut out, t + dt);
        Ok(out)
    }

    /// Residual of the implicit stage equation and its scale.
    fn residual(&self, y: &[f64], old: &[f64], dt: f64, src: &Option<Vec<f64>>, bnd: &[f64]) -> Vec<f64> {
        let l = self.grid.laplacian_matrix();
        let mut f: Vec<f64> = y.iter().zip(bnd).map(|(a, b)| a - b).collect();
        let p = self.consts.p();
        for i in active_range(self.grid) {
            let s = src.as_ref().map_or(0.0, |s| s[i]);
            f[i] = match self.cfg.form {
                Form::U => y[i].powf(p) - old[i].powf(p) - dt * (lap_active(l, y, i) + s),
                Form::W => y[i] - old[i] - dt * (b_active(self.grid, y, &self.consts, i) + s),
            };
        }
        f
    }

    fn jacobian(&self, y: &[f64], dt: f64) -> Tridiagonal {
        let mut j = match self.cfg.form {
            Form::U => {
                let l = self.grid.laplacian_matrix();
                let p = self.consts.p();
                let mut j = Tridiagonal::zeros(y.len());
                for i in active_range(self.grid) {
                    j.lower[i] = -dt * l.lower[i];
                    j.upper[i] = -dt * l.upper[i];
                    j.diag[i] = p * y[i].powf(p - 1.0) - dt * l.diag[i];
                }
                j
            }
            Form::W => {
                let mut j = w_jacobian(self.grid, y, &self.consts);
                for i in 0..y.len() {
                    j.lower[i] *= -dt;
                    j.upper[i] *= -dt;
                    j.diag[i] = 1.0 - dt * j.diag[i];
                }
                j
            }
        };
        let active = active_range(self.grid);
        for i in 0..y.len() {
            if !active.contains(&i) {
                j.pin_row(i);
            }
        }
        j
    }

    fn implicit(&self, y_old: &[f64], t: f64, dt: f64) -> Result<(Vec<f64>, usize, f64)> {
        let src = self.source(t + dt);
        let mut bnd = y_old.to_vec();
        self.pin(&mut bnd, t + dt);
        let scale = match self.cfg.form {
            Form::U => {
                let p = self.consts.p();
                y_old.iter().fold(1.0_f64, |m, v| m.max(v.powf(p)))
            }
            Form::W => y_old.iter().fold(1.0_f64, |m, v| m.max(*v)),
        };
        let norm = |f: &[f64]| f.iter().fold(0.0_f64, |m, x| m.max(x.abs())) / scale;
        // residuals cannot drop below the roundoff of the dt * L y terms
        let stiffness = {
            let l = self.grid.laplacian_matrix();
            let diag = active_range(self.grid).fold(0.0_f64, |m, i| m.max(l.diag[i].abs()));
            let ymax = y_old.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            let factor = match self.cfg.form {
                Form::U => 1.0,
                Form::W => self.consts.nf() - 1.0,
            };
            factor * dt * diag * ymax / scale
        };
        let tol = self.cfg.newton_tol.max(64.0 * f64::EPSILON * stiffness);

        let mut y = bnd.clone();
        let mut f = self.residual(&y, y_old, dt, &src, &bnd);
        let mut res = norm(&f);
        let mut iterations = 0;
        while res > tol {
            if iterations == self.cfg.newton_max_iter {
                return Err(Error::NewtonFailed {
                    iterations,
                    residual: res,
                });
            }
            iterations += 1;
            let j = self.jacobian(&y, dt);
            let rhs: Vec<f64> = f.iter().map(|x| -x).collect();
            let delta = j.solve(&rhs)?;
            let mut lambda = 1.0;
            let mut halvings = 0;
            loop {
                let trial: Vec<f64> = y.iter().zip(&delta).map(|(a, d)| a + lambda * d).collect();
                let positive = trial.iter().all(|x| *x > 0.0);
                if positive {
                    let ft = self.residual(&trial, y_old, dt, &src, &bnd);
                    let rt = norm(&ft);
                    if rt.is_finite() && (rt < res || halvings == 5) {
                        y = trial;
                        f = ft;
                        res = rt;
                        break;
                    }
                }
                if halvings == 5 {
                    return Err(Error::NewtonFailed {
                        iterations,
                        residual: res,
                    });
                }
                lambda *= 0.5;
                halvings += 1;
            }
        }
        Ok((y, iterations, res))
    }

    fn positivity(&self, i: usize, value: f64) -> Error {
        Error::PositivityLost {
            index: i,
            r: self.grid.nodes()[i],
            value,
        }
    }
}

/// Advances one step of size `cfg.dt`.
pub fn step(state: &FlowState, cfg: &SolverConfig, consts: &Constants) -> Result<FlowState> {
    step_detailed(state, cfg, consts, cfg.dt, None).map(|(s, _)| s)
}

/// One step of size `dt` with optional forcing; returns the Newton diagnostics.
pub fn step_detailed(
    state: &FlowState,
    cfg: &SolverConfig,
    consts: &Constants,
    dt: f64,
    forcing: Option<&dyn Forcing>,
) -> Result<(FlowState, StepReport)> {
    let grid = state.grid();
    check_dimension(grid, consts)?;
    if state.tag != cfg.form.time_tag() {
        return Err(Error::Domain(format!(
            "state carries {:?} time but the solver integrates the {:?}-form",
            state.tag, cfg.form
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain(format!("time step {dt} must be positive")));
    }
    cfg.validate(grid)?;
    let stage = Stage {
        grid,
        consts: *consts,
        cfg,
        forcing,
    };
    let y: Vec<f64> = state
        .v
        .values()
        .iter()
        .map(|&v| to_unknown(cfg.form, consts, v))
        .collect();
    let (y_new, report) = match cfg.scheme {
        Scheme::ExplicitEuler => (
            stage.explicit(&y, state.t, dt)?,
            StepReport {
                dt,
                newton_iterations: 0,
                residual: 0.0,
            },
        ),
        Scheme::ImplicitEulerNewton => {
            let (y, newton_iterations, residual) = stage.implicit(&y, state.t, dt)?;
            (
                y,
                StepReport {
                    dt,
                    newton_iterations,
                    residual,
                },
            )
        }
    };
    let values: Vec<f64> = y_new.iter().map(|&x| from_unknown(cfg.form, consts, x)).collect();
    if let Some(i) = values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(stage.positivity(i, values[i]));
    }
    let v = ConformalField::new(grid.clone(), values)?;
    Ok((
        FlowState {
            v,
            t: state.t + dt,
            tag: state.tag,
        },
        report,
    ))
}

/// When snapshots (and monitor observations) are taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotPlan {
    /// Every `interval` time units, plus the final time.
    Every(f64),
    /// `count` equispaced times in `[t0, t_end]`, both included (`count >= 2`).
    Equispaced(usize),
    /// Explicit times; the start and final times are always added.
    Times(Vec<f64>),
}

impl SnapshotPlan {
    fn times(&self, t0: f64, t_end: f64) -> Vec<f64> {
        let mut ts = vec![t0];
        match self {
            SnapshotPlan::Every(dt) if *dt > 0.0 => {
                let count = ((t_end - t0) / dt - 1e-9).ceil().max(0.0) as usize;
                ts.extend((1..count).map(|k| t0 + k as f64 * dt));
            }
            SnapshotPlan::Every(_) => {}
            SnapshotPlan::Equispaced(count) => {
                let count = (*count).max(2);
                ts.extend((1..count - 1).map(|k| t0 + (t_end - t0) * k as f64 / (count - 1) as f64));
            }
            SnapshotPlan::Times(list) => ts.extend(list.iter().copied().filter(|&t| t > t0 && t < t_end)),
        }
        ts.push(t_end);
        ts.sort_by(|a, b| a.total_cmp(b));
        ts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * b.abs().max(1.0));
        ts
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    /// Samples of `v`; not validated, so failed or synthetic states can be stored.
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RunStats {
    pub steps: usize,
    pub newton_iterations: usize,
    pub max_newton_residual: f64,
}

/// Ordered snapshots of one run plus everything the monitors recorded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTrajectory {
    pub grid: Arc<RadialGrid>,
    pub tag: TimeTag,
    pub snapshots: Vec<Snapshot>,
    pub series: Vec<ObservableSeries>,
    pub events: Vec<MonitorEvent>,
    /// Reason for an early stop requested by a monitor.
    pub aborted: Option<String>,
    pub stats: RunStats,
}

impl FlowTrajectory {
    pub fn empty(grid: Arc<RadialGrid>, tag: TimeTag) -> Self {
        FlowTrajectory {
            grid,
            tag,
            snapshots: Vec::new(),
            series: Vec::new(),
            events: Vec::new(),
            aborted: None,
            stats: RunStats::default(),
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    /// Snapshot `k` as a validated field.
    pub fn field(&self, k: usize) -> Result<ConformalField> {
        ConformalField::new(self.grid.clone(), self.snapshots[k].values.clone())
    }

    pub fn initial(&self) -> Result<ConformalField> {
        self.field(0)
    }

    pub fn last(&self) -> Result<ConformalField> {
        self.field(self.snapshots.len() - 1)
    }

    /// Converts snapshot time to rescaled (u-form) time.
    pub fn u_time(&self, t: f64) -> f64 {
        match self.tag {
            TimeTag::UForm => t,
            TimeTag::Geometric => t * time_rescale_factor(&self.grid.constants()),
        }
    }

    pub fn series_named(&self, name: &str) -> Option<&ObservableSeries> {
        self.series.iter().find(|s| s.name == name)
    }

    /// Whether any monitor reported a failure or requested an abort.
    pub fn failed_monitors(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .events
            .iter()
            .filter(|e| matches!(e.status, MonitorStatus::Fail | MonitorStatus::Fatal))
            .map(|e| e.monitor.clone())
            .collect();
        names.sort();
        names.dedup();
        names
    }
}

/// Steps from `state.t` to `t_end`, landing exactly on every snapshot time.
pub fn evolve(
    state: FlowState,
    cfg: &SolverConfig,
    t_end: f64,
    plan: &SnapshotPlan,
    monitors: &mut [Box<dyn Monitor>],
) -> Result<FlowTrajectory> {
    evolve_forced(state, cfg, t_end, plan, monitors, None)
}

pub(crate) fn evolve_forced(
    state: FlowState,
    cfg: &SolverConfig,
    t_end: f64,
    plan: &SnapshotPlan,
    monitors: &mut [Box<dyn Monitor>],
    forcing: Option<&dyn Forcing>,
) -> Result<FlowTrajectory> {
    if !(t_end >= state.t && t_end.is_finite()) {
        return Err(Error::Domain(format!(
            "t_end = {t_end} must not precede the start time {}",
            state.t
        )));
    }
    let consts = state.grid().constants();
    cfg.validate(state.grid())?;
    let mut traj = FlowTrajectory::empty(state.grid().clone(), state.tag);
    let v0 = state.v.clone();
    let times = plan.times(state.t, t_end);
    let mut state = state;

    for (k, &target) in times.iter().enumerate() {
        if k > 0 {
            while state.t < target {
                let remaining = target - state.t;
                let dt = if remaining <= cfg.dt * (1.0 + 1e-9) {
                    remaining
                } else {
                    cfg.dt
                };
                let (next, report) =
                    step_detailed(&state, cfg, &consts, dt, forcing).map_err(|e| e.at_time(state.t))?;
                state = next;
                if dt == remaining {
                    state.t = target;
                }
                traj.stats.steps += 1;
                traj.stats.newton_iterations += report.newton_iterations;
                traj.stats.max_newton_residual = traj.stats.max_newton_residual.max(report.residual);
            }
        }
        traj.snapshots.push(Snapshot {
            t: state.t,
            values: state.v.values().to_vec(),
        });
        let view = SnapshotView {
            t: state.t,
            tag: state.tag,
            v: &state.v,
            v0: &v0,
        };
        let mut fatal = None;
        for m in monitors.iter_mut() {
            let event = m.observe(&view)?;
            log::debug!("t = {} {} = {:e} ({:?})", event.t, event.monitor, event.value, event.status);
            if event.status == MonitorStatus::Fatal && fatal.is_none() {
                fatal = Some(format!("monitor {} declared a fatal violation at t = {}", event.monitor, event.t));
            }
            traj.events.push(event);
        }
        if let Some(reason) = fatal {
            log::warn!("{reason}");
            traj.aborted = Some(reason);
            break;
        }
    }
    for m in monitors.iter() {
        traj.series.extend(m.series());
    }
    Ok(traj)
}
