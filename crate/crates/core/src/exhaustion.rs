//! Dirichlet problems on nested balls `B(R_1) ⊂ B(R_2) ⊂ ...` and their
//! convergence on a fixed compact set.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{fmt_f64, ConformalField};
use crate::flow::{evolve, Boundary, FlowState, FlowTrajectory, OuterBoundary, SnapshotPlan, SolverConfig};
use crate::grid::RadialGrid;
use crate::scenario::Scenario;

/// Snapshot count used to compare domains.
pub const COMPARISON_SNAPSHOTS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ExhaustionPlan {
    pub domain_radii: Vec<f64>,
    pub compact_radius: f64,
    /// Supplies the profile, the grid spacing law and the inner boundary.
    pub scenario: Scenario,
}

impl ExhaustionPlan {
    pub fn new(scenario: Scenario, domain_radii: Vec<f64>, compact_radius: f64) -> Result<Self> {
        let plan = ExhaustionPlan {
            domain_radii,
            compact_radius,
            scenario,
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        let mut out = Vec::new();
        if self.domain_radii.is_empty() {
            out.push("at least one domain radius is required".to_string());
        }
        if self.domain_radii.windows(2).any(|w| !(w[1] > w[0])) {
            out.push(format!("domain radii {:?} must be strictly increasing", self.domain_radii));
        }
        if let Some(&first) = self.domain_radii.first() {
            if !(self.compact_radius < first) {
                out.push(format!(
                    "compact radius {} must be below the smallest domain radius {first}",
                    self.compact_radius
                ));
            }
        }
        if !(self.compact_radius > self.scenario.grid.r_inner) {
            out.push(format!(
                "compact radius {} must exceed r_inner = {}",
                self.compact_radius, self.scenario.grid.r_inner
            ));
        }
        if out.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(out))
        }
    }

    /// The scenario grid continued with its own spacing law to the largest radius.
    pub fn master_grid(&self) -> Result<RadialGrid> {
        let base = self.scenario.build_grid()?;
        base.extended_to(*self.domain_radii.last().unwrap_or(&base.r_outer()))
    }

    /// Grid of domain `m`: the master nodes up to the first one at or beyond `R_m`.
    pub fn domain_grid(&self, m: usize) -> Result<RadialGrid> {
        let r = *self
            .domain_radii
            .get(m)
            .ok_or_else(|| Error::Domain(format!("domain index {m} out of range")))?;
        self.master_grid()?.prefix_through(r)
    }
}

fn tagged<T>(m: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Exhaustion { m, source: Box::new(e) })
}

/// Runs the flow on domain `m` with `v = v0(R_m)` at the outer sphere.
/// The inner condition and stepping parameters come from `cfg`; its outer
/// value is replaced. Snapshots are [`COMPARISON_SNAPSHOTS`] equispaced times.
pub fn solve_on_domain(plan: &ExhaustionPlan, m: usize, t_end: f64, cfg: &SolverConfig) -> Result<FlowTrajectory> {
    tagged(m, (|| {
        let grid = Arc::new(plan.domain_grid(m)?);
        let values = plan.scenario.kind.initial_values(&grid)?;
        let v0 = ConformalField::new(grid, values)?;
        let mut cfg = cfg.clone();
        cfg.boundary = Boundary {
            inner: cfg.boundary.inner,
            outer: OuterBoundary::Dirichlet(*v0.values().last().unwrap()),
        };
        let state = FlowState::new(v0, 0.0, cfg.form.time_tag())?;
        evolve(state, &cfg, t_end, &SnapshotPlan::Equispaced(COMPARISON_SNAPSHOTS), &mut [])
    })())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustionRow {
    pub m: usize,
    /// Outer radius actually used (first grid node at or beyond the request).
    pub r_m: f64,
    /// `sup |v_m - v_{m+1}|` on the compact set and snapshot times.
    pub e_m: f64,
    /// `-log(e_m / e_{m-1}) / log(R_m / R_{m-1})`; absent for the first row.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustionTable {
    pub compact_radius: f64,
    pub t_end: f64,
    pub rows: Vec<ExhaustionRow>,
}

impl ExhaustionTable {
    pub fn errors(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.e_m).collect()
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].e_m < w[0].e_m)
    }

    /// Columns `m,R_m,e_m,rate`; the first rate is empty.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        w.write_record(["m", "R_m", "e_m", "rate"])?;
        for row in &self.rows {
            w.write_record([
                row.m.to_string(),
                fmt_f64(row.r_m),
                fmt_f64(row.e_m),
                row.rate.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "exhaustion on r <= {} over t in [0, {}]\n{:>3}  {:>12}  {:>14}  {:>8}\n",
            self.compact_radius, self.t_end, "m", "R_m", "e_m", "rate"
        );
        for row in &self.rows {
            s.push_str(&format!(
                "{:>3}  {:>12.6}  {:>14.6e}  {:>8}\n",
                row.m,
                row.r_m,
                row.e_m,
                row.rate.map(|r| format!("{r:.3}")).unwrap_or_else(|| "-".into())
            ));
        }
        s
    }
}

/// Solves all domains in parallel and tabulates consecutive differences on
/// the compact set. The rate is empirical; the construction only asserts
/// convergence.
pub fn exhaustion_study(plan: &ExhaustionPlan, t_end: f64, cfg: &SolverConfig) -> Result<ExhaustionTable> {
    plan.validate()?;
    if plan.domain_radii.len() < 3 {
        return Err(Error::Config(vec![format!(
            "an exhaustion study needs at least 3 domain radii, got {}",
            plan.domain_radii.len()
        )]));
    }
    let trajs: Vec<FlowTrajectory> = (0..plan.domain_radii.len())
        .into_par_iter()
        .map(|m| solve_on_domain(plan, m, t_end, cfg))
        .collect::<Result<_>>()?;
    // nodes with r <= compact_radius are shared by every domain
    let compact = trajs[0].grid.nodes().partition_point(|&r| r <= plan.compact_radius);
    let mut rows: Vec<ExhaustionRow> = Vec::new();
    for m in 0..trajs.len() - 1 {
        let (a, b) = (&trajs[m], &trajs[m + 1]);
        let mut e = 0.0_f64;
        for (sa, sb) in a.snapshots.iter().zip(&b.snapshots) {
            for i in 0..compact {
                e = e.max((sa.values[i] - sb.values[i]).abs());
            }
        }
        let r_m = a.grid.r_outer();
        let rate = rows.last().map(|prev| -(e / prev.e_m).ln() / (r_m / prev.r_m).ln());
        rows.push(ExhaustionRow { m, r_m, e_m: e, rate });
    }
    Ok(ExhaustionTable {
        compact_radius: plan.compact_radius,
        t_end,
        rows,
    })
}
