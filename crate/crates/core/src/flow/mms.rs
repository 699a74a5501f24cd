//! Manufactured-solution convergence studies and the Frechet check of the
//! w-form linearization.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{
    evolve_forced, newton_linearization, rhs_w_form, Boundary, FlowState, Forcing, Form, InnerBoundary,
    OuterBoundary, SnapshotPlan, SolverConfig,
};
use crate::error::Result;
use crate::field::ConformalField;
use crate::geometry::active_nodes;
use crate::grid::{Constants, RadialGrid};

/// `v*(r, t) = 1 + A e^{-t} e^{-r^2}` with the source that makes it an exact
/// solution of the chosen form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManufacturedSolution {
    pub consts: Constants,
    pub amplitude: f64,
    pub form: Form,
}

impl ManufacturedSolution {
    pub fn value(&self, r: f64, t: f64) -> f64 {
        1.0 + self.amplitude * (-t - r * r).exp()
    }

    /// `(v, v_r, Delta v, v_t)`.
    fn jet(&self, r: f64, t: f64) -> (f64, f64, f64, f64) {
        let e = self.amplitude * (-t - r * r).exp();
        let nf = self.consts.nf();
        (1.0 + e, -2.0 * r * e, (4.0 * r * r - 2.0 * nf) * e, -e)
    }
}

impl Forcing for ManufacturedSolution {
    fn source(&self, r: f64, t: f64) -> f64 {
        let (v, vr, lap, vt) = self.jet(r, t);
        match self.form {
            Form::U => {
                let p = self.consts.p();
                p * v.powf(p - 1.0) * vt - lap
            }
            Form::W => {
                let q = self.consts.metric_exponent();
                let w = v.powf(q);
                let wt = q * v.powf(q - 1.0) * vt;
                let wr = q * v.powf(q - 1.0) * vr;
                let lap_w = q * (q - 1.0) * v.powf(q - 2.0) * vr * vr + q * v.powf(q - 1.0) * lap;
                let nf = self.consts.nf();
                let b = (nf - 1.0) * (lap_w / w + (nf - 6.0) / 4.0 * wr * wr / (w * w));
                wt - b
            }
        }
    }

    fn boundary(&self, t: f64) -> Option<(Option<f64>, f64)> {
        Some((None, self.value(MMS_RADIUS, t)))
    }
}

const MMS_RADIUS: f64 = 4.0;
const MMS_AMPLITUDE: f64 = 0.5;
const MMS_T_END: f64 = 0.2;

/// Errors of a sequence of runs and the observed orders between neighbours.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStudy {
    /// Mesh width or time step of each run.
    pub steps: Vec<f64>,
    pub errors: Vec<f64>,
    pub orders: Vec<f64>,
}

impl OrderStudy {
    fn new(steps: Vec<f64>, errors: Vec<f64>) -> Self {
        let orders = errors
            .windows(2)
            .zip(steps.windows(2))
            .map(|(e, h)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
            .collect();
        OrderStudy { steps, errors, orders }
    }

    /// Order between the two finest runs.
    pub fn final_order(&self) -> f64 {
        self.orders.last().copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmsReport {
    pub n: usize,
    pub form: Form,
    /// Error against `v*` with `dt` proportional to `h^2`.
    pub spatial: OrderStudy,
    /// Differences of successive `dt` halvings on a fixed fine grid.
    pub temporal: OrderStudy,
}

fn solve(ms: &ManufacturedSolution, nodes: usize, dt: f64) -> Result<Vec<f64>> {
    let grid = Arc::new(RadialGrid::uniform(ms.consts.n(), 0.0, MMS_RADIUS, nodes)?);
    let v0 = ConformalField::from_fn(grid, |r| ms.value(r, 0.0))?;
    let cfg = SolverConfig::new(
        dt,
        Boundary {
            inner: InnerBoundary::OriginRegular,
            outer: OuterBoundary::Dirichlet(ms.value(MMS_RADIUS, 0.0)),
        },
    )
    .with_form(ms.form);
    let state = FlowState::new(v0, 0.0, ms.form.time_tag())?;
    let traj = evolve_forced(state, &cfg, MMS_T_END, &SnapshotPlan::Equispaced(2), &mut [], Some(ms))?;
    Ok(traj.snapshots.last().map(|s| s.values.clone()).unwrap_or_default())
}

/// Spatial and temporal refinement study of implicit Euler on `[0, 4]`.
pub fn manufactured_study(n: usize, refinements: usize, form: Form) -> Result<MmsReport> {
    let consts = Constants::new(n)?;
    let ms = ManufacturedSolution {
        consts,
        amplitude: MMS_AMPLITUDE,
        form,
    };
    let levels = refinements.max(2);

    let mut hs = Vec::new();
    let mut errs = Vec::new();
    for k in 0..levels {
        let cells = 20usize << k;
        let h = MMS_RADIUS / cells as f64;
        let v = solve(&ms, cells + 1, 0.1 * h * h)?;
        let err = v
            .iter()
            .enumerate()
            .map(|(i, x)| (x - ms.value(i as f64 * h, MMS_T_END)).abs())
            .fold(0.0, f64::max);
        hs.push(h);
        errs.push(err);
    }

    let fine_nodes = 161;
    let mut dts = Vec::new();
    let mut diffs = Vec::new();
    let mut prev = solve(&ms, fine_nodes, 0.02)?;
    for k in 1..=levels {
        let dt = 0.02 / (1u32 << k) as f64;
        let v = solve(&ms, fine_nodes, dt)?;
        let d = v.iter().zip(&prev).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        dts.push(2.0 * dt);
        diffs.push(d);
        prev = v;
    }
    Ok(MmsReport {
        n,
        form,
        spatial: OrderStudy::new(hs, errs),
        temporal: OrderStudy::new(dts, diffs),
    })
}

/// `max |(B[w + eps phi] - B[w]) / eps - L(w) phi|` over active nodes, for
/// each `eps`.
pub fn linearization_check(grid: &RadialGrid, w: &[f64], phi: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    let consts = grid.constants();
    let zero = vec![0.0; grid.len()];
    let base = rhs_w_form(grid, w, &zero, &consts)?;
    let lin = newton_linearization(grid, w, &consts)?.apply(phi);
    eps.iter()
        .map(|&e| {
            let shifted: Vec<f64> = w.iter().zip(phi).map(|(a, b)| a + e * b).collect();
            let b = rhs_w_form(grid, &shifted, &zero, &consts)?;
            Ok(active_nodes(grid)
                .map(|i| ((b[i] - base[i]) / e - lin[i]).abs())
                .fold(0.0, f64::max))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frechet_residual_is_first_order() {
        let g = RadialGrid::geometric(3, 0.0, 10.0, 60, 1.04).unwrap();
        let w = g.sample(|r| 1.0 + 0.5 * (-r * r / 3.0).exp());
        let phi = g.sample(|r| (0.7 * r).cos() / (1.0 + r * r));
        let eps = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6];
        let res = linearization_check(&g, &w, &phi, &eps).unwrap();
        for k in 0..eps.len() - 1 {
            let order = (res[k] / res[k + 1]).log10();
            assert!((order - 1.0).abs() < 0.1, "{res:?}");
        }
    }

    #[test]
    fn sources_vanish_for_the_flat_solution() {
        let ms = ManufacturedSolution {
            consts: Constants::new(3).unwrap(),
            amplitude: 0.0,
            form: Form::W,
        };
        assert_eq!(ms.source(1.3, 0.2), 0.0);
    }
}
