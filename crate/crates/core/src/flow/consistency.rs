use serde::{Deserialize, Serialize};

use super::{evolve, time_rescale_factor, Boundary, FlowState, Form, SnapshotPlan, SolverConfig};
use crate::error::{Error, Result};
use crate::field::ConformalField;

/// Comparison of the u-form at rescaled time `c s` with the w-form at
/// geometric time `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormConsistency {
    pub s: f64,
    pub rescale: f64,
    /// Plain difference on the coarse grid.
    pub raw_coarse: f64,
    /// Plain difference on the refined grid (at coarse nodes).
    pub raw_fine: f64,
    /// Difference of the Richardson-extrapolated solutions `(4 V_fine - V_coarse)/3`.
    pub extrapolated: f64,
}

fn final_values(v0: &ConformalField, form: Form, t_end: f64, dt: f64) -> Result<Vec<f64>> {
    let cfg = SolverConfig::new(dt, Boundary::from_initial(v0)).with_form(form);
    let state = FlowState::new(v0.clone(), 0.0, form.time_tag())?;
    let traj = evolve(state, &cfg, t_end, &SnapshotPlan::Equispaced(2), &mut [])?;
    Ok(traj.snapshots.last().map(|s| s.values.clone()).unwrap_or_default())
}

/// Runs both forms from the same data on a grid and its nested refinement
/// (`dt` and `dt/4`, so temporal and spatial errors both drop by 4).
/// `fine` must be the same profile sampled on `coarse.grid().refined()`.
pub fn form_consistency(coarse: &ConformalField, fine: &ConformalField, s: f64, dt: f64) -> Result<FormConsistency> {
    let refined = coarse.grid().refined()?;
    if **fine.grid() != refined {
        return Err(Error::Domain("fine field must live on the nested refinement of the coarse grid".into()));
    }
    let c = time_rescale_factor(&coarse.grid().constants());
    let uc = final_values(coarse, Form::U, c * s, c * dt)?;
    let wc = final_values(coarse, Form::W, s, dt)?;
    let uf = final_values(fine, Form::U, c * s, c * dt / 4.0)?;
    let wf = final_values(fine, Form::W, s, dt / 4.0)?;
    let mut raw_coarse = 0.0_f64;
    let mut raw_fine = 0.0_f64;
    let mut extrapolated = 0.0_f64;
    for i in 0..uc.len() {
        let dc = uc[i] - wc[i];
        let df = uf[2 * i] - wf[2 * i];
        raw_coarse = raw_coarse.max(dc.abs());
        raw_fine = raw_fine.max(df.abs());
        extrapolated = extrapolated.max(((4.0 * df - dc) / 3.0).abs());
    }
    Ok(FormConsistency {
        s,
        rescale: c,
        raw_coarse,
        raw_fine,
        extrapolated,
    })
}
