//! Time series measured on trajectories: ADM mass drift, decay of the tail,
//! curvature sign and convergence, and the subsolution hypothesis.

mod monitors;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use monitors::{BracketMonitor, CurvatureSignMonitor, DecayMonitor, MassMonitor};

use crate::error::{Error, Result};
use crate::field::{fmt_f64, ConformalField};
use crate::flow::{time_rescale_factor, FlowTrajectory, TimeTag};
use crate::geometry::{active_nodes, adm_mass, conformal_laplacian, scalar_curvature_values};
use crate::grid::{Constants, RadialGrid};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SeriesMetadata {
    pub grid: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A named scalar time series with strictly increasing times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub name: String,
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub metadata: SeriesMetadata,
}

impl ObservableSeries {
    pub fn new(name: impl Into<String>, metadata: SeriesMetadata) -> Self {
        ObservableSeries {
            name: name.into(),
            times: Vec::new(),
            values: Vec::new(),
            metadata,
        }
    }

    /// Appends a sample; times must increase strictly.
    pub fn push(&mut self, t: f64, value: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::Domain(format!(
                    "series {}: time {t} does not follow {last}",
                    self.name
                )));
            }
        }
        self.times.push(t);
        self.values.push(value);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// CSV with header `t,<name>`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(["t", self.name.as_str()])?;
        for (t, v) in self.times.iter().zip(&self.values) {
            w.write_record([fmt_f64(*t), fmt_f64(*v)])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Whitespace-separated two-column data with a `#` comment header.
    pub fn write_columns<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# t {}", self.name)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(out, "{} {}", fmt_f64(*t), fmt_f64(*v))?;
        }
        Ok(())
    }
}

pub fn grid_summary(grid: &RadialGrid) -> String {
    format!(
        "n={} nodes={} r=[{}, {}] {:?}",
        grid.n(),
        grid.len(),
        grid.r_inner(),
        grid.r_outer(),
        grid.stretch()
    )
}

fn geometric_time(traj: &FlowTrajectory, t: f64) -> f64 {
    match traj.tag {
        TimeTag::Geometric => t,
        TimeTag::UForm => t / time_rescale_factor(&traj.grid.constants()),
    }
}

/// ADM mass history of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassDrift {
    /// Extrapolated mass against geometric time.
    pub series: ObservableSeries,
    pub initial: f64,
    /// `max_t |m(t) - m(0)|`.
    pub max_drift: f64,
    /// Largest extrapolation error estimate over the snapshots.
    pub max_estimator_error: f64,
    /// False outside n = 3, 4, 5, where conservation is not asserted.
    pub conservation_asserted: bool,
    pub note: Option<String>,
}

pub fn mass_drift(traj: &FlowTrajectory, consts: &Constants, radii: &[f64]) -> Result<MassDrift> {
    let mut series = ObservableSeries::new(
        "adm_mass",
        SeriesMetadata {
            grid: grid_summary(&traj.grid),
            ..Default::default()
        },
    );
    let mut est_err = 0.0_f64;
    for k in 0..traj.snapshots.len() {
        let v = traj.field(k)?;
        let m = adm_mass(&v, consts, radii)?;
        est_err = est_err.max(m.error_estimate);
        series.push(geometric_time(traj, traj.snapshots[k].t), m.extrapolated)?;
    }
    let initial = series.values.first().copied().unwrap_or(0.0);
    let max_drift = series.values.iter().map(|m| (m - initial).abs()).fold(0.0, f64::max);
    let asserted = (3..=5).contains(&consts.n());
    let note = (!asserted).then(|| {
        format!(
            "n = {}: mass conservation is only asserted for n = 3, 4, 5; series reported without a verdict",
            consts.n()
        )
    });
    series.metadata.note = note.clone();
    Ok(MassDrift {
        series,
        initial,
        max_drift,
        max_estimator_error: est_err,
        conservation_asserted: asserted,
        note,
    })
}

/// Observed orders `log(e_k / e_{k+1}) / log(ratio)` of a refinement sequence.
pub fn refinement_orders(errors: &[f64], ratio: f64) -> Vec<f64> {
    errors.windows(2).map(|e| (e[0] / e[1]).ln() / ratio.ln()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// `sup_{r >= r_asym} r^{tau0} |v - 1|` per snapshot.
    pub series: ObservableSeries,
    pub initial: f64,
    pub sup: f64,
    pub factor: f64,
    pub bounded: bool,
}

/// Weighted tail size `sup_{r >= r_asym} r^{tau0} |v - 1|`.
pub fn weighted_tail(grid: &RadialGrid, v: &[f64], tau0: f64, r_asym: Option<f64>) -> f64 {
    let start = grid.first_index_at_or_above(r_asym.unwrap_or_else(|| grid.r_inner().max(1.0)));
    (start..grid.len())
        .map(|i| grid.nodes()[i].powf(tau0) * (v[i] - 1.0).abs())
        .fold(0.0, f64::max)
}

/// Tail decay series; bounded if it never exceeds `factor` times its initial value.
///
/// The tail is measured on the total factor `v` against the flat metric: the
/// relative factor `u = v / v0` is identically 1 initially.
pub fn decay_preservation(traj: &FlowTrajectory, tau0: f64, r_asym: Option<f64>, factor: f64) -> Result<DecayReport> {
    let mut series = ObservableSeries::new(
        "decay_tail",
        SeriesMetadata {
            grid: grid_summary(&traj.grid),
            tolerance: Some(factor),
            ..Default::default()
        },
    );
    for s in &traj.snapshots {
        series.push(s.t, weighted_tail(&traj.grid, &s.values, tau0, r_asym))?;
    }
    let initial = series.values.first().copied().unwrap_or(0.0);
    let sup = series.values.iter().copied().fold(0.0, f64::max);
    Ok(DecayReport {
        series,
        initial,
        sup,
        factor,
        bounded: sup <= factor * initial || sup == 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    /// `sup_{r <= compact_radius} |R|` per snapshot.
    pub curvature: ObservableSeries,
    /// Minimum of `R` over all active nodes per snapshot.
    pub curvature_min: ObservableSeries,
    /// `max_i (v_i(t_k) - v_i(t_{k-1}))^+` per snapshot (0 at the first).
    pub monotonicity_violation: ObservableSeries,
    pub initial_sup: f64,
    pub final_sup: f64,
    pub threshold: f64,
    /// Index from which the curvature series is nonincreasing.
    pub nonincreasing_from: usize,
    pub curvature_nonnegative: bool,
    pub v_nonincreasing: bool,
    pub passed: bool,
}

/// Tolerances of [`convergence_monitor`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTolerances {
    /// Required `final sup |R| <= threshold * initial sup |R|`.
    pub threshold: f64,
    pub curvature_sign: f64,
    pub monotonicity: f64,
}

impl Default for ConvergenceTolerances {
    fn default() -> Self {
        ConvergenceTolerances {
            threshold: 0.05,
            curvature_sign: 1e-8,
            monotonicity: 1e-10,
        }
    }
}

/// Curvature decay on `r <= compact_radius` and nodewise monotonicity of `v`.
/// Requires `R(g0) >= -tol` at every active node.
pub fn convergence_monitor(
    traj: &FlowTrajectory,
    compact_radius: f64,
    tol: &ConvergenceTolerances,
) -> Result<ConvergenceReport> {
    let grid = &traj.grid;
    let consts = grid.constants();
    if traj.snapshots.is_empty() {
        return Err(Error::Domain("empty trajectory".into()));
    }
    let meta = SeriesMetadata {
        grid: grid_summary(grid),
        tolerance: Some(tol.threshold),
        ..Default::default()
    };
    let mut curvature = ObservableSeries::new("curvature_sup_compact", meta.clone());
    let mut curvature_min = ObservableSeries::new("curvature_min", meta.clone());
    let mut violation = ObservableSeries::new("v_increase", meta);
    let compact: Vec<usize> = active_nodes(grid).filter(|&i| grid.nodes()[i] <= compact_radius).collect();

    for (k, s) in traj.snapshots.iter().enumerate() {
        let r = scalar_curvature_values(grid, &s.values, &consts)?;
        let rmin = active_nodes(grid).map(|i| r[i]).fold(f64::INFINITY, f64::min);
        if k == 0 && rmin < -tol.curvature_sign {
            return Err(Error::Hypothesis(format!(
                "initial scalar curvature is negative somewhere (min R = {rmin:e})"
            )));
        }
        let sup = compact.iter().map(|&i| r[i].abs()).fold(0.0, f64::max);
        let inc = if k == 0 {
            0.0
        } else {
            s.values
                .iter()
                .zip(&traj.snapshots[k - 1].values)
                .map(|(a, b)| a - b)
                .fold(0.0, f64::max)
        };
        curvature.push(s.t, sup)?;
        curvature_min.push(s.t, rmin)?;
        violation.push(s.t, inc)?;
    }
    let initial_sup = curvature.values[0];
    let final_sup = *curvature.values.last().unwrap();
    let vals = &curvature.values;
    let mut nonincreasing_from = vals.len() - 1;
    while nonincreasing_from > 0 && vals[nonincreasing_from] <= vals[nonincreasing_from - 1] * (1.0 + 1e-12) {
        nonincreasing_from -= 1;
    }
    let curvature_nonnegative = curvature_min.values.iter().all(|&x| x >= -tol.curvature_sign);
    let v_nonincreasing = violation.values.iter().all(|&x| x <= tol.monotonicity);
    let passed = final_sup <= tol.threshold * initial_sup && curvature_nonnegative && v_nonincreasing;
    Ok(ConvergenceReport {
        curvature,
        curvature_min,
        monotonicity_violation: violation,
        initial_sup,
        final_sup,
        threshold: tol.threshold,
        nonincreasing_from,
        curvature_nonnegative,
        v_nonincreasing,
        passed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsolutionReport {
    /// Minimum of `L w0 = Delta w0 - a R0 w0` over active nodes.
    pub min_lw: f64,
    /// Any `delta < delta_bound` gives `delta w0 < 1`.
    pub delta_bound: f64,
    pub passed: bool,
}

/// Checks `L_{g0} w0 >= -tol` at active nodes. `w0` is expressed against the
/// flat background, so `L` is the flat conformal Laplacian with potential `R0`.
pub fn subsolution_check(
    grid: &RadialGrid,
    w0: &[f64],
    r0: &[f64],
    consts: &Constants,
    tol: f64,
) -> Result<SubsolutionReport> {
    let lw = conformal_laplacian(grid, w0, r0, consts)?;
    let min_lw = active_nodes(grid).map(|i| lw[i]).fold(f64::INFINITY, f64::min);
    let sup = w0.iter().copied().fold(0.0, f64::max);
    Ok(SubsolutionReport {
        min_lw,
        delta_bound: if sup > 0.0 { 1.0 / sup } else { f64::INFINITY },
        passed: min_lw >= -tol,
    })
}

/// `R(g)` of a field at its active nodes (boundary nodes set to 0).
pub fn active_curvature(v: &ConformalField) -> Result<Vec<f64>> {
    let grid = v.grid();
    let r = scalar_curvature_values(grid, v.values(), &grid.constants())?;
    let active = active_nodes(grid);
    Ok(r.into_iter()
        .enumerate()
        .map(|(i, x)| if active.contains(&i) { x } else { 0.0 })
        .collect())
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::flow::Snapshot;

    fn traj_of(grid: Arc<RadialGrid>, snaps: Vec<(f64, Vec<f64>)>) -> FlowTrajectory {
        let mut t = FlowTrajectory::empty(grid, TimeTag::Geometric);
        t.snapshots = snaps.into_iter().map(|(t, values)| Snapshot { t, values }).collect();
        t
    }

    #[test]
    fn series_rejects_non_increasing_times() {
        let mut s = ObservableSeries::new("x", SeriesMetadata::default());
        s.push(0.0, 1.0).unwrap();
        assert!(s.push(0.0, 2.0).is_err());
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,x\n0.0000000000000000e0,1.0000000000000000e0\n");
    }

    #[test]
    fn flat_observables_vanish() {
        let g = Arc::new(RadialGrid::geometric(3, 0.0, 100.0, 120, 1.04).unwrap());
        let traj = traj_of(g.clone(), vec![(0.0, vec![1.0; g.len()]), (1.0, vec![1.0; g.len()])]);
        let m = mass_drift(&traj, &g.constants(), &[20.0, 40.0, 80.0]).unwrap();
        assert!(m.series.values.iter().all(|x| *x == 0.0));
        let d = decay_preservation(&traj, 1.0, None, 10.0).unwrap();
        assert!(d.series.values.iter().all(|x| *x == 0.0) && d.bounded);
        let c = convergence_monitor(&traj, 10.0, &ConvergenceTolerances::default()).unwrap();
        assert!(c.curvature.values.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn mass_conservation_is_only_asserted_in_low_dimensions() {
        let g = Arc::new(RadialGrid::log_uniform(6, 1.0, 100.0, 100).unwrap());
        let traj = traj_of(g.clone(), vec![(0.0, vec![1.0; g.len()])]);
        let m = mass_drift(&traj, &g.constants(), &[20.0, 40.0]).unwrap();
        assert!(!m.conservation_asserted && m.note.is_some());
    }

    #[test]
    fn sign_indefinite_curvature_is_refused() {
        let g = Arc::new(RadialGrid::geometric(3, 0.0, 20.0, 100, 1.03).unwrap());
        // v = 1 + 0.1 r^2 e^{-r^2} has Delta v of both signs
        let v = g.sample(|r| 1.0 + 0.1 * r * r * (-r * r).exp());
        let traj = traj_of(g, vec![(0.0, v)]);
        assert!(matches!(
            convergence_monitor(&traj, 10.0, &ConvergenceTolerances::default()),
            Err(Error::Hypothesis(_))
        ));
    }

    #[test]
    fn subsolution_examples() {
        let g = RadialGrid::geometric(3, 0.0, 20.0, 100, 1.03).unwrap();
        let c = g.constants();
        let ones = vec![1.0; g.len()];
        let r = subsolution_check(&g, &ones, &vec![0.0; g.len()], &c, 1e-12).unwrap();
        assert!(r.passed && r.min_lw == 0.0 && r.delta_bound == 1.0);
        let r0 = g.sample(|r| if r < 1.0 { 1.0 - r * r } else { 0.0 });
        let r = subsolution_check(&g, &ones, &r0, &c, 1e-12).unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn orders_of_a_clean_sequence() {
        let o = refinement_orders(&[1.0, 0.25, 0.0625], 2.0);
        assert!(o.iter().all(|x| (x - 2.0).abs() < 1e-12));
    }
}
