use super::{grid_summary, weighted_tail, ObservableSeries, SeriesMetadata};
use crate::error::Result;
use crate::flow::{bracket_report, time_rescale_factor, Monitor, MonitorEvent, MonitorStatus, SnapshotView, TimeTag};
use crate::geometry::{active_nodes, adm_mass, scalar_curvature};

fn series(name: &str, snap: &SnapshotView<'_>, tolerance: Option<f64>) -> ObservableSeries {
    ObservableSeries::new(
        name,
        SeriesMetadata {
            grid: grid_summary(snap.v.grid()),
            tolerance,
            ..Default::default()
        },
    )
}

fn fail_status(fatal: bool) -> MonitorStatus {
    if fatal {
        MonitorStatus::Fatal
    } else {
        MonitorStatus::Fail
    }
}

/// Checks `u = v / v0` against the maximum-principle bracket at u-form time.
/// The value is the amount by which the bracket is exceeded (0 inside).
#[derive(Debug, Clone)]
pub struct BracketMonitor {
    pub sup_r0: f64,
    pub tol: f64,
    pub fatal: bool,
    series: Option<ObservableSeries>,
}

impl BracketMonitor {
    pub fn new(sup_r0: f64, tol: f64) -> Self {
        BracketMonitor {
            sup_r0,
            tol,
            fatal: false,
            series: None,
        }
    }

    pub fn fatal(mut self) -> Self {
        self.fatal = true;
        self
    }
}

impl Monitor for BracketMonitor {
    fn name(&self) -> &str {
        "bracket"
    }

    fn observe(&mut self, snap: &SnapshotView<'_>) -> Result<MonitorEvent> {
        let consts = snap.v.grid().constants();
        let report = bracket_report(snap.u_time(), &snap.u(), self.sup_r0, &consts, self.tol)?;
        let excess = (report.lower - report.min_u).max(report.max_u - report.upper).max(0.0);
        self.series
            .get_or_insert_with(|| series("bracket_excess", snap, Some(self.tol)))
            .push(snap.t, excess)?;
        Ok(MonitorEvent {
            t: snap.t,
            monitor: self.name().into(),
            value: excess,
            status: if report.satisfied {
                MonitorStatus::Pass
            } else {
                fail_status(self.fatal)
            },
            detail: (!report.satisfied).then(|| {
                format!(
                    "u in [{}, {}] outside [{}, {}] at u-time {}",
                    report.min_u, report.max_u, report.lower, report.upper, report.t
                )
            }),
        })
    }

    fn series(&self) -> Vec<ObservableSeries> {
        self.series.iter().cloned().collect()
    }
}

/// Extrapolated ADM mass; fails when `|m(t) - m(0)| > tol * max(|m(0)|, 1)`.
/// Series times are geometric.
#[derive(Debug, Clone)]
pub struct MassMonitor {
    pub radii: Vec<f64>,
    pub tol: f64,
    initial: Option<f64>,
    series: Option<ObservableSeries>,
}

impl MassMonitor {
    pub fn new(radii: Vec<f64>, tol: f64) -> Self {
        MassMonitor {
            radii,
            tol,
            initial: None,
            series: None,
        }
    }
}

impl Monitor for MassMonitor {
    fn name(&self) -> &str {
        "mass"
    }

    fn observe(&mut self, snap: &SnapshotView<'_>) -> Result<MonitorEvent> {
        let consts = snap.v.grid().constants();
        let m = adm_mass(snap.v, &consts, &self.radii)?;
        let m0 = *self.initial.get_or_insert(m.extrapolated);
        let t = match snap.tag {
            TimeTag::Geometric => snap.t,
            TimeTag::UForm => snap.t / time_rescale_factor(&consts),
        };
        self.series
            .get_or_insert_with(|| series("adm_mass", snap, Some(self.tol)))
            .push(t, m.extrapolated)?;
        let drift = (m.extrapolated - m0).abs();
        let ok = drift <= self.tol * m0.abs().max(1.0);
        Ok(MonitorEvent {
            t: snap.t,
            monitor: self.name().into(),
            value: m.extrapolated,
            status: match (ok, m.converged) {
                (false, _) => MonitorStatus::Fail,
                (true, false) => MonitorStatus::Warn,
                (true, true) => MonitorStatus::Pass,
            },
            detail: m.warning.or_else(|| (!ok).then(|| format!("mass drift {drift:e}"))),
        })
    }

    fn series(&self) -> Vec<ObservableSeries> {
        self.series.iter().cloned().collect()
    }
}

/// `sup_{r >= r_asym} r^{tau0} |v - 1|`, failing above `factor` times its
/// initial value.
#[derive(Debug, Clone)]
pub struct DecayMonitor {
    pub tau0: f64,
    pub r_asym: Option<f64>,
    pub factor: f64,
    initial: Option<f64>,
    series: Option<ObservableSeries>,
}

impl DecayMonitor {
    pub fn new(tau0: f64, r_asym: Option<f64>, factor: f64) -> Self {
        DecayMonitor {
            tau0,
            r_asym,
            factor,
            initial: None,
            series: None,
        }
    }
}

impl Monitor for DecayMonitor {
    fn name(&self) -> &str {
        "decay"
    }

    fn observe(&mut self, snap: &SnapshotView<'_>) -> Result<MonitorEvent> {
        let value = weighted_tail(snap.v.grid(), snap.v.values(), self.tau0, self.r_asym);
        let initial = *self.initial.get_or_insert(value);
        self.series
            .get_or_insert_with(|| series("decay_tail", snap, Some(self.factor)))
            .push(snap.t, value)?;
        let ok = value <= self.factor * initial || value == 0.0;
        Ok(MonitorEvent {
            t: snap.t,
            monitor: self.name().into(),
            value,
            status: if ok { MonitorStatus::Pass } else { MonitorStatus::Fail },
            detail: None,
        })
    }

    fn series(&self) -> Vec<ObservableSeries> {
        self.series.iter().cloned().collect()
    }
}

/// Minimum scalar curvature over active nodes; fails below `-tol`.
#[derive(Debug, Clone)]
pub struct CurvatureSignMonitor {
    pub tol: f64,
    series: Option<ObservableSeries>,
}

impl CurvatureSignMonitor {
    pub fn new(tol: f64) -> Self {
        CurvatureSignMonitor { tol, series: None }
    }
}

impl Monitor for CurvatureSignMonitor {
    fn name(&self) -> &str {
        "curvature_sign"
    }

    fn observe(&mut self, snap: &SnapshotView<'_>) -> Result<MonitorEvent> {
        let grid = snap.v.grid();
        let r = scalar_curvature(snap.v, &grid.constants())?;
        let min = active_nodes(grid).map(|i| r[i]).fold(f64::INFINITY, f64::min);
        self.series
            .get_or_insert_with(|| series("curvature_min", snap, Some(self.tol)))
            .push(snap.t, min)?;
        Ok(MonitorEvent {
            t: snap.t,
            monitor: self.name().into(),
            value: min,
            status: if min >= -self.tol {
                MonitorStatus::Pass
            } else {
                MonitorStatus::Fail
            },
            detail: None,
        })
    }

    fn series(&self) -> Vec<ObservableSeries> {
        self.series.iter().cloned().collect()
    }
}
