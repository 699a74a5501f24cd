use serde::{Deserialize, Serialize};

use super::{time_rescale_factor, TimeTag};
use crate::error::Result;
use crate::field::ConformalField;
use crate::observables::ObservableSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonitorStatus {
    Pass,
    Warn,
    Fail,
    /// Failure that stops the run.
    Fatal,
}

/// One line of the monitor event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorEvent {
    pub t: f64,
    pub monitor: String,
    pub value: f64,
    pub status: MonitorStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// What a monitor sees at each snapshot.
#[derive(Debug, Clone, Copy)]
pub struct SnapshotView<'a> {
    pub t: f64,
    pub tag: TimeTag,
    pub v: &'a ConformalField,
    pub v0: &'a ConformalField,
}

impl SnapshotView<'_> {
    pub fn u_time(&self) -> f64 {
        match self.tag {
            TimeTag::UForm => self.t,
            TimeTag::Geometric => self.t * time_rescale_factor(&self.v.grid().constants()),
        }
    }

    /// `u = v / v0`.
    pub fn u(&self) -> Vec<f64> {
        self.v.values().iter().zip(self.v0.values()).map(|(a, b)| a / b).collect()
    }
}

/// Observer called at every snapshot of [`evolve`](super::evolve).
pub trait Monitor: Send {
    fn name(&self) -> &str;

    fn observe(&mut self, snap: &SnapshotView<'_>) -> Result<MonitorEvent>;

    /// Series recorded so far.
    fn series(&self) -> Vec<ObservableSeries>;
}
