//! Run orchestration, output files and checkpoints.
//!
//! A run directory holds:
//!
//! - `scenario.toml`: the normalized scenario
//! - `snapshots.csv`: columns `t,r,v,R`
//! - `events.jsonl`: one monitor event per line
//! - `series/<name>.csv` and `series/<name>.dat` (gnuplot columns)
//! - `checkpoint.json` (unless disabled)
//! - `manifest.json`, written last

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::scenario_to_toml;
use crate::error::{Error, Result};
use crate::field::fmt_f64;
use crate::flow::{FlowTrajectory, MonitorStatus};
use crate::geometry::scalar_curvature_values;
use crate::observables::grid_summary;
use crate::scenario::Scenario;

pub const CHECKPOINT_FORMAT: &str = "yaf-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Writes through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Serialize)]
struct CheckpointOut<'a> {
    format: &'a str,
    version: u32,
    trajectory: &'a FlowTrajectory,
}

pub fn save_checkpoint(traj: &FlowTrajectory, path: &Path) -> Result<()> {
    let doc = CheckpointOut {
        format: CHECKPOINT_FORMAT,
        version: CHECKPOINT_VERSION,
        trajectory: traj,
    };
    write_atomic(path, &serde_json::to_vec(&doc)?)
}

pub fn load_checkpoint(path: &Path) -> Result<FlowTrajectory> {
    let bytes = std::fs::read(path)?;
    let doc: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| Error::CorruptCheckpoint(format!("{}: {e}", path.display())))?;
    if doc.get("format").and_then(|f| f.as_str()) != Some(CHECKPOINT_FORMAT) {
        return Err(Error::CorruptCheckpoint(format!("{}: not a checkpoint file", path.display())));
    }
    let found = doc
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::CorruptCheckpoint(format!("{}: missing version", path.display())))?;
    if found != u64::from(CHECKPOINT_VERSION) {
        return Err(Error::VersionMismatch {
            found: u32::try_from(found).unwrap_or(u32::MAX),
            expected: CHECKPOINT_VERSION,
        });
    }
    let traj = doc
        .get("trajectory")
        .ok_or_else(|| Error::CorruptCheckpoint(format!("{}: missing trajectory", path.display())))?;
    FlowTrajectory::deserialize(traj).map_err(|e| Error::CorruptCheckpoint(format!("{}: {e}", path.display())))
}

/// Saves and reloads `traj`.
pub fn checkpoint_roundtrip(traj: &FlowTrajectory, path: &Path) -> Result<FlowTrajectory> {
    save_checkpoint(traj, path)?;
    load_checkpoint(path)
}

/// Long-format snapshot table `t,r,v,R`.
pub fn write_snapshots_csv<W: Write>(traj: &FlowTrajectory, out: W) -> Result<()> {
    let consts = traj.grid.constants();
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["t", "r", "v", "R"])?;
    for s in &traj.snapshots {
        let curv = scalar_curvature_values(&traj.grid, &s.values, &consts)?;
        for ((r, v), k) in traj.grid.nodes().iter().zip(&s.values).zip(&curv) {
            w.write_record([fmt_f64(s.t), fmt_f64(*r), fmt_f64(*v), fmt_f64(*k)])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_events_jsonl<W: Write>(traj: &FlowTrajectory, mut out: W) -> Result<()> {
    for e in &traj.events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

fn rank(s: MonitorStatus) -> u8 {
    match s {
        MonitorStatus::Pass => 0,
        MonitorStatus::Warn => 1,
        MonitorStatus::Fail => 2,
        MonitorStatus::Fatal => 3,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorVerdict {
    /// Worst status seen.
    pub status: MonitorStatus,
    pub events: usize,
    pub last_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub first_failure_t: Option<f64>,
}

impl MonitorVerdict {
    pub fn failed(&self) -> bool {
        matches!(self.status, MonitorStatus::Fail | MonitorStatus::Fatal)
    }
}

pub fn monitor_verdicts(traj: &FlowTrajectory) -> BTreeMap<String, MonitorVerdict> {
    let mut out: BTreeMap<String, MonitorVerdict> = BTreeMap::new();
    for e in &traj.events {
        let v = out.entry(e.monitor.clone()).or_insert(MonitorVerdict {
            status: MonitorStatus::Pass,
            events: 0,
            last_value: e.value,
            first_failure_t: None,
        });
        if rank(e.status) > rank(v.status) {
            v.status = e.status;
        }
        if matches!(e.status, MonitorStatus::Fail | MonitorStatus::Fatal) && v.first_failure_t.is_none() {
            v.first_failure_t = Some(e.t);
        }
        v.events += 1;
        v.last_value = e.value;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the run directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario: String,
    /// SHA-256 of the normalized scenario TOML.
    pub scenario_hash: String,
    pub software_version: String,
    pub grid: String,
    pub wall_time_s: f64,
    pub steps: usize,
    pub verdicts: BTreeMap<String, MonitorVerdict>,
    pub failed_monitors: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
    /// Solver failure, if the run did not reach `t_end`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    /// True iff the solver finished and every monitor passed.
    pub fn success(&self) -> bool {
        self.error.is_none() && self.aborted.is_none() && self.failed_monitors.is_empty()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

struct Outputs<'a> {
    dir: &'a Path,
    files: Vec<OutputFile>,
}

impl Outputs<'_> {
    fn put(&mut self, rel: &str, bytes: Vec<u8>) -> Result<()> {
        let path = self.dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_atomic(&path, &bytes)?;
        self.files.push(OutputFile {
            path: rel.to_string(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }
}

fn series_file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Evolves `scenario` and writes every output into `dir`. Solver failures end
/// up in the manifest, not in the `Err` branch; that is reserved for I/O and
/// invalid scenarios.
pub fn run(scenario: &Scenario, dir: &Path) -> Result<RunManifest> {
    scenario.validate()?;
    std::fs::create_dir_all(dir)?;
    let toml_text = scenario_to_toml(scenario)?;
    let grid = scenario.build_grid()?;
    let mut out = Outputs { dir, files: Vec::new() };
    out.put("scenario.toml", toml_text.clone().into_bytes())?;

    let start = Instant::now();
    let result = scenario.evolve();
    let wall_time_s = start.elapsed().as_secs_f64();

    let mut manifest = RunManifest {
        scenario: scenario.name.clone(),
        scenario_hash: sha256_hex(toml_text.as_bytes()),
        software_version: SOFTWARE_VERSION.to_string(),
        grid: grid_summary(&grid),
        wall_time_s,
        steps: 0,
        verdicts: BTreeMap::new(),
        failed_monitors: Vec::new(),
        aborted: None,
        error: None,
        outputs: Vec::new(),
    };
    match result {
        Ok(traj) => {
            log::info!(
                "{}: {} steps, {} snapshots in {:.3} s",
                scenario.name,
                traj.stats.steps,
                traj.snapshots.len(),
                wall_time_s
            );
            let mut buf = Vec::new();
            write_snapshots_csv(&traj, &mut buf)?;
            out.put("snapshots.csv", buf)?;
            let mut buf = Vec::new();
            write_events_jsonl(&traj, &mut buf)?;
            out.put("events.jsonl", buf)?;
            for s in &traj.series {
                let stem = series_file_stem(&s.name);
                let mut buf = Vec::new();
                s.write_csv(&mut buf)?;
                out.put(&format!("series/{stem}.csv"), buf)?;
                let mut buf = Vec::new();
                s.write_columns(&mut buf)?;
                out.put(&format!("series/{stem}.dat"), buf)?;
            }
            if scenario.output.checkpoint {
                let path = dir.join("checkpoint.json");
                save_checkpoint(&traj, &path)?;
                let bytes = std::fs::read(&path)?;
                out.files.push(OutputFile {
                    path: "checkpoint.json".into(),
                    bytes: bytes.len() as u64,
                    sha256: sha256_hex(&bytes),
                });
            }
            manifest.steps = traj.stats.steps;
            manifest.verdicts = monitor_verdicts(&traj);
            manifest.failed_monitors = traj.failed_monitors();
            manifest.aborted = traj.aborted.clone();
        }
        Err(e) => {
            log::error!("{}: {e}", scenario.name);
            manifest.error = Some(e.to_string());
        }
    }
    for name in &manifest.failed_monitors {
        log::warn!("{}: monitor {name} failed", scenario.name);
    }
    manifest.outputs = out.files;
    write_atomic(&dir.join("manifest.json"), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}
