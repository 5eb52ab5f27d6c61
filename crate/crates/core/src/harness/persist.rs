//! Run persistence: a machine-readable JSON record per run plus an
//! append-only CSV summary, one row per (method, seed).

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::harness::config::RunConfig;
use crate::harness::run::RunOutcome;

pub const SUMMARY_HEADER: &str =
    "method,refresh,gamma,steps,interval,buffer,seed,acc,bwt,seconds";

/// Everything needed to reproduce and inspect one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub created_unix_ms: u128,
    pub git_describe: Option<String>,
    pub config: RunConfig,
    pub outcome: RunOutcome,
}

impl RunRecord {
    pub fn new(config: &RunConfig, outcome: RunOutcome) -> Self {
        Self {
            created_unix_ms: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis())
                .unwrap_or(0),
            git_describe: git_describe(),
            config: config.clone(),
            outcome,
        }
    }

    /// Stable file name: method, refresh on/off, seed.
    pub fn file_name(&self) -> String {
        format!(
            "record_{}_{}_seed{}.json",
            self.config.objective.method.name(),
            if self.config.refresh.enabled { "refresh" } else { "base" },
            self.outcome.seed
        )
    }

    pub fn summary_row(&self) -> String {
        let bwt = self
            .outcome
            .metrics
            .bwt
            .map(|b| format!("{b:.6}"))
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{:.6},{},{:.3}",
            self.config.objective.method.name(),
            self.config.refresh.enabled,
            self.config.refresh.gamma,
            self.config.refresh.steps,
            self.config.refresh.interval,
            self.config.buffer_capacity,
            self.outcome.seed,
            self.outcome.metrics.acc,
            bwt,
            self.outcome.timings.total_seconds,
        )
    }
}

fn git_describe() -> Option<String> {
    let output = Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()?;
    if !output.status.success() {
        return None;
    }
    let text = String::from_utf8(output.stdout).ok()?;
    let trimmed = text.trim();
    (!trimmed.is_empty()).then(|| trimmed.to_string())
}

/// Append-only CSV sink; appends are serialized through one lock so parallel
/// runs within a process never interleave rows.
pub struct SummaryWriter {
    path: PathBuf,
    lock: Mutex<()>,
}

impl SummaryWriter {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            lock: Mutex::new(()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, row: &str) -> Result<()> {
        let _guard = self.lock.lock().expect("csv lock poisoned");
        let fresh = !self.path.exists();
        if let Some(parent) = self.path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&self.path)?;
        if fresh {
            writeln!(file, "{SUMMARY_HEADER}")?;
        }
        writeln!(file, "{row}")?;
        Ok(())
    }
}

/// Write the run record and append its summary row; returns both paths.
pub fn persist_results(
    out_dir: impl AsRef<Path>,
    config: &RunConfig,
    outcome: RunOutcome,
) -> Result<(PathBuf, PathBuf)> {
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let record = RunRecord::new(config, outcome);
    let record_path = out_dir.join(record.file_name());
    fs::write(&record_path, serde_json::to_string_pretty(&record)?)?;
    let writer = SummaryWriter::new(out_dir.join("summary.csv"));
    writer.append(&record.summary_row())?;
    Ok((record_path, writer.path.clone()))
}

pub fn load_run_record(path: impl AsRef<Path>) -> Result<RunRecord> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}
