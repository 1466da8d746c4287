//! CSV, JSON and text artifacts, and the hash manifest of an output
//! directory.
//!
//! Every writer emits a header row even when there is nothing to report,
//! and formats floats with Rust's shortest round-trip representation, so
//! equal inputs give byte-identical files.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use modeshift_core::metrics::{CellReport, Report, RunSummary};
use modeshift_core::predict::{ForecastRecord, HORIZONS};
use modeshift_core::sim::{ModeChangeRecord, RunResult, SeriesPoint, TaskStats, TraceRecord};
use modeshift_core::{Policy, TaskId};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Default cap on plotted series and prediction rows.
pub const SERIES_LIMIT: usize = 500;

/// Lower-case policy name used in file and directory names.
pub fn slug(policy: Policy) -> &'static str {
    match policy {
        Policy::Edf => "edf",
        Policy::Fp => "fp",
    }
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn finish<W: Write>(mut out: csv::Writer<W>) -> csv::Result<()> {
    out.flush()?;
    Ok(())
}

/// Results table in its row vocabulary: one line per row label.
pub fn write_report_csv<W: Write>(w: W, report: &Report) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["metric".to_string()];
    for (group, multi) in Report::columns() {
        header.push(format!("{}_{}", group.as_str(), if multi { "multi" } else { "mono" }));
    }
    out.write_record(&header)?;
    for (label, values) in report.rows() {
        let mut record = vec![label.to_string()];
        record.extend(values);
        out.write_record(&record)?;
    }
    finish(out)
}

pub const CELL_HEADER: [&str; 26] = [
    "policy",
    "trigger",
    "runs",
    "released",
    "completed",
    "missed",
    "miss_percent",
    "aborted",
    "aborted_mid_execution",
    "mode_changes",
    "faults",
    "busy",
    "idle",
    "horizon",
    "busy_fraction",
    "busy_of_active_span",
    "idle_of_active_span",
    "mse1",
    "mse3",
    "mse5",
    "rmse1",
    "rmse3",
    "rmse5",
    "anticipation_mean",
    "anticipation_median",
    "anticipation_count",
];

/// Numeric totals of each cell.
pub fn write_cells_csv<W: Write>(w: W, cells: &[CellReport]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(CELL_HEADER)?;
    for c in cells {
        let mut r = vec![
            c.policy.as_str().to_string(),
            c.trigger.as_str().to_string(),
            c.runs.to_string(),
            c.released.to_string(),
            c.completed.to_string(),
            c.missed.to_string(),
            c.miss_percent.to_string(),
            c.aborted.to_string(),
            c.aborted_mid_execution.to_string(),
            c.mode_changes.to_string(),
            c.faults.to_string(),
            c.busy.to_string(),
            c.idle.to_string(),
            c.horizon.to_string(),
            c.busy_fraction.to_string(),
            c.busy_of_active_span().to_string(),
            c.idle_of_active_span().to_string(),
        ];
        r.extend(c.prediction.iter().map(|p| opt(p.map(|s| s.mse))));
        r.extend(c.prediction.iter().map(|p| opt(p.map(|s| s.rmse))));
        r.push(opt(c.anticipation_mean));
        r.push(opt(c.anticipation_median));
        r.push(c.anticipation_count.to_string());
        out.write_record(&r)?;
    }
    finish(out)
}

/// Per-task counters. Rows are `(policy, trigger, seed or "all", stats)`.
pub fn write_per_task_csv<'a, W, I>(w: W, rows: I) -> csv::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (String, String, String, &'a BTreeMap<TaskId, TaskStats>)>,
{
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "policy",
        "trigger",
        "seed",
        "task",
        "released",
        "completed",
        "missed",
        "aborted",
        "discarded",
        "suppressed",
        "max_response",
    ])?;
    for (policy, trigger, seed, tasks) in rows {
        for (id, s) in tasks {
            out.write_record([
                policy.clone(),
                trigger.clone(),
                seed.clone(),
                id.to_string(),
                s.released.to_string(),
                s.completed.to_string(),
                s.missed.to_string(),
                s.aborted.to_string(),
                s.discarded.to_string(),
                s.suppressed.to_string(),
                s.max_response.to_string(),
            ])?;
        }
    }
    finish(out)
}

pub fn write_trace_csv<W: Write>(w: W, trace: &[TraceRecord]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["time", "event", "task", "job", "mode", "detail"])?;
    for t in trace {
        out.write_record([
            t.time.to_string(),
            t.event.as_str().to_string(),
            opt(t.task),
            opt(t.job),
            t.mode.to_string(),
            t.detail.clone(),
        ])?;
    }
    finish(out)
}

/// Laxity and forecast series, at most `limit` points.
pub fn write_series_csv<W: Write>(w: W, series: &[SeriesPoint], limit: Option<usize>) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["time".to_string(), "worst_laxity".into(), "task".into(), "slope".into()];
    header.extend(HORIZONS.iter().map(|h| format!("forecast{h}")));
    header.extend(["risk".to_string(), "trigger".into(), "mode".into()]);
    out.write_record(&header)?;
    for p in series.iter().take(limit.unwrap_or(usize::MAX)) {
        let mut r = vec![p.time.to_string(), p.worst_laxity.to_string(), opt(p.task), p.slope.to_string()];
        r.extend(p.forecasts.iter().map(|f| f.to_string()));
        r.extend([opt(p.risk), p.trigger.to_string(), p.mode.to_string()]);
        out.write_record(&r)?;
    }
    finish(out)
}

/// Matched forecasts, at most `limit` rows.
pub fn write_predictions_csv<W: Write>(w: W, records: &[ForecastRecord], limit: Option<usize>) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["tick", "target", "horizon", "predicted", "raw", "observed", "squared_error"])?;
    for p in records.iter().take(limit.unwrap_or(usize::MAX)) {
        out.write_record([
            p.tick.to_string(),
            p.target.to_string(),
            p.horizon.to_string(),
            p.predicted.to_string(),
            p.raw.to_string(),
            p.observed.to_string(),
            p.squared_error.to_string(),
        ])?;
    }
    finish(out)
}

pub fn write_mode_changes_csv<W: Write>(w: W, changes: &[ModeChangeRecord]) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "trigger_time",
        "trigger",
        "request_time",
        "from",
        "to",
        "completion_time",
        "latency",
        "aborted",
        "aborted_mid_execution",
        "drained",
    ])?;
    for m in changes {
        out.write_record([
            m.trigger_time.to_string(),
            m.trigger.as_str().to_string(),
            m.request_time.to_string(),
            m.from.clone(),
            m.to.clone(),
            opt(m.completion_time),
            opt(m.latency),
            m.aborted.to_string(),
            m.aborted_mid_execution.to_string(),
            m.drained.to_string(),
        ])?;
    }
    finish(out)
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize + ?Sized>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes files below a root directory and remembers them for the manifest.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(OutputDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Record a file written by someone else below the root.
    pub fn register(&mut self, relative: PathBuf) {
        self.written.push(relative);
    }

    pub fn write(&mut self, relative: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let path = self.root.join(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        }
        fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.written.push(PathBuf::from(relative));
        Ok(())
    }

    /// Run a CSV writer into memory and store the result.
    pub fn csv(&mut self, relative: &str, f: impl FnOnce(&mut Vec<u8>) -> csv::Result<()>) -> anyhow::Result<()> {
        let mut buf = Vec::new();
        f(&mut buf).with_context(|| format!("cannot encode {relative}"))?;
        self.write(relative, &buf)
    }

    /// Write `manifest.json` listing every file written so far with its
    /// size and SHA-256.
    pub fn write_manifest(&mut self) -> anyhow::Result<()> {
        let mut entries = BTreeMap::new();
        for rel in &self.written {
            let bytes = fs::read(self.root.join(rel))?;
            let key = rel.to_string_lossy().replace('\\', "/");
            entries.insert(key, ManifestEntry { bytes: bytes.len() as u64, sha256: hex::encode(Sha256::digest(&bytes)) });
        }
        let manifest = Manifest { files: entries };
        let bytes = to_json(&manifest)?;
        fs::write(self.root.join("manifest.json"), bytes)?;
        Ok(())
    }
}

#[derive(Debug, Serialize, serde::Deserialize, PartialEq, Eq)]
pub struct ManifestEntry {
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize, serde::Deserialize, PartialEq, Eq)]
pub struct Manifest {
    pub files: BTreeMap<String, ManifestEntry>,
}

/// Every artifact of a single run.
pub fn write_run(dir: &mut OutputDir, run: &RunResult, series_limit: Option<usize>) -> anyhow::Result<()> {
    let policy = run.policy.as_str().to_string();
    let trigger = run.trigger.as_str().to_string();
    dir.csv("per_task.csv", |b| {
        write_per_task_csv(b, [(policy.clone(), trigger.clone(), run.seed.to_string(), &run.tasks)])
    })?;
    dir.csv("mode_changes.csv", |b| write_mode_changes_csv(b, &run.mode_changes))?;
    dir.csv("trace.csv", |b| write_trace_csv(b, &run.trace))?;
    dir.csv("series.csv", |b| write_series_csv(b, &run.series, series_limit))?;
    dir.csv("predictions.csv", |b| write_predictions_csv(b, &run.predictions, series_limit))?;
    dir.write("summary.json", &to_json(&RunSummary::from(run))?)?;
    Ok(())
}
