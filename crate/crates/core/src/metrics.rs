//! Aggregation of simulation runs into per-scenario reports.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::model::Policy;
use crate::modemgr::TriggerKind;
use crate::predict::{ErrorStats, ErrorSummary, HORIZONS};
use crate::sim::{RunResult, TaskStats};
use crate::{Error, TaskId, Time};

/// The part of a [`RunResult`] that reports need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub trigger: TriggerKind,
    pub policy: Policy,
    pub seed: u64,
    pub horizon: Time,
    pub warmup: Time,
    pub released: u64,
    pub completed: u64,
    pub missed: u64,
    pub aborted: u64,
    pub aborted_mid_execution: u64,
    pub discarded: u64,
    pub in_flight: u64,
    pub busy: Time,
    pub idle: Time,
    pub busy_after_warmup: Time,
    pub faults: u64,
    pub mode_changes: u64,
    pub prediction_errors: [ErrorStats; 3],
    pub anticipation: Vec<Time>,
    pub tasks: BTreeMap<TaskId, TaskStats>,
}

impl From<&RunResult> for RunSummary {
    fn from(r: &RunResult) -> Self {
        RunSummary {
            trigger: r.trigger,
            policy: r.policy,
            seed: r.seed,
            horizon: r.horizon,
            warmup: r.warmup,
            released: r.released,
            completed: r.completed,
            missed: r.missed,
            aborted: r.aborted,
            aborted_mid_execution: r.aborted_mid_execution,
            discarded: r.discarded,
            in_flight: r.in_flight,
            busy: r.busy,
            idle: r.idle,
            busy_after_warmup: r.busy_after_warmup,
            faults: r.faults,
            mode_changes: r.mode_changes.len() as u64,
            prediction_errors: r.prediction_errors,
            anticipation: r.anticipation.clone(),
            tasks: r.tasks.clone(),
        }
    }
}

/// Totals of one (policy, trigger) cell across repetitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub policy: Policy,
    pub trigger: TriggerKind,
    pub runs: u64,
    pub released: u64,
    pub completed: u64,
    pub missed: u64,
    /// `100 · missed / released`.
    pub miss_percent: f64,
    pub aborted: u64,
    pub aborted_mid_execution: u64,
    pub mode_changes: u64,
    pub faults: u64,
    pub busy: Time,
    pub idle: Time,
    pub horizon: Time,
    pub busy_after_warmup: Time,
    pub active_span: Time,
    /// Busy fraction of the whole horizon.
    pub busy_fraction: f64,
    /// `1 − busy_fraction`.
    pub idle_fraction: f64,
    /// Pooled forecast errors per horizon in [`HORIZONS`].
    pub prediction: [Option<ErrorSummary>; 3],
    pub anticipation_mean: Option<f64>,
    pub anticipation_median: Option<f64>,
    pub anticipation_count: u64,
    pub tasks: BTreeMap<TaskId, TaskStats>,
}

impl CellReport {
    /// Report rows "CPU busy" and "CPU downtime": busy and idle share of
    /// the span after warmup.
    pub fn busy_of_active_span(&self) -> f64 {
        ratio(self.busy_after_warmup, self.active_span)
    }

    pub fn idle_of_active_span(&self) -> f64 {
        1.0 - self.busy_of_active_span()
    }

    pub fn rmse(&self, horizon: usize) -> Option<f64> {
        let slot = HORIZONS.iter().position(|h| *h == horizon)?;
        self.prediction[slot].map(|s| s.rmse)
    }
}

fn ratio(a: Time, b: Time) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Percentage of `part` in `whole`, zero for an empty whole.
pub fn percentage(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

fn median(sorted: &[Time]) -> Option<f64> {
    let n = sorted.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(sorted[n / 2] as f64),
        _ => Some((sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0),
    }
}

/// Fold the runs of one cell. All runs must share policy and trigger.
pub fn aggregate(runs: &[RunSummary]) -> Result<CellReport, Error> {
    let first = runs.first().ok_or(Error::Empty)?;
    if runs.iter().any(|r| r.policy != first.policy || r.trigger != first.trigger) {
        return Err(Error::InvalidConfig(format!(
            "cannot aggregate runs of different scenarios with {} {}",
            first.policy.as_str(),
            first.trigger.as_str()
        )));
    }
    let mut cell = CellReport {
        policy: first.policy,
        trigger: first.trigger,
        runs: runs.len() as u64,
        released: 0,
        completed: 0,
        missed: 0,
        miss_percent: 0.0,
        aborted: 0,
        aborted_mid_execution: 0,
        mode_changes: 0,
        faults: 0,
        busy: 0,
        idle: 0,
        horizon: 0,
        busy_after_warmup: 0,
        active_span: 0,
        busy_fraction: 0.0,
        idle_fraction: 0.0,
        prediction: [None; 3],
        anticipation_mean: None,
        anticipation_median: None,
        anticipation_count: 0,
        tasks: BTreeMap::new(),
    };
    let mut errors = [ErrorStats::default(); 3];
    let mut anticipation = Vec::new();
    for r in runs {
        cell.released += r.released;
        cell.completed += r.completed;
        cell.missed += r.missed;
        cell.aborted += r.aborted;
        cell.aborted_mid_execution += r.aborted_mid_execution;
        cell.mode_changes += r.mode_changes;
        cell.faults += r.faults;
        cell.busy += r.busy;
        cell.idle += r.idle;
        cell.horizon += r.horizon;
        cell.busy_after_warmup += r.busy_after_warmup;
        cell.active_span += r.horizon.saturating_sub(r.warmup);
        for (e, add) in errors.iter_mut().zip(&r.prediction_errors) {
            e.merge(add);
        }
        anticipation.extend_from_slice(&r.anticipation);
        for (id, t) in &r.tasks {
            let acc = cell.tasks.entry(*id).or_default();
            acc.released += t.released;
            acc.completed += t.completed;
            acc.missed += t.missed;
            acc.aborted += t.aborted;
            acc.discarded += t.discarded;
            acc.suppressed += t.suppressed;
            acc.max_response = acc.max_response.max(t.max_response);
        }
    }
    cell.miss_percent = percentage(cell.missed, cell.released);
    cell.busy_fraction = ratio(cell.busy, cell.horizon);
    cell.idle_fraction = 1.0 - cell.busy_fraction;
    cell.prediction = errors.map(|e| e.summary());
    anticipation.sort_unstable();
    cell.anticipation_count = anticipation.len() as u64;
    if !anticipation.is_empty() {
        let sum: Time = anticipation.iter().sum();
        cell.anticipation_mean = Some(sum as f64 / anticipation.len() as f64);
        cell.anticipation_median = median(&anticipation);
    }
    Ok(cell)
}

/// Column groups of the results table.
pub const GROUPS: [TriggerKind; 3] = [TriggerKind::Reactive, TriggerKind::Fuzzy, TriggerKind::FuzzyPredictor];

/// Row labels of the results table, in order.
pub const ROW_LABELS: [&str; 14] = [
    "CPU utilization rate",
    "CPU busy",
    "CPU downtime",
    "Number of completed tasks",
    "Number of missed deadlines",
    "Percentage of missed deadlines",
    "MSE - prediction 1 step ahead",
    "MSE - prediction 3 steps ahead",
    "MSE - prediction 5 steps ahead",
    "RMSE - prediction 1 step ahead",
    "RMSE - prediction 3 steps ahead",
    "RMSE - prediction 5 steps ahead",
    "Average anticipation time of missed deadline",
    "Median anticipation time of missed deadline",
];

/// Results table of one policy: each trigger group has a Mono and a Multi
/// column. Every Mono column shows the single-mode cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub policy: Policy,
    pub mono: Option<CellReport>,
    pub multi: BTreeMap<TriggerKind, CellReport>,
}

impl Report {
    /// Build from cells of one policy (cells of other policies are ignored).
    pub fn new(policy: Policy, cells: &[CellReport]) -> Self {
        let mut report = Report { policy, mono: None, multi: BTreeMap::new() };
        for c in cells.iter().filter(|c| c.policy == policy) {
            match c.trigger {
                TriggerKind::Mono => report.mono = Some(c.clone()),
                TriggerKind::Random => {}
                t => {
                    report.multi.insert(t, c.clone());
                }
            }
        }
        report
    }

    /// Column headers `(group, Mono|Multi)` in table order.
    pub fn columns() -> Vec<(TriggerKind, bool)> {
        GROUPS.iter().flat_map(|g| [(*g, false), (*g, true)]).collect()
    }

    fn cell(&self, group: TriggerKind, multi: bool) -> Option<&CellReport> {
        if multi {
            self.multi.get(&group)
        } else {
            self.mono.as_ref()
        }
    }

    /// Table values as text; `N/A` where a value does not apply.
    pub fn rows(&self) -> Vec<(&'static str, Vec<String>)> {
        let na = || String::from("N/A");
        let columns = Self::columns();
        ROW_LABELS
            .iter()
            .enumerate()
            .map(|(row, label)| {
                let values = columns
                    .iter()
                    .map(|&(group, multi)| {
                        let Some(c) = self.cell(group, multi) else { return na() };
                        let predicted = group == TriggerKind::FuzzyPredictor;
                        match row {
                            0 => format!("{:.2}%", 100.0 * c.busy_fraction),
                            1 => format!("{:.2}%", 100.0 * c.busy_of_active_span()),
                            2 => format!("{:.2}%", 100.0 * c.idle_of_active_span()),
                            3 => format!("{}", c.released),
                            4 => format!("{}", c.missed),
                            5 => format!("{:.2}%", c.miss_percent),
                            6..=8 if predicted => {
                                c.prediction[row - 6].map_or_else(na, |s| format!("{:.4}", s.mse))
                            }
                            9..=11 if predicted => {
                                c.prediction[row - 9].map_or_else(na, |s| format!("{:.4}", s.rmse))
                            }
                            12 if multi && group != TriggerKind::Reactive => {
                                c.anticipation_mean.map_or_else(na, |v| format!("{v:.2}"))
                            }
                            13 if multi && group != TriggerKind::Reactive => {
                                c.anticipation_median.map_or_else(na, |v| format!("{v:.2}"))
                            }
                            _ => na(),
                        }
                    })
                    .collect();
                (*label, values)
            })
            .collect()
    }

    /// Fixed-width text rendering.
    pub fn to_table(&self) -> String {
        let rows = self.rows();
        let label_width = ROW_LABELS.iter().map(|l| l.len()).max().unwrap_or(0);
        let col_width = 14;
        let mut out = String::new();
        out.push_str(&format!("{:label_width$}", format!("Results ({})", self.policy.as_str())));
        for g in GROUPS {
            out.push_str(&format!(" | {:^w$}", g.as_str(), w = 2 * col_width + 3));
        }
        out.push('\n');
        out.push_str(&format!("{:label_width$}", ""));
        for _ in GROUPS {
            out.push_str(&format!(" | {:>col_width$} | {:>col_width$}", "mono", "multi"));
        }
        out.push('\n');
        for (label, values) in rows {
            out.push_str(&format!("{label:label_width$}"));
            for v in values {
                out.push_str(&format!(" | {v:>col_width$}"));
            }
            out.push('\n');
        }
        out
    }
}
