//! Response-time tables for every mode and latency of every transition.

use std::fmt::Write as _;
use std::io::Write;

use modeshift_core::modemgr::{classify_transition, AbortPolicy};
use modeshift_core::rta::{analyze_mode, mode_change_latency};
use modeshift_core::{base_period_stats, SystemConfig, TaskId, Time};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskRow {
    pub mode: String,
    pub task: TaskId,
    pub priority: u32,
    pub wcet: Time,
    pub blocking: Time,
    pub period: Time,
    pub deadline: Time,
    pub offset: Time,
    /// `None` when the recurrence exceeded the deadline.
    pub response: Option<Time>,
}

impl TaskRow {
    pub fn feasible(&self) -> bool {
        self.response.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionRow {
    pub from: String,
    pub to: String,
    pub latency: Option<Time>,
    /// Transition jobs whose worst-case response exceeds their deadline.
    pub overruns: Vec<TaskId>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub name: String,
    pub tasks: Vec<TaskRow>,
    pub utilization: Vec<(String, f64)>,
    pub transitions: Vec<TransitionRow>,
}

pub fn analyze(config: &SystemConfig) -> Analysis {
    let modes = config.effective_modes();
    let mut tasks = Vec::new();
    let mut utilization = Vec::new();
    for mode in &modes {
        if let Ok(stats) = base_period_stats(mode) {
            utilization.push((mode.name.clone(), stats.utilization));
        }
        let results = analyze_mode(mode);
        for t in mode.by_priority() {
            let response = match &results[&t.id] {
                Ok(r) => Some(r.response),
                Err(_) => None,
            };
            tasks.push(TaskRow {
                mode: mode.name.clone(),
                task: t.id,
                priority: t.priority,
                wcet: t.wcet,
                blocking: t.blocking,
                period: t.period,
                deadline: t.deadline,
                offset: t.offset,
                response,
            });
        }
    }
    let mut transitions = Vec::new();
    for old in &modes {
        for new in &modes {
            if old.name == new.name {
                continue;
            }
            let plan = classify_transition(old, new, AbortPolicy::Complete);
            let row = match mode_change_latency(old, new, &plan) {
                Ok(report) => TransitionRow {
                    from: old.name.clone(),
                    to: new.name.clone(),
                    latency: Some(report.latency),
                    overruns: report
                        .entries
                        .iter()
                        .filter(|e| !e.result.meets_deadline)
                        .map(|e| e.task)
                        .collect(),
                    error: None,
                },
                Err(e) => TransitionRow {
                    from: old.name.clone(),
                    to: new.name.clone(),
                    latency: None,
                    overruns: Vec::new(),
                    error: Some(e.to_string()),
                },
            };
            transitions.push(row);
        }
    }
    Analysis { name: config.name.clone(), tasks, utilization, transitions }
}

impl Analysis {
    /// Some task misses its deadline in steady state, or a transition
    /// recurrence did not converge.
    pub fn infeasible(&self) -> bool {
        self.tasks.iter().any(|t| !t.feasible()) || self.transitions.iter().any(|t| t.error.is_some())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut current = None;
        for row in &self.tasks {
            if current != Some(&row.mode) {
                current = Some(&row.mode);
                let u = self.utilization.iter().find(|(m, _)| *m == row.mode).map_or(0.0, |(_, u)| *u);
                let _ = writeln!(out, "mode {} (U = {:.4})", row.mode, u);
                let _ = writeln!(
                    out,
                    "{:>6} {:>4} {:>6} {:>4} {:>6} {:>6} {:>6} {:>6}  feasible",
                    "task", "P", "C", "B", "T", "D", "O", "R"
                );
            }
            let r = row.response.map_or_else(|| "-".to_string(), |r| r.to_string());
            let _ = writeln!(
                out,
                "{:>6} {:>4} {:>6} {:>4} {:>6} {:>6} {:>6} {:>6}  {}",
                format!("t{}", row.task),
                row.priority,
                row.wcet,
                row.blocking,
                row.period,
                row.deadline,
                row.offset,
                r,
                if row.feasible() { "yes" } else { "no" }
            );
        }
        for t in &self.transitions {
            match (&t.latency, &t.error) {
                (Some(l), _) => {
                    let _ = write!(out, "latency {} -> {}: {}", t.from, t.to, l);
                    if !t.overruns.is_empty() {
                        let ids: Vec<String> = t.overruns.iter().map(|id| format!("t{id}")).collect();
                        let _ = write!(out, " (deadline overrun during the change: {})", ids.join(", "));
                    }
                    out.push('\n');
                }
                (None, Some(e)) => {
                    let _ = writeln!(out, "latency {} -> {}: {}", t.from, t.to, e);
                }
                (None, None) => {}
            }
        }
        out
    }

    pub fn write_tasks_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["mode", "task", "P", "C", "B", "T", "D", "O", "R", "feasible"])?;
        for t in &self.tasks {
            out.write_record([
                t.mode.clone(),
                t.task.to_string(),
                t.priority.to_string(),
                t.wcet.to_string(),
                t.blocking.to_string(),
                t.period.to_string(),
                t.deadline.to_string(),
                t.offset.to_string(),
                t.response.map(|r| r.to_string()).unwrap_or_default(),
                t.feasible().to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_transitions_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["from", "to", "latency", "overruns", "error"])?;
        for t in &self.transitions {
            let overruns: Vec<String> = t.overruns.iter().map(|id| id.to_string()).collect();
            out.write_record([
                t.from.clone(),
                t.to.clone(),
                t.latency.map(|l| l.to_string()).unwrap_or_default(),
                overruns.join(" "),
                t.error.clone().unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}
