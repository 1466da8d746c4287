//! Task, mode and system configuration types, with validation and the
//! integer timing helpers (gcd, hyperperiod, utilization) the rest of the
//! crate builds on.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fuzzy::FuzzyConfig;
use crate::modemgr::FaultModel;
use crate::predict::PredictorParams;
use crate::{Error, TaskId, Time};

/// Criticality level of a task or of a mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criticality {
    Lo,
    Hi,
}

impl Criticality {
    pub fn as_str(self) -> &'static str {
        match self {
            Criticality::Lo => "LO",
            Criticality::Hi => "HI",
        }
    }
}

/// Scheduling policy of the simulated processor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Policy {
    Edf,
    Fp,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Edf => "EDF",
            Policy::Fp => "FP",
        }
    }
}

/// A mixed-criticality task with per-level parameters.
///
/// Mixed-criticality configurations list these and derive one LO mode and
/// one HI mode from them (see [`criticality_modes`]).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub level: Criticality,
    /// Priority in LO mode, 1 is highest.
    pub priority_lo: u32,
    /// Priority in HI mode; absent for LO-only tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority_hi: Option<u32>,
    pub wcet_lo: Time,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wcet_hi: Option<Time>,
    pub period: Time,
    pub deadline: Time,
    #[serde(default)]
    pub offset: Time,
    #[serde(default)]
    pub blocking: Time,
}

/// The parameters one task runs with inside one mode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeTask {
    pub id: TaskId,
    pub priority: u32,
    pub wcet: Time,
    pub period: Time,
    pub deadline: Time,
    /// Release offset applied when the system switches *into* this mode:
    /// `Y` for wholly new and changed tasks, `Z` for unchanged ones.
    #[serde(default)]
    pub offset: Time,
    #[serde(default)]
    pub blocking: Time,
    #[serde(default = "default_level")]
    pub level: Criticality,
}

fn default_level() -> Criticality {
    Criticality::Lo
}

impl ModeTask {
    /// Same timing demand (C, T, D). Priority is not part of the
    /// comparison: a task whose priority shifts only because another task
    /// was inserted above it is still unchanged.
    pub fn same_timing(&self, other: &ModeTask) -> bool {
        self.wcet == other.wcet && self.period == other.period && self.deadline == other.deadline
    }
}

/// A fixed task set for one operating condition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub name: String,
    /// Criticality of the mode; `None` for generic (non mixed-criticality)
    /// modes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub criticality: Option<Criticality>,
    pub tasks: Vec<ModeTask>,
}

impl ModeSpec {
    pub fn task(&self, id: TaskId) -> Option<&ModeTask> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn contains(&self, id: TaskId) -> bool {
        self.task(id).is_some()
    }

    /// Tasks sorted by (priority, id), highest priority first.
    pub fn by_priority(&self) -> Vec<&ModeTask> {
        let mut v: Vec<&ModeTask> = self.tasks.iter().collect();
        v.sort_by_key(|t| (t.priority, t.id));
        v
    }
}

/// Role of a task across one (old mode, new mode) transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TransitionClass {
    /// Old-mode task whose pending job completes; no further releases.
    #[serde(rename = "O")]
    Completed,
    /// Old-mode task whose pending job is aborted at the request.
    #[serde(rename = "A")]
    Aborted,
    /// Task that exists only in the new mode.
    #[serde(rename = "W")]
    WhollyNew,
    /// Task in both modes whose parameters change.
    #[serde(rename = "C")]
    Changed,
    /// Task in both modes with identical timing.
    #[serde(rename = "U")]
    Unchanged,
}

impl TransitionClass {
    pub fn letter(self) -> char {
        match self {
            TransitionClass::Completed => 'O',
            TransitionClass::Aborted => 'A',
            TransitionClass::WhollyNew => 'W',
            TransitionClass::Changed => 'C',
            TransitionClass::Unchanged => 'U',
        }
    }

    /// The old-mode incarnation has a pending job that must finish.
    pub fn old_must_complete(self) -> bool {
        matches!(self, TransitionClass::Completed | TransitionClass::Changed)
    }

    /// A job of this task pending at the request must finish before the
    /// transition is over.
    pub fn old_job_is_obligation(self) -> bool {
        !matches!(self, TransitionClass::WhollyNew | TransitionClass::Aborted)
    }

    /// A fresh new-mode release stream starts at request + offset.
    pub fn starts_new_stream(self) -> bool {
        matches!(self, TransitionClass::WhollyNew | TransitionClass::Changed)
    }
}

/// How release offsets are chosen when entering a mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OffsetRule {
    /// Use the `offset` column declared on each mode task.
    #[default]
    Declared,
    /// Delay to the next multiple of the task's period after the request.
    NextPeriodMultiple,
}

/// Simulated duration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Horizon {
    Time(Time),
    Hyperperiods(u64),
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::Hyperperiods(100)
    }
}

fn default_repetitions() -> u32 {
    10
}
fn default_warmup() -> Time {
    2000
}
fn default_window_multiplier() -> u64 {
    20
}
fn default_recovery_hyperperiods() -> u64 {
    2
}
fn default_confirm_windows() -> u64 {
    2
}
fn default_decision_horizon() -> u32 {
    5
}

/// Full description of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    #[serde(default)]
    pub name: String,
    pub policy: Policy,
    /// Mixed-criticality task list; when present and `modes` is empty the
    /// LO and HI modes are derived from it.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tasks: Vec<TaskSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<ModeSpec>,
    #[serde(default)]
    pub initial_mode: usize,
    #[serde(default)]
    pub horizon: Horizon,
    #[serde(default = "default_warmup")]
    pub warmup: Time,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub offsets: OffsetRule,
    /// Mean spacing of randomly arriving mode-change requests (validation
    /// scenario only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_mean: Option<f64>,
    #[serde(default)]
    pub faults: FaultModel,
    #[serde(default)]
    pub predictor: PredictorParams,
    #[serde(default)]
    pub fuzzy: FuzzyConfig,
    /// Analysis window length in gcd(T) units.
    #[serde(default = "default_window_multiplier")]
    pub window_multiplier: u64,
    /// HI-mode dwell before returning to LO, in hyperperiods.
    #[serde(default = "default_recovery_hyperperiods")]
    pub recovery_hyperperiods: u64,
    /// False-alarm confirmation window, in analysis windows.
    #[serde(default = "default_confirm_windows")]
    pub confirm_windows: u64,
    /// Forecast horizon (ticks) fed to the fuzzy engine by the predictor
    /// trigger.
    #[serde(default = "default_decision_horizon")]
    pub decision_horizon: u32,
    /// Keep missed jobs running past their deadline instead of discarding.
    #[serde(default)]
    pub run_to_completion: bool,
}

impl SystemConfig {
    /// Modes as declared, or derived from the mixed-criticality task list.
    pub fn effective_modes(&self) -> Vec<ModeSpec> {
        if self.modes.is_empty() && !self.tasks.is_empty() {
            let (lo, hi) = criticality_modes(&self.tasks);
            alloc::vec![lo, hi]
        } else {
            self.modes.clone()
        }
    }

    /// Every period appearing in any mode.
    pub fn all_periods(&self) -> Vec<Time> {
        let mut set = BTreeSet::new();
        for m in self.effective_modes() {
            for t in &m.tasks {
                set.insert(t.period);
            }
        }
        set.into_iter().collect()
    }

    /// gcd of all periods: the prediction tick.
    pub fn tick(&self) -> Result<Time, Error> {
        let periods = self.all_periods();
        if periods.is_empty() {
            return Err(Error::NoTasks);
        }
        Ok(periods.iter().copied().fold(0, gcd))
    }

    pub fn window(&self) -> Result<Time, Error> {
        Ok(self.tick()? * self.window_multiplier)
    }

    /// Hyperperiod over all periods of all modes.
    pub fn hyperperiod(&self) -> Result<Time, Error> {
        let periods = self.all_periods();
        if periods.is_empty() {
            return Err(Error::NoTasks);
        }
        Ok(periods.iter().copied().fold(1, lcm))
    }

    pub fn horizon_time(&self) -> Result<Time, Error> {
        match self.horizon {
            Horizon::Time(t) => Ok(t),
            Horizon::Hyperperiods(n) => Ok(self.hyperperiod()? * n),
        }
    }

    /// Seeds of the configured repetitions: `seed, seed + 1, ...`.
    pub fn repetition_seeds(&self) -> Vec<u64> {
        (0..self.repetitions as u64).map(|k| self.seed.wrapping_add(k)).collect()
    }
}

/// Derive the LO and HI modes from a mixed-criticality task list.
pub fn criticality_modes(tasks: &[TaskSpec]) -> (ModeSpec, ModeSpec) {
    let lo = tasks
        .iter()
        .map(|t| ModeTask {
            id: t.id,
            priority: t.priority_lo,
            wcet: t.wcet_lo,
            period: t.period,
            deadline: t.deadline,
            offset: t.offset,
            blocking: t.blocking,
            level: t.level,
        })
        .collect();
    let hi = tasks
        .iter()
        .filter(|t| t.level == Criticality::Hi)
        .map(|t| ModeTask {
            id: t.id,
            priority: t.priority_hi.unwrap_or(t.priority_lo),
            wcet: t.wcet_hi.unwrap_or(t.wcet_lo),
            period: t.period,
            deadline: t.deadline,
            offset: t.offset,
            blocking: t.blocking,
            level: t.level,
        })
        .collect();
    (
        ModeSpec { name: "LO".to_string(), criticality: Some(Criticality::Lo), tasks: lo },
        ModeSpec { name: "HI".to_string(), criticality: Some(Criticality::Hi), tasks: hi },
    )
}

/// One broken invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub mode: Option<String>,
    pub task: Option<TaskId>,
    pub field: &'static str,
    pub message: String,
}

impl core::fmt::Display for Violation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        if let Some(m) = &self.mode {
            write!(f, "mode {m}: ")?;
        }
        if let Some(t) = self.task {
            write!(f, "task {t}: ")?;
        }
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn timing_violations(
    out: &mut Vec<Violation>,
    mode: Option<&str>,
    id: TaskId,
    wcet: Time,
    deadline: Time,
    period: Time,
) {
    let v = |field, message: String| Violation {
        mode: mode.map(|s| s.to_string()),
        task: Some(id),
        field,
        message,
    };
    if wcet == 0 {
        out.push(v("wcet", "C must be positive".to_string()));
    }
    if wcet > deadline {
        out.push(v("wcet", format!("C <= D violated ({wcet} > {deadline})")));
    }
    if deadline > period {
        out.push(v("deadline", format!("D <= T violated ({deadline} > {period})")));
    }
    if period == 0 {
        out.push(v("period", "T must be positive".to_string()));
    }
}

/// Check every invariant of the configuration. An empty list means valid.
///
/// Violations are sorted, so the report does not depend on declaration
/// order.
pub fn validate_task_set(config: &SystemConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let cfg = |field, message: String| Violation { mode: None, task: None, field, message };

    let mut ids = BTreeSet::new();
    for t in &config.tasks {
        if !ids.insert(t.id) {
            out.push(Violation {
                mode: None,
                task: Some(t.id),
                field: "id",
                message: "duplicate task id".to_string(),
            });
        }
        timing_violations(&mut out, None, t.id, t.wcet_lo, t.deadline, t.period);
        match t.level {
            Criticality::Hi => match (t.wcet_hi, t.priority_hi) {
                (Some(c_hi), Some(_)) => {
                    timing_violations(&mut out, None, t.id, c_hi, t.deadline, t.period)
                }
                _ => out.push(Violation {
                    mode: None,
                    task: Some(t.id),
                    field: "wcet_hi",
                    message: "HI task must define C(HI) and P(HI)".to_string(),
                }),
            },
            Criticality::Lo => {
                if t.wcet_hi.is_some() || t.priority_hi.is_some() {
                    out.push(Violation {
                        mode: None,
                        task: Some(t.id),
                        field: "wcet_hi",
                        message: "LO task must not define C(HI) or P(HI)".to_string(),
                    });
                }
            }
        }
    }

    let modes = config.effective_modes();
    if modes.is_empty() {
        out.push(cfg("modes", "no modes defined".to_string()));
    }
    for m in &modes {
        let name = Some(m.name.as_str());
        // Every task sharing an id or a priority is reported, so the
        // report does not depend on task order.
        let mut id_count: BTreeMap<TaskId, usize> = BTreeMap::new();
        let mut prio_count: BTreeMap<u32, usize> = BTreeMap::new();
        for t in &m.tasks {
            *id_count.entry(t.id).or_default() += 1;
            *prio_count.entry(t.priority).or_default() += 1;
        }
        for t in &m.tasks {
            if id_count[&t.id] > 1 {
                out.push(Violation {
                    mode: Some(m.name.clone()),
                    task: Some(t.id),
                    field: "id",
                    message: "task listed twice".to_string(),
                });
            }
            if prio_count[&t.priority] > 1 {
                out.push(Violation {
                    mode: Some(m.name.clone()),
                    task: Some(t.id),
                    field: "priority",
                    message: format!("unique priorities violated (priority {})", t.priority),
                });
            }
            if t.priority == 0 {
                out.push(Violation {
                    mode: Some(m.name.clone()),
                    task: Some(t.id),
                    field: "priority",
                    message: "priority must be positive".to_string(),
                });
            }
            timing_violations(&mut out, name, t.id, t.wcet, t.deadline, t.period);
            if m.criticality == Some(Criticality::Hi) && t.level != Criticality::Hi {
                out.push(Violation {
                    mode: Some(m.name.clone()),
                    task: Some(t.id),
                    field: "level",
                    message: "only HI tasks may run in a HI mode".to_string(),
                });
            }
        }
    }
    if !modes.is_empty() && config.initial_mode >= modes.len() {
        out.push(cfg("initial_mode", "initial mode index out of range".to_string()));
    }

    match config.horizon_time() {
        Ok(h) if h > config.warmup => {}
        Ok(h) => out.push(cfg("horizon", format!("horizon {h} must exceed warmup {}", config.warmup))),
        Err(_) => {}
    }
    if config.repetitions == 0 {
        out.push(cfg("repetitions", "at least one repetition required".to_string()));
    }
    if config.window_multiplier == 0 {
        out.push(cfg("window_multiplier", "must be positive".to_string()));
    }
    if let Some(mean) = config.request_mean {
        if !(mean > 0.0 && mean.is_finite()) {
            out.push(cfg("request_mean", "must be positive".to_string()));
        }
    }
    for msg in config.faults.problems() {
        out.push(cfg("faults", msg));
    }
    for msg in config.predictor.problems() {
        out.push(cfg("predictor", msg));
    }
    for msg in config.fuzzy.problems() {
        out.push(cfg("fuzzy", msg));
    }

    out.sort_by(|a, b| {
        (&a.mode, a.task, a.field, &a.message).cmp(&(&b.mode, b.task, b.field, &b.message))
    });
    out.dedup();
    out
}

pub fn gcd(a: Time, b: Time) -> Time {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn lcm(a: Time, b: Time) -> Time {
    if a == 0 || b == 0 {
        0
    } else {
        a / gcd(a, b) * b
    }
}

/// Timing summary of one mode.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodStats {
    pub gcd: Time,
    pub hyperperiod: Time,
    /// Σ C/T as an exact fraction over the hyperperiod.
    pub demand_per_hyperperiod: Time,
    pub utilization: f64,
}

pub fn base_period_stats(mode: &ModeSpec) -> Result<PeriodStats, Error> {
    if mode.tasks.is_empty() {
        return Err(Error::NoTasks);
    }
    let g = mode.tasks.iter().map(|t| t.period).fold(0, gcd);
    let h = mode.tasks.iter().map(|t| t.period).fold(1, lcm);
    let demand: Time = mode.tasks.iter().map(|t| t.wcet * (h / t.period)).sum();
    Ok(PeriodStats {
        gcd: g,
        hyperperiod: h,
        demand_per_hyperperiod: demand,
        utilization: demand as f64 / h as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn validation_is_valid() {
        assert!(validate_task_set(&presets::validation()).is_empty());
    }

    #[test]
    fn case_study_is_valid() {
        assert!(validate_task_set(&presets::case_study(Policy::Edf)).is_empty());
    }

    #[test]
    fn wcet_above_deadline_is_reported() {
        let mut cfg = presets::validation();
        cfg.modes[0].tasks[0].wcet = 50;
        cfg.modes[0].tasks[0].deadline = 40;
        let v = validate_task_set(&cfg);
        assert!(v.iter().any(|v| v.message.contains("C <= D")), "{v:?}");
    }

    #[test]
    fn duplicate_priority_is_reported() {
        let mut cfg = presets::validation();
        cfg.modes[0].tasks[0].priority = 3;
        cfg.modes[0].tasks[2].priority = 3;
        let v = validate_task_set(&cfg);
        assert!(v.iter().any(|v| v.message.contains("unique priorities")), "{v:?}");
    }

    #[test]
    fn deadline_above_period_is_rejected() {
        let mut cfg = presets::validation();
        cfg.modes[1].tasks[0].deadline = 150;
        assert!(validate_task_set(&cfg).iter().any(|v| v.field == "deadline"));
    }

    #[test]
    fn lo_task_in_hi_mode_is_rejected() {
        let mut cfg = presets::validation();
        cfg.modes[0].criticality = Some(Criticality::Hi);
        assert!(validate_task_set(&cfg).iter().any(|v| v.field == "level"));
    }

    #[test]
    fn hi_task_needs_both_budgets() {
        let mut cfg = presets::case_study(Policy::Fp);
        cfg.tasks[0].wcet_hi = None;
        assert!(validate_task_set(&cfg).iter().any(|v| v.field == "wcet_hi"));
    }

    #[test]
    fn validation_is_order_independent() {
        let mut a = presets::validation();
        a.modes[0].tasks[0].wcet = 500;
        a.modes[1].tasks[1].priority = 1;
        let mut b = a.clone();
        b.modes[0].tasks.reverse();
        b.modes[1].tasks.reverse();
        assert_eq!(validate_task_set(&a), validate_task_set(&b));
        assert_eq!(validate_task_set(&a), validate_task_set(&a));
    }

    #[test]
    fn case_study_period_stats() {
        let cfg = presets::case_study(Policy::Edf);
        let lo = &cfg.effective_modes()[0];
        let s = base_period_stats(lo).unwrap();
        assert_eq!(s.hyperperiod, 4200);
        assert_eq!(s.gcd, 10);
        assert_eq!(cfg.window().unwrap(), 200);
    }

    #[test]
    fn validation_utilization() {
        let cfg = presets::validation();
        let m1 = base_period_stats(&cfg.modes[0]).unwrap();
        assert!((m1.utilization - 0.7310).abs() < 5e-5, "{}", m1.utilization);
        let m2 = base_period_stats(&cfg.modes[1]).unwrap();
        assert!((m2.utilization - 0.6635).abs() < 5e-5, "{}", m2.utilization);
    }

    #[test]
    fn empty_mode_has_no_stats() {
        let m = ModeSpec { name: "x".into(), criticality: None, tasks: Vec::new() };
        assert_eq!(base_period_stats(&m), Err(Error::NoTasks));
    }

    #[test]
    fn derived_hi_mode_remaps_priorities() {
        let cfg = presets::case_study(Policy::Fp);
        let modes = cfg.effective_modes();
        let hi = &modes[1];
        let ids: Vec<_> = hi.tasks.iter().map(|t| (t.id, t.priority)).collect();
        assert_eq!(ids, alloc::vec![(1, 1), (2, 2), (4, 3)]);
    }
}
