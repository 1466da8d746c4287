//! Mode manager and fault generator.
//!
//! Classifies tasks across a transition, computes release offsets, runs the
//! proactive release gate and produces fault arrival times.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::model::{ModeSpec, TransitionClass};
use crate::{TaskId, Time};

/// What drives mode changes in a simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TriggerKind {
    /// Single mode: never changes, instrumentation only.
    Mono,
    /// Switch to HI after a fault once a deadline has already been missed.
    Reactive,
    /// Fuzzy risk on the observed worst-case laxity.
    Fuzzy,
    /// Fuzzy risk on the forecast worst-case laxity.
    FuzzyPredictor,
    /// Requests at exponentially distributed instants, cycling through the
    /// declared modes (validation scenario).
    Random,
}

impl TriggerKind {
    pub const CASE_STUDY: [TriggerKind; 4] =
        [TriggerKind::Mono, TriggerKind::Reactive, TriggerKind::Fuzzy, TriggerKind::FuzzyPredictor];

    pub fn as_str(self) -> &'static str {
        match self {
            TriggerKind::Mono => "mono",
            TriggerKind::Reactive => "reactive",
            TriggerKind::Fuzzy => "fuzzy",
            TriggerKind::FuzzyPredictor => "fuzzy-predictor",
            TriggerKind::Random => "random",
        }
    }

    pub fn is_proactive(self) -> bool {
        matches!(self, TriggerKind::Fuzzy | TriggerKind::FuzzyPredictor)
    }
}

impl core::str::FromStr for TriggerKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mono" => Ok(TriggerKind::Mono),
            "reactive" => Ok(TriggerKind::Reactive),
            "fuzzy" => Ok(TriggerKind::Fuzzy),
            "fuzzy-predictor" | "fuzzy+predictor" => Ok(TriggerKind::FuzzyPredictor),
            "random" => Ok(TriggerKind::Random),
            other => Err(format!("unknown trigger kind '{other}'")),
        }
    }
}

/// What happens to pending jobs of tasks that leave the task set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbortPolicy {
    /// Pending jobs run to completion (class O).
    Complete,
    /// Pending jobs are aborted at the request (class A).
    Abort,
}

/// Per-task roles and offsets for one transition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionPlan {
    pub old_mode: String,
    pub new_mode: String,
    pub classes: BTreeMap<TaskId, TransitionClass>,
    /// `Y` for W/C tasks and `Z` for U tasks, as declared by the new mode.
    pub offsets: BTreeMap<TaskId, Time>,
}

impl TransitionPlan {
    pub fn class(&self, id: TaskId) -> Option<TransitionClass> {
        self.classes.get(&id).copied()
    }

    /// Tasks in `class`, ascending id.
    pub fn tasks_in(&self, class: TransitionClass) -> Vec<TaskId> {
        self.classes.iter().filter(|(_, c)| **c == class).map(|(id, _)| *id).collect()
    }
}

/// Classify every task of `old ∪ new`.
///
/// Between two criticality modes every surviving task switches to the
/// budget and priority of the other level and is therefore changed (C);
/// between generic modes a surviving task is unchanged (U) when its
/// C, T and D are equal.
pub fn classify_transition(old: &ModeSpec, new: &ModeSpec, abort: AbortPolicy) -> TransitionPlan {
    let criticality_switch = old.criticality.is_some()
        && new.criticality.is_some()
        && old.criticality != new.criticality;
    let mut classes = BTreeMap::new();
    let mut offsets = BTreeMap::new();
    for t in &old.tasks {
        let class = match new.task(t.id) {
            Some(n) if !criticality_switch && t.same_timing(n) => TransitionClass::Unchanged,
            Some(_) => TransitionClass::Changed,
            None => match abort {
                AbortPolicy::Complete => TransitionClass::Completed,
                AbortPolicy::Abort => TransitionClass::Aborted,
            },
        };
        classes.insert(t.id, class);
    }
    for t in &new.tasks {
        classes.entry(t.id).or_insert(TransitionClass::WhollyNew);
        offsets.insert(t.id, t.offset);
    }
    TransitionPlan {
        old_mode: old.name.clone(),
        new_mode: new.name.clone(),
        classes,
        offsets,
    }
}

/// Delay from `request` to the next multiple of `period` (zero when the
/// request is itself a multiple).
pub fn next_multiple_offset(request: Time, period: Time) -> Time {
    request.div_ceil(period) * period - request
}

/// State of the LO-release gate used by the proactive protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateState {
    /// LO tasks release normally.
    Open,
    /// New LO releases suppressed; in-flight LO jobs finishing.
    Draining,
    /// HI mode committed.
    Closed,
}

/// Action requested by the gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateAction {
    None,
    /// Begin suppressing LO releases.
    StartDraining,
    /// Commit the LO → HI change (no LO job is aborted).
    Commit,
    /// False alarm: resume LO releases.
    Reopen,
}

/// Inputs to one gate evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GateInput {
    pub now: Time,
    /// Fuzzy decision at this instant.
    pub trigger: bool,
    /// LO jobs still released and unfinished.
    pub lo_in_flight: usize,
    /// A fault has occurred since draining began.
    pub fault_seen: bool,
}

/// Proactive release gate.
///
/// A trigger starts draining. The change commits once the drain is over
/// and a fault (the actual change request) has arrived. Without a fault
/// inside the confirmation window the gate reopens.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gate {
    pub state: GateState,
    pub since: Time,
    pub confirm_window: Time,
}

impl Gate {
    pub fn new(confirm_window: Time) -> Self {
        Gate { state: GateState::Open, since: 0, confirm_window }
    }

    pub fn proactive_gate(&mut self, input: GateInput) -> GateAction {
        match self.state {
            GateState::Open if input.trigger => {
                self.state = GateState::Draining;
                self.since = input.now;
                GateAction::StartDraining
            }
            GateState::Open => GateAction::None,
            GateState::Draining => {
                if input.fault_seen && input.lo_in_flight == 0 {
                    self.state = GateState::Closed;
                    self.since = input.now;
                    GateAction::Commit
                } else if !input.fault_seen && input.now >= self.since + self.confirm_window {
                    self.state = GateState::Open;
                    self.since = input.now;
                    GateAction::Reopen
                } else {
                    GateAction::None
                }
            }
            GateState::Closed => GateAction::None,
        }
    }

    /// HI → LO return.
    pub fn reopen_after_recovery(&mut self, now: Time) {
        debug_assert_eq!(self.state, GateState::Closed);
        self.state = GateState::Open;
        self.since = now;
    }

    pub fn blocks_lo_releases(&self) -> bool {
        self.state != GateState::Open
    }
}

/// Legal gate moves.
pub fn gate_transition_allowed(from: GateState, to: GateState) -> bool {
    matches!(
        (from, to),
        (GateState::Open, GateState::Draining)
            | (GateState::Draining, GateState::Closed)
            | (GateState::Draining, GateState::Open)
            | (GateState::Closed, GateState::Open)
    )
}

/// Inter-arrival distribution of faults, in analysis ticks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FaultDistribution {
    Exponential { mean: f64 },
    Normal { mean: f64, stddev: f64 },
}

fn default_true() -> bool {
    true
}
fn default_inflation() -> f64 {
    1.5
}

/// Fault generation and its effect on the workload.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultModel {
    #[serde(default = "default_true")]
    pub active: bool,
    pub distribution: FaultDistribution,
    /// Time units per inter-arrival unit; `None` means one analysis tick
    /// (gcd of the periods).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_unit: Option<Time>,
    /// Execution demand of jobs released within one analysis window after
    /// a fault is multiplied by this factor (capped at the deadline).
    #[serde(default = "default_inflation")]
    pub inflation: f64,
}

impl Default for FaultModel {
    fn default() -> Self {
        FaultModel {
            active: true,
            distribution: FaultDistribution::Exponential { mean: 10.0 },
            time_unit: None,
            inflation: 1.5,
        }
    }
}

impl FaultModel {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self.distribution {
            FaultDistribution::Exponential { mean } => {
                if !(mean > 0.0 && mean.is_finite()) {
                    out.push(format!("exponential mean must be positive, got {mean}"));
                }
            }
            FaultDistribution::Normal { mean, stddev } => {
                if !mean.is_finite() || !(stddev >= 0.0 && stddev.is_finite()) {
                    out.push(format!("invalid normal parameters ({mean}, {stddev})"));
                }
                if mean <= 0.0 && stddev == 0.0 {
                    out.push("normal distribution never yields a positive spacing".into());
                }
            }
        }
        if !(self.inflation >= 1.0 && self.inflation.is_finite()) {
            out.push(format!("inflation factor must be >= 1, got {}", self.inflation));
        }
        if self.time_unit == Some(0) {
            out.push("time unit must be positive".into());
        }
        out
    }

    /// Inflated execution demand of a job released under fault pressure.
    pub fn inflate(&self, wcet: Time, deadline: Time) -> Time {
        let scaled = libm::ceil(wcet as f64 * self.inflation) as Time;
        scaled.clamp(wcet, deadline.max(wcet))
    }
}

/// RNG streams. Every purpose owns one ChaCha stream of the run seed so
/// that changing how one purpose consumes randomness leaves the others
/// untouched.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum RngStream {
    Faults = 1,
    Requests = 2,
}

pub fn stream_rng(seed: u64, stream: RngStream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Sequence of positive integer fault inter-arrival times.
///
/// The sequence depends only on the seed and the model, so scenarios run
/// with the same seed consume the same spacings in the same order even
/// when fault generation is suspended for different spans.
pub struct FaultStream {
    rng: ChaCha8Rng,
    model: FaultModel,
    unit: Time,
}

impl FaultStream {
    pub fn new(model: FaultModel, seed: u64, tick: Time) -> Self {
        FaultStream {
            rng: stream_rng(seed, RngStream::Faults),
            model,
            unit: model.time_unit.unwrap_or(tick).max(1),
        }
    }

    fn sample_units(&mut self) -> f64 {
        match self.model.distribution {
            FaultDistribution::Exponential { mean } => {
                let d = Exp::new(1.0 / mean).expect("validated mean");
                d.sample(&mut self.rng)
            }
            FaultDistribution::Normal { mean, stddev } => {
                let d = Normal::new(mean, stddev).expect("validated stddev");
                // Non-positive draws are re-sampled.
                loop {
                    let v = d.sample(&mut self.rng);
                    if v > 0.0 {
                        return v;
                    }
                }
            }
        }
    }

    /// Next spacing in time units, at least 1.
    pub fn next_gap(&mut self) -> Time {
        let v = self.sample_units() * self.unit as f64;
        (libm::round(v) as Time).max(1)
    }
}

/// Fault instants in `[warmup, horizon]` for an uninterrupted LO mode.
pub fn fault_schedule(model: &FaultModel, seed: u64, tick: Time, warmup: Time, horizon: Time) -> Vec<Time> {
    let mut out = Vec::new();
    if !model.active {
        return out;
    }
    let mut stream = FaultStream::new(*model, seed, tick);
    let mut t = warmup + stream.next_gap();
    while t <= horizon {
        out.push(t);
        t += stream.next_gap();
    }
    out
}

/// Exponentially spaced instants (mean `mean`) used to drive random mode
/// changes.
pub struct RequestStream {
    rng: ChaCha8Rng,
    dist: Exp<f64>,
}

impl RequestStream {
    pub fn new(mean: f64, seed: u64) -> Self {
        RequestStream {
            rng: stream_rng(seed, RngStream::Requests),
            dist: Exp::new(1.0 / mean).expect("validated mean"),
        }
    }

    pub fn next_gap(&mut self) -> Time {
        (libm::round(self.dist.sample(&mut self.rng)) as Time).max(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Policy;
    use crate::presets;

    #[test]
    fn validation_forward_classes() {
        let cfg = presets::validation();
        let plan = classify_transition(&cfg.modes[0], &cfg.modes[1], AbortPolicy::Complete);
        let letters: Vec<(TaskId, char)> =
            plan.classes.iter().map(|(id, c)| (*id, c.letter())).collect();
        assert_eq!(
            letters,
            alloc::vec![(1, 'U'), (2, 'W'), (3, 'C'), (4, 'U'), (5, 'C'), (6, 'O')]
        );
        assert_eq!(plan.offsets[&2], 195);
        assert_eq!(plan.offsets[&4], 70);
    }

    #[test]
    fn identical_modes_are_unchanged() {
        let cfg = presets::validation();
        let plan = classify_transition(&cfg.modes[1], &cfg.modes[1], AbortPolicy::Abort);
        assert!(plan.classes.values().all(|c| *c == TransitionClass::Unchanged));
    }

    #[test]
    fn lo_to_hi_classes() {
        let modes = presets::case_study(Policy::Fp).effective_modes();
        let drain = classify_transition(&modes[0], &modes[1], AbortPolicy::Complete);
        let abort = classify_transition(&modes[0], &modes[1], AbortPolicy::Abort);
        assert_eq!(drain.tasks_in(TransitionClass::Completed), [3, 5]);
        assert_eq!(abort.tasks_in(TransitionClass::Aborted), [3, 5]);
        assert_eq!(drain.tasks_in(TransitionClass::Changed), [1, 2, 4]);
        let back = classify_transition(&modes[1], &modes[0], AbortPolicy::Abort);
        assert_eq!(back.tasks_in(TransitionClass::WhollyNew), [3, 5]);
    }

    #[test]
    fn next_multiple() {
        assert_eq!(next_multiple_offset(350, 280), 210);
        assert_eq!(next_multiple_offset(600, 300), 0);
        assert_eq!(next_multiple_offset(2015, 100), 85);
    }

    #[test]
    fn gate_drains_then_commits() {
        let mut g = Gate::new(400);
        let inp = |now, trigger, lo, fault| GateInput { now, trigger, lo_in_flight: lo, fault_seen: fault };
        assert_eq!(g.proactive_gate(inp(100, true, 2, false)), GateAction::StartDraining);
        // Re-trigger while draining is a no-op.
        assert_eq!(g.proactive_gate(inp(110, true, 2, false)), GateAction::None);
        assert_eq!(g.proactive_gate(inp(120, false, 1, true)), GateAction::None);
        assert_eq!(g.proactive_gate(inp(130, false, 0, true)), GateAction::Commit);
        assert_eq!(g.state, GateState::Closed);
        g.reopen_after_recovery(9000);
        assert_eq!(g.state, GateState::Open);
    }

    #[test]
    fn gate_false_alarm_reopens() {
        let mut g = Gate::new(400);
        let inp = |now, trigger| GateInput { now, trigger, lo_in_flight: 0, fault_seen: false };
        g.proactive_gate(inp(100, true));
        assert_eq!(g.proactive_gate(inp(499, false)), GateAction::None);
        assert_eq!(g.proactive_gate(inp(500, false)), GateAction::Reopen);
        assert_eq!(g.state, GateState::Open);
    }

    #[test]
    fn gate_moves_are_legal() {
        use GateState::*;
        assert!(gate_transition_allowed(Open, Draining));
        assert!(!gate_transition_allowed(Open, Closed));
        assert!(!gate_transition_allowed(Closed, Draining));
    }

    #[test]
    fn faults_start_after_warmup() {
        let m = FaultModel::default();
        let s = fault_schedule(&m, 7, 10, 2000, 100_000);
        assert!(!s.is_empty());
        assert!(s[0] >= 2000);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn exponential_mean_within_three_standard_errors() {
        let m = FaultModel {
            distribution: FaultDistribution::Exponential { mean: 10.0 },
            time_unit: Some(1),
            ..FaultModel::default()
        };
        let mut s = FaultStream::new(m, 42, 1);
        let n = 10_000;
        // Sample in raw units to avoid rounding bias.
        let xs: Vec<f64> = (0..n).map(|_| s.sample_units()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = 10.0 / libm::sqrt(n as f64);
        assert!((mean - 10.0).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn normal_spacings_are_positive() {
        let m = FaultModel {
            distribution: FaultDistribution::Normal { mean: 12.0, stddev: 7.0 },
            time_unit: Some(1),
            ..FaultModel::default()
        };
        let mut s = FaultStream::new(m, 3, 1);
        assert!((0..10_000).all(|_| s.sample_units() > 0.0 && s.next_gap() >= 1));
    }

    #[test]
    fn streams_are_independent_of_each_other() {
        use rand::Rng;
        let mut a = stream_rng(5, RngStream::Faults);
        let mut b = stream_rng(5, RngStream::Requests);
        let xa: u64 = a.random();
        let xb: u64 = b.random();
        assert_ne!(xa, xb);
        let again: u64 = stream_rng(5, RngStream::Faults).random();
        assert_eq!(xa, again);
    }

    #[test]
    fn inflation_is_capped_at_deadline() {
        let m = FaultModel::default();
        assert_eq!(m.inflate(40, 280), 60);
        assert_eq!(m.inflate(10, 12), 12);
        assert_eq!(m.inflate(7, 100), 11);
    }
}
