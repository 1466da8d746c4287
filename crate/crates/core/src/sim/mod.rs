//! Deterministic discrete-event simulation of a preemptive uniprocessor.
//!
//! Jobs are released periodically by per-task streams of the current mode,
//! dispatched by EDF or fixed priority, and either complete or are
//! discarded at their deadline. Mode changes follow the transition classes
//! of [`crate::modemgr`]; the proactive scenarios are driven every
//! analysis tick by [`crate::observe`], [`crate::predict`] and
//! [`crate::fuzzy`].

pub mod job;
pub mod queue;

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::fuzzy;
use crate::model::{validate_task_set, Criticality, ModeSpec, OffsetRule, Policy, SystemConfig, TransitionClass};
use crate::modemgr::{
    classify_transition, next_multiple_offset, AbortPolicy, FaultStream, Gate, GateAction, GateInput,
    GateState, RequestStream, TransitionPlan, TriggerKind,
};
use crate::observe::{laxity, normalized_slope, LaxitySample, LaxityWindow};
use crate::predict::{ErrorStats, ForecastRecord, ForecastTracker, HORIZONS};
use crate::{Error, TaskId, Time};

pub use job::{pick_next, Job};
pub use queue::{Event, EventKind, EventQueue, ModeEventCause};

/// What a run records beyond the counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimOptions {
    /// Per-event trace.
    pub trace: bool,
    /// Laxity/forecast series, one point per tick.
    pub series: bool,
    /// Matched forecast records.
    pub predictions: bool,
}

impl SimOptions {
    pub fn all() -> Self {
        SimOptions { trace: true, series: true, predictions: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TaskStats {
    pub released: u64,
    pub completed: u64,
    pub missed: u64,
    pub aborted: u64,
    pub discarded: u64,
    /// Releases skipped while the proactive gate was draining.
    pub suppressed: u64,
    /// Largest release-to-completion time among completed jobs.
    pub max_response: Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceKind {
    Release,
    Complete,
    Miss,
    Discard,
    Abort,
    Fault,
    Request,
    ModeChange,
    TransitionDone,
    GateDrain,
    GateCommit,
    GateReopen,
    Suppress,
}

impl TraceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceKind::Release => "release",
            TraceKind::Complete => "complete",
            TraceKind::Miss => "miss",
            TraceKind::Discard => "discard",
            TraceKind::Abort => "abort",
            TraceKind::Fault => "fault",
            TraceKind::Request => "request",
            TraceKind::ModeChange => "mode-change",
            TraceKind::TransitionDone => "transition-done",
            TraceKind::GateDrain => "gate-drain",
            TraceKind::GateCommit => "gate-commit",
            TraceKind::GateReopen => "gate-reopen",
            TraceKind::Suppress => "suppress",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time: Time,
    pub event: TraceKind,
    pub task: Option<TaskId>,
    pub job: Option<u64>,
    /// Mode in force after the event.
    pub mode: usize,
    pub detail: String,
}

/// One completed (or still open at the horizon) mode change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeChangeRecord {
    /// Instant the trigger fired (start of draining for the proactive gate).
    pub trigger_time: Time,
    pub trigger: TriggerKind,
    /// Instant the new mode took effect.
    pub request_time: Time,
    pub from: String,
    pub to: String,
    /// Instant the last transition obligation finished.
    pub completion_time: Option<Time>,
    pub latency: Option<Time>,
    pub aborted: u64,
    /// Aborted jobs that had already started executing.
    pub aborted_mid_execution: u64,
    /// LO jobs that were allowed to finish while the gate drained.
    pub drained: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub time: Time,
    pub worst_laxity: f64,
    pub task: Option<TaskId>,
    /// Laxity change per tick, clamped to [−1, 1].
    pub slope: f64,
    /// Clamped forecasts for the horizons in [`HORIZONS`].
    pub forecasts: [f64; 3],
    pub risk: Option<f64>,
    pub trigger: bool,
    pub mode: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub trigger: TriggerKind,
    pub policy: Policy,
    pub seed: u64,
    pub horizon: Time,
    pub warmup: Time,
    pub modes: Vec<String>,
    pub tasks: BTreeMap<TaskId, TaskStats>,
    pub released: u64,
    pub completed: u64,
    pub missed: u64,
    pub aborted: u64,
    pub aborted_mid_execution: u64,
    pub discarded: u64,
    pub in_flight: u64,
    pub busy: Time,
    pub idle: Time,
    /// Busy time inside `[warmup, horizon]`.
    pub busy_after_warmup: Time,
    pub faults: u64,
    /// Faults that occurred while a HI mode was active (always zero).
    pub faults_in_hi: u64,
    /// LO releases while a HI mode was active (always zero).
    pub lo_releases_in_hi: u64,
    pub mode_changes: Vec<ModeChangeRecord>,
    /// Gate state changes `(time, new state)`.
    pub gate: Vec<(Time, GateState)>,
    /// Trigger-to-miss intervals of predicted misses.
    pub anticipation: Vec<Time>,
    /// Forecast errors for the horizons in [`HORIZONS`].
    pub prediction_errors: [ErrorStats; 3],
    pub predictions: Vec<ForecastRecord>,
    pub series: Vec<SeriesPoint>,
    pub trace: Vec<TraceRecord>,
}

impl RunResult {
    fn empty(config: &SystemConfig, trigger: TriggerKind, seed: u64, horizon: Time) -> Self {
        RunResult {
            trigger,
            policy: config.policy,
            seed,
            horizon,
            warmup: config.warmup,
            modes: Vec::new(),
            tasks: BTreeMap::new(),
            released: 0,
            completed: 0,
            missed: 0,
            aborted: 0,
            aborted_mid_execution: 0,
            discarded: 0,
            in_flight: 0,
            busy: 0,
            idle: horizon,
            busy_after_warmup: 0,
            faults: 0,
            faults_in_hi: 0,
            lo_releases_in_hi: 0,
            mode_changes: Vec::new(),
            gate: Vec::new(),
            anticipation: Vec::new(),
            prediction_errors: [ErrorStats::default(); 3],
            predictions: Vec::new(),
            series: Vec::new(),
            trace: Vec::new(),
        }
    }

    /// Largest observed latency of changes from mode `from` to `to`.
    pub fn max_latency(&self, from: &str, to: &str) -> Option<Time> {
        self.mode_changes
            .iter()
            .filter(|m| m.from == from && m.to == to)
            .filter_map(|m| m.latency)
            .max()
    }
}

/// Run with counters only.
pub fn run(config: &SystemConfig, trigger: TriggerKind, seed: u64) -> Result<RunResult, Error> {
    run_with(config, trigger, seed, SimOptions::default())
}

/// Run one scenario. The result depends only on the arguments.
pub fn run_with(
    config: &SystemConfig,
    trigger: TriggerKind,
    seed: u64,
    options: SimOptions,
) -> Result<RunResult, Error> {
    let violations = validate_task_set(config);
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(Error::InvalidConfig(text.join("; ")));
    }
    let modes = config.effective_modes();
    if modes.iter().all(|m| m.tasks.is_empty()) {
        let horizon = match config.horizon {
            crate::Horizon::Time(t) => t,
            crate::Horizon::Hyperperiods(_) => 0,
        };
        return Ok(RunResult::empty(config, trigger, seed, horizon));
    }
    let mut engine = Engine::new(config, modes, trigger, seed, options)?;
    engine.run();
    Ok(engine.finish())
}

#[derive(Debug, Clone, Copy, Default)]
struct Stream {
    epoch: u64,
    /// Next scheduled release, when the stream is live.
    next: Option<Time>,
}

#[derive(Debug, Clone)]
struct Transition {
    record: usize,
    old_jobs: BTreeSet<u64>,
    awaiting_first: BTreeSet<TaskId>,
}

struct Engine<'a> {
    config: &'a SystemConfig,
    modes: Vec<ModeSpec>,
    trigger: TriggerKind,
    options: SimOptions,
    horizon: Time,
    window_len: Time,
    hyperperiod: Time,
    lo_mode: Option<usize>,
    hi_mode: Option<usize>,

    now: Time,
    mode: usize,
    era: u32,
    queue: EventQueue,
    streams: BTreeMap<TaskId, Stream>,
    jobs: Vec<Job>,
    next_seq: u64,

    faults: Option<FaultStream>,
    fault_epoch: u64,
    inflate_until: Time,
    requests: Option<RequestStream>,
    pending_requests: u32,
    mode_epoch: u64,

    window: LaxityWindow,
    previous_sample: Option<LaxitySample>,
    tracker: ForecastTracker,
    gate: Gate,
    fault_seen: bool,
    drain_started: Time,
    drained: u64,
    last_decision: bool,
    edges: VecDeque<Time>,
    transition: Option<Transition>,

    result: RunResult,
}

impl<'a> Engine<'a> {
    fn new(
        config: &'a SystemConfig,
        modes: Vec<ModeSpec>,
        trigger: TriggerKind,
        seed: u64,
        options: SimOptions,
    ) -> Result<Self, Error> {
        let tick = config.tick()?;
        let horizon = config.horizon_time()?;
        let hyperperiod = config.hyperperiod()?;
        let lo_mode = modes.iter().position(|m| m.criticality == Some(Criticality::Lo));
        let hi_mode = modes.iter().position(|m| m.criticality == Some(Criticality::Hi));
        let needs_levels = matches!(
            trigger,
            TriggerKind::Reactive | TriggerKind::Fuzzy | TriggerKind::FuzzyPredictor
        );
        if needs_levels && (lo_mode.is_none() || hi_mode.is_none()) {
            return Err(Error::InvalidConfig(format!(
                "trigger {} needs a LO and a HI mode",
                trigger.as_str()
            )));
        }
        if trigger == TriggerKind::Random && modes.len() < 2 {
            return Err(Error::InvalidConfig("random mode changes need two modes".to_string()));
        }
        if config.initial_mode >= modes.len() {
            return Err(Error::InvalidConfig(format!("initial mode {} out of range", config.initial_mode)));
        }
        let mode = if needs_levels { lo_mode.unwrap_or(0) } else { config.initial_mode };

        let mut result = RunResult::empty(config, trigger, seed, horizon);
        result.idle = 0;
        result.modes = modes.iter().map(|m| m.name.clone()).collect();
        for m in &modes {
            for t in &m.tasks {
                result.tasks.entry(t.id).or_default();
            }
        }
        let window_len = config.window()?;
        let faults = config.faults.active.then(|| FaultStream::new(config.faults, seed, tick));
        let requests = match trigger {
            TriggerKind::Random => Some(RequestStream::new(config.request_mean.unwrap_or(2000.0), seed)),
            _ => None,
        };

        let mut engine = Engine {
            config,
            modes,
            trigger,
            options,
            horizon,
            window_len,
            hyperperiod,
            lo_mode,
            hi_mode,
            now: 0,
            mode,
            era: 0,
            queue: EventQueue::new(),
            streams: BTreeMap::new(),
            jobs: Vec::new(),
            next_seq: 0,
            faults,
            fault_epoch: 0,
            inflate_until: 0,
            requests,
            pending_requests: 0,
            mode_epoch: 0,
            window: LaxityWindow::new(window_len),
            previous_sample: None,
            tracker: ForecastTracker::new(config.predictor, options.predictions),
            gate: Gate::new(config.confirm_windows * window_len),
            fault_seen: false,
            drain_started: 0,
            drained: 0,
            last_decision: false,
            edges: VecDeque::new(),
            transition: None,
            result,
        };

        let ids: Vec<TaskId> = engine.modes[mode].tasks.iter().map(|t| t.id).collect();
        for id in ids {
            engine.start_stream(id, 0);
        }
        let mut t = tick;
        while t <= horizon {
            engine.queue.push(t, EventKind::Tick);
            t += tick;
        }
        engine.schedule_fault_after(config.warmup);
        if let Some(req) = engine.requests.as_mut() {
            let at = req.next_gap();
            engine.queue.push(at, EventKind::ModeChange { cause: ModeEventCause::Request, epoch: 0 });
        }
        Ok(engine)
    }

    fn in_hi(&self) -> bool {
        self.modes[self.mode].criticality == Some(Criticality::Hi)
    }

    fn trace(&mut self, event: TraceKind, task: Option<TaskId>, job: Option<u64>, detail: String) {
        if self.options.trace {
            self.result.trace.push(TraceRecord { time: self.now, event, task, job, mode: self.mode, detail });
        }
    }

    // Streams and releases.

    fn start_stream(&mut self, id: TaskId, at: Time) {
        let s = self.streams.entry(id).or_default();
        s.epoch += 1;
        s.next = Some(at);
        let epoch = s.epoch;
        if at <= self.horizon {
            self.queue.push(at, EventKind::Release { task: id, epoch });
        }
    }

    fn stop_stream(&mut self, id: TaskId) {
        let s = self.streams.entry(id).or_default();
        s.epoch += 1;
        s.next = None;
    }

    fn release(&mut self, id: TaskId, epoch: u64) {
        let Some(stream) = self.streams.get(&id).copied() else { return };
        if stream.epoch != epoch {
            return;
        }
        let Some(task) = self.modes[self.mode].task(id).cloned() else {
            self.stop_stream(id);
            return;
        };
        let next = self.now + task.period;
        if let Some(s) = self.streams.get_mut(&id) {
            s.next = Some(next);
        }
        if next <= self.horizon {
            self.queue.push(next, EventKind::Release { task: id, epoch });
        }

        if self.gate.blocks_lo_releases() && task.level == Criticality::Lo {
            if let Some(st) = self.result.tasks.get_mut(&id) {
                st.suppressed += 1;
            }
            self.trace(TraceKind::Suppress, Some(id), None, String::new());
            return;
        }
        if self.in_hi() && task.level == Criticality::Lo {
            self.result.lo_releases_in_hi += 1;
        }

        let lo_side = self.modes[self.mode].criticality != Some(Criticality::Hi);
        let demand = if lo_side && self.now < self.inflate_until {
            self.config.faults.inflate(task.wcet, task.deadline)
        } else {
            task.wcet
        };
        self.next_seq += 1;
        let seq = self.next_seq;
        self.jobs.push(Job {
            seq,
            task: id,
            mode: self.mode,
            era: self.era,
            release: self.now,
            deadline: self.now + task.deadline,
            relative_deadline: task.deadline,
            priority: task.priority,
            level: task.level,
            demand,
            remaining: demand,
            completion: None,
            missed: false,
        });
        self.queue.push(self.now + task.deadline, EventKind::Deadline { job: seq });
        self.result.released += 1;
        if let Some(st) = self.result.tasks.get_mut(&id) {
            st.released += 1;
        }
        self.trace(TraceKind::Release, Some(id), Some(seq), format!("demand={demand}"));
    }

    // CPU.

    /// Execute jobs up to the next event (or the horizon).
    fn advance(&mut self) {
        loop {
            let target = self.queue.peek_time().unwrap_or(self.horizon).min(self.horizon);
            if self.now >= target {
                return;
            }
            match pick_next(&self.jobs, self.config.policy) {
                None => {
                    self.account(target - self.now, false);
                    self.now = target;
                }
                Some(i) => {
                    let run = self.jobs[i].remaining.min(target - self.now);
                    self.account(run, true);
                    self.now += run;
                    self.jobs[i].remaining -= run;
                    if self.jobs[i].remaining == 0 {
                        self.complete(i);
                        self.after_change();
                    }
                }
            }
        }
    }

    fn account(&mut self, span: Time, busy: bool) {
        if busy {
            self.result.busy += span;
            let start = self.now.max(self.config.warmup);
            let end = self.now + span;
            if end > start {
                self.result.busy_after_warmup += end - start;
            }
        } else {
            self.result.idle += span;
        }
    }

    fn complete(&mut self, i: usize) {
        let mut job = self.jobs.swap_remove(i);
        job.completion = Some(self.now);
        let response = self.now - job.release;
        self.result.completed += 1;
        if let Some(st) = self.result.tasks.get_mut(&job.task) {
            st.completed += 1;
            st.max_response = st.max_response.max(response);
        }
        if !job.missed {
            let lax = laxity(job.relative_deadline, response).unwrap_or(0.0);
            self.window.push(self.now, lax, job.task);
        }
        self.trace(TraceKind::Complete, Some(job.task), Some(job.seq), format!("response={response}"));
        self.job_gone(&job);
    }

    /// Bookkeeping shared by completion, discard and abort.
    fn job_gone(&mut self, job: &Job) {
        if let Some(tr) = self.transition.as_mut() {
            tr.old_jobs.remove(&job.seq);
            if job.era == self.era {
                tr.awaiting_first.remove(&job.task);
            }
        }
    }

    fn deadline(&mut self, seq: u64) {
        let Some(i) = self.jobs.iter().position(|j| j.seq == seq) else { return };
        if self.jobs[i].missed {
            return;
        }
        let job = &mut self.jobs[i];
        job.missed = true;
        let lax = -(job.remaining as f64) / job.relative_deadline as f64;
        let (task, remaining) = (job.task, job.remaining);
        self.result.missed += 1;
        if let Some(st) = self.result.tasks.get_mut(&task) {
            st.missed += 1;
        }
        self.window.push(self.now, lax, task);
        self.trace(TraceKind::Miss, Some(task), Some(seq), format!("remaining={remaining}"));
        // Rising edges within the last window are answered by this miss.
        while let Some(&edge) = self.edges.front() {
            if edge >= self.now {
                break;
            }
            self.edges.pop_front();
            if edge + self.window_len >= self.now {
                self.result.anticipation.push(self.now - edge);
            }
        }
        if !self.config.run_to_completion {
            let job = self.jobs.swap_remove(i);
            self.result.discarded += 1;
            if let Some(st) = self.result.tasks.get_mut(&task) {
                st.discarded += 1;
            }
            self.trace(TraceKind::Discard, Some(task), Some(seq), String::new());
            self.job_gone(&job);
        }
    }

    // Faults and triggers.

    fn schedule_fault_after(&mut self, from: Time) {
        if let Some(stream) = self.faults.as_mut() {
            let at = from + stream.next_gap();
            if at <= self.horizon {
                self.queue.push(at, EventKind::Fault { epoch: self.fault_epoch });
            }
        }
    }

    fn fault(&mut self, epoch: u64) {
        if epoch != self.fault_epoch {
            return;
        }
        if self.in_hi() {
            self.result.faults_in_hi += 1;
        }
        self.result.faults += 1;
        self.inflate_until = self.inflate_until.max(self.now + self.window_len);
        self.trace(TraceKind::Fault, None, None, String::new());
        if self.gate.state == GateState::Draining {
            self.fault_seen = true;
        }
        let now = self.now;
        self.schedule_fault_after(now);
        if self.trigger == TriggerKind::Reactive
            && !self.in_hi()
            && self.transition.is_none()
            && self.window.window_worst_laxity(now).worst_laxity <= 0.0
        {
            let to = self.hi_mode.unwrap_or(self.mode);
            self.change_mode(to, AbortPolicy::Abort, now);
        }
    }

    fn tick(&mut self) {
        let now = self.now;
        let sample = self.window.window_worst_laxity(now);
        let slope = match &self.previous_sample {
            Some(prev) => normalized_slope(prev, &sample, now - prev.time).unwrap_or(0.0),
            None => 0.0,
        };
        self.previous_sample = Some(sample);
        // Finite by construction.
        let _ = self.tracker.observe(now, sample.worst_laxity);
        let mut forecasts = [0.0; 3];
        for (slot, h) in HORIZONS.iter().enumerate() {
            forecasts[slot] = self.tracker.forecast(*h).map(|f| f.clamped).unwrap_or(sample.worst_laxity);
        }

        let mut risk = None;
        let mut decision = false;
        if self.trigger.is_proactive() && !self.in_hi() {
            let input = match self.trigger {
                TriggerKind::FuzzyPredictor => self
                    .tracker
                    .forecast(self.config.decision_horizon as usize)
                    .map(|f| f.clamped)
                    .unwrap_or(sample.worst_laxity),
                _ => sample.worst_laxity,
            };
            let inference = fuzzy::infer(slope, input, &self.config.fuzzy);
            decision = fuzzy::decide(inference.risk, self.config.fuzzy.threshold);
            risk = Some(inference.risk);
            if decision && !self.last_decision {
                self.edges.push_back(now);
            }
            if self.gate.state == GateState::Open && self.transition.is_none() {
                self.step_gate(decision);
            }
        }
        self.last_decision = decision;

        if self.options.series {
            self.result.series.push(SeriesPoint {
                time: now,
                worst_laxity: sample.worst_laxity,
                task: sample.task,
                slope,
                forecasts,
                risk,
                trigger: decision,
                mode: self.mode,
            });
        }
    }

    fn lo_in_flight(&self) -> usize {
        self.jobs.iter().filter(|j| j.level == Criticality::Lo).count()
    }

    fn step_gate(&mut self, trigger: bool) {
        let input = GateInput {
            now: self.now,
            trigger,
            lo_in_flight: self.lo_in_flight(),
            fault_seen: self.fault_seen,
        };
        match self.gate.proactive_gate(input) {
            GateAction::None => {}
            GateAction::StartDraining => {
                self.fault_seen = false;
                self.drain_started = self.now;
                self.drained = input.lo_in_flight as u64;
                self.result.gate.push((self.now, GateState::Draining));
                self.trace(TraceKind::GateDrain, None, None, format!("in-flight={}", input.lo_in_flight));
            }
            GateAction::Commit => {
                self.result.gate.push((self.now, GateState::Closed));
                self.trace(TraceKind::GateCommit, None, None, String::new());
                let to = self.hi_mode.unwrap_or(self.mode);
                let now = self.now;
                self.change_mode(to, AbortPolicy::Complete, now);
            }
            GateAction::Reopen => {
                self.result.gate.push((self.now, GateState::Open));
                self.trace(TraceKind::GateReopen, None, None, String::new());
            }
        }
    }

    fn mode_event(&mut self, cause: ModeEventCause, epoch: u64) {
        match cause {
            ModeEventCause::Request => {
                let now = self.now;
                self.trace(TraceKind::Request, None, None, String::new());
                if let Some(req) = self.requests.as_mut() {
                    let at = now + req.next_gap();
                    if at <= self.horizon {
                        self.queue.push(at, EventKind::ModeChange { cause: ModeEventCause::Request, epoch: 0 });
                    }
                }
                if self.transition.is_some() {
                    self.pending_requests += 1;
                } else {
                    let to = (self.mode + 1) % self.modes.len();
                    self.change_mode(to, AbortPolicy::Complete, now);
                }
            }
            ModeEventCause::Return => {
                if epoch != self.mode_epoch || !self.in_hi() {
                    return;
                }
                if self.transition.is_some() {
                    self.pending_requests += 1;
                    return;
                }
                let to = self.lo_mode.unwrap_or(0);
                let now = self.now;
                self.change_mode(to, AbortPolicy::Complete, now);
            }
        }
    }

    // Mode changes.

    fn offset_for(&self, plan: &TransitionPlan, id: TaskId, period: Time, class: TransitionClass) -> Time {
        match self.config.offsets {
            OffsetRule::Declared => plan.offsets.get(&id).copied().unwrap_or(0),
            OffsetRule::NextPeriodMultiple => match class {
                TransitionClass::Unchanged => 0,
                _ => next_multiple_offset(self.now, period),
            },
        }
    }

    /// Switch to mode `to` at `now` and open a transition record.
    fn change_mode(&mut self, to: usize, abort: AbortPolicy, now: Time) {
        debug_assert_eq!(now, self.now);
        let from = self.mode;
        let plan = classify_transition(&self.modes[from], &self.modes[to], abort);
        let trigger_time = if self.gate.state == GateState::Closed && self.trigger.is_proactive() {
            self.drain_started
        } else {
            now
        };
        let mut record = ModeChangeRecord {
            trigger_time,
            trigger: self.trigger,
            request_time: now,
            from: self.modes[from].name.clone(),
            to: self.modes[to].name.clone(),
            completion_time: None,
            latency: None,
            aborted: 0,
            aborted_mid_execution: 0,
            drained: if self.gate.state == GateState::Closed { self.drained } else { 0 },
        };
        let mut old_jobs = BTreeSet::new();
        let mut awaiting_first = BTreeSet::new();

        self.mode = to;
        self.era += 1;

        for (&id, &class) in &plan.classes {
            match class {
                TransitionClass::Aborted => {
                    self.stop_stream(id);
                    let mut k = 0;
                    while k < self.jobs.len() {
                        if self.jobs[k].task == id {
                            let job = self.jobs.swap_remove(k);
                            record.aborted += 1;
                            self.result.aborted += 1;
                            if job.started() {
                                record.aborted_mid_execution += 1;
                                self.result.aborted_mid_execution += 1;
                            }
                            if let Some(st) = self.result.tasks.get_mut(&id) {
                                st.aborted += 1;
                            }
                            self.trace(TraceKind::Abort, Some(id), Some(job.seq), format!("started={}", job.started()));
                        } else {
                            k += 1;
                        }
                    }
                }
                TransitionClass::Completed => {
                    self.stop_stream(id);
                    old_jobs.extend(self.jobs.iter().filter(|j| j.task == id).map(|j| j.seq));
                }
                TransitionClass::Unchanged => {
                    old_jobs.extend(self.jobs.iter().filter(|j| j.task == id).map(|j| j.seq));
                    let period = self.modes[to].task(id).map_or(1, |t| t.period);
                    let z = self.offset_for(&plan, id, period, class);
                    let next = self.streams.get(&id).and_then(|s| s.next);
                    match next {
                        Some(_) if z == 0 => {}
                        Some(n) => self.start_stream(id, n + z),
                        None => self.start_stream(id, now + z),
                    }
                }
                TransitionClass::Changed | TransitionClass::WhollyNew => {
                    if class == TransitionClass::Changed {
                        old_jobs.extend(self.jobs.iter().filter(|j| j.task == id).map(|j| j.seq));
                    }
                    let period = self.modes[to].task(id).map_or(1, |t| t.period);
                    let y = self.offset_for(&plan, id, period, class);
                    self.start_stream(id, now + y);
                    awaiting_first.insert(id);
                }
            }
        }

        self.result.mode_changes.push(record);
        let index = self.result.mode_changes.len() - 1;
        self.trace(
            TraceKind::ModeChange,
            None,
            None,
            format!("{}->{}", self.modes[from].name, self.modes[to].name),
        );
        self.transition = Some(Transition { record: index, old_jobs, awaiting_first });

        if self.modes[to].criticality == Some(Criticality::Hi) {
            // Fault generation is suspended while HI is active.
            self.fault_epoch += 1;
            self.mode_epoch += 1;
            let back = now + self.config.recovery_hyperperiods * self.hyperperiod;
            if back <= self.horizon {
                self.queue.push(back, EventKind::ModeChange { cause: ModeEventCause::Return, epoch: self.mode_epoch });
            }
            self.edges.clear();
            self.last_decision = false;
        } else if self.modes[from].criticality == Some(Criticality::Hi) {
            if self.trigger.is_proactive() {
                self.gate.reopen_after_recovery(now);
                self.result.gate.push((now, GateState::Open));
            }
            self.schedule_fault_after(now);
        }
        self.finish_transition_if_done();
    }

    fn finish_transition_if_done(&mut self) {
        let done = self
            .transition
            .as_ref()
            .is_some_and(|t| t.old_jobs.is_empty() && t.awaiting_first.is_empty());
        if !done {
            return;
        }
        let tr = self.transition.take().unwrap_or_else(|| unreachable!());
        let rec = &mut self.result.mode_changes[tr.record];
        rec.completion_time = Some(self.now);
        rec.latency = Some(self.now - rec.request_time);
        let detail = format!("latency={}", self.now - rec.request_time);
        self.trace(TraceKind::TransitionDone, None, None, detail);
        if self.pending_requests > 0 {
            self.pending_requests -= 1;
            let now = self.now;
            if self.trigger == TriggerKind::Random {
                let to = (self.mode + 1) % self.modes.len();
                self.change_mode(to, AbortPolicy::Complete, now);
            } else if self.in_hi() {
                self.mode_event(ModeEventCause::Return, self.mode_epoch);
            }
        }
    }

    /// Checks that follow any state change.
    fn after_change(&mut self) {
        self.finish_transition_if_done();
        if self.trigger.is_proactive() && self.gate.state == GateState::Draining {
            self.step_gate(false);
        }
    }

    fn run(&mut self) {
        loop {
            self.advance();
            match self.queue.peek_time() {
                Some(t) if t <= self.horizon => {}
                _ => break,
            }
            let Some(event) = self.queue.pop() else { break };
            self.now = event.time;
            match event.kind {
                EventKind::Fault { epoch } => self.fault(epoch),
                EventKind::ModeChange { cause, epoch } => self.mode_event(cause, epoch),
                EventKind::Release { task, epoch } => self.release(task, epoch),
                EventKind::Deadline { job } => self.deadline(job),
                EventKind::Tick => self.tick(),
            }
            self.after_change();
        }
        if self.now < self.horizon {
            let span = self.horizon - self.now;
            self.account(span, false);
            self.now = self.horizon;
        }
    }

    fn finish(mut self) -> RunResult {
        self.result.in_flight = self.jobs.len() as u64;
        self.result.prediction_errors = self.tracker.stats;
        self.result.predictions = core::mem::take(&mut self.tracker.records);
        self.result
    }
}
