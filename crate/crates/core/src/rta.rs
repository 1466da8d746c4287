//! Response-time analysis for fixed-priority preemptive uniprocessors.
//!
//! Three recurrences are implemented:
//!
//! * the classical steady-state recurrence
//!   `w = C_i + B_i + Σ_{hp(i)} ⌈w/T_j⌉ C_j`;
//! * the old-mode recurrence across a mode change, where the request
//!   arrives `x` time units after the activation of the task under
//!   analysis and higher-priority tasks are split into completed (O),
//!   aborted (A), new (N, released at offset `Y_j` after the request) and
//!   unchanged (U, next release `Z_j` after the end of their current
//!   period) sets;
//! * the new-mode recurrence for the first job of a new or changed task,
//!   measured from the request.
//!
//! Every recurrence starts from `w = 0` and iterates until a fixed point
//! or until the iterate exceeds its threshold. In steady state the
//! threshold is the deadline. Across a mode change a job may overrun its
//! deadline, so the threshold is the deadline plus one hyperperiod of the
//! tasks involved and [`RtaResult::meets_deadline`] records the overrun.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::model::{lcm, ModeSpec, ModeTask, TransitionClass};
use crate::modemgr::TransitionPlan;
use crate::{TaskId, Time};

/// Hard stop on the number of iterations of any recurrence.
pub const ITERATION_CAP: u32 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RtaError {
    #[error("task {task} infeasible: iterate {last_iterate} exceeds its threshold")]
    Infeasible { task: TaskId, last_iterate: Time },
    #[error("task {task} infeasible during mode change: iterate {last_iterate} exceeds its threshold")]
    InfeasibleDuringChange { task: TaskId, last_iterate: Time },
    #[error("task {0} has no release offset")]
    MissingOffset(TaskId),
    #[error("task {0} is not part of the mode")]
    UnknownTask(TaskId),
    #[error("iteration cap reached for task {0}")]
    IterationCap(TaskId),
}

/// `⌈z/t⌉₀`: the ceiling of `z/t`, or zero for `z ≤ 0`.
pub fn ceil0(z: i64, t: Time) -> i64 {
    if z <= 0 {
        0
    } else {
        (z + t as i64 - 1) / t as i64
    }
}

fn ceil_div(a: Time, b: Time) -> Time {
    a.div_ceil(b)
}

/// A higher-priority task as seen by the task under analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interferer {
    pub id: TaskId,
    pub wcet: Time,
    pub period: Time,
    /// `Y_j` for new tasks, `Z_j` for unchanged tasks, unused otherwise.
    pub offset: Time,
}

impl Interferer {
    fn of(t: &ModeTask, offset: Time) -> Self {
        Interferer { id: t.id, wcet: t.wcet, period: t.period, offset }
    }
}

/// Inputs of the mode-change recurrences for one task.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RecurrenceContext {
    pub task: TaskId,
    pub wcet: Time,
    pub deadline: Time,
    pub period: Time,
    pub blocking: Time,
    /// Release offset `Y_i` of the task itself (new-mode analysis only).
    pub offset: Option<Time>,
    pub completed: Vec<Interferer>,
    pub aborted: Vec<Interferer>,
    pub new: Vec<Interferer>,
    pub unchanged: Vec<Interferer>,
    /// Phasing `x` between the activation of the task and the request;
    /// `None` sweeps every integer phasing in `[0, T_i)`.
    pub phasing: Option<Time>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RtaResult {
    pub task: TaskId,
    /// Worst-case response time.
    pub response: Time,
    /// Maximising phasing `x*` (old-mode analysis).
    pub phasing: Option<Time>,
    pub iterations: u32,
    /// Worst completion instant measured from the mode-change request:
    /// `w(x*) − x*` for old-mode tasks, `Y_i + R_i` for new-mode tasks.
    pub from_request: Option<Time>,
    /// New-mode task released after all higher-priority transition work:
    /// the steady-state result applies.
    pub steady_state_fallback: bool,
    /// `response ≤ D`. A job caught in a mode change may overrun its
    /// deadline without the recurrence diverging.
    pub meets_deadline: bool,
}

struct Fixpoint {
    value: Time,
    iterations: u32,
    #[cfg_attr(not(test), allow(dead_code))]
    iterates: Vec<Time>,
}

enum Divergence {
    Threshold(Time),
    Cap,
}

/// Iterate `w ← f(w)` from zero. `record` keeps the iterate sequence.
fn fixpoint(
    limit: Time,
    record: bool,
    mut f: impl FnMut(Time) -> Time,
) -> Result<Fixpoint, Divergence> {
    let mut w: Time = 0;
    let mut iterates = Vec::new();
    for n in 1..=ITERATION_CAP {
        let next = f(w);
        if record {
            iterates.push(next);
        }
        if next > limit {
            return Err(Divergence::Threshold(next));
        }
        if next == w {
            return Ok(Fixpoint { value: w, iterations: n, iterates });
        }
        w = next;
    }
    Err(Divergence::Cap)
}

fn steady_recurrence(wcet: Time, blocking: Time, hp: &[Interferer], w: Time) -> Time {
    wcet + blocking + hp.iter().map(|j| ceil_div(w, j.period) * j.wcet).sum::<Time>()
}

/// Steady-state worst-case response time of `task` within `mode` under
/// fixed priorities (smaller number = higher priority, ties by id).
pub fn steady_state_wcrt(mode: &ModeSpec, task: TaskId) -> Result<RtaResult, RtaError> {
    let me = mode.task(task).ok_or(RtaError::UnknownTask(task))?;
    let hp: Vec<Interferer> = mode
        .tasks
        .iter()
        .filter(|t| (t.priority, t.id) < (me.priority, me.id))
        .map(|t| Interferer::of(t, 0))
        .collect();
    steady_from(task, me.wcet, me.blocking, me.deadline, &hp)
}

fn steady_from(
    task: TaskId,
    wcet: Time,
    blocking: Time,
    deadline: Time,
    hp: &[Interferer],
) -> Result<RtaResult, RtaError> {
    match fixpoint(deadline, false, |w| steady_recurrence(wcet, blocking, hp, w)) {
        Ok(fp) => Ok(RtaResult {
            task,
            response: fp.value,
            phasing: None,
            iterations: fp.iterations,
            from_request: None,
            steady_state_fallback: false,
            meets_deadline: true,
        }),
        Err(Divergence::Threshold(last)) => Err(RtaError::Infeasible { task, last_iterate: last }),
        Err(Divergence::Cap) => Err(RtaError::IterationCap(task)),
    }
}

/// Right-hand side of the old-mode recurrence at phasing `x`.
pub fn old_mode_rhs(ctx: &RecurrenceContext, x: Time, w: Time) -> Time {
    let xi = x as i64;
    let wi = w as i64;
    let completed: Time = ctx.completed.iter().map(|j| ceil_div(x, j.period) * j.wcet).sum();
    let aborted: Time = ctx
        .aborted
        .iter()
        .map(|j| {
            let whole = x / j.period;
            whole * j.wcet + (x - whole * j.period).min(j.wcet)
        })
        .sum();
    let new: i64 = ctx
        .new
        .iter()
        .map(|j| ceil0(wi - xi - j.offset as i64, j.period) * j.wcet as i64)
        .sum();
    let unchanged: i64 = ctx
        .unchanged
        .iter()
        .map(|j| {
            let before = ceil_div(x, j.period);
            let after = ceil0(wi - (before * j.period) as i64 - j.offset as i64, j.period);
            (before * j.wcet) as i64 + after * j.wcet as i64
        })
        .sum();
    ctx.wcet + ctx.blocking + completed + aborted + new as Time + unchanged as Time
}

fn old_mode_at(
    ctx: &RecurrenceContext,
    x: Time,
    record: bool,
) -> Result<Fixpoint, Divergence> {
    fixpoint(transition_limit(ctx), record, |w| old_mode_rhs(ctx, x, w))
}

/// Divergence bound of the transition recurrences: the deadline plus one
/// hyperperiod of every task involved, past the task's own offset.
fn transition_limit(ctx: &RecurrenceContext) -> Time {
    let hyper = ctx
        .completed
        .iter()
        .chain(&ctx.aborted)
        .chain(&ctx.new)
        .chain(&ctx.unchanged)
        .map(|j| j.period)
        .fold(ctx.period.max(1), lcm);
    ctx.offset.unwrap_or(0) + ctx.deadline + hyper
}

/// The old-mode job's own steady-state bound, using every higher-priority
/// old-mode task (completed, aborted and unchanged) as a periodic
/// interferer.
fn old_steady(ctx: &RecurrenceContext) -> Result<RtaResult, RtaError> {
    let hp: Vec<Interferer> =
        ctx.completed.iter().chain(&ctx.aborted).chain(&ctx.unchanged).copied().collect();
    steady_from(ctx.task, ctx.wcet, ctx.blocking, ctx.deadline, &hp)
}

/// Worst-case response time of an old-mode task whose job is pending when
/// the mode change is requested.
///
/// With a fixed phasing the recurrence is evaluated once. Otherwise every
/// integer phasing in `[0, T_i)` at which the job is still pending at the
/// request (`w(x) > x`) is evaluated; the response is the maximum of those
/// and of the steady-state bound.
pub fn old_mode_wcrt(ctx: &RecurrenceContext) -> Result<RtaResult, RtaError> {
    if let Some(x) = ctx.phasing {
        return match old_mode_at(ctx, x, false) {
            Ok(fp) => Ok(RtaResult {
                task: ctx.task,
                response: fp.value,
                phasing: Some(x),
                iterations: fp.iterations,
                from_request: fp.value.checked_sub(x).filter(|d| *d > 0),
                steady_state_fallback: false,
                meets_deadline: fp.value <= ctx.deadline,
            }),
            Err(Divergence::Threshold(last)) => {
                Err(RtaError::InfeasibleDuringChange { task: ctx.task, last_iterate: last })
            }
            Err(Divergence::Cap) => Err(RtaError::IterationCap(ctx.task)),
        };
    }

    let steady = old_steady(ctx)?;
    let mut best = steady.clone();
    let mut from_request: Option<Time> = None;
    let mut iterations = steady.iterations;
    for x in 0..ctx.period {
        match old_mode_at(ctx, x, false) {
            Ok(fp) => {
                iterations = iterations.saturating_add(fp.iterations);
                if fp.value <= x {
                    // Completed before the request; not a transition job.
                    continue;
                }
                if fp.value > best.response {
                    best.response = fp.value;
                    best.phasing = Some(x);
                }
                let remaining = fp.value - x;
                if from_request.is_none_or(|r| remaining > r) {
                    from_request = Some(remaining);
                }
            }
            Err(Divergence::Threshold(last)) => {
                if last > x {
                    return Err(RtaError::InfeasibleDuringChange {
                        task: ctx.task,
                        last_iterate: last,
                    });
                }
            }
            Err(Divergence::Cap) => return Err(RtaError::IterationCap(ctx.task)),
        }
    }
    best.iterations = iterations;
    best.from_request = from_request;
    best.meets_deadline = best.response <= ctx.deadline;
    Ok(best)
}

fn new_mode_interference(ctx: &RecurrenceContext, w: Time) -> Time {
    let wi = w as i64;
    let completed: Time = ctx.completed.iter().map(|j| j.wcet).sum();
    let new: i64 = ctx
        .new
        .iter()
        .map(|j| ceil0(wi - j.offset as i64, j.period) * j.wcet as i64)
        .sum();
    let unchanged: i64 = ctx
        .unchanged
        .iter()
        .map(|j| {
            j.wcet as i64 + ceil0(wi - j.period as i64 - j.offset as i64, j.period) * j.wcet as i64
        })
        .sum();
    ctx.blocking + completed + new as Time + unchanged as Time
}

/// Right-hand side of the new-mode recurrence including the task's own
/// demand `C_i`.
pub fn new_mode_rhs(ctx: &RecurrenceContext, w: Time) -> Time {
    ctx.wcet + new_mode_interference(ctx, w)
}

/// Worst-case response time of the first job of a new-mode task released
/// `Y_i` after the request.
///
/// The busy window starts at the request: every pending higher-priority
/// old-mode job contributes its full `C_j`, new tasks contribute from their
/// own offsets and unchanged tasks contribute their pending job plus the
/// releases after their current period and `Z_j`. The response is
/// `R_i = w_i − Y_i`. When the higher-priority transition work is already
/// finished at `Y_i`, the steady-state bound over the new-mode
/// higher-priority tasks applies instead.
pub fn new_mode_wcrt(ctx: &RecurrenceContext) -> Result<RtaResult, RtaError> {
    let y = ctx.offset.ok_or(RtaError::MissingOffset(ctx.task))?;
    let limit = transition_limit(ctx);
    let diverged = |d: Divergence| match d {
        Divergence::Threshold(last) => {
            RtaError::InfeasibleDuringChange { task: ctx.task, last_iterate: last }
        }
        Divergence::Cap => RtaError::IterationCap(ctx.task),
    };

    let new_mode_hp: Vec<Interferer> = ctx.new.iter().chain(&ctx.unchanged).copied().collect();
    let steady = steady_from(ctx.task, ctx.wcet, ctx.blocking, ctx.deadline, &new_mode_hp)?;

    let hp_busy = fixpoint(limit, false, |w| new_mode_interference(ctx, w)).map_err(diverged)?;
    if y >= hp_busy.value {
        return Ok(RtaResult {
            from_request: Some(y + steady.response),
            steady_state_fallback: true,
            iterations: steady.iterations + hp_busy.iterations,
            ..steady
        });
    }

    let fp = fixpoint(limit, false, |w| new_mode_rhs(ctx, w)).map_err(diverged)?;
    Ok(RtaResult {
        task: ctx.task,
        response: (fp.value - y).max(steady.response),
        phasing: None,
        iterations: fp.iterations + hp_busy.iterations,
        from_request: Some(fp.value),
        steady_state_fallback: false,
        meets_deadline: fp.value - y <= ctx.deadline,
    })
}

/// Which incarnation of a task a context describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Side {
    Old,
    New,
}

/// Priority key across a transition. Lower sorts first (higher priority);
/// at equal priority an old-mode job precedes a new-mode one.
fn key(priority: u32, side: Side, id: TaskId) -> (u32, Side, TaskId) {
    (priority, side, id)
}

/// Build the recurrence context of one task across the transition
/// `old → new` described by `plan`.
pub fn transition_context(
    old: &ModeSpec,
    new: &ModeSpec,
    plan: &TransitionPlan,
    task: TaskId,
    side: Side,
) -> Result<RecurrenceContext, RtaError> {
    let me = match side {
        Side::Old => old.task(task),
        Side::New => new.task(task),
    }
    .ok_or(RtaError::UnknownTask(task))?;
    let my_key = key(me.priority, side, task);
    let offset_of = |id: TaskId| plan.offsets.get(&id).copied().unwrap_or(0);

    let mut ctx = RecurrenceContext {
        task,
        wcet: me.wcet,
        deadline: me.deadline,
        period: me.period,
        blocking: me.blocking,
        offset: match side {
            Side::Old => None,
            Side::New => Some(offset_of(task)),
        },
        ..Default::default()
    };

    for (&id, &class) in &plan.classes {
        let old_t = old.task(id);
        let new_t = new.task(id);
        let old_hp = old_t.is_some_and(|t| key(t.priority, Side::Old, id) < my_key);
        let new_hp = new_t.is_some_and(|t| key(t.priority, Side::New, id) < my_key);
        match class {
            TransitionClass::Completed | TransitionClass::Changed | TransitionClass::Aborted => {
                if let (true, Some(t)) = (old_hp, old_t) {
                    let j = Interferer::of(t, 0);
                    match (class, side) {
                        (TransitionClass::Aborted, Side::Old) => ctx.aborted.push(j),
                        // An aborted job no longer runs after the request.
                        (TransitionClass::Aborted, Side::New) => {}
                        _ => ctx.completed.push(j),
                    }
                }
                if class == TransitionClass::Changed && new_hp {
                    let t = new_t.expect("changed task exists in the new mode");
                    ctx.new.push(Interferer::of(t, offset_of(id)));
                }
            }
            TransitionClass::WhollyNew => {
                if new_hp {
                    let t = new_t.expect("new task exists in the new mode");
                    ctx.new.push(Interferer::of(t, offset_of(id)));
                }
            }
            TransitionClass::Unchanged => {
                if id != task && (old_hp || new_hp) {
                    let t = old_t.or(new_t).expect("unchanged task exists");
                    ctx.unchanged.push(Interferer::of(t, offset_of(id)));
                }
            }
        }
    }
    Ok(ctx)
}

/// One transition obligation in the latency computation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatencyEntry {
    pub task: TaskId,
    pub side: Side,
    pub class: TransitionClass,
    pub result: RtaResult,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatencyReport {
    /// Worst-case time from the request until every old-mode job pending at
    /// the request (aborted ones excepted) has completed and every new or
    /// changed task has completed its first job.
    pub latency: Time,
    pub entries: Vec<LatencyEntry>,
}

/// Worst-case mode-change latency of `old → new`.
pub fn mode_change_latency(
    old: &ModeSpec,
    new: &ModeSpec,
    plan: &TransitionPlan,
) -> Result<LatencyReport, RtaError> {
    let mut entries = Vec::new();
    for (&id, &class) in &plan.classes {
        if class.old_job_is_obligation() {
            let ctx = transition_context(old, new, plan, id, Side::Old)?;
            entries.push(LatencyEntry { task: id, side: Side::Old, class, result: old_mode_wcrt(&ctx)? });
        }
        if class.starts_new_stream() {
            let ctx = transition_context(old, new, plan, id, Side::New)?;
            entries.push(LatencyEntry { task: id, side: Side::New, class, result: new_mode_wcrt(&ctx)? });
        }
    }
    let latency = entries.iter().filter_map(|e| e.result.from_request).max().unwrap_or(0);
    Ok(LatencyReport { latency, entries })
}

/// Steady-state results of every task of a mode, keyed by task id.
pub fn analyze_mode(mode: &ModeSpec) -> BTreeMap<TaskId, Result<RtaResult, RtaError>> {
    mode.tasks.iter().map(|t| (t.id, steady_state_wcrt(mode, t.id))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modemgr::{classify_transition, AbortPolicy};
    use crate::presets;
    use proptest::prelude::*;

    fn responses(mode: &ModeSpec) -> Vec<Time> {
        mode.by_priority().iter().map(|t| steady_state_wcrt(mode, t.id).unwrap().response).collect()
    }

    #[test]
    fn validation_steady_state() {
        let cfg = presets::validation();
        assert_eq!(responses(&cfg.modes[0]), [10, 40, 80, 140, 200]);
        assert_eq!(responses(&cfg.modes[1]), [10, 30, 60, 100, 180]);
    }

    #[test]
    fn single_task_has_no_interference() {
        let mode = ModeSpec {
            name: "solo".into(),
            criticality: None,
            tasks: alloc::vec![ModeTask {
                id: 1,
                priority: 1,
                wcet: 10,
                period: 100,
                deadline: 100,
                offset: 0,
                blocking: 0,
                level: crate::Criticality::Lo,
            }],
        };
        assert_eq!(steady_state_wcrt(&mode, 1).unwrap().response, 10);
    }

    #[test]
    fn infeasible_task_carries_last_iterate() {
        let mut cfg = presets::validation();
        cfg.modes[0].tasks[4].wcet = 200;
        match steady_state_wcrt(&cfg.modes[0], 6) {
            Err(RtaError::Infeasible { task: 6, last_iterate }) => assert!(last_iterate > 350),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ceil0_clamps_nonpositive() {
        assert_eq!(ceil0(-5, 10), 0);
        assert_eq!(ceil0(0, 10), 0);
        assert_eq!(ceil0(1, 10), 1);
        assert_eq!(ceil0(10, 10), 1);
        assert_eq!(ceil0(11, 10), 2);
    }

    /// Unit-step timeline of one task under analysis and one aborted
    /// higher-priority task, both released at 0; the request at `x` kills
    /// the pending higher-priority job.
    fn brute_force_aborted(c_i: Time, c_j: Time, t_j: Time, x: Time) -> Time {
        let mut hp_left = 0;
        let mut me_left = c_i;
        let mut t = 0;
        loop {
            if t < x && t % t_j == 0 {
                hp_left = c_j;
            }
            if t == x {
                hp_left = 0;
            }
            if hp_left > 0 {
                hp_left -= 1;
            } else {
                me_left -= 1;
                if me_left == 0 {
                    return t + 1;
                }
            }
            t += 1;
        }
    }

    #[test]
    fn aborted_interference_matches_timeline() {
        let ctx = RecurrenceContext {
            task: 1,
            wcet: 5,
            deadline: 50,
            period: 50,
            aborted: alloc::vec![Interferer { id: 2, wcet: 4, period: 10, offset: 0 }],
            phasing: Some(7),
            ..Default::default()
        };
        // ⌊7/10⌋·4 + min(7, 4) = 4
        assert_eq!(old_mode_rhs(&ctx, 7, 0) - 5, 4);
        let r = old_mode_wcrt(&ctx).unwrap();
        assert_eq!(r.response, 9);
        assert_eq!(r.response, brute_force_aborted(5, 4, 10, 7));
        for x in 0..50 {
            let mut c = ctx.clone();
            c.phasing = Some(x);
            let w = old_mode_wcrt(&c).unwrap().response;
            let brute = brute_force_aborted(5, 4, 10, x);
            // Eq. 1 is exact once the request falls before completion.
            if brute > x {
                assert_eq!(w, brute, "x = {x}");
            } else {
                assert!(w >= brute, "x = {x}");
            }
        }
    }

    #[test]
    fn old_mode_reduces_to_steady_state() {
        let cfg = presets::validation();
        for mode in &cfg.modes {
            for t in &mode.tasks {
                let ss = steady_state_wcrt(mode, t.id).unwrap();
                let ctx = RecurrenceContext {
                    task: t.id,
                    wcet: t.wcet,
                    deadline: t.deadline,
                    period: t.period,
                    completed: mode
                        .tasks
                        .iter()
                        .filter(|j| (j.priority, j.id) < (t.priority, t.id))
                        .map(|j| Interferer::of(j, 0))
                        .collect(),
                    phasing: Some(ss.response),
                    ..Default::default()
                };
                assert_eq!(old_mode_wcrt(&ctx).unwrap().response, ss.response, "task {}", t.id);
            }
        }
    }

    #[test]
    fn new_mode_with_zero_offsets_is_steady_state() {
        let cfg = presets::validation();
        let m2 = &cfg.modes[1];
        for t in &m2.tasks {
            let ctx = RecurrenceContext {
                task: t.id,
                wcet: t.wcet,
                deadline: t.deadline,
                period: t.period,
                offset: Some(0),
                new: m2
                    .tasks
                    .iter()
                    .filter(|j| (j.priority, j.id) < (t.priority, t.id))
                    .map(|j| Interferer::of(j, 0))
                    .collect(),
                ..Default::default()
            };
            let ss = steady_state_wcrt(m2, t.id).unwrap().response;
            assert_eq!(new_mode_wcrt(&ctx).unwrap().response, ss);
            // The raw recurrence also lands on the steady-state value.
            let fp = fixpoint(t.deadline, false, |w| new_mode_rhs(&ctx, w)).ok().unwrap();
            assert_eq!(fp.value, ss);
        }
    }

    #[test]
    fn lone_new_task_falls_back_to_steady_state() {
        let ctx = RecurrenceContext {
            task: 1,
            wcet: 20,
            deadline: 100,
            period: 100,
            offset: Some(10),
            ..Default::default()
        };
        let r = new_mode_wcrt(&ctx).unwrap();
        assert!(r.steady_state_fallback);
        assert_eq!(r.response, 20);
        assert_eq!(r.from_request, Some(30));
    }

    #[test]
    fn missing_offset_is_an_error() {
        let ctx = RecurrenceContext { task: 3, wcet: 1, deadline: 10, period: 10, ..Default::default() };
        assert_eq!(new_mode_wcrt(&ctx), Err(RtaError::MissingOffset(3)));
    }

    fn validation_plan(forward: bool) -> (ModeSpec, ModeSpec, TransitionPlan) {
        let cfg = presets::validation();
        let (old, new) = if forward {
            (cfg.modes[0].clone(), cfg.modes[1].clone())
        } else {
            (cfg.modes[1].clone(), cfg.modes[0].clone())
        };
        let plan = classify_transition(&old, &new, AbortPolicy::Complete);
        (old, new, plan)
    }

    #[test]
    fn validation_latencies() {
        let (old, new, plan) = validation_plan(true);
        assert_eq!(mode_change_latency(&old, &new, &plan).unwrap().latency, 420);
        let (old, new, plan) = validation_plan(false);
        assert_eq!(mode_change_latency(&old, &new, &plan).unwrap().latency, 450);
    }

    #[test]
    fn mode_change_dominates_steady_state() {
        for forward in [true, false] {
            let (old, new, plan) = validation_plan(forward);
            let report = mode_change_latency(&old, &new, &plan).unwrap();
            for e in &report.entries {
                let mode = if e.side == Side::Old { &old } else { &new };
                let ss = steady_state_wcrt(mode, e.task).unwrap().response;
                assert!(e.result.response >= ss, "{e:?} vs {ss}");
            }
        }
    }

    #[test]
    fn identity_transition_latency_is_max_steady_response() {
        let cfg = presets::validation();
        let m = &cfg.modes[0];
        let plan = classify_transition(m, m, AbortPolicy::Complete);
        assert!(plan.classes.values().all(|c| *c == TransitionClass::Unchanged));
        let report = mode_change_latency(m, m, &plan).unwrap();
        let max_ss = responses(m).into_iter().max().unwrap();
        assert_eq!(report.latency, max_ss);
    }

    fn arb_context() -> impl Strategy<Value = (RecurrenceContext, Time)> {
        let interferer = (1u64..8, 10u64..60, 0u64..80)
            .prop_map(|(c, t, o)| Interferer { id: 9, wcet: c, period: t, offset: o });
        (
            1u64..10,
            prop::collection::vec(interferer.clone(), 0..3),
            prop::collection::vec(interferer.clone(), 0..3),
            prop::collection::vec(interferer.clone(), 0..3),
            prop::collection::vec(interferer, 0..3),
            0u64..200,
            0u64..200,
        )
            .prop_map(|(c, o, a, n, u, x, y)| {
                (
                    RecurrenceContext {
                        task: 1,
                        wcet: c,
                        deadline: 400,
                        period: 400,
                        offset: Some(y),
                        completed: o,
                        aborted: a,
                        new: n,
                        unchanged: u,
                        phasing: Some(x),
                        ..Default::default()
                    },
                    x,
                )
            })
    }

    fn nondecreasing(v: &[Time]) -> bool {
        v.windows(2).all(|p| p[0] <= p[1])
    }

    proptest! {
        #[test]
        fn iterates_are_monotone((ctx, x) in arb_context()) {
            let big = 1_000_000;
            if let Ok(fp) = fixpoint(big, true, |w| old_mode_rhs(&ctx, x, w)) {
                prop_assert!(nondecreasing(&fp.iterates));
            }
            if let Ok(fp) = fixpoint(big, true, |w| new_mode_rhs(&ctx, w)) {
                prop_assert!(nondecreasing(&fp.iterates));
            }
            let hp: Vec<Interferer> = ctx.completed.clone();
            if let Ok(fp) = fixpoint(big, true, |w| steady_recurrence(ctx.wcet, 0, &hp, w)) {
                prop_assert!(nondecreasing(&fp.iterates));
            }
        }

        #[test]
        fn ceil0_matches_ceiling_on_positive(z in -1000i64..1000, t in 1u64..50) {
            let expect = if z <= 0 { 0 } else { (z as f64 / t as f64).ceil() as i64 };
            prop_assert_eq!(ceil0(z, t), expect);
        }
    }
}
