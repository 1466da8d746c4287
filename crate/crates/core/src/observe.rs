//! Laxity observation: the per-job laxity, the worst laxity over a trailing
//! window and the slope between consecutive window samples.

use alloc::collections::VecDeque;

use crate::{Error, TaskId, Time};

/// `(D − R) / D`: the fraction of the deadline left unused by a job that
/// responded in `R`. Negative once the deadline is missed.
pub fn laxity(deadline: Time, response: Time) -> Result<f64, Error> {
    if deadline == 0 {
        return Err(Error::NonPositiveDeadline);
    }
    Ok((deadline as f64 - response as f64) / deadline as f64)
}

/// Worst laxity observed at one analysis tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaxitySample {
    pub time: Time,
    pub worst_laxity: f64,
    /// Task of the job with the lowest laxity; `None` for an empty window.
    pub task: Option<TaskId>,
}

/// Value reported when nothing completed inside the window.
pub const EMPTY_WINDOW_LAXITY: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    time: Time,
    laxity: f64,
    task: TaskId,
}

/// Sliding window over job completions (and deadline discards).
///
/// Entries with `time > now − length` are inside the window `(now − W, now]`.
#[derive(Debug, Clone)]
pub struct LaxityWindow {
    length: Time,
    entries: VecDeque<Entry>,
}

impl LaxityWindow {
    pub fn new(length: Time) -> Self {
        assert!(length > 0, "window length must be positive");
        LaxityWindow { length, entries: VecDeque::new() }
    }

    pub fn length(&self) -> Time {
        self.length
    }

    /// Record a finished (or discarded) job. Times must be nondecreasing.
    pub fn push(&mut self, time: Time, laxity: f64, task: TaskId) {
        debug_assert!(self.entries.back().is_none_or(|e| e.time <= time));
        self.entries.push_back(Entry { time, laxity, task });
    }

    fn expire(&mut self, now: Time) {
        while let Some(front) = self.entries.front() {
            if front.time + self.length <= now {
                self.entries.pop_front();
            } else {
                break;
            }
        }
    }

    /// Minimum laxity of jobs finished in `(now − W, now]`.
    pub fn window_worst_laxity(&mut self, now: Time) -> LaxitySample {
        self.expire(now);
        let worst = self
            .entries
            .iter()
            .filter(|e| e.time <= now)
            .min_by(|a, b| a.laxity.total_cmp(&b.laxity).then(a.task.cmp(&b.task)));
        match worst {
            Some(e) => LaxitySample { time: now, worst_laxity: e.laxity, task: Some(e.task) },
            None => LaxitySample { time: now, worst_laxity: EMPTY_WINDOW_LAXITY, task: None },
        }
    }

    /// Whether any job in the window has negative laxity.
    pub fn has_miss(&mut self, now: Time) -> bool {
        self.window_worst_laxity(now).worst_laxity < 0.0
    }
}

/// Laxity change per time unit between two samples.
pub fn slope(previous: &LaxitySample, current: &LaxitySample) -> Result<f64, Error> {
    if current.time <= previous.time {
        return Err(Error::EqualTimestamps);
    }
    Ok((current.worst_laxity - previous.worst_laxity) / (current.time - previous.time) as f64)
}

/// Slope rescaled to laxity change per analysis tick and clamped to
/// `[−1, 1]`, the universe of the acceleration input.
pub fn normalized_slope(previous: &LaxitySample, current: &LaxitySample, tick: Time) -> Result<f64, Error> {
    Ok((slope(previous, current)? * tick as f64).clamp(-1.0, 1.0))
}
