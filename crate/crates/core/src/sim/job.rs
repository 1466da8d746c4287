//! Released jobs and the dispatcher's choice among them.

use crate::model::{Criticality, Policy};
use crate::{TaskId, Time};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    /// Run-wide job number, in release order.
    pub seq: u64,
    pub task: TaskId,
    /// Index of the mode the job was released in.
    pub mode: usize,
    /// Number of mode changes applied before the release. Jobs of an older
    /// era win priority ties against newer ones.
    pub era: u32,
    pub release: Time,
    /// Absolute deadline.
    pub deadline: Time,
    pub relative_deadline: Time,
    pub priority: u32,
    pub level: Criticality,
    /// Execution demand of this job (the WCET, possibly inflated by a fault).
    pub demand: Time,
    pub remaining: Time,
    pub completion: Option<Time>,
    pub missed: bool,
}

impl Job {
    pub fn started(&self) -> bool {
        self.remaining < self.demand
    }
}

/// Index of the job to run, or `None` when idle.
///
/// EDF picks the earliest absolute deadline, FP the smallest priority
/// number. Ties go to the older era, then the lower task id, then the
/// earlier release.
pub fn pick_next(ready: &[Job], policy: Policy) -> Option<usize> {
    let live = ready.iter().enumerate().filter(|(_, j)| j.remaining > 0);
    match policy {
        Policy::Edf => live
            .min_by_key(|(_, j)| (j.deadline, j.era, j.task, j.release))
            .map(|(i, _)| i),
        Policy::Fp => live
            .min_by_key(|(_, j)| (j.priority, j.era, j.task, j.release))
            .map(|(i, _)| i),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn job(task: TaskId, priority: u32, deadline: Time) -> Job {
        Job {
            seq: task as u64,
            task,
            mode: 0,
            era: 0,
            release: 0,
            deadline,
            relative_deadline: deadline,
            priority,
            level: Criticality::Lo,
            demand: 5,
            remaining: 5,
            completion: None,
            missed: false,
        }
    }

    #[test]
    fn edf_and_fp_choices() {
        let jobs = vec![job(1, 4, 350), job(2, 2, 200)];
        assert_eq!(pick_next(&jobs, Policy::Edf), Some(1));
        assert_eq!(pick_next(&jobs, Policy::Fp), Some(1));
        let jobs = vec![job(1, 2, 350), job(2, 4, 200)];
        assert_eq!(pick_next(&jobs, Policy::Edf), Some(1));
        assert_eq!(pick_next(&jobs, Policy::Fp), Some(0));
    }

    #[test]
    fn ties_go_to_lower_id() {
        let jobs = vec![job(5, 3, 200), job(2, 3, 200)];
        assert_eq!(pick_next(&jobs, Policy::Edf), Some(1));
        assert_eq!(pick_next(&jobs, Policy::Fp), Some(1));
    }

    #[test]
    fn old_era_wins_priority_tie() {
        let mut jobs = vec![job(2, 3, 200), job(5, 3, 200)];
        jobs[0].era = 1;
        assert_eq!(pick_next(&jobs, Policy::Fp), Some(1));
    }

    #[test]
    fn empty_is_idle() {
        assert_eq!(pick_next(&[], Policy::Fp), None);
        let mut j = job(1, 1, 10);
        j.remaining = 0;
        assert_eq!(pick_next(&[j], Policy::Edf), None);
    }
}
