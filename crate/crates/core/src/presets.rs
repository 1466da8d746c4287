//! The two reference task sets used throughout the tests and bundled with
//! the command-line tool.

use alloc::string::ToString;
use alloc::vec;

use crate::model::{
    Criticality, Horizon, ModeSpec, ModeTask, OffsetRule, Policy, SystemConfig, TaskSpec,
};
use crate::modemgr::FaultModel;
use crate::{TaskId, Time};

fn mt(id: TaskId, priority: u32, wcet: Time, period: Time, offset: Time) -> ModeTask {
    ModeTask {
        id,
        priority,
        wcet,
        period,
        deadline: period,
        offset,
        blocking: 0,
        level: Criticality::Lo,
    }
}

/// Six-task, two-mode validation set (modes M1 and M2, T = D, B = 0).
/// Mode changes arrive with exponentially distributed spacing, mean 2000.
pub fn validation() -> SystemConfig {
    let m1 = ModeSpec {
        name: "M1".to_string(),
        criticality: None,
        tasks: vec![
            mt(1, 1, 10, 100, 0),
            mt(3, 2, 30, 200, 85),
            mt(4, 3, 40, 280, 0),
            mt(5, 4, 50, 300, 0),
            mt(6, 5, 60, 350, 100),
        ],
    };
    let m2 = ModeSpec {
        name: "M2".to_string(),
        criticality: None,
        tasks: vec![
            mt(1, 1, 10, 100, 0),
            mt(2, 2, 20, 120, 195),
            mt(3, 3, 30, 270, 0),
            mt(4, 4, 40, 280, 70),
            mt(5, 5, 50, 350, 0),
        ],
    };
    SystemConfig {
        name: "validation".to_string(),
        policy: Policy::Fp,
        tasks: vec![],
        modes: vec![m1, m2],
        initial_mode: 0,
        horizon: Horizon::Time(4_000_000),
        warmup: 0,
        repetitions: 1,
        seed: 1,
        offsets: OffsetRule::Declared,
        request_mean: Some(2000.0),
        faults: FaultModel { active: false, ..FaultModel::default() },
        predictor: Default::default(),
        fuzzy: Default::default(),
        window_multiplier: 20,
        recovery_hyperperiods: 2,
        confirm_windows: 2,
        decision_horizon: 5,
        run_to_completion: false,
    }
}

fn ct(
    id: TaskId,
    level: Criticality,
    p_lo: u32,
    p_hi: Option<u32>,
    c_lo: Time,
    c_hi: Option<Time>,
    period: Time,
) -> TaskSpec {
    TaskSpec {
        id,
        level,
        priority_lo: p_lo,
        priority_hi: p_hi,
        wcet_lo: c_lo,
        wcet_hi: c_hi,
        period,
        deadline: period,
        offset: 0,
        blocking: 0,
    }
}

/// Five-task mixed-criticality case-study set (two LO tasks, three HI).
pub fn case_study(policy: Policy) -> SystemConfig {
    use Criticality::{Hi, Lo};
    SystemConfig {
        name: "case-study".to_string(),
        policy,
        tasks: vec![
            ct(1, Hi, 1, Some(1), 10, Some(10), 100),
            ct(2, Hi, 2, Some(2), 30, Some(30), 200),
            ct(3, Lo, 3, None, 40, None, 280),
            ct(4, Hi, 4, Some(3), 50, Some(50), 300),
            ct(5, Lo, 5, None, 60, None, 350),
        ],
        modes: vec![],
        initial_mode: 0,
        horizon: Horizon::Hyperperiods(100),
        warmup: 2000,
        repetitions: 10,
        seed: 1,
        offsets: OffsetRule::NextPeriodMultiple,
        request_mean: None,
        faults: FaultModel::default(),
        predictor: Default::default(),
        fuzzy: Default::default(),
        window_multiplier: 20,
        recovery_hyperperiods: 2,
        confirm_windows: 2,
        decision_horizon: 5,
        run_to_completion: false,
    }
}
