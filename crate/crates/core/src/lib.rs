//! Uniprocessor mode-change workbench.
//!
//! The crate has three layers:
//!
//! * [`rta`]: worst-case response times in steady state and across a mode
//!   change (old-mode and new-mode recurrences with offsets), plus the
//!   worst-case mode-change latency.
//! * [`sim`]: a deterministic discrete-event simulator of preemptive EDF and
//!   fixed-priority scheduling with multi-mode task sets, fault injection and
//!   mode-change execution.
//! * the proactive pipeline: [`observe`] (windowed worst-case laxity and its
//!   slope), [`predict`] (local-linear-trend Kalman forecasts), [`fuzzy`]
//!   (risk inference) and [`modemgr`] (reactive and proactive criticality
//!   changes).
//!
//! [`metrics`] folds simulation runs into per-scenario reports.
//!
//! All times are integer time units. The crate is `no_std` (with `alloc`)
//! when built without the default `std` feature.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod fuzzy;
pub mod metrics;
pub mod model;
pub mod modemgr;
pub mod observe;
pub mod predict;
pub mod presets;
pub mod rta;
pub mod sim;

pub use model::{
    base_period_stats, validate_task_set, Criticality, Horizon, ModeSpec, ModeTask, OffsetRule,
    Policy, SystemConfig, TaskSpec, TransitionClass,
};

/// Discrete time, in time units.
pub type Time = u64;

/// Task identifier (the subscript in τ1, τ2, ...).
pub type TaskId = u32;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("no tasks")]
    NoTasks,
    #[error("deadline must be positive")]
    NonPositiveDeadline,
    #[error("observations must have increasing timestamps")]
    EqualTimestamps,
    #[error("predictor has no observations yet")]
    NoObservations,
    #[error("non-finite observation rejected")]
    NonFiniteObservation,
    #[error("malformed membership function: {0}")]
    Membership(&'static str),
    #[error("no matched forecast records")]
    NoRecords,
    #[error("invalid configuration: {0}")]
    InvalidConfig(alloc::string::String),
    #[error("unknown task {0}")]
    UnknownTask(TaskId),
    #[error("empty input")]
    Empty,
}
