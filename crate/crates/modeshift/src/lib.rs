//! Configuration files, output artifacts, the scenario matrix and the
//! command-line front end around `modeshift-core`.

pub mod analyze;
pub mod cli;
pub mod config;
pub mod matrix;
pub mod output;
