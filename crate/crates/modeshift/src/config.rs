//! TOML configuration files.

use std::fs;
use std::path::Path;

use modeshift_core::{validate_task_set, SystemConfig};

pub const VALIDATION: &str = include_str!("../configs/validation.toml");
pub const CASE_STUDY: &str = include_str!("../configs/case-study.toml");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("configuration cannot be serialized: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid configuration: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("unknown preset '{0}' (expected validation or case-study)")]
    UnknownPreset(String),
}

/// Parse and validate.
pub fn parse(text: &str) -> Result<SystemConfig, ConfigError> {
    let config: SystemConfig = toml::from_str(text)?;
    let problems: Vec<String> = validate_task_set(&config).iter().map(|v| v.to_string()).collect();
    if problems.is_empty() {
        Ok(config)
    } else {
        Err(ConfigError::Invalid(problems))
    }
}

pub fn load(path: &Path) -> Result<SystemConfig, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse(&text)
}

pub fn preset(name: &str) -> Result<SystemConfig, ConfigError> {
    match name {
        "validation" => parse(VALIDATION),
        "case-study" => parse(CASE_STUDY),
        other => Err(ConfigError::UnknownPreset(other.to_string())),
    }
}

/// Serialize so that [`parse`] gives back an equal configuration.
pub fn to_toml(config: &SystemConfig) -> Result<String, ConfigError> {
    Ok(toml::to_string(config)?)
}
