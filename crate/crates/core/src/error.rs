use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("level_count must be at least 3, got {0}")]
    TooFewLevels(usize),
    #[error("level_count must be at most {max}, got {got}")]
    TooManyLevels { got: usize, max: usize },
    #[error("{name} must be strictly positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative and finite, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("adjacency_threshold {alpha} must lie in (0, {limit}) for level_count {levels}")]
    ThresholdOutOfRange {
        alpha: f64,
        limit: f64,
        levels: usize,
    },
    #[error("freq_min ({min} Hz) must not exceed freq_max ({max} Hz)")]
    FrequencyBounds { min: f64, max: f64 },
    #[error("automatic adjacency threshold has no solution: PSPWM frequency never reaches {freq_min} Hz at |i_L| = {current} A")]
    AutoThresholdUnsolvable { freq_min: f64, current: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModulatorError {
    #[error("duty reference {0} outside [0, 1]")]
    DutyOutOfRange(f64),
    #[error("switch {switch}: dead-time {dead_time} s is not below half the minimum pulse width {min_pulse} s")]
    PulseSwallowed {
        switch: usize,
        dead_time: f64,
        min_pulse: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Modulator(#[from] ModulatorError),
    #[error("non-finite plant state at t = {t} s ({what})")]
    NonFinite { t: f64, what: String },
    #[error("invalid scenario: {0}")]
    Scenario(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("event log is empty")]
    NoEvents,
    #[error("steady-state window contains no complete switching period")]
    EmptyWindow,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: invalid value for `{key}`: {msg}")]
    Value {
        line: usize,
        key: String,
        msg: String,
    },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("invalid scenario: {0}")]
    Scenario(String),
}
