//! Skipped-adjacency PWM (SAPWM) and phase-shifted PWM for N-level hybrid
//! flying-capacitor multilevel converters, with a variable-frequency ZVS
//! scheduler, a switched-linear plant model, and sweep analysis.

pub mod analysis;
pub mod config;
pub mod control;
pub mod error;
pub mod modulator;
pub mod output;
pub mod params;
pub mod plant;
pub mod schedule;
pub mod scheduler;
pub mod sim;

pub use error::{AnalysisError, ConfigError, ModulatorError, ParamError, SimError};
pub use modulator::{DutyFrame, Mode, ModePolicy, SwitchFrame, SwitchState};
pub use params::{ConverterParams, Load, SinkVoltage};
pub use plant::{PlantState, SourceMode, SwitchingEvent};
pub use sim::{simulate, RunConfig, RunRecord};
