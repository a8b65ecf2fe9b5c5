//! Variable switching-frequency laws for ZVS and the dead-time charge check.

use crate::error::ParamError;
use crate::modulator::{DutyFrame, Mode, ModePolicy};
use crate::params::ConverterParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyCommand {
    /// Unclamped magnitude of the frequency law.
    pub f_star: f64,
    pub f_applied: f64,
    pub clamped_low: bool,
    pub clamped_high: bool,
    pub mode: Mode,
}

impl FrequencyCommand {
    fn clamp(f_star: f64, mode: Mode, params: &ConverterParams) -> Self {
        let clamped_low = f_star < params.freq_min;
        let clamped_high = f_star > params.freq_max;
        Self {
            f_star,
            f_applied: f_star.clamp(params.freq_min, params.freq_max),
            clamped_low,
            clamped_high,
            mode,
        }
    }
}

fn ripple_denominator(i_l: f64, params: &ConverterParams) -> f64 {
    2.0 * params.inductance * (i_l.abs() + params.zvs_current)
}

/// Carrier frequency at which the two PSPWM levels bracketing `d*` swing the
/// inductor current through `±(|i_L| + I_ZVS)` about its sampled value.
pub fn pspwm_frequency(
    duty: &DutyFrame,
    v_out: f64,
    i_l: f64,
    params: &ConverterParams,
) -> FrequencyCommand {
    let upper = params.input_voltage * (duty.d_floor + duty.d_u);
    let f_star =
        ((upper - v_out) * (duty.d_star - duty.d_floor)).abs() / ripple_denominator(i_l, params);
    FrequencyCommand::clamp(f_star, Mode::Pspwm, params)
}

/// SAPWM counterpart of [`pspwm_frequency`], built on the lower skipped-to
/// level `d_r − d_u` and the modified comparator duty.
pub fn sapwm_frequency(
    duty: &DutyFrame,
    v_out: f64,
    i_l: f64,
    params: &ConverterParams,
) -> FrequencyCommand {
    let lower = params.input_voltage * (duty.d_round - duty.d_u);
    let f_star = ((lower - v_out) * (duty.d_mod - duty.d_round + duty.d_u)).abs()
        / ripple_denominator(i_l, params);
    FrequencyCommand::clamp(f_star, Mode::Sapwm, params)
}

/// Frequency command for the frame's own mode.
pub fn frequency_command(
    duty: &DutyFrame,
    v_out: f64,
    i_l: f64,
    params: &ConverterParams,
) -> FrequencyCommand {
    match duty.mode {
        Mode::Pspwm => pspwm_frequency(duty, v_out, i_l, params),
        Mode::Sapwm => sapwm_frequency(duty, v_out, i_l, params),
    }
}

/// Charge that must move through the switch output capacitances in one
/// dead-time: one pair swings a level in PSPWM, two adjacent pairs in SAPWM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargeRequirement {
    pub q_required: f64,
    /// Shortest dead-time that moves `q_required` at `I_ZVS`.
    pub min_dead_time: f64,
    pub feasible: bool,
}

pub fn zvs_charge_requirement(mode: Mode, params: &ConverterParams) -> ChargeRequirement {
    let pairs = match mode {
        Mode::Pspwm => 1.0,
        Mode::Sapwm => 2.0,
    };
    charge_for_swing(pairs, params)
}

/// Charge requirement for `swing` pairs commutating together.
pub(crate) fn charge_for_swing(swing: f64, params: &ConverterParams) -> ChargeRequirement {
    let q_required = 2.0
        * swing
        * params.switch_output_capacitance
        * params.quantization_step()
        * params.input_voltage;
    let min_dead_time = q_required / params.zvs_current;
    ChargeRequirement {
        q_required,
        min_dead_time,
        feasible: min_dead_time <= params.dead_time,
    }
}

/// Half-width of the duty band around each interior level inside which the
/// PSPWM law falls below `freq_min`, at `|i_L| = nominal_current` with the
/// steady-state output `v_out = d*·V_in`. Bisection on `(0, d_u/2)`.
pub fn auto_threshold(params: &ConverterParams, nominal_current: f64) -> Result<f64, ParamError> {
    let d_u = params.quantization_step();
    let denom = ripple_denominator(nominal_current, params);
    // Distance x from a level: ripple term V_in·x·(d_u − x), increasing on (0, d_u/2).
    let f = |x: f64| params.input_voltage * x * (d_u - x) / denom;
    let (mut lo, mut hi) = (0.0, d_u / 2.0);
    if f(hi) <= params.freq_min {
        return Err(ParamError::AutoThresholdUnsolvable {
            freq_min: params.freq_min,
            current: nominal_current,
        });
    }
    while hi - lo > 1e-9 * d_u {
        let mid = 0.5 * (lo + hi);
        if f(mid) < params.freq_min {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Clamp state of a frequency command.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clamp {
    None,
    Low,
    High,
}

impl FrequencyCommand {
    pub fn clamp_state(&self) -> Clamp {
        match (self.clamped_low, self.clamped_high) {
            (true, _) => Clamp::Low,
            (_, true) => Clamp::High,
            _ => Clamp::None,
        }
    }
}

/// One grid point of the frequency profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileRow {
    pub d_star: f64,
    pub f_pspwm: f64,
    pub f_sapwm: f64,
    /// Mode the modulator would pick at this duty.
    pub mode: Mode,
    /// Clamp state of the command for that mode.
    pub clamped: Clamp,
}

/// Both frequency laws over a duty grid at fixed `|i_L|`, with the
/// steady-state output `v_out = d*·V_in`.
pub fn frequency_profile(params: &ConverterParams, i_l: f64, grid: &[f64]) -> Vec<ProfileRow> {
    grid.iter()
        .map(|&d| {
            let duty =
                DutyFrame::build(d, params, ModePolicy::SapwmEnabled).expect("grid inside [0, 1]");
            let v_out = d * params.input_voltage;
            let ps = pspwm_frequency(&duty, v_out, i_l, params);
            let sa = sapwm_frequency(&duty, v_out, i_l, params);
            let applied = if duty.mode == Mode::Sapwm { sa } else { ps };
            ProfileRow {
                d_star: d,
                f_pspwm: ps.f_star,
                f_sapwm: sa.f_star,
                mode: duty.mode,
                clamped: applied.clamp_state(),
            }
        })
        .collect()
}
