//! Valley-sampled current loop and the shadowed command update.

use crate::error::ModulatorError;
use crate::modulator::{CarrierBank, DutyFrame, ModePolicy};
use crate::params::ConverterParams;
use crate::plant::PlantState;
use crate::schedule::Pwl;
use crate::scheduler::{frequency_command, FrequencyCommand};

/// What the scenario scripts over time.
#[derive(Debug, Clone, PartialEq)]
pub enum Command {
    /// Open loop: the duty reference itself.
    Duty(Pwl),
    /// Closed loop: the inductor current reference, amperes.
    Current(Pwl),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiGains {
    pub kp: f64,
    pub ki: f64,
}

impl PiGains {
    /// Cancels the `L·s + R_s` plant pole and places the crossover at a tenth
    /// of the minimum switching frequency.
    pub fn bandwidth_design(params: &ConverterParams) -> Self {
        let wc = 2.0 * std::f64::consts::PI * params.freq_min / 10.0;
        Self {
            kp: wc * params.inductance,
            ki: wc * params.series_resistance,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    pub i_ref: f64,
    pub kp: f64,
    pub ki: f64,
    /// Integral term, volts.
    pub integ: f64,
    pub d_star_next: f64,
    pub f_star_next: f64,
}

impl ControllerState {
    pub fn new(gains: PiGains) -> Self {
        Self {
            i_ref: 0.0,
            kp: gains.kp,
            ki: gains.ki,
            integ: 0.0,
            d_star_next: 0.0,
            f_star_next: 0.0,
        }
    }
}

/// Everything latched at one valley.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValleyUpdate {
    pub duty: DutyFrame,
    pub freq: FrequencyCommand,
    pub i_sample: f64,
    pub v_out_sample: f64,
}

/// Runs at a valley of the reference carrier. Samples `i_L`, produces `d*`
/// (scripted, or from the PI loop with output-voltage feed-forward), derives
/// the duty frame and frequency command, and stages both into `bank`, which
/// latches them at this same valley.
///
/// `elapsed` is the length of the period that just ended; it scales the
/// integral update.
#[allow(clippy::too_many_arguments)]
pub fn sample_and_update(
    plant: &PlantState,
    v_out: f64,
    ctrl: &mut ControllerState,
    command: &Command,
    policy: ModePolicy,
    params: &ConverterParams,
    elapsed: f64,
    bank: &mut CarrierBank,
) -> Result<ValleyUpdate, ModulatorError> {
    let i_sample = plant.i_l;
    let d_star = match command {
        Command::Duty(schedule) => schedule.eval(plant.t),
        Command::Current(schedule) => {
            ctrl.i_ref = schedule.eval(plant.t);
            let err = ctrl.i_ref - i_sample;
            let prev = ctrl.integ;
            ctrl.integ += ctrl.ki * err * elapsed;
            let v_ref = v_out + ctrl.kp * err + ctrl.integ;
            let raw = v_ref / params.input_voltage;
            let (lo, hi) = (params.adjacency_threshold, 1.0 - params.adjacency_threshold);
            if raw < lo || raw > hi {
                ctrl.integ = prev;
            }
            raw.clamp(lo, hi)
        }
    };
    let duty = DutyFrame::build(d_star, params, policy)?;
    let freq = frequency_command(&duty, v_out, i_sample, params);
    ctrl.d_star_next = d_star;
    ctrl.f_star_next = freq.f_star;
    bank.stage(1.0 / freq.f_applied, duty.d_in);
    bank.restart_at(plant.t);
    Ok(ValleyUpdate {
        duty,
        freq,
        i_sample,
        v_out_sample: v_out,
    })
}
