//! Switched-linear model of the FCML power stage.
//!
//! State equations with effective pair states `S_k` (1-based, `v_0 = 0`,
//! `v_{N−1} = V_in`):
//!
//! ```text
//! v_sw    = Σ S_k·(v_k − v_{k−1})
//! L·di/dt = v_sw − v_out − R_s·i
//! C_f·dv_k/dt = (S_{k+1} − S_k)·i          k = 1..N−2
//! ```
//!
//! Gates are constant between breakpoints; a classic fixed-step RK4 lands
//! exactly on every breakpoint.

use std::fmt;

use crate::error::SimError;
use crate::modulator::SwitchState;
use crate::params::{ConverterParams, Load};
use crate::schedule::Pwl;
use crate::scheduler::charge_for_swing;

/// Flying capacitors as real capacitors or as fixed ideal sources at their
/// nominal voltages.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceMode {
    IdealSources,
    RealCapacitors,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub i_l: f64,
    /// `v_1..v_{N−2}`.
    pub v_fc: Vec<f64>,
    pub v_out: f64,
    pub t: f64,
}

impl PlantState {
    pub fn balanced(params: &ConverterParams, i_l: f64, v_out: f64) -> Self {
        let v_fc = (1..params.switch_count())
            .map(|k| params.nominal_cap_voltage(k))
            .collect();
        Self {
            i_l,
            v_fc,
            v_out,
            t: 0.0,
        }
    }
}

/// Voltage of the switching node for pair states `gates`.
pub fn pole_voltage(gates: SwitchState, v_fc: &[f64], v_in: f64) -> f64 {
    let m = gates.len();
    let cap = |k: usize| match k {
        0 => 0.0,
        k if k == m => v_in,
        k => v_fc[k - 1],
    };
    (0..m)
        .filter(|&k| gates.get(k))
        .map(|k| cap(k + 1) - cap(k))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// Upper device turns on after the dead-time (driver input rising).
    TurnOnHigh,
    /// Lower device turns on after the dead-time (driver input falling).
    TurnOnLow,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::TurnOnHigh => "turn_on_high",
            Direction::TurnOnLow => "turn_on_low",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Zvs,
    Hard,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Zvs => "ZVS",
            Classification::Hard => "HARD",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchingEvent {
    pub t: f64,
    /// 1-based pair index.
    pub switch_index: usize,
    pub direction: Direction,
    pub i_l: f64,
    pub q_required: f64,
    pub q_available: f64,
    pub residual_voltage: f64,
    pub classification: Classification,
}

/// Outcome of one commutation's dead-time window.
#[derive(Debug, Clone, PartialEq)]
pub struct DeadTimeResolution {
    /// Pair states applied to the plant until `window_end`.
    pub effective: SwitchState,
    pub window_end: f64,
    /// Pairs commutating upward and downward.
    pub rising: u32,
    pub falling: u32,
    pub events: Vec<SwitchingEvent>,
}

/// Classifies every pair that changes between `pre` and `post` at the
/// current plant instant using the constant-current charge criterion:
/// a turn-on of the upper device needs `i_L < 0`, of the lower device
/// `i_L > 0`, and `|i_L|·t_d` must cover the charge of all pairs swinging
/// in that direction. A ZVS pair's diode picks up the current at once, so it
/// takes its new state for the whole window; a hard-switched pair stays in
/// its old state until the device turns on.
pub fn resolve_deadtime_node(
    state: &PlantState,
    pre: SwitchState,
    post: SwitchState,
    params: &ConverterParams,
) -> DeadTimeResolution {
    let rising_bits = !pre.bits() & post.bits();
    let falling_bits = pre.bits() & !post.bits();
    let i_l = state.i_l;
    let q_available = i_l.abs() * params.dead_time;
    let level_step = params.quantization_step() * params.input_voltage;

    let mut effective = pre;
    let mut events = Vec::with_capacity((rising_bits | falling_bits).count_ones() as usize);
    for (bits, direction) in [
        (rising_bits, Direction::TurnOnHigh),
        (falling_bits, Direction::TurnOnLow),
    ] {
        let swing = bits.count_ones();
        if swing == 0 {
            continue;
        }
        let q_required = charge_for_swing(swing as f64, params).q_required;
        let sign_ok = match direction {
            Direction::TurnOnHigh => i_l < 0.0,
            Direction::TurnOnLow => i_l > 0.0,
        };
        let zvs = sign_ok && q_available >= q_required;
        let residual_voltage = if zvs {
            0.0
        } else if sign_ok {
            let c_eq = 2.0 * swing as f64 * params.switch_output_capacitance;
            (q_required - q_available) / c_eq
        } else {
            level_step
        };
        let classification = if zvs {
            Classification::Zvs
        } else {
            Classification::Hard
        };
        for k in (0..pre.len()).filter(|&k| bits >> k & 1 == 1) {
            if zvs {
                effective = effective.with(k, post.get(k));
            }
            events.push(SwitchingEvent {
                t: state.t,
                switch_index: k + 1,
                direction,
                i_l,
                q_required,
                q_available,
                residual_voltage,
                classification,
            });
        }
    }
    DeadTimeResolution {
        effective,
        window_end: state.t + params.dead_time,
        rising: rising_bits.count_ones(),
        falling: falling_bits.count_ones(),
        events,
    }
}

/// Energy integrated alongside the state, joules.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyLedger {
    /// Drawn from the input rail.
    pub input: f64,
    /// Delivered into the output node.
    pub output: f64,
    /// Dissipated in the series resistance.
    pub loss: f64,
}

/// Output node model, resolved from [`Load`].
#[derive(Debug, Clone, PartialEq)]
pub enum OutputNode {
    Source(Pwl),
    ParallelRc { resistance: f64, capacitance: f64 },
}

impl OutputNode {
    pub fn from_load(load: &Load, tracking: impl FnOnce() -> Pwl) -> Self {
        match *load {
            Load::IdealSink(crate::params::SinkVoltage::Fixed(v)) => {
                OutputNode::Source(Pwl::constant(v))
            }
            Load::IdealSink(crate::params::SinkVoltage::Tracking) => OutputNode::Source(tracking()),
            Load::ParallelRc {
                resistance,
                capacitance,
            } => OutputNode::ParallelRc {
                resistance,
                capacitance,
            },
        }
    }
}

/// Plant integrator. Owns its scratch buffers; one per run.
#[derive(Debug, Clone)]
pub struct Plant {
    params: ConverterParams,
    source_mode: SourceMode,
    output: OutputNode,
    dt_max: f64,
    energy: EnergyLedger,
    x: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Plant {
    pub fn new(params: ConverterParams, source_mode: SourceMode, output: OutputNode) -> Self {
        let dim = params.switch_count() + 4;
        Self {
            dt_max: default_dt_max(&params),
            params,
            source_mode,
            output,
            energy: EnergyLedger::default(),
            x: vec![0.0; dim],
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
        }
    }

    pub fn params(&self) -> &ConverterParams {
        &self.params
    }

    pub fn source_mode(&self) -> SourceMode {
        self.source_mode
    }

    pub fn dt_max(&self) -> f64 {
        self.dt_max
    }

    pub fn set_dt_max(&mut self, dt: f64) {
        self.dt_max = dt;
    }

    pub fn energy(&self) -> EnergyLedger {
        self.energy
    }

    pub fn output_voltage_at(&self, t: f64, state: &PlantState) -> f64 {
        match &self.output {
            OutputNode::Source(p) => p.eval(t),
            OutputNode::ParallelRc { .. } => state.v_out,
        }
    }

    pub fn pole_voltage(&self, gates: SwitchState, state: &PlantState) -> f64 {
        pole_voltage(gates, &state.v_fc, self.params.input_voltage)
    }

    /// Energy held in the inductor, flying capacitors, and any output capacitor.
    pub fn stored_energy(&self, state: &PlantState) -> f64 {
        let p = &self.params;
        let mut e = 0.5 * p.inductance * state.i_l * state.i_l;
        if self.source_mode == SourceMode::RealCapacitors {
            e += state
                .v_fc
                .iter()
                .map(|v| 0.5 * p.flying_capacitance * v * v)
                .sum::<f64>();
        }
        if let OutputNode::ParallelRc { capacitance, .. } = self.output {
            e += 0.5 * capacitance * state.v_out * state.v_out;
        }
        e
    }

    // Layout: [i_L, v_1..v_{M−1}, v_out, e_in, e_out, e_loss].
    fn derivative(&self, t: f64, x: &[f64], gates: SwitchState, dx: &mut [f64]) {
        let p = &self.params;
        let m = p.switch_count();
        let i = x[0];
        let out_idx = m;
        let v_fc = &x[1..m];
        let v_out = match &self.output {
            OutputNode::Source(pwl) => pwl.eval(t),
            OutputNode::ParallelRc { .. } => x[out_idx],
        };
        let v_sw = pole_voltage(gates, v_fc, p.input_voltage);
        dx[0] = (v_sw - v_out - p.series_resistance * i) / p.inductance;
        for (k, dv) in dx.iter_mut().enumerate().take(m).skip(1) {
            *dv = match self.source_mode {
                SourceMode::IdealSources => 0.0,
                SourceMode::RealCapacitors => {
                    let upper = gates.get(k) as i32 as f64;
                    let lower = gates.get(k - 1) as i32 as f64;
                    (upper - lower) * i / p.flying_capacitance
                }
            };
        }
        dx[out_idx] = match self.output {
            OutputNode::Source(_) => 0.0,
            OutputNode::ParallelRc {
                resistance,
                capacitance,
            } => (i - v_out / resistance) / capacitance,
        };
        let top = gates.get(m - 1) as i32 as f64;
        dx[m + 1] = p.input_voltage * top * i;
        dx[m + 2] = v_out * i;
        dx[m + 3] = p.series_resistance * i * i;
    }

    /// One RK4 step of length `dt` with constant `gates`.
    pub fn step(
        &mut self,
        state: &mut PlantState,
        gates: SwitchState,
        dt: f64,
    ) -> Result<(), SimError> {
        let m = self.params.switch_count();
        let dim = self.x.len();
        let mut x = std::mem::take(&mut self.x);
        let mut k = std::mem::replace(&mut self.k, std::array::from_fn(|_| Vec::new()));
        let mut tmp = std::mem::take(&mut self.tmp);

        x[0] = state.i_l;
        x[1..m].copy_from_slice(&state.v_fc);
        x[m] = state.v_out;
        x[m + 1..].fill(0.0);

        let t = state.t;
        self.derivative(t, &x, gates, &mut k[0]);
        for j in 0..dim {
            tmp[j] = x[j] + 0.5 * dt * k[0][j];
        }
        self.derivative(t + 0.5 * dt, &tmp, gates, &mut k[1]);
        for j in 0..dim {
            tmp[j] = x[j] + 0.5 * dt * k[1][j];
        }
        self.derivative(t + 0.5 * dt, &tmp, gates, &mut k[2]);
        for j in 0..dim {
            tmp[j] = x[j] + dt * k[2][j];
        }
        self.derivative(t + dt, &tmp, gates, &mut k[3]);
        for j in 0..dim {
            x[j] += dt / 6.0 * (k[0][j] + 2.0 * k[1][j] + 2.0 * k[2][j] + k[3][j]);
        }

        state.t = t + dt;
        state.i_l = x[0];
        state.v_fc.copy_from_slice(&x[1..m]);
        state.v_out = match &self.output {
            OutputNode::Source(pwl) => pwl.eval(state.t),
            OutputNode::ParallelRc { .. } => x[m],
        };
        self.energy.input += x[m + 1];
        self.energy.output += x[m + 2];
        self.energy.loss += x[m + 3];

        self.x = x;
        self.k = k;
        self.tmp = tmp;

        if !state.i_l.is_finite()
            || !state.v_out.is_finite()
            || state.v_fc.iter().any(|v| !v.is_finite())
        {
            return Err(SimError::NonFinite {
                t: state.t,
                what: format!("{state:?}"),
            });
        }
        Ok(())
    }

    /// Integrates to `t_end` in equal steps no longer than `dt_max`, calling
    /// `observe` with the state at the start of each step and its length.
    pub fn advance(
        &mut self,
        state: &mut PlantState,
        gates: SwitchState,
        t_end: f64,
        mut observe: impl FnMut(&PlantState, f64),
    ) -> Result<(), SimError> {
        let span = t_end - state.t;
        if span <= 0.0 {
            return Ok(());
        }
        let steps = (span / self.dt_max).ceil().max(1.0) as usize;
        let dt = span / steps as f64;
        for i in 0..steps {
            let h = if i + 1 == steps { t_end - state.t } else { dt };
            observe(state, h);
            self.step(state, gates, h)?;
        }
        state.t = t_end;
        Ok(())
    }
}

/// At least 200 integration points per period at `freq_max`.
pub fn default_dt_max(params: &ConverterParams) -> f64 {
    1.0 / (200.0 * params.freq_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::SinkVoltage;

    fn params() -> ConverterParams {
        ConverterParams::table1()
    }

    fn bits(v: &[u8]) -> SwitchState {
        SwitchState::from_slice(&v.iter().map(|&b| b == 1).collect::<Vec<_>>())
    }

    #[test]
    fn pole_voltage_examples() {
        let v_fc = [80.0, 160.0, 240.0, 320.0];
        assert_eq!(pole_voltage(bits(&[1, 1, 1, 1, 1]), &v_fc, 400.0), 400.0);
        assert_eq!(pole_voltage(bits(&[0, 0, 0, 0, 0]), &v_fc, 400.0), 0.0);
        assert_eq!(pole_voltage(bits(&[1, 1, 0, 0, 0]), &v_fc, 400.0), 160.0);
        // Unbalanced caps: any run telescopes to its end-point voltages.
        let skew = [70.0, 170.0, 230.0, 330.0];
        assert_eq!(
            pole_voltage(bits(&[0, 1, 1, 0, 0]), &skew, 400.0),
            230.0 - 70.0
        );
    }

    #[test]
    fn balanced_pole_voltage_is_level_count() {
        let p = params();
        let st = PlantState::balanced(&p, 0.0, 0.0);
        for b in 0..32u32 {
            let s = SwitchState::from_bits(b, 5);
            let v = pole_voltage(s, &st.v_fc, 400.0);
            assert!((v - s.count() as f64 * 80.0).abs() < 1e-12);
        }
    }

    #[test]
    fn all_off_zero_current_is_equilibrium() {
        let p = ConverterParams {
            load: Load::IdealSink(SinkVoltage::Fixed(0.0)),
            ..params()
        };
        let mut plant = Plant::new(
            p,
            SourceMode::RealCapacitors,
            OutputNode::from_load(&p.load, || unreachable!()),
        );
        let mut st = PlantState::balanced(&p, 0.0, 0.0);
        let before = st.clone();
        plant
            .advance(&mut st, SwitchState::off(5), 1e-5, |_, _| {})
            .unwrap();
        assert_eq!(st.i_l, 0.0);
        assert_eq!(st.v_fc, before.v_fc);
    }

    #[test]
    fn linear_ramp_matches_closed_form() {
        let p = ConverterParams {
            series_resistance: 0.0,
            load: Load::IdealSink(SinkVoltage::Fixed(200.0)),
            ..params()
        };
        let mut plant = Plant::new(
            p,
            SourceMode::IdealSources,
            OutputNode::from_load(&p.load, || unreachable!()),
        );
        let mut st = PlantState::balanced(&p, 0.5, 200.0);
        let gates = bits(&[1, 1, 1, 0, 0]);
        plant.advance(&mut st, gates, 1e-6, |_, _| {}).unwrap();
        let expected = 0.5 + (240.0 - 200.0) / 4.4e-6 * 1e-6;
        assert!(((st.i_l - expected) / (expected - 0.5)).abs() < 1e-3);
    }

    fn plant_at(i_l: f64) -> PlantState {
        PlantState {
            i_l,
            ..PlantState::balanced(&params(), 0.0, 0.0)
        }
    }

    #[test]
    fn deadtime_sign_rule() {
        let p = params();
        let r = resolve_deadtime_node(
            &plant_at(3.0),
            bits(&[1, 0, 0, 0, 0]),
            bits(&[1, 1, 0, 0, 0]),
            &p,
        );
        assert_eq!(r.events.len(), 1);
        assert_eq!(r.events[0].direction, Direction::TurnOnHigh);
        assert_eq!(r.events[0].classification, Classification::Hard);
        assert!(r.events[0].residual_voltage > 0.0);
        // Hard pair holds its old state during the window.
        assert_eq!(r.effective, bits(&[1, 0, 0, 0, 0]));

        let r = resolve_deadtime_node(
            &plant_at(3.0),
            bits(&[1, 1, 0, 0, 0]),
            bits(&[1, 0, 0, 0, 0]),
            &p,
        );
        assert_eq!(r.events[0].classification, Classification::Zvs);
        assert_eq!(r.effective, bits(&[1, 0, 0, 0, 0]));
    }

    #[test]
    fn deadtime_charge_rule() {
        let p = ConverterParams {
            switch_output_capacitance: 100e-12,
            dead_time: 100e-9,
            ..params()
        };
        let up = (bits(&[1, 0, 0, 0, 0]), bits(&[1, 1, 0, 0, 0]));

        let r = resolve_deadtime_node(&plant_at(-1.0), up.0, up.1, &p);
        let e = r.events[0];
        assert!((e.q_required - 16e-9).abs() < 1e-21);
        assert!((e.q_available - 100e-9).abs() < 1e-21);
        assert_eq!(
            (e.classification, e.residual_voltage),
            (Classification::Zvs, 0.0)
        );
        assert_eq!(r.effective, up.1);
        assert!((r.window_end - 100e-9).abs() < 1e-21);

        let r = resolve_deadtime_node(&plant_at(-0.1), up.0, up.1, &p);
        let e = r.events[0];
        assert_eq!(e.classification, Classification::Hard);
        let expected = (16e-9 - 10e-9) / (2.0 * 100e-12);
        assert!(((e.residual_voltage - expected) / expected).abs() < 1e-12);
    }

    #[test]
    fn two_pair_swing_needs_double_charge() {
        let p = ConverterParams {
            switch_output_capacitance: 100e-12,
            dead_time: 100e-9,
            ..params()
        };
        let r = resolve_deadtime_node(
            &plant_at(-0.25),
            bits(&[1, 0, 0, 0, 0]),
            bits(&[1, 1, 1, 0, 0]),
            &p,
        );
        assert_eq!(r.events.len(), 2);
        assert_eq!(r.rising, 2);
        for e in &r.events {
            assert!((e.q_required - 32e-9).abs() < 1e-21);
            assert_eq!(e.classification, Classification::Hard);
            let expected = (32e-9 - 25e-9) / (4.0 * 100e-12);
            assert!(((e.residual_voltage - expected) / expected).abs() < 1e-12);
        }
    }
}
