//! Lock-step run of controller, modulator, and plant from valley to valley.

use crate::control::{sample_and_update, Command, ControllerState, PiGains};
use crate::error::SimError;
use crate::modulator::{period_segments, CarrierBank, DutyFrame, Mode, ModePolicy, SwitchState};
use crate::params::{ConverterParams, Load, SinkVoltage};
use crate::plant::{
    resolve_deadtime_node, EnergyLedger, OutputNode, Plant, PlantState, SourceMode, SwitchingEvent,
};
use crate::scheduler::FrequencyCommand;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub params: ConverterParams,
    pub policy: ModePolicy,
    pub source_mode: SourceMode,
    pub command: Command,
    pub duration: f64,
    /// Initial current for scripted duty and the tracking-sink offset.
    pub nominal_current: f64,
    pub gains: PiGains,
    /// Keep every n-th integration step in the trace; 0 disables the trace.
    pub trace_decimation: usize,
    /// Overrides the default integration step bound.
    pub dt_max: Option<f64>,
}

impl RunConfig {
    pub fn new(params: ConverterParams, command: Command) -> Self {
        Self {
            gains: PiGains::bandwidth_design(&params),
            params,
            policy: ModePolicy::SapwmEnabled,
            source_mode: SourceMode::IdealSources,
            command,
            duration: 1e-3,
            nominal_current: 3.0,
            trace_decimation: 1,
            dt_max: None,
        }
    }
}

/// Column-oriented trace. Row `i` holds the state at `t[i]` and the pole
/// voltage and gate states applied from `t[i]` until `t[i + 1]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub caps: usize,
    pub t: Vec<f64>,
    pub i_l: Vec<f64>,
    pub v_sw: Vec<f64>,
    pub v_out: Vec<f64>,
    /// Row-major, `caps` values per row.
    pub v_fc: Vec<f64>,
    pub gates: Vec<SwitchState>,
    pub mode: Vec<Mode>,
    pub f_applied: Vec<f64>,
    pub period: Vec<u32>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn v_fc_row(&self, i: usize) -> &[f64] {
        &self.v_fc[i * self.caps..(i + 1) * self.caps]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodRecord {
    pub t_start: f64,
    pub period: f64,
    pub duty: DutyFrame,
    pub freq: FrequencyCommand,
    pub i_sample: f64,
    pub v_out_sample: f64,
}

impl PeriodRecord {
    pub fn t_end(&self) -> f64 {
        self.t_start + self.period
    }
}

/// Change of the gate-driver inputs at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Commutation {
    pub t: f64,
    pub pre: SwitchState,
    pub post: SwitchState,
    /// Mode of the period in which the commutation happens.
    pub mode: Mode,
    pub period: u32,
}

/// Gate-driver input levels over one constant stretch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSpan {
    pub t_start: f64,
    pub t_end: f64,
    pub s_in: SwitchState,
    pub n_r: u32,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub params: ConverterParams,
    pub trace: Trace,
    pub events: Vec<SwitchingEvent>,
    pub periods: Vec<PeriodRecord>,
    pub commutations: Vec<Commutation>,
    pub spans: Vec<LevelSpan>,
    pub initial_state: PlantState,
    pub final_state: PlantState,
    pub initial_stored: f64,
    pub final_stored: f64,
    pub energy: EnergyLedger,
}

fn output_node(cfg: &RunConfig) -> Result<OutputNode, SimError> {
    let p = &cfg.params;
    if let (Load::IdealSink(SinkVoltage::Tracking), Command::Current(_)) = (&p.load, &cfg.command) {
        return Err(SimError::Scenario(
            "a tracking sink needs a duty schedule".into(),
        ));
    }
    Ok(OutputNode::from_load(&p.load, || {
        let offset = p.series_resistance * cfg.nominal_current;
        match &cfg.command {
            Command::Duty(d) => d.map(|d| d * p.input_voltage - offset),
            Command::Current(_) => unreachable!(),
        }
    }))
}

/// Per-pair dead-time overrides.
struct DeadTimes {
    until: Vec<f64>,
    state: SwitchState,
}

impl DeadTimes {
    fn effective(&self, s_in: SwitchState, t: f64) -> SwitchState {
        let mut g = s_in;
        for (k, &until) in self.until.iter().enumerate() {
            if t < until {
                g = g.with(k, self.state.get(k));
            }
        }
        g
    }

    fn next_end_after(&self, t: f64, limit: f64) -> f64 {
        self.until
            .iter()
            .copied()
            .filter(|&u| u > t && u < limit)
            .fold(limit, f64::min)
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<RunRecord, SimError> {
    let p = cfg.params;
    let m = p.switch_count();
    if !(cfg.duration > 0.0 && cfg.duration.is_finite()) {
        return Err(SimError::Scenario(format!(
            "duration must be positive, got {}",
            cfg.duration
        )));
    }
    let output = output_node(cfg)?;
    let mut plant = Plant::new(p, cfg.source_mode, output);
    if let Some(dt) = cfg.dt_max {
        plant.set_dt_max(dt);
    }

    let i0 = match &cfg.command {
        Command::Duty(_) => cfg.nominal_current,
        Command::Current(r) => r.eval(0.0),
    };
    let v_out0 = match p.load {
        Load::ParallelRc { resistance, .. } => i0 * resistance,
        _ => 0.0,
    };
    let mut state = PlantState::balanced(&p, i0, v_out0);
    state.v_out = plant.output_voltage_at(0.0, &state);
    let initial_state = state.clone();
    let initial_stored = plant.stored_energy(&state);

    let mut ctrl = ControllerState::new(cfg.gains);
    let mut bank = CarrierBank::new(m, 1.0 / p.freq_min, 0.0);
    let mut trace = Trace {
        caps: m - 1,
        ..Trace::default()
    };
    let mut events = Vec::new();
    let mut periods = Vec::new();
    let mut commutations = Vec::new();
    let mut spans: Vec<LevelSpan> = Vec::new();
    let mut dead = DeadTimes {
        until: vec![f64::NEG_INFINITY; m],
        state: SwitchState::off(m),
    };
    let mut s_prev: Option<SwitchState> = None;
    let mut elapsed = bank.period();
    let mut step_counter = 0usize;

    while state.t < cfg.duration * (1.0 - 1e-12) {
        let period_index = periods.len() as u32;
        let v_out = plant.output_voltage_at(state.t, &state);
        let update = sample_and_update(
            &state,
            v_out,
            &mut ctrl,
            &cfg.command,
            cfg.policy,
            &p,
            elapsed,
            &mut bank,
        )?;
        let t0 = bank.period_start();
        let period = bank.period();
        let segments = period_segments(&update.duty, m);
        periods.push(PeriodRecord {
            t_start: t0,
            period,
            duty: update.duty,
            freq: update.freq,
            i_sample: update.i_sample,
            v_out_sample: update.v_out_sample,
        });
        let mode = update.duty.mode;
        let n_r = update.duty.n_r();
        let prev = *s_prev.get_or_insert(segments.last().expect("at least one segment").frame.s_in);
        let mut s_cur = prev;

        for (i, seg) in segments.iter().enumerate() {
            let seg_start = if i == 0 { t0 } else { t0 + seg.start * period };
            let seg_end = match segments.get(i + 1) {
                Some(next) => t0 + next.start * period,
                None => t0 + period,
            };
            let s_in = seg.frame.s_in;
            if s_in != s_cur {
                // A pair re-commanded inside its dead window starts from the
                // state its diode holds, so a swallowed pulse is no event.
                let changed = s_in.bits() ^ s_cur.bits();
                let held = dead.effective(s_cur, state.t);
                let pre =
                    SwitchState::from_bits((held.bits() & changed) | (s_in.bits() & !changed), m);
                let res = resolve_deadtime_node(&state, pre, s_in, &p);
                for k in (0..m).filter(|&k| changed >> k & 1 == 1) {
                    if pre.get(k) == s_in.get(k) {
                        dead.until[k] = f64::NEG_INFINITY;
                    } else {
                        dead.until[k] = res.window_end;
                        dead.state = dead.state.with(k, res.effective.get(k));
                    }
                }
                events.extend(res.events);
                commutations.push(Commutation {
                    t: state.t,
                    pre: s_cur,
                    post: s_in,
                    mode,
                    period: period_index,
                });
                s_cur = s_in;
            }
            spans.push(LevelSpan {
                t_start: seg_start,
                t_end: seg_end,
                s_in,
                n_r,
                mode,
            });

            while state.t < seg_end {
                let stop = dead.next_end_after(state.t, seg_end);
                let gates = dead.effective(s_in, state.t);
                let decimation = cfg.trace_decimation;
                let f_applied = update.freq.f_applied;
                plant.advance(&mut state, gates, stop, |st, _| {
                    if decimation > 0 && step_counter.is_multiple_of(decimation) {
                        trace.t.push(st.t);
                        trace.i_l.push(st.i_l);
                        trace.v_sw.push(crate::plant::pole_voltage(
                            gates,
                            &st.v_fc,
                            p.input_voltage,
                        ));
                        trace.v_out.push(st.v_out);
                        trace.v_fc.extend_from_slice(&st.v_fc);
                        trace.gates.push(gates);
                        trace.mode.push(mode);
                        trace.f_applied.push(f_applied);
                        trace.period.push(period_index);
                    }
                    step_counter += 1;
                })?;
            }
        }
        s_prev = Some(s_cur);
        elapsed = period;
    }

    let final_stored = plant.stored_energy(&state);
    Ok(RunRecord {
        params: p,
        trace,
        events,
        periods,
        commutations,
        spans,
        initial_state,
        final_state: state,
        initial_stored,
        final_stored,
        energy: plant.energy(),
    })
}
