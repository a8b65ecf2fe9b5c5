//! CSV and text renderers. Numbers use fixed scientific notation with nine
//! significant digits so output is byte-identical across platforms.

use std::fmt::Write as _;

use crate::analysis::SweepRow;
use crate::modulator::GateEdge;
use crate::params::ConverterParams;
use crate::plant::SwitchingEvent;
use crate::scheduler::{zvs_charge_requirement, Clamp, ProfileRow};
use crate::sim::Trace;
use crate::Mode;

pub fn sci(x: f64) -> String {
    format!("{x:.8e}")
}

pub fn trace_csv(trace: &Trace, decimation: usize) -> String {
    let mut s = String::from("t_s,i_L_A,v_sw_V,v_out_V");
    for k in 1..=trace.caps {
        let _ = write!(s, ",v_fc{k}_V");
    }
    s.push_str(",mode,f_applied_hz\n");
    for i in (0..trace.len()).step_by(decimation.max(1)) {
        let _ = write!(
            s,
            "{},{},{},{}",
            sci(trace.t[i]),
            sci(trace.i_l[i]),
            sci(trace.v_sw[i]),
            sci(trace.v_out[i])
        );
        for v in trace.v_fc_row(i) {
            let _ = write!(s, ",{}", sci(*v));
        }
        let _ = writeln!(s, ",{},{}", trace.mode[i], sci(trace.f_applied[i]));
    }
    s
}

pub fn events_csv(events: &[SwitchingEvent]) -> String {
    let mut s = String::from("t_s,switch_index,direction,i_L_A,q_req_C,q_avail_C,classification\n");
    for e in events {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            sci(e.t),
            e.switch_index,
            e.direction,
            sci(e.i_l),
            sci(e.q_required),
            sci(e.q_available),
            e.classification
        );
    }
    s
}

pub const SWEEP_HEADER: &str =
    "d_star,mode,f_applied_hz,zvs_rate,ripple_pkpk_A,v_sw_mean_V,v_fc_max_dev_pct,steady";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            sci(r.d_star),
            r.mode,
            sci(r.f_applied_hz),
            sci(r.zvs_rate),
            sci(r.ripple_pkpk_a),
            sci(r.v_sw_mean_v),
            sci(r.v_fc_max_dev_pct),
            r.steady
        );
    }
    s
}

pub fn profile_csv(rows: &[ProfileRow]) -> String {
    let mut s = String::from("d_star,f_pspwm_hz,f_sapwm_hz,mode,clamped\n");
    for r in rows {
        let clamp = match r.clamped {
            Clamp::None => "none",
            Clamp::Low => "low",
            Clamp::High => "high",
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            sci(r.d_star),
            sci(r.f_pspwm),
            sci(r.f_sapwm),
            r.mode,
            clamp
        );
    }
    s
}

pub fn gate_csv(edges: &[GateEdge]) -> String {
    let mut s = String::from("time_s,switch_index,side,level\n");
    for e in edges {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            sci(e.time),
            e.switch,
            e.side,
            u8::from(e.level)
        );
    }
    s
}

pub fn feasibility_report(params: &ConverterParams) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "C_oss = {} F, d_u = {}, V_in = {} V, I_ZVS = {} A, t_d = {} s",
        sci(params.switch_output_capacitance),
        sci(params.quantization_step()),
        sci(params.input_voltage),
        sci(params.zvs_current),
        sci(params.dead_time)
    );
    for mode in [Mode::Pspwm, Mode::Sapwm] {
        let r = zvs_charge_requirement(mode, params);
        let _ = writeln!(
            s,
            "{mode}: Q_req = {} C, min t_d = {} s, {}",
            sci(r.q_required),
            sci(r.min_dead_time),
            if r.feasible { "PASS" } else { "FAIL" }
        );
    }
    s
}
