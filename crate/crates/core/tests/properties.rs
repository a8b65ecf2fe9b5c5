use proptest::prelude::*;

use fcml::config::parse_scenario;
use fcml::modulator::{
    average_level, latch_and_deadtime, period_segments, streams_from_states, BoolStream, DutyFrame,
    Mode, ModePolicy, SwitchState,
};
use fcml::scheduler::frequency_command;
use fcml::ConverterParams;

fn params_strategy() -> impl Strategy<Value = ConverterParams> {
    (3usize..=12, 0.0f64..=1.0).prop_map(|(n, a)| {
        let d_u = 1.0 / (n - 1) as f64;
        ConverterParams {
            level_count: n,
            adjacency_threshold: a * 0.49 * d_u,
            ..ConverterParams::table1()
        }
    })
}

fn policy_strategy() -> impl Strategy<Value = ModePolicy> {
    prop_oneof![Just(ModePolicy::PspwmOnly), Just(ModePolicy::SapwmEnabled)]
}

fn rising_and_falling(a: SwitchState, b: SwitchState) -> (u32, u32) {
    (
        (!a.bits() & b.bits()).count_ones(),
        (a.bits() & !b.bits()).count_ones(),
    )
}

proptest! {
    #[test]
    fn average_level_equals_reference(p in params_strategy(), d in 0.0f64..=1.0, policy in policy_strategy()) {
        let duty = DutyFrame::build(d, &p, policy).unwrap();
        let segs = period_segments(&duty, p.switch_count());
        prop_assert!((average_level(&segs, p.switch_count()) - d).abs() < 1e-9);
    }

    #[test]
    fn quantization_brackets_reference(p in params_strategy(), d in 0.0f64..=1.0) {
        let f = DutyFrame::build(d, &p, ModePolicy::SapwmEnabled).unwrap();
        prop_assert!(f.d_floor <= d + 1e-12 && d < f.d_floor + f.d_u + 1e-12);
        prop_assert!((d - f.d_round).abs() <= f.d_u / 2.0 + 1e-12);
        prop_assert!(f.d_in >= 0.0 && f.d_in <= 1.0);
    }

    #[test]
    fn sapwm_skips_nearest_level(p in params_strategy(), d in 0.0f64..=1.0) {
        let duty = DutyFrame::build(d, &p, ModePolicy::SapwmEnabled).unwrap();
        prop_assume!(duty.mode == Mode::Sapwm);
        for seg in period_segments(&duty, p.switch_count()) {
            prop_assert_ne!(seg.frame.s_in.count(), duty.n_r());
        }
    }

    #[test]
    fn commutations_are_single_direction_and_contiguous(
        p in params_strategy(),
        d in 0.0f64..=1.0,
        policy in policy_strategy(),
    ) {
        let duty = DutyFrame::build(d, &p, policy).unwrap();
        let segs = period_segments(&duty, p.switch_count());
        for (i, seg) in segs.iter().enumerate() {
            prop_assert!(seg.frame.s_in.is_circular_run(), "{:?}", seg.frame.s_in);
            let next = segs[(i + 1) % segs.len()].frame.s_in;
            let (up, down) = rising_and_falling(seg.frame.s_in, next);
            prop_assert!(up == 0 || down == 0, "{:?} -> {:?}", seg.frame.s_in, next);
            let step = (seg.frame.s_in.count() as i32 - next.count() as i32).abs();
            // SAPWM alternates across the skipped level, two pairs at once.
            let limit = if duty.mode == Mode::Sapwm { 2 } else { 1 };
            prop_assert!(step <= limit, "{:?} -> {:?}", seg.frame.s_in, next);
        }
    }

    #[test]
    fn applied_frequency_within_bounds(
        p in params_strategy(),
        d in 0.0f64..=1.0,
        i_l in -20.0f64..20.0,
        v_out in 0.0f64..400.0,
    ) {
        let duty = DutyFrame::build(d, &p, ModePolicy::SapwmEnabled).unwrap();
        let f = frequency_command(&duty, v_out, i_l, &p);
        prop_assert!(f.f_applied >= p.freq_min && f.f_applied <= p.freq_max);
        prop_assert!(f.f_star >= 0.0);
        prop_assert_eq!(f.clamped_low, f.f_star < p.freq_min);
        prop_assert_eq!(f.clamped_high, f.f_star > p.freq_max);
    }

    #[test]
    fn dead_time_never_overlaps_pair(
        gaps in prop::collection::vec(200e-9f64..5e-6, 1..40),
        start in any::<bool>(),
        t_d in 10e-9f64..90e-9,
    ) {
        let mut t = 0.0;
        let edges: Vec<f64> = gaps.iter().map(|g| { t += g; t }).collect();
        let stream = BoolStream { initial: start, edges: edges.clone() };
        let pairs = latch_and_deadtime(&[stream], t_d).unwrap();
        let pair = &pairs[0];
        let mut probes: Vec<f64> = edges.iter().flat_map(|&e| [e - 1e-12, e + 1e-12, e + 0.5 * t_d, e + t_d + 1e-12]).collect();
        probes.push(t + 1e-6);
        for x in probes {
            prop_assert!(!(pair.high.level_at(x) && pair.low.level_at(x)), "overlap at {x}");
        }
        for &e in &edges {
            let mid = e + 0.5 * t_d;
            prop_assert!(!pair.high.level_at(mid) && !pair.low.level_at(mid), "no dead window at {e}");
        }
    }

    #[test]
    fn streams_reproduce_state_sequence(bits in prop::collection::vec(0u32..32, 2..30)) {
        let states: Vec<SwitchState> = bits.iter().map(|&b| SwitchState::from_bits(b, 5)).collect();
        let changes: Vec<(f64, SwitchState)> = states[1..].iter().enumerate().map(|(i, &s)| ((i + 1) as f64, s)).collect();
        let streams = streams_from_states(states[0], &changes);
        for (i, s) in states.iter().enumerate() {
            for (k, stream) in streams.iter().enumerate() {
                prop_assert_eq!(stream.level_at(i as f64 + 0.5), s.get(k));
            }
        }
    }

    #[test]
    fn config_round_trips(
        n in 3usize..=12,
        l in 1e-7f64..1e-4,
        v_in in 10.0f64..1000.0,
        alpha_frac in 0.01f64..0.99,
        r_s in 0.0f64..0.5,
        duty in 0.05f64..0.95,
        real in any::<bool>(),
        pspwm in any::<bool>(),
    ) {
        let d_u = 1.0 / (n - 1) as f64;
        let text = format!(
            "level_count = {n}\ninductance_h = {l:?}\ninput_voltage_v = {v_in:?}\nadjacency_threshold = {:?}\n\
             series_resistance_ohm = {r_s:?}\nschedule_kind = duty\nschedule_points = 0:{duty:?}, 1e-3:{:?}\n\
             source_mode = {}\nmode_policy = {}\n",
            alpha_frac * 0.5 * d_u,
            1.0 - duty,
            if real { "real_capacitors" } else { "ideal_sources" },
            if pspwm { "pspwm_only" } else { "sapwm_enabled" },
        );
        let first = parse_scenario(&text).unwrap();
        let second = parse_scenario(&first.to_config_string()).unwrap();
        prop_assert_eq!(first, second);
    }
}
