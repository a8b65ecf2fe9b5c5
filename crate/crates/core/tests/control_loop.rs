use fcml::analysis::steady_window;
use fcml::control::Command;
use fcml::modulator::ModePolicy;
use fcml::plant::SourceMode;
use fcml::schedule::Pwl;
use fcml::sim::{simulate, RunConfig, RunRecord};
use fcml::{ConverterParams, Load, SinkVoltage};

fn step_run() -> RunRecord {
    let params = ConverterParams {
        load: Load::IdealSink(SinkVoltage::Fixed(200.0)),
        ..ConverterParams::table1()
    };
    let command = Command::Current(Pwl::new(vec![(0.0, 0.0), (1e-4, 0.0), (1e-4, 3.0)]).unwrap());
    let cfg = RunConfig {
        duration: 2e-3,
        ..RunConfig::new(params, command)
    };
    simulate(&cfg).unwrap()
}

fn period_average_current(run: &RunRecord, t0: f64, t1: f64) -> f64 {
    let tr = &run.trace;
    let a = tr.t.partition_point(|&t| t < t0);
    let b = tr.t.partition_point(|&t| t < t1);
    let mut acc = 0.0;
    for i in a..b {
        let (t_next, i_next) = if i + 1 < tr.len() {
            (tr.t[i + 1], tr.i_l[i + 1])
        } else {
            (run.final_state.t, run.final_state.i_l)
        };
        acc += 0.5 * (tr.i_l[i] + i_next) * (t_next.min(t1) - tr.t[i]);
    }
    acc / (t1 - t0)
}

#[test]
fn current_step_settles_within_two_percent() {
    let run = step_run();
    let w = steady_window(&run).unwrap();
    for p in &run.periods[w.first_period..w.last_period] {
        assert!(
            (p.i_sample - 3.0).abs() < 0.06,
            "sample {} at t = {}",
            p.i_sample,
            p.t_start
        );
        let avg = period_average_current(&run, p.t_start, p.t_end());
        assert!(
            (avg - 3.0).abs() < 0.06,
            "period average {avg} at t = {}",
            p.t_start
        );
    }
    // Duty ends up on the feed-forward value plus the drop across R_s.
    let d = run.periods.last().unwrap().duty.d_star;
    let expected = (200.0 + 3.0 * 0.05) / 400.0;
    assert!((d - expected).abs() < 1e-3, "d* = {d}");
}

#[test]
fn valley_sample_matches_period_average() {
    let params = ConverterParams {
        series_resistance: 0.0,
        load: Load::IdealSink(SinkVoltage::Tracking),
        ..ConverterParams::table1()
    };
    for d in [0.13, 0.3, 0.41, 0.5, 0.77] {
        let cfg = RunConfig {
            duration: 5e-4,
            ..RunConfig::new(params, Command::Duty(Pwl::constant(d)))
        };
        let run = simulate(&cfg).unwrap();
        let w = steady_window(&run).unwrap();
        for p in &run.periods[w.first_period..w.last_period] {
            let avg = period_average_current(&run, p.t_start, p.t_end());
            assert!(
                (p.i_sample - avg).abs() <= 0.02 * avg.abs(),
                "d = {d}: sample {} vs average {avg}",
                p.i_sample
            );
        }
    }
}

#[test]
fn mode_and_frequency_change_only_at_valleys() {
    let params = ConverterParams {
        load: Load::IdealSink(SinkVoltage::Tracking),
        ..ConverterParams::table1()
    };
    let command = Command::Duty(Pwl::new(vec![(0.0, 0.15), (1e-3, 0.45)]).unwrap());
    for source_mode in [SourceMode::IdealSources, SourceMode::RealCapacitors] {
        let cfg = RunConfig {
            source_mode,
            ..RunConfig::new(params, command.clone())
        };
        let run = simulate(&cfg).unwrap();
        let tr = &run.trace;
        for i in 0..tr.len() {
            let p = &run.periods[tr.period[i] as usize];
            assert!(tr.t[i] >= p.t_start - 1e-15 && tr.t[i] < p.t_end() + 1e-15);
            assert_eq!(tr.mode[i], p.duty.mode);
            assert_eq!(tr.f_applied[i], p.freq.f_applied);
        }
        for w in run.periods.windows(2) {
            assert!((w[1].t_start - w[0].t_end()).abs() < 1e-15);
        }
        for c in &run.commutations {
            assert_eq!(c.mode, run.periods[c.period as usize].duty.mode);
        }
        let modes = run
            .periods
            .windows(2)
            .filter(|w| w[0].duty.mode != w[1].duty.mode)
            .count();
        assert!(modes >= 2, "ramp should cross SAPWM bands");
    }
}

#[test]
fn pspwm_only_never_selects_sapwm() {
    let params = ConverterParams {
        load: Load::IdealSink(SinkVoltage::Tracking),
        ..ConverterParams::table1()
    };
    let cfg = RunConfig {
        policy: ModePolicy::PspwmOnly,
        duration: 5e-4,
        ..RunConfig::new(
            params,
            Command::Duty(Pwl::new(vec![(0.0, 0.15), (5e-4, 0.85)]).unwrap()),
        )
    };
    let run = simulate(&cfg).unwrap();
    assert!(run.periods.iter().all(|p| p.duty.mode == fcml::Mode::Pspwm));
}

#[test]
fn runs_are_deterministic() {
    let params = ConverterParams {
        load: Load::IdealSink(SinkVoltage::Tracking),
        ..ConverterParams::table1()
    };
    let cfg = RunConfig {
        source_mode: SourceMode::RealCapacitors,
        duration: 3e-4,
        ..RunConfig::new(params, Command::Duty(Pwl::constant(0.58)))
    };
    assert_eq!(simulate(&cfg).unwrap(), simulate(&cfg).unwrap());
}

#[test]
fn tracking_sink_rejects_current_command() {
    let params = ConverterParams {
        load: Load::IdealSink(SinkVoltage::Tracking),
        ..ConverterParams::table1()
    };
    let cfg = RunConfig::new(params, Command::Current(Pwl::constant(3.0)));
    assert!(simulate(&cfg).is_err());
}

#[test]
fn parallel_rc_load_reaches_operating_point() {
    let params = ConverterParams {
        load: Load::ParallelRc {
            resistance: 200.0 / 3.0,
            capacitance: 20e-6,
        },
        ..ConverterParams::table1()
    };
    let cfg = RunConfig {
        duration: 3e-3,
        ..RunConfig::new(params, Command::Current(Pwl::constant(3.0)))
    };
    let run = simulate(&cfg).unwrap();
    let v = run.final_state.v_out;
    assert!((v - 200.0).abs() < 0.02 * 200.0, "v_out = {v}");
}
