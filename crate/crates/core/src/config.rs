//! Scenario files: flat `key = value` lines, `#` starts a comment.
//!
//! ```text
//! level_count = 6
//! adjacency_threshold = auto
//! load_type = ideal_sink
//! load_value = track
//! schedule_kind = duty
//! schedule_points = 0:0.05, 2e-3:0.95
//! ```
//!
//! Every key is optional; missing keys take the six-level prototype values.

use std::collections::HashMap;
use std::fmt::Write as _;

use crate::control::{Command, PiGains};
use crate::error::ConfigError;
use crate::modulator::ModePolicy;
use crate::params::{validate, ConverterParams, Load, SinkVoltage};
use crate::plant::SourceMode;
use crate::schedule::Pwl;
use crate::scheduler::auto_threshold;
use crate::sim::RunConfig;

const KEYS: &[&str] = &[
    "level_count",
    "inductance_h",
    "flying_capacitance_f",
    "switch_output_capacitance_f",
    "input_voltage_v",
    "dead_time_s",
    "zvs_current_a",
    "adjacency_threshold",
    "freq_min_hz",
    "freq_max_hz",
    "series_resistance_ohm",
    "load_type",
    "load_value",
    "mode_policy",
    "source_mode",
    "schedule_kind",
    "schedule_points",
    "duration_s",
    "trace_decimation",
    "nominal_current_a",
    "pi_kp",
    "pi_ki",
    "seed",
    "output_dir",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Parameters with the adjacency threshold already resolved.
    pub params: ConverterParams,
    pub threshold: Threshold,
    pub mode_policy: ModePolicy,
    pub source_mode: SourceMode,
    pub command: Command,
    pub duration: f64,
    pub trace_decimation: usize,
    pub nominal_current: f64,
    pub gains: Option<PiGains>,
    /// Reserved; every run is deterministic.
    pub seed: u64,
    pub output_dir: Option<String>,
}

impl Scenario {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            params: self.params,
            policy: self.mode_policy,
            source_mode: self.source_mode,
            command: self.command.clone(),
            duration: self.duration,
            nominal_current: self.nominal_current,
            gains: self
                .gains
                .unwrap_or_else(|| PiGains::bandwidth_design(&self.params)),
            trace_decimation: 1,
            dt_max: None,
        }
    }

    /// One point of a duty sweep, operated at `nominal_current`.
    ///
    /// With ideal sources the duty is held open-loop and the sink tracks it.
    /// With real capacitors a few hundred millivolts of balancing offset would
    /// move the current of an open-loop point by amperes, so the current loop
    /// is closed instead against a fixed sink at the matching voltage.
    pub fn sweep_point(&self, d_star: f64) -> RunConfig {
        match self.source_mode {
            SourceMode::IdealSources => {
                let params = ConverterParams {
                    load: Load::IdealSink(SinkVoltage::Tracking),
                    ..self.params
                };
                RunConfig {
                    params,
                    command: Command::Duty(Pwl::constant(d_star)),
                    ..self.run_config()
                }
            }
            SourceMode::RealCapacitors => {
                let p = &self.params;
                let v_out = d_star * p.input_voltage - p.series_resistance * self.nominal_current;
                let params = ConverterParams {
                    load: Load::IdealSink(SinkVoltage::Fixed(v_out)),
                    ..*p
                };
                RunConfig {
                    params,
                    command: Command::Current(Pwl::constant(self.nominal_current)),
                    ..self.run_config()
                }
            }
        }
    }

    /// Re-emits the scenario in the file format. Floats use the shortest
    /// representation that parses back to the same value.
    pub fn to_config_string(&self) -> String {
        let p = &self.params;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("level_count", p.level_count.to_string());
        kv("inductance_h", format!("{:?}", p.inductance));
        kv(
            "flying_capacitance_f",
            format!("{:?}", p.flying_capacitance),
        );
        kv(
            "switch_output_capacitance_f",
            format!("{:?}", p.switch_output_capacitance),
        );
        kv("input_voltage_v", format!("{:?}", p.input_voltage));
        kv("dead_time_s", format!("{:?}", p.dead_time));
        kv("zvs_current_a", format!("{:?}", p.zvs_current));
        kv(
            "adjacency_threshold",
            match self.threshold {
                Threshold::Auto => "auto".into(),
                Threshold::Fixed(a) => format!("{a:?}"),
            },
        );
        kv("freq_min_hz", format!("{:?}", p.freq_min));
        kv("freq_max_hz", format!("{:?}", p.freq_max));
        kv(
            "series_resistance_ohm",
            format!("{:?}", p.series_resistance),
        );
        match p.load {
            Load::IdealSink(v) => {
                kv("load_type", "ideal_sink".into());
                kv(
                    "load_value",
                    match v {
                        SinkVoltage::Fixed(v) => format!("{v:?}"),
                        SinkVoltage::Tracking => "track".into(),
                    },
                );
            }
            Load::ParallelRc {
                resistance,
                capacitance,
            } => {
                kv("load_type", "parallel_rc".into());
                kv("load_value", format!("{resistance:?}, {capacitance:?}"));
            }
        }
        kv(
            "mode_policy",
            match self.mode_policy {
                ModePolicy::PspwmOnly => "pspwm_only",
                ModePolicy::SapwmEnabled => "sapwm_enabled",
            }
            .into(),
        );
        kv(
            "source_mode",
            match self.source_mode {
                SourceMode::IdealSources => "ideal_sources",
                SourceMode::RealCapacitors => "real_capacitors",
            }
            .into(),
        );
        let (kind, pwl) = match &self.command {
            Command::Duty(p) => ("duty", p),
            Command::Current(p) => ("current", p),
        };
        kv("schedule_kind", kind.into());
        kv(
            "schedule_points",
            pwl.points()
                .iter()
                .map(|(t, v)| format!("{t:?}:{v:?}"))
                .collect::<Vec<_>>()
                .join(", "),
        );
        kv("duration_s", format!("{:?}", self.duration));
        kv("trace_decimation", self.trace_decimation.to_string());
        kv("nominal_current_a", format!("{:?}", self.nominal_current));
        if let Some(g) = self.gains {
            kv("pi_kp", format!("{:?}", g.kp));
            kv("pi_ki", format!("{:?}", g.ki));
        }
        kv("seed", self.seed.to_string());
        if let Some(dir) = &self.output_dir {
            kv("output_dir", dir.clone());
        }
        s
    }
}

struct Entries {
    map: HashMap<&'static str, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &'static str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn parse<T: std::str::FromStr>(&self, key: &'static str, default: T) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v.parse().map_err(|e: T::Err| ConfigError::Value {
                line,
                key: key.into(),
                msg: e.to_string(),
            }),
        }
    }

    fn choice<T: Copy>(
        &self,
        key: &'static str,
        default: T,
        options: &[(&str, T)],
    ) -> Result<T, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => options
                .iter()
                .find(|(name, _)| *name == v)
                .map(|&(_, t)| t)
                .ok_or_else(|| {
                    let names: Vec<&str> = options.iter().map(|o| o.0).collect();
                    ConfigError::Value {
                        line,
                        key: key.into(),
                        msg: format!("expected one of {}", names.join(", ")),
                    }
                }),
        }
    }

    fn value_err(&self, key: &'static str, msg: impl Into<String>) -> ConfigError {
        let line = self.map.get(key).map_or(0, |e| e.0);
        ConfigError::Value {
            line,
            key: key.into(),
            msg: msg.into(),
        }
    }
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| format!("`{}`: {e}", x.trim()))
        })
        .collect()
}

fn parse_points(s: &str) -> Result<Vec<(f64, f64)>, String> {
    s.split(',')
        .map(|pair| {
            let (t, v) = pair
                .split_once(':')
                .ok_or_else(|| format!("`{}` is not `time:value`", pair.trim()))?;
            let t = t
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("`{}`: {e}", t.trim()))?;
            let v = v
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("`{}`: {e}", v.trim()))?;
            Ok((t, v))
        })
        .collect()
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ConfigError> {
    let mut map = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line,
            msg: format!("expected `key = value`, got `{content}`"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        let key =
            *KEYS
                .iter()
                .find(|&&known| known == k)
                .ok_or_else(|| ConfigError::UnknownKey {
                    line,
                    key: k.into(),
                })?;
        if v.is_empty() {
            return Err(ConfigError::Value {
                line,
                key: key.into(),
                msg: "empty value".into(),
            });
        }
        if map.insert(key, (line, v.to_string())).is_some() {
            return Err(ConfigError::DuplicateKey {
                line,
                key: key.into(),
            });
        }
    }
    let e = Entries { map };
    let base = ConverterParams::table1();

    let load_type = e.choice(
        "load_type",
        "ideal_sink",
        &[("ideal_sink", "ideal_sink"), ("parallel_rc", "parallel_rc")],
    )?;
    let load = match (load_type, e.raw("load_value")) {
        ("ideal_sink", None) => base.load,
        ("ideal_sink", Some((_, "track"))) => Load::IdealSink(SinkVoltage::Tracking),
        ("ideal_sink", Some((_, v))) => Load::IdealSink(SinkVoltage::Fixed(v.parse().map_err(
            |err: std::num::ParseFloatError| {
                e.value_err("load_value", format!("expected volts or `track`: {err}"))
            },
        )?)),
        (_, None) => return Err(ConfigError::Missing("load_value")),
        (_, Some((_, v))) => match parse_f64_list(v)
            .map_err(|m| e.value_err("load_value", m))?
            .as_slice()
        {
            &[resistance, capacitance] => Load::ParallelRc {
                resistance,
                capacitance,
            },
            _ => return Err(e.value_err("load_value", "expected `<ohms>, <farads>`")),
        },
    };

    let threshold = match e.raw("adjacency_threshold") {
        None | Some((_, "auto")) => Threshold::Auto,
        Some((_, v)) => Threshold::Fixed(v.parse().map_err(|err: std::num::ParseFloatError| {
            e.value_err("adjacency_threshold", err.to_string())
        })?),
    };

    let mut params = ConverterParams {
        level_count: e.parse("level_count", base.level_count)?,
        inductance: e.parse("inductance_h", base.inductance)?,
        flying_capacitance: e.parse("flying_capacitance_f", base.flying_capacitance)?,
        switch_output_capacitance: e.parse(
            "switch_output_capacitance_f",
            base.switch_output_capacitance,
        )?,
        input_voltage: e.parse("input_voltage_v", base.input_voltage)?,
        dead_time: e.parse("dead_time_s", base.dead_time)?,
        zvs_current: e.parse("zvs_current_a", base.zvs_current)?,
        adjacency_threshold: 0.0,
        freq_min: e.parse("freq_min_hz", base.freq_min)?,
        freq_max: e.parse("freq_max_hz", base.freq_max)?,
        series_resistance: e.parse("series_resistance_ohm", base.series_resistance)?,
        load,
    };
    let nominal_current: f64 = e.parse("nominal_current_a", 3.0)?;
    if !nominal_current.is_finite() {
        return Err(e.value_err("nominal_current_a", "must be finite"));
    }
    params.adjacency_threshold = match threshold {
        Threshold::Fixed(a) => a,
        Threshold::Auto => {
            let probe = ConverterParams {
                adjacency_threshold: 0.25 / (params.level_count.max(2) - 1) as f64,
                ..params
            };
            auto_threshold(&validate(probe)?, nominal_current)?
        }
    };
    let params = validate(params)?;

    let mode_policy = e.choice(
        "mode_policy",
        ModePolicy::SapwmEnabled,
        &[
            ("pspwm_only", ModePolicy::PspwmOnly),
            ("sapwm_enabled", ModePolicy::SapwmEnabled),
        ],
    )?;
    let source_mode = e.choice(
        "source_mode",
        SourceMode::IdealSources,
        &[
            ("ideal_sources", SourceMode::IdealSources),
            ("real_capacitors", SourceMode::RealCapacitors),
        ],
    )?;
    let kind = e.choice(
        "schedule_kind",
        "duty",
        &[("duty", "duty"), ("current", "current")],
    )?;
    let points = match e.raw("schedule_points") {
        None => vec![(0.0, if kind == "duty" { 0.5 } else { nominal_current })],
        Some((_, v)) => parse_points(v).map_err(|m| e.value_err("schedule_points", m))?,
    };
    let pwl = Pwl::new(points)
        .ok_or_else(|| e.value_err("schedule_points", "times must be finite and non-decreasing"))?;
    let command = if kind == "duty" {
        if pwl.min_value() < 0.0 || pwl.max_value() > 1.0 {
            return Err(e.value_err("schedule_points", "duty values must lie in [0, 1]"));
        }
        Command::Duty(pwl)
    } else {
        Command::Current(pwl)
    };
    if let (Load::IdealSink(SinkVoltage::Tracking), Command::Current(_)) = (&params.load, &command)
    {
        return Err(e.value_err("load_value", "a tracking sink needs schedule_kind = duty"));
    }

    let duration: f64 = e.parse("duration_s", 1e-3)?;
    let min_duration = 10.0 / params.freq_min;
    if !(duration.is_finite() && duration > min_duration) {
        return Err(e.value_err(
            "duration_s",
            format!("must exceed 10 periods at freq_min ({min_duration} s)"),
        ));
    }
    let trace_decimation: usize = e.parse("trace_decimation", 1)?;
    if trace_decimation == 0 {
        return Err(e.value_err("trace_decimation", "must be at least 1"));
    }
    let gains = match (e.raw("pi_kp"), e.raw("pi_ki")) {
        (None, None) => None,
        _ => {
            let d = PiGains::bandwidth_design(&params);
            Some(PiGains {
                kp: e.parse("pi_kp", d.kp)?,
                ki: e.parse("pi_ki", d.ki)?,
            })
        }
    };

    Ok(Scenario {
        params,
        threshold,
        mode_policy,
        source_mode,
        command,
        duration,
        trace_decimation,
        nominal_current,
        gains,
        seed: e.parse("seed", 0)?,
        output_dir: e.raw("output_dir").map(|(_, v)| v.to_string()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_prototype() {
        let s = parse_scenario("# nothing\n\n").unwrap();
        assert_eq!(s.params.level_count, 6);
        assert_eq!(s.threshold, Threshold::Auto);
        assert!(s.params.adjacency_threshold > 0.03 && s.params.adjacency_threshold < 0.04);
        assert_eq!(s.mode_policy, ModePolicy::SapwmEnabled);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_scenario("level_count = 6\nbogus line\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::Syntax {
                line: 2,
                msg: "expected `key = value`, got `bogus line`".into()
            }
        );
        let err = parse_scenario("\n\nfoo = 1\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                line: 3,
                key: "foo".into()
            }
        );
        let err = parse_scenario("level_count = six\n").unwrap_err();
        assert!(matches!(err, ConfigError::Value { line: 1, .. }));
        let err = parse_scenario("level_count = 6\nlevel_count = 5\n").unwrap_err();
        assert!(matches!(err, ConfigError::DuplicateKey { line: 2, .. }));
        let err = parse_scenario("mode_policy = both\n").unwrap_err();
        assert!(matches!(err, ConfigError::Value { line: 1, .. }));
    }

    #[test]
    fn invariant_violations_rejected() {
        assert!(matches!(
            parse_scenario("level_count = 2\n"),
            Err(ConfigError::Params(_))
        ));
        assert!(matches!(
            parse_scenario("adjacency_threshold = 0.15\n"),
            Err(ConfigError::Params(_))
        ));
        assert!(parse_scenario("schedule_points = 0:1.2\n").is_err());
        assert!(parse_scenario("duration_s = 1e-5\n").is_err());
        assert!(parse_scenario("load_value = track\nschedule_kind = current\n").is_err());
        assert!(parse_scenario("load_type = parallel_rc\nload_value = 10\n").is_err());
    }

    #[test]
    fn full_round_trip() {
        let text = "level_count = 6\nadjacency_threshold = 0.035\nload_type = parallel_rc\nload_value = 20, 1e-5\n\
                    schedule_kind = current\nschedule_points = 0:0, 1e-4:3\nmode_policy = pspwm_only\n\
                    source_mode = real_capacitors\npi_kp = 0.2\nduration_s = 2e-3\noutput_dir = out/a\n";
        let s = parse_scenario(text).unwrap();
        assert_eq!(
            s.params.load,
            Load::ParallelRc {
                resistance: 20.0,
                capacitance: 1e-5
            }
        );
        let again = parse_scenario(&s.to_config_string()).unwrap();
        assert_eq!(again, s);
    }
}
