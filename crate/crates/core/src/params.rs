//! Converter parameters shared by every stage of the simulator.

use crate::error::ParamError;

/// Largest supported level count. Switch states are packed into a `u32`.
pub const MAX_LEVELS: usize = 32;

/// Output-side load model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Load {
    /// Stiff voltage sink.
    IdealSink(SinkVoltage),
    /// Resistor in parallel with a capacitor.
    ParallelRc { resistance: f64, capacitance: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SinkVoltage {
    Fixed(f64),
    /// Follows the scheduled duty: `d(t)·V_in − R_s·I_nominal`, so an open-loop
    /// duty schedule holds the inductor current near its nominal value.
    Tracking,
}

impl Default for Load {
    fn default() -> Self {
        Load::IdealSink(SinkVoltage::Fixed(200.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConverterParams {
    pub level_count: usize,
    pub inductance: f64,
    pub flying_capacitance: f64,
    pub switch_output_capacitance: f64,
    pub input_voltage: f64,
    pub dead_time: f64,
    pub zvs_current: f64,
    pub adjacency_threshold: f64,
    pub freq_min: f64,
    pub freq_max: f64,
    pub series_resistance: f64,
    pub load: Load,
}

impl ConverterParams {
    /// Six-level prototype: 4.4 µH, 8.8 µF flying capacitors, 400 V input,
    /// 70–230 kHz carrier range, 1 A ZVS current. Device capacitance and
    /// dead-time are not part of that set; 50 pF / 40 ns are used.
    pub fn table1() -> Self {
        Self {
            level_count: 6,
            inductance: 4.4e-6,
            flying_capacitance: 8.8e-6,
            switch_output_capacitance: 50e-12,
            input_voltage: 400.0,
            dead_time: 40e-9,
            zvs_current: 1.0,
            adjacency_threshold: 0.038,
            freq_min: 70e3,
            freq_max: 230e3,
            series_resistance: 0.05,
            load: Load::default(),
        }
    }

    /// Number of switch pairs, N − 1.
    pub fn switch_count(&self) -> usize {
        self.level_count - 1
    }

    pub fn quantization_step(&self) -> f64 {
        quantization_step(self)
    }

    /// Nominal voltage of flying capacitor `k` (1-based), `k·V_in/(N−1)`.
    pub fn nominal_cap_voltage(&self, k: usize) -> f64 {
        k as f64 * self.input_voltage / self.switch_count() as f64
    }

    pub fn validate(self) -> Result<Self, ParamError> {
        validate(self)
    }
}

fn positive(name: &'static str, value: f64) -> Result<(), ParamError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ParamError::NotPositive { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<(), ParamError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ParamError::Negative { name, value })
    }
}

/// Returns `params` unchanged when every invariant holds, otherwise the first
/// violation found.
pub fn validate(params: ConverterParams) -> Result<ConverterParams, ParamError> {
    let n = params.level_count;
    if n < 3 {
        return Err(ParamError::TooFewLevels(n));
    }
    if n > MAX_LEVELS {
        return Err(ParamError::TooManyLevels {
            got: n,
            max: MAX_LEVELS,
        });
    }
    positive("inductance", params.inductance)?;
    positive("flying_capacitance", params.flying_capacitance)?;
    non_negative(
        "switch_output_capacitance",
        params.switch_output_capacitance,
    )?;
    positive("input_voltage", params.input_voltage)?;
    positive("dead_time", params.dead_time)?;
    positive("zvs_current", params.zvs_current)?;
    positive("freq_min", params.freq_min)?;
    positive("freq_max", params.freq_max)?;
    if params.freq_min > params.freq_max {
        return Err(ParamError::FrequencyBounds {
            min: params.freq_min,
            max: params.freq_max,
        });
    }
    non_negative("series_resistance", params.series_resistance)?;

    let limit = quantization_step(&params) / 2.0;
    let alpha = params.adjacency_threshold;
    if !(alpha.is_finite() && alpha > 0.0 && alpha < limit) {
        return Err(ParamError::ThresholdOutOfRange {
            alpha,
            limit,
            levels: n,
        });
    }

    match params.load {
        Load::IdealSink(SinkVoltage::Fixed(v)) => non_negative("load sink voltage", v)?,
        Load::IdealSink(SinkVoltage::Tracking) => {}
        Load::ParallelRc {
            resistance,
            capacitance,
        } => {
            positive("load resistance", resistance)?;
            positive("load capacitance", capacitance)?;
        }
    }
    Ok(params)
}

/// Duty quantization step `d_u = 1/(N−1)`.
pub fn quantization_step(params: &ConverterParams) -> f64 {
    1.0 / params.switch_count() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table1_accepted() {
        let p = ConverterParams::table1();
        assert_eq!(validate(p), Ok(p));
    }

    #[test]
    fn two_levels_rejected() {
        let p = ConverterParams {
            level_count: 2,
            ..ConverterParams::table1()
        };
        assert_eq!(validate(p), Err(ParamError::TooFewLevels(2)));
    }

    #[test]
    fn threshold_at_or_above_half_step_rejected() {
        let p = ConverterParams {
            adjacency_threshold: 0.15,
            ..ConverterParams::table1()
        };
        assert!(matches!(
            validate(p),
            Err(ParamError::ThresholdOutOfRange { .. })
        ));
        let p = ConverterParams {
            adjacency_threshold: 0.1,
            ..ConverterParams::table1()
        };
        assert!(matches!(
            validate(p),
            Err(ParamError::ThresholdOutOfRange { .. })
        ));
    }

    #[test]
    fn bad_physical_values_rejected() {
        let base = ConverterParams::table1();
        let cases = [
            ConverterParams {
                inductance: 0.0,
                ..base
            },
            ConverterParams {
                input_voltage: -1.0,
                ..base
            },
            ConverterParams {
                dead_time: f64::NAN,
                ..base
            },
            ConverterParams {
                series_resistance: -0.1,
                ..base
            },
            ConverterParams {
                freq_min: 300e3,
                ..base
            },
            ConverterParams {
                load: Load::ParallelRc {
                    resistance: 0.0,
                    capacitance: 1e-6,
                },
                ..base
            },
        ];
        for p in cases {
            assert!(validate(p).is_err(), "{p:?}");
        }
        assert!(validate(ConverterParams {
            series_resistance: 0.0,
            ..base
        })
        .is_ok());
    }

    #[test]
    fn quantization_steps() {
        let base = ConverterParams::table1();
        assert_eq!(quantization_step(&base), 0.2);
        assert_eq!(
            quantization_step(&ConverterParams {
                level_count: 3,
                adjacency_threshold: 0.1,
                ..base
            }),
            0.5
        );
        let q11 = quantization_step(&ConverterParams {
            level_count: 11,
            adjacency_threshold: 0.01,
            ..base
        });
        assert!((q11 - 0.1).abs() < 1e-15);
    }

    #[test]
    fn validate_is_idempotent() {
        let p = ConverterParams::table1();
        assert_eq!(validate(validate(p).unwrap()), validate(p));
    }

    #[test]
    fn step_times_switch_count_is_one() {
        for n in 3..=MAX_LEVELS {
            let p = ConverterParams {
                level_count: n,
                adjacency_threshold: 1e-3,
                ..ConverterParams::table1()
            };
            assert_eq!(quantization_step(&p) * (n - 1) as f64, 1.0, "N = {n}");
        }
    }
}
