//! Steady-state metrics over a finished run and sweep aggregation.

use rayon::prelude::*;

use crate::error::{AnalysisError, SimError};
use crate::modulator::Mode;
use crate::plant::Classification;
use crate::sim::{simulate, RunConfig, RunRecord, Trace};

/// Fraction of the run, counted from its end, treated as steady state.
pub const STEADY_FRACTION: f64 = 0.25;
/// Per-period flying-capacitor means may scatter by at most this share of
/// `V_in` for the window to count as steady.
pub const STEADY_STD_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub d_star: f64,
    pub mode: Mode,
    pub f_applied_hz: f64,
    pub zvs_rate: f64,
    pub ripple_pkpk_a: f64,
    pub v_sw_mean_v: f64,
    pub v_fc_max_dev_pct: f64,
    pub steady: bool,
}

/// Whole switching periods inside the final [`STEADY_FRACTION`] of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub start: f64,
    pub end: f64,
    /// Index range into `RunRecord::periods`.
    pub first_period: usize,
    pub last_period: usize,
}

impl Window {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }

    pub fn period_count(&self) -> usize {
        self.last_period - self.first_period
    }
}

pub fn steady_window(run: &RunRecord) -> Result<Window, AnalysisError> {
    let (first, last) = match (run.periods.first(), run.periods.last()) {
        (Some(f), Some(l)) => (f, l),
        _ => return Err(AnalysisError::EmptyWindow),
    };
    let cut = last.t_end() - STEADY_FRACTION * (last.t_end() - first.t_start);
    let first_period = run.periods.partition_point(|p| p.t_start < cut - 1e-15);
    if first_period >= run.periods.len() {
        return Err(AnalysisError::EmptyWindow);
    }
    Ok(Window {
        start: run.periods[first_period].t_start,
        end: last.t_end(),
        first_period,
        last_period: run.periods.len(),
    })
}

/// Trace rows `[a, b)` whose start time falls in `[t0, t1)`.
fn rows(trace: &Trace, t0: f64, t1: f64) -> std::ops::Range<usize> {
    let a = trace.t.partition_point(|&t| t < t0);
    let b = trace.t.partition_point(|&t| t < t1);
    a..b
}

/// Length of the step that begins at row `i`.
fn row_dt(trace: &Trace, i: usize, end: f64) -> f64 {
    trace.t.get(i + 1).copied().unwrap_or(end).min(end) - trace.t[i]
}

/// Time average of `v_sw` over `[t0, t1)`.
pub fn mean_pole_voltage(trace: &Trace, t0: f64, t1: f64) -> f64 {
    let r = rows(trace, t0, t1);
    let acc: f64 = r.map(|i| trace.v_sw[i] * row_dt(trace, i, t1)).sum();
    acc / (t1 - t0)
}

/// `∫|v_sw − v_out| dt` over each `(start, end)` period, averaged.
pub fn volt_seconds(trace: &Trace, periods: &[(f64, f64)]) -> f64 {
    if periods.is_empty() {
        return 0.0;
    }
    let total: f64 = periods
        .iter()
        .map(|&(t0, t1)| {
            rows(trace, t0, t1)
                .map(|i| (trace.v_sw[i] - trace.v_out[i]).abs() * row_dt(trace, i, t1))
                .sum::<f64>()
        })
        .sum();
    total / periods.len() as f64
}

/// Smallest and largest inductor current in `[t0, t1]`.
pub fn current_extrema(trace: &Trace, t0: f64, t1: f64) -> (f64, f64) {
    let a = trace.t.partition_point(|&t| t < t0);
    let b = trace.t.partition_point(|&t| t <= t1);
    trace.i_l[a..b]
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            (lo.min(i), hi.max(i))
        })
}

/// Time-weighted mean of every flying-capacitor voltage over `[t0, t1)`.
pub fn cap_means(trace: &Trace, t0: f64, t1: f64) -> Vec<f64> {
    let mut acc = vec![0.0; trace.caps];
    let mut span = 0.0;
    for i in rows(trace, t0, t1) {
        let dt = row_dt(trace, i, t1);
        span += dt;
        for (a, v) in acc.iter_mut().zip(trace.v_fc_row(i)) {
            *a += v * dt;
        }
    }
    acc.iter().map(|a| a / span).collect()
}

/// Largest relative deviation, in percent, of any flying capacitor from its
/// nominal voltage over `[t0, t1)`.
pub fn cap_max_deviation_pct(run: &RunRecord, t0: f64, t1: f64) -> f64 {
    let trace = &run.trace;
    let mut worst: f64 = 0.0;
    for i in rows(trace, t0, t1) {
        for (k, v) in trace.v_fc_row(i).iter().enumerate() {
            let nominal = run.params.nominal_cap_voltage(k + 1);
            worst = worst.max((v - nominal).abs() / nominal * 100.0);
        }
    }
    worst
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Aggregates the steady-state window of a run into one sweep row.
pub fn classify_run(run: &RunRecord) -> Result<SweepRow, AnalysisError> {
    if run.events.is_empty() {
        return Err(AnalysisError::NoEvents);
    }
    let w = steady_window(run)?;
    let periods = &run.periods[w.first_period..w.last_period];

    let in_window: Vec<_> = run.events.iter().filter(|e| w.contains(e.t)).collect();
    let zvs_rate = if in_window.is_empty() {
        return Err(AnalysisError::NoEvents);
    } else {
        in_window
            .iter()
            .filter(|e| e.classification == Classification::Zvs)
            .count() as f64
            / in_window.len() as f64
    };

    let n = periods.len() as f64;
    let d_star = periods.iter().map(|p| p.duty.d_star).sum::<f64>() / n;
    let f_applied_hz = periods.iter().map(|p| p.freq.f_applied).sum::<f64>() / n;
    let sapwm = periods
        .iter()
        .filter(|p| p.duty.mode == Mode::Sapwm)
        .count();
    let mode = if 2 * sapwm > periods.len() {
        Mode::Sapwm
    } else {
        Mode::Pspwm
    };

    let (lo, hi) = current_extrema(&run.trace, w.start, w.end);
    let v_sw_mean_v = mean_pole_voltage(&run.trace, w.start, w.end);
    let v_fc_max_dev_pct = cap_max_deviation_pct(run, w.start, w.end);

    let steady = run.trace.caps == 0 || {
        let per_period: Vec<Vec<f64>> = periods
            .iter()
            .map(|p| cap_means(&run.trace, p.t_start, p.t_end()))
            .collect();
        let limit = STEADY_STD_LIMIT * run.params.input_voltage;
        (0..run.trace.caps).all(|k| {
            let xs: Vec<f64> = per_period.iter().map(|m| m[k]).collect();
            std_dev(&xs) < limit
        })
    };

    Ok(SweepRow {
        d_star,
        mode,
        f_applied_hz,
        zvs_rate,
        ripple_pkpk_a: hi - lo,
        v_sw_mean_v,
        v_fc_max_dev_pct,
        steady,
    })
}

/// `n` duty points spread uniformly over the open interval `(α, 1 − α)`.
pub fn sweep_grid(alpha: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| alpha + (1.0 - 2.0 * alpha) * (i + 1) as f64 / (n + 1) as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum SweepError {
    Sim { d_star: f64, err: SimError },
    Analysis { d_star: f64, err: AnalysisError },
}

impl std::fmt::Display for SweepError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SweepError::Sim { d_star, err } => write!(f, "d* = {d_star}: {err}"),
            SweepError::Analysis { d_star, err } => write!(f, "d* = {d_star}: {err}"),
        }
    }
}

impl std::error::Error for SweepError {}

/// Runs one configuration per grid point in parallel and returns the rows in
/// grid order. `make` builds the run for a duty value.
pub fn sweep<F>(grid: &[f64], make: F) -> Result<Vec<SweepRow>, SweepError>
where
    F: Fn(f64) -> RunConfig + Sync,
{
    sweep_map(grid, make, |_, row| row)
}

/// [`sweep`] with a per-run reduction. Each record is dropped once `inspect`
/// returns, so large sweeps keep only what the caller extracts.
pub fn sweep_map<F, G, T>(grid: &[f64], make: F, inspect: G) -> Result<Vec<T>, SweepError>
where
    F: Fn(f64) -> RunConfig + Sync,
    G: Fn(&RunRecord, SweepRow) -> T + Sync,
    T: Send,
{
    grid.par_iter()
        .map(|&d| {
            let run = simulate(&make(d)).map_err(|err| SweepError::Sim { d_star: d, err })?;
            let row = classify_run(&run).map_err(|err| SweepError::Analysis { d_star: d, err })?;
            Ok(inspect(&run, row))
        })
        .collect()
}
