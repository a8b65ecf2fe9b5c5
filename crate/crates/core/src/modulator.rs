//! Duty quantization, phase-shifted carrier comparison, the skipped-adjacency
//! logic transform, and dead-time insertion.
//!
//! Switch `k` (1-based, `k = 1` nearest the ground rail) is stored in bit
//! `k − 1` of a [`SwitchState`]. Carrier `j` (0-based) drives bit `j` and is
//! offset by `2πj/(N−1)`; carrier 0 is the reference whose valley marks the
//! start of every switching period.

use std::fmt;

use crate::error::ModulatorError;
use crate::params::ConverterParams;

/// Snaps `(N−1)·d` onto an integer when it lies within this distance.
const LEVEL_SNAP: f64 = 1e-12;
/// Slack on the adjacency-threshold comparison so that a reference sitting on
/// the boundary up to rounding lands in SAPWM.
const MODE_SLACK: f64 = 1e-12;
/// Edge instants closer than this fraction of a period are merged.
const EDGE_MERGE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Pspwm,
    Sapwm,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Pspwm => "PSPWM",
            Mode::Sapwm => "SAPWM",
        })
    }
}

/// Whether the skipped-adjacency region is honored or every period is PSPWM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModePolicy {
    PspwmOnly,
    SapwmEnabled,
}

/// Packed on/off states of the `N − 1` switch pairs; `true` means the upper
/// device of the pair conducts.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct SwitchState {
    bits: u32,
    len: u8,
}

impl SwitchState {
    pub fn off(len: usize) -> Self {
        debug_assert!(len > 0 && len < 32);
        Self {
            bits: 0,
            len: len as u8,
        }
    }

    pub fn from_bits(bits: u32, len: usize) -> Self {
        let s = Self::off(len);
        Self {
            bits: bits & s.mask(),
            ..s
        }
    }

    pub fn from_slice(states: &[bool]) -> Self {
        let bits = states
            .iter()
            .enumerate()
            .fold(0u32, |acc, (k, &on)| acc | (u32::from(on) << k));
        Self::from_bits(bits, states.len())
    }

    fn mask(&self) -> u32 {
        (1u32 << self.len) - 1
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.bits == 0
    }

    pub fn is_full(&self) -> bool {
        self.bits == self.mask()
    }

    /// State of switch bit `k` (0-based).
    pub fn get(&self, k: usize) -> bool {
        self.bits >> k & 1 == 1
    }

    pub fn with(self, k: usize, on: bool) -> Self {
        let bits = if on {
            self.bits | 1 << k
        } else {
            self.bits & !(1 << k)
        };
        Self { bits, ..self }
    }

    pub fn count(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn to_vec(&self) -> Vec<bool> {
        (0..self.len()).map(|k| self.get(k)).collect()
    }

    /// Bit `k` of the result is bit `k − 1` of `self`, with bit 0 taking the
    /// last bit (circular wrap).
    pub fn rotate_up(self) -> Self {
        let top = self.len - 1;
        Self::from_bits(self.bits << 1 | self.bits >> top, self.len())
    }

    /// Whether the asserted bits form a single circularly contiguous run.
    /// Empty and full states count as contiguous.
    pub fn is_circular_run(&self) -> bool {
        if self.is_empty() || self.is_full() {
            return true;
        }
        // Run starts are set bits whose lower neighbour is clear.
        let starts = self.bits & !self.rotate_up().bits;
        starts.count_ones() == 1
    }
}

impl fmt::Debug for SwitchState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("(")?;
        for k in 0..self.len() {
            if k > 0 {
                f.write_str(",")?;
            }
            f.write_str(if self.get(k) { "1" } else { "0" })?;
        }
        f.write_str(")")
    }
}

/// Duty quantities for one switching period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DutyFrame {
    pub d_star: f64,
    pub d_floor: f64,
    pub d_round: f64,
    pub d_u: f64,
    pub d_mod: f64,
    pub d_in: f64,
    pub mode: Mode,
}

impl DutyFrame {
    /// Rounded level count `(N−1)·d_round`.
    pub fn n_r(&self) -> u32 {
        (self.d_round / self.d_u).round() as u32
    }

    pub fn n_f(&self) -> u32 {
        (self.d_floor / self.d_u).round() as u32
    }

    /// Full duty chain: quantize, pick the mode, and derive the comparator
    /// input. Rounded levels at either rail have no level on the far side to
    /// skip to, so they always run PSPWM.
    pub fn build(
        d_star: f64,
        params: &ConverterParams,
        policy: ModePolicy,
    ) -> Result<Self, ModulatorError> {
        let q = quantize_duty(d_star, params)?;
        let switches = params.switch_count() as u32;
        let mut mode = match policy {
            ModePolicy::PspwmOnly => Mode::Pspwm,
            ModePolicy::SapwmEnabled => select_mode(d_star, q.d_round, params.adjacency_threshold),
        };
        let n_r = q.n_r();
        if n_r == 0 || n_r == switches {
            mode = Mode::Pspwm;
        }
        let d_mod = modified_duty(d_star, q.d_round, q.d_u);
        let d_in = match mode {
            Mode::Pspwm => d_star,
            Mode::Sapwm => d_mod,
        };
        Ok(Self {
            d_mod,
            d_in,
            mode,
            ..q
        })
    }
}

/// Floor and round quantization of `d_star` onto the `(N−1)` level grid.
/// The returned frame carries `d_mod` from the modified-duty law and
/// `d_in = d_star` in PSPWM mode; [`DutyFrame::build`] finishes the chain.
pub fn quantize_duty(d_star: f64, params: &ConverterParams) -> Result<DutyFrame, ModulatorError> {
    if !(0.0..=1.0).contains(&d_star) {
        return Err(ModulatorError::DutyOutOfRange(d_star));
    }
    let m = params.switch_count() as f64;
    let d_u = 1.0 / m;
    let mut scaled = m * d_star;
    if (scaled - scaled.round()).abs() < LEVEL_SNAP {
        scaled = scaled.round();
    }
    // f64::round rounds half away from zero.
    let d_floor = scaled.floor() / m;
    let d_round = scaled.round() / m;
    Ok(DutyFrame {
        d_star,
        d_floor,
        d_round,
        d_u,
        d_mod: modified_duty(d_star, d_round, d_u),
        d_in: d_star,
        mode: Mode::Pspwm,
    })
}

/// SAPWM when the reference sits within `alpha` of its rounded level; the
/// boundary itself belongs to SAPWM.
pub fn select_mode(d_star: f64, d_round: f64, alpha: f64) -> Mode {
    if (d_star - d_round).abs() > alpha + MODE_SLACK {
        Mode::Pspwm
    } else {
        Mode::Sapwm
    }
}

/// Comparator duty that keeps the average pole voltage at `d_star` once the
/// lower of the two occupied levels is raised by one step.
pub fn modified_duty(d_star: f64, d_round: f64, d_u: f64) -> f64 {
    (d_star + d_round - d_u) / 2.0
}

/// Symmetric triangle in `[0, 1]` with its valley at phase 0, `x` in periods.
pub fn triangle(x: f64) -> f64 {
    let x = x - x.floor();
    if x < 0.5 {
        2.0 * x
    } else {
        2.0 - 2.0 * x
    }
}

/// Comparator outputs at period fraction `x` for `switches` carriers.
pub fn compare_at(d_in: f64, x: f64, switches: usize) -> SwitchState {
    let mut s = SwitchState::off(switches);
    if d_in <= 0.0 {
        return s;
    }
    for k in 0..switches {
        if d_in >= triangle(x + k as f64 / switches as f64) {
            s = s.with(k, true);
        }
    }
    s
}

/// Bundle of phase-shifted carriers with shadowed period/duty registers.
/// Writes land in the shadow and only go live at a valley of carrier 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CarrierBank {
    switches: usize,
    period: f64,
    duty: f64,
    start: f64,
    shadow_period: Option<f64>,
    shadow_duty: Option<f64>,
}

impl CarrierBank {
    pub fn new(switches: usize, period: f64, duty: f64) -> Self {
        Self {
            switches,
            period,
            duty,
            start: 0.0,
            shadow_period: None,
            shadow_duty: None,
        }
    }

    pub fn switches(&self) -> usize {
        self.switches
    }

    /// Phase offset of carrier `k` (0-based), radians.
    pub fn phase_offset(&self, k: usize) -> f64 {
        2.0 * std::f64::consts::PI * k as f64 / self.switches as f64
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn duty(&self) -> f64 {
        self.duty
    }

    /// Start of the live period (the last latched valley).
    pub fn period_start(&self) -> f64 {
        self.start
    }

    pub fn next_valley(&self) -> f64 {
        self.start + self.period
    }

    pub fn stage(&mut self, period: f64, duty: f64) {
        self.shadow_period = Some(period);
        self.shadow_duty = Some(duty);
    }

    /// Advances to the valley that ends the live period and applies any
    /// staged values there. Returns the valley instant.
    pub fn latch_at_valley(&mut self) -> f64 {
        self.start += self.period;
        if let Some(p) = self.shadow_period.take() {
            self.period = p;
        }
        if let Some(d) = self.shadow_duty.take() {
            self.duty = d;
        }
        self.start
    }

    /// Positions the bank so that `t` is a valley and latches staged values.
    pub fn restart_at(&mut self, t: f64) {
        self.latch_at_valley();
        self.start = t;
    }

    fn fraction(&self, t: f64) -> f64 {
        (t - self.start) / self.period
    }
}

/// Comparator outputs of `bank` at absolute time `t` with comparator input `d_in`.
pub fn carrier_compare(bank: &CarrierBank, d_in: f64, t: f64) -> SwitchState {
    compare_at(d_in, bank.fraction(t), bank.switches)
}

/// Circular OR of each switch with its lower neighbour. Raises a contiguous
/// partial run by exactly one level.
pub fn or_adjacent(s_raw: SwitchState) -> SwitchState {
    SwitchState::from_bits(s_raw.bits() | s_raw.rotate_up().bits(), s_raw.len())
}

/// Applies the OR transform only while the instantaneous on-count equals the
/// rounded level `n_r`.
pub fn sapwm_transform(s_raw: SwitchState, n_r: u32) -> SwitchState {
    if s_raw.count() == n_r {
        or_adjacent(s_raw)
    } else {
        s_raw
    }
}

/// Every intermediate state of the comparator-to-gate-driver chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwitchFrame {
    pub s_raw: SwitchState,
    pub s_or: SwitchState,
    pub s_mod: SwitchState,
    pub s_in: SwitchState,
    pub n_r: u32,
    pub n_s: u32,
}

impl SwitchFrame {
    pub fn new(s_raw: SwitchState, duty: &DutyFrame) -> Self {
        let n_r = duty.n_r();
        let s_or = or_adjacent(s_raw);
        let s_mod = sapwm_transform(s_raw, n_r);
        let s_in = match duty.mode {
            Mode::Pspwm => s_raw,
            Mode::Sapwm => s_mod,
        };
        Self {
            s_raw,
            s_or,
            s_mod,
            s_in,
            n_r,
            n_s: s_raw.count(),
        }
    }
}

/// Piece of a period over which the gate-driver inputs are constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// Start as a fraction of the period, in `[0, 1)`.
    pub start: f64,
    pub frame: SwitchFrame,
}

/// Gate-driver inputs over one carrier period for a latched duty frame.
/// Comparator edges are found analytically; each segment is evaluated at its
/// midpoint, and adjacent segments with identical `s_in` are merged.
pub fn period_segments(duty: &DutyFrame, switches: usize) -> Vec<Segment> {
    let d = duty.d_in;
    let m = switches as f64;
    let mut edges = vec![0.0];
    if d > 0.0 && d < 1.0 {
        for k in 0..switches {
            let offset = k as f64 / m;
            for x in [-d / 2.0 - offset, d / 2.0 - offset] {
                let f = x - x.floor();
                edges.push(if f >= 1.0 - EDGE_MERGE { 0.0 } else { f });
            }
        }
    }
    edges.sort_by(f64::total_cmp);
    edges.dedup_by(|b, a| *b - *a < EDGE_MERGE);

    let mut segments: Vec<Segment> = Vec::with_capacity(edges.len());
    for (i, &start) in edges.iter().enumerate() {
        let end = edges.get(i + 1).copied().unwrap_or(1.0);
        let frame = SwitchFrame::new(compare_at(d, 0.5 * (start + end), switches), duty);
        match segments.last() {
            Some(prev) if prev.frame.s_in == frame.s_in => {}
            _ => segments.push(Segment { start, frame }),
        }
    }
    segments
}

/// Time average of `count(s_in)/(N−1)` over one period, integrated exactly
/// over the segments.
pub fn average_level(segments: &[Segment], switches: usize) -> f64 {
    let mut acc = 0.0;
    for (i, seg) in segments.iter().enumerate() {
        let end = segments.get(i + 1).map_or(1.0, |s| s.start);
        acc += (end - seg.start) * seg.frame.s_in.count() as f64;
    }
    acc / switches as f64
}

/// Piecewise-constant boolean waveform: an initial level and toggle instants.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoolStream {
    pub initial: bool,
    pub edges: Vec<f64>,
}

impl BoolStream {
    /// Narrowest interval between consecutive toggles.
    pub fn min_pulse(&self) -> Option<f64> {
        self.edges
            .windows(2)
            .map(|w| w[1] - w[0])
            .min_by(f64::total_cmp)
    }

    pub fn level_at(&self, t: f64) -> bool {
        let toggles = self.edges.iter().take_while(|&&e| e <= t).count();
        self.initial ^ (toggles % 2 == 1)
    }
}

/// Splits a sequence of switch states into one stream per switch.
pub fn streams_from_states(
    initial: SwitchState,
    changes: &[(f64, SwitchState)],
) -> Vec<BoolStream> {
    let mut streams: Vec<BoolStream> = (0..initial.len())
        .map(|k| BoolStream {
            initial: initial.get(k),
            edges: Vec::new(),
        })
        .collect();
    let mut prev = initial;
    for &(t, s) in changes {
        let diff = prev.bits() ^ s.bits();
        for (k, stream) in streams.iter_mut().enumerate() {
            if diff >> k & 1 == 1 {
                stream.edges.push(t);
            }
        }
        prev = s;
    }
    streams
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    High,
    Low,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::High => "H",
            Side::Low => "L",
        })
    }
}

/// One gate transition of the complementary pair driving `switch` (1-based).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateEdge {
    pub time: f64,
    pub switch: usize,
    pub side: Side,
    pub level: bool,
}

/// Complementary gate pair after dead-time insertion.
#[derive(Debug, Clone, PartialEq)]
pub struct GatePair {
    pub high: BoolStream,
    pub low: BoolStream,
}

/// Delays every rising edge of both gates of each pair by `dead_time`, so
/// both are low for `dead_time` after each toggle of the driver input.
pub fn latch_and_deadtime(
    streams: &[BoolStream],
    dead_time: f64,
) -> Result<Vec<GatePair>, ModulatorError> {
    streams
        .iter()
        .enumerate()
        .map(|(k, s)| {
            if let Some(min_pulse) = s.min_pulse() {
                if dead_time >= min_pulse / 2.0 {
                    return Err(ModulatorError::PulseSwallowed {
                        switch: k + 1,
                        dead_time,
                        min_pulse,
                    });
                }
            }
            let mut high = BoolStream {
                initial: s.initial,
                edges: Vec::with_capacity(s.edges.len()),
            };
            let mut low = BoolStream {
                initial: !s.initial,
                edges: Vec::with_capacity(s.edges.len()),
            };
            let mut level = s.initial;
            for &t in &s.edges {
                level = !level;
                if level {
                    low.edges.push(t);
                    high.edges.push(t + dead_time);
                } else {
                    high.edges.push(t);
                    low.edges.push(t + dead_time);
                }
            }
            Ok(GatePair { high, low })
        })
        .collect()
}

/// Flattens gate pairs into time-ordered edge records. Ties keep switch order,
/// high side first.
pub fn gate_edges(pairs: &[GatePair]) -> Vec<GateEdge> {
    let mut out = Vec::new();
    for (k, pair) in pairs.iter().enumerate() {
        for (side, stream) in [(Side::High, &pair.high), (Side::Low, &pair.low)] {
            let mut level = stream.initial;
            for &time in &stream.edges {
                level = !level;
                out.push(GateEdge {
                    time,
                    switch: k + 1,
                    side,
                    level,
                });
            }
        }
    }
    out.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.switch.cmp(&b.switch))
            .then((a.side == Side::Low).cmp(&(b.side == Side::Low)))
    });
    out
}
