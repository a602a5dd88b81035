//! Transient simulation of the sensing lines.
//!
//! Every binary classifier owns one capacitive line. A cycle has two phases:
//!
//! 1. precharge: the line is set to `vdd/2` and every device is gated off
//!    (top gate at VDD for P, ground for N);
//! 2. classify: top gates take the feature levels, P devices pull charge
//!    from VDD into the line and N devices drain it to ground. The line is
//!    integrated with explicit Euler, `v += dt/C * (sum I_P - sum I_N)`.
//!
//! A non-inverting buffer then snaps the final voltage to a rail: `+1`
//! (VDD) when `v >= vdd/2`, `-1` (0 V) otherwise.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{DeviceInstance, DeviceParams};
use crate::quantizer::{self, DeviceType, QuantError, QuantSpec};
use crate::system_builder::SystemConfig;
use crate::trainer::{ClassPair, Vote, VoteTally};

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("step called during the {0:?} phase")]
    Phase(Phase),
    #[error("line {pair}: voltage became non-finite at t = {t} s")]
    NonFinite { pair: ClassPair, t: f64 },
    #[error("invalid line timing: {0}")]
    Timing(String),
    #[error("feature vector has dimension {found}, expected {expected}")]
    Dimension { found: usize, expected: usize },
    #[error(transparent)]
    Quant(#[from] QuantError),
}

pub type Result<T> = std::result::Result<T, SimError>;

/// Line capacitance and cycle timing shared by every sensing line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineTiming {
    pub c_line: f64,
    pub t_precharge: f64,
    pub t_classify: f64,
    pub dt: f64,
}

impl Default for LineTiming {
    fn default() -> Self {
        // 250 MHz cycle split evenly between the two phases.
        LineTiming {
            c_line: 10e-15,
            t_precharge: 2e-9,
            t_classify: 2e-9,
            dt: 10e-12,
        }
    }
}

impl LineTiming {
    pub const MIN_STEPS: usize = 10;

    pub fn validate(&self) -> Result<()> {
        if !(self.c_line > 0.0) {
            return Err(SimError::Timing("c_line must be positive".into()));
        }
        if !(self.dt > 0.0) || !(self.t_precharge >= 0.0) || !(self.t_classify > 0.0) {
            return Err(SimError::Timing("dt and t_classify must be positive".into()));
        }
        if self.classify_steps() < Self::MIN_STEPS {
            return Err(SimError::Timing(format!(
                "t_classify / dt = {} is below {} steps",
                self.t_classify / self.dt,
                Self::MIN_STEPS
            )));
        }
        Ok(())
    }

    pub fn classify_steps(&self) -> usize {
        (self.t_classify / self.dt).round() as usize
    }

    pub fn cycle_time(&self) -> f64 {
        self.t_precharge + self.t_classify
    }

    pub fn with_dt(self, dt: f64) -> Self {
        LineTiming { dt, ..self }
    }
}

/// One sensing line and the devices hanging off it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineConfig {
    pub pair: ClassPair,
    /// P devices sit between VDD and the line, N devices between the line
    /// and ground.
    pub devices: Vec<DeviceInstance>,
    pub timing: LineTiming,
}

impl LineConfig {
    /// Copy of the line with every top gate at its gating-off bias.
    pub fn gated_off(&self, p: &DeviceParams) -> LineConfig {
        let mut line = self.clone();
        for d in &mut line.devices {
            d.v_tg = p.gating_off_vtg(d.config.dtype);
        }
        line
    }

    /// Copy of the line with top gates driven by the quantized features.
    pub fn with_features(&self, x_levels: &[u32], q: &QuantSpec) -> Result<LineConfig> {
        let mut line = self.clone();
        for d in &mut line.devices {
            let level = *x_levels.get(d.feature_index).ok_or(SimError::Dimension {
                found: x_levels.len(),
                expected: d.feature_index + 1,
            })?;
            d.v_tg = quantizer::level_to_vtg(level, d.config.dtype, q)?;
        }
        Ok(line)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Precharge,
    Classify,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingLineState {
    pub t: f64,
    pub v_sen: f64,
    pub phase: Phase,
    /// Charge drawn from VDD through the P devices (C).
    pub q_delivered_vdd: f64,
    /// Charge dumped to ground through the N devices (C).
    pub q_removed_gnd: f64,
    /// Per-device charge, accumulated separately from the line totals.
    pub device_charge: Vec<f64>,
    pub precharge_energy: f64,
    pub trace: Option<Vec<(f64, f64)>>,
}

impl SensingLineState {
    /// Leave precharge; top gates take their feature biases from here on.
    pub fn begin_classify(&mut self, t_precharge: f64) {
        self.phase = Phase::Classify;
        self.t = t_precharge;
        if let Some(trace) = &mut self.trace {
            trace.push((self.t, self.v_sen));
        }
    }
}

/// Ideal precharge to `vdd/2`, billed as refilling a worst-case half swing,
/// `C * (vdd/2)^2`.
pub fn precharge(cfg: &LineConfig, p: &DeviceParams, record_trace: bool) -> SensingLineState {
    let half = p.vdd / 2.0;
    SensingLineState {
        t: 0.0,
        v_sen: half,
        phase: Phase::Precharge,
        q_delivered_vdd: 0.0,
        q_removed_gnd: 0.0,
        device_charge: vec![0.0; cfg.devices.len()],
        precharge_energy: cfg.timing.c_line * half * half,
        trace: record_trace.then(|| vec![(0.0, half)]),
    }
}

/// One explicit-Euler step of the classification phase. `line` must carry
/// the feature-driven top-gate biases.
pub fn step(state: &mut SensingLineState, line: &LineConfig, p: &DeviceParams) -> Result<()> {
    if state.phase != Phase::Classify {
        return Err(SimError::Phase(state.phase));
    }
    let dt = line.timing.dt;
    let v_now = state.v_sen;
    let mut i_in = 0.0;
    let mut i_out = 0.0;
    for (d, q) in line.devices.iter().zip(&mut state.device_charge) {
        match d.config.dtype {
            DeviceType::P => {
                let i = d.current(p.vdd, v_now, p);
                *q += i * dt;
                i_in += i;
            }
            DeviceType::N => i_out += d.current(v_now, 0.0, p),
        }
    }
    state.q_delivered_vdd += i_in * dt;
    state.q_removed_gnd += i_out * dt;
    let v = v_now + dt / line.timing.c_line * (i_in - i_out);
    state.t += dt;
    if !v.is_finite() {
        return Err(SimError::NonFinite { pair: line.pair, t: state.t });
    }
    state.v_sen = v.clamp(0.0, p.vdd);
    if let Some(trace) = &mut state.trace {
        trace.push((state.t, state.v_sen));
    }
    Ok(())
}

/// Ideal non-inverting buffer: vote and output rail voltage.
pub fn buffer_decide(v_sen: f64, vdd: f64) -> (Vote, f64) {
    if v_sen >= vdd / 2.0 {
        (Vote::Positive, vdd)
    } else {
        (Vote::Negative, 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineOutcome {
    pub pair: ClassPair,
    pub final_v: f64,
    pub vote: Vote,
    pub v_vote: f64,
    /// `vdd * q_delivered_vdd + precharge_energy` (J).
    pub energy: f64,
    pub state: SensingLineState,
}

/// Precharge, then integrate the classification phase and buffer the result.
pub fn classify_line(
    cfg: &LineConfig,
    x_levels: &[u32],
    q: &QuantSpec,
    p: &DeviceParams,
    record_trace: bool,
) -> Result<LineOutcome> {
    cfg.timing.validate()?;
    let mut state = precharge(cfg, p, record_trace);
    let driven = cfg.with_features(x_levels, q)?;
    state.begin_classify(cfg.timing.t_precharge);
    for _ in 0..cfg.timing.classify_steps() {
        step(&mut state, &driven, p)?;
    }
    let (vote, v_vote) = buffer_decide(state.v_sen, p.vdd);
    Ok(LineOutcome {
        pair: cfg.pair,
        final_v: state.v_sen,
        vote,
        v_vote,
        energy: p.vdd * state.q_delivered_vdd + state.precharge_energy,
        state,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineTrace {
    pub pair: ClassPair,
    pub samples: Vec<(f64, f64)>,
}

/// Record of one digit passing through all 45 lines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationTrace {
    pub pairs: Vec<ClassPair>,
    pub votes: Vec<Vote>,
    pub tally: [u32; 10],
    pub predicted: u8,
    /// Total energy of the cycle over all lines (J).
    pub energy: f64,
    pub line_finals: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub traces: Option<Vec<LineTrace>>,
}

/// Quantize `x` once and run every line of the system on it.
pub fn simulate_digit(system: &SystemConfig, x: &[f64], record_traces: bool) -> Result<ClassificationTrace> {
    let x_levels = quantizer::quantize_features(x, &system.quant)?;
    let outcomes = system
        .lines
        .iter()
        .map(|line| classify_line(line, &x_levels, &system.quant, &system.params, record_traces))
        .collect::<Result<Vec<_>>>()?;
    let tally = VoteTally::from_votes(outcomes.iter().map(|o| (o.pair, o.vote)));
    let traces = record_traces.then(|| {
        outcomes
            .iter()
            .map(|o| LineTrace {
                pair: o.pair,
                samples: o.state.trace.clone().unwrap_or_default(),
            })
            .collect()
    });
    Ok(ClassificationTrace {
        pairs: outcomes.iter().map(|o| o.pair).collect(),
        votes: outcomes.iter().map(|o| o.vote).collect(),
        tally: tally.tally,
        predicted: tally.predicted,
        energy: outcomes.iter().map(|o| o.energy).sum(),
        line_finals: outcomes.iter().map(|o| o.final_v).collect(),
        traces,
    })
}

/// Simulate a batch of digits (rows of `xs`, `dim` features each) in parallel.
/// Results come back in input order.
pub fn simulate_batch(
    system: &SystemConfig,
    xs: &[f64],
    dim: usize,
    record_traces: bool,
) -> Result<Vec<ClassificationTrace>> {
    xs.par_chunks(dim)
        .map(|x| simulate_digit(system, x, record_traces))
        .collect()
}

/// CSV with columns `digit,pair,t,v_sen`.
pub fn write_traces_csv<W: Write>(out: W, traces: &[(usize, &ClassificationTrace)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["digit", "pair", "t", "v_sen"])?;
    for (digit, trace) in traces {
        for line in trace.traces.iter().flatten() {
            for &(t, v) in &line.samples {
                w.write_record([digit.to_string(), line.pair.to_string(), t.to_string(), v.to_string()])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
