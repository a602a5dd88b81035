//! 5-bit quantization of features and weights, and the mapping from
//! quantized values to device type and gate biases.
//!
//! A weight's sign picks the device type (P for positive, N for negative)
//! and its normalized magnitude picks the bottom-gate level. A feature's
//! level picks the top-gate voltage. Level 0 is the gated-off bias.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::trainer::{BinaryClassifier, ClassPair, OvOModel};

#[derive(Debug, Error, PartialEq)]
pub enum QuantError {
    #[error("value {0} is outside [0, 1]")]
    OutOfRange(f64),
    #[error("level {level} exceeds maximum {max}")]
    LevelOutOfRange { level: u32, max: u32 },
    #[error("classifier {0} has no nonzero weight")]
    AllZeroWeights(ClassPair),
    #[error("invalid quantizer settings: {0}")]
    Spec(String),
}

pub type Result<T> = std::result::Result<T, QuantError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuantSpec {
    pub bits: u32,
    pub step_volts: f64,
    pub vdd: f64,
}

impl Default for QuantSpec {
    fn default() -> Self {
        QuantSpec {
            bits: 5,
            step_volts: 0.040,
            vdd: 3.0,
        }
    }
}

impl QuantSpec {
    pub fn levels(&self) -> u32 {
        1 << self.bits
    }

    pub fn max_level(&self) -> u32 {
        self.levels() - 1
    }

    /// Gate-voltage span covered by the level range.
    pub fn span(&self) -> f64 {
        f64::from(self.max_level()) * self.step_volts
    }

    /// The full level range must fit on one side of the mid-rail point so
    /// that the P and N bias windows cannot overlap.
    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.bits) {
            return Err(QuantError::Spec(format!("bits must be in 1..=16, got {}", self.bits)));
        }
        if !(self.step_volts > 0.0) || !(self.vdd > 0.0) {
            return Err(QuantError::Spec("step_volts and vdd must be positive".into()));
        }
        if self.span() >= self.vdd / 2.0 {
            return Err(QuantError::Spec(format!(
                "{} levels of {} V span {} V, which reaches the mid-rail point {} V",
                self.levels(),
                self.step_volts,
                self.span(),
                self.vdd / 2.0
            )));
        }
        Ok(())
    }

    fn check_level(&self, level: u32) -> Result<()> {
        if level > self.max_level() {
            Err(QuantError::LevelOutOfRange {
                level,
                max: self.max_level(),
            })
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeviceType {
    P,
    N,
}

impl DeviceType {
    pub fn rail(self) -> Rail {
        match self {
            DeviceType::P => Rail::Vdd,
            DeviceType::N => Rail::Gnd,
        }
    }

    /// `+1` for P, `-1` for N.
    pub fn sign(self) -> i64 {
        match self {
            DeviceType::P => 1,
            DeviceType::N => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rail {
    #[serde(rename = "VDD")]
    Vdd,
    #[serde(rename = "GND")]
    Gnd,
}

/// Static configuration of one array device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceConfig {
    pub dtype: DeviceType,
    pub w_level: u32,
    pub rail: Rail,
}

impl DeviceConfig {
    pub fn new(dtype: DeviceType, w_level: u32) -> Self {
        DeviceConfig {
            dtype,
            w_level,
            rail: dtype.rail(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantizedEntry {
    pub feature_index: usize,
    pub dtype: DeviceType,
    pub w_level: u32,
}

impl QuantizedEntry {
    pub fn config(&self) -> DeviceConfig {
        DeviceConfig::new(self.dtype, self.w_level)
    }

    /// Signed integer weight.
    pub fn signed_level(&self) -> i64 {
        self.dtype.sign() * i64::from(self.w_level)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedClassifier {
    pub pair: ClassPair,
    pub entries: Vec<QuantizedEntry>,
}

impl QuantizedClassifier {
    /// `sum_i s_i * w_level_i * x_level_i` over the surviving devices.
    pub fn margin(&self, x_levels: &[u32]) -> i64 {
        self.entries
            .iter()
            .map(|e| e.signed_level() * i64::from(x_levels[e.feature_index]))
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedModel {
    pub quant: QuantSpec,
    pub classifiers: Vec<QuantizedClassifier>,
}

/// `round(v * (2^bits - 1))`, ties to even.
pub fn quantize_unit(v: f64, q: &QuantSpec) -> Result<u32> {
    if !(0.0..=1.0).contains(&v) {
        return Err(QuantError::OutOfRange(v));
    }
    Ok((v * f64::from(q.max_level())).round_ties_even() as u32)
}

pub fn quantize_features(x: &[f64], q: &QuantSpec) -> Result<Vec<u32>> {
    x.iter().map(|&v| quantize_unit(v, q)).collect()
}

/// Normalize by the largest weight magnitude, quantize, and assign device
/// types by sign. Weights that land on level 0 get no device.
pub fn map_weights(c: &BinaryClassifier, q: &QuantSpec) -> Result<QuantizedClassifier> {
    let max_abs = c.weights.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    if !(max_abs > 0.0) {
        return Err(QuantError::AllZeroWeights(c.pair));
    }
    let mut entries = Vec::with_capacity(c.weights.len());
    for (&feature_index, &w) in c.feature_indices.iter().zip(&c.weights) {
        let level = quantize_unit((w.abs() / max_abs).min(1.0), q)?;
        if level == 0 {
            continue;
        }
        let dtype = if w > 0.0 { DeviceType::P } else { DeviceType::N };
        entries.push(QuantizedEntry {
            feature_index,
            dtype,
            w_level: level,
        });
    }
    Ok(QuantizedClassifier { pair: c.pair, entries })
}

pub fn quantize_model(m: &OvOModel, q: &QuantSpec) -> Result<QuantizedModel> {
    q.validate()?;
    Ok(QuantizedModel {
        quant: *q,
        classifiers: m.classifiers.iter().map(|c| map_weights(c, q)).collect::<Result<_>>()?,
    })
}

/// Bottom-gate bias for a weight level. Full drive sits at the rail the
/// device type is anchored to (0 V for P, VDD for N).
pub fn level_to_vbg(level: u32, dtype: DeviceType, q: &QuantSpec) -> Result<f64> {
    q.check_level(level)?;
    let back_off = f64::from(q.max_level() - level) * q.step_volts;
    Ok(match dtype {
        DeviceType::P => back_off,
        DeviceType::N => q.vdd - back_off,
    })
}

/// Top-gate bias for a feature level. Level 0 is the precharge gating
/// voltage: VDD for P, ground for N.
pub fn level_to_vtg(level: u32, dtype: DeviceType, q: &QuantSpec) -> Result<f64> {
    q.check_level(level)?;
    let swing = f64::from(level) * q.step_volts;
    Ok(match dtype {
        DeviceType::P => q.vdd - swing,
        DeviceType::N => swing,
    })
}
