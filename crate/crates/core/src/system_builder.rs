//! Assembly of the quantized one-vs-one model into the 64x45 device array,
//! netlist emission and parsing, and Table-I style metrics.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analog_sim::{self, LineConfig, LineTiming, SimError};
use crate::dataset::{FeatureSet, NUM_CLASSES};
use crate::device::{BiasWindow, DeviceInstance, DeviceParams};
use crate::quantizer::{self, DeviceConfig, DeviceType, QuantError, QuantSpec, QuantizedModel, Rail};
use crate::trainer::{self, ClassPair, OvOModel, TrainError, VoteTally};

/// Footprint per device that maps 1,021 devices onto 3.8 um^2.
pub const DEFAULT_DEVICE_FOOTPRINT_UM2: f64 = 3.8 / 1021.0;

/// Printed next to every energy figure.
pub const ENERGY_SCOPE: &str =
    "MAC array + line precharge only; buffers, resistive dividers and MUXes are ideal and excluded";

pub const WEIGHT_MEMORY_NOTE: &str =
    "fixed weights; reconfigurable weights via memory + MUX would grow area roughly 4x at negligible power";

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("classifier {0} has no device left after quantization")]
    EmptyLine(ClassPair),
    #[error("line {pair}: feature {feature} is wired twice")]
    DuplicateFeature { pair: ClassPair, feature: usize },
    #[error("line {pair}: bottom-gate bias {v_bg} V lies outside the {dtype:?} window")]
    BiasOutsideWindow { pair: ClassPair, dtype: DeviceType, v_bg: f64 },
    #[error("netlist line {line}: {message}")]
    Netlist { line: usize, message: String },
    #[error("evaluation set is empty")]
    EmptyTestSet,
    #[error("model and system disagree: {0}")]
    Mismatch(String),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, BuildError>;

/// The assembled array: one sensing line per class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub lines: Vec<LineConfig>,
    pub device_count: usize,
    pub quant: QuantSpec,
    pub params: DeviceParams,
    pub timing: LineTiming,
}

impl SystemConfig {
    pub fn line(&self, pair: ClassPair) -> Option<&LineConfig> {
        self.lines.iter().find(|l| l.pair == pair)
    }

    pub fn validate(&self) -> Result<()> {
        let counted: usize = self.lines.iter().map(|l| l.devices.len()).sum();
        if counted != self.device_count {
            return Err(BuildError::Mismatch(format!(
                "device_count {} but lines hold {counted}",
                self.device_count
            )));
        }
        for line in &self.lines {
            let mut seen = std::collections::HashSet::new();
            for d in &line.devices {
                if !seen.insert(d.feature_index) {
                    return Err(BuildError::DuplicateFeature {
                        pair: line.pair,
                        feature: d.feature_index,
                    });
                }
                if !d.is_consistent(&self.params) {
                    return Err(BuildError::BiasOutsideWindow {
                        pair: line.pair,
                        dtype: d.config.dtype,
                        v_bg: d.v_bg,
                    });
                }
            }
        }
        Ok(())
    }

    /// Digital evaluation of the quantized array: integer margin per line.
    pub fn quantized_margins(&self, x_levels: &[u32]) -> Vec<i64> {
        self.lines
            .iter()
            .map(|l| {
                l.devices
                    .iter()
                    .map(|d| d.config.dtype.sign() * i64::from(d.config.w_level) * i64::from(x_levels[d.feature_index]))
                    .sum()
            })
            .collect()
    }
}

fn make_device(
    pair: ClassPair,
    feature_index: usize,
    config: DeviceConfig,
    q: &QuantSpec,
    p: &DeviceParams,
) -> Result<DeviceInstance> {
    let inst = DeviceInstance {
        config,
        feature_index,
        v_tg: p.gating_off_vtg(config.dtype),
        v_bg: quantizer::level_to_vbg(config.w_level, config.dtype, q)?,
    };
    if !inst.is_consistent(p) {
        return Err(BuildError::BiasOutsideWindow {
            pair,
            dtype: config.dtype,
            v_bg: inst.v_bg,
        });
    }
    Ok(inst)
}

/// Build the array from an already quantized model.
pub fn assemble_quantized(qm: &QuantizedModel, p: &DeviceParams, timing: &LineTiming) -> Result<SystemConfig> {
    qm.quant.validate()?;
    timing.validate()?;
    let mut lines = Vec::with_capacity(qm.classifiers.len());
    for c in &qm.classifiers {
        if c.entries.is_empty() {
            return Err(BuildError::EmptyLine(c.pair));
        }
        let devices = c
            .entries
            .iter()
            .map(|e| make_device(c.pair, e.feature_index, e.config(), &qm.quant, p))
            .collect::<Result<Vec<_>>>()?;
        lines.push(LineConfig {
            pair: c.pair,
            devices,
            timing: *timing,
        });
    }
    let system = SystemConfig {
        device_count: lines.iter().map(|l| l.devices.len()).sum(),
        lines,
        quant: qm.quant,
        params: *p,
        timing: *timing,
    };
    system.validate()?;
    Ok(system)
}

/// Quantize `m` and wire one device per surviving weight.
pub fn assemble(m: &OvOModel, q: &QuantSpec, p: &DeviceParams, timing: &LineTiming) -> Result<SystemConfig> {
    m.validate()?;
    assemble_quantized(&quantizer::quantize_model(m, q)?, p, timing)
}

pub fn estimate_area(s: &SystemConfig, footprint_um2: f64) -> f64 {
    s.device_count as f64 * footprint_um2
}

fn rail_name(r: Rail) -> &'static str {
    match r {
        Rail::Vdd => "VDD",
        Rail::Gnd => "GND",
    }
}

fn dtype_name(t: DeviceType) -> &'static str {
    match t {
        DeviceType::P => "P",
        DeviceType::N => "N",
    }
}

/// Netlist text. Header directives carry the quantizer, device and timing
/// parameters; each device is one line:
///
/// ```text
/// D<k> line=<a-b> feat=<i> type=<P|N> wlevel=<level> rail=<VDD|GND>
/// ```
pub fn netlist_string(s: &SystemConfig) -> String {
    let p = &s.params;
    let t = &s.timing;
    let mut out = String::new();
    let _ = writeln!(out, "* sensing-line classifier array: {} lines, {} devices", s.lines.len(), s.device_count);
    let _ = writeln!(out, ".quant bits={} step={} vdd={}", s.quant.bits, s.quant.step_volts, s.quant.vdd);
    let _ = writeln!(
        out,
        ".device i_on={} v_dsat={} vdd={} p_window={},{} n_window={},{} tg_span={}",
        p.i_on, p.v_dsat, p.vdd, p.p_window.low, p.p_window.high, p.n_window.low, p.n_window.high, p.tg_window_span
    );
    let _ = writeln!(
        out,
        ".timing c_line={} t_precharge={} t_classify={} dt={}",
        t.c_line, t.t_precharge, t.t_classify, t.dt
    );
    let mut k = 0;
    for line in &s.lines {
        for d in &line.devices {
            let _ = writeln!(
                out,
                "D{k} line={} feat={} type={} wlevel={} rail={}",
                line.pair,
                d.feature_index,
                dtype_name(d.config.dtype),
                d.config.w_level,
                rail_name(d.config.rail)
            );
            k += 1;
        }
    }
    let _ = writeln!(out, ".end");
    out
}

pub fn write_netlist<W: Write>(s: &SystemConfig, mut w: W) -> io::Result<()> {
    w.write_all(netlist_string(s).as_bytes())
}

pub fn emit_netlist(s: &SystemConfig, path: &Path) -> Result<()> {
    std::fs::write(path, netlist_string(s))?;
    Ok(())
}

struct Fields<'a> {
    line: usize,
    items: Vec<(&'a str, &'a str)>,
}

impl<'a> Fields<'a> {
    fn parse(line: usize, tokens: impl Iterator<Item = &'a str>) -> Result<Self> {
        let items = tokens
            .map(|tok| {
                tok.split_once('=').ok_or_else(|| BuildError::Netlist {
                    line,
                    message: format!("expected key=value, found {tok:?}"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Fields { line, items })
    }

    fn raw(&self, key: &str) -> Result<&'a str> {
        self.items
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| BuildError::Netlist {
                line: self.line,
                message: format!("missing {key}="),
            })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key)?;
        v.parse().map_err(|_| BuildError::Netlist {
            line: self.line,
            message: format!("cannot parse {key}={v}"),
        })
    }

    fn window(&self, key: &str) -> Result<BiasWindow> {
        let v = self.raw(key)?;
        let bad = || BuildError::Netlist {
            line: self.line,
            message: format!("cannot parse {key}={v}"),
        };
        let (lo, hi) = v.split_once(',').ok_or_else(bad)?;
        Ok(BiasWindow {
            low: lo.parse().map_err(|_| bad())?,
            high: hi.parse().map_err(|_| bad())?,
        })
    }
}

/// Inverse of [`netlist_string`]. Lines appear in order of first use.
pub fn parse_netlist(text: &str) -> Result<SystemConfig> {
    let mut quant = None;
    let mut params = None;
    let mut timing = None;
    let mut devices: Vec<(usize, ClassPair, usize, DeviceConfig)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('*') || line == ".end" {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let head = tokens.next().unwrap_or_default();
        let f = Fields::parse(lineno, tokens)?;
        match head {
            ".quant" => {
                quant = Some(QuantSpec {
                    bits: f.get("bits")?,
                    step_volts: f.get("step")?,
                    vdd: f.get("vdd")?,
                })
            }
            ".device" => {
                params = Some(DeviceParams {
                    i_on: f.get("i_on")?,
                    v_dsat: f.get("v_dsat")?,
                    vdd: f.get("vdd")?,
                    p_window: f.window("p_window")?,
                    n_window: f.window("n_window")?,
                    tg_window_span: f.get("tg_span")?,
                })
            }
            ".timing" => {
                timing = Some(LineTiming {
                    c_line: f.get("c_line")?,
                    t_precharge: f.get("t_precharge")?,
                    t_classify: f.get("t_classify")?,
                    dt: f.get("dt")?,
                })
            }
            name if name.starts_with('D') => {
                let pair: ClassPair = f.raw("line")?.parse().map_err(|e: TrainError| BuildError::Netlist {
                    line: lineno,
                    message: e.to_string(),
                })?;
                let dtype = match f.raw("type")? {
                    "P" => DeviceType::P,
                    "N" => DeviceType::N,
                    other => {
                        return Err(BuildError::Netlist {
                            line: lineno,
                            message: format!("unknown device type {other:?}"),
                        })
                    }
                };
                let config = DeviceConfig::new(dtype, f.get("wlevel")?);
                let rail = f.raw("rail")?;
                if rail != rail_name(config.rail) {
                    return Err(BuildError::Netlist {
                        line: lineno,
                        message: format!("{} device cannot hang off rail {rail}", dtype_name(dtype)),
                    });
                }
                devices.push((lineno, pair, f.get("feat")?, config));
            }
            other => {
                return Err(BuildError::Netlist {
                    line: lineno,
                    message: format!("unknown directive {other:?}"),
                })
            }
        }
    }
    let missing = |what: &str| BuildError::Netlist {
        line: 0,
        message: format!("missing {what} header"),
    };
    let quant = quant.ok_or_else(|| missing(".quant"))?;
    let params = params.ok_or_else(|| missing(".device"))?;
    let timing = timing.ok_or_else(|| missing(".timing"))?;

    let mut lines: Vec<LineConfig> = Vec::new();
    for (_, pair, feature, config) in devices {
        let inst = make_device(pair, feature, config, &quant, &params)?;
        match lines.iter_mut().find(|l| l.pair == pair) {
            Some(l) => l.devices.push(inst),
            None => lines.push(LineConfig {
                pair,
                devices: vec![inst],
                timing,
            }),
        }
    }
    let system = SystemConfig {
        device_count: lines.iter().map(|l| l.devices.len()).sum(),
        lines,
        quant,
        params,
        timing,
    };
    system.validate()?;
    Ok(system)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    DigitalFloat,
    DigitalQuantized,
    Analog,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::DigitalFloat => "digital-float",
            EvalMode::DigitalQuantized => "digital-quantized",
            EvalMode::Analog => "analog",
        }
    }
}

impl FromStr for EvalMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "digital-float" => Ok(EvalMode::DigitalFloat),
            "digital-quantized" => Ok(EvalMode::DigitalQuantized),
            "analog" => Ok(EvalMode::Analog),
            _ => Err(format!("unknown mode {s:?} (digital-float, digital-quantized, analog)")),
        }
    }
}

pub type Confusion = [[u64; NUM_CLASSES]; NUM_CLASSES];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: EvalMode,
    pub samples: usize,
    pub accuracy: f64,
    /// Rows are true digits, columns predictions.
    pub confusion: Confusion,
    /// Mean energy per classification (J); analog mode only.
    pub energy_per_decision: Option<f64>,
    /// Energy divided by supply voltage (A*s).
    pub total_current_per_decision: Option<f64>,
    pub energy_scope: String,
    pub area_um2: f64,
    pub device_count: usize,
    pub throughput_per_s: f64,
    pub weight_memory_note: String,
}

/// Per-digit evaluation output alongside the aggregate report.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub tallies: Vec<VoteTally>,
    /// Analog mode only.
    pub traces: Option<Vec<analog_sim::ClassificationTrace>>,
}

impl Evaluation {
    pub fn predictions(&self) -> Vec<u8> {
        self.tallies.iter().map(|t| t.predicted).collect()
    }
}

pub fn confusion_matrix(labels: &[u8], predicted: &[u8]) -> Confusion {
    let mut m = [[0u64; NUM_CLASSES]; NUM_CLASSES];
    for (&l, &p) in labels.iter().zip(predicted) {
        m[l as usize][p as usize] += 1;
    }
    m
}

pub fn confusion_accuracy(m: &Confusion) -> f64 {
    let total: u64 = m.iter().flatten().sum();
    let diag: u64 = (0..NUM_CLASSES).map(|i| m[i][i]).sum();
    diag as f64 / total.max(1) as f64
}

/// Ten rows of ten comma-separated counts, no header.
pub fn write_confusion_csv<W: Write>(m: &Confusion, mut w: W) -> io::Result<()> {
    for row in m {
        let cells: Vec<String> = row.iter().map(u64::to_string).collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

fn quantized_tally(s: &SystemConfig, x: &[f64]) -> Result<VoteTally> {
    let levels = quantizer::quantize_features(x, &s.quant)?;
    let margins = s.quantized_margins(&levels);
    Ok(VoteTally::from_votes(
        s.lines.iter().zip(margins).map(|(l, z)| (l.pair, trainer::predict_sign(z as f64, 0.0))),
    ))
}

/// Run `set` through the chosen pipeline.
///
/// The digital modes skip the transient simulation: `digital-float` votes
/// with the real-valued model, `digital-quantized` with the integer margin
/// of the assembled array. `analog` simulates every line of every digit.
pub fn evaluate(s: &SystemConfig, model: &OvOModel, set: &FeatureSet, mode: EvalMode) -> Result<Evaluation> {
    if set.is_empty() {
        return Err(BuildError::EmptyTestSet);
    }
    if s.lines.is_empty() {
        return Err(BuildError::Mismatch("system has no sensing lines".into()));
    }
    let rows: Vec<&[f64]> = set.rows().collect();
    let (tallies, traces, energy) = match mode {
        EvalMode::DigitalFloat => {
            model.validate()?;
            let tallies = rows
                .par_iter()
                .map(|x| trainer::vote(model, x))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            (tallies, None, None)
        }
        EvalMode::DigitalQuantized => {
            let tallies = rows.par_iter().map(|x| quantized_tally(s, x)).collect::<Result<Vec<_>>>()?;
            (tallies, None, None)
        }
        EvalMode::Analog => {
            let traces = analog_sim::simulate_batch(s, &set.values, set.dim, false)?;
            let tallies = traces
                .iter()
                .map(|t| VoteTally {
                    tally: t.tally,
                    predicted: t.predicted,
                })
                .collect();
            let energy = traces.iter().map(|t| t.energy).sum::<f64>() / traces.len() as f64;
            (tallies, Some(traces), Some(energy))
        }
    };
    let predicted: Vec<u8> = tallies.iter().map(|t: &VoteTally| t.predicted).collect();
    let confusion = confusion_matrix(&set.labels, &predicted);
    let report = MetricsReport {
        mode,
        samples: set.len(),
        accuracy: confusion_accuracy(&confusion),
        confusion,
        energy_per_decision: energy,
        total_current_per_decision: energy.map(|e| e / s.params.vdd),
        energy_scope: ENERGY_SCOPE.to_string(),
        area_um2: estimate_area(s, DEFAULT_DEVICE_FOOTPRINT_UM2),
        device_count: s.device_count,
        throughput_per_s: 1.0 / s.timing.cycle_time(),
        weight_memory_note: WEIGHT_MEMORY_NOTE.to_string(),
    };
    Ok(Evaluation { report, tallies, traces })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::BinaryClassifier;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(features: usize, seed: u64) -> OvOModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        OvOModel {
            classifiers: ClassPair::all()
                .into_iter()
                .map(|pair| BinaryClassifier {
                    pair,
                    feature_indices: (0..features).collect(),
                    weights: (0..features).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                    threshold: 0.0,
                    intercept: 0.0,
                })
                .collect(),
        }
    }

    fn build(m: &OvOModel) -> SystemConfig {
        assemble(m, &QuantSpec::default(), &DeviceParams::default(), &LineTiming::default()).unwrap()
    }

    #[test]
    fn full_model_fits_the_array_bound() {
        let s = build(&random_model(64, 1));
        assert_eq!(s.lines.len(), 45);
        assert!(s.device_count <= 64 * 45);
        assert_eq!(s.device_count, s.lines.iter().map(|l| l.devices.len()).sum::<usize>());
    }

    #[test]
    fn six_feature_classifier_gets_six_devices() {
        let mut m = random_model(64, 2);
        let c = &mut m.classifiers[0];
        c.feature_indices = vec![3, 10, 17, 30, 44, 60];
        c.weights = vec![0.9, -0.8, 0.7, -1.0, 0.6, 0.5];
        let s = build(&m);
        let line = s.line(ClassPair::new(0, 1).unwrap()).unwrap();
        assert_eq!(line.devices.len(), 6);
        let feats: Vec<usize> = line.devices.iter().map(|d| d.feature_index).collect();
        assert_eq!(feats, vec![3, 10, 17, 30, 44, 60]);
    }

    #[test]
    fn zero_surviving_devices_is_reported() {
        let mut m = random_model(4, 3);
        m.classifiers[7].weights = vec![0.0; 4];
        assert!(matches!(
            assemble(&m, &QuantSpec::default(), &DeviceParams::default(), &LineTiming::default()),
            Err(BuildError::Quant(QuantError::AllZeroWeights(_)))
        ));
    }

    #[test]
    fn area_is_linear_in_device_count() {
        let mut s = build(&random_model(2, 4));
        s.device_count = 1021;
        assert!((estimate_area(&s, DEFAULT_DEVICE_FOOTPRINT_UM2) - 3.8).abs() < 1e-12);
        s.device_count = 2042;
        assert!((estimate_area(&s, DEFAULT_DEVICE_FOOTPRINT_UM2) - 7.6).abs() < 1e-12);
        s.device_count = 0;
        assert_eq!(estimate_area(&s, DEFAULT_DEVICE_FOOTPRINT_UM2), 0.0);
    }

    #[test]
    fn netlist_round_trip() {
        let s = build(&random_model(64, 5));
        let text = netlist_string(&s);
        let device_lines: Vec<&str> = text.lines().filter(|l| l.starts_with('D')).collect();
        assert_eq!(device_lines.len(), s.device_count);
        for l in &device_lines {
            if l.contains("type=P") {
                assert!(l.ends_with("rail=VDD"), "{l}");
            } else {
                assert!(l.ends_with("rail=GND"), "{l}");
            }
        }
        assert_eq!(parse_netlist(&text).unwrap(), s);
    }

    #[test]
    fn netlist_file_round_trip() {
        let s = build(&random_model(10, 6));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("array.net");
        emit_netlist(&s, &path).unwrap();
        let back = parse_netlist(&std::fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn netlist_rejects_wrong_rail_and_garbage() {
        let s = build(&random_model(3, 7));
        let text = netlist_string(&s);
        let bad = text.replacen("rail=VDD", "rail=GND", 1);
        assert!(matches!(parse_netlist(&bad), Err(BuildError::Netlist { .. })));
        let bad = text.replacen(".quant", ".qaunt", 1);
        assert!(matches!(parse_netlist(&bad), Err(BuildError::Netlist { .. })));
        let bad = text.replacen("wlevel=", "wlevel=x", 1);
        assert!(parse_netlist(&bad).is_err());
    }

    fn toy_set(n: usize, seed: u64) -> FeatureSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureSet {
            dim: 64,
            values: (0..n * 64).map(|_| rng.gen_range(0.0..1.0)).collect(),
            labels: (0..n).map(|i| (i % 10) as u8).collect(),
        }
    }

    #[test]
    fn metrics_are_self_consistent() {
        let m = random_model(64, 8);
        let s = build(&m);
        let set = toy_set(30, 9);
        for mode in [EvalMode::DigitalFloat, EvalMode::DigitalQuantized, EvalMode::Analog] {
            let ev = evaluate(&s, &m, &set, mode).unwrap();
            let r = &ev.report;
            let rows: Vec<u64> = r.confusion.iter().map(|row| row.iter().sum()).collect();
            assert_eq!(rows, vec![3; 10]);
            assert!((confusion_accuracy(&r.confusion) - r.accuracy).abs() < 1e-15);
            assert!(ev.tallies.iter().all(|t| t.total() == 45));
            match mode {
                EvalMode::Analog => {
                    let e = r.energy_per_decision.unwrap();
                    assert!(e > 0.0);
                    assert_eq!(r.total_current_per_decision.unwrap() * s.params.vdd, e);
                }
                _ => assert!(r.energy_per_decision.is_none()),
            }
        }
    }

    #[test]
    fn analog_matches_quantized_on_random_inputs() {
        let m = random_model(64, 10);
        let s = build(&m);
        let set = toy_set(20, 11);
        let a = evaluate(&s, &m, &set, EvalMode::Analog).unwrap();
        let d = evaluate(&s, &m, &set, EvalMode::DigitalQuantized).unwrap();
        assert_eq!(a.predictions(), d.predictions());
    }

    #[test]
    fn empty_inputs_are_errors() {
        let m = random_model(64, 12);
        let s = build(&m);
        let empty = toy_set(0, 1);
        assert!(matches!(evaluate(&s, &m, &empty, EvalMode::DigitalFloat), Err(BuildError::EmptyTestSet)));
        let bare = SystemConfig {
            lines: vec![],
            device_count: 0,
            ..s.clone()
        };
        let bad_model = OvOModel { classifiers: vec![] };
        assert!(evaluate(&bare, &bad_model, &toy_set(3, 1), EvalMode::DigitalFloat).is_err());
        assert!(evaluate(&s, &bad_model, &toy_set(3, 1), EvalMode::DigitalFloat).is_err());
    }

    #[test]
    fn confusion_csv_is_ten_by_ten() {
        let mut m = [[0u64; 10]; 10];
        m[3][5] = 7;
        let mut buf = Vec::new();
        write_confusion_csv(&m, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let rows: Vec<&str> = text.lines().collect();
        assert_eq!(rows.len(), 10);
        assert!(rows.iter().all(|r| r.split(',').count() == 10));
        assert_eq!(rows[3], "0,0,0,0,0,7,0,0,0,0");
    }
}
