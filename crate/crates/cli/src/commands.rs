//! One function per subcommand. Artifacts live under `output_dir` with
//! fixed names so later commands can find what earlier ones wrote.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use ambisense::analog_sim::{self, ClassificationTrace};
use ambisense::dataset::{self, Splits};
use ambisense::quantizer::{self, QuantizedClassifier};
use ambisense::system_builder::{self, Evaluation};
use ambisense::trainer::{self, PairReport};
use ambisense::{BinaryClassifier, EvalMode, FeatureSet, MetricsReport, OvOModel, QuantSpec, QuantizedModel, SystemConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{CliError, Result, RunConfig};

pub const DATASET: &str = "dataset.json";
pub const MODEL_FULL: &str = "model_full.json";
pub const TRAIN_REPORT: &str = "train_report.json";
pub const MODEL_SELECTED: &str = "model_selected.json";
pub const SELECT_REPORT: &str = "select_report.json";
pub const FEATURE_COUNTS: &str = "feature_counts.csv";
pub const QUANTIZED: &str = "quantized_model.json";
pub const NETLIST: &str = "system.net";
pub const BUILD_REPORT: &str = "build_report.json";
pub const VOTE_TALLIES: &str = "vote_tallies.csv";
pub const TRACES: &str = "traces.csv";
pub const REPORT: &str = "report.md";

pub fn metrics_file(mode: EvalMode) -> String {
    format!("metrics_{}.json", mode.name())
}

pub fn confusion_file(mode: EvalMode) -> String {
    format!("confusion_{}.csv", mode.name())
}

/// A validated config, its hash, and the output directory.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    pub hash: String,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let hash = cfg.hash();
        Ok(Context { cfg, hash })
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.cfg.output_dir.join(name)
    }

    fn ensure_out_dir(&self) -> Result<()> {
        let dir = &self.cfg.output_dir;
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.clone(),
            source,
        })
    }

    fn write_text(&self, name: &str, text: &str) -> Result<PathBuf> {
        self.ensure_out_dir()?;
        let path = self.out(name);
        fs::write(&path, text).map_err(|source| CliError::Io {
            path: path.clone(),
            source,
        })?;
        Ok(path)
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
        text.push('\n');
        self.write_text(name, &text)
    }

    /// CSV body preceded by a `# config_hash=` comment line.
    fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf> {
        let mut buf = format!("# config_hash={}\n", self.hash).into_bytes();
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            if !header.is_empty() {
                w.write_record(header).expect("in-memory csv");
            }
            for row in rows {
                w.write_record(row).expect("in-memory csv");
            }
            w.flush().expect("in-memory csv");
        }
        self.write_text(name, &String::from_utf8(buf).expect("csv is utf-8"))
    }

    fn read_artifact<T: DeserializeOwned>(&self, name: &str, command: &'static str) -> Result<T> {
        let path = self.out(name);
        let text = read_existing(&path, command)?;
        serde_json::from_str(&text).map_err(|e| CliError::Artifact {
            path,
            message: e.to_string(),
        })
    }
}

fn read_existing(path: &Path, command: &'static str) -> Result<String> {
    match fs::read_to_string(path) {
        Ok(t) => Ok(t),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(CliError::MissingArtifact {
            path: path.to_path_buf(),
            command,
        }),
        Err(source) => Err(CliError::Io {
            path: path.to_path_buf(),
            source,
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub config_hash: String,
    pub classifiers: Vec<BinaryClassifier>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ModelFileOrList {
    Wrapped(ModelFile),
    Bare(Vec<BinaryClassifier>),
}

/// Read a model file; a bare JSON list of classifiers is accepted too.
pub fn load_model(path: &Path) -> Result<OvOModel> {
    let command = if path.ends_with(MODEL_FULL) { "train" } else { "select" };
    let text = read_existing(path, command)?;
    let parsed: ModelFileOrList = serde_json::from_str(&text).map_err(|e| CliError::Artifact {
        path: path.to_path_buf(),
        message: format!("not a model file: {e}"),
    })?;
    let classifiers = match parsed {
        ModelFileOrList::Wrapped(f) => f.classifiers,
        ModelFileOrList::Bare(list) => list,
    };
    let model = OvOModel { classifiers };
    model.validate()?;
    Ok(model)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuantizedFile {
    pub config_hash: String,
    pub quant: QuantSpec,
    pub classifiers: Vec<QuantizedClassifier>,
}

/// Load MNIST, split, normalize and (optionally) downsample.
pub fn load_features(cfg: &RunConfig) -> Result<Splits<FeatureSet>> {
    let (train, test) = cfg.data.paths().load()?;
    let s = dataset::split(&train, &test, &cfg.split_spec())?;
    let prep = |set| -> Result<FeatureSet> {
        let f = dataset::normalize(set);
        Ok(if cfg.data.downsample {
            dataset::downsample_set(&f, &cfg.grid)?
        } else {
            f
        })
    };
    Ok(Splits {
        train: prep(&s.train)?,
        validation: prep(&s.validation)?,
        test: prep(&s.test)?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SetSummary {
    pub samples: usize,
    pub class_counts: [usize; 10],
}

impl SetSummary {
    fn of(set: &FeatureSet) -> Self {
        SetSummary {
            samples: set.len(),
            class_counts: set.class_counts(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetReport {
    pub config_hash: String,
    pub feature_dim: usize,
    /// Source pixel (row-major in the 28x28 frame) of each feature.
    pub source_pixels: Option<Vec<usize>>,
    pub train: SetSummary,
    pub validation: SetSummary,
    pub test: SetSummary,
}

pub fn prepare(ctx: &Context) -> Result<DatasetReport> {
    let s = load_features(&ctx.cfg)?;
    let report = DatasetReport {
        config_hash: ctx.hash.clone(),
        feature_dim: s.train.dim,
        source_pixels: ctx.cfg.data.downsample.then(|| ctx.cfg.grid.source_pixels()),
        train: SetSummary::of(&s.train),
        validation: SetSummary::of(&s.validation),
        test: SetSummary::of(&s.test),
    };
    ctx.write_json(DATASET, &report)?;
    println!(
        "prepared {} train / {} validation / {} test digits, {} features each",
        report.train.samples, report.validation.samples, report.test.samples, report.feature_dim
    );
    Ok(report)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainReport {
    pub config_hash: String,
    pub feature_dim: usize,
    pub mean_feature_count: f64,
    pub validation_accuracy: f64,
    pub test_accuracy: f64,
    pub pairs: Vec<PairReport>,
}

fn fit_and_report(ctx: &Context, s: &Splits<FeatureSet>, sbs: bool) -> Result<(OvOModel, TrainReport)> {
    let spec = sbs.then_some(&ctx.cfg.sbs);
    let (model, pairs) = trainer::build_ovo(&s.train, &s.validation, &ctx.cfg.train, spec)?;
    let report = TrainReport {
        config_hash: ctx.hash.clone(),
        feature_dim: s.train.dim,
        mean_feature_count: model.mean_feature_count(),
        validation_accuracy: trainer::ovo_accuracy(&model, &s.validation)?,
        test_accuracy: trainer::ovo_accuracy(&model, &s.test)?,
        pairs,
    };
    Ok((model, report))
}

fn write_model(ctx: &Context, name: &str, model: &OvOModel) -> Result<PathBuf> {
    ctx.write_json(
        name,
        &ModelFile {
            config_hash: ctx.hash.clone(),
            classifiers: model.classifiers.clone(),
        },
    )
}

/// Train all 45 classifiers on every feature.
pub fn train(ctx: &Context) -> Result<TrainReport> {
    let s = load_features(&ctx.cfg)?;
    eprintln!("training 45 classifiers on {} features", s.train.dim);
    let (model, report) = fit_and_report(ctx, &s, false)?;
    write_model(ctx, MODEL_FULL, &model)?;
    ctx.write_json(TRAIN_REPORT, &report)?;
    println!(
        "trained 45 classifiers: validation accuracy {:.4}, test accuracy {:.4}",
        report.validation_accuracy, report.test_accuracy
    );
    Ok(report)
}

/// Per-pair feature selection, starting from the trained full model's
/// feature space.
pub fn select(ctx: &Context) -> Result<TrainReport> {
    let full = load_model(&ctx.out(MODEL_FULL))?;
    let s = load_features(&ctx.cfg)?;
    let max_index = full.classifiers.iter().flat_map(|c| c.feature_indices.iter().copied()).max();
    if max_index.is_some_and(|m| m >= s.train.dim) {
        return Err(CliError::Artifact {
            path: ctx.out(MODEL_FULL),
            message: format!("model uses features beyond the configured {} dimensions; retrain", s.train.dim),
        });
    }
    let (model, report) = if ctx.cfg.sbs.enabled {
        eprintln!("running backward selection on 45 pairs");
        fit_and_report(ctx, &s, true)?
    } else {
        let report = TrainReport {
            config_hash: ctx.hash.clone(),
            feature_dim: s.train.dim,
            mean_feature_count: full.mean_feature_count(),
            validation_accuracy: trainer::ovo_accuracy(&full, &s.validation)?,
            test_accuracy: trainer::ovo_accuracy(&full, &s.test)?,
            pairs: Vec::new(),
        };
        (full, report)
    };
    write_model(ctx, MODEL_SELECTED, &model)?;
    ctx.write_json(SELECT_REPORT, &report)?;
    let rows: Vec<Vec<String>> = model
        .classifiers
        .iter()
        .map(|c| vec![c.pair.to_string(), c.feature_indices.len().to_string()])
        .collect();
    ctx.write_csv(FEATURE_COUNTS, &["pair", "features"], &rows)?;
    println!(
        "selected features: mean {:.2} per classifier, {} total; test accuracy {:.4}",
        report.mean_feature_count,
        model.classifiers.iter().map(|c| c.feature_indices.len()).sum::<usize>(),
        report.test_accuracy
    );
    Ok(report)
}

pub fn quantize(ctx: &Context) -> Result<QuantizedModel> {
    let model = load_model(&ctx.out(MODEL_SELECTED))?;
    let qm = quantizer::quantize_model(&model, &ctx.cfg.quant)?;
    ctx.write_json(
        QUANTIZED,
        &QuantizedFile {
            config_hash: ctx.hash.clone(),
            quant: qm.quant,
            classifiers: qm.classifiers.clone(),
        },
    )?;
    let kept: usize = qm.classifiers.iter().map(|c| c.entries.len()).sum();
    let total: usize = model.classifiers.iter().map(|c| c.weights.len()).sum();
    println!("quantized {total} weights to {} bits; {kept} nonzero levels", ctx.cfg.quant.bits);
    Ok(qm)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineSummary {
    pub pair: String,
    pub p_devices: usize,
    pub n_devices: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BuildReport {
    pub config_hash: String,
    pub device_count: usize,
    pub area_um2: f64,
    pub device_footprint_um2: f64,
    pub cycle_time_s: f64,
    pub lines: Vec<LineSummary>,
}

pub fn build(ctx: &Context) -> Result<BuildReport> {
    let qf: QuantizedFile = ctx.read_artifact(QUANTIZED, "quantize")?;
    let qm = QuantizedModel {
        quant: qf.quant,
        classifiers: qf.classifiers,
    };
    let system = system_builder::assemble_quantized(&qm, &ctx.cfg.device, &ctx.cfg.line)?;
    let netlist = format!("* config_hash {}\n{}", ctx.hash, system_builder::netlist_string(&system));
    ctx.write_text(NETLIST, &netlist)?;
    let footprint = system_builder::DEFAULT_DEVICE_FOOTPRINT_UM2;
    let report = BuildReport {
        config_hash: ctx.hash.clone(),
        device_count: system.device_count,
        area_um2: system_builder::estimate_area(&system, footprint),
        device_footprint_um2: footprint,
        cycle_time_s: system.timing.cycle_time(),
        lines: system
            .lines
            .iter()
            .map(|l| {
                let p = l
                    .devices
                    .iter()
                    .filter(|d| d.config.dtype == ambisense::DeviceType::P)
                    .count();
                LineSummary {
                    pair: l.pair.to_string(),
                    p_devices: p,
                    n_devices: l.devices.len() - p,
                }
            })
            .collect(),
    };
    ctx.write_json(BUILD_REPORT, &report)?;
    println!(
        "assembled {} sensing lines, {} devices, {:.3} um^2",
        system.lines.len(),
        report.device_count,
        report.area_um2
    );
    Ok(report)
}

pub fn load_system(ctx: &Context) -> Result<SystemConfig> {
    let path = ctx.out(NETLIST);
    let text = read_existing(&path, "build")?;
    let system = system_builder::parse_netlist(&text)?;
    system.validate()?;
    Ok(system)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsFile {
    pub config_hash: String,
    /// Share of digits on which the analog vote winner equals the
    /// digital-quantized winner; analog mode only.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub quantized_agreement: Option<f64>,
    #[serde(flatten)]
    pub metrics: MetricsReport,
}

/// Digits evaluated in `mode`: `eval.subset` if set, otherwise the whole
/// test set for the digital modes and `eval.analog_subset` for analog.
pub fn subset_size(cfg: &RunConfig, mode: EvalMode, available: usize) -> usize {
    let n = match (cfg.eval.subset, mode) {
        (Some(n), _) => n,
        (None, EvalMode::Analog) => cfg.eval.analog_subset,
        (None, _) => available,
    };
    n.min(available)
}

/// Score the test set (or its head) in `mode`, writing metrics, confusion
/// matrix and the first `eval.tally_digits` vote tallies.
pub fn evaluate(ctx: &Context, mode: EvalMode) -> Result<MetricsFile> {
    let system = load_system(ctx)?;
    let model = load_model(&ctx.out(MODEL_SELECTED))?;
    let s = load_features(&ctx.cfg)?;
    let n = subset_size(&ctx.cfg, mode, s.test.len());
    let test = s.test.head(n);
    eprintln!("evaluating {n} test digits in {} mode", mode.name());
    let eval = system_builder::evaluate(&system, &model, &test, mode)?;
    let agreement = match mode {
        EvalMode::Analog => {
            let q = system_builder::evaluate(&system, &model, &test, EvalMode::DigitalQuantized)?;
            let same = eval.predictions().iter().zip(q.predictions()).filter(|(a, b)| **a == *b).count();
            Some(same as f64 / n as f64)
        }
        _ => None,
    };
    write_tallies(ctx, &eval, &test)?;
    let mut confusion = Vec::new();
    system_builder::write_confusion_csv(&eval.report.confusion, &mut confusion).expect("in-memory write");
    ctx.write_text(
        &confusion_file(mode),
        &format!("# config_hash={}\n{}", ctx.hash, String::from_utf8(confusion).expect("utf-8")),
    )?;
    let file = MetricsFile {
        config_hash: ctx.hash.clone(),
        quantized_agreement: agreement,
        metrics: eval.report,
    };
    ctx.write_json(&metrics_file(mode), &file)?;
    print!("{}: accuracy {:.4} over {} digits", mode.name(), file.metrics.accuracy, n);
    if let Some(a) = agreement {
        print!(", agreement with digital-quantized {a:.4}");
    }
    if let Some(e) = file.metrics.energy_per_decision {
        print!(", {:.1} pJ per decision", e * 1e12);
    }
    println!();
    Ok(file)
}

fn write_tallies(ctx: &Context, eval: &Evaluation, test: &FeatureSet) -> Result<()> {
    let mut header = vec!["digit".to_string(), "label".into(), "predicted".into()];
    header.extend((0..10).map(|c| format!("votes_{c}")));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<String>> = eval
        .tallies
        .iter()
        .zip(&test.labels)
        .take(ctx.cfg.eval.tally_digits)
        .enumerate()
        .map(|(i, (t, label))| {
            let mut row = vec![i.to_string(), label.to_string(), t.predicted.to_string()];
            row.extend(t.tally.iter().map(u32::to_string));
            row
        })
        .collect();
    ctx.write_csv(VOTE_TALLIES, &header, &rows)?;
    Ok(())
}

/// `evaluate` plus sensing-line voltage traces for the first
/// `eval.trace_digits` digits (analog mode only).
pub fn simulate(ctx: &Context, mode: EvalMode) -> Result<MetricsFile> {
    let file = evaluate(ctx, mode)?;
    let path = ctx.out(TRACES);
    if mode != EvalMode::Analog {
        // A stale trace file from an earlier analog run would be misleading.
        if path.exists() {
            fs::remove_file(&path).map_err(|source| CliError::Io { path, source })?;
        }
        return Ok(file);
    }
    let system = load_system(ctx)?;
    let s = load_features(&ctx.cfg)?;
    let k = ctx.cfg.eval.trace_digits.min(s.test.len());
    let traces: Vec<ClassificationTrace> = s
        .test
        .rows()
        .take(k)
        .map(|x| analog_sim::simulate_digit(&system, x, true))
        .collect::<std::result::Result<_, _>>()?;
    let indexed: Vec<(usize, &ClassificationTrace)> = traces.iter().enumerate().collect();
    let mut buf = format!("# config_hash={}\n", ctx.hash).into_bytes();
    analog_sim::write_traces_csv(&mut buf, &indexed).map_err(|e| CliError::Io {
        path: path.clone(),
        source: std::io::Error::other(e),
    })?;
    ctx.write_text(TRACES, &String::from_utf8(buf).expect("utf-8"))?;
    println!("wrote line traces for {k} digits to {}", path.display());
    Ok(file)
}

fn read_optional<T: DeserializeOwned>(ctx: &Context, name: &str) -> Option<T> {
    let text = fs::read_to_string(ctx.out(name)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Markdown summary of whatever artifacts the run directory holds.
pub fn report(ctx: &Context) -> Result<String> {
    let mut md = String::new();
    let _ = writeln!(md, "# Run report\n\nconfig hash: `{}`\n", ctx.hash);
    let train: Option<TrainReport> = read_optional(ctx, TRAIN_REPORT);
    let selected: Option<TrainReport> = read_optional(ctx, SELECT_REPORT);
    let build: Option<BuildReport> = read_optional(ctx, BUILD_REPORT);
    if train.is_none() && selected.is_none() && build.is_none() {
        return Err(CliError::MissingArtifact {
            path: ctx.out(TRAIN_REPORT),
            command: "train",
        });
    }

    let _ = writeln!(md, "## Training\n");
    if let Some(t) = &train {
        let _ = writeln!(
            md,
            "All {} features: validation accuracy {:.4}, test accuracy {:.4}.\n",
            t.feature_dim, t.validation_accuracy, t.test_accuracy
        );
    }
    if let Some(s) = &selected {
        let _ = writeln!(
            md,
            "After selection: mean {:.2} features per classifier, validation accuracy {:.4}, test accuracy {:.4}.\n",
            s.mean_feature_count, s.validation_accuracy, s.test_accuracy
        );
        if !s.pairs.is_empty() {
            let _ = writeln!(md, "| pair | features | validation accuracy |\n|---|---|---|");
            for p in &s.pairs {
                let _ = writeln!(md, "| {} | {} | {:.4} |", p.pair, p.feature_count, p.val_accuracy);
            }
            let _ = writeln!(md);
        }
    }

    if let Some(b) = &build {
        let _ = writeln!(
            md,
            "## Array\n\n{} devices on {} sensing lines, {:.3} um^2 at {:.6} um^2 per device; one classification every {:.1} ns.\n",
            b.device_count,
            b.lines.len(),
            b.area_um2,
            b.device_footprint_um2,
            b.cycle_time_s * 1e9
        );
    }

    let modes = [EvalMode::DigitalFloat, EvalMode::DigitalQuantized, EvalMode::Analog];
    let metrics: Vec<MetricsFile> = modes.iter().filter_map(|&m| read_optional(ctx, &metrics_file(m))).collect();
    if !metrics.is_empty() {
        let _ = writeln!(md, "## Evaluation\n\n| mode | digits | accuracy |\n|---|---|---|");
        for m in &metrics {
            let _ = writeln!(md, "| {} | {} | {:.4} |", m.metrics.mode.name(), m.metrics.samples, m.metrics.accuracy);
        }
        let _ = writeln!(md);
        for m in &metrics {
            if let Some(a) = m.quantized_agreement {
                let _ = writeln!(md, "Analog and digital-quantized winners agree on {:.2}% of digits.\n", a * 100.0);
            }
            if let (Some(e), Some(q)) = (m.metrics.energy_per_decision, m.metrics.total_current_per_decision) {
                let _ = writeln!(
                    md,
                    "Energy per decision {:.2} pJ (charge drawn {:.3} pC). Scope: {}\n\n{}\n",
                    e * 1e12,
                    q * 1e12,
                    m.metrics.energy_scope,
                    m.metrics.weight_memory_note
                );
            }
        }
    }
    ctx.write_text(REPORT, &md)?;
    println!("wrote {}", ctx.out(REPORT).display());
    Ok(md)
}

/// The whole pipeline, with an evaluation in each mode.
pub fn run_all(ctx: &Context) -> Result<()> {
    prepare(ctx)?;
    train(ctx)?;
    select(ctx)?;
    quantize(ctx)?;
    build(ctx)?;
    evaluate(ctx, EvalMode::DigitalFloat)?;
    evaluate(ctx, EvalMode::DigitalQuantized)?;
    // Analog last so the tally file reflects the simulated array.
    simulate(ctx, EvalMode::Analog)?;
    report(ctx)?;
    let _ = std::io::stdout().flush();
    Ok(())
}
