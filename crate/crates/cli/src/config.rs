//! Run configuration: one JSON document with a default for every key.

use std::path::{Path, PathBuf};

use ambisense::dataset::MnistPaths;
use ambisense::{DeviceParams, EvalMode, GridSpec, LineTiming, QuantSpec, SbsSpec, SplitSpec, TrainHyper};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding the four standard MNIST IDX files.
    pub dir: PathBuf,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Reduce 28x28 images to the 8x8 grid; `false` trains on all 784 pixels.
    pub downsample: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            dir: PathBuf::from("data/mnist"),
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            downsample: true,
        }
    }
}

impl DataConfig {
    pub fn paths(&self) -> MnistPaths {
        let std = MnistPaths::in_dir(&self.dir);
        MnistPaths {
            train_images: self.train_images.clone().unwrap_or(std.train_images),
            train_labels: self.train_labels.clone().unwrap_or(std.train_labels),
            test_images: self.test_images.clone().unwrap_or(std.test_images),
            test_labels: self.test_labels.clone().unwrap_or(std.test_labels),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_count: usize,
    pub val_count: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        let d = SplitSpec::default();
        SplitConfig {
            train_count: d.train_count,
            val_count: d.val_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub mode: EvalMode,
    /// Evaluate only the first `subset` test digits.
    /// Unset means the full test set (digital) or `analog_subset` (analog).
    pub subset: Option<usize>,
    /// Analog digit count used when `subset` is unset.
    pub analog_subset: usize,
    /// Digits exported as vote-tally records by `simulate`.
    pub tally_digits: usize,
    /// Digits whose line voltage traces are exported by `simulate`.
    pub trace_digits: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mode: EvalMode::Analog,
            subset: None,
            analog_subset: 1000,
            tally_digits: 10,
            trace_digits: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub split: SplitConfig,
    pub grid: GridSpec,
    pub train: TrainHyper,
    pub sbs: SbsSpec,
    pub quant: QuantSpec,
    pub device: DeviceParams,
    pub line: LineTiming,
    pub eval: EvalConfig,
    pub output_dir: PathBuf,
    /// Seeds the train/validation shuffle, the only random choice.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataConfig::default(),
            split: SplitConfig::default(),
            grid: GridSpec::default(),
            train: TrainHyper::default(),
            sbs: SbsSpec::default(),
            quant: QuantSpec::default(),
            device: DeviceParams::default(),
            line: LineTiming::default(),
            eval: EvalConfig::default(),
            output_dir: PathBuf::from("runs/default"),
            seed: SplitSpec::default().shuffle_seed,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_count: self.split.train_count,
            val_count: self.split.val_count,
            shuffle_seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: &dyn std::fmt::Display| CliError::Config(e.to_string());
        self.grid.validate().map_err(|e| bad(&e))?;
        self.train.validate().map_err(|e| bad(&e))?;
        self.quant.validate().map_err(|e| bad(&e))?;
        self.device.validate().map_err(|e| bad(&e))?;
        self.line.validate().map_err(|e| bad(&e))?;
        if (self.quant.vdd - self.device.vdd).abs() > 1e-12 {
            return Err(CliError::Config(format!(
                "quant.vdd ({}) and device.vdd ({}) differ",
                self.quant.vdd, self.device.vdd
            )));
        }
        if !(0.0..=1.0).contains(&self.sbs.tolerance) {
            return Err(CliError::Config("sbs.tolerance must lie in [0, 1]".into()));
        }
        if self.sbs.max_features == 0 || self.sbs.candidate_epochs == 0 {
            return Err(CliError::Config("sbs.max_features and sbs.candidate_epochs must be >= 1".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON serialization. The output directory is
    /// left out so a run moved or repeated elsewhere keeps its hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        let text = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Apply `key.path=value` overrides. Values parse as JSON when they can
    /// and fall back to plain strings.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self, CliError> {
        let mut doc = serde_json::to_value(self).expect("config serializes");
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override {item:?} is not key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut doc;
            for part in key.split('.') {
                slot = slot
                    .as_object_mut()
                    .and_then(|o| o.get_mut(part))
                    .ok_or_else(|| CliError::Config(format!("unknown config key {key:?}")))?;
            }
            *slot = value;
        }
        serde_json::from_value(doc).map_err(|e| CliError::Config(e.to_string()))
    }
}
