//! Simulator and model compiler for a mixed-signal one-vs-one classifier
//! built from dual-gate ambipolar transistors sharing one sensing line per
//! binary classifier.
//!
//! The pipeline runs MNIST through [`dataset`], trains the 45 pairwise
//! logistic classifiers in [`trainer`], quantizes them to 5-bit gate biases
//! in [`quantizer`], wires them onto a behavioral device array
//! ([`device`], [`system_builder`]) and classifies digits by transient
//! simulation of the sensing lines ([`analog_sim`]).

// Parameter checks are written `!(x > 0.0)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analog_sim;
pub mod dataset;
pub mod device;
pub mod quantizer;
pub mod system_builder;
pub mod trainer;

pub use analog_sim::{ClassificationTrace, LineConfig, LineTiming, SensingLineState, SimError};
pub use dataset::{DatasetError, FeatureSet, GridSpec, LabeledImageSet, SplitSpec};
pub use device::{DeviceError, DeviceInstance, DeviceParams, Region};
pub use quantizer::{DeviceConfig, DeviceType, QuantError, QuantSpec, QuantizedModel};
pub use system_builder::{BuildError, EvalMode, MetricsReport, SystemConfig};
pub use trainer::{BinaryClassifier, ClassPair, OvOModel, SbsSpec, TrainError, TrainHyper, Vote, VoteTally};
