//! Binary logistic classifiers, the one-vs-one ensemble built from them,
//! sequential backward selection and digital voting.
//!
//! Labels follow the hardware convention: `+1` is the smaller digit `a` of
//! a pair `(a, b)`, `-1` is `b`. A classifier votes `+1` iff its margin
//! `Z = sum_i w_i * x_i` reaches the threshold (closed lower branch).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FeatureSet, NUM_CLASSES};

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("invalid hyperparameter: {0}")]
    InvalidHyper(String),
    #[error("learning rate is zero: weights would stay at their initial values")]
    NoProgress,
    #[error("pair {pair}: class {class} has no training samples")]
    EmptyClass { pair: ClassPair, class: u8 },
    #[error("pair {pair}: loss became non-finite at epoch {epoch} (learning rate too large?)")]
    Diverged { pair: ClassPair, epoch: usize },
    #[error("feature index {index} out of range for dimension {dim}")]
    FeatureIndex { index: usize, dim: usize },
    #[error("empty feature set")]
    NoFeatures,
    #[error("invalid class pair ({0}, {1}): need 0 <= a < b <= 9")]
    BadPair(u8, u8),
    #[error("malformed model: {0}")]
    Model(String),
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// Unordered digit pair stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u8; 2]", into = "[u8; 2]")]
pub struct ClassPair {
    a: u8,
    b: u8,
}

impl ClassPair {
    pub fn new(a: u8, b: u8) -> Result<Self> {
        if a < b && (b as usize) < NUM_CLASSES {
            Ok(ClassPair { a, b })
        } else {
            Err(TrainError::BadPair(a, b))
        }
    }

    pub fn a(self) -> u8 {
        self.a
    }

    pub fn b(self) -> u8 {
        self.b
    }

    /// All K(K-1)/2 pairs in lexicographic order.
    pub fn all() -> Vec<ClassPair> {
        let k = NUM_CLASSES as u8;
        (0..k)
            .flat_map(|a| ((a + 1)..k).map(move |b| ClassPair { a, b }))
            .collect()
    }

    /// `+1` for `a`, `-1` for `b`, `None` for any other digit.
    pub fn target(self, label: u8) -> Option<f64> {
        if label == self.a {
            Some(1.0)
        } else if label == self.b {
            Some(-1.0)
        } else {
            None
        }
    }

    pub fn winner(self, vote: Vote) -> u8 {
        match vote {
            Vote::Positive => self.a,
            Vote::Negative => self.b,
        }
    }
}

impl TryFrom<[u8; 2]> for ClassPair {
    type Error = TrainError;
    fn try_from(v: [u8; 2]) -> Result<Self> {
        ClassPair::new(v[0], v[1])
    }
}

impl From<ClassPair> for [u8; 2] {
    fn from(p: ClassPair) -> Self {
        [p.a, p.b]
    }
}

impl fmt::Display for ClassPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.a, self.b)
    }
}

impl FromStr for ClassPair {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || TrainError::Model(format!("bad class pair {s:?}"));
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        ClassPair::new(a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?)
    }
}

/// Binary decision of one classifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "i8", into = "i8")]
pub enum Vote {
    Positive,
    Negative,
}

impl Vote {
    pub fn as_i8(self) -> i8 {
        match self {
            Vote::Positive => 1,
            Vote::Negative => -1,
        }
    }
}

impl From<Vote> for i8 {
    fn from(v: Vote) -> i8 {
        v.as_i8()
    }
}

impl TryFrom<i8> for Vote {
    type Error = String;
    fn try_from(v: i8) -> std::result::Result<Self, String> {
        match v {
            1 => Ok(Vote::Positive),
            -1 => Ok(Vote::Negative),
            _ => Err(format!("vote must be +1 or -1, got {v}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainHyper {
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub grad_tol: f64,
    pub l2_lambda: f64,
    pub include_intercept: bool,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            learning_rate: 0.5,
            max_epochs: 500,
            grad_tol: 1e-5,
            l2_lambda: 1e-4,
            include_intercept: false,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(TrainError::InvalidHyper(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if self.learning_rate == 0.0 {
            return Err(TrainError::NoProgress);
        }
        if self.max_epochs == 0 {
            return Err(TrainError::InvalidHyper("max_epochs must be >= 1".into()));
        }
        if !(self.grad_tol >= 0.0) {
            return Err(TrainError::InvalidHyper("grad_tol must be >= 0".into()));
        }
        if !(self.l2_lambda >= 0.0) {
            return Err(TrainError::InvalidHyper("l2_lambda must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryClassifier {
    pub pair: ClassPair,
    pub feature_indices: Vec<usize>,
    pub weights: Vec<f64>,
    #[serde(default)]
    pub threshold: f64,
    /// Only nonzero for digital-only models trained with an intercept.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub intercept: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl BinaryClassifier {
    /// `Z = sum_i w_i * x[feature_indices[i]] (+ intercept)`.
    pub fn margin(&self, x: &[f64]) -> Result<f64> {
        let mut z = self.intercept;
        for (&i, &w) in self.feature_indices.iter().zip(&self.weights) {
            let xi = x.get(i).ok_or(TrainError::FeatureIndex {
                index: i,
                dim: x.len(),
            })?;
            z += w * xi;
        }
        Ok(z)
    }

    pub fn predict(&self, x: &[f64]) -> Result<Vote> {
        Ok(predict_sign(self.margin(x)?, self.threshold))
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_indices.is_empty() {
            return Err(TrainError::NoFeatures);
        }
        if self.feature_indices.len() != self.weights.len() {
            return Err(TrainError::Model(format!(
                "pair {}: {} feature indices but {} weights",
                self.pair,
                self.feature_indices.len(),
                self.weights.len()
            )));
        }
        Ok(())
    }
}

/// `+1` iff `z >= z_th`.
pub fn predict_sign(z: f64, z_th: f64) -> Vote {
    if z >= z_th {
        Vote::Positive
    } else {
        Vote::Negative
    }
}

/// The 45-classifier one-vs-one ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvOModel {
    pub classifiers: Vec<BinaryClassifier>,
}

impl OvOModel {
    /// Checks pair coverage and per-classifier shapes.
    pub fn validate(&self) -> Result<()> {
        let expected = ClassPair::all();
        if self.classifiers.len() != expected.len() {
            return Err(TrainError::Model(format!(
                "expected {} classifiers, found {}",
                expected.len(),
                self.classifiers.len()
            )));
        }
        let mut pairs: Vec<ClassPair> = self.classifiers.iter().map(|c| c.pair).collect();
        pairs.sort();
        if pairs != expected {
            return Err(TrainError::Model("classifier pairs are not the 45 distinct digit pairs".into()));
        }
        self.classifiers.iter().try_for_each(BinaryClassifier::validate)
    }

    pub fn mean_feature_count(&self) -> f64 {
        let total: usize = self.classifiers.iter().map(|c| c.feature_indices.len()).sum();
        total as f64 / self.classifiers.len().max(1) as f64
    }

    pub fn classifier(&self, pair: ClassPair) -> Option<&BinaryClassifier> {
        self.classifiers.iter().find(|c| c.pair == pair)
    }
}

/// Per-class vote counts and the winning digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteTally {
    pub tally: [u32; NUM_CLASSES],
    pub predicted: u8,
}

impl VoteTally {
    pub fn from_votes(votes: impl IntoIterator<Item = (ClassPair, Vote)>) -> Self {
        let mut tally = [0u32; NUM_CLASSES];
        for (pair, vote) in votes {
            tally[pair.winner(vote) as usize] += 1;
        }
        VoteTally {
            tally,
            predicted: argmax_smallest(&tally),
        }
    }

    pub fn total(&self) -> u32 {
        self.tally.iter().sum()
    }
}

/// Index of the largest count; ties go to the smallest digit.
pub fn argmax_smallest(tally: &[u32; NUM_CLASSES]) -> u8 {
    let mut best = 0;
    for (i, &t) in tally.iter().enumerate() {
        if t > tally[best] {
            best = i;
        }
    }
    best as u8
}

pub fn vote(model: &OvOModel, x: &[f64]) -> Result<VoteTally> {
    let votes = model
        .classifiers
        .iter()
        .map(|c| c.predict(x).map(|v| (c.pair, v)))
        .collect::<Result<Vec<_>>>()?;
    Ok(VoteTally::from_votes(votes))
}

/// Dense design matrix of one class pair restricted to a feature subset.
#[derive(Debug, Clone)]
pub struct PairProblem {
    pub pair: ClassPair,
    /// Columns of `x`, excluding the intercept column.
    pub features: Vec<usize>,
    pub intercept: bool,
    /// Row stride (features plus one if `intercept`).
    pub dim: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl PairProblem {
    pub fn new(set: &FeatureSet, pair: ClassPair, features: &[usize], intercept: bool) -> Result<Self> {
        if features.is_empty() {
            return Err(TrainError::NoFeatures);
        }
        if let Some(&index) = features.iter().find(|&&i| i >= set.dim) {
            return Err(TrainError::FeatureIndex { index, dim: set.dim });
        }
        let dim = features.len() + usize::from(intercept);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (row, &label) in set.rows().zip(&set.labels) {
            if let Some(t) = pair.target(label) {
                x.extend(features.iter().map(|&f| row[f]));
                if intercept {
                    x.push(1.0);
                }
                y.push(t);
            }
        }
        Ok(PairProblem {
            pair,
            features: features.to_vec(),
            intercept,
            dim,
            x,
            y,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn check_classes(&self) -> Result<()> {
        for (class, sign) in [(self.pair.a, 1.0), (self.pair.b, -1.0)] {
            if !self.y.contains(&sign) {
                return Err(TrainError::EmptyClass { pair: self.pair, class });
            }
        }
        Ok(())
    }

    /// Same rows with column `k` (a position in `features`) removed.
    pub fn without_column(&self, k: usize) -> PairProblem {
        let mut x = Vec::with_capacity(self.len() * (self.dim - 1));
        for row in self.x.chunks_exact(self.dim) {
            x.extend_from_slice(&row[..k]);
            x.extend_from_slice(&row[k + 1..]);
        }
        let mut features = self.features.clone();
        features.remove(k);
        PairProblem {
            pair: self.pair,
            features,
            intercept: self.intercept,
            dim: self.dim - 1,
            x,
            y: self.y.clone(),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.x.chunks_exact(self.dim)
    }

    /// Fraction of rows whose predicted sign matches the target.
    pub fn accuracy(&self, w: &[f64], threshold: f64) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let correct = self
            .rows()
            .zip(&self.y)
            .filter(|(row, &t)| (dot(row, w) >= threshold) == (t > 0.0))
            .count();
        correct as f64 / self.len() as f64
    }

    pub fn mean_loss(&self, w: &[f64]) -> f64 {
        let total: f64 = self.rows().zip(&self.y).map(|(row, &t)| softplus(-t * dot(row, w))).sum();
        total / self.len().max(1) as f64
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `ln(1 + e^t)` without overflow.
#[inline]
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `1 / (1 + e^-t)` without overflow.
#[inline]
fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss with L2 penalty and its gradient:
///
/// ```text
/// L(w) = (1/n) sum_i ln(1 + exp(-y_i w.x_i)) + (lambda/2) |w|^2
/// dL/dw = (1/n) sum_i -y_i sigmoid(-y_i w.x_i) x_i + lambda w
/// ```
///
/// `x` is row-major with stride `w.len()`.
pub fn logistic_loss_grad(x: &[f64], y: &[f64], w: &[f64], lambda: f64, grad: &mut [f64]) -> f64 {
    let d = w.len();
    let n = y.len().max(1) as f64;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for (row, &t) in x.chunks_exact(d).zip(y) {
        let m = t * dot(row, w);
        loss += softplus(-m);
        let s = -t * sigmoid(-m) / n;
        for (g, &xi) in grad.iter_mut().zip(row) {
            *g += s * xi;
        }
    }
    let mut penalty = 0.0;
    for (g, &wi) in grad.iter_mut().zip(w) {
        *g += lambda * wi;
        penalty += wi * wi;
    }
    loss / n + 0.5 * lambda * penalty
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    /// One weight per column of the problem (intercept last, if present).
    pub weights: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
    pub final_loss: f64,
}

/// Full-batch gradient descent from `init` (zeros if `None`).
///
/// Stops after `max_epochs` updates or as soon as the gradient's
/// infinity norm drops below `grad_tol`.
pub fn gradient_descent(
    problem: &PairProblem,
    h: &TrainHyper,
    max_epochs: usize,
    init: Option<&[f64]>,
) -> Result<FitResult> {
    h.validate()?;
    problem.check_classes()?;
    let mut w = match init {
        Some(w0) => w0.to_vec(),
        None => vec![0.0; problem.dim],
    };
    let mut grad = vec![0.0; problem.dim];
    for epoch in 0..max_epochs {
        let loss = logistic_loss_grad(&problem.x, &problem.y, &w, h.l2_lambda, &mut grad);
        if !loss.is_finite() {
            return Err(TrainError::Diverged { pair: problem.pair, epoch });
        }
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax < h.grad_tol {
            return Ok(FitResult {
                weights: w,
                epochs: epoch,
                converged: true,
                final_loss: loss,
            });
        }
        for (wi, gi) in w.iter_mut().zip(&grad) {
            *wi -= h.learning_rate * gi;
        }
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(TrainError::Diverged {
            pair: problem.pair,
            epoch: max_epochs,
        });
    }
    let final_loss = problem.mean_loss(&w);
    if !final_loss.is_finite() {
        return Err(TrainError::Diverged {
            pair: problem.pair,
            epoch: max_epochs,
        });
    }
    Ok(FitResult {
        weights: w,
        epochs: max_epochs,
        converged: false,
        final_loss,
    })
}

fn classifier_from_fit(problem: &PairProblem, fit: &FitResult) -> BinaryClassifier {
    let n = problem.features.len();
    BinaryClassifier {
        pair: problem.pair,
        feature_indices: problem.features.clone(),
        weights: fit.weights[..n].to_vec(),
        threshold: 0.0,
        intercept: if problem.intercept { fit.weights[n] } else { 0.0 },
    }
}

/// Train one binary classifier on the samples of `pair` found in `train`.
pub fn train_logistic(
    train: &FeatureSet,
    pair: ClassPair,
    features: &[usize],
    h: &TrainHyper,
) -> Result<BinaryClassifier> {
    let problem = PairProblem::new(train, pair, features, h.include_intercept)?;
    let fit = gradient_descent(&problem, h, h.max_epochs, None)?;
    Ok(classifier_from_fit(&problem, &fit))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SbsSpec {
    pub enabled: bool,
    /// Accepted validation-accuracy shortfall (as a fraction) against the
    /// best subset seen.
    pub tolerance: f64,
    /// Upper bound on the returned subset size.
    pub max_features: usize,
    /// Warm-started descent epochs used to refit each candidate subset.
    pub candidate_epochs: usize,
    /// Stop eliminating once accuracy falls below the tolerance band.
    pub early_stop: bool,
}

impl Default for SbsSpec {
    fn default() -> Self {
        SbsSpec {
            enabled: true,
            tolerance: 0.002,
            max_features: 64,
            candidate_epochs: 30,
            early_stop: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbsStep {
    pub size: usize,
    /// Feature dropped to reach this subset (`None` for the starting set).
    pub removed: Option<usize>,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbsOutcome {
    pub pair: ClassPair,
    pub selected: Vec<usize>,
    pub selected_accuracy: f64,
    pub best_accuracy: f64,
    pub path: Vec<SbsStep>,
}

/// Sequential backward selection starting from every feature of `train`.
///
/// Each round refits the model without each remaining feature (warm start,
/// `candidate_epochs` updates) and drops the one whose removal gives the
/// highest validation accuracy (ties: lower validation loss, then lower
/// position). The smallest subset within `tolerance` of the best accuracy
/// seen is returned.
pub fn sbs_select(
    pair: ClassPair,
    train: &FeatureSet,
    val: &FeatureSet,
    h: &TrainHyper,
    spec: &SbsSpec,
) -> Result<SbsOutcome> {
    let all: Vec<usize> = (0..train.dim).collect();
    let mut problem = PairProblem::new(train, pair, &all, h.include_intercept)?;
    let mut val_problem = PairProblem::new(val, pair, &all, h.include_intercept)?;
    let fit = gradient_descent(&problem, h, h.max_epochs, None)?;
    let mut w = fit.weights;
    let start_acc = val_problem.accuracy(&w, 0.0);

    let mut path = vec![SbsStep {
        size: all.len(),
        removed: None,
        val_accuracy: start_acc,
    }];
    let mut subsets = vec![all.clone()];
    let mut best = start_acc;

    while problem.features.len() > 1 {
        let n = problem.features.len();
        let candidates = (0..n)
            .into_par_iter()
            .map(|k| {
                let sub = problem.without_column(k);
                let mut w0 = w.clone();
                w0.remove(k);
                let fit = gradient_descent(&sub, h, spec.candidate_epochs, Some(&w0))?;
                let vsub = val_problem.without_column(k);
                let acc = vsub.accuracy(&fit.weights, 0.0);
                let loss = vsub.mean_loss(&fit.weights);
                Ok((k, acc, loss, fit.weights))
            })
            .collect::<Result<Vec<_>>>()?;
        let (k, acc, _, weights) = candidates
            .into_iter()
            .reduce(|best, c| {
                let better = c.1 > best.1 || (c.1 == best.1 && c.2 < best.2);
                if better {
                    c
                } else {
                    best
                }
            })
            .expect("at least two features remain");
        let removed = problem.features[k];
        problem = problem.without_column(k);
        val_problem = val_problem.without_column(k);
        w = weights;
        best = best.max(acc);
        path.push(SbsStep {
            size: problem.features.len(),
            removed: Some(removed),
            val_accuracy: acc,
        });
        subsets.push(problem.features.clone());
        if spec.early_stop && problem.features.len() <= spec.max_features && acc < best - spec.tolerance {
            break;
        }
    }

    let cut = best - spec.tolerance;
    let within = |s: &SbsStep| s.size <= spec.max_features;
    let chosen = path
        .iter()
        .enumerate()
        .filter(|(_, s)| within(s) && s.val_accuracy >= cut)
        .min_by_key(|(_, s)| s.size)
        .or_else(|| {
            // Nothing within the size cap meets the band: best accuracy under the cap.
            path.iter()
                .enumerate()
                .filter(|(_, s)| within(s))
                .max_by(|x, y| x.1.val_accuracy.total_cmp(&y.1.val_accuracy).then(y.1.size.cmp(&x.1.size)))
        })
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(SbsOutcome {
        pair,
        selected: subsets[chosen].clone(),
        selected_accuracy: path[chosen].val_accuracy,
        best_accuracy: best,
        path,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub pair: ClassPair,
    pub feature_count: usize,
    pub val_accuracy: f64,
    pub epochs: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sbs: Option<SbsOutcome>,
}

/// Train all 45 pairwise classifiers, optionally with per-pair SBS.
pub fn build_ovo(
    train: &FeatureSet,
    val: &FeatureSet,
    h: &TrainHyper,
    sbs: Option<&SbsSpec>,
) -> Result<(OvOModel, Vec<PairReport>)> {
    h.validate()?;
    let all: Vec<usize> = (0..train.dim).collect();
    let results = ClassPair::all()
        .into_par_iter()
        .map(|pair| {
            let outcome = match sbs {
                Some(spec) if spec.enabled => Some(sbs_select(pair, train, val, h, spec)?),
                _ => None,
            };
            let features = outcome.as_ref().map_or(&all, |o| &o.selected);
            let problem = PairProblem::new(train, pair, features, h.include_intercept)?;
            let fit = gradient_descent(&problem, h, h.max_epochs, None)?;
            let val_problem = PairProblem::new(val, pair, features, h.include_intercept)?;
            let report = PairReport {
                pair,
                feature_count: features.len(),
                val_accuracy: val_problem.accuracy(&fit.weights, 0.0),
                epochs: fit.epochs,
                converged: fit.converged,
                sbs: outcome,
            };
            Ok((classifier_from_fit(&problem, &fit), report))
        })
        .collect::<Result<Vec<_>>>()?;
    let (classifiers, reports) = results.into_iter().unzip();
    Ok((OvOModel { classifiers }, reports))
}

/// Fraction of correctly voted digits.
pub fn ovo_accuracy(model: &OvOModel, set: &FeatureSet) -> Result<f64> {
    let correct = set
        .rows()
        .zip(&set.labels)
        .map(|(x, &l)| vote(model, x).map(|t| t.predicted == l))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|&c| c)
        .count();
    Ok(correct as f64 / set.len().max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pair(a: u8, b: u8) -> ClassPair {
        ClassPair::new(a, b).unwrap()
    }

    fn clf(p: ClassPair, features: Vec<usize>, weights: Vec<f64>) -> BinaryClassifier {
        BinaryClassifier {
            pair: p,
            feature_indices: features,
            weights,
            threshold: 0.0,
            intercept: 0.0,
        }
    }

    #[test]
    fn margin_direct_arithmetic() {
        let c = clf(pair(0, 1), vec![0, 1], vec![1.0, 1.0]);
        assert_eq!(c.margin(&[1.0, 0.0]).unwrap(), 1.0);
        let zero = clf(pair(0, 1), vec![0, 1, 2], vec![0.0; 3]);
        assert_eq!(zero.margin(&[0.3, 0.9, 0.1]).unwrap(), 0.0);
        assert!(matches!(
            c.margin(&[1.0]),
            Err(TrainError::FeatureIndex { index: 1, dim: 1 })
        ));
    }

    #[test]
    fn margin_is_linear_in_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..16).map(|_| rng.gen_range(0.0..1.0)).collect();
        let c = clf(pair(2, 7), (0..16).collect(), w);
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let (z1, z2) = (c.margin(&x).unwrap(), c.margin(&x2).unwrap());
        assert!((z2 - 2.0 * z1).abs() < 1e-12);
    }

    #[test]
    fn sign_boundary() {
        assert_eq!(predict_sign(0.0, 0.0), Vote::Positive);
        assert_eq!(predict_sign(-0.001, 0.0), Vote::Negative);
        assert_eq!(predict_sign(5.0, 0.0), Vote::Positive);
    }

    #[test]
    fn class_pair_rules() {
        assert_eq!(ClassPair::all().len(), 45);
        assert!(ClassPair::new(3, 3).is_err());
        assert!(ClassPair::new(4, 2).is_err());
        assert!(ClassPair::new(0, 10).is_err());
        assert_eq!("3-4".parse::<ClassPair>().unwrap(), pair(3, 4));
        assert_eq!(pair(3, 4).to_string(), "3-4");
        assert_eq!(serde_json::to_string(&pair(0, 9)).unwrap(), "[0,9]");
        assert!(serde_json::from_str::<ClassPair>("[5,1]").is_err());
    }

    fn toy_1d() -> FeatureSet {
        FeatureSet {
            dim: 1,
            values: vec![0.9, 0.1, 0.85, 0.15],
            labels: vec![0, 1, 0, 1],
        }
    }

    #[test]
    fn separable_toy_with_intercept() {
        let h = TrainHyper {
            include_intercept: true,
            max_epochs: 2000,
            ..TrainHyper::default()
        };
        let c = train_logistic(&toy_1d(), pair(0, 1), &[0], &h).unwrap();
        assert!(c.weights[0] > 0.0);
        let set = toy_1d();
        for (x, &l) in set.rows().zip(&set.labels) {
            assert_eq!(c.pair.winner(c.predict(x).unwrap()), l);
        }
    }

    #[test]
    fn zero_learning_rate_reports_no_progress() {
        let h = TrainHyper {
            learning_rate: 0.0,
            ..TrainHyper::default()
        };
        assert_eq!(train_logistic(&toy_1d(), pair(0, 1), &[0], &h), Err(TrainError::NoProgress));
    }

    #[test]
    fn invalid_hyper_rejected() {
        for h in [
            TrainHyper { learning_rate: -1.0, ..Default::default() },
            TrainHyper { max_epochs: 0, ..Default::default() },
            TrainHyper { grad_tol: -1.0, ..Default::default() },
            TrainHyper { l2_lambda: f64::NAN, ..Default::default() },
        ] {
            assert!(matches!(h.validate(), Err(TrainError::InvalidHyper(_))));
        }
    }

    #[test]
    fn empty_class_is_an_error() {
        let set = FeatureSet {
            dim: 1,
            values: vec![0.2, 0.4],
            labels: vec![0, 0],
        };
        assert_eq!(
            train_logistic(&set, pair(0, 1), &[0], &TrainHyper::default()),
            Err(TrainError::EmptyClass { pair: pair(0, 1), class: 1 })
        );
    }

    #[test]
    fn divergent_rate_is_reported() {
        // Huge features make any finite step explode the margins.
        let set = FeatureSet {
            dim: 1,
            values: vec![1e200, -1e200],
            labels: vec![0, 1],
        };
        let h = TrainHyper {
            learning_rate: 1e200,
            grad_tol: 0.0,
            l2_lambda: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            train_logistic(&set, pair(0, 1), &[0], &h),
            Err(TrainError::Diverged { .. })
        ));
    }

    #[test]
    fn loss_is_monotone_for_small_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 60;
        let d = 5;
        let x: Vec<f64> = (0..n * d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let y: Vec<f64> = (0..n).map(|i| if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let mut w = vec![0.0; d];
        let mut g = vec![0.0; d];
        let mut prev = f64::INFINITY;
        for _ in 0..200 {
            let loss = logistic_loss_grad(&x, &y, &w, 1e-4, &mut g);
            assert!(loss <= prev + 1e-15, "loss increased: {prev} -> {loss}");
            prev = loss;
            for (wi, gi) in w.iter_mut().zip(&g) {
                *wi -= 0.1 * gi;
            }
        }
    }

    fn model_where_digit_wins(digit: u8) -> OvOModel {
        // Feature 0 is 1.0 in the probe input; the weight sign picks the winner.
        let classifiers = ClassPair::all()
            .into_iter()
            .map(|p| {
                let w = if p.a() == digit {
                    1.0
                } else if p.b() == digit {
                    -1.0
                } else {
                    1.0
                };
                clf(p, vec![0], vec![w])
            })
            .collect();
        OvOModel { classifiers }
    }

    #[test]
    fn vote_gives_nine_to_dominant_digit() {
        let m = model_where_digit_wins(3);
        m.validate().unwrap();
        let t = vote(&m, &[1.0]).unwrap();
        assert_eq!(t.tally[3], 9);
        assert_eq!(t.predicted, 3);
        assert_eq!(t.total(), 45);
    }

    #[test]
    fn tie_breaks_to_smallest_digit() {
        let mut tally = [0u32; NUM_CLASSES];
        tally[1] = 8;
        tally[2] = 8;
        tally[5] = 7;
        assert_eq!(argmax_smallest(&tally), 1);
    }

    #[test]
    fn model_validation_catches_missing_pairs() {
        let mut m = model_where_digit_wins(0);
        m.classifiers.pop();
        assert!(m.validate().is_err());
        let mut m = model_where_digit_wins(0);
        m.classifiers[44].pair = pair(0, 1);
        assert!(m.validate().is_err());
    }

    #[test]
    fn model_json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut m = model_where_digit_wins(4);
        for c in &mut m.classifiers {
            c.weights = vec![rng.gen_range(-3.0..3.0) / 7.0];
        }
        let text = serde_json::to_string(&m).unwrap();
        let back: OvOModel = serde_json::from_str(&text).unwrap();
        assert_eq!(back, m);
    }

    /// Pixel-wise separable problem: feature 0 carries the label, the other
    /// features are noise.
    fn informative_first(n: usize, d: usize, seed: u64) -> FeatureSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u8;
            values.push(if label == 0 { rng.gen_range(0.6..1.0) } else { rng.gen_range(0.0..0.4) });
            values.extend((1..d).map(|_| rng.gen_range(0.0..1.0)));
            labels.push(label);
        }
        FeatureSet { dim: d, values, labels }
    }

    #[test]
    fn sbs_full_tolerance_eliminates_down_to_one() {
        let train = informative_first(80, 6, 1);
        let val = informative_first(40, 6, 2);
        let spec = SbsSpec {
            tolerance: 1.0,
            ..SbsSpec::default()
        };
        let out = sbs_select(pair(0, 1), &train, &val, &TrainHyper::default(), &spec).unwrap();
        assert_eq!(out.selected.len(), 1);
        assert_eq!(out.path.len(), 6);
    }

    #[test]
    fn sbs_path_shrinks_and_respects_band() {
        let train = informative_first(120, 8, 3);
        let val = informative_first(60, 8, 4);
        let spec = SbsSpec {
            early_stop: false,
            ..SbsSpec::default()
        };
        let out = sbs_select(pair(0, 1), &train, &val, &TrainHyper::default(), &spec).unwrap();
        assert!(out.path.windows(2).all(|w| w[1].size + 1 == w[0].size));
        assert!(out.selected_accuracy >= out.best_accuracy - spec.tolerance);
        assert!(out.selected.contains(&0), "informative feature must survive: {:?}", out.selected);
    }

    #[test]
    fn sbs_zero_tolerance_returns_smallest_argmax() {
        let train = informative_first(120, 6, 7);
        let val = informative_first(60, 6, 8);
        let spec = SbsSpec {
            tolerance: 0.0,
            early_stop: false,
            ..SbsSpec::default()
        };
        let out = sbs_select(pair(0, 1), &train, &val, &TrainHyper::default(), &spec).unwrap();
        let smallest_best = out
            .path
            .iter()
            .filter(|s| s.val_accuracy == out.best_accuracy)
            .map(|s| s.size)
            .min()
            .unwrap();
        assert_eq!(out.selected.len(), smallest_best);
    }

    #[test]
    fn sbs_respects_size_cap() {
        let train = informative_first(80, 8, 9);
        let val = informative_first(40, 8, 10);
        let spec = SbsSpec {
            max_features: 3,
            tolerance: 0.0,
            ..SbsSpec::default()
        };
        let out = sbs_select(pair(0, 1), &train, &val, &TrainHyper::default(), &spec).unwrap();
        assert!(out.selected.len() <= 3);
    }

    fn finite_difference(x: &[f64], y: &[f64], w: &[f64], lambda: f64, h: f64) -> Vec<f64> {
        let mut scratch = vec![0.0; w.len()];
        (0..w.len())
            .map(|j| {
                let mut wp = w.to_vec();
                let mut wm = w.to_vec();
                wp[j] += h;
                wm[j] -= h;
                (logistic_loss_grad(x, y, &wp, lambda, &mut scratch)
                    - logistic_loss_grad(x, y, &wm, lambda, &mut scratch))
                    / (2.0 * h)
            })
            .collect()
    }

    proptest! {
        #[test]
        fn analytic_gradient_matches_central_differences(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(1..20);
            let d = rng.gen_range(1..8);
            let x: Vec<f64> = (0..n * d).map(|_| rng.gen_range(0.0..1.0)).collect();
            let y: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
            let w: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let lambda = rng.gen_range(0.0..0.1);
            let mut g = vec![0.0; d];
            logistic_loss_grad(&x, &y, &w, lambda, &mut g);
            let fd = finite_difference(&x, &y, &w, lambda, 1e-5);
            let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            let scale = g.iter().map(|a| a * a).sum::<f64>().sqrt().max(fd.iter().map(|a| a * a).sum::<f64>().sqrt());
            prop_assert!(diff <= 1e-5 * scale.max(1e-8), "rel err {}", diff / scale);
        }

        #[test]
        fn sign_invariant_under_joint_positive_scaling(
            w in proptest::collection::vec(-5.0f64..5.0, 1..12),
            seed in any::<u64>(),
            th in -1.0f64..1.0,
            alpha in 0.01f64..100.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..w.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
            let mut c = clf(pair(1, 2), (0..w.len()).collect(), w.clone());
            c.threshold = th;
            let before = c.predict(&x).unwrap();
            c.weights.iter_mut().for_each(|v| *v *= alpha);
            c.threshold *= alpha;
            let z = c.margin(&x).unwrap();
            // Skip razor-edge margins where rounding alone decides the sign.
            prop_assume!((z - c.threshold).abs() > 1e-9 * alpha);
            prop_assert_eq!(before, c.predict(&x).unwrap());
        }

        #[test]
        fn tally_always_sums_to_45(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let classifiers = ClassPair::all().into_iter().map(|p| {
                clf(p, vec![0, 1, 2], (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            }).collect();
            let m = OvOModel { classifiers };
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(0.0..1.0)).collect();
            let t = vote(&m, &x).unwrap();
            prop_assert_eq!(t.total(), 45);
            prop_assert!(t.tally.iter().all(|&v| v <= 9));
        }
    }
}
