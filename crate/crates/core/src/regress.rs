//! Spreading-rate measurement and the log-space power-law regression.
//!
//! A user's spreading rate is the fraction of its followers that retweeted
//! from it, `beta = children / followers`. The model is
//!
//! ```text
//! ln beta = sum_j w_j ln x_j        x in {T, Fr, F, P}
//! ```
//!
//! with no intercept, fitted by least squares on the log values. Errors are
//! reported on `exp` of the prediction, in the same linear space as the
//! measured rates.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphcore::DiffusionTree;
use crate::ingest::{CascadeDataset, CascadeRecord};
use crate::rdn::{build_rdn, AttachmentRule, RdnError};

pub const DROP_LEAF: &str = "leaf";
pub const DROP_ZERO_FOLLOWER: &str = "zero-follower spreader";
pub const DROP_ZERO_FEATURE: &str = "zero feature value";

#[derive(Debug, Error)]
pub enum RegressError {
    #[error("degenerate design (collinear or constant features)")]
    Degenerate,
    #[error("underdetermined: {samples} usable samples for {unknowns} unknowns")]
    Underdetermined { samples: usize, unknowns: usize },
    #[error("undefined prediction for zero feature {0}")]
    ZeroFeature(Feature),
    #[error("no test samples")]
    NoTestSamples,
    #[error("feature set must not be empty")]
    EmptyFeatureSet,
    #[error("duplicate feature {0}")]
    DuplicateFeature(Feature),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("{weights} weights for {features} features")]
    WeightMismatch { weights: usize, features: usize },
    #[error("non-finite weight")]
    NonFiniteWeight,
    #[error("sweep needs at least 2 datasets, got {0}")]
    TooFewDatasets(usize),
    #[error(transparent)]
    Rdn(#[from] RdnError),
}

/// Regression inputs, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feature {
    /// Seconds since the original tweet, clamped to at least 1.
    Time,
    Friends,
    Followers,
    Posts,
}

impl Feature {
    pub const ALL: [Feature; 4] = [
        Feature::Time,
        Feature::Friends,
        Feature::Followers,
        Feature::Posts,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Feature::Time => "time",
            Feature::Friends => "friends",
            Feature::Followers => "followers",
            Feature::Posts => "posts",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Feature {
    type Err = RegressError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Feature::ALL
            .into_iter()
            .find(|f| f.as_str() == s.trim())
            .ok_or_else(|| RegressError::UnknownFeature(s.to_string()))
    }
}

/// Nonempty set of features, kept in canonical `time, friends, followers,
/// posts` order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
#[serde(transparent)]
pub struct FeatureSet(Vec<Feature>);

impl FeatureSet {
    pub fn new(features: impl IntoIterator<Item = Feature>) -> Result<Self, RegressError> {
        let mut v: Vec<Feature> = features.into_iter().collect();
        if v.is_empty() {
            return Err(RegressError::EmptyFeatureSet);
        }
        v.sort();
        if let Some(w) = v.windows(2).find(|w| w[0] == w[1]) {
            return Err(RegressError::DuplicateFeature(w[0]));
        }
        Ok(FeatureSet(v))
    }

    pub fn features(&self) -> &[Feature] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, f: Feature) -> bool {
        self.0.contains(&f)
    }

    /// All 15 nonempty subsets, by size and then lexicographically in
    /// canonical feature order.
    pub fn all_subsets() -> Vec<FeatureSet> {
        let mut subsets: Vec<Vec<Feature>> = (1u8..16)
            .map(|mask| {
                Feature::ALL
                    .into_iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, f)| f)
                    .collect()
            })
            .collect();
        subsets.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
        subsets.into_iter().map(FeatureSet).collect()
    }
}

impl Default for FeatureSet {
    fn default() -> Self {
        FeatureSet(vec![Feature::Friends, Feature::Followers])
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|x| x.as_str()).collect();
        write!(f, "({})", names.join(","))
    }
}

impl FromStr for FeatureSet {
    type Err = RegressError;

    /// Comma list, optionally parenthesized: `friends,followers`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let feats = inner
            .split(',')
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<Feature>, _>>()?;
        FeatureSet::new(feats)
    }
}

impl<'de> Deserialize<'de> for FeatureSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = Vec::<Feature>::deserialize(d)?;
        FeatureSet::new(v).map_err(serde::de::Error::custom)
    }
}

/// Raw values of the four features for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureValues {
    pub followers: u64,
    pub friends: u64,
    pub posts: u64,
    /// Already clamped to at least one second.
    pub elapsed: i64,
}

impl FeatureValues {
    pub fn of(record: &CascadeRecord, elapsed_seconds: i64) -> Self {
        FeatureValues {
            followers: record.followers_count,
            friends: record.friends_count,
            posts: record.posts_count,
            elapsed: elapsed_seconds.max(1),
        }
    }

    pub fn get(&self, f: Feature) -> f64 {
        match f {
            Feature::Time => self.elapsed as f64,
            Feature::Friends => self.friends as f64,
            Feature::Followers => self.followers as f64,
            Feature::Posts => self.posts as f64,
        }
    }

    /// Logs of the selected features, or the first zero-valued one.
    fn logs(&self, features: &FeatureSet) -> Result<Vec<f64>, Feature> {
        features
            .features()
            .iter()
            .map(|&f| {
                let x = self.get(f);
                if x > 0.0 {
                    Ok(x.ln())
                } else {
                    Err(f)
                }
            })
            .collect()
    }
}

/// Measured spreading rate of one user.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaSample {
    pub user_id: String,
    pub beta: f64,
    pub children: usize,
    pub values: FeatureValues,
}

impl BetaSample {
    pub fn new(user_id: impl Into<String>, beta: f64, values: FeatureValues) -> Self {
        BetaSample {
            user_id: user_id.into(),
            beta,
            children: 0,
            values,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BetaMeasurement {
    pub samples: Vec<BetaSample>,
    /// Reason -> number of nodes without a sample.
    pub drops: BTreeMap<String, usize>,
    /// Children of spreaders that were dropped for having no followers.
    pub dropped_children: usize,
}

impl BetaMeasurement {
    pub fn n_dropped(&self) -> usize {
        self.drops.values().sum()
    }
}

/// `beta(i) = children(i) / followers(i)` for every node with at least one
/// child and one follower. Nodes are visited in id order.
pub fn measure_beta(tree: &DiffusionTree) -> BetaMeasurement {
    let seed_time = tree.payload(tree.root()).map(|r| r.event_time).unwrap_or(0);
    let mut m = BetaMeasurement::default();
    for id in tree.node_ids() {
        let rec = tree.payload(id).expect("every node carries a payload");
        let children = tree.children_of(id).len();
        if children == 0 {
            *m.drops.entry(DROP_LEAF.to_string()).or_default() += 1;
        } else if rec.followers_count == 0 {
            *m.drops.entry(DROP_ZERO_FOLLOWER.to_string()).or_default() += 1;
            m.dropped_children += children;
        } else {
            m.samples.push(BetaSample {
                user_id: id.to_string(),
                beta: children as f64 / rec.followers_count as f64,
                children,
                values: FeatureValues::of(rec, rec.event_time - seed_time),
            });
        }
    }
    m
}

/// Fitted exponents of the spreading-rate law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpreadModel {
    pub features: FeatureSet,
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<f64>,
    pub trained_on: String,
    /// Latest event time of the training cascade (epoch seconds), when known.
    pub fitted_at: Option<i64>,
    #[serde(default)]
    pub n_train: usize,
}

impl SpreadModel {
    /// A model with the given exponents and no intercept.
    pub fn with_weights(features: FeatureSet, weights: Vec<f64>) -> Result<Self, RegressError> {
        if weights.len() != features.len() {
            return Err(RegressError::WeightMismatch {
                weights: weights.len(),
                features: features.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(RegressError::NonFiniteWeight);
        }
        Ok(SpreadModel {
            features,
            weights,
            intercept: None,
            trained_on: String::new(),
            fitted_at: None,
            n_train: 0,
        })
    }

    /// Parses `followers=-0.77,friends=-0.12`.
    pub fn parse_law(text: &str) -> Result<Self, RegressError> {
        let mut pairs = Vec::new();
        for part in text.split(',').filter(|p| !p.trim().is_empty()) {
            let (name, w) = part
                .split_once('=')
                .ok_or_else(|| RegressError::UnknownFeature(part.to_string()))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| RegressError::UnknownFeature(part.to_string()))?;
            pairs.push((name.parse::<Feature>()?, w));
        }
        let features = FeatureSet::new(pairs.iter().map(|p| p.0))?;
        let weights = features
            .features()
            .iter()
            .map(|f| pairs.iter().find(|p| p.0 == *f).map(|p| p.1).unwrap_or(0.0))
            .collect();
        SpreadModel::with_weights(features, weights)
    }

    pub fn weight(&self, f: Feature) -> Option<f64> {
        self.features
            .features()
            .iter()
            .position(|&x| x == f)
            .map(|i| self.weights[i])
    }

    pub fn predict_values(&self, values: &FeatureValues) -> Result<f64, RegressError> {
        let logs = values
            .logs(&self.features)
            .map_err(RegressError::ZeroFeature)?;
        Ok(self.log_predict(&logs).exp())
    }

    fn log_predict(&self, logs: &[f64]) -> f64 {
        let dot: f64 = logs.iter().zip(&self.weights).map(|(x, w)| x * w).sum();
        dot + self.intercept.unwrap_or(0.0)
    }
}

/// `beta = exp(sum_j w_j ln x_j)` for a user observed `elapsed_seconds`
/// after the original tweet.
pub fn predict(
    model: &SpreadModel,
    record: &CascadeRecord,
    elapsed_seconds: i64,
) -> Result<f64, RegressError> {
    model.predict_values(&FeatureValues::of(record, elapsed_seconds))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FitOptions {
    /// Adds a free constant term. Off by default; the law has none.
    pub intercept: bool,
}

/// Solves `min ||X w - y||` by Householder QR. `cols` is the design matrix
/// in column-major order. Columns that are constant or numerically
/// dependent are rejected.
pub fn least_squares(mut cols: Vec<Vec<f64>>, mut y: Vec<f64>) -> Result<Vec<f64>, RegressError> {
    let p = cols.len();
    let n = y.len();
    if n < p || p == 0 {
        return Err(RegressError::Underdetermined {
            samples: n,
            unknowns: p,
        });
    }
    let scale = cols
        .iter()
        .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(RegressError::Degenerate);
    }
    let tol = 1e-10 * scale * (n as f64).sqrt();

    let mut diag = vec![0.0; p];
    for k in 0..p {
        let norm = cols[k][k..].iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm <= tol {
            return Err(RegressError::Degenerate);
        }
        let alpha = if cols[k][k] > 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = cols[k][k..].to_vec();
        v[0] -= alpha;
        let vv: f64 = v.iter().map(|x| x * x).sum();
        let reflect = |target: &mut [f64]| {
            let s = 2.0 * v.iter().zip(target.iter()).map(|(a, b)| a * b).sum::<f64>() / vv;
            target.iter_mut().zip(&v).for_each(|(t, vi)| *t -= s * vi);
        };
        for col in cols.iter_mut().skip(k + 1) {
            reflect(&mut col[k..]);
        }
        reflect(&mut y[k..]);
        diag[k] = alpha;
    }

    let mut w = vec![0.0; p];
    for k in (0..p).rev() {
        let mut acc = y[k];
        for (j, wj) in w.iter().enumerate().skip(k + 1) {
            acc -= cols[j][k] * wj;
        }
        w[k] = acc / diag[k];
    }
    Ok(w)
}

fn is_constant(col: &[f64]) -> bool {
    col.windows(2).all(|w| w[0] == w[1])
}

/// Design columns and log targets for the usable samples, plus the number
/// dropped for zero-valued features or non-positive rates.
fn log_design(
    samples: &[BetaSample],
    features: &FeatureSet,
) -> (Vec<Vec<f64>>, Vec<f64>, Vec<usize>, usize) {
    let mut cols = vec![Vec::with_capacity(samples.len()); features.len()];
    let mut y = Vec::with_capacity(samples.len());
    let mut used = Vec::with_capacity(samples.len());
    let mut dropped = 0;
    for (i, s) in samples.iter().enumerate() {
        match s.values.logs(features) {
            Ok(logs) if s.beta > 0.0 && s.beta.is_finite() => {
                for (c, l) in cols.iter_mut().zip(logs) {
                    c.push(l);
                }
                y.push(s.beta.ln());
                used.push(i);
            }
            _ => dropped += 1,
        }
    }
    (cols, y, used, dropped)
}

/// Outcome of [`fit`] with the training-side diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub model: SpreadModel,
    pub n_dropped: usize,
    /// R² of the fit in log space on the training samples.
    pub r2_log: Option<f64>,
}

/// Ordinary least squares of `ln beta` on the logs of the selected features.
pub fn fit(
    samples: &[BetaSample],
    features: &FeatureSet,
    options: FitOptions,
    trained_on: &str,
) -> Result<FitOutcome, RegressError> {
    let (mut cols, y, used, n_dropped) = log_design(samples, features);
    let unknowns = features.len() + usize::from(options.intercept);
    if y.len() < unknowns {
        return Err(RegressError::Underdetermined {
            samples: y.len(),
            unknowns,
        });
    }
    if y.len() > 1 && cols.iter().any(|c| is_constant(c)) {
        return Err(RegressError::Degenerate);
    }
    if options.intercept {
        cols.push(vec![1.0; y.len()]);
    }
    let mut weights = least_squares(cols.clone(), y.clone())?;
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(RegressError::Degenerate);
    }
    let intercept = options
        .intercept
        .then(|| weights.pop().expect("intercept column"));
    let model = SpreadModel {
        features: features.clone(),
        weights,
        intercept,
        trained_on: trained_on.to_string(),
        fitted_at: None,
        n_train: used.len(),
    };
    let fitted: Vec<f64> = (0..y.len())
        .map(|i| {
            let logs: Vec<f64> = cols[..features.len()].iter().map(|c| c[i]).collect();
            model.log_predict(&logs)
        })
        .collect();
    Ok(FitOutcome {
        r2_log: r_squared(&fitted, &y),
        model,
        n_dropped,
    })
}

/// `1 - SS_res / SS_tot` with `SS_tot` about the mean of `truth`; `None`
/// when the targets have no variance.
pub fn r_squared(predicted: &[f64], truth: &[f64]) -> Option<f64> {
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    let ss_tot: f64 = truth.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = predicted
        .iter()
        .zip(truth)
        .map(|(p, y)| (p - y).powi(2))
        .sum();
    (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot)
}

/// Linear-space error scores for paired predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scores {
    pub r2: Option<f64>,
    pub mae: f64,
    pub mse: f64,
}

pub fn score_predictions(predicted: &[f64], truth: &[f64]) -> Result<Scores, RegressError> {
    assert_eq!(predicted.len(), truth.len(), "paired slices");
    if truth.is_empty() {
        return Err(RegressError::NoTestSamples);
    }
    let n = truth.len() as f64;
    let mae = predicted
        .iter()
        .zip(truth)
        .map(|(p, y)| (p - y).abs())
        .sum::<f64>()
        / n;
    let mse = predicted
        .iter()
        .zip(truth)
        .map(|(p, y)| (p - y).powi(2))
        .sum::<f64>()
        / n;
    Ok(Scores {
        r2: r_squared(predicted, truth),
        mae,
        mse,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    /// Linear space; `None` when the test targets are constant.
    pub r2: Option<f64>,
    pub r2_log: Option<f64>,
    pub mae: f64,
    pub mse: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_dropped: usize,
    pub drops: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub user_id: String,
    pub measured: f64,
    pub predicted: f64,
}

/// Predictions for every test sample the model can score, plus the number
/// skipped for zero-valued features.
pub fn predictions(model: &SpreadModel, test: &[BetaSample]) -> (Vec<Prediction>, usize) {
    let mut out = Vec::with_capacity(test.len());
    let mut skipped = 0;
    for s in test {
        match model.predict_values(&s.values) {
            Ok(p) => out.push(Prediction {
                user_id: s.user_id.clone(),
                measured: s.beta,
                predicted: p,
            }),
            Err(_) => skipped += 1,
        }
    }
    (out, skipped)
}

pub fn evaluate(model: &SpreadModel, test: &[BetaSample]) -> Result<FitReport, RegressError> {
    let (preds, skipped) = predictions(model, test);
    if preds.is_empty() {
        return Err(RegressError::NoTestSamples);
    }
    let predicted: Vec<f64> = preds.iter().map(|p| p.predicted).collect();
    let truth: Vec<f64> = preds.iter().map(|p| p.measured).collect();
    let scores = score_predictions(&predicted, &truth)?;
    let log_pred: Vec<f64> = predicted.iter().map(|p| p.ln()).collect();
    let log_truth: Vec<f64> = truth.iter().map(|y| y.ln()).collect();
    let mut drops = BTreeMap::new();
    if skipped > 0 {
        drops.insert(DROP_ZERO_FEATURE.to_string(), skipped);
    }
    Ok(FitReport {
        r2: scores.r2,
        r2_log: r_squared(&log_pred, &log_truth),
        mae: scores.mae,
        mse: scores.mse,
        n_train: model.n_train,
        n_test: preds.len(),
        n_dropped: skipped,
        drops,
    })
}

/// Rates measured on one reconstructed cascade.
#[derive(Debug, Clone)]
pub struct MeasuredCascade {
    pub name: String,
    pub latest_event: i64,
    pub measurement: BetaMeasurement,
}

pub fn measure_dataset(
    dataset: &CascadeDataset,
    rule: AttachmentRule,
) -> Result<MeasuredCascade, RegressError> {
    let (tree, _) = build_rdn(dataset, rule)?;
    Ok(MeasuredCascade {
        name: dataset.name().to_string(),
        latest_event: dataset
            .records()
            .iter()
            .map(|r| r.event_time)
            .max()
            .unwrap_or(0),
        measurement: measure_beta(&tree),
    })
}

/// One row of a sweep table: metrics averaged over (train, test) cells.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub label: String,
    pub r2: Option<f64>,
    pub r2_log: Option<f64>,
    pub mae: Option<f64>,
    pub mse: Option<f64>,
    pub n_train: usize,
    pub n_test: usize,
    pub n_dropped: usize,
    pub cells: usize,
    pub failures: Vec<String>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn summarize(label: String, cells: Vec<Result<FitReport, String>>) -> SweepRow {
    let ok: Vec<&FitReport> = cells.iter().filter_map(|c| c.as_ref().ok()).collect();
    SweepRow {
        label,
        r2: mean_of(ok.iter().map(|r| r.r2)),
        r2_log: mean_of(ok.iter().map(|r| r.r2_log)),
        mae: mean_of(ok.iter().map(|r| Some(r.mae))),
        mse: mean_of(ok.iter().map(|r| Some(r.mse))),
        n_train: ok.iter().map(|r| r.n_train).sum(),
        n_test: ok.iter().map(|r| r.n_test).sum(),
        n_dropped: ok.iter().map(|r| r.n_dropped).sum(),
        cells: ok.len(),
        failures: cells.into_iter().filter_map(Result::err).collect(),
    }
}

fn cell(
    train: &MeasuredCascade,
    test: &MeasuredCascade,
    features: &FeatureSet,
) -> Result<FitReport, String> {
    let outcome = fit(
        &train.measurement.samples,
        features,
        FitOptions::default(),
        &train.name,
    )
    .map_err(|e| format!("{} -> {}: {e}", train.name, test.name))?;
    let mut report = evaluate(&outcome.model, &test.measurement.samples)
        .map_err(|e| format!("{} -> {}: {e}", train.name, test.name))?;
    report.n_dropped += outcome.n_dropped;
    Ok(report)
}

/// Every ordered (train, test) pair of distinct cascades.
fn cross_cells(
    measured: &[MeasuredCascade],
    features: &FeatureSet,
) -> Vec<Result<FitReport, String>> {
    let pairs: Vec<(usize, usize)> = (0..measured.len())
        .flat_map(|i| {
            (0..measured.len())
                .filter(move |&j| j != i)
                .map(move |j| (i, j))
        })
        .collect();
    pairs
        .par_iter()
        .map(|&(i, j)| cell(&measured[i], &measured[j], features))
        .collect()
}

fn measure_all(
    datasets: &[CascadeDataset],
    rule: AttachmentRule,
) -> Vec<Result<MeasuredCascade, String>> {
    datasets
        .par_iter()
        .map(|d| measure_dataset(d, rule).map_err(|e| format!("{}: {e}", d.name())))
        .collect()
}

/// Table of rules: for each rule, rebuild every cascade, then average the
/// metrics of every train-on-one/test-on-another pair.
pub fn sweep_rules(
    datasets: &[CascadeDataset],
    rules: &[AttachmentRule],
    features: &FeatureSet,
) -> Result<Vec<SweepRow>, RegressError> {
    if datasets.len() < 2 {
        return Err(RegressError::TooFewDatasets(datasets.len()));
    }
    Ok(rules
        .par_iter()
        .map(|&rule| {
            let (measured, failed): (Vec<_>, Vec<_>) = measure_all(datasets, rule)
                .into_iter()
                .partition(Result::is_ok);
            let measured: Vec<MeasuredCascade> = measured.into_iter().map(Result::unwrap).collect();
            let mut cells = cross_cells(&measured, features);
            cells.extend(failed.into_iter().map(|f| Err(f.unwrap_err())));
            summarize(rule.to_string(), cells)
        })
        .collect())
}

/// Table of training sets: one row per cascade used for training, tested
/// on all the others.
pub fn sweep_training(
    datasets: &[CascadeDataset],
    rule: AttachmentRule,
    features: &FeatureSet,
) -> Result<Vec<SweepRow>, RegressError> {
    if datasets.len() < 2 {
        return Err(RegressError::TooFewDatasets(datasets.len()));
    }
    let measured = measure_all(datasets, rule);
    Ok((0..datasets.len())
        .into_par_iter()
        .map(|i| {
            let label = datasets[i].name().to_string();
            let train = match &measured[i] {
                Ok(m) => m,
                Err(e) => return summarize(label, vec![Err(e.clone())]),
            };
            let cells = measured
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, test)| match test {
                    Ok(test) => cell(train, test, features),
                    Err(e) => Err(e.clone()),
                })
                .collect();
            summarize(label, cells)
        })
        .collect())
}

/// Table of feature subsets: all 15 subsets fitted on `train` and averaged
/// over `tests`.
pub fn sweep_features(
    train: &CascadeDataset,
    tests: &[CascadeDataset],
    rule: AttachmentRule,
) -> Result<Vec<SweepRow>, RegressError> {
    let train = measure_dataset(train, rule)?;
    let tests = measure_all(tests, rule);
    Ok(FeatureSet::all_subsets()
        .par_iter()
        .map(|fs| {
            let cells = tests
                .iter()
                .map(|t| match t {
                    Ok(t) => cell(&train, t, fs),
                    Err(e) => Err(e.clone()),
                })
                .collect();
            summarize(fs.to_string(), cells)
        })
        .collect())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// CSV with header `label,r2,mae,mse,n_train,n_test,n_dropped`; undefined
/// metrics are left empty.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "label",
        "r2",
        "mae",
        "mse",
        "n_train",
        "n_test",
        "n_dropped",
    ])?;
    for r in rows {
        w.write_record([
            r.label.clone(),
            fmt_opt(r.r2),
            fmt_opt(r.mae),
            fmt_opt(r.mse),
            r.n_train.to_string(),
            r.n_test.to_string(),
            r.n_dropped.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
