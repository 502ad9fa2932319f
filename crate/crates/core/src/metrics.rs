//! Plain and weighted accuracy, F1 and feminine/masculine bias ratios.
//!
//! Accuracy metrics look only at positive examples and only at the model's
//! verdict on the coreferent candidate. F1 scores both candidates of every
//! example, positive or not.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Group, PredictionSet};

/// Tolerance on `|Σ_G w − n/2|`, relative to `max(1, n/2)`.
pub const WEIGHT_SUM_TOL: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("group {0} has no examples to score")]
    EmptyGroup(Group),
    #[error("masculine score is zero; bias ratio undefined")]
    ZeroMasculine,
    #[error("weights reference unknown example `{0}`")]
    UnknownWeightId(String),
    #[error("weight file covers example `{0}` which has no coreferent candidate")]
    NonPositiveWeightId(String),
    #[error("{group} weights sum to {sum}, expected {expected} (stale weight file?)")]
    WeightSum { group: Group, sum: f64, expected: f64 },
}

/// Per-example credit in `[0, 1]` for positive examples.
///
/// Deterministic predictions give credit 0 or 1; an expected-value
/// evaluation (such as the closed-form random baseline) uses fractions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrectSet {
    pub credit: BTreeMap<String, f64>,
    /// Positive examples with no prediction (scored as incorrect).
    pub missing: Vec<String>,
}

impl CorrectSet {
    pub fn credit(&self, id: &str) -> f64 {
        self.credit.get(id).copied().unwrap_or(0.0)
    }

    pub fn ids(&self) -> BTreeSet<&str> {
        self.credit
            .iter()
            .filter(|(_, &c)| c > 0.0)
            .map(|(id, _)| id.as_str())
            .collect()
    }
}

/// Positive examples whose coreferent candidate received a TRUE verdict.
pub fn correct_set(predictions: &PredictionSet, dataset: &Dataset) -> CorrectSet {
    let mut out = CorrectSet::default();
    for e in &dataset.examples {
        let Some((slot, _)) = e.coreferent() else {
            continue;
        };
        match predictions.get(&e.id) {
            Some(v) if v.get(slot) => {
                out.credit.insert(e.id.clone(), 1.0);
            }
            Some(_) => {}
            None => out.missing.push(e.id.clone()),
        }
    }
    out
}

/// `|C ∩ G| / |G|` over positive examples; `None` scores the whole dataset.
pub fn accuracy(c: &CorrectSet, dataset: &Dataset, group: Option<Group>) -> Result<f64, MetricError> {
    let mut total = 0usize;
    let mut hit = 0.0;
    for e in &dataset.examples {
        if !e.has_positive() || group.is_some_and(|g| e.group != g) {
            continue;
        }
        total += 1;
        hit += c.credit(&e.id);
    }
    if total == 0 {
        return Err(MetricError::EmptyGroup(group.unwrap_or(Group::Masculine)));
    }
    Ok(hit / total as f64)
}

/// Weights keyed by example id, as read from a weight file.
pub type WeightMap = BTreeMap<String, f64>;

/// `(2/n) Σ_{C ∩ G} w` where `n` is the total weight mass and `G` the
/// weighted examples of `group`. Examples absent from `weights` do not count.
pub fn weighted_accuracy(
    c: &CorrectSet,
    dataset: &Dataset,
    group: Group,
    weights: &WeightMap,
) -> Result<f64, MetricError> {
    let index = dataset.index();
    let mut n = 0.0;
    let mut group_sum = 0.0;
    let mut group_members = 0usize;
    let mut hit = 0.0;
    for (id, &w) in weights {
        let e = index
            .get(id.as_str())
            .ok_or_else(|| MetricError::UnknownWeightId(id.clone()))?;
        if !e.has_positive() {
            return Err(MetricError::NonPositiveWeightId(id.clone()));
        }
        n += w;
        if e.group == group {
            group_sum += w;
            group_members += 1;
            hit += w * c.credit(id);
        }
    }
    if group_members == 0 {
        return Err(MetricError::EmptyGroup(group));
    }
    let expected = n / 2.0;
    if (group_sum - expected).abs() > WEIGHT_SUM_TOL * expected.max(1.0) {
        return Err(MetricError::WeightSum {
            group,
            sum: group_sum,
            expected,
        });
    }
    Ok(2.0 * hit / n)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct F1Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl F1Counts {
    /// F1, or `None` when there are no positives on either side.
    pub fn score(&self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        (denom > 0).then(|| 2.0 * self.tp as f64 / denom as f64)
    }

    pub fn add(&mut self, gold: bool, predicted: bool) {
        match (gold, predicted) {
            (true, true) => self.tp += 1,
            (false, true) => self.fp += 1,
            (true, false) => self.fn_ += 1,
            (false, false) => {}
        }
    }
}

/// Micro-averaged counts over both candidates of every example in `group`.
/// Missing predictions count as FALSE on both candidates.
pub fn f1_counts(predictions: &PredictionSet, dataset: &Dataset, group: Option<Group>) -> F1Counts {
    let mut counts = F1Counts::default();
    for e in &dataset.examples {
        if group.is_some_and(|g| e.group != g) {
            continue;
        }
        let v = predictions.get(&e.id).unwrap_or_default();
        counts.add(e.candidate_a.coreferent, v.a);
        counts.add(e.candidate_b.coreferent, v.b);
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Score {
    pub value: f64,
    pub counts: F1Counts,
    /// No true or predicted positives: value forced to 0.0.
    pub degenerate: bool,
}

pub fn f1_score(predictions: &PredictionSet, dataset: &Dataset, group: Option<Group>) -> F1Score {
    let counts = f1_counts(predictions, dataset, group);
    F1Score {
        value: counts.score().unwrap_or(0.0),
        counts,
        degenerate: counts.score().is_none(),
    }
}

pub fn bias_ratio(feminine: f64, masculine: f64) -> Result<f64, MetricError> {
    if masculine <= 0.0 {
        return Err(MetricError::ZeroMasculine);
    }
    Ok(feminine / masculine)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    F1,
    Accuracy,
    WeightedAccuracy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub metric: MetricKind,
    /// Weight-set label, or `None` for unweighted metrics.
    pub weights: Option<String>,
    pub masculine: f64,
    pub feminine: f64,
    /// `feminine / masculine`, absent when the masculine score is zero.
    pub ratio: Option<f64>,
}

impl BiasReport {
    pub fn new(metric: MetricKind, weights: Option<String>, masculine: f64, feminine: f64) -> Self {
        Self {
            metric,
            weights,
            masculine,
            feminine,
            ratio: bias_ratio(feminine, masculine).ok(),
        }
    }
}

/// Overall, masculine and feminine values of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupValues {
    pub overall: f64,
    pub masculine: f64,
    pub feminine: f64,
}

impl GroupValues {
    pub fn get(&self, group: Group) -> f64 {
        match group {
            Group::Masculine => self.masculine,
            Group::Feminine => self.feminine,
        }
    }
}

/// One row of an evaluation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemEvaluation {
    pub system: String,
    pub f1: f64,
    pub accuracy: f64,
    pub f1_bias: BiasReport,
    pub acc_bias: BiasReport,
    pub weighted: Vec<BiasReport>,
    pub missing_predictions: usize,
}

/// Labelled weight set supplied for weighted-bias columns.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub label: String,
    pub weights: WeightMap,
}

/// Builds a table row from precomputed F1 values and per-example credit.
pub fn evaluate_credit(
    system: &str,
    f1: GroupValues,
    credit: &CorrectSet,
    dataset: &Dataset,
    weight_sets: &[WeightSet],
) -> Result<SystemEvaluation, MetricError> {
    let acc = |g| accuracy(credit, dataset, g);
    let (overall, masc, fem) = (acc(None)?, acc(Some(Group::Masculine))?, acc(Some(Group::Feminine))?);
    let weighted = weight_sets
        .iter()
        .map(|ws| {
            let m = weighted_accuracy(credit, dataset, Group::Masculine, &ws.weights)?;
            let f = weighted_accuracy(credit, dataset, Group::Feminine, &ws.weights)?;
            Ok(BiasReport::new(
                MetricKind::WeightedAccuracy,
                Some(ws.label.clone()),
                m,
                f,
            ))
        })
        .collect::<Result<Vec<_>, MetricError>>()?;
    Ok(SystemEvaluation {
        system: system.to_string(),
        f1: f1.overall,
        accuracy: overall,
        f1_bias: BiasReport::new(MetricKind::F1, None, f1.masculine, f1.feminine),
        acc_bias: BiasReport::new(MetricKind::Accuracy, None, masc, fem),
        weighted,
        missing_predictions: credit.missing.len(),
    })
}

pub fn evaluate_predictions(
    system: &str,
    predictions: &PredictionSet,
    dataset: &Dataset,
    weight_sets: &[WeightSet],
) -> Result<SystemEvaluation, MetricError> {
    let f1 = |g| f1_score(predictions, dataset, g).value;
    let values = GroupValues {
        overall: f1(None),
        masculine: f1(Some(Group::Masculine)),
        feminine: f1(Some(Group::Feminine)),
    };
    evaluate_credit(
        system,
        values,
        &correct_set(predictions, dataset),
        dataset,
        weight_sets,
    )
}

/// Gold verdicts: TRUE exactly on coreferent candidates.
pub fn perfect_predictions(dataset: &Dataset) -> PredictionSet {
    let mut p = PredictionSet::default();
    for e in &dataset.examples {
        p.insert(
            e.id.clone(),
            crate::data::Verdict {
                a: e.candidate_a.coreferent,
                b: e.candidate_b.coreferent,
            },
        );
    }
    p
}
