//! Paired approximate randomization test on the difference of two models'
//! bias scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Group, PredictionSet};
use crate::metrics::WeightMap;

pub const DEFAULT_ITERATIONS: usize = 10_000;
/// Largest number of disagreeing examples the exact test enumerates.
pub const EXACT_LIMIT: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasMetric {
    /// Unweighted accuracy ratio.
    AccBias,
    /// Weighted accuracy ratio under full balancing weights.
    WBias,
    /// Weighted accuracy ratio under weights computed on the trimmed set.
    WtBias,
}

impl BiasMetric {
    pub fn needs_weights(self) -> bool {
        self != BiasMetric::AccBias
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SignificanceError {
    #[error("{0:?} requires a weight file")]
    MissingWeights(BiasMetric),
    #[error("predictions `{0}` do not cover positive example `{1}`")]
    Uncovered(usize, String),
    #[error("weights reference unknown or non-positive example `{0}`")]
    BadWeightId(String),
    #[error("metric undefined on the unpermuted predictions (masculine score zero)")]
    UndefinedObserved,
    #[error("iterations must be at least 1")]
    ZeroIterations,
    #[error("{0} disagreeing examples exceed the exact-enumeration limit of {EXACT_LIMIT}")]
    TooLargeForExact(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceResult {
    pub metric: BiasMetric,
    /// `|metric(preds_1) − metric(preds_2)|`.
    pub observed: f64,
    pub p_value: f64,
    pub iterations: usize,
    pub seed: u64,
    /// Iterations whose permuted metric was undefined (counted as extreme).
    pub undefined: usize,
    /// Iterations whose permuted difference reached the observed one.
    pub at_least_observed: usize,
}

/// One scored example: weight, group and whether each model got it right.
#[derive(Debug, Clone, Copy)]
struct Item {
    weight: f64,
    feminine: bool,
    correct: [bool; 2],
}

/// Sufficient statistics: per group, total mass and each model's correct mass.
struct Paired {
    items: Vec<Item>,
}

impl Paired {
    fn new(
        preds: [&PredictionSet; 2],
        dataset: &Dataset,
        weights: Option<&WeightMap>,
    ) -> Result<Self, SignificanceError> {
        let mut items = Vec::new();
        if let Some(w) = weights {
            let index = dataset.index();
            for id in w.keys() {
                if !index.get(id.as_str()).is_some_and(|e| e.has_positive()) {
                    return Err(SignificanceError::BadWeightId(id.clone()));
                }
            }
        }
        for e in &dataset.examples {
            let Some((slot, _)) = e.coreferent() else {
                continue;
            };
            let weight = match weights {
                Some(w) => match w.get(&e.id) {
                    Some(&v) => v,
                    None => continue,
                },
                None => 1.0,
            };
            let mut correct = [false; 2];
            for (k, p) in preds.iter().enumerate() {
                let v = p
                    .get(&e.id)
                    .ok_or_else(|| SignificanceError::Uncovered(k + 1, e.id.clone()))?;
                correct[k] = v.get(slot);
            }
            items.push(Item {
                weight,
                feminine: e.group == Group::Feminine,
                correct,
            });
        }
        Ok(Self { items })
    }

    /// Metric of both (possibly swapped) models; `swap(i)` exchanges item `i`.
    fn scores(&self, mut swap: impl FnMut(usize) -> bool) -> [Option<f64>; 2] {
        let mut mass = [0.0; 2];
        let mut hit = [[0.0; 2]; 2];
        for (i, it) in self.items.iter().enumerate() {
            let g = it.feminine as usize;
            mass[g] += it.weight;
            let (c0, c1) = if swap(i) {
                (it.correct[1], it.correct[0])
            } else {
                (it.correct[0], it.correct[1])
            };
            if c0 {
                hit[0][g] += it.weight;
            }
            if c1 {
                hit[1][g] += it.weight;
            }
        }
        hit.map(|h| {
            if mass[0] <= 0.0 || mass[1] <= 0.0 {
                return None;
            }
            let (m, f) = (h[0] / mass[0], h[1] / mass[1]);
            (m > 0.0).then(|| f / m)
        })
    }

    fn difference(&self, swap: impl FnMut(usize) -> bool) -> Option<f64> {
        match self.scores(swap) {
            [Some(a), Some(b)] => Some((a - b).abs()),
            _ => None,
        }
    }
}

/// Permuted differences within this distance of the observed one count as ties.
fn reaches(permuted: f64, observed: f64) -> bool {
    permuted >= observed - 1e-12 * observed.max(1.0)
}

fn checked_weights(
    metric: BiasMetric,
    weights: Option<&WeightMap>,
) -> Result<Option<&WeightMap>, SignificanceError> {
    match (metric.needs_weights(), weights) {
        (true, None) => Err(SignificanceError::MissingWeights(metric)),
        (true, w) => Ok(w),
        (false, _) => Ok(None),
    }
}

/// Monte-Carlo randomization test with add-one smoothing.
///
/// Each iteration swaps every example's verdict pair between the two models
/// with probability ½, drawing from ChaCha8 stream `iteration` under `seed`.
pub fn randomization_test(
    preds_1: &PredictionSet,
    preds_2: &PredictionSet,
    dataset: &Dataset,
    weights: Option<&WeightMap>,
    metric: BiasMetric,
    iterations: usize,
    seed: u64,
) -> Result<SignificanceResult, SignificanceError> {
    if iterations == 0 {
        return Err(SignificanceError::ZeroIterations);
    }
    let paired = Paired::new([preds_1, preds_2], dataset, checked_weights(metric, weights)?)?;
    let observed = paired
        .difference(|_| false)
        .ok_or(SignificanceError::UndefinedObserved)?;
    let mut undefined = 0;
    let mut extreme = 0;
    let mut flips = vec![false; paired.items.len()];
    for it in 0..iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(it as u64);
        for f in flips.iter_mut() {
            *f = rng.gen_bool(0.5);
        }
        match paired.difference(|i| flips[i]) {
            Some(d) if reaches(d, observed) => extreme += 1,
            Some(_) => {}
            None => {
                undefined += 1;
                extreme += 1;
            }
        }
    }
    Ok(SignificanceResult {
        metric,
        observed,
        p_value: (1 + extreme) as f64 / (1 + iterations) as f64,
        iterations,
        seed,
        undefined,
        at_least_observed: extreme,
    })
}

/// Fraction of all swap patterns whose difference reaches the observed one.
///
/// Examples where both models agree do not change the statistic when
/// swapped, so only the disagreeing ones are enumerated.
pub fn exact_p_value(
    preds_1: &PredictionSet,
    preds_2: &PredictionSet,
    dataset: &Dataset,
    weights: Option<&WeightMap>,
    metric: BiasMetric,
) -> Result<f64, SignificanceError> {
    let paired = Paired::new([preds_1, preds_2], dataset, checked_weights(metric, weights)?)?;
    let observed = paired
        .difference(|_| false)
        .ok_or(SignificanceError::UndefinedObserved)?;
    let differing: Vec<usize> = (0..paired.items.len())
        .filter(|&i| paired.items[i].correct[0] != paired.items[i].correct[1])
        .collect();
    if differing.len() > EXACT_LIMIT {
        return Err(SignificanceError::TooLargeForExact(differing.len()));
    }
    let mut position = vec![usize::MAX; paired.items.len()];
    for (bit, &i) in differing.iter().enumerate() {
        position[i] = bit;
    }
    let patterns = 1u64 << differing.len();
    let mut extreme = 0u64;
    for mask in 0..patterns {
        let d = paired.difference(|i| position[i] != usize::MAX && mask >> position[i] & 1 == 1);
        if d.is_none_or(|d| reaches(d, observed)) {
            extreme += 1;
        }
    }
    Ok(extreme as f64 / patterns as f64)
}
