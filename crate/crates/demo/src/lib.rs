//! Browser bindings: balance a toy dataset, inspect the worst-case accuracy
//! deviation its weights allow, and test two toy models for a bias difference.
//!
//! Every entry point takes and returns JSON strings so the page stays plain
//! JavaScript. The `*_json` functions are ordinary Rust and carry the tests.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use reweigh::balancer::{compute_weights, BalanceConfig};
use reweigh::data::{Candidate, Dataset, Example, Group, PredictionSet, PropertySet, Verdict};
use reweigh::oracle::sorted_prefix_noise;
use reweigh::significance::{exact_p_value, randomization_test, BiasMetric, EXACT_LIMIT};

#[derive(Debug, Clone, Deserialize)]
pub struct ToyExample {
    pub id: String,
    pub group: Group,
    /// Number of personal names in the text.
    pub names: usize,
    /// Position of the correct name among names sorted by distance to the pronoun.
    pub rank: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct BalanceRequest {
    pub examples: Vec<ToyExample>,
    #[serde(default = "yes")]
    pub names: bool,
    #[serde(default = "yes")]
    pub distance: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Serialize)]
pub struct BalanceResponse {
    pub weights: BTreeMap<String, f64>,
    pub objective: f64,
    pub classes: usize,
    pub group_sums: BTreeMap<&'static str, f64>,
    pub property_sets: Vec<String>,
}

fn toy_example(id: &str, group: Group) -> Example {
    let candidate = |coreferent| Candidate {
        name: String::new(),
        offset: 0,
        coreferent,
    };
    Example {
        id: id.to_string(),
        group,
        text: String::new(),
        pronoun: String::new(),
        pronoun_offset: 0,
        candidate_a: candidate(true),
        candidate_b: candidate(false),
        url: String::new(),
        name_spans: Vec::new(),
    }
}

fn toy_dataset(examples: &[ToyExample]) -> Result<Dataset, String> {
    let mut seen = BTreeSet::new();
    for e in examples {
        if !seen.insert(e.id.as_str()) {
            return Err(format!("duplicate id `{}`", e.id));
        }
    }
    Ok(Dataset::new(
        examples.iter().map(|e| toy_example(&e.id, e.group)).collect(),
    ))
}

fn toy_property_sets(req: &BalanceRequest) -> Vec<PropertySet> {
    let mut sets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for e in &req.examples {
        if req.names {
            sets.entry(format!("N_{}", e.names)).or_default().insert(e.id.clone());
        }
        if req.distance {
            sets.entry(format!("D_{}", e.rank)).or_default().insert(e.id.clone());
        }
    }
    sets.into_iter()
        .map(|(label, members)| PropertySet { label, members })
        .collect()
}

pub fn balance_json(request: &str) -> Result<String, String> {
    let req: BalanceRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let ds = toy_dataset(&req.examples)?;
    let sets = toy_property_sets(&req);
    let w = compute_weights(&ds, &sets, &BalanceConfig::default()).map_err(|e| e.to_string())?;
    let response = BalanceResponse {
        weights: w.weight_map(),
        objective: w.objective,
        classes: w.classes,
        group_sums: Group::ALL.iter().map(|&g| (g.name(), w.group_sum(g))).collect(),
        property_sets: sets.into_iter().map(|s| s.label).collect(),
    };
    serde_json::to_string(&response).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Deserialize)]
pub struct NoiseRequest {
    pub examples: Vec<ToyExample>,
    pub weights: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupNoise {
    pub group: &'static str,
    /// Largest `|weighted − unweighted|` accuracy over all correct sets.
    pub deviation: f64,
    /// A correct set reaching it.
    pub witness: Vec<String>,
}

pub fn noise_json(request: &str) -> Result<String, String> {
    let req: NoiseRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let n: f64 = req.weights.values().sum();
    let mut out = Vec::new();
    for g in Group::ALL {
        let members: Vec<(String, f64)> = req
            .examples
            .iter()
            .filter(|e| e.group == g)
            .map(|e| {
                req.weights
                    .get(&e.id)
                    .map(|&w| (e.id.clone(), w))
                    .ok_or_else(|| format!("no weight for `{}`", e.id))
            })
            .collect::<Result<_, _>>()?;
        let bound = sorted_prefix_noise(g, &members, n).map_err(|e| e.to_string())?;
        out.push(GroupNoise {
            group: g.name(),
            deviation: bound.deviation,
            witness: bound.witness,
        });
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, Deserialize)]
pub struct SignificanceRequest {
    pub examples: Vec<ToyExample>,
    /// Ids each model resolves correctly.
    pub first: BTreeSet<String>,
    pub second: BTreeSet<String>,
    #[serde(default)]
    pub weights: Option<BTreeMap<String, f64>>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_iterations() -> usize {
    2000
}

#[derive(Debug, Clone, Serialize)]
pub struct SignificanceResponse {
    pub observed: f64,
    pub p_value: f64,
    /// Present when few enough examples disagree to enumerate every swap.
    pub exact_p_value: Option<f64>,
}

fn model(ds: &Dataset, correct: &BTreeSet<String>) -> PredictionSet {
    let mut p = PredictionSet::default();
    for e in &ds.examples {
        let hit = correct.contains(&e.id);
        p.insert(e.id.clone(), Verdict { a: hit, b: !hit });
    }
    p
}

pub fn significance_json(request: &str) -> Result<String, String> {
    let req: SignificanceRequest = serde_json::from_str(request).map_err(|e| e.to_string())?;
    let ds = toy_dataset(&req.examples)?;
    let (p1, p2) = (model(&ds, &req.first), model(&ds, &req.second));
    let metric = if req.weights.is_some() { BiasMetric::WBias } else { BiasMetric::AccBias };
    let w = req.weights.as_ref();
    let mc = randomization_test(&p1, &p2, &ds, w, metric, req.iterations, req.seed)
        .map_err(|e| e.to_string())?;
    let disagreeing = req.first.symmetric_difference(&req.second).count();
    let exact = if disagreeing <= EXACT_LIMIT {
        Some(exact_p_value(&p1, &p2, &ds, w, metric).map_err(|e| e.to_string())?)
    } else {
        None
    };
    serde_json::to_string(&SignificanceResponse {
        observed: mc.observed,
        p_value: mc.p_value,
        exact_p_value: exact,
    })
    .map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn balance(request: &str) -> Result<String, JsValue> {
    balance_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn noise_bounds(request: &str) -> Result<String, JsValue> {
    noise_json(request).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn significance(request: &str) -> Result<String, JsValue> {
    significance_json(request).map_err(|e| JsValue::from_str(&e))
}
