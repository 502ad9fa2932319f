//! Reference systems that ignore gender: uniform random choice among the
//! annotated names, and picking the k-th closest name to the pronoun.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Dataset, Example, Group, PredictionSet, Verdict};
use crate::metrics::{CorrectSet, F1Counts, GroupValues};

pub const DEFAULT_REPETITIONS: usize = 10_000;
/// Largest k run without `allow_large_k`; beyond it too few examples remain.
pub const MAX_DEFAULT_K: usize = 3;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BaselineError {
    #[error("k must be at least 1")]
    ZeroK,
    #[error("k = {0} exceeds {MAX_DEFAULT_K}; pass the large-k flag to run it anyway")]
    LargeK(usize),
    #[error("repetitions must be at least 1")]
    ZeroRepetitions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum BaselineSpec {
    Random { repetitions: usize, seed: u64 },
    DistK { k: usize, allow_large_k: bool },
}

impl BaselineSpec {
    pub fn validate(&self) -> Result<(), BaselineError> {
        match *self {
            BaselineSpec::Random { repetitions: 0, .. } => Err(BaselineError::ZeroRepetitions),
            BaselineSpec::DistK { k: 0, .. } => Err(BaselineError::ZeroK),
            BaselineSpec::DistK {
                k,
                allow_large_k: false,
            } if k > MAX_DEFAULT_K => Err(BaselineError::LargeK(k)),
            _ => Ok(()),
        }
    }

    pub fn name(&self) -> String {
        match self {
            BaselineSpec::Random { .. } => "Random".into(),
            BaselineSpec::DistK { k, .. } => format!("Dist-{k}"),
        }
    }
}

/// Verdicts for answering with annotated span `span` (`None`: no answer).
fn answer(e: &Example, span: Option<usize>) -> Verdict {
    match span {
        None => Verdict::default(),
        Some(i) => {
            let s = e.name_spans[i];
            Verdict {
                a: e.span_matches(s, &e.candidate_a),
                b: e.span_matches(s, &e.candidate_b),
            }
        }
    }
}

/// Answers with the k-th closest annotated name; fewer than k names gives no answer.
pub fn dist_k_baseline(dataset: &Dataset, k: usize) -> Result<PredictionSet, BaselineError> {
    if k == 0 {
        return Err(BaselineError::ZeroK);
    }
    let mut out = PredictionSet::default();
    for e in &dataset.examples {
        let span = e.spans_by_distance().get(k - 1).copied();
        out.insert(e.id.clone(), answer(e, span));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub repetitions: usize,
    pub seed: u64,
    /// Accuracy averaged over the repetitions.
    pub monte_carlo: GroupValues,
    /// Standard deviation of per-repetition accuracy.
    pub monte_carlo_std: GroupValues,
    /// Expected accuracy: `1/#names` credit where the correct name is annotated.
    pub exact: GroupValues,
    /// Expected per-example credit, for weighted metrics.
    pub exact_credit: CorrectSet,
    /// F1 averaged over the repetitions.
    pub f1: GroupValues,
    /// Predictions of the first repetition.
    pub sample: PredictionSet,
}

/// Expected credit of a uniform pick among the annotated names.
pub fn random_credit(dataset: &Dataset) -> CorrectSet {
    let mut c = CorrectSet::default();
    for e in dataset.examples.iter().filter(|e| e.has_positive()) {
        if e.correct_span().is_some() {
            c.credit
                .insert(e.id.clone(), 1.0 / e.name_spans.len() as f64);
        }
    }
    c
}

struct Running {
    sum: [f64; 3],
    sum_sq: [f64; 3],
}

impl Running {
    fn push(&mut self, v: [f64; 3]) {
        for k in 0..3 {
            self.sum[k] += v[k];
            self.sum_sq[k] += v[k] * v[k];
        }
    }

    fn mean(&self, reps: usize) -> [f64; 3] {
        self.sum.map(|s| s / reps as f64)
    }

    fn std(&self, reps: usize) -> [f64; 3] {
        let m = self.mean(reps);
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = (self.sum_sq[k] / reps as f64 - m[k] * m[k]).max(0.0).sqrt();
        }
        out
    }
}

fn values(v: [f64; 3]) -> GroupValues {
    GroupValues {
        overall: v[0],
        masculine: v[1],
        feminine: v[2],
    }
}

/// Picks a uniformly random annotated name per example, `repetitions` times.
///
/// Repetition `r` draws from a ChaCha8 stream `r` under `seed`, so results
/// do not depend on evaluation order.
pub fn random_baseline(
    dataset: &Dataset,
    repetitions: usize,
    seed: u64,
) -> Result<RandomBaseline, BaselineError> {
    if repetitions == 0 {
        return Err(BaselineError::ZeroRepetitions);
    }
    let slot = |g: Group| 1 + (g == Group::Feminine) as usize;
    let mut totals = [0usize; 3];
    for e in dataset.examples.iter().filter(|e| e.has_positive()) {
        totals[0] += 1;
        totals[slot(e.group)] += 1;
    }
    let ratio = |hits: [usize; 3]| {
        let mut out = [0.0; 3];
        for k in 0..3 {
            out[k] = if totals[k] == 0 { 0.0 } else { hits[k] as f64 / totals[k] as f64 };
        }
        out
    };

    let mut acc = Running { sum: [0.0; 3], sum_sq: [0.0; 3] };
    let mut f1 = Running { sum: [0.0; 3], sum_sq: [0.0; 3] };
    let mut sample = PredictionSet::default();
    for r in 0..repetitions {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64);
        let mut hits = [0usize; 3];
        let mut counts = [F1Counts::default(); 3];
        for e in &dataset.examples {
            let span = (!e.name_spans.is_empty()).then(|| rng.gen_range(0..e.name_spans.len()));
            let v = answer(e, span);
            for k in [0, slot(e.group)] {
                counts[k].add(e.candidate_a.coreferent, v.a);
                counts[k].add(e.candidate_b.coreferent, v.b);
            }
            if let Some((s, _)) = e.coreferent() {
                if v.get(s) {
                    hits[0] += 1;
                    hits[slot(e.group)] += 1;
                }
            }
            if r == 0 {
                sample.insert(e.id.clone(), v);
            }
        }
        acc.push(ratio(hits));
        f1.push(counts.map(|c| c.score().unwrap_or(0.0)));
    }

    let exact_credit = random_credit(dataset);
    let mut exact = [0.0; 3];
    for e in dataset.examples.iter().filter(|e| e.has_positive()) {
        let c = exact_credit.credit(&e.id);
        exact[0] += c;
        exact[slot(e.group)] += c;
    }
    for k in 0..3 {
        if totals[k] > 0 {
            exact[k] /= totals[k] as f64;
        }
    }
    Ok(RandomBaseline {
        repetitions,
        seed,
        monte_carlo: values(acc.mean(repetitions)),
        monte_carlo_std: values(acc.std(repetitions)),
        exact: values(exact),
        exact_credit,
        f1: values(f1.mean(repetitions)),
        sample,
    })
}
