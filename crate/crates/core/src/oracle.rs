//! Brute-force checks on the relation between weights and the accuracy
//! deviation they can induce on an unknown correct set.
//!
//! For a group `G` with weights `w`, total mass `n` and any `C ⊆ G`, the
//! deviation is `|(2/n) Σ_C w − |C|/|G||`. For fixed `|C| = k` it is
//! extremal when `C` holds the `k` largest or the `k` smallest weights, which
//! makes the worst case computable from the sorted order.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balancer::{compute_weights, BalanceConfig, BalanceError};
use crate::data::{Candidate, Dataset, Example, Group, PropertySet};

/// Largest group the subset enumeration accepts.
pub const BRUTEFORCE_LIMIT: usize = 22;
/// Largest positive-example count the optimality probe accepts.
pub const PROBE_LIMIT: usize = 6;
pub const DEFAULT_GRID_STEP: f64 = 0.05;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("group has {0} members; enumeration is limited to {BRUTEFORCE_LIMIT}, use the sorted-prefix bound")]
    GroupTooLarge(usize),
    #[error("group {0} is empty")]
    EmptyGroup(Group),
    #[error("probe is limited to {PROBE_LIMIT} positive examples, got {0}")]
    ProbeTooLarge(usize),
    #[error("half the total mass is not a multiple of the grid step {0}")]
    OffGrid(f64),
    #[error(transparent)]
    Balance(#[from] BalanceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseBound {
    pub group: Group,
    /// Worst-case `|Acc_W − Acc|` over all subsets of the group.
    pub deviation: f64,
    pub witness: Vec<String>,
    /// `n / (2|G|)`: the weight every member would carry if uniform.
    pub lambda: f64,
}

fn deviation(sum: f64, size: usize, group_len: usize, n: f64) -> f64 {
    (2.0 * sum / n - size as f64 / group_len as f64).abs()
}

/// Enumerates all `2^|G|` subsets.
pub fn max_noise_bruteforce(
    group: Group,
    members: &[(String, f64)],
    n: f64,
) -> Result<NoiseBound, OracleError> {
    let m = members.len();
    if m == 0 {
        return Err(OracleError::EmptyGroup(group));
    }
    if m > BRUTEFORCE_LIMIT {
        return Err(OracleError::GroupTooLarge(m));
    }
    let mut best = (-1.0, 0u32);
    for mask in 0u32..(1 << m) {
        let mut sum = 0.0;
        for (i, (_, w)) in members.iter().enumerate() {
            if mask >> i & 1 == 1 {
                sum += w;
            }
        }
        let d = deviation(sum, mask.count_ones() as usize, m, n);
        if d > best.0 {
            best = (d, mask);
        }
    }
    let witness: Vec<String> = (0..m)
        .filter(|&i| best.1 >> i & 1 == 1)
        .map(|i| members[i].0.clone())
        .collect();
    Ok(NoiseBound {
        group,
        deviation: best.0,
        witness,
        lambda: n / (2.0 * m as f64),
    })
}

fn sorted(members: &[(String, f64)]) -> Vec<&(String, f64)> {
    let mut order: Vec<&(String, f64)> = members.iter().collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    order
}

/// Worst case over the `k` smallest and `k` largest weights, `0 ≤ k ≤ |G|`.
pub fn sorted_prefix_noise(
    group: Group,
    members: &[(String, f64)],
    n: f64,
) -> Result<NoiseBound, OracleError> {
    let m = members.len();
    if m == 0 {
        return Err(OracleError::EmptyGroup(group));
    }
    let order = sorted(members);
    // (deviation, k, from_top)
    let mut best = (deviation(0.0, 0, m, n), 0, false);
    let (mut low, mut high) = (0.0, 0.0);
    for k in 1..=m {
        low += order[k - 1].1;
        high += order[m - k].1;
        for (sum, top) in [(low, false), (high, true)] {
            let d = deviation(sum, k, m, n);
            if d > best.0 {
                best = (d, k, top);
            }
        }
    }
    let (d, k, top) = best;
    let picked = if top { &order[m - k..] } else { &order[..k] };
    Ok(NoiseBound {
        group,
        deviation: d,
        witness: picked.iter().map(|(id, _)| id.clone()).collect(),
        lambda: n / (2.0 * m as f64),
    })
}

/// `Σ_k (k/|G| − (2/n) · sum of the k smallest weights)`.
///
/// When the group mass is `n/2` this equals `(1 − |G|)/2 + (2/n) Σ_{pairs} max`,
/// so ranking weight vectors by it is ranking them by the pairwise-max objective.
pub fn cumulative_noise(weights: &[f64], n: f64) -> f64 {
    let m = weights.len();
    let mut w = weights.to_vec();
    w.sort_by(f64::total_cmp);
    let mut prefix = 0.0;
    let mut total = 0.0;
    for (k, v) in w.iter().enumerate() {
        prefix += v;
        total += (k + 1) as f64 / m as f64 - 2.0 * prefix / n;
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    /// `Σ_i i · w_(i)` with ascending order and 1-based `i`.
    pub rank_weighted: f64,
    /// `Σ_{i<j} max(w_i, w_j)` by direct double loop.
    pub pairwise_max: f64,
    pub total: f64,
    pub residual: f64,
    /// Residual divided by `max(1, rank_weighted)`.
    pub relative: f64,
}

pub fn pairwise_identity_check(weights: &[f64]) -> IdentityCheck {
    let mut s = weights.to_vec();
    s.sort_by(f64::total_cmp);
    let rank_weighted: f64 = s.iter().enumerate().map(|(i, w)| (i + 1) as f64 * w).sum();
    let mut pairwise_max = 0.0;
    for i in 0..weights.len() {
        for j in (i + 1)..weights.len() {
            pairwise_max += weights[i].max(weights[j]);
        }
    }
    let total: f64 = weights.iter().sum();
    let residual = (rank_weighted - pairwise_max - total).abs();
    IdentityCheck {
        rank_weighted,
        pairwise_max,
        total,
        residual,
        relative: residual / rank_weighted.max(1.0),
    }
}

/// Grid-search comparison between the LP solution and every grid-feasible
/// weight vector of a tiny instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub examples: usize,
    pub grid_step: f64,
    /// Feasible weight vectors on the grid.
    pub grid_points: u64,
    /// `None` when the LP is infeasible.
    pub lp_objective: Option<f64>,
    pub grid_min_objective: Option<f64>,
    pub lp_cumulative: Option<f64>,
    pub grid_min_cumulative: Option<f64>,
    /// Largest deviation from the objective/cumulative-bound identity seen on the grid.
    pub identity_residual: f64,
    /// Sum over groups of the worst-case deviation; reported, not asserted.
    pub lp_max_bound: Option<f64>,
    pub grid_min_max_bound: Option<f64>,
}

impl ProbeReport {
    pub fn passed(&self) -> bool {
        let identity = self.identity_residual <= 1e-9;
        match (self.lp_objective, self.grid_min_objective) {
            (Some(lp), Some(grid)) => {
                identity
                    && lp <= grid + 1e-6
                    && self.lp_cumulative.unwrap() <= self.grid_min_cumulative.unwrap() + 1e-6
            }
            (Some(_), None) => identity,
            (None, _) => identity && self.grid_points == 0,
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Best {
    objective: f64,
    cumulative: f64,
    max_bound: f64,
    count: u64,
}

/// Enumerates all splits of `total` grid units over `m` members.
fn compositions(m: usize, total: u32, f: &mut impl FnMut(&[u32])) {
    fn go(buf: &mut Vec<u32>, m: usize, left: u32, f: &mut impl FnMut(&[u32])) {
        if buf.len() + 1 == m {
            buf.push(left);
            f(buf);
            buf.pop();
            return;
        }
        for v in 0..=left {
            buf.push(v);
            go(buf, m, left - v, f);
            buf.pop();
        }
    }
    go(&mut Vec::with_capacity(m), m, total, f);
}

fn pair_max(weights: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..weights.len() {
        for j in (i + 1)..weights.len() {
            s += weights[i].max(weights[j]);
        }
    }
    s
}

/// Compares the LP optimum with a grid search of step `step` over the
/// constraint polytope. The objective separates by group, so each group's
/// grid is enumerated once and matched on its property-mass signature.
pub fn optimality_probe(
    dataset: &Dataset,
    property_sets: &[PropertySet],
    step: f64,
) -> Result<ProbeReport, OracleError> {
    let positive = dataset.positive();
    let total_n = positive.len();
    if total_n > PROBE_LIMIT {
        return Err(OracleError::ProbeTooLarge(total_n));
    }
    let n = total_n as f64;
    let units = n / 2.0 / step;
    if (units - units.round()).abs() > 1e-9 {
        return Err(OracleError::OffGrid(step));
    }
    let units = units.round() as u32;

    let mut per_group: Vec<HashMap<Vec<u32>, Best>> = Vec::new();
    let mut identity_residual: f64 = 0.0;
    let mut members_by_group = Vec::new();
    for g in Group::ALL {
        let members: Vec<(String, f64)> =
            positive.group(g).map(|e| (e.id.clone(), 0.0)).collect();
        if members.is_empty() {
            return Err(OracleError::EmptyGroup(g));
        }
        let m = members.len();
        let in_set: Vec<Vec<bool>> = property_sets
            .iter()
            .map(|s| members.iter().map(|(id, _)| s.members.contains(id)).collect())
            .collect();
        let mut map: HashMap<Vec<u32>, Best> = HashMap::new();
        let mut scratch = members.clone();
        compositions(m, units, &mut |k| {
            let key: Vec<u32> = in_set
                .iter()
                .map(|row| k.iter().zip(row).filter(|(_, &b)| b).map(|(v, _)| v).sum())
                .collect();
            let w: Vec<f64> = k.iter().map(|&v| v as f64 * step).collect();
            let objective = pair_max(&w);
            let cumulative = cumulative_noise(&w, n);
            let expected = (1.0 - m as f64) / 2.0 + 2.0 * objective / n;
            identity_residual = identity_residual.max((cumulative - expected).abs());
            for (slot, &v) in scratch.iter_mut().zip(&w) {
                slot.1 = v;
            }
            let max_bound = sorted_prefix_noise(g, &scratch, n).map(|b| b.deviation).unwrap_or(0.0);
            let e = map.entry(key).or_insert(Best {
                objective: f64::INFINITY,
                cumulative: f64::INFINITY,
                max_bound: f64::INFINITY,
                count: 0,
            });
            e.objective = e.objective.min(objective);
            e.cumulative = e.cumulative.min(cumulative);
            e.max_bound = e.max_bound.min(max_bound);
            e.count += 1;
        });
        per_group.push(map);
        members_by_group.push(members);
    }

    let mut grid_points = 0u64;
    let mut grid: Option<(f64, f64, f64)> = None;
    for (key, a) in &per_group[0] {
        if let Some(b) = per_group[1].get(key) {
            grid_points += a.count * b.count;
            let cand = (
                a.objective + b.objective,
                a.cumulative + b.cumulative,
                a.max_bound + b.max_bound,
            );
            grid = Some(match grid {
                None => cand,
                Some(g) => (g.0.min(cand.0), g.1.min(cand.1), g.2.min(cand.2)),
            });
        }
    }

    let config = BalanceConfig {
        collapse: false,
        ..BalanceConfig::default()
    };
    let lp = match compute_weights(dataset, property_sets, &config) {
        Ok(a) => Some(a),
        Err(BalanceError::Infeasible { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let (mut lp_cumulative, mut lp_max_bound) = (None, None);
    if let Some(a) = &lp {
        let weights = a.weight_map();
        let (mut cum, mut max) = (0.0, 0.0);
        for (g, members) in Group::ALL.iter().zip(&members_by_group) {
            let filled: Vec<(String, f64)> =
                members.iter().map(|(id, _)| (id.clone(), weights[id])).collect();
            let w: Vec<f64> = filled.iter().map(|(_, v)| *v).collect();
            cum += cumulative_noise(&w, n);
            max += sorted_prefix_noise(*g, &filled, n)?.deviation;
        }
        lp_cumulative = Some(cum);
        lp_max_bound = Some(max);
    }

    Ok(ProbeReport {
        examples: total_n,
        grid_step: step,
        grid_points,
        lp_objective: lp.as_ref().map(|a| a.objective),
        grid_min_objective: grid.map(|g| g.0),
        lp_cumulative,
        grid_min_cumulative: grid.map(|g| g.1),
        identity_residual,
        lp_max_bound,
        grid_min_max_bound: grid.map(|g| g.2),
    })
}

/// Outcome of one check in [`oracle_suite`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn bare_example(id: String, group: Group) -> Example {
    let candidate = |coreferent| Candidate {
        name: String::new(),
        offset: 0,
        coreferent,
    };
    Example {
        id,
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

/// Random instance with both groups present and random property sets. One
/// masculine and one feminine example always share a membership signature,
/// so the balancing constraints stay satisfiable.
pub fn random_instance(
    rng: &mut impl Rng,
    examples: usize,
    properties: usize,
) -> (Dataset, Vec<PropertySet>) {
    let examples = examples.max(2);
    let masculine = rng.gen_range(1..examples);
    let ds = Dataset::new(
        (0..examples)
            .map(|i| {
                let g = if i < masculine { Group::Masculine } else { Group::Feminine };
                bare_example(format!("x{i}"), g)
            })
            .collect(),
    );
    let anchor_a = format!("x{}", rng.gen_range(0..masculine));
    let anchor_b = format!("x{}", rng.gen_range(masculine..examples));
    let sets = (0..properties)
        .map(|j| {
            let mut members: BTreeSet<String> = (0..examples)
                .filter(|_| rng.gen_bool(0.5))
                .map(|i| format!("x{i}"))
                .collect();
            if members.contains(&anchor_a) {
                members.insert(anchor_b.clone());
            } else {
                members.remove(&anchor_b);
            }
            PropertySet {
                label: format!("S_{j}"),
                members,
            }
        })
        .collect();
    (ds, sets)
}

/// Runs every brute-force oracle on `instances` random cases per check.
pub fn oracle_suite(seed: u64, instances: usize) -> Vec<OracleCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();

    let mut failures = Vec::new();
    for i in 0..instances {
        let size = rng.gen_range(2..=PROBE_LIMIT);
        let props = rng.gen_range(0..=4);
        let (ds, sets) = random_instance(&mut rng, size, props);
        match optimality_probe(&ds, &sets, DEFAULT_GRID_STEP) {
            Ok(r) if r.passed() => {}
            Ok(r) => failures.push(format!("#{i}: lp {:?} > grid {:?}", r.lp_objective, r.grid_min_objective)),
            Err(e) => failures.push(format!("#{i}: {e}")),
        }
    }
    out.push(OracleCheck {
        name: "LP optimum vs grid search".into(),
        passed: failures.is_empty(),
        detail: format!("{instances} instances, failures: {failures:?}"),
    });

    let mut worst: f64 = 0.0;
    let mut errors = 0;
    for _ in 0..instances {
        let size = rng.gen_range(2..=12);
        let props = rng.gen_range(0..=4);
        let (ds, sets) = random_instance(&mut rng, size, props);
        let naive = BalanceConfig {
            collapse: false,
            ..BalanceConfig::default()
        };
        match (
            compute_weights(&ds, &sets, &BalanceConfig::default()),
            compute_weights(&ds, &sets, &naive),
        ) {
            (Ok(a), Ok(b)) => worst = worst.max((a.objective - b.objective).abs()),
            _ => errors += 1,
        }
    }
    out.push(OracleCheck {
        name: "collapsed vs naive objective".into(),
        passed: errors == 0 && worst <= 1e-7,
        detail: format!("{instances} instances, max gap {worst:.2e}, {errors} errors"),
    });

    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let len = rng.gen_range(1..=50);
        let ws: Vec<f64> = (0..len).map(|_| rng.gen::<f64>() * 5.0).collect();
        worst = worst.max(pairwise_identity_check(&ws).relative);
    }
    out.push(OracleCheck {
        name: "cumulative noise identity".into(),
        passed: worst <= 1e-9,
        detail: format!("{instances} vectors, max relative residual {worst:.2e}"),
    });

    let mut worst: f64 = 0.0;
    for _ in 0..instances {
        let len = rng.gen_range(1..=14);
        let members: Vec<(String, f64)> = (0..len)
            .map(|i| (format!("x{i}"), rng.gen::<f64>() * 3.0))
            .collect();
        let n = 2.0 * members.iter().map(|m| m.1).sum::<f64>().max(1.0);
        let gap = sorted_prefix_noise(Group::Masculine, &members, n)
            .and_then(|a| Ok((a.deviation - max_noise_bruteforce(Group::Masculine, &members, n)?.deviation).abs()));
        worst = worst.max(gap.unwrap_or(f64::INFINITY));
    }
    out.push(OracleCheck {
        name: "sorted-prefix vs exhaustive noise bound".into(),
        passed: worst <= 1e-9,
        detail: format!("{instances} groups, max gap {worst:.2e}"),
    });
    out
}
