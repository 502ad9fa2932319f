//! Weight computation: collapse interchangeable examples into classes,
//! solve the balancing LP, expand class weights back to examples.
//!
//! Two examples are interchangeable when they share a group and belong to
//! exactly the same property sets. The pairwise-max objective is convex and
//! symmetric under permuting such examples, so averaging their weights never
//! increases it; an optimum with equal weights inside each class exists and
//! the collapsed LP finds it.
//!
//! The class LP is solved by column generation over level sets. Writing the
//! weights as a nonnegative combination of indicator vectors of nested sets
//! turns the objective into a linear cost `g(|S|)` per set, with `g` concave
//! in the set size. Pricing a new set against the master duals is then a
//! sort: the best set is a prefix of the group ordered by per-example dual.
//! A first pass runs against a slightly perturbed right-hand side (a convex
//! combination with a strictly positive feasible point) to escape the heavy
//! degeneracy of the exact system; a second pass restarts from its support
//! with the exact right-hand side.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{matched_rank, Dataset, Group, PropertySet};
use crate::lp::{
    build_weight_polytope, equality_system, evaluate_objective, BalancingProblem, LinearProgram,
    LpError, Relation, Unit, VarRole,
};
use crate::solver::{solve, Solution, SolverConfig, Status};

/// Constraint checks on the expanded weights.
pub const INVARIANT_TOL: f64 = 1e-6;
/// Largest positive-example count accepted without class collapse.
pub const NAIVE_LIMIT: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BalanceError {
    #[error("group {0} has no positive examples")]
    EmptyGroup(Group),
    #[error("property set `{label}` references unknown example `{id}`")]
    UnknownMember { label: String, id: String },
    #[error("balancing LP is infeasible (phase-1 residual {phase_one:.3e})")]
    Infeasible { phase_one: f64 },
    #[error("solver stopped without a certified optimum after {iterations} iterations")]
    Stalled { iterations: usize },
    #[error("uncollapsed LP limited to {limit} examples, got {got}")]
    NaiveTooLarge { limit: usize, got: usize },
    #[error("weight invariant violated: {0}")]
    InvariantViolated(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquivalenceClass {
    pub group: Group,
    /// Indices of the property sets the members belong to.
    pub signature: Vec<usize>,
    pub members: Vec<String>,
    pub multiplicity: usize,
}

/// Partitions the positive examples by (group, property membership).
pub fn collapse_classes(dataset: &Dataset, property_sets: &[PropertySet]) -> Vec<EquivalenceClass> {
    let mut classes: BTreeMap<(Group, Vec<usize>), Vec<String>> = BTreeMap::new();
    for e in dataset.examples.iter().filter(|e| e.has_positive()) {
        let signature: Vec<usize> = property_sets
            .iter()
            .enumerate()
            .filter(|(_, s)| s.members.contains(&e.id))
            .map(|(k, _)| k)
            .collect();
        classes
            .entry((e.group, signature))
            .or_default()
            .push(e.id.clone());
    }
    classes
        .into_iter()
        .map(|((group, signature), members)| EquivalenceClass {
            group,
            signature,
            multiplicity: members.len(),
            members,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceConfig {
    pub solver: SolverConfig,
    /// Solve the class-collapsed LP (required beyond [`NAIVE_LIMIT`] examples).
    pub collapse: bool,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            solver: SolverConfig::default(),
            collapse: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEntry {
    pub id: String,
    pub group: Group,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightAssignment {
    /// One entry per positive example, in dataset order.
    pub entries: Vec<WeightEntry>,
    /// Pairwise-max objective on the expanded weights.
    pub objective: f64,
    pub property_labels: Vec<String>,
    pub status: Status,
    pub total_mass: f64,
    pub lambda_masculine: f64,
    pub lambda_feminine: f64,
    pub classes: usize,
    pub iterations: usize,
}

impl WeightAssignment {
    pub fn weight_map(&self) -> BTreeMap<String, f64> {
        self.entries
            .iter()
            .map(|e| (e.id.clone(), e.weight))
            .collect()
    }

    pub fn group_sum(&self, group: Group) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.group == group)
            .map(|e| e.weight)
            .sum()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("id\tweight\n");
        for e in &self.entries {
            out.push_str(&e.id);
            out.push('\t');
            out.push_str(&format_significant(e.weight, 12));
            out.push('\n');
        }
        out
    }

    pub fn metadata(&self) -> WeightMetadata {
        WeightMetadata {
            objective: self.objective,
            status: self.status,
            property_labels: self.property_labels.clone(),
            total_mass: self.total_mass,
            lambda_masculine: self.lambda_masculine,
            lambda_feminine: self.lambda_feminine,
            examples: self.entries.len(),
            classes: self.classes,
            iterations: self.iterations,
        }
    }
}

/// Sidecar JSON written next to a weight file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightMetadata {
    pub objective: f64,
    pub status: Status,
    pub property_labels: Vec<String>,
    pub total_mass: f64,
    pub lambda_masculine: f64,
    pub lambda_feminine: f64,
    pub examples: usize,
    pub classes: usize,
    pub iterations: usize,
}

/// Fixed-point rendering with `digits` significant digits.
pub fn format_significant(v: f64, digits: usize) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".into() } else { v.to_string() };
    }
    let magnitude = v.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("weight file line {line}: {message}")]
pub struct WeightParseError {
    pub line: usize,
    pub message: String,
}

/// Parses `id <TAB> weight` lines; a non-numeric first row is a header.
pub fn parse_weights(raw: &[u8]) -> Result<BTreeMap<String, f64>, WeightParseError> {
    let text = std::str::from_utf8(raw).map_err(|e| WeightParseError {
        line: 0,
        message: e.to_string(),
    })?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| WeightParseError { line: i + 1, message };
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 2 {
            return Err(bad(format!("expected 2 columns, found {}", f.len())));
        }
        match f[1].trim().parse::<f64>() {
            Ok(w) if w.is_finite() && w >= 0.0 => {
                if out.insert(f[0].to_string(), w).is_some() {
                    return Err(bad(format!("duplicate id `{}`", f[0])));
                }
            }
            Ok(w) => return Err(bad(format!("weight {w} is negative or not finite"))),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(bad(format!("`{}` is not a number", f[1]))),
        }
    }
    Ok(out)
}

/// Restricts property sets to the given ids, checking membership validity.
fn restrict_properties(
    dataset: &Dataset,
    ids: &BTreeSet<&str>,
    property_sets: &[PropertySet],
) -> Result<Vec<PropertySet>, BalanceError> {
    let index = dataset.index();
    property_sets
        .iter()
        .map(|s| {
            if let Some(id) = s.members.iter().find(|id| !index.contains_key(id.as_str())) {
                return Err(BalanceError::UnknownMember {
                    label: s.label.clone(),
                    id: id.clone(),
                });
            }
            Ok(PropertySet {
                label: s.label.clone(),
                members: s
                    .members
                    .iter()
                    .filter(|id| ids.contains(id.as_str()))
                    .cloned()
                    .collect(),
            })
        })
        .collect()
}

/// Computes the balancing weights for the positive examples of `dataset`.
pub fn compute_weights(
    dataset: &Dataset,
    property_sets: &[PropertySet],
    config: &BalanceConfig,
) -> Result<WeightAssignment, BalanceError> {
    let positive = dataset.positive();
    let ids: BTreeSet<&str> = positive.examples.iter().map(|e| e.id.as_str()).collect();
    let sizes: HashMap<Group, usize> = Group::ALL
        .iter()
        .map(|&g| (g, positive.group_size(g)))
        .collect();
    for g in Group::ALL {
        if sizes[&g] == 0 {
            return Err(BalanceError::EmptyGroup(g));
        }
    }
    let props = restrict_properties(dataset, &ids, property_sets)?;
    let n = positive.len();
    if !config.collapse && n > NAIVE_LIMIT {
        return Err(BalanceError::NaiveTooLarge {
            limit: NAIVE_LIMIT,
            got: n,
        });
    }

    let classes: Vec<EquivalenceClass> = if config.collapse {
        collapse_classes(&positive, &props)
    } else {
        positive
            .examples
            .iter()
            .map(|e| EquivalenceClass {
                group: e.group,
                signature: props
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.members.contains(&e.id))
                    .map(|(k, _)| k)
                    .collect(),
                members: vec![e.id.clone()],
                multiplicity: 1,
            })
            .collect()
    };
    let problem = BalancingProblem {
        units: classes
            .iter()
            .map(|c| Unit {
                group: c.group,
                multiplicity: c.multiplicity,
                memberships: c.signature.iter().copied().collect(),
            })
            .collect(),
        property_labels: props.iter().map(|s| s.label.clone()).collect(),
        total_mass: n as f64,
    };
    let unit_weights = solve_problem(&problem, &config.solver)?;

    let mut by_id: HashMap<&str, f64> = HashMap::new();
    for (class, &w) in classes.iter().zip(&unit_weights.weights) {
        for id in &class.members {
            by_id.insert(id.as_str(), w);
        }
    }
    let entries: Vec<WeightEntry> = positive
        .examples
        .iter()
        .map(|e| WeightEntry {
            id: e.id.clone(),
            group: e.group,
            weight: by_id[e.id.as_str()],
        })
        .collect();
    let objective = evaluate_objective(
        &entries.iter().map(|e| e.weight).collect::<Vec<_>>(),
        &entries.iter().map(|e| e.group).collect::<Vec<_>>(),
        &vec![1; entries.len()],
    );
    if (objective - unit_weights.objective).abs() > 1e-7 * (1.0 + objective.abs()) {
        return Err(BalanceError::InvariantViolated(format!(
            "objective {objective} of the expanded weights differs from the solver's {}",
            unit_weights.objective
        )));
    }
    let assignment = WeightAssignment {
        entries,
        objective,
        property_labels: problem.property_labels.clone(),
        status: Status::Optimal,
        total_mass: n as f64,
        lambda_masculine: n as f64 / (2.0 * sizes[&Group::Masculine] as f64),
        lambda_feminine: n as f64 / (2.0 * sizes[&Group::Feminine] as f64),
        classes: classes.len(),
        iterations: unit_weights.iterations,
    };
    check_invariants(&assignment, &props)?;
    Ok(assignment)
}

/// Optimal per-unit weights of a balancing problem.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitWeights {
    pub weights: Vec<f64>,
    /// Optimal objective of the restricted master.
    pub objective: f64,
    /// Simplex iterations summed over all master solves.
    pub iterations: usize,
    pub rounds: usize,
    pub level_sets: usize,
}

/// Upper limit on column-generation rounds.
pub const MAX_ROUNDS: usize = 10_000;
/// Mixing weight of the right-hand-side perturbation.
const PERTURBATION: f64 = 1e-6;

/// Units of one group, taken together: a candidate upper level set.
#[derive(Debug, Clone)]
struct LevelSet {
    units: Vec<usize>,
    cost: f64,
    coeffs: Vec<f64>,
}

struct Master<'a> {
    problem: &'a BalancingProblem,
    /// `g[k][u]`: coefficient of unit `u`'s per-example weight in equality `k`.
    g: Vec<Vec<f64>>,
    rhs: Vec<f64>,
    /// Expanded size of each group.
    size: [f64; 2],
    pool: Vec<LevelSet>,
    seen: BTreeSet<Vec<usize>>,
}

fn group_slot(g: Group) -> usize {
    (g == Group::Feminine) as usize
}

impl<'a> Master<'a> {
    fn new(problem: &'a BalancingProblem) -> Result<Self, BalanceError> {
        let rows = equality_system(problem)?;
        let mut g = vec![vec![0.0; problem.units.len()]; rows.len()];
        for (k, (coeffs, _)) in rows.iter().enumerate() {
            for &(u, a) in coeffs {
                g[k][u] += a;
            }
        }
        let mut size = [0.0; 2];
        for u in &problem.units {
            size[group_slot(u.group)] += u.multiplicity as f64;
        }
        let mut master = Self {
            problem,
            g,
            rhs: rows.iter().map(|r| r.1).collect(),
            size,
            pool: Vec::new(),
            seen: BTreeSet::new(),
        };
        for group in Group::ALL {
            let all: Vec<usize> = (0..problem.units.len())
                .filter(|&u| problem.units[u].group == group)
                .collect();
            master.add(all);
        }
        Ok(master)
    }

    /// Pairs of the group with at least one member among `k` chosen examples.
    fn set_cost(&self, group: Group, k: f64) -> f64 {
        let n = self.size[group_slot(group)];
        k * (2.0 * n - k - 1.0) / 2.0
    }

    fn add(&mut self, mut units: Vec<usize>) -> bool {
        units.sort_unstable();
        if !self.seen.insert(units.clone()) {
            return false;
        }
        let group = self.problem.units[units[0]].group;
        let k: f64 = units.iter().map(|&u| self.problem.units[u].multiplicity as f64).sum();
        let coeffs = self
            .g
            .iter()
            .map(|row| units.iter().map(|&u| row[u]).sum())
            .collect();
        self.pool.push(LevelSet {
            cost: self.set_cost(group, k),
            units,
            coeffs,
        });
        true
    }

    /// `(1 − ε) g + ε G w⁰` for a fixed, strictly positive, irregular `w⁰`.
    /// Any feasible weighting `w` maps to the feasible `(1 − ε) w + ε w⁰`.
    fn perturbed_rhs(&self) -> Vec<f64> {
        let w0: Vec<f64> = (0..self.problem.units.len())
            .map(|u| 1.0 + (u as f64 * 0.618_033_988_749_895).fract())
            .collect();
        self.g
            .iter()
            .zip(&self.rhs)
            .map(|(row, &b)| {
                let shifted: f64 = row.iter().zip(&w0).map(|(a, w)| a * w).sum();
                (1.0 - PERTURBATION) * b + PERTURBATION * shifted
            })
            .collect()
    }

    /// Keeps the columns with `keep[j]`, plus the whole-group sets.
    fn retain(&mut self, keep: &[bool]) {
        let pool = std::mem::take(&mut self.pool);
        self.seen.clear();
        for (set, &k) in pool.into_iter().zip(keep) {
            let whole = set.units.len()
                == self
                    .problem
                    .units
                    .iter()
                    .filter(|u| u.group == self.problem.units[set.units[0]].group)
                    .count();
            if k || whole {
                self.seen.insert(set.units.clone());
                self.pool.push(set);
            }
        }
    }

    /// Column generation to optimality (or proven infeasibility) against `rhs`.
    fn generate(
        &mut self,
        rhs: &[f64],
        solver: &SolverConfig,
        stats: &mut (usize, usize),
    ) -> Result<Solution, BalanceError> {
        while stats.1 < MAX_ROUNDS {
            stats.1 += 1;
            let sol = solve(&self.lp(rhs), solver);
            stats.0 += sol.iterations;
            match sol.status {
                Status::Optimal if self.price(&sol.duals, false) => {}
                Status::Infeasible if self.price(&sol.duals, true) => {}
                Status::Optimal | Status::Infeasible => return Ok(sol),
                Status::Unbounded | Status::Stalled => break,
            }
        }
        Err(BalanceError::Stalled { iterations: stats.0 })
    }

    fn lp(&self, rhs: &[f64]) -> LinearProgram {
        let mut lp = LinearProgram::new();
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rhs.len()];
        for set in &self.pool {
            let j = lp.add_var(0.0, f64::INFINITY, set.cost, VarRole::Other);
            for (k, &a) in set.coeffs.iter().enumerate() {
                if a != 0.0 {
                    rows[k].push((j, a));
                }
            }
        }
        for (coeffs, &b) in rows.into_iter().zip(rhs) {
            lp.add_constraint(coeffs, Relation::Eq, b)
                .expect("columns exist");
        }
        lp
    }

    /// Adds every prefix of each group's units, sorted by per-example dual
    /// value, whose reduced cost is negative. Prefixes ending inside a run of
    /// one unit are never better than its ends, because the set cost is
    /// concave in the number of examples. `farkas` prices for phase 1
    /// (zero costs). Returns whether a column was added.
    fn price(&mut self, y: &[f64], farkas: bool) -> bool {
        let units = &self.problem.units;
        let value: Vec<f64> = (0..units.len())
            .map(|u| self.g.iter().zip(y).map(|(row, yk)| row[u] * yk).sum())
            .collect();
        let mut added = false;
        for group in Group::ALL {
            let mut order: Vec<usize> = (0..units.len()).filter(|&u| units[u].group == group).collect();
            order.sort_by(|&a, &b| {
                let (va, vb) = (
                    value[a] / units[a].multiplicity as f64,
                    value[b] / units[b].multiplicity as f64,
                );
                vb.total_cmp(&va).then(a.cmp(&b))
            });
            let (mut k, mut z) = (0.0, 0.0);
            let mut found = Vec::new();
            for (end, &u) in order.iter().enumerate() {
                k += units[u].multiplicity as f64;
                z += value[u];
                let cost = if farkas { 0.0 } else { self.set_cost(group, k) };
                let reduced = cost - z;
                if reduced < -1e-9 * (1.0 + cost.abs() + z.abs()) {
                    found.push(end + 1);
                }
            }
            for end in found {
                added |= self.add(order[..end].to_vec());
            }
        }
        added
    }
}

/// Solves the balancing LP by column generation over level sets.
///
/// The objective is the Lovász extension of `T ↦ #pairs touching T`, so
/// every weight vector is a non-negative combination of indicator vectors of
/// its upper level sets, with objective the same combination of set costs.
/// The restricted master picks set multipliers `μ_S` subject to the
/// equalities; pricing finds the level set with the most negative reduced
/// cost. On termination `w_u = Σ_{S ∋ u} μ_S` is optimal for the full LP.
pub fn solve_problem(
    problem: &BalancingProblem,
    solver: &SolverConfig,
) -> Result<UnitWeights, BalanceError> {
    let mut master = Master::new(problem)?;
    let mut stats = (0, 0);
    // The equalities are almost all homogeneous, which makes the master
    // badly degenerate. Generate columns against a perturbed right-hand
    // side first; reduced costs do not depend on it, so the columns found
    // carry over. Then re-solve exactly from the support of that solution.
    let perturbed = master.perturbed_rhs();
    let sol = master.generate(&perturbed, solver, &mut stats)?;
    if sol.status == Status::Optimal {
        let keep: Vec<bool> = sol.values.iter().map(|&v| v > 0.0).collect();
        master.retain(&keep);
    }
    let rhs = master.rhs.clone();
    let sol = master.generate(&rhs, solver, &mut stats)?;
    if sol.status == Status::Infeasible {
        // No level set can reduce the infeasibility: certify on the plain
        // weight polytope.
        let polytope = build_weight_polytope(problem)?;
        let cert = solve(&polytope.lp, solver);
        return Err(BalanceError::Infeasible {
            phase_one: cert.phase_one_objective.max(sol.phase_one_objective),
        });
    }
    let mut weights = vec![0.0; problem.units.len()];
    for (set, &mu) in master.pool.iter().zip(&sol.values) {
        for &u in &set.units {
            weights[u] += mu.max(0.0);
        }
    }
    Ok(UnitWeights {
        weights,
        objective: sol.objective,
        iterations: stats.0,
        rounds: stats.1,
        level_sets: sol.values.iter().filter(|&&v| v > 0.0).count(),
    })
}

/// Re-checks non-negativity, group sums and property balance by direct summation.
pub fn check_invariants(
    assignment: &WeightAssignment,
    property_sets: &[PropertySet],
) -> Result<(), BalanceError> {
    let half = assignment.total_mass / 2.0;
    let tol = INVARIANT_TOL * (1.0 + half);
    if let Some(e) = assignment.entries.iter().find(|e| e.weight < 0.0) {
        return Err(BalanceError::InvariantViolated(format!(
            "negative weight for `{}`",
            e.id
        )));
    }
    for g in Group::ALL {
        let s = assignment.group_sum(g);
        if (s - half).abs() > tol {
            return Err(BalanceError::InvariantViolated(format!(
                "{g} weights sum to {s}, expected {half}"
            )));
        }
    }
    let weights = assignment.weight_map();
    for set in property_sets {
        let mut sums = [0.0; 2];
        for e in &assignment.entries {
            if set.members.contains(&e.id) {
                sums[(e.group == Group::Feminine) as usize] += weights[&e.id];
            }
        }
        if (sums[0] - sums[1]).abs() > tol {
            return Err(BalanceError::InvariantViolated(format!(
                "property `{}` unbalanced: {} vs {}",
                set.label, sums[0], sums[1]
            )));
        }
    }
    Ok(())
}

pub const DEFAULT_MAX_NAMES: usize = 15;
pub const DEFAULT_MAX_RANK: usize = 4;

/// Drops examples with more than `max_names` annotated names or whose
/// correct candidate is further than the `max_rank`-th closest name.
pub fn trim(dataset: &Dataset, max_names: usize, max_rank: usize) -> Dataset {
    dataset.retain(|e| {
        e.name_spans.len() <= max_names && matched_rank(e).is_none_or(|r| r <= max_rank)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Candidate, Example, NameSpan};

    pub(crate) fn toy_example(id: &str, group: Group) -> Example {
        Example {
            id: id.into(),
            group,
            text: "Ann met Bob and he left".into(),
            pronoun: if group == Group::Masculine { "he" } else { "she" }.into(),
            pronoun_offset: 16,
            candidate_a: Candidate {
                name: "Ann".into(),
                offset: 0,
                coreferent: true,
            },
            candidate_b: Candidate {
                name: "Bob".into(),
                offset: 8,
                coreferent: false,
            },
            url: String::new(),
            name_spans: vec![NameSpan::new(0, 3), NameSpan::new(8, 11)],
        }
    }

    fn s1_instance() -> (Dataset, Vec<PropertySet>) {
        let ds = Dataset::new(vec![
            toy_example("a1", Group::Masculine),
            toy_example("a2", Group::Masculine),
            toy_example("b1", Group::Feminine),
            toy_example("b2", Group::Feminine),
        ]);
        let s1 = PropertySet {
            label: "S_1".into(),
            members: ["a1", "b1", "b2"].iter().map(|s| s.to_string()).collect(),
        };
        (ds, vec![s1])
    }

    #[test]
    fn no_properties_gives_two_classes() {
        let (ds, _) = s1_instance();
        let classes = collapse_classes(&ds, &[]);
        assert_eq!(classes.len(), 2);
        assert_eq!(classes[0].multiplicity, 2);
    }

    #[test]
    fn s1_classes() {
        let (ds, props) = s1_instance();
        let classes = collapse_classes(&ds, &props);
        let members: Vec<Vec<String>> = classes.iter().map(|c| c.members.clone()).collect();
        assert_eq!(
            members,
            vec![
                vec!["a2".to_string()],
                vec!["a1".to_string()],
                vec!["b1".to_string(), "b2".to_string()]
            ]
        );
    }

    #[test]
    fn s1_weights() {
        let (ds, props) = s1_instance();
        let w = compute_weights(&ds, &props, &BalanceConfig::default()).unwrap();
        let map = w.weight_map();
        for (id, expected) in [("a1", 2.0), ("a2", 0.0), ("b1", 1.0), ("b2", 1.0)] {
            assert!((map[id] - expected).abs() < 1e-9, "{id}: {}", map[id]);
        }
        assert!((w.objective - 3.0).abs() < 1e-9);
        assert_eq!(w.lambda_masculine, 1.0);
    }

    #[test]
    fn balanced_without_properties_is_uniform() {
        let ds = Dataset::new(
            (0..6)
                .map(|i| {
                    let g = if i % 2 == 0 { Group::Masculine } else { Group::Feminine };
                    toy_example(&format!("e{i}"), g)
                })
                .collect(),
        );
        let w = compute_weights(&ds, &[], &BalanceConfig::default()).unwrap();
        assert!(w.entries.iter().all(|e| (e.weight - 1.0).abs() < 1e-12));
    }

    #[test]
    fn single_group_property_forces_infeasibility() {
        // S covers all of A but none of B: A's mass must be 0, contradicting n/2.
        let (ds, _) = s1_instance();
        let s = PropertySet {
            label: "S".into(),
            members: ["a1", "a2"].iter().map(|s| s.to_string()).collect(),
        };
        match compute_weights(&ds, &[s], &BalanceConfig::default()) {
            Err(BalanceError::Infeasible { phase_one }) => assert!(phase_one > 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_group_is_rejected() {
        let ds = Dataset::new(vec![toy_example("a", Group::Masculine)]);
        assert_eq!(
            compute_weights(&ds, &[], &BalanceConfig::default()).unwrap_err(),
            BalanceError::EmptyGroup(Group::Feminine)
        );
    }

    #[test]
    fn naive_path_is_size_limited() {
        let ds = Dataset::new(
            (0..202)
                .map(|i| {
                    let g = if i % 2 == 0 { Group::Masculine } else { Group::Feminine };
                    toy_example(&format!("e{i}"), g)
                })
                .collect(),
        );
        let cfg = BalanceConfig {
            collapse: false,
            ..BalanceConfig::default()
        };
        assert!(matches!(
            compute_weights(&ds, &[], &cfg),
            Err(BalanceError::NaiveTooLarge { .. })
        ));
    }

    #[test]
    fn trim_boundaries() {
        let mut e = toy_example("x", Group::Masculine);
        let ds = Dataset::new(vec![e.clone()]);
        assert_eq!(trim(&ds, 15, 4), ds);
        e.text = "n ".repeat(40);
        e.candidate_a = Candidate {
            name: "n".into(),
            offset: 2,
            coreferent: true,
        };
        e.candidate_b.offset = 4;
        e.candidate_b.name = "n".into();
        e.pronoun_offset = 0;
        e.pronoun = "he".into();
        e.name_spans = (1..=16).map(|k| NameSpan::new(2 * k, 2 * k + 1)).collect();
        let ds = Dataset::new(vec![e.clone()]);
        assert!(trim(&ds, 15, 4).is_empty());
        e.name_spans.truncate(15);
        assert_eq!(trim(&Dataset::new(vec![e]), 15, 4).len(), 1);
    }

    #[test]
    fn significant_digits() {
        assert_eq!(format_significant(9.72, 12), "9.72000000000");
        assert_eq!(format_significant(0.5, 12), "0.500000000000");
        assert_eq!(format_significant(0.0, 12), "0");
        assert_eq!(format_significant(12.5, 4), "12.50");
    }

    #[test]
    fn weights_round_trip_through_tsv() {
        let (ds, props) = s1_instance();
        let w = compute_weights(&ds, &props, &BalanceConfig::default()).unwrap();
        let parsed = parse_weights(w.to_tsv().as_bytes()).unwrap();
        for (id, v) in w.weight_map() {
            assert!((parsed[&id] - v).abs() < 1e-11);
        }
        assert!(parse_weights(b"a\t-1\n").is_err());
    }
}
