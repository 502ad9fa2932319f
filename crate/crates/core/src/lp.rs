//! Sparse linear programs and the balancing LP.
//!
//! The balancing LP chooses one non-negative weight per unit (an example, or
//! a class of interchangeable examples with a multiplicity) such that both
//! groups carry the same mass, the total mass is fixed, and every property
//! set carries the same mass in both groups. The objective is the sum of
//! pairwise maxima of weights within each group, linearized with one
//! auxiliary variable per same-group pair.
//!
//! [`build_compact_dual`] emits the LP dual of the same problem. Its rows
//! are the units and the pair constraints become bounded columns. Both forms
//! are exact and serve as references for the column-generation solve in
//! the balancer.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Group;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("constraint {constraint} references variable {var} but only {num_vars} exist")]
    UnknownVariable {
        constraint: usize,
        var: usize,
        num_vars: usize,
    },
    #[error("balancing problem has no units")]
    NoUnits,
    #[error("group {0} has no units")]
    EmptyGroup(Group),
    #[error("unit {0} has multiplicity 0")]
    ZeroMultiplicity(usize),
    #[error("duplicate property label `{0}`")]
    DuplicateLabel(String),
    #[error("unit {unit} references property {property} but only {count} exist")]
    UnknownProperty {
        unit: usize,
        property: usize,
        count: usize,
    },
    #[error("total mass must be positive and finite, got {0}")]
    BadMass(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(j, a)| a * x[j]).sum()
    }

    /// Amount by which `x` violates the constraint (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let ax = self.activity(x);
        match self.relation {
            Relation::Eq => (ax - self.rhs).abs(),
            Relation::Le => (ax - self.rhs).max(0.0),
            Relation::Ge => (self.rhs - ax).max(0.0),
        }
    }
}

/// What a variable stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarRole {
    /// Weight of input unit `i`.
    Weight(usize),
    /// `max(w_i, w_j)` for input units `i`, `j` of one group.
    AuxMax(usize, usize),
    /// Dual share of the pair `(i, j)` attributed to unit `i`.
    PairShare(usize, usize),
    /// Dual multiplier of equality constraint `k`.
    Multiplier(usize),
    Other,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearProgram {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub roles: Vec<VarRole>,
    /// Sparse minimization objective.
    pub objective: Vec<(usize, f64)>,
    pub constraints: Vec<Constraint>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn num_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn add_var(&mut self, lower: f64, upper: f64, cost: f64, role: VarRole) -> usize {
        let j = self.lower.len();
        self.lower.push(lower);
        self.upper.push(upper);
        self.roles.push(role);
        if cost != 0.0 {
            self.objective.push((j, cost));
        }
        j
    }

    pub fn add_constraint(
        &mut self,
        coeffs: Vec<(usize, f64)>,
        relation: Relation,
        rhs: f64,
    ) -> Result<usize, LpError> {
        let k = self.constraints.len();
        if let Some(&(var, _)) = coeffs.iter().find(|&&(j, _)| j >= self.num_vars()) {
            return Err(LpError::UnknownVariable {
                constraint: k,
                var,
                num_vars: self.num_vars(),
            });
        }
        self.constraints.push(Constraint {
            coeffs,
            relation,
            rhs,
        });
        Ok(k)
    }

    pub fn objective_dense(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.num_vars()];
        for &(j, v) in &self.objective {
            c[j] += v;
        }
        c
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|&(j, c)| c * x[j]).sum()
    }

    /// Largest bound or constraint violation of `x`, computed directly.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let bounds = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&lo, &hi))| (lo - v).max(v - hi).max(0.0))
            .fold(0.0, f64::max);
        self.constraints
            .iter()
            .map(|c| c.violation(x))
            .fold(bounds, f64::max)
    }

    fn var_name(&self, j: usize) -> String {
        match self.roles[j] {
            VarRole::Weight(i) => format!("W{i}"),
            VarRole::AuxMax(i, k) => format!("M{i}_{k}"),
            VarRole::PairShare(i, k) => format!("P{i}_{k}"),
            VarRole::Multiplier(k) => format!("Y{k}"),
            VarRole::Other => format!("X{j}"),
        }
    }

    /// Free-format MPS with fixed-point numbers.
    pub fn to_free_mps(&self, name: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "NAME {name}");
        out.push_str("ROWS\n N  COST\n");
        for (k, c) in self.constraints.iter().enumerate() {
            let kind = match c.relation {
                Relation::Eq => "E",
                Relation::Le => "L",
                Relation::Ge => "G",
            };
            let _ = writeln!(out, " {kind}  R{k}");
        }
        let mut columns: Vec<Vec<(String, f64)>> = vec![Vec::new(); self.num_vars()];
        for &(j, v) in &self.objective {
            columns[j].push(("COST".into(), v));
        }
        for (k, c) in self.constraints.iter().enumerate() {
            for &(j, v) in &c.coeffs {
                columns[j].push((format!("R{k}"), v));
            }
        }
        out.push_str("COLUMNS\n");
        for (j, col) in columns.iter().enumerate() {
            let var = self.var_name(j);
            for (row, v) in col {
                let _ = writeln!(out, "    {var}  {row}  {v}");
            }
        }
        out.push_str("RHS\n");
        for (k, c) in self.constraints.iter().enumerate() {
            if c.rhs != 0.0 {
                let _ = writeln!(out, "    RHS  R{k}  {}", c.rhs);
            }
        }
        out.push_str("BOUNDS\n");
        for j in 0..self.num_vars() {
            let (lo, hi) = (self.lower[j], self.upper[j]);
            let var = self.var_name(j);
            if lo == hi {
                let _ = writeln!(out, " FX BND  {var}  {lo}");
                continue;
            }
            match (lo.is_finite(), hi.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " FR BND  {var}");
                }
                (false, true) => {
                    let _ = writeln!(out, " MI BND  {var}");
                    let _ = writeln!(out, " UP BND  {var}  {hi}");
                }
                (true, _) => {
                    if lo != 0.0 {
                        let _ = writeln!(out, " LO BND  {var}  {lo}");
                    }
                    if hi.is_finite() {
                        let _ = writeln!(out, " UP BND  {var}  {hi}");
                    }
                }
            }
        }
        out.push_str("ENDATA\n");
        out
    }
}

/// A variable of the balancing problem: one example, or `multiplicity`
/// identical examples sharing a weight.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Unit {
    pub group: Group,
    pub multiplicity: usize,
    /// Indices into [`BalancingProblem::property_labels`].
    pub memberships: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancingProblem {
    pub units: Vec<Unit>,
    pub property_labels: Vec<String>,
    /// Required total weight mass (the example count `n`).
    pub total_mass: f64,
}

/// Row/column counts of the primal balancing LP, computable without building it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancingShape {
    pub weight_vars: usize,
    pub aux_vars: usize,
    pub equality_constraints: usize,
    pub aux_inequalities: usize,
}

impl BalancingShape {
    pub fn from_group_sizes(units_a: usize, units_b: usize, properties: usize) -> Self {
        let pairs = |k: usize| k * k.saturating_sub(1) / 2;
        let aux = pairs(units_a) + pairs(units_b);
        Self {
            weight_vars: units_a + units_b,
            aux_vars: aux,
            equality_constraints: 2 + properties,
            aux_inequalities: 2 * aux,
        }
    }

    pub fn of(problem: &BalancingProblem) -> Self {
        let a = problem
            .units
            .iter()
            .filter(|u| u.group == Group::Masculine)
            .count();
        Self::from_group_sizes(a, problem.units.len() - a, problem.property_labels.len())
    }
}

/// Canonically ordered view of a validated problem.
struct Canonical<'a> {
    problem: &'a BalancingProblem,
    /// Input unit indices in canonical order.
    order: Vec<usize>,
    /// Property indices sorted by label.
    label_order: Vec<usize>,
}

impl<'a> Canonical<'a> {
    fn new(problem: &'a BalancingProblem) -> Result<Self, LpError> {
        if problem.units.is_empty() {
            return Err(LpError::NoUnits);
        }
        if !(problem.total_mass.is_finite() && problem.total_mass > 0.0) {
            return Err(LpError::BadMass(problem.total_mass));
        }
        let mut labels = BTreeSet::new();
        for l in &problem.property_labels {
            if !labels.insert(l.as_str()) {
                return Err(LpError::DuplicateLabel(l.clone()));
            }
        }
        let count = problem.property_labels.len();
        for (i, u) in problem.units.iter().enumerate() {
            if u.multiplicity == 0 {
                return Err(LpError::ZeroMultiplicity(i));
            }
            if let Some(&p) = u.memberships.iter().find(|&&p| p >= count) {
                return Err(LpError::UnknownProperty {
                    unit: i,
                    property: p,
                    count,
                });
            }
        }
        for g in Group::ALL {
            if !problem.units.iter().any(|u| u.group == g) {
                return Err(LpError::EmptyGroup(g));
            }
        }
        let label_of = |p: usize| problem.property_labels[p].as_str();
        let signature = |u: &Unit| -> Vec<&str> {
            let mut s: Vec<&str> = u.memberships.iter().map(|&p| label_of(p)).collect();
            s.sort_unstable();
            s
        };
        let mut order: Vec<usize> = (0..problem.units.len()).collect();
        order.sort_by(|&a, &b| {
            let (ua, ub) = (&problem.units[a], &problem.units[b]);
            (ua.group, signature(ua), ua.multiplicity, a).cmp(&(
                ub.group,
                signature(ub),
                ub.multiplicity,
                b,
            ))
        });
        let mut label_order: Vec<usize> = (0..count).collect();
        label_order.sort_by(|&a, &b| label_of(a).cmp(label_of(b)));
        Ok(Self {
            problem,
            order,
            label_order,
        })
    }

    fn unit(&self, pos: usize) -> &Unit {
        &self.problem.units[self.order[pos]]
    }

    /// Balance, fixed sum, then one row per property (by label), as
    /// `(coefficient per canonical position, rhs)`.
    fn equality_rows(&self) -> Vec<(Vec<(usize, f64)>, f64)> {
        let n = self.order.len();
        let sign = |g: Group| if g == Group::Masculine { 1.0 } else { -1.0 };
        let mut rows = Vec::with_capacity(2 + self.label_order.len());
        rows.push((
            (0..n)
                .map(|p| (p, sign(self.unit(p).group) * self.unit(p).multiplicity as f64))
                .collect(),
            0.0,
        ));
        rows.push((
            (0..n).map(|p| (p, self.unit(p).multiplicity as f64)).collect(),
            self.problem.total_mass,
        ));
        for &prop in &self.label_order {
            rows.push((
                (0..n)
                    .filter(|&p| self.unit(p).memberships.contains(&prop))
                    .map(|p| (p, sign(self.unit(p).group) * self.unit(p).multiplicity as f64))
                    .collect(),
                0.0,
            ));
        }
        rows
    }

    /// Same-group canonical position pairs `(hi, lo)` with `hi > lo`, lexicographic.
    fn pairs(&self) -> Vec<(usize, usize)> {
        let n = self.order.len();
        let mut out = Vec::new();
        for hi in 0..n {
            for lo in 0..hi {
                if self.unit(hi).group == self.unit(lo).group {
                    out.push((hi, lo));
                }
            }
        }
        out
    }

    fn within_unit_pairs(&self, pos: usize) -> f64 {
        let c = self.unit(pos).multiplicity as f64;
        c * (c - 1.0) / 2.0
    }

    fn pair_count(&self, hi: usize, lo: usize) -> f64 {
        (self.unit(hi).multiplicity * self.unit(lo).multiplicity) as f64
    }
}

/// Primal balancing LP plus the variable index of each input unit's weight.
#[derive(Debug, Clone, PartialEq)]
pub struct BalancingLp {
    pub lp: LinearProgram,
    pub weight_var: Vec<usize>,
}

/// Builds the pairwise-max LP over the given units.
pub fn build_balancing_lp(problem: &BalancingProblem) -> Result<BalancingLp, LpError> {
    let canon = Canonical::new(problem)?;
    let n = canon.order.len();
    let mut lp = LinearProgram::new();
    for pos in 0..n {
        lp.add_var(
            0.0,
            f64::INFINITY,
            canon.within_unit_pairs(pos),
            VarRole::Weight(canon.order[pos]),
        );
    }
    let pairs = canon.pairs();
    for &(hi, lo) in &pairs {
        lp.add_var(
            0.0,
            f64::INFINITY,
            canon.pair_count(hi, lo),
            VarRole::AuxMax(canon.order[hi], canon.order[lo]),
        );
    }
    for (coeffs, rhs) in canon.equality_rows() {
        lp.add_constraint(coeffs, Relation::Eq, rhs)?;
    }
    for (k, &(hi, lo)) in pairs.iter().enumerate() {
        let m = n + k;
        lp.add_constraint(vec![(m, 1.0), (hi, -1.0)], Relation::Ge, 0.0)?;
        lp.add_constraint(vec![(m, 1.0), (lo, -1.0)], Relation::Ge, 0.0)?;
    }
    let mut weight_var = vec![0; n];
    for (pos, &unit) in canon.order.iter().enumerate() {
        weight_var[unit] = pos;
    }
    Ok(BalancingLp { lp, weight_var })
}

/// Equality rows over input unit indices: group balance, fixed total mass,
/// then one row per property set in label order. Coefficients carry the
/// unit multiplicities, so the unknowns are per-example weights.
pub fn equality_system(problem: &BalancingProblem) -> Result<Vec<(Vec<(usize, f64)>, f64)>, LpError> {
    let canon = Canonical::new(problem)?;
    Ok(canon
        .equality_rows()
        .into_iter()
        .map(|(coeffs, rhs)| {
            let coeffs = coeffs.into_iter().map(|(p, a)| (canon.order[p], a)).collect();
            (coeffs, rhs)
        })
        .collect())
}

/// The weight constraints alone (no objective, no auxiliary variables).
/// Solving it yields a phase-1 certificate when the balancing LP is infeasible.
pub fn build_weight_polytope(problem: &BalancingProblem) -> Result<BalancingLp, LpError> {
    let canon = Canonical::new(problem)?;
    let mut lp = LinearProgram::new();
    for &unit in &canon.order {
        lp.add_var(0.0, f64::INFINITY, 0.0, VarRole::Weight(unit));
    }
    for (coeffs, rhs) in canon.equality_rows() {
        lp.add_constraint(coeffs, Relation::Eq, rhs)?;
    }
    let mut weight_var = vec![0; canon.order.len()];
    for (pos, &unit) in canon.order.iter().enumerate() {
        weight_var[unit] = pos;
    }
    Ok(BalancingLp { lp, weight_var })
}

/// Dual of the balancing LP with one `<=` row per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct CompactDual {
    pub lp: LinearProgram,
    /// Row index of each input unit; the negated row multiplier is its weight.
    pub unit_row: Vec<usize>,
}

/// Builds the dual of [`build_balancing_lp`]'s program.
///
/// With `m_p >= w_hi` and `m_p >= w_lo` priced by `s_p` and `c_p - s_p`
/// (where `c_p` is the pair count), and the equalities `G w = g` priced by
/// free `y`, the dual is
///
/// ```text
/// min  -g.y
/// s.t. (G^T y)_u - sum_{p: hi(p)=u} s_p + sum_{p: lo(p)=u} s_p <= h_u + sum_{p: lo(p)=u} c_p
///      0 <= s_p <= c_p,  y free
/// ```
///
/// where `h_u` counts the pairs inside unit `u`. Its optimum is the negated
/// primal optimum and the row multipliers are the negated primal weights.
pub fn build_compact_dual(problem: &BalancingProblem) -> Result<CompactDual, LpError> {
    let canon = Canonical::new(problem)?;
    let n = canon.order.len();
    let pairs = canon.pairs();
    let equalities = canon.equality_rows();

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut rhs: Vec<f64> = (0..n).map(|p| canon.within_unit_pairs(p)).collect();
    let mut lp = LinearProgram::new();
    for &(hi, lo) in &pairs {
        let c = canon.pair_count(hi, lo);
        let j = lp.add_var(
            0.0,
            c,
            0.0,
            VarRole::PairShare(canon.order[hi], canon.order[lo]),
        );
        rows[hi].push((j, -1.0));
        rows[lo].push((j, 1.0));
        rhs[lo] += c;
    }
    for (k, (coeffs, g)) in equalities.iter().enumerate() {
        let j = lp.add_var(f64::NEG_INFINITY, f64::INFINITY, -g, VarRole::Multiplier(k));
        for &(pos, a) in coeffs {
            rows[pos].push((j, a));
        }
    }
    for (pos, coeffs) in rows.into_iter().enumerate() {
        lp.add_constraint(coeffs, Relation::Le, rhs[pos])?;
    }
    let mut unit_row = vec![0; n];
    for (pos, &unit) in canon.order.iter().enumerate() {
        unit_row[unit] = pos;
    }
    Ok(CompactDual { lp, unit_row })
}

/// Sum over each group of `max(w_i, w_j)` across all pairs, with a unit of
/// multiplicity `c` expanded into `c` copies of its weight.
pub fn evaluate_objective(weights: &[f64], groups: &[Group], multiplicities: &[usize]) -> f64 {
    assert_eq!(weights.len(), groups.len());
    assert_eq!(weights.len(), multiplicities.len());
    let mut total = 0.0;
    for g in Group::ALL {
        let mut items: Vec<(f64, usize)> = weights
            .iter()
            .zip(groups)
            .zip(multiplicities)
            .filter(|((_, &gg), _)| gg == g)
            .map(|((&w, _), &c)| (w, c))
            .collect();
        items.sort_by(|a, b| a.0.total_cmp(&b.0));
        // The item at expanded ascending position p is the max of p pairs.
        let mut before = 0usize;
        for (w, c) in items {
            let c_f = c as f64;
            total += w * (c_f * before as f64 + c_f * (c_f - 1.0) / 2.0);
            before += c;
        }
    }
    total
}
