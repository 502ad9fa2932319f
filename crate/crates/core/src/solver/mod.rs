//! Bounded-variable revised simplex.
//!
//! Every row `a_i x (rel) b_i` gets a logical variable `s_i` with
//! `a_i x + s_i = b_i`, whose bounds encode the relation. Rows whose logical
//! cannot absorb the initial residual get an artificial variable, and phase 1
//! minimizes the artificial sum. The basis is kept as a dense LU factorization
//! plus product-form updates, refactorized periodically.
//!
//! Pricing is Dantzig's largest reduced cost with a two-pass (Harris) ratio
//! test that prefers large pivots. After a run of degenerate pivots the
//! solver switches to Bland's lowest-index rule, with an exact minimum-ratio
//! test and lowest-index ties, until the objective moves again.

mod lu;

use serde::{Deserialize, Serialize};

use crate::lp::{LinearProgram, Relation};
use lu::DenseLu;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PivotRule {
    DantzigBlandFallback,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub feasibility_tol: f64,
    pub optimality_tol: f64,
    /// Defaults to `50 * (vars + constraints)`.
    pub max_iterations: Option<usize>,
    pub pivot_rule: PivotRule,
    pub refactor_interval: usize,
    /// Consecutive degenerate pivots before Bland's rule engages.
    pub degenerate_limit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-9,
            optimality_tol: 1e-9,
            max_iterations: None,
            pivot_rule: PivotRule::DantzigBlandFallback,
            refactor_interval: 100,
            degenerate_limit: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    /// Iteration limit or numerical breakdown; the point is not certified.
    Stalled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: Status,
    /// Structural variable values.
    pub values: Vec<f64>,
    pub objective: f64,
    /// Largest bound or row violation of `values`, recomputed from the LP.
    pub max_violation: f64,
    /// Row multipliers `y` with reduced costs `c - A^T y`.
    pub duals: Vec<f64>,
    pub iterations: usize,
    /// Optimal phase-1 artificial sum; positive certifies infeasibility.
    pub phase_one_objective: f64,
    pub bland_pivots: usize,
}

const PIVOT_TOL: f64 = 1e-9;
const SINGULAR_TOL: f64 = 1e-13;

/// Column-compressed structural matrix.
struct Columns {
    start: Vec<usize>,
    rows: Vec<usize>,
    vals: Vec<f64>,
}

impl Columns {
    fn new(lp: &LinearProgram) -> Self {
        let n = lp.num_vars();
        let mut counts = vec![0usize; n + 1];
        for c in &lp.constraints {
            for &(j, _) in &c.coeffs {
                counts[j + 1] += 1;
            }
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let start = counts.clone();
        let mut fill = counts;
        let nnz = start[n];
        let mut rows = vec![0; nnz];
        let mut vals = vec![0.0; nnz];
        for (i, c) in lp.constraints.iter().enumerate() {
            for &(j, a) in &c.coeffs {
                rows[fill[j]] = i;
                vals[fill[j]] = a;
                fill[j] += 1;
            }
        }
        Self { start, rows, vals }
    }

    fn col(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.start[j]..self.start[j + 1]).map(move |k| (self.rows[k], self.vals[k]))
    }
}

struct Eta {
    pos: usize,
    alpha: Vec<f64>,
}

enum Step {
    Optimal,
    Unbounded,
    Stalled,
}

struct Simplex<'a> {
    cfg: &'a SolverConfig,
    m: usize,
    n: usize,
    cols: Columns,
    /// Artificial variable `n + m + k` sits in row `art_row[k]` with sign `art_sign[k]`.
    art_row: Vec<usize>,
    art_sign: Vec<f64>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    x: Vec<f64>,
    basis: Vec<usize>,
    /// `Some(pos)` if basic.
    position: Vec<Option<usize>>,
    lu: Option<DenseLu>,
    etas: Vec<Eta>,
    iterations: usize,
    max_iterations: usize,
    bland_pivots: usize,
}

impl<'a> Simplex<'a> {
    fn total_vars(&self) -> usize {
        self.n + self.m + self.art_row.len()
    }

    fn column(&self, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        if j < self.n {
            for (i, a) in self.cols.col(j) {
                out[i] = a;
            }
        } else if j < self.n + self.m {
            out[j - self.n] = 1.0;
        } else {
            let k = j - self.n - self.m;
            out[self.art_row[k]] = self.art_sign[k];
        }
    }

    fn dot_column(&self, j: usize, y: &[f64]) -> f64 {
        if j < self.n {
            self.cols.col(j).map(|(i, a)| a * y[i]).sum()
        } else if j < self.n + self.m {
            y[j - self.n]
        } else {
            let k = j - self.n - self.m;
            self.art_sign[k] * y[self.art_row[k]]
        }
    }

    fn refactor(&mut self) -> bool {
        let m = self.m;
        let mut dense = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for (pos, &j) in self.basis.iter().enumerate() {
            self.column(j, &mut col);
            for i in 0..m {
                dense[i * m + pos] = col[i];
            }
        }
        match DenseLu::factor(m, dense, SINGULAR_TOL) {
            Ok(lu) => {
                self.lu = Some(lu);
                self.etas.clear();
                self.recompute_basic_values();
                true
            }
            Err(_) => false,
        }
    }

    fn recompute_basic_values(&mut self) {
        let mut r = self.rhs.clone();
        for j in 0..self.total_vars() {
            if self.position[j].is_none() && self.x[j] != 0.0 {
                let xj = self.x[j];
                if j < self.n {
                    for (i, a) in self.cols.col(j) {
                        r[i] -= a * xj;
                    }
                } else if j < self.n + self.m {
                    r[j - self.n] -= xj;
                } else {
                    let k = j - self.n - self.m;
                    r[self.art_row[k]] -= self.art_sign[k] * xj;
                }
            }
        }
        self.ftran(&mut r);
        for (pos, &j) in self.basis.iter().enumerate() {
            self.x[j] = r[pos];
        }
    }

    fn ftran(&self, v: &mut [f64]) {
        self.lu.as_ref().expect("factorized").solve(v);
        for eta in &self.etas {
            let p = eta.pos;
            let vp = v[p] / eta.alpha[p];
            if vp != 0.0 {
                for (i, a) in eta.alpha.iter().enumerate() {
                    if i != p {
                        v[i] -= a * vp;
                    }
                }
            }
            v[p] = vp;
        }
    }

    fn btran(&self, c: &mut [f64]) {
        for eta in self.etas.iter().rev() {
            let p = eta.pos;
            let s: f64 = eta
                .alpha
                .iter()
                .zip(c.iter())
                .enumerate()
                .filter(|&(i, _)| i != p)
                .map(|(_, (a, v))| a * v)
                .sum();
            c[p] = (c[p] - s) / eta.alpha[p];
        }
        self.lu.as_ref().expect("factorized").solve_transpose(c);
    }

    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.basis.iter().map(|&j| cost[j]).collect();
        self.btran(&mut y);
        y
    }

    /// Entering candidate: (variable, direction).
    fn price(&self, cost: &[f64], y: &[f64], bland: bool) -> Option<(usize, f64)> {
        let tol = self.cfg.optimality_tol;
        let mut best: Option<(usize, f64, f64)> = None;
        for j in 0..self.total_vars() {
            if self.position[j].is_some() || self.lower[j] == self.upper[j] {
                continue;
            }
            let d = cost[j] - self.dot_column(j, y);
            let at_lower = self.x[j] == self.lower[j];
            let at_upper = self.x[j] == self.upper[j];
            let dir = if d < -tol && !at_upper {
                1.0
            } else if d > tol && !at_lower {
                -1.0
            } else {
                continue;
            };
            if bland {
                return Some((j, dir));
            }
            if best.is_none_or(|(_, _, b)| d.abs() > b) {
                best = Some((j, dir, d.abs()));
            }
        }
        best.map(|(j, dir, _)| (j, dir))
    }

    /// Largest step along the entering direction and the basic position
    /// that blocks it (`None`: the entering variable reaches its other bound).
    ///
    /// Two passes in the style of Harris: the first finds the smallest ratio
    /// with bounds relaxed by the feasibility tolerance, the second picks the
    /// largest pivot among rows whose exact ratio fits under it. In Bland
    /// mode the exact minimum ratio with lowest-index ties is used instead.
    fn ratio_test(&self, q: usize, dir: f64, alpha: &[f64], bland: bool) -> (f64, Option<(usize, f64)>) {
        let tol = self.cfg.feasibility_tol;
        let scale = alpha.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let pivot_tol = PIVOT_TOL * scale.max(1.0);
        // (position, exact ratio, bound, |alpha|)
        let mut rows = Vec::new();
        for (pos, &a) in alpha.iter().enumerate() {
            if a.abs() <= pivot_tol {
                continue;
            }
            let j = self.basis[pos];
            let delta = -dir * a;
            let (room, bound) = if delta < 0.0 && self.lower[j].is_finite() {
                (self.x[j] - self.lower[j], self.lower[j])
            } else if delta > 0.0 && self.upper[j].is_finite() {
                (self.upper[j] - self.x[j], self.upper[j])
            } else {
                continue;
            };
            rows.push((pos, room.max(0.0) / delta.abs(), room, bound, a.abs()));
        }
        let range = self.upper[q] - self.lower[q];
        if bland {
            let mut best: Option<(usize, f64, f64)> = None;
            for &(pos, ratio, _, bound, _) in &rows {
                let better = match best {
                    None => true,
                    Some((bp, br, _)) => {
                        let tie = (ratio - br).abs() <= 1e-12 * (1.0 + br.abs());
                        (ratio < br && !tie) || (tie && self.basis[pos] < self.basis[bp])
                    }
                };
                if better {
                    best = Some((pos, ratio, bound));
                }
            }
            return match best {
                Some((_, ratio, _)) if range <= ratio => (range, None),
                Some((pos, ratio, bound)) => (ratio, Some((pos, bound))),
                None => (range, None),
            };
        }
        let relaxed = rows
            .iter()
            .map(|&(_, _, room, _, a)| (room.max(0.0) + tol) / a)
            .fold(f64::INFINITY, f64::min);
        if range <= relaxed {
            return (range, None);
        }
        let mut best: Option<(usize, f64, f64, f64)> = None;
        for &(pos, ratio, _, bound, a) in &rows {
            if ratio > relaxed {
                continue;
            }
            let better = match best {
                None => true,
                Some((bp, _, _, ba)) => a > ba || (a == ba && self.basis[pos] < self.basis[bp]),
            };
            if better {
                best = Some((pos, ratio, bound, a));
            }
        }
        match best {
            Some((pos, ratio, bound, _)) => (ratio, Some((pos, bound))),
            None => (range, None),
        }
    }

    fn run(&mut self, cost: &[f64]) -> Step {
        let mut degenerate_run = 0usize;
        let mut col = vec![0.0; self.m];
        loop {
            if self.iterations >= self.max_iterations {
                return Step::Stalled;
            }
            if self.etas.len() >= self.cfg.refactor_interval && !self.refactor() {
                return Step::Stalled;
            }
            let bland = degenerate_run >= self.cfg.degenerate_limit;
            let y = self.duals(cost);
            let Some((q, dir)) = self.price(cost, &y, bland) else {
                return Step::Optimal;
            };
            self.iterations += 1;
            if bland {
                self.bland_pivots += 1;
            }
            self.column(q, &mut col);
            let mut alpha = col.clone();
            self.ftran(&mut alpha);

            let (step, leaving) = self.ratio_test(q, dir, &alpha, bland);
            if !step.is_finite() {
                return Step::Unbounded;
            }

            if step <= self.cfg.feasibility_tol {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            for (pos, &a) in alpha.iter().enumerate() {
                if a != 0.0 {
                    let j = self.basis[pos];
                    self.x[j] -= dir * a * step;
                }
            }
            match leaving {
                None => {
                    // bound flip
                    self.x[q] = if dir > 0.0 { self.upper[q] } else { self.lower[q] };
                }
                Some((pos, bound)) => {
                    self.x[q] += dir * step;
                    let out = self.basis[pos];
                    self.x[out] = bound;
                    self.position[out] = None;
                    self.position[q] = Some(pos);
                    self.basis[pos] = q;
                    self.etas.push(Eta { pos, alpha });
                }
            }
        }
    }
}

/// Solves `min c.x` over the LP. Deterministic for identical inputs.
pub fn solve(lp: &LinearProgram, cfg: &SolverConfig) -> Solution {
    assert!(cfg.feasibility_tol > 0.0 && cfg.optimality_tol > 0.0);
    let m = lp.constraints.len();
    let n = lp.num_vars();
    let cols = Columns::new(lp);

    let mut lower = lp.lower.clone();
    let mut upper = lp.upper.clone();
    for c in &lp.constraints {
        let (lo, hi) = match c.relation {
            Relation::Eq => (0.0, 0.0),
            Relation::Le => (0.0, f64::INFINITY),
            Relation::Ge => (f64::NEG_INFINITY, 0.0),
        };
        lower.push(lo);
        upper.push(hi);
    }
    let mut x: Vec<f64> = (0..n)
        .map(|j| {
            if lower[j].is_finite() {
                lower[j]
            } else if upper[j].is_finite() {
                upper[j]
            } else {
                0.0
            }
        })
        .collect();
    let rhs: Vec<f64> = lp.constraints.iter().map(|c| c.rhs).collect();
    let mut residual = rhs.clone();
    for (i, c) in lp.constraints.iter().enumerate() {
        residual[i] -= c.activity(&x);
    }

    let mut basis = Vec::with_capacity(m);
    let mut art_row = Vec::new();
    let mut art_sign = Vec::new();
    let mut art_val = Vec::new();
    for i in 0..m {
        let (lo, hi) = (lower[n + i], upper[n + i]);
        let r = residual[i];
        if r >= lo - cfg.feasibility_tol && r <= hi + cfg.feasibility_tol {
            x.push(r.clamp(lo, hi));
            basis.push(n + i);
        } else {
            let s = r.clamp(lo, hi);
            x.push(s);
            let k = art_row.len();
            art_row.push(i);
            art_sign.push((r - s).signum());
            art_val.push((r - s).abs());
            basis.push(n + m + k);
        }
    }
    for v in art_val {
        x.push(v);
        lower.push(0.0);
        upper.push(f64::INFINITY);
    }
    let total = n + m + art_row.len();
    let mut position = vec![None; total];
    for (pos, &j) in basis.iter().enumerate() {
        position[j] = Some(pos);
    }

    let mut sx = Simplex {
        cfg,
        m,
        n,
        cols,
        art_row,
        art_sign,
        rhs,
        lower,
        upper,
        x,
        basis,
        position,
        lu: None,
        etas: Vec::new(),
        iterations: 0,
        max_iterations: cfg.max_iterations.unwrap_or(50 * (n + m).max(1)),
        bland_pivots: 0,
    };

    let finish = |sx: &Simplex, status: Status, cost: &[f64], phase_one: f64| -> Solution {
        let values = sx.x[..n].to_vec();
        let duals = if m > 0 && sx.lu.is_some() {
            sx.duals(cost)
        } else {
            vec![0.0; m]
        };
        Solution {
            status,
            objective: lp.objective_value(&values),
            max_violation: lp.max_violation(&values),
            values,
            duals,
            iterations: sx.iterations,
            phase_one_objective: phase_one,
            bland_pivots: sx.bland_pivots,
        }
    };

    let mut cost = vec![0.0; total];
    if m > 0 && !sx.refactor() {
        return finish(&sx, Status::Stalled, &cost, f64::NAN);
    }

    let mut phase_one = 0.0;
    if !sx.art_row.is_empty() {
        for c in cost.iter_mut().skip(n + m) {
            *c = 1.0;
        }
        let step = sx.run(&cost);
        phase_one = sx.x[n + m..].iter().sum();
        if let Step::Stalled = step {
            return finish(&sx, Status::Stalled, &cost, phase_one);
        }
        let scale = 1.0 + sx.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if phase_one > cfg.feasibility_tol * scale {
            return finish(&sx, Status::Infeasible, &cost, phase_one);
        }
        // Artificials stay at zero from here on; basic ones leave when touched.
        for j in n + m..total {
            sx.upper[j] = 0.0;
            if sx.position[j].is_none() {
                sx.x[j] = 0.0;
            }
        }
    }

    cost.iter_mut().for_each(|c| *c = 0.0);
    for &(j, c) in &lp.objective {
        cost[j] += c;
    }
    let status = match sx.run(&cost) {
        Step::Optimal => {
            if sx.refactor() {
                Status::Optimal
            } else {
                Status::Stalled
            }
        }
        Step::Unbounded => Status::Unbounded,
        Step::Stalled => Status::Stalled,
    };
    finish(&sx, status, &cost, phase_one)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::VarRole;

    fn var(lp: &mut LinearProgram, lo: f64, hi: f64, c: f64) -> usize {
        lp.add_var(lo, hi, c, VarRole::Other)
    }

    #[test]
    fn single_lower_bound_row() {
        let mut lp = LinearProgram::new();
        let x = var(&mut lp, 0.0, f64::INFINITY, 1.0);
        lp.add_constraint(vec![(x, 1.0)], Relation::Ge, 3.0).unwrap();
        let s = solve(&lp, &SolverConfig::default());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.values[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_equalities_are_infeasible() {
        let mut lp = LinearProgram::new();
        let x = var(&mut lp, 0.0, f64::INFINITY, 0.0);
        lp.add_constraint(vec![(x, 1.0)], Relation::Eq, 1.0).unwrap();
        lp.add_constraint(vec![(x, 1.0)], Relation::Eq, 2.0).unwrap();
        let s = solve(&lp, &SolverConfig::default());
        assert_eq!(s.status, Status::Infeasible);
        assert!(s.phase_one_objective > 0.5);
    }

    #[test]
    fn detects_unbounded() {
        let mut lp = LinearProgram::new();
        let x = var(&mut lp, 0.0, f64::INFINITY, -1.0);
        let y = var(&mut lp, 0.0, f64::INFINITY, 0.0);
        lp.add_constraint(vec![(x, 1.0), (y, -1.0)], Relation::Le, 1.0).unwrap();
        assert_eq!(solve(&lp, &SolverConfig::default()).status, Status::Unbounded);
    }

    #[test]
    fn iteration_limit_reports_stalled() {
        let mut lp = LinearProgram::new();
        let x = var(&mut lp, 0.0, f64::INFINITY, 1.0);
        let y = var(&mut lp, 0.0, f64::INFINITY, 1.0);
        lp.add_constraint(vec![(x, 1.0), (y, 2.0)], Relation::Ge, 3.0).unwrap();
        lp.add_constraint(vec![(x, 2.0), (y, 1.0)], Relation::Ge, 3.0).unwrap();
        let cfg = SolverConfig {
            max_iterations: Some(1),
            ..SolverConfig::default()
        };
        assert_eq!(solve(&lp, &cfg).status, Status::Stalled);
        let s = solve(&lp, &SolverConfig::default());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective - 2.0).abs() < 1e-9);
    }

    #[test]
    fn bounded_variables_and_free_variables() {
        // max x + y with x in [0, 2], y free, x + y <= 5, y - x <= 1
        let mut lp = LinearProgram::new();
        let x = var(&mut lp, 0.0, 2.0, -1.0);
        let y = var(&mut lp, f64::NEG_INFINITY, f64::INFINITY, -1.0);
        lp.add_constraint(vec![(x, 1.0), (y, 1.0)], Relation::Le, 5.0).unwrap();
        lp.add_constraint(vec![(x, -1.0), (y, 1.0)], Relation::Le, 1.0).unwrap();
        let s = solve(&lp, &SolverConfig::default());
        assert_eq!(s.status, Status::Optimal);
        assert!((s.objective + 5.0).abs() < 1e-9);
        assert!(s.values[0] <= 2.0 + 1e-12);
    }

    #[test]
    fn duals_price_the_rows() {
        // min x + 2y s.t. x + y >= 2, x <= 1.5  =>  x = 1.5, y = 0.5
        let mut lp = LinearProgram::new();
        let x = var(&mut lp, 0.0, f64::INFINITY, 1.0);
        let y = var(&mut lp, 0.0, f64::INFINITY, 2.0);
        lp.add_constraint(vec![(x, 1.0), (y, 1.0)], Relation::Ge, 2.0).unwrap();
        lp.add_constraint(vec![(x, 1.0)], Relation::Le, 1.5).unwrap();
        let s = solve(&lp, &SolverConfig::default());
        assert!((s.objective - 2.5).abs() < 1e-12);
        assert!((s.duals[0] - 2.0).abs() < 1e-12);
        assert!((s.duals[1] + 1.0).abs() < 1e-12);
    }
}
