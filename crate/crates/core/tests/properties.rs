mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use reweigh::balancer::{
    collapse_classes, compute_weights, solve_problem, trim, BalanceConfig, BalanceError,
};
use reweigh::data::{
    candidate_rank, derive_property_sets, parse_gap_tsv, parse_name_annotations, Dataset, NameSpan,
    PropertyFamilies,
};
use reweigh::lp::{
    build_balancing_lp, build_compact_dual, evaluate_objective, BalancingProblem, LinearProgram,
    Relation, Unit, VarRole,
};
use reweigh::oracle::{max_noise_bruteforce, pairwise_identity_check, sorted_prefix_noise};
use reweigh::report::{render_histogram, HistogramInput, HistogramSpec};
use reweigh::solver::{solve, SolverConfig, Status};

fn problem_of(ds: &Dataset, props: &[reweigh::data::PropertySet]) -> BalancingProblem {
    let pos = ds.positive();
    let classes = collapse_classes(&pos, props);
    BalancingProblem {
        units: classes
            .iter()
            .map(|c| Unit {
                group: c.group,
                multiplicity: c.multiplicity,
                memberships: c.signature.iter().copied().collect(),
            })
            .collect(),
        property_labels: props.iter().map(|s| s.label.clone()).collect(),
        total_mass: pos.len() as f64,
    }
}

/// Every vertex of `{x : lo <= x <= hi, A x (rel) b}` for tiny LPs: fix
/// `n` active constraints among rows and bounds and solve the square system.
fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    let n = lp.num_vars();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for c in &lp.constraints {
        let mut row = vec![0.0; n];
        for &(j, a) in &c.coeffs {
            row[j] += a;
        }
        planes.push((row, c.rhs));
    }
    for j in 0..n {
        for bound in [lp.lower[j], lp.upper[j]] {
            if bound.is_finite() {
                let mut row = vec![0.0; n];
                row[j] = 1.0;
                planes.push((row, bound));
            }
        }
    }
    let cost = lp.objective_dense();
    let mut best: Option<f64> = None;
    let p = planes.len();
    let mut pick = Vec::new();
    fn rec(
        start: usize,
        pick: &mut Vec<usize>,
        n: usize,
        p: usize,
        planes: &[(Vec<f64>, f64)],
        lp: &LinearProgram,
        cost: &[f64],
        best: &mut Option<f64>,
    ) {
        if pick.len() == n {
            let mut a: Vec<Vec<f64>> = pick.iter().map(|&i| planes[i].0.clone()).collect();
            let mut b: Vec<f64> = pick.iter().map(|&i| planes[i].1).collect();
            // Gaussian elimination with partial pivoting
            for k in 0..n {
                let piv = (k..n).max_by(|&x, &y| a[x][k].abs().total_cmp(&a[y][k].abs())).unwrap();
                if a[piv][k].abs() < 1e-9 {
                    return;
                }
                a.swap(k, piv);
                b.swap(k, piv);
                for i in 0..n {
                    if i != k {
                        let f = a[i][k] / a[k][k];
                        for j in k..n {
                            a[i][j] -= f * a[k][j];
                        }
                        b[i] -= f * b[k];
                    }
                }
            }
            let x: Vec<f64> = (0..n).map(|k| b[k] / a[k][k]).collect();
            if lp.max_violation(&x) <= 1e-7 {
                let v: f64 = cost.iter().zip(&x).map(|(c, v)| c * v).sum();
                *best = Some(best.map_or(v, |b: f64| b.min(v)));
            }
            return;
        }
        for i in start..p {
            pick.push(i);
            rec(i + 1, pick, n, p, planes, lp, cost, best);
            pick.pop();
        }
    }
    rec(0, &mut pick, n, p, &planes, lp, &cost, &mut best);
    best
}

fn small_lp() -> impl Strategy<Value = LinearProgram> {
    (1usize..=4, 1usize..=4).prop_flat_map(|(n, m)| {
        (
            prop::collection::vec(-3i32..=3, n),
            prop::collection::vec((prop::collection::vec(-3i32..=3, n), 0u8..3, -6i32..=6), m),
            prop::collection::vec(0u8..3, n),
        )
            .prop_map(move |(cost, rows, bounds)| {
                let mut lp = LinearProgram::new();
                for j in 0..n {
                    // every variable boxed so the optimum, if any, is finite
                    let (lo, hi) = match bounds[j] {
                        0 => (0.0, 5.0),
                        1 => (-2.0, 3.0),
                        _ => (1.0, 1.0 + 4.0),
                    };
                    lp.add_var(lo, hi, cost[j] as f64, VarRole::Other);
                }
                for (coeffs, rel, rhs) in rows {
                    let rel = [Relation::Eq, Relation::Le, Relation::Ge][rel as usize];
                    let coeffs = coeffs.iter().enumerate().map(|(j, &a)| (j, a as f64)).collect();
                    lp.add_constraint(coeffs, rel, rhs as f64).unwrap();
                }
                lp
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn simplex_matches_vertex_enumeration(lp in small_lp()) {
        let sol = solve(&lp, &SolverConfig::default());
        match vertex_enumeration(&lp) {
            Some(best) => {
                prop_assert_eq!(sol.status, Status::Optimal);
                prop_assert!((sol.objective - best).abs() <= 1e-7 * (1.0 + best.abs()),
                    "simplex {} vs vertices {}", sol.objective, best);
                prop_assert!(sol.max_violation <= 1e-7);
            }
            None => prop_assert_eq!(sol.status, Status::Infeasible),
        }
    }

    #[test]
    fn solver_is_deterministic(lp in small_lp()) {
        let cfg = SolverConfig::default();
        prop_assert_eq!(solve(&lp, &cfg), solve(&lp, &cfg));
    }

    #[test]
    fn column_generation_matches_primal_and_dual(seed in any::<u64>(), size in 4usize..=12, props in 0usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ds, sets) = common::random_instance(&mut rng, size, props);
        let problem = problem_of(&ds, &sets);
        let cg = solve_problem(&problem, &SolverConfig::default()).unwrap();
        let primal = solve(&build_balancing_lp(&problem).unwrap().lp, &SolverConfig::default());
        let dual = solve(&build_compact_dual(&problem).unwrap().lp, &SolverConfig::default());
        prop_assert_eq!(primal.status, Status::Optimal);
        prop_assert_eq!(dual.status, Status::Optimal);
        let tol = 1e-7 * (1.0 + primal.objective.abs());
        prop_assert!((cg.objective - primal.objective).abs() <= tol);
        prop_assert!((-dual.objective - primal.objective).abs() <= tol);
        let groups: Vec<_> = problem.units.iter().map(|u| u.group).collect();
        let mult: Vec<_> = problem.units.iter().map(|u| u.multiplicity).collect();
        let direct = evaluate_objective(&cg.weights, &groups, &mult);
        prop_assert!((direct - cg.objective).abs() <= tol);
    }

    #[test]
    fn collapsed_and_naive_agree(seed in any::<u64>(), size in 4usize..=12, props in 0usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ds, sets) = common::random_instance(&mut rng, size, props);
        let collapsed = compute_weights(&ds, &sets, &BalanceConfig::default()).unwrap();
        let naive = compute_weights(&ds, &sets, &BalanceConfig { collapse: false, ..BalanceConfig::default() }).unwrap();
        prop_assert!((collapsed.objective - naive.objective).abs() <= 1e-7 * (1.0 + naive.objective));
    }

    #[test]
    fn infeasible_instances_are_reported(seed in any::<u64>(), size in 4usize..=10) {
        // a property covering all masculine and no feminine example
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (ds, _) = common::random_instance(&mut rng, size, 0);
        let set = reweigh::data::PropertySet {
            label: "S".into(),
            members: ds.examples.iter().filter(|e| e.group == reweigh::data::Group::Masculine).map(|e| e.id.clone()).collect(),
        };
        let is_infeasible = matches!(
            compute_weights(&ds, &[set], &BalanceConfig::default()),
            Err(BalanceError::Infeasible { .. })
        );
        prop_assert!(is_infeasible);
    }

    #[test]
    fn trim_is_idempotent(seed in any::<u64>(), max_names in 2usize..10, max_rank in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = common::synthetic_gap(&mut rng, 15, 12);
        let once = trim(&ds, max_names, max_rank);
        prop_assert_eq!(trim(&once, max_names, max_rank), once);
    }

    #[test]
    fn rank_is_translation_invariant(seed in any::<u64>(), shift in 0usize..50) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = common::synthetic_gap(&mut rng, 5, 10);
        for e in &ds.examples {
            let mut moved = e.clone();
            moved.text = "~".repeat(shift) + &e.text;
            moved.pronoun_offset += shift;
            moved.candidate_a.offset += shift;
            moved.candidate_b.offset += shift;
            moved.name_spans = e.name_spans.iter().map(|s| NameSpan::new(s.start + shift, s.end + shift)).collect();
            prop_assert_eq!(candidate_rank(e), candidate_rank(&moved));
        }
    }

    #[test]
    fn dataset_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = common::synthetic_gap(&mut rng, 6, 8);
        let parsed = parse_gap_tsv(ds.to_gap_tsv().as_bytes()).unwrap();
        let annotated = parse_name_annotations(ds.to_annotations_jsonl().as_bytes(), &parsed).unwrap();
        prop_assert_eq!(annotated, ds);
    }

    #[test]
    fn property_families_partition(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ds = common::synthetic_gap(&mut rng, 10, 9);
        let names = derive_property_sets(&ds, PropertyFamilies::NAMES);
        let total: usize = names.iter().map(|s| s.members.len()).sum();
        prop_assert_eq!(total, ds.len());
        let dist = derive_property_sets(&ds, PropertyFamilies::DISTANCE);
        let ranked = ds.examples.iter().filter(|e| matches!(candidate_rank(e), Ok(Some(_)))).count();
        prop_assert_eq!(dist.iter().map(|s| s.members.len()).sum::<usize>(), ranked);
    }

    #[test]
    fn histogram_conserves_counts(values in prop::collection::vec(0.0f64..10.0, 0..80), width in 1usize..=10) {
        let input = HistogramInput {
            group: "g".into(),
            values: values.iter().enumerate().map(|(i, &v)| (i.to_string(), v)).collect(),
        };
        let spec = HistogramSpec { bin_width: width as f64 / 10.0, origin: 0.0, display_max: Some(4.0) };
        let h = render_histogram(&[input], spec);
        prop_assert_eq!(h.binned() + h.overflow.len(), values.len());
        for b in &h.bins {
            prop_assert!(b.bin_lo < b.bin_hi);
        }
    }

    #[test]
    fn noise_bound_ignores_member_order(ws in prop::collection::vec(0.0f64..5.0, 1..10), rot in 0usize..10) {
        let members: Vec<(String, f64)> = ws.iter().enumerate().map(|(i, &w)| (format!("x{i}"), w)).collect();
        let mut rotated = members.clone();
        let len = rotated.len();
        rotated.rotate_left(rot % len);
        let n = 2.0 * ws.iter().sum::<f64>().max(1.0);
        let a = sorted_prefix_noise(reweigh::data::Group::Masculine, &members, n).unwrap();
        let b = sorted_prefix_noise(reweigh::data::Group::Masculine, &rotated, n).unwrap();
        prop_assert!((a.deviation - b.deviation).abs() <= 1e-12);
        let brute = max_noise_bruteforce(reweigh::data::Group::Masculine, &rotated, n).unwrap();
        prop_assert!((brute.deviation - a.deviation).abs() <= 1e-12);
    }

    #[test]
    fn identity_holds(ws in prop::collection::vec(0.0f64..100.0, 0..40)) {
        prop_assert!(pairwise_identity_check(&ws).relative <= 1e-9);
    }
}
