mod common;

use proptest::prelude::*;
use sfmcvrp_core::lp::{DenseLp, LpOutcome, Relation};
use sfmcvrp_core::mip::{
    build_node_model, build_path_model, decode_solution, evaluate_recourse, export_mps, parse_mps, solve_internal,
    BnbOptions, Limits, MipModel, Sense, SolveStatus, VarKind,
};
use sfmcvrp_core::routegen::{enumerate_all_routes, split_sequences};
use sfmcvrp_core::scenred::{fast_forward_select, reduction_distance};
use sfmcvrp_core::domain::ScenarioSet;

use common::{random_instance, recourse_oracle, small_fixture, split_oracle};

fn exact() -> BnbOptions {
    BnbOptions {
        limits: Limits {
            time: None,
            gap: 0.0,
            node_limit: None,
        },
        ..BnbOptions::default()
    }
}

#[derive(Clone, Debug)]
struct Spec {
    obj_bin: Vec<f64>,
    obj_cont: Vec<f64>,
    cont_upper: Vec<f64>,
    rows: Vec<(Vec<f64>, f64)>,
}

fn spec() -> impl Strategy<Value = Spec> {
    (1usize..=6, 0usize..=3, 1usize..=4).prop_flat_map(|(nb, nc, m)| {
        let n = nb + nc;
        (
            prop::collection::vec(-5.0..5.0f64, nb),
            prop::collection::vec(-3.0..3.0f64, nc),
            prop::collection::vec(0.5..5.0f64, nc),
            prop::collection::vec((prop::collection::vec(-2.0..4.0f64, n), 0.5..6.0f64), m),
        )
            .prop_map(|(obj_bin, obj_cont, cont_upper, rows)| Spec {
                obj_bin,
                obj_cont,
                cont_upper,
                rows,
            })
    })
}

fn build(s: &Spec) -> MipModel {
    let mut m = MipModel::new();
    for (k, &c) in s.obj_bin.iter().enumerate() {
        m.binary(format!("b{k}"), c).unwrap();
    }
    for (k, (&c, &u)) in s.obj_cont.iter().zip(&s.cont_upper).enumerate() {
        m.add_var(format!("x{k}"), VarKind::Continuous, 0.0, u, c).unwrap();
    }
    for (r, (coef, rhs)) in s.rows.iter().enumerate() {
        let terms = coef.iter().copied().enumerate().collect();
        m.add_constraint(format!("r{r}"), terms, Sense::Le, *rhs).unwrap();
    }
    m
}

/// Enumerates the binaries and solves the continuous rest as a dense LP.
fn enumerate(s: &Spec) -> f64 {
    let nb = s.obj_bin.len();
    let nc = s.obj_cont.len();
    let mut best = f64::INFINITY;
    for mask in 0..1usize << nb {
        let bits: Vec<f64> = (0..nb).map(|k| (mask >> k & 1) as f64).collect();
        let fixed: f64 = bits.iter().zip(&s.obj_bin).map(|(b, c)| b * c).sum();
        let mut lp = DenseLp::new(s.obj_cont.clone());
        for (k, &u) in s.cont_upper.iter().enumerate() {
            lp.add_row(&[(k, 1.0)], Relation::Le, u);
        }
        for (coef, rhs) in &s.rows {
            let used: f64 = bits.iter().zip(coef).map(|(b, a)| b * a).sum();
            let terms: Vec<(usize, f64)> = (0..nc).map(|k| (k, coef[nb + k])).collect();
            lp.add_row(&terms, Relation::Le, rhs - used);
        }
        if let LpOutcome::Optimal { objective, .. } = lp.solve().unwrap() {
            best = best.min(fixed + objective);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn branch_and_bound_matches_enumeration(s in spec()) {
        let sol = solve_internal(&build(&s), &exact()).unwrap();
        prop_assert_eq!(sol.status, SolveStatus::Optimal);
        let oracle = enumerate(&s);
        prop_assert!((sol.objective - oracle).abs() <= 1e-6, "bnb {} vs {}", sol.objective, oracle);
        prop_assert!(sol.best_bound <= sol.objective + 1e-9);
    }

    #[test]
    fn mps_round_trip_preserves_the_model(s in spec()) {
        let m = build(&s);
        let back = parse_mps(&export_mps(&m).text).unwrap();
        prop_assert_eq!(back.n_vars(), m.n_vars());
        prop_assert_eq!(back.n_constraints(), m.n_constraints());
        for (a, b) in m.variables.iter().zip(&back.variables) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert_eq!(a.kind, b.kind);
            prop_assert_eq!((a.lower, a.upper, a.obj), (b.lower, b.upper, b.obj));
        }
        for (a, b) in m.constraints.iter().zip(&back.constraints) {
            prop_assert_eq!(&a.terms, &b.terms);
            prop_assert_eq!((a.sense, a.rhs), (b.sense, b.rhs));
        }
        let sol = solve_internal(&back, &exact()).unwrap();
        prop_assert!((sol.objective - enumerate(&s)).abs() <= 1e-6);
    }

    #[test]
    fn split_matches_segmentation_brute_force(seed in 0u64..1000, n in 2usize..=9, cap in 4.0..12.0f64) {
        let inst = random_instance(n, 8.0, seed);
        let demands = inst.base_demands();
        let mut tour: Vec<usize> = inst.customers().collect();
        tour.rotate_left(seed as usize % n);
        let (routes, cost) = split_sequences(&tour, &demands, cap, &inst).unwrap();
        prop_assert!((cost - split_oracle(&inst, &tour, &demands, cap)).abs() <= 1e-9);
        let flat: Vec<usize> = routes.concat();
        prop_assert_eq!(flat, tour);
        for r in &routes {
            prop_assert!(r.iter().map(|&i| demands[i]).sum::<f64>() <= cap + 1e-9);
        }
    }

    #[test]
    fn reduction_invariants(
        values in prop::collection::vec(prop::collection::vec(0.0..10.0f64, 3), 2..=8),
        k_frac in 0.0..1.0f64,
    ) {
        let set = ScenarioSet::uniform(values.iter().map(|v| {
            let mut row = vec![0.0];
            row.extend(v);
            row
        }).collect()).unwrap();
        let n = set.n_scenarios();
        let mut last = f64::INFINITY;
        for k in 1..=n {
            let tree = fast_forward_select(&set, k).unwrap();
            prop_assert_eq!(tree.kept_ids.len(), k);
            prop_assert!((tree.new_probs.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            prop_assert!(tree.distance >= 0.0 && tree.distance <= last + 1e-12);
            let (d, _) = reduction_distance(&set, &tree.kept_ids).unwrap();
            prop_assert!((d - tree.distance).abs() <= 1e-9);
            last = tree.distance;
        }
        prop_assert!(last.abs() <= 1e-12);
        let k = 1 + (k_frac * (n - 1) as f64) as usize;
        let reduced = fast_forward_select(&set, k).unwrap().apply(&set).unwrap();
        prop_assert_eq!(reduced.n_scenarios(), k);
    }
}

#[test]
fn decoded_plans_are_consistent_and_recourse_matches_oracle() {
    for seed in 20..26 {
        let fx = small_fixture(5, 3, seed);
        let input = fx.input();
        let pool = enumerate_all_routes(&fx.instance, 5).unwrap();
        let model = build_path_model(&input, &pool).unwrap();
        let raw = solve_internal(&model, &exact()).unwrap();
        let plan = decode_solution(&model, &raw, &input).unwrap();
        plan.check(&input).unwrap();
        assert!((plan.costs.total - raw.objective).abs() <= 1e-6);

        let routes: Vec<(Vec<usize>, usize, f64)> = plan
            .routes
            .iter()
            .map(|r| (r.sequence.clone(), r.vehicle_type, r.length))
            .collect();
        let mut second = 0.0;
        for s in 0..fx.scenarios.n_scenarios() {
            let lp = evaluate_recourse(&plan, &input, s).unwrap();
            let oracle = recourse_oracle(&fx, &routes, s);
            assert!((lp.cost - oracle).abs() <= 1e-7, "seed {seed} scenario {s}: {} vs {oracle}", lp.cost);
            second += fx.scenarios.probability(s) * lp.cost;
        }
        let first = plan.costs.fixed + plan.costs.travel;
        assert!((first + second - plan.costs.total).abs() <= 1e-6);
    }
}

#[test]
fn node_model_decodes_to_the_same_cost() {
    for seed in 30..34 {
        let fx = small_fixture(4, 2, seed);
        let input = fx.input();
        let model = build_node_model(&input, true).unwrap();
        let raw = solve_internal(&model, &exact()).unwrap();
        let plan = decode_solution(&model, &raw, &input).unwrap();
        plan.check(&input).unwrap();
        assert!((plan.recompute_costs(&input).total - raw.objective).abs() <= 1e-6);
        for r in &plan.routes {
            assert!(!r.sequence.is_empty());
        }
    }
}
