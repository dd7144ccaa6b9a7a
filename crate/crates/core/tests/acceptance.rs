//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test --test acceptance -- 3 5`.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use sfmcvrp_core::domain::{build_neighborhoods, CostParams, Instance, Neighborhoods, Node, Profile, ScenarioSet};
use sfmcvrp_core::instancegen::{generate_synthetic, perturb_demand, rng_for, DensityGrid, GenConfig};
use sfmcvrp_core::kernelsearch::{kernel_search, KsConfig};
use sfmcvrp_core::measures::{in_sample_stability, measure_suite, ModelKind, SolveSetup};
use sfmcvrp_core::mip::{
    apply_measure_variant, build_node_model, build_path_model, build_path_model_with, decode_solution,
    evaluate_recourse, solve, solve_internal, Backend, BnbOptions, Limits, MeasureVariant, MipModel, MipSolution,
    PathOptions, PlanRoute, PlanSolution, SolveStatus, StochasticInput,
};
use sfmcvrp_core::routegen::{
    alns_cvrp, build_route_pool, enumerate_all_routes, split_sequences, RoutePool,
};
use sfmcvrp_core::scenred::{fast_forward_select, reduction_distance, transport_lp_oracle};

use common::{brute_force_optimum, cvrp_oracle, random_instance, small_fixture, split_oracle, Fixture};

type Outcome = Result<String, String>;

fn exact() -> Limits {
    Limits {
        time: None,
        gap: 0.0,
        node_limit: None,
    }
}

fn solve_exact(model: &MipModel) -> MipSolution {
    let sol = solve_internal(
        model,
        &BnbOptions {
            limits: exact(),
            ..BnbOptions::default()
        },
    )
    .expect("solve");
    assert_eq!(sol.status, SolveStatus::Optimal, "exact solve did not finish");
    sol
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn highs_command() -> Option<String> {
    let ok = std::process::Command::new("python3")
        .args(["-c", "import highspy"])
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false);
    ok.then(|| {
        format!(
            "python3 {}/../../scripts/highs_solve.py {{mps}} {{sol}} {{time}} {{gap}}",
            env!("CARGO_MANIFEST_DIR")
        )
    })
}

fn criterion_1() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let fx = small_fixture(5, 3, seed);
        let input = fx.input();
        let node = solve_exact(&build_node_model(&input, false).unwrap());
        let pool = enumerate_all_routes(&fx.instance, 5).unwrap();
        let path = solve_exact(&build_path_model(&input, &pool).unwrap());
        let brute = brute_force_optimum(&fx);
        let dev = (node.objective - brute).abs().max((path.objective - brute).abs());
        worst = worst.max(dev);
        ensure(dev <= 1e-6, || {
            format!(
                "seed {seed}: node {} path {} brute force {brute}",
                node.objective, path.objective
            )
        })?;
    }
    Ok(format!("10 instances agree, max deviation {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    let mut fewer = 0;
    let mut counts = Vec::new();
    for seed in 0..10 {
        let fx = small_fixture(5, 3, seed);
        let input = fx.input();
        let plain = solve_exact(&build_node_model(&input, false).unwrap());
        let tight = solve_exact(&build_node_model(&input, true).unwrap());
        ensure((plain.objective - tight.objective).abs() <= 1e-6, || {
            format!("seed {seed}: optimum {} vs {} with inequalities", plain.objective, tight.objective)
        })?;
        ensure(tight.root_bound >= plain.root_bound - 1e-9, || {
            format!("seed {seed}: root bound {} worse than {}", tight.root_bound, plain.root_bound)
        })?;
        if tight.nodes <= plain.nodes {
            fewer += 1;
        }
        counts.push(format!("{}/{}", tight.nodes, plain.nodes));
    }
    let detail = format!("node counts with/without [{}]", counts.join(" "));
    ensure(fewer >= 7, || format!("only {fewer}/10 with fewer nodes; {detail}"))?;
    Ok(format!("optima equal, root bounds never worse, {fewer}/10 fewer nodes; {detail}"))
}

fn criterion_3() -> Outcome {
    let mut rng = rng_for(33, 0);
    let mut checked = 0;
    for _ in 0..50 {
        let n_scen = rng.gen_range(2..=8);
        let dim = rng.gen_range(1..=4);
        let demands: Vec<Vec<f64>> = (0..n_scen)
            .map(|_| {
                let mut d = vec![0.0];
                d.extend((0..dim).map(|_| rng.gen_range(0.0..10.0)));
                d
            })
            .collect();
        let mut probs: Vec<f64> = (0..n_scen).map(|_| rng.gen_range(0.1..1.0)).collect();
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);
        let set = ScenarioSet::new(demands, probs).unwrap();
        for mask in 1..1usize << n_scen {
            let kept: Vec<usize> = (0..n_scen).filter(|&k| mask >> k & 1 == 1).collect();
            let (d, _) = reduction_distance(&set, &kept).unwrap();
            let lp = transport_lp_oracle(&set, &kept).unwrap();
            ensure((d - lp).abs() <= 1e-9, || format!("kept {kept:?}: rule {d} vs LP {lp}"))?;
            checked += 1;
        }
    }
    let set = ScenarioSet::uniform(vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![0.0, 10.0]]).unwrap();
    let tree = fast_forward_select(&set, 2).unwrap();
    let mut kept = tree.kept_ids.clone();
    kept.sort_unstable();
    let probs: BTreeMap<usize, f64> = tree.kept_ids.iter().copied().zip(tree.new_probs.iter().copied()).collect();
    ensure(kept == [1, 2], || format!("kept {kept:?}"))?;
    ensure((tree.distance - 1.0 / 3.0).abs() <= 1e-12, || format!("distance {}", tree.distance))?;
    ensure(
        (probs[&1] - 2.0 / 3.0).abs() <= 1e-12 && (probs[&2] - 1.0 / 3.0).abs() <= 1e-12,
        || format!("probabilities {probs:?}"),
    )?;
    Ok(format!(
        "{checked} kept subsets match the transport LP; 1-D example keeps values {{1, 10}} at distance 1/3"
    ))
}

fn measures_setup<'a>(
    instance: &'a Instance,
    neighborhoods: &'a Neighborhoods,
    costs: &'a CostParams,
    pool: &'a RoutePool,
) -> SolveSetup<'a> {
    SolveSetup {
        instance,
        neighborhoods,
        costs,
        kind: ModelKind::Path,
        pool: Some(pool),
        with_valid_ineq: false,
        path_options: PathOptions::default(),
        backend: Backend::Internal,
        limits: exact(),
    }
}

fn criterion_4() -> Outcome {
    for seed in 0..10 {
        let fx = small_fixture(8, 5, 400 + seed);
        let pool = build_route_pool(&fx.instance, &fx.scenarios, 40, 2, 400 + seed).unwrap();
        let setup = measures_setup(&fx.instance, &fx.neighborhoods, &fx.costs, &pool);
        let (_, rp) = setup.solve(&fx.scenarios).unwrap();
        let report = measure_suite(&setup, &fx.scenarios, &rp).unwrap();
        let bad = report.violations(1e-6);
        ensure(bad.is_empty(), || format!("seed {}: violated {bad:?}", 400 + seed))?;
        ensure(report.bounds_only.is_empty(), || {
            format!("seed {}: inexact {:?}", 400 + seed, report.bounds_only)
        })?;
    }
    let fx = small_fixture(8, 1, 499);
    let pool = build_route_pool(&fx.instance, &fx.scenarios, 40, 2, 499).unwrap();
    let setup = measures_setup(&fx.instance, &fx.neighborhoods, &fx.costs, &pool);
    let (_, rp) = setup.solve(&fx.scenarios).unwrap();
    let report = measure_suite(&setup, &fx.scenarios, &rp).unwrap();
    ensure(
        report.evpi == 0.0
            && report.vss_fr == 0.0
            && report.vss_f == 0.0
            && report.luds_fr == 0.0
            && report.luds_f == 0.0,
        || format!("single scenario: {}", report.to_json().unwrap()),
    )?;
    Ok("10 instances satisfy every ordering; single scenario gives EVPI = VSS = LUDS = 0".into())
}

fn plan_with(input: &StochasticInput, routes: &[(Vec<usize>, usize)]) -> PlanSolution {
    let mut plan = PlanSolution::empty(input);
    for (seq, p) in routes {
        plan.fleet[*p] += 1;
        plan.routes.push(PlanRoute {
            sequence: seq.clone(),
            vehicle_type: *p,
            vehicle_id: input.instance.vehicle_types()[*p].id.clone(),
            length: input.instance.tour_length(seq),
        });
    }
    plan
}

/// Solves the path model with the first stage fixed to `plan`.
fn fixed_plan_solve(input: &StochasticInput, plan: &PlanSolution) -> PlanSolution {
    let mut seqs: Vec<Vec<usize>> = plan.routes.iter().map(|r| r.sequence.clone()).collect();
    seqs.extend(input.instance.customers().map(|i| vec![i]));
    let pool = RoutePool::from_sequences(input.instance, &seqs).unwrap();
    let model = build_path_model(input, &pool).unwrap();
    let fixed = apply_measure_variant(&model, MeasureVariant::FixFirstStage, plan).unwrap();
    let raw = solve_exact(&fixed);
    decode_solution(&fixed, &raw, input).unwrap()
}

fn two_route_fixture() -> Fixture {
    let coords = [
        (0.0, 0.0),
        (5.0, 1.5),
        (1.0, 5.0),
        (-3.0, 3.0),
        (-1.5, -3.0),
        (3.5, -2.0),
        (2.0, 6.2),
        (-2.0, -4.2),
        (-1.5, 6.2),
        (1.0, -1.8),
        (-3.5, 0.5),
        (3.5, 3.5),
    ];
    let demand = [0.0, 2.0, 1.0, 2.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.0, 3.0, 4.0];
    let nodes = coords
        .iter()
        .enumerate()
        .map(|(id, &(x, y))| Node {
            id,
            x,
            y,
            base_demand: demand[id],
        })
        .collect();
    let base = Instance::with_profile(nodes, Profile::Small).unwrap();
    let mut types = base.vehicle_types().to_vec();
    types[0].capacity = 10.0;
    types[1].capacity = 5.0;
    let instance = base.with_vehicle_types(types).unwrap();
    let n = instance.n_nodes();
    let mut out_sets: Vec<Vec<usize>> = (0..n).map(|i| if i == 0 { vec![] } else { vec![i] }).collect();
    for (i, j) in [(3, 10), (10, 3), (4, 10), (10, 4), (1, 11), (11, 1)] {
        out_sets[i].push(j);
    }
    let mut in_sets = vec![Vec::new(); n];
    for (i, set) in out_sets.iter_mut().enumerate() {
        set.sort_unstable();
        for &j in set.iter() {
            in_sets[j].push(i);
        }
    }
    let scenarios = ScenarioSet::deterministic(demand.to_vec()).unwrap();
    Fixture {
        instance,
        scenarios,
        neighborhoods: Neighborhoods {
            out_radius: 0.0,
            in_radius: 0.0,
            out_sets,
            in_sets,
        },
        costs: CostParams::default(),
    }
}

fn no_split_check(seed: u64) -> Result<(), String> {
    let base = random_instance(8, 6.0, 500 + seed);
    let mut types = base.vehicle_types().to_vec();
    for t in &mut types {
        t.capacity = 1000.0;
    }
    let instance = base.with_vehicle_types(types).unwrap();
    let scenarios = common::scenarios(&instance, 2, 600 + seed, 0.5, 2.0);
    let fx = Fixture::new(instance, scenarios, 20.0);
    let input = fx.input();
    let plan = plan_with(&input, &[(vec![1, 2, 3], 0), (vec![4, 5], 1)]);
    let on_route = [1, 2, 3, 4, 5];
    let solved = fixed_plan_solve(&input, &plan);
    for s in 0..fx.scenarios.n_scenarios() {
        let lp = evaluate_recourse(&plan, &input, s).map_err(|e| e.to_string())?;
        for (label, actions, unserved) in [
            ("recourse LP", &lp.actions, &lp.unserved),
            ("fixed MIP", &solved.recourse[s], &solved.unserved[s]),
        ] {
            for j in 6..=8 {
                let nearest = *on_route
                    .iter()
                    .min_by(|&&a, &&b| fx.instance.dist(a, j).total_cmp(&fx.instance.dist(b, j)))
                    .unwrap();
                let origins: Vec<(usize, f64)> =
                    actions.iter().filter(|a| a.to == j).map(|a| (a.from, a.fraction)).collect();
                for (x, a) in origins.iter().enumerate() {
                    for b in &origins[x + 1..] {
                        ensure(a.1 * b.1 < 1e-9, || {
                            format!("seed {seed} scenario {s} {label}: node {j} split {origins:?}")
                        })?;
                    }
                }
                ensure(
                    unserved[j] < 1e-9
                        && origins.len() == 1
                        && origins[0].0 == nearest
                        && (origins[0].1 - 1.0).abs() < 1e-9,
                    || format!("seed {seed} scenario {s} {label}: node {j} from {origins:?}, nearest {nearest}"),
                )?;
            }
        }
    }
    Ok(())
}

fn criterion_5() -> Outcome {
    let fx = two_route_fixture();
    let input = fx.input();
    let plan = plan_with(&input, &[(vec![1, 5, 4], 0), (vec![2, 3], 1)]);
    let lp = evaluate_recourse(&plan, &input, 0).map_err(|e| e.to_string())?;
    let solved = fixed_plan_solve(&input, &plan);
    for (label, actions, unserved) in [
        ("recourse LP", &lp.actions, &lp.unserved),
        ("fixed MIP", &solved.recourse[0], &solved.unserved[0]),
    ] {
        let positive = fx.instance.customers().filter(|&j| fx.scenarios.demand(0, j) > 0.0);
        ensure(positive.into_iter().all(|j| unserved[j].abs() < 1e-9), || {
            format!("{label}: unserved {unserved:?}")
        })?;
        let split = [10, 11].iter().any(|&j| {
            actions
                .iter()
                .filter(|a| a.to == j && a.from != j && a.fraction > 1e-9)
                .count()
                > 1
        });
        ensure(split, || format!("{label}: no split recourse in {actions:?}"))?;
    }
    for seed in 0..20 {
        no_split_check(seed)?;
    }
    Ok("fixture fully served with split recourse; 20 ample-capacity instances serve each node from its nearest origin".into())
}

fn criterion_6() -> Outcome {
    let mut rng = rng_for(66, 0);
    let mut worst: f64 = 0.0;
    for k in 0..25 {
        let n = rng.gen_range(4..=8);
        let inst = random_instance(n, 10.0, 700 + k);
        let demands = inst.base_demands();
        let capacity = 10.0;
        let (_, cost) = alns_cvrp(&inst, &demands, capacity, 5000, k).unwrap();
        let opt = cvrp_oracle(&inst, &demands, capacity);
        worst = worst.max(cost / opt - 1.0);
        ensure(cost <= 1.05 * opt + 1e-9, || format!("instance {k}: ALNS {cost} vs optimum {opt}"))?;

        for _ in 0..10 {
            let mut tour: Vec<usize> = inst.customers().collect();
            tour.shuffle(&mut rng);
            let (_, split) = split_sequences(&tour, &demands, capacity, &inst).unwrap();
            let brute = split_oracle(&inst, &tour, &demands, capacity);
            ensure((split - brute).abs() <= 1e-9, || {
                format!("instance {k}: split {split} vs brute force {brute} on {tour:?}")
            })?;
        }
    }
    Ok(format!("25 CVRPs, worst ALNS gap {:.3}%; 250 splits match brute force", 100.0 * worst))
}

struct KsInstance {
    instance: Instance,
    scenarios: ScenarioSet,
    neighborhoods: Neighborhoods,
    costs: CostParams,
    pool: RoutePool,
}

fn ks_instance() -> KsInstance {
    let instance = common::random_instance(20, 30.0, 7);
    let sample = common::scenarios(&instance, 100, 3, 0.5, 1.5);
    let scenarios = fast_forward_select(&sample, 10).unwrap().apply(&sample).unwrap();
    let pool = build_route_pool(&instance, &sample, 200, 2, 1).unwrap();
    let neighborhoods = build_neighborhoods(&instance, 2.0, 2.0);
    KsInstance {
        instance,
        scenarios,
        neighborhoods,
        costs: CostParams::default(),
        pool,
    }
}

fn criterion_7() -> Outcome {
    let ks = ks_instance();
    ensure(ks.pool.len() == 200, || format!("pool has {} routes", ks.pool.len()))?;
    let input = StochasticInput {
        instance: &ks.instance,
        scenarios: &ks.scenarios,
        neighborhoods: &ks.neighborhoods,
        costs: &ks.costs,
    };
    let opts = PathOptions { aggregate_links: true };
    let model = build_path_model_with(&input, &ks.pool, &opts).unwrap();
    let (reference, kind) = match highs_command() {
        Some(command) => {
            let sol = solve(&model, &Backend::MpsExternal { command }, &exact()).map_err(|e| e.to_string())?;
            ensure(sol.status == SolveStatus::Optimal, || format!("HiGHS status {:?}", sol.status))?;
            (sol.objective, "HiGHS optimum")
        }
        None => {
            let sol = solve(&model, &Backend::Internal, &Limits::with_time(600.0)).map_err(|e| e.to_string())?;
            if sol.status == SolveStatus::Optimal {
                (sol.objective, "internal optimum")
            } else {
                (sol.best_bound, "internal lower bound")
            }
        }
    };
    let mut lines = Vec::new();
    for n in [20, 50, 100] {
        let started = Instant::now();
        let cfg = KsConfig {
            bucket_size: n,
            t_max: 240.0,
            seed: 11,
            path_options: opts,
            ..KsConfig::default()
        };
        let (plan, trace) = kernel_search(&input, &ks.pool, &cfg).map_err(|e| e.to_string())?;
        let secs = started.elapsed().as_secs_f64();
        plan.check(&input).map_err(|e| format!("N={n}: infeasible plan: {e}"))?;
        ensure(trace.is_monotone(), || format!("N={n}: incumbent trace not monotone"))?;
        ensure(secs < 900.0, || format!("N={n}: {secs:.0}s"))?;
        ensure(plan.costs.total <= 1.05 * reference + 1e-6, || {
            format!("N={n}: {} vs {kind} {reference}", plan.costs.total)
        })?;
        lines.push(format!("N={n}: {:.3} in {secs:.0}s", plan.costs.total));
    }
    Ok(format!("{kind} {reference:.3}; {}", lines.join(", ")))
}

fn criterion_8() -> Outcome {
    let instance = common::random_instance(7, 6.0, 808);
    let sample = common::scenarios(&instance, 100, 809, 0.0, 4.0);
    let pool = build_route_pool(&instance, &sample, 200, 2, 810).unwrap();
    let neighborhoods = build_neighborhoods(&instance, 2.0, 2.0);
    let costs = CostParams::default();
    let setup = SolveSetup {
        instance: &instance,
        neighborhoods: &neighborhoods,
        costs: &costs,
        kind: ModelKind::Path,
        pool: Some(&pool),
        with_valid_ineq: false,
        path_options: PathOptions { aggregate_links: true },
        backend: Backend::Internal,
        limits: Limits::with_time(300.0),
    };
    let gen = GenConfig {
        noise_low: 0.0,
        noise_high: 4.0,
        round_demand: true,
        ..GenConfig::default()
    };
    let started = Instant::now();
    let table = in_sample_stability(&setup, &gen, &[5, 10, 20], 5, 812).map_err(|e| e.to_string())?;
    let secs = started.elapsed().as_secs_f64();
    let dir = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("stability");
    std::fs::create_dir_all(&dir).unwrap();
    std::fs::write(dir.join("stability_runs.csv"), table.to_csv()).unwrap();
    std::fs::write(dir.join("stability_summary.csv"), table.summary_csv()).unwrap();
    let (ok, pairs) = table.spread_trend();
    let spreads: Vec<String> = table
        .summary
        .iter()
        .map(|s| format!("|S|={} sd {:.3}", s.size, s.std_dev))
        .collect();
    ensure(secs < 1800.0, || format!("{secs:.0}s"))?;
    ensure(ok >= 2, || format!("spread reductions {ok}/{pairs}: {}", spreads.join(", ")))?;
    Ok(format!("{secs:.0}s, spread reductions {ok}/{pairs}: {}", spreads.join(", ")))
}

/// Every artifact of a seeded pipeline run, keyed by file name.
fn pipeline(seed: u64) -> BTreeMap<String, String> {
    let grid = DensityGrid::uniform_rect(6.0, 6.0, 1.5);
    let gen = GenConfig {
        n_requests: 12,
        n_scenarios: 20,
        noise_low: 0.5,
        noise_high: 1.5,
        seed,
        round_demand: true,
        ..GenConfig::default()
    };
    let instance = generate_synthetic(&grid, &gen).unwrap();
    let scenarios = perturb_demand(&instance, &gen).unwrap();
    let tree = fast_forward_select(&scenarios, 4).unwrap();
    let reduced = tree.apply(&scenarios).unwrap();
    let pool = build_route_pool(&instance, &scenarios, 40, 2, seed).unwrap();
    let neighborhoods = build_neighborhoods(&instance, 2.0, 2.0);
    let costs = CostParams::default();
    let setup = SolveSetup {
        instance: &instance,
        neighborhoods: &neighborhoods,
        costs: &costs,
        kind: ModelKind::Path,
        pool: Some(&pool),
        with_valid_ineq: false,
        path_options: PathOptions::default(),
        backend: Backend::Internal,
        limits: Limits::default(),
    };
    let (plan, rp) = setup.solve(&reduced).unwrap();
    let report = measure_suite(&setup, &reduced, &rp).unwrap();
    let mut out = BTreeMap::new();
    out.insert("instance.json".into(), instance.to_json().unwrap());
    out.insert("scenarios.csv".into(), scenarios.to_csv());
    out.insert("reduced.csv".into(), reduced.to_csv());
    out.insert("pool.json".into(), pool.to_json().unwrap());
    out.insert("plan.json".into(), plan.to_json().unwrap());
    out.insert("measures.json".into(), report.to_json().unwrap());
    out
}

fn criterion_9() -> Outcome {
    let a = pipeline(99);
    let b = pipeline(99);
    for (name, text) in &a {
        ensure(b.get(name) == Some(text), || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} artifacts byte-identical across two runs", a.len()))
}

fn main() -> ExitCode {
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let criteria: [(&str, &str, fn() -> Outcome); 9] = [
        ("1", "formulation equivalence", criterion_1),
        ("2", "valid inequalities", criterion_2),
        ("3", "scenario reduction", criterion_3),
        ("4", "stochastic-measure ordering", criterion_4),
        ("5", "recourse properties", criterion_5),
        ("6", "ALNS quality and split", criterion_6),
        ("7", "kernel search", criterion_7),
        ("8", "in-sample stability", criterion_8),
        ("9", "end-to-end determinism", criterion_9),
    ];
    let limits = [300.0, 300.0, 120.0, f64::INFINITY, f64::INFINITY, 600.0, f64::INFINITY, 1800.0, f64::INFINITY];
    let mut failed = 0;
    for ((id, name, run), limit) in criteria.iter().zip(limits) {
        if !filter.is_empty() && !filter.iter().any(|f| f == id) {
            continue;
        }
        let started = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        let outcome = outcome.and_then(|msg| {
            if secs < limit {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {secs:.0}s, limit {limit:.0}s"))
            }
        });
        match outcome {
            Ok(msg) => println!("PASS criterion {id} ({name}, {secs:.1}s): {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL criterion {id} ({name}, {secs:.1}s): {msg}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
