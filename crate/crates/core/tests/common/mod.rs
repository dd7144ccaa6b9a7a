//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use rand::Rng;
use sfmcvrp_core::domain::{
    build_neighborhoods, CostParams, Instance, Neighborhoods, Node, Profile, ScenarioSet, DEPOT,
};
use sfmcvrp_core::instancegen::{perturb_demand, rng_for, GenConfig};
use sfmcvrp_core::lp::{DenseLp, LpOutcome, Relation};

/// `n` demand nodes uniformly in a `side` x `side` km square, depot at the
/// centre, integer base demands in 1..=4.
pub fn random_instance(n: usize, side: f64, seed: u64) -> Instance {
    let mut rng = rng_for(seed, 0);
    let mut nodes = vec![Node {
        id: 0,
        x: side / 2.0,
        y: side / 2.0,
        base_demand: 0.0,
    }];
    for id in 1..=n {
        nodes.push(Node {
            id,
            x: rng.gen_range(0.0..side),
            y: rng.gen_range(0.0..side),
            base_demand: rng.gen_range(1..=4) as f64,
        });
    }
    Instance::with_profile(nodes, Profile::Small).unwrap()
}

/// Integer scenario demands `round(base * U(low, high))`.
pub fn scenarios(inst: &Instance, n_scenarios: usize, seed: u64, low: f64, high: f64) -> ScenarioSet {
    perturb_demand(
        inst,
        &GenConfig {
            n_scenarios,
            noise_low: low,
            noise_high: high,
            seed,
            round_demand: true,
            ..GenConfig::default()
        },
    )
    .unwrap()
}

pub struct Fixture {
    pub instance: Instance,
    pub scenarios: ScenarioSet,
    pub neighborhoods: Neighborhoods,
    pub costs: CostParams,
}

impl Fixture {
    pub fn new(instance: Instance, scenarios: ScenarioSet, radius: f64) -> Self {
        let neighborhoods = build_neighborhoods(&instance, radius, radius);
        Fixture {
            instance,
            scenarios,
            neighborhoods,
            costs: CostParams::default(),
        }
    }

    pub fn input(&self) -> sfmcvrp_core::mip::StochasticInput<'_> {
        sfmcvrp_core::mip::StochasticInput {
            instance: &self.instance,
            scenarios: &self.scenarios,
            neighborhoods: &self.neighborhoods,
            costs: &self.costs,
        }
    }
}

/// Seeded small fixture: `n` nodes in a 6 km square, 2 km neighborhoods.
pub fn small_fixture(n: usize, n_scenarios: usize, seed: u64) -> Fixture {
    let inst = random_instance(n, 6.0, seed);
    let scen = scenarios(&inst, n_scenarios, seed + 1000, 0.5, 2.0);
    Fixture::new(inst, scen, 2.0)
}

fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for k in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(k);
        for mut tail in permutations(&rest) {
            tail.insert(0, head);
            out.push(tail);
        }
    }
    out
}

fn closed_length(inst: &Instance, seq: &[usize]) -> f64 {
    let mut total = 0.0;
    let mut prev = DEPOT;
    for &i in seq {
        total += inst.dist(prev, i);
        prev = i;
    }
    total + inst.dist(prev, DEPOT)
}

/// Shortest closed tour through `block`, by trying every order.
pub fn best_tour(inst: &Instance, block: &[usize]) -> f64 {
    permutations(block)
        .iter()
        .map(|p| closed_length(inst, p))
        .fold(f64::INFINITY, f64::min)
}

/// Minimum second-stage cost of scenario `s` for fixed routes `(block, type, length)`.
pub fn recourse_oracle(fx: &Fixture, routes: &[(Vec<usize>, usize, f64)], s: usize) -> f64 {
    let inst = &fx.instance;
    let scen = &fx.scenarios;
    let mut cols: Vec<(usize, usize, usize)> = Vec::new();
    let mut obj = Vec::new();
    for (k, (block, _, _)) in routes.iter().enumerate() {
        for &i in block {
            for &j in fx.neighborhoods.out_set(i) {
                cols.push((k, i, j));
                obj.push(if i == j {
                    0.0
                } else {
                    fx.costs.recourse_cost(inst.dist(i, j))
                });
            }
        }
    }
    let w0 = obj.len();
    let n = inst.n_customers();
    for j in 1..=n {
        obj.push(fx.costs.gamma * scen.demand(s, j));
    }
    let mut lp = DenseLp::new(obj);
    for j in 1..=n {
        let mut row: Vec<(usize, f64)> = cols
            .iter()
            .enumerate()
            .filter(|(_, c)| c.2 == j)
            .map(|(v, _)| (v, 1.0))
            .collect();
        row.push((w0 + j - 1, 1.0));
        lp.add_row(&row, Relation::Eq, 1.0);
    }
    for (k, (_, p, len)) in routes.iter().enumerate() {
        let vt = &inst.vehicle_types()[*p];
        let cap: Vec<(usize, f64)> = cols
            .iter()
            .enumerate()
            .filter(|(_, c)| c.0 == k)
            .map(|(v, c)| (v, scen.demand(s, c.2)))
            .collect();
        lp.add_row(&cap, Relation::Le, vt.capacity);
        let time: Vec<(usize, f64)> = cols
            .iter()
            .enumerate()
            .filter(|(_, c)| c.0 == k && c.1 != c.2)
            .map(|(v, c)| {
                (
                    v,
                    inst.service_time(c.2) + fx.costs.beta * inst.travel_time(*p, c.1, c.2),
                )
            })
            .collect();
        lp.add_row(&time, Relation::Le, inst.shift_limit() - len / vt.speed);
    }
    match lp.solve().unwrap() {
        LpOutcome::Optimal { objective, .. } => objective,
        other => panic!("recourse oracle LP failed: {other:?}"),
    }
}

/// Exhaustive optimum over every fleet, route set and type assignment, with
/// the second stage solved exactly per scenario. Assumes time is slack.
pub fn brute_force_optimum(fx: &Fixture) -> f64 {
    let inst = &fx.instance;
    let n = inst.n_customers();
    assert!(n <= 6, "brute force is limited to 6 nodes");
    let types = inst.vehicle_types();
    let mut best = f64::INFINITY;
    // label[i] = 0 for unrouted, k >= 1 for block k (restricted growth).
    let mut label = vec![0usize; n];
    loop {
        let n_blocks = *label.iter().max().unwrap();
        let blocks: Vec<Vec<usize>> = (1..=n_blocks)
            .map(|b| (0..n).filter(|&i| label[i] == b).map(|i| i + 1).collect())
            .collect();
        let lengths: Vec<f64> = blocks.iter().map(|b| best_tour(inst, b)).collect();
        for assign in 0..types.len().pow(n_blocks as u32) {
            let mut code = assign;
            let mut routes = Vec::new();
            let mut first = 0.0;
            for (b, block) in blocks.iter().enumerate() {
                let p = code % types.len();
                code /= types.len();
                let vt = &types[p];
                assert!(
                    vt.can_drive(lengths[b]) && lengths[b] / vt.speed <= inst.shift_limit(),
                    "oracle assumes every route is admissible"
                );
                first += vt.fixed_cost + vt.unit_distance_cost * lengths[b];
                routes.push((block.clone(), p, lengths[b]));
            }
            if first >= best {
                continue;
            }
            let second: f64 = (0..fx.scenarios.n_scenarios())
                .map(|s| fx.scenarios.probability(s) * recourse_oracle(fx, &routes, s))
                .sum();
            best = best.min(first + second);
        }
        if !next_labeling(&mut label) {
            break;
        }
    }
    best
}

/// Next labeling with blocks numbered in order of first appearance; label 0
/// (unrouted) is free.
fn next_labeling(label: &mut [usize]) -> bool {
    let n = label.len();
    for k in (0..n).rev() {
        let max_before = label[..k].iter().copied().max().unwrap_or(0);
        if label[k] <= max_before {
            label[k] += 1;
            for l in label.iter_mut().skip(k + 1) {
                *l = 0;
            }
            return true;
        }
    }
    false
}

/// Exact CVRP optimum by dynamic programming over node subsets.
pub fn cvrp_oracle(inst: &Instance, demands: &[f64], capacity: f64) -> f64 {
    let n = inst.n_customers();
    let full = 1usize << n;
    let mut tour = vec![f64::INFINITY; full];
    for mask in 1..full {
        let block: Vec<usize> = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| k + 1).collect();
        let load: f64 = block.iter().map(|&i| demands[i]).sum();
        if load <= capacity + 1e-9 {
            tour[mask] = best_tour(inst, &block);
        }
    }
    let mut best = vec![f64::INFINITY; full];
    best[0] = 0.0;
    for mask in 1..full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        loop {
            let block = sub | low;
            if tour[block].is_finite() {
                best[mask] = best[mask].min(tour[block] + best[mask ^ block]);
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
    }
    best[full - 1]
}

/// Optimal split of a giant tour by trying all `2^(n-1)` cut sets.
pub fn split_oracle(inst: &Instance, tour: &[usize], demands: &[f64], capacity: f64) -> f64 {
    let n = tour.len();
    let mut best = f64::INFINITY;
    for cuts in 0..1usize << (n - 1) {
        let mut total = 0.0;
        let mut start = 0;
        let mut ok = true;
        for k in 0..n {
            if k == n - 1 || cuts >> k & 1 == 1 {
                let seg = &tour[start..=k];
                if seg.iter().map(|&i| demands[i]).sum::<f64>() > capacity + 1e-9 {
                    ok = false;
                    break;
                }
                total += closed_length(inst, seg);
                start = k + 1;
            }
        }
        if ok {
            best = best.min(total);
        }
    }
    best
}
