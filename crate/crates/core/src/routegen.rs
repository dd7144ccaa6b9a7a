//! Candidate route generation: giant-tour splitting, an ALNS heuristic for the
//! capacitated VRP and assembly of the route pool used by the path model.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Instance, ScenarioSet, DEPOT};
use crate::error::{Error, Result};
use crate::instancegen::rng_for;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Route {
    /// Demand nodes in visiting order; the depot is implicit at both ends.
    pub sequence: Vec<usize>,
    /// Closed tour length in km.
    pub length: f64,
    /// Vehicle type ids whose driving range covers the tour.
    pub feasible_types: Vec<String>,
}

impl Route {
    /// Builds the route in canonical orientation.
    pub fn new(instance: &Instance, sequence: &[usize]) -> Result<Route> {
        let mut seen = vec![false; instance.n_nodes()];
        for &i in sequence {
            if i == DEPOT || i >= instance.n_nodes() {
                return Err(Error::invalid(format!("route visits invalid node {i}")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::invalid(format!("route visits node {i} twice")));
            }
        }
        if sequence.is_empty() {
            return Err(Error::invalid("empty route"));
        }
        let sequence = canonical(sequence);
        let length = instance.tour_length(&sequence);
        let feasible_types = instance
            .vehicle_types()
            .iter()
            .filter(|vt| vt.can_drive(length))
            .map(|vt| vt.id.clone())
            .collect();
        Ok(Route {
            sequence,
            length,
            feasible_types,
        })
    }

    pub fn is_elementary(&self) -> bool {
        self.sequence.len() == 1
    }

    pub fn contains(&self, node: usize) -> bool {
        self.sequence.contains(&node)
    }

    pub fn load(&self, demands: &[f64]) -> f64 {
        self.sequence.iter().map(|&i| demands[i]).sum()
    }
}

/// The lexicographically smaller of a sequence and its reversal.
pub fn canonical(sequence: &[usize]) -> Vec<usize> {
    let reversed: Vec<usize> = sequence.iter().rev().copied().collect();
    if reversed.as_slice() < sequence {
        reversed
    } else {
        sequence.to_vec()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PoolEntry {
    sequence: Vec<usize>,
    length: f64,
    feasible_types: Vec<String>,
    activation_count: usize,
    elementary: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct PoolFile {
    routes: Vec<PoolEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "PoolFile", try_from = "PoolFile")]
pub struct RoutePool {
    pub routes: Vec<Route>,
    pub activation_count: Vec<usize>,
    /// Indices into `routes` of the single-customer routes.
    pub elementary_ids: Vec<usize>,
}

impl From<RoutePool> for PoolFile {
    fn from(pool: RoutePool) -> Self {
        let routes = pool
            .routes
            .into_iter()
            .zip(pool.activation_count)
            .map(|(r, count)| PoolEntry {
                elementary: r.is_elementary(),
                sequence: r.sequence,
                length: r.length,
                feasible_types: r.feasible_types,
                activation_count: count,
            })
            .collect();
        PoolFile { routes }
    }
}

impl TryFrom<PoolFile> for RoutePool {
    type Error = Error;

    fn try_from(file: PoolFile) -> Result<Self> {
        let mut routes = Vec::new();
        let mut counts = Vec::new();
        for entry in file.routes {
            if entry.sequence.is_empty() {
                return Err(Error::invalid("pool contains an empty route"));
            }
            if entry.elementary != (entry.sequence.len() == 1) {
                return Err(Error::invalid(format!(
                    "route {:?} has an inconsistent elementary flag",
                    entry.sequence
                )));
            }
            routes.push(Route {
                sequence: entry.sequence,
                length: entry.length,
                feasible_types: entry.feasible_types,
            });
            counts.push(entry.activation_count);
        }
        Ok(RoutePool::from_parts(routes, counts))
    }
}

impl RoutePool {
    fn from_parts(routes: Vec<Route>, activation_count: Vec<usize>) -> Self {
        let elementary_ids = routes
            .iter()
            .enumerate()
            .filter(|(_, r)| r.is_elementary())
            .map(|(k, _)| k)
            .collect();
        RoutePool {
            routes,
            activation_count,
            elementary_ids,
        }
    }

    /// Pool from explicit sequences, deduplicated up to orientation.
    pub fn from_sequences(instance: &Instance, sequences: &[Vec<usize>]) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        let mut routes = Vec::new();
        for seq in sequences {
            let route = Route::new(instance, seq)?;
            if seen.insert(route.sequence.clone()) {
                routes.push(route);
            }
        }
        let n = routes.len();
        Ok(RoutePool::from_parts(routes, vec![0; n]))
    }

    /// The `n` elementary routes alone.
    pub fn elementary(instance: &Instance) -> Result<Self> {
        let seqs: Vec<Vec<usize>> = instance.customers().map(|i| vec![i]).collect();
        RoutePool::from_sequences(instance, &seqs)
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    /// Checks that every demand node has its elementary route.
    pub fn check_elementary(&self, instance: &Instance) -> Result<()> {
        let mut has = vec![false; instance.n_nodes()];
        for &k in &self.elementary_ids {
            has[self.routes[k].sequence[0]] = true;
        }
        match instance.customers().find(|&i| !has[i]) {
            Some(i) => Err(Error::invalid(format!(
                "route pool lacks the elementary route of node {i}"
            ))),
            None => Ok(()),
        }
    }

    /// Sub-pool containing the given route indices (order preserved).
    pub fn subset(&self, ids: &[usize]) -> RoutePool {
        let routes = ids.iter().map(|&k| self.routes[k].clone()).collect();
        let counts = ids.iter().map(|&k| self.activation_count[k]).collect();
        RoutePool::from_parts(routes, counts)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RoutePool::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

fn check_demands(demands: &[f64], capacity: f64, nodes: impl Iterator<Item = usize>) -> Result<()> {
    if !(capacity > 0.0) {
        return Err(Error::invalid("capacity must be positive"));
    }
    for i in nodes {
        if demands[i] > capacity + 1e-9 {
            return Err(Error::Unroutable {
                node: i,
                demand: demands[i],
                capacity,
            });
        }
    }
    Ok(())
}

/// Optimal split of a giant tour into consecutive capacity-feasible routes,
/// returned as plain sequences with their total closed-tour length.
pub fn split_sequences(
    tour: &[usize],
    demands: &[f64],
    capacity: f64,
    instance: &Instance,
) -> Result<(Vec<Vec<usize>>, f64)> {
    check_demands(demands, capacity, tour.iter().copied())?;
    let n = tour.len();
    let mut best = vec![f64::INFINITY; n + 1];
    let mut pred = vec![0usize; n + 1];
    best[0] = 0.0;
    for start in 0..n {
        if !best[start].is_finite() {
            continue;
        }
        let mut load = 0.0;
        let mut inner = 0.0;
        for end in start..n {
            load += demands[tour[end]];
            if load > capacity + 1e-9 {
                break;
            }
            if end > start {
                inner += instance.dist(tour[end - 1], tour[end]);
            }
            let cost = best[start]
                + instance.dist(DEPOT, tour[start])
                + inner
                + instance.dist(tour[end], DEPOT);
            if cost < best[end + 1] - 1e-12 {
                best[end + 1] = cost;
                pred[end + 1] = start;
            }
        }
    }
    let mut routes = Vec::new();
    let mut end = n;
    while end > 0 {
        let start = pred[end];
        routes.push(tour[start..end].to_vec());
        end = start;
    }
    routes.reverse();
    Ok((routes, best[n]))
}

/// Optimal split of a giant tour (a permutation of the demand nodes).
pub fn split_giant_tour(
    tour: &[usize],
    demands: &[f64],
    capacity: f64,
    instance: &Instance,
) -> Result<Vec<Route>> {
    let mut sorted = tour.to_vec();
    sorted.sort_unstable();
    if !sorted.iter().copied().eq(instance.customers()) {
        return Err(Error::invalid("giant tour is not a permutation of the demand nodes"));
    }
    let (sequences, _) = split_sequences(tour, demands, capacity, instance)?;
    sequences.iter().map(|s| Route::new(instance, s)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlnsConfig {
    pub iterations: usize,
    pub min_remove_frac: f64,
    pub max_remove_frac: f64,
    /// Scores for a new global best, an improvement and a plain acceptance.
    pub scores: [f64; 3],
    pub segment: usize,
    /// Weight retained from the previous segment.
    pub smoothing: f64,
    /// Relative degradation accepted with probability one half at the start.
    pub start_degradation: f64,
    pub cooling: f64,
}

impl Default for AlnsConfig {
    fn default() -> Self {
        AlnsConfig {
            iterations: 5000,
            min_remove_frac: 0.10,
            max_remove_frac: 0.35,
            scores: [33.0, 9.0, 1.0],
            segment: 100,
            smoothing: 0.8,
            start_degradation: 0.05,
            cooling: 0.9995,
        }
    }
}

struct Search<'a> {
    inst: &'a Instance,
    demands: &'a [f64],
    capacity: f64,
    max_dist: f64,
    max_demand: f64,
}

#[derive(Clone)]
struct Plan {
    routes: Vec<Vec<usize>>,
    loads: Vec<f64>,
    cost: f64,
}

impl<'a> Search<'a> {
    fn plan(&self, routes: Vec<Vec<usize>>) -> Plan {
        let loads = routes
            .iter()
            .map(|r| r.iter().map(|&i| self.demands[i]).sum())
            .collect();
        let cost = routes.iter().map(|r| self.inst.tour_length(r)).sum();
        Plan {
            routes,
            loads,
            cost,
        }
    }

    fn removal_saving(&self, route: &[usize], pos: usize) -> f64 {
        let prev = if pos == 0 { DEPOT } else { route[pos - 1] };
        let next = route.get(pos + 1).copied().unwrap_or(DEPOT);
        let c = route[pos];
        self.inst.dist(prev, c) + self.inst.dist(c, next) - self.inst.dist(prev, next)
    }

    fn remove(&self, plan: &mut Plan, node: usize) {
        for (r, route) in plan.routes.iter_mut().enumerate() {
            if let Some(pos) = route.iter().position(|&c| c == node) {
                plan.cost -= self.removal_saving(route, pos);
                route.remove(pos);
                plan.loads[r] -= self.demands[node];
                return;
            }
        }
    }

    fn drop_empty(&self, plan: &mut Plan) {
        let mut k = 0;
        while k < plan.routes.len() {
            if plan.routes[k].is_empty() {
                plan.routes.remove(k);
                plan.loads.remove(k);
            } else {
                k += 1;
            }
        }
    }

    fn random_removal(&self, plan: &mut Plan, q: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut nodes: Vec<usize> = plan.routes.iter().flatten().copied().collect();
        nodes.shuffle(rng);
        nodes.truncate(q);
        for &c in &nodes {
            self.remove(plan, c);
        }
        nodes
    }

    fn worst_removal(&self, plan: &mut Plan, q: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let mut removed = Vec::with_capacity(q);
        while removed.len() < q {
            let mut cands: Vec<(f64, usize)> = Vec::new();
            for route in &plan.routes {
                for pos in 0..route.len() {
                    cands.push((self.removal_saving(route, pos), route[pos]));
                }
            }
            if cands.is_empty() {
                break;
            }
            cands.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let y: f64 = rng.gen();
            let pick = ((y.powi(3) * cands.len() as f64) as usize).min(cands.len() - 1);
            let node = cands[pick].1;
            self.remove(plan, node);
            removed.push(node);
        }
        removed
    }

    fn shaw_removal(&self, plan: &mut Plan, q: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let all: Vec<usize> = plan.routes.iter().flatten().copied().collect();
        if all.is_empty() {
            return Vec::new();
        }
        let mut removed = vec![*all.choose(rng).unwrap()];
        let mut remaining: Vec<usize> = all.into_iter().filter(|&c| c != removed[0]).collect();
        while removed.len() < q && !remaining.is_empty() {
            let seed = *removed.choose(rng).unwrap();
            remaining.sort_by(|&a, &b| {
                self.relatedness(seed, a)
                    .total_cmp(&self.relatedness(seed, b))
                    .then(a.cmp(&b))
            });
            let y: f64 = rng.gen();
            let pick = ((y.powi(6) * remaining.len() as f64) as usize).min(remaining.len() - 1);
            removed.push(remaining.remove(pick));
        }
        for &c in &removed {
            self.remove(plan, c);
        }
        removed
    }

    fn relatedness(&self, a: usize, b: usize) -> f64 {
        self.inst.dist(a, b) / self.max_dist
            + (self.demands[a] - self.demands[b]).abs() / self.max_demand
    }

    /// Cheapest feasible insertion of `c` per route: `(route, position, delta)`;
    /// route index `routes.len()` denotes a new route.
    fn insertion_options(&self, plan: &Plan, c: usize) -> Vec<(usize, usize, f64)> {
        let mut options = Vec::with_capacity(plan.routes.len() + 1);
        for (r, route) in plan.routes.iter().enumerate() {
            if plan.loads[r] + self.demands[c] > self.capacity + 1e-9 {
                continue;
            }
            let mut best = (0, f64::INFINITY);
            for pos in 0..=route.len() {
                let prev = if pos == 0 { DEPOT } else { route[pos - 1] };
                let next = route.get(pos).copied().unwrap_or(DEPOT);
                let delta =
                    self.inst.dist(prev, c) + self.inst.dist(c, next) - self.inst.dist(prev, next);
                if delta < best.1 {
                    best = (pos, delta);
                }
            }
            options.push((r, best.0, best.1));
        }
        options.push((plan.routes.len(), 0, 2.0 * self.inst.dist(DEPOT, c)));
        options
    }

    fn insert(&self, plan: &mut Plan, c: usize, (r, pos, delta): (usize, usize, f64)) {
        if r == plan.routes.len() {
            plan.routes.push(vec![c]);
            plan.loads.push(self.demands[c]);
        } else {
            plan.routes[r].insert(pos, c);
            plan.loads[r] += self.demands[c];
        }
        plan.cost += delta;
    }

    fn greedy_insert(&self, plan: &mut Plan, mut pending: Vec<usize>) {
        pending.sort_unstable();
        while !pending.is_empty() {
            let mut best: Option<(usize, (usize, usize, f64))> = None;
            for (k, &c) in pending.iter().enumerate() {
                for opt in self.insertion_options(plan, c) {
                    if best.map_or(true, |(_, b)| opt.2 < b.2 - 1e-12) {
                        best = Some((k, opt));
                    }
                }
            }
            let (k, opt) = best.expect("a new route is always possible");
            let c = pending.remove(k);
            self.insert(plan, c, opt);
        }
    }

    fn regret_insert(&self, plan: &mut Plan, mut pending: Vec<usize>) {
        pending.sort_unstable();
        while !pending.is_empty() {
            let mut best: Option<(usize, f64, (usize, usize, f64))> = None;
            for (k, &c) in pending.iter().enumerate() {
                let mut opts = self.insertion_options(plan, c);
                opts.sort_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0)));
                let regret = opts.get(1).map_or(f64::INFINITY, |o| o.2 - opts[0].2);
                let better = match best {
                    None => true,
                    Some((_, r, b)) => {
                        regret > r + 1e-12 || (regret >= r - 1e-12 && opts[0].2 < b.2 - 1e-12)
                    }
                };
                if better {
                    best = Some((k, regret, opts[0]));
                }
            }
            let (k, _, opt) = best.unwrap();
            let c = pending.remove(k);
            self.insert(plan, c, opt);
        }
    }
}

fn roulette(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut x = rng.gen::<f64>() * total;
    for (k, w) in weights.iter().enumerate() {
        if x < *w {
            return k;
        }
        x -= w;
    }
    weights.len() - 1
}

/// Randomized nearest-neighbour giant tour starting from a random customer.
fn initial_tour(inst: &Instance, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut left: Vec<usize> = inst.customers().collect();
    let first = left.swap_remove(rng.gen_range(0..left.len()));
    let mut tour = vec![first];
    while !left.is_empty() {
        let last = *tour.last().unwrap();
        let (k, _) = left
            .iter()
            .enumerate()
            .min_by(|a, b| inst.dist(last, *a.1).total_cmp(&inst.dist(last, *b.1)).then(a.1.cmp(b.1)))
            .unwrap();
        tour.push(left.remove(k));
    }
    tour
}

pub fn alns_cvrp(
    instance: &Instance,
    demands: &[f64],
    capacity: f64,
    iters: usize,
    seed: u64,
) -> Result<(Vec<Vec<usize>>, f64)> {
    let cfg = AlnsConfig {
        iterations: iters,
        ..AlnsConfig::default()
    };
    alns_with(instance, demands, capacity, &cfg, &mut rng_for(seed, 0))
}

/// ALNS over all demand nodes of `instance`.
pub fn alns_with(
    instance: &Instance,
    demands: &[f64],
    capacity: f64,
    cfg: &AlnsConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<Vec<usize>>, f64)> {
    if cfg.iterations == 0 {
        return Err(Error::invalid("ALNS needs at least one iteration"));
    }
    if demands.len() != instance.n_nodes() {
        return Err(Error::invalid("demand vector does not match the instance"));
    }
    check_demands(demands, capacity, instance.customers())?;
    let n = instance.n_customers();
    let search = Search {
        inst: instance,
        demands,
        capacity,
        max_dist: instance
            .customers()
            .flat_map(|i| instance.customers().map(move |j| (i, j)))
            .map(|(i, j)| instance.dist(i, j))
            .fold(1e-9, f64::max),
        max_demand: instance.customers().map(|i| demands[i]).fold(1e-9, f64::max),
    };
    let tour = initial_tour(instance, rng);
    let (routes, _) = split_sequences(&tour, demands, capacity, instance)?;
    let mut current = search.plan(routes);
    let mut best = current.clone();

    let mut temperature = cfg.start_degradation * current.cost / std::f64::consts::LN_2;
    let mut d_weights = [1.0; 3];
    let mut r_weights = [1.0; 2];
    let mut d_scores = [0.0; 3];
    let mut r_scores = [0.0; 2];
    let mut d_uses = [0usize; 3];
    let mut r_uses = [0usize; 2];
    let q_min = ((cfg.min_remove_frac * n as f64).ceil() as usize).clamp(1, n);
    let q_max = ((cfg.max_remove_frac * n as f64).ceil() as usize).clamp(q_min, n);

    for it in 1..=cfg.iterations {
        let q = rng.gen_range(q_min..=q_max);
        let d = roulette(&d_weights, rng);
        let r = roulette(&r_weights, rng);
        let mut cand = current.clone();
        let removed = match d {
            0 => search.random_removal(&mut cand, q, rng),
            1 => search.worst_removal(&mut cand, q, rng),
            _ => search.shaw_removal(&mut cand, q, rng),
        };
        search.drop_empty(&mut cand);
        match r {
            0 => search.greedy_insert(&mut cand, removed),
            _ => search.regret_insert(&mut cand, removed),
        }
        // Re-accumulate to keep incremental costs from drifting.
        cand.cost = cand.routes.iter().map(|r| instance.tour_length(r)).sum();

        let mut score = 0.0;
        if cand.cost < best.cost - 1e-9 {
            best = cand.clone();
            current = cand;
            score = cfg.scores[0];
        } else if cand.cost < current.cost - 1e-9 {
            current = cand;
            score = cfg.scores[1];
        } else if temperature > 0.0
            && rng.gen::<f64>() < (-(cand.cost - current.cost) / temperature).exp()
        {
            current = cand;
            score = cfg.scores[2];
        }
        d_scores[d] += score;
        r_scores[r] += score;
        d_uses[d] += 1;
        r_uses[r] += 1;
        temperature *= cfg.cooling;

        if it % cfg.segment == 0 {
            for k in 0..3 {
                if d_uses[k] > 0 {
                    d_weights[k] = cfg.smoothing * d_weights[k]
                        + (1.0 - cfg.smoothing) * d_scores[k] / d_uses[k] as f64;
                }
                d_weights[k] = d_weights[k].max(0.01);
            }
            for k in 0..2 {
                if r_uses[k] > 0 {
                    r_weights[k] = cfg.smoothing * r_weights[k]
                        + (1.0 - cfg.smoothing) * r_scores[k] / r_uses[k] as f64;
                }
                r_weights[k] = r_weights[k].max(0.01);
            }
            d_scores = [0.0; 3];
            r_scores = [0.0; 2];
            d_uses = [0; 3];
            r_uses = [0; 2];
        }
    }
    let cost = best.routes.iter().map(|r| instance.tour_length(r)).sum();
    Ok((best.routes, cost))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoolConfig {
    pub pool_size: usize,
    pub n_starts: usize,
    pub seed: u64,
    pub alns: AlnsConfig,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            pool_size: 200,
            n_starts: 10,
            seed: 0,
            alns: AlnsConfig::default(),
        }
    }
}

pub fn build_route_pool(
    instance: &Instance,
    scenarios: &ScenarioSet,
    pool_size: usize,
    n_starts: usize,
    seed: u64,
) -> Result<RoutePool> {
    build_route_pool_with(
        instance,
        scenarios,
        &PoolConfig {
            pool_size,
            n_starts,
            seed,
            ..PoolConfig::default()
        },
    )
}

/// Runs ALNS for every scenario and the expected-demand vector, for each
/// vehicle capacity and start, then keeps the most frequently activated routes.
/// Demands above a capacity are clamped to it for generation.
pub fn build_route_pool_with(
    instance: &Instance,
    scenarios: &ScenarioSet,
    cfg: &PoolConfig,
) -> Result<RoutePool> {
    scenarios.check_instance(instance)?;
    if cfg.pool_size < instance.n_customers() {
        return Err(Error::invalid(format!(
            "pool size {} is below the number of demand nodes {}",
            cfg.pool_size,
            instance.n_customers()
        )));
    }
    let mut vectors: Vec<Vec<f64>> = scenarios.demands().to_vec();
    vectors.push(scenarios.expected_demand());
    let capacities: Vec<f64> = instance.vehicle_types().iter().map(|vt| vt.capacity).collect();
    let mut jobs = Vec::new();
    for v in 0..vectors.len() {
        for &cap in &capacities {
            for start in 0..cfg.n_starts {
                jobs.push((v, cap, start));
            }
        }
    }
    let results: Vec<Result<Vec<Vec<usize>>>> = jobs
        .par_iter()
        .enumerate()
        .map(|(k, &(v, cap, _))| {
            let demands: Vec<f64> = vectors[v].iter().map(|&d| d.min(cap)).collect();
            let mut rng = rng_for(cfg.seed, 1 + k as u64);
            alns_with(instance, &demands, cap, &cfg.alns, &mut rng).map(|(routes, _)| routes)
        })
        .collect();

    let mut counts: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for routes in results {
        for r in routes? {
            *counts.entry(canonical(&r)).or_default() += 1;
        }
    }
    let mut ranked: Vec<(Route, usize)> = counts
        .iter()
        .map(|(seq, &c)| (seq.clone(), c))
        .filter(|(seq, _)| seq.len() > 1)
        .map(|(seq, c)| Route::new(instance, &seq).map(|r| (r, c)))
        .collect::<Result<_>>()?;
    ranked.sort_by(|a, b| {
        b.1.cmp(&a.1)
            .then(a.0.length.total_cmp(&b.0.length))
            .then(a.0.sequence.cmp(&b.0.sequence))
    });

    let slots = cfg.pool_size - instance.n_customers();
    let mut chosen = vec![false; ranked.len()];
    let mut n_chosen = 0;
    // First make every node appear in some multi-node route, if one was found.
    for i in instance.customers() {
        if n_chosen >= slots {
            break;
        }
        let covered = ranked
            .iter()
            .zip(&chosen)
            .any(|((r, _), &c)| c && r.contains(i));
        if !covered {
            if let Some(k) = ranked.iter().position(|(r, _)| r.contains(i)) {
                chosen[k] = true;
                n_chosen += 1;
            }
        }
    }
    for k in 0..ranked.len() {
        if n_chosen >= slots {
            break;
        }
        if !chosen[k] {
            chosen[k] = true;
            n_chosen += 1;
        }
    }

    let mut routes = Vec::new();
    let mut activation = Vec::new();
    for i in instance.customers() {
        routes.push(Route::new(instance, &[i])?);
        activation.push(counts.get(&vec![i]).copied().unwrap_or(0));
    }
    for (k, (route, count)) in ranked.into_iter().enumerate() {
        if chosen[k] {
            routes.push(route);
            activation.push(count);
        }
    }
    Ok(RoutePool::from_parts(routes, activation))
}

/// Every subset of demand nodes of size at most `max_size` as a route in its
/// shortest visiting order (Held-Karp). Intended for small exact checks.
pub fn enumerate_all_routes(instance: &Instance, max_size: usize) -> Result<RoutePool> {
    let n = instance.n_customers();
    if n > 16 {
        return Err(Error::invalid("complete route enumeration supports at most 16 nodes"));
    }
    let full = 1usize << n;
    // dp[mask][last] = shortest path from the depot through mask ending at last.
    let mut dp = vec![vec![f64::INFINITY; n]; full];
    let mut parent = vec![vec![usize::MAX; n]; full];
    for k in 0..n {
        dp[1 << k][k] = instance.dist(DEPOT, k + 1);
    }
    for mask in 1..full {
        for last in 0..n {
            let cur = dp[mask][last];
            if !cur.is_finite() {
                continue;
            }
            for next in 0..n {
                if mask & (1 << next) != 0 {
                    continue;
                }
                let m2 = mask | (1 << next);
                let cost = cur + instance.dist(last + 1, next + 1);
                if cost < dp[m2][next] - 1e-12 {
                    dp[m2][next] = cost;
                    parent[m2][next] = last;
                }
            }
        }
    }
    let mut sequences = Vec::new();
    for mask in 1..full {
        if (mask as u32).count_ones() as usize > max_size {
            continue;
        }
        let mut best = (usize::MAX, f64::INFINITY);
        for last in 0..n {
            if mask & (1 << last) != 0 {
                let total = dp[mask][last] + instance.dist(last + 1, DEPOT);
                if total < best.1 - 1e-12 {
                    best = (last, total);
                }
            }
        }
        let mut seq = Vec::new();
        let (mut m, mut last) = (mask, best.0);
        while last != usize::MAX {
            seq.push(last + 1);
            let p = parent[m][last];
            m &= !(1 << last);
            last = p;
        }
        seq.reverse();
        sequences.push(seq);
    }
    sequences.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    RoutePool::from_sequences(instance, &sequences)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Node, Profile};

    fn instance(points: &[(f64, f64)]) -> Instance {
        let nodes = points
            .iter()
            .enumerate()
            .map(|(id, &(x, y))| Node {
                id,
                x,
                y,
                base_demand: if id == 0 { 0.0 } else { 1.0 },
            })
            .collect();
        Instance::with_profile(nodes, Profile::Small).unwrap()
    }

    #[test]
    fn canonical_orientation() {
        assert_eq!(canonical(&[3, 1, 2]), vec![2, 1, 3]);
        assert_eq!(canonical(&[1, 3, 2]), vec![1, 3, 2]);
        assert_eq!(canonical(&[4]), vec![4]);
    }

    #[test]
    fn split_forced_and_single_segment() {
        let inst = instance(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]);
        let full = vec![0.0, 5.0, 5.0, 5.0];
        let routes = split_giant_tour(&[1, 2, 3], &full, 5.0, &inst).unwrap();
        assert_eq!(routes.len(), 3);

        let small = vec![0.0, 1.0, 1.0, 1.0];
        let routes = split_giant_tour(&[1, 2, 3], &small, 10.0, &inst).unwrap();
        let total: f64 = routes.iter().map(|r| r.length).sum();
        assert!(total <= inst.tour_length(&[1, 2, 3]) + 1e-12);

        let err = split_giant_tour(&[1, 2, 3], &[0.0, 6.0, 1.0, 1.0], 5.0, &inst).unwrap_err();
        assert!(matches!(err, Error::Unroutable { node: 1, .. }));
    }

    #[test]
    fn alns_single_customer_and_one_iteration() {
        let inst = instance(&[(0.0, 0.0), (3.0, 4.0)]);
        let (routes, cost) = alns_cvrp(&inst, &[0.0, 1.0], 5.0, 10, 7).unwrap();
        assert_eq!(routes, vec![vec![1]]);
        assert!((cost - 10.0).abs() < 1e-12);
        assert!(alns_cvrp(&inst, &[0.0, 1.0], 5.0, 0, 7).is_err());
    }

    #[test]
    fn enumeration_counts_subsets() {
        let inst = instance(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (2.0, 2.0)]);
        let pool = enumerate_all_routes(&inst, 4).unwrap();
        assert_eq!(pool.len(), 15);
        assert_eq!(pool.elementary_ids.len(), 4);
        pool.check_elementary(&inst).unwrap();
        let limited = enumerate_all_routes(&inst, 2).unwrap();
        assert_eq!(limited.len(), 4 + 6);
    }

    #[test]
    fn pool_json_round_trip() {
        let inst = instance(&[(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)]);
        let pool = enumerate_all_routes(&inst, 2).unwrap();
        let back = RoutePool::from_json(&pool.to_json().unwrap()).unwrap();
        assert_eq!(pool, back);
    }
}
