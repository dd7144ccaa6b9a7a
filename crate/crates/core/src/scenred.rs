//! Scenario reduction under the transportation (Kantorovich) distance.
//!
//! For a fixed kept set the optimal reduced measure moves every deleted
//! scenario's probability onto its nearest kept scenario; the reduction
//! distance is the resulting transport cost. Fast Forward Selection grows the
//! kept set greedily.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::ScenarioSet;
use crate::error::{Error, Result};
use crate::lp::{DenseLp, LpOutcome, Relation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedTree {
    /// Original indices of kept scenarios, ascending.
    pub kept_ids: Vec<usize>,
    /// Redistributed probabilities aligned with `kept_ids`.
    pub new_probs: Vec<f64>,
    pub distance: f64,
    /// Deleted scenario -> kept scenario receiving its probability.
    pub assignment: BTreeMap<usize, usize>,
    /// Greedy cost after each selection step (empty unless built by FFS).
    #[serde(default)]
    pub step_costs: Vec<f64>,
    /// Selection order (empty unless built by FFS).
    #[serde(default)]
    pub selection_order: Vec<usize>,
}

impl ReducedTree {
    /// The reduced scenario set with redistributed probabilities.
    pub fn apply(&self, scenarios: &ScenarioSet) -> Result<ScenarioSet> {
        let demands = self
            .kept_ids
            .iter()
            .map(|&s| scenarios.scenario(s).to_vec())
            .collect();
        let total: f64 = self.new_probs.iter().sum();
        let probs = self.new_probs.iter().map(|p| p / total).collect();
        ScenarioSet::new(demands, probs)
    }
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Pairwise Euclidean distances between scenario demand vectors.
pub fn scenario_distances(scenarios: &ScenarioSet) -> Vec<Vec<f64>> {
    let n = scenarios.n_scenarios();
    (0..n)
        .map(|a| {
            (0..n)
                .map(|b| euclid(scenarios.scenario(a), scenarios.scenario(b)))
                .collect()
        })
        .collect()
}

fn check_kept(n: usize, kept: &[usize]) -> Result<Vec<usize>> {
    if kept.is_empty() {
        return Err(Error::invalid("kept scenario set is empty"));
    }
    let mut ids = kept.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if let Some(&bad) = ids.iter().find(|&&s| s >= n) {
        return Err(Error::invalid(format!("scenario index {bad} out of range")));
    }
    Ok(ids)
}

fn tree_from(scenarios: &ScenarioSet, dist: &[Vec<f64>], kept: Vec<usize>) -> ReducedTree {
    let n = scenarios.n_scenarios();
    let mut in_kept = vec![false; n];
    for &s in &kept {
        in_kept[s] = true;
    }
    let mut new_probs: Vec<f64> = kept.iter().map(|&s| scenarios.probability(s)).collect();
    let mut assignment = BTreeMap::new();
    let mut distance = 0.0;
    for s in (0..n).filter(|&s| !in_kept[s]) {
        let (pos, d) = nearest(&dist[s], &kept);
        assignment.insert(s, kept[pos]);
        new_probs[pos] += scenarios.probability(s);
        distance += scenarios.probability(s) * d;
    }
    ReducedTree {
        kept_ids: kept,
        new_probs,
        distance,
        assignment,
        step_costs: Vec::new(),
        selection_order: Vec::new(),
    }
}

/// Position in `kept` (ascending) of the nearest kept scenario; ties keep the lowest index.
fn nearest(row: &[f64], kept: &[usize]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (pos, &k) in kept.iter().enumerate() {
        if row[k] < best.1 {
            best = (pos, row[k]);
        }
    }
    best
}

pub fn reduction_distance(scenarios: &ScenarioSet, kept: &[usize]) -> Result<(f64, ReducedTree)> {
    let ids = check_kept(scenarios.n_scenarios(), kept)?;
    let dist = scenario_distances(scenarios);
    let tree = tree_from(scenarios, &dist, ids);
    Ok((tree.distance, tree))
}

/// Greedy forward selection of `k` scenarios.
pub fn fast_forward_select(scenarios: &ScenarioSet, k: usize) -> Result<ReducedTree> {
    let n = scenarios.n_scenarios();
    if k == 0 || k > n {
        return Err(Error::invalid(format!(
            "cannot keep {k} of {n} scenarios"
        )));
    }
    let dist = scenario_distances(scenarios);
    let probs = scenarios.probabilities();
    // current[s] = distance from s to the nearest selected scenario.
    let mut current = vec![f64::INFINITY; n];
    let mut selected = vec![false; n];
    let mut order = Vec::with_capacity(k);
    let mut step_costs = Vec::with_capacity(k);
    for _ in 0..k {
        let costs: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .filter(|&u| !selected[u])
            .map(|u| {
                let cost = (0..n)
                    .filter(|&s| !selected[s] && s != u)
                    .map(|s| probs[s] * current[s].min(dist[s][u]))
                    .sum::<f64>();
                (u, cost)
            })
            .collect();
        let &(u, cost) = costs
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("at least one candidate remains");
        selected[u] = true;
        order.push(u);
        step_costs.push(cost);
        for s in 0..n {
            current[s] = current[s].min(dist[s][u]);
        }
    }
    let mut kept = order.clone();
    kept.sort_unstable();
    let mut tree = tree_from(scenarios, &dist, kept);
    tree.step_costs = step_costs;
    tree.selection_order = order;
    Ok(tree)
}

/// Exact transportation-LP value of reducing onto `kept`, with the kept
/// marginals free. Used to cross-check [`reduction_distance`].
pub fn transport_lp_oracle(scenarios: &ScenarioSet, kept: &[usize]) -> Result<f64> {
    let ids = check_kept(scenarios.n_scenarios(), kept)?;
    let n = scenarios.n_scenarios();
    let m = ids.len();
    let mut cost = Vec::with_capacity(n * m);
    for s in 0..n {
        for &u in &ids {
            cost.push(euclid(scenarios.scenario(s), scenarios.scenario(u)));
        }
    }
    let mut lp = DenseLp::new(cost);
    for s in 0..n {
        let row: Vec<(usize, f64)> = (0..m).map(|k| (s * m + k, 1.0)).collect();
        lp.add_row(&row, Relation::Eq, scenarios.probability(s));
    }
    match lp.solve()? {
        LpOutcome::Optimal { objective, .. } => Ok(objective),
        other => Err(Error::Solver(format!("transport LP: {other:?}"))),
    }
}
