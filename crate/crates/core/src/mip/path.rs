//! Path-based formulation over a preprocessed route pool.

use serde::{Deserialize, Serialize};

use super::model::{MipModel, Sense};
use super::node::check_input;
use super::{Layout, StochasticInput};
use crate::error::Result;
use crate::routegen::{Route, RoutePool};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLayout {
    pub n_nodes: usize,
    pub n_types: usize,
    pub n_scenarios: usize,
    pub routes: Vec<Route>,
    /// `psi[r][p]`; `None` when route `r` is not admissible for type `p`.
    pub psi: Vec<Vec<Option<usize>>>,
    /// Per scenario: `(r, i, j, var)`.
    pub y: Vec<Vec<(usize, usize, usize, usize)>>,
    /// `w[s][j]`; index 0 unused.
    pub w: Vec<Vec<usize>>,
}

impl PathLayout {
    pub fn first_stage(&self) -> Vec<usize> {
        self.psi.iter().flatten().flatten().copied().collect()
    }
}

/// Whether a type may operate the route: within its driving range and, at
/// zero recourse, within the shift limit.
pub fn route_admissible(input: &StochasticInput, route: &Route, p: usize) -> bool {
    let vt = &input.instance.vehicle_types()[p];
    vt.can_drive(route.length) && route.length / vt.speed <= input.instance.shift_limit() + 1e-12
}

/// Formulation switches that leave the integer optimum unchanged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathOptions {
    /// Replace the per-origin linking rows `y_ijrs <= sum_p psi_rp` by one row
    /// per target, `sum_i y_ijrs <= sum_p psi_rp`. Tighter LP, fewer rows.
    pub aggregate_links: bool,
}

pub fn build_path_model(input: &StochasticInput, pool: &RoutePool) -> Result<MipModel> {
    build_path_model_with(input, pool, &PathOptions::default())
}

pub fn build_path_model_with(input: &StochasticInput, pool: &RoutePool, opts: &PathOptions) -> Result<MipModel> {
    check_input(input)?;
    pool.check_elementary(input.instance)?;
    let inst = input.instance;
    let scen = input.scenarios;
    let nb = input.neighborhoods;
    let costs = input.costs;
    let n = inst.n_nodes();
    let np = inst.n_types();
    let ns = scen.n_scenarios();
    let types = inst.vehicle_types();
    let t_bar = inst.shift_limit();

    let mut m = MipModel::new();
    let mut psi = vec![vec![None; np]; pool.len()];
    for (r, route) in pool.routes.iter().enumerate() {
        for p in 0..np {
            if route_admissible(input, route, p) {
                let cost = types[p].fixed_cost + types[p].unit_distance_cost * route.length;
                psi[r][p] = Some(m.binary(format!("psi_{r}_{p}"), cost)?);
            }
        }
    }
    let psi_terms = |r: usize, coef: &dyn Fn(usize) -> f64| -> Vec<(usize, f64)> {
        (0..np)
            .filter_map(|p| psi[r][p].map(|var| (var, coef(p))))
            .collect()
    };

    let mut y = vec![Vec::new(); ns];
    let mut w = vec![vec![usize::MAX; n]; ns];
    for s in 0..ns {
        let pi = scen.probability(s);
        for (r, route) in pool.routes.iter().enumerate() {
            if psi[r].iter().all(Option::is_none) {
                continue;
            }
            for &i in &route.sequence {
                for &j in nb.out_set(i) {
                    let coef = pi * super::recourse_coef(input, i, j);
                    let var = m.continuous(format!("y_{i}_{j}_{r}_{s}"), coef)?;
                    y[s].push((r, i, j, var));
                }
            }
        }
        for j in inst.customers() {
            w[s][j] = m.continuous(format!("w_{j}_{s}"), pi * costs.gamma * scen.demand(s, j))?;
        }
    }

    for r in 0..pool.len() {
        let terms = psi_terms(r, &|_| 1.0);
        if !terms.is_empty() {
            m.add_constraint(format!("route_once_{r}"), terms, Sense::Le, 1.0)?;
        }
    }
    for i in inst.customers() {
        let mut terms = Vec::new();
        for (r, route) in pool.routes.iter().enumerate() {
            if route.contains(i) {
                terms.extend(psi_terms(r, &|_| 1.0));
            }
        }
        m.add_constraint(format!("visit_once_{i}"), terms, Sense::Le, 1.0)?;
    }
    for s in 0..ns {
        let mut cover: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(_, _, j, var) in &y[s] {
            cover[j].push((var, 1.0));
        }
        for j in inst.customers() {
            let mut terms = std::mem::take(&mut cover[j]);
            terms.push((w[s][j], 1.0));
            m.add_constraint(format!("cover_{j}_{s}"), terms, Sense::Eq, 1.0)?;
        }
        if opts.aggregate_links {
            let mut by_target: std::collections::BTreeMap<(usize, usize), Vec<(usize, f64)>> =
                std::collections::BTreeMap::new();
            for &(r, _, j, var) in &y[s] {
                by_target.entry((r, j)).or_default().push((var, 1.0));
            }
            for ((r, j), mut terms) in by_target {
                terms.extend(psi_terms(r, &|_| -1.0));
                m.add_constraint(format!("link_{j}_{r}_{s}"), terms, Sense::Le, 0.0)?;
            }
        } else {
            for &(r, i, j, var) in &y[s] {
                let mut terms = psi_terms(r, &|_| -1.0);
                terms.push((var, 1.0));
                m.add_constraint(format!("link_{i}_{j}_{r}_{s}"), terms, Sense::Le, 0.0)?;
            }
        }
        let mut per_route: Vec<Vec<(usize, usize, usize)>> = vec![Vec::new(); pool.len()];
        for &(r, i, j, var) in &y[s] {
            per_route[r].push((i, j, var));
        }
        for (r, ys) in per_route.iter().enumerate() {
            if psi[r].iter().all(Option::is_none) {
                continue;
            }
            let mut terms: Vec<(usize, f64)> =
                ys.iter().map(|&(_, j, var)| (var, scen.demand(s, j))).collect();
            terms.extend(psi_terms(r, &|p| -types[p].capacity));
            m.add_constraint(format!("cap_{r}_{s}"), terms, Sense::Le, 0.0)?;
            for p in 0..np {
                if psi[r][p].is_none() {
                    continue;
                }
                let travel = pool.routes[r].length / types[p].speed;
                let terms: Vec<(usize, f64)> = ys
                    .iter()
                    .filter(|&&(i, j, _)| i != j)
                    .map(|&(i, j, var)| {
                        (
                            var,
                            inst.service_time(j) + costs.beta * inst.travel_time(p, i, j),
                        )
                    })
                    .collect();
                m.add_constraint(format!("time_{r}_{p}_{s}"), terms, Sense::Le, t_bar - travel)?;
            }
        }
    }

    m.layout = Some(Layout::Path(PathLayout {
        n_nodes: n,
        n_types: np,
        n_scenarios: ns,
        routes: pool.routes.clone(),
        psi,
        y,
        w,
    }));
    Ok(m)
}
