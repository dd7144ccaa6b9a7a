//! Second-stage evaluation of a fixed plan on a single scenario.

use serde::{Deserialize, Serialize};

use super::decode::{PlanSolution, RecourseAction};
use super::{recourse_coef, StochasticInput};
use crate::error::{Error, Result};
use crate::lp::{DenseLp, LpOutcome, Relation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecourseResult {
    pub scenario: usize,
    pub actions: Vec<RecourseAction>,
    /// `unserved[j]`; index 0 unused.
    pub unserved: Vec<f64>,
    /// Delivered load per plan route.
    pub loads: Vec<f64>,
    /// Driving plus recourse time per plan route.
    pub times: Vec<f64>,
    pub recourse_cost: f64,
    pub penalty_cost: f64,
    /// `recourse_cost + penalty_cost`, not probability weighted.
    pub cost: f64,
}

/// Solves the recourse LP in `(y, w)` for scenario `s` with the routes of
/// `plan` fixed.
pub fn evaluate_recourse(plan: &PlanSolution, input: &StochasticInput, s: usize) -> Result<RecourseResult> {
    let inst = input.instance;
    let scen = input.scenarios;
    let nb = input.neighborhoods;
    let costs = input.costs;
    if s >= scen.n_scenarios() {
        return Err(Error::invalid(format!("scenario {s} out of range")));
    }
    let n = inst.n_nodes();
    let types = inst.vehicle_types();

    let mut obj = Vec::new();
    let mut ys: Vec<(usize, usize, usize)> = Vec::new();
    for (k, r) in plan.routes.iter().enumerate() {
        for &i in &r.sequence {
            for &j in nb.out_set(i) {
                ys.push((k, i, j));
                obj.push(recourse_coef(input, i, j));
            }
        }
    }
    let w0 = obj.len();
    for j in inst.customers() {
        obj.push(costs.gamma * scen.demand(s, j));
    }
    let mut lp = DenseLp::new(obj);
    for j in inst.customers() {
        let mut row: Vec<(usize, f64)> = ys
            .iter()
            .enumerate()
            .filter(|(_, &(_, _, to))| to == j)
            .map(|(v, _)| (v, 1.0))
            .collect();
        row.push((w0 + j - 1, 1.0));
        lp.add_row(&row, Relation::Eq, 1.0);
    }
    let mut lengths = Vec::with_capacity(plan.routes.len());
    for (k, r) in plan.routes.iter().enumerate() {
        let p = r.vehicle_type;
        let vt = &types[p];
        let length = inst.tour_length(&r.sequence);
        lengths.push(length);
        let mine: Vec<(usize, (usize, usize))> = ys
            .iter()
            .enumerate()
            .filter(|(_, y)| y.0 == k)
            .map(|(v, y)| (v, (y.1, y.2)))
            .collect();
        let cap: Vec<(usize, f64)> = mine.iter().map(|&(v, (_, j))| (v, scen.demand(s, j))).collect();
        lp.add_row(&cap, Relation::Le, vt.capacity);
        let time: Vec<(usize, f64)> = mine
            .iter()
            .filter(|(_, (i, j))| i != j)
            .map(|&(v, (i, j))| (v, inst.service_time(j) + costs.beta * inst.travel_time(p, i, j)))
            .collect();
        let slack = inst.shift_limit() - length / vt.speed;
        if !time.is_empty() {
            lp.add_row(&time, Relation::Le, slack.max(0.0));
        }
    }
    let x = match lp.solve()? {
        LpOutcome::Optimal { x, .. } => x,
        other => return Err(Error::Solver(format!("recourse LP of scenario {s}: {other:?}"))),
    };

    let mut actions = Vec::new();
    let mut loads = vec![0.0; plan.routes.len()];
    let mut times: Vec<f64> = plan
        .routes
        .iter()
        .zip(&lengths)
        .map(|(r, len)| len / types[r.vehicle_type].speed)
        .collect();
    let mut recourse_cost = 0.0;
    for (v, &(k, i, j)) in ys.iter().enumerate() {
        let y = x[v];
        if y <= 1e-12 {
            continue;
        }
        let p = plan.routes[k].vehicle_type;
        loads[k] += y * scen.demand(s, j);
        if i != j {
            times[k] += y * (inst.service_time(j) + costs.beta * inst.travel_time(p, i, j));
        }
        recourse_cost += y * recourse_coef(input, i, j);
        actions.push(RecourseAction {
            from: i,
            to: j,
            fraction: y,
        });
    }
    let mut unserved = vec![0.0; n];
    let mut penalty_cost = 0.0;
    for j in inst.customers() {
        unserved[j] = x[w0 + j - 1];
        penalty_cost += costs.gamma * scen.demand(s, j) * unserved[j];
    }
    Ok(RecourseResult {
        scenario: s,
        actions,
        unserved,
        loads,
        times,
        recourse_cost,
        penalty_cost,
        cost: recourse_cost + penalty_cost,
    })
}
