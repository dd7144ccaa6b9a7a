//! Translation of raw solver values into routes, recourse actions and costs.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::model::{MipModel, MipSolution, SolveStatus};
use super::{recourse_coef, Layout, NodeLayout, PathLayout, StochasticInput};
use crate::domain::{Instance, DEPOT};
use crate::error::{Error, Result};

const ON: f64 = 0.5;
const ZERO: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanRoute {
    /// Demand nodes in driving order.
    pub sequence: Vec<usize>,
    /// Index of the assigned vehicle type.
    pub vehicle_type: usize,
    pub vehicle_id: String,
    pub length: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecourseAction {
    /// Route node that performs the delivery.
    pub from: usize,
    /// Node whose demand is delivered.
    pub to: usize,
    pub fraction: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub fixed: f64,
    pub travel: f64,
    pub expected_recourse: f64,
    pub expected_penalty: f64,
    pub total: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSolution {
    /// Vehicles per type, in instance type order.
    pub fleet: Vec<usize>,
    pub routes: Vec<PlanRoute>,
    /// Per scenario, the nonzero `y` values including self-service.
    pub recourse: Vec<Vec<RecourseAction>>,
    /// `unserved[s][j]`; index 0 unused.
    pub unserved: Vec<Vec<f64>>,
    pub costs: CostBreakdown,
    pub status: SolveStatus,
    pub objective: f64,
    pub best_bound: f64,
}

impl PlanSolution {
    /// The plan with no vehicles: everything is outsourced.
    pub fn empty(input: &StochasticInput) -> PlanSolution {
        let inst = input.instance;
        let scen = input.scenarios;
        let mut unserved = vec![vec![0.0; inst.n_nodes()]; scen.n_scenarios()];
        for row in &mut unserved {
            for j in inst.customers() {
                row[j] = 1.0;
            }
        }
        let mut plan = PlanSolution {
            fleet: vec![0; inst.n_types()],
            routes: Vec::new(),
            recourse: vec![Vec::new(); scen.n_scenarios()],
            unserved,
            costs: CostBreakdown::default(),
            status: SolveStatus::Feasible,
            objective: 0.0,
            best_bound: f64::NEG_INFINITY,
        };
        plan.costs = plan.recompute_costs(input);
        plan.objective = plan.costs.total;
        plan
    }

    /// Costs accumulated from the plan itself.
    pub fn recompute_costs(&self, input: &StochasticInput) -> CostBreakdown {
        let inst = input.instance;
        let scen = input.scenarios;
        let types = inst.vehicle_types();
        let mut c = CostBreakdown::default();
        for r in &self.routes {
            let vt = &types[r.vehicle_type];
            c.fixed += vt.fixed_cost;
            c.travel += vt.unit_distance_cost * inst.tour_length(&r.sequence);
        }
        for s in 0..scen.n_scenarios() {
            let pi = scen.probability(s);
            for a in &self.recourse[s] {
                c.expected_recourse += pi * recourse_coef(input, a.from, a.to) * a.fraction;
            }
            for j in inst.customers() {
                c.expected_penalty += pi * input.costs.gamma * scen.demand(s, j) * self.unserved[s][j];
            }
        }
        c.total = c.fixed + c.travel + c.expected_recourse + c.expected_penalty;
        c
    }

    /// Route index serving each node, if any.
    pub fn route_of(&self, n_nodes: usize) -> Vec<Option<usize>> {
        let mut owner = vec![None; n_nodes];
        for (k, r) in self.routes.iter().enumerate() {
            for &i in &r.sequence {
                owner[i] = Some(k);
            }
        }
        owner
    }

    /// Checks coverage, single visits, capacity, fraction ranges and
    /// neighborhood membership.
    pub fn check(&self, input: &StochasticInput) -> Result<()> {
        let inst = input.instance;
        let scen = input.scenarios;
        let n = inst.n_nodes();
        let mut seen = vec![false; n];
        for r in &self.routes {
            for &i in &r.sequence {
                if i == DEPOT || i >= n || std::mem::replace(&mut seen[i], true) {
                    return Err(decode_err("node visited by more than one route", vec![i]));
                }
            }
        }
        let owner = self.route_of(n);
        let tol = 1e-6;
        for s in 0..scen.n_scenarios() {
            let mut covered = vec![0.0; n];
            let mut load = vec![0.0; self.routes.len()];
            for a in &self.recourse[s] {
                let Some(k) = owner[a.from] else {
                    return Err(decode_err("recourse from a node off every route", vec![a.from]));
                };
                if !input.neighborhoods.out_set(a.from).contains(&a.to) {
                    return Err(decode_err("recourse outside the neighborhood", vec![a.from, a.to]));
                }
                if a.fraction < -tol || a.fraction > 1.0 + tol {
                    return Err(decode_err("recourse fraction out of range", vec![a.from, a.to]));
                }
                covered[a.to] += a.fraction;
                load[k] += a.fraction * scen.demand(s, a.to);
            }
            for j in inst.customers() {
                let w = self.unserved[s][j];
                if w < -tol || w > 1.0 + tol {
                    return Err(decode_err("unserved fraction out of range", vec![j]));
                }
                if (covered[j] + w - 1.0).abs() > tol {
                    return Err(decode_err(
                        &format!("coverage of scenario {s} is {}", covered[j] + w),
                        vec![j],
                    ));
                }
            }
            for (k, r) in self.routes.iter().enumerate() {
                let cap = inst.vehicle_types()[r.vehicle_type].capacity;
                if load[k] > cap + tol {
                    return Err(decode_err(
                        &format!("route load {} exceeds capacity {cap} in scenario {s}", load[k]),
                        r.sequence.clone(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Per scenario and route: driving time plus recourse time, measured as
    /// `length / v_p + sum_{i != j} (service_j + beta * t_ijp) y_ij`.
    pub fn route_times(&self, input: &StochasticInput) -> Vec<Vec<f64>> {
        let inst = input.instance;
        let owner = self.route_of(inst.n_nodes());
        (0..input.scenarios.n_scenarios())
            .map(|s| {
                let mut t: Vec<f64> = self
                    .routes
                    .iter()
                    .map(|r| inst.tour_length(&r.sequence) / inst.vehicle_types()[r.vehicle_type].speed)
                    .collect();
                for a in &self.recourse[s] {
                    if a.from == a.to {
                        continue;
                    }
                    let k = owner[a.from].expect("recourse origin on a route");
                    let p = self.routes[k].vehicle_type;
                    t[k] += (inst.service_time(a.to) + input.costs.beta * inst.travel_time(p, a.from, a.to))
                        * a.fraction;
                }
                t
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn decode_err(message: &str, nodes: Vec<usize>) -> Error {
    Error::Decode {
        message: message.to_string(),
        nodes,
    }
}

fn plan_route(inst: &Instance, sequence: Vec<usize>, p: usize) -> PlanRoute {
    PlanRoute {
        length: inst.tour_length(&sequence),
        vehicle_id: inst.vehicle_types()[p].id.clone(),
        vehicle_type: p,
        sequence,
    }
}

/// Decodes `raw` into a plan and reconciles the recomputed cost with the
/// solver objective.
pub fn decode_solution(model: &MipModel, raw: &MipSolution, input: &StochasticInput) -> Result<PlanSolution> {
    if !raw.has_solution() {
        return Err(decode_err(
            &format!("no solution to decode (status {:?})", raw.status),
            Vec::new(),
        ));
    }
    if raw.values.len() != model.n_vars() {
        return Err(decode_err("solution length does not match the model", Vec::new()));
    }
    let layout = model
        .layout
        .as_ref()
        .ok_or_else(|| Error::Model("model has no formulation layout".into()))?;
    let (routes, recourse, unserved) = match layout {
        Layout::Node(l) => decode_node(l, &raw.values, input)?,
        Layout::Path(l) => decode_path(l, &raw.values, input)?,
    };
    let mut fleet = vec![0; input.instance.n_types()];
    for r in &routes {
        fleet[r.vehicle_type] += 1;
    }
    let mut plan = PlanSolution {
        fleet,
        routes,
        recourse,
        unserved,
        costs: CostBreakdown::default(),
        status: raw.status,
        objective: raw.objective,
        best_bound: raw.best_bound,
    };
    plan.costs = plan.recompute_costs(input);
    let diff = (plan.costs.total - raw.objective).abs();
    if diff > 1e-5 * raw.objective.abs().max(1.0) {
        return Err(decode_err(
            &format!(
                "recomputed cost {} differs from solver objective {}",
                plan.costs.total, raw.objective
            ),
            Vec::new(),
        ));
    }
    plan.check(input)?;
    Ok(plan)
}

type Decoded = (Vec<PlanRoute>, Vec<Vec<RecourseAction>>, Vec<Vec<f64>>);

fn second_stage(
    ys: &[Vec<(usize, usize, usize)>],
    w: &[Vec<usize>],
    values: &[f64],
    input: &StochasticInput,
) -> (Vec<Vec<RecourseAction>>, Vec<Vec<f64>>) {
    let n = input.instance.n_nodes();
    let recourse = ys
        .iter()
        .map(|row| {
            row.iter()
                .filter(|&&(_, _, var)| values[var] > ZERO)
                .map(|&(i, j, var)| RecourseAction {
                    from: i,
                    to: j,
                    fraction: values[var],
                })
                .collect()
        })
        .collect();
    let unserved = w
        .iter()
        .map(|row| {
            let mut out = vec![0.0; n];
            for j in input.instance.customers() {
                out[j] = values[row[j]].clamp(0.0, 1.0);
            }
            out
        })
        .collect();
    (recourse, unserved)
}

fn decode_node(l: &NodeLayout, values: &[f64], input: &StochasticInput) -> Result<Decoded> {
    let inst = input.instance;
    let n = l.n_nodes;
    let on = |var: usize| values[var] > ON;
    let mut routes = Vec::new();
    let mut visited = vec![false; n];
    for p in 0..l.n_types {
        for start in inst.customers() {
            if !on(l.x(DEPOT, start, p).unwrap()) {
                continue;
            }
            let mut seq = vec![start];
            let mut cur = start;
            loop {
                if std::mem::replace(&mut visited[cur], true) {
                    return Err(decode_err("route revisits a node", seq));
                }
                let ends = on(l.z[cur][p]);
                let passes = on(l.v[cur][p]);
                let succ: Vec<usize> = inst
                    .customers()
                    .filter(|&j| j != cur && on(l.x(cur, j, p).unwrap()))
                    .collect();
                match (ends, passes, succ.as_slice()) {
                    (true, false, []) => break,
                    (false, true, [next]) => {
                        seq.push(*next);
                        cur = *next;
                    }
                    _ => return Err(decode_err("broken flow at route node", vec![cur])),
                }
            }
            routes.push(plan_route(inst, seq, p));
        }
    }
    let mut stray = BTreeSet::new();
    for i in inst.customers() {
        if visited[i] {
            continue;
        }
        for p in 0..l.n_types {
            if on(l.z[i][p]) || on(l.v[i][p]) {
                stray.insert(i);
            }
            for j in 0..n {
                if j != i && j != DEPOT && (on(l.x(i, j, p).unwrap()) || l.x(j, i, p).map_or(false, on)) {
                    stray.insert(i);
                }
            }
        }
    }
    if !stray.is_empty() {
        return Err(decode_err("arcs not connected to the depot", stray.into_iter().collect()));
    }
    let (recourse, unserved) = second_stage(&l.y, &l.w, values, input);
    Ok((routes, recourse, unserved))
}

fn decode_path(l: &PathLayout, values: &[f64], input: &StochasticInput) -> Result<Decoded> {
    let inst = input.instance;
    let mut routes = Vec::new();
    for (r, row) in l.psi.iter().enumerate() {
        let active: Vec<usize> = (0..l.n_types)
            .filter(|&p| row[p].map_or(false, |v| values[v] > ON))
            .collect();
        match active.as_slice() {
            [] => {}
            [p] => routes.push(plan_route(inst, l.routes[r].sequence.clone(), *p)),
            _ => return Err(decode_err("route assigned to several types", l.routes[r].sequence.clone())),
        }
    }
    let ys: Vec<Vec<(usize, usize, usize)>> = l
        .y
        .iter()
        .map(|row| row.iter().map(|&(_, i, j, var)| (i, j, var)).collect())
        .collect();
    let (recourse, unserved) = second_stage(&ys, &l.w, values, input);
    Ok((routes, recourse, unserved))
}
