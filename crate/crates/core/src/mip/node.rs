//! Node-based (arc flow) formulation with load and time accumulation.

use serde::{Deserialize, Serialize};

use super::model::{MipModel, Sense};
use super::{Layout, StochasticInput};
use crate::domain::DEPOT;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeLayout {
    pub n_nodes: usize,
    pub n_types: usize,
    pub n_scenarios: usize,
    /// `z[i][p]`, empty row for the depot.
    pub z: Vec<Vec<usize>>,
    pub v: Vec<Vec<usize>>,
    /// `x[(i * n_nodes + j) * n_types + p]`.
    pub x: Vec<Option<usize>>,
    /// Per scenario: `(i, j, var)` for `j` in the out-neighborhood of `i`.
    pub y: Vec<Vec<(usize, usize, usize)>>,
    /// `w[s][i]`, `u[s][i]`, `tau[s][i]`; index 0 unused.
    pub w: Vec<Vec<usize>>,
    pub u: Vec<Vec<usize>>,
    pub tau: Vec<Vec<usize>>,
}

impl NodeLayout {
    pub fn x(&self, i: usize, j: usize, p: usize) -> Option<usize> {
        self.x[(i * self.n_nodes + j) * self.n_types + p]
    }

    /// All first-stage (binary) variables.
    pub fn first_stage(&self) -> Vec<usize> {
        let mut vars: Vec<usize> = self.z.iter().flatten().copied().collect();
        vars.extend(self.v.iter().flatten().copied());
        vars.extend(self.x.iter().flatten().copied());
        vars.sort_unstable();
        vars
    }
}

pub(crate) fn check_input(input: &StochasticInput) -> Result<()> {
    input.scenarios.check_instance(input.instance)?;
    if input.neighborhoods.n_nodes() != input.instance.n_nodes() {
        return Err(Error::invalid(
            "neighborhoods are missing or do not match the instance",
        ));
    }
    if !(input.instance.shift_limit() > 0.0) {
        return Err(Error::invalid("shift limit must be positive"));
    }
    input.costs.validate()
}

/// Builds the node-based model; `with_valid_ineq` adds the per-scenario
/// fleet-capacity cut `sum l_p z_ip >= sum d_js y_ijs`.
pub fn build_node_model(input: &StochasticInput, with_valid_ineq: bool) -> Result<MipModel> {
    check_input(input)?;
    let inst = input.instance;
    let scen = input.scenarios;
    let nb = input.neighborhoods;
    let costs = input.costs;
    let n = inst.n_nodes();
    let np = inst.n_types();
    let ns = scen.n_scenarios();
    let types = inst.vehicle_types();
    let l_max = inst.max_capacity();
    let t_bar = inst.shift_limit();

    let mut m = MipModel::new();
    let mut z = vec![Vec::new(); n];
    let mut v = vec![Vec::new(); n];
    for i in inst.customers() {
        for p in 0..np {
            z[i].push(m.binary(format!("z_{i}_{p}"), inst.fixed_cost_by_index(p, i))?);
        }
        for p in 0..np {
            v[i].push(m.binary(format!("v_{i}_{p}"), 0.0)?);
        }
    }
    let mut x = vec![None; n * n * np];
    for i in 0..n {
        for j in inst.customers() {
            if i == j {
                continue;
            }
            for p in 0..np {
                x[(i * n + j) * np + p] =
                    Some(m.binary(format!("x_{i}_{j}_{p}"), inst.arc_cost(p, i, j))?);
            }
        }
    }
    let xv = |i: usize, j: usize, p: usize| x[(i * n + j) * np + p];

    let mut y = vec![Vec::new(); ns];
    let mut w = vec![vec![usize::MAX; n]; ns];
    let mut u = vec![vec![usize::MAX; n]; ns];
    let mut tau = vec![vec![usize::MAX; n]; ns];
    // y_index[s][i] = list of (j, var)
    let mut y_out: Vec<Vec<Vec<(usize, usize)>>> = vec![vec![Vec::new(); n]; ns];
    for s in 0..ns {
        let pi = scen.probability(s);
        for i in inst.customers() {
            for &j in nb.out_set(i) {
                let coef = pi * super::recourse_coef(input, i, j);
                let var = m.continuous(format!("y_{i}_{j}_{s}"), coef)?;
                y[s].push((i, j, var));
                y_out[s][i].push((j, var));
            }
        }
        for i in inst.customers() {
            w[s][i] = m.continuous(format!("w_{i}_{s}"), pi * costs.gamma * scen.demand(s, i))?;
            u[s][i] = m.continuous(format!("u_{i}_{s}"), 0.0)?;
            tau[s][i] = m.continuous(format!("tau_{i}_{s}"), 0.0)?;
        }
    }

    for p in 0..np {
        let mut terms: Vec<(usize, f64)> = inst
            .customers()
            .map(|j| (xv(DEPOT, j, p).unwrap(), 1.0))
            .collect();
        terms.extend(inst.customers().map(|i| (z[i][p], -1.0)));
        m.add_constraint(format!("depart_{p}"), terms, Sense::Eq, 0.0)?;
    }
    for j in inst.customers() {
        for p in 0..np {
            let mut terms: Vec<(usize, f64)> = (0..n)
                .filter(|&i| i != j)
                .map(|i| (xv(i, j, p).unwrap(), 1.0))
                .collect();
            terms.push((z[j][p], -1.0));
            terms.push((v[j][p], -1.0));
            m.add_constraint(format!("inflow_{j}_{p}"), terms, Sense::Eq, 0.0)?;
        }
    }
    for i in inst.customers() {
        for p in 0..np {
            let mut terms: Vec<(usize, f64)> = inst
                .customers()
                .filter(|&j| j != i)
                .map(|j| (xv(i, j, p).unwrap(), 1.0))
                .collect();
            terms.push((v[i][p], -1.0));
            m.add_constraint(format!("outflow_{i}_{p}"), terms, Sense::Eq, 0.0)?;
        }
    }
    let visit_terms = |i: usize, coef: f64| -> Vec<(usize, f64)> {
        (0..np)
            .flat_map(|p| [(z[i][p], coef), (v[i][p], coef)])
            .collect()
    };
    for i in inst.customers() {
        m.add_constraint(format!("one_type_{i}"), visit_terms(i, 1.0), Sense::Le, 1.0)?;
    }
    for s in 0..ns {
        for &(i, j, var) in &y[s] {
            let mut terms = visit_terms(i, -1.0);
            terms.push((var, 1.0));
            let name = if i == j {
                format!("self_{i}_{s}")
            } else {
                format!("link_{i}_{j}_{s}")
            };
            m.add_constraint(name, terms, Sense::Le, 0.0)?;
        }
    }
    for s in 0..ns {
        let mut cover: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(_, j, var) in &y[s] {
            cover[j].push((var, 1.0));
        }
        for j in inst.customers() {
            let mut terms = std::mem::take(&mut cover[j]);
            terms.push((w[s][j], 1.0));
            m.add_constraint(format!("cover_{j}_{s}"), terms, Sense::Eq, 1.0)?;
        }
    }
    for s in 0..ns {
        for i in inst.customers() {
            // u_is <= sum_p (z+v) l_p + (1 - sum_p (z+v)) l_max
            let mut terms = vec![(u[s][i], 1.0)];
            for p in 0..np {
                let c = l_max - types[p].capacity;
                terms.push((z[i][p], c));
                terms.push((v[i][p], c));
            }
            m.add_constraint(format!("cap_{i}_{s}"), terms, Sense::Le, l_max)?;

            let mut terms = vec![(u[s][i], 1.0)];
            for &(j, var) in &y_out[s][i] {
                terms.push((var, -scen.demand(s, j)));
            }
            m.add_constraint(format!("load_{i}_{s}"), terms, Sense::Ge, 0.0)?;
        }
        for i in inst.customers() {
            for j in inst.customers() {
                if i == j {
                    continue;
                }
                let mut terms = vec![(u[s][j], 1.0), (u[s][i], -1.0)];
                for &(h, var) in &y_out[s][j] {
                    terms.push((var, -scen.demand(s, h)));
                }
                for p in 0..np {
                    terms.push((xv(i, j, p).unwrap(), -l_max));
                }
                m.add_constraint(format!("track_u_{i}_{j}_{s}"), terms, Sense::Ge, -l_max)?;

                let mut terms = vec![(tau[s][j], 1.0), (tau[s][i], -1.0)];
                for p in 0..np {
                    terms.push((xv(i, j, p).unwrap(), -(inst.travel_time(p, i, j) + t_bar)));
                }
                for &(h, var) in &y_out[s][j] {
                    let coef: f64 = (0..np)
                        .map(|p| inst.service_time(j) + costs.beta * inst.travel_time(p, j, h))
                        .sum();
                    terms.push((var, -coef));
                }
                m.add_constraint(format!("track_t_{i}_{j}_{s}"), terms, Sense::Ge, -t_bar)?;
            }
        }
        for i in inst.customers() {
            let mut terms = vec![(tau[s][i], 1.0)];
            for p in 0..np {
                terms.push((z[i][p], inst.travel_time(p, i, DEPOT)));
            }
            m.add_constraint(format!("return_{i}_{s}"), terms, Sense::Le, t_bar)?;
        }
        if with_valid_ineq {
            let mut terms: Vec<(usize, f64)> = Vec::new();
            for i in inst.customers() {
                for p in 0..np {
                    terms.push((z[i][p], types[p].capacity));
                }
            }
            for &(_, j, var) in &y[s] {
                terms.push((var, -scen.demand(s, j)));
            }
            m.add_constraint(format!("fleet_cap_{s}"), terms, Sense::Ge, 0.0)?;
        }
    }

    m.layout = Some(Layout::Node(NodeLayout {
        n_nodes: n,
        n_types: np,
        n_scenarios: ns,
        z,
        v,
        x,
        y,
        w,
        u,
        tau,
    }));
    Ok(m)
}
