//! Branch and bound over binary variables with LP relaxations solved by a
//! sparse bounded simplex (the `microlp` crate).
//!
//! Node selection is best-bound with plunging: after branching, the child in
//! the rounding direction is processed next and its sibling joins the open
//! list. Children share their parent's optimal LP, so each child costs one
//! dual-simplex reoptimization after fixing the branching variable.

use std::rc::Rc;
use std::time::Instant;

use microlp::{ComparisonOp, OptimizationDirection, Problem, Solution, SolveOutcome};

use super::model::{relative_gap, MipModel, MipSolution, Sense, SolveStatus, VarKind};
use super::Limits;
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct BnbOptions {
    pub limits: Limits,
    /// A full assignment whose binary part seeds the incumbent.
    pub start: Option<Vec<f64>>,
    /// Integrality tolerance.
    pub int_tol: f64,
    /// Absolute pruning tolerance.
    pub abs_tol: f64,
    /// Try the all-zero binary completion as a first incumbent.
    pub zero_heuristic: bool,
    /// Approximate bytes of parent LPs kept for warm starts; open nodes
    /// beyond it re-solve from the root.
    pub warm_start_memory: usize,
}

impl Default for BnbOptions {
    fn default() -> Self {
        BnbOptions {
            limits: Limits::default(),
            start: None,
            int_tol: 1e-6,
            abs_tol: 1e-9,
            zero_heuristic: true,
            warm_start_memory: 512 << 20,
        }
    }
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    fixings: Vec<(usize, f64)>,
    parent: Option<Rc<Solution>>,
}

enum LpResult {
    Solved(Solution),
    Infeasible,
    Interrupted,
}

struct Relaxation<'a> {
    model: &'a MipModel,
    binaries: Vec<usize>,
    limits: Limits,
    started: Instant,
}

impl<'a> Relaxation<'a> {
    fn remaining(&self) -> Option<std::time::Duration> {
        self.limits.duration().map(|d| d.saturating_sub(self.started.elapsed()))
    }

    fn out_of_time(&self) -> bool {
        matches!(self.remaining(), Some(d) if d.is_zero())
    }

    /// A fresh LP with optional per-variable bound overrides. `None` when an
    /// empty row is violated.
    fn problem(&self, overrides: &[(usize, f64)]) -> Option<(Problem, Vec<microlp::Variable>)> {
        let mut lower: Vec<f64> = self.model.variables.iter().map(|v| v.lower).collect();
        let mut upper: Vec<f64> = self.model.variables.iter().map(|v| v.upper).collect();
        for &(k, val) in overrides {
            lower[k] = val;
            upper[k] = val;
        }
        let mut problem = Problem::new(OptimizationDirection::Minimize);
        if let Some(d) = self.remaining() {
            problem.set_time_limit(d);
        }
        let vars: Vec<microlp::Variable> = self
            .model
            .variables
            .iter()
            .enumerate()
            .map(|(k, v)| problem.add_var(v.obj, (lower[k], upper[k])))
            .collect();
        for c in &self.model.constraints {
            if c.terms.is_empty() {
                let ok = match c.sense {
                    Sense::Le => 0.0 <= c.rhs + 1e-9,
                    Sense::Ge => 0.0 >= c.rhs - 1e-9,
                    Sense::Eq => c.rhs.abs() <= 1e-9,
                };
                if !ok {
                    return None;
                }
                continue;
            }
            let op = match c.sense {
                Sense::Le => ComparisonOp::Le,
                Sense::Ge => ComparisonOp::Ge,
                Sense::Eq => ComparisonOp::Eq,
            };
            problem.add_constraint(
                c.terms.iter().map(|&(v, a)| (vars[v], a)).collect::<Vec<_>>(),
                op,
                c.rhs,
            );
        }
        Some((problem, vars))
    }

    fn solve_fresh(&self, overrides: &[(usize, f64)]) -> Result<(LpResult, Vec<microlp::Variable>)> {
        let Some((problem, vars)) = self.problem(overrides) else {
            return Ok((LpResult::Infeasible, Vec::new()));
        };
        Ok((lp_outcome(problem.solve())?, vars))
    }

    fn values(&self, sol: &Solution, vars: &[microlp::Variable]) -> Vec<f64> {
        vars.iter().map(|&v| sol.var_value_raw(v)).collect()
    }

    fn most_fractional(&self, values: &[f64], tol: f64) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for &k in &self.binaries {
            let frac = values[k] - values[k].floor();
            if frac > tol && frac < 1.0 - tol {
                let score = (frac - 0.5).abs();
                if best.map_or(true, |(b, _)| score < b) {
                    best = Some((score, k));
                }
            }
        }
        best.map(|(_, k)| k)
    }
}

fn lp_outcome(res: std::result::Result<SolveOutcome, microlp::Error>) -> Result<LpResult> {
    match res {
        Ok(SolveOutcome::Solution(sol)) => Ok(LpResult::Solved(sol)),
        Ok(SolveOutcome::Interrupted(_)) => Ok(LpResult::Interrupted),
        Err(microlp::Error::Infeasible) => Ok(LpResult::Infeasible),
        Err(microlp::Error::Unbounded) => Err(Error::Solver("LP relaxation is unbounded".into())),
        Err(e) => Err(Error::Solver(e.to_string())),
    }
}

fn fix(sol: Solution, var: microlp::Variable, val: f64) -> Result<LpResult> {
    lp_outcome(sol.fix_var(var, val))
}

/// Solves `model` by branch and bound.
pub fn solve_internal(model: &MipModel, opts: &BnbOptions) -> Result<MipSolution> {
    model.validate()?;
    let started = Instant::now();
    let binaries: Vec<usize> = model
        .variables
        .iter()
        .enumerate()
        .filter(|(_, v)| v.kind == VarKind::Binary)
        .map(|(k, _)| k)
        .collect();
    let relax = Relaxation {
        model,
        binaries,
        limits: opts.limits,
        started,
    };

    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let offer = |incumbent: &mut Option<(f64, Vec<f64>)>, values: Vec<f64>| {
        let obj = model.objective_value(&values);
        if incumbent.as_ref().map_or(true, |(best, _)| obj < *best - 1e-12) {
            log::debug!("new incumbent {obj}");
            *incumbent = Some((obj, values));
        }
    };

    // Completions of fixed binary patterns seed the incumbent.
    let mut seeds: Vec<Vec<(usize, f64)>> = Vec::new();
    if let Some(start) = &opts.start {
        if start.len() == model.n_vars() {
            seeds.push(relax.binaries.iter().map(|&k| (k, start[k].round())).collect());
        }
    }
    if opts.zero_heuristic && !relax.binaries.is_empty() {
        seeds.push(
            relax
                .binaries
                .iter()
                .map(|&k| (k, model.variables[k].lower.max(0.0).round()))
                .collect(),
        );
    }
    for overrides in seeds {
        if relax.out_of_time() {
            break;
        }
        if let (LpResult::Solved(sol), vars) = relax.solve_fresh(&overrides)? {
            offer(&mut incumbent, relax.values(&sol, &vars));
        }
        log::debug!("seed completion solved after {:.3}s", started.elapsed().as_secs_f64());
    }

    let (root_lp, vars) = relax.solve_fresh(&[])?;
    let root = match root_lp {
        LpResult::Solved(sol) => sol,
        LpResult::Infeasible => {
            return Ok(MipSolution {
                values: Vec::new(),
                objective: f64::INFINITY,
                best_bound: f64::INFINITY,
                status: SolveStatus::Infeasible,
                gap: f64::INFINITY,
                nodes: 1,
                root_bound: f64::INFINITY,
            })
        }
        LpResult::Interrupted => {
            return Ok(finish(model, incumbent, f64::NEG_INFINITY, SolveStatus::TimeLimit, 1, f64::NEG_INFINITY))
        }
    };
    let root_bound = root.objective() + model.objective_constant;
    log::debug!("root bound {root_bound} after {:.3}s", started.elapsed().as_secs_f64());
    let root = Rc::new(root);

    let gap_ok = |inc: f64, bound: f64, gap: f64| -> bool {
        inc - bound <= opts.abs_tol.max(gap * inc.abs())
    };

    let nnz: usize = model.constraints.iter().map(|c| c.terms.len()).sum();
    let lp_bytes = 16 * nnz + 64 * (model.n_vars() + model.n_constraints()) + 1;
    let max_warm = (opts.warm_start_memory / lp_bytes).max(2);
    let mut open: Vec<Node> = Vec::new();
    let mut warm = 0usize;
    let mut next = Some(Node {
        bound: root_bound,
        depth: 0,
        seq: 0,
        fixings: Vec::new(),
        parent: None,
    });
    let mut seq = 1;
    let mut nodes = 0usize;
    let mut first = true;
    let mut stop_status = None;

    loop {
        let node = match next.take() {
            Some(n) => n,
            None => {
                let Some(best) = open
                    .iter()
                    .enumerate()
                    .min_by(|a, b| {
                        a.1.bound
                            .total_cmp(&b.1.bound)
                            .then(b.1.depth.cmp(&a.1.depth))
                            .then(a.1.seq.cmp(&b.1.seq))
                    })
                    .map(|(k, _)| k)
                else {
                    break;
                };
                let node = open.swap_remove(best);
                if node.parent.is_some() {
                    warm -= 1;
                }
                node
            }
        };
        if let Some((inc, _)) = &incumbent {
            let global = open.iter().map(|n| n.bound).fold(node.bound, f64::min);
            if gap_ok(*inc, global, opts.limits.gap) {
                // Everything left is within the requested gap.
                open.clear();
                break;
            }
            if gap_ok(*inc, node.bound, 0.0) {
                continue;
            }
        }
        if !first && relax.out_of_time() {
            open.push(node);
            stop_status = Some(SolveStatus::TimeLimit);
            break;
        }
        if let Some(limit) = opts.limits.node_limit {
            if nodes >= limit {
                open.push(node);
                stop_status = Some(SolveStatus::Feasible);
                break;
            }
        }
        nodes += 1;

        let lp = if first {
            first = false;
            LpResult::Solved((*root).clone())
        } else {
            match node.parent.clone() {
                Some(parent) => {
                    let sol = Rc::try_unwrap(parent).unwrap_or_else(|rc| (*rc).clone());
                    let &(var, val) = node.fixings.last().unwrap();
                    fix(sol, vars[var], val)?
                }
                None => {
                    let mut current = LpResult::Solved((*root).clone());
                    for &(var, val) in &node.fixings {
                        current = match current {
                            LpResult::Solved(sol) => fix(sol, vars[var], val)?,
                            other => other,
                        };
                    }
                    current
                }
            }
        };
        let sol = match lp {
            LpResult::Solved(sol) => sol,
            LpResult::Infeasible => continue,
            LpResult::Interrupted => {
                open.push(node);
                stop_status = Some(SolveStatus::TimeLimit);
                break;
            }
        };
        let bound = sol.objective() + model.objective_constant;
        if let Some((inc, _)) = &incumbent {
            if gap_ok(*inc, bound, 0.0) {
                continue;
            }
        }
        let values = relax.values(&sol, &vars);
        match relax.most_fractional(&values, opts.int_tol) {
            None => {
                let off: Vec<(usize, f64)> = relax
                    .binaries
                    .iter()
                    .filter(|&&k| (values[k] - values[k].round()).abs() > 1e-9)
                    .map(|&k| (k, values[k].round()))
                    .collect();
                if off.is_empty() {
                    offer(&mut incumbent, values);
                } else {
                    // Snap nearly integral binaries and re-solve the continuous part.
                    let mut current = LpResult::Solved(sol);
                    for &(k, val) in &off {
                        current = match current {
                            LpResult::Solved(s) => fix(s, vars[k], val)?,
                            other => other,
                        };
                    }
                    if let LpResult::Solved(s) = current {
                        offer(&mut incumbent, relax.values(&s, &vars));
                    }
                }
            }
            Some(k) => {
                let up_first = values[k] >= 0.5;
                let parent = Rc::new(sol);
                let mut children = Vec::with_capacity(2);
                for val in if up_first { [1.0, 0.0] } else { [0.0, 1.0] } {
                    let mut fixings = node.fixings.clone();
                    fixings.push((k, val));
                    children.push(Node {
                        bound,
                        depth: node.depth + 1,
                        seq,
                        fixings,
                        parent: Some(Rc::clone(&parent)),
                    });
                    seq += 1;
                }
                let mut sibling = children.pop().unwrap();
                next = children.pop();
                if warm < max_warm {
                    warm += 1;
                } else {
                    sibling.parent = None;
                }
                open.push(sibling);
            }
        }
    }

    let status = stop_status.unwrap_or(SolveStatus::Optimal);
    let bound = match &incumbent {
        Some((inc, _)) if status == SolveStatus::Optimal => {
            let open_bound = open.iter().map(|n| n.bound).fold(*inc, f64::min);
            open_bound.min(*inc)
        }
        _ => open
            .iter()
            .map(|n| n.bound)
            .fold(incumbent.as_ref().map_or(f64::INFINITY, |i| i.0), f64::min),
    };
    let status = if status == SolveStatus::Optimal && incumbent.is_none() {
        SolveStatus::Infeasible
    } else {
        status
    };
    Ok(finish(model, incumbent, bound, status, nodes, root_bound))
}

fn finish(
    model: &MipModel,
    incumbent: Option<(f64, Vec<f64>)>,
    bound: f64,
    status: SolveStatus,
    nodes: usize,
    root_bound: f64,
) -> MipSolution {
    match incumbent {
        Some((objective, values)) => {
            let best_bound = bound.min(objective);
            MipSolution {
                values,
                objective,
                best_bound,
                status,
                gap: relative_gap(objective, best_bound),
                nodes,
                root_bound,
            }
        }
        None => {
            let _ = model;
            MipSolution {
                values: Vec::new(),
                objective: f64::INFINITY,
                best_bound: bound,
                status,
                gap: f64::INFINITY,
                nodes,
                root_bound,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn knapsack(values: &[f64], weights: &[f64], cap: f64) -> MipModel {
        let mut m = MipModel::new();
        let vars: Vec<usize> = values
            .iter()
            .enumerate()
            .map(|(k, &v)| m.binary(format!("b{k}"), -v).unwrap())
            .collect();
        m.add_constraint(
            "cap",
            vars.iter().zip(weights).map(|(&v, &w)| (v, w)).collect(),
            Sense::Le,
            cap,
        )
        .unwrap();
        m
    }

    fn brute_knapsack(values: &[f64], weights: &[f64], cap: f64) -> f64 {
        let n = values.len();
        (0..1u32 << n)
            .filter_map(|mask| {
                let w: f64 = (0..n).filter(|k| mask >> k & 1 == 1).map(|k| weights[k]).sum();
                (w <= cap + 1e-9)
                    .then(|| -(0..n).filter(|k| mask >> k & 1 == 1).map(|k| values[k]).sum::<f64>())
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn knapsacks_match_enumeration() {
        let cases: [(&[f64], &[f64], f64); 3] = [
            (&[10.0, 13.0, 7.0, 8.0, 3.0], &[5.0, 7.0, 4.0, 4.0, 2.0], 11.0),
            (&[4.0, 2.0, 1.0, 10.0, 2.0, 7.0, 3.0], &[12.0, 2.0, 1.0, 4.0, 1.0, 7.0, 5.0], 15.0),
            (
                &[6.0, 5.0, 8.0, 9.0, 6.0, 7.0, 3.0, 5.0, 4.0, 2.0, 9.0, 1.0],
                &[2.0, 3.0, 6.0, 7.0, 5.0, 9.0, 4.0, 3.0, 2.0, 1.0, 8.0, 1.0],
                20.5,
            ),
        ];
        for (v, w, c) in cases {
            let sol = solve_internal(&knapsack(v, w, c), &BnbOptions::default()).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert!((sol.objective - brute_knapsack(v, w, c)).abs() < 1e-9);
            assert!(sol.best_bound <= sol.objective + 1e-9);
            assert!(sol.root_bound <= sol.objective + 1e-9);
        }
    }

    #[test]
    fn pure_lp_and_infeasible() {
        let mut m = MipModel::new();
        let x = m.continuous("x", 1.0).unwrap();
        let y = m.continuous("y", 2.0).unwrap();
        m.add_constraint("c", vec![(x, 1.0), (y, 1.0)], Sense::Ge, 3.0).unwrap();
        let sol = solve_internal(&m, &BnbOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.gap, 0.0);
        assert!((sol.objective - 3.0).abs() < 1e-9);

        let mut m = MipModel::new();
        let b = m.binary("b", 1.0).unwrap();
        m.add_constraint("c", vec![(b, 1.0)], Sense::Ge, 2.0).unwrap();
        let sol = solve_internal(&m, &BnbOptions::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }
}
