//! Kernel Search over the path-based model.
//!
//! The kernel starts with the elementary routes. The remaining routes are
//! shuffled into buckets of size `N`; each bucket is tried together with the
//! kernel in a restricted, time-limited solve, and routes the solve activates
//! join the kernel. Two passes over freshly partitioned buckets are made.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instancegen::rng_for;
use crate::mip::{
    build_path_model_with, decode_solution, solve_external, solve_internal, Backend, BnbOptions, Layout,
    Limits, MipModel, PathOptions, PlanSolution, SolveStatus, StochasticInput,
};
use crate::routegen::{canonical, RoutePool};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsConfig {
    /// Bucket size `N`.
    pub bucket_size: usize,
    /// Overall time budget in seconds.
    pub t_max: f64,
    /// Stop once the incumbent gap to the lower bound is at most this.
    pub opt_threshold: f64,
    /// Per-bucket time limit; `t_max / (2 * buckets)` when absent, with the
    /// bucket count of the first cycle.
    pub subproblem_time: Option<f64>,
    pub seed: u64,
    /// Passes over the bucket list.
    pub cycles: usize,
    /// Relative gap passed to every restricted solve.
    pub subproblem_gap: f64,
    pub path_options: PathOptions,
    pub backend: Backend,
}

impl Default for KsConfig {
    fn default() -> Self {
        KsConfig {
            bucket_size: 100,
            t_max: 600.0,
            opt_threshold: 0.0,
            subproblem_time: None,
            seed: 0,
            cycles: 2,
            subproblem_gap: 1e-6,
            path_options: PathOptions::default(),
            backend: Backend::Internal,
        }
    }
}

impl KsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bucket_size == 0 {
            return Err(Error::invalid("bucket size must be at least 1"));
        }
        if !(self.t_max > 0.0) {
            return Err(Error::invalid("t_max must be positive"));
        }
        if self.cycles == 0 {
            return Err(Error::invalid("at least one cycle is required"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsRecord {
    /// 0 for the initial kernel, then 1, 2, ... across both cycles.
    pub iteration: usize,
    pub cycle: usize,
    /// Bucket index within the cycle; `None` for the initial kernel.
    pub bucket: Option<usize>,
    pub kernel_before: usize,
    pub kernel_after: usize,
    /// Objective of the restricted solve, if it found a solution.
    pub solve_objective: Option<f64>,
    pub solve_status: SolveStatus,
    /// Best objective so far.
    pub incumbent: f64,
    pub elapsed: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KsTrace {
    pub records: Vec<KsRecord>,
    /// Lower bound used for the threshold stop, if computed.
    pub lower_bound: Option<f64>,
}

impl KsTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "iteration,cycle,bucket,kernel_before,kernel_after,solve_objective,solve_status,incumbent,elapsed\n",
        );
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{:.3}\n",
                r.iteration,
                r.cycle,
                r.bucket.map_or(String::new(), |b| b.to_string()),
                r.kernel_before,
                r.kernel_after,
                r.solve_objective.map_or(String::new(), |v| v.to_string()),
                serde_json::to_value(r.solve_status).unwrap().as_str().unwrap(),
                r.incumbent,
                r.elapsed
            ));
        }
        out
    }

    pub fn is_monotone(&self) -> bool {
        self.records
            .windows(2)
            .all(|w| w[1].incumbent <= w[0].incumbent + 1e-9)
    }
}

/// Binary start vector of `model` reproducing the routes of `plan`.
fn start_vector(model: &MipModel, plan: &PlanSolution) -> Option<Vec<f64>> {
    let Some(Layout::Path(l)) = &model.layout else {
        return None;
    };
    let mut values = vec![0.0; model.n_vars()];
    for r in &plan.routes {
        let key = canonical(&r.sequence);
        let idx = l.routes.iter().position(|route| route.sequence == key)?;
        values[l.psi[idx][r.vehicle_type]?] = 1.0;
    }
    Some(values)
}

/// Runs Kernel Search on `pool`. Returns the best plan and the trace.
pub fn kernel_search(input: &StochasticInput, pool: &RoutePool, cfg: &KsConfig) -> Result<(PlanSolution, KsTrace)> {
    cfg.validate()?;
    pool.check_elementary(input.instance)?;
    let started = Instant::now();
    let elapsed = || started.elapsed().as_secs_f64();
    let mut trace = KsTrace::default();

    // Only the full-pool relaxation bounds the full problem; restricted bounds do not.
    if cfg.opt_threshold > 0.0 {
        let full = build_path_model_with(input, pool, &cfg.path_options)?;
        let relax = solve_internal(
            &full,
            &BnbOptions {
                limits: Limits {
                    time: Some(cfg.t_max),
                    node_limit: Some(0),
                    ..Limits::default()
                },
                zero_heuristic: false,
                ..BnbOptions::default()
            },
        )?;
        if relax.root_bound.is_finite() {
            trace.lower_bound = Some(relax.root_bound);
        }
    }

    let mut in_kernel = vec![false; pool.len()];
    for &k in &pool.elementary_ids {
        in_kernel[k] = true;
    }
    let mut best = PlanSolution::empty(input);
    let mut iteration = 0;
    let n_rest = pool.len() - pool.elementary_ids.len();
    let n_buckets = n_rest.div_ceil(cfg.bucket_size).max(1);
    let limit = cfg
        .subproblem_time
        .unwrap_or(cfg.t_max / (2.0 * n_buckets as f64));

    let solve_restricted = |in_kernel: &mut Vec<bool>,
                                bucket: &[usize],
                                limit: f64,
                                best: &mut PlanSolution|
     -> Result<(Option<f64>, SolveStatus, usize, usize)> {
        let before = in_kernel.iter().filter(|&&b| b).count();
        let mut ids: Vec<usize> = (0..pool.len()).filter(|&k| in_kernel[k]).collect();
        ids.extend_from_slice(bucket);
        ids.sort_unstable();
        let sub = pool.subset(&ids);
        let model = build_path_model_with(input, &sub, &cfg.path_options)?;
        let limits = Limits {
            time: Some(limit.max(0.0)),
            gap: cfg.subproblem_gap,
            node_limit: None,
        };
        let raw = match &cfg.backend {
            Backend::Internal => solve_internal(
                &model,
                &BnbOptions {
                    limits,
                    start: start_vector(&model, best),
                    ..BnbOptions::default()
                },
            )?,
            Backend::MpsExternal { command } => solve_external(&model, command, &limits)?,
        };
        let mut objective = None;
        if raw.has_solution() {
            let plan = decode_solution(&model, &raw, input)?;
            objective = Some(plan.costs.total);
            for r in &plan.routes {
                let key = canonical(&r.sequence);
                if let Some(&k) = ids.iter().find(|&&k| pool.routes[k].sequence == key) {
                    in_kernel[k] = true;
                }
            }
            if plan.costs.total < best.costs.total - 1e-9 {
                *best = plan;
            }
        }
        let after = in_kernel.iter().filter(|&&b| b).count();
        Ok((objective, raw.status, before, after))
    };

    let (obj, status, before, after) = solve_restricted(&mut in_kernel, &[], limit.min(cfg.t_max), &mut best)?;
    trace.records.push(KsRecord {
        iteration,
        cycle: 0,
        bucket: None,
        kernel_before: before,
        kernel_after: after,
        solve_objective: obj,
        solve_status: status,
        incumbent: best.costs.total,
        elapsed: elapsed(),
    });

    let stop = |best: &PlanSolution, lb: Option<f64>| -> bool {
        elapsed() > cfg.t_max
            || lb.map_or(false, |lb| {
                cfg.opt_threshold > 0.0 && crate::mip::relative_gap(best.costs.total, lb) <= cfg.opt_threshold
            })
    };

    'cycles: for cycle in 1..=cfg.cycles {
        let mut rest: Vec<usize> = (0..pool.len()).filter(|&k| !in_kernel[k]).collect();
        if rest.is_empty() {
            break;
        }
        rest.shuffle(&mut rng_for(cfg.seed, cycle as u64));
        let buckets: Vec<Vec<usize>> = rest.chunks(cfg.bucket_size).map(<[usize]>::to_vec).collect();
        for (b, bucket) in buckets.iter().enumerate() {
            if stop(&best, trace.lower_bound) {
                break 'cycles;
            }
            let bucket: Vec<usize> = bucket.iter().copied().filter(|&k| !in_kernel[k]).collect();
            iteration += 1;
            let remaining = cfg.t_max - elapsed();
            let (obj, status, before, after) =
                solve_restricted(&mut in_kernel, &bucket, limit.min(remaining), &mut best)?;
            log::info!(
                "kernel search cycle {cycle} bucket {b}: kernel {before} -> {after}, incumbent {}",
                best.costs.total
            );
            trace.records.push(KsRecord {
                iteration,
                cycle,
                bucket: Some(b),
                kernel_before: before,
                kernel_after: after,
                solve_objective: obj,
                solve_status: status,
                incumbent: best.costs.total,
                elapsed: elapsed(),
            });
        }
    }
    best.status = SolveStatus::Feasible;
    best.objective = best.costs.total;
    best.best_bound = trace.lower_bound.unwrap_or(f64::NEG_INFINITY);
    Ok((best, trace))
}
