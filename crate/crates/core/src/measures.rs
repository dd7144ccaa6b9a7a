//! Stochastic-programming measures (WS, EV, EEV, EIV, EVPI, VSS, LUDS) and
//! the in-sample stability harness.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{CostParams, Instance, Neighborhoods, ScenarioSet};
use crate::error::{Error, Result};
use crate::instancegen::{perturb_demand, GenConfig};
use crate::mip::{
    apply_measure_variant, build_node_model, build_path_model_with, decode_solution, solve, Backend, Limits,
    MeasureVariant, MipModel, MipSolution, PathOptions, PlanSolution, SolveStatus, StochasticInput,
};
use crate::routegen::RoutePool;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Node,
    Path,
}

/// Everything needed to build and solve one model kind.
#[derive(Clone, Debug)]
pub struct SolveSetup<'a> {
    pub instance: &'a Instance,
    pub neighborhoods: &'a Neighborhoods,
    pub costs: &'a CostParams,
    pub kind: ModelKind,
    /// Required for the path model.
    pub pool: Option<&'a RoutePool>,
    pub with_valid_ineq: bool,
    pub path_options: PathOptions,
    pub backend: Backend,
    pub limits: Limits,
}

impl<'a> SolveSetup<'a> {
    pub fn input<'b>(&'b self, scenarios: &'b ScenarioSet) -> StochasticInput<'b> {
        StochasticInput {
            instance: self.instance,
            scenarios,
            neighborhoods: self.neighborhoods,
            costs: self.costs,
        }
    }

    pub fn build(&self, scenarios: &ScenarioSet) -> Result<MipModel> {
        let input = self.input(scenarios);
        match self.kind {
            ModelKind::Node => build_node_model(&input, self.with_valid_ineq),
            ModelKind::Path => {
                let pool = self
                    .pool
                    .ok_or_else(|| Error::invalid("the path model needs a route pool"))?;
                build_path_model_with(&input, pool, &self.path_options)
            }
        }
    }

    /// Solves `model` (built for `scenarios`) and decodes the result.
    pub fn solve_model(&self, model: &MipModel, scenarios: &ScenarioSet) -> Result<(PlanSolution, MipSolution)> {
        let raw = solve(model, &self.backend, &self.limits)?;
        if !raw.has_solution() {
            return Err(Error::Solver(format!("no solution found (status {:?})", raw.status)));
        }
        let plan = decode_solution(model, &raw, &self.input(scenarios))?;
        Ok((plan, raw))
    }

    pub fn solve(&self, scenarios: &ScenarioSet) -> Result<(PlanSolution, MipSolution)> {
        let model = self.build(scenarios)?;
        self.solve_model(&model, scenarios)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaitAndSee {
    pub value: f64,
    pub per_scenario: Vec<f64>,
    pub all_optimal: bool,
}

/// `sum_s pi_s * opt_s` over single-scenario models.
pub fn wait_and_see(setup: &SolveSetup, scenarios: &ScenarioSet) -> Result<WaitAndSee> {
    let results: Vec<Result<(f64, SolveStatus)>> = (0..scenarios.n_scenarios())
        .into_par_iter()
        .map(|s| {
            let single = scenarios.single(s);
            let (_, raw) = setup.solve(&single)?;
            Ok((raw.objective, raw.status))
        })
        .collect();
    let mut per_scenario = Vec::new();
    let mut all_optimal = true;
    for r in results {
        let (v, status) = r?;
        per_scenario.push(v);
        all_optimal &= status == SolveStatus::Optimal;
    }
    let value = per_scenario
        .iter()
        .zip(scenarios.probabilities())
        .map(|(v, p)| v * p)
        .sum();
    Ok(WaitAndSee {
        value,
        per_scenario,
        all_optimal,
    })
}

/// Solves the deterministic model with the expected demand `sum_s pi_s d_is`.
/// Returns the plan (decoded against that model) and its objective.
pub fn expected_value_solution(setup: &SolveSetup, scenarios: &ScenarioSet) -> Result<(PlanSolution, MipSolution)> {
    let ev = ScenarioSet::deterministic(scenarios.expected_demand())?;
    setup.solve(&ev)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasuresReport {
    pub rp: f64,
    pub ev: f64,
    pub ws: f64,
    pub eev_fr: f64,
    pub eev_f: f64,
    pub eiv_fr: f64,
    pub eiv_f: f64,
    pub evpi: f64,
    pub vss_fr: f64,
    pub vss_f: f64,
    pub luds_fr: f64,
    pub luds_f: f64,
    pub pct_evpi: f64,
    pub pct_vss_fr: f64,
    pub pct_vss_f: f64,
    pub pct_luds_fr: f64,
    pub pct_luds_f: f64,
    /// Solver status of every solve behind the report.
    pub statuses: BTreeMap<String, SolveStatus>,
    /// Measures whose solves stopped early; their values are bounds only.
    pub bounds_only: Vec<String>,
}

fn pct(value: f64, rp: f64) -> f64 {
    if rp.abs() < 1e-12 {
        0.0
    } else {
        value / rp
    }
}

/// Relative size below which a measure is reported as exactly zero.
pub const MEASURE_ZERO_TOL: f64 = 1e-9;

impl MeasuresReport {
    /// Assembles the derived measures from the solved values.
    #[allow(clippy::too_many_arguments)]
    pub fn from_values(rp: f64, ev: f64, ws: f64, eev_fr: f64, eev_f: f64, eiv_fr: f64, eiv_f: f64) -> Self {
        // Differences below the solvers' precision are reported as zero.
        let tol = MEASURE_ZERO_TOL * rp.abs().max(1.0);
        let diff = |a: f64, b: f64| if (a - b).abs() <= tol { 0.0 } else { a - b };
        let evpi = diff(rp, ws);
        let vss_fr = diff(eev_fr, rp);
        let vss_f = diff(eev_f, rp);
        let luds_fr = diff(eiv_fr, rp);
        let luds_f = diff(eiv_f, rp);
        MeasuresReport {
            rp,
            ev,
            ws,
            eev_fr,
            eev_f,
            eiv_fr,
            eiv_f,
            evpi,
            vss_fr,
            vss_f,
            luds_fr,
            luds_f,
            pct_evpi: pct(evpi, rp),
            pct_vss_fr: pct(vss_fr, rp),
            pct_vss_f: pct(vss_f, rp),
            pct_luds_fr: pct(luds_fr, rp),
            pct_luds_f: pct(luds_f, rp),
            statuses: BTreeMap::new(),
            bounds_only: Vec::new(),
        }
    }

    /// Ordering invariants that fail by more than `tol`.
    pub fn violations(&self, tol: f64) -> Vec<String> {
        let checks = [
            ("ws <= rp", self.ws <= self.rp + tol),
            ("rp <= eev_fr", self.rp <= self.eev_fr + tol),
            ("rp <= eev_f", self.rp <= self.eev_f + tol),
            ("rp <= eiv_f", self.rp <= self.eiv_f + tol),
            ("eiv_f <= eiv_fr", self.eiv_f <= self.eiv_fr + tol),
            ("eiv_fr <= eev_fr", self.eiv_fr <= self.eev_fr + tol),
            ("eiv_f <= eev_f", self.eiv_f <= self.eev_f + tol),
            ("evpi >= 0", self.evpi >= -tol),
            ("vss_fr >= 0", self.vss_fr >= -tol),
            ("vss_f >= 0", self.vss_f >= -tol),
            ("luds_fr >= 0", self.luds_fr >= -tol),
            ("luds_f >= 0", self.luds_f >= -tol),
            ("luds_fr <= vss_fr", self.luds_fr <= self.vss_fr + tol),
            ("luds_f <= vss_f", self.luds_f <= self.vss_f + tol),
        ];
        checks
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(name, _)| name.to_string())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Computes every measure around the recourse-problem value `rp`.
pub fn measure_suite(setup: &SolveSetup, scenarios: &ScenarioSet, rp: &MipSolution) -> Result<MeasuresReport> {
    if !rp.has_solution() {
        return Err(Error::invalid("the recourse problem has no solution"));
    }
    let ws = wait_and_see(setup, scenarios)?;
    let (ev_plan, ev_raw) = expected_value_solution(setup, scenarios)?;
    let model = setup.build(scenarios)?;
    let variants = [
        ("eev_fr", MeasureVariant::FixFirstStage),
        ("eev_f", MeasureVariant::FixFleet),
        ("eiv_fr", MeasureVariant::LbFirstStage),
        ("eiv_f", MeasureVariant::LbFleet),
    ];
    let solved: Vec<Result<MipSolution>> = variants
        .par_iter()
        .map(|&(_, v)| {
            let restricted = apply_measure_variant(&model, v, &ev_plan)?;
            let raw = solve(&restricted, &setup.backend, &setup.limits)?;
            if !raw.has_solution() {
                return Err(Error::Solver(format!("variant {v:?} found no solution ({:?})", raw.status)));
            }
            Ok(raw)
        })
        .collect();
    let mut values = Vec::new();
    let mut statuses = BTreeMap::new();
    statuses.insert("rp".to_string(), rp.status);
    statuses.insert("ev".to_string(), ev_raw.status);
    statuses.insert(
        "ws".to_string(),
        if ws.all_optimal {
            SolveStatus::Optimal
        } else {
            SolveStatus::Feasible
        },
    );
    for ((name, _), raw) in variants.iter().zip(solved) {
        let raw = raw?;
        statuses.insert(name.to_string(), raw.status);
        values.push(raw.objective);
    }
    let mut report = MeasuresReport::from_values(
        rp.objective,
        ev_raw.objective,
        ws.value,
        values[0],
        values[1],
        values[2],
        values[3],
    );
    let inexact = |key: &str| statuses.get(key).map_or(false, |s| *s != SolveStatus::Optimal);
    let depends: [(&str, &[&str]); 7] = [
        ("evpi", &["rp", "ws"]),
        ("vss_fr", &["rp", "eev_fr"]),
        ("vss_f", &["rp", "eev_f"]),
        ("luds_fr", &["rp", "eiv_fr"]),
        ("luds_f", &["rp", "eiv_f"]),
        ("ws", &["ws"]),
        ("ev", &["ev"]),
    ];
    for (measure, inputs) in depends {
        if inputs.iter().any(|k| inexact(k)) {
            report.bounds_only.push(measure.to_string());
        }
    }
    report.statuses = statuses;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRun {
    pub size: usize,
    pub run: usize,
    pub seed: u64,
    pub objective: f64,
    pub status: SolveStatus,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub size: usize,
    pub mean: f64,
    /// Sample standard deviation (0 for a single run).
    pub std_dev: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityTable {
    pub runs: Vec<StabilityRun>,
    pub summary: Vec<StabilitySummary>,
}

impl StabilityTable {
    /// Box-plot data, one row per run.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,run,seed,objective,status\n");
        for r in &self.runs {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.size,
                r.run,
                r.seed,
                r.objective,
                serde_json::to_value(r.status).unwrap().as_str().unwrap()
            ));
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("size,mean,std_dev,min,max\n");
        for s in &self.summary {
            out.push_str(&format!("{},{},{},{},{}\n", s.size, s.mean, s.std_dev, s.min, s.max));
        }
        out
    }

    /// Counts size pairs `(a, b)` with `a < b` whose spread does not grow,
    /// over consecutive pairs plus the first-to-last pair. Returns
    /// `(non_increasing, pairs)`.
    pub fn spread_trend(&self) -> (usize, usize) {
        let s = &self.summary;
        let mut pairs: Vec<(usize, usize)> = (1..s.len()).map(|k| (k - 1, k)).collect();
        if s.len() > 2 {
            pairs.push((0, s.len() - 1));
        }
        let ok = pairs
            .iter()
            .filter(|&&(a, b)| s[b].std_dev <= s[a].std_dev + 1e-9)
            .count();
        (ok, pairs.len())
    }
}

/// Seed of run `run` at scenario-set size `size`.
pub fn stability_seed(seed: u64, size: usize, run: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((size as u64) << 32)
        .wrapping_add(run as u64)
}

/// For each size, draws `runs` independent scenario sets with `gen` noise
/// and solves the recourse problem on each.
pub fn in_sample_stability(
    setup: &SolveSetup,
    gen: &GenConfig,
    sizes: &[usize],
    runs: usize,
    seed: u64,
) -> Result<StabilityTable> {
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("scenario sizes must be strictly ascending"));
    }
    if runs == 0 || sizes.first() == Some(&0) {
        return Err(Error::invalid("sizes and runs must be positive"));
    }
    let jobs: Vec<(usize, usize)> = sizes
        .iter()
        .flat_map(|&size| (0..runs).map(move |run| (size, run)))
        .collect();
    let solved: Vec<Result<StabilityRun>> = jobs
        .par_iter()
        .map(|&(size, run)| {
            let run_seed = stability_seed(seed, size, run);
            let cfg = GenConfig {
                n_scenarios: size,
                seed: run_seed,
                ..*gen
            };
            let scenarios = perturb_demand(setup.instance, &cfg)?;
            let (_, raw) = setup.solve(&scenarios)?;
            Ok(StabilityRun {
                size,
                run,
                seed: run_seed,
                objective: raw.objective,
                status: raw.status,
            })
        })
        .collect();
    let runs_out: Vec<StabilityRun> = solved.into_iter().collect::<Result<_>>()?;
    let summary = sizes
        .iter()
        .map(|&size| {
            let v: Vec<f64> = runs_out.iter().filter(|r| r.size == size).map(|r| r.objective).collect();
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = if v.len() > 1 {
                v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            StabilitySummary {
                size,
                mean,
                std_dev: var.sqrt(),
                min: v.iter().copied().fold(f64::INFINITY, f64::min),
                max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect();
    Ok(StabilityTable {
        runs: runs_out,
        summary,
    })
}
