use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Map, Value};

use sfmcvrp_core::domain::{build_neighborhoods, CostParams, Instance, Profile, RecourseCostMode, ScenarioSet};
use sfmcvrp_core::instancegen::{
    generate_synthetic, ingest_operational, perturb_demand, DensityGrid, GenConfig, IngestConfig, RNG_ALGORITHM,
};
use sfmcvrp_core::kernelsearch::{kernel_search, KsConfig};
use sfmcvrp_core::measures::{in_sample_stability, measure_suite, ModelKind, SolveSetup};
use sfmcvrp_core::mip::{Backend, Limits, PathOptions, PlanSolution, StochasticInput, SOLVER_CMD_ENV};
use sfmcvrp_core::routegen::{build_route_pool_with, AlnsConfig, PoolConfig, RoutePool};
use sfmcvrp_core::scenred::fast_forward_select;
use sfmcvrp_core::Error;

#[derive(Parser)]
#[command(name = "sfmcvrp", version, about = "Stochastic fleet size and mix consistent vehicle routing")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Random seed [default: 0]
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Solver time limit in seconds [default: 600]
    #[arg(long, global = true)]
    time_limit: Option<f64>,
    /// Relative optimality gap [default: 1e-6]
    #[arg(long, global = true)]
    gap: Option<f64>,
    /// Output directory for artifacts [default: out]
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,
    /// error, warn, info, debug or trace [default: warn]
    #[arg(long, global = true)]
    log_level: Option<String>,
    /// Worker threads, 0 for one per core [default: 0]
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// JSON file of option values; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate an instance from a density grid or ingest delivery records
    GenInstance(GenInstanceArgs),
    /// Draw demand scenarios for an instance
    GenScenarios(GenScenariosArgs),
    /// Reduce a scenario set by fast forward selection
    ReduceScenarios(ReduceArgs),
    /// Build the route pool with ALNS
    GenRoutes(GenRoutesArgs),
    /// Solve the recourse problem
    Solve(SolveArgs),
    /// Compute WS, EV, EEV, EIV, EVPI, VSS and LUDS
    Measures(ModelArgs),
    /// In-sample stability over several scenario-set sizes
    Stability(StabilityArgs),
    /// Summarize the solution and measures in the output directory
    Report(ReportArgs),
}

#[derive(Args)]
struct GenInstanceArgs {
    /// Density grid JSON; a uniform rectangle otherwise
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Delivery records CSV to ingest instead of sampling
    #[arg(long, conflicts_with = "grid")]
    ingest: Option<PathBuf>,
    /// Hexagon width for aggregating ingested locations
    #[arg(long)]
    hex_cell: Option<f64>,
    /// Rectangle width in km [default: 6]
    #[arg(long)]
    width: Option<f64>,
    /// Rectangle height in km [default: 6]
    #[arg(long)]
    height: Option<f64>,
    /// Rectangle cell width in km [default: 1.5]
    #[arg(long)]
    cell: Option<f64>,
    /// Requests to sample [default: 20]
    #[arg(long)]
    requests: Option<usize>,
    /// Vehicle parameters [default: small, large for ingestion]
    #[arg(long)]
    profile: Option<ProfileArg>,
    /// Depot as `x,y`; the demand-weighted centroid otherwise
    #[arg(long, value_delimiter = ',', num_args = 2)]
    depot: Option<Vec<f64>>,
}

#[derive(Args)]
struct GenScenariosArgs {
    /// Instance JSON [default: <out>/instance.json]
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Number of scenarios [default: 100]
    #[arg(long)]
    scenarios: Option<usize>,
    /// Lower demand factor [default: 0]
    #[arg(long)]
    noise_low: Option<f64>,
    /// Upper demand factor [default: 4]
    #[arg(long)]
    noise_high: Option<f64>,
    /// Round demands to whole parcels [default: false]
    #[arg(long)]
    round_demand: Option<bool>,
}

#[derive(Args)]
struct ReduceArgs {
    /// Scenario CSV [default: <out>/scenarios.csv]
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Scenarios to keep [default: 10]
    #[arg(long)]
    keep: Option<usize>,
}

#[derive(Args)]
struct GenRoutesArgs {
    /// Instance JSON [default: <out>/instance.json]
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Scenario CSV driving generation [default: <out>/scenarios.csv]
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Routes to keep [default: 200]
    #[arg(long)]
    pool_size: Option<usize>,
    /// ALNS starts per demand vector and capacity [default: 10]
    #[arg(long)]
    starts: Option<usize>,
    /// ALNS iterations per start [default: 5000]
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Args)]
struct ModelArgs {
    /// Instance JSON [default: <out>/instance.json]
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Scenario CSV [default: <out>/reduced_scenarios.csv if present, else <out>/scenarios.csv]
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Route pool JSON for the path model [default: <out>/pool.json]
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Formulation [default: path]
    #[arg(long)]
    model: Option<ModelArg>,
    /// Add the valid inequalities to the node model [default: true]
    #[arg(long)]
    valid_ineq: Option<bool>,
    /// Aggregate the path model's route-recourse links [default: false]
    #[arg(long)]
    aggregate_links: Option<bool>,
    /// MILP backend; `external` runs the command in SFMCVRP_SOLVER_CMD [default: internal]
    #[arg(long)]
    solver: Option<SolverArg>,
    /// Recourse radius in km for both neighborhoods [default: 2]
    #[arg(long)]
    radius: Option<f64>,
    /// Recourse time weight beta [default: 2]
    #[arg(long)]
    beta: Option<f64>,
    /// Outsourcing penalty per parcel [default: 100]
    #[arg(long)]
    gamma: Option<f64>,
    /// Recourse cost per km, or per action in flat mode [default: 0.2]
    #[arg(long)]
    recourse_cost: Option<f64>,
    /// Recourse costing [default: distance]
    #[arg(long)]
    recourse_mode: Option<RecourseModeArg>,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// exact or ks (kernel search, path model only) [default: exact]
    #[arg(long)]
    method: Option<MethodArg>,
    /// Kernel search bucket size [default: 100]
    #[arg(long)]
    bucket_size: Option<usize>,
    /// Kernel search passes over the buckets [default: 2]
    #[arg(long)]
    cycles: Option<usize>,
    /// Kernel search stops at this gap to the root bound, 0 to disable [default: 0]
    #[arg(long)]
    opt_threshold: Option<f64>,
    /// Per-bucket time limit [default: time limit / (2 * buckets)]
    #[arg(long)]
    bucket_time: Option<f64>,
}

#[derive(Args)]
struct StabilityArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Scenario-set sizes [default: 5,10,20]
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    /// Runs per size [default: 5]
    #[arg(long)]
    runs: Option<usize>,
    /// Lower demand factor [default: 0]
    #[arg(long)]
    noise_low: Option<f64>,
    /// Upper demand factor [default: 4]
    #[arg(long)]
    noise_high: Option<f64>,
    /// Round demands to whole parcels [default: false]
    #[arg(long)]
    round_demand: Option<bool>,
}

#[derive(Args)]
struct ReportArgs {
    /// Instance JSON [default: <out>/instance.json]
    #[arg(long)]
    instance: Option<PathBuf>,
    /// Scenario CSV the solution was computed on [default: as for solve]
    #[arg(long)]
    scenarios: Option<PathBuf>,
    /// Solution JSON [default: <out>/solution.json]
    #[arg(long)]
    solution: Option<PathBuf>,
    /// Measures JSON, included when present [default: <out>/measures.json]
    #[arg(long)]
    measures: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum ProfileArg {
    Small,
    Large,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum ModelArg {
    Node,
    Path,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Exact,
    Ks,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum SolverArg {
    Internal,
    External,
}

#[derive(Clone, Copy, Debug, PartialEq, ValueEnum, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
enum RecourseModeArg {
    Flat,
    Distance,
}

/// Failure reported as JSON on stderr.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
    path: Option<PathBuf>,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind, path) = match &e {
            Error::Io { path, .. } => (2, "io", Some(path.clone())),
            Error::Parse { path, .. } => (2, "parse", Some(path.clone())),
            Error::Invalid(_) | Error::UnknownVehicleType(_) | Error::Json(_) | Error::Csv(_) => {
                (2, "invalid_input", None)
            }
            Error::Unroutable { .. } => (2, "unroutable", None),
            Error::Model(_) => (1, "model", None),
            Error::Solver(_) => (1, "solver", None),
            Error::ExternalSolver { .. } => (1, "external_solver", None),
            Error::Decode { .. } => (1, "decode", None),
        };
        Failure {
            code,
            kind,
            message: e.to_string(),
            path,
        }
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        kind: "invalid_input",
        message: message.into(),
        path: None,
    }
}

type Result<T, E = Failure> = std::result::Result<T, E>;

/// Resolves options as flag, then config file, then default, and records
/// every resolved value for the manifest.
struct Options {
    file: Map<String, Value>,
    resolved: BTreeMap<String, Value>,
}

impl Options {
    fn load(path: Option<&Path>) -> Result<Self> {
        let file = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Failure::from(Error::Io {
                    path: p.to_path_buf(),
                    source: e,
                }))?;
                match serde_json::from_str::<Value>(&text).map_err(Error::from)? {
                    Value::Object(map) => map,
                    _ => return Err(invalid(format!("{}: config must be a JSON object", p.display()))),
                }
            }
            None => Map::new(),
        };
        Ok(Options {
            file,
            resolved: BTreeMap::new(),
        })
    }

    fn get<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let value = match flag {
            Some(v) => v,
            None => match self.file.get(key) {
                Some(v) => serde_json::from_value(v.clone())
                    .map_err(|e| invalid(format!("config value `{key}`: {e}")))?,
                None => default,
            },
        };
        self.resolved
            .insert(key.to_string(), serde_json::to_value(&value).map_err(Error::from)?);
        Ok(value)
    }

    fn opt<T: Serialize + DeserializeOwned>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        let value: Option<T> = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(v) => Some(
                    serde_json::from_value(v.clone()).map_err(|e| invalid(format!("config value `{key}`: {e}")))?,
                ),
                None => None,
            },
        };
        self.resolved
            .insert(key.to_string(), serde_json::to_value(&value).map_err(Error::from)?);
        Ok(value)
    }

    fn path(&mut self, key: &str, flag: Option<PathBuf>, default: PathBuf) -> Result<PathBuf> {
        self.get(key, flag, default)
    }
}

struct Ctx {
    out: PathBuf,
    seed: u64,
    limits: Limits,
    opts: Options,
    written: Vec<String>,
}

impl Ctx {
    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, text).map_err(|e| Failure::from(Error::Io { path, source: e }))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn default_scenarios(&self) -> PathBuf {
        let reduced = self.out.join("reduced_scenarios.csv");
        if reduced.exists() {
            reduced
        } else {
            self.out.join("scenarios.csv")
        }
    }

    /// Records the written artifacts with the resolved configuration.
    fn finish(&mut self, command: &str) -> Result<()> {
        let path = self.out.join("manifest.json");
        let mut manifest = match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str::<Value>(&text).unwrap_or_else(|_| json!({})),
            Err(_) => json!({}),
        };
        let entry = json!({
            "command": command,
            "config": self.opts.resolved,
        });
        let obj = manifest.as_object_mut().ok_or_else(|| invalid("manifest is not an object"))?;
        obj.insert("tool".into(), json!(env!("CARGO_PKG_NAME")));
        obj.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
        obj.insert("rng".into(), json!(RNG_ALGORITHM));
        let artifacts = obj
            .entry("artifacts")
            .or_insert_with(|| json!({}))
            .as_object_mut()
            .ok_or_else(|| invalid("manifest artifacts are not an object"))?;
        for name in &self.written {
            artifacts.insert(name.clone(), entry.clone());
        }
        let text = serde_json::to_string_pretty(&manifest).map_err(Error::from)?;
        std::fs::write(&path, text + "\n").map_err(|e| Failure::from(Error::Io { path, source: e }))?;
        Ok(())
    }
}

fn json_text<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value).map_err(Error::from)? + "\n")
}

fn gen_instance(ctx: &mut Ctx, a: GenInstanceArgs) -> Result<()> {
    let ingest = ctx.opts.opt("ingest", a.ingest)?;
    let depot = ctx.opts.opt("depot", a.depot)?;
    let depot = match depot.as_deref() {
        None => None,
        Some([x, y]) => Some((*x, *y)),
        Some(_) => return Err(invalid("depot needs two coordinates")),
    };
    if let Some(csv) = ingest {
        let profile = ctx.opts.get("profile", a.profile, ProfileArg::Large)?;
        let cfg = IngestConfig {
            hex_cell_size: ctx.opts.opt("hex_cell", a.hex_cell)?,
            depot,
            profile: profile_of(profile),
            round_demand: ctx.opts.get("round_demand", None, false)?,
        };
        let (instance, scenarios, coverage) = ingest_operational(&csv, &cfg)?;
        ctx.write("instance.json", &(instance.to_json()? + "\n"))?;
        ctx.write("scenarios.csv", &scenarios.to_csv())?;
        ctx.write("coverage.json", &json_text(&coverage)?)?;
        return Ok(());
    }
    let grid = match ctx.opts.opt("grid", a.grid)? {
        Some(path) => DensityGrid::load(&path)?,
        None => DensityGrid::uniform_rect(
            ctx.opts.get("width", a.width, 6.0)?,
            ctx.opts.get("height", a.height, 6.0)?,
            ctx.opts.get("cell", a.cell, 1.5)?,
        ),
    };
    let profile = ctx.opts.get("profile", a.profile, ProfileArg::Small)?;
    let cfg = GenConfig {
        n_requests: ctx.opts.get("requests", a.requests, 20)?,
        seed: ctx.seed,
        depot,
        profile: profile_of(profile),
        ..GenConfig::default()
    };
    let instance = generate_synthetic(&grid, &cfg)?;
    ctx.write("instance.json", &(instance.to_json()? + "\n"))
}

fn profile_of(p: ProfileArg) -> Profile {
    match p {
        ProfileArg::Small => Profile::Small,
        ProfileArg::Large => Profile::Large,
    }
}

fn gen_config(
    ctx: &mut Ctx,
    n_scenarios: usize,
    noise_low: Option<f64>,
    noise_high: Option<f64>,
    round: Option<bool>,
) -> Result<GenConfig> {
    Ok(GenConfig {
        n_scenarios,
        noise_low: ctx.opts.get("noise_low", noise_low, 0.0)?,
        noise_high: ctx.opts.get("noise_high", noise_high, 4.0)?,
        round_demand: ctx.opts.get("round_demand", round, false)?,
        seed: ctx.seed,
        ..GenConfig::default()
    })
}

fn gen_scenarios(ctx: &mut Ctx, a: GenScenariosArgs) -> Result<()> {
    let path = ctx.opts.path("instance", a.instance, ctx.out.join("instance.json"))?;
    let instance = Instance::load(&path)?;
    let n = ctx.opts.get("scenarios", a.scenarios, 100)?;
    let cfg = gen_config(ctx, n, a.noise_low, a.noise_high, a.round_demand)?;
    let scenarios = perturb_demand(&instance, &cfg)?;
    ctx.write("scenarios.csv", &scenarios.to_csv())
}

fn reduce_scenarios(ctx: &mut Ctx, a: ReduceArgs) -> Result<()> {
    let path = ctx.opts.path("scenarios", a.scenarios, ctx.out.join("scenarios.csv"))?;
    let scenarios = ScenarioSet::load(&path)?;
    let keep = ctx.opts.get("keep", a.keep, 10)?;
    let tree = fast_forward_select(&scenarios, keep)?;
    let reduced = tree.apply(&scenarios)?;
    ctx.write("reduced_scenarios.csv", &reduced.to_csv())?;
    ctx.write("reduction.json", &json_text(&tree)?)
}

fn gen_routes(ctx: &mut Ctx, a: GenRoutesArgs) -> Result<()> {
    let ipath = ctx.opts.path("instance", a.instance, ctx.out.join("instance.json"))?;
    let spath = ctx.opts.path("scenarios", a.scenarios, ctx.out.join("scenarios.csv"))?;
    let instance = Instance::load(&ipath)?;
    let scenarios = ScenarioSet::load(&spath)?;
    let cfg = PoolConfig {
        pool_size: ctx.opts.get("pool_size", a.pool_size, 200)?,
        n_starts: ctx.opts.get("starts", a.starts, 10)?,
        seed: ctx.seed,
        alns: AlnsConfig {
            iterations: ctx.opts.get("iterations", a.iterations, 5000)?,
            ..AlnsConfig::default()
        },
    };
    let pool = build_route_pool_with(&instance, &scenarios, &cfg)?;
    ctx.write("pool.json", &(pool.to_json()? + "\n"))
}

/// Loaded inputs of the model-based commands.
struct ModelData {
    instance: Instance,
    scenarios: ScenarioSet,
    pool: Option<RoutePool>,
    neighborhoods: sfmcvrp_core::domain::Neighborhoods,
    costs: CostParams,
    kind: ModelKind,
    valid_ineq: bool,
    path_options: PathOptions,
    backend: Backend,
}

impl ModelData {
    fn load(ctx: &mut Ctx, a: ModelArgs, need_scenarios: bool) -> Result<Self> {
        let ipath = ctx.opts.path("instance", a.instance, ctx.out.join("instance.json"))?;
        let instance = Instance::load(&ipath)?;
        let scenarios = if need_scenarios {
            let default = ctx.default_scenarios();
            let spath = ctx.opts.path("scenarios", a.scenarios, default)?;
            let s = ScenarioSet::load(&spath)?;
            s.check_instance(&instance)?;
            s
        } else {
            ScenarioSet::deterministic(instance.base_demands())?
        };
        let kind = match ctx.opts.get("model", a.model, ModelArg::Path)? {
            ModelArg::Node => ModelKind::Node,
            ModelArg::Path => ModelKind::Path,
        };
        let pool = if kind == ModelKind::Path {
            let ppath = ctx.opts.path("pool", a.pool, ctx.out.join("pool.json"))?;
            Some(RoutePool::load(&ppath)?)
        } else {
            None
        };
        let radius = ctx.opts.get("radius", a.radius, 2.0)?;
        let defaults = CostParams::default();
        let costs = CostParams {
            beta: ctx.opts.get("beta", a.beta, defaults.beta)?,
            gamma: ctx.opts.get("gamma", a.gamma, defaults.gamma)?,
            recourse_unit_cost: ctx.opts.get("recourse_cost", a.recourse_cost, defaults.recourse_unit_cost)?,
            recourse_cost_mode: match ctx.opts.get("recourse_mode", a.recourse_mode, RecourseModeArg::Distance)? {
                RecourseModeArg::Flat => RecourseCostMode::Flat,
                RecourseModeArg::Distance => RecourseCostMode::Distance,
            },
        };
        costs.validate()?;
        if let Some(w) = costs.dominance_warning(radius) {
            log::warn!("{w}");
        }
        let backend = match ctx.opts.get("solver", a.solver, SolverArg::Internal)? {
            SolverArg::Internal => Backend::Internal,
            SolverArg::External => Backend::MpsExternal {
                command: std::env::var(SOLVER_CMD_ENV)
                    .map_err(|_| invalid(format!("--solver external needs {SOLVER_CMD_ENV} to be set")))?,
            },
        };
        Ok(ModelData {
            neighborhoods: build_neighborhoods(&instance, radius, radius),
            instance,
            scenarios,
            pool,
            costs,
            kind,
            valid_ineq: ctx.opts.get("valid_ineq", a.valid_ineq, true)?,
            path_options: PathOptions {
                aggregate_links: ctx.opts.get("aggregate_links", a.aggregate_links, false)?,
            },
            backend,
        })
    }

    fn setup(&self, limits: Limits) -> SolveSetup<'_> {
        SolveSetup {
            instance: &self.instance,
            neighborhoods: &self.neighborhoods,
            costs: &self.costs,
            kind: self.kind,
            pool: self.pool.as_ref(),
            with_valid_ineq: self.valid_ineq,
            path_options: self.path_options,
            backend: self.backend.clone(),
            limits,
        }
    }

    fn input(&self) -> StochasticInput<'_> {
        StochasticInput {
            instance: &self.instance,
            scenarios: &self.scenarios,
            neighborhoods: &self.neighborhoods,
            costs: &self.costs,
        }
    }
}

fn solve_cmd(ctx: &mut Ctx, a: SolveArgs) -> Result<()> {
    let data = ModelData::load(ctx, a.model, true)?;
    let method = ctx.opts.get("method", a.method, MethodArg::Exact)?;
    let plan = match method {
        MethodArg::Exact => data.setup(ctx.limits).solve(&data.scenarios)?.0,
        MethodArg::Ks => {
            let pool = data
                .pool
                .as_ref()
                .ok_or_else(|| invalid("kernel search runs on the path model"))?;
            let cfg = KsConfig {
                bucket_size: ctx.opts.get("bucket_size", a.bucket_size, 100)?,
                t_max: ctx.limits.time.unwrap_or(600.0),
                opt_threshold: ctx.opts.get("opt_threshold", a.opt_threshold, 0.0)?,
                subproblem_time: ctx.opts.opt("bucket_time", a.bucket_time)?,
                seed: ctx.seed,
                cycles: ctx.opts.get("cycles", a.cycles, 2)?,
                subproblem_gap: ctx.limits.gap,
                path_options: data.path_options,
                backend: data.backend.clone(),
            };
            let (plan, trace) = kernel_search(&data.input(), pool, &cfg)?;
            ctx.write("ks_trace.csv", &trace.to_csv())?;
            plan
        }
    };
    ctx.write("solution.json", &(plan.to_json()? + "\n"))?;
    ctx.write("routes.csv", &route_table(&plan, &data.input()))
}

/// Per scenario and route: type, length, delivered load, time and recourse counts.
fn route_table(plan: &PlanSolution, input: &StochasticInput) -> String {
    let mut out = String::from("scenario,route,vehicle_type,sequence,length,load,time,recourse_actions\n");
    let owner = plan.route_of(input.instance.n_nodes());
    let times = plan.route_times(input);
    for s in 0..input.scenarios.n_scenarios() {
        let mut load = vec![0.0; plan.routes.len()];
        let mut actions = vec![0usize; plan.routes.len()];
        for a in &plan.recourse[s] {
            if let Some(k) = owner[a.from] {
                load[k] += a.fraction * input.scenarios.demand(s, a.to);
                if a.from != a.to {
                    actions[k] += 1;
                }
            }
        }
        for (k, r) in plan.routes.iter().enumerate() {
            let seq: Vec<String> = r.sequence.iter().map(usize::to_string).collect();
            out.push_str(&format!(
                "{s},{k},{},{},{:.6},{:.6},{:.6},{}\n",
                r.vehicle_id,
                seq.join("-"),
                r.length,
                load[k],
                times[s][k],
                actions[k]
            ));
        }
    }
    out
}

fn measures_cmd(ctx: &mut Ctx, a: ModelArgs) -> Result<()> {
    let data = ModelData::load(ctx, a, true)?;
    let setup = data.setup(ctx.limits);
    let (_, rp) = setup.solve(&data.scenarios)?;
    let report = measure_suite(&setup, &data.scenarios, &rp)?;
    ctx.write("measures.json", &(report.to_json()? + "\n"))
}

fn stability_cmd(ctx: &mut Ctx, a: StabilityArgs) -> Result<()> {
    let data = ModelData::load(ctx, a.model, false)?;
    let sizes = ctx.opts.get("sizes", a.sizes, vec![5, 10, 20])?;
    let runs = ctx.opts.get("runs", a.runs, 5)?;
    let gen = gen_config(ctx, 1, a.noise_low, a.noise_high, a.round_demand)?;
    let table = in_sample_stability(&data.setup(ctx.limits), &gen, &sizes, runs, ctx.seed)?;
    ctx.write("stability_runs.csv", &table.to_csv())?;
    ctx.write("stability_summary.csv", &table.summary_csv())
}

fn read_json(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::from(Error::Io {
        path: path.to_path_buf(),
        source: e,
    }))?;
    Ok(serde_json::from_str(&text).map_err(Error::from)?)
}

fn report_cmd(ctx: &mut Ctx, a: ReportArgs) -> Result<()> {
    let ipath = ctx.opts.path("instance", a.instance, ctx.out.join("instance.json"))?;
    let default = ctx.default_scenarios();
    let spath = ctx.opts.path("scenarios", a.scenarios, default)?;
    let solpath = ctx.opts.path("solution", a.solution, ctx.out.join("solution.json"))?;
    let mpath = ctx.opts.path("measures", a.measures, ctx.out.join("measures.json"))?;
    let instance = Instance::load(&ipath)?;
    let scenarios = ScenarioSet::load(&spath)?;
    let solution = read_json(&solpath)?;
    let measures = if mpath.exists() {
        Some(read_json(&mpath)?)
    } else {
        None
    };

    let routes = solution["routes"].as_array().cloned().unwrap_or_default();
    let mut fleet = Map::new();
    let mut distance = Map::new();
    for vt in instance.vehicle_types() {
        let own: Vec<&Value> = routes.iter().filter(|r| r["vehicle_id"] == json!(vt.id)).collect();
        fleet.insert(vt.id.clone(), json!(own.len()));
        distance.insert(
            vt.id.clone(),
            json!(own.iter().filter_map(|r| r["length"].as_f64()).sum::<f64>()),
        );
    }
    let mut per_scenario = Vec::new();
    let mut csv = String::from("scenario,probability,demand,recourse_actions,recourse_units,unserved_units\n");
    let empty = Vec::new();
    for s in 0..scenarios.n_scenarios() {
        let actions = solution["recourse"][s].as_array().unwrap_or(&empty);
        let unserved = solution["unserved"][s].as_array().unwrap_or(&empty);
        let demand: f64 = instance.customers().map(|j| scenarios.demand(s, j)).sum();
        let mut moved = 0.0;
        let mut count = 0;
        for act in actions {
            let (from, to) = (act["from"].as_u64().unwrap_or(0), act["to"].as_u64().unwrap_or(0));
            if from != to {
                count += 1;
                moved += act["fraction"].as_f64().unwrap_or(0.0) * scenarios.demand(s, to as usize);
            }
        }
        let lost: f64 = instance
            .customers()
            .map(|j| unserved.get(j).and_then(Value::as_f64).unwrap_or(0.0) * scenarios.demand(s, j))
            .sum();
        csv.push_str(&format!(
            "{s},{},{demand},{count},{moved:.6},{lost:.6}\n",
            scenarios.probability(s)
        ));
        per_scenario.push(json!({
            "scenario": s,
            "demand": demand,
            "recourse_actions": count,
            "recourse_units": moved,
            "unserved_units": lost,
        }));
    }
    let report = json!({
        "nodes": instance.n_customers(),
        "scenarios": scenarios.n_scenarios(),
        "status": solution["status"],
        "objective": solution["objective"],
        "costs": solution["costs"],
        "fleet": fleet,
        "distance_by_type": distance,
        "per_scenario": per_scenario,
        "measures": measures,
    });
    ctx.write("report.json", &json_text(&report)?)?;
    ctx.write("scenario_summary.csv", &csv)
}

fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let mut opts = Options::load(g.config.as_deref())?;
    let level = opts.get("log_level", g.log_level, "warn".to_string())?;
    env_logger::Builder::new()
        .parse_filters(&level)
        .try_init()
        .ok();
    let threads = opts.get("threads", g.threads, 0)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .ok();
    let out = opts.get("out", g.out, PathBuf::from("out"))?;
    std::fs::create_dir_all(&out).map_err(|e| Failure::from(Error::Io {
        path: out.clone(),
        source: e,
    }))?;
    let seed = opts.get("seed", g.seed, 0)?;
    let limits = Limits {
        time: Some(opts.get("time_limit", g.time_limit, 600.0)?),
        gap: opts.get("gap", g.gap, 1e-6)?,
        node_limit: None,
    };
    let mut ctx = Ctx {
        out,
        seed,
        limits,
        opts,
        written: Vec::new(),
    };
    let name = match cli.command {
        Command::GenInstance(a) => gen_instance(&mut ctx, a).map(|_| "gen-instance"),
        Command::GenScenarios(a) => gen_scenarios(&mut ctx, a).map(|_| "gen-scenarios"),
        Command::ReduceScenarios(a) => reduce_scenarios(&mut ctx, a).map(|_| "reduce-scenarios"),
        Command::GenRoutes(a) => gen_routes(&mut ctx, a).map(|_| "gen-routes"),
        Command::Solve(a) => solve_cmd(&mut ctx, a).map(|_| "solve"),
        Command::Measures(a) => measures_cmd(&mut ctx, a).map(|_| "measures"),
        Command::Stability(a) => stability_cmd(&mut ctx, a).map(|_| "stability"),
        Command::Report(a) => report_cmd(&mut ctx, a).map(|_| "report"),
    }?;
    ctx.finish(name)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let body = json!({
                "error": {
                    "kind": f.kind,
                    "message": f.message,
                    "path": f.path.map(|p| p.display().to_string()),
                }
            });
            eprintln!("{body}");
            ExitCode::from(f.code)
        }
    }
}
