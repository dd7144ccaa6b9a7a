//! Instance generation: density sampling over a hexagonal grid, stochastic
//! demand perturbation and ingestion of operational delivery records.

use std::collections::BTreeMap;
use std::path::Path;

use rand::distributions::{Distribution, Uniform, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Instance, Node, Profile, ScenarioSet};
use crate::error::{Error, Result};

/// Name of the pseudo-random generator, recorded in run metadata.
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.3), stream = purpose index";

/// Deterministic generator for `(seed, stream)`.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub x: f64,
    pub y: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    /// Edge-to-edge width of a hexagonal cell in km.
    pub cell_size: f64,
    pub cells: Vec<GridCell>,
}

impl DensityGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.cell_size > 0.0) {
            return Err(Error::invalid("cell_size must be positive"));
        }
        if self.cells.iter().any(|c| !(c.weight >= 0.0) || !c.x.is_finite() || !c.y.is_finite()) {
            return Err(Error::invalid("cell weights must be non-negative and centers finite"));
        }
        if !self.cells.iter().any(|c| c.weight > 0.0) {
            return Err(Error::invalid("all cell weights are zero"));
        }
        Ok(())
    }

    /// Uniform-weight hexagonal tiling covering the rectangle `[0,w] x [0,h]`.
    pub fn uniform_rect(width: f64, height: f64, cell_size: f64) -> Self {
        let hex = Hex::new(cell_size);
        let mut cells = BTreeMap::new();
        let step = cell_size / 4.0;
        let nx = (width / step).ceil() as usize;
        let ny = (height / step).ceil() as usize;
        for a in 0..=nx {
            for b in 0..=ny {
                let key = hex.axial(a as f64 * step, b as f64 * step);
                cells.entry(key).or_insert(());
            }
        }
        let cells = cells
            .keys()
            .map(|&(q, r)| {
                let (x, y) = hex.center(q, r);
                GridCell { x, y, weight: 1.0 }
            })
            .collect();
        DensityGrid { cell_size, cells }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let grid: DensityGrid = serde_json::from_str(&text)?;
        grid.validate()?;
        Ok(grid)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub n_requests: usize,
    pub n_scenarios: usize,
    pub noise_low: f64,
    pub noise_high: f64,
    pub seed: u64,
    /// Round perturbed demands to the nearest integer.
    #[serde(default)]
    pub round_demand: bool,
    /// Explicit depot coordinates; the demand-weighted centroid otherwise.
    #[serde(default)]
    pub depot: Option<(f64, f64)>,
    #[serde(default = "default_profile")]
    pub profile: Profile,
}

fn default_profile() -> Profile {
    Profile::Small
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_requests: 20,
            n_scenarios: 100,
            noise_low: 0.0,
            noise_high: 4.0,
            seed: 0,
            round_demand: false,
            depot: None,
            profile: Profile::Small,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_requests == 0 || self.n_scenarios == 0 {
            return Err(Error::invalid("n_requests and n_scenarios must be positive"));
        }
        // Equal bounds are accepted as a degenerate (constant) factor.
        if !(self.noise_low >= 0.0) || !(self.noise_high >= self.noise_low) {
            return Err(Error::invalid("noise bounds must satisfy 0 <= low <= high"));
        }
        Ok(())
    }
}

/// Pointy-top hexagonal tiling in axial coordinates.
#[derive(Clone, Copy, Debug)]
struct Hex {
    /// Circumradius.
    size: f64,
}

impl Hex {
    fn new(cell_size: f64) -> Self {
        Hex {
            size: cell_size / 3f64.sqrt(),
        }
    }

    fn axial(&self, x: f64, y: f64) -> (i64, i64) {
        let q = (3f64.sqrt() / 3.0 * x - y / 3.0) / self.size;
        let r = (2.0 / 3.0 * y) / self.size;
        cube_round(q, r)
    }

    fn center(&self, q: i64, r: i64) -> (f64, f64) {
        let (q, r) = (q as f64, r as f64);
        (
            self.size * 3f64.sqrt() * (q + r / 2.0),
            self.size * 1.5 * r,
        )
    }
}

fn cube_round(q: f64, r: f64) -> (i64, i64) {
    let s = -q - r;
    let (mut rq, mut rr, rs) = (q.round(), r.round(), s.round());
    let (dq, dr, ds) = ((rq - q).abs(), (rr - r).abs(), (rs - s).abs());
    if dq > dr && dq > ds {
        rq = -rr - rs;
    } else if dr > ds {
        rr = -rq - rs;
    }
    (rq as i64, rr as i64)
}

/// Assigns points to pointy-top hexagonal cells of the given edge-to-edge
/// width. Cells are returned in ascending axial `(q, r)` order.
pub fn aggregate_hex(points: &[(f64, f64)], cell_size: f64) -> Result<Vec<((f64, f64), usize)>> {
    if !(cell_size > 0.0) {
        return Err(Error::invalid("cell_size must be positive"));
    }
    let hex = Hex::new(cell_size);
    let mut counts: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    for &(x, y) in points {
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::invalid("non-finite point coordinates"));
        }
        *counts.entry(hex.axial(x, y)).or_default() += 1;
    }
    Ok(counts
        .into_iter()
        .map(|((q, r), c)| (hex.center(q, r), c))
        .collect())
}

fn weighted_centroid(points: &[(f64, f64, f64)]) -> (f64, f64) {
    let total: f64 = points.iter().map(|p| p.2).sum();
    if total <= 0.0 {
        let n = points.len().max(1) as f64;
        return (
            points.iter().map(|p| p.0).sum::<f64>() / n,
            points.iter().map(|p| p.1).sum::<f64>() / n,
        );
    }
    (
        points.iter().map(|p| p.0 * p.2).sum::<f64>() / total,
        points.iter().map(|p| p.1 * p.2).sum::<f64>() / total,
    )
}

/// Samples `n_requests` requests over the grid; each nonempty cell becomes
/// one demand node whose base demand is its request count.
pub fn generate_synthetic(grid: &DensityGrid, cfg: &GenConfig) -> Result<Instance> {
    grid.validate()?;
    cfg.validate()?;
    let weights: Vec<f64> = grid.cells.iter().map(|c| c.weight).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::invalid(e.to_string()))?;
    let mut rng = rng_for(cfg.seed, 0);
    let mut counts = vec![0usize; grid.cells.len()];
    for _ in 0..cfg.n_requests {
        counts[dist.sample(&mut rng)] += 1;
    }
    let demand_points: Vec<(f64, f64, f64)> = grid
        .cells
        .iter()
        .zip(&counts)
        .filter(|(_, &c)| c > 0)
        .map(|(cell, &c)| (cell.x, cell.y, c as f64))
        .collect();
    build_instance(&demand_points, cfg.depot, cfg.profile)
}

fn build_instance(
    demand_points: &[(f64, f64, f64)],
    depot: Option<(f64, f64)>,
    profile: Profile,
) -> Result<Instance> {
    let (dx, dy) = depot.unwrap_or_else(|| weighted_centroid(demand_points));
    let mut nodes = vec![Node {
        id: 0,
        x: dx,
        y: dy,
        base_demand: 0.0,
    }];
    for (k, &(x, y, d)) in demand_points.iter().enumerate() {
        nodes.push(Node {
            id: k + 1,
            x,
            y,
            base_demand: d,
        });
    }
    Instance::with_profile(nodes, profile)
}

/// Draws `d_is = base_i * rho_is` with independent `rho_is ~ U(low, high)`.
pub fn perturb_demand(base: &Instance, cfg: &GenConfig) -> Result<ScenarioSet> {
    cfg.validate()?;
    let mut rng = rng_for(cfg.seed, 1);
    let factor = (cfg.noise_low < cfg.noise_high).then(|| Uniform::new(cfg.noise_low, cfg.noise_high));
    let base_demand = base.base_demands();
    let mut demands = Vec::with_capacity(cfg.n_scenarios);
    for _ in 0..cfg.n_scenarios {
        let mut row = vec![0.0; base.n_nodes()];
        for i in base.customers() {
            let rho = match &factor {
                Some(u) => u.sample(&mut rng),
                None => cfg.noise_low,
            };
            let d = base_demand[i] * rho;
            row[i] = if cfg.round_demand { d.round() } else { d };
        }
        demands.push(row);
    }
    ScenarioSet::uniform(demands)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestConfig {
    /// Aggregate locations into hexagonal cells of this width.
    pub hex_cell_size: Option<f64>,
    /// Depot coordinates; the demand-weighted centroid otherwise.
    pub depot: Option<(f64, f64)>,
    pub profile: Profile,
    pub round_demand: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            hex_cell_size: None,
            depot: None,
            profile: Profile::Large,
            round_demand: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub rows: usize,
    pub days_read: usize,
    pub days_dropped: Vec<String>,
    pub locations: usize,
    pub nodes: usize,
    pub total_demand: f64,
    pub retained_demand: f64,
    /// `retained_demand / total_demand` (1 when the file holds no demand).
    pub retained_fraction: f64,
}

/// Reads delivery records in long form (`day,x,y,parcels`) or wide form
/// (`x,y,<day 1>,<day 2>,...`). Each day with positive total demand becomes
/// an equiprobable scenario; parcels located exactly at the depot are not
/// retained.
pub fn ingest_operational(
    csv_path: impl AsRef<Path>,
    cfg: &IngestConfig,
) -> Result<(Instance, ScenarioSet, CoverageReport)> {
    let path = csv_path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_str(&text, path, cfg)
}

pub fn ingest_str(
    text: &str,
    origin: &Path,
    cfg: &IngestConfig,
) -> Result<(Instance, ScenarioSet, CoverageReport)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.to_lowercase()).collect();
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let long = header.first().map(String::as_str) == Some("day");
    if long && header.len() != 4 {
        return Err(parse_err(1, "long format expects header `day,x,y,parcels`".into()));
    }
    if !long && (header.len() < 3 || header[0] != "x" || header[1] != "y") {
        return Err(parse_err(
            1,
            "expected header `day,x,y,parcels` or `x,y,<day>,...`".into(),
        ));
    }

    // day label -> location key -> parcels; locations keyed by exact bit pattern.
    let mut day_order: Vec<String> = Vec::new();
    let mut days: BTreeMap<String, BTreeMap<usize, f64>> = BTreeMap::new();
    let mut locations: Vec<(f64, f64)> = Vec::new();
    let mut location_index: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let mut rows = 0;
    if !long {
        for label in &header[2..] {
            day_order.push(label.clone());
            days.entry(label.clone()).or_default();
        }
    }

    for (k, record) in reader.records().enumerate() {
        let line = k + 2;
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        rows += 1;
        if record.len() != header.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        let num = |field: &str, what: &str| -> Result<f64> {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("cannot parse {what} `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite {what}")));
            }
            Ok(v)
        };
        let (x, y) = if long {
            (num(&record[1], "x")?, num(&record[2], "y")?)
        } else {
            (num(&record[0], "x")?, num(&record[1], "y")?)
        };
        let key = (x.to_bits(), y.to_bits());
        let loc = *location_index.entry(key).or_insert_with(|| {
            locations.push((x, y));
            locations.len() - 1
        });
        let mut add = |day: &str, parcels: f64| -> Result<()> {
            if parcels < 0.0 {
                return Err(parse_err(line, format!("negative parcel count {parcels}")));
            }
            if !days.contains_key(day) {
                day_order.push(day.to_string());
            }
            *days.entry(day.to_string()).or_default().entry(loc).or_default() += parcels;
            Ok(())
        };
        if long {
            let day = record[0].to_string();
            if day.is_empty() {
                return Err(parse_err(line, "empty day label".into()));
            }
            add(&day, num(&record[3], "parcels")?)?;
        } else {
            for (c, label) in header[2..].iter().enumerate() {
                add(label, num(&record[c + 2], "parcels")?)?;
            }
        }
    }

    let total_demand: f64 = days.values().flat_map(|d| d.values()).sum();
    let mut days_dropped = Vec::new();
    let mut kept_days = Vec::new();
    for label in &day_order {
        let sum: f64 = days[label].values().sum();
        if sum > 0.0 {
            kept_days.push(label.clone());
        } else {
            log::warn!("day `{label}` has zero total demand and is dropped");
            days_dropped.push(label.clone());
        }
    }
    if kept_days.is_empty() {
        return Err(Error::invalid("no day with positive demand"));
    }

    // Map each location to a node position (possibly hex-aggregated).
    let (node_coords, loc_to_node): (Vec<(f64, f64)>, Vec<usize>) = match cfg.hex_cell_size {
        Some(size) => {
            if !(size > 0.0) {
                return Err(Error::invalid("hex cell size must be positive"));
            }
            let hex = Hex::new(size);
            let keys: Vec<(i64, i64)> = locations.iter().map(|&(x, y)| hex.axial(x, y)).collect();
            let mut sorted = keys.clone();
            sorted.sort_unstable();
            sorted.dedup();
            let coords = sorted.iter().map(|&(q, r)| hex.center(q, r)).collect();
            let map = keys
                .iter()
                .map(|k| sorted.binary_search(k).unwrap())
                .collect();
            (coords, map)
        }
        None => (locations.clone(), (0..locations.len()).collect()),
    };

    let n_loc_nodes = node_coords.len();
    let mut per_day = vec![vec![0.0; n_loc_nodes]; kept_days.len()];
    for (s, label) in kept_days.iter().enumerate() {
        for (&loc, &parcels) in &days[label] {
            per_day[s][loc_to_node[loc]] += parcels;
        }
    }
    let mean: Vec<f64> = (0..n_loc_nodes)
        .map(|v| per_day.iter().map(|row| row[v]).sum::<f64>() / kept_days.len() as f64)
        .collect();
    let points: Vec<(f64, f64, f64)> = node_coords
        .iter()
        .zip(&mean)
        .map(|(&(x, y), &m)| (x, y, m))
        .collect();
    let depot = cfg.depot.unwrap_or_else(|| weighted_centroid(&points));

    // Demand nodes: positive mean demand and not at the depot itself.
    let demand_nodes: Vec<usize> = (0..n_loc_nodes)
        .filter(|&v| mean[v] > 0.0 && node_coords[v] != depot)
        .collect();
    if demand_nodes.is_empty() {
        return Err(Error::invalid("no demand location away from the depot"));
    }
    let instance = build_instance(
        &demand_nodes.iter().map(|&v| points[v]).collect::<Vec<_>>(),
        Some(depot),
        cfg.profile,
    )?;
    let mut demands = Vec::with_capacity(kept_days.len());
    let mut retained_demand = 0.0;
    for row in &per_day {
        let mut d = vec![0.0];
        for &v in &demand_nodes {
            let value = if cfg.round_demand { row[v].round() } else { row[v] };
            d.push(value);
            retained_demand += row[v];
        }
        demands.push(d);
    }
    let scenarios = ScenarioSet::uniform(demands)?;
    let instance = instance.with_base_demands(&scenarios.expected_demand())?;
    let report = CoverageReport {
        rows,
        days_read: day_order.len(),
        days_dropped,
        locations: locations.len(),
        nodes: demand_nodes.len(),
        total_demand,
        retained_demand,
        retained_fraction: if total_demand > 0.0 {
            retained_demand / total_demand
        } else {
            1.0
        },
    };
    Ok((instance, scenarios, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str) -> Result<(Instance, ScenarioSet, CoverageReport)> {
        ingest_str(text, Path::new("ops.csv"), &IngestConfig::default())
    }

    #[test]
    fn hex_trivial_cases() {
        let cells = aggregate_hex(&[(3.7, -1.2)], 0.5).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].1, 1);
        let cells = aggregate_hex(&[(1.0, 1.0), (1.01, 1.0)], 0.5).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].1, 2);
        assert!(aggregate_hex(&[], 0.5).unwrap().is_empty());
        assert!(aggregate_hex(&[(0.0, 0.0)], 0.0).is_err());
    }

    #[test]
    fn hex_center_maps_to_itself() {
        let hex = Hex::new(0.7);
        for q in -4..=4 {
            for r in -4..=4 {
                let (x, y) = hex.center(q, r);
                assert_eq!(hex.axial(x, y), (q, r));
            }
        }
    }

    #[test]
    fn single_and_degenerate_grids() {
        let grid = DensityGrid {
            cell_size: 0.5,
            cells: vec![GridCell { x: 1.0, y: 2.0, weight: 3.0 }],
        };
        let cfg = GenConfig { n_requests: 20, ..GenConfig::default() };
        let inst = generate_synthetic(&grid, &cfg).unwrap();
        assert_eq!(inst.n_customers(), 1);
        assert_eq!(inst.nodes()[1].base_demand, 20.0);

        let grid = DensityGrid {
            cell_size: 0.5,
            cells: vec![
                GridCell { x: 0.0, y: 0.0, weight: 1.0 },
                GridCell { x: 1.0, y: 0.0, weight: 0.0 },
            ],
        };
        let cfg = GenConfig { n_requests: 50, ..GenConfig::default() };
        let inst = generate_synthetic(&grid, &cfg).unwrap();
        assert_eq!(inst.n_customers(), 1);
        assert_eq!(inst.nodes()[1].base_demand, 50.0);
        assert_eq!((inst.nodes()[1].x, inst.nodes()[1].y), (0.0, 0.0));
    }

    #[test]
    fn degenerate_noise_keeps_base_demand() {
        let grid = DensityGrid::uniform_rect(2.0, 2.0, 0.5);
        let cfg = GenConfig {
            n_requests: 30,
            n_scenarios: 4,
            noise_low: 1.0,
            noise_high: 1.0,
            ..GenConfig::default()
        };
        let inst = generate_synthetic(&grid, &cfg).unwrap();
        let set = perturb_demand(&inst, &cfg).unwrap();
        for s in 0..4 {
            assert_eq!(set.scenario(s), inst.base_demands().as_slice());
        }
        assert!(set.probabilities().iter().all(|&p| p == 0.25));
    }

    #[test]
    fn ingest_long_and_wide() {
        let long = "day,x,y,parcels\n1,0,1,2\n1,1,0,3\n1,1,1,1\n2,0,1,0\n2,1,0,5\n2,1,1,2\n";
        let (inst, set, report) = ingest(long).unwrap();
        assert_eq!(set.n_scenarios(), 2);
        assert_eq!(set.probabilities(), &[0.5, 0.5]);
        assert_eq!(inst.n_customers(), 3);
        assert_eq!(report.retained_fraction, 1.0);

        let mut wide = String::from("x,y");
        for d in 0..84 {
            wide.push_str(&format!(",day{d}"));
        }
        wide.push('\n');
        for loc in 0..3 {
            wide.push_str(&format!("{loc},{}", loc * 2));
            for d in 0..84 {
                wide.push_str(&format!(",{}", 1 + (d + loc) % 5));
            }
            wide.push('\n');
        }
        let (_, set, _) = ingest(&wide).unwrap();
        assert_eq!(set.n_scenarios(), 84);
        assert!(set.probabilities().iter().all(|&p| (p - 1.0 / 84.0).abs() < 1e-15));
    }

    #[test]
    fn ingest_errors_and_dropped_days() {
        let bad = "day,x,y,parcels\n1,0,1,2\n1,1,0,-3\n";
        let err = ingest(bad).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        let garbled = "day,x,y,parcels\n1,0,abc,2\n";
        assert!(ingest(garbled).unwrap_err().to_string().contains("line 2"));

        let text = "day,x,y,parcels\n1,0,1,2\n2,0,1,0\n3,1,0,4\n";
        let (_, set, report) = ingest(text).unwrap();
        assert_eq!(set.n_scenarios(), 2);
        assert_eq!(report.days_dropped, vec!["2".to_string()]);
    }
}
