//! Core data model: nodes, vehicle types, instances, demand scenarios,
//! recourse neighborhoods and cost parameters.
//!
//! Units are fixed throughout the crate: kilometres, hours, euro and parcel
//! units. Node `0` is always the depot.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of the depot node.
pub const DEPOT: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub base_demand: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleType {
    pub id: String,
    /// Load capacity in parcel units.
    pub capacity: f64,
    /// Ownership cost in euro per day.
    pub fixed_cost: f64,
    /// Operating cost in euro per km.
    pub unit_distance_cost: f64,
    /// Average speed in km/h.
    pub speed: f64,
    /// Driving range in km; `None` means unbounded.
    #[serde(default)]
    pub driving_range: Option<f64>,
}

impl VehicleType {
    /// Conventional motorcycle with the small-instance parameters.
    pub fn conventional_motorcycle() -> Self {
        VehicleType {
            id: "CM".into(),
            capacity: 15.0,
            fixed_cost: 7.0,
            unit_distance_cost: 0.20,
            speed: 45.0,
            driving_range: None,
        }
    }

    /// Electric cargo bike with the small-instance parameters.
    pub fn electric_cargo_bike() -> Self {
        VehicleType {
            id: "ECB".into(),
            capacity: 5.0,
            fixed_cost: 3.0,
            unit_distance_cost: 0.15,
            speed: 15.0,
            driving_range: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.capacity > 0.0) || !(self.speed > 0.0) {
            return Err(Error::invalid(format!(
                "vehicle type {}: capacity and speed must be positive",
                self.id
            )));
        }
        if !(self.fixed_cost >= 0.0) || !(self.unit_distance_cost >= 0.0) {
            return Err(Error::invalid(format!(
                "vehicle type {}: costs must be non-negative",
                self.id
            )));
        }
        if let Some(range) = self.driving_range {
            if !(range > 0.0) {
                return Err(Error::invalid(format!(
                    "vehicle type {}: driving range must be positive",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Whether a closed tour of `length` km is within the driving range.
    pub fn can_drive(&self, length: f64) -> bool {
        self.driving_range.map_or(true, |range| length <= range + 1e-9)
    }
}

/// Parameter profiles of the experimental setting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Desk-scale synthetic instances.
    Small,
    /// Operational-scale instances: larger capacities and fixed costs, ECB range 15 km.
    Large,
}

impl Profile {
    pub fn vehicle_types(self) -> Vec<VehicleType> {
        let mut cm = VehicleType::conventional_motorcycle();
        let mut ecb = VehicleType::electric_cargo_bike();
        if self == Profile::Large {
            cm.capacity = 170.0;
            cm.fixed_cost = 13.0;
            ecb.capacity = 100.0;
            ecb.fixed_cost = 6.5;
            ecb.driving_range = Some(15.0);
        }
        vec![cm, ecb]
    }

    /// Daily shift limit in hours.
    pub fn shift_limit(self) -> f64 {
        5.0
    }

    /// Default recourse radius in km (used for both directions).
    pub fn radius(self) -> f64 {
        2.0
    }
}

/// Dense square matrix indexed by node ids.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        DistanceMatrix { n, data }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }
}

/// Euclidean distances between planar km coordinates.
pub fn build_distance_matrix(nodes: &[Node]) -> Result<DistanceMatrix> {
    if nodes.len() < 2 {
        return Err(Error::invalid("at least two nodes are required"));
    }
    if let Some(node) = nodes.iter().find(|n| !n.x.is_finite() || !n.y.is_finite()) {
        return Err(Error::invalid(format!(
            "node {} has non-finite coordinates",
            node.id
        )));
    }
    Ok(DistanceMatrix::from_fn(nodes.len(), |i, j| {
        if i == j {
            0.0
        } else {
            (nodes[i].x - nodes[j].x).hypot(nodes[i].y - nodes[j].y)
        }
    }))
}

/// On-disk form of an [`Instance`]; distances are always derived.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InstanceFile {
    pub nodes: Vec<Node>,
    pub vehicle_types: Vec<VehicleType>,
    pub service_time: Vec<f64>,
    pub shift_limit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "InstanceFile", try_from = "InstanceFile")]
pub struct Instance {
    nodes: Vec<Node>,
    vehicle_types: Vec<VehicleType>,
    distance: DistanceMatrix,
    travel_time: Vec<DistanceMatrix>,
    service_time: Vec<f64>,
    shift_limit: f64,
}

impl From<Instance> for InstanceFile {
    fn from(inst: Instance) -> Self {
        InstanceFile {
            nodes: inst.nodes,
            vehicle_types: inst.vehicle_types,
            service_time: inst.service_time,
            shift_limit: inst.shift_limit,
        }
    }
}

impl TryFrom<InstanceFile> for Instance {
    type Error = Error;

    fn try_from(file: InstanceFile) -> Result<Self> {
        Instance::new(
            file.nodes,
            file.vehicle_types,
            file.service_time,
            file.shift_limit,
        )
    }
}

impl Instance {
    pub fn new(
        nodes: Vec<Node>,
        vehicle_types: Vec<VehicleType>,
        service_time: Vec<f64>,
        shift_limit: f64,
    ) -> Result<Self> {
        for (k, node) in nodes.iter().enumerate() {
            if node.id != k {
                return Err(Error::invalid(format!(
                    "node ids must be contiguous from 0; found id {} at position {k}",
                    node.id
                )));
            }
            if !(node.base_demand >= 0.0) {
                return Err(Error::invalid(format!(
                    "node {} has negative base demand",
                    node.id
                )));
            }
        }
        if vehicle_types.is_empty() {
            return Err(Error::invalid("at least one vehicle type is required"));
        }
        for (k, vt) in vehicle_types.iter().enumerate() {
            vt.validate()?;
            if vehicle_types[..k].iter().any(|other| other.id == vt.id) {
                return Err(Error::invalid(format!("duplicate vehicle type {}", vt.id)));
            }
        }
        if service_time.len() != nodes.len() {
            return Err(Error::invalid(format!(
                "service_time has {} entries for {} nodes",
                service_time.len(),
                nodes.len()
            )));
        }
        if service_time.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::invalid("service times must be non-negative"));
        }
        if !(shift_limit > 0.0) {
            return Err(Error::invalid("shift limit must be positive"));
        }
        let distance = build_distance_matrix(&nodes)?;
        let travel_time = vehicle_types
            .iter()
            .map(|vt| DistanceMatrix::from_fn(nodes.len(), |i, j| distance.get(i, j) / vt.speed))
            .collect();
        Ok(Instance {
            nodes,
            vehicle_types,
            distance,
            travel_time,
            service_time,
            shift_limit,
        })
    }

    /// Builds an instance with the given profile's fleet, zero service times and shift limit.
    pub fn with_profile(nodes: Vec<Node>, profile: Profile) -> Result<Self> {
        let n = nodes.len();
        Instance::new(
            nodes,
            profile.vehicle_types(),
            vec![0.0; n],
            profile.shift_limit(),
        )
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn vehicle_types(&self) -> &[VehicleType] {
        &self.vehicle_types
    }

    pub fn service_time(&self, i: usize) -> f64 {
        self.service_time[i]
    }

    pub fn shift_limit(&self) -> f64 {
        self.shift_limit
    }

    /// Number of nodes including the depot.
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_customers(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn n_types(&self) -> usize {
        self.vehicle_types.len()
    }

    /// Demand node ids `1..=N`.
    pub fn customers(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.n_customers()
    }

    pub fn distance(&self) -> &DistanceMatrix {
        &self.distance
    }

    #[inline]
    pub fn dist(&self, i: usize, j: usize) -> f64 {
        self.distance.get(i, j)
    }

    #[inline]
    pub fn travel_time(&self, p: usize, i: usize, j: usize) -> f64 {
        self.travel_time[p].get(i, j)
    }

    pub fn travel_times(&self, p: usize) -> &DistanceMatrix {
        &self.travel_time[p]
    }

    /// Largest capacity over all vehicle types.
    pub fn max_capacity(&self) -> f64 {
        self.vehicle_types
            .iter()
            .map(|vt| vt.capacity)
            .fold(0.0, f64::max)
    }

    pub fn vehicle_index(&self, id: &str) -> Result<usize> {
        self.vehicle_types
            .iter()
            .position(|vt| vt.id == id)
            .ok_or_else(|| Error::UnknownVehicleType(id.to_string()))
    }

    /// Travel cost of arc `(i, j)` for vehicle type `p`.
    #[inline]
    pub fn arc_cost(&self, p: usize, i: usize, j: usize) -> f64 {
        self.vehicle_types[p].unit_distance_cost * self.dist(i, j)
    }

    /// Deployment cost of a type-`p` route ending at `end_node`: ownership
    /// plus the return leg to the depot.
    pub fn fixed_cost_by_index(&self, p: usize, end_node: usize) -> f64 {
        let vt = &self.vehicle_types[p];
        vt.fixed_cost + vt.unit_distance_cost * self.dist(end_node, DEPOT)
    }

    pub fn fixed_route_cost(&self, type_id: &str, end_node: usize) -> Result<f64> {
        let p = self.vehicle_index(type_id)?;
        if end_node == DEPOT || end_node >= self.n_nodes() {
            return Err(Error::invalid(format!(
                "node {end_node} is not a demand node"
            )));
        }
        Ok(self.fixed_cost_by_index(p, end_node))
    }

    /// Closed depot-to-depot length of a customer sequence.
    pub fn tour_length(&self, sequence: &[usize]) -> f64 {
        let Some((&first, _)) = sequence.split_first() else {
            return 0.0;
        };
        let mut length = self.dist(DEPOT, first);
        for pair in sequence.windows(2) {
            length += self.dist(pair[0], pair[1]);
        }
        length + self.dist(*sequence.last().unwrap(), DEPOT)
    }

    pub fn base_demands(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.base_demand).collect()
    }

    /// Copy of this instance with replaced base demands (index 0 is ignored).
    pub fn with_base_demands(&self, demands: &[f64]) -> Result<Instance> {
        let mut nodes = self.nodes.clone();
        for (node, &d) in nodes.iter_mut().zip(demands).skip(1) {
            node.base_demand = d;
        }
        Instance::new(
            nodes,
            self.vehicle_types.clone(),
            self.service_time.clone(),
            self.shift_limit,
        )
    }

    pub fn with_vehicle_types(&self, vehicle_types: Vec<VehicleType>) -> Result<Instance> {
        Instance::new(
            self.nodes.clone(),
            vehicle_types,
            self.service_time.clone(),
            self.shift_limit,
        )
    }

    pub fn from_json(text: &str) -> Result<Instance> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Instance> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Instance::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Per-scenario demand realizations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    /// `demands[s][i]`, with `demands[s][0] == 0` for the depot.
    demands: Vec<Vec<f64>>,
    probabilities: Vec<f64>,
}

impl ScenarioSet {
    pub fn new(demands: Vec<Vec<f64>>, probabilities: Vec<f64>) -> Result<Self> {
        if demands.is_empty() {
            return Err(Error::invalid("scenario set is empty"));
        }
        if demands.len() != probabilities.len() {
            return Err(Error::invalid(format!(
                "{} demand rows for {} probabilities",
                demands.len(),
                probabilities.len()
            )));
        }
        let width = demands[0].len();
        for (s, row) in demands.iter().enumerate() {
            if row.len() != width {
                return Err(Error::invalid(format!("scenario {s} has {} entries", row.len())));
            }
            if row.first().copied().unwrap_or(0.0) != 0.0 {
                return Err(Error::invalid(format!(
                    "scenario {s} assigns demand to the depot"
                )));
            }
            if row.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
                return Err(Error::invalid(format!("scenario {s} has a negative demand")));
            }
        }
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::invalid("probabilities must lie in [0, 1]"));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        Ok(ScenarioSet {
            demands,
            probabilities,
        })
    }

    /// Equiprobable scenarios.
    pub fn uniform(demands: Vec<Vec<f64>>) -> Result<Self> {
        let n = demands.len().max(1);
        ScenarioSet::new(demands, vec![1.0 / n as f64; n])
    }

    /// A single certain scenario.
    pub fn deterministic(demands: Vec<f64>) -> Result<Self> {
        ScenarioSet::new(vec![demands], vec![1.0])
    }

    pub fn n_scenarios(&self) -> usize {
        self.demands.len()
    }

    /// Number of nodes per scenario, including the depot.
    pub fn n_nodes(&self) -> usize {
        self.demands[0].len()
    }

    #[inline]
    pub fn demand(&self, s: usize, i: usize) -> f64 {
        self.demands[s][i]
    }

    pub fn demands(&self) -> &[Vec<f64>] {
        &self.demands
    }

    pub fn scenario(&self, s: usize) -> &[f64] {
        &self.demands[s]
    }

    pub fn probability(&self, s: usize) -> f64 {
        self.probabilities[s]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    /// Probability-weighted mean demand per node.
    pub fn expected_demand(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.n_nodes()];
        for (row, &p) in self.demands.iter().zip(&self.probabilities) {
            for (m, &d) in mean.iter_mut().zip(row) {
                *m += p * d;
            }
        }
        mean
    }

    /// Scenario `s` as a deterministic set.
    pub fn single(&self, s: usize) -> ScenarioSet {
        ScenarioSet {
            demands: vec![self.demands[s].clone()],
            probabilities: vec![1.0],
        }
    }

    pub fn check_instance(&self, instance: &Instance) -> Result<()> {
        if self.n_nodes() != instance.n_nodes() {
            return Err(Error::invalid(format!(
                "scenarios cover {} nodes, instance has {}",
                self.n_nodes(),
                instance.n_nodes()
            )));
        }
        Ok(())
    }

    /// CSV with header `scenario,prob,d_1,...,d_N`.
    pub fn to_csv(&self) -> String {
        let n = self.n_nodes();
        let mut out = String::from("scenario,prob");
        for i in 1..n {
            let _ = write!(out, ",d_{i}");
        }
        out.push('\n');
        for (s, (row, p)) in self.demands.iter().zip(&self.probabilities).enumerate() {
            let _ = write!(out, "{s},{p}");
            for d in &row[1..] {
                let _ = write!(out, ",{d}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        if header.len() < 2 || &header[0] != "scenario" || &header[1] != "prob" {
            return Err(Error::Parse {
                path: origin.to_path_buf(),
                line: 1,
                message: "expected header `scenario,prob,d_1,...`".into(),
            });
        }
        let n_customers = header.len() - 2;
        let mut demands = Vec::new();
        let mut probabilities = Vec::new();
        for (k, record) in reader.records().enumerate() {
            let line = k + 2;
            let record = record?;
            let bad = |message: String| Error::Parse {
                path: origin.to_path_buf(),
                line,
                message,
            };
            if record.len() != n_customers + 2 {
                return Err(bad(format!(
                    "expected {} fields, found {}",
                    n_customers + 2,
                    record.len()
                )));
            }
            let parse = |field: &str| -> Result<f64> {
                field
                    .parse::<f64>()
                    .map_err(|_| bad(format!("cannot parse `{field}` as a number")))
            };
            probabilities.push(parse(&record[1])?);
            let mut row = Vec::with_capacity(n_customers + 1);
            row.push(0.0);
            for field in record.iter().skip(2) {
                let d = parse(field)?;
                if d < 0.0 {
                    return Err(bad(format!("negative demand {d}")));
                }
                row.push(d);
            }
            demands.push(row);
        }
        ScenarioSet::new(demands, probabilities)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ScenarioSet::from_csv(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Recourse neighborhoods around each demand node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighborhoods {
    pub out_radius: f64,
    pub in_radius: f64,
    /// `out_sets[i]`: demand nodes servable from `i` (ascending ids).
    pub out_sets: Vec<Vec<usize>>,
    /// `in_sets[j]`: demand nodes from which `j` can be served.
    pub in_sets: Vec<Vec<usize>>,
}

impl Neighborhoods {
    pub fn out_set(&self, i: usize) -> &[usize] {
        &self.out_sets[i]
    }

    pub fn in_set(&self, j: usize) -> &[usize] {
        &self.in_sets[j]
    }

    pub fn n_nodes(&self) -> usize {
        self.out_sets.len()
    }
}

/// Builds `out_sets[i] = { j : dist(j, i) <= out_radius }` over demand nodes
/// and derives the in-sets by duality. The depot belongs to no set.
pub fn build_neighborhoods(instance: &Instance, out_radius: f64, in_radius: f64) -> Neighborhoods {
    let n = instance.n_nodes();
    if (out_radius - in_radius).abs() > 1e-12 {
        log::debug!(
            "in-sets follow the out-set duality; in_radius {in_radius} differs from out_radius {out_radius}"
        );
    }
    let mut out_sets = vec![Vec::new(); n];
    let mut in_sets = vec![Vec::new(); n];
    for i in instance.customers() {
        for j in instance.customers() {
            if instance.dist(j, i) <= out_radius {
                out_sets[i].push(j);
                in_sets[j].push(i);
            }
        }
    }
    Neighborhoods {
        out_radius,
        in_radius,
        out_sets,
        in_sets,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum RecourseCostMode {
    /// `beta * c_rec * y` per recourse action.
    Flat,
    /// `beta * c_rec * dist(i, j) * y`.
    #[default]
    Distance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostParams {
    pub beta: f64,
    /// Penalty per unit of unserved demand.
    pub gamma: f64,
    /// Recourse cost per km (distance mode) or per action (flat mode).
    pub recourse_unit_cost: f64,
    #[serde(default)]
    pub recourse_cost_mode: RecourseCostMode,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            beta: 2.0,
            gamma: 100.0,
            recourse_unit_cost: 0.20,
            recourse_cost_mode: RecourseCostMode::Distance,
        }
    }
}

impl CostParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 1.0) {
            return Err(Error::invalid("beta must be at least 1"));
        }
        if !(self.gamma >= 0.0) || !(self.recourse_unit_cost >= 0.0) {
            return Err(Error::invalid("gamma and recourse cost must be non-negative"));
        }
        Ok(())
    }

    /// Cost of serving a full fraction of `j` from `i` (distance `dist`).
    #[inline]
    pub fn recourse_cost(&self, dist: f64) -> f64 {
        match self.recourse_cost_mode {
            RecourseCostMode::Flat => self.beta * self.recourse_unit_cost,
            RecourseCostMode::Distance => self.beta * self.recourse_unit_cost * dist,
        }
    }

    /// Warning when outsourcing would be cheaper than recourse at the radius edge.
    pub fn dominance_warning(&self, out_radius: f64) -> Option<String> {
        let edge = self.beta * self.recourse_unit_cost * out_radius;
        (self.gamma < edge).then(|| {
            format!(
                "gamma {} is below beta * c_rec * radius = {edge}; outsourcing dominates recourse",
                self.gamma
            )
        })
    }
}
