//! Model restrictions that impose a reference plan's first-stage decisions.

use serde::{Deserialize, Serialize};

use super::decode::PlanSolution;
use super::model::{MipModel, Sense};
use super::Layout;
use crate::domain::DEPOT;
use crate::error::{Error, Result};
use crate::routegen::canonical;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureVariant {
    /// All first-stage variables equal to the reference.
    FixFirstStage,
    /// Per-type fleet counts equal to the reference.
    FixFleet,
    /// First-stage variables at least the reference.
    LbFirstStage,
    /// Per-type fleet counts at least the reference.
    LbFleet,
}

/// Reference values of every first-stage variable of `model`.
fn first_stage_values(model: &MipModel, reference: &PlanSolution) -> Result<Vec<(usize, f64)>> {
    let layout = model
        .layout
        .as_ref()
        .ok_or_else(|| Error::Model("model has no formulation layout".into()))?;
    let mut ones = Vec::new();
    match layout {
        Layout::Node(l) => {
            for r in &reference.routes {
                let p = r.vehicle_type;
                let seq = &r.sequence;
                if p >= l.n_types || seq.iter().any(|&i| i == DEPOT || i >= l.n_nodes) {
                    return Err(Error::Model("reference route does not fit the model".into()));
                }
                let last = *seq.last().unwrap();
                ones.push(l.z[last][p]);
                let mut prev = DEPOT;
                for &i in seq {
                    ones.push(l.x(prev, i, p).unwrap());
                    if i != last {
                        ones.push(l.v[i][p]);
                    }
                    prev = i;
                }
            }
        }
        Layout::Path(l) => {
            for r in &reference.routes {
                let key = canonical(&r.sequence);
                let idx = l
                    .routes
                    .iter()
                    .position(|route| route.sequence == key)
                    .ok_or_else(|| Error::Model(format!("reference route {:?} is not in the pool", r.sequence)))?;
                let var = l
                    .psi
                    .get(idx)
                    .and_then(|row| row.get(r.vehicle_type).copied().flatten())
                    .ok_or_else(|| {
                        Error::Model(format!(
                            "reference route {:?} is not admissible for type {}",
                            r.sequence, r.vehicle_id
                        ))
                    })?;
                ones.push(var);
            }
        }
    }
    let mut values: Vec<(usize, f64)> = layout.first_stage().into_iter().map(|v| (v, 0.0)).collect();
    values.sort_unstable_by_key(|t| t.0);
    for var in ones {
        let k = values
            .binary_search_by_key(&var, |t| t.0)
            .map_err(|_| Error::Model("reference touches a non first-stage variable".into()))?;
        values[k].1 = 1.0;
    }
    Ok(values)
}

/// Returns a copy of `model` restricted by `variant` with respect to `reference`.
pub fn apply_measure_variant(model: &MipModel, variant: MeasureVariant, reference: &PlanSolution) -> Result<MipModel> {
    let mut out = model.clone();
    let layout = model
        .layout
        .as_ref()
        .ok_or_else(|| Error::Model("model has no formulation layout".into()))?;
    match variant {
        MeasureVariant::FixFirstStage | MeasureVariant::LbFirstStage => {
            for (var, val) in first_stage_values(model, reference)? {
                let upper = if variant == MeasureVariant::FixFirstStage {
                    val
                } else {
                    model.variables[var].upper
                };
                out.set_bounds(var, val, upper)?;
            }
        }
        MeasureVariant::FixFleet | MeasureVariant::LbFleet => {
            let n_types = match layout {
                Layout::Node(l) => l.n_types,
                Layout::Path(l) => l.n_types,
            };
            if reference.fleet.len() != n_types {
                return Err(Error::Model("reference fleet does not match the vehicle types".into()));
            }
            let sense = if variant == MeasureVariant::FixFleet {
                Sense::Eq
            } else {
                Sense::Ge
            };
            for p in 0..n_types {
                let terms: Vec<(usize, f64)> = match layout {
                    Layout::Node(l) => l.z.iter().filter(|row| !row.is_empty()).map(|row| (row[p], 1.0)).collect(),
                    Layout::Path(l) => l.psi.iter().filter_map(|row| row[p]).map(|v| (v, 1.0)).collect(),
                };
                out.add_constraint(format!("fleet_{p}"), terms, sense, reference.fleet[p] as f64)?;
            }
        }
    }
    Ok(out)
}
