use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Binary,
    Continuous,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
    /// Objective coefficient.
    pub obj: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub terms: Vec<(usize, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// A minimization MILP: variables with bounds, linear rows and a linear
/// objective plus constant.
#[derive(Clone, Debug, Default)]
pub struct MipModel {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective_constant: f64,
    var_index: HashMap<String, usize>,
    /// Index maps of the formulation that produced the model, if any.
    pub layout: Option<super::Layout>,
}

impl MipModel {
    pub fn new() -> Self {
        MipModel::default()
    }

    pub fn add_var(
        &mut self,
        name: impl Into<String>,
        kind: VarKind,
        lower: f64,
        upper: f64,
        obj: f64,
    ) -> Result<usize> {
        let name = name.into();
        if self.var_index.contains_key(&name) {
            return Err(Error::Model(format!("duplicate variable name {name}")));
        }
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            VarKind::Continuous => (lower, upper),
        };
        if lower > upper {
            return Err(Error::Model(format!("variable {name} has empty bounds")));
        }
        let id = self.variables.len();
        self.var_index.insert(name.clone(), id);
        self.variables.push(Variable {
            name,
            kind,
            lower,
            upper,
            obj,
        });
        Ok(id)
    }

    pub fn binary(&mut self, name: impl Into<String>, obj: f64) -> Result<usize> {
        self.add_var(name, VarKind::Binary, 0.0, 1.0, obj)
    }

    pub fn continuous(&mut self, name: impl Into<String>, obj: f64) -> Result<usize> {
        self.add_var(name, VarKind::Continuous, 0.0, f64::INFINITY, obj)
    }

    /// Adds a row; repeated variables in `terms` are merged and zeros dropped.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(usize, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> Result<usize> {
        let name = name.into();
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        let mut sorted = terms;
        sorted.sort_by_key(|t| t.0);
        for (v, a) in sorted {
            if v >= self.variables.len() {
                return Err(Error::Model(format!(
                    "constraint {name} references unknown variable {v}"
                )));
            }
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += a,
                _ => merged.push((v, a)),
            }
        }
        merged.retain(|t| t.1 != 0.0);
        self.constraints.push(Constraint {
            name,
            terms: merged,
            sense,
            rhs,
        });
        Ok(self.constraints.len() - 1)
    }

    pub fn var_id(&self, name: &str) -> Option<usize> {
        self.var_index.get(name).copied()
    }

    pub fn n_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn n_binaries(&self) -> usize {
        self.variables
            .iter()
            .filter(|v| v.kind == VarKind::Binary)
            .count()
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> Result<()> {
        if lower > upper + 1e-12 {
            return Err(Error::Model(format!(
                "empty bounds for {}",
                self.variables[var].name
            )));
        }
        self.variables[var].lower = lower;
        self.variables[var].upper = upper;
        Ok(())
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.objective_constant
            + self
                .variables
                .iter()
                .zip(values)
                .map(|(v, x)| v.obj * x)
                .sum::<f64>()
    }

    /// Largest bound or row violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (v, &x) in self.variables.iter().zip(values) {
            worst = worst.max(v.lower - x).max(x - v.upper);
        }
        for c in &self.constraints {
            let lhs: f64 = c.terms.iter().map(|&(v, a)| a * values[v]).sum();
            let viol = match c.sense {
                Sense::Le => lhs - c.rhs,
                Sense::Ge => c.rhs - lhs,
                Sense::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(viol);
        }
        worst
    }

    /// Checks internal consistency.
    pub fn validate(&self) -> Result<()> {
        for v in &self.variables {
            if v.kind == VarKind::Binary && (v.lower < 0.0 || v.upper > 1.0) {
                return Err(Error::Model(format!("binary {} has bounds outside [0,1]", v.name)));
            }
            if !v.obj.is_finite() || v.lower.is_nan() || v.upper.is_nan() {
                return Err(Error::Model(format!("variable {} has invalid data", v.name)));
            }
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() || c.terms.iter().any(|t| !t.1.is_finite()) {
                return Err(Error::Model(format!("constraint {} has invalid data", c.name)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Feasible,
    Infeasible,
    TimeLimit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MipSolution {
    /// Variable values in model order; empty when no solution is known.
    pub values: Vec<f64>,
    /// Objective of `values` (`+inf` when none).
    pub objective: f64,
    pub best_bound: f64,
    pub status: SolveStatus,
    pub gap: f64,
    /// Branch-and-bound nodes processed.
    pub nodes: usize,
    /// LP relaxation value at the root.
    pub root_bound: f64,
}

impl MipSolution {
    pub fn has_solution(&self) -> bool {
        !self.values.is_empty()
    }

    pub fn value(&self, var: usize) -> f64 {
        self.values[var]
    }
}

/// Relative gap `(objective - bound) / max(|objective|, 1e-9)`.
pub fn relative_gap(objective: f64, bound: f64) -> f64 {
    if !objective.is_finite() {
        return f64::INFINITY;
    }
    ((objective - bound) / objective.abs().max(1e-9)).max(0.0)
}
