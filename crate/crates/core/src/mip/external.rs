//! Backend that hands the model to an external MILP solver through MPS.
//!
//! The command template may use `{mps}`, `{sol}`, `{time}` and `{gap}`. The
//! solver must write `name value` lines to `{sol}`; the optional lines
//! `=status= <optimal|feasible|infeasible|time_limit>` and `=bound= <value>`
//! carry the status and the best bound.

use std::collections::HashMap;
use std::path::PathBuf;
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::model::{relative_gap, MipModel, MipSolution, SolveStatus};
use super::mps::export_mps;
use super::Limits;
use crate::error::{Error, Result};

/// Environment variable holding the default command template.
pub const SOLVER_CMD_ENV: &str = "SFMCVRP_SOLVER_CMD";

static CALLS: AtomicUsize = AtomicUsize::new(0);

struct TempDir(PathBuf);

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

pub fn solve_external(model: &MipModel, command: &str, limits: &Limits) -> Result<MipSolution> {
    model.validate()?;
    let dir = TempDir(std::env::temp_dir().join(format!(
        "sfmcvrp-{}-{}",
        std::process::id(),
        CALLS.fetch_add(1, Ordering::Relaxed)
    )));
    std::fs::create_dir_all(&dir.0).map_err(|e| Error::io(&dir.0, e))?;
    let mps_path = dir.0.join("model.mps");
    let sol_path = dir.0.join("model.sol");
    let mps = export_mps(model);
    std::fs::write(&mps_path, &mps.text).map_err(|e| Error::io(&mps_path, e))?;

    let line = command
        .replace("{mps}", &mps_path.display().to_string())
        .replace("{sol}", &sol_path.display().to_string())
        .replace("{time}", &limits.time.unwrap_or(1e9).to_string())
        .replace("{gap}", &limits.gap.to_string());
    let program = line.split_whitespace().next().unwrap_or("").to_string();
    let fail = |reason: String| Error::ExternalSolver {
        command: command.to_string(),
        reason,
    };
    if program.is_empty() {
        return Err(fail("empty command".into()));
    }
    let output = Command::new("sh")
        .arg("-c")
        .arg(&line)
        .output()
        .map_err(|e| fail(e.to_string()))?;
    if output.status.code() == Some(127) {
        return Err(fail(format!("`{program}` not found")));
    }
    if !output.status.success() {
        return Err(fail(format!(
            "exited with {}: {}",
            output.status,
            String::from_utf8_lossy(&output.stderr).trim()
        )));
    }
    let text = std::fs::read_to_string(&sol_path).map_err(|e| fail(format!("no solution file: {e}")))?;
    parse_solution(model, &mps.column_names, &text).map_err(|e| fail(e.to_string()))
}

fn parse_solution(model: &MipModel, names: &[String], text: &str) -> Result<MipSolution> {
    let index: HashMap<&str, usize> = names.iter().enumerate().map(|(k, n)| (n.as_str(), k)).collect();
    let mut values = vec![0.0; model.n_vars()];
    let mut status = None;
    let mut bound = None;
    for (k, line) in text.lines().enumerate() {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let [key, val] = tokens[..] else {
            if tokens.is_empty() {
                continue;
            }
            return Err(Error::Solver(format!("solution line {}: expected `name value`", k + 1)));
        };
        match key {
            "=status=" => {
                status = Some(match val {
                    "optimal" => SolveStatus::Optimal,
                    "feasible" => SolveStatus::Feasible,
                    "infeasible" => SolveStatus::Infeasible,
                    "time_limit" => SolveStatus::TimeLimit,
                    other => return Err(Error::Solver(format!("unknown status {other}"))),
                })
            }
            "=bound=" => bound = val.parse::<f64>().ok(),
            name => {
                let &v = index
                    .get(name)
                    .ok_or_else(|| Error::Solver(format!("unknown column {name} in solution")))?;
                values[v] = val
                    .parse()
                    .map_err(|_| Error::Solver(format!("bad value for {name}: {val}")))?;
            }
        }
    }
    let status = status.unwrap_or(SolveStatus::Optimal);
    if status == SolveStatus::Infeasible {
        return Ok(MipSolution {
            values: Vec::new(),
            objective: f64::INFINITY,
            best_bound: f64::INFINITY,
            status,
            gap: f64::INFINITY,
            nodes: 0,
            root_bound: f64::NEG_INFINITY,
        });
    }
    let objective = model.objective_value(&values);
    let best_bound = match (bound, status) {
        (Some(b), _) => b.min(objective),
        (None, SolveStatus::Optimal) => objective,
        (None, _) => f64::NEG_INFINITY,
    };
    Ok(MipSolution {
        values,
        objective,
        best_bound,
        status,
        gap: relative_gap(objective, best_bound),
        nodes: 0,
        root_bound: f64::NEG_INFINITY,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_command_is_named() {
        let mut m = MipModel::new();
        m.binary("b", 1.0).unwrap();
        let err = solve_external(&m, "definitely-not-a-solver-xyz {mps} {sol}", &Limits::default()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("definitely-not-a-solver-xyz"), "{msg}");
    }

    #[test]
    fn shell_solver_output_is_read() {
        let mut m = MipModel::new();
        m.binary("b", 2.0).unwrap();
        m.continuous("x", 1.0).unwrap();
        let cmd = "printf '=status= optimal\\nb 1\\nx 0.5\\n' > {sol}";
        let sol = solve_external(&m, cmd, &Limits::default()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_eq!(sol.values, vec![1.0, 0.5]);
        assert!((sol.objective - 2.5).abs() < 1e-12);
    }
}
