//! Small dense two-phase simplex used by exact oracles.
//!
//! Solves `min c'x` subject to row constraints and `x >= 0`. It is meant for
//! problems with at most a few hundred rows and columns; large models go
//! through [`crate::mip`].

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug, Default)]
pub struct DenseLp {
    n_vars: usize,
    objective: Vec<f64>,
    rows: Vec<(Vec<f64>, Relation, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LpOutcome {
    Optimal { objective: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

const EPS: f64 = 1e-10;

impl DenseLp {
    pub fn new(objective: Vec<f64>) -> Self {
        DenseLp {
            n_vars: objective.len(),
            objective,
            rows: Vec::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    /// Adds `sum coeffs[k].1 * x[coeffs[k].0] (rel) rhs`.
    pub fn add_row(&mut self, coeffs: &[(usize, f64)], rel: Relation, rhs: f64) {
        let mut row = vec![0.0; self.n_vars];
        for &(j, a) in coeffs {
            row[j] += a;
        }
        self.rows.push((row, rel, rhs));
    }

    pub fn solve(&self) -> Result<LpOutcome> {
        if self.rows.iter().any(|(r, _, b)| !b.is_finite() || r.iter().any(|a| !a.is_finite())) {
            return Err(Error::Solver("non-finite coefficient in dense LP".into()));
        }
        let m = self.rows.len();
        let n = self.n_vars;
        // Normalize to non-negative right-hand sides.
        let rows: Vec<(Vec<f64>, Relation, f64)> = self
            .rows
            .iter()
            .map(|(r, rel, b)| {
                if *b < 0.0 {
                    let flipped = match rel {
                        Relation::Le => Relation::Ge,
                        Relation::Ge => Relation::Le,
                        Relation::Eq => Relation::Eq,
                    };
                    (r.iter().map(|a| -a).collect(), flipped, -b)
                } else {
                    (r.clone(), *rel, *b)
                }
            })
            .collect();
        let n_slack = rows.iter().filter(|(_, rel, _)| *rel != Relation::Eq).count();
        let n_art = rows.iter().filter(|(_, rel, _)| *rel != Relation::Le).count();
        let width = n + n_slack + n_art;
        let mut t = vec![vec![0.0; width + 1]; m];
        let mut basis = vec![0usize; m];
        let mut slack = n;
        let mut art = n + n_slack;
        for (i, (r, rel, b)) in rows.iter().enumerate() {
            t[i][..n].copy_from_slice(r);
            t[i][width] = *b;
            match rel {
                Relation::Le => {
                    t[i][slack] = 1.0;
                    basis[i] = slack;
                    slack += 1;
                }
                Relation::Ge => {
                    t[i][slack] = -1.0;
                    slack += 1;
                    t[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
                Relation::Eq => {
                    t[i][art] = 1.0;
                    basis[i] = art;
                    art += 1;
                }
            }
        }
        let art_start = n + n_slack;

        if n_art > 0 {
            let mut phase1 = vec![0.0; width];
            for c in phase1.iter_mut().skip(art_start) {
                *c = 1.0;
            }
            if pivot_loop(&mut t, &mut basis, &phase1, width, width)? == Pivot::Unbounded {
                return Err(Error::Solver("phase one unbounded".into()));
            }
            let infeasibility: f64 = basis
                .iter()
                .zip(&t)
                .filter(|(b, _)| **b >= art_start)
                .map(|(_, row)| row[width])
                .sum();
            let scale = 1.0 + rows.iter().map(|(_, _, b)| b.abs()).fold(0.0, f64::max);
            if infeasibility > 1e-8 * scale {
                return Ok(LpOutcome::Infeasible);
            }
            // Drive remaining artificials out of the basis where possible.
            for i in 0..m {
                if basis[i] >= art_start {
                    if let Some(j) = (0..art_start).find(|&j| t[i][j].abs() > 1e-9) {
                        pivot(&mut t, &mut basis, i, j, width);
                    }
                }
            }
        }

        let mut cost = vec![0.0; width];
        cost[..n].copy_from_slice(&self.objective);
        if pivot_loop(&mut t, &mut basis, &cost, width, art_start)? == Pivot::Unbounded {
            return Ok(LpOutcome::Unbounded);
        }
        let mut x = vec![0.0; n];
        for (i, &b) in basis.iter().enumerate() {
            if b < n {
                x[b] = t[i][width];
            }
        }
        let objective = x.iter().zip(&self.objective).map(|(a, c)| a * c).sum();
        Ok(LpOutcome::Optimal { objective, x })
    }
}

#[derive(PartialEq)]
enum Pivot {
    Optimal,
    Unbounded,
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, c: usize, width: usize) {
    let p = t[r][c];
    for v in t[r].iter_mut() {
        *v /= p;
    }
    let pivot_row = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r {
            let f = row[c];
            if f != 0.0 {
                for k in 0..=width {
                    row[k] -= f * pivot_row[k];
                }
            }
        }
    }
    basis[r] = c;
}

/// Primal simplex with Bland's rule over columns `< allowed`.
fn pivot_loop(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    width: usize,
    allowed: usize,
) -> Result<Pivot> {
    let m = t.len();
    let max_iter = 50_000 + 100 * (m + width);
    for _ in 0..max_iter {
        let entering = (0..allowed).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let reduced = cost[j] - (0..m).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>();
            reduced < -EPS
        });
        let Some(c) = entering else {
            return Ok(Pivot::Optimal);
        };
        let mut best: Option<(f64, usize)> = None;
        for i in 0..m {
            if t[i][c] > EPS {
                let ratio = t[i][width] / t[i][c];
                let better = match best {
                    None => true,
                    Some((r, bi)) => {
                        ratio < r - 1e-12 || (ratio <= r + 1e-12 && basis[i] < basis[bi])
                    }
                };
                if better {
                    best = Some((ratio, i));
                }
            }
        }
        let Some((_, r)) = best else {
            return Ok(Pivot::Unbounded);
        };
        pivot(t, basis, r, c, width);
    }
    Err(Error::Solver("dense simplex iteration limit reached".into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn optimum(lp: &DenseLp) -> (f64, Vec<f64>) {
        match lp.solve().unwrap() {
            LpOutcome::Optimal { objective, x } => (objective, x),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> 36 at (2, 6)
        let mut lp = DenseLp::new(vec![-3.0, -5.0]);
        lp.add_row(&[(0, 1.0)], Relation::Le, 4.0);
        lp.add_row(&[(1, 2.0)], Relation::Le, 12.0);
        lp.add_row(&[(0, 3.0), (1, 2.0)], Relation::Le, 18.0);
        let (obj, x) = optimum(&lp);
        assert!((obj + 36.0).abs() < 1e-9);
        assert!((x[0] - 2.0).abs() < 1e-9 && (x[1] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn equality_and_ge_rows() {
        // min x + 2y, x + y = 3, y >= 1 -> 4
        let mut lp = DenseLp::new(vec![1.0, 2.0]);
        lp.add_row(&[(0, 1.0), (1, 1.0)], Relation::Eq, 3.0);
        lp.add_row(&[(1, 1.0)], Relation::Ge, 1.0);
        assert!((optimum(&lp).0 - 4.0).abs() < 1e-9);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let mut lp = DenseLp::new(vec![1.0]);
        lp.add_row(&[(0, 1.0)], Relation::Le, 1.0);
        lp.add_row(&[(0, 1.0)], Relation::Ge, 2.0);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Infeasible);

        let mut lp = DenseLp::new(vec![-1.0, 0.0]);
        lp.add_row(&[(0, 1.0), (1, -1.0)], Relation::Le, 1.0);
        assert_eq!(lp.solve().unwrap(), LpOutcome::Unbounded);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // min x, -x <= -2 -> 2
        let mut lp = DenseLp::new(vec![1.0]);
        lp.add_row(&[(0, -1.0)], Relation::Le, -2.0);
        assert!((optimum(&lp).0 - 2.0).abs() < 1e-9);
    }
}
