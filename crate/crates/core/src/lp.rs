//! Dense two-phase simplex for small linear programs.
//!
//! Solves `min cᵀx` subject to `a_k·x {≤,=,≥} b_k` and `x ≥ 0`. Pivoting uses
//! Bland's rule, so it terminates on degenerate problems. Once a basis is
//! found, primal values and duals are recomputed from the original columns
//! by LU to remove accumulated pivoting error.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const FEASIBILITY_EPS: f64 = 1e-9;
const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coefficients: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coefficients: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self {
            coefficients,
            relation,
            rhs,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    /// Primal values; meaningful when optimal.
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per constraint with `c − Aᵀy ≥ 0` at an optimum, so
    /// `≤` rows carry `y ≤ 0` and `≥` rows `y ≥ 0`. For infeasible programs
    /// these are the phase-one multipliers, a Farkas-style certificate.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    pivots: usize,
}

enum PhaseEnd {
    Optimal,
    Unbounded,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        *self.rows[i].last().expect("rhs column")
    }

    fn pivot(&mut self, r: usize, e: usize) {
        let p = self.rows[r][e];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[e];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[r] = e;
        self.pivots += 1;
    }

    fn run(&mut self, cost: &[f64], allowed: &[bool]) -> Result<PhaseEnd> {
        let cols = cost.len();
        let scale = cost.iter().fold(1.0f64, |m, c| m.max(c.abs()));
        loop {
            if self.pivots > MAX_PIVOTS {
                return Err(Error::Schedule(format!("simplex exceeded {MAX_PIVOTS} pivots")));
            }
            let mut entering = None;
            for j in 0..cols {
                if !allowed[j] || self.basis.contains(&j) {
                    continue;
                }
                let reduced = cost[j]
                    - self
                        .rows
                        .iter()
                        .zip(&self.basis)
                        .map(|(row, &b)| cost[b] * row[j])
                        .sum::<f64>();
                if reduced < -PIVOT_EPS * scale {
                    entering = Some(j);
                    break;
                }
            }
            let Some(e) = entering else {
                return Ok(PhaseEnd::Optimal);
            };
            let mut leaving: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                if row[e] > PIVOT_EPS {
                    let ratio = self.rhs(i) / row[e];
                    let better = match leaving {
                        None => true,
                        Some((k, best)) => {
                            ratio < best - 1e-15 * best.abs()
                                || (ratio <= best + 1e-15 * best.abs() && self.basis[i] < self.basis[k])
                        }
                    };
                    if better {
                        leaving = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leaving else {
                return Ok(PhaseEnd::Unbounded);
            };
            self.pivot(r, e);
        }
    }
}

pub fn solve(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.objective.len();
    let m = lp.constraints.len();
    for (k, c) in lp.constraints.iter().enumerate() {
        if c.coefficients.len() != n {
            return Err(Error::Dimension(format!(
                "constraint {k} has {} coefficients for {n} variables",
                c.coefficients.len()
            )));
        }
    }
    if m == 0 {
        let unbounded = lp.objective.iter().any(|&c| c < 0.0);
        return Ok(LpSolution {
            status: if unbounded {
                LpStatus::Unbounded
            } else {
                LpStatus::Optimal
            },
            x: vec![0.0; n],
            objective: if unbounded { f64::NEG_INFINITY } else { 0.0 },
            duals: Vec::new(),
            pivots: 0,
        });
    }
    // orient rows so every right-hand side is nonnegative
    let mut flip = vec![1.0; m];
    let mut relations = Vec::with_capacity(m);
    let mut b = Vec::with_capacity(m);
    for (k, c) in lp.constraints.iter().enumerate() {
        let (rel, rhs) = if c.rhs < 0.0 {
            flip[k] = -1.0;
            let rel = match c.relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
            (rel, -c.rhs)
        } else {
            (c.relation, c.rhs)
        };
        relations.push(rel);
        b.push(rhs);
    }

    // columns: structural, one slack/surplus per inequality, one artificial
    // per ≥ or = row
    let mut columns: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..m).map(|k| flip[k] * lp.constraints[k].coefficients[j]).collect())
        .collect();
    let mut basis = vec![usize::MAX; m];
    for k in 0..m {
        let sign = match relations[k] {
            Relation::Le => 1.0,
            Relation::Ge => -1.0,
            Relation::Eq => continue,
        };
        let mut col = vec![0.0; m];
        col[k] = sign;
        if sign > 0.0 {
            basis[k] = columns.len();
        }
        columns.push(col);
    }
    let first_artificial = columns.len();
    for k in 0..m {
        if basis[k] == usize::MAX {
            let mut col = vec![0.0; m];
            col[k] = 1.0;
            basis[k] = columns.len();
            columns.push(col);
        }
    }
    let total = columns.len();
    let rows = (0..m)
        .map(|k| {
            let mut row: Vec<f64> = columns.iter().map(|c| c[k]).collect();
            row.push(b[k]);
            row
        })
        .collect();
    let mut tab = Tableau { rows, basis, pivots: 0 };

    let phase_one: Vec<f64> = (0..total)
        .map(|j| if j >= first_artificial { 1.0 } else { 0.0 })
        .collect();
    let all = vec![true; total];
    tab.run(&phase_one, &all)?;
    let infeasibility: f64 = tab
        .basis
        .iter()
        .enumerate()
        .filter(|(_, &bv)| bv >= first_artificial)
        .map(|(i, _)| tab.rhs(i))
        .sum();
    let b_scale = b.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    if infeasibility > FEASIBILITY_EPS * b_scale {
        let duals = basis_duals(&columns, &tab.basis, &phase_one, &flip, &(0..m).collect::<Vec<_>>(), m)
            .unwrap_or_else(|| vec![0.0; m]);
        return Ok(LpSolution {
            status: LpStatus::Infeasible,
            x: vec![0.0; n],
            objective: f64::NAN,
            duals,
            pivots: tab.pivots,
        });
    }

    // drive zero-level artificials out of the basis; drop redundant rows
    let mut live_rows: Vec<usize> = (0..m).collect();
    let mut i = 0;
    while i < tab.rows.len() {
        if tab.basis[i] >= first_artificial {
            let replacement = (0..first_artificial).find(|&j| tab.rows[i][j].abs() > 1e-9 && !tab.basis.contains(&j));
            match replacement {
                Some(j) => tab.pivot(i, j),
                None => {
                    tab.rows.remove(i);
                    tab.basis.remove(i);
                    live_rows.remove(i);
                    continue;
                }
            }
        }
        i += 1;
    }

    let mut cost = vec![0.0; total];
    cost[..n].copy_from_slice(&lp.objective);
    let allowed: Vec<bool> = (0..total).map(|j| j < first_artificial).collect();
    if let PhaseEnd::Unbounded = tab.run(&cost, &allowed)? {
        return Ok(LpSolution {
            status: LpStatus::Unbounded,
            x: vec![0.0; n],
            objective: f64::NEG_INFINITY,
            duals: vec![0.0; m],
            pivots: tab.pivots,
        });
    }

    // polish: x_B = B⁻¹ b on the original columns
    let k = live_rows.len();
    let basis_matrix = DMatrix::from_fn(k, k, |r, c| columns[tab.basis[c]][live_rows[r]]);
    let rhs = DVector::from_iterator(k, live_rows.iter().map(|&r| b[r]));
    let values = (k > 0)
        .then(|| basis_matrix.lu().solve(&rhs))
        .flatten()
        .unwrap_or_else(|| DVector::from_iterator(k, (0..k).map(|i| tab.rhs(i))));
    let mut x = vec![0.0; n];
    for (pos, &var) in tab.basis.iter().enumerate() {
        if var < n {
            x[var] = values[pos].max(0.0);
        }
    }
    let duals = basis_duals(&columns, &tab.basis, &cost, &flip, &live_rows, m).unwrap_or_else(|| vec![0.0; m]);
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution {
        status: LpStatus::Optimal,
        x,
        objective,
        duals,
        pivots: tab.pivots,
    })
}

/// Solves `Bᵀ y = c_B` and maps `y` back to the caller's row orientation.
fn basis_duals(
    columns: &[Vec<f64>],
    basis: &[usize],
    cost: &[f64],
    flip: &[f64],
    live_rows: &[usize],
    m: usize,
) -> Option<Vec<f64>> {
    let k = live_rows.len();
    if k == 0 {
        return Some(vec![0.0; m]);
    }
    let bt = DMatrix::from_fn(k, k, |r, c| columns[basis[r]][live_rows[c]]);
    let cb = DVector::from_iterator(k, basis.iter().map(|&v| cost[v]));
    let y = bt.lu().solve(&cb)?;
    let mut duals = vec![0.0; m];
    for (pos, &row) in live_rows.iter().enumerate() {
        duals[row] = flip[row] * y[pos];
    }
    Some(duals)
}
