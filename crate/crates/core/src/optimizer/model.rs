//! Objective, barrier function and their derivatives over a plan's price
//! vector. Every plan has linear per-job costs `r_j = a_j·p`, so derivatives
//! reduce to scalar derivatives in `r_j` times outer products of `a_j`.

use nalgebra::{DMatrix, DVector};

use crate::demand::{CostResponse, UtilityParams};
use crate::error::{Error, Result};
use crate::fairness::weighted_beta_fairness;
use crate::pricing::{Instance, PlanStructure};

use super::barrier::Barrier;
use super::ObjectiveSpec;

#[derive(Debug, Clone)]
pub(crate) struct PriceModel {
    pub structure: PlanStructure,
    pub spec: ObjectiveSpec,
    counts: Vec<f64>,
    utilities: Vec<UtilityParams>,
    gamma: f64,
    /// Constraint rows with at least one positive coefficient.
    active_rows: Vec<usize>,
}

impl PriceModel {
    pub fn new(instance: &Instance, structure: PlanStructure, spec: ObjectiveSpec) -> Self {
        let active_rows = structure
            .rows
            .iter()
            .enumerate()
            .filter(|(_, row)| row.iter().any(|&v| v > 0.0))
            .map(|(k, _)| k)
            .collect();
        Self {
            counts: instance.user_types().iter().map(|u| u.count as f64).collect(),
            utilities: instance.user_types().iter().map(|u| u.utility).collect(),
            gamma: instance.discount(),
            structure,
            spec,
            active_rows,
        }
    }

    pub fn dimension(&self) -> usize {
        self.structure.dimension()
    }

    /// Inequalities seen by the barrier: active capacity rows plus price
    /// positivity.
    pub fn constraint_count(&self) -> usize {
        self.active_rows.len() + self.dimension()
    }

    /// Fails when an active row has no room at all.
    pub fn check_capacity(&self) -> Result<()> {
        for &k in &self.active_rows {
            if self.structure.limits[k] <= 0.0 {
                return Err(Error::Infeasible(format!(
                    "`{}` has capacity {} but positive requirements; no strictly feasible prices",
                    self.structure.row_labels[k], self.structure.limits[k]
                )));
            }
        }
        Ok(())
    }

    fn cost(&self, j: usize, p: &[f64]) -> f64 {
        self.structure.cost_coefficients[j]
            .iter()
            .zip(p)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Closed-form responses, or `None` when some type has nonpositive cost
    /// or drops out of the market.
    pub fn responses(&self, p: &[f64]) -> Option<Vec<CostResponse>> {
        let mut out = Vec::with_capacity(self.utilities.len());
        for (j, u) in self.utilities.iter().enumerate() {
            let r = self.cost(j, p);
            if !(r > 0.0 && r.is_finite()) {
                return None;
            }
            let resp = CostResponse::at(u, r, self.gamma);
            if !resp.participates || !(resp.surplus > 0.0) {
                return None;
            }
            out.push(resp);
        }
        Some(out)
    }

    pub fn objective_of(&self, resp: &[CostResponse]) -> f64 {
        let revenue: f64 = resp.iter().zip(&self.counts).map(|(r, n)| n * r.payment).sum();
        let surplus: Vec<f64> = resp.iter().map(|r| r.surplus).collect();
        self.spec.nu * revenue + weighted_beta_fairness(&surplus, &self.counts, self.spec.beta)
    }

    pub fn objective(&self, p: &[f64]) -> Option<f64> {
        self.responses(p).map(|r| self.objective_of(&r))
    }

    /// Constraint row loads `Σ_j rows[k][j]·x_j`.
    pub fn loads(&self, resp: &[CostResponse]) -> Vec<f64> {
        self.structure
            .rows
            .iter()
            .map(|row| row.iter().zip(resp).map(|(c, r)| c * r.jobs).sum())
            .collect()
    }

    /// Largest load-to-limit ratio over active rows.
    pub fn max_load_ratio(&self, resp: &[CostResponse]) -> f64 {
        let loads = self.loads(resp);
        self.active_rows
            .iter()
            .map(|&k| loads[k] / self.structure.limits[k])
            .fold(0.0, f64::max)
    }

    pub fn feasible(&self, resp: &[CostResponse], tol: f64) -> bool {
        let loads = self.loads(resp);
        self.active_rows
            .iter()
            .all(|&k| loads[k] <= self.structure.limits[k] + tol)
    }

    fn a(&self, j: usize) -> DVector<f64> {
        DVector::from_row_slice(&self.structure.cost_coefficients[j])
    }

    /// `dφ_j/dr_j` and `d²φ_j/dr_j²` for the per-type objective contribution
    /// `φ_j = n_j·(ν·pay_j + Ū_j^(1−β)/(1−β))`.
    fn phi_derivatives(&self, j: usize, r: &CostResponse) -> (f64, f64) {
        let (nu, beta, n) = (self.spec.nu, self.spec.beta, self.counts[j]);
        let u_neg_beta = (-beta * r.surplus.ln()).exp();
        let d1 = n * (nu * r.d_payment + u_neg_beta * r.d_surplus);
        let d2 = n
            * (nu * r.d2_payment - beta * u_neg_beta / r.surplus * r.d_surplus * r.d_surplus
                + u_neg_beta * r.d2_surplus);
        (d1, d2)
    }

    pub fn objective_gradient(&self, resp: &[CostResponse]) -> DVector<f64> {
        let mut g = DVector::zeros(self.dimension());
        for (j, r) in resp.iter().enumerate() {
            let (d1, _) = self.phi_derivatives(j, r);
            g.axpy(d1, &self.a(j), 1.0);
        }
        g
    }

    pub fn objective_hessian(&self, resp: &[CostResponse]) -> DMatrix<f64> {
        let d = self.dimension();
        let mut h = DMatrix::zeros(d, d);
        for (j, r) in resp.iter().enumerate() {
            let (_, d2) = self.phi_derivatives(j, r);
            let a = self.a(j);
            h.ger(d2, &a, &a, 1.0);
        }
        h
    }

    /// `−τ·O(p) − Σ ln(limit − load) − Σ ln p_k`, or `+∞` outside the domain.
    pub fn barrier(&self, p: &[f64], tau: f64) -> f64 {
        if p.iter().any(|&v| !(v > 0.0)) {
            return f64::INFINITY;
        }
        let Some(resp) = self.responses(p) else {
            return f64::INFINITY;
        };
        let loads = self.loads(&resp);
        let mut value = -tau * self.objective_of(&resp);
        for &k in &self.active_rows {
            let slack = self.structure.limits[k] - loads[k];
            if !(slack > 0.0) {
                return f64::INFINITY;
            }
            value -= slack.ln();
        }
        value - p.iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn barrier_gradient(&self, p: &[f64], tau: f64) -> Option<DVector<f64>> {
        let resp = self.responses(p)?;
        let loads = self.loads(&resp);
        let mut g = self.objective_gradient(&resp) * -tau;
        for &k in &self.active_rows {
            let slack = self.structure.limits[k] - loads[k];
            let grad_load = self.load_gradient(k, &resp);
            g.axpy(1.0 / slack, &grad_load, 1.0);
        }
        for (gk, pk) in g.iter_mut().zip(p) {
            *gk -= 1.0 / pk;
        }
        Some(g)
    }

    fn load_gradient(&self, k: usize, resp: &[CostResponse]) -> DVector<f64> {
        let mut g = DVector::zeros(self.dimension());
        for (j, r) in resp.iter().enumerate() {
            let coef = self.structure.rows[k][j];
            if coef != 0.0 {
                g.axpy(coef * r.d_jobs, &self.a(j), 1.0);
            }
        }
        g
    }

    pub fn barrier_hessian(&self, p: &[f64], tau: f64) -> Option<DMatrix<f64>> {
        let resp = self.responses(p)?;
        let loads = self.loads(&resp);
        let mut h = self.objective_hessian(&resp) * -tau;
        for &k in &self.active_rows {
            let slack = self.structure.limits[k] - loads[k];
            let grad_load = self.load_gradient(k, &resp);
            h.ger(1.0 / (slack * slack), &grad_load, &grad_load, 1.0);
            for (j, r) in resp.iter().enumerate() {
                let coef = self.structure.rows[k][j];
                if coef != 0.0 {
                    let a = self.a(j);
                    h.ger(coef * r.d2_jobs / slack, &a, &a, 1.0);
                }
            }
        }
        for (k, pk) in p.iter().enumerate() {
            h[(k, k)] += 1.0 / (pk * pk);
        }
        Some(h)
    }
}

impl Barrier for PriceModel {
    fn value(&self, x: &[f64], tau: f64) -> f64 {
        self.barrier(x, tau)
    }

    fn gradient(&self, x: &[f64], tau: f64) -> Option<DVector<f64>> {
        self.barrier_gradient(x, tau)
    }

    fn hessian(&self, x: &[f64], tau: f64) -> Option<DMatrix<f64>> {
        self.barrier_hessian(x, tau)
    }
}
