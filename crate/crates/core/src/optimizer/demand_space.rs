//! Differentiated plans over per-type demands.
//!
//! Each type's price and demand are in one-to-one correspondence through
//! `r = U'(x) / (γ·x^(γ−1))`. In demand coordinates the payment
//! `x·U'(x)/γ` and the surplus `U(x) − x·U'(x)/γ` are concave and capacity
//! constraints are linear, so the objective is concave for every `ν ≥ 0`
//! and `β > 0`.

use nalgebra::{DMatrix, DVector};

use crate::demand::UtilityParams;
use crate::error::{Error, Result};
use crate::fairness::weighted_beta_fairness;
use crate::pricing::{Instance, PlanStructure};

use super::barrier::Barrier;
use super::ObjectiveSpec;

/// Fraction of the room above the demand floors used by the start point.
const START_LOAD: f64 = 0.5;

pub(crate) struct DemandModel {
    spec: ObjectiveSpec,
    counts: Vec<f64>,
    utilities: Vec<UtilityParams>,
    gamma: f64,
    /// Active constraint rows over types and their limits.
    rows: Vec<Vec<f64>>,
    limits: Vec<f64>,
    labels: Vec<String>,
    /// Demand below which a type earns no surplus: `e^(1/γ)` for log
    /// utility, zero otherwise.
    floors: Vec<f64>,
}

/// Payment and surplus with their first and second derivatives in `x`.
struct Terms {
    pay: [f64; 3],
    surplus: [f64; 3],
}

impl DemandModel {
    /// `None` when some type uses no constrained resource; its demand is
    /// then unbounded and the price-space solver handles it.
    pub fn new(instance: &Instance, structure: &PlanStructure, spec: ObjectiveSpec) -> Option<Self> {
        let active: Vec<usize> = (0..structure.rows.len())
            .filter(|&k| structure.rows[k].iter().any(|&v| v > 0.0))
            .collect();
        let n = instance.num_types();
        if (0..n).any(|j| active.iter().all(|&k| structure.rows[k][j] <= 0.0)) {
            return None;
        }
        let gamma = instance.discount();
        let utilities: Vec<UtilityParams> = instance.user_types().iter().map(|u| u.utility).collect();
        Some(Self {
            spec,
            counts: instance.user_types().iter().map(|u| u.count as f64).collect(),
            floors: utilities
                .iter()
                .map(|u| if u.is_log() { (1.0 / gamma).exp() } else { 0.0 })
                .collect(),
            utilities,
            gamma,
            rows: active.iter().map(|&k| structure.rows[k].clone()).collect(),
            limits: active.iter().map(|&k| structure.limits[k]).collect(),
            labels: active.iter().map(|&k| structure.row_labels[k].clone()).collect(),
        })
    }

    pub fn constraint_count(&self) -> usize {
        self.rows.len() + self.floors.len()
    }

    pub fn check_capacity(&self) -> Result<()> {
        for (limit, label) in self.limits.iter().zip(&self.labels) {
            if *limit <= 0.0 {
                return Err(Error::Infeasible(format!(
                    "`{label}` has capacity {limit} but positive requirements; no strictly feasible prices"
                )));
            }
        }
        Ok(())
    }

    fn load(&self, k: usize, x: &[f64]) -> f64 {
        self.rows[k].iter().zip(x).map(|(a, b)| a * b).sum()
    }

    /// Floors plus a common increment filling `START_LOAD` of the tightest
    /// remaining room.
    pub fn feasible_start(&self) -> Result<Vec<f64>> {
        let mut step = f64::INFINITY;
        for k in 0..self.rows.len() {
            let room = self.limits[k] - self.load(k, &self.floors);
            if !(room > 0.0) {
                return Err(Error::Infeasible(format!(
                    "`{}` cannot give every log-utility user positive surplus",
                    self.labels[k]
                )));
            }
            step = step.min(START_LOAD * room / self.rows[k].iter().sum::<f64>());
        }
        Ok(self.floors.iter().map(|f| f + step).collect())
    }

    fn terms(&self, j: usize, x: f64) -> Terms {
        let u = &self.utilities[j];
        let (alpha, g) = (u.alpha(), self.gamma);
        let (d1, d2) = (u.marginal(x), u.curvature(x));
        let pay = [x * d1 / g, (1.0 - alpha) * d1 / g, (1.0 - alpha) * d2 / g];
        // U − x·U'/γ, written to avoid cancellation when α < 1
        let level = if u.is_log() {
            u.value(x) - pay[0]
        } else {
            pay[0] * (g / (1.0 - alpha) - 1.0)
        };
        let kappa = (g + alpha - 1.0) / g;
        Terms {
            pay,
            surplus: [level, kappa * d1, kappa * d2],
        }
    }

    fn in_domain(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.floors).all(|(v, f)| v > f && v.is_finite())
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let (mut revenue, mut surplus) = (0.0, Vec::with_capacity(x.len()));
        for (j, &v) in x.iter().enumerate() {
            let t = self.terms(j, v);
            revenue += self.counts[j] * t.pay[0];
            surplus.push(t.surplus[0]);
        }
        self.spec.nu * revenue + weighted_beta_fairness(&surplus, &self.counts, self.spec.beta)
    }

    /// Per-type prices `r_j = U'(x_j) / (γ·x_j^(γ−1))`.
    pub fn prices(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.utilities)
            .map(|(&v, u)| u.marginal(v) / (self.gamma * v.powf(self.gamma - 1.0)))
            .collect()
    }

    /// First and second derivative of type `j`'s objective contribution.
    fn phi_derivatives(&self, j: usize, x: f64) -> (f64, f64) {
        let (nu, beta, n) = (self.spec.nu, self.spec.beta, self.counts[j]);
        let t = self.terms(j, x);
        let [s, s1, s2] = t.surplus;
        let s_neg_beta = (-beta * s.ln()).exp();
        let d1 = n * (nu * t.pay[1] + s_neg_beta * s1);
        let d2 = n * (nu * t.pay[2] - beta * s_neg_beta / s * s1 * s1 + s_neg_beta * s2);
        (d1, d2)
    }

    fn slacks(&self, x: &[f64]) -> Option<Vec<f64>> {
        let slacks: Vec<f64> = (0..self.rows.len()).map(|k| self.limits[k] - self.load(k, x)).collect();
        slacks.iter().all(|&s| s > 0.0).then_some(slacks)
    }
}

impl Barrier for DemandModel {
    fn value(&self, x: &[f64], tau: f64) -> f64 {
        if !self.in_domain(x) {
            return f64::INFINITY;
        }
        let Some(slacks) = self.slacks(x) else {
            return f64::INFINITY;
        };
        let floors: f64 = x.iter().zip(&self.floors).map(|(v, f)| (v - f).ln()).sum();
        -tau * self.objective(x) - slacks.iter().map(|s| s.ln()).sum::<f64>() - floors
    }

    fn gradient(&self, x: &[f64], tau: f64) -> Option<DVector<f64>> {
        if !self.in_domain(x) {
            return None;
        }
        let slacks = self.slacks(x)?;
        Some(DVector::from_fn(x.len(), |j, _| {
            let rows: f64 = self.rows.iter().zip(&slacks).map(|(row, s)| row[j] / s).sum();
            -tau * self.phi_derivatives(j, x[j]).0 + rows - 1.0 / (x[j] - self.floors[j])
        }))
    }

    fn hessian(&self, x: &[f64], tau: f64) -> Option<DMatrix<f64>> {
        if !self.in_domain(x) {
            return None;
        }
        let slacks = self.slacks(x)?;
        let n = x.len();
        let mut h = DMatrix::zeros(n, n);
        for (row, s) in self.rows.iter().zip(&slacks) {
            let a = DVector::from_row_slice(row);
            h.ger(1.0 / (s * s), &a, &a, 1.0);
        }
        for j in 0..n {
            let gap = x[j] - self.floors[j];
            h[(j, j)] += -tau * self.phi_derivatives(j, x[j]).1 + 1.0 / (gap * gap);
        }
        Some(h)
    }
}
