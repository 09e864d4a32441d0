//! Price optimization for the weighted objective `ν·ρ(p) + F_β(p)`.
//!
//! [`barrier_optimize`] is the main solver. [`grid_oracle`] is an exhaustive
//! reference for low-dimensional plans, [`bundled_price_bisection`] solves
//! bundled plans directly, and [`tradeoff_bound_check`] tests the
//! revenue/fairness lower bounds at any plan.

mod barrier;
mod bounds;
mod bundled;
mod demand_space;
mod grid;
pub(crate) mod model;

pub use barrier::{barrier_optimize, barrier_optimize_with, discount_line_search, DiscountSearch, DiscountTrial};
pub use bounds::{tradeoff_bound_check, BoundCheck};
pub use bundled::bundled_price_bisection;
pub use grid::{grid_oracle, grid_oracle_with, GridSpec};

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fairness::{beta_fairness, check_beta, UtilityVector};
use crate::pricing::{evaluate, Instance, Outcome, PricingPlan};

/// Revenue weight `ν` and fairness parameter `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectiveSpec {
    pub nu: f64,
    pub beta: f64,
}

impl ObjectiveSpec {
    pub fn new(nu: f64, beta: f64) -> Result<Self> {
        if !(nu >= 0.0 && nu.is_finite()) {
            return Err(invalid("nu", format!("must be finite and nonnegative, got {nu}")));
        }
        check_beta(beta)?;
        Ok(Self { nu, beta })
    }
}

/// How the Newton step obtains second derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HessianMode {
    Analytic,
    /// Central differences of the analytic gradient.
    FiniteDifference,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolverConfig {
    /// Stop once `m / (t·max(1, |objective|)) ≤ tolerance`.
    pub tolerance: f64,
    /// Barrier weight growth per outer iteration; must exceed 1.
    pub barrier_growth: f64,
    /// First barrier weight, divided by `max(1, |objective|)` at the start.
    pub initial_barrier: f64,
    pub max_newton_iterations: usize,
    pub max_outer_iterations: usize,
    /// Half the squared Newton decrement below which a centering step stops.
    pub newton_tolerance: f64,
    /// Relative step for finite-difference Hessians.
    pub fd_step: f64,
    pub hessian: HessianMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            barrier_growth: 20.0,
            initial_barrier: 1.0,
            max_newton_iterations: 100,
            max_outer_iterations: 100,
            newton_tolerance: 1e-10,
            fd_step: 1e-6,
            hessian: HessianMode::Analytic,
        }
    }
}

impl SolverConfig {
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("must be positive, got {v}")))
            }
        };
        positive("tolerance", self.tolerance)?;
        positive("initial_barrier", self.initial_barrier)?;
        positive("newton_tolerance", self.newton_tolerance)?;
        positive("fd_step", self.fd_step)?;
        if !(self.barrier_growth > 1.0 && self.barrier_growth.is_finite()) {
            return Err(invalid(
                "barrier_growth",
                format!("must exceed 1, got {}", self.barrier_growth),
            ));
        }
        if self.max_newton_iterations == 0 || self.max_outer_iterations == 0 {
            return Err(invalid("max_iterations", "must be at least 1"));
        }
        Ok(())
    }
}

/// Optimized plan with its evaluation and solver diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveResult {
    pub plan: PricingPlan,
    pub outcome: Outcome,
    pub objective: f64,
    pub revenue: f64,
    pub fairness: f64,
    /// Newton steps for the barrier solver, evaluations for the grid oracle.
    pub iterations: usize,
    pub converged: bool,
    /// Relative barrier gap at exit; NaN for the grid oracle.
    pub gap: f64,
    pub diagnostics: Vec<String>,
}

/// `ν·ρ + F_β` of a feasible plan whose users all earn positive surplus.
pub fn objective(instance: &Instance, plan: &PricingPlan, spec: &ObjectiveSpec) -> Result<f64> {
    let outcome = evaluate(instance, plan)?;
    let fairness = outcome_fairness(instance, &outcome, spec.beta)?;
    Ok(spec.nu * outcome.revenue + fairness)
}

/// β-fairness of an outcome, rejecting infeasible outcomes and users
/// without surplus.
pub(crate) fn outcome_fairness(instance: &Instance, outcome: &Outcome, beta: f64) -> Result<f64> {
    if let Some(v) = outcome.violation(instance) {
        return Err(Error::Infeasible(v));
    }
    if let Some(j) = outcome.net_utility.iter().position(|&u| !(u > 0.0)) {
        return Err(Error::ZeroUtility(instance.user_types()[j].label.clone()));
    }
    beta_fairness(&UtilityVector::new(outcome.expanded_utilities(instance))?, beta)
}

pub(crate) fn result_from(
    instance: &Instance,
    plan: PricingPlan,
    spec: &ObjectiveSpec,
    iterations: usize,
    converged: bool,
    gap: f64,
    diagnostics: Vec<String>,
) -> Result<SolveResult> {
    let outcome = evaluate(instance, &plan)?;
    let fairness = outcome_fairness(instance, &outcome, spec.beta)?;
    Ok(SolveResult {
        objective: spec.nu * outcome.revenue + fairness,
        revenue: outcome.revenue,
        fairness,
        plan,
        outcome,
        iterations,
        converged,
        gap,
        diagnostics,
    })
}

/// Largest revenue weight for which the objective is certified concave in
/// the prices. Zero when some type has `β(1−α_j) ≤ γ`, including all `β < 1`.
pub fn concavity_weight_bound(instance: &Instance, beta: f64, gamma: f64) -> f64 {
    let caps = instance.resources().capacities();
    let mut bound = f64::INFINITY;
    for user in instance.user_types() {
        let alpha = user.utility.alpha();
        let curvature = beta * (1.0 - alpha) - gamma;
        if !(curvature > 0.0) {
            return 0.0;
        }
        let max_ratio = caps
            .iter()
            .zip(&user.requirements)
            .filter(|(_, &r)| r > 0.0)
            .map(|(c, r)| c / r)
            .fold(0.0, f64::max);
        let value = ((gamma + alpha - 1.0) / (1.0 - alpha)).powf(1.0 - beta)
            * gamma.powf(beta * gamma / (alpha + gamma - 1.0) - 1.0)
            * curvature
            * max_ratio.powf(beta * (alpha - 1.0) / gamma);
        bound = bound.min(value);
    }
    bound
}
