use serde::Serialize;

use crate::error::Result;
use crate::fairness::check_beta;
use crate::pricing::{evaluate, Instance, PricingPlan};

use super::outcome_fairness;

/// Relative slack tolerated before a bound is declared violated.
const BOUND_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub holds: bool,
    /// `lhs − rhs`.
    pub slack: f64,
    pub lhs: f64,
    pub rhs: f64,
}

/// Revenue/fairness tradeoff bound at a plan.
///
/// For `β > 1`: `ρ ≥ (F_β·(1−β))^(1/(1−β)) · Σ_j n_j·(1−α_j)/(γ+α_j−1)`.
///
/// For `β < 1`: `F_β ≥ ρ^(1−β)/(1−β) · (γ/(1−α_min) − 1)^(1−β)`, using the
/// smallest `α` over types.
pub fn tradeoff_bound_check(instance: &Instance, plan: &PricingPlan, beta: f64) -> Result<BoundCheck> {
    check_beta(beta)?;
    let outcome = evaluate(instance, plan)?;
    let fairness = outcome_fairness(instance, &outcome, beta)?;
    let revenue = outcome.revenue;
    let gamma = instance.discount();
    let (lhs, rhs) = if beta > 1.0 {
        let weight: f64 = instance
            .user_types()
            .iter()
            .map(|u| {
                let a = u.utility.alpha();
                u.count as f64 * (1.0 - a) / (gamma + a - 1.0)
            })
            .sum();
        (revenue, (fairness * (1.0 - beta)).powf(1.0 / (1.0 - beta)) * weight)
    } else {
        let alpha = instance
            .user_types()
            .iter()
            .map(|u| u.utility.alpha())
            .fold(f64::INFINITY, f64::min);
        let factor = if alpha < 1.0 {
            gamma / (1.0 - alpha) - 1.0
        } else {
            f64::INFINITY
        };
        (
            fairness,
            revenue.powf(1.0 - beta) / (1.0 - beta) * factor.powf(1.0 - beta),
        )
    };
    let slack = lhs - rhs;
    Ok(BoundCheck {
        holds: slack >= -BOUND_TOL * lhs.abs().max(rhs.abs()).max(1.0),
        slack,
        lhs,
        rhs,
    })
}
