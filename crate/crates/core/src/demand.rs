//! User demand under isoelastic utilities and volume discounts.
//!
//! A user facing a per-job cost `r` under volume discount `γ` is billed
//! `r·x^γ` for `x` jobs and submits the number of jobs maximizing
//! `U(x) − r·x^γ`. With the isoelastic family
//!
//! ```text
//! U(x) = c·x^(1−α)/(1−α)   α ∈ (0, 1)
//! U(x) = c·ln x            α = 1
//! ```
//!
//! the first-order condition `U'(x) = r·γ·x^(γ−1)` has the closed-form root
//! `x* = (γ·r/c)^(1/(1−α−γ))`, which is a maximum whenever `γ > 1 − α`.

use crate::error::{invalid, Error, Result};
use serde::{Deserialize, Serialize};

/// Parameters of an isoelastic utility function.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilityParams {
    alpha: f64,
    c: f64,
}

impl UtilityParams {
    /// `alpha ∈ (0, 1]` controls concavity, `c > 0` scales the utility level.
    pub fn new(alpha: f64, c: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(invalid("alpha", format!("must lie in (0, 1], got {alpha}")));
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(invalid("c", format!("must be positive and finite, got {c}")));
        }
        Ok(Self { alpha, c })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Log utility (`α = 1`).
    pub fn is_log(&self) -> bool {
        self.alpha == 1.0
    }

    /// `U(x)`, with `U(0) = 0`.
    pub fn value(&self, jobs: f64) -> f64 {
        if jobs == 0.0 {
            return 0.0;
        }
        if self.is_log() {
            self.c * jobs.ln()
        } else {
            self.c * jobs.powf(1.0 - self.alpha) / (1.0 - self.alpha)
        }
    }

    /// `U'(x) = c·x^(−α)`.
    pub fn marginal(&self, jobs: f64) -> f64 {
        self.c * jobs.powf(-self.alpha)
    }

    /// `U''(x) = −α·c·x^(−α−1)`.
    pub fn curvature(&self, jobs: f64) -> f64 {
        -self.alpha * self.c * jobs.powf(-self.alpha - 1.0)
    }
}

/// Checks that the discount is in `(0, 1]` and deep enough for the demand
/// problem to have an interior maximum (`γ > 1 − α`).
pub fn check_discount(utility: &UtilityParams, discount: f64) -> Result<()> {
    if !(discount > 0.0 && discount <= 1.0) {
        return Err(invalid("gamma", format!("must lie in (0, 1], got {discount}")));
    }
    let bound = 1.0 - utility.alpha;
    if discount <= bound {
        return Err(Error::DiscountTooDeep {
            gamma: discount,
            alpha: utility.alpha,
            bound,
        });
    }
    Ok(())
}

fn check_cost(per_job_cost: f64) -> Result<()> {
    if per_job_cost > 0.0 && per_job_cost.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveCost(per_job_cost))
    }
}

/// Stationary point of `U(x) − r·x^γ`.
///
/// For log utility this is the interior root even when the resulting surplus
/// is negative; see [`respond`] for the participation decision.
pub fn optimal_demand(utility: &UtilityParams, per_job_cost: f64, discount: f64) -> Result<f64> {
    check_discount(utility, discount)?;
    check_cost(per_job_cost)?;
    Ok(closed_form(utility, per_job_cost, discount))
}

fn closed_form(utility: &UtilityParams, r: f64, gamma: f64) -> f64 {
    let k = 1.0 - utility.alpha - gamma;
    (gamma * r / utility.c).powf(1.0 / k)
}

/// `dx*/dr`, always strictly negative when `γ > 1 − α`.
pub fn demand_sensitivity(utility: &UtilityParams, per_job_cost: f64, discount: f64) -> Result<f64> {
    let x = optimal_demand(utility, per_job_cost, discount)?;
    let gamma = discount;
    let numerator = gamma * x.powf(gamma - 1.0);
    let denominator = utility.curvature(x) + gamma * (1.0 - gamma) * x.powf(gamma - 2.0) * per_job_cost;
    Ok(numerator / denominator)
}

/// Net utility `U(x*) − r·(x*)^γ` of a utility-maximizing user, floored at the
/// zero surplus of not participating.
pub fn net_utility(utility: &UtilityParams, per_job_cost: f64, discount: f64) -> Result<f64> {
    Ok(respond(utility, per_job_cost, discount)?.net_utility)
}

/// A user's response to a per-job cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DemandPoint {
    pub jobs: f64,
    pub per_job_cost: f64,
    pub discount: f64,
    pub net_utility: f64,
}

/// Demand and surplus at a per-job cost.
///
/// Isoelastic users with `α < 1` always earn positive surplus at their
/// optimum. Log-utility users can face a negative interior surplus; they then
/// submit no jobs and keep `U(0) = 0`.
pub fn respond(utility: &UtilityParams, per_job_cost: f64, discount: f64) -> Result<DemandPoint> {
    let jobs = optimal_demand(utility, per_job_cost, discount)?;
    let surplus = utility.value(jobs) - per_job_cost * jobs.powf(discount);
    let (jobs, net_utility) = if surplus > 0.0 { (jobs, surplus) } else { (0.0, 0.0) };
    Ok(DemandPoint {
        jobs,
        per_job_cost,
        discount,
        net_utility,
    })
}

/// Demand, payment and surplus together with their first and second
/// derivatives in the per-job cost. Used by the price optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostResponse {
    pub jobs: f64,
    pub d_jobs: f64,
    pub d2_jobs: f64,
    pub payment: f64,
    pub d_payment: f64,
    pub d2_payment: f64,
    pub surplus: f64,
    pub d_surplus: f64,
    pub d2_surplus: f64,
    pub participates: bool,
}

impl CostResponse {
    /// Evaluates the closed forms. Preconditions are the caller's
    /// responsibility (validated instance, `r > 0`).
    pub fn at(utility: &UtilityParams, r: f64, gamma: f64) -> Self {
        let k = 1.0 - utility.alpha - gamma;
        let x = closed_form(utility, r, gamma);
        let x_gamma = x.powf(gamma);
        let payment = r * x_gamma;
        let surplus = utility.value(x) - payment;
        if !(surplus > 0.0) || !x.is_finite() {
            return Self {
                jobs: 0.0,
                d_jobs: 0.0,
                d2_jobs: 0.0,
                payment: 0.0,
                d_payment: 0.0,
                d2_payment: 0.0,
                surplus: 0.0,
                d_surplus: 0.0,
                d2_surplus: 0.0,
                participates: false,
            };
        }
        let elasticity = (1.0 - utility.alpha) / k;
        Self {
            jobs: x,
            d_jobs: x / (k * r),
            d2_jobs: x * (1.0 / k) * (1.0 / k - 1.0) / (r * r),
            payment,
            d_payment: elasticity * x_gamma,
            d2_payment: elasticity * gamma * x_gamma / (k * r),
            surplus,
            // envelope theorem: dŪ/dr = −x^γ
            d_surplus: -x_gamma,
            d2_surplus: -gamma * x_gamma / (k * r),
            participates: true,
        }
    }
}

const BRACKET_LO: f64 = 1e-12;
const BRACKET_HI: f64 = 1e12;
const MAX_BISECTIONS: usize = 200;

/// Bisection on `U'(x) = r·γ·x^(γ−1)` over `[1e-12, 1e12]` for an arbitrary
/// marginal utility.
///
/// The bracket is scanned on a logarithmic grid first; inputs with no sign
/// change or more than one are rejected since the maximizer would then be
/// ambiguous.
pub fn bisect_demand<F>(marginal: F, per_job_cost: f64, discount: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    check_cost(per_job_cost)?;
    if !(discount > 0.0 && discount <= 1.0) {
        return Err(invalid("gamma", format!("must lie in (0, 1], got {discount}")));
    }
    let residual = |x: f64| marginal(x) - per_job_cost * discount * x.powf(discount - 1.0);

    const SCAN: usize = 241;
    let (lo_ln, hi_ln) = (BRACKET_LO.ln(), BRACKET_HI.ln());
    let mut bracket = None;
    let mut changes = 0;
    let mut prev_x = BRACKET_LO;
    let mut prev = residual(prev_x);
    for i in 1..SCAN {
        let x = (lo_ln + (hi_ln - lo_ln) * i as f64 / (SCAN - 1) as f64).exp();
        let cur = residual(x);
        if prev.signum() != cur.signum() {
            changes += 1;
            bracket.get_or_insert((prev_x, x, prev));
        }
        prev_x = x;
        prev = cur;
    }
    let Some((mut lo, mut hi, lo_sign)) = bracket else {
        return Err(Error::Root(format!(
            "no stationary point in [{BRACKET_LO:e}, {BRACKET_HI:e}]"
        )));
    };
    if changes > 1 {
        return Err(Error::Root(format!(
            "{changes} stationary points in [{BRACKET_LO:e}, {BRACKET_HI:e}]; maximizer is ambiguous"
        )));
    }
    let lo_sign = lo_sign.signum();
    for _ in 0..MAX_BISECTIONS {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        let value = residual(mid);
        if value == 0.0 {
            return Ok(mid);
        }
        if value.signum() == lo_sign {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

/// Numeric demand for an isoelastic user via [`bisect_demand`].
pub fn numeric_demand(utility: &UtilityParams, per_job_cost: f64, discount: f64) -> Result<f64> {
    check_discount(utility, discount)?;
    bisect_demand(|x| utility.marginal(x), per_job_cost, discount)
}
