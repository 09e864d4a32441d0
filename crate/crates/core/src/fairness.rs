//! β-fairness and β-λ fairness of net-utility vectors, their
//! equitability/efficiency factorization, envy-freeness and Pareto probes.
//!
//! ```text
//! F_β(Ū)   = Σ Ū_j^(1−β) / (1−β)
//! F_β,λ(Ū) = sgn(1−β) · (Σ Ū_j^(1−β))^(1/β) · (Σ Ū_j)^(λ+1−1/β)
//! ```
//!
//! Inputs with `β ≥ 10` are evaluated in the log domain.

use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Above this β every power sum goes through log-sum-exp.
pub const LOG_DOMAIN_BETA: f64 = 10.0;

/// Equitability parameter `β` and efficiency exponent `λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FairnessSpec {
    beta: f64,
    lambda: f64,
}

impl FairnessSpec {
    pub fn new(beta: f64, lambda: f64) -> Result<Self> {
        check_beta(beta)?;
        if !lambda.is_finite() {
            return Err(invalid("lambda", format!("must be finite, got {lambda}")));
        }
        Ok(Self { beta, lambda })
    }

    /// `λ = 1/β − 1`, under which β-λ fairness ranks vectors like β-fairness.
    pub fn matching(beta: f64) -> Result<Self> {
        check_beta(beta)?;
        Self::new(beta, 1.0 / beta - 1.0)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Literal Pareto condition `|λ| ≥ 1/β − 1`.
    ///
    /// This is weaker than what monotonicity needs; see
    /// [`FairnessSpec::is_monotone`].
    pub fn satisfies_pareto_condition(&self) -> bool {
        self.lambda.abs() >= 1.0 / self.beta - 1.0
    }

    /// Whether `F_β,λ` is nondecreasing in every utility, so that Pareto
    /// improvements never lower it: `sgn(1−β)·λ ≥ |1/β − 1|`.
    pub fn is_monotone(&self) -> bool {
        (1.0 - self.beta).signum() * self.lambda >= (1.0 / self.beta - 1.0).abs()
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(invalid("beta", format!("must be positive and finite, got {beta}")));
    }
    if beta == 1.0 {
        return Err(invalid(
            "beta",
            "beta = 1 is the logarithmic limit and is not supported",
        ));
    }
    Ok(())
}

/// Strictly positive per-user net utilities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilityVector(Vec<f64>);

impl UtilityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("utilities", "at least one user is required"));
        }
        if let Some(j) = values.iter().position(|&v| !(v > 0.0 && v.is_finite())) {
            return Err(Error::ZeroUtility(format!("user {j} (utility {})", values[j])));
        }
        Ok(Self(values))
    }

    /// Expands per-type utilities by type population.
    pub fn from_types(values: &[f64], counts: &[u32]) -> Result<Self> {
        if values.len() != counts.len() {
            return Err(Error::Dimension(format!(
                "{} utilities for {} counts",
                values.len(),
                counts.len()
            )));
        }
        Self::new(
            values
                .iter()
                .zip(counts)
                .flat_map(|(&v, &n)| std::iter::repeat_n(v, n as usize))
                .collect(),
        )
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// `ln Σ Ū_j^q`.
    fn ln_power_sum(&self, q: f64) -> f64 {
        let max = self.0.iter().map(|v| q * v.ln()).fold(f64::NEG_INFINITY, f64::max);
        let rest: f64 = self.0.iter().map(|v| (q * v.ln() - max).exp()).sum();
        max + rest.ln()
    }

    fn power_sum(&self, q: f64) -> f64 {
        self.0.iter().map(|v| v.powf(q)).sum()
    }
}

/// `Σ_j w_j·Ū_j^(1−β) / (1−β)` for per-type utilities with population
/// weights. Callers guarantee positive finite values and weights.
pub(crate) fn weighted_beta_fairness(values: &[f64], weights: &[f64], beta: f64) -> f64 {
    let q = 1.0 - beta;
    if beta >= LOG_DOMAIN_BETA {
        let terms = values.iter().zip(weights).map(|(v, w)| w.ln() + q * v.ln());
        let max = terms.clone().fold(f64::NEG_INFINITY, f64::max);
        let rest: f64 = terms.map(|t| (t - max).exp()).sum();
        q.signum() * (max + rest.ln() - q.abs().ln()).exp()
    } else {
        values.iter().zip(weights).map(|(v, w)| w * v.powf(q)).sum::<f64>() / q
    }
}

/// `Σ Ū_j^(1−β) / (1−β)`.
pub fn beta_fairness(utilities: &UtilityVector, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let q = 1.0 - beta;
    if beta >= LOG_DOMAIN_BETA {
        Ok(q.signum() * (utilities.ln_power_sum(q) - q.abs().ln()).exp())
    } else {
        Ok(utilities.power_sum(q) / q)
    }
}

/// `sgn(1−β)·(Σ Ū^(1−β))^(1/β)·(Σ Ū)^(λ+1−1/β)`.
pub fn beta_lambda_fairness(utilities: &UtilityVector, spec: &FairnessSpec) -> Result<f64> {
    let beta = spec.beta;
    let sign = (1.0 - beta).signum();
    let outer = spec.lambda + 1.0 - 1.0 / beta;
    if beta >= LOG_DOMAIN_BETA {
        let ln = utilities.ln_power_sum(1.0 - beta) / beta + outer * utilities.total().ln();
        Ok(sign * ln.exp())
    } else {
        let sum = utilities.power_sum(1.0 - beta);
        Ok(sign * sum.powf(1.0 / beta) * utilities.total().powf(outer))
    }
}

/// Scale-invariant equitability factor and total-utility efficiency factor of
/// β-λ fairness. Their product is [`beta_lambda_fairness`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FairnessSplit {
    pub equitability: f64,
    pub efficiency: f64,
}

pub fn equitability_efficiency_split(utilities: &UtilityVector, spec: &FairnessSpec) -> Result<FairnessSplit> {
    let beta = spec.beta;
    let total = utilities.total();
    let efficiency = total.powf(spec.lambda);
    let sign = (1.0 - beta).signum();
    let equitability = if beta >= LOG_DOMAIN_BETA {
        // Σ (Ū/ΣŪ)^(1−β) is scale free; evaluate it on normalized shares
        let shares = UtilityVector(utilities.0.iter().map(|v| v / total).collect());
        sign * (shares.ln_power_sum(1.0 - beta) / beta).exp()
    } else {
        sign * utilities.power_sum(1.0 - beta).powf(1.0 / beta) * total.powf(1.0 - 1.0 / beta)
    };
    Ok(FairnessSplit {
        equitability,
        efficiency,
    })
}

/// How many jobs an allocation supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum JobCount {
    /// `min_i r_i / R_i`: a job needs every resource it requires.
    #[default]
    Min,
    /// `max_i r_i / R_i`: literal reading of the envy-freeness definition.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct EnvyOptions {
    pub count: JobCount,
    /// Require strictly more jobs from one's own allocation.
    pub strict: bool,
}

/// Jobs processable from `allocation` by a user with `requirements`.
/// Resources the user does not need are ignored.
pub fn jobs_processable(allocation: &[f64], requirements: &[f64], count: JobCount) -> f64 {
    let ratios = allocation
        .iter()
        .zip(requirements)
        .filter(|(_, &r)| r > 0.0)
        .map(|(a, r)| a / r);
    match count {
        JobCount::Min => ratios.fold(f64::INFINITY, f64::min),
        JobCount::Max => ratios.fold(f64::NEG_INFINITY, f64::max),
    }
}

/// True when no user could process more jobs with another user's allocation.
pub fn envy_free(allocations: &[Vec<f64>], requirements: &[Vec<f64>], options: EnvyOptions) -> Result<bool> {
    if allocations.len() != requirements.len() {
        return Err(Error::Dimension(format!(
            "{} allocations for {} users",
            allocations.len(),
            requirements.len()
        )));
    }
    let m = requirements.first().map_or(0, Vec::len);
    for (j, (a, r)) in allocations.iter().zip(requirements).enumerate() {
        if a.len() != m || r.len() != m {
            return Err(Error::Dimension(format!("user {j} does not have {m} resources")));
        }
        if a.iter().chain(r).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(invalid(
                format!("user {j}"),
                "allocations and requirements must be nonnegative",
            ));
        }
        if r.iter().all(|&v| v == 0.0) {
            return Err(invalid(format!("requirements[{j}]"), "all requirements are zero"));
        }
    }
    for (j, req) in requirements.iter().enumerate() {
        let own = jobs_processable(&allocations[j], req, options.count);
        for (k, other) in allocations.iter().enumerate() {
            if k == j {
                continue;
            }
            let theirs = jobs_processable(other, req, options.count);
            let ok = if options.strict { own > theirs } else { own >= theirs };
            if !ok {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Whether β-λ fairness strictly prefers `u` to `v`, where `u` must
/// Pareto-dominate `v`.
pub fn pareto_probe(spec: &FairnessSpec, u: &UtilityVector, v: &UtilityVector) -> Result<bool> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!("{} vs {} users", u.len(), v.len())));
    }
    let weakly = u.0.iter().zip(&v.0).all(|(a, b)| a >= b);
    let strictly = u.0.iter().zip(&v.0).any(|(a, b)| a > b);
    if !(weakly && strictly) {
        return Err(invalid("u", "must Pareto-dominate v"));
    }
    Ok(beta_lambda_fairness(u, spec)? > beta_lambda_fairness(v, spec)?)
}
