//! Parameter sweeps over capacity, population mix and volume discount.
//!
//! Every (grid value, ν, plan) combination yields one [`SweepRow`]; solver
//! failures become rows with `converged = false` instead of aborting.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fairness::{equitability_efficiency_split, FairnessSpec, UtilityVector};
use crate::optimizer::{barrier_optimize, ObjectiveSpec, SolveResult, SolverConfig};
use crate::pricing::{Instance, PlanKind};

/// Population share of the last user type in mix sweeps.
pub const MIX_FIXED_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SweepParameter {
    /// Capacity of the named resource.
    Capacity(String),
    /// Population share of the named type. The last type keeps
    /// [`MIX_FIXED_FRACTION`] and the remaining types split the rest evenly.
    Mix(String),
    Gamma,
}

impl fmt::Display for SweepParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Capacity(r) => write!(f, "capacity:{r}"),
            Self::Mix(t) => write!(f, "mix:{t}"),
            Self::Gamma => f.write_str("gamma"),
        }
    }
}

impl FromStr for SweepParameter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some(("capacity", r)) if !r.is_empty() => Ok(Self::Capacity(r.to_string())),
            Some(("mix", t)) if !t.is_empty() => Ok(Self::Mix(t.to_string())),
            None if s == "gamma" => Ok(Self::Gamma),
            _ => Err(invalid(
                "parameter",
                format!("expected capacity:<resource>, mix:<type> or gamma, got `{s}`"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
    pub nus: Vec<f64>,
    pub beta: f64,
    pub plans: Vec<PlanKind>,
    /// Total population for mix sweeps; the instance's population if unset.
    pub population: Option<u64>,
}

impl SweepSpec {
    /// Evenly spaced values from `start` to `stop` inclusive.
    pub fn values(&self) -> Vec<f64> {
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| {
                if i + 1 == self.steps {
                    self.stop
                } else {
                    self.start + (self.stop - self.start) * i as f64 / last
                }
            })
            .collect()
    }

    pub fn validate(&self, instance: &Instance) -> Result<()> {
        if !(self.start < self.stop) || !self.start.is_finite() || !self.stop.is_finite() {
            return Err(invalid(
                "range",
                format!("need finite start < stop, got {}..{}", self.start, self.stop),
            ));
        }
        if self.steps < 2 {
            return Err(invalid("steps", format!("must be at least 2, got {}", self.steps)));
        }
        if self.nus.is_empty() || self.plans.is_empty() {
            return Err(invalid("sweep", "needs at least one ν and one plan"));
        }
        for &nu in &self.nus {
            ObjectiveSpec::new(nu, self.beta)?;
        }
        match &self.parameter {
            SweepParameter::Capacity(r) => {
                if instance.resources().index_of(r).is_none() {
                    return Err(invalid("parameter", format!("no resource named `{r}`")));
                }
                if self.start < 0.0 {
                    return Err(invalid("range", "capacities must be nonnegative"));
                }
            }
            SweepParameter::Mix(t) => {
                let j = type_index(instance, t)?;
                if instance.num_types() < 2 || j + 1 == instance.num_types() {
                    return Err(invalid(
                        "parameter",
                        format!("`{t}` is the fixed-share type; mix sweeps vary another type"),
                    ));
                }
                if self.start < 0.0 || self.stop > 1.0 - MIX_FIXED_FRACTION {
                    return Err(invalid(
                        "range",
                        format!("mix fractions must lie in [0, {}]", 1.0 - MIX_FIXED_FRACTION),
                    ));
                }
            }
            SweepParameter::Gamma => {
                if self.start <= 0.0 || self.stop > 1.0 {
                    return Err(invalid("range", "gamma must lie in (0, 1]"));
                }
            }
        }
        Ok(())
    }
}

fn type_index(instance: &Instance, label: &str) -> Result<usize> {
    instance
        .user_types()
        .iter()
        .position(|u| u.label == label)
        .ok_or_else(|| invalid("parameter", format!("no user type labelled `{label}`")))
}

/// Type counts for a mix sweep point, each at least 1.
pub fn mix_counts(instance: &Instance, label: &str, fraction: f64, population: u64) -> Result<Vec<u32>> {
    let j = type_index(instance, label)?;
    let n = instance.num_types();
    let others = (n - 2) as f64;
    let rest = 1.0 - MIX_FIXED_FRACTION - fraction;
    Ok((0..n)
        .map(|k| {
            let share = if k == j {
                fraction
            } else if k + 1 == n {
                MIX_FIXED_FRACTION
            } else {
                rest / others
            };
            ((share * population as f64).round() as u32).max(1)
        })
        .collect())
}

/// Instance at one sweep value.
pub fn instance_at(instance: &Instance, spec: &SweepSpec, value: f64) -> Result<Instance> {
    match &spec.parameter {
        SweepParameter::Capacity(r) => {
            let i = instance
                .resources()
                .index_of(r)
                .ok_or_else(|| invalid("parameter", format!("no resource `{r}`")))?;
            instance.with_capacity(i, value)
        }
        SweepParameter::Mix(t) => {
            let population = spec.population.unwrap_or_else(|| instance.population());
            instance.with_counts(&mix_counts(instance, t, value, population)?)
        }
        SweepParameter::Gamma => instance.with_discount(value),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub parameter: String,
    pub value: f64,
    pub nu: f64,
    pub gamma: f64,
    pub plan: PlanKind,
    pub revenue: f64,
    pub fairness: f64,
    pub equitability: f64,
    pub efficiency: f64,
    /// Net utility per user of each type.
    pub utilities: Vec<f64>,
    /// Unused capacity per resource.
    pub leftover: Vec<f64>,
    pub prices: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub gap: f64,
    pub error: Option<String>,
}

impl SweepRow {
    fn from_result(base: SweepRow, result: &SolveResult, instance: &Instance, beta: f64) -> Self {
        let split = UtilityVector::new(result.outcome.expanded_utilities(instance))
            .and_then(|u| equitability_efficiency_split(&u, &FairnessSpec::matching(beta)?));
        let (equitability, efficiency) = split.map_or((f64::NAN, f64::NAN), |s| (s.equitability, s.efficiency));
        Self {
            revenue: result.revenue,
            fairness: result.fairness,
            equitability,
            efficiency,
            utilities: result.outcome.net_utility.clone(),
            leftover: result.outcome.leftover.clone(),
            prices: result.plan.price_vector(),
            converged: result.converged,
            iterations: result.iterations,
            gap: result.gap,
            ..base
        }
    }
}

/// Runs every combination in parallel; rows come back ordered by grid value,
/// then ν, then plan.
pub fn run_sweep(instance: &Instance, spec: &SweepSpec, config: &SolverConfig) -> Result<Vec<SweepRow>> {
    spec.validate(instance)?;
    config.validate()?;
    let mut jobs = Vec::new();
    for value in spec.values() {
        for &nu in &spec.nus {
            for &plan in &spec.plans {
                jobs.push((value, nu, plan));
            }
        }
    }
    let (m, n) = (instance.num_resources(), instance.num_types());
    Ok(jobs
        .into_par_iter()
        .map(|(value, nu, plan)| {
            let gamma = match spec.parameter {
                SweepParameter::Gamma => value,
                _ => instance.discount(),
            };
            let base = SweepRow {
                parameter: spec.parameter.to_string(),
                value,
                nu,
                gamma,
                plan,
                revenue: f64::NAN,
                fairness: f64::NAN,
                equitability: f64::NAN,
                efficiency: f64::NAN,
                utilities: vec![f64::NAN; n],
                leftover: vec![f64::NAN; m],
                prices: Vec::new(),
                converged: false,
                iterations: 0,
                gap: f64::NAN,
                error: None,
            };
            let solved = instance_at(instance, spec, value).and_then(|inst| {
                let objective = ObjectiveSpec::new(nu, spec.beta)?;
                barrier_optimize(&inst, plan, &objective, config).map(|r| (inst, r))
            });
            match solved {
                Ok((inst, result)) => SweepRow::from_result(base, &result, &inst, spec.beta),
                Err(e) => SweepRow {
                    error: Some(e.to_string()),
                    ..base
                },
            }
        })
        .collect())
}

/// Column names in output order.
pub fn csv_header(instance: &Instance) -> Vec<String> {
    let mut cols: Vec<String> = [
        "parameter",
        "value",
        "nu",
        "gamma",
        "plan",
        "revenue",
        "fairness",
        "equitability",
        "efficiency",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(instance.user_types().iter().map(|u| format!("utility_{}", u.label)));
    cols.extend(instance.resources().names().iter().map(|r| format!("leftover_{r}")));
    cols.extend(["prices", "converged", "iterations", "gap", "error"].map(String::from));
    cols
}

/// Writes rows as CSV. Prices of varying length share one `;`-joined field.
pub fn write_csv(instance: &Instance, rows: &[SweepRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_header(instance))?;
    for row in rows {
        let mut rec = vec![
            row.parameter.clone(),
            row.value.to_string(),
            row.nu.to_string(),
            row.gamma.to_string(),
            row.plan.to_string(),
            row.revenue.to_string(),
            row.fairness.to_string(),
            row.equitability.to_string(),
            row.efficiency.to_string(),
        ];
        rec.extend(row.utilities.iter().map(f64::to_string));
        rec.extend(row.leftover.iter().map(f64::to_string));
        rec.push(row.prices.iter().map(f64::to_string).collect::<Vec<_>>().join(";"));
        rec.push(row.converged.to_string());
        rec.push(row.iterations.to_string());
        rec.push(row.gap.to_string());
        rec.push(row.error.clone().unwrap_or_default());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}
