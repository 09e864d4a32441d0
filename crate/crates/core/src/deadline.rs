//! Multi-interval pricing with job deadlines.
//!
//! Users of type `j` arriving in interval `s` are charged interval-`s` prices
//! and may have their jobs processed in any interval `t ∈ [s, τ_{j,s}]`.
//! Intervals are numbered from 1 to the horizon `T`.
//!
//! Solving runs in two stages. Each interval's prices are optimized on their
//! own, since revenue and fairness depend only on prices. A linear program
//! then checks whether the resulting demands can be scheduled before their
//! deadlines. If not, interval prices are raised by the smallest uniform
//! factor that restores feasibility, interval by interval.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::lp::{self, Constraint, LinearProgram, LpStatus, Relation};
use crate::optimizer::{barrier_optimize, concavity_weight_bound, ObjectiveSpec, SolveResult, SolverConfig};
use crate::pricing::{
    evaluate, Instance, InstanceFile, Outcome, PlanKind, PlanStructure, PricingPlan, ResourceEntry, ResourceModel,
    UserType,
};

/// Peak load factor accepted as schedulable.
const SCHEDULABLE_LOAD: f64 = 1.0 + 1e-12;
/// Relative width of the final price-scaling bracket.
const SCALING_TOL: f64 = 1e-6;

/// Capacity and arriving users of one interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSpec {
    pub resources: ResourceModel,
    /// Users submitting jobs in this interval; `None` when nobody arrives.
    pub instance: Option<Instance>,
    /// Last interval in which each type's jobs may run.
    pub deadlines: Vec<usize>,
    pub nu: f64,
}

impl IntervalSpec {
    pub fn new(instance: Instance, deadlines: Vec<usize>, nu: f64) -> Self {
        Self {
            resources: instance.resources().clone(),
            instance: Some(instance),
            deadlines,
            nu,
        }
    }

    /// An interval whose capacity only serves deferred jobs.
    pub fn idle(resources: ResourceModel) -> Self {
        Self {
            resources,
            instance: None,
            deadlines: Vec::new(),
            nu: 0.0,
        }
    }

    pub fn user_types(&self) -> &[UserType] {
        self.instance.as_ref().map_or(&[], |i| i.user_types())
    }

    pub fn num_types(&self) -> usize {
        self.user_types().len()
    }
}

/// Intervals `1..=T`, validated for deadlines and matching resources.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSpec {
    intervals: Vec<IntervalSpec>,
}

impl HorizonSpec {
    pub fn new(horizon: usize, intervals: Vec<IntervalSpec>) -> Result<Self> {
        if horizon == 0 {
            return Err(invalid("horizon", "must be at least 1"));
        }
        if intervals.len() != horizon {
            return Err(Error::Dimension(format!(
                "horizon {horizon} but {} intervals",
                intervals.len()
            )));
        }
        let names = intervals[0].resources.names().to_vec();
        for (idx, interval) in intervals.iter().enumerate() {
            let s = idx + 1;
            if interval.resources.names() != names.as_slice() {
                return Err(invalid(
                    format!("intervals[{idx}].resources"),
                    "every interval must list the same resources in the same order",
                ));
            }
            if interval
                .instance
                .as_ref()
                .is_some_and(|i| i.resources() != &interval.resources)
            {
                return Err(invalid(
                    format!("intervals[{idx}].instance.resources"),
                    "must match the interval's resources",
                ));
            }
            if interval.deadlines.len() != interval.num_types() {
                return Err(Error::Dimension(format!(
                    "intervals[{idx}].deadlines has {} entries for {} user types",
                    interval.deadlines.len(),
                    interval.num_types()
                )));
            }
            for (j, &tau) in interval.deadlines.iter().enumerate() {
                if tau < s || tau > horizon {
                    return Err(invalid(
                        format!("intervals[{idx}].deadlines[{j}]"),
                        format!("deadline {tau} outside [{s}, {horizon}]"),
                    ));
                }
            }
            if !(interval.nu >= 0.0 && interval.nu.is_finite()) {
                return Err(invalid(
                    format!("intervals[{idx}].nu"),
                    "must be finite and nonnegative",
                ));
            }
        }
        Ok(Self { intervals })
    }

    pub fn horizon(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[IntervalSpec] {
        &self.intervals
    }

    /// Capacity of each resource in interval `t` (1-based).
    pub fn capacities(&self, t: usize) -> &[f64] {
        self.intervals[t - 1].resources.capacities()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: HorizonFile = serde_json::from_str(text)?;
        let intervals = file
            .intervals
            .into_iter()
            .enumerate()
            .map(|(idx, entry)| {
                let at = |prefix: &'static str| {
                    move |e| match e {
                        Error::InvalidParameter { field, reason } => {
                            invalid(format!("intervals[{idx}].{prefix}{field}"), reason)
                        }
                        other => other,
                    }
                };
                match (entry.instance, entry.resources) {
                    (Some(file), None) => {
                        let instance = file.into_instance().map_err(at("instance."))?;
                        Ok(IntervalSpec::new(instance, entry.deadlines, entry.nu))
                    }
                    (None, Some(resources)) => {
                        let (names, caps) = resources.into_iter().map(|r| (r.name, r.capacity)).unzip();
                        let resources = ResourceModel::new(names, caps).map_err(at("resources."))?;
                        Ok(IntervalSpec {
                            resources,
                            instance: None,
                            deadlines: entry.deadlines,
                            nu: entry.nu,
                        })
                    }
                    _ => Err(invalid(
                        format!("intervals[{idx}]"),
                        "give either `instance` or, for an interval without arrivals, `resources`",
                    )),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(file.horizon, intervals)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        let file = HorizonFile {
            horizon: self.horizon(),
            intervals: self
                .intervals
                .iter()
                .map(|i| IntervalEntry {
                    instance: i.instance.as_ref().map(Instance::to_file),
                    resources: i.instance.is_none().then(|| {
                        i.resources
                            .names()
                            .iter()
                            .zip(i.resources.capacities())
                            .map(|(name, &capacity)| ResourceEntry {
                                name: name.clone(),
                                capacity,
                            })
                            .collect()
                    }),
                    deadlines: i.deadlines.clone(),
                    nu: i.nu,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("horizon serializes")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HorizonFile {
    horizon: usize,
    intervals: Vec<IntervalEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IntervalEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    instance: Option<InstanceFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    resources: Option<Vec<ResourceEntry>>,
    #[serde(default)]
    deadlines: Vec<usize>,
    #[serde(default)]
    nu: f64,
}

/// Jobs of type `j` submitted in interval `submitted` and processed in
/// interval `processed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScheduleVar {
    pub user_type: usize,
    pub submitted: usize,
    pub processed: usize,
}

/// The joint program: per-interval prices plus schedule variables
/// `x_{j,s}(t)` for `s ≤ t ≤ τ_{j,s}`.
#[derive(Debug, Clone)]
pub struct Program {
    pub spec: HorizonSpec,
    pub kind: PlanKind,
    pub beta: f64,
    pub variables: Vec<ScheduleVar>,
    /// Intervals whose revenue weight exceeds the concavity bound.
    pub warnings: Vec<String>,
}

/// Lays out the joint program. A `gamma` override replaces every
/// interval's discount.
pub fn build_program(spec: &HorizonSpec, kind: PlanKind, beta: f64, gamma: Option<f64>) -> Result<Program> {
    ObjectiveSpec::new(0.0, beta)?;
    let mut spec = spec.clone();
    if let Some(g) = gamma {
        for interval in &mut spec.intervals {
            if let Some(instance) = &interval.instance {
                interval.instance = Some(instance.with_discount(g)?);
            }
        }
    }
    let mut variables = Vec::new();
    let mut warnings = Vec::new();
    for (idx, interval) in spec.intervals.iter().enumerate() {
        let s = idx + 1;
        for (j, &tau) in interval.deadlines.iter().enumerate() {
            for t in s..=tau {
                variables.push(ScheduleVar {
                    user_type: j,
                    submitted: s,
                    processed: t,
                });
            }
        }
        let Some(instance) = &interval.instance else {
            continue;
        };
        let bound = concavity_weight_bound(instance, beta, instance.discount());
        if interval.nu > bound {
            warnings.push(format!(
                "interval {s}: nu = {} exceeds the concavity bound {bound:.3e}; the joint program may not be convex",
                interval.nu
            ));
        }
    }
    Ok(Program {
        spec,
        kind,
        beta,
        variables,
        warnings,
    })
}

impl Program {
    /// `Σ_s ν(s)·ρ_s + F_β,s` at per-interval plans; intervals without
    /// arrivals contribute nothing.
    pub fn objective(&self, plans: &[Option<PricingPlan>]) -> Result<f64> {
        check_plans(&self.spec, plans)?;
        let mut total = 0.0;
        for (interval, plan) in self.spec.intervals.iter().zip(plans) {
            if let (Some(instance), Some(plan)) = (&interval.instance, plan) {
                let spec = ObjectiveSpec::new(interval.nu, self.beta)?;
                total += crate::optimizer::objective(instance, plan, &spec)?;
            }
        }
        Ok(total)
    }

    /// Checks both constraint families of the joint program at a point:
    /// deadlines `Σ_t x_{j,s}(t) ≥ x*_{j,s}(p_s)` and per-interval capacity.
    pub fn is_feasible(&self, plans: &[Option<PricingPlan>], schedule: &Schedule, tol: f64) -> Result<bool> {
        let demands = self.demands(plans)?;
        Ok(schedule.max_violation(&self.spec, &demands) <= tol)
    }

    /// `x*_{j,s}` at per-interval plans.
    pub fn demands(&self, plans: &[Option<PricingPlan>]) -> Result<Vec<Vec<f64>>> {
        interval_demands(&self.spec, plans, self.spec.horizon())
    }
}

/// Active intervals need a plan and idle ones must not have one.
fn check_plans(spec: &HorizonSpec, plans: &[Option<PricingPlan>]) -> Result<()> {
    if plans.len() != spec.horizon() {
        return Err(Error::Dimension(format!(
            "{} plans for {} intervals",
            plans.len(),
            spec.horizon()
        )));
    }
    for (idx, (interval, plan)) in spec.intervals.iter().zip(plans).enumerate() {
        if interval.instance.is_some() != plan.is_some() {
            return Err(invalid(
                format!("plans[{idx}]"),
                "intervals with arrivals need a plan and idle intervals take none",
            ));
        }
    }
    Ok(())
}

/// Jobs per schedule variable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Schedule {
    pub entries: Vec<(ScheduleVar, f64)>,
}

impl Schedule {
    pub fn jobs(&self, user_type: usize, submitted: usize, processed: usize) -> f64 {
        self.entries
            .iter()
            .filter(|(v, _)| v.user_type == user_type && v.submitted == submitted && v.processed == processed)
            .map(|(_, x)| x)
            .sum()
    }

    /// Resource usage in interval `t`.
    pub fn usage(&self, spec: &HorizonSpec, t: usize) -> Vec<f64> {
        let mut usage = vec![0.0; spec.capacities(t).len()];
        for (v, x) in &self.entries {
            if v.processed == t {
                let req = &spec.intervals[v.submitted - 1].user_types()[v.user_type].requirements;
                for (u, r) in usage.iter_mut().zip(req) {
                    *u += r * x;
                }
            }
        }
        usage
    }

    /// Largest violation of deadline, capacity or sign constraints, with
    /// populations scaling per-type demand.
    pub fn max_violation(&self, spec: &HorizonSpec, demands: &[Vec<f64>]) -> f64 {
        let mut worst = self.entries.iter().map(|(_, x)| -x).fold(0.0, f64::max);
        for (idx, interval) in spec.intervals.iter().enumerate() {
            let s = idx + 1;
            for (j, user) in interval.user_types().iter().enumerate() {
                let served: f64 = self
                    .entries
                    .iter()
                    .filter(|(v, _)| v.user_type == j && v.submitted == s)
                    .map(|(_, x)| x)
                    .sum();
                worst = worst.max(user.count as f64 * demands[idx][j] - served);
            }
        }
        for t in 1..=spec.horizon() {
            for (u, c) in self.usage(spec, t).iter().zip(spec.capacities(t)) {
                worst = worst.max(u - c);
            }
        }
        worst
    }
}

/// Why a set of demands cannot be scheduled.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    /// `(interval, resource)` pairs whose capacity binds.
    pub binding: Vec<(usize, String)>,
    /// Smallest achievable peak ratio of usage to capacity.
    pub load_factor: f64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScheduleCheck {
    pub feasible: bool,
    /// Witness when feasible, the least-loaded schedule otherwise.
    pub schedule: Option<Schedule>,
    pub certificate: Option<Certificate>,
}

/// Whether per-type demands `demands[s−1][j]` (jobs per user) fit before
/// their deadlines.
///
/// Solves `min z` subject to `Σ_t x_{j,s}(t) ≥ n_j·x*_{j,s}` and
/// `usage_i(t) ≤ z·C_i(t)`. Demands fit iff `z* ≤ 1`; the minimizer spreads
/// load across intervals, and the multipliers of the capacity rows name the
/// binding ones when they do not fit.
pub fn schedule_feasible(demands: &[Vec<f64>], spec: &HorizonSpec) -> Result<ScheduleCheck> {
    if demands.len() != spec.horizon() {
        return Err(Error::Dimension(format!(
            "{} demand rows for {} intervals",
            demands.len(),
            spec.horizon()
        )));
    }
    let names = spec.intervals[0].resources.names();
    let mut vars = Vec::new();
    let mut targets = Vec::new();
    for (idx, interval) in spec.intervals.iter().enumerate() {
        let s = idx + 1;
        if demands[idx].len() != interval.num_types() {
            return Err(Error::Dimension(format!(
                "demand row {s} has the wrong number of types"
            )));
        }
        for (j, user) in interval.user_types().iter().enumerate() {
            let x = demands[idx][j];
            if !(x >= 0.0 && x.is_finite()) {
                return Err(invalid(
                    format!("demands[{idx}][{j}]"),
                    "must be finite and nonnegative",
                ));
            }
            let need = user.count as f64 * x;
            if need == 0.0 {
                continue;
            }
            let window: Vec<usize> = (s..=interval.deadlines[j])
                .filter(|&t| {
                    user.requirements
                        .iter()
                        .zip(spec.capacities(t))
                        .all(|(r, c)| *r == 0.0 || *c > 0.0)
                })
                .collect();
            if window.is_empty() {
                let blocked = user
                    .requirements
                    .iter()
                    .zip(names)
                    .filter(|(r, _)| **r > 0.0)
                    .flat_map(|(_, n)| (s..=interval.deadlines[j]).map(move |t| (t, n.clone())))
                    .filter(|(t, n)| spec.capacities(*t)[names.iter().position(|x| x == n).unwrap()] == 0.0)
                    .collect();
                return Ok(ScheduleCheck {
                    feasible: false,
                    schedule: None,
                    certificate: Some(Certificate {
                        binding: blocked,
                        load_factor: f64::INFINITY,
                        message: format!(
                            "type {} submitted in interval {s} has no capacity before deadline {}",
                            user.label, interval.deadlines[j]
                        ),
                    }),
                });
            }
            let first = vars.len();
            for t in window {
                vars.push(ScheduleVar {
                    user_type: j,
                    submitted: s,
                    processed: t,
                });
            }
            targets.push((first..vars.len(), need));
        }
    }

    let z = vars.len();
    let width = z + 1;
    let mut constraints = Vec::new();
    for (range, need) in &targets {
        let mut row = vec![0.0; width];
        for v in range.clone() {
            row[v] = 1.0;
        }
        constraints.push(Constraint::new(row, Relation::Ge, *need));
    }
    let mut capacity_rows = Vec::new();
    for t in 1..=spec.horizon() {
        for (i, &cap) in spec.capacities(t).iter().enumerate() {
            let mut row = vec![0.0; width];
            let mut used = false;
            for (v, var) in vars.iter().enumerate() {
                if var.processed == t {
                    let r = spec.intervals[var.submitted - 1].user_types()[var.user_type].requirements[i];
                    if r > 0.0 {
                        row[v] = r;
                        used = true;
                    }
                }
            }
            if used {
                row[z] = -cap;
                capacity_rows.push((constraints.len(), t, i));
                constraints.push(Constraint::new(row, Relation::Le, 0.0));
            }
        }
    }
    let mut objective = vec![0.0; width];
    objective[z] = 1.0;
    let solution = lp::solve(&LinearProgram { objective, constraints })?;
    if solution.status != LpStatus::Optimal {
        return Err(Error::Schedule(format!(
            "load-balancing program ended {:?}",
            solution.status
        )));
    }
    let load = solution.x[z];
    let schedule = Schedule {
        entries: vars.iter().zip(&solution.x).map(|(v, &x)| (*v, x)).collect(),
    };
    if load <= SCHEDULABLE_LOAD {
        return Ok(ScheduleCheck {
            feasible: true,
            schedule: Some(schedule),
            certificate: None,
        });
    }
    let binding: Vec<(usize, String)> = capacity_rows
        .iter()
        .filter(|(row, _, _)| solution.duals[*row] < -1e-12)
        .map(|(_, t, i)| (*t, names[*i].clone()))
        .collect();
    let message = format!(
        "demand needs {load:.6} times the capacity of {}",
        binding
            .iter()
            .map(|(t, n)| format!("`{n}` in interval {t}"))
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(ScheduleCheck {
        feasible: false,
        schedule: Some(schedule),
        certificate: Some(Certificate {
            binding,
            load_factor: load,
            message,
        }),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HorizonResult {
    /// `None` for intervals without arrivals.
    pub plans: Vec<Option<PricingPlan>>,
    pub outcomes: Vec<Option<Outcome>>,
    pub schedule: Schedule,
    /// `Σ_s ρ_s`.
    pub revenue: f64,
    /// `Σ_s F_β,s`.
    pub fairness: f64,
    /// `Σ_s ν(s)·ρ_s + F_β,s`.
    pub objective: f64,
    /// Uniform factor applied to each interval's optimized prices.
    pub price_scaling: Vec<f64>,
    pub feasible: bool,
    /// Every interval solve converged.
    pub converged: bool,
    pub interval_results: Vec<Option<SolveResult>>,
}

/// Two-stage solve: independent interval prices, then schedule repair.
pub fn solve_horizon(program: &Program, config: &SolverConfig) -> Result<HorizonResult> {
    let spec = &program.spec;
    let stage_one: Vec<Option<SolveResult>> = spec
        .intervals
        .par_iter()
        .map(|interval| {
            let Some(instance) = &interval.instance else {
                return Ok(None);
            };
            let objective = ObjectiveSpec::new(interval.nu, program.beta)?;
            barrier_optimize(instance, program.kind, &objective, config).map(Some)
        })
        .collect::<Result<_>>()?;

    let base: Vec<Option<PricingPlan>> = stage_one.iter().map(|r| r.as_ref().map(|r| r.plan.clone())).collect();
    let (plans, scaling) = repair_prices(spec, program.kind, &base)?;
    let final_demands = interval_demands(spec, &plans, spec.horizon())?;
    let check = schedule_feasible(&final_demands, spec)?;
    let schedule = check.schedule.clone().unwrap_or(Schedule { entries: Vec::new() });
    let mut outcomes = Vec::with_capacity(plans.len());
    let (mut revenue, mut fairness, mut objective) = (0.0, 0.0, 0.0);
    for (interval, plan) in spec.intervals.iter().zip(&plans) {
        let (Some(instance), Some(plan)) = (&interval.instance, plan) else {
            outcomes.push(None);
            continue;
        };
        let outcome = evaluate(instance, plan)?;
        let f = crate::optimizer::outcome_fairness(instance, &outcome, program.beta)?;
        revenue += outcome.revenue;
        fairness += f;
        objective += interval.nu * outcome.revenue + f;
        outcomes.push(Some(outcome));
    }
    Ok(HorizonResult {
        plans,
        outcomes,
        schedule,
        revenue,
        fairness,
        objective,
        price_scaling: scaling,
        feasible: check.feasible,
        converged: stage_one.iter().flatten().all(|r| r.converged),
        interval_results: stage_one,
    })
}

/// Demands of intervals `1..=upto`; later intervals submit nothing.
fn interval_demands(spec: &HorizonSpec, plans: &[Option<PricingPlan>], upto: usize) -> Result<Vec<Vec<f64>>> {
    check_plans(spec, plans)?;
    spec.intervals
        .iter()
        .zip(plans)
        .enumerate()
        .map(|(idx, (interval, plan))| match (&interval.instance, plan) {
            (Some(instance), Some(plan)) if idx < upto => Ok(evaluate(instance, plan)?.demand),
            _ => Ok(vec![0.0; interval.num_types()]),
        })
        .collect()
}

/// Raises interval prices until all demands can be scheduled.
///
/// Intervals are visited in order. Interval `s` keeps its prices when the
/// submissions of intervals `1..=s` fit; otherwise its prices are multiplied
/// by the smallest factor `κ ≥ 1` (found by bisection to relative width
/// 1e-6) that makes them fit. Returns the plans and the factors applied.
pub fn repair_prices(
    spec: &HorizonSpec,
    kind: PlanKind,
    plans: &[Option<PricingPlan>],
) -> Result<(Vec<Option<PricingPlan>>, Vec<f64>)> {
    let mut plans = plans.to_vec();
    let mut scaling = vec![1.0; spec.horizon()];
    if schedule_feasible(&interval_demands(spec, &plans, spec.horizon())?, spec)?.feasible {
        return Ok((plans, scaling));
    }
    for s in 1..=spec.horizon() {
        let check = schedule_feasible(&interval_demands(spec, &plans, s)?, spec)?;
        if check.feasible {
            continue;
        }
        // an interval without arrivals adds no demand, so the prefix ending
        // there was already checked
        let (Some(instance), Some(plan)) = (&spec.intervals[s - 1].instance, &plans[s - 1]) else {
            continue;
        };
        let base = plan.price_vector();
        let structure = PlanStructure::new(instance, kind, None)?;
        let scaled = |kappa: f64| Some(structure.plan(&base.iter().map(|p| p * kappa).collect::<Vec<_>>()));
        let fits = |kappa: f64, plans: &mut Vec<Option<PricingPlan>>| -> Result<bool> {
            plans[s - 1] = scaled(kappa);
            Ok(schedule_feasible(&interval_demands(spec, plans, s)?, spec)?.feasible)
        };
        let (mut lo, mut hi) = (1.0f64, 2.0f64);
        while !fits(hi, &mut plans)? {
            lo = hi;
            hi *= 2.0;
            if hi > 1e150 {
                let cert = check.certificate.map(|c| c.message).unwrap_or_default();
                return Err(Error::Infeasible(format!(
                    "no price scaling of interval {s} makes its demand schedulable: {cert}"
                )));
            }
        }
        while hi / lo - 1.0 > SCALING_TOL {
            let mid = (lo * hi).sqrt();
            if fits(mid, &mut plans)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        plans[s - 1] = scaled(hi);
        scaling[s - 1] = hi;
    }
    Ok((plans, scaling))
}
