use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pricing::{Instance, PlanKind, PlanStructure};

use super::bundled::bundled_price_bisection;
use super::demand_space::DemandModel;
use super::model::PriceModel;
use super::{result_from, HessianMode, ObjectiveSpec, SolveResult, SolverConfig};

const ARMIJO_SLOPE: f64 = 1e-4;
const BACKTRACK: f64 = 0.5;
const MIN_STEP: f64 = 1e-20;
/// Relative rounding noise of a barrier evaluation; Newton decrements below
/// it cannot be resolved by the line search.
const VALUE_NOISE: f64 = 64.0 * f64::EPSILON;
/// Target load fraction of the starting point.
const START_LOAD: f64 = 0.5;

/// Maximizes `ν·ρ + F_β` over a plan family by the log-barrier method.
///
/// Bundled plans use the capacity-proportional default bundle; see
/// [`barrier_optimize_with`] for a custom one.
pub fn barrier_optimize(
    instance: &Instance,
    kind: PlanKind,
    spec: &ObjectiveSpec,
    config: &SolverConfig,
) -> Result<SolveResult> {
    barrier_optimize_with(instance, PlanStructure::new(instance, kind, None)?, spec, config)
}

/// Differentiated plans are solved over per-type demands, where the
/// objective is concave for every `ν ≥ 0`, and mapped back to prices. Other
/// plans are solved over their price vector.
pub fn barrier_optimize_with(
    instance: &Instance,
    structure: PlanStructure,
    spec: &ObjectiveSpec,
    config: &SolverConfig,
) -> Result<SolveResult> {
    config.validate()?;
    if structure.kind == PlanKind::Differentiated {
        if let Some(model) = DemandModel::new(instance, &structure, *spec) {
            model.check_capacity()?;
            let start = model.feasible_start()?;
            let run = run_barrier(&model, start, model.constraint_count(), |x| model.objective(x), config);
            let plan = structure.plan(&model.prices(&run.point));
            return result_from(
                instance,
                plan,
                spec,
                run.iterations,
                run.converged,
                run.gap,
                run.diagnostics,
            );
        }
    }
    let model = PriceModel::new(instance, structure, *spec);
    model.check_capacity()?;
    let start = feasible_start(&model)?;
    let objective = |p: &[f64]| model.objective(p).expect("barrier iterates stay in the domain");
    let mut run = run_barrier(&model, start, model.constraint_count(), objective, config);
    if let Some(bundle) = model.structure.bundle() {
        // the optimum is the lowest feasible bundle price for every ν; the
        // barrier stops a gap short of it
        if let Ok(p) = bundled_price_bisection(instance, bundle) {
            if model.objective(&[p]).is_some_and(|v| v >= objective(&run.point)) {
                run.point = vec![p];
                run.diagnostics
                    .push("moved to the capacity-binding bundle price".into());
            }
        }
    }
    let plan = model.structure.plan(&run.point);
    result_from(
        instance,
        plan,
        spec,
        run.iterations,
        run.converged,
        run.gap,
        run.diagnostics,
    )
}

/// `−τ·objective − Σ ln(slack)` over some parametrization of the plan.
pub(crate) trait Barrier {
    /// `+∞` outside the domain.
    fn value(&self, x: &[f64], tau: f64) -> f64;
    fn gradient(&self, x: &[f64], tau: f64) -> Option<DVector<f64>>;
    fn hessian(&self, x: &[f64], tau: f64) -> Option<DMatrix<f64>>;
}

/// Central differences of the analytic gradient, symmetrized.
pub(crate) fn fd_hessian(problem: &impl Barrier, x: &[f64], tau: f64, rel_step: f64) -> Option<DMatrix<f64>> {
    let d = x.len();
    let mut h = DMatrix::zeros(d, d);
    for k in 0..d {
        let mut step = rel_step * x[k].abs().max(1e-12);
        let (plus, minus) = loop {
            let mut hi = x.to_vec();
            let mut lo = x.to_vec();
            hi[k] += step;
            lo[k] -= step;
            let inside = problem.value(&lo, tau).is_finite() && problem.value(&hi, tau).is_finite();
            match (problem.gradient(&hi, tau), problem.gradient(&lo, tau)) {
                (Some(a), Some(b)) if inside => break (a, b),
                _ if step > 1e-300 => step *= 0.5,
                _ => return None,
            }
        };
        h.set_column(k, &((plus - minus) / (2.0 * step)));
    }
    Some((&h + h.transpose()) * 0.5)
}

struct BarrierRun {
    point: Vec<f64>,
    iterations: usize,
    converged: bool,
    gap: f64,
    diagnostics: Vec<String>,
}

/// Outer loop: centers, then grows `τ` until `constraints / (τ·|O|)` falls
/// below the tolerance.
fn run_barrier(
    problem: &impl Barrier,
    start: Vec<f64>,
    constraints: usize,
    objective: impl Fn(&[f64]) -> f64,
    config: &SolverConfig,
) -> BarrierRun {
    let constraints = constraints as f64;
    let mut x = start;
    let mut tau = config.initial_barrier / objective(&x).abs().max(1.0);
    let mut iterations = 0;
    let mut diagnostics = Vec::new();
    let mut converged = false;
    let mut gap = f64::INFINITY;

    for outer in 0..config.max_outer_iterations {
        let centering = center(problem, &x, tau, config);
        iterations += centering.iterations;
        x = centering.point;
        gap = constraints / (tau * objective(&x).abs().max(1.0));
        if !centering.centered {
            diagnostics.push(format!(
                "outer {outer}: centering stopped with Newton decrement {:.3e} ({})",
                centering.decrement, centering.reason
            ));
        }
        if gap <= config.tolerance {
            // a loosely centered final iterate has no gap guarantee
            converged = centering.centered || centering.decrement <= config.tolerance;
            break;
        }
        tau *= config.barrier_growth;
    }
    if gap > config.tolerance {
        diagnostics.push(format!(
            "stopped after {} outer iterations with gap {gap:.3e}",
            config.max_outer_iterations
        ));
    }
    BarrierRun {
        point: x,
        iterations,
        converged,
        gap,
        diagnostics,
    }
}

/// Uniform price `s·1` whose largest load is `START_LOAD` of its limit.
fn feasible_start(model: &PriceModel) -> Result<Vec<f64>> {
    let d = model.dimension();
    let ok =
        |s: f64| matches!(model.responses(&vec![s; d]).map(|r| model.max_load_ratio(&r)), Some(v) if v <= START_LOAD);
    let (mut bad, mut good) = if ok(1.0) {
        let mut good = 1.0;
        loop {
            let next = good * 0.5;
            if next < 1e-300 {
                return Ok(vec![good; d]);
            }
            if !ok(next) {
                break (next, good);
            }
            good = next;
        }
    } else {
        let mut bad = 1.0f64;
        loop {
            let next = bad * 2.0;
            if !next.is_finite() {
                return Err(Error::Infeasible(
                    "no uniform price is strictly feasible with positive surplus for every user".into(),
                ));
            }
            if ok(next) {
                break (bad, next);
            }
            bad = next;
        }
    };
    for _ in 0..100 {
        let mid = 0.5 * (bad + good);
        if mid <= bad || mid >= good {
            break;
        }
        if ok(mid) {
            good = mid;
        } else {
            bad = mid;
        }
    }
    Ok(vec![good; d])
}

struct Centering {
    point: Vec<f64>,
    iterations: usize,
    decrement: f64,
    centered: bool,
    reason: &'static str,
}

/// Damped Newton with Armijo backtracking on the barrier function.
fn center(problem: &impl Barrier, start: &[f64], tau: f64, config: &SolverConfig) -> Centering {
    let mut p = start.to_vec();
    let mut value = problem.value(&p, tau);
    let mut decrement = f64::INFINITY;
    for it in 0..config.max_newton_iterations {
        let g = problem.gradient(&p, tau).expect("iterate in domain");
        let h = match config.hessian {
            HessianMode::Analytic => problem.hessian(&p, tau),
            HessianMode::FiniteDifference => fd_hessian(problem, &p, tau, config.fd_step),
        };
        let Some(step) = h.and_then(|h| newton_step(&h, &g)) else {
            return Centering {
                point: p,
                iterations: it,
                decrement,
                centered: false,
                reason: "singular Hessian",
            };
        };
        let slope = g.dot(&step);
        decrement = -slope;
        let floor = config.newton_tolerance.max(VALUE_NOISE * value.abs());
        if !(decrement > 0.0) || decrement / 2.0 <= floor {
            return Centering {
                point: p,
                iterations: it,
                decrement: decrement.max(0.0),
                centered: true,
                reason: "",
            };
        }
        let mut t = 1.0;
        loop {
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + t * b).collect();
            let trial_value = problem.value(&trial, tau);
            if trial_value.is_finite() && trial_value <= value + ARMIJO_SLOPE * t * slope {
                p = trial;
                value = trial_value;
                break;
            }
            t *= BACKTRACK;
            if t < MIN_STEP {
                return Centering {
                    point: p,
                    iterations: it + 1,
                    decrement,
                    centered: false,
                    reason: "line search stalled",
                };
            }
        }
    }
    Centering {
        point: p,
        iterations: config.max_newton_iterations,
        decrement,
        centered: false,
        reason: "iteration limit",
    }
}

/// Solves `H·Δ = −g`, adding a growing multiple of the identity when `H` is
/// not positive definite.
fn newton_step(h: &DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if let Some(chol) = h.clone().cholesky() {
        return Some(chol.solve(&(-g)));
    }
    let scale = h.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut shift = 1e-12 * scale;
    for _ in 0..40 {
        let shifted = h + DMatrix::identity(h.nrows(), h.ncols()) * shift;
        if let Some(chol) = shifted.cholesky() {
            return Some(chol.solve(&(-g)));
        }
        shift *= 10.0;
    }
    None
}

/// One point of a volume-discount search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscountTrial {
    pub gamma: f64,
    pub objective: Option<f64>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscountSearch {
    pub gamma: f64,
    pub result: SolveResult,
    /// Every grid point in input order.
    pub trials: Vec<DiscountTrial>,
}

/// Solves at each discount on the grid and keeps the best objective.
/// Failed points are recorded and skipped; ties go to the earliest point.
pub fn discount_line_search(
    instance: &Instance,
    kind: PlanKind,
    spec: &ObjectiveSpec,
    gammas: &[f64],
    config: &SolverConfig,
) -> Result<DiscountSearch> {
    let mut best: Option<(f64, SolveResult)> = None;
    let mut trials = Vec::with_capacity(gammas.len());
    for &gamma in gammas {
        let attempt = instance
            .with_discount(gamma)
            .and_then(|inst| barrier_optimize(&inst, kind, spec, config));
        match attempt {
            Ok(result) => {
                trials.push(DiscountTrial {
                    gamma,
                    objective: Some(result.objective),
                    converged: result.converged,
                    error: None,
                });
                if best.as_ref().is_none_or(|(_, b)| result.objective > b.objective) {
                    best = Some((gamma, result));
                }
            }
            Err(e) => trials.push(DiscountTrial {
                gamma,
                objective: None,
                converged: false,
                error: Some(e.to_string()),
            }),
        }
    }
    let (gamma, result) = best.ok_or_else(|| {
        let reasons: Vec<String> = trials
            .iter()
            .map(|t| format!("gamma {}: {}", t.gamma, t.error.as_deref().unwrap_or("?")))
            .collect();
        Error::Infeasible(if reasons.is_empty() {
            "empty discount grid".into()
        } else {
            format!("no discount could be solved ({})", reasons.join("; "))
        })
    })?;
    Ok(DiscountSearch { gamma, result, trials })
}
