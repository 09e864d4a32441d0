//! Self-checking property suite run by `cloudprice verify`.
//!
//! Each property carries a stable anchor naming the library item it checks.
//! Inputs come from a seeded ChaCha stream so reports are reproducible.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::deadline::{build_program, solve_horizon, HorizonSpec, IntervalSpec};
use crate::demand::{bisect_demand, net_utility, optimal_demand, UtilityParams};
use crate::error::{invalid, Error, Result};
use crate::fairness::{
    beta_fairness, beta_lambda_fairness, equitability_efficiency_split, FairnessSpec, UtilityVector,
};
use crate::kmeans::kmeans;
use crate::optimizer::{barrier_optimize, bundled_price_bisection, tradeoff_bound_check, ObjectiveSpec, SolverConfig};
use crate::pricing::{default_bundle, evaluate, lift_resource_to_differentiated, PlanKind, PricingPlan};
use crate::reference;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Scope {
    Demand,
    Pricing,
    Fairness,
    Bounds,
    Optimizer,
    Deadline,
    Clustering,
}

impl Scope {
    pub const ALL: [Scope; 7] = [
        Scope::Demand,
        Scope::Pricing,
        Scope::Fairness,
        Scope::Bounds,
        Scope::Optimizer,
        Scope::Deadline,
        Scope::Clustering,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scope::Demand => "demand",
            Scope::Pricing => "pricing",
            Scope::Fairness => "fairness",
            Scope::Bounds => "bounds",
            Scope::Optimizer => "optimizer",
            Scope::Deadline => "deadline",
            Scope::Clustering => "clustering",
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scope::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| invalid("scope", format!("unknown scope `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyOptions {
    /// Scopes to run; empty runs all.
    pub scopes: Vec<Scope>,
    pub seed: u64,
    /// Test hook: flips the sign of the demand exponent so the demand
    /// identities must fail.
    pub break_demand: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub scope: Scope,
    pub anchor: &'static str,
    pub description: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for PropertyResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "{verdict} [{}] {}: {} ({})",
            self.scope, self.anchor, self.description, self.detail
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub seed: u64,
    pub results: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }
}

type Check = fn(&mut ChaCha8Rng, &VerifyOptions) -> Result<(bool, String)>;

const PROPERTIES: &[(Scope, &str, &str, Check)] = &[
    (
        Scope::Demand,
        "demand::optimal_demand",
        "closed form solves the first-order condition",
        demand_root,
    ),
    (
        Scope::Demand,
        "demand::net_utility",
        "net utility equals (γ/(1−α)−1)·r·x^γ",
        demand_net_utility,
    ),
    (
        Scope::Demand,
        "demand::optimal_demand/monotone",
        "demand falls as per-job cost rises",
        demand_monotone,
    ),
    (
        Scope::Pricing,
        "pricing::evaluate/revenue",
        "revenue falls in every price",
        revenue_decreasing,
    ),
    (
        Scope::Pricing,
        "pricing::lift_resource_to_differentiated",
        "lifted plan reproduces the resource outcome",
        lift_preserves,
    ),
    (
        Scope::Fairness,
        "fairness::beta_lambda_fairness",
        "β-λ fairness at λ = 1/β−1 ranks like β-fairness",
        fairness_ranking,
    ),
    (
        Scope::Fairness,
        "fairness::equitability_efficiency_split",
        "split factors multiply to β-λ fairness",
        fairness_split,
    ),
    (
        Scope::Bounds,
        "optimizer::tradeoff_bound_check",
        "fairness-revenue bounds hold at random feasible plans",
        bounds_hold,
    ),
    (
        Scope::Bounds,
        "optimizer::tradeoff_bound_check/tight",
        "single log-free type attains the bound",
        bounds_tight,
    ),
    (
        Scope::Optimizer,
        "optimizer::barrier_optimize",
        "toy instance solves to price 0.5 and revenue 2",
        optimizer_toy,
    ),
    (
        Scope::Optimizer,
        "optimizer::bundled_price_bisection",
        "bundled optimum ignores ν and saturates capacity",
        bundled_nu,
    ),
    (
        Scope::Deadline,
        "deadline::solve_horizon",
        "immediate deadlines decouple into interval solves",
        deadline_decouple,
    ),
    (
        Scope::Clustering,
        "kmeans::kmeans",
        "Lloyd objective never increases",
        kmeans_monotone,
    ),
];

/// Runs the selected properties in a fixed order.
pub fn run_verification(options: &VerifyOptions) -> VerifyReport {
    let results = PROPERTIES
        .iter()
        .filter(|(scope, ..)| options.scopes.is_empty() || options.scopes.contains(scope))
        .enumerate()
        .map(|(k, &(scope, anchor, description, check))| {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            rng.set_stream(k as u64);
            let (passed, detail) = match check(&mut rng, options) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            PropertyResult {
                scope,
                anchor,
                description,
                passed,
                detail,
            }
        })
        .collect();
    VerifyReport {
        seed: options.seed,
        results,
    }
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Random `(utility, r, γ)` with `α ∈ [0.05, 0.95]`, `γ > 1 − α` and demand
/// inside `[1e-9, 1e9]` so the bisection bracket contains the root.
fn demand_tuple(rng: &mut ChaCha8Rng) -> (UtilityParams, f64, f64) {
    loop {
        let alpha = rng.random_range(0.05..0.95);
        let gamma = rng.random_range((1.0 - alpha) + 0.02 * alpha..=1.0);
        let c = log_uniform(rng, 0.1, 10.0);
        let r = log_uniform(rng, 1e-2, 1e2);
        let u = UtilityParams::new(alpha, c).expect("valid");
        if optimal_demand(&u, r, gamma).is_ok_and(|x| (1e-9..=1e9).contains(&x)) {
            return (u, r, gamma);
        }
    }
}

fn demand_under_test(u: &UtilityParams, r: f64, gamma: f64, opts: &VerifyOptions) -> Result<f64> {
    let x = optimal_demand(u, r, gamma)?;
    Ok(if opts.break_demand { x.recip() } else { x })
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn demand_root(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (u, r, g) = demand_tuple(rng);
        let root = bisect_demand(|x| u.marginal(x), r, g)?;
        worst = worst.max(rel(demand_under_test(&u, r, g, opts)?, root));
    }
    Ok((worst <= 1e-9, format!("max relative error {worst:.2e}")))
}

fn demand_net_utility(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (u, r, g) = demand_tuple(rng);
        let x = demand_under_test(&u, r, g, opts)?;
        let direct = u.value(x) - r * x.powf(g);
        let identity = (g / (1.0 - u.alpha()) - 1.0) * r * x.powf(g);
        let reference = net_utility(&u, r, g)?;
        worst = worst.max(rel(direct, identity)).max(rel(reference, identity));
    }
    Ok((worst <= 1e-9, format!("max relative error {worst:.2e}")))
}

fn demand_monotone(rng: &mut ChaCha8Rng, opts: &VerifyOptions) -> Result<(bool, String)> {
    for _ in 0..50 {
        let (u, _, g) = demand_tuple(rng);
        let mut prev = f64::INFINITY;
        for k in 0..20 {
            let r = 0.01 * 1.6f64.powi(k);
            let x = demand_under_test(&u, r, g, opts)?;
            if !(x < prev) {
                return Ok((false, format!("x({r}) = {x} not below {prev}")));
            }
            prev = x;
        }
    }
    Ok((true, "50 cost grids".into()))
}

fn random_resource_plan(rng: &mut ChaCha8Rng, m: usize) -> PricingPlan {
    PricingPlan::Resource {
        prices: (0..m).map(|_| log_uniform(rng, 0.5, 200.0)).collect(),
    }
}

fn revenue_decreasing(rng: &mut ChaCha8Rng, _: &VerifyOptions) -> Result<(bool, String)> {
    let inst = reference::clustered_instance().with_discount(0.9)?;
    let mut checked = 0;
    for _ in 0..100 {
        let PricingPlan::Resource { prices } = random_resource_plan(rng, inst.num_resources()) else {
            unreachable!()
        };
        let base = evaluate(&inst, &PricingPlan::Resource { prices: prices.clone() })?;
        for k in 0..prices.len() {
            let mut up = prices.clone();
            up[k] *= 1.0 + 1e-6;
            let bumped = evaluate(&inst, &PricingPlan::Resource { prices: up })?;
            if !(bumped.revenue < base.revenue) {
                return Ok((false, format!("∂ρ/∂p_{k} ≥ 0 at {prices:?}")));
            }
            checked += 1;
        }
    }
    Ok((true, format!("{checked} directional checks")))
}

fn lift_preserves(rng: &mut ChaCha8Rng, _: &VerifyOptions) -> Result<(bool, String)> {
    let inst = reference::clustered_instance();
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let plan = random_resource_plan(rng, inst.num_resources());
        let lifted = lift_resource_to_differentiated(&inst, &plan)?;
        let (a, b) = (evaluate(&inst, &plan)?, evaluate(&inst, &lifted)?);
        worst = worst.max(rel(b.revenue, a.revenue));
        for (x, y) in a.demand.iter().zip(&b.demand) {
            worst = worst.max(rel(*y, *x));
        }
    }
    Ok((worst <= 1e-12, format!("max relative difference {worst:.2e}")))
}

fn random_utilities(rng: &mut ChaCha8Rng, n: usize) -> Result<UtilityVector> {
    UtilityVector::new((0..n).map(|_| log_uniform(rng, 0.1, 10.0)).collect())
}

fn fairness_ranking(rng: &mut ChaCha8Rng, _: &VerifyOptions) -> Result<(bool, String)> {
    for _ in 0..500 {
        let beta = [0.3, 0.5, 2.0, 4.0][rng.random_range(0..4)];
        let n = rng.random_range(2..6);
        let (u, v) = (random_utilities(rng, n)?, random_utilities(rng, n)?);
        let spec = FairnessSpec::matching(beta)?;
        let by_beta = beta_fairness(&u, beta)?.total_cmp(&beta_fairness(&v, beta)?);
        let by_lambda = beta_lambda_fairness(&u, &spec)?.total_cmp(&beta_lambda_fairness(&v, &spec)?);
        if by_beta != by_lambda {
            return Ok((false, format!("rankings disagree at β = {beta}: {u:?} vs {v:?}")));
        }
    }
    Ok((true, "500 pairs".into()))
}

fn fairness_split(rng: &mut ChaCha8Rng, _: &VerifyOptions) -> Result<(bool, String)> {
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let beta = [0.3, 0.5, 2.0, 4.0][rng.random_range(0..4)];
        let lambda = rng.random_range(-2.0..2.0);
        let spec = FairnessSpec::new(beta, lambda)?;
        let n = rng.random_range(1..6);
        let u = random_utilities(rng, n)?;
        let s = equitability_efficiency_split(&u, &spec)?;
        worst = worst.max(rel(s.equitability * s.efficiency, beta_lambda_fairness(&u, &spec)?));
    }
    Ok((worst <= 1e-10, format!("max relative error {worst:.2e}")))
}

fn bounds_hold(rng: &mut ChaCha8Rng, _: &VerifyOptions) -> Result<(bool, String)> {
    let inst = reference::clustered_instance();
    let mut checked = 0;
    for _ in 0..200 {
        let plan = random_resource_plan(rng, inst.num_resources());
        if evaluate(&inst, &plan)?.violation(&inst).is_some() {
            continue;
        }
        for beta in [0.5, 2.0] {
            let check = tradeoff_bound_check(&inst, &plan, beta)?;
            if !check.holds {
                return Ok((false, format!("β = {beta}: {} vs {} at {plan:?}", check.lhs, check.rhs)));
            }
            checked += 1;
        }
    }
    Ok((checked > 0, format!("{checked} feasible plan checks")))
}

fn bounds_tight(_: &mut ChaCha8Rng, _: &VerifyOptions) -> Result<(bool, String)> {
    let inst = reference::single_type_instance();
    let mut worst: f64 = 0.0;
    for p in [0.5, 1.0, 3.0] {
        let plan = PricingPlan::Resource { prices: vec![p] };
        for beta in [0.5, 2.0] {
            worst = worst.max(tradeoff_bound_check(&inst, &plan, beta)?.slack.abs());
        }
    }
    Ok((worst <= 1e-9, format!("max |slack| {worst:.2e}")))
}

fn optimizer_toy(_: &mut ChaCha8Rng, _: &VerifyOptions) -> Result<(bool, String)> {
    let inst = reference::single_type_instance();
    let r = barrier_optimize(
        &inst,
        PlanKind::Differentiated,
        &ObjectiveSpec::new(1.0, 2.0)?,
        &SolverConfig::default(),
    )?;
    let p = r.plan.price_vector()[0];
    let ok = r.converged && (p - 0.5).abs() <= 1e-4 && (r.revenue - 2.0).abs() <= 1e-3;
    Ok((ok, format!("price {p:.6}, revenue {:.6}", r.revenue)))
}

fn bundled_nu(_: &mut ChaCha8Rng, _: &VerifyOptions) -> Result<(bool, String)> {
    let inst = reference::clustered_instance();
    let target = bundled_price_bisection(&inst, &default_bundle(&inst))?;
    let mut worst: f64 = 0.0;
    for nu in [0.0, 1.0, 100.0] {
        let r = barrier_optimize(
            &inst,
            PlanKind::Bundled,
            &ObjectiveSpec::new(nu, 2.0)?,
            &SolverConfig::default(),
        )?;
        worst = worst.max(rel(r.plan.price_vector()[0], target));
    }
    Ok((worst <= 1e-6, format!("max relative price difference {worst:.2e}")))
}

fn deadline_decouple(_: &mut ChaCha8Rng, _: &VerifyOptions) -> Result<(bool, String)> {
    let base = reference::clustered_instance();
    let intervals = [6.0, 3.0]
        .iter()
        .enumerate()
        .map(|(t, &mem)| {
            Ok(IntervalSpec::new(
                base.with_capacity(1, mem)?,
                vec![t + 1; base.num_types()],
                1.0,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let spec = HorizonSpec::new(2, intervals)?;
    let config = SolverConfig::default();
    let joint = solve_horizon(&build_program(&spec, PlanKind::Resource, 2.0, None)?, &config)?;
    let mut separate = 0.0;
    for iv in spec.intervals() {
        let Some(instance) = &iv.instance else { continue };
        separate +=
            barrier_optimize(instance, PlanKind::Resource, &ObjectiveSpec::new(iv.nu, 2.0)?, &config)?.objective;
    }
    let err = rel(joint.objective, separate);
    Ok((
        joint.feasible && err <= 1e-6,
        format!("relative objective difference {err:.2e}"),
    ))
}

fn kmeans_monotone(rng: &mut ChaCha8Rng, _: &VerifyOptions) -> Result<(bool, String)> {
    let pts: Vec<Vec<f64>> = (0..300)
        .map(|_| vec![rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)])
        .collect();
    let model = kmeans(&pts, 5, 10, rng.random())?;
    let rising = model.history.windows(2).any(|w| w[1] > w[0] * (1.0 + 1e-12));
    let best = model.restart_inertia.iter().all(|&i| model.inertia <= i);
    Ok((!rising && best, format!("{} iterations", model.iterations)))
}
