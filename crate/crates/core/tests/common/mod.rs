//! Generators shared by the integration test targets.
#![allow(dead_code)]

use cloudprice::demand::UtilityParams;
use cloudprice::pricing::{evaluate, Instance, PlanKind, PlanStructure, PricingPlan, ResourceModel, UserType};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo.ln()..hi.ln()).exp()
}

/// Random market with `α ∈ (0.2, 0.8)` and a discount satisfying
/// `γ > 1 − α_j` for every type.
pub fn random_instance(rng: &mut impl Rng, resources: usize, types: usize) -> Instance {
    let alphas: Vec<f64> = (0..types).map(|_| rng.random_range(0.2..0.8)).collect();
    let floor = alphas.iter().map(|a| 1.0 - a).fold(0.0, f64::max) + 0.05;
    let gamma = if rng.random_bool(0.5) {
        1.0
    } else {
        rng.random_range(floor..1.0)
    };
    let users = alphas
        .iter()
        .enumerate()
        .map(|(j, &alpha)| {
            let req = (0..resources).map(|_| rng.random_range(0.05..2.0)).collect();
            let utility = UtilityParams::new(alpha, rng.random_range(0.5..2.0)).unwrap();
            UserType::new(format!("t{j}"), rng.random_range(1..4), req, utility).unwrap()
        })
        .collect();
    let names = (0..resources).map(|i| format!("r{i}")).collect();
    let caps = (0..resources).map(|_| rng.random_range(1.0..10.0)).collect();
    Instance::new(ResourceModel::new(names, caps).unwrap(), users, gamma).unwrap()
}

/// [`random_instance`] with sizes drawn from inclusive ranges.
pub fn sized_instance(
    rng: &mut impl Rng,
    resources: std::ops::RangeInclusive<usize>,
    types: std::ops::RangeInclusive<usize>,
) -> Instance {
    let m = rng.random_range(resources);
    let n = rng.random_range(types);
    random_instance(rng, m, n)
}

/// Whether a plan is feasible and leaves every user positive surplus.
pub fn admissible(instance: &Instance, plan: &PricingPlan) -> bool {
    evaluate(instance, plan).is_ok_and(|o| o.feasible && o.net_utility.iter().all(|&u| u > 0.0))
}

/// Smallest uniform price (to 1e-9 relative) at which demand fits.
pub fn fitting_uniform_price(instance: &Instance, structure: &PlanStructure) -> f64 {
    let d = structure.dimension();
    let fits = |s: f64| admissible(instance, &structure.plan(&vec![s; d]));
    let (mut lo, mut hi) = (1.0, 1.0);
    while !fits(hi) {
        hi *= 2.0;
    }
    while fits(lo) && lo > 1e-12 {
        lo *= 0.5;
    }
    while hi / lo - 1.0 > 1e-9 {
        let mid = (lo * hi).sqrt();
        if fits(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Admissible price vector with coordinates `s·e^u`, `u ∈ (lo, hi)`, where
/// `s` is the smallest fitting uniform price. Rejection sampled.
pub fn random_admissible_prices(
    rng: &mut impl Rng,
    instance: &Instance,
    structure: &PlanStructure,
    base: f64,
    spread: (f64, f64),
) -> Vec<f64> {
    let d = structure.dimension();
    loop {
        let p: Vec<f64> = (0..d)
            .map(|_| base * rng.random_range(spread.0..spread.1).exp())
            .collect();
        if admissible(instance, &structure.plan(&p)) {
            return p;
        }
    }
}

pub fn structure(instance: &Instance, kind: PlanKind) -> PlanStructure {
    PlanStructure::new(instance, kind, None).unwrap()
}
