//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness. The process fails when any criterion
//! fails, except criteria marked as a known defect of their own statement;
//! those still print FAIL together with the reason.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use cloudprice::deadline::{build_program, schedule_feasible, solve_horizon, HorizonSpec, IntervalSpec, Schedule};
use cloudprice::demand::{net_utility, optimal_demand, UtilityParams};
use cloudprice::fairness::{beta_fairness, beta_lambda_fairness, pareto_probe, FairnessSpec, UtilityVector};
use cloudprice::kmeans::kmeans;
use cloudprice::optimizer::{
    barrier_optimize, bundled_price_bisection, concavity_weight_bound, grid_oracle, objective, tradeoff_bound_check,
    GridSpec, ObjectiveSpec, SolverConfig,
};
use cloudprice::pricing::{default_bundle, evaluate, Instance, PlanKind, PricingPlan, ResourceModel, UserType};
use cloudprice::reference;
use cloudprice::sweep::{run_sweep, SweepParameter, SweepSpec};
use cloudprice::trace::{aggregate, parse_trace, TraceStats};
use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use num::{BigInt, Float, One, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Verdict {
    passed: bool,
    detail: String,
    /// Why a failure stems from the criterion's own statement.
    known_defect: Option<String>,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict {
        passed,
        detail,
        known_defect: None,
    }
}

type Criterion = (u32, &'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 13] = [
        (
            1,
            "closed-form demand matches the first-order-condition root",
            demand_identity,
        ),
        (2, "net utility identity", net_utility_identity),
        (3, "revenue decreases in every price", revenue_monotonicity),
        (4, "barrier solver matches the grid oracle", solver_vs_oracle),
        (
            5,
            "bundled price is independent of the revenue weight",
            bundled_nu_independence,
        ),
        (6, "plan dominance", plan_dominance),
        (
            7,
            "objective is concave below the revenue-weight bound",
            concavity_certificate,
        ),
        (8, "revenue/fairness tradeoff bounds", tradeoff_bounds),
        (
            9,
            "fairness ranking, Pareto probe and high-beta precision",
            fairness_properties,
        ),
        (10, "memory-capacity sweep trends", capacity_sweep_trends),
        (
            11,
            "deadline decoupling, deferral and schedule witnesses",
            deadline_criteria,
        ),
        (
            12,
            "k-means recovery, monotone objective and reproducibility",
            clustering,
        ),
        (13, "real trace statistics", real_trace_statistics),
    ];
    let mut hard_failures = 0;
    for (n, name, check) in criteria {
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        let secs = start.elapsed().as_secs_f64();
        if v.detail.starts_with("SKIP") {
            println!("SKIP criterion {n}: {name} ({}; {secs:.2} s)", v.detail);
            continue;
        }
        let status = if v.passed { "PASS" } else { "FAIL" };
        println!("{status} criterion {n}: {name} ({}; {secs:.2} s)", v.detail);
        if !v.passed {
            match &v.known_defect {
                Some(why) => println!("     known defect, not counted: {why}"),
                None => hard_failures += 1,
            }
        }
    }
    if hard_failures > 0 {
        println!("{hard_failures} criteria failed");
        std::process::exit(1);
    }
}

fn demand_tuples() -> Vec<(UtilityParams, f64, f64)> {
    let mut rng = rng(1);
    (0..1000)
        .map(|_| {
            let alpha = rng.random_range(0.05..0.95);
            let gamma = rng.random_range(1.0 - alpha + 0.05..=1.0);
            let c = rng.random_range(0.1..10.0);
            let r = rng.random_range(0.01..100.0);
            (UtilityParams::new(alpha, c).unwrap(), r, gamma)
        })
        .collect()
}

/// Root of `c·x^(−α) = γ·r·x^(γ−1)` by bisection on `ln x`.
fn bisection_demand(u: &UtilityParams, r: f64, gamma: f64) -> f64 {
    let excess = |y: f64| {
        let x = y.exp();
        u.c() * x.powf(-u.alpha()) - gamma * r * x.powf(gamma - 1.0)
    };
    let (mut lo, mut hi) = (-700.0f64, 700.0f64);
    assert!(excess(lo) > 0.0 && excess(hi) < 0.0, "root not bracketed");
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if excess(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (0.5 * (lo + hi)).exp()
}

fn demand_identity() -> Verdict {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (u, r, g) in demand_tuples() {
        worst = worst.max(rel(optimal_demand(&u, r, g).unwrap(), bisection_demand(&u, r, g)));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-9 && secs < 5.0,
        format!("1000 tuples, max relative error {worst:.2e}, {secs:.3} s"),
    )
}

fn net_utility_identity() -> Verdict {
    let mut worst: f64 = 0.0;
    for (u, r, g) in demand_tuples() {
        let x = bisection_demand(&u, r, g);
        let expected = (g / (1.0 - u.alpha()) - 1.0) * r * x.powf(g);
        worst = worst.max(rel(net_utility(&u, r, g).unwrap(), expected));
    }
    verdict(worst <= 1e-9, format!("1000 tuples, max relative error {worst:.2e}"))
}

fn revenue_monotonicity() -> Verdict {
    let mut rng = rng(3);
    let mut violations = 0;
    let mut checked = 0;
    for idx in 0..10 {
        let inst = sized_instance(&mut rng, 1..=3, 1..=3);
        let kind = [PlanKind::Resource, PlanKind::Differentiated, PlanKind::Bundled][idx % 3];
        let st = structure(&inst, kind);
        let base = fitting_uniform_price(&inst, &st);
        for _ in 0..200 {
            let p = random_admissible_prices(&mut rng, &inst, &st, base, (-0.5, 2.0));
            let revenue = |q: &[f64]| evaluate(&inst, &st.plan(q)).unwrap().revenue;
            for k in 0..p.len() {
                let h = 1e-6 * p[k];
                let (mut up, mut down) = (p.clone(), p.clone());
                up[k] += h;
                down[k] -= h;
                checked += 1;
                let slope = (revenue(&up) - revenue(&down)) / (2.0 * h);
                if slope.is_nan() || slope >= 0.0 {
                    violations += 1;
                }
            }
        }
    }
    // log utility with γ = 1 pays x*·r = c whatever the price
    let log_user = UserType::new("log", 1, vec![1.0], UtilityParams::new(1.0, 10.0).unwrap()).unwrap();
    let log_inst = Instance::new(
        ResourceModel::new(vec!["cpu".into()], vec![1e6]).unwrap(),
        vec![log_user],
        1.0,
    )
    .unwrap();
    let revenues: Vec<f64> = (0..200)
        .map(|_| {
            let p = rng.random_range(0.01..10.0 / std::f64::consts::E * 0.99);
            evaluate(&log_inst, &PricingPlan::Resource { prices: vec![p] })
                .unwrap()
                .revenue
        })
        .collect();
    let spread = revenues.iter().map(|r| (r - revenues[0]).abs()).fold(0.0, f64::max);
    verdict(
        violations == 0 && spread <= 1e-9,
        format!("{checked} partial derivatives, {violations} not negative; log-utility revenue spread {spread:.2e}"),
    )
}

/// Axis of step `1e-4` spanning three coarse cells either side of a coarse
/// grid optimum, which on a capacity ridge can sit a few cells away. A
/// coarse optimum on the lowest grid value points at a price tending to 0,
/// so that axis is log-spaced down to `1e-9` instead.
fn refined_axis(center: f64) -> Vec<f64> {
    if center <= 0.01 + 1e-12 {
        return (0..=200).map(|k| 1e-9 * (2e7f64).powf(k as f64 / 200.0)).collect();
    }
    let lo = (center - 0.03).max(1e-4);
    (0..=600).map(|k| lo + k as f64 * 1e-4).collect()
}

fn solver_vs_oracle() -> Verdict {
    let spec = ObjectiveSpec::new(1.0, 2.0).unwrap();
    let config = SolverConfig::default();
    let grid = GridSpec::range(0.01, 10.0, 0.01).unwrap();
    let (mut ok, mut coarse_ok) = (true, true);
    let mut notes = Vec::new();
    let cases = [
        ("toy", reference::single_type_instance(), PlanKind::Resource),
        (
            "clustered resource",
            reference::clustered_instance(),
            PlanKind::Resource,
        ),
        ("clustered bundled", reference::clustered_instance(), PlanKind::Bundled),
    ];
    for (name, inst, kind) in cases {
        let t = Instant::now();
        let barrier = barrier_optimize(&inst, kind, &spec, &config).unwrap();
        let barrier_secs = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let coarse = grid_oracle(&inst, kind, &spec, &grid).unwrap();
        let grid_secs = t.elapsed().as_secs_f64();
        let axes = coarse.plan.price_vector().iter().map(|&c| refined_axis(c)).collect();
        let fine = grid_oracle(&inst, kind, &spec, &GridSpec::new(axes)).unwrap();
        let coarse_err = rel(barrier.objective, coarse.objective);
        let fine_err = rel(barrier.objective, fine.objective);
        // the barrier may only beat a grid, never trail it
        let not_worse = barrier.objective >= coarse.objective - 1e-3 * coarse.objective.abs()
            && barrier.objective >= fine.objective - 1e-3 * fine.objective.abs();
        ok &= barrier.converged && not_worse && fine_err <= 1e-3 && barrier_secs < 10.0 && grid_secs < 10.0;
        coarse_ok &= coarse_err <= 1e-3;
        notes.push(format!(
            "{name} rel diff {coarse_err:.1e} at step 0.01, {fine_err:.1e} at step 1e-4 ({barrier_secs:.2}/{grid_secs:.2} s)"
        ));
        if name == "toy" {
            let (p, rho) = (barrier.plan.price_vector()[0], barrier.revenue);
            ok &= (p - 0.5).abs() <= 1e-6 && (rho - 2.0).abs() <= 1e-6;
            notes.push(format!("toy p* {p:.6} revenue {rho:.6}"));
        }
    }
    Verdict {
        passed: ok && coarse_ok,
        detail: notes.join(", "),
        known_defect: (ok && !coarse_ok).then(|| {
            "the step-0.01 grid cannot resolve these optima to 1e-3 (a price tends to 0, which the grid excludes, \
             or the optimum sits on a capacity boundary between grid points); the barrier beats that grid and \
             matches a step-1e-4 grid"
                .to_string()
        }),
    }
}

/// Price at which bundle load meets the bundle limit, by log bisection on
/// evaluated plans.
fn binding_bundle_price(inst: &Instance, bundle: &[f64]) -> f64 {
    let over = |p: f64| {
        let out = evaluate(
            inst,
            &PricingPlan::Bundled {
                bundle: bundle.to_vec(),
                price: p,
            },
        )
        .unwrap();
        out.bundle_load.unwrap() > out.bundle_limit.unwrap()
    };
    let (mut lo, mut hi) = (1e-6f64, 1e6f64);
    assert!(over(lo) && !over(hi));
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if over(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

fn bundled_nu_independence() -> Verdict {
    let config = SolverConfig::default().with_tolerance(1e-9);
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, inst) in [
        ("toy", reference::single_type_instance()),
        ("clustered", reference::clustered_instance()),
    ] {
        let bundle = default_bundle(&inst);
        let target = binding_bundle_price(&inst, &bundle);
        let library = bundled_price_bisection(&inst, &bundle).unwrap();
        ok &= rel(library, target) <= 1e-9;
        let out = evaluate(&inst, &PricingPlan::Bundled { bundle, price: target }).unwrap();
        let residual = (out.bundle_load.unwrap() - out.bundle_limit.unwrap()).abs();
        let prices: Vec<f64> = [0.0, 1.0, 100.0]
            .iter()
            .map(|&nu| {
                let r =
                    barrier_optimize(&inst, PlanKind::Bundled, &ObjectiveSpec::new(nu, 2.0).unwrap(), &config).unwrap();
                r.plan.price_vector()[0]
            })
            .collect();
        let spread = prices.iter().map(|p| rel(*p, prices[0])).fold(0.0, f64::max);
        let to_target = prices.iter().map(|p| rel(*p, target)).fold(0.0, f64::max);
        ok &= spread <= 1e-6 && to_target <= 1e-6 && residual < 1e-8;
        notes.push(format!(
            "{name}: spread {spread:.1e}, vs bisection {to_target:.1e}, residual {residual:.1e}"
        ));
    }
    verdict(ok, notes.join("; "))
}

/// `R^γ` elementwise, resources by types; per-type costs are `(R^γ)ᵀp`.
fn discounted_requirements(inst: &Instance) -> DMatrix<f64> {
    let g = inst.discount();
    DMatrix::from_fn(inst.num_resources(), inst.num_types(), |i, j| {
        inst.user_types()[j].requirements[i].powf(g)
    })
}

fn rank(inst: &Instance) -> usize {
    discounted_requirements(inst).rank(1e-10)
}

/// Whether per-type costs `r` equal `(R^γ)ᵀp` for some `p ≥ 0`. With full
/// column rank a nonnegative solution exists iff one of the basic solutions
/// on `n` resources is nonnegative.
fn reachable_with_resource_prices(inst: &Instance, r: &[f64]) -> bool {
    let a = discounted_requirements(inst).transpose();
    let (n, m) = a.shape();
    let target = nalgebra::DVector::from_row_slice(r);
    let scale = r.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    (0u32..1 << m)
        .filter(|mask| mask.count_ones() as usize == n)
        .any(|mask| {
            let cols: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            let sub = a.select_columns(&cols);
            sub.clone()
                .lu()
                .solve(&target)
                .is_some_and(|p| (&sub * &p - &target).amax() <= 1e-8 * scale && p.iter().all(|&v| v >= -1e-9 * scale))
        })
}

/// Random market whose types all have their largest `R_ij/C_i` on resource 0.
fn shared_dominant_instance(rng: &mut ChaCha8Rng) -> Instance {
    loop {
        let inst = sized_instance(rng, 2..=3, 1..=3);
        let caps = inst.resources().capacities();
        let shared = inst.user_types().iter().all(|u| {
            let shares: Vec<f64> = u.requirements.iter().zip(caps).map(|(r, c)| r / c).collect();
            shares.iter().skip(1).all(|s| *s < shares[0])
        });
        if shared {
            return inst;
        }
    }
}

fn plan_dominance() -> Verdict {
    let mut rng = rng(6);
    let spec = ObjectiveSpec::new(1.0, 2.0).unwrap();
    let config = SolverConfig::default().with_tolerance(1e-9);
    let mut unconverged = 0;
    let mut solve = |inst: &Instance, kind| {
        let r = barrier_optimize(inst, kind, &spec, &config).unwrap();
        unconverged += usize::from(!r.converged);
        r
    };
    let (mut dominance, mut equal_cases, mut bundled_cases, mut bundled_fail) = (0, 0, 0, 0);
    let (mut equal_fail, mut unreachable_fail) = (Vec::new(), Vec::new());
    let mut worst_equal: f64 = 0.0;
    for idx in 0..20 {
        let inst = if idx % 2 == 0 {
            sized_instance(&mut rng, 1..=3, 1..=3)
        } else {
            shared_dominant_instance(&mut rng)
        };
        let diff = solve(&inst, PlanKind::Differentiated);
        let res = solve(&inst, PlanKind::Resource).objective;
        let slack = 1e-6 * diff.objective.abs().max(res.abs());
        if diff.objective < res - slack {
            dominance += 1;
        }
        if rank(&inst) == inst.num_types() {
            equal_cases += 1;
            let err = rel(diff.objective, res);
            worst_equal = worst_equal.max(err);
            if err > 1e-6 {
                if reachable_with_resource_prices(&inst, &diff.plan.price_vector()) {
                    equal_fail.push(idx);
                } else {
                    unreachable_fail.push(idx);
                }
            }
        }
        if idx % 2 == 1 {
            bundled_cases += 1;
            let bund = solve(&inst, PlanKind::Bundled).objective;
            if res < bund - 1e-6 * res.abs().max(bund.abs()) {
                bundled_fail += 1;
            }
        }
    }
    let failed_equal = equal_fail.len() + unreachable_fail.len();
    let hard_ok = dominance == 0 && equal_fail.is_empty() && bundled_fail == 0 && unconverged == 0;
    Verdict {
        passed: hard_ok && unreachable_fail.is_empty(),
        detail: format!(
            "20 instances: differentiated < resource in {dominance}; full-rank equality {}/{equal_cases} \
             (max rel diff {worst_equal:.1e}, failing {equal_fail:?}, needing negative resource prices \
             {unreachable_fail:?}); resource < bundled in {bundled_fail}/{bundled_cases}; unconverged solves {unconverged}",
            equal_cases - failed_equal
        ),
        known_defect: (hard_ok && !unreachable_fail.is_empty()).then(|| {
            "rank(R) = n does not give equality: resource prices must be nonnegative, and the differentiated \
             optimum of the listed instances has per-type prices that only negative resource prices reproduce"
                .to_string()
        }),
    }
}

/// Hessian by central differences with Richardson extrapolation.
fn numeric_hessian(f: &dyn Fn(&[f64]) -> Option<f64>, p: &[f64], rel_step: f64) -> Option<DMatrix<f64>> {
    let d = p.len();
    let at = |h: f64| -> Option<DMatrix<f64>> {
        let mut hess = DMatrix::zeros(d, d);
        let f0 = f(p)?;
        for k in 0..d {
            for l in k..d {
                let (hk, hl) = (h * p[k], h * p[l]);
                let shifted = |sk: f64, sl: f64| {
                    let mut q = p.to_vec();
                    q[k] += sk * hk;
                    q[l] += sl * hl;
                    f(&q)
                };
                let v = if k == l {
                    (shifted(0.5, 0.5)? - 2.0 * f0 + shifted(-0.5, -0.5)?) / (hk * hk)
                } else {
                    (shifted(1.0, 1.0)? - shifted(1.0, -1.0)? - shifted(-1.0, 1.0)? + shifted(-1.0, -1.0)?)
                        / (4.0 * hk * hl)
                };
                hess[(k, l)] = v;
                hess[(l, k)] = v;
            }
        }
        Some(hess)
    };
    let coarse = at(rel_step)?;
    let fine = at(rel_step / 2.0)?;
    Some((fine * 4.0 - coarse) / 3.0)
}

fn concavity_certificate() -> Verdict {
    let single = {
        let u = UserType::new("u", 1, vec![0.6, 0.5], UtilityParams::new(0.5, 1.0).unwrap()).unwrap();
        let res = ResourceModel::new(vec!["cpu".into(), "mem".into()], vec![6.0, 6.0]).unwrap();
        Instance::new(res, vec![u], 1.0).unwrap()
    };
    let cases = [
        (
            "single-type differentiated beta=20",
            single,
            PlanKind::Differentiated,
            20.0,
        ),
        (
            "clustered resource beta=5",
            reference::clustered_instance(),
            PlanKind::Resource,
            5.0,
        ),
        (
            "clustered resource beta=20",
            reference::clustered_instance(),
            PlanKind::Resource,
            20.0,
        ),
    ];
    let mut rng = rng(7);
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, inst, kind, beta) in cases {
        let bound = concavity_weight_bound(&inst, beta, inst.discount());
        let spec = ObjectiveSpec::new(0.99 * bound, beta).unwrap();
        let st = structure(&inst, kind);
        let base = fitting_uniform_price(&inst, &st);
        let f = |q: &[f64]| objective(&inst, &st.plan(q), &spec).ok().filter(|v| v.is_finite());
        let mut worst = f64::NEG_INFINITY;
        let mut points = 0;
        while points < 100 {
            let p = random_admissible_prices(&mut rng, &inst, &st, base, (0.01, 1.5));
            let Some(h) = numeric_hessian(&f, &p, 1e-4) else {
                continue;
            };
            points += 1;
            let eig = SymmetricEigen::new(h).eigenvalues;
            let scale = eig.iter().map(|e| e.abs()).fold(0.0, f64::max);
            worst = worst.max(eig.max() / scale);
        }
        ok &= worst <= 1e-6;
        notes.push(format!("{name}: bound {bound:.3e}, max scaled eigenvalue {worst:.2e}"));
    }
    verdict(ok, notes.join("; "))
}

fn tradeoff_bounds() -> Verdict {
    let mut rng = rng(8);
    let (mut checked, mut violated) = (0, 0);
    let mut plans = 0;
    while plans < 1000 {
        let inst = sized_instance(&mut rng, 1..=3, 1..=3);
        let kind = PlanKind::ALL[rng.random_range(0..3)];
        let st = structure(&inst, kind);
        let base = fitting_uniform_price(&inst, &st);
        for _ in 0..10 {
            let plan = st.plan(&random_admissible_prices(&mut rng, &inst, &st, base, (0.0, 2.0)));
            plans += 1;
            for beta in [0.5, 2.0] {
                checked += 1;
                if !tradeoff_bound_check(&inst, &plan, beta).unwrap().holds {
                    violated += 1;
                }
            }
        }
    }
    // one α = 0.5, γ = 1 user: both bounds are equalities
    let mut worst_slack: f64 = 0.0;
    for _ in 0..100 {
        let c = rng.random_range(0.5..2.0);
        let req = vec![rng.random_range(0.1..2.0)];
        let u = UserType::new("u", 1, req, UtilityParams::new(0.5, c).unwrap()).unwrap();
        let inst = Instance::new(ResourceModel::new(vec!["cpu".into()], vec![1e9]).unwrap(), vec![u], 1.0).unwrap();
        let plan = PricingPlan::Resource {
            prices: vec![log_uniform(&mut rng, 0.01, 10.0)],
        };
        for beta in [0.5, 2.0] {
            let b = tradeoff_bound_check(&inst, &plan, beta).unwrap();
            worst_slack = worst_slack.max(b.slack.abs() / b.lhs.abs().max(1.0));
        }
    }
    verdict(
        violated == 0 && worst_slack <= 1e-9,
        format!("{checked} checks at {plans} plans, {violated} violated; single-type max |slack| {worst_slack:.1e}"),
    )
}

fn random_utilities(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| log_uniform(rng, 0.01, 100.0)).collect()
}

fn random_beta(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let b = rng.random_range(0.1..5.0);
        if (b - 1.0f64).abs() > 1e-3 {
            return b;
        }
    }
}

/// `−Σ u^(−19) / 19` in fixed-point integer arithmetic with at least 200
/// significant bits, far beyond the `f64` result.
fn exact_beta20(values: &[f64]) -> f64 {
    let parts: Vec<(u64, i64)> = values
        .iter()
        .map(|&v| {
            let (m, e, _) = Float::integer_decode(v);
            (m, e as i64)
        })
        .collect();
    // v = m·2^e, so v^(−19)·2^scale = 2^(scale − 19e) / m^19
    let scale = 200 + 19 * 64 + parts.iter().map(|(_, e)| -19 * e).max().unwrap();
    let mut sum = BigInt::zero();
    for &(m, e) in &parts {
        let shift = scale - 19 * e;
        sum += (BigInt::one() << shift as usize) / BigInt::from(m).pow(19);
    }
    let drop = sum.bits().saturating_sub(64);
    let top = (&sum >> drop as usize).to_u64().unwrap() as f64;
    -top * 2f64.powi((drop as i64 - scale) as i32) / 19.0
}

fn fairness_properties() -> Verdict {
    let mut rng = rng(9);
    let mut rank_mismatch = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..8);
        let beta = random_beta(&mut rng);
        let u = UtilityVector::new(random_utilities(&mut rng, n)).unwrap();
        let v = UtilityVector::new(random_utilities(&mut rng, n)).unwrap();
        let spec = FairnessSpec::matching(beta).unwrap();
        let plain = beta_fairness(&u, beta).unwrap() - beta_fairness(&v, beta).unwrap();
        let lambda = beta_lambda_fairness(&u, &spec).unwrap() - beta_lambda_fairness(&v, &spec).unwrap();
        if plain.signum() != lambda.signum() {
            rank_mismatch += 1;
        }
    }

    // dominating pairs with (β, λ) drawn under |λ| ≥ 1/β − 1
    let (mut probe_false, mut monotone_pairs, mut monotone_false) = (0, 0, 0);
    for _ in 0..1000 {
        let beta = random_beta(&mut rng);
        let floor = (1.0 / beta - 1.0).max(0.0);
        let magnitude = rng.random_range(floor..floor + 5.0);
        let lambda = if rng.random_bool(0.5) { magnitude } else { -magnitude };
        let spec = FairnessSpec::new(beta, lambda).unwrap();
        assert!(spec.satisfies_pareto_condition());
        let n = rng.random_range(1..8);
        let v = random_utilities(&mut rng, n);
        let mut u: Vec<f64> = v.iter().map(|x| x * (1.0 + rng.random_range(0.0..0.5))).collect();
        let j = rng.random_range(0..n);
        u[j] = v[j] * (1.0 + rng.random_range(0.01..0.5));
        let holds = pareto_probe(&spec, &UtilityVector::new(u).unwrap(), &UtilityVector::new(v).unwrap()).unwrap();
        if !holds {
            probe_false += 1;
        }
        if spec.is_monotone() {
            monotone_pairs += 1;
            if !holds {
                monotone_false += 1;
            }
        }
    }

    let mut worst_precision: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..50);
        let values: Vec<f64> = (0..n).map(|_| log_uniform(&mut rng, 1e-6, 1e6)).collect();
        let fast = beta_fairness(&UtilityVector::new(values.clone()).unwrap(), 20.0).unwrap();
        worst_precision = worst_precision.max(rel(fast, exact_beta20(&values)));
    }

    let detail = format!(
        "ranking mismatches {rank_mismatch}/1000; Pareto probe false on {probe_false}/1000 pairs \
         ({monotone_false}/{monotone_pairs} under sgn(1-beta)*lambda >= |1/beta-1|); \
         beta=20 max relative error {worst_precision:.1e}"
    );
    let others_pass = rank_mismatch == 0 && worst_precision <= 1e-6 && monotone_false == 0;
    Verdict {
        passed: others_pass && probe_false == 0,
        detail,
        known_defect: (others_pass && probe_false > 0).then(|| {
            "|lambda| >= 1/beta - 1 does not make beta-lambda fairness increasing: for beta > 1 it admits \
             every lambda, and lambda > 1/beta - 1 with beta > 1 or lambda < 0 with beta < 1 rewards \
             lowering utilities; all pairs pass under sgn(1-beta)*lambda >= |1/beta-1|"
                .to_string()
        }),
    }
}

fn capacity_sweep_trends() -> Verdict {
    let inst = reference::clustered_instance();
    let spec = SweepSpec {
        parameter: SweepParameter::Capacity("mem".into()),
        start: 1.0 / 3.0,
        stop: 8.0,
        steps: 24,
        nus: vec![0.0, 1.0, 100.0],
        beta: 20.0,
        plans: PlanKind::ALL.to_vec(),
        population: None,
    };
    let start = Instant::now();
    let rows = run_sweep(&inst, &spec, &SolverConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let failed = rows.iter().filter(|r| r.error.is_some() || !r.converged).count();
    let mut decreases = 0;
    for nu in &spec.nus {
        for plan in PlanKind::ALL {
            let series: Vec<_> = rows.iter().filter(|r| r.nu == *nu && r.plan == plan).collect();
            for w in series.windows(2) {
                let drop = |a: f64, b: f64| b < a - 1e-6 * a.abs();
                if drop(w[0].revenue, w[1].revenue) || drop(w[0].fairness, w[1].fairness) {
                    decreases += 1;
                }
            }
        }
    }
    let mut order_violations = 0;
    for nu in &spec.nus {
        for value in spec.values() {
            let f = |plan| {
                rows.iter()
                    .find(|r| r.nu == *nu && r.value == value && r.plan == plan)
                    .map(|r| r.fairness)
                    .unwrap()
            };
            let (d, r, b) = (f(PlanKind::Differentiated), f(PlanKind::Resource), f(PlanKind::Bundled));
            if d < r - 1e-6 * r.abs() || r < b - 1e-6 * b.abs() {
                order_violations += 1;
            }
        }
    }
    verdict(
        failed == 0 && decreases == 0 && order_violations == 0 && secs < 120.0,
        format!(
            "{} rows, {failed} unsolved, {decreases} decreasing steps, {order_violations} fairness-order violations",
            rows.len()
        ),
    )
}

/// Largest violation of the schedule constraints, computed from scratch.
fn schedule_violation(spec: &HorizonSpec, demands: &[Vec<f64>], schedule: &Schedule) -> f64 {
    let mut worst: f64 = 0.0;
    for (v, x) in &schedule.entries {
        let deadline = spec.intervals()[v.submitted - 1].deadlines[v.user_type];
        worst = worst.max(-x);
        if v.processed < v.submitted || v.processed > deadline {
            worst = worst.max(x.abs());
        }
    }
    for (s, interval) in spec.intervals().iter().enumerate() {
        for (j, user) in interval.user_types().iter().enumerate() {
            let served: f64 = schedule
                .entries
                .iter()
                .filter(|(v, _)| v.submitted == s + 1 && v.user_type == j)
                .map(|(_, x)| x)
                .sum();
            worst = worst.max(user.count as f64 * demands[s][j] - served);
        }
    }
    for t in 1..=spec.horizon() {
        for (i, cap) in spec.capacities(t).iter().enumerate() {
            let used: f64 = schedule
                .entries
                .iter()
                .filter(|(v, _)| v.processed == t)
                .map(|(v, x)| spec.intervals()[v.submitted - 1].user_types()[v.user_type].requirements[i] * x)
                .sum();
            worst = worst.max(used - cap);
        }
    }
    worst
}

fn deadline_criteria() -> Verdict {
    let config = SolverConfig::default();
    let base = reference::clustered_instance();
    let intervals: Vec<IntervalSpec> = [6.0, 3.0, 9.0]
        .iter()
        .enumerate()
        .map(|(t, &mem)| IntervalSpec::new(base.with_capacity(1, mem).unwrap(), vec![t + 1; 3], [1.0, 0.0, 10.0][t]))
        .collect();
    let spec = HorizonSpec::new(3, intervals).unwrap();
    let joint = solve_horizon(&build_program(&spec, PlanKind::Resource, 2.0, None).unwrap(), &config).unwrap();
    let (mut revenue, mut fairness, mut total) = (0.0, 0.0, 0.0);
    for iv in spec.intervals() {
        let inst = iv.instance.as_ref().unwrap();
        let r = barrier_optimize(
            inst,
            PlanKind::Resource,
            &ObjectiveSpec::new(iv.nu, 2.0).unwrap(),
            &config,
        )
        .unwrap();
        revenue += r.revenue;
        fairness += r.fairness;
        total += r.objective;
    }
    let decouple = rel(joint.revenue, revenue)
        .max(rel(joint.fairness, fairness))
        .max(rel(joint.objective, total));

    let unit = ResourceModel::new(vec!["cpu".into()], vec![1.0]).unwrap();
    let user = UserType::new("u", 1, vec![1.0], UtilityParams::new(0.5, 1.0).unwrap()).unwrap();
    let busy = Instance::new(unit.clone(), vec![user], 1.0).unwrap();
    let toy = HorizonSpec::new(2, vec![IntervalSpec::new(busy, vec![2], 1.0), IntervalSpec::idle(unit)]).unwrap();
    let toy_result = solve_horizon(&build_program(&toy, PlanKind::Resource, 2.0, None).unwrap(), &config).unwrap();
    let deferred = toy_result.schedule.jobs(0, 1, 2);

    let mut rng = rng(11);
    let (mut witnesses, mut worst_witness) = (0, 0.0f64);
    while witnesses < 200 {
        let horizon = rng.random_range(1..=4);
        let intervals: Vec<IntervalSpec> = (1..=horizon)
            .map(|s| {
                let inst = sized_instance(&mut rng, 2..=2, 1..=3);
                let inst = if s == 1 { inst } else { align_resources(inst, 2) };
                let deadlines = (0..inst.num_types()).map(|_| rng.random_range(s..=horizon)).collect();
                IntervalSpec::new(inst, deadlines, 1.0)
            })
            .collect();
        let spec = HorizonSpec::new(horizon, intervals).unwrap();
        let demands: Vec<Vec<f64>> = spec
            .intervals()
            .iter()
            .map(|iv| (0..iv.num_types()).map(|_| rng.random_range(0.0..2.0)).collect())
            .collect();
        let check = schedule_feasible(&demands, &spec).unwrap();
        if let Some(schedule) = check.schedule.filter(|_| check.feasible) {
            witnesses += 1;
            worst_witness = worst_witness.max(schedule_violation(&spec, &demands, &schedule));
        }
    }
    verdict(
        decouple <= 1e-6 && deferred > 0.0 && toy_result.feasible && worst_witness <= 1e-9,
        format!(
            "decoupled totals rel diff {decouple:.1e}; deferred jobs {deferred:.4}; {witnesses} witnesses, max violation {worst_witness:.1e}"
        ),
    )
}

/// Renames resources to `r0..` so intervals share one resource list.
fn align_resources(inst: Instance, m: usize) -> Instance {
    let names = (0..m).map(|i| format!("r{i}")).collect();
    let res = ResourceModel::new(names, inst.resources().capacities().to_vec()).unwrap();
    Instance::new(res, inst.user_types().to_vec(), inst.discount()).unwrap()
}

fn clustering() -> Verdict {
    let centers = [[1.0, 1.0], [5.0, 1.0], [3.0, 5.0]];
    let separation = 4.0;
    let noise = Normal::new(0.0, 0.01 * separation).unwrap();
    let mut rng = rng(12);
    let mut points = Vec::new();
    for c in &centers {
        for _ in 0..100 {
            points.push(vec![c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)]);
        }
    }
    let model = kmeans(&points, 3, 30, 42).unwrap();
    let mut worst_centroid: f64 = 0.0;
    for c in &centers {
        let nearest = model
            .centroids
            .iter()
            .map(|m| ((m[0] - c[0]).powi(2) + (m[1] - c[1]).powi(2)).sqrt() / (c[0].hypot(c[1])))
            .fold(f64::INFINITY, f64::min);
        worst_centroid = worst_centroid.max(nearest);
    }

    // overlapping blobs make Lloyd iterate for a while
    let wide = Normal::new(0.0, 1.5).unwrap();
    let messy: Vec<Vec<f64>> = (0..400)
        .map(|i| {
            let c = centers[i % 3];
            vec![c[0] + wide.sample(&mut rng), c[1] + wide.sample(&mut rng)]
        })
        .collect();
    let mut increases = 0;
    let mut steps = 0;
    for seed in 0..50 {
        let m = kmeans(&messy, 4, 1, seed).unwrap();
        steps += m.history.len();
        increases += m.history.windows(2).filter(|w| w[1] > w[0]).count();
    }

    let first = serde_json::to_vec(&kmeans(&messy, 4, 30, 5).unwrap()).unwrap();
    let second = serde_json::to_vec(&kmeans(&messy, 4, 30, 5).unwrap()).unwrap();
    verdict(
        worst_centroid <= 0.05 && increases == 0 && first == second,
        format!(
            "max centroid error {:.2}%; {increases} objective increases over {steps} iterations; seeded runs identical: {}",
            worst_centroid * 100.0,
            first == second
        ),
    )
}

fn real_trace_statistics() -> Verdict {
    let Ok(path) = std::env::var("CLOUDPRICE_GOOGLE_TRACE") else {
        return verdict(true, "SKIP: set CLOUDPRICE_GOOGLE_TRACE to the trace CSV to run".into());
    };
    let jobs = aggregate(&parse_trace(&path).unwrap());
    let stats = TraceStats::of(&jobs);
    let (cv_cpu, cv_mem) = stats.variation();
    let near = |got: f64, want: f64| (got - want).abs() <= 0.05 * want;
    verdict(
        near(stats.mean_cpu, 0.136) && near(stats.mean_mem, 0.182) && near(cv_cpu, 13.4) && near(cv_mem, 18.0),
        format!(
            "{} jobs, means {:.4}/{:.4}, std/mean {cv_cpu:.2}/{cv_mem:.2}",
            stats.jobs, stats.mean_cpu, stats.mean_mem
        ),
    )
}
