use crate::demand::optimal_demand;
use crate::error::{Error, Result};
use crate::pricing::{bundle_capacity, bundle_requirement, Instance};

/// Lowest bundle price at which total bundle demand fits the available
/// bundles, `Σ_j n_j·μ_j·x_j(μ_j^γ·p) = min_i C_i/b_i`.
///
/// Both revenue and fairness fall with the bundle price, so this price is
/// optimal for every revenue weight. Bisection runs in `ln p` and returns the
/// feasible end of the final bracket.
pub fn bundled_price_bisection(instance: &Instance, bundle: &[f64]) -> Result<f64> {
    let gamma = instance.discount();
    let mus = instance
        .user_types()
        .iter()
        .map(|u| bundle_requirement(u, bundle))
        .collect::<Result<Vec<_>>>()?;
    let target = bundle_capacity(instance.resources().capacities(), bundle);
    if !(target > 0.0) {
        return Err(Error::Infeasible(format!("only {target} bundles are available")));
    }
    let load = |p: f64| -> Result<f64> {
        let mut total = 0.0;
        for (user, mu) in instance.user_types().iter().zip(&mus) {
            let x = optimal_demand(&user.utility, mu.powf(gamma) * p, gamma)?;
            total += user.count as f64 * mu * x;
        }
        Ok(total)
    };
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    while load(hi)? > target {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Infeasible("bundle demand exceeds supply at every price".into()));
        }
    }
    while load(lo)? <= target {
        lo *= 0.5;
        if lo == 0.0 {
            return Err(Error::Infeasible(
                "bundle demand stays below supply as price vanishes".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mid <= lo || mid >= hi {
            break;
        }
        if load(mid)? > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reference;

    #[test]
    fn toy_price() {
        let p = bundled_price_bisection(&reference::single_type_instance(), &[1.0]).unwrap();
        assert!((p - 0.5).abs() < 1e-12, "{p}");
    }

    #[test]
    fn clustered_price_is_tight() {
        let inst = reference::clustered_instance();
        let p = bundled_price_bisection(&inst, &[1.0, 1.0]).unwrap();
        let load: f64 = inst
            .user_types()
            .iter()
            .map(|u| {
                let mu = u.requirements.iter().cloned().fold(0.0, f64::max);
                let x = (mu * p / u.utility.c()).powf(-1.0 / u.utility.alpha());
                u.count as f64 * mu * x
            })
            .sum();
        assert!((load - 6.0).abs() / 6.0 < 1e-8, "{load}");
        assert!(load <= 6.0 + 1e-9);
    }

    #[test]
    fn more_capacity_lowers_the_price() {
        let inst = reference::clustered_instance();
        let p = bundled_price_bisection(&inst, &[1.0, 1.0]).unwrap();
        let doubled = inst.with_capacity(0, 12.0).unwrap().with_capacity(1, 12.0).unwrap();
        let q = bundled_price_bisection(&doubled, &[1.0, 1.0]).unwrap();
        assert!(q < p);
    }
}
