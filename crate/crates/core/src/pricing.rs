//! Market description, the three pricing plans and plan evaluation.
//!
//! Discounts apply to money, never to capacity. A resource plan charges type
//! `j` the per-job cost `r_j = Σ_i p_i·R_ij^γ`, billed as `r_j·x_j^γ`, while
//! usage is the undiscounted `Σ_j n_j·R_ij·x_j`. Demand is always evaluated
//! at the discounted cost, including where an undiscounted `Σ_i p_i·R_ij`
//! would be the literal alternative.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::demand::{self, check_discount, UtilityParams};
use crate::error::{invalid, Error, Result};

/// Absolute tolerance on usage versus capacity.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Named resources and their capacities.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceModel {
    names: Vec<String>,
    capacities: Vec<f64>,
}

impl ResourceModel {
    /// Capacities must be finite and nonnegative. Zero is accepted so that
    /// empty markets can be described; every priced resource is then
    /// infeasible for positive demand.
    pub fn new(names: Vec<String>, capacities: Vec<f64>) -> Result<Self> {
        if names.is_empty() {
            return Err(invalid("resources", "at least one resource is required"));
        }
        if names.len() != capacities.len() {
            return Err(Error::Dimension(format!(
                "{} resource names but {} capacities",
                names.len(),
                capacities.len()
            )));
        }
        for (i, &cap) in capacities.iter().enumerate() {
            if !(cap >= 0.0 && cap.is_finite()) {
                return Err(invalid(
                    format!("resources[{i}].capacity"),
                    format!("must be finite and nonnegative, got {cap}"),
                ));
            }
        }
        Ok(Self { names, capacities })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// A population of identical users.
#[derive(Debug, Clone, PartialEq)]
pub struct UserType {
    pub label: String,
    pub count: u32,
    /// Per-job requirement of each resource.
    pub requirements: Vec<f64>,
    pub utility: UtilityParams,
}

impl UserType {
    pub fn new(label: impl Into<String>, count: u32, requirements: Vec<f64>, utility: UtilityParams) -> Result<Self> {
        let user = Self {
            label: label.into(),
            count,
            requirements,
            utility,
        };
        user.check("user_type")?;
        Ok(user)
    }

    fn check(&self, path: &str) -> Result<()> {
        if self.count == 0 {
            return Err(invalid(format!("{path}.count"), "must be at least 1"));
        }
        for (i, &r) in self.requirements.iter().enumerate() {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(invalid(
                    format!("{path}.requirements[{i}]"),
                    format!("must be finite and nonnegative, got {r}"),
                ));
            }
        }
        if !self.requirements.iter().any(|&r| r > 0.0) {
            return Err(invalid(
                format!("{path}.requirements"),
                "at least one requirement must be positive",
            ));
        }
        Ok(())
    }
}

/// Resources, user types and the volume discount `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    resources: ResourceModel,
    user_types: Vec<UserType>,
    discount: f64,
}

impl Instance {
    pub fn new(resources: ResourceModel, user_types: Vec<UserType>, discount: f64) -> Result<Self> {
        if user_types.is_empty() {
            return Err(invalid("user_types", "at least one user type is required"));
        }
        for (j, user) in user_types.iter().enumerate() {
            let path = format!("user_types[{j}]");
            if user.requirements.len() != resources.len() {
                return Err(Error::Dimension(format!(
                    "{path}.requirements has {} entries for {} resources",
                    user.requirements.len(),
                    resources.len()
                )));
            }
            user.check(&path)?;
            check_discount(&user.utility, discount).map_err(|e| match e {
                Error::InvalidParameter { reason, .. } => invalid("gamma", reason),
                Error::DiscountTooDeep { .. } => invalid("gamma", format!("{e} for {path}")),
                other => other,
            })?;
        }
        Ok(Self {
            resources,
            user_types,
            discount,
        })
    }

    pub fn resources(&self) -> &ResourceModel {
        &self.resources
    }

    pub fn user_types(&self) -> &[UserType] {
        &self.user_types
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn num_resources(&self) -> usize {
        self.resources.len()
    }

    pub fn num_types(&self) -> usize {
        self.user_types.len()
    }

    /// Total number of users across types.
    pub fn population(&self) -> u64 {
        self.user_types.iter().map(|u| u.count as u64).sum()
    }

    /// Same market with a different volume discount.
    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        Self::new(self.resources.clone(), self.user_types.clone(), discount)
    }

    /// Same market with resource `index` resized.
    pub fn with_capacity(&self, index: usize, capacity: f64) -> Result<Self> {
        if index >= self.num_resources() {
            return Err(Error::Dimension(format!("no resource with index {index}")));
        }
        let mut caps = self.resources.capacities.clone();
        caps[index] = capacity;
        let resources = ResourceModel::new(self.resources.names.clone(), caps)?;
        Self::new(resources, self.user_types.clone(), self.discount)
    }

    /// Same market with new type populations.
    pub fn with_counts(&self, counts: &[u32]) -> Result<Self> {
        if counts.len() != self.num_types() {
            return Err(Error::Dimension(format!(
                "{} counts for {} user types",
                counts.len(),
                self.num_types()
            )));
        }
        let mut users = self.user_types.clone();
        for (user, &count) in users.iter_mut().zip(counts) {
            user.count = count;
        }
        Self::new(self.resources.clone(), users, self.discount)
    }

    /// Parses the JSON instance format, reporting the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        file.into_instance()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            resources: self
                .resources
                .names
                .iter()
                .zip(&self.resources.capacities)
                .map(|(name, &capacity)| ResourceEntry {
                    name: name.clone(),
                    capacity,
                })
                .collect(),
            user_types: self
                .user_types
                .iter()
                .map(|u| UserTypeEntry {
                    label: u.label.clone(),
                    count: u.count,
                    alpha: u.utility.alpha(),
                    c: u.utility.c(),
                    requirements: u.requirements.clone(),
                })
                .collect(),
            gamma: self.discount,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serializes")
    }
}

/// On-disk instance layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub resources: Vec<ResourceEntry>,
    pub user_types: Vec<UserTypeEntry>,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceEntry {
    pub name: String,
    pub capacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserTypeEntry {
    pub label: String,
    pub count: u32,
    pub alpha: f64,
    pub c: f64,
    pub requirements: Vec<f64>,
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<Instance> {
        let (names, caps) = self.resources.into_iter().map(|r| (r.name, r.capacity)).unzip();
        let resources = ResourceModel::new(names, caps)?;
        let mut users = Vec::with_capacity(self.user_types.len());
        for (j, entry) in self.user_types.into_iter().enumerate() {
            let utility = UtilityParams::new(entry.alpha, entry.c).map_err(|e| match e {
                Error::InvalidParameter { field, reason } => invalid(format!("user_types[{j}].{field}"), reason),
                other => other,
            })?;
            users.push(UserType {
                label: entry.label,
                count: entry.count,
                requirements: entry.requirements,
                utility,
            });
        }
        Instance::new(resources, users, self.gamma)
    }
}

/// Which family of prices the operator sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanKind {
    Bundled,
    Resource,
    Differentiated,
}

impl PlanKind {
    pub const ALL: [PlanKind; 3] = [PlanKind::Bundled, PlanKind::Resource, PlanKind::Differentiated];

    pub fn as_str(&self) -> &'static str {
        match self {
            PlanKind::Bundled => "bundled",
            PlanKind::Resource => "resource",
            PlanKind::Differentiated => "differentiated",
        }
    }
}

impl fmt::Display for PlanKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PlanKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bundled" => Ok(PlanKind::Bundled),
            "resource" => Ok(PlanKind::Resource),
            "differentiated" => Ok(PlanKind::Differentiated),
            other => Err(invalid(
                "plan",
                format!("expected bundled, resource or differentiated, got `{other}`"),
            )),
        }
    }
}

/// A concrete set of prices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PricingPlan {
    Bundled { bundle: Vec<f64>, price: f64 },
    Resource { prices: Vec<f64> },
    Differentiated { prices: Vec<f64> },
}

impl PricingPlan {
    pub fn kind(&self) -> PlanKind {
        match self {
            PricingPlan::Bundled { .. } => PlanKind::Bundled,
            PricingPlan::Resource { .. } => PlanKind::Resource,
            PricingPlan::Differentiated { .. } => PlanKind::Differentiated,
        }
    }

    /// The free price variables, in optimizer order.
    pub fn price_vector(&self) -> Vec<f64> {
        match self {
            PricingPlan::Bundled { price, .. } => vec![*price],
            PricingPlan::Resource { prices } | PricingPlan::Differentiated { prices } => prices.clone(),
        }
    }

    /// Checks dimensions and sign constraints against an instance.
    pub fn validate(&self, instance: &Instance) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match self {
            PricingPlan::Bundled { bundle, price } => {
                check_bundle(bundle, instance.num_resources())?;
                if !positive(*price) {
                    return Err(invalid("price", format!("must be positive, got {price}")));
                }
            }
            PricingPlan::Resource { prices } => {
                expect_len("prices", prices.len(), instance.num_resources())?;
                for (i, &p) in prices.iter().enumerate() {
                    if !(p >= 0.0 && p.is_finite()) {
                        return Err(invalid(format!("prices[{i}]"), format!("must be nonnegative, got {p}")));
                    }
                }
                if !prices.iter().any(|&p| p > 0.0) {
                    return Err(invalid("prices", "at least one resource price must be positive"));
                }
            }
            PricingPlan::Differentiated { prices } => {
                expect_len("prices", prices.len(), instance.num_types())?;
                for (j, &p) in prices.iter().enumerate() {
                    if !positive(p) {
                        return Err(invalid(format!("prices[{j}]"), format!("must be positive, got {p}")));
                    }
                }
            }
        }
        Ok(())
    }
}

fn expect_len(field: &str, got: usize, want: usize) -> Result<()> {
    if got == want {
        Ok(())
    } else {
        Err(Error::Dimension(format!("{field} has {got} entries, expected {want}")))
    }
}

fn check_bundle(bundle: &[f64], resources: usize) -> Result<()> {
    expect_len("bundle", bundle.len(), resources)?;
    for (i, &b) in bundle.iter().enumerate() {
        if !(b > 0.0 && b.is_finite()) {
            return Err(invalid(format!("bundle[{i}]"), format!("must be positive, got {b}")));
        }
    }
    Ok(())
}

/// Bundles a user needs per job: `max_i R_ij / b_i`.
pub fn bundle_requirement(user: &UserType, bundle: &[f64]) -> Result<f64> {
    check_bundle(bundle, user.requirements.len())?;
    Ok(user
        .requirements
        .iter()
        .zip(bundle)
        .map(|(r, b)| r / b)
        .fold(0.0, f64::max))
}

/// Default bundle: proportional to capacity, scaled so its largest entry is 1.
/// Falls back to all ones when every capacity is zero.
pub fn default_bundle(instance: &Instance) -> Vec<f64> {
    let caps = instance.resources().capacities();
    let max = caps.iter().cloned().fold(0.0, f64::max);
    if caps.iter().all(|&c| c > 0.0) {
        caps.iter().map(|c| c / max).collect()
    } else {
        vec![1.0; caps.len()]
    }
}

/// Per-job cost of type `j` under a plan.
pub fn per_job_cost(instance: &Instance, plan: &PricingPlan, j: usize) -> Result<f64> {
    let user = instance
        .user_types()
        .get(j)
        .ok_or_else(|| Error::Dimension(format!("no user type with index {j}")))?;
    let gamma = instance.discount();
    let r = match plan {
        PricingPlan::Bundled { bundle, price } => bundle_requirement(user, bundle)?.powf(gamma) * price,
        PricingPlan::Resource { prices } => {
            expect_len("prices", prices.len(), instance.num_resources())?;
            prices
                .iter()
                .zip(&user.requirements)
                .map(|(p, r)| if *r > 0.0 { p * r.powf(gamma) } else { 0.0 })
                .sum()
        }
        PricingPlan::Differentiated { prices } => {
            expect_len("prices", prices.len(), instance.num_types())?;
            prices[j]
        }
    };
    if r > 0.0 && r.is_finite() {
        Ok(r)
    } else {
        Err(Error::NonPositiveCost(r))
    }
}

/// Evaluation of a plan on an instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub plan: PlanKind,
    pub demand: Vec<f64>,
    pub per_job_cost: Vec<f64>,
    pub net_utility: Vec<f64>,
    pub revenue: f64,
    pub usage: Vec<f64>,
    pub leftover: Vec<f64>,
    /// Bundles consumed and bundles available, bundled plans only.
    pub bundle_load: Option<f64>,
    pub bundle_limit: Option<f64>,
    pub feasible: bool,
}

impl Outcome {
    /// Net utilities expanded to one entry per user.
    pub fn expanded_utilities(&self, instance: &Instance) -> Vec<f64> {
        instance
            .user_types()
            .iter()
            .zip(&self.net_utility)
            .flat_map(|(u, &v)| std::iter::repeat_n(v, u.count as usize))
            .collect()
    }

    /// First violated capacity constraint, if any.
    pub fn violation(&self, instance: &Instance) -> Option<String> {
        if let (Some(load), Some(limit)) = (self.bundle_load, self.bundle_limit) {
            if load > limit + FEASIBILITY_TOL {
                return Some(format!("bundle load {load} exceeds available bundles {limit}"));
            }
        }
        let res = instance.resources();
        res.capacities()
            .iter()
            .zip(&self.usage)
            .zip(res.names())
            .find(|((cap, used), _)| **used > **cap + FEASIBILITY_TOL)
            .map(|((cap, used), name)| format!("resource `{name}` usage {used} exceeds capacity {cap}"))
    }
}

/// Demand, revenue and resource usage of a plan. Infeasibility is recorded,
/// not raised.
pub fn evaluate(instance: &Instance, plan: &PricingPlan) -> Result<Outcome> {
    plan.validate(instance)?;
    let gamma = instance.discount();
    let m = instance.num_resources();
    let mut demand = Vec::with_capacity(instance.num_types());
    let mut costs = Vec::with_capacity(instance.num_types());
    let mut utils = Vec::with_capacity(instance.num_types());
    let mut usage = vec![0.0; m];
    let mut revenue = 0.0;
    let mut bundle_load = 0.0;
    for (j, user) in instance.user_types().iter().enumerate() {
        let r = per_job_cost(instance, plan, j)?;
        let point = demand::respond(&user.utility, r, gamma)?;
        let count = user.count as f64;
        for (u, req) in usage.iter_mut().zip(&user.requirements) {
            *u += count * req * point.jobs;
        }
        revenue += count * r * point.jobs.powf(gamma);
        if let PricingPlan::Bundled { bundle, .. } = plan {
            bundle_load += count * bundle_requirement(user, bundle)? * point.jobs;
        }
        demand.push(point.jobs);
        costs.push(r);
        utils.push(point.net_utility);
    }
    let caps = instance.resources().capacities();
    let leftover: Vec<f64> = caps.iter().zip(&usage).map(|(c, u)| c - u).collect();
    let (bundle_load, bundle_limit) = match plan {
        PricingPlan::Bundled { bundle, .. } => (Some(bundle_load), Some(bundle_capacity(caps, bundle))),
        _ => (None, None),
    };
    let mut outcome = Outcome {
        plan: plan.kind(),
        demand,
        per_job_cost: costs,
        net_utility: utils,
        revenue,
        usage,
        leftover,
        bundle_load,
        bundle_limit,
        feasible: true,
    };
    outcome.feasible = outcome.violation(instance).is_none();
    Ok(outcome)
}

/// Bundles the operator can sell: `min_i C_i / b_i`.
pub fn bundle_capacity(capacities: &[f64], bundle: &[f64]) -> f64 {
    capacities
        .iter()
        .zip(bundle)
        .map(|(c, b)| c / b)
        .fold(f64::INFINITY, f64::min)
}

/// Dominant resource (ties to the lowest index) and dominant share at a
/// given demand.
pub fn dominant_info(user: &UserType, resources: &ResourceModel, jobs: f64) -> Result<(usize, f64)> {
    expect_len("requirements", user.requirements.len(), resources.len())?;
    if let Some(i) = resources.capacities().iter().position(|&c| c <= 0.0) {
        return Err(invalid(
            format!("resources[{i}].capacity"),
            "dominant shares need positive capacities",
        ));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, (r, c)) in user.requirements.iter().zip(resources.capacities()).enumerate() {
        let ratio = r / c;
        if ratio > best.1 {
            best = (i, ratio);
        }
    }
    Ok((best.0, best.1 * jobs))
}

/// Differentiated plan charging each type exactly its resource-plan cost.
pub fn lift_resource_to_differentiated(instance: &Instance, plan: &PricingPlan) -> Result<PricingPlan> {
    let PricingPlan::Resource { prices } = plan else {
        return Err(invalid(
            "plan",
            format!("expected a resource plan, got {}", plan.kind()),
        ));
    };
    expect_len("prices", prices.len(), instance.num_resources())?;
    let gamma = instance.discount();
    let lifted = instance
        .user_types()
        .iter()
        .map(|u| {
            u.requirements
                .iter()
                .zip(prices)
                .map(|(r, p)| if *r > 0.0 { p * r.powf(gamma) } else { 0.0 })
                .sum()
        })
        .collect();
    Ok(PricingPlan::Differentiated { prices: lifted })
}

/// How a price vector maps to per-job costs and which linear constraints
/// bound demand. Every plan is linear in its prices: `r_j = a_j · p`.
#[derive(Debug, Clone)]
pub struct PlanStructure {
    pub kind: PlanKind,
    /// `a_j`, one row per user type.
    pub cost_coefficients: Vec<Vec<f64>>,
    /// Constraint rows over types: `Σ_j rows[k][j]·x_j ≤ limits[k]`.
    pub rows: Vec<Vec<f64>>,
    pub limits: Vec<f64>,
    pub row_labels: Vec<String>,
    bundle: Option<Vec<f64>>,
}

impl PlanStructure {
    /// For bundled plans `bundle` defaults to [`default_bundle`].
    pub fn new(instance: &Instance, kind: PlanKind, bundle: Option<Vec<f64>>) -> Result<Self> {
        let gamma = instance.discount();
        let users = instance.user_types();
        let res = instance.resources();
        let counts: Vec<f64> = users.iter().map(|u| u.count as f64).collect();
        match kind {
            PlanKind::Bundled => {
                let bundle = bundle.unwrap_or_else(|| default_bundle(instance));
                check_bundle(&bundle, res.len())?;
                let mus = users
                    .iter()
                    .map(|u| bundle_requirement(u, &bundle))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Self {
                    kind,
                    cost_coefficients: mus.iter().map(|mu| vec![mu.powf(gamma)]).collect(),
                    rows: vec![mus.iter().zip(&counts).map(|(mu, n)| mu * n).collect()],
                    limits: vec![bundle_capacity(res.capacities(), &bundle)],
                    row_labels: vec!["bundles".into()],
                    bundle: Some(bundle),
                })
            }
            PlanKind::Resource | PlanKind::Differentiated => {
                let cost_coefficients = match kind {
                    PlanKind::Resource => users
                        .iter()
                        .map(|u| {
                            u.requirements
                                .iter()
                                .map(|&r| if r > 0.0 { r.powf(gamma) } else { 0.0 })
                                .collect()
                        })
                        .collect(),
                    _ => (0..users.len())
                        .map(|j| (0..users.len()).map(|k| if j == k { 1.0 } else { 0.0 }).collect())
                        .collect(),
                };
                let rows = (0..res.len())
                    .map(|i| users.iter().zip(&counts).map(|(u, n)| n * u.requirements[i]).collect())
                    .collect();
                Ok(Self {
                    kind,
                    cost_coefficients,
                    rows,
                    limits: res.capacities().to_vec(),
                    row_labels: res.names().to_vec(),
                    bundle: None,
                })
            }
        }
    }

    /// Number of free prices.
    pub fn dimension(&self) -> usize {
        self.cost_coefficients.first().map_or(0, Vec::len)
    }

    pub fn bundle(&self) -> Option<&[f64]> {
        self.bundle.as_deref()
    }

    /// Wraps a price vector as a plan of this kind.
    pub fn plan(&self, prices: &[f64]) -> PricingPlan {
        match self.kind {
            PlanKind::Bundled => PricingPlan::Bundled {
                bundle: self.bundle.clone().unwrap_or_default(),
                price: prices[0],
            },
            PlanKind::Resource => PricingPlan::Resource {
                prices: prices.to_vec(),
            },
            PlanKind::Differentiated => PricingPlan::Differentiated {
                prices: prices.to_vec(),
            },
        }
    }
}
