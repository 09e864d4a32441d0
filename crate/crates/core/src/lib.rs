//! Multi-resource cloud pricing.
//!
//! Users of several types submit jobs needing several resources. Each type
//! picks the number of jobs maximizing an isoelastic utility minus a
//! volume-discounted bill. The operator sets prices under one of three plans:
//!
//! * **bundled**: one price for a fixed bundle of resources,
//! * **resource**: one price per resource,
//! * **differentiated**: one price per user type,
//!
//! and chooses them to maximize `ν·revenue + β-fairness` of the users' net
//! utilities subject to capacity.
//!
//! ```
//! use cloudprice::optimizer::{barrier_optimize, ObjectiveSpec, SolverConfig};
//! use cloudprice::pricing::PlanKind;
//! use cloudprice::reference;
//!
//! let market = reference::single_type_instance();
//! let spec = ObjectiveSpec::new(1.0, 2.0)?;
//! let best = barrier_optimize(&market, PlanKind::Resource, &spec, &SolverConfig::default())?;
//! assert!((best.plan.price_vector()[0] - 0.5).abs() < 1e-4);
//! # Ok::<(), cloudprice::Error>(())
//! ```

// `!(x > 0.0)` and friends are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod deadline;
pub mod demand;
pub mod error;
pub mod fairness;
pub mod kmeans;
pub mod lp;
pub mod optimizer;
pub mod pricing;
pub mod reference;
pub mod svg;
pub mod sweep;
pub mod trace;
pub mod verify;

pub use error::{Error, Result};
