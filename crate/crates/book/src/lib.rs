//! Compiles every chapter of the guide in `book/src`, and the README, as
//! doc-tests. One module per chapter, so a failing snippet points at its
//! chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/demand.md")]
pub mod demand {}

#[doc = include_str!("../../../book/src/plans.md")]
pub mod plans {}

#[doc = include_str!("../../../book/src/fairness.md")]
pub mod fairness {}

#[doc = include_str!("../../../book/src/optimizer.md")]
pub mod optimizer {}

#[doc = include_str!("../../../book/src/deadlines.md")]
pub mod deadlines {}

#[doc = include_str!("../../../book/src/traces.md")]
pub mod traces {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}
