//! Neural proxies for parameterized robust optimization, trained with a
//! self-supervised exact-penalty loss.
//!
//! The pipeline for one instance is
//! `features -> MLP -> domain layer -> problem evaluator -> penalty loss`,
//! with gradients chained back by hand. Reference solvers (simplex and
//! branch and bound on the robust counterparts) provide ground truth for
//! regret and timing comparisons.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod cli;
pub mod domain;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod nn;
pub mod penalty;
pub mod problems;
pub mod solvers;
pub mod training;
pub mod uncertainty;


pub use checkpoint::ProxyModel;
pub use error::{Error, Result};
