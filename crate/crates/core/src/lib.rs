//! Distributed feedback-feedforward algorithms for time-varying resource
//! allocation over a communication graph, with a centralized reference
//! solver for verification.

// `!(v > 0.0)` style checks are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dynamics;
pub mod error;
pub mod graph;
pub mod oracle;
pub mod protocol;
pub mod scenario;
pub mod sim;

pub use error::{Error, Result};
