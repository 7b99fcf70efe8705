//! Exact break-point counting and approximation bounds for feedforward
//! networks with piecewise-linear activations.
//!
//! The crate restricts a network to an input segment, tracks every hidden
//! unit as an exact one-dimensional piecewise-linear function, counts break
//! points and state transitions, and evaluates the depth/width lower and
//! upper bounds that tie those counts to approximation error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod activations;
pub mod approx;
pub mod bounds;
pub mod cli;
mod error;
pub mod linalg;
pub mod netgraph;
pub mod pwl;
pub mod report;
pub mod restriction;
pub mod targets;

pub use activations::{Activation, ActivationGap, LipschitzActivation, PwlActivation};
pub use error::{Error, Result};
pub use netgraph::{DepthProfile, Network, Segment};
pub use pwl::PwlFunction1D;
pub use report::{AuditReport, Verdict};
pub use restriction::LineRestriction;
pub use targets::TargetFunction;
