//! Crowdsourced entity resolution over uncertain vote graphs.
//!
//! Crowd answers for record pairs form an [`UncertainGraph`] whose edge
//! probabilities are YES-vote fractions. Records are clustered by
//! maximum-likelihood correlation clustering ([`cluster`]), and the next pair
//! to ask is the one whose fully consistent answer would raise the
//! [`reliability`] of the current clustering the most ([`next`]). The
//! [`harness`] closes the loop against a simulated, replayed, or interactive
//! crowd ([`crowd`]) and compares against the [`baselines`].

pub mod baselines;
pub mod cluster;
pub mod crowd;
pub mod error;
pub mod graph;
pub mod harness;
mod hash;
pub mod io;
pub mod next;
pub mod reliability;

pub use error::{Error, Result};
pub use graph::{Clustering, Pair, RecordId, UncertainGraph, VoteTally};
pub use reliability::ReliabilityParams;
