//! Capacity estimation for input-constrained finite-state channels.
//!
//! Inputs are stationary Markov chains that avoid a set of forbidden
//! transitions. The mutual information rate between input and output is
//! maximized by stochastic approximation driven by a simulation-based
//! gradient estimator; exact enumeration provides ground truth on small
//! instances.

// negated comparisons deliberately catch NaN; index loops mirror the recursions
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod channel;
pub mod cli;
pub mod config;
pub mod constraint;
pub mod error;
pub mod hmm;
pub mod markov;
pub mod optimizer;
pub mod oracle;
pub mod rng;
pub mod simulator;
pub mod stats;

pub use channel::{
    bec_family, bsc_family, lift_memoryless, sample_path, sample_path_stream, ChannelSpec, FamilyKind,
    NoisyMemorylessFamily, SamplePath,
};
pub use constraint::{ForbiddenPairSet, Periodicity};
pub use error::{Error, Result};
pub use markov::{build_transition, MarkovParams, TransitionMatrix};
pub use rng::StreamId;
