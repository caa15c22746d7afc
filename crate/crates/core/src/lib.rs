//! Simulation core for exact Bayesian key-recovery attacks on the αη (Y-00)
//! quantum-noise stream cipher.
//!
//! The crate is `no_std` (it needs `alloc`) and contains no IO. It models the
//! cipher as phase indices on a circle of `M` symbols plus classical
//! measurement noise, keeps the eavesdropper's exact posterior over all `2^L`
//! seed keys, and provides the closed-form entropy estimates the simulation
//! is compared against.
//!
//! Modules, bottom-up:
//!
//! * [`keystream`]: LFSR and ideal-random running-key generators.
//! * [`transmission`]: symbol encoding, noisy channels and likelihoods.
//! * [`bayes`]: the log-domain posterior over seed keys and its statistics.
//! * [`analytic`]: closed-form information-rate estimates and a quadrature
//!   oracle for them.
//! * [`experiment`]: configuration, single trials, aggregation and the
//!   invariant checks run by `verify`.

#![cfg_attr(not(test), no_std)]
// `!(x <= tol)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod analytic;
pub mod bayes;
mod error;
pub mod experiment;
pub mod keystream;
pub mod numeric;
pub mod transmission;

pub use error::{Error, Result};

pub use analytic::{estimate_curve, exact_symbol_info, info_per_symbol, n0, EstimatePoint};
pub use bayes::{Posterior, PosteriorStats};
pub use experiment::{
    aggregate, mix, run_trial, CipherKind, CurveAggregate, CurveRow, ExperimentConfig,
    PrngChoice, TrialRecord,
};
pub use keystream::{KeystreamMap, LfsrSpec, RunningKey, SeedKey};
pub use transmission::{AttackMode, ChannelModel, Observation, SymbolIndex};
