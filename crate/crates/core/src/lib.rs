//! Hedging laboratory for variable annuities carrying a guaranteed minimum
//! maturity benefit (GMMB).
//!
//! The crate is `no_std` and only needs `alloc`. It contains:
//!
//! - [`market`]: Black-Scholes / Heston price paths and policyholder deaths,
//! - [`liability`]: closed-form and Monte-Carlo net liability, rider-charge calibration,
//! - [`delta`]: analytic and Monte-Carlo Delta hedgers,
//! - [`env`]: the discrete hedging MDP with anchor-hedging rewards,
//! - [`neuralnet`]: the shared-trunk Gaussian policy / value network with exact gradients,
//! - [`policygrad`]: PPO and REINFORCE trainers and the online-learning loop,
//! - [`evalharness`]: scenario evaluation, P&L statistics and sensitivity sweeps.
//!
//! IO, configuration files and the command-line driver live in the `vahedge` crate.

#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod delta;
pub mod env;
pub mod error;
pub mod evalharness;
pub mod liability;
pub mod market;
pub mod math;
pub mod neuralnet;
pub mod policygrad;
pub mod rng;

pub use error::{Error, Result};
