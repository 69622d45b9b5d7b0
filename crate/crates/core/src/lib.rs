//! Decoy-state time-bin BB84: a pulse-level simulator and a finite-key
//! rate calculator over the same detection model.
//!
//! The pipeline runs [`tx`] → [`channel`] → [`rx`] → [`sift`] → [`keyrate`].
//! [`engine`] drives it either in closed form or by Monte Carlo, and adds
//! channel sweeps and the histogram trace mode.
//!
//! ```
//! use decoy_bb84::{analytic_key_rate, Channel, Protocol, Regime, SystemParams};
//!
//! let r = analytic_key_rate(&SystemParams::default(), &Channel::fiber(75.0)?, Protocol::PolarBB84, Regime::Finite)?;
//! assert!(r.rate > 1e5);
//! # Ok::<(), decoy_bb84::Error>(())
//! ```

// Negated comparisons are how NaN inputs get rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod engine;
pub mod error;
pub mod keyrate;
pub mod params;
pub mod rng;
pub mod rx;
pub mod sift;
pub mod tx;

pub use channel::Channel;
pub use engine::{analytic_key_rate, expected_counts, run_montecarlo, sweep, MonteCarloConfig, SweepSpec};
pub use error::{Error, ParamError, Result};
pub use keyrate::{secure_key_rate, KeyRateInput, KeyRateReport, Regime};
pub use params::{Basis, Bit, IntensityClass, Protocol, SystemParams};
pub use sift::CountsTable;

/// The guide's chapters, compiled and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/parameters.md")]
    mod parameters {}
    #[doc = include_str!("../../../book/src/transmitter.md")]
    mod transmitter {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/receiver.md")]
    mod receiver {}
    #[doc = include_str!("../../../book/src/sifting.md")]
    mod sifting {}
    #[doc = include_str!("../../../book/src/keyrate.md")]
    mod keyrate {}
    #[doc = include_str!("../../../book/src/engines.md")]
    mod engines {}
    #[doc = include_str!("../../../book/src/trace.md")]
    mod trace {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
