//! Evaluation paths: closed-form expected counts, the pulse-level Monte
//! Carlo pipeline, the histogram trace mode, and channel sweeps.

mod analytic;
mod montecarlo;
mod sweep;
mod trace;

pub use analytic::{bessel_i0, expected_counts, expected_counts_with, expected_session_counts};
pub use montecarlo::{run_montecarlo, MonteCarloConfig, MonteCarloOutcome, MAX_MC_SYMBOLS};
pub use sweep::{
    analytic_key_rate, compare, cutoff_db, grid, sweep, write_comparison_csv, write_sweep_csv, Comparison,
    ComparisonRow, EngineKind, SweepRow, SweepSpec, SWEEP_CSV_HEADER,
};
pub use trace::{analyse_trace, run_trace, PeakClass, PeakStats, TraceAnalysis, TraceConfig, TraceOutcome};

use crate::params::{Protocol, SystemParams};
use crate::rx::ReceiverConfig;

/// How Bob's receiver is operated over a protocol run.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ReceiverSetup {
    /// One session per basis, key basis first.
    #[default]
    Sequential,
    /// A single session with a passive beam-splitter basis choice.
    Passive { key_fraction: f64 },
}

/// Receiver configuration of each session of a protocol run.
pub fn session_receivers(protocol: Protocol, params: &SystemParams, setup: ReceiverSetup) -> Vec<ReceiverConfig> {
    match setup {
        ReceiverSetup::Sequential => vec![
            ReceiverConfig::sequential(protocol.key_basis(), params),
            ReceiverConfig::sequential(protocol.check_basis(), params),
        ],
        ReceiverSetup::Passive { key_fraction } => vec![ReceiverConfig::passive(protocol, params, key_fraction)],
    }
}
