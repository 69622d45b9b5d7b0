//! Histogram trace mode: a repeated pattern sent without amplitude
//! equalisation or decoys, folded onto the pattern period behind the X
//! interferometer. Constructive interference gives full peaks, two pulses
//! adding without a fixed phase give half peaks and a lone pulse gives
//! quarter peaks.

use std::fmt;

use crate::channel::{transmittance, Channel};
use crate::error::{Error, Result};
use crate::params::{Basis, SystemParams};
use crate::rx::{phase_shift_for, DetectorId, Histogram, HistogramConfig, ReceiverConfig};
use crate::tx::{encode_with_phase, PatternMode, SymbolPlan, Transmitter, TxOptions, DEFAULT_PATTERN_LENGTH};

use super::montecarlo::{run_sessions, MonteCarloConfig};
use super::ReceiverSetup;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceConfig {
    pub symbols: u64,
    pub pattern_length: usize,
    pub channel: Channel,
    /// Histogram bin width (s); must divide the pulse period.
    pub bin_width: f64,
    pub seed: u64,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self {
            symbols: 10_000_000,
            pattern_length: DEFAULT_PATTERN_LENGTH,
            channel: Channel::Attenuator { db: 15.0 },
            bin_width: 100e-12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PeakClass {
    Full,
    Half,
    Quarter,
}

impl PeakClass {
    pub const ALL: [PeakClass; 3] = [PeakClass::Full, PeakClass::Half, PeakClass::Quarter];

    /// Ideal peak height relative to a full peak for visibility `v`.
    pub fn expected_ratio(self, v: f64) -> f64 {
        match self {
            PeakClass::Full => 1.0,
            PeakClass::Half => 1.0 / (1.0 + v),
            PeakClass::Quarter => 1.0 / (2.0 * (1.0 + v)),
        }
    }
}

impl fmt::Display for PeakClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PeakClass::Full => "full",
            PeakClass::Half => "half",
            PeakClass::Quarter => "quarter",
        })
    }
}

/// Summed counts over all peaks of one class.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PeakStats {
    pub peaks: u64,
    pub counts: u64,
}

impl PeakStats {
    pub fn mean(&self) -> f64 {
        self.counts as f64 / self.peaks as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceAnalysis {
    pub visibility: f64,
    pub full: PeakStats,
    pub half: PeakStats,
    pub quarter: PeakStats,
}

impl TraceAnalysis {
    pub fn stats(&self, class: PeakClass) -> PeakStats {
        match class {
            PeakClass::Full => self.full,
            PeakClass::Half => self.half,
            PeakClass::Quarter => self.quarter,
        }
    }

    /// Mean peak height relative to the full peaks, with its Poisson standard error.
    pub fn ratio(&self, class: PeakClass) -> (f64, f64) {
        let (s, f) = (self.stats(class), self.full);
        let r = s.mean() / f.mean();
        let rel = (1.0 / s.counts as f64 + 1.0 / f.counts as f64).sqrt();
        (r, r * rel)
    }

    /// Deviation from the ideal ratio in standard errors.
    pub fn z_score(&self, class: PeakClass) -> f64 {
        let (r, sigma) = self.ratio(class);
        (r - class.expected_ratio(self.visibility)) / sigma
    }
}

#[derive(Debug, Clone)]
pub struct TraceOutcome {
    pub pattern: Vec<SymbolPlan>,
    /// Histograms of the two X-interferometer ports, folded on the pattern period.
    pub histograms: Vec<(DetectorId, Histogram)>,
    pub analysis: TraceAnalysis,
}

/// Classifies the slot-`slot` peak at `port` (0 or 1) behind symbol `cur`.
fn classify(params: &SystemParams, prev: &SymbolPlan, cur: &SymbolPlan, slot: usize, port: usize) -> Option<PeakClass> {
    let p = encode_with_phase(prev, params, TxOptions::TRACE, 0.0);
    let c = encode_with_phase(cur, params, TxOptions::TRACE, 0.0);
    let (long, short) = if slot == 0 { (p.flux_late, c.flux_early) } else { (c.flux_early, c.flux_late) };
    match (long > 0.0, short > 0.0) {
        (false, false) => None,
        (true, false) | (false, true) => Some(PeakClass::Quarter),
        (true, true) if slot == 0 => Some(PeakClass::Half),
        (true, true) => {
            let cos = (c.rel_phase - phase_shift_for(Basis::X)).cos();
            if cos.abs() < 1e-6 {
                Some(PeakClass::Half)
            } else if (cos > 0.0) == (port == 0) {
                Some(PeakClass::Full)
            } else {
                None
            }
        }
    }
}

/// Sums the folded counts of every classified peak.
pub fn analyse_trace(
    params: &SystemParams,
    pattern: &[SymbolPlan],
    histograms: &[(DetectorId, Histogram)],
) -> Result<TraceAnalysis> {
    let bin = histograms.first().map(|(_, h)| h.bin_width).ok_or(Error::EmptyCell("no histograms"))?;
    let per_slot = (params.pulse_period() / bin).round() as usize;
    let mut a = TraceAnalysis {
        visibility: params.visibility,
        full: PeakStats::default(),
        half: PeakStats::default(),
        quarter: PeakStats::default(),
    };
    let l = pattern.len();
    for (i, cur) in pattern.iter().enumerate() {
        let prev = &pattern[(i + l - 1) % l];
        for slot in 0..2 {
            let first = (2 * i + slot) * per_slot;
            for (port, detector) in [DetectorId::Port1(Basis::X), DetectorId::Port2(Basis::X)].into_iter().enumerate() {
                let Some(class) = classify(params, prev, cur, slot, port) else { continue };
                let Some((_, h)) = histograms.iter().find(|(d, _)| *d == detector) else { continue };
                let counts: u64 = h.counts[first..first + per_slot].iter().sum();
                let s = match class {
                    PeakClass::Full => &mut a.full,
                    PeakClass::Half => &mut a.half,
                    PeakClass::Quarter => &mut a.quarter,
                };
                s.peaks += 1;
                s.counts += counts;
            }
        }
    }
    Ok(a)
}

/// Runs trace mode: equiprobable bases, no equalisation, no decoys, a
/// repeated pattern, Bob measuring X, histograms one pattern period long.
pub fn run_trace(params: &SystemParams, cfg: &TraceConfig) -> Result<TraceOutcome> {
    let third = 1.0 / 3.0;
    let params = SystemParams { prob_z: third, prob_x: third, prob_y: third, ..params.clone() }.validate()?;
    let per_slot = params.pulse_period() / cfg.bin_width;
    if cfg.pattern_length == 0 || (per_slot - per_slot.round()).abs() > 1e-6 || per_slot < 0.5 {
        return Err(Error::InvalidArgument(
            "bin width must divide the pulse period and the pattern be non-empty".into(),
        ));
    }
    let n_bins = cfg.pattern_length * 2 * per_slot.round() as usize;
    let mode = PatternMode::Repeat { period: cfg.pattern_length };
    let mc = MonteCarloConfig {
        symbols_per_session: cfg.symbols,
        setup: ReceiverSetup::Sequential,
        histogram: HistogramConfig { bin_width: cfg.bin_width, n_bins },
        tx_options: TxOptions::TRACE,
        pattern: mode,
    };
    let rx = ReceiverConfig::sequential(Basis::X, &params);
    let out = run_sessions(&params, transmittance(&cfg.channel, &params), &[rx], cfg.seed, &mc)?;
    // Session 0 of the run uses the same transmitter seed derivation.
    let tx =
        Transmitter::new(&params, crate::rng::derive_seed(cfg.seed, 0)).with_options(TxOptions::TRACE).with_mode(mode);
    let pattern = tx.pattern().expect("repeat mode has a pattern").to_vec();
    let analysis = analyse_trace(&params, &pattern, &out.histograms)?;
    Ok(TraceOutcome { pattern, histograms: out.histograms, analysis })
}
