//! Pulse-level Monte Carlo: transmitter, channel, receiver and sifting.

use rayon::prelude::*;

use crate::channel::{transmittance, Channel};
use crate::error::{Error, Result};
use crate::params::{Protocol, SystemParams};
use crate::rng::{derive_seed, detection_rng};
use crate::rx::{
    discriminate, rate_warnings, Click, DeadTimeFilter, DetectionModel, DetectorId, Histogram, HistogramConfig,
    RateWarning, ReceiverConfig, SymbolClock, DETECTION_CHUNK,
};
use crate::sift::{CountsTable, Sifter};
use crate::tx::{class_from_code, plan_from_code, PatternMode, PulsePair, Transmitter, TxOptions};

use super::{session_receivers, ReceiverSetup};

/// Largest number of symbols accepted per session.
pub const MAX_MC_SYMBOLS: u64 = 1 << 36;

/// Chunks generated in parallel before their clicks are merged.
const BATCH_CHUNKS: u64 = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloConfig {
    pub symbols_per_session: u64,
    pub setup: ReceiverSetup,
    pub histogram: HistogramConfig,
    pub tx_options: TxOptions,
    pub pattern: PatternMode,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            symbols_per_session: 100_000_000,
            setup: ReceiverSetup::Sequential,
            histogram: HistogramConfig::default(),
            tx_options: TxOptions::default(),
            pattern: PatternMode::Fresh,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MonteCarloOutcome {
    pub table: CountsTable,
    /// Folded click-time histograms of the detectors used.
    pub histograms: Vec<(DetectorId, Histogram)>,
    pub warnings: Vec<RateWarning>,
    pub dead_time_dropped: u64,
    /// Accepted clicks outside every discrimination window.
    pub outside_windows: u64,
}

impl MonteCarloOutcome {
    pub fn histogram(&self, detector: DetectorId) -> Option<&Histogram> {
        self.histograms.iter().find(|(d, _)| *d == detector).map(|(_, h)| h)
    }
}

/// Runs every session of `protocol` through the full pulse-level pipeline.
/// Identical inputs and seed give identical outcomes.
pub fn run_montecarlo(
    params: &SystemParams,
    channel: &Channel,
    protocol: Protocol,
    seed: u64,
    cfg: &MonteCarloConfig,
) -> Result<MonteCarloOutcome> {
    let params = params.clone().validate()?;
    let receivers = session_receivers(protocol, &params, cfg.setup);
    run_sessions(&params, transmittance(channel, &params), &receivers, seed, cfg)
}

pub(crate) fn run_sessions(
    params: &SystemParams,
    channel_transmittance: f64,
    receivers: &[ReceiverConfig],
    seed: u64,
    cfg: &MonteCarloConfig,
) -> Result<MonteCarloOutcome> {
    let n = cfg.symbols_per_session;
    if n > MAX_MC_SYMBOLS {
        return Err(Error::InvalidArgument(format!("{n} symbols per session exceeds the cap of {MAX_MC_SYMBOLS}")));
    }
    let mut histograms: Vec<Option<Histogram>> = vec![None; DetectorId::ALL.len()];
    let mut out = MonteCarloOutcome {
        table: CountsTable::new(),
        histograms: Vec::new(),
        warnings: Vec::new(),
        dead_time_dropped: 0,
        outside_windows: 0,
    };
    for (session, rx) in receivers.iter().enumerate() {
        rx.validate()?;
        let session = session as u64;
        let tx =
            Transmitter::new(params, derive_seed(seed, session)).with_options(cfg.tx_options).with_mode(cfg.pattern);
        let model = DetectionModel::new(rx);
        let clock = SymbolClock::new(rx);
        let bases = rx.bases();
        let class_pairs = tx.class_pairs();
        for d in rx.detectors() {
            histograms[d.index()].get_or_insert_with(|| Histogram::new(cfg.histogram));
        }
        let mut filter = DeadTimeFilter::new(rx.dead_time);
        let mut sifter = Sifter::new();
        let mut events = Vec::new();
        let chunk = DETECTION_CHUNK as u64;
        let n_chunks = n.div_ceil(chunk);
        let mut batch = 0;
        while batch < n_chunks {
            let end = (batch + BATCH_CHUNKS).min(n_chunks);
            let results: Vec<(u64, Vec<u8>, Vec<Click>)> = (batch..end)
                .into_par_iter()
                .map(|c| {
                    let start = c * chunk;
                    let len = chunk.min(n - start) as usize;
                    let mut codes = Vec::with_capacity(len);
                    tx.codes_into(start, len, &mut codes);
                    let mut phases = Vec::with_capacity(len);
                    tx.phases_into(start, len, &mut phases);
                    let pairs: Vec<PulsePair> = codes
                        .iter()
                        .zip(&phases)
                        .map(|(&k, &g)| PulsePair { global_phase: g, ..class_pairs[k as usize] })
                        .collect();
                    let prev = start.checked_sub(1).map(|i| tx.symbol(i).1);
                    let mut rng = detection_rng(seed, session, c);
                    let mut clicks = Vec::new();
                    model.raw_clicks(&pairs, prev, start, channel_transmittance, &mut rng, &mut clicks);
                    (start, codes, clicks)
                })
                .collect();
            for (start, codes, clicks) in results {
                let mut tally = [0u64; 18];
                for &k in &codes {
                    tally[k as usize] += 1;
                }
                let mut counts = [[0u64; 3]; 3];
                for (k, &t) in tally.iter().enumerate() {
                    let (basis, _, intensity) = class_from_code(k as u8);
                    counts[basis.index()][intensity.index()] += t;
                }
                sifter.add_sent_counts(&counts, &bases);
                events.clear();
                for c in clicks.iter().filter(|c| filter.accept(c)) {
                    if let Some(h) = &mut histograms[c.detector.index()] {
                        h.add(c.timestamp);
                    }
                    match discriminate(c, &clock) {
                        Some(e) => events.push(e),
                        None => out.outside_windows += 1,
                    }
                }
                sifter.process_with(&events, |i| {
                    i.checked_sub(start).and_then(|o| codes.get(o as usize)).map(|&k| plan_from_code(i, k))
                });
            }
            batch = end;
        }
        let mut table = sifter.finish();
        let duration = n as f64 / params.symbol_rate;
        for b in &bases {
            table.time_per_basis[b.index()] += duration;
        }
        out.table.merge(&table);
        out.dead_time_dropped += DetectorId::ALL.iter().map(|&d| filter.dropped(d)).sum::<u64>();
        out.warnings.extend(rate_warnings(&filter, duration, rx.max_count_rate));
    }
    out.histograms = DetectorId::ALL.iter().zip(histograms).filter_map(|(&d, h)| h.map(|h| (d, h))).collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{Basis, IntensityClass};

    fn small(n: u64) -> MonteCarloConfig {
        MonteCarloConfig { symbols_per_session: n, ..Default::default() }
    }

    #[test]
    fn zero_symbols_gives_empty_outcome() {
        let out = run_montecarlo(
            &SystemParams::default(),
            &Channel::attenuator(8.0).unwrap(),
            Protocol::PolarBB84,
            1,
            &small(0),
        )
        .unwrap();
        assert_eq!(out.table.total_detections(Basis::Z), 0.0);
        assert_eq!(out.table.sent(Basis::Z, IntensityClass::Signal), 0.0);
        assert_eq!(out.histograms.len(), 3);
        assert!(out.histograms.iter().all(|(_, h)| h.total() == 0));
    }

    #[test]
    fn deterministic_per_seed() {
        let p = SystemParams::default();
        let ch = Channel::attenuator(5.0).unwrap();
        let a = run_montecarlo(&p, &ch, Protocol::PhaseBB84, 42, &small(300_000)).unwrap();
        let b = run_montecarlo(&p, &ch, Protocol::PhaseBB84, 42, &small(300_000)).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.histograms, b.histograms);
        let c = run_montecarlo(&p, &ch, Protocol::PhaseBB84, 43, &small(300_000)).unwrap();
        assert_ne!(a.table, c.table);
        assert!(a.table.is_consistent());
        let sent_y: f64 = IntensityClass::ALL.iter().map(|&k| a.table.sent(Basis::Y, k)).sum();
        assert!((sent_y - 30_000.0).abs() < 4.0 * (300_000.0f64 * 0.1 * 0.9).sqrt(), "{sent_y}");
    }

    #[test]
    fn symbol_cap_enforced() {
        let r = run_montecarlo(
            &SystemParams::default(),
            &Channel::attenuator(8.0).unwrap(),
            Protocol::PolarBB84,
            1,
            &small(MAX_MC_SYMBOLS + 1),
        );
        assert!(r.is_err());
    }
}
