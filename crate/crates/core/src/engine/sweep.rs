//! Channel sweeps, cutoff search and the protocol comparison.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::channel::Channel;
use crate::error::{Error, Result};
use crate::keyrate::{protocol_ratio, secure_key_rate, KeyRateInput, KeyRateReport, Regime};
use crate::params::{Protocol, SystemParams};
use crate::rng::derive_seed;
use crate::sift::{basis_qber, CountsTable};

use super::analytic::expected_counts;
use super::montecarlo::{run_montecarlo, MonteCarloConfig};

#[derive(Debug, Clone, PartialEq)]
pub enum EngineKind {
    Analytic,
    MonteCarlo(MonteCarloConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub channels: Vec<Channel>,
    pub protocols: Vec<Protocol>,
    pub regimes: Vec<Regime>,
    pub engine: EngineKind,
    pub seed: u64,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.channels.is_empty() || self.protocols.is_empty() || self.regimes.is_empty() {
            return Err(Error::InvalidArgument("sweep needs at least one channel, protocol and regime".into()));
        }
        Ok(())
    }
}

/// One evaluated (channel, protocol, regime) point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub channel_db: f64,
    pub distance_km: f64,
    pub protocol: Protocol,
    pub regime: Regime,
    /// Key-basis detections.
    pub n_key: f64,
    /// Check-basis detections.
    pub n_check: f64,
    pub qber_key: f64,
    pub qber_check: f64,
    pub report: KeyRateReport,
    pub flags: Vec<String>,
}

/// Inclusive grid `start, start+step, …, stop`.
pub fn grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::InvalidArgument(format!("bad grid {start}:{stop}:{step}")));
    }
    let n = ((stop - start) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| start + i as f64 * step).collect())
}

/// Analytic key rate at the configured block size (sequential sessions).
pub fn analytic_key_rate(
    params: &SystemParams,
    channel: &Channel,
    protocol: Protocol,
    regime: Regime,
) -> Result<KeyRateReport> {
    let table = expected_counts(params, channel, protocol)?;
    table_key_rate(&table, params, protocol, regime)
}

fn table_key_rate(
    table: &CountsTable,
    params: &SystemParams,
    protocol: Protocol,
    regime: Regime,
) -> Result<KeyRateReport> {
    let t: f64 = table.time_per_basis.iter().sum();
    if !(t > 0.0) {
        return Ok(KeyRateReport::empty(regime));
    }
    secure_key_rate(&KeyRateInput::from_table(table, protocol, params, t)?, regime)
}

fn evaluate_point(
    spec: &SweepSpec,
    params: &SystemParams,
    point: usize,
    channel: &Channel,
    protocol: Protocol,
) -> Result<(CountsTable, Vec<String>)> {
    match &spec.engine {
        EngineKind::Analytic => Ok((expected_counts(params, channel, protocol)?, Vec::new())),
        EngineKind::MonteCarlo(cfg) => {
            let out = run_montecarlo(params, channel, protocol, derive_seed(spec.seed, point as u64), cfg)?;
            let flags = out.warnings.iter().map(|w| format!("rate_warning:{}", w.detector)).collect();
            Ok((out.table, flags))
        }
    }
}

/// Evaluates every grid point independently. Rows come out ordered by
/// channel, then protocol, then regime; a failing point yields a flagged
/// zero-rate row instead of aborting the sweep.
pub fn sweep(spec: &SweepSpec, params: &SystemParams) -> Result<Vec<SweepRow>> {
    spec.validate()?;
    let params = params.clone().validate()?;
    let points: Vec<(Channel, Protocol)> =
        spec.channels.iter().flat_map(|&c| spec.protocols.iter().map(move |&p| (c, p))).collect();
    let rows: Vec<Vec<SweepRow>> = points
        .par_iter()
        .enumerate()
        .map(|(i, &(channel, protocol))| {
            let evaluated = evaluate_point(spec, &params, i, &channel, protocol);
            spec.regimes
                .iter()
                .map(|&regime| {
                    let mut row = SweepRow {
                        channel_db: channel.channel_db(&params),
                        distance_km: channel.distance_km(&params),
                        protocol,
                        regime,
                        n_key: 0.0,
                        n_check: 0.0,
                        qber_key: f64::NAN,
                        qber_check: f64::NAN,
                        report: KeyRateReport::empty(regime),
                        flags: Vec::new(),
                    };
                    match &evaluated {
                        Ok((table, flags)) => {
                            row.flags.extend(flags.iter().cloned());
                            row.n_key = table.total_detections(protocol.key_basis());
                            row.n_check = table.total_detections(protocol.check_basis());
                            row.qber_key = basis_qber(table, protocol.key_basis()).unwrap_or(f64::NAN);
                            row.qber_check = basis_qber(table, protocol.check_basis()).unwrap_or(f64::NAN);
                            match table_key_rate(table, &params, protocol, regime) {
                                Ok(r) => row.report = r,
                                Err(e) => row.flags.push(format!("error:{e}")),
                            }
                        }
                        Err(e) => row.flags.push(format!("error:{e}")),
                    }
                    if row.report.no_key {
                        row.flags.push("no_key".into());
                    }
                    row
                })
                .collect()
        })
        .collect();
    Ok(rows.into_iter().flatten().collect())
}

pub const SWEEP_CSV_HEADER: &str =
    "channel_db,distance_km,protocol,regime,n_Z,n_X,qber_Z,qber_X,s0,s1,phi,lambda_ec,delta,key_len,skr_bps,flags";

/// Writes sweep rows. `n_Z`/`qber_Z` hold the key basis, `n_X`/`qber_X` the check basis.
pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], mut w: W) -> io::Result<()> {
    writeln!(w, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        let rep = &r.report;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.channel_db,
            r.distance_km,
            r.protocol,
            r.regime,
            r.n_key,
            r.n_check,
            r.qber_key,
            r.qber_check,
            rep.s0,
            rep.s1,
            rep.phi,
            rep.lambda_ec,
            rep.delta,
            rep.key_length,
            rep.rate,
            r.flags.join(";")
        )?;
    }
    Ok(())
}

/// Largest channel attenuation (dB) with a positive analytic key rate,
/// bisected to `tol` dB within `[0, max_db]`.
pub fn cutoff_db(params: &SystemParams, protocol: Protocol, regime: Regime, max_db: f64, tol: f64) -> Result<f64> {
    let positive = |db: f64| -> Result<bool> {
        Ok(analytic_key_rate(params, &Channel::attenuator(db)?, protocol, regime)?.rate > 0.0)
    };
    if !positive(0.0)? {
        return Ok(0.0);
    }
    if positive(max_db)? {
        return Ok(max_db);
    }
    let (mut lo, mut hi) = (0.0, max_db);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if positive(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub channel_db: f64,
    pub rate_polar: f64,
    pub rate_phase: f64,
}

impl ComparisonRow {
    pub fn ratio(&self) -> f64 {
        self.rate_polar / self.rate_phase
    }
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Mean polar/phase ratio, undefined if any rate is zero.
    pub mean_ratio: Result<f64, String>,
}

/// Asymptotic rates of both protocols with each protocol's basis
/// probabilities renormalised to the same key/check split.
pub fn compare(params: &SystemParams, channel_db: &[f64]) -> Result<Comparison> {
    let polar = params.for_comparison(Protocol::PolarBB84);
    let phase = params.for_comparison(Protocol::PhaseBB84);
    let rows = channel_db
        .par_iter()
        .map(|&db| {
            let ch = Channel::attenuator(db)?;
            Ok(ComparisonRow {
                channel_db: db,
                rate_polar: analytic_key_rate(&polar, &ch, Protocol::PolarBB84, Regime::Asymptotic)?.rate,
                rate_phase: analytic_key_rate(&phase, &ch, Protocol::PhaseBB84, Regime::Asymptotic)?.rate,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let a: Vec<f64> = rows.iter().map(|r| r.rate_polar).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.rate_phase).collect();
    let mean_ratio = protocol_ratio(&a, &b).map_err(|e| e.to_string());
    Ok(Comparison { rows, mean_ratio })
}

pub fn write_comparison_csv<W: Write>(cmp: &Comparison, mut w: W) -> io::Result<()> {
    writeln!(w, "channel_db,skr_polar_bps,skr_phase_bps,ratio")?;
    for r in &cmp.rows {
        writeln!(w, "{},{},{},{}", r.channel_db, r.rate_polar, r.rate_phase, r.ratio())?;
    }
    Ok(())
}
