//! Closed-form expected counts.
//!
//! Symbols are i.i.d., so every detector sees a stationary sequence of slots.
//! A non-paralysable detector accepts at most one click in any `D` consecutive
//! slots (`D` = [`ReceiverConfig::dead_slots`]), which makes the probability of
//! being live exactly one minus the summed acceptance probabilities of the
//! previous `D` slots. The two nearest slots are conditioned on the symbols
//! that own them; older slots use stationary averages. The stationary values
//! are found by fixed-point iteration.

use crate::channel::{db_to_transmittance, transmittance, Channel};
use crate::error::Result;
use crate::params::{Basis, Bit, IntensityClass, Protocol, SystemParams};
use crate::rx::{click_prob, Arm, ReceiverConfig};
use crate::sift::CountsTable;
use crate::tx::{encode_with_phase, PulsePair, SymbolPlan, TxOptions};

use super::{session_receivers, ReceiverSetup};

/// Modified Bessel function I0: the mean of `exp(x cos θ)` over a uniform θ.
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// One kind of symbol Alice can send, with its probability.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SymbolClass {
    pub basis: Basis,
    pub bit: Bit,
    pub intensity: IntensityClass,
    pub prob: f64,
    pub pair: PulsePair,
}

pub(crate) fn symbol_classes(params: &SystemParams, options: TxOptions) -> Vec<SymbolClass> {
    let mut out = Vec::new();
    for basis in Basis::ALL {
        let pb = params.basis_prob(basis);
        for bit in [Bit::Zero, Bit::One] {
            for intensity in IntensityClass::ALL {
                let pk = match (options.decoys, intensity) {
                    (true, k) => params.intensity_prob(k),
                    (false, IntensityClass::Signal) => 1.0,
                    (false, _) => 0.0,
                };
                let prob = pb * 0.5 * pk;
                if prob > 0.0 {
                    let plan = SymbolPlan { index: 0, basis, bit, intensity, phase_block_id: 0 };
                    out.push(SymbolClass {
                        basis,
                        bit,
                        intensity,
                        prob,
                        pair: encode_with_phase(&plan, params, options, 0.0),
                    });
                }
            }
        }
    }
    out
}

/// Raw click probabilities of one detector: slot 0 indexed by (previous, current) class, slot 1 by current.
struct RawProbs {
    p0: Vec<Vec<f64>>,
    p1: Vec<f64>,
}

/// Accepted-click probabilities per class after dead time.
struct Accepted {
    a0: Vec<f64>,
    a1: Vec<f64>,
}

fn dead_time_fixed_point(classes: &[SymbolClass], raw: &RawProbs, dead: usize) -> Accepted {
    let n = classes.len();
    let prob: Vec<f64> = classes.iter().map(|c| c.prob).collect();
    let mean = |v: &[f64]| v.iter().zip(&prob).map(|(a, p)| a * p).sum::<f64>();
    let odd = dead.div_ceil(2) as f64;
    let even = (dead / 2) as f64;
    let mut a0c = vec![0.0; n];
    let mut a1c = vec![0.0; n];
    for _ in 0..500 {
        let (a0, a1) = (mean(&a0c), mean(&a1c));
        let base0 = 1.0 - odd * a1 - even * a0;
        let base1 = 1.0 - odd * a0 - even * a1;
        let live0: Vec<f64> = (0..n)
            .map(|prev| {
                let mut l = base0;
                if dead >= 1 {
                    l += a1 - a1c[prev];
                }
                if dead >= 2 {
                    l += a0 - a0c[prev];
                }
                l
            })
            .collect();
        let next0: Vec<f64> =
            (0..n).map(|c| (0..n).map(|prev| prob[prev] * live0[prev] * raw.p0[prev][c]).sum()).collect();
        let next1: Vec<f64> = (0..n)
            .map(|c| {
                let live = if dead >= 1 { base1 + a0 - next0[c] } else { 1.0 };
                live * raw.p1[c]
            })
            .collect();
        let change =
            next0.iter().zip(&a0c).chain(next1.iter().zip(&a1c)).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        a0c = next0;
        a1c = next1;
        if change < 1e-16 {
            break;
        }
    }
    Accepted { a0: a0c, a1: a1c }
}

/// Per-class valid-event probabilities of one arm, as (bit 0, bit 1).
fn arm_events(classes: &[SymbolClass], arm: Arm, scale: f64, cfg: &ReceiverConfig) -> Vec<[f64; 2]> {
    let eta = cfg.detector_efficiency;
    let pd = cfg.dark_prob();
    let dead = cfg.dead_slots();
    let n = classes.len();
    match arm {
        Arm::Direct => {
            let s = scale * db_to_transmittance(cfg.z_arm_attenuation);
            let e = cfg.z_error_floor;
            let flux = |c: &SymbolClass, slot: usize| {
                let (x0, x1) = (c.pair.flux_early * s, c.pair.flux_late * s);
                if slot == 0 {
                    (1.0 - e) * x0 + e * x1
                } else {
                    (1.0 - e) * x1 + e * x0
                }
            };
            let p0: Vec<f64> = classes.iter().map(|c| click_prob(eta, pd, flux(c, 0))).collect();
            let p1: Vec<f64> = classes.iter().map(|c| click_prob(eta, pd, flux(c, 1))).collect();
            let raw = RawProbs { p0: vec![p0.clone(); n], p1: p1.clone() };
            let acc = dead_time_fixed_point(classes, &raw, dead);
            (0..n)
                .map(|c| {
                    let both = if dead == 0 { p0[c] * p1[c] } else { 0.0 };
                    [acc.a0[c], acc.a1[c] - both]
                })
                .collect()
        }
        Arm::Interferometer { basis, .. } => {
            let ifm = cfg.interferometer(basis);
            let q = ifm.path_factor() * scale;
            let v = ifm.visibility;
            let p0: Vec<Vec<f64>> = classes
                .iter()
                .map(|prev| {
                    classes
                        .iter()
                        .map(|cur| {
                            let a = prev.pair.flux_late * q;
                            let b = cur.pair.flux_early * q;
                            1.0 - (1.0 - pd) * (-eta * (a + b)).exp() * bessel_i0(2.0 * eta * v * (a * b).sqrt())
                        })
                        .collect()
                })
                .collect();
            let ports: Vec<[f64; 2]> = classes
                .iter()
                .map(|c| {
                    let (a, b) = (c.pair.flux_early * q, c.pair.flux_late * q);
                    let cross = 2.0 * v * (a * b).sqrt() * (c.pair.rel_phase - ifm.phase_shift).cos();
                    [click_prob(eta, pd, a + b + cross), click_prob(eta, pd, a + b - cross)]
                })
                .collect();
            let accepted: Vec<Accepted> = (0..2)
                .map(|port| {
                    let raw = RawProbs { p0: p0.clone(), p1: ports.iter().map(|p| p[port]).collect() };
                    dead_time_fixed_point(classes, &raw, dead)
                })
                .collect();
            (0..n)
                .map(|c| {
                    let (p1, p2) = (accepted[0].a1[c], accepted[1].a1[c]);
                    [p1, p2 - p1 * p2]
                })
                .collect()
        }
    }
}

/// Expected counts of one session of `symbols` symbols with receiver `cfg`.
pub fn expected_session_counts(
    params: &SystemParams,
    channel_transmittance: f64,
    cfg: &ReceiverConfig,
    symbols: f64,
    options: TxOptions,
) -> Result<CountsTable> {
    cfg.validate()?;
    let classes = symbol_classes(params, options);
    let bases = cfg.bases();
    let mut table = CountsTable::new();
    for c in &classes {
        if bases.contains(&c.basis) {
            table.add_sent(c.basis, c.intensity, symbols * c.prob);
        }
    }
    let mut arms = cfg.arms();
    // Z wins ties with the interferometer and its early slot comes first.
    arms.sort_by_key(|(arm, _)| !matches!(arm, Arm::Direct));
    let mut blocked = vec![0.0; classes.len()];
    for (arm, fraction) in arms {
        let bob = match arm {
            Arm::Direct => Basis::Z,
            Arm::Interferometer { basis, .. } => basis,
        };
        let events = arm_events(&classes, arm, channel_transmittance * fraction, cfg);
        for (i, c) in classes.iter().enumerate() {
            let free = 1.0 - blocked[i];
            let [zero, one] = events[i].map(|e| e * free);
            let wrong = match c.bit {
                Bit::Zero => one,
                Bit::One => zero,
            };
            let m = if c.basis == bob { wrong } else { 0.0 };
            table.add_detection(c.basis, bob, c.intensity, symbols * c.prob * (zero + one), symbols * c.prob * m);
            blocked[i] += zero + one;
        }
    }
    for b in bases {
        table.time_per_basis[b.index()] += symbols / params.symbol_rate;
    }
    Ok(table)
}

/// Expected counts of a full protocol run: one session per basis, each of
/// `symbols_per_session` symbols.
pub fn expected_counts_with(
    params: &SystemParams,
    channel: &Channel,
    protocol: Protocol,
    setup: ReceiverSetup,
    symbols_per_session: f64,
) -> Result<CountsTable> {
    let params = params.clone().validate()?;
    let t = transmittance(channel, &params);
    let mut table = CountsTable::new();
    for cfg in session_receivers(protocol, &params, setup) {
        table.merge(&expected_session_counts(&params, t, &cfg, symbols_per_session, TxOptions::default())?);
    }
    Ok(table)
}

/// Expected counts at the configured block size: sequential sessions of
/// `block_time_per_basis` seconds each.
pub fn expected_counts(params: &SystemParams, channel: &Channel, protocol: Protocol) -> Result<CountsTable> {
    expected_counts_with(params, channel, protocol, ReceiverSetup::Sequential, params.symbols_per_block())
}
