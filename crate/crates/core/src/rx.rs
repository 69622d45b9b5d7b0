//! Bob: Z-arm direct detection, X/Y-arm interferometer, threshold detectors
//! with dark counts and dead time, time tagging, histograms and event
//! discrimination.
//!
//! Time slots are one pulse period wide. Symbol `k` starts at `k / symbol_rate`;
//! its slot 0 is centred half a pulse period later and slot 1 one period after
//! that. On the Z arm slot 0 and 1 are the early and late bins. Behind the
//! interferometer slot 0 is the leading satellite (previous late pulse through
//! the long arm against the current early pulse through the short arm) and
//! slot 1 is the central interference slot that carries the bit.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::io::{self, Write};

use log::warn;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::channel::{db_to_transmittance, transmittance, Channel};
use crate::error::{Error, Result};
use crate::params::{Basis, Bit, Protocol, SystemParams};
use crate::rng::{detection_rng, unit_f64};
use crate::tx::PulsePair;

/// Symbols per independently seeded detection chunk.
pub const DETECTION_CHUNK: usize = 1 << 16;

/// Relative slack when comparing click separations with the dead time, so that
/// a click exactly one dead time after the previous one is accepted.
const DEAD_TIME_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectorId {
    /// The single detector of the Z arm.
    Z,
    /// First output port of the interferometer measuring the given basis.
    Port1(Basis),
    /// Second output port of the interferometer measuring the given basis.
    Port2(Basis),
}

impl DetectorId {
    pub const ALL: [DetectorId; 5] = [
        DetectorId::Z,
        DetectorId::Port1(Basis::X),
        DetectorId::Port2(Basis::X),
        DetectorId::Port1(Basis::Y),
        DetectorId::Port2(Basis::Y),
    ];

    pub fn index(self) -> usize {
        match self {
            DetectorId::Z => 0,
            DetectorId::Port1(Basis::X) => 1,
            DetectorId::Port2(Basis::X) => 2,
            DetectorId::Port1(_) => 3,
            DetectorId::Port2(_) => 4,
        }
    }

    pub fn basis(self) -> Basis {
        match self {
            DetectorId::Z => Basis::Z,
            DetectorId::Port1(b) | DetectorId::Port2(b) => b,
        }
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DetectorId::Z => f.write_str("Z"),
            DetectorId::Port1(b) => write!(f, "{b}1"),
            DetectorId::Port2(b) => write!(f, "{b}2"),
        }
    }
}

/// A detector click.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Click {
    /// Arrival time (s) from the start of the stream.
    pub timestamp: f64,
    pub detector: DetectorId,
}

/// How Bob chooses the measurement basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReceiverMode {
    /// One basis for the whole session; sessions run one after another.
    Sequential(Basis),
    /// A beam splitter sends `key_fraction` of the light to the key-basis arm
    /// and the rest to the check-basis arm.
    Passive { key: Basis, check: Basis, key_fraction: f64 },
}

/// One measurement arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arm {
    Direct,
    Interferometer { basis: Basis, phase_shift: f64 },
}

impl Arm {
    pub fn for_basis(basis: Basis) -> Arm {
        match basis {
            Basis::Z => Arm::Direct,
            b => Arm::Interferometer { basis: b, phase_shift: phase_shift_for(b) },
        }
    }
}

/// Phase applied by the receiver modulator: 0 to measure X, π/2 to measure Y.
pub fn phase_shift_for(basis: Basis) -> f64 {
    match basis {
        Basis::Y => FRAC_PI_2,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiverConfig {
    pub mode: ReceiverMode,
    /// Interferometer insertion loss (dB).
    pub amzi_loss: f64,
    /// Z-arm attenuator (dB).
    pub z_arm_attenuation: f64,
    /// Long-arm delay of the interferometer (s).
    pub amzi_delay: f64,
    pub detector_efficiency: f64,
    /// Dark-count rate per detector (Hz).
    pub dark_rate: f64,
    /// Dark-count acceptance time per slot (s).
    pub dark_window: f64,
    /// Non-paralysable dead time (s).
    pub dead_time: f64,
    pub visibility: f64,
    /// Probability a Z-arm photon lands in the other time bin.
    pub z_error_floor: f64,
    /// Gaussian click-time jitter (s).
    pub jitter_sigma: f64,
    /// Time-bin spacing (s).
    pub pulse_period: f64,
    /// Width of each discrimination window, centred on its slot (s).
    pub window: f64,
    /// Count rate above which a warning is raised (Hz).
    pub max_count_rate: f64,
}

impl ReceiverConfig {
    pub fn sequential(basis: Basis, params: &SystemParams) -> Self {
        Self::with_mode(ReceiverMode::Sequential(basis), params)
    }

    pub fn passive(protocol: Protocol, params: &SystemParams, key_fraction: f64) -> Self {
        Self::with_mode(
            ReceiverMode::Passive { key: protocol.key_basis(), check: protocol.check_basis(), key_fraction },
            params,
        )
    }

    pub fn with_mode(mode: ReceiverMode, params: &SystemParams) -> Self {
        Self {
            mode,
            amzi_loss: params.amzi_loss,
            z_arm_attenuation: params.z_arm_attenuation,
            amzi_delay: params.pulse_period(),
            detector_efficiency: params.detector_efficiency,
            dark_rate: params.dark_rate,
            dark_window: params.dark_window,
            dead_time: params.dead_time,
            visibility: params.visibility,
            z_error_floor: params.z_error_floor,
            jitter_sigma: params.jitter_sigma,
            pulse_period: params.pulse_period(),
            window: params.pulse_period(),
            max_count_rate: params.max_count_rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if ((self.amzi_delay - self.pulse_period) / self.pulse_period).abs() > 1e-12 {
            return Err(Error::InvalidArgument("interferometer delay must equal one pulse period".into()));
        }
        if let ReceiverMode::Passive { key, check, key_fraction } = self.mode {
            if key == check || !(0.0..=1.0).contains(&key_fraction) {
                return Err(Error::InvalidArgument("passive receiver needs two bases and a split in [0, 1]".into()));
            }
        }
        if let ReceiverMode::Sequential(_) = self.mode {
        } else if self.window > self.pulse_period {
            return Err(Error::InvalidArgument("discrimination window wider than a slot".into()));
        }
        Ok(())
    }

    /// Measurement arms with the fraction of incoming light each receives.
    pub fn arms(&self) -> Vec<(Arm, f64)> {
        match self.mode {
            ReceiverMode::Sequential(b) => vec![(Arm::for_basis(b), 1.0)],
            ReceiverMode::Passive { key, check, key_fraction } => {
                vec![(Arm::for_basis(key), key_fraction), (Arm::for_basis(check), 1.0 - key_fraction)]
            }
        }
    }

    /// Bases Bob measures in this configuration.
    pub fn bases(&self) -> Vec<Basis> {
        match self.mode {
            ReceiverMode::Sequential(b) => vec![b],
            ReceiverMode::Passive { key, check, .. } => vec![key, check],
        }
    }

    pub fn detectors(&self) -> Vec<DetectorId> {
        self.bases()
            .into_iter()
            .flat_map(|b| match b {
                Basis::Z => vec![DetectorId::Z],
                b => vec![DetectorId::Port1(b), DetectorId::Port2(b)],
            })
            .collect()
    }

    pub fn dark_prob(&self) -> f64 {
        self.dark_rate * self.dark_window
    }

    pub fn interferometer(&self, basis: Basis) -> Interferometer {
        Interferometer {
            transmission: db_to_transmittance(self.amzi_loss),
            visibility: self.visibility,
            phase_shift: phase_shift_for(basis),
        }
    }

    /// Number of slots after an accepted click during which the detector is blind.
    pub fn dead_slots(&self) -> usize {
        let ratio = self.dead_time * (1.0 - DEAD_TIME_SLACK) / self.pulse_period;
        (ratio.ceil() as usize).saturating_sub(1)
    }

    /// Probability that a photon entering Bob's Z arm is detected.
    pub fn z_path_efficiency(&self) -> f64 {
        self.detector_efficiency * db_to_transmittance(self.z_arm_attenuation)
    }

    /// Probability that a photon entering the interferometer is detected in the
    /// central (bit-carrying) slot.
    pub fn interferometer_path_efficiency(&self) -> f64 {
        self.detector_efficiency * db_to_transmittance(self.amzi_loss) * 0.5
    }
}

/// Lossy, imperfect unbalanced interferometer with a phase modulator on the long arm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interferometer {
    /// Power transmission (linear).
    pub transmission: f64,
    pub visibility: f64,
    /// Modulator phase (rad).
    pub phase_shift: f64,
}

/// Output fluxes per slot at (port 1, port 2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmziOutput {
    /// Previous late pulse (long arm) against the current early pulse (short arm).
    pub leading: [f64; 2],
    /// Current early pulse (long arm) against the current late pulse (short arm).
    pub central: [f64; 2],
    /// Current late pulse through the long arm, without its successor.
    pub trailing: [f64; 2],
}

/// Two-path interference at the two output ports.
#[inline]
fn interfere(a: f64, b: f64, delta: f64, visibility: f64) -> [f64; 2] {
    let cross = 2.0 * visibility * (a * b).sqrt() * delta.cos();
    [a + b + cross, a + b - cross]
}

impl Interferometer {
    /// Flux through one path to one port: half at each splitter, times the loss.
    #[inline]
    pub fn path_factor(&self) -> f64 {
        self.transmission / 4.0
    }

    /// Interference phase of the leading slot.
    #[inline]
    fn leading_phase(&self, prev: &PulsePair, cur: &PulsePair) -> f64 {
        cur.global_phase - (prev.global_phase + prev.rel_phase) - self.phase_shift
    }

    pub fn transform(&self, prev: Option<&PulsePair>, cur: &PulsePair) -> AmziOutput {
        let q = self.path_factor();
        let prev = prev.copied().unwrap_or(PulsePair::VACUUM);
        let leading =
            interfere(prev.flux_late * q, cur.flux_early * q, self.leading_phase(&prev, cur), self.visibility);
        let central =
            interfere(cur.flux_early * q, cur.flux_late * q, cur.rel_phase - self.phase_shift, self.visibility);
        let trailing = [cur.flux_late * q; 2];
        AmziOutput { leading, central, trailing }
    }
}

/// Per-slot, per-port fluxes behind the interferometer of `basis`.
pub fn amzi_transform(prev: Option<&PulsePair>, cur: &PulsePair, cfg: &ReceiverConfig, basis: Basis) -> AmziOutput {
    cfg.interferometer(basis).transform(prev, cur)
}

/// Early/late fluxes at the Z detector (before bin crosstalk).
pub fn z_direct_transform(pair: &PulsePair, cfg: &ReceiverConfig) -> [f64; 2] {
    let t = db_to_transmittance(cfg.z_arm_attenuation);
    [pair.flux_early * t, pair.flux_late * t]
}

/// Moves a fraction `floor` of each bin's flux into the other bin.
pub fn z_bin_crosstalk(bins: [f64; 2], floor: f64) -> [f64; 2] {
    [(1.0 - floor) * bins[0] + floor * bins[1], (1.0 - floor) * bins[1] + floor * bins[0]]
}

/// Threshold-detector click probability for a Poissonian slot with mean
/// `flux_at_detector` photons, including dark counts accumulated over `slot_width`.
pub fn detector_click_prob(flux_at_detector: f64, params: &SystemParams, slot_width: f64) -> f64 {
    click_prob(params.detector_efficiency, params.dark_rate * slot_width, flux_at_detector)
}

#[inline]
pub(crate) fn click_prob(efficiency: f64, dark_prob: f64, flux: f64) -> f64 {
    1.0 - (1.0 - dark_prob) * (-efficiency * flux).exp()
}

/// Non-paralysable dead-time filter, one state per detector.
#[derive(Debug, Clone)]
pub struct DeadTimeFilter {
    dead_time: f64,
    last: [Option<f64>; 5],
    accepted: [u64; 5],
    dropped: [u64; 5],
}

impl DeadTimeFilter {
    pub fn new(dead_time: f64) -> Self {
        Self { dead_time, last: [None; 5], accepted: [0; 5], dropped: [0; 5] }
    }

    /// Returns whether the click survives; dropped clicks do not extend the dead time.
    pub fn accept(&mut self, click: &Click) -> bool {
        let i = click.detector.index();
        let ok = match self.last[i] {
            Some(prev) => click.timestamp - prev >= self.dead_time * (1.0 - DEAD_TIME_SLACK),
            None => true,
        };
        if ok {
            self.last[i] = Some(click.timestamp);
            self.accepted[i] += 1;
        } else {
            self.dropped[i] += 1;
        }
        ok
    }

    pub fn filter(&mut self, clicks: impl IntoIterator<Item = Click>) -> Vec<Click> {
        clicks.into_iter().filter(|c| self.accept(c)).collect()
    }

    pub fn accepted(&self, detector: DetectorId) -> u64 {
        self.accepted[detector.index()]
    }

    pub fn dropped(&self, detector: DetectorId) -> u64 {
        self.dropped[detector.index()]
    }
}

/// A detector whose accepted click rate exceeded `max_count_rate`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateWarning {
    pub detector: DetectorId,
    pub rate: f64,
}

/// Checks accepted counts against the configured rate ceiling, logging any excess.
pub fn rate_warnings(filter: &DeadTimeFilter, duration: f64, max_rate: f64) -> Vec<RateWarning> {
    if duration <= 0.0 {
        return Vec::new();
    }
    DetectorId::ALL
        .iter()
        .filter_map(|&d| {
            let rate = filter.accepted(d) as f64 / duration;
            (rate > max_rate).then(|| {
                warn!("detector {d}: {rate:.3e} counts/s exceeds the {max_rate:.3e} counts/s ceiling");
                RateWarning { detector: d, rate }
            })
        })
        .collect()
}

/// Precomputed per-session detection model: channel, arm losses and split.
#[derive(Debug, Clone)]
pub struct DetectionModel {
    arms: Vec<ArmModel>,
    efficiency: f64,
    dark_prob: f64,
    jitter_sigma: f64,
    symbol_period: f64,
    pulse_period: f64,
}

#[derive(Debug, Clone, Copy)]
enum ArmModel {
    Direct { scale: f64, floor: f64 },
    Interferometer { basis: Basis, scale: f64, interferometer: Interferometer },
}

impl DetectionModel {
    pub fn new(cfg: &ReceiverConfig) -> Self {
        let arms = cfg
            .arms()
            .into_iter()
            .map(|(arm, fraction)| match arm {
                Arm::Direct => ArmModel::Direct {
                    scale: fraction * db_to_transmittance(cfg.z_arm_attenuation),
                    floor: cfg.z_error_floor,
                },
                Arm::Interferometer { basis, .. } => {
                    ArmModel::Interferometer { basis, scale: fraction, interferometer: cfg.interferometer(basis) }
                }
            })
            .collect();
        Self {
            arms,
            efficiency: cfg.detector_efficiency,
            dark_prob: cfg.dark_prob(),
            jitter_sigma: cfg.jitter_sigma,
            symbol_period: 2.0 * cfg.pulse_period,
            pulse_period: cfg.pulse_period,
        }
    }

    #[inline]
    fn slot_time<R: RngCore>(&self, index: u64, slot: usize, rng: &mut R) -> f64 {
        let t = index as f64 * self.symbol_period + (slot as f64 + 0.5) * self.pulse_period;
        if self.jitter_sigma > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            t + self.jitter_sigma * z
        } else {
            t
        }
    }

    /// Draws the raw (pre-dead-time) clicks of consecutive symbols
    /// `first_index..first_index + pairs.len()`. `prev` is the symbol before the
    /// first one. Pairs are as sent by Alice; the channel is applied here.
    ///
    /// Each detector is a Bernoulli process over slots. Candidate slots are
    /// drawn with geometric gaps at an upper-bound probability and then
    /// accepted with the exact click probability, so only a few random
    /// numbers are needed per click rather than one per slot. Output is in
    /// time order, ties broken by detector.
    pub fn raw_clicks<R: RngCore>(
        &self,
        pairs: &[PulsePair],
        prev: Option<PulsePair>,
        first_index: u64,
        channel_transmittance: f64,
        rng: &mut R,
        out: &mut Vec<Click>,
    ) {
        let start = out.len();
        let eta = self.efficiency;
        let pd = self.dark_prob;
        let prev = prev.unwrap_or(PulsePair::VACUUM);
        let max_bin = pairs.iter().chain([&prev]).fold(0.0f64, |m, p| m.max(p.flux_early).max(p.flux_late));
        let n_slots = 2 * pairs.len() as u64;
        for arm in &self.arms {
            match *arm {
                ArmModel::Direct { scale, floor } => {
                    let s = scale * channel_transmittance;
                    let bound = (pd + eta * max_bin * s).min(1.0);
                    for_each_candidate(n_slots, bound, rng, |slot, rng| {
                        let p = &pairs[(slot / 2) as usize];
                        let (e, l) = (p.flux_early * s, p.flux_late * s);
                        let x =
                            if slot % 2 == 0 { (1.0 - floor) * e + floor * l } else { (1.0 - floor) * l + floor * e };
                        if unit_f64(rng.next_u64()) * bound < click_prob(eta, pd, x) {
                            out.push(self.click(first_index, slot, DetectorId::Z, rng));
                        }
                    });
                }
                ArmModel::Interferometer { basis, scale, interferometer } => {
                    let q = interferometer.path_factor() * scale * channel_transmittance;
                    let bound = (pd + eta * 4.0 * max_bin * q).min(1.0);
                    for (port, detector) in [DetectorId::Port1(basis), DetectorId::Port2(basis)].into_iter().enumerate()
                    {
                        for_each_candidate(n_slots, bound, rng, |slot, rng| {
                            let i = (slot / 2) as usize;
                            let cur = &pairs[i];
                            let (a, b, delta) = if slot % 2 == 0 {
                                let before = if i == 0 { &prev } else { &pairs[i - 1] };
                                (before.flux_late * q, cur.flux_early * q, interferometer.leading_phase(before, cur))
                            } else {
                                (cur.flux_early * q, cur.flux_late * q, cur.rel_phase - interferometer.phase_shift)
                            };
                            let x = interfere(a, b, delta, interferometer.visibility)[port];
                            if unit_f64(rng.next_u64()) * bound < click_prob(eta, pd, x) {
                                out.push(self.click(first_index, slot, detector, rng));
                            }
                        });
                    }
                }
            }
        }
        out[start..].sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then(a.detector.cmp(&b.detector)));
    }

    #[inline]
    fn click<R: RngCore>(&self, first_index: u64, slot: u64, detector: DetectorId, rng: &mut R) -> Click {
        let index = first_index + slot / 2;
        Click { timestamp: self.slot_time(index, (slot % 2) as usize, rng), detector }
    }
}

/// Calls `f` on each slot of a Bernoulli(`p`) process over `0..n`.
#[inline]
fn for_each_candidate<R: RngCore>(n: u64, p: f64, rng: &mut R, mut f: impl FnMut(u64, &mut R)) {
    if p <= 0.0 {
        return;
    }
    let log_q = (-p).ln_1p();
    let mut slot = 0u64;
    loop {
        if p < 1.0 {
            let u = 1.0 - unit_f64(rng.next_u64());
            let gap = (u.ln() / log_q).floor();
            if gap >= (n - slot) as f64 {
                return;
            }
            slot += gap as u64;
        }
        if slot >= n {
            return;
        }
        f(slot, rng);
        slot += 1;
    }
}

/// Result of a detection run.
#[derive(Debug, Clone, Default)]
pub struct DetectionOutcome {
    /// Clicks that survived the dead-time filter, in time order.
    pub clicks: Vec<Click>,
    /// Clicks removed by the dead-time filter.
    pub dead_time_dropped: u64,
    pub warnings: Vec<RateWarning>,
}

/// Simulates Bob's clicks for a stream of Alice's pulse pairs (symbol 0 first).
///
/// Chunks of [`DETECTION_CHUNK`] symbols are drawn in parallel from seeded
/// streams; the dead-time filter then runs sequentially over the merged
/// stream, so the output is identical for a fixed seed.
pub fn simulate_detection_stream(
    pairs: &[PulsePair],
    channel: &Channel,
    cfg: &ReceiverConfig,
    params: &SystemParams,
    seed: u64,
) -> Result<DetectionOutcome> {
    cfg.validate()?;
    let t = transmittance(channel, params);
    let model = DetectionModel::new(cfg);
    let chunks: Vec<Vec<Click>> = pairs
        .par_chunks(DETECTION_CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let start = c * DETECTION_CHUNK;
            let prev = start.checked_sub(1).map(|i| pairs[i]);
            let mut rng = detection_rng(seed, 0, c as u64);
            let mut out = Vec::new();
            model.raw_clicks(chunk, prev, start as u64, t, &mut rng, &mut out);
            out
        })
        .collect();
    let mut filter = DeadTimeFilter::new(cfg.dead_time);
    let clicks = filter.filter(chunks.into_iter().flatten());
    let dead_time_dropped = DetectorId::ALL.iter().map(|&d| filter.dropped(d)).sum();
    let duration = pairs.len() as f64 * 2.0 * cfg.pulse_period;
    let warnings = rate_warnings(&filter, duration, cfg.max_count_rate);
    Ok(DetectionOutcome { clicks, dead_time_dropped, warnings })
}

/// Folding histogram of click times.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramConfig {
    /// Bin width (s).
    pub bin_width: f64,
    pub n_bins: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self { bin_width: 100e-12, n_bins: 1 << 11 }
    }
}

impl HistogramConfig {
    /// Folding period (s).
    pub fn window(&self) -> f64 {
        self.bin_width * self.n_bins as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    pub n_bins: usize,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(cfg: HistogramConfig) -> Self {
        Self { bin_width: cfg.bin_width, n_bins: cfg.n_bins, counts: vec![0; cfg.n_bins] }
    }

    pub fn config(&self) -> HistogramConfig {
        HistogramConfig { bin_width: self.bin_width, n_bins: self.n_bins }
    }

    /// Bin a time folds into.
    pub fn bin_of(&self, t: f64) -> usize {
        let folded = t.rem_euclid(self.config().window());
        ((folded / self.bin_width).floor() as usize).min(self.n_bins - 1)
    }

    pub fn add(&mut self, t: f64) {
        let b = self.bin_of(t);
        self.counts[b] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Bin-wise sum; both histograms must share a configuration.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if self.config() != other.config() {
            return Err(Error::InvalidArgument("histogram configurations differ".into()));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// `bin_index,time_ps,counts` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "bin_index,time_ps,counts")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(w, "{},{},{}", i, format_ps(i as f64 * self.bin_width), c)?;
        }
        Ok(())
    }
}

/// Several histograms as one `detector,bin_index,time_ps,counts` CSV.
pub fn write_histograms_csv<W: Write>(histograms: &[(DetectorId, Histogram)], mut w: W) -> io::Result<()> {
    writeln!(w, "detector,bin_index,time_ps,counts")?;
    for (d, h) in histograms {
        for (i, c) in h.counts.iter().enumerate() {
            writeln!(w, "{d},{i},{},{c}", format_ps(i as f64 * h.bin_width))?;
        }
    }
    Ok(())
}

pub(crate) fn format_ps(t: f64) -> String {
    let ps = t * 1e12;
    let rounded = ps.round();
    if (ps - rounded).abs() < 1e-6 {
        format!("{}", rounded as i64)
    } else {
        format!("{ps}")
    }
}

/// Folds clicks into a histogram.
pub fn build_histogram<'a>(clicks: impl IntoIterator<Item = &'a Click>, cfg: HistogramConfig) -> Histogram {
    let mut h = Histogram::new(cfg);
    for c in clicks {
        h.add(c.timestamp);
    }
    h
}

/// Position of a detection within its symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    Early,
    Late,
    Interference,
    Satellite,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionEvent {
    pub symbol_index: u64,
    pub bob_basis: Basis,
    /// `None` for satellite detections, which carry no bit.
    pub bit: Option<Bit>,
    pub slot: Slot,
    pub timestamp: f64,
    pub detector: DetectorId,
}

impl DetectionEvent {
    pub fn is_valid(&self) -> bool {
        self.bit.is_some()
    }
}

/// Shared transmitter/receiver timing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymbolClock {
    /// Start of symbol 0 (s).
    pub origin: f64,
    pub pulse_period: f64,
    /// Window width around each slot centre (s).
    pub window: f64,
}

impl SymbolClock {
    pub fn new(cfg: &ReceiverConfig) -> Self {
        Self { origin: 0.0, pulse_period: cfg.pulse_period, window: cfg.window }
    }

    pub fn symbol_period(&self) -> f64 {
        2.0 * self.pulse_period
    }

    /// Symbol index and slot (0 or 1) whose window contains `t`.
    pub fn locate(&self, t: f64) -> Option<(u64, usize)> {
        let rel = t - self.origin;
        if rel < 0.0 {
            return None;
        }
        let k = (rel / self.symbol_period()).floor();
        let offset = rel - k * self.symbol_period();
        let half = self.window / 2.0;
        (0..2).find(|&s| (offset - (s as f64 + 0.5) * self.pulse_period).abs() <= half).map(|s| (k as u64, s))
    }
}

/// Assigns a click to a symbol and slot.
pub fn discriminate(click: &Click, clock: &SymbolClock) -> Option<DetectionEvent> {
    let (symbol_index, s) = clock.locate(click.timestamp)?;
    let (slot, bit) = match (click.detector, s) {
        (DetectorId::Z, 0) => (Slot::Early, Some(Bit::Zero)),
        (DetectorId::Z, _) => (Slot::Late, Some(Bit::One)),
        (_, 0) => (Slot::Satellite, None),
        (DetectorId::Port1(_), _) => (Slot::Interference, Some(Bit::Zero)),
        (DetectorId::Port2(_), _) => (Slot::Interference, Some(Bit::One)),
    };
    Some(DetectionEvent {
        symbol_index,
        bob_basis: click.detector.basis(),
        bit,
        slot,
        timestamp: click.timestamp,
        detector: click.detector,
    })
}

#[derive(Debug, Clone, Default)]
pub struct Discrimination {
    pub events: Vec<DetectionEvent>,
    /// Clicks that fell outside every window.
    pub outside: u64,
}

pub fn discriminate_events(clicks: &[Click], clock: &SymbolClock) -> Discrimination {
    let mut d = Discrimination::default();
    for c in clicks {
        match discriminate(c, clock) {
            Some(e) => d.events.push(e),
            None => d.outside += 1,
        }
    }
    d
}
