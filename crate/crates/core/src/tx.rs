//! Alice: random symbol plans and their optical pulse pairs.
//!
//! A symbol occupies two time bins. Z symbols put the whole flux into one
//! bin; X and Y symbols split it equally between both bins and carry the bit
//! in the relative phase. Every symbol gets a fresh uniform global phase.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::io::{self, Write};

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{Basis, Bit, IntensityClass, SystemParams};
use crate::rng::{stream_at, PHASE_STREAM, PLAN_STREAM};

/// Length of the fixed pseudorandom drive pattern in repeat mode.
pub const DEFAULT_PATTERN_LENGTH: usize = 1 << 10;

/// Alice's choice for one symbol.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymbolPlan {
    pub index: u64,
    pub basis: Basis,
    pub bit: Bit,
    pub intensity: IntensityClass,
    /// Global-phase block; the phase is re-randomised every symbol, so this
    /// equals `index`.
    pub phase_block_id: u64,
}

/// Optical content of one symbol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulsePair {
    /// Mean photon number in the early bin.
    pub flux_early: f64,
    /// Mean photon number in the late bin.
    pub flux_late: f64,
    /// Phase of the late pulse relative to the early one (rad, in [0, 2π)).
    pub rel_phase: f64,
    /// Common optical phase of the pair (rad, uniform per symbol).
    pub global_phase: f64,
}

impl PulsePair {
    pub const VACUUM: PulsePair = PulsePair { flux_early: 0.0, flux_late: 0.0, rel_phase: 0.0, global_phase: 0.0 };
}

/// Total mean photon number of a pulse pair.
pub fn symbol_mean_photon(pair: &PulsePair) -> f64 {
    pair.flux_early + pair.flux_late
}

/// Transmitter switches. Trace reproduction turns both off.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxOptions {
    /// Attenuate X/Y symbols by 3 dB so every basis carries the same mean photon number.
    pub equalise: bool,
    /// Draw decoy and vacuum intensities; when off every symbol is a signal.
    pub decoys: bool,
}

impl Default for TxOptions {
    fn default() -> Self {
        Self { equalise: true, decoys: true }
    }
}

impl TxOptions {
    pub const TRACE: TxOptions = TxOptions { equalise: false, decoys: false };
}

/// Where the symbol choices come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternMode {
    /// Fresh i.i.d. choices for every symbol.
    Fresh,
    /// A fixed pattern of the given length, repeated; global phases stay fresh.
    Repeat { period: usize },
}

/// Relative phase carried by an equatorial symbol.
///
/// X: 0 → 0, 1 → π. Y: 0 → π/2, 1 → 3π/2. Z symbols return 0.
pub fn relative_phase(basis: Basis, bit: Bit) -> f64 {
    match (basis, bit) {
        (Basis::Z, _) => 0.0,
        (Basis::X, Bit::Zero) => 0.0,
        (Basis::X, Bit::One) => PI,
        (Basis::Y, Bit::Zero) => FRAC_PI_2,
        (Basis::Y, Bit::One) => 3.0 * FRAC_PI_2,
    }
}

/// Compact code of a symbol choice, `basis·6 + bit·3 + intensity`, in `0..18`.
pub fn class_code(basis: Basis, bit: Bit, intensity: IntensityClass) -> u8 {
    (basis.index() * 6 + bit.value() as usize * 3 + intensity.index()) as u8
}

pub fn class_from_code(code: u8) -> (Basis, Bit, IntensityClass) {
    let c = code as usize;
    (Basis::ALL[c / 6], Bit::from(c / 3 % 2 == 1), IntensityClass::ALL[c % 3])
}

/// Words generated per bulk refill.
const BUFFER_WORDS: usize = 1 << 10;

/// Deterministic, random-access source of symbol plans and global phases.
///
/// Plan `i` is a pure function of `(seed, i)`: each symbol consumes one
/// 64-bit word of the plan stream (basis from the high half, intensity from
/// the low half, bit from the lowest bit) and one 32-bit word of the phase
/// stream.
#[derive(Debug, Clone)]
pub struct Transmitter {
    params: SystemParams,
    seed: u64,
    options: TxOptions,
    pattern: Option<Vec<u8>>,
    /// Cumulative basis and intensity thresholds.
    thresholds: [f64; 4],
}

impl Transmitter {
    pub fn new(params: &SystemParams, seed: u64) -> Self {
        let thresholds =
            [params.prob_z, params.prob_z + params.prob_x, params.prob_signal, params.prob_signal + params.prob_decoy];
        Self { params: params.clone(), seed, options: TxOptions::default(), pattern: None, thresholds }
    }

    pub fn with_options(mut self, options: TxOptions) -> Self {
        self.options = options;
        if let Some(p) = &self.pattern {
            let period = p.len();
            self = self.with_mode(PatternMode::Repeat { period });
        }
        self
    }

    pub fn with_mode(mut self, mode: PatternMode) -> Self {
        self.pattern = match mode {
            PatternMode::Fresh => None,
            PatternMode::Repeat { period } => {
                let mut pat = Vec::with_capacity(period);
                self.fresh_codes(0, period.max(1), &mut pat);
                Some(pat)
            }
        };
        self
    }

    pub fn params(&self) -> &SystemParams {
        &self.params
    }

    pub fn options(&self) -> TxOptions {
        self.options
    }

    /// The repeated pattern, when in repeat mode.
    pub fn pattern(&self) -> Option<Vec<SymbolPlan>> {
        self.pattern.as_ref().map(|p| p.iter().enumerate().map(|(i, &c)| plan_from_code(i as u64, c)).collect())
    }

    #[inline]
    fn choose(&self, w: u64) -> u8 {
        const HI: f64 = 1.0 / (1u64 << 32) as f64;
        const LO: f64 = 1.0 / (1u64 << 31) as f64;
        let t = &self.thresholds;
        let u_basis = (w >> 32) as f64 * HI;
        let basis = if u_basis < t[0] {
            Basis::Z
        } else if u_basis < t[1] {
            Basis::X
        } else {
            Basis::Y
        };
        let intensity = if !self.options.decoys {
            IntensityClass::Signal
        } else {
            let u = ((w as u32) >> 1) as f64 * LO;
            if u < t[2] {
                IntensityClass::Signal
            } else if u < t[3] {
                IntensityClass::Decoy
            } else {
                IntensityClass::Vacuum
            }
        };
        class_code(basis, Bit::from(w & 1 == 1), intensity)
    }

    fn fresh_codes(&self, start: u64, len: usize, out: &mut Vec<u8>) {
        let mut rng = stream_at(self.seed, PLAN_STREAM, 2 * start as u128);
        let mut buf = [0u64; BUFFER_WORDS];
        let mut left = len;
        while left > 0 {
            let n = left.min(BUFFER_WORDS);
            rng.fill(&mut buf[..n]);
            out.extend(buf[..n].iter().map(|&w| self.choose(w)));
            left -= n;
        }
    }

    /// Appends the class codes (see [`class_code`]) of symbols `start..start+len`.
    pub fn codes_into(&self, start: u64, len: usize, out: &mut Vec<u8>) {
        match &self.pattern {
            None => self.fresh_codes(start, len, out),
            Some(pat) => {
                let l = pat.len() as u64;
                out.extend((start..start + len as u64).map(|i| pat[(i % l) as usize]));
            }
        }
    }

    /// Appends the global phases (rad) of symbols `start..start+len`.
    pub fn phases_into(&self, start: u64, len: usize, out: &mut Vec<f64>) {
        const SCALE: f64 = TAU / (1u64 << 32) as f64;
        let mut rng = stream_at(self.seed, PHASE_STREAM, start as u128);
        let mut buf = [0u32; BUFFER_WORDS];
        let mut left = len;
        while left > 0 {
            let n = left.min(BUFFER_WORDS);
            rng.fill(&mut buf[..n]);
            out.extend(buf[..n].iter().map(|&w| w as f64 * SCALE));
            left -= n;
        }
    }

    /// Appends the plans for symbols `start..start+len` to `out`.
    pub fn plans_into(&self, start: u64, len: usize, out: &mut Vec<SymbolPlan>) {
        let mut codes = Vec::with_capacity(len);
        self.codes_into(start, len, &mut codes);
        out.extend(codes.iter().enumerate().map(|(i, &c)| plan_from_code(start + i as u64, c)));
    }

    pub fn plans(&self, start: u64, len: usize) -> Vec<SymbolPlan> {
        let mut v = Vec::with_capacity(len);
        self.plans_into(start, len, &mut v);
        v
    }

    /// Pulse pair of every class code (with zero global phase).
    pub fn class_pairs(&self) -> [PulsePair; 18] {
        std::array::from_fn(|c| encode_with_phase(&plan_from_code(0, c as u8), &self.params, self.options, 0.0))
    }

    /// Encodes `plans` (which must be consecutive, starting at `plans[0].index`)
    /// into pulse pairs, appending to `out`.
    pub fn encode_into(&self, plans: &[SymbolPlan], out: &mut Vec<PulsePair>) {
        let Some(first) = plans.first() else { return };
        let mut phases = Vec::with_capacity(plans.len());
        self.phases_into(first.phase_block_id, plans.len(), &mut phases);
        out.extend(
            plans.iter().zip(phases).map(|(plan, phase)| encode_with_phase(plan, &self.params, self.options, phase)),
        );
    }

    /// Plan and pulse pair of a single symbol.
    pub fn symbol(&self, index: u64) -> (SymbolPlan, PulsePair) {
        let plan = self.plans(index, 1)[0];
        let mut pairs = Vec::with_capacity(1);
        self.encode_into(&[plan], &mut pairs);
        (plan, pairs[0])
    }
}

pub fn plan_from_code(index: u64, code: u8) -> SymbolPlan {
    let (basis, bit, intensity) = class_from_code(code);
    SymbolPlan { index, basis, bit, intensity, phase_block_id: index }
}

/// Draws `length` i.i.d. symbol plans; identical output for identical seeds.
pub fn generate_pattern(seed: u64, length: usize, params: &SystemParams) -> Result<Vec<SymbolPlan>> {
    if length == 0 {
        return Err(Error::InvalidArgument("pattern length must be at least 1".into()));
    }
    let params = params.clone().validate()?;
    Ok(Transmitter::new(&params, seed).plans(0, length))
}

/// Maps a plan to its pulse pair with a freshly sampled global phase.
pub fn encode_symbol<R: Rng + ?Sized>(plan: &SymbolPlan, params: &SystemParams, rng: &mut R) -> PulsePair {
    let phase = rng.gen::<f64>() * TAU;
    encode_with_phase(plan, params, TxOptions::default(), phase)
}

/// Deterministic part of the encoding.
pub fn encode_with_phase(plan: &SymbolPlan, params: &SystemParams, options: TxOptions, global_phase: f64) -> PulsePair {
    let mu = params.flux(plan.intensity);
    let (flux_early, flux_late) = match plan.basis {
        Basis::Z => match plan.bit {
            Bit::Zero => (mu, 0.0),
            Bit::One => (0.0, mu),
        },
        Basis::X | Basis::Y => {
            let per_bin = if options.equalise { mu / 2.0 } else { mu };
            (per_bin, per_bin)
        }
    };
    PulsePair { flux_early, flux_late, rel_phase: relative_phase(plan.basis, plan.bit), global_phase }
}

/// Writes plans as `index,basis,bit,intensity` CSV.
pub fn write_plan_csv<W: Write>(mut w: W, plans: &[SymbolPlan]) -> io::Result<()> {
    writeln!(w, "index,basis,bit,intensity")?;
    for p in plans {
        writeln!(w, "{},{},{},{}", p.index, p.basis, p.bit, p.intensity)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plan(basis: Basis, bit: Bit, intensity: IntensityClass) -> SymbolPlan {
        SymbolPlan { index: 0, basis, bit, intensity, phase_block_id: 0 }
    }

    #[test]
    fn encode_examples() {
        let p = SystemParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = encode_symbol(&plan(Basis::Z, Bit::Zero, IntensityClass::Signal), &p, &mut rng);
        assert_eq!((z.flux_early, z.flux_late), (0.5, 0.0));
        let x = encode_symbol(&plan(Basis::X, Bit::Zero, IntensityClass::Signal), &p, &mut rng);
        assert_eq!((x.flux_early, x.flux_late, x.rel_phase), (0.25, 0.25, 0.0));
        let y = encode_symbol(&plan(Basis::Y, Bit::One, IntensityClass::Signal), &p, &mut rng);
        assert_eq!(y.rel_phase, 3.0 * FRAC_PI_2);
        let v = encode_symbol(&plan(Basis::Y, Bit::Zero, IntensityClass::Vacuum), &p, &mut rng);
        assert_eq!((v.flux_early, v.flux_late), (0.0005, 0.0005));
        let vz = encode_symbol(&plan(Basis::Z, Bit::Zero, IntensityClass::Vacuum), &p, &mut rng);
        assert_eq!((vz.flux_early, vz.flux_late), (0.001, 0.0));
        assert!((0.0..TAU).contains(&y.global_phase));
    }

    #[test]
    fn mean_photon_sum() {
        let a = PulsePair { flux_early: 0.5, flux_late: 0.0, rel_phase: 0.0, global_phase: 1.0 };
        let b = PulsePair { flux_early: 0.25, flux_late: 0.25, rel_phase: 0.0, global_phase: 1.0 };
        assert_eq!(symbol_mean_photon(&a), 0.5);
        assert_eq!(symbol_mean_photon(&b), 0.5);
    }

    #[test]
    fn basis_intensity_equality_is_exact() {
        let p = SystemParams::default();
        for k in IntensityClass::ALL {
            let totals: Vec<f64> = Basis::ALL
                .iter()
                .flat_map(|&b| [Bit::Zero, Bit::One].map(|bit| (b, bit)))
                .map(|(b, bit)| symbol_mean_photon(&encode_with_phase(&plan(b, bit, k), &p, TxOptions::default(), 0.0)))
                .collect();
            assert!(totals.iter().all(|&t| t == p.flux(k)), "{k}: {totals:?}");
        }
    }

    #[test]
    fn unequalised_equatorial_doubles_flux() {
        let p = SystemParams::default();
        let x = encode_with_phase(&plan(Basis::X, Bit::One, IntensityClass::Signal), &p, TxOptions::TRACE, 0.0);
        assert_eq!(symbol_mean_photon(&x), 1.0);
    }

    #[test]
    fn pattern_is_deterministic_and_chunk_independent() {
        let p = SystemParams::default();
        let a = generate_pattern(7, 1024, &p).unwrap();
        let b = generate_pattern(7, 1024, &p).unwrap();
        assert_eq!(a, b);
        let tx = Transmitter::new(&p, 7);
        let mut pieces = tx.plans(0, 300);
        pieces.extend(tx.plans(300, 724));
        assert_eq!(a, pieces);
        assert_ne!(a, generate_pattern(8, 1024, &p).unwrap());
        assert!(a.iter().enumerate().all(|(i, s)| s.index == i as u64 && s.phase_block_id == i as u64));
        assert!(generate_pattern(7, 0, &p).is_err());
    }

    #[test]
    fn encoding_is_chunk_independent() {
        let tx = Transmitter::new(&SystemParams::default(), 3);
        let plans = tx.plans(0, 100);
        let mut whole = Vec::new();
        tx.encode_into(&plans, &mut whole);
        let mut split = Vec::new();
        tx.encode_into(&plans[..37], &mut split);
        tx.encode_into(&plans[37..], &mut split);
        assert_eq!(whole, split);
        assert_eq!(tx.symbol(42).1, whole[42]);
    }

    #[test]
    fn short_pattern_basis_rate() {
        // P_Z = 0.8 over 1024 symbols, 3σ binomial band.
        let p = SystemParams::default();
        for seed in 0..5 {
            let pat = generate_pattern(seed, 1024, &p).unwrap();
            let nz = pat.iter().filter(|s| s.basis == Basis::Z).count() as f64;
            let sigma = (1024.0f64 * 0.8 * 0.2).sqrt();
            assert!((nz - 819.2).abs() < 3.0 * sigma, "seed {seed}: {nz}");
        }
    }

    #[test]
    fn intensity_frequencies_chi_square() {
        // Pearson chi-square over the 9 (basis, intensity) cells against the
        // product distribution; 8 degrees of freedom, 99.9% quantile 26.12.
        let p = SystemParams::default();
        let n = 1_000_000;
        let pat = generate_pattern(11, n, &p).unwrap();
        let mut cells = [[0f64; 3]; 3];
        for s in &pat {
            cells[s.basis.index()][s.intensity.index()] += 1.0;
        }
        let mut chi2 = 0.0;
        for b in Basis::ALL {
            let nb: f64 = cells[b.index()].iter().sum();
            for k in IntensityClass::ALL {
                let expected = n as f64 * p.basis_prob(b) * p.intensity_prob(k);
                let obs = cells[b.index()][k.index()];
                chi2 += (obs - expected).powi(2) / expected;
            }
            let ps = cells[b.index()][0] / nb;
            let sigma = (0.8 * 0.2 / nb).sqrt();
            assert!((ps - 0.8).abs() < 3.0 * sigma, "{b}: P_s = {ps}");
        }
        assert!(chi2 < 26.12, "chi2 = {chi2}");
    }

    #[test]
    fn monte_carlo_mean_photon_per_basis() {
        let p = SystemParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for b in Basis::ALL {
            let n = 100_000;
            let mean: f64 = (0..n)
                .map(|i| {
                    let bit = Bit::from(i % 2 == 0);
                    symbol_mean_photon(&encode_symbol(&plan(b, bit, IntensityClass::Signal), &p, &mut rng))
                })
                .sum::<f64>()
                / n as f64;
            // Deterministic fluxes: the sample mean equals the class flux.
            assert!((mean - 0.5).abs() < 1e-12, "{b}: {mean}");
        }
    }

    #[test]
    fn global_phases_are_independent() {
        let tx = Transmitter::new(&SystemParams::default(), 99);
        let plans = tx.plans(0, 100_000);
        let mut pairs = Vec::new();
        tx.encode_into(&plans, &mut pairs);
        let (c, s) = pairs.iter().fold((0.0, 0.0), |(c, s), p| (c + p.global_phase.cos(), s + p.global_phase.sin()));
        let n = pairs.len() as f64;
        let modulus = (c * c + s * s).sqrt() / n;
        assert!(modulus < 3.0 / n.sqrt(), "{modulus}");
    }

    #[test]
    fn repeat_mode_repeats_choices_not_phases() {
        let tx = Transmitter::new(&SystemParams::default(), 4).with_mode(PatternMode::Repeat { period: 16 });
        let plans = tx.plans(0, 48);
        let mut pairs = Vec::new();
        tx.encode_into(&plans, &mut pairs);
        for i in 0..16 {
            assert_eq!(plans[i].basis, plans[i + 16].basis);
            assert_eq!(plans[i].bit, plans[i + 32].bit);
            assert_eq!(plans[i + 16].index, (i + 16) as u64);
            assert_ne!(pairs[i].global_phase, pairs[i + 16].global_phase);
        }
    }

    #[test]
    fn trace_options_disable_decoys() {
        let tx = Transmitter::new(&SystemParams::default(), 4).with_options(TxOptions::TRACE);
        assert!(tx.plans(0, 1000).iter().all(|p| p.intensity == IntensityClass::Signal));
    }

    #[test]
    fn plan_csv() {
        let mut buf = Vec::new();
        write_plan_csv(&mut buf, &[plan(Basis::Y, Bit::One, IntensityClass::Decoy)]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "index,basis,bit,intensity\n0,Y,1,v\n");
    }
}
