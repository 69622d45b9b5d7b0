//! Domain vocabulary shared by every stage: bases, bits, intensity classes,
//! protocols and the validated physical parameter set.
//!
//! Rates are in hertz, times in seconds, losses in decibels and efficiencies
//! or probabilities as linear fractions. No field mixes dB with a linear
//! fraction.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, ParamError, Result};

/// Tolerance used when checking that a probability family sums to one.
const PROB_SUM_TOL: f64 = 1e-9;

/// Preparation/measurement basis of a time-bin qubit.
///
/// `Z` is the polar basis (one occupied time bin); `X` and `Y` are the
/// equatorial bases (two equal pulses with a relative phase).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Basis {
    Z,
    X,
    Y,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::Z, Basis::X, Basis::Y];

    pub fn is_polar(self) -> bool {
        self == Basis::Z
    }

    pub fn is_equatorial(self) -> bool {
        !self.is_polar()
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Basis::Z => "Z",
            Basis::X => "X",
            Basis::Y => "Y",
        };
        f.write_str(s)
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "Z" | "z" => Ok(Basis::Z),
            "X" | "x" => Ok(Basis::X),
            "Y" | "y" => Ok(Basis::Y),
            other => Err(Error::InvalidArgument(format!("unknown basis `{other}`"))),
        }
    }
}

/// Logical bit value inside a basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bit {
    Zero,
    One,
}

impl Bit {
    pub fn value(self) -> u8 {
        self as u8
    }

    pub fn flip(self) -> Bit {
        match self {
            Bit::Zero => Bit::One,
            Bit::One => Bit::Zero,
        }
    }
}

impl From<bool> for Bit {
    fn from(b: bool) -> Self {
        if b {
            Bit::One
        } else {
            Bit::Zero
        }
    }
}

impl fmt::Display for Bit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Decoy-state intensity class. The mean photon flux of each class lives in
/// [`SystemParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IntensityClass {
    Signal,
    Decoy,
    Vacuum,
}

impl IntensityClass {
    pub const ALL: [IntensityClass; 3] = [IntensityClass::Signal, IntensityClass::Decoy, IntensityClass::Vacuum];

    pub fn label(self) -> &'static str {
        match self {
            IntensityClass::Signal => "s",
            IntensityClass::Decoy => "v",
            IntensityClass::Vacuum => "w",
        }
    }

    pub(crate) fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for IntensityClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for IntensityClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "s" | "signal" => Ok(IntensityClass::Signal),
            "v" | "decoy" => Ok(IntensityClass::Decoy),
            "w" | "vacuum" => Ok(IntensityClass::Vacuum),
            other => Err(Error::InvalidArgument(format!("unknown intensity class `{other}`"))),
        }
    }
}

/// The two four-state protocols the transmitter runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Protocol {
    /// Z key basis, X check basis.
    PolarBB84,
    /// Y key basis, X check basis.
    PhaseBB84,
}

impl Protocol {
    pub fn key_basis(self) -> Basis {
        match self {
            Protocol::PolarBB84 => Basis::Z,
            Protocol::PhaseBB84 => Basis::Y,
        }
    }

    pub fn check_basis(self) -> Basis {
        Basis::X
    }

    pub fn name(self) -> &'static str {
        match self {
            Protocol::PolarBB84 => "polar",
            Protocol::PhaseBB84 => "phase",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "polar" | "zx" | "ZX" => Ok(Protocol::PolarBB84),
            "phase" | "yx" | "YX" => Ok(Protocol::PhaseBB84),
            other => Err(Error::InvalidArgument(format!("unknown protocol `{other}`"))),
        }
    }
}

/// Every physical parameter of transmitter, channel and receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemParams {
    /// Qubit symbol rate (Hz).
    pub symbol_rate: f64,
    /// Laser pulse rate (Hz); two time bins per symbol.
    pub pulse_rate: f64,
    /// Signal mean photon number per symbol (photons).
    pub flux_signal: f64,
    /// Decoy mean photon number per symbol (photons).
    pub flux_decoy: f64,
    /// Vacuum-class mean photon number per symbol (photons); finite extinction.
    pub flux_vacuum: f64,
    /// Probability Alice prepares a Z symbol.
    pub prob_z: f64,
    /// Probability Alice prepares an X symbol.
    pub prob_x: f64,
    /// Probability Alice prepares a Y symbol.
    pub prob_y: f64,
    /// Probability of the signal intensity.
    pub prob_signal: f64,
    /// Probability of the decoy intensity.
    pub prob_decoy: f64,
    /// Probability of the vacuum intensity.
    pub prob_vacuum: f64,
    /// Fibre attenuation coefficient (dB/km).
    pub fiber_loss_coeff: f64,
    /// Unreported transmitter/coupling loss added to every channel (dB).
    pub excess_loss_alice: f64,
    /// Insertion loss of Bob's interferometer (dB).
    pub amzi_loss: f64,
    /// Fixed attenuator on Bob's Z arm (dB).
    pub z_arm_attenuation: f64,
    /// Single-photon detection efficiency (fraction).
    pub detector_efficiency: f64,
    /// Dark-count rate of each detector (Hz).
    pub dark_rate: f64,
    /// Effective time over which dark and background counts are accepted into one
    /// time slot (s). A value equal to the pulse period reproduces a
    /// free-running detector exactly.
    pub dark_window: f64,
    /// Non-paralysable detector dead time (s).
    pub dead_time: f64,
    /// Interference visibility of the receiver interferometer (fraction).
    pub visibility: f64,
    /// Probability that a Z-basis photon is detected in the wrong time bin.
    pub z_error_floor: f64,
    /// Acquisition time of each measurement-basis session (s).
    pub block_time_per_basis: f64,
    /// Error-correction inefficiency relative to the Shannon limit.
    pub ec_efficiency: f64,
    /// Secrecy failure probability.
    pub eps_sec: f64,
    /// Correctness failure probability.
    pub eps_cor: f64,
    /// Detector count rate above which the simulation warns (Hz).
    pub max_count_rate: f64,
    /// RMS timing jitter of detector clicks (s); zero places clicks at slot centres.
    pub jitter_sigma: f64,
}

impl Default for SystemParams {
    fn default() -> Self {
        Self {
            symbol_rate: 1e9,
            pulse_rate: 2e9,
            flux_signal: 0.5,
            flux_decoy: 0.038,
            flux_vacuum: 0.001,
            prob_z: 0.8,
            prob_x: 0.1,
            prob_y: 0.1,
            prob_signal: 0.8,
            prob_decoy: 0.1,
            prob_vacuum: 0.1,
            fiber_loss_coeff: 0.2,
            excess_loss_alice: 0.0,
            amzi_loss: 1.7,
            z_arm_attenuation: 4.7,
            detector_efficiency: 0.34,
            dark_rate: 30.0,
            dark_window: 1.4e-9,
            dead_time: 20e-9,
            visibility: 0.944,
            z_error_floor: 0.002,
            block_time_per_basis: 1200.0,
            ec_efficiency: 1.16,
            eps_sec: 2e-11,
            eps_cor: 1e-15,
            max_count_rate: 1e7,
            jitter_sigma: 0.0,
        }
    }
}

macro_rules! param_fields {
    ($m:ident) => {
        $m! {
            symbol_rate, pulse_rate, flux_signal, flux_decoy, flux_vacuum,
            prob_z, prob_x, prob_y, prob_signal, prob_decoy, prob_vacuum,
            fiber_loss_coeff, excess_loss_alice, amzi_loss, z_arm_attenuation,
            detector_efficiency, dark_rate, dark_window, dead_time, visibility,
            z_error_floor, block_time_per_basis, ec_efficiency, eps_sec, eps_cor,
            max_count_rate, jitter_sigma
        }
    };
}

impl SystemParams {
    /// Every configuration key, in declaration order.
    pub fn keys() -> &'static [&'static str] {
        macro_rules! names {
            ($($f:ident),*) => { &[$(stringify!($f)),*] };
        }
        param_fields!(names)
    }

    fn field_mut(&mut self, key: &str) -> Option<&mut f64> {
        macro_rules! lookup {
            ($($f:ident),*) => {
                match key {
                    $(stringify!($f) => Some(&mut self.$f),)*
                    _ => None,
                }
            };
        }
        param_fields!(lookup)
    }

    fn fields(&self) -> Vec<(&'static str, f64)> {
        macro_rules! pairs {
            ($($f:ident),*) => { vec![$((stringify!($f), self.$f)),*] };
        }
        param_fields!(pairs)
    }

    /// Checks every invariant and returns the parameters unchanged, or the
    /// first violated invariant.
    pub fn validate(self) -> Result<Self, ParamError> {
        for (name, v) in self.fields() {
            if !v.is_finite() {
                return Err(ParamError::NotFinite(name));
            }
        }
        for (name, p) in [("prob_z", self.prob_z), ("prob_x", self.prob_x), ("prob_y", self.prob_y)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(ParamError::ProbabilityRange(name));
            }
        }
        if ((self.prob_z + self.prob_x + self.prob_y) - 1.0).abs() > PROB_SUM_TOL {
            return Err(ParamError::BasisProbabilitySum);
        }
        for (name, p) in
            [("prob_signal", self.prob_signal), ("prob_decoy", self.prob_decoy), ("prob_vacuum", self.prob_vacuum)]
        {
            if !(0.0..=1.0).contains(&p) {
                return Err(ParamError::ProbabilityRange(name));
            }
        }
        if ((self.prob_signal + self.prob_decoy + self.prob_vacuum) - 1.0).abs() > PROB_SUM_TOL {
            return Err(ParamError::IntensityProbabilitySum);
        }
        if !(self.flux_signal > self.flux_decoy && self.flux_decoy > self.flux_vacuum) {
            return Err(ParamError::FluxOrder);
        }
        if self.flux_vacuum < 0.0 {
            return Err(ParamError::NegativeFlux);
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(ParamError::Visibility);
        }
        for (name, v) in [("detector_efficiency", self.detector_efficiency), ("z_error_floor", self.z_error_floor)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ParamError::Fraction(name));
            }
        }
        for (name, v) in [("symbol_rate", self.symbol_rate), ("pulse_rate", self.pulse_rate)] {
            if v <= 0.0 {
                return Err(ParamError::NonPositive(name));
            }
        }
        for (name, v) in [
            ("fiber_loss_coeff", self.fiber_loss_coeff),
            ("excess_loss_alice", self.excess_loss_alice),
            ("amzi_loss", self.amzi_loss),
            ("z_arm_attenuation", self.z_arm_attenuation),
            ("dark_rate", self.dark_rate),
            ("dark_window", self.dark_window),
            ("dead_time", self.dead_time),
            ("block_time_per_basis", self.block_time_per_basis),
            ("ec_efficiency", self.ec_efficiency),
            ("max_count_rate", self.max_count_rate),
            ("jitter_sigma", self.jitter_sigma),
        ] {
            if v < 0.0 {
                return Err(ParamError::Negative(name));
            }
        }
        if ((self.pulse_rate - 2.0 * self.symbol_rate) / self.pulse_rate).abs() > 1e-12 {
            return Err(ParamError::PulseRate);
        }
        for (name, v) in [("eps_sec", self.eps_sec), ("eps_cor", self.eps_cor)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(ParamError::Epsilon(name));
            }
        }
        Ok(self)
    }

    /// Parses a `key = value` configuration on top of the defaults and
    /// validates the result. `#` starts a comment; unknown keys are errors.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let mut params = SystemParams::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            let slot = params
                .field_mut(key)
                .ok_or_else(|| Error::Config { line: i + 1, message: format!("unknown key `{key}`") })?;
            *slot = value
                .parse::<f64>()
                .map_err(|e| Error::Config { line: i + 1, message: format!("bad value for `{key}`: {e}") })?;
        }
        Ok(params.validate()?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_config_str(&fs::read_to_string(path)?)
    }

    /// Renders every field as `key = value` lines that [`Self::from_config_str`] reads back.
    pub fn to_config_string(&self) -> String {
        self.fields().into_iter().map(|(k, v)| format!("{k} = {v:e}\n")).collect()
    }

    pub fn flux(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.flux_signal,
            IntensityClass::Decoy => self.flux_decoy,
            IntensityClass::Vacuum => self.flux_vacuum,
        }
    }

    pub fn intensity_prob(&self, class: IntensityClass) -> f64 {
        match class {
            IntensityClass::Signal => self.prob_signal,
            IntensityClass::Decoy => self.prob_decoy,
            IntensityClass::Vacuum => self.prob_vacuum,
        }
    }

    pub fn basis_prob(&self, basis: Basis) -> f64 {
        match basis {
            Basis::Z => self.prob_z,
            Basis::X => self.prob_x,
            Basis::Y => self.prob_y,
        }
    }

    /// Duration of one time bin (s).
    pub fn pulse_period(&self) -> f64 {
        1.0 / self.pulse_rate
    }

    /// Probability of a dark click in one time slot.
    pub fn dark_prob_per_slot(&self) -> f64 {
        self.dark_rate * self.dark_window
    }

    /// Symbols sent during one measurement session.
    pub fn symbols_per_block(&self) -> f64 {
        self.symbol_rate * self.block_time_per_basis
    }

    /// Security parameters for a key accumulated over `t` seconds.
    pub fn security(&self, t: f64) -> Result<SecurityParams> {
        SecurityParams::new(self.eps_sec, self.eps_cor, t)
    }

    /// Basis probabilities rescaled so that both protocols see the same
    /// key/check split: the key basis takes `P_Z/(P_Z+P_X)` and the check
    /// basis `P_X/(P_Z+P_X)`, the unused basis gets zero.
    pub fn for_comparison(&self, protocol: Protocol) -> SystemParams {
        let total = self.prob_z + self.prob_x;
        let key = self.prob_z / total;
        let check = self.prob_x / total;
        let mut p = self.clone();
        p.prob_z = 0.0;
        p.prob_x = 0.0;
        p.prob_y = 0.0;
        match protocol.key_basis() {
            Basis::Z => p.prob_z = key,
            Basis::Y => p.prob_y = key,
            Basis::X => unreachable!("X is never a key basis"),
        }
        p.prob_x = check;
        p
    }
}

/// Composable-security failure probabilities and the accumulation time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityParams {
    pub eps_sec: f64,
    pub eps_cor: f64,
    /// Total time used to collect the data block (s).
    pub t: f64,
}

impl SecurityParams {
    pub fn new(eps_sec: f64, eps_cor: f64, t: f64) -> Result<Self> {
        if !(eps_sec > 0.0 && eps_sec < 1.0) {
            return Err(ParamError::Epsilon("eps_sec").into());
        }
        if !(eps_cor > 0.0 && eps_cor < 1.0) {
            return Err(ParamError::Epsilon("eps_cor").into());
        }
        if !(t > 0.0) {
            return Err(ParamError::NonPositive("t").into());
        }
        Ok(Self { eps_sec, eps_cor, t })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_are_accepted() {
        let p = SystemParams::default();
        assert_eq!(p.clone().validate().unwrap(), p);
        assert_eq!(p.prob_z, 0.8);
        assert_eq!((p.flux_signal, p.flux_decoy, p.flux_vacuum), (0.5, 0.038, 0.001));
    }

    #[test]
    fn basis_sum_rejected() {
        let p = SystemParams { prob_z: 0.5, prob_x: 0.5, prob_y: 0.5, ..Default::default() };
        let err = p.validate().unwrap_err();
        assert_eq!(err, ParamError::BasisProbabilitySum);
        assert_eq!(err.to_string(), "basis probabilities sum ≠ 1");
    }

    #[test]
    fn flux_order_rejected() {
        let p = SystemParams { flux_signal: 0.038, flux_decoy: 0.5, ..Default::default() };
        let err = p.validate().unwrap_err();
        assert_eq!(err.to_string(), "fluxes not strictly ordered");
    }

    #[test]
    fn other_invariants() {
        let bad = [
            SystemParams { visibility: 1.2, ..Default::default() },
            SystemParams { dark_rate: -1.0, ..Default::default() },
            SystemParams { eps_sec: 0.0, ..Default::default() },
            SystemParams { pulse_rate: 1e9, ..Default::default() },
            SystemParams { prob_signal: 0.9, ..Default::default() },
            SystemParams { detector_efficiency: f64::NAN, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err());
        }
    }

    #[test]
    fn config_round_trip_and_errors() {
        let text = "# comment\nexcess_loss_alice = 1.5\n\nvisibility=0.95 # trailing\n";
        let p = SystemParams::from_config_str(text).unwrap();
        assert_eq!(p.excess_loss_alice, 1.5);
        assert_eq!(p.visibility, 0.95);
        let back = SystemParams::from_config_str(&p.to_config_string()).unwrap();
        assert_eq!(back, p);

        let err = SystemParams::from_config_str("no_such_key = 1").unwrap_err();
        assert!(err.to_string().contains("unknown key `no_such_key`"), "{err}");
        assert!(SystemParams::from_config_str("prob_z = 0.9").is_err());
        assert!(SystemParams::from_config_str("prob_z 0.9").is_err());
    }

    #[test]
    fn keys_cover_every_field() {
        let p = SystemParams::default();
        assert_eq!(SystemParams::keys().len(), p.fields().len());
    }

    #[test]
    fn protocol_bases() {
        assert_eq!(Protocol::PolarBB84.key_basis(), Basis::Z);
        assert_eq!(Protocol::PhaseBB84.key_basis(), Basis::Y);
        for p in [Protocol::PolarBB84, Protocol::PhaseBB84] {
            assert_eq!(p.check_basis(), Basis::X);
            assert_ne!(p.key_basis(), p.check_basis());
        }
        let c = SystemParams::default().for_comparison(Protocol::PhaseBB84);
        assert!((c.prob_y - 8.0 / 9.0).abs() < 1e-15 && c.prob_z == 0.0);
        assert!(c.validate().is_ok());
    }

    proptest! {
        #[test]
        fn validation_is_idempotent(vis in -0.5f64..1.5, pz in 0.0f64..1.0, s in 0.0f64..1.0) {
            let p = SystemParams {
                visibility: vis,
                prob_z: pz,
                prob_x: (1.0 - pz) / 2.0,
                prob_y: (1.0 - pz) / 2.0,
                flux_signal: s,
                ..Default::default()
            };
            let once = p.clone().validate();
            if let Ok(q) = &once {
                prop_assert_eq!(q.clone().validate(), Ok(q.clone()));
            }
            prop_assert_eq!(once.is_ok(), p.validate().is_ok());
        }
    }
}
