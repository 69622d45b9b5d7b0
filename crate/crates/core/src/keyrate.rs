//! Decoy-state bounds and the secure key length.
//!
//! Three intensities `s > v + w`, `v > w ≥ 0` are used to bound the vacuum and
//! single-photon detections of the key basis and the single-photon error count
//! of the check basis. The finite-size analysis splits the secrecy parameter
//! over 21 terms; each Hoeffding deviation and the random-sampling correction
//! use `ε_sec / 21`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::params::{Basis, IntensityClass, Protocol, SecurityParams, SystemParams};
use crate::sift::CountsTable;

/// Number of error terms the secrecy parameter is split over.
const EPS_SPLIT: f64 = 21.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Finite,
    Asymptotic,
}

impl Regime {
    pub const ALL: [Regime; 2] = [Regime::Finite, Regime::Asymptotic];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Finite => "finite",
            Regime::Asymptotic => "asymptotic",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "finite" => Ok(Regime::Finite),
            "asymptotic" => Ok(Regime::Asymptotic),
            _ => Err(Error::InvalidArgument(format!("unknown regime `{s}`"))),
        }
    }
}

/// h(x) in bits.
pub fn binary_entropy(x: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::InvalidArgument(format!("entropy argument {x} outside [0, 1]")));
    }
    if x == 0.0 || x == 1.0 {
        return Ok(0.0);
    }
    Ok(-x * x.log2() - (1.0 - x) * (1.0 - x).log2())
}

/// Hoeffding deviation `sqrt(n/2 · ln(1/eps))`.
pub fn hoeffding_delta(n: f64, eps: f64) -> f64 {
    (n.max(0.0) / 2.0 * (1.0 / eps).ln()).sqrt()
}

/// Probability that Alice emits `n` photons, mixing the three Poisson sources.
pub fn tau_n(n: u32, fluxes: [f64; 3], probs: [f64; 3]) -> f64 {
    let fact: f64 = (1..=n).map(f64::from).product();
    fluxes.iter().zip(probs).map(|(&mu, p)| p * (-mu).exp() * mu.powi(n as i32) / fact).sum()
}

/// Error-correction leakage `f · n · h(qber)`.
pub fn lambda_ec(n_key: f64, qber_key: f64, f: f64) -> Result<f64> {
    Ok(f * n_key * binary_entropy(qber_key)?)
}

/// Finite-size penalty `6·log2(21/ε_sec) + log2(2/ε_cor)`.
pub fn finite_penalty(eps_sec: f64, eps_cor: f64) -> f64 {
    6.0 * (EPS_SPLIT / eps_sec).log2() + (2.0 / eps_cor).log2()
}

/// Random-sampling correction linking the check-basis single-photon error
/// rate `b` to the key-basis phase error, for `c` check and `d` key
/// single-photon events.
pub fn sampling_correction(eps_sec: f64, b: f64, c: f64, d: f64) -> f64 {
    if b <= 0.0 || b >= 1.0 || c <= 0.0 || d <= 0.0 {
        return 0.0;
    }
    let spread = (c + d) * (1.0 - b) * b;
    let arg = (c + d) / (c * d * (1.0 - b) * b) * (EPS_SPLIT * EPS_SPLIT) / (eps_sec * eps_sec);
    (spread / (c * d * std::f64::consts::LN_2) * arg.log2()).max(0.0).sqrt()
}

/// Per-intensity detections and errors of one basis, ordered (s, v, w).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BasisCounts {
    pub n: [f64; 3],
    pub m: [f64; 3],
}

impl BasisCounts {
    pub fn from_table(table: &CountsTable, basis: Basis) -> Self {
        let mut c = BasisCounts::default();
        for k in IntensityClass::ALL {
            c.n[k.index()] = table.detections(basis, k);
            c.m[k.index()] = table.errors(basis, k);
        }
        c
    }

    pub fn total_n(&self) -> f64 {
        self.n.iter().sum()
    }

    pub fn total_m(&self) -> f64 {
        self.m.iter().sum()
    }

    pub fn qber(&self) -> f64 {
        let n = self.total_n();
        if n > 0.0 {
            self.total_m() / n
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateInput {
    pub key: BasisCounts,
    pub check: BasisCounts,
    /// Fluxes (s, v, w).
    pub fluxes: [f64; 3],
    /// Intensity probabilities (s, v, w).
    pub probs: [f64; 3],
    pub security: SecurityParams,
    pub ec_efficiency: f64,
}

impl KeyRateInput {
    pub fn from_table(table: &CountsTable, protocol: Protocol, params: &SystemParams, t: f64) -> Result<Self> {
        let fluxes = IntensityClass::ALL.map(|k| params.flux(k));
        let probs = IntensityClass::ALL.map(|k| params.intensity_prob(k));
        Ok(Self {
            key: BasisCounts::from_table(table, protocol.key_basis()),
            check: BasisCounts::from_table(table, protocol.check_basis()),
            fluxes,
            probs,
            security: params.security(t)?,
            ec_efficiency: params.ec_efficiency,
        })
    }

    fn check_fluxes(&self) -> Result<()> {
        let [s, v, w] = self.fluxes;
        if v <= w {
            return Err(Error::DegenerateDecoy);
        }
        if s <= v + w {
            return Err(Error::FluxOrdering);
        }
        Ok(())
    }

    fn eps(&self) -> f64 {
        self.security.eps_sec / EPS_SPLIT
    }

    /// Counts rescaled by `e^μ / p` and shifted by `±δ(total)`, as (lower, upper).
    fn rescaled(&self, counts: [f64; 3], regime: Regime) -> ([f64; 3], [f64; 3]) {
        let delta = match regime {
            Regime::Finite => hoeffding_delta(counts.iter().sum(), self.eps()),
            Regime::Asymptotic => 0.0,
        };
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for k in 0..3 {
            let scale = self.fluxes[k].exp() / self.probs[k];
            lo[k] = scale * (counts[k] - delta);
            hi[k] = scale * (counts[k] + delta);
        }
        (lo, hi)
    }
}

/// Lower bound on vacuum detections among `counts`.
pub fn s_zero_lower(input: &KeyRateInput, counts: &BasisCounts, regime: Regime) -> Result<f64> {
    input.check_fluxes()?;
    let [_, v, w] = input.fluxes;
    let (lo, hi) = input.rescaled(counts.n, regime);
    let tau0 = tau_n(0, input.fluxes, input.probs);
    Ok((tau0 * (v * lo[2] - w * hi[1]) / (v - w)).max(0.0))
}

/// Lower bound on single-photon detections among `counts`.
pub fn s_one_lower(input: &KeyRateInput, counts: &BasisCounts, regime: Regime) -> Result<f64> {
    input.check_fluxes()?;
    let [s, v, w] = input.fluxes;
    let (lo, hi) = input.rescaled(counts.n, regime);
    let tau0 = tau_n(0, input.fluxes, input.probs);
    let tau1 = tau_n(1, input.fluxes, input.probs);
    let s0 = s_zero_lower(input, counts, regime)?;
    let denom = s * (v - w) - v * v + w * w;
    let bracket = lo[1] - hi[2] - (v * v - w * w) / (s * s) * (hi[0] - s0 / tau0);
    Ok((tau1 * s / denom * bracket).max(0.0))
}

/// Upper bound on single-photon errors among `counts`.
pub fn v_one_upper(input: &KeyRateInput, counts: &BasisCounts, regime: Regime) -> Result<f64> {
    input.check_fluxes()?;
    let [_, v, w] = input.fluxes;
    let (lo, hi) = input.rescaled(counts.m, regime);
    let tau1 = tau_n(1, input.fluxes, input.probs);
    Ok((tau1 * (hi[1] - lo[2]) / (v - w)).max(0.0))
}

/// Upper bound on the key-basis single-photon phase error, in [0, 0.5].
pub fn phi_upper(input: &KeyRateInput, regime: Regime) -> Result<f64> {
    let s_check = s_one_lower(input, &input.check, regime)?;
    if s_check <= 0.0 {
        return Ok(0.5);
    }
    let s_key = s_one_lower(input, &input.key, regime)?;
    let ratio = v_one_upper(input, &input.check, regime)? / s_check;
    let correction = match regime {
        Regime::Finite if s_key > 0.0 => sampling_correction(input.security.eps_sec, ratio.min(0.5), s_check, s_key),
        Regime::Finite => 0.5,
        Regime::Asymptotic => 0.0,
    };
    Ok((ratio + correction).clamp(0.0, 0.5))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyRateReport {
    pub s0: f64,
    pub s1: f64,
    pub phi: f64,
    pub lambda_ec: f64,
    /// Finite-size penalty (bits); zero in the asymptotic regime.
    pub delta: f64,
    /// ℓ, possibly negative.
    pub key_length: f64,
    /// max(ℓ, 0) / t (bit/s).
    pub rate: f64,
    pub regime: Regime,
    pub no_key: bool,
}

impl KeyRateReport {
    /// Zero-rate report used when a point cannot be evaluated.
    pub fn empty(regime: Regime) -> Self {
        Self {
            s0: 0.0,
            s1: 0.0,
            phi: 0.5,
            lambda_ec: 0.0,
            delta: 0.0,
            key_length: 0.0,
            rate: 0.0,
            regime,
            no_key: true,
        }
    }
}

/// Key length and rate from the decoy bounds.
pub fn secure_key_rate(input: &KeyRateInput, regime: Regime) -> Result<KeyRateReport> {
    let s0 = s_zero_lower(input, &input.key, regime)?;
    let s1 = s_one_lower(input, &input.key, regime)?;
    let phi = phi_upper(input, regime)?;
    let lambda = lambda_ec(input.key.total_n(), input.key.qber(), input.ec_efficiency)?;
    let delta = match regime {
        Regime::Finite => finite_penalty(input.security.eps_sec, input.security.eps_cor),
        Regime::Asymptotic => 0.0,
    };
    let key_length = s0 + s1 * (1.0 - binary_entropy(phi)?) - lambda - delta;
    let no_key = !(key_length > 0.0);
    let rate = if no_key { 0.0 } else { key_length / input.security.t };
    Ok(KeyRateReport { s0, s1, phi, lambda_ec: lambda, delta, key_length, rate, regime, no_key })
}

/// Mean of point-wise rate ratios `a / b`; every pair must have positive rates.
pub fn protocol_ratio(rates_a: &[f64], rates_b: &[f64]) -> Result<f64> {
    if rates_a.len() != rates_b.len() || rates_a.is_empty() {
        return Err(Error::InvalidArgument("rate lists must be non-empty and equally long".into()));
    }
    let mut sum = 0.0;
    for (&a, &b) in rates_a.iter().zip(rates_b) {
        if !(a > 0.0 && b > 0.0) {
            return Err(Error::InvalidArgument("ratio undefined where a rate is zero".into()));
        }
        sum += a / b;
    }
    Ok(sum / rates_a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    fn input_from(key: BasisCounts, check: BasisCounts) -> KeyRateInput {
        let p = SystemParams::default();
        KeyRateInput {
            key,
            check,
            fluxes: [p.flux_signal, p.flux_decoy, p.flux_vacuum],
            probs: [p.prob_signal, p.prob_decoy, p.prob_vacuum],
            security: p.security(2400.0).unwrap(),
            ec_efficiency: p.ec_efficiency,
        }
    }

    /// Expected counts for a loss-only channel with per-photon detection
    /// probability `eta`, background `y0` and error fraction `e`.
    fn planted(eta: f64, y0: f64, e: f64, n_basis: f64) -> BasisCounts {
        let p = SystemParams::default();
        let mut c = BasisCounts::default();
        for k in IntensityClass::ALL {
            let mu = p.flux(k);
            let gain = 1.0 - (1.0 - y0) * (-eta * mu).exp();
            let signal = 1.0 - (-eta * mu).exp();
            c.n[k.index()] = n_basis * p.intensity_prob(k) * gain;
            c.m[k.index()] = n_basis * p.intensity_prob(k) * (signal * (1.0 - y0) * e + y0 * 0.5);
        }
        c
    }

    #[test]
    fn entropy_values() {
        assert_eq!(binary_entropy(0.0).unwrap(), 0.0);
        assert_eq!(binary_entropy(1.0).unwrap(), 0.0);
        assert!(rel(binary_entropy(0.5).unwrap(), 1.0) < 1e-9);
        let x: f64 = 0.028;
        let oracle = -(x.ln() * x + (1.0 - x).ln() * (1.0 - x)) / 2f64.ln();
        assert!(rel(binary_entropy(x).unwrap(), oracle) < 1e-9);
        assert!((oracle - 0.1843).abs() < 1e-4);
        assert!(binary_entropy(-0.1).is_err() && binary_entropy(1.1).is_err());
    }

    #[test]
    fn hoeffding_values() {
        assert_eq!(hoeffding_delta(0.0, 1e-10), 0.0);
        let d = hoeffding_delta(1e6, 1e-10);
        assert!(rel(d, (5e5 * 10f64.ln() * 10.0).sqrt()) < 1e-9);
        assert!((d - 3393.0).abs() < 0.5);
        assert!(rel(hoeffding_delta(4e6, 1e-10) / d, 2.0) < 1e-12);
    }

    #[test]
    fn tau_values() {
        let fl = [0.5, 0.038, 0.001];
        let pr = [0.8, 0.1, 0.1];
        let t0 = 0.8 * (-0.5f64).exp() + 0.1 * (-0.038f64).exp() + 0.1 * (-0.001f64).exp();
        let t1 = 0.8 * 0.5 * (-0.5f64).exp() + 0.1 * 0.038 * (-0.038f64).exp() + 0.1 * 0.001 * (-0.001f64).exp();
        assert!(rel(tau_n(0, fl, pr), t0) < 1e-12 && (t0 - 0.6814).abs() < 1e-4);
        assert!(rel(tau_n(1, fl, pr), t1) < 1e-12 && (t1 - 0.2464).abs() < 1e-4);
        assert!(rel(tau_n(0, [0.3, 0.0, 0.0], [1.0, 0.0, 0.0]), (-0.3f64).exp()) < 1e-15);
    }

    #[test]
    fn leakage_and_penalty() {
        assert_eq!(lambda_ec(1e6, 0.0, 1.16).unwrap(), 0.0);
        let l = lambda_ec(1e6, 0.002, 1.16).unwrap();
        assert!(rel(l, 1.16e6 * binary_entropy(0.002).unwrap()) < 1e-12);
        assert!((l - 24140.0).abs() < 15.0, "{l}");
        assert_eq!(lambda_ec(2e6, 0.002, 1.16).unwrap(), 2.0 * l);
        let d = finite_penalty(2e-11, 1e-15);
        let oracle = 6.0 * (21.0 / 2e-11f64).ln() / 2f64.ln() + (2e15f64).ln() / 2f64.ln();
        assert!(rel(d, oracle) < 1e-9 && (d - 290.4).abs() < 0.05);
    }

    #[test]
    fn zero_counts_give_no_key() {
        let input = input_from(BasisCounts::default(), BasisCounts::default());
        for regime in Regime::ALL {
            let r = secure_key_rate(&input, regime).unwrap();
            assert!(r.no_key && r.rate == 0.0);
            assert_eq!((r.s0, r.s1, r.phi), (0.0, 0.0, 0.5));
        }
    }

    #[test]
    fn flux_errors() {
        let mut input = input_from(BasisCounts::default(), BasisCounts::default());
        input.fluxes = [0.5, 0.01, 0.01];
        assert!(matches!(s_zero_lower(&input, &input.key, Regime::Asymptotic), Err(Error::DegenerateDecoy)));
        input.fluxes = [0.035, 0.034, 0.001];
        assert!(matches!(s_one_lower(&input, &input.key, Regime::Asymptotic), Err(Error::FluxOrdering)));
    }

    #[test]
    fn asymptotic_bounds_are_tight_and_sound() {
        let (eta, y0) = (1e-3, 1e-6);
        let n = 1e12;
        let key = planted(eta, y0, 0.002, n);
        let check = planted(eta, y0, 0.028, n);
        let input = input_from(key, check);
        let tau0 = tau_n(0, input.fluxes, input.probs);
        let tau1 = tau_n(1, input.fluxes, input.probs);
        let true_s0 = n * tau0 * y0;
        let y1 = 1.0 - (1.0 - y0) * (1.0 - eta);
        let true_s1 = n * tau1 * y1;
        let s0 = s_zero_lower(&input, &key, Regime::Asymptotic).unwrap();
        let s1 = s_one_lower(&input, &key, Regime::Asymptotic).unwrap();
        assert!(s0 <= true_s0 * (1.0 + 1e-9) && s0 > 0.8 * true_s0, "{s0} vs {true_s0}");
        assert!(s1 <= true_s1 * (1.0 + 1e-9) && s1 > 0.85 * true_s1, "{s1} vs {true_s1}");
        let e1 = ((1.0 - y0) * eta * 0.028 + y0 * 0.5) / y1;
        let phi = phi_upper(&input, Regime::Asymptotic).unwrap();
        assert!(phi >= e1 && phi < e1 * 1.2, "{phi} vs {e1}");
    }

    #[test]
    fn dark_free_phase_error_is_visibility_limited() {
        let key = planted(1e-2, 0.0, 0.0, 1e10);
        let check = planted(1e-2, 0.0, (1.0 - 0.944) / 2.0, 1e10);
        let phi = phi_upper(&input_from(key, check), Regime::Asymptotic).unwrap();
        assert!((phi - 0.028).abs() < 2e-3, "{phi}");
        let perfect = planted(1e-2, 0.0, 0.0, 1e10);
        assert!(phi_upper(&input_from(key, perfect), Regime::Asymptotic).unwrap() < 1e-3);
    }

    #[test]
    fn tiny_check_sample_saturates_phi() {
        let key = planted(1e-2, 1e-6, 0.002, 1e10);
        let check = BasisCounts { n: [8.0, 1.0, 1.0], m: [0.0, 0.0, 0.0] };
        assert_eq!(phi_upper(&input_from(key, check), Regime::Finite).unwrap(), 0.5);
    }

    #[test]
    fn finite_not_above_asymptotic() {
        let key = planted(1e-3, 1e-7, 0.002, 1e11);
        let check = planted(1e-3, 1e-7, 0.028, 1.5e10);
        let input = input_from(key, check);
        let a = secure_key_rate(&input, Regime::Asymptotic).unwrap();
        let f = secure_key_rate(&input, Regime::Finite).unwrap();
        assert!(f.s0 <= a.s0 && f.s1 <= a.s1 && f.phi >= a.phi && f.rate <= a.rate);
        assert!(f.rate > 0.0);
        assert_eq!(f.delta, finite_penalty(2e-11, 1e-15));
    }

    #[test]
    fn ratio_rules() {
        assert_eq!(protocol_ratio(&[2.0, 4.0], &[1.0, 2.0]).unwrap(), 2.0);
        assert_eq!(protocol_ratio(&[1.0], &[1.0]).unwrap(), 1.0);
        assert!(protocol_ratio(&[1.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(protocol_ratio(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn rate_nonincreasing_in_key_qber(e1 in 0.0f64..0.1, de in 0.0f64..0.05) {
            let check = planted(1e-3, 1e-7, 0.028, 1e11);
            let a = secure_key_rate(&input_from(planted(1e-3, 1e-7, e1, 1e11), check), Regime::Asymptotic).unwrap();
            let b = secure_key_rate(&input_from(planted(1e-3, 1e-7, e1 + de, 1e11), check), Regime::Asymptotic).unwrap();
            prop_assert!(b.key_length <= a.key_length + 1e-6 * a.key_length.abs());
        }

        #[test]
        fn outputs_are_clamped(eta in 1e-6f64..1.0, y0 in 0.0f64..1e-3, e in 0.0f64..0.5, n in 1.0f64..1e12) {
            let input = input_from(planted(eta, y0, e, n), planted(eta, y0, e, n / 8.0));
            for regime in Regime::ALL {
                let r = secure_key_rate(&input, regime).unwrap();
                prop_assert!(r.s0 >= 0.0 && r.s1 >= 0.0 && (0.0..=0.5).contains(&r.phi) && r.rate >= 0.0);
            }
        }
    }
}
