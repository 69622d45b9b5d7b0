//! Planted-yield sampler shared by the soundness tests and the acceptance run.
#![allow(dead_code)]

use decoy_bb84::keyrate::{BasisCounts, KeyRateInput};
use decoy_bb84::params::{SecurityParams, SystemParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

const MAX_PHOTONS: usize = 24;

/// Photon-number-resolved model of one basis.
#[derive(Debug, Clone, Copy)]
pub struct PlantedBasis {
    pub pulses: u64,
    /// Transmittance seen by an n-photon pulse, per photon.
    pub eta: f64,
    pub y0: f64,
    /// Error probability of a non-vacuum detection.
    pub e_det: f64,
}

impl PlantedBasis {
    fn yield_n(&self, n: usize) -> f64 {
        1.0 - (1.0 - self.y0) * (1.0 - self.eta).powi(n as i32)
    }

    fn error_n(&self, n: usize) -> f64 {
        let y = self.yield_n(n);
        (0.5 * self.y0 + self.e_det * (y - self.y0)) / y
    }
}

/// Sampled counts of one basis with the photon-number truth behind them.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sampled {
    pub counts: BasisCounts,
    pub vacuum: f64,
    pub single: f64,
    pub single_errors: f64,
}

fn binomial(rng: &mut ChaCha8Rng, n: u64, p: f64) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    Binomial::new(n, p.min(1.0)).unwrap().sample(rng)
}

/// Multinomial split of a basis into intensities and photon numbers,
/// then binomial detections and errors per cell.
pub fn sample_basis(b: &PlantedBasis, fluxes: [f64; 3], probs: [f64; 3], rng: &mut ChaCha8Rng) -> Sampled {
    let mut out = Sampled::default();
    let mut left = b.pulses;
    let mut mass = 1.0;
    for k in 0..3 {
        let n_k = if k == 2 { left } else { binomial(rng, left, probs[k] / mass) };
        left -= n_k;
        mass -= probs[k];
        let mu = fluxes[k];
        let mut pulses_left = n_k;
        let mut tail = 1.0;
        let mut pmf = (-mu).exp();
        for n in 0..=MAX_PHOTONS {
            let count = if n == MAX_PHOTONS { pulses_left } else { binomial(rng, pulses_left, pmf / tail) };
            pulses_left -= count;
            tail -= pmf;
            pmf *= mu / (n + 1) as f64;
            let det = binomial(rng, count, b.yield_n(n));
            let err = binomial(rng, det, b.error_n(n));
            out.counts.n[k] += det as f64;
            out.counts.m[k] += err as f64;
            match n {
                0 => out.vacuum += det as f64,
                1 => {
                    out.single += det as f64;
                    out.single_errors += err as f64;
                }
                _ => {}
            }
            if pulses_left == 0 {
                break;
            }
        }
    }
    out
}

/// One planted experiment: true photon-number contributions, the key-rate
/// input built from its counts, and the true key-basis phase error rate.
#[derive(Debug, Clone, Copy)]
pub struct PlantedRun {
    pub input: KeyRateInput,
    pub key: Sampled,
    pub check: Sampled,
    pub phase_error: f64,
}

/// Default scenario: an 8 dB link with the default fluxes and a 0.8/0.2
/// basis split over `pulses` symbols.
pub fn planted_run(seed: u64, pulses: u64) -> PlantedRun {
    let p = SystemParams::default();
    let fluxes = [p.flux_signal, p.flux_decoy, p.flux_vacuum];
    let probs = [p.prob_signal, p.prob_decoy, p.prob_vacuum];
    let eta = p.detector_efficiency * 10f64.powf(-(8.0 + 4.7) / 10.0);
    let y0 = 2.0 * p.dark_rate * p.dark_window;
    let key = PlantedBasis { pulses: (pulses as f64 * 0.8) as u64, eta, y0, e_det: p.z_error_floor };
    let check = PlantedBasis { pulses: (pulses as f64 * 0.2) as u64, eta, y0, e_det: 0.028 };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = sample_basis(&key, fluxes, probs, &mut rng);
    let c = sample_basis(&check, fluxes, probs, &mut rng);
    // Phase errors of the key-basis single photons occur at the check-basis rate.
    let e1 = check.error_n(1);
    let phase_errors = binomial(&mut rng, k.single as u64, e1);
    let input = KeyRateInput {
        key: k.counts,
        check: c.counts,
        fluxes,
        probs,
        security: SecurityParams::new(p.eps_sec, p.eps_cor, 1.0).unwrap(),
        ec_efficiency: p.ec_efficiency,
    };
    PlantedRun { input, key: k, check: c, phase_error: phase_errors as f64 / k.single.max(1.0) }
}

/// Bound violations over `runs` seeded experiments, as (s0, s1, phi).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Violations {
    pub s0: usize,
    pub s1: usize,
    pub phi: usize,
    /// Runs whose bounds were informative (s1 > 0, phi < 0.5).
    pub informative: usize,
}

pub fn soundness(runs: u64, pulses: u64, base_seed: u64) -> Violations {
    use decoy_bb84::keyrate::{phi_upper, s_one_lower, s_zero_lower, Regime};
    let mut v = Violations::default();
    for r in 0..runs {
        let run = planted_run(base_seed + r, pulses);
        let i = &run.input;
        let s0 = s_zero_lower(i, &i.key, Regime::Finite).unwrap();
        let s1 = s_one_lower(i, &i.key, Regime::Finite).unwrap();
        let phi = phi_upper(i, Regime::Finite).unwrap();
        v.s0 += (s0 > run.key.vacuum) as usize;
        v.s1 += (s1 > run.key.single) as usize;
        v.phi += (phi < run.phase_error) as usize;
        v.informative += (s1 > 0.0 && phi < 0.5) as usize;
    }
    v
}
