mod common;

use common::{planted_run, soundness};
use decoy_bb84::keyrate::{phi_upper, s_one_lower, s_zero_lower, Regime};

#[test]
fn planted_counts_have_expected_scale() {
    let run = planted_run(7, 1_000_000_000);
    let n = run.input.key.total_n();
    // 0.8e9 pulses at gain ≈ 0.5 · 0.34 · 10^-1.27.
    let expected = 0.8e9 * 0.8 * (1.0 - (-0.5f64 * 0.34 * 10f64.powf(-1.27)).exp());
    assert!((n / expected - 1.0).abs() < 0.15, "{n} vs {expected}");
    assert!(run.key.single > run.key.vacuum);
}

#[test]
fn finite_bounds_hold_on_planted_yields() {
    let v = soundness(100, 2_000_000_000, 1000);
    assert!(v.s0 <= 1 && v.s1 <= 1 && v.phi <= 1, "{v:?}");
    assert!(v.informative >= 90, "{v:?}");
}

#[test]
fn asymptotic_bounds_are_near_truth_for_large_blocks() {
    let run = planted_run(3, 200_000_000_000);
    let i = &run.input;
    let s1 = s_one_lower(i, &i.key, Regime::Asymptotic).unwrap();
    let s0 = s_zero_lower(i, &i.key, Regime::Asymptotic).unwrap();
    assert!(s1 < run.key.single * 1.001 && s1 > 0.8 * run.key.single, "{s1} vs {}", run.key.single);
    assert!(s0 < 1.05 * run.key.vacuum, "{s0} vs {}", run.key.vacuum);
    let phi = phi_upper(i, Regime::Asymptotic).unwrap();
    assert!(phi > 0.9 * run.phase_error && phi < 0.1, "{phi} vs {}", run.phase_error);
}
