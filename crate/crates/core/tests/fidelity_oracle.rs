//! Fidelity formulas against an independent fixed-point evaluation with 256
//! fractional bits, plus the algebraic properties the simulator relies on.

use hopper_core::{dephase, swap_fidelity, Fidelity, SimRng};
use proptest::prelude::*;

#[path = "support/fixed_point.rs"]
mod fixed_point;
use fixed_point::{exp_neg, fixed, one, oracle_dephase, oracle_swap, rel_err, to_f64};

#[test]
fn oracle_self_check() {
    let e_inv = to_f64(&exp_neg(&one()));
    assert!((e_inv - (-1f64).exp()).abs() < 1e-16);
    assert_eq!(to_f64(&fixed(0.95)), 0.95);
    assert!((oracle_dephase(0.95, 1.0, 1.0) - 0.507_515_608_820_009_6).abs() < 1e-15);
}

#[test]
fn dephase_matches_oracle_on_random_inputs() {
    let mut rng = SimRng::seed_from_u64(0x0f1d);
    for _ in 0..1000 {
        let f = rng.uniform_in(0.25, 1.0);
        let gamma = rng.uniform_in(0.0, 10.0);
        let dt = rng.uniform_in(0.0, 10.0);
        let got = dephase(Fidelity::new(f), gamma, dt).value();
        let want = oracle_dephase(f, gamma, dt);
        assert!(
            rel_err(got, want) <= 1e-12,
            "dephase({f}, {gamma}, {dt}) = {got}, oracle {want}"
        );
    }
}

#[test]
fn swap_matches_oracle_on_random_inputs() {
    let mut rng = SimRng::seed_from_u64(0x5a9);
    for _ in 0..1000 {
        let a = rng.uniform_in(0.25, 1.0);
        let b = rng.uniform_in(0.25, 1.0);
        let got = swap_fidelity(Fidelity::new(a), Fidelity::new(b)).value();
        let want = oracle_swap(a, b);
        assert!(rel_err(got, want) <= 1e-12, "swap({a}, {b}) = {got}, oracle {want}");
    }
}

#[test]
fn worked_values() {
    let swapped = swap_fidelity(Fidelity::new(0.95), Fidelity::new(0.95)).value();
    assert!((swapped - oracle_swap(0.95, 0.95)).abs() < 1e-15);
    assert!((swapped - (0.25 + 0.75 * (2.8f64 / 3.0).powi(2))).abs() < 1e-15);
    assert_eq!(swap_fidelity(Fidelity::new(0.25), Fidelity::new(0.8)).value(), 0.25);
}

fn fid() -> impl Strategy<Value = f64> {
    0.25f64..=1.0
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn semigroup(f in fid(), gamma in 0.0f64..5.0, a in 0.0f64..5.0, b in 0.0f64..5.0) {
        let f = Fidelity::new(f);
        let once = dephase(f, gamma, a + b).value();
        let twice = dephase(dephase(f, gamma, a), gamma, b).value();
        prop_assert!((once - twice).abs() <= 1e-12, "{once} vs {twice}");
    }

    #[test]
    fn dephase_is_monotone_and_bounded(f in fid(), gamma in 0.0f64..5.0, a in 0.0f64..5.0, extra in 0.0f64..5.0) {
        let f0 = Fidelity::new(f);
        let early = dephase(f0, gamma, a).value();
        let late = dephase(f0, gamma, a + extra).value();
        prop_assert!(late <= early);
        prop_assert!((0.25..=f).contains(&early));
    }

    #[test]
    fn swap_is_symmetric_and_below_inputs(a in fid(), b in fid()) {
        let (fa, fb) = (Fidelity::new(a), Fidelity::new(b));
        let ab = swap_fidelity(fa, fb).value();
        let ba = swap_fidelity(fb, fa).value();
        prop_assert_eq!(ab.to_bits(), ba.to_bits());
        prop_assert!(ab <= a.min(b));
        prop_assert!(ab >= 0.25);
        // strict only where the product term survives rounding next to 0.25
        if a >= 0.25 + 1e-6 && b >= 0.25 + 1e-6 {
            prop_assert!(ab > 0.25);
        }
    }
}
