//! Fidelity of stored and swapped Werner-like pairs.
//!
//! Two effects degrade a pair: exponential dephasing towards the fully mixed
//! value 1/4 while it sits in memory, and the product rule applied at every
//! entanglement swap.

use core::fmt;

/// Fidelity of a two-qubit pair with respect to the target Bell state.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Fidelity(f64);

impl Fidelity {
    /// Value reached by a pair that fully dephased.
    pub const MIXED: Fidelity = Fidelity(0.25);
    pub const PERFECT: Fidelity = Fidelity(1.0);
    /// Below this value a pair carries no entanglement.
    pub const ENTANGLEMENT_THRESHOLD: f64 = 0.5;

    pub fn new(value: f64) -> Self {
        assert!((0.0..=1.0).contains(&value), "fidelity {value} outside [0, 1]");
        Fidelity(value)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_entangled(self) -> bool {
        self.0 >= Self::ENTANGLEMENT_THRESHOLD
    }
}

impl fmt::Display for Fidelity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.0, f)
    }
}

/// Fidelity of a pair of fidelity `f` after `dt` seconds of dephasing at
/// rate `gamma`: `1/4 + (f - 1/4) exp(-gamma dt)`.
pub fn dephase(f: Fidelity, gamma: f64, dt: f64) -> Fidelity {
    assert!(dt >= 0.0, "negative dephasing interval {dt}");
    assert!(gamma >= 0.0, "negative decay rate {gamma}");
    assert!(f.0 >= 0.25, "fidelity {} below the mixed-state floor", f.0);
    if dt == f64::INFINITY {
        return Fidelity::MIXED;
    }
    Fidelity(0.25 + (f.0 - 0.25) * libm::exp(-gamma * dt))
}

/// Fidelity of the pair produced by swapping two pairs of fidelity `f1` and
/// `f2`: `1/4 + 3/4 ((4 f1 - 1)/3) ((4 f2 - 1)/3)`.
pub fn swap_fidelity(f1: Fidelity, f2: Fidelity) -> Fidelity {
    assert!(
        f1.0 >= 0.25 && f2.0 >= 0.25,
        "swap inputs below the mixed-state floor: {} {}",
        f1.0,
        f2.0
    );
    // 4f - 1 is exact in binary floating point and the product commutes, so the
    // result is bitwise symmetric in its arguments.
    let product = (4.0 * f1.0 - 1.0) * (4.0 * f2.0 - 1.0);
    let f = 0.25 + product / 12.0;
    // rounding can push the result one ulp above the smaller input
    Fidelity(f.min(f1.0).min(f2.0))
}
