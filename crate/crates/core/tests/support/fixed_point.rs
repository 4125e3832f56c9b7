//! Fixed-point reference evaluation of the fidelity formulas with 256
//! fractional bits, independent of floating-point `exp`.

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

const FRAC_BITS: u32 = 256;

pub fn one() -> BigInt {
    BigInt::one() << FRAC_BITS
}

/// Exact fixed-point image of a finite, non-negative f64.
pub fn fixed(x: f64) -> BigInt {
    assert!(x.is_finite() && x >= 0.0);
    if x == 0.0 {
        return BigInt::zero();
    }
    let bits = x.to_bits();
    let exp = ((bits >> 52) & 0x7ff) as i32;
    let (mantissa, e) = if exp == 0 {
        (bits & ((1 << 52) - 1), -1074)
    } else {
        ((bits & ((1 << 52) - 1)) | (1 << 52), exp - 1075)
    };
    let shift = e + FRAC_BITS as i32;
    let m = BigInt::from(mantissa);
    if shift >= 0 {
        m << shift as u32
    } else {
        m >> (-shift) as u32
    }
}

fn mul(a: &BigInt, b: &BigInt) -> BigInt {
    (a * b) >> FRAC_BITS
}

pub fn to_f64(v: &BigInt) -> f64 {
    // keep 64 significant fractional bits, then scale
    let top = v >> (FRAC_BITS - 64);
    top.to_f64().unwrap() / 2f64.powi(64)
}

/// e^(-x) by halving the argument below 1/2, summing the Taylor series and
/// squaring back.
pub fn exp_neg(x: &BigInt) -> BigInt {
    let half = one() >> 1;
    let mut r = x.clone();
    let mut halvings = 0;
    while r > half {
        r >>= 1;
        halvings += 1;
    }
    let mut term = one();
    let mut sum = one();
    for n in 1..200u32 {
        term = -mul(&term, &r) / BigInt::from(n);
        if term.is_zero() {
            break;
        }
        sum += &term;
    }
    for _ in 0..halvings {
        sum = mul(&sum, &sum);
    }
    sum
}

pub fn oracle_dephase(f: f64, gamma: f64, dt: f64) -> f64 {
    let quarter = one() >> 2;
    let x = mul(&fixed(gamma), &fixed(dt));
    let v = &quarter + mul(&(fixed(f) - &quarter), &exp_neg(&x));
    to_f64(&v)
}

pub fn oracle_swap(a: f64, b: f64) -> f64 {
    let quarter = one() >> 2;
    let four = BigInt::from(4);
    let p = (fixed(a) * &four - one()) * (fixed(b) * &four - one());
    let v = quarter + (p >> FRAC_BITS) / BigInt::from(12);
    to_f64(&v)
}

pub fn rel_err(got: f64, want: f64) -> f64 {
    ((got - want) / want).abs()
}
