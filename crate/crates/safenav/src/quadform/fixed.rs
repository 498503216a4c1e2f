//! Fixed-point evaluation of the scaled series on big integers. A value `v`
//! is stored as the integer `round(v · 2^bits)`.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive, Zero};

use super::series::{LogValue, Setup};

fn from_f64(v: f64, bits: u64) -> BigInt {
    if v == 0.0 {
        return BigInt::zero();
    }
    let raw = v.to_bits();
    let exp = ((raw >> 52) & 0x7ff) as i64;
    let frac = raw & ((1u64 << 52) - 1);
    let (mant, e) = if exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), exp - 1075)
    };
    let mut out = BigInt::from(mant);
    let shift = e + bits as i64;
    if shift >= 0 {
        out <<= shift as usize;
    } else {
        out >>= (-shift) as usize;
    }
    if v < 0.0 {
        -out
    } else {
        out
    }
}

fn mul(a: &BigInt, b: &BigInt, bits: u64) -> BigInt {
    (a * b) >> bits as usize
}

fn to_log(v: &BigInt, bits: u64) -> LogValue {
    if v.is_zero() {
        return LogValue {
            ln_abs: f64::NEG_INFINITY,
            negative: false,
        };
    }
    let mag = v.abs();
    let len = mag.bits();
    let shift = len.saturating_sub(60);
    let top = (&mag >> shift as usize).to_f64().unwrap_or(f64::INFINITY);
    LogValue {
        ln_abs: top.ln() + (shift as f64 - bits as f64) * std::f64::consts::LN_2,
        negative: v.is_negative(),
    }
}

/// Sum of `(−1)^k ĉ_k w_k` for `k = 0..=n` at the given precision.
pub(super) fn sum(s: &Setup, n: usize, bits: u64) -> LogValue {
    let one = BigInt::from(1) << bits as usize;
    let ratios: Vec<BigInt> = s.ratios.iter().map(|r| from_f64(*r, bits)).collect();
    let bsq: Vec<BigInt> = s.bsq.iter().map(|b| from_f64(*b, bits)).collect();

    let mut dhat = vec![BigInt::zero(); n + 1];
    let mut pows = vec![one.clone(); ratios.len()];
    for m in 1..=n {
        let mut d = BigInt::zero();
        for i in 0..ratios.len() {
            pows[i] = mul(&pows[i], &ratios[i], bits);
            let f = &one - &bsq[i] * m;
            d += mul(&f, &pows[i], bits);
        }
        dhat[m] = d >> 1;
    }

    let mut c = Vec::with_capacity(n + 1);
    c.push(one.clone());
    for k in 1..=n {
        let mut acc = BigInt::zero();
        for j in 0..k {
            acc += &dhat[k - j] * &c[j];
        }
        c.push((acc >> bits as usize) / k);
    }

    let two_x = from_f64(2.0 * s.x, bits);
    let mut w = one;
    let mut total = BigInt::zero();
    for (k, ck) in c.iter().enumerate() {
        let t = mul(ck, &w, bits);
        if k % 2 == 0 {
            total += t;
        } else {
            total -= t;
        }
        w = mul(&w, &two_x, bits) / (s.two_a + 2 * k as i64 + 2);
    }
    to_log(&total, bits)
}
