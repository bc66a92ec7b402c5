//! Base-`M` digit codec used to ship reward estimates through collisions.
//!
//! A value `x` in `[0, 1]` is sent as `R` digits in `1..=M`. Digit `r` is
//! the index of the width-`M^-r` cell that holds the residual left after the
//! first `r - 1` digits. The decoder reports the midpoint of the final cell,
//! so the reconstruction error never exceeds `1 / (2 M^R)`.
//!
//! All arithmetic is done on integers. An `f64` is a dyadic rational
//! `mantissa * 2^exp`, so `ceil(M^r * x)` can be computed exactly, and decoded
//! values are integers over the common denominator `2 M^R`. Every receiver
//! therefore reconstructs bit-identical values.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest scale (`M^R`) accepted; keeps `mantissa * M^R` inside a `u128`.
const MAX_SCALE: u128 = 1 << 74;

/// Exact `(mantissa, exponent)` form of a finite, non-negative `f64`.
fn dyadic(x: f64) -> (u64, i32) {
    debug_assert!(x.is_finite() && x >= 0.0);
    let bits = x.to_bits();
    let raw_exp = ((bits >> 52) & 0x7ff) as i32;
    let frac = bits & ((1u64 << 52) - 1);
    if raw_exp == 0 {
        (frac, -1074)
    } else {
        (frac | (1u64 << 52), raw_exp - 1075)
    }
}

/// `ceil(x * scale)` computed exactly for `x` in `[0, 1]`.
fn ceil_scaled(x: f64, scale: u128) -> u128 {
    let (mant, exp) = dyadic(x);
    if mant == 0 {
        return 0;
    }
    let prod = mant as u128 * scale;
    if exp >= 0 {
        // only x = 1.0 with a zero-exponent encoding can land here
        return prod << exp;
    }
    let shift = (-exp) as u32;
    if shift >= 128 {
        return 1;
    }
    let q = prod >> shift;
    let rem = prod & ((1u128 << shift) - 1);
    q + u128::from(rem != 0)
}

fn scale_for(radix: u32, rounds: u32) -> Result<u128> {
    (radix as u128)
        .checked_pow(rounds)
        .filter(|s| *s <= MAX_SCALE)
        .ok_or(Error::PrecisionOverflow { radix, rounds })
}

fn check_radix(radix: u32) -> Result<()> {
    if radix < 2 {
        Err(Error::InvalidRadix(radix))
    } else {
        Ok(())
    }
}

/// Encodes `x` as `rounds` digits in `1..=radix`.
///
/// Digit `r` is `ceil(radix^r * (x - sum_{n<r} (h_n - 1) / radix^n))`. The raw
/// digit is 0 only when the residual is exactly zero (i.e. `x == 0`); it is
/// clamped to 1 so it still names a channel.
pub fn encode_value(x: f64, radix: u32, rounds: u32) -> Result<Vec<u32>> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::ValueOutOfRange(x));
    }
    check_radix(radix)?;
    if rounds == 0 {
        return Err(Error::InvalidRounds);
    }
    scale_for(radix, rounds)?;

    let m = radix as i128;
    let mut digits = Vec::with_capacity(rounds as usize);
    // prefix = sum_{n<r} (h_n - 1) * radix^(r-1-n), the already-sent part
    let mut prefix: i128 = 0;
    let mut scale: u128 = 1;
    for _ in 0..rounds {
        scale *= radix as u128;
        let raw = ceil_scaled(x, scale) as i128 - m * prefix;
        let h = raw.clamp(1, m);
        digits.push(h as u32);
        prefix = m * prefix + (h - 1);
    }
    Ok(digits)
}

/// Numerator of the decoded value over the denominator `2 * radix^R`.
pub fn decode_numerator(digits: &[u32], radix: u32) -> Result<u128> {
    check_radix(radix)?;
    if digits.is_empty() {
        return Err(Error::InvalidRounds);
    }
    scale_for(radix, digits.len() as u32)?;
    let (last, head) = digits.split_last().expect("nonempty");
    let mut acc: u128 = 0;
    for &h in head {
        if !(1..=radix).contains(&h) {
            return Err(Error::InvalidDigit { digit: h, radix });
        }
        acc = acc * radix as u128 + (h - 1) as u128;
    }
    if !(1..=radix).contains(last) {
        return Err(Error::InvalidDigit {
            digit: *last,
            radix,
        });
    }
    Ok(acc * 2 * radix as u128 + (2 * *last - 1) as u128)
}

/// `2 * radix^rounds`, the common denominator of decoded values.
pub fn decode_denominator(radix: u32, rounds: u32) -> Result<u128> {
    Ok(2 * scale_for(radix, rounds)?)
}

/// Decodes a digit vector back into a value in `(0, 1]`.
pub fn decode_value(digits: &[u32], radix: u32) -> Result<f64> {
    let num = decode_numerator(digits, radix)?;
    let den = decode_denominator(radix, digits.len() as u32)?;
    Ok(num as f64 / den as f64)
}

/// Smallest `R` with `radix^R >= 1 / delta`, so that the codec error
/// `1 / (2 radix^R)` is at most `delta / 2`.
pub fn required_rounds(delta: f64, radix: u32) -> Result<u32> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    check_radix(radix)?;
    // delta * radix^R >= 1  <=>  mant * radix^R >= 2^-exp
    let (mant, exp) = dyadic(delta);
    let shift = (-exp) as u32;
    let mut rounds = 1;
    loop {
        let scale = scale_for(radix, rounds)?;
        let lhs = mant as u128 * scale;
        if shift < 128 && lhs >= (1u128 << shift) {
            return Ok(rounds);
        }
        rounds += 1;
    }
}

/// A `K x M` table of digit-encoded estimates, as reconstructed by every
/// agent after the communication phase.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QuantizedMatrix {
    k: usize,
    m: usize,
    rounds: u32,
    /// Row-major, `rounds` digits per entry.
    digits: Vec<u32>,
}

impl QuantizedMatrix {
    /// Wraps received digits; `digits` is row-major with `rounds` digits per
    /// entry and the radix equal to `m`.
    pub fn from_digits(k: usize, m: usize, rounds: u32, digits: Vec<u32>) -> Result<Self> {
        if k == 0 || k > m {
            return Err(Error::InvalidMatrix(format!("bad shape {k}x{m}")));
        }
        if rounds == 0 {
            return Err(Error::InvalidRounds);
        }
        let radix = m as u32;
        check_radix(radix)?;
        scale_for(radix, rounds)?;
        if digits.len() != k * m * rounds as usize {
            return Err(Error::InvalidMatrix(format!(
                "expected {} digits, got {}",
                k * m * rounds as usize,
                digits.len()
            )));
        }
        if let Some(&d) = digits.iter().find(|d| !(1..=radix).contains(*d)) {
            return Err(Error::InvalidDigit { digit: d, radix });
        }
        Ok(Self {
            k,
            m,
            rounds,
            digits,
        })
    }

    /// Quantizes every entry of a row-major `k x m` table of values.
    pub fn encode(k: usize, m: usize, rounds: u32, values: &[f64]) -> Result<Self> {
        if values.len() != k * m {
            return Err(Error::InvalidMatrix("value count mismatch".into()));
        }
        let mut digits = Vec::with_capacity(values.len() * rounds as usize);
        for &v in values {
            digits.extend(encode_value(v, m as u32, rounds)?);
        }
        Self::from_digits(k, m, rounds, digits)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn radix(&self) -> u32 {
        self.m as u32
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn digits(&self, row: usize, channel: usize) -> &[u32] {
        let r = self.rounds as usize;
        let start = (row * self.m + channel) * r;
        &self.digits[start..start + r]
    }

    pub fn numerator(&self, row: usize, channel: usize) -> u128 {
        decode_numerator(self.digits(row, channel), self.radix()).expect("validated on build")
    }

    pub fn denominator(&self) -> u128 {
        decode_denominator(self.radix(), self.rounds).expect("validated on build")
    }

    pub fn value(&self, row: usize, channel: usize) -> f64 {
        self.numerator(row, channel) as f64 / self.denominator() as f64
    }

    /// Row-major decoded numerators.
    pub fn numerators(&self) -> Vec<u128> {
        (0..self.k)
            .flat_map(|j| (0..self.m).map(move |c| (j, c)))
            .map(|(j, c)| self.numerator(j, c))
            .collect()
    }
}
