//! Small numeric helpers shared by the series evaluators.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Neumaier's variant of Kahan summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
    terms: usize,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
        self.terms += 1;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }

    pub fn terms(&self) -> usize {
        self.terms
    }

    /// Conservative bound on the rounding error of the accumulated value.
    pub fn rounding_bound(&self) -> f64 {
        4.0 * f64::EPSILON * self.value().abs() * (1.0 + self.terms as f64).log2().max(1.0)
    }
}

impl Extend<f64> for CompensatedSum {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.add(x);
        }
    }
}

/// Natural logarithm of an arbitrarily large integer.
pub fn big_ln(x: &BigUint) -> f64 {
    assert!(!x.is_zero(), "logarithm of zero");
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().expect("fits in f64").ln();
    }
    let shift = bits - 64;
    let top = (x >> shift).to_f64().expect("64-bit value");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Logarithm in base `m`. Exact powers of `m` return an exact integer.
pub fn big_log_base(x: &BigUint, m: usize) -> f64 {
    if let Some(k) = exact_power_of(x, m) {
        return k as f64;
    }
    big_ln(x) / (m as f64).ln()
}

fn exact_power_of(x: &BigUint, m: usize) -> Option<u64> {
    if m < 2 || x.is_zero() {
        return None;
    }
    let base = BigUint::from(m);
    let mut rest = x.clone();
    let mut k = 0;
    while rest > BigUint::from(1u32) {
        if (&rest % &base) != BigUint::zero() {
            return None;
        }
        rest /= &base;
        k += 1;
    }
    Some(k)
}

/// Logarithm of a positive real in base `m`.
///
/// Bases that are powers of two go through `log2`, which is exact on dyadic
/// probabilities such as `1/2`.
pub fn log_base(x: f64, m: usize) -> f64 {
    if m.is_power_of_two() {
        x.log2() / (m.trailing_zeros() as f64)
    } else {
        x.ln() / (m as f64).ln()
    }
}

/// Converts an exact rational to the nearest-ish `f64` without overflowing
/// on large numerators and denominators.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    if r.is_zero() {
        return 0.0;
    }
    let negative = r.is_negative();
    let num: BigUint = r.numer().abs().to_biguint().expect("non-negative");
    let den: BigUint = r.denom().abs().to_biguint().expect("non-negative");
    let nb = num.bits() as i64;
    let db = den.bits() as i64;
    let n_shift = (nb - 64).max(0);
    let d_shift = (db - 64).max(0);
    let n_top = (&num >> n_shift as u64).to_f64().expect("64-bit value");
    let d_top = (&den >> d_shift as u64).to_f64().expect("64-bit value");
    let v = n_top / d_top * 2f64.powi((n_shift - d_shift) as i32);
    if negative {
        -v
    } else {
        v
    }
}

/// `a / b` as an exact rational.
pub fn frac(a: i64, b: i64) -> BigRational {
    BigRational::new(BigInt::from(a), BigInt::from(b))
}

/// `Σ_{k ≥ start} k·x^k` in closed form, for `0 ≤ x < 1`.
pub fn weighted_geometric_tail(x: f64, start: u64) -> f64 {
    debug_assert!((0.0..1.0).contains(&x));
    let k = start as f64;
    x.powf(k) * (k - (k - 1.0) * x) / ((1.0 - x) * (1.0 - x))
}

/// Exact rational version of [`weighted_geometric_tail`].
pub fn weighted_geometric_tail_exact(x: &BigRational, start: u64) -> BigRational {
    let one = BigRational::from_integer(1.into());
    let k = BigRational::from_integer(BigInt::from(start));
    let xk = pow_ratio(x, start);
    let denom = (&one - x) * (&one - x);
    xk * (&k - (&k - &one) * x) / denom
}

pub fn pow_ratio(x: &BigRational, e: u64) -> BigRational {
    num_traits::pow::pow(x.clone(), e as usize)
}

/// Rejects tolerances that are not finite and strictly positive.
pub fn check_tolerance(tol: f64) -> Result<()> {
    if tol.is_finite() && tol > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")))
    }
}
