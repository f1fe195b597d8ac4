//! Superlinear higher-order constraints `x_{pk+a} x_{qk+b} x_{f_1(k)} … x_{f_ℓ(k)} ∉ F`
//! touch a vanishing fraction of the window, so they leave both dimensions
//! unchanged. This module measures that fraction and the small-window effect.

use std::collections::HashSet;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::matrix::TransitionMatrix;
use crate::numeric::big_log_base;
use crate::oracle::{brute_force_count, ExtraConstraint};
use crate::system::AffineSystem;

/// Largest `k` at which growth maps are checked against their declared exponent.
pub const GROWTH_CHECK_LIMIT: i64 = 1_000_000;

/// Position map `k ↦ ⌈c · k^s⌉`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthMap {
    pub coefficient: f64,
    pub exponent: f64,
}

impl GrowthMap {
    pub fn new(coefficient: f64, exponent: f64) -> Result<Self> {
        if !(coefficient.is_finite() && coefficient > 0.0) {
            return Err(Error::InvalidArgument(format!("coefficient must be positive, got {coefficient}")));
        }
        if !(exponent.is_finite() && exponent > 1.0) {
            return Err(Error::InvalidArgument(format!("exponent must exceed 1, got {exponent}")));
        }
        Ok(Self { coefficient, exponent })
    }

    pub fn eval(&self, k: i64) -> i64 {
        (self.coefficient * (k as f64).powf(self.exponent)).ceil() as i64
    }

    /// `#{k ≥ 1 : f(k) ≤ n}`.
    pub fn count_within(&self, n: i64) -> i64 {
        let mut k = ((n as f64 / self.coefficient).powf(1.0 / self.exponent).floor() as i64).max(0);
        while k > 0 && self.eval(k) > n {
            k -= 1;
        }
        while self.eval(k + 1) <= n {
            k += 1;
        }
        k
    }

    /// Checks `f` is strictly increasing with `f(k) ≥ k`, and that
    /// `f(k) / k^s` stays within positive bounds, for `k ≤ limit`.
    pub fn check(&self, limit: i64) -> Result<(f64, f64)> {
        let mut prev = 0;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for k in 1..=limit {
            let v = self.eval(k);
            if v <= prev || v < k {
                return Err(Error::InvalidArgument(format!(
                    "growth map {self} is not increasing with f(k) ≥ k at k = {k}"
                )));
            }
            prev = v;
            let ratio = v as f64 / (k as f64).powf(self.exponent);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        Ok((lo, hi))
    }
}

impl std::fmt::Display for GrowthMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.coefficient == 1.0 {
            write!(f, "k^{}", self.exponent)
        } else {
            write!(f, "{}*k^{}", self.coefficient, self.exponent)
        }
    }
}

/// Parses `k^2`, `3*k^2`, `2k^1.5` and `k**2`.
impl FromStr for GrowthMap {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("cannot parse growth map {s:?}; expected c*k^s"));
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let compact = compact.replace("**", "^");
        let (coeff, rest) = compact.split_once('k').ok_or_else(bad)?;
        let coeff = coeff.strip_suffix('*').unwrap_or(coeff);
        let coefficient = if coeff.is_empty() { 1.0 } else { coeff.parse().map_err(|_| bad())? };
        let exponent = match rest.strip_prefix('^') {
            Some(e) => e.parse().map_err(|_| bad())?,
            None if rest.is_empty() => 1.0,
            None => return Err(bad()),
        };
        GrowthMap::new(coefficient, exponent)
    }
}

/// A pairwise system together with `ℓ` superlinear positions per constraint.
#[derive(Debug, Clone)]
pub struct HigherOrderSystem {
    /// Pairwise system whose matrix forbids `(u, v)` exactly when every
    /// completion `(u, v, w_1, …, w_ℓ)` lies in `F`.
    pub base: AffineSystem,
    pub forbidden: Arc<HashSet<Vec<u8>>>,
    pub maps: Vec<GrowthMap>,
    /// `(lower, upper)` bounds of `f_i(k) / k^{s_i}` on the checked range.
    pub growth_bounds: Vec<(f64, f64)>,
}

/// Pair matrix of a forbidden set: `A(u, v) = 0` iff all completions are forbidden.
pub fn pair_matrix(m: usize, ell: usize, forbidden: &HashSet<Vec<u8>>) -> Result<TransitionMatrix> {
    let completions = m.pow(ell as u32);
    let rows: Vec<Vec<i64>> = (0..m)
        .map(|u| {
            (0..m)
                .map(|v| {
                    let prefix = [u as u8, v as u8];
                    let hits = forbidden.iter().filter(|w| w[..2] == prefix).count();
                    i64::from(hits < completions)
                })
                .collect()
        })
        .collect();
    TransitionMatrix::from_rows(&rows)
}

impl HigherOrderSystem {
    pub fn new(p: i64, q: i64, a: i64, b: i64, m: usize, forbidden: Vec<Vec<u8>>, maps: Vec<GrowthMap>) -> Result<Self> {
        Self::with_check_limit(p, q, a, b, m, forbidden, maps, GROWTH_CHECK_LIMIT)
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_check_limit(
        p: i64,
        q: i64,
        a: i64,
        b: i64,
        m: usize,
        forbidden: Vec<Vec<u8>>,
        maps: Vec<GrowthMap>,
        limit: i64,
    ) -> Result<Self> {
        let width = maps.len() + 2;
        for w in &forbidden {
            if w.len() != width {
                return Err(Error::InvalidArgument(format!(
                    "forbidden word {w:?} has length {}, expected {width}",
                    w.len()
                )));
            }
            if w.iter().any(|&x| x as usize >= m) {
                return Err(Error::InvalidArgument(format!("forbidden word {w:?} uses a letter outside 0..{m}")));
            }
        }
        let forbidden: HashSet<Vec<u8>> = forbidden.into_iter().collect();
        let base = AffineSystem::new(p, q, a, b, pair_matrix(m, maps.len(), &forbidden)?)?;
        let growth_bounds = maps.iter().map(|f| f.check(limit)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            base,
            forbidden: Arc::new(forbidden),
            maps,
            growth_bounds,
        })
    }

    pub fn ell(&self) -> usize {
        self.maps.len()
    }

    /// Full constraints `(pk+a, qk+b, f_1(k), …)` lying inside `{1, …, n}`.
    pub fn extra_constraints(&self, n: i64) -> Vec<ExtraConstraint> {
        if self.maps.is_empty() {
            return Vec::new();
        }
        let (p, q, a, b) = (self.base.p(), self.base.q(), self.base.a(), self.base.b());
        let mut out = Vec::new();
        let mut k = self.base.k_min();
        while p * k + a <= n && q * k + b <= n {
            let mut positions = vec![p * k + a, q * k + b];
            positions.extend(self.maps.iter().map(|f| f.eval(k)));
            if positions.iter().all(|&x| (1..=n).contains(&x)) {
                out.push(ExtraConstraint {
                    positions,
                    forbidden: self.forbidden.clone(),
                });
            }
            k += 1;
        }
        out
    }
}

/// Fraction of the window touched by higher-order positions, and the bound
/// `2 Σ_i n^{1/s_i} log_{q1} n / n`.
///
/// `measured = 2 · #⋃_i {k : f_i(k) ≤ n} · log_{q1} n / n`.
pub fn affected_density(n: u64, hos: &HigherOrderSystem) -> Result<(f64, f64)> {
    let q1 = hos.base.q1();
    if n < q1 as u64 {
        return Err(Error::InvalidArgument(format!("need n ≥ {q1}, got {n}")));
    }
    if hos.maps.is_empty() {
        return Ok((0.0, 0.0));
    }
    let nf = n as f64;
    let log_n = nf.ln() / (q1 as f64).ln();
    let union = hos.maps.iter().map(|f| f.count_within(n as i64)).max().unwrap_or(0);
    let measured = 2.0 * union as f64 * log_n / nf;
    let bound = 2.0 * hos.maps.iter().map(|f| nf.powf(1.0 / f.exponent)).sum::<f64>() * log_n / nf;
    Ok((measured, bound))
}

/// `|log_m N_F(n) - log_m N(n)| / n`, comparing admissible-word counts with
/// and without the higher-order constraints; infinite if none survive.
pub fn dim_gap_empirical(n: usize, hos: &HigherOrderSystem) -> Result<f64> {
    let m = hos.base.m();
    let without = brute_force_count(n, &hos.base, &[])?.count;
    let with = brute_force_count(n, &hos.base, &hos.extra_constraints(n as i64))?.count;
    if with == num_bigint::BigUint::ZERO {
        return Ok(f64::INFINITY);
    }
    Ok((big_log_base(&without, m) - big_log_base(&with, m)).abs() / n as f64)
}
