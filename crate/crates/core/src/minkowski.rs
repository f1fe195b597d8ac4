//! Minkowski (box-counting) dimension: closed forms, truncated series with
//! rigorous tails, and exact admissible-pattern counts on finite windows.

use num_bigint::BigUint;
use num_traits::One;

use crate::error::{Error, Result};
use crate::lattice::empirical_census;
use crate::matrix::TransitionMatrix;
use crate::numeric::{big_log_base, check_tolerance, log_base, weighted_geometric_tail, CompensatedSum};
use crate::report::{DimensionKind, DimensionReport};
use crate::system::{AffineSystem, CaseTag};

/// Hard limit on series terms; only reached for absurdly small tolerances.
const MAX_SERIES_TERMS: usize = 4096;

/// A truncated evaluation of `coeff · Σ_{i=first}^{N} log_m|A^{i-1}| / q1^{i+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesEvaluation {
    pub partial_sum: f64,
    pub terms_used: usize,
    pub tail_bound: f64,
    pub rounding: f64,
    pub log_base: usize,
}

/// Bound on `coeff · Σ_{i>last} log_m|A^{i-1}| / q1^{i+1}` using
/// `log_m|A^{i-1}| ≤ i + 1`.
pub fn series_tail_bound(coeff: f64, q1: i64, last: usize) -> f64 {
    coeff * weighted_geometric_tail(1.0 / q1 as f64, last as u64 + 2)
}

/// Sums the power-sum series from `first` until the tail bound drops to `tol`.
pub fn power_series(a: &TransitionMatrix, q1: i64, coeff: f64, first: usize, tol: f64) -> Result<SeriesEvaluation> {
    check_tolerance(tol)?;
    let x = 1.0 / q1 as f64;
    let mut acc = CompensatedSum::new();
    let mut last = first - 1;
    let mut weight = x.powi(first as i32);
    while series_tail_bound(coeff, q1, last) > tol {
        last += 1;
        if last > MAX_SERIES_TERMS {
            return Err(Error::Numerical(format!(
                "series did not reach tolerance {tol} within {MAX_SERIES_TERMS} terms"
            )));
        }
        weight *= x;
        acc.add(coeff * a.log_power_sum(last - 1) * weight);
    }
    Ok(SeriesEvaluation {
        partial_sum: acc.value(),
        terms_used: last,
        tail_bound: series_tail_bound(coeff, q1, last),
        rounding: acc.rounding_bound(),
        log_base: a.m(),
    })
}

/// `1 - 2/q + (1/q) log_m |A|` for `(p,q) ∤ (b-a)`.
pub fn dim_m_nondivisible(sys: &AffineSystem) -> Result<DimensionReport> {
    sys.require_case(CaseTag::NonDivisible)?;
    let q = sys.q() as f64;
    let value = 1.0 - 2.0 / q + sys.matrix().log_power_sum(1) / q;
    Ok(DimensionReport::closed_form(value, DimensionKind::Minkowski, sys.case_tag()))
}

/// Divisible case: `1 - (2q1-1)/(d q1²) + ((q1-1)²/d) Σ_{i≥2} log_m|A^{i-1}|/q1^{i+1}`.
/// Accepted for every divisible system, including `p = 1` and `p/(p,q) = 1`.
pub fn dim_m_divisible(sys: &AffineSystem, tol: f64) -> Result<DimensionReport> {
    if sys.case_tag() == CaseTag::NonDivisible {
        return Err(Error::WrongCase {
            expected: "divisible",
            actual: sys.case_tag(),
        });
    }
    let (d, q1) = (sys.d() as f64, sys.q1());
    let coeff = ((q1 - 1) * (q1 - 1)) as f64 / d;
    let series = power_series(sys.matrix(), q1, coeff, 2, tol)?;
    let head = 1.0 - (2 * q1 - 1) as f64 / (d * (q1 * q1) as f64);
    Ok(series_report(head + series.partial_sum, &series, sys.case_tag()))
}

/// Classical `(1,q;0,0)` form `(q-1)² Σ_{i≥1} log_m|A^{i-1}| / q^{i+1}`.
pub fn dim_m_classical(q: i64, a: &TransitionMatrix, tol: f64) -> Result<DimensionReport> {
    if q < 2 {
        return Err(Error::InvalidArgument(format!("need q ≥ 2, got {q}")));
    }
    let coeff = ((q - 1) * (q - 1)) as f64;
    let series = power_series(a, q, coeff, 1, tol)?;
    Ok(series_report(series.partial_sum, &series, CaseTag::Classical))
}

/// Dispatches on the case tag.
pub fn dim_m(sys: &AffineSystem, tol: f64) -> Result<DimensionReport> {
    match sys.case_tag() {
        CaseTag::NonDivisible => dim_m_nondivisible(sys),
        _ => dim_m_divisible(sys, tol),
    }
}

fn series_report(value: f64, series: &SeriesEvaluation, case_tag: CaseTag) -> DimensionReport {
    DimensionReport {
        value: value.clamp(0.0, 1.0),
        kind: DimensionKind::Minkowski,
        case_tag,
        truncation_index: series.terms_used,
        tail_bound: series.tail_bound,
        tolerance: series.tail_bound + series.rounding + 4.0 * f64::EPSILON,
        notes: Vec::new(),
        contributions: None,
    }
}

/// Exact number of admissible words on `{1, …, n}`: the product over window
/// chains of `|A^{j-1}|`, with fixed-point chains contributing `trace(A)`.
pub fn pattern_count_exact(n: u64, sys: &AffineSystem) -> Result<BigUint> {
    if !sys.matrix().is_irreducible() {
        return Err(Error::Reducible);
    }
    let census = empirical_census(n, sys);
    let a = sys.matrix();
    let mut count = BigUint::one();
    for (&ell, &chains) in &census.d {
        let plain = if ell == 1 { chains - census.self_loops } else { chains };
        count *= a.power_sum(ell - 1).pow(plain as u32);
    }
    count *= BigUint::from(a.trace()).pow(census.self_loops as u32);
    Ok(count)
}

/// `log_m(pattern count) / n`, accumulated per chain as `Σ_ℓ D_ℓ log_m|A^{ℓ-1}|`.
pub fn dim_m_empirical(n: u64, sys: &AffineSystem) -> f64 {
    let census = empirical_census(n, sys);
    let a = sys.matrix();
    let mut acc = CompensatedSum::new();
    for (&ell, &chains) in &census.d {
        let plain = if ell == 1 { chains - census.self_loops } else { chains };
        acc.add(plain as f64 * a.log_power_sum(ell - 1));
    }
    if census.self_loops > 0 {
        let t = a.trace();
        let per = if t == 0 { f64::NEG_INFINITY } else { log_base(t as f64, a.m()) };
        acc.add(census.self_loops as f64 * per);
    }
    acc.value() / n as f64
}

/// `log_m` of an exact count, for callers holding a [`BigUint`].
pub fn log_count(count: &BigUint, m: usize) -> f64 {
    big_log_base(count, m)
}
