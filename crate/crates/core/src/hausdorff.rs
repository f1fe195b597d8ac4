//! Hausdorff dimension in each arithmetic case.
//!
//! The divisible case sums chain potentials `t_{φ;i}`, computed by a backward
//! dynamic program over chain levels. The classical case solves the
//! fixed-point equation `t_i^q = Σ_j a_{i,j} t_j`.

use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{chain_tail_mass, density_p};
use crate::matrix::TransitionMatrix;
use crate::minkowski;
use crate::numeric::{check_tolerance, log_base, ratio_to_f64, CompensatedSum};
use crate::report::{ChainContribution, DimensionKind, DimensionReport};
use crate::system::{AffineSystem, CaseTag};

pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

/// Smallest residual the fixed-point solver is asked for by the dimension
/// functions; below this the iteration stalls in double precision.
const FIXED_POINT_FLOOR: f64 = 1e-13;

/// Upper limit on chain lengths summed in the divisible series.
const MAX_CHAIN_LEVELS: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixedPointVector {
    pub t: Vec<f64>,
    pub q: i64,
    /// `max_i |t_i^q - Σ_j a_{i,j} t_j|`.
    pub residual: f64,
    /// Sup-norm length of the final step.
    pub last_step: f64,
    pub iterations: usize,
}

impl FixedPointVector {
    pub fn sum(&self) -> f64 {
        self.t.iter().sum()
    }
}

fn fixed_point_residual(a: &TransitionMatrix, t: &[f64], q: i64) -> f64 {
    (0..a.m())
        .map(|i| {
            let rhs: f64 = (0..a.m()).filter(|&j| a.allows(i, j)).map(|j| t[j]).sum();
            (t[i].powi(q as i32) - rhs).abs()
        })
        .fold(0.0, f64::max)
}

/// Positive solution of `t_i^q = Σ_j a_{i,j} t_j` for primitive `A`.
pub fn solve_t_fixed_point(a: &TransitionMatrix, q: i64, tol: f64) -> Result<FixedPointVector> {
    solve_t_fixed_point_with(a, q, tol, DEFAULT_MAX_ITERATIONS)
}

/// [`solve_t_fixed_point`] with an explicit iteration cap.
///
/// Iterates `t ← (A t)^{1/q}` from the all-ones vector. The sequence is
/// nondecreasing and converges linearly with rate `1/q`.
pub fn solve_t_fixed_point_with(a: &TransitionMatrix, q: i64, tol: f64, max_iterations: usize) -> Result<FixedPointVector> {
    if q < 2 {
        return Err(Error::InvalidArgument(format!("need q ≥ 2, got {q}")));
    }
    check_tolerance(tol)?;
    if !a.is_primitive() {
        return Err(Error::NotPrimitive);
    }
    let m = a.m();
    let inv_q = 1.0 / q as f64;
    let mut t = vec![1.0; m];
    let mut next = vec![0.0; m];
    for iteration in 1..=max_iterations {
        let mut step: f64 = 0.0;
        for i in 0..m {
            let s: f64 = (0..m).filter(|&j| a.allows(i, j)).map(|j| t[j]).sum();
            next[i] = s.powf(inv_q);
            step = step.max((next[i] - t[i]).abs());
        }
        std::mem::swap(&mut t, &mut next);
        if step < tol / 10.0 {
            let residual = fixed_point_residual(a, &t, q);
            if residual < tol {
                return Ok(FixedPointVector {
                    t,
                    q,
                    residual,
                    last_step: step,
                    iterations: iteration,
                });
            }
        }
    }
    Err(Error::Numerical(format!(
        "fixed point for q={q} did not reach residual {tol} in {max_iterations} iterations"
    )))
}

/// Chain potential `t_{φ;i}` with the level tables of its backward program.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPotential {
    pub i: usize,
    /// `s[k-1] = S_k = Σ_{j=k}^{i} P_{i,j}`.
    pub s: Vec<BigRational>,
    /// `exponents[k-1] = S_{k+1} / S_k`, zero on the last level.
    pub exponents: Vec<f64>,
    /// `u[k-1][x]`: value of level `k` at letter `x`; `u[i-1] ≡ 1`.
    pub u: Vec<Vec<f64>>,
    pub t_phi: f64,
}

impl ChainPotential {
    /// `S_1 = Σ_j P_{i,j}`.
    pub fn weight(&self) -> f64 {
        ratio_to_f64(&self.s[0])
    }

    /// `S_1 · log_m t_{φ;i}`.
    pub fn contribution(&self, m: usize) -> f64 {
        self.weight() * log_base(self.t_phi, m)
    }
}

/// Chain potential for chains of full length `i ≥ 2`.
pub fn chain_potential(i: usize, sys: &AffineSystem) -> Result<ChainPotential> {
    sys.require_case(CaseTag::DivisibleGeneral)?;
    if i < 2 {
        return Err(Error::InvalidArgument(format!("chain potential needs i ≥ 2, got {i}")));
    }
    chain_potential_any(i, sys)
}

/// Backward program shared with the measure construction; `i = 1` yields
/// the uniform potential `t_{φ;1} = m`.
pub(crate) fn chain_potential_any(i: usize, sys: &AffineSystem) -> Result<ChainPotential> {
    sys.require_case(CaseTag::DivisibleGeneral)?;
    let p_row = (1..=i).map(|j| density_p(i, j, sys)).collect::<Result<Vec<_>>>()?;
    Ok(chain_potential_from_weights(sys.matrix(), &p_row))
}

/// Backward program for arbitrary positive level weights
/// `p_row[j-1] = P_{i,j}`.
pub fn chain_potential_from_weights(a: &TransitionMatrix, p_row: &[BigRational]) -> ChainPotential {
    let i = p_row.len();
    let m = a.m();
    let mut s = vec![BigRational::zero(); i];
    let mut acc = BigRational::zero();
    for k in (0..i).rev() {
        acc += &p_row[k];
        s[k] = acc.clone();
    }
    let exponents: Vec<f64> = (0..i)
        .map(|k| if k + 1 < i { ratio_to_f64(&(&s[k + 1] / &s[k])) } else { 0.0 })
        .collect();
    let mut u: Vec<Vec<f64>> = vec![vec![1.0; m]; i];
    for k in (0..i.saturating_sub(1)).rev() {
        let e = exponents[k + 1];
        let lifted: Vec<f64> = u[k + 1].iter().map(|v| v.powf(e)).collect();
        for (x, slot) in u[k].iter_mut().enumerate() {
            *slot = (0..m).filter(|&y| a.allows(x, y)).map(|y| lifted[y]).sum();
        }
    }
    let t_phi = u[0].iter().map(|v| v.powf(exponents[0])).sum();
    ChainPotential { i, s, exponents, u, t_phi }
}

/// `1 - 1/p - 1/q + (1/p) log_m Σ_i a_i^{p/q}` for `(p,q) ∤ (b-a)`.
pub fn dim_h_nondivisible(sys: &AffineSystem) -> Result<DimensionReport> {
    sys.require_case(CaseTag::NonDivisible)?;
    let (p, q) = (sys.p() as f64, sys.q() as f64);
    let ratio = p / q;
    let potential: f64 = sys.matrix().row_sums().iter().map(|&r| (r as f64).powf(ratio)).sum();
    let value = 1.0 - 1.0 / p - 1.0 / q + log_base(potential, sys.m()) / p;
    Ok(DimensionReport::closed_form(value, DimensionKind::Hausdorff, sys.case_tag()))
}

fn fixed_point_report(fp: &FixedPointVector, a: &TransitionMatrix, ratio: i64, lead: f64, scale: f64, case_tag: CaseTag) -> DimensionReport {
    let m = a.m();
    let total = fp.sum();
    let value = lead + scale * ((ratio - 1) as f64 / ratio as f64) * log_base(total, m);
    // Remaining distance to the fixed point is at most step/(q-1) per coordinate.
    let t_err = fp.last_step / (ratio - 1) as f64 * m as f64;
    let tolerance = scale * t_err / (total * (m as f64).ln()) + 8.0 * f64::EPSILON;
    DimensionReport {
        value: value.clamp(0.0, 1.0),
        kind: DimensionKind::Hausdorff,
        case_tag,
        truncation_index: fp.iterations,
        tail_bound: 0.0,
        tolerance,
        notes: Vec::new(),
        contributions: None,
    }
}

/// `((q-1)/q) log_m Σ t_i` for `p = 1`, independent of the offsets.
pub fn dim_h_classical(sys: &AffineSystem, tol: f64) -> Result<DimensionReport> {
    sys.require_case(CaseTag::Classical)?;
    let fp = solve_t_fixed_point(sys.matrix(), sys.q(), fixed_point_tolerance(tol)?)?;
    Ok(fixed_point_report(&fp, sys.matrix(), sys.q(), 0.0, 1.0, sys.case_tag()))
}

fn fixed_point_tolerance(tol: f64) -> Result<f64> {
    check_tolerance(tol)?;
    Ok(tol.clamp(FIXED_POINT_FLOOR, 1e-12))
}

/// Divisible series `P_{1,1} + Σ_{i≥2} S_1^{(i)} log_m t_{φ;i}` for `p/(p,q) ≥ 2`.
pub fn dim_h_divisible(sys: &AffineSystem, tol: f64) -> Result<DimensionReport> {
    if sys.case_tag() == CaseTag::DivisibleDegenerate {
        return Err(Error::WrongCase {
            expected: "divisible with p/(p,q) ≥ 2 (use dim_h_degenerate)",
            actual: sys.case_tag(),
        });
    }
    sys.require_case(CaseTag::DivisibleGeneral)?;
    check_tolerance(tol)?;
    let mut levels = 1;
    let mut tail = ratio_to_f64(&chain_tail_mass(sys, levels, 1)?);
    while tail > tol {
        levels += 1;
        if levels > MAX_CHAIN_LEVELS {
            return Err(Error::Numerical(format!("chain series did not reach tolerance {tol}")));
        }
        tail = ratio_to_f64(&chain_tail_mass(sys, levels, 1)?);
    }
    let head = ratio_to_f64(&density_p(1, 1, sys)?);
    let m = sys.m();
    let contributions = (2..=levels)
        .into_par_iter()
        .map(|i| {
            let cp = chain_potential(i, sys)?;
            Ok(ChainContribution {
                i,
                weight: cp.weight(),
                t_phi: cp.t_phi,
                contribution: cp.contribution(m),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut acc = CompensatedSum::new();
    acc.add(head);
    acc.extend(contributions.iter().map(|c| c.contribution));
    Ok(DimensionReport {
        value: acc.value().clamp(0.0, 1.0),
        kind: DimensionKind::Hausdorff,
        case_tag: sys.case_tag(),
        truncation_index: levels,
        tail_bound: tail,
        tolerance: tail + acc.rounding_bound() + 8.0 * f64::EPSILON * levels as f64,
        notes: Vec::new(),
        contributions: Some(contributions),
    })
}

/// Value of the divisible series applied literally when `p/(p,q) = 1`:
/// every `P_{i,j}` with `i ≥ 2` vanishes, leaving `1 - 1/p - 1/q + 1/(d p1 q1)`.
pub fn literal_divisible_series(sys: &AffineSystem) -> Result<f64> {
    if sys.case_tag() == CaseTag::NonDivisible {
        return Err(Error::WrongCase {
            expected: "divisible",
            actual: sys.case_tag(),
        });
    }
    let (p, q, d, p1, q1) = (sys.p(), sys.q(), sys.d(), sys.p1(), sys.q1());
    Ok(1.0 - 1.0 / p as f64 - 1.0 / q as f64 + 1.0 / (d * p1 * q1) as f64)
}

/// `p/(p,q) = 1`: the progression `{pk + a}` carries a classical system of
/// ratio `q/(p,q)` and every other position is free, giving
/// `(1 - 1/p) + (1/p) ((q1-1)/q1) log_m Σ t_i`.
pub fn dim_h_degenerate(sys: &AffineSystem, tol: f64) -> Result<DimensionReport> {
    sys.require_case(CaseTag::DivisibleDegenerate)?;
    let q1 = sys.q1();
    let fp = solve_t_fixed_point(sys.matrix(), q1, fixed_point_tolerance(tol)?)?;
    let p = sys.p() as f64;
    let mut report = fixed_point_report(&fp, sys.matrix(), q1, 1.0 - 1.0 / p, 1.0 / p, sys.case_tag());
    report.notes.push(format!(
        "sublattice reduction with ratio {q1}; the divisible series applied literally gives {:.12}",
        literal_divisible_series(sys)?
    ));
    Ok(report)
}

/// Dispatches on the case tag.
pub fn dim_h(sys: &AffineSystem, tol: f64) -> Result<DimensionReport> {
    match sys.case_tag() {
        CaseTag::NonDivisible => dim_h_nondivisible(sys),
        CaseTag::Classical => dim_h_classical(sys, tol),
        CaseTag::DivisibleDegenerate => dim_h_degenerate(sys, tol),
        CaseTag::DivisibleGeneral => dim_h_divisible(sys, tol),
    }
}

/// Both dimensions and their difference `dim_M - dim_H`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderGap {
    pub dim_h: DimensionReport,
    pub dim_m: DimensionReport,
    pub gap: f64,
    /// Sum of both reports' tolerances.
    pub tolerance: f64,
}

pub fn holder_gap(sys: &AffineSystem, tol: f64) -> Result<HolderGap> {
    let dim_h = dim_h(sys, tol)?;
    let dim_m = minkowski::dim_m(sys, tol)?;
    let gap = dim_m.value - dim_h.value;
    let tolerance = dim_h.tolerance + dim_m.tolerance;
    Ok(HolderGap { dim_h, dim_m, gap, tolerance })
}

/// Right-hand side of the per-level Hölder bound,
/// `(Σ_k P_{i,k} log_m|A^{k-1}|) / S_1`.
pub fn holder_level_bound(cp: &ChainPotential, p_row: &[BigRational], a: &TransitionMatrix) -> f64 {
    let mut acc = CompensatedSum::new();
    for (k, w) in p_row.iter().enumerate() {
        acc.add(ratio_to_f64(w) * a.log_power_sum(k));
    }
    acc.value() / cp.weight()
}

/// `S_1 = Σ_j P_{i,j}` as an exact rational.
pub fn row_weight(p_row: &[BigRational]) -> BigRational {
    p_row.iter().fold(BigRational::zero(), |acc, v| acc + v)
}
