//! Decomposition of the window `{1, …, n}` into maximal constraint chains.
//!
//! Constraints `(pk+a, qk+b)` link a position `x = pk+a` to its successor
//! `g(x) = q(x-a)/p + b`. Because `g(x) - x` is increasing in `x`, every
//! orbit is either strictly increasing or strictly decreasing, so its
//! intersection with the window is one contiguous orbit segment. Chains are
//! found by iterating the orbit directly; no residue bookkeeping is used.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numeric::{frac, pow_ratio, weighted_geometric_tail_exact};
use crate::system::{AffineSystem, CaseTag};

/// Orbit steps allowed outside the window before a chain is marked truncated.
pub const MAX_EXTRA_STEPS: usize = 128;

/// Total orbit cardinality of a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FullLength {
    Finite(usize),
    /// The orbit was still going after [`MAX_EXTRA_STEPS`] steps past the
    /// window or left the representable range.
    Truncated,
}

impl FullLength {
    pub fn finite(self) -> Option<usize> {
        match self {
            FullLength::Finite(i) => Some(i),
            FullLength::Truncated => None,
        }
    }
}

impl Serialize for FullLength {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            FullLength::Finite(i) => s.serialize_u64(*i as u64),
            FullLength::Truncated => s.serialize_str("truncated"),
        }
    }
}

/// The successor map `g(x) = q(x-a)/p + b`, defined when `x = pk+a` for an
/// active `k` (both `pk+a ≥ 1` and `qk+b ≥ 1`).
pub fn g_map(x: i64, sys: &AffineSystem) -> Option<i64> {
    match step_forward(x as i128, sys) {
        Step::Next(y) => i64::try_from(y).ok(),
        _ => None,
    }
}

/// The unique `y` with `g(y) = x`, if any.
pub fn g_preimage(x: i64, sys: &AffineSystem) -> Option<i64> {
    match step_backward(x as i128, sys) {
        Step::Next(y) => i64::try_from(y).ok(),
        _ => None,
    }
}

enum Step {
    Absent,
    Next(i128),
    Overflow,
}

fn step_forward(x: i128, sys: &AffineSystem) -> Step {
    let (p, q, a, b) = (sys.p() as i128, sys.q() as i128, sys.a() as i128, sys.b() as i128);
    if x < 1 {
        return Step::Absent;
    }
    let Some(shifted) = x.checked_sub(a) else {
        return Step::Overflow;
    };
    if shifted.rem_euclid(p) != 0 {
        return Step::Absent;
    }
    let k = shifted.div_euclid(p);
    if k < sys.k_min() as i128 {
        return Step::Absent;
    }
    match k.checked_mul(q).and_then(|v| v.checked_add(b)) {
        Some(y) => Step::Next(y),
        None => Step::Overflow,
    }
}

fn step_backward(x: i128, sys: &AffineSystem) -> Step {
    let (p, q, a, b) = (sys.p() as i128, sys.q() as i128, sys.a() as i128, sys.b() as i128);
    if x < 1 {
        return Step::Absent;
    }
    let Some(shifted) = x.checked_sub(b) else {
        return Step::Overflow;
    };
    if shifted.rem_euclid(q) != 0 {
        return Step::Absent;
    }
    let k = shifted.div_euclid(q);
    if k < sys.k_min() as i128 {
        return Step::Absent;
    }
    match k.checked_mul(p).and_then(|v| v.checked_add(a)) {
        Some(y) => Step::Next(y),
        None => Step::Overflow,
    }
}

/// A maximal orbit segment inside the window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Chain {
    /// Window members in orbit order (strictly monotone).
    pub positions: Vec<i64>,
    pub full_length: FullLength,
    /// Orbit members preceding the first window member (they lie above `n`).
    pub levels_before: usize,
    /// The orbit is a fixed point `g(x) = x`, i.e. a constraint `A(x_x, x_x) = 1`.
    pub self_loop: bool,
}

impl Chain {
    pub fn start(&self) -> i64 {
        self.positions[0]
    }

    pub fn window_count(&self) -> usize {
        self.positions.len()
    }
}

/// Chain tallies: `L(i, n, j)` keyed by `(full_length, window_count)` and
/// `D_ℓ(n)` keyed by window count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Census {
    pub l: BTreeMap<(FullLength, usize), u64>,
    pub d: BTreeMap<usize, u64>,
    /// Fixed-point chains, also counted in `l` and `d` as singletons.
    pub self_loops: u64,
}

impl Census {
    fn record(&mut self, full_length: FullLength, window_count: usize, self_loop: bool) {
        *self.l.entry((full_length, window_count)).or_default() += 1;
        *self.d.entry(window_count).or_default() += 1;
        self.self_loops += self_loop as u64;
    }

    fn merge(mut self, other: Census) -> Census {
        for (k, v) in other.l {
            *self.l.entry(k).or_default() += v;
        }
        for (k, v) in other.d {
            *self.d.entry(k).or_default() += v;
        }
        self.self_loops += other.self_loops;
        self
    }

    pub fn l_count(&self, i: usize, j: usize) -> u64 {
        self.l.get(&(FullLength::Finite(i), j)).copied().unwrap_or(0)
    }

    pub fn d_count(&self, ell: usize) -> u64 {
        self.d.get(&ell).copied().unwrap_or(0)
    }

    /// `Σ_ℓ ℓ · D_ℓ`, which equals the window size.
    pub fn covered(&self) -> u64 {
        self.d.iter().map(|(&l, &c)| l as u64 * c).sum()
    }
}

#[derive(Debug, Clone)]
pub struct ChainDecomposition {
    pub n: u64,
    pub chains: Vec<Chain>,
    pub census: Census,
}

struct Walk {
    window_count: usize,
    full_length: FullLength,
    levels_before: usize,
    self_loop: bool,
}

/// True when `x` is the first window member of its orbit.
fn is_window_start(x: i64, n: i64, sys: &AffineSystem) -> bool {
    match step_backward(x as i128, sys) {
        Step::Next(y) => y > n as i128 || y == x as i128,
        Step::Absent | Step::Overflow => true,
    }
}

fn walk(x: i64, n: i64, sys: &AffineSystem, mut positions: Option<&mut Vec<i64>>) -> Walk {
    let n = n as i128;
    if matches!(step_forward(x as i128, sys), Step::Next(y) if y == x as i128) {
        if let Some(ps) = positions.as_deref_mut() {
            ps.push(x);
        }
        return Walk {
            window_count: 1,
            full_length: FullLength::Finite(1),
            levels_before: 0,
            self_loop: true,
        };
    }

    let mut truncated = false;
    let mut levels_before = 0usize;
    let mut cur = x as i128;
    loop {
        match step_backward(cur, sys) {
            Step::Next(y) => {
                levels_before += 1;
                cur = y;
                if levels_before > MAX_EXTRA_STEPS {
                    truncated = true;
                    break;
                }
            }
            Step::Absent => break,
            Step::Overflow => {
                truncated = true;
                break;
            }
        }
    }

    let mut window_count = 0usize;
    let mut extra_after = 0usize;
    cur = x as i128;
    loop {
        if cur <= n {
            window_count += 1;
            if let Some(ps) = positions.as_deref_mut() {
                ps.push(cur as i64);
            }
        } else {
            extra_after += 1;
            if extra_after > MAX_EXTRA_STEPS {
                truncated = true;
                break;
            }
        }
        match step_forward(cur, sys) {
            Step::Next(y) => cur = y,
            Step::Absent => break,
            Step::Overflow => {
                truncated = true;
                break;
            }
        }
    }
    let full_length = if truncated {
        FullLength::Truncated
    } else {
        FullLength::Finite(levels_before + window_count + extra_after)
    };
    Walk {
        window_count,
        full_length,
        levels_before,
        self_loop: false,
    }
}

/// Partitions `{1, …, n}` into maximal chains.
pub fn decompose(n: u64, sys: &AffineSystem) -> ChainDecomposition {
    let n_i = n as i64;
    let mut chains = Vec::new();
    let mut census = Census::default();
    for x in 1..=n_i {
        if !is_window_start(x, n_i, sys) {
            continue;
        }
        let mut positions = Vec::new();
        let w = walk(x, n_i, sys, Some(&mut positions));
        census.record(w.full_length, w.window_count, w.self_loop);
        chains.push(Chain {
            positions,
            full_length: w.full_length,
            levels_before: w.levels_before,
            self_loop: w.self_loop,
        });
    }
    ChainDecomposition { n, chains, census }
}

/// Chain census without materializing chains. Start positions are split
/// across worker threads; each chain is counted by the range owning its
/// first window member.
pub fn empirical_census(n: u64, sys: &AffineSystem) -> Census {
    let n_i = n as i64;
    (1..n as usize + 1)
        .into_par_iter()
        .with_min_len(1 << 14)
        .fold(Census::default, |mut census, x| {
            let x = x as i64;
            if is_window_start(x, n_i, sys) {
                let w = walk(x, n_i, sys, None);
                census.record(w.full_length, w.window_count, w.self_loop);
            }
            census
        })
        .reduce(Census::default, Census::merge)
}

fn rat(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

/// Asymptotic density `P_{i,j}` of chains with `i` members in total and `j`
/// inside the window, as given by the closed form for `p/(p,q) ≥ 2`.
pub fn density_p(i: usize, j: usize, sys: &AffineSystem) -> Result<BigRational> {
    sys.require_case(CaseTag::DivisibleGeneral)?;
    if i == 0 || j == 0 || j > i {
        return Err(Error::InvalidArgument(format!("need 1 ≤ j ≤ i, got i={i}, j={j}")));
    }
    let (p, q, d, p1, q1) = (sys.p(), sys.q(), sys.d(), sys.p1(), sys.q1());
    let one = BigRational::one();
    let value = if i == 1 {
        &one - frac(1, p) - frac(1, q) + frac(1, d * p1 * q1)
    } else if j == 1 {
        frac(q1 - 1, q1) * frac(p1 - 1, p1) * (frac(1, p) - frac(1, q)) * pow_ratio(&frac(1, p1), (i - 2) as u64)
    } else {
        let level = rat((q1 - 1) * (q1 - 1)) / (rat(d) * pow_ratio(&rat(q1), (j + 1) as u64));
        level * rat(p1 - 1) / pow_ratio(&rat(p1), (i - j + 1) as u64)
    };
    Ok(value)
}

/// Asymptotic density of chains with exactly `ℓ ≥ 2` window members,
/// `(q1-1)² / (d · q1^{ℓ+1})`.
pub fn density_d(ell: usize, sys: &AffineSystem) -> Result<BigRational> {
    if sys.case_tag() == CaseTag::NonDivisible {
        return Err(Error::WrongCase {
            expected: "divisible",
            actual: sys.case_tag(),
        });
    }
    if ell < 2 {
        return Err(Error::InvalidArgument(format!("need ℓ ≥ 2, got {ell}")));
    }
    let q1 = sys.q1();
    Ok(rat((q1 - 1) * (q1 - 1)) / (rat(sys.d()) * pow_ratio(&rat(q1), (ell + 1) as u64)))
}

/// Density of chains with a single window member.
pub fn singleton_density(sys: &AffineSystem) -> BigRational {
    let one = BigRational::one();
    match sys.case_tag() {
        CaseTag::NonDivisible => one - frac(2, sys.q()),
        _ => {
            let q1 = sys.q1();
            one - frac(2 * q1 - 1, sys.d() * q1 * q1)
        }
    }
}

/// Density `1/q` of complete constraint pairs in the non-divisible case.
pub fn pair_density(sys: &AffineSystem) -> Result<BigRational> {
    sys.require_case(CaseTag::NonDivisible)?;
    Ok(frac(1, sys.q()))
}

/// `P_{i,j}` for all `1 ≤ j ≤ i ≤ max_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityTable {
    pub p: BTreeMap<(usize, usize), BigRational>,
    pub singleton_density: BigRational,
}

impl DensityTable {
    pub fn new(sys: &AffineSystem, max_i: usize) -> Result<Self> {
        sys.require_case(CaseTag::DivisibleGeneral)?;
        let mut p = BTreeMap::new();
        for i in 1..=max_i {
            for j in 1..=i {
                p.insert((i, j), density_p(i, j, sys)?);
            }
        }
        Ok(Self {
            p,
            singleton_density: singleton_density(sys),
        })
    }

    pub fn get(&self, i: usize, j: usize) -> Option<&BigRational> {
        self.p.get(&(i, j))
    }

    /// `Σ_j P_{i,j}`.
    pub fn row_mass(&self, i: usize) -> BigRational {
        (1..=i).filter_map(|j| self.get(i, j)).fold(BigRational::zero(), |acc, v| acc + v)
    }
}

/// `Σ_{i>levels} Σ_{j=1}^{i} (j + offset) · P_{i,j}` in closed form.
///
/// With `offset = 0` this is the remainder of the window-coverage identity
/// `Σ j·P_{i,j} = 1`; with `offset = 1` it bounds the Hausdorff series tail.
pub fn chain_tail_mass(sys: &AffineSystem, levels: usize, offset: i64) -> Result<BigRational> {
    sys.require_case(CaseTag::DivisibleGeneral)?;
    if levels == 0 {
        return Err(Error::InvalidArgument("tail needs at least one level".into()));
    }
    let (p, q, d, p1, q1) = (sys.p(), sys.q(), sys.d(), sys.p1(), sys.q1());
    let one = BigRational::one();
    let r = frac(1, p1);
    let x = frac(1, q1);

    // j = 1 column: P_{i,1} = C1 · r^{i-2}, i ≥ max(2, levels+1).
    let c1 = frac(q1 - 1, q1) * frac(p1 - 1, p1) * (frac(1, p) - frac(1, q));
    let first = rat(1 + offset) * c1 * pow_ratio(&r, (levels - 1) as u64) / (&one - &r);

    // Columns j ≥ 2 with P_{i,j} = δ_j (p1-1) / p1^{i-j+1}; summing over
    // i ≥ levels+1 leaves δ_j · p1^{-(levels+1-j)} for j ≤ levels and δ_j for j > levels.
    let scale = rat((q1 - 1) * (q1 - 1)) / rat(d);
    let delta = |j: usize| &scale * pow_ratio(&x, (j + 1) as u64);
    let mut partial = BigRational::zero();
    for j in 2..=levels {
        partial += rat(j as i64 + offset) * delta(j) * pow_ratio(&r, (levels + 1 - j) as u64);
    }
    // Σ_{j>J} (j+offset) x^{j+1} = Σ_{k≥J+2} (k - 1 + offset) x^k
    let jj = levels.max(1) as u64;
    let start = jj + 2;
    let geometric = pow_ratio(&x, start) / (&one - &x);
    let tail = &scale * (weighted_geometric_tail_exact(&x, start) + rat(offset - 1) * geometric);
    Ok(first + partial + tail)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::TransitionMatrix;
    use crate::numeric::ratio_to_f64;

    fn sys(p: i64, q: i64, a: i64, b: i64) -> AffineSystem {
        AffineSystem::new(p, q, a, b, TransitionMatrix::golden()).unwrap()
    }

    fn window_sets(n: u64, s: &AffineSystem) -> Vec<Vec<i64>> {
        decompose(n, s).chains.into_iter().map(|c| c.positions).collect()
    }

    #[test]
    fn g_map_examples() {
        let s = sys(2, 3, 0, 0);
        assert_eq!(g_map(4, &s), Some(6));
        assert_eq!(g_map(3, &s), None);
        assert_eq!(g_map(6, &sys(2, 4, 0, 1)), Some(13));
        assert_eq!(g_preimage(6, &s), Some(4));
        assert_eq!(g_preimage(3, &s), Some(2));
        assert_eq!(g_preimage(4, &s), None);
    }

    #[test]
    fn decompose_examples() {
        let s = sys(2, 3, 0, 0);
        let d = decompose(9, &s);
        let sets: Vec<Vec<i64>> = d.chains.iter().map(|c| c.positions.clone()).collect();
        assert_eq!(sets, vec![vec![1], vec![2, 3], vec![4, 6, 9], vec![5], vec![7], vec![8]]);
        let eight = d.chains.iter().find(|c| c.start() == 8).unwrap();
        // 8 → 12 → 18 → 27.
        assert_eq!(eight.full_length, FullLength::Finite(4));

        assert_eq!(
            window_sets(5, &sys(2, 4, 0, 1)),
            vec![vec![1], vec![2, 5], vec![3], vec![4]]
        );
        assert_eq!(window_sets(1, &s), vec![vec![1]]);
    }

    #[test]
    fn census_examples() {
        let c = empirical_census(9, &sys(2, 3, 0, 0));
        assert_eq!((c.d_count(1), c.d_count(2), c.d_count(3)), (4, 1, 1));

        let c = empirical_census(4, &sys(1, 2, 0, 0));
        assert_eq!(window_sets(4, &sys(1, 2, 0, 0)), vec![vec![1, 2, 4], vec![3]]);
        assert_eq!((c.d_count(1), c.d_count(3)), (1, 1));

        let c = empirical_census(2, &sys(2, 3, 0, 0));
        assert_eq!(c.d_count(1), 2);
    }

    #[test]
    fn decreasing_orbits_enter_from_above() {
        // (1,2;5,-3): constraints (k+5, 2k-3) for k ≥ 2, so 10 → 7 → 1.
        let s = sys(1, 2, 5, -3);
        assert_eq!(g_map(10, &s), Some(7));
        assert_eq!(g_map(7, &s), Some(1));
        let d = decompose(8, &s);
        let chain = d.chains.iter().find(|c| c.positions.contains(&1)).unwrap();
        assert_eq!(chain.positions, vec![7, 1]);
        assert_eq!(chain.levels_before, 1);
        assert_eq!(chain.full_length, FullLength::Finite(3));
    }

    #[test]
    fn fixed_points_are_self_loops() {
        // (1,2;1,0): k = 1 gives the pair (2, 2).
        let s = sys(1, 2, 1, 0);
        assert_eq!(g_map(2, &s), Some(2));
        let d = decompose(6, &s);
        let two = d.chains.iter().find(|c| c.positions == vec![2]).unwrap();
        assert!(two.self_loop);
        assert_eq!(d.census.self_loops, 1);
        assert_eq!(d.census.covered(), 6);
    }

    #[test]
    fn degenerate_chains_are_truncated() {
        let c = empirical_census(100, &sys(2, 4, 0, 0));
        assert!(c.l.keys().any(|(f, _)| *f == FullLength::Truncated));
        assert_eq!(c.covered(), 100);
    }

    #[test]
    fn density_examples() {
        let s = sys(2, 3, 0, 0);
        assert_eq!(density_p(1, 1, &s).unwrap(), frac(1, 3));
        assert_eq!(density_p(2, 1, &s).unwrap(), frac(1, 18));
        assert_eq!(density_p(2, 2, &s).unwrap(), frac(2, 27));
        assert_eq!(density_d(2, &s).unwrap(), frac(4, 27));
        assert_eq!(density_d(2, &sys(1, 2, 0, 0)).unwrap(), frac(1, 8));
        assert_eq!(singleton_density(&s), frac(4, 9));
        assert_eq!(pair_density(&sys(2, 4, 0, 1)).unwrap(), frac(1, 4));
        assert_eq!(singleton_density(&sys(2, 4, 0, 1)), frac(1, 2));
    }

    #[test]
    fn density_errors() {
        assert!(density_p(2, 1, &sys(2, 4, 0, 0)).is_err());
        assert!(density_p(2, 3, &sys(2, 3, 0, 0)).is_err());
        assert!(density_d(2, &sys(2, 4, 0, 1)).is_err());
        assert!(density_d(1, &sys(2, 3, 0, 0)).is_err());
    }

    #[test]
    fn column_sums_match_level_densities_exactly() {
        for s in [sys(2, 3, 0, 0), sys(4, 6, 1, 3), sys(3, 5, 1, 2)] {
            for j in 2..=6 {
                let levels = 30;
                let partial = (j..=levels).fold(BigRational::zero(), |acc, i| acc + density_p(i, j, &s).unwrap());
                let remainder = density_d(j, &s).unwrap() / pow_ratio(&rat(s.p1()), (levels - j + 1) as u64);
                assert_eq!(partial + remainder, density_d(j, &s).unwrap());
            }
        }
    }

    #[test]
    fn tail_mass_closes_the_coverage_identity() {
        for s in [sys(2, 3, 0, 0), sys(4, 6, 1, 3), sys(3, 5, 1, 2)] {
            for levels in [1usize, 2, 5, 12] {
                let head = (1..=levels).fold(BigRational::zero(), |acc, i| {
                    (1..=i).fold(acc, |acc, j| acc + rat(j as i64) * density_p(i, j, &s).unwrap())
                });
                let tail = chain_tail_mass(&s, levels, 0).unwrap();
                assert_eq!(head + tail, BigRational::one());
            }
        }
    }

    #[test]
    fn tail_mass_matches_brute_force_sum() {
        let s = sys(2, 3, 0, 0);
        let levels = 4;
        let mut direct = 0.0;
        for i in (levels + 1)..200 {
            for j in 1..=i {
                direct += (j + 1) as f64 * ratio_to_f64(&density_p(i, j, &s).unwrap());
            }
        }
        let closed = ratio_to_f64(&chain_tail_mass(&s, levels, 1).unwrap());
        assert!((closed - direct).abs() < 1e-12, "{closed} vs {direct}");
    }

    #[test]
    fn level_densities_converge() {
        let s = sys(2, 3, 0, 0);
        let n = 1_000_000u64;
        let c = empirical_census(n, &s);
        for ell in 2..=5 {
            let emp = c.d_count(ell) as f64 / n as f64;
            assert!((emp - ratio_to_f64(&density_d(ell, &s).unwrap())).abs() < 1e-2);
        }
        let single = c.d_count(1) as f64 / n as f64;
        assert!((single - ratio_to_f64(&singleton_density(&s))).abs() < 1e-2);
        // Single-member columns agree with the closed form.
        for i in 1..=4 {
            let emp = c.l_count(i, 1) as f64 / n as f64;
            assert!((emp - ratio_to_f64(&density_p(i, 1, &s).unwrap())).abs() < 1e-3);
        }
    }

    #[test]
    fn parallel_census_matches_sequential_decomposition() {
        for s in [sys(2, 3, 0, 0), sys(1, 2, 5, -3), sys(3, 5, 1, 2), sys(2, 4, 3, 0)] {
            let n = 50_000;
            assert_eq!(empirical_census(n, &s), decompose(n, &s).census);
        }
    }

    proptest::proptest! {
        #[test]
        fn chains_partition_the_window(p in 1i64..6, dq in 1i64..6, a in -8i64..8, b in -8i64..8, n in 1u64..400) {
            let s = sys(p, p + dq, a, b);
            let d = decompose(n, &s);
            let mut seen = vec![false; n as usize + 1];
            for chain in &d.chains {
                for w in chain.positions.windows(2) {
                    proptest::prop_assert_eq!(g_map(w[0], &s), Some(w[1]));
                }
                let first = chain.start();
                if let Some(y) = g_preimage(first, &s) {
                    proptest::prop_assert!(y > n as i64 || y == first);
                }
                if let Some(len) = chain.full_length.finite() {
                    proptest::prop_assert!(chain.window_count() <= len);
                }
                for &x in &chain.positions {
                    proptest::prop_assert!(x >= 1 && x <= n as i64);
                    proptest::prop_assert!(!seen[x as usize]);
                    seen[x as usize] = true;
                }
            }
            proptest::prop_assert!(seen[1..].iter().all(|&v| v));
            proptest::prop_assert_eq!(d.census.covered(), n);
            for (&ell, &count) in &d.census.d {
                let from_l: u64 = d.census.l.iter().filter(|((_, j), _)| *j == ell).map(|(_, c)| *c).sum();
                proptest::prop_assert_eq!(from_l, count);
            }
        }
    }
}
