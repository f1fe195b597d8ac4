//! Independent ground truth: exhaustive enumeration of admissible words and
//! direct numerical maximization of weighted chain entropies.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_rational::BigRational;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::TransitionMatrix;
use crate::numeric::{check_tolerance, ratio_to_f64};
use crate::system::AffineSystem;

/// Enumeration is refused when `m^n` exceeds `2^ENUMERATION_GUARD_BITS`.
pub const ENUMERATION_GUARD_BITS: u32 = 29;

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationResult {
    pub n: usize,
    pub count: BigUint,
    pub elapsed: Duration,
}

/// Forbids the letters read at `positions` (1-based) from forming any word
/// in `forbidden`. Ignored unless every position lies in the window.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtraConstraint {
    pub positions: Vec<i64>,
    pub forbidden: Arc<HashSet<Vec<u8>>>,
}

enum Check {
    /// `A(w[earlier], w[pos])`.
    After(usize),
    /// `A(w[pos], w[later])` where `later < pos` in reading order.
    Before(usize),
    SelfLoop,
    Extra(usize),
}

struct Plan<'a> {
    n: usize,
    m: usize,
    a: &'a TransitionMatrix,
    checks: Vec<Vec<Check>>,
    extras: Vec<(Vec<usize>, &'a HashSet<Vec<u8>>)>,
}

impl<'a> Plan<'a> {
    fn new(n: usize, sys: &'a AffineSystem, extra: &'a [ExtraConstraint]) -> Self {
        let mut checks: Vec<Vec<Check>> = (0..n).map(|_| Vec::new()).collect();
        let (p, q, a, b) = (sys.p(), sys.q(), sys.a(), sys.b());
        let n_i = n as i64;
        let mut k = sys.k_min();
        loop {
            let (x, y) = (p * k + a, q * k + b);
            if x > n_i && y > n_i && x.min(y) > n_i {
                // Both coordinates are increasing in k.
                break;
            }
            if (1..=n_i).contains(&x) && (1..=n_i).contains(&y) {
                let (xi, yi) = (x as usize - 1, y as usize - 1);
                if xi == yi {
                    checks[xi].push(Check::SelfLoop);
                } else if xi < yi {
                    checks[yi].push(Check::After(xi));
                } else {
                    checks[xi].push(Check::Before(yi));
                }
            }
            k += 1;
        }
        let mut extras = Vec::new();
        for c in extra {
            if c.positions.is_empty() || c.positions.iter().any(|&x| x < 1 || x > n_i) {
                continue;
            }
            let idx: Vec<usize> = c.positions.iter().map(|&x| x as usize - 1).collect();
            let last = *idx.iter().max().expect("nonempty");
            checks[last].push(Check::Extra(extras.len()));
            extras.push((idx, c.forbidden.as_ref()));
        }
        Self {
            n,
            m: sys.m(),
            a: sys.matrix(),
            checks,
            extras,
        }
    }

    fn admits(&self, pos: usize, letter: u8, word: &mut [u8]) -> bool {
        word[pos] = letter;
        let l = letter as usize;
        self.checks[pos].iter().all(|check| match *check {
            Check::After(x) => self.a.allows(word[x] as usize, l),
            Check::Before(y) => self.a.allows(l, word[y] as usize),
            Check::SelfLoop => self.a.allows(l, l),
            Check::Extra(i) => {
                let (idx, forbidden) = &self.extras[i];
                let read: Vec<u8> = idx.iter().map(|&x| word[x]).collect();
                !forbidden.contains(&read)
            }
        })
    }

    fn count_from(&self, pos: usize, word: &mut [u8]) -> u64 {
        if pos == self.n {
            return 1;
        }
        let mut total = 0;
        for letter in 0..self.m as u8 {
            if self.admits(pos, letter, word) {
                total += if pos + 1 == self.n { 1 } else { self.count_from(pos + 1, word) };
            }
        }
        total
    }

    /// All admissible prefixes of length `depth`.
    fn prefixes(&self, depth: usize) -> Vec<Vec<u8>> {
        let mut out = vec![Vec::new()];
        for pos in 0..depth {
            let mut next = Vec::new();
            for prefix in &out {
                let mut word = vec![0u8; self.n];
                word[..pos].copy_from_slice(prefix);
                for letter in 0..self.m as u8 {
                    if self.admits(pos, letter, &mut word) {
                        next.push(word[..=pos].to_vec());
                    }
                }
            }
            out = next;
        }
        out
    }
}

/// Counts words of length `n` satisfying every pairwise constraint inside the
/// window and every extra constraint fully inside it, by pruned depth-first
/// search split across worker threads.
pub fn brute_force_count(n: usize, sys: &AffineSystem, extra: &[ExtraConstraint]) -> Result<EnumerationResult> {
    let m = sys.m();
    if (n as f64) * (m as f64).log2() > ENUMERATION_GUARD_BITS as f64 {
        return Err(Error::WindowTooLarge {
            m,
            n,
            guard_bits: ENUMERATION_GUARD_BITS,
        });
    }
    let started = Instant::now();
    let plan = Plan::new(n, sys, extra);
    let mut depth = 0;
    while depth < n && m.pow(depth as u32) < 256 {
        depth += 1;
    }
    let count: u64 = if depth == n {
        plan.prefixes(n).len() as u64
    } else {
        plan.prefixes(depth)
            .into_par_iter()
            .map(|prefix| {
                let mut word = vec![0u8; n];
                word[..depth].copy_from_slice(&prefix);
                plan.count_from(depth, &mut word)
            })
            .sum()
    };
    Ok(EnumerationResult {
        n,
        count: BigUint::from(count),
        elapsed: started.elapsed(),
    })
}

/// Result of [`maximize_chain_entropy`].
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMaximum {
    /// `max_μ Σ_j P_{i,j} H^μ(α_j)`.
    pub optimum: f64,
    pub argmax: BTreeMap<Vec<u8>, f64>,
    /// Sup-norm of the unit-step gradient mapping at the returned point.
    pub stationarity: f64,
    pub iterations: usize,
}

const MAX_ASCENT_ITERATIONS: usize = 200_000;
const ARMIJO: f64 = 1e-4;
/// Accepted steps without a measurable increase before giving up; the
/// objective is only resolved to about `stationarity²`.
const MAX_STALLED_STEPS: usize = 200;

struct EntropyObjective {
    words: Vec<Vec<u8>>,
    /// `prefix_ids[j][w]`: index of the length-`j+1` prefix of word `w`.
    prefix_ids: Vec<Vec<usize>>,
    prefix_counts: Vec<usize>,
    weights: Vec<f64>,
    ln_m: f64,
}

impl EntropyObjective {
    fn marginals(&self, mu: &[f64]) -> Vec<Vec<f64>> {
        self.prefix_ids
            .iter()
            .zip(&self.prefix_counts)
            .map(|(ids, &count)| {
                let mut marg = vec![0.0; count];
                for (w, &id) in ids.iter().enumerate() {
                    marg[id] += mu[w];
                }
                marg
            })
            .collect()
    }

    fn value(&self, mu: &[f64]) -> f64 {
        self.marginals(mu)
            .iter()
            .zip(&self.weights)
            .map(|(marg, w)| w * marg.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum::<f64>())
            .sum::<f64>()
            / self.ln_m
    }

    fn gradient(&self, mu: &[f64]) -> Vec<f64> {
        let margs = self.marginals(mu);
        (0..self.words.len())
            .map(|w| {
                self.prefix_ids
                    .iter()
                    .zip(&margs)
                    .zip(&self.weights)
                    .map(|((ids, marg), weight)| -weight * (marg[ids[w]].max(1e-300).ln() + 1.0))
                    .sum::<f64>()
                    / self.ln_m
            })
            .collect()
    }
}

/// Euclidean projection onto the probability simplex.
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &x) in sorted.iter().enumerate() {
        cumulative += x;
        let candidate = (cumulative - 1.0) / (k + 1) as f64;
        if x - candidate > 0.0 {
            theta = candidate;
        }
    }
    v.iter().map(|&x| (x - theta).max(0.0)).collect()
}

fn ascent_point(mu: &[f64], grad: &[f64], step: f64) -> Vec<f64> {
    let moved: Vec<f64> = mu.iter().zip(grad).map(|(x, g)| x + step * g).collect();
    project_simplex(&moved)
}

fn sup_distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Maximizes `F(μ) = Σ_j P_{i,j} H^μ(α_j)` over laws on admissible words of
/// length `i`, by projected gradient ascent with backtracking from the
/// uniform law. The objective is optimized after division by `S_1 = Σ_j P_{i,j}`.
pub fn maximize_chain_entropy(i: usize, p_row: &[BigRational], a: &TransitionMatrix, tol: f64) -> Result<EntropyMaximum> {
    if i == 0 || p_row.len() != i {
        return Err(Error::InvalidArgument(format!(
            "need one weight per level: i={i}, got {} weights",
            p_row.len()
        )));
    }
    check_tolerance(tol)?;
    let raw: Vec<f64> = p_row.iter().map(ratio_to_f64).collect();
    if raw.iter().any(|&w| w <= 0.0) {
        return Err(Error::InvalidArgument("level weights must be positive".into()));
    }
    let m = a.m();
    let s1: f64 = raw.iter().sum();

    let mut words: Vec<Vec<u8>> = vec![Vec::new()];
    for _ in 0..i {
        words = words
            .into_iter()
            .flat_map(|w| {
                (0..m as u8).filter_map(move |l| {
                    if w.last().is_some_and(|&prev| !a.allows(prev as usize, l as usize)) {
                        None
                    } else {
                        let mut next = w.clone();
                        next.push(l);
                        Some(next)
                    }
                })
            })
            .collect();
    }
    let mut prefix_ids = Vec::with_capacity(i);
    let mut prefix_counts = Vec::with_capacity(i);
    for j in 1..=i {
        let mut index: BTreeMap<&[u8], usize> = BTreeMap::new();
        let ids = words
            .iter()
            .map(|w| {
                let next = index.len();
                *index.entry(&w[..j]).or_insert(next)
            })
            .collect();
        prefix_counts.push(index.len());
        prefix_ids.push(ids);
    }
    let objective = EntropyObjective {
        words,
        prefix_ids,
        prefix_counts,
        weights: raw.iter().map(|w| w / s1).collect(),
        ln_m: (m as f64).ln(),
    };

    let count = objective.words.len();
    let mut mu = vec![1.0 / count as f64; count];
    let mut value = objective.value(&mu);
    let mut step = 1.0;
    let mut stalled = 0;
    for iteration in 0..MAX_ASCENT_ITERATIONS {
        let grad = objective.gradient(&mu);
        let stationarity = sup_distance(&ascent_point(&mu, &grad, 1.0), &mu);
        if stationarity <= tol {
            let argmax = objective.words.iter().cloned().zip(mu.iter().copied()).collect();
            return Ok(EntropyMaximum {
                optimum: s1 * value,
                argmax,
                stationarity,
                iterations: iteration,
            });
        }
        step *= 2.0;
        loop {
            let candidate = ascent_point(&mu, &grad, step);
            let predicted: f64 = candidate.iter().zip(&mu).zip(&grad).map(|((c, x), g)| g * (c - x)).sum();
            let candidate_value = objective.value(&candidate);
            if candidate_value >= value + ARMIJO * predicted {
                stalled = if candidate_value > value { 0 } else { stalled + 1 };
                if stalled > MAX_STALLED_STEPS {
                    return Err(Error::Numerical(format!(
                        "entropy ascent stalled at stationarity {stationarity:e} above {tol:e}"
                    )));
                }
                mu = candidate;
                value = candidate_value;
                break;
            }
            step *= 0.5;
            if step < 1e-18 {
                return Err(Error::Numerical("entropy ascent line search collapsed".into()));
            }
        }
    }
    Err(Error::Numerical(format!(
        "entropy ascent did not reach stationarity {tol} in {MAX_ASCENT_ITERATIONS} iterations"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hausdorff::chain_potential;
    use crate::lattice::density_p;
    use crate::minkowski::pattern_count_exact;
    use crate::numeric::frac;

    fn golden(p: i64, q: i64, a: i64, b: i64) -> AffineSystem {
        AffineSystem::new(p, q, a, b, TransitionMatrix::golden()).unwrap()
    }

    fn count(n: usize, sys: &AffineSystem) -> u64 {
        brute_force_count(n, sys, &[]).unwrap().count.try_into().unwrap()
    }

    #[test]
    fn enumeration_examples() {
        assert_eq!(count(3, &golden(1, 2, 0, 0)), 6);
        assert_eq!(count(2, &golden(2, 3, 0, 0)), 4);
        assert_eq!(count(5, &golden(2, 4, 0, 1)), 24);
        assert_eq!(count(1, &golden(1, 2, 0, 0)), 2);
    }

    #[test]
    fn enumeration_matches_chain_product() {
        for (p, q, a, b) in [(1, 2, 0, 0), (2, 3, 0, 0), (1, 2, 5, -3), (1, 3, 2, 0), (3, 5, 1, 2)] {
            let s = golden(p, q, a, b);
            for n in 1..=14 {
                assert_eq!(
                    brute_force_count(n, &s, &[]).unwrap().count,
                    pattern_count_exact(n as u64, &s).unwrap(),
                    "({p},{q};{a},{b}) n={n}"
                );
            }
        }
    }

    #[test]
    fn enumeration_guard() {
        let s = AffineSystem::new(1, 2, 0, 0, TransitionMatrix::full(3)).unwrap();
        assert!(matches!(brute_force_count(19, &s, &[]), Err(Error::WindowTooLarge { .. })));
        assert!(brute_force_count(18, &golden(1, 2, 0, 0), &[]).is_ok());
    }

    #[test]
    fn automorphism_invariance() {
        let a = TransitionMatrix::from_rows(&[vec![1, 1, 0], vec![1, 0, 1], vec![0, 1, 1]]).unwrap();
        let swapped = a.permuted(&[2, 1, 0]);
        assert_eq!(a, swapped);
        let s = AffineSystem::new(2, 3, 0, 0, a).unwrap();
        let t = AffineSystem::new(2, 3, 0, 0, swapped).unwrap();
        for n in [6, 9, 11] {
            assert_eq!(count(n, &s), count(n, &t));
        }
    }

    #[test]
    fn extra_constraints_prune() {
        let s = golden(1, 2, 0, 0);
        let forbid_all: HashSet<Vec<u8>> = [vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]].into_iter().collect();
        let extra = vec![ExtraConstraint {
            positions: vec![1, 3],
            forbidden: Arc::new(forbid_all),
        }];
        assert_eq!(brute_force_count(4, &s, &extra).unwrap().count, BigUint::from(0u32));
        let outside = vec![ExtraConstraint {
            positions: vec![1, 9],
            forbidden: extra[0].forbidden.clone(),
        }];
        assert_eq!(brute_force_count(4, &s, &outside).unwrap().count, BigUint::from(count(4, &s)));
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.5, 0.5, 0.5]);
        assert!(p.iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));
        let p = project_simplex(&[2.0, 0.0]);
        assert_eq!(p, vec![1.0, 0.0]);
        let p = project_simplex(&[0.3, -0.2, 0.9]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(p.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn entropy_single_level_is_uniform() {
        let r = maximize_chain_entropy(1, &[frac(1, 3)], &TransitionMatrix::golden(), 1e-10).unwrap();
        assert!((r.optimum - 1.0 / 3.0).abs() < 1e-10);
        assert!(r.argmax.values().all(|&p| (p - 0.5).abs() < 1e-8));
    }

    #[test]
    fn entropy_full_matrix() {
        let p_row = vec![frac(1, 5), frac(1, 7), frac(1, 11)];
        let r = maximize_chain_entropy(3, &p_row, &TransitionMatrix::full(2), 1e-10).unwrap();
        let expected = 1.0 / 5.0 + 2.0 / 7.0 + 3.0 / 11.0;
        assert!((r.optimum - expected).abs() < 1e-9);
    }

    #[test]
    fn entropy_matches_chain_potential() {
        let s = golden(2, 3, 0, 0);
        for i in 2..=4 {
            let p_row: Vec<_> = (1..=i).map(|j| density_p(i, j, &s).unwrap()).collect();
            let r = maximize_chain_entropy(i, &p_row, s.matrix(), 1e-7).unwrap();
            let cp = chain_potential(i, &s).unwrap();
            assert!((r.optimum - cp.contribution(2)).abs() < 1e-7, "i={i}: {} vs {}", r.optimum, cp.contribution(2));
        }
        let p_row: Vec<_> = (1..=2).map(|j| density_p(2, j, &s).unwrap()).collect();
        let r = maximize_chain_entropy(2, &p_row, s.matrix(), 1e-7).unwrap();
        assert!((r.optimum - 0.170310).abs() < 1e-6);
        assert!(maximize_chain_entropy(2, &p_row[..1], s.matrix(), 1e-7).is_err());
        assert!(matches!(maximize_chain_entropy(4, &(1..=4).map(|j| density_p(4, j, &s).unwrap()).collect::<Vec<_>>(), s.matrix(), 1e-12), Err(Error::Numerical(_))));
    }
}
