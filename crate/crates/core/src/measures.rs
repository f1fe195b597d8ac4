//! Entropy-optimal chain measures, the product measure on window prefixes,
//! seeded sampling and the Billingsley local-dimension estimate.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hausdorff::{chain_potential_any, solve_t_fixed_point, ChainPotential};
use crate::lattice::{decompose, Chain, ChainDecomposition, FullLength};
use crate::matrix::TransitionMatrix;
use crate::numeric::{log_base, CompensatedSum};
use crate::system::{AffineSystem, CaseTag};

/// Residual requested from the fixed-point solver when building measures.
const MEASURE_FIXED_POINT_TOL: f64 = 1e-12;

/// A (possibly level-dependent) Markov law on the letters of a chain.
///
/// Level `k` (0-based) moves to level `k + 1` with `transitions[k]`; levels
/// past the stored table reuse its last entry, and an empty table means
/// "uniform over admissible successors".
#[derive(Debug, Clone, PartialEq)]
pub struct ChainMeasure {
    pub m: usize,
    /// Chain length the law was built for; `None` for homogeneous laws.
    pub length: Option<usize>,
    pub initial: Vec<f64>,
    pub transitions: Vec<Vec<Vec<f64>>>,
    uniform_step: Vec<Vec<f64>>,
}

impl ChainMeasure {
    fn new(a: &TransitionMatrix, length: Option<usize>, initial: Vec<f64>, transitions: Vec<Vec<Vec<f64>>>) -> Self {
        let m = a.m();
        let uniform_step = (0..m)
            .map(|x| {
                let r = a.row_sums()[x] as f64;
                (0..m).map(|y| if a.allows(x, y) { 1.0 / r } else { 0.0 }).collect()
            })
            .collect();
        Self {
            m,
            length,
            initial,
            transitions,
            uniform_step,
        }
    }

    /// Transition matrix from level `k` to `k + 1`.
    pub fn transition(&self, k: usize) -> &[Vec<f64>] {
        match self.transitions.last() {
            None => &self.uniform_step,
            Some(last) => self.transitions.get(k).unwrap_or(last),
        }
    }

    /// Distribution of the letter at level `k`.
    pub fn marginal_at(&self, k: usize) -> Vec<f64> {
        let mut dist = self.initial.clone();
        for level in 0..k {
            dist = step(&dist, self.transition(level));
        }
        dist
    }

    /// Probability that levels `offset, offset+1, …` read `word`.
    pub fn segment_probability(&self, offset: usize, word: &[u8]) -> f64 {
        if word.is_empty() {
            return 1.0;
        }
        let mut prob = self.marginal_at(offset)[word[0] as usize];
        for (k, w) in word.windows(2).enumerate() {
            prob *= self.transition(offset + k)[w[0] as usize][w[1] as usize];
        }
        prob
    }

    /// `μ([word])` for a word read from the first level.
    pub fn word_probability(&self, word: &[u8]) -> f64 {
        self.segment_probability(0, word)
    }

    /// Probabilities of all `m^len` words of length `len`, inadmissible ones included.
    pub fn cylinder_probabilities(&self, len: usize) -> BTreeMap<Vec<u8>, f64> {
        let mut out = BTreeMap::new();
        let mut word = vec![0u8; len];
        loop {
            out.insert(word.clone(), self.word_probability(&word));
            let mut pos = len;
            loop {
                if pos == 0 {
                    return out;
                }
                pos -= 1;
                word[pos] += 1;
                if (word[pos] as usize) < self.m {
                    break;
                }
                word[pos] = 0;
            }
        }
    }

    /// Block entropies `H(α_1), …, H(α_len)` in base `m`, where `α_j` is the
    /// partition into cylinders of length `j`.
    pub fn block_entropies(&self, len: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(len);
        let mut dist = self.initial.clone();
        let mut h = entropy(&dist, self.m);
        for level in 0..len {
            out.push(h);
            let t = self.transition(level);
            h += dist.iter().zip(t).map(|(&p, row)| p * entropy(row, self.m)).sum::<f64>();
            dist = step(&dist, t);
        }
        out
    }

    /// Draws the letters at levels `offset .. offset + len`.
    pub fn sample_segment<R: Rng + ?Sized>(&self, offset: usize, len: usize, rng: &mut R) -> Vec<u8> {
        let mut out = Vec::with_capacity(len);
        if len == 0 {
            return out;
        }
        let mut cur = draw(&self.marginal_at(offset), rng);
        out.push(cur as u8);
        for k in 1..len {
            cur = draw(&self.transition(offset + k - 1)[cur], rng);
            out.push(cur as u8);
        }
        out
    }
}

fn step(dist: &[f64], t: &[Vec<f64>]) -> Vec<f64> {
    let m = dist.len();
    let mut next = vec![0.0; m];
    for (x, &p) in dist.iter().enumerate() {
        for y in 0..m {
            next[y] += p * t[x][y];
        }
    }
    next
}

fn entropy(dist: &[f64], m: usize) -> f64 {
    -dist.iter().filter(|&&p| p > 0.0).map(|&p| p * log_base(p, m)).sum::<f64>()
}

fn draw<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (x, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = x;
            if u < acc {
                return x;
            }
        }
    }
    last
}

/// Uniform law on single letters.
pub fn build_mu1(sys: &AffineSystem) -> ChainMeasure {
    let m = sys.m();
    ChainMeasure::new(sys.matrix(), Some(1), vec![1.0 / m as f64; m], Vec::new())
}

/// Pair law `μ₂([i]) ∝ a_i^{p/q}`, `μ₂([ij]) = μ₂([i]) a_{i,j} / a_i`.
pub fn build_mu2_nondivisible(sys: &AffineSystem) -> Result<ChainMeasure> {
    sys.require_case(CaseTag::NonDivisible)?;
    let a = sys.matrix();
    let ratio = sys.p() as f64 / sys.q() as f64;
    let weights: Vec<f64> = a.row_sums().iter().map(|&r| (r as f64).powf(ratio)).collect();
    let z: f64 = weights.iter().sum();
    let initial = weights.iter().map(|w| w / z).collect();
    let mut measure = ChainMeasure::new(a, Some(2), initial, Vec::new());
    measure.transitions = vec![measure.uniform_step.clone()];
    Ok(measure)
}

/// Optimal law on chains of full length `i`, read off the backward program:
/// `π₁(x) = u₁(x)^{e₁} / t_{φ;i}` and
/// `π(y | x at level k) = a_{x,y} u_{k+1}(y)^{e_{k+1}} / u_k(x)`.
pub fn build_mu_i(i: usize, sys: &AffineSystem) -> Result<ChainMeasure> {
    sys.require_case(CaseTag::DivisibleGeneral)?;
    if i == 0 {
        return Err(Error::InvalidArgument("chain length must be at least 1".into()));
    }
    if i == 1 {
        return Ok(build_mu1(sys));
    }
    Ok(measure_from_potential(&chain_potential_any(i, sys)?, sys.matrix()))
}

pub fn measure_from_potential(cp: &ChainPotential, a: &TransitionMatrix) -> ChainMeasure {
    let m = a.m();
    let initial = cp.u[0].iter().map(|v| v.powf(cp.exponents[0]) / cp.t_phi).collect();
    let transitions = (0..cp.i - 1)
        .map(|k| {
            let e = cp.exponents[k + 1];
            (0..m)
                .map(|x| {
                    (0..m)
                        .map(|y| if a.allows(x, y) { cp.u[k + 1][y].powf(e) / cp.u[k][x] } else { 0.0 })
                        .collect()
                })
                .collect()
        })
        .collect();
    ChainMeasure::new(a, Some(cp.i), initial, transitions)
}

/// Homogeneous Markov law `π(j) = t_j / Σ t`, `π(k | j) ∝ a_{j,k} t_k`
/// for the fixed point `t_j^q = Σ_k a_{j,k} t_k`.
pub fn build_classical_measure(a: &TransitionMatrix, q: i64) -> Result<ChainMeasure> {
    let fp = solve_t_fixed_point(a, q, MEASURE_FIXED_POINT_TOL)?;
    let m = a.m();
    let total = fp.sum();
    let initial = fp.t.iter().map(|t| t / total).collect();
    let step = (0..m)
        .map(|j| {
            let z: f64 = (0..m).filter(|&k| a.allows(j, k)).map(|k| fp.t[k]).sum();
            (0..m).map(|k| if a.allows(j, k) { fp.t[k] / z } else { 0.0 }).collect()
        })
        .collect();
    Ok(ChainMeasure::new(a, None, initial, vec![step]))
}

/// Uniform law on letters `x` with `a_{x,x} = 1`, for fixed-point chains.
fn self_loop_measure(a: &TransitionMatrix) -> Result<ChainMeasure> {
    let m = a.m();
    let tr = a.trace();
    if tr == 0 {
        return Err(Error::InvalidArgument(
            "a position constrained against itself needs a letter with a_{x,x} = 1".into(),
        ));
    }
    let initial = (0..m).map(|x| if a.allows(x, x) { 1.0 / tr as f64 } else { 0.0 }).collect();
    Ok(ChainMeasure::new(a, Some(1), initial, Vec::new()))
}

/// Which law a chain is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum LawKey {
    Uniform,
    SelfLoop,
    Pair,
    Markov,
    Length(usize),
}

/// The product measure `ℙ` on words over `{1, …, n}`: each window chain
/// carries its law restricted to the visible levels.
#[derive(Debug, Clone)]
pub struct PrefixMeasure {
    pub decomposition: ChainDecomposition,
    m: usize,
    laws: BTreeMap<LawKey, ChainMeasure>,
    keys: Vec<LawKey>,
}

fn law_key(chain: &Chain, sys: &AffineSystem) -> LawKey {
    if chain.self_loop {
        return LawKey::SelfLoop;
    }
    match sys.case_tag() {
        CaseTag::NonDivisible => match chain.full_length {
            FullLength::Finite(1) => LawKey::Uniform,
            _ => LawKey::Pair,
        },
        CaseTag::Classical => LawKey::Markov,
        CaseTag::DivisibleDegenerate => match chain.full_length {
            FullLength::Finite(1) => LawKey::Uniform,
            _ => LawKey::Markov,
        },
        CaseTag::DivisibleGeneral => match chain.full_length {
            FullLength::Finite(i) => LawKey::Length(i),
            FullLength::Truncated => LawKey::Length(chain.levels_before + chain.window_count()),
        },
    }
}

impl PrefixMeasure {
    pub fn new(sys: &AffineSystem, n: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("window length must be at least 1".into()));
        }
        if !sys.matrix().is_irreducible() {
            return Err(Error::Reducible);
        }
        let decomposition = decompose(n, sys);
        let keys: Vec<LawKey> = decomposition.chains.iter().map(|c| law_key(c, sys)).collect();
        let mut laws = BTreeMap::new();
        for &key in &keys {
            if laws.contains_key(&key) {
                continue;
            }
            let law = match key {
                LawKey::Uniform => build_mu1(sys),
                LawKey::SelfLoop => self_loop_measure(sys.matrix())?,
                LawKey::Pair => build_mu2_nondivisible(sys)?,
                LawKey::Markov => build_classical_measure(sys.matrix(), sys.q1())?,
                LawKey::Length(i) => build_mu_i(i, sys)?,
            };
            laws.insert(key, law);
        }
        Ok(Self {
            decomposition,
            m: sys.m(),
            laws,
            keys,
        })
    }

    pub fn n(&self) -> u64 {
        self.decomposition.n
    }

    fn law(&self, idx: usize) -> &ChainMeasure {
        &self.laws[&self.keys[idx]]
    }

    /// `-log_m ℙ([x_1 … x_n])`; infinite for inadmissible words.
    pub fn neg_log_prob(&self, word: &[u8]) -> Result<f64> {
        if word.len() as u64 != self.n() {
            return Err(Error::InvalidArgument(format!(
                "word has length {}, measure is on {} positions",
                word.len(),
                self.n()
            )));
        }
        if word.iter().any(|&x| x as usize >= self.m) {
            return Err(Error::InvalidArgument(format!("letters must lie in 0..{}", self.m)));
        }
        let terms: Vec<f64> = self
            .decomposition
            .chains
            .par_iter()
            .enumerate()
            .map(|(idx, chain)| {
                let restricted: Vec<u8> = chain.positions.iter().map(|&x| word[x as usize - 1]).collect();
                let prob = self.law(idx).segment_probability(chain.levels_before, &restricted);
                -log_base(prob, self.m)
            })
            .collect();
        if terms.iter().any(|t| t.is_infinite()) {
            return Ok(f64::INFINITY);
        }
        let mut acc = CompensatedSum::new();
        acc.extend(terms);
        Ok(acc.value())
    }

    /// Draws a word; each chain uses its own generator derived from `seed`
    /// and the chain's first window position.
    pub fn sample(&self, seed: u64) -> Vec<u8> {
        let pieces: Vec<Vec<u8>> = self
            .decomposition
            .chains
            .par_iter()
            .enumerate()
            .map(|(idx, chain)| {
                let mut rng = chain_rng(seed, chain.start());
                self.law(idx).sample_segment(chain.levels_before, chain.window_count(), &mut rng)
            })
            .collect();
        let mut word = vec![0u8; self.n() as usize];
        for (chain, letters) in self.decomposition.chains.iter().zip(pieces) {
            for (&x, letter) in chain.positions.iter().zip(letters) {
                word[x as usize - 1] = letter;
            }
        }
        word
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn chain_rng(seed: u64, start: i64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(start as u64)))
}

/// Random word of length `n` drawn from `ℙ`; deterministic in `(seed, sys, n)`.
pub fn sample_prefix(sys: &AffineSystem, n: u64, seed: u64) -> Result<Vec<u8>> {
    Ok(PrefixMeasure::new(sys, n)?.sample(seed))
}

/// Mean and standard error of `-log_m ℙ(prefix) / n` over `samples` draws.
pub fn empirical_local_dimension(sys: &AffineSystem, n: u64, seed: u64, samples: usize) -> Result<(f64, f64)> {
    if samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let measure = PrefixMeasure::new(sys, n)?;
    let values = (0..samples as u64)
        .map(|s| {
            let word = measure.sample(splitmix64(seed.wrapping_add(s)));
            Ok(measure.neg_log_prob(&word)? / n as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let stderr = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    } else {
        0.0
    };
    Ok((mean, stderr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hausdorff::{chain_potential, dim_h};
    use crate::lattice::density_p;
    use crate::numeric::ratio_to_f64;
    use rand::SeedableRng;

    fn sys(p: i64, q: i64, a: i64, b: i64, mat: TransitionMatrix) -> AffineSystem {
        AffineSystem::new(p, q, a, b, mat).unwrap()
    }

    fn golden(p: i64, q: i64, a: i64, b: i64) -> AffineSystem {
        sys(p, q, a, b, TransitionMatrix::golden())
    }

    fn assert_consistent(mu: &ChainMeasure, depth: usize, a: &TransitionMatrix) {
        let mut prev: Option<BTreeMap<Vec<u8>, f64>> = None;
        for len in 1..=depth {
            let probs = mu.cylinder_probabilities(len);
            if len == 1 {
                assert!((probs.values().sum::<f64>() - 1.0).abs() < 1e-12);
            }
            for (w, &p) in &probs {
                assert!((0.0..=1.0 + 1e-12).contains(&p));
                let admissible = w.windows(2).all(|x| a.allows(x[0] as usize, x[1] as usize));
                assert_eq!(p > 0.0, admissible, "{w:?}");
            }
            if let Some(prev) = prev {
                for (w, &p) in &prev {
                    let children: f64 = (0..a.m() as u8)
                        .map(|l| {
                            let mut c = w.clone();
                            c.push(l);
                            probs[&c]
                        })
                        .sum();
                    assert!((children - p).abs() < 1e-12);
                }
            }
            prev = Some(probs);
        }
    }

    #[test]
    fn mu1_examples() {
        let mu = build_mu1(&golden(2, 3, 0, 0));
        assert_eq!(mu.initial, vec![0.5, 0.5]);
        let mu3 = build_mu1(&sys(2, 3, 0, 0, TransitionMatrix::full(3)));
        assert!(mu3.initial.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        assert!((mu3.block_entropies(1)[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mu2_examples() {
        let mu = build_mu2_nondivisible(&golden(2, 4, 0, 1)).unwrap();
        let sq = 2f64.sqrt();
        assert!((mu.initial[0] - sq / (1.0 + sq)).abs() < 1e-15);
        assert!((mu.word_probability(&[0, 1]) - 0.292893).abs() < 1e-6);
        assert_eq!(mu.word_probability(&[0, 0]), mu.word_probability(&[0, 1]));
        assert_eq!(mu.word_probability(&[1, 1]), 0.0);
        assert_consistent(&mu, 2, &TransitionMatrix::golden());
        let full = build_mu2_nondivisible(&sys(2, 4, 0, 1, TransitionMatrix::full(2))).unwrap();
        for w in [[0, 0], [0, 1], [1, 0], [1, 1]] {
            assert!((full.word_probability(&w) - 0.25).abs() < 1e-15);
        }
        assert!(build_mu2_nondivisible(&golden(2, 3, 0, 0)).is_err());
    }

    #[test]
    fn mu_i_examples() {
        let s = golden(2, 3, 0, 0);
        assert_eq!(build_mu_i(1, &s).unwrap().initial, vec![0.5, 0.5]);
        let mu2 = build_mu_i(2, &s).unwrap();
        let x = 2f64.powf(4.0 / 7.0);
        assert!((mu2.initial[0] - x / (x + 1.0)).abs() < 1e-14);
        assert!((mu2.initial[0] - 0.597746).abs() < 1e-6);
        assert_eq!(mu2.word_probability(&[1, 1]), 0.0);
        assert!(build_mu_i(2, &golden(2, 4, 0, 1)).is_err());
    }

    #[test]
    fn mu_i_marginal_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..8 {
            let a = TransitionMatrix::random_irreducible(2 + trial % 2, &mut rng);
            let s = sys(2, 3, 0, 0, a.clone());
            for i in 1..=4 {
                assert_consistent(&build_mu_i(i, &s).unwrap(), i, &a);
            }
        }
    }

    #[test]
    fn entropy_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..10 {
            let a = TransitionMatrix::random_irreducible(2 + trial % 2, &mut rng);
            for (p, q, aa, b) in [(2, 3, 0, 0), (4, 6, 1, 3)] {
                let s = sys(p, q, aa, b, a.clone());
                for i in 2..=4 {
                    let cp = chain_potential(i, &s).unwrap();
                    let mu = measure_from_potential(&cp, &a);
                    let h = mu.block_entropies(i);
                    let lhs: f64 = (1..=i).map(|j| ratio_to_f64(&density_p(i, j, &s).unwrap()) * h[j - 1]).sum();
                    assert!((lhs - cp.contribution(a.m())).abs() < 1e-10, "i={i}: {lhs} vs {}", cp.contribution(a.m()));
                }
            }
        }
    }

    #[test]
    fn block_entropies_match_enumeration() {
        let mu = build_mu_i(4, &golden(2, 3, 0, 0)).unwrap();
        let h = mu.block_entropies(4);
        for len in 1..=4 {
            let direct: f64 = mu.cylinder_probabilities(len).values().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
            assert!((direct - h[len - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn classical_measure_is_stochastic() {
        let mu = build_classical_measure(&TransitionMatrix::golden(), 2).unwrap();
        assert!((mu.initial.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        for row in mu.transition(0) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert_consistent(&mu, 5, &TransitionMatrix::golden());
        let swap = TransitionMatrix::from_rows(&[vec![0, 1], vec![1, 0]]).unwrap();
        assert!(build_classical_measure(&swap, 2).is_err());
    }

    #[test]
    fn samples_are_admissible_and_deterministic() {
        let a = TransitionMatrix::golden();
        for (p, q, aa, b) in [(1, 2, 0, 0), (2, 3, 0, 0), (2, 4, 0, 1), (2, 4, 0, 0), (1, 2, 5, -3), (4, 6, 1, 3)] {
            let s = sys(p, q, aa, b, a.clone());
            let w1 = sample_prefix(&s, 500, 42).unwrap();
            let w2 = sample_prefix(&s, 500, 42).unwrap();
            assert_eq!(w1, w2);
            for k in s.k_min()..=500 {
                let (x, y) = (p * k + aa, q * k + b);
                if x <= 500 && y <= 500 {
                    assert!(a.allows(w1[x as usize - 1] as usize, w1[y as usize - 1] as usize));
                }
            }
            let pm = PrefixMeasure::new(&s, 500).unwrap();
            assert!(pm.neg_log_prob(&w1).unwrap().is_finite());
        }
        assert_ne!(sample_prefix(&golden(1, 2, 0, 0), 200, 1).unwrap(), sample_prefix(&golden(1, 2, 0, 0), 200, 2).unwrap());
    }

    #[test]
    fn inadmissible_prefix_has_infinite_cost() {
        let pm = PrefixMeasure::new(&golden(1, 2, 0, 0), 4).unwrap();
        assert_eq!(pm.neg_log_prob(&[1, 1, 0, 0]).unwrap(), f64::INFINITY);
        assert!(pm.neg_log_prob(&[0, 0]).is_err());
    }

    #[test]
    fn full_matrix_local_dimension_is_one() {
        for (p, q, a, b) in [(1, 2, 0, 0), (2, 3, 0, 0), (2, 4, 0, 1), (2, 4, 0, 0)] {
            let (mean, stderr) = empirical_local_dimension(&sys(p, q, a, b, TransitionMatrix::full(2)), 2000, 5, 3).unwrap();
            assert!((mean - 1.0).abs() < 1e-12, "({p},{q};{a},{b}): {mean}");
            assert!(stderr < 1e-12);
        }
    }

    #[test]
    fn local_dimension_near_dim_h() {
        for (p, q, a, b) in [(1, 2, 0, 0), (2, 4, 0, 1)] {
            let s = golden(p, q, a, b);
            let (mean, _) = empirical_local_dimension(&s, 20_000, 9, 5).unwrap();
            let target = dim_h(&s, 1e-10).unwrap().value;
            assert!((mean - target).abs() < 0.03, "({p},{q};{a},{b}): {mean} vs {target}");
        }
    }
}
