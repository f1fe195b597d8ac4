//! Binary transition matrices over the alphabet `{0, …, m-1}`.

use std::fmt;
use std::sync::{Arc, RwLock};

use num_bigint::BigUint;
use num_traits::{One, Zero};
use rand::Rng;

use crate::error::{Error, Result};
use crate::numeric::big_log_base;

/// An `m × m` 0/1 matrix `A` with `A(i, j) = 1` when letter `j` may follow `i`.
///
/// Irreducibility and primitivity are computed once at construction. Power
/// sums `|A^k|` are memoized behind a lock; a reader sees either no entry or
/// a complete one.
#[derive(Clone)]
pub struct TransitionMatrix {
    m: usize,
    entries: Vec<u8>,
    row_sums: Vec<u32>,
    irreducible: bool,
    primitive: bool,
    power_sums: Arc<PowerSumCache>,
}

impl PartialEq for TransitionMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.m == other.m && self.entries == other.entries
    }
}

impl Eq for TransitionMatrix {}

impl fmt::Debug for TransitionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TransitionMatrix")
            .field("m", &self.m)
            .field("rows", &self.rows())
            .field("irreducible", &self.irreducible)
            .field("primitive", &self.primitive)
            .finish()
    }
}

impl TransitionMatrix {
    /// Builds a matrix from its rows. Entries must be 0 or 1 and the matrix
    /// square with `m ≥ 2`.
    pub fn from_rows<T: Copy + Into<i64>>(rows: &[Vec<T>]) -> Result<Self> {
        let m = rows.len();
        if m < 2 {
            return Err(Error::InvalidSystem(format!(
                "alphabet size must be at least 2, got {m}"
            )));
        }
        let mut entries = Vec::with_capacity(m * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::InvalidSystem(format!(
                    "row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                match v.into() {
                    0 => entries.push(0),
                    1 => entries.push(1),
                    other => {
                        return Err(Error::InvalidSystem(format!(
                            "entry ({i},{j}) is {other}, expected 0 or 1"
                        )))
                    }
                }
            }
        }
        Ok(Self::from_entries(m, entries))
    }

    fn from_entries(m: usize, entries: Vec<u8>) -> Self {
        let row_sums = entries
            .chunks(m)
            .map(|r| r.iter().map(|&e| e as u32).sum())
            .collect();
        let irreducible = strongly_connected(m, &entries);
        let primitive = irreducible && has_positive_power(m, &entries);
        Self {
            m,
            entries,
            row_sums,
            irreducible,
            primitive,
            power_sums: Arc::new(PowerSumCache::new(m)),
        }
    }

    /// The golden-mean matrix `[[1,1],[1,0]]`.
    pub fn golden() -> Self {
        Self::from_entries(2, vec![1, 1, 1, 0])
    }

    /// The all-ones matrix (full shift).
    pub fn full(m: usize) -> Self {
        assert!(m >= 2);
        Self::from_entries(m, vec![1; m * m])
    }

    /// Samples a uniformly random irreducible matrix by rejection.
    pub fn random_irreducible<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Self {
        assert!(m >= 2);
        loop {
            let entries: Vec<u8> = (0..m * m).map(|_| rng.random_range(0..2u8)).collect();
            let candidate = Self::from_entries(m, entries);
            if candidate.irreducible {
                return candidate;
            }
        }
    }

    /// Relabels the alphabet: letter `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.m);
        let mut entries = vec![0u8; self.m * self.m];
        for i in 0..self.m {
            for j in 0..self.m {
                entries[perm[i] * self.m + perm[j]] = self.entry(i, j);
            }
        }
        Self::from_entries(self.m, entries)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> u8 {
        self.entries[i * self.m + j]
    }

    #[inline]
    pub fn allows(&self, i: usize, j: usize) -> bool {
        self.entry(i, j) == 1
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> Vec<Vec<u8>> {
        self.entries.chunks(self.m).map(|r| r.to_vec()).collect()
    }

    /// Row sums `a_i = Σ_j a_{i,j}`.
    pub fn row_sums(&self) -> &[u32] {
        &self.row_sums
    }

    pub fn equal_row_sums(&self) -> bool {
        self.row_sums.windows(2).all(|w| w[0] == w[1])
    }

    /// Number of letters `i` with `a_{i,i} = 1`.
    pub fn trace(&self) -> usize {
        (0..self.m).filter(|&i| self.allows(i, i)).count()
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    pub fn is_primitive(&self) -> bool {
        self.primitive
    }

    /// `|A^k|`, the sum of all entries of `A^k`, i.e. the number of
    /// admissible words of length `k + 1`.
    pub fn power_sum(&self, k: usize) -> BigUint {
        self.power_sums.get(self, k)
    }

    /// `log_m |A^k|`. Panics if `|A^k| = 0`, which cannot happen for an
    /// irreducible matrix.
    pub fn log_power_sum(&self, k: usize) -> f64 {
        big_log_base(&self.power_sum(k), self.m)
    }
}

/// `matrix_power_sum` as a free function.
pub fn matrix_power_sum(a: &TransitionMatrix, k: usize) -> BigUint {
    a.power_sum(k)
}

pub fn is_irreducible(a: &TransitionMatrix) -> bool {
    a.is_irreducible()
}

pub fn is_primitive(a: &TransitionMatrix) -> bool {
    a.is_primitive()
}

fn reachable(m: usize, entries: &[u8], forward: bool) -> Vec<bool> {
    let mut seen = vec![false; m];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for w in 0..m {
            let edge = if forward {
                entries[v * m + w]
            } else {
                entries[w * m + v]
            };
            if edge == 1 && !seen[w] {
                seen[w] = true;
                stack.push(w);
            }
        }
    }
    seen
}

fn strongly_connected(m: usize, entries: &[u8]) -> bool {
    reachable(m, entries, true).into_iter().all(|s| s)
        && reachable(m, entries, false).into_iter().all(|s| s)
}

/// Wielandt: an irreducible primitive matrix has `A^k > 0` for some
/// `k ≤ (m-1)² + 1`.
fn has_positive_power(m: usize, entries: &[u8]) -> bool {
    let limit = (m - 1) * (m - 1) + 1;
    let mut power = entries.to_vec();
    for _ in 0..limit {
        if power.iter().all(|&e| e == 1) {
            return true;
        }
        let mut next = vec![0u8; m * m];
        for i in 0..m {
            for j in 0..m {
                next[i * m + j] = (0..m).any(|k| power[i * m + k] == 1 && entries[k * m + j] == 1) as u8;
            }
        }
        power = next;
    }
    power.iter().all(|&e| e == 1)
}

struct PowerSumCache {
    state: RwLock<PowerState>,
}

struct PowerState {
    sums: Vec<BigUint>,
    // A^{sums.len()-1} · 1, the row-sum vector of the last cached power.
    last: Vec<BigUint>,
}

impl PowerSumCache {
    fn new(m: usize) -> Self {
        Self {
            state: RwLock::new(PowerState {
                sums: vec![BigUint::from(m)],
                last: vec![BigUint::one(); m],
            }),
        }
    }

    fn get(&self, a: &TransitionMatrix, k: usize) -> BigUint {
        {
            let state = self.state.read().expect("power-sum cache poisoned");
            if let Some(s) = state.sums.get(k) {
                return s.clone();
            }
        }
        let mut state = self.state.write().expect("power-sum cache poisoned");
        while state.sums.len() <= k {
            let m = a.m;
            let next: Vec<BigUint> = (0..m)
                .map(|i| {
                    (0..m)
                        .filter(|&j| a.allows(i, j))
                        .fold(BigUint::zero(), |acc, j| acc + &state.last[j])
                })
                .collect();
            let total = next.iter().fold(BigUint::zero(), |acc, v| acc + v);
            state.sums.push(total);
            state.last = next;
        }
        state.sums[k].clone()
    }
}
