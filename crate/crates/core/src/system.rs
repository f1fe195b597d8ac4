use std::fmt;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::TransitionMatrix;

/// Which closed form applies to a system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaseTag {
    /// `(p,q) ∤ (b-a)`: chains have one or two members.
    NonDivisible,
    /// `p > 1`, `(p,q) | (b-a)`, `p/(p,q) ≥ 2`: finite chains of every length.
    DivisibleGeneral,
    /// `p > 1`, `(p,q) | (b-a)`, `p/(p,q) = 1`: infinite chains on one residue class.
    DivisibleDegenerate,
    /// `p = 1`.
    Classical,
}

impl fmt::Display for CaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CaseTag::NonDivisible => "NonDivisible",
            CaseTag::DivisibleGeneral => "DivisibleGeneral",
            CaseTag::DivisibleDegenerate => "DivisibleDegenerate",
            CaseTag::Classical => "Classical",
        };
        f.write_str(s)
    }
}

/// A validated affine multiplicative system `X_A^{(p,q;a,b)}`: sequences
/// with `A(x_{pk+a}, x_{qk+b}) = 1` for every `k ≥ 1` whose two positions are
/// both at least 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AffineSystem {
    p: i64,
    q: i64,
    a: i64,
    b: i64,
    matrix: TransitionMatrix,
    d: i64,
    p1: i64,
    q1: i64,
    c: Option<i64>,
    case_tag: CaseTag,
    k_min: i64,
}

/// Validates raw parameters. Rejects `p < 1`, `p ≥ q` and reducible matrices;
/// primitivity is only checked by the operations that need it.
pub fn validate_system(p: i64, q: i64, a: i64, b: i64, matrix: TransitionMatrix) -> Result<AffineSystem> {
    if p < 1 {
        return Err(Error::InvalidSystem(format!("p must be at least 1, got {p}")));
    }
    if p >= q {
        return Err(Error::InvalidSystem(format!("need p < q, got p={p}, q={q}")));
    }
    if !matrix.is_irreducible() {
        return Err(Error::InvalidSystem("transition matrix is reducible".into()));
    }
    let d = p.gcd(&q);
    let p1 = p / d;
    let q1 = q / d;
    let diff = b - a;
    let c = (diff % d == 0).then_some(diff / d);
    let case_tag = match (p, c) {
        (1, _) => CaseTag::Classical,
        (_, None) => CaseTag::NonDivisible,
        (_, Some(_)) if p1 == 1 => CaseTag::DivisibleDegenerate,
        _ => CaseTag::DivisibleGeneral,
    };
    let k_min = 1.max(Integer::div_ceil(&(1 - a), &p)).max(Integer::div_ceil(&(1 - b), &q));
    Ok(AffineSystem {
        p,
        q,
        a,
        b,
        matrix,
        d,
        p1,
        q1,
        c,
        case_tag,
        k_min,
    })
}

impl AffineSystem {
    pub fn new(p: i64, q: i64, a: i64, b: i64, matrix: TransitionMatrix) -> Result<Self> {
        validate_system(p, q, a, b, matrix)
    }

    pub fn p(&self) -> i64 {
        self.p
    }
    pub fn q(&self) -> i64 {
        self.q
    }
    pub fn a(&self) -> i64 {
        self.a
    }
    pub fn b(&self) -> i64 {
        self.b
    }
    pub fn matrix(&self) -> &TransitionMatrix {
        &self.matrix
    }
    pub fn m(&self) -> usize {
        self.matrix.m()
    }
    /// `gcd(p, q)`.
    pub fn d(&self) -> i64 {
        self.d
    }
    pub fn p1(&self) -> i64 {
        self.p1
    }
    pub fn q1(&self) -> i64 {
        self.q1
    }
    /// `(b-a)/d` when `d | (b-a)`.
    pub fn c(&self) -> Option<i64> {
        self.c
    }
    pub fn case_tag(&self) -> CaseTag {
        self.case_tag
    }
    /// Smallest `k` for which both `pk+a` and `qk+b` are positions (≥ 1).
    pub fn k_min(&self) -> i64 {
        self.k_min
    }

    /// Same offsets and exponents with another matrix.
    pub fn with_matrix(&self, matrix: TransitionMatrix) -> Result<Self> {
        validate_system(self.p, self.q, self.a, self.b, matrix)
    }

    pub fn require_case(&self, expected: CaseTag) -> Result<()> {
        if self.case_tag == expected {
            Ok(())
        } else {
            Err(Error::WrongCase {
                expected: case_name(expected),
                actual: self.case_tag,
            })
        }
    }

    pub fn require_primitive(&self) -> Result<()> {
        if self.matrix.is_primitive() {
            Ok(())
        } else {
            Err(Error::NotPrimitive)
        }
    }

    pub fn to_spec(&self) -> SystemSpec {
        SystemSpec {
            m: self.m(),
            matrix: self
                .matrix
                .rows()
                .into_iter()
                .map(|r| r.into_iter().map(i64::from).collect())
                .collect(),
            p: self.p,
            q: self.q,
            a: self.a,
            b: self.b,
        }
    }
}

pub(crate) fn case_name(tag: CaseTag) -> &'static str {
    match tag {
        CaseTag::NonDivisible => "NonDivisible",
        CaseTag::DivisibleGeneral => "DivisibleGeneral",
        CaseTag::DivisibleDegenerate => "DivisibleDegenerate",
        CaseTag::Classical => "Classical",
    }
}

/// JSON description of a system:
/// `{"m": 2, "matrix": [[1,1],[1,0]], "p": 1, "q": 2, "a": 0, "b": 0}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub m: usize,
    pub matrix: Vec<Vec<i64>>,
    pub p: i64,
    pub q: i64,
    pub a: i64,
    pub b: i64,
}

impl SystemSpec {
    pub fn to_system(&self) -> Result<AffineSystem> {
        if self.matrix.len() != self.m {
            return Err(Error::InvalidSystem(format!(
                "m = {} but the matrix has {} rows",
                self.m,
                self.matrix.len()
            )));
        }
        let matrix = TransitionMatrix::from_rows(&self.matrix)?;
        validate_system(self.p, self.q, self.a, self.b, matrix)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden(p: i64, q: i64, a: i64, b: i64) -> AffineSystem {
        validate_system(p, q, a, b, TransitionMatrix::golden()).unwrap()
    }

    #[test]
    fn case_examples() {
        let s = golden(1, 2, 0, 0);
        assert_eq!(s.case_tag(), CaseTag::Classical);
        assert_eq!((s.d(), s.q1()), (1, 2));

        let s = golden(2, 4, 0, 1);
        assert_eq!(s.case_tag(), CaseTag::NonDivisible);
        assert_eq!(s.d(), 2);
        assert_eq!(s.c(), None);

        let s = golden(2, 4, 0, 0);
        assert_eq!(s.case_tag(), CaseTag::DivisibleDegenerate);
        assert_eq!((s.d(), s.p1(), s.q1()), (2, 1, 2));

        let s = golden(2, 3, 0, 0);
        assert_eq!(s.case_tag(), CaseTag::DivisibleGeneral);
        assert_eq!((s.d(), s.p1(), s.q1(), s.c()), (1, 2, 3, Some(0)));
    }

    #[test]
    fn rejects_invalid_parameters() {
        let g = TransitionMatrix::golden;
        assert!(validate_system(0, 2, 0, 0, g()).is_err());
        assert!(validate_system(3, 3, 0, 0, g()).is_err());
        assert!(validate_system(4, 3, 0, 0, g()).is_err());
        let reducible = TransitionMatrix::from_rows(&[vec![1, 0], vec![0, 1]]).unwrap();
        assert!(validate_system(1, 2, 0, 0, reducible).is_err());
        // Periodic but irreducible is accepted here; primitivity is deferred.
        let periodic = TransitionMatrix::from_rows(&[vec![0, 1], vec![1, 0]]).unwrap();
        let s = validate_system(1, 2, 0, 0, periodic).unwrap();
        assert!(s.require_primitive().is_err());
    }

    #[test]
    fn k_min_respects_negative_offsets() {
        assert_eq!(golden(1, 2, 0, 0).k_min(), 1);
        // k+5 ≥ 1 always; 2k-3 ≥ 1 needs k ≥ 2.
        assert_eq!(golden(1, 2, 5, -3).k_min(), 2);
        assert_eq!(golden(3, 5, -7, 0).k_min(), 3);
    }

    #[test]
    fn system_spec_round_trip_and_validation() {
        let spec = SystemSpec {
            m: 2,
            matrix: vec![vec![1, 1], vec![1, 0]],
            p: 2,
            q: 3,
            a: 0,
            b: 0,
        };
        let sys = spec.to_system().unwrap();
        assert_eq!(sys.to_spec(), spec);
        let bad = SystemSpec { m: 3, ..spec };
        assert!(bad.to_system().is_err());
    }

    proptest::proptest! {
        #[test]
        fn case_tags_partition_parameter_space(p in 1i64..12, dq in 1i64..12, a in -20i64..20, b in -20i64..20) {
            let q = p + dq;
            let s = golden(p, q, a, b);
            let d = s.d();
            proptest::prop_assert_eq!(d * s.p1(), p);
            proptest::prop_assert_eq!(d * s.q1(), q);
            proptest::prop_assert_eq!(s.p1().gcd(&s.q1()), 1);
            proptest::prop_assert!(s.q1() >= 2);
            let divides = (b - a) % d == 0;
            let tag = s.case_tag();
            proptest::prop_assert_eq!(tag == CaseTag::Classical, p == 1);
            proptest::prop_assert_eq!(tag == CaseTag::NonDivisible, !divides);
            proptest::prop_assert_eq!(tag == CaseTag::DivisibleDegenerate, p > 1 && divides && s.p1() == 1);
            proptest::prop_assert_eq!(tag == CaseTag::DivisibleGeneral, p > 1 && divides && s.p1() >= 2);
            let km = s.k_min();
            proptest::prop_assert!(p * km + a >= 1 && q * km + b >= 1);
            if km > 1 {
                proptest::prop_assert!(p * (km - 1) + a < 1 || q * (km - 1) + b < 1);
            }
        }
    }
}
