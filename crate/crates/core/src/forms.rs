//! Integral ternary quadratic forms, their exact invariants, and the
//! square / non-square regime classifier.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::perfect_square_root_big;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormError {
    #[error("form is degenerate (det = 0)")]
    DegenerateForm,
    #[error("form is definite with signature {0}; the counting asymptotics need an indefinite form")]
    DefiniteForm(Signature),
    #[error("target must be a nonzero integer")]
    ZeroTarget,
    #[error("evaluation overflowed 128-bit arithmetic; reduce T")]
    Overflow,
    #[error("cannot parse form {0:?}: expected six comma-separated integers a11,a22,a33,a12,a13,a23")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Signature {
    pub positives: u8,
    pub negatives: u8,
}

impl Signature {
    pub fn is_indefinite(&self) -> bool {
        self.positives > 0 && self.negatives > 0
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.positives, self.negatives)
    }
}

/// `f = a11 x^2 + a22 y^2 + a33 z^2 + a12 xy + a13 xz + a23 yz`.
///
/// The Gram matrix is half-integral (off-diagonal `a_ij / 2`) so that
/// `f(v) = v^T G v` and `det` is the determinant of that matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TernaryForm {
    coeffs: [i64; 6],
    gram: [[BigRational; 3]; 3],
    det: BigRational,
    signature: Signature,
}

/// A nonzero integer right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Target(i64);

impl Target {
    pub fn new(a: i64) -> Result<Self, FormError> {
        if a == 0 {
            Err(FormError::ZeroTarget)
        } else {
            Ok(Target(a))
        }
    }

    pub fn get(self) -> i64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RegimeClass {
    /// `-a det(f)` is a rational square; the witness root is positive.
    SquareCase {
        root: BigRational,
    },
    NonSquareCase,
}

impl RegimeClass {
    pub fn is_square(&self) -> bool {
        matches!(self, RegimeClass::SquareCase { .. })
    }

    pub fn tag(&self) -> &'static str {
        match self {
            RegimeClass::SquareCase { .. } => "SquareCase",
            RegimeClass::NonSquareCase => "NonSquareCase",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    Euclidean,
    Sup,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormSpec {
    pub kind: NormKind,
}

impl NormSpec {
    pub const EUCLIDEAN: NormSpec = NormSpec { kind: NormKind::Euclidean };
    pub const SUP: NormSpec = NormSpec { kind: NormKind::Sup };

    /// Equivalence constant against the Euclidean norm on R^3.
    pub fn c0(&self) -> f64 {
        match self.kind {
            NormKind::Euclidean => 1.0,
            NormKind::Sup => 3f64.sqrt(),
        }
    }

    pub fn eval(&self, v: [f64; 3]) -> f64 {
        match self.kind {
            NormKind::Euclidean => (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt(),
            NormKind::Sup => v[0].abs().max(v[1].abs()).max(v[2].abs()),
        }
    }
}

impl FromStr for NormKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "euclidean" | "l2" => Ok(NormKind::Euclidean),
            "sup" | "max" | "linf" => Ok(NormKind::Sup),
            other => Err(format!("unknown norm {other:?} (expected euclidean or sup)")),
        }
    }
}

fn rat(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

fn det3(m: &[[BigRational; 3]; 3]) -> BigRational {
    let minor = |r1: usize, r2: usize, c1: usize, c2: usize| &m[r1][c1] * &m[r2][c2] - &m[r1][c2] * &m[r2][c1];
    &m[0][0] * minor(1, 2, 1, 2) - &m[0][1] * minor(1, 2, 0, 2) + &m[0][2] * minor(1, 2, 0, 1)
}

/// Signs of the pivots of a symmetric congruence diagonalization.
///
/// Pivots on a nonzero diagonal entry when one exists; otherwise folds an
/// off-diagonal entry onto the diagonal with `e_i <- e_i + e_j`.
fn diagonal_signs(gram: &[[BigRational; 3]; 3]) -> Vec<i8> {
    let mut m: Vec<Vec<BigRational>> = gram.iter().map(|r| r.to_vec()).collect();
    let mut signs = Vec::with_capacity(3);
    while !m.is_empty() {
        let n = m.len();
        let pivot = (0..n).find(|&i| !m[i][i].is_zero());
        let pivot = match pivot {
            Some(i) => i,
            None => {
                let hit = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).find(|&(i, j)| !m[i][j].is_zero());
                let Some((i, j)) = hit else {
                    // remaining block is zero: degenerate directions
                    signs.extend(std::iter::repeat_n(0, n));
                    break;
                };
                // row/col i += row/col j
                for k in 0..n {
                    let add = m[j][k].clone();
                    m[i][k] += add;
                }
                for k in 0..n {
                    let add = m[k][j].clone();
                    m[k][i] += add;
                }
                i
            }
        };
        let d = m[pivot][pivot].clone();
        signs.push(if d.is_positive() { 1 } else { -1 });
        let rest: Vec<usize> = (0..n).filter(|&k| k != pivot).collect();
        let next: Vec<Vec<BigRational>> =
            rest.iter().map(|&r| rest.iter().map(|&c| &m[r][c] - &m[r][pivot] * &m[pivot][c] / &d).collect()).collect();
        m = next;
    }
    signs
}

impl TernaryForm {
    /// Builds a form from `(a11, a22, a33, a12, a13, a23)`.
    pub fn new(coeffs: [i64; 6]) -> Result<Self, FormError> {
        let [a11, a22, a33, a12, a13, a23] = coeffs;
        let half = |v: i64| BigRational::new(BigInt::from(v), BigInt::from(2));
        let gram =
            [[rat(a11), half(a12), half(a13)], [half(a12), rat(a22), half(a23)], [half(a13), half(a23), rat(a33)]];
        let det = det3(&gram);
        if det.is_zero() {
            return Err(FormError::DegenerateForm);
        }
        let signs = diagonal_signs(&gram);
        let positives = signs.iter().filter(|&&s| s > 0).count() as u8;
        let negatives = signs.iter().filter(|&&s| s < 0).count() as u8;
        debug_assert_eq!(positives + negatives, 3);
        Ok(TernaryForm { coeffs, gram, det, signature: Signature { positives, negatives } })
    }

    pub fn coeffs(&self) -> [i64; 6] {
        self.coeffs
    }

    pub fn gram(&self) -> &[[BigRational; 3]; 3] {
        &self.gram
    }

    pub fn det(&self) -> &BigRational {
        &self.det
    }

    /// `det(2G) = 8 det(G)`, always an integer.
    pub fn det_of_double_gram(&self) -> BigInt {
        let d = &self.det * rat(8);
        debug_assert!(d.is_integer());
        d.to_integer()
    }

    pub fn signature(&self) -> Signature {
        self.signature
    }

    pub fn is_diagonal(&self) -> bool {
        self.coeffs[3..].iter().all(|&c| c == 0)
    }

    /// `Some(delta)` when the form is exactly `x^2 + y^2 - delta z^2` with `delta > 0`.
    pub fn family_delta(&self) -> Option<u64> {
        match self.coeffs {
            [1, 1, c, 0, 0, 0] if c < 0 => Some(c.unsigned_abs()),
            _ => None,
        }
    }

    pub fn family(delta: u64) -> Result<Self, FormError> {
        let d = i64::try_from(delta).map_err(|_| FormError::Overflow)?;
        TernaryForm::new([1, 1, -d, 0, 0, 0])
    }

    /// Exact `f(x, y, z)`.
    pub fn evaluate(&self, x: i64, y: i64, z: i64) -> Result<i128, FormError> {
        let [a11, a22, a33, a12, a13, a23] = self.coeffs.map(|c| c as i128);
        let (x, y, z) = (x as i128, y as i128, z as i128);
        let term = |c: i128, u: i128, v: i128| -> Option<i128> { c.checked_mul(u)?.checked_mul(v) };
        let parts =
            [term(a11, x, x), term(a22, y, y), term(a33, z, z), term(a12, x, y), term(a13, x, z), term(a23, y, z)];
        parts.into_iter().try_fold(0i128, |acc, t| acc.checked_add(t?)).ok_or(FormError::Overflow)
    }

    /// The form `f(U w)` for an integer matrix `U` (rows indexed by the
    /// original variables).
    pub fn transform(&self, u: [[i64; 3]; 3]) -> Result<TernaryForm, FormError> {
        let g: [[i128; 3]; 3] = {
            // integral 2G avoids halves
            let [a11, a22, a33, a12, a13, a23] = self.coeffs.map(|c| c as i128);
            [[2 * a11, a12, a13], [a12, 2 * a22, a23], [a13, a23, 2 * a33]]
        };
        let mut h = [[0i128; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                let mut s: i128 = 0;
                for k in 0..3 {
                    for l in 0..3 {
                        let t = (u[k][i] as i128)
                            .checked_mul(g[k][l])
                            .and_then(|t| t.checked_mul(u[l][j] as i128))
                            .ok_or(FormError::Overflow)?;
                        s = s.checked_add(t).ok_or(FormError::Overflow)?;
                    }
                }
                h[i][j] = s;
            }
        }
        let to64 = |v: i128| i64::try_from(v).map_err(|_| FormError::Overflow);
        TernaryForm::new([
            to64(h[0][0] / 2)?,
            to64(h[1][1] / 2)?,
            to64(h[2][2] / 2)?,
            to64(h[0][1])?,
            to64(h[0][2])?,
            to64(h[1][2])?,
        ])
    }

    pub fn gram_f64(&self) -> [[f64; 3]; 3] {
        let [a11, a22, a33, a12, a13, a23] = self.coeffs.map(|c| c as f64);
        [[a11, a12 / 2.0, a13 / 2.0], [a12 / 2.0, a22, a23 / 2.0], [a13 / 2.0, a23 / 2.0, a33]]
    }

    /// Classifies the growth regime of `N(f, a, T)`.
    pub fn classify(&self, a: Target) -> Result<RegimeClass, FormError> {
        if !self.signature.is_indefinite() {
            return Err(FormError::DefiniteForm(self.signature));
        }
        let value = -(rat(a.get()) * &self.det);
        if !value.is_positive() {
            return Ok(RegimeClass::NonSquareCase);
        }
        // BigRational is kept in lowest terms
        match (perfect_square_root_big(value.numer()), perfect_square_root_big(value.denom())) {
            (Some(n), Some(d)) => Ok(RegimeClass::SquareCase { root: BigRational::new(n, d) }),
            _ => Ok(RegimeClass::NonSquareCase),
        }
    }
}

impl FromStr for TernaryForm {
    type Err = FormError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        if parts.len() != 6 {
            return Err(FormError::Parse(s.to_string()));
        }
        let mut coeffs = [0i64; 6];
        for (slot, p) in coeffs.iter_mut().zip(parts) {
            *slot = p.parse().map_err(|_| FormError::Parse(s.to_string()))?;
        }
        TernaryForm::new(coeffs)
    }
}

impl fmt::Display for TernaryForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.coeffs;
        write!(f, "{},{},{},{},{},{}", c[0], c[1], c[2], c[3], c[4], c[5])
    }
}
