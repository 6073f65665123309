//! The finite part of the counting asymptotic.
//!
//! Square case: `prod_p (1 - 1/p) alpha_p(f, a)`. Off the ramified set
//! `alpha_p = 1 + 1/p`, so each such factor is `1 - p^-2` and the infinite
//! product folds into `6/pi^2` times a finite correction over the ramified
//! primes. No truncation is involved.
//!
//! Non-square case (family `x^2 + y^2 - delta z^2 = 1` only): the
//! conditionally convergent `prod_p alpha_p` is rewritten through
//! `L(1, chi)` for the character of `Q(sqrt(delta0))`.

mod l_value;

pub use l_value::{
    character_table, dirichlet_l1, dirichlet_series, fundamental_discriminant, fundamental_unit, narrow_class_number,
    LValue, QuadraticUnit, DUAL_METHOD_TOLERANCE,
};

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::{kronecker, legendre, squarefree_decomposition, FactorError};
use crate::forms::{FormError, RegimeClass, Target, TernaryForm};
use crate::local_density::{alpha_p_brute, alpha_p_closed_family, ramified_primes, DensityError, LocalDensity};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EulerError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error("-a det(f) is not a rational square; the T log T constant does not apply")]
    NotSquareCase,
    #[error("not applicable: {0}")]
    NotApplicable(String),
    #[error("L(1, chi) for delta0 = {delta0}: series {series} vs class number formula {class_number_formula}")]
    Disagreement { delta0: u64, series: f64, class_number_formula: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Where ramified local densities come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensitySource {
    /// Exact stabilized counts mod `p^k`.
    #[default]
    Brute,
    /// The closed-form table for `x^2 + y^2 - delta z^2 = 1`.
    Closed,
}

impl std::str::FromStr for DensitySource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "brute" => Ok(DensitySource::Brute),
            "closed" => Ok(DensitySource::Closed),
            other => Err(format!("unknown density source {other:?} (expected brute or closed)")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EulerConstant {
    pub ramified: Vec<LocalDensity>,
    /// `prod_{p ram} (1 - 1/p) alpha_p / (1 - p^-2)`.
    pub ramified_factor: BigRational,
    /// `ramified_factor * 6 / pi^2`.
    pub value: f64,
    pub interval: (f64, f64),
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

fn densities_at(
    form: &TernaryForm,
    a: Target,
    primes: &[u64],
    source: DensitySource,
) -> Result<Vec<LocalDensity>, EulerError> {
    match source {
        DensitySource::Brute => {
            primes.par_iter().map(|&p| alpha_p_brute(form, a, p).map_err(EulerError::from)).collect()
        }
        DensitySource::Closed => {
            let delta = form
                .family_delta()
                .filter(|_| a.get() == 1)
                .ok_or_else(|| EulerError::NotApplicable("closed-form densities need x^2+y^2-delta z^2 = 1".into()))?;
            primes.iter().map(|&p| alpha_p_closed_family(delta, p).map_err(EulerError::from)).collect()
        }
    }
}

/// `6/pi^2` scaled by an exact rational, with a floating enclosure.
fn scaled_inverse_zeta2(factor: &BigRational) -> (f64, (f64, f64)) {
    let value = factor.to_f64().expect("finite rational") * 6.0 / (PI * PI);
    // a handful of roundings, each at most one ulp
    let slack = 8.0 * f64::EPSILON * value.abs();
    (value, (value - slack, value + slack))
}

/// `prod_p (1 - 1/p) alpha_p(f, a)` in the square case.
pub fn finite_constant_square_case(
    form: &TernaryForm,
    a: Target,
    source: DensitySource,
) -> Result<EulerConstant, EulerError> {
    match form.classify(a)? {
        RegimeClass::SquareCase { .. } => {}
        RegimeClass::NonSquareCase => return Err(EulerError::NotSquareCase),
    }
    let primes = ramified_primes(form, a)?;
    let ramified = densities_at(form, a, &primes, source)?;
    let mut ramified_factor = BigRational::one();
    for d in ramified.iter() {
        let p = d.p as i64;
        // (1 - 1/p) / (1 - 1/p^2) = p / (p + 1)
        ramified_factor *= &d.value * ratio(p, p + 1);
    }
    let (value, interval) = scaled_inverse_zeta2(&ramified_factor);
    Ok(EulerConstant { ramified, ramified_factor, value, interval })
}

/// The Example-style constant `c / (pi sqrt(1+delta)) L(1,chi) ...` for
/// `N(x^2 + y^2 - delta z^2, 1, T) ~ constant * T`, from the case table on
/// `delta0 mod 8` and the parity of `delta`, `delta1`.
pub fn nonsquare_constant_family(delta: u64) -> Result<f64, EulerError> {
    let (d0, d1) = squarefree_decomposition(delta)?;
    if d0 == 1 {
        return Err(EulerError::NotApplicable(format!("delta = {delta} is a perfect square")));
    }
    let delta_even = delta.is_multiple_of(2);
    let c = match d0 % 8 {
        1 => 8.0,
        5 if !delta_even => 12.0,
        5 => 24.0,
        3 | 7 if !delta_even => 12.0,
        3 | 7 => 16.0,
        _ if d1 % 2 == 1 => 8.0,
        _ => 16.0,
    };
    let l = dirichlet_l1(d0)?;
    let mut correction = 1.0;
    for p in prime_divisors(d1)? {
        if p == 2 || d0 % p == 0 {
            continue;
        }
        let pf = p as f64;
        correction *= (1.0 - legendre(-1, p) as f64 / pf) / (1.0 + legendre(d0 as i64, p) as f64 / pf);
    }
    for p in prime_divisors(d0)? {
        if p == 2 {
            continue;
        }
        correction /= 1.0 + legendre(-1, p) as f64 / p as f64;
    }
    Ok(c / (PI * (1.0 + delta as f64).sqrt()) * l.value * correction)
}

fn prime_divisors(n: u64) -> Result<Vec<u64>, EulerError> {
    Ok(crate::arith::factorize(n)?.into_iter().map(|(p, _)| p).collect())
}

/// Non-square constant assembled directly from local densities.
#[derive(Debug, Clone)]
pub struct NonSquareConstant {
    pub delta: u64,
    pub ramified: Vec<LocalDensity>,
    /// `prod_p alpha_p` (conditionally convergent, ordered by p).
    pub density_product: f64,
    /// Leading coefficient of `N(T) ~ coefficient * T`.
    pub coefficient: f64,
    pub l_value: LValue,
}

/// `prod_p alpha_p = (6/pi^2) L(1,chi) prod_{p | 2 delta} alpha_p (1 - chi(p)/p) / (1 - p^-2)`,
/// using `alpha_p = 1 + chi(p)/p` for `p ∤ 2 delta`.
pub fn nonsquare_constant_assembled(delta: u64, source: DensitySource) -> Result<NonSquareConstant, EulerError> {
    let (d0, _) = squarefree_decomposition(delta)?;
    if d0 == 1 {
        return Err(EulerError::NotApplicable(format!("delta = {delta} is a perfect square")));
    }
    let form = TernaryForm::family(delta)?;
    let one = Target::new(1)?;
    let mut primes = prime_divisors(2 * delta)?;
    primes.dedup();
    let ramified = densities_at(&form, one, &primes, source)?;
    let l_value = dirichlet_l1(d0)?;
    let disc = l_value.discriminant as i64;
    let mut factor = BigRational::one();
    for d in ramified.iter() {
        let p = d.p as i64;
        let chi = kronecker(disc, d.p) as i64;
        factor *= &d.value * ratio(p - chi, p) * ratio(p * p, p * p - 1);
    }
    let (density_product, _) = scaled_inverse_zeta2(&factor);
    let density_product = density_product * l_value.value;
    let coefficient = density_product * 2.0 * PI / (1.0 + delta as f64).sqrt();
    Ok(NonSquareConstant { delta, ramified, density_product, coefficient, l_value })
}

/// `2^r (2 pi)^s / (w sqrt|d|) * R * h`.
pub fn prefactor_numberfield(r: u32, s: u32, w: u32, d: i64, regulator: f64, h: u64) -> Result<f64, EulerError> {
    if r + s < 1 || w < 2 || h < 1 || d == 0 || !(regulator > 0.0) {
        return Err(EulerError::InvalidArgument(format!(
            "need r+s >= 1, w >= 2, h >= 1, d != 0, R > 0 (got r={r} s={s} w={w} d={d} R={regulator} h={h})"
        )));
    }
    let num = 2f64.powi(r as i32) * (2.0 * PI).powi(s as i32);
    Ok(num / (w as f64 * (d.unsigned_abs() as f64).sqrt()) * regulator * h as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arith::primes_up_to;

    fn one() -> Target {
        Target::new(1).unwrap()
    }

    fn family(delta: u64) -> TernaryForm {
        TernaryForm::family(delta).unwrap()
    }

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn square_case_examples_with_closed_densities() {
        let four_over_pi2 = 4.0 / (PI * PI);
        for delta in [1u64, 4, 9] {
            let c = finite_constant_square_case(&family(delta), one(), DensitySource::Closed).unwrap();
            assert!(close(c.value, four_over_pi2, 1e-14), "delta={delta}: {}", c.value);
            assert!(c.interval.0 <= c.value && c.value <= c.interval.1);
            assert!(c.interval.1 - c.interval.0 <= 1e-12 * c.value);
        }
        let c = finite_constant_square_case(&family(9), one(), DensitySource::Closed).unwrap();
        assert_eq!(c.ramified.iter().map(|d| d.p).collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(c.ramified_factor, ratio(2, 3));
    }

    #[test]
    fn brute_densities_double_the_two_adic_factor() {
        for delta in [1u64, 4, 9, 16, 25, 36] {
            let brute = finite_constant_square_case(&family(delta), one(), DensitySource::Brute).unwrap();
            let closed = finite_constant_square_case(&family(delta), one(), DensitySource::Closed).unwrap();
            for (b, c) in brute.ramified.iter().zip(closed.ramified.iter()) {
                assert_eq!(b.p, c.p);
                if b.p == 2 {
                    assert_eq!(b.value, &c.value * ratio(2, 1), "delta={delta}");
                } else {
                    assert_eq!(b.value, c.value, "delta={delta} p={}", b.p);
                }
            }
            assert_eq!(brute.ramified_factor, &closed.ramified_factor * ratio(2, 1));
        }
    }

    #[test]
    fn tail_closure_matches_truncation() {
        for delta in [1u64, 9] {
            let c = finite_constant_square_case(&family(delta), one(), DensitySource::Brute).unwrap();
            for bound in [100u64, 1000, 10_000] {
                let mut partial = 1.0f64;
                for p in primes_up_to(bound) {
                    let alpha = match c.ramified.iter().find(|d| d.p == p) {
                        Some(d) => d.value.to_f64().unwrap(),
                        None => 1.0 + 1.0 / p as f64,
                    };
                    partial *= (1.0 - 1.0 / p as f64) * alpha;
                }
                assert!((partial - c.value).abs() <= 2.0 / bound as f64 * c.value, "B={bound}");
            }
        }
    }

    #[test]
    fn rejects_non_square_forms() {
        assert!(matches!(
            finite_constant_square_case(&family(2), one(), DensitySource::Brute),
            Err(EulerError::NotSquareCase)
        ));
        let generic = TernaryForm::new([0, 0, 0, 1, 1, 1]).unwrap();
        assert!(matches!(
            finite_constant_square_case(&generic, Target::new(-1).unwrap(), DensitySource::Closed),
            Err(EulerError::NotApplicable(_))
        ));
    }

    #[test]
    fn generic_square_form_constant() {
        // xy + yz + zx = -1: -a det = 1/4, ramified set {2}
        let f = TernaryForm::new([0, 0, 0, 1, 1, 1]).unwrap();
        let c = finite_constant_square_case(&f, Target::new(-1).unwrap(), DensitySource::Brute).unwrap();
        assert_eq!(c.ramified.len(), 1);
        assert!(c.value > 0.0);
    }

    #[test]
    fn nonsquare_family_examples() {
        let c2 = nonsquare_constant_family(2).unwrap();
        assert!(close(c2, 8.0 / (PI * 3f64.sqrt()) * (1.0 + 2f64.sqrt()).ln() / 2f64.sqrt(), 1e-12));
        assert!((c2 - 0.916).abs() < 1e-3);
        let c3 = nonsquare_constant_family(3).unwrap();
        assert!((c3 - 2.178).abs() < 1e-3, "{c3}");
        let c5 = nonsquare_constant_family(5).unwrap();
        assert!((c5 - 0.559).abs() < 1e-3, "{c5}");
        assert!(matches!(nonsquare_constant_family(4), Err(EulerError::NotApplicable(_))));
    }

    #[test]
    fn case_table_agrees_with_density_assembly() {
        // the seven-way case table is a rewriting of prod alpha_p times the
        // singular-integral rate; check it against the closed-form densities
        for delta in 2u64..=50 {
            if crate::arith::perfect_square_root(delta).is_some() {
                continue;
            }
            let table = nonsquare_constant_family(delta).unwrap();
            let assembled = nonsquare_constant_assembled(delta, DensitySource::Closed).unwrap();
            assert!(close(assembled.coefficient, table, 1e-12), "delta={delta}: {} vs {table}", assembled.coefficient);
            assert!(table > 0.0);
        }
    }

    #[test]
    fn brute_assembly_is_twice_the_table() {
        for delta in [2u64, 3, 5, 6, 7, 8, 12, 20] {
            let table = nonsquare_constant_family(delta).unwrap();
            let brute = nonsquare_constant_assembled(delta, DensitySource::Brute).unwrap();
            assert!(close(brute.coefficient, 2.0 * table, 1e-12), "delta={delta}");
        }
    }

    #[test]
    fn prefactors() {
        assert_eq!(prefactor_numberfield(1, 0, 2, 1, 1.0, 1).unwrap(), 1.0);
        assert!(close(prefactor_numberfield(0, 1, 4, -4, 1.0, 1).unwrap(), PI / 4.0, 1e-15));
        let v = prefactor_numberfield(2, 0, 2, 5, 0.4812, 1).unwrap();
        assert!((v - 0.4304).abs() < 1e-4);
        assert!(prefactor_numberfield(0, 0, 2, 1, 1.0, 1).is_err());
        assert!(prefactor_numberfield(1, 0, 1, 1, 1.0, 1).is_err());
    }
}
