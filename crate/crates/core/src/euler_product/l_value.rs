//! `L(1, chi)` for the quadratic character of `Q(sqrt(delta0))`, computed
//! twice: once from the Dirichlet series and once from the class number
//! formula `L(1, chi) = 2 h log(eps) / sqrt(D)`.

use num_bigint::BigInt;
use num_traits::{Signed, ToPrimitive};
use serde::Serialize;

use super::EulerError;
use crate::arith::{isqrt_u128, kronecker, ln_big, squarefree_decomposition};

/// Required agreement between the two evaluations.
pub const DUAL_METHOD_TOLERANCE: f64 = 1e-8;

/// `(x + y sqrt(d)) / denom` with `denom` 1 or 2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QuadraticUnit {
    #[serde(serialize_with = "big_as_string")]
    pub x: BigInt,
    #[serde(serialize_with = "big_as_string")]
    pub y: BigInt,
    pub denom: u8,
    pub norm: i8,
}

fn big_as_string<S: serde::Serializer>(v: &BigInt, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

impl QuadraticUnit {
    pub fn ln(&self, d: u64) -> f64 {
        match (self.x.to_f64(), self.y.to_f64()) {
            (Some(x), Some(y)) if x.is_finite() && y.is_finite() && x < 1e300 => {
                ((x + y * (d as f64).sqrt()) / self.denom as f64).ln()
            }
            // eps = trace - eps', and |eps'| = 1/eps is negligible here
            _ => ln_big(&(&self.x * 2)) - (self.denom as f64).ln(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LValue {
    pub delta0: u64,
    pub discriminant: u64,
    pub value: f64,
    /// Truncated Dirichlet series with the partial-summation tail estimate.
    pub series: f64,
    pub series_error_bound: f64,
    pub series_terms: u64,
    /// `2 h log(eps) / sqrt(D)`.
    pub class_number_formula: f64,
    pub class_number: u64,
    pub narrow_class_number: u64,
    pub unit: QuadraticUnit,
}

/// Fundamental discriminant of `Q(sqrt(delta0))` for squarefree `delta0 > 1`.
pub fn fundamental_discriminant(delta0: u64) -> u64 {
    if delta0 % 4 == 1 {
        delta0
    } else {
        4 * delta0
    }
}

pub fn character_table(discriminant: u64) -> Vec<i8> {
    (0..discriminant).map(|n| if n == 0 { 0 } else { kronecker(discriminant as i64, n) as i8 }).collect()
}

/// `sum_{n <= N} chi(n)/n + m/N` with `N` a multiple of the period, plus
/// a bound on what the correction leaves out.
///
/// For `N ≡ 0 mod D` the tail equals `∫_N^∞ S(x)/x^2 dx` with `S` the
/// periodic partial sum. Splitting `S` into its mean `m` and a zero-mean
/// part whose antiderivative is bounded by `I` gives `tail = m/N + E`,
/// `|E| <= I / N^2`.
pub fn dirichlet_series(discriminant: u64, target_error: f64) -> (f64, f64, u64) {
    let chi = character_table(discriminant);
    let d = discriminant as usize;
    let mut partial = Vec::with_capacity(d);
    let mut s = 0i64;
    for &c in chi.iter() {
        s += c as i64;
        partial.push(s as f64);
    }
    // partial[r] = S on [r, r+1)
    let mean = partial.iter().sum::<f64>() / d as f64;
    let mut integral = 0.0f64;
    let mut antiderivative_max = 0.0f64;
    for &sr in partial.iter() {
        integral += sr - mean;
        antiderivative_max = antiderivative_max.max(integral.abs());
    }
    let periods = ((antiderivative_max / target_error).sqrt() / d as f64).ceil().max(16.0) as u64;
    let n_terms = periods * discriminant;

    // Neumaier summation, one period of reciprocals at a time
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    let mut add = |v: f64| {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    };
    for block in 0..periods {
        let base = block * discriminant;
        let mut block_sum = 0.0;
        for (r, &c) in chi.iter().enumerate().skip(1).chain(std::iter::once((d, &chi[0]))) {
            if c != 0 {
                block_sum += c as f64 / (base + r as u64) as f64;
            }
        }
        add(block_sum);
    }
    add(mean / n_terms as f64);
    let bound = antiderivative_max / (n_terms as f64 * n_terms as f64);
    (sum + comp, bound, n_terms)
}

/// Smallest unit `> 1` of the maximal order, from the continued fraction of
/// its generator `omega` (`sqrt(d)` or `(1 + sqrt(d))/2`).
pub fn fundamental_unit(delta0: u64) -> QuadraticUnit {
    let d = delta0 as u128;
    let root = isqrt_u128(d) as i128;
    let half = delta0 % 4 == 1;
    let (mut p_cf, mut q_cf): (i128, i128) = if half { (1, 2) } else { (0, 1) };
    let (mut p_prev, mut p_cur) = (BigInt::from(0), BigInt::from(1));
    let (mut q_prev, mut q_cur) = (BigInt::from(1), BigInt::from(0));
    let quarter = BigInt::from((delta0 as i128 - 1) / 4);
    let bd = BigInt::from(delta0);
    loop {
        debug_assert!(q_cf > 0);
        let a = (p_cf + root).div_euclid(q_cf);
        let p_next = BigInt::from(a) * &p_cur + &p_prev;
        let q_next = BigInt::from(a) * &q_cur + &q_prev;
        p_prev = std::mem::replace(&mut p_cur, p_next);
        q_prev = std::mem::replace(&mut q_cur, q_next);
        let norm = if half {
            &p_cur * &p_cur - &p_cur * &q_cur - &q_cur * &q_cur * &quarter
        } else {
            &p_cur * &p_cur - &bd * &q_cur * &q_cur
        };
        if norm.abs() == BigInt::from(1) {
            let norm = if norm.is_positive() { 1 } else { -1 };
            return if half {
                QuadraticUnit { x: &p_cur * 2 - &q_cur, y: q_cur, denom: 2, norm }
            } else {
                QuadraticUnit { x: p_cur, y: q_cur, denom: 1, norm }
            };
        }
        // next complete quotient (P + sqrt(d)) / Q
        p_cf = a * q_cf - p_cf;
        q_cf = (d as i128 - p_cf * p_cf) / q_cf;
    }
}

/// Number of proper equivalence classes of primitive forms of discriminant
/// `D > 0`, counted as cycles of reduced forms under the reduction operator.
pub fn narrow_class_number(discriminant: u64) -> u64 {
    let d = discriminant as i64;
    let s = isqrt_u128(discriminant as u128) as i64;
    // u < sqrt(D) + b  and  sqrt(D) - b < u, for integer u and irrational sqrt(D)
    let below_root_plus = |u: i64, b: i64| u - b < 0 || (u - b) * (u - b) < d;
    let above_root_minus = |u: i64, b: i64| u + b > 0 && (u + b) * (u + b) > d;
    let is_reduced = |a: i64, b: i64| {
        let u = 2 * a.abs();
        b > 0 && b * b < d && above_root_minus(u, b) && below_root_plus(u, b)
    };
    let primitive = |a: i64, b: i64, c: i64| {
        use num_integer::Integer;
        a.gcd(&b).gcd(&c) == 1
    };
    let mut reduced = Vec::new();
    for b in 1..=s {
        if (b - d).rem_euclid(2) != 0 {
            continue;
        }
        let ac = (b * b - d) / 4;
        for a_abs in 1..=ac.abs() {
            if ac % a_abs != 0 {
                continue;
            }
            for a in [a_abs, -a_abs] {
                let c = ac / a;
                if is_reduced(a, b) && primitive(a, b, c) {
                    reduced.push((a, b, c));
                }
            }
        }
    }
    let rho = |(_, b, c): (i64, i64, i64)| {
        let m = 2 * c.abs();
        let b_next = s - (s + b).rem_euclid(m);
        (c, b_next, (b_next * b_next - d) / (4 * c))
    };
    let mut seen = vec![false; reduced.len()];
    let mut cycles = 0;
    for start in 0..reduced.len() {
        if seen[start] {
            continue;
        }
        cycles += 1;
        let mut form = reduced[start];
        loop {
            let idx = reduced.iter().position(|&g| g == form).expect("rho preserves reducedness");
            if seen[idx] {
                break;
            }
            seen[idx] = true;
            form = rho(form);
        }
    }
    cycles
}

pub fn dirichlet_l1(delta0: u64) -> Result<LValue, EulerError> {
    if delta0 <= 1 || squarefree_decomposition(delta0)?.1 != 1 {
        return Err(EulerError::NotApplicable(format!("delta0 = {delta0} must be squarefree and > 1")));
    }
    let disc = fundamental_discriminant(delta0);
    let (series, series_error_bound, series_terms) = dirichlet_series(disc, 1e-12);
    let unit = fundamental_unit(delta0);
    let narrow = narrow_class_number(disc);
    let class_number = if unit.norm == -1 { narrow } else { narrow / 2 };
    let class_number_formula = 2.0 * class_number as f64 * unit.ln(delta0) / (disc as f64).sqrt();
    if (series - class_number_formula).abs() > DUAL_METHOD_TOLERANCE {
        return Err(EulerError::Disagreement { delta0, series, class_number_formula });
    }
    Ok(LValue {
        delta0,
        discriminant: disc,
        value: class_number_formula,
        series,
        series_error_bound,
        series_terms,
        class_number_formula,
        class_number,
        narrow_class_number: narrow,
        unit,
    })
}
