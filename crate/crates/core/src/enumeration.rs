//! Exact counts `N(f, a, T) = #{v in Z^3 : f(v) = a, ||v|| <= T}`.
//!
//! `count_generic` works for any form: it scans two coordinates over the box
//! and solves the remaining quadratic exactly. `count_family_fast` handles
//! `x^2 + y^2 - delta z^2 = a` by iterating `z` and reading the number of
//! representations of `a + delta z^2` as a sum of two squares off its
//! factorization.

use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arith::{factorize_with_budget, isqrt_u128, two_square_prime, FactorError, DEFAULT_RETRY_BUDGET};
use crate::forms::{FormError, NormKind, NormSpec, Target, TernaryForm};

/// Largest `T` accepted by the generic scan.
pub const GENERIC_T_GUARD: f64 = 1e6;
/// Largest `T` accepted by the family path (keeps `a + delta z^2` in a `u64`).
pub const FAMILY_T_GUARD: f64 = 1e9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnumError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error(transparent)]
    Factor(#[from] FactorError),
    #[error("T must be finite and non-negative (got {0})")]
    InvalidRadius(f64),
    #[error("T = {t} exceeds the width guard {guard} of this counting path")]
    Overflow { t: f64, guard: f64 },
    #[error("the fast path needs x^2 + y^2 - delta z^2 with delta >= 1")]
    NotFamily,
    #[error("counts disagree at T = {t}: generic {generic}, fast {fast}")]
    Mismatch { t: u64, generic: u64, fast: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CountMethod {
    GenericScan,
    FamilyR2,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountResult {
    #[serde(rename = "T")]
    pub t: f64,
    pub count: u64,
    pub method: CountMethod,
    pub norm: NormKind,
    pub elapsed_ms: u64,
}

fn check_radius(t: f64, guard: f64) -> Result<i64, EnumError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(EnumError::InvalidRadius(t));
    }
    if t > guard {
        return Err(EnumError::Overflow { t, guard });
    }
    Ok(t.floor() as i64)
}

fn within(norm: NormSpec, v: [i64; 3], t: f64, bound: i64) -> bool {
    match norm.kind {
        NormKind::Euclidean => {
            let n: i128 = v.iter().map(|&c| c as i128 * c as i128).sum();
            // n < 2^53 for every T under the guard, so the comparison is exact
            (n as f64) <= t * t
        }
        NormKind::Sup => v.iter().all(|c| c.abs() <= bound),
    }
}

/// `f` written as `A k^2 + B(u, w) k + C(u, w)` in one chosen variable `k`.
struct Slice {
    k: usize,
    u: usize,
    w: usize,
    /// `A`, then the coefficients of `u`, `w` in `B`, then `u^2, w^2, uw` in `C`.
    a: i128,
    b: [i128; 2],
    c: [i128; 3],
}

impl Slice {
    fn new(form: &TernaryForm) -> Slice {
        let [a11, a22, a33, a12, a13, a23] = form.coeffs().map(|c| c as i128);
        let diag = [a11, a22, a33];
        // off[i][j]: coefficient of x_i x_j
        let off = [[0, a12, a13], [a12, 0, a23], [a13, a23, 0]];
        let k = [1usize, 0, 2].into_iter().find(|&i| diag[i] != 0).unwrap_or(2);
        let (u, w) = match k {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        Slice { k, u, w, a: diag[k], b: [off[k][u], off[k][w]], c: [diag[u], diag[w], off[u][w]] }
    }

    /// Integer roots `k` of `f = target` at fixed `(u, w)`, within `[-bound, bound]`.
    fn roots(&self, u: i64, w: i64, target: i128, bound: i64, out: &mut Vec<i64>) -> Result<(), EnumError> {
        out.clear();
        let (u, w) = (u as i128, w as i128);
        let ovf = || EnumError::Form(FormError::Overflow);
        let b = self.b[0].checked_mul(u).and_then(|x| x.checked_add(self.b[1].checked_mul(w)?)).ok_or_else(ovf)?;
        let c = self.c[0]
            .checked_mul(u * u)
            .and_then(|x| x.checked_add(self.c[1].checked_mul(w * w)?))
            .and_then(|x| x.checked_add(self.c[2].checked_mul(u * w)?))
            .and_then(|x| x.checked_sub(target))
            .ok_or_else(ovf)?;
        let push = |k: i128, out: &mut Vec<i64>| {
            if k.abs() <= bound as i128 {
                out.push(k as i64);
            }
        };
        if self.a == 0 {
            // only possible when every diagonal coefficient vanishes: linear in k
            if b != 0 {
                if c % b == 0 {
                    push(-c / b, out);
                }
            } else if c == 0 {
                out.extend(-bound..=bound);
            }
            return Ok(());
        }
        let disc =
            b.checked_mul(b).and_then(|bb| bb.checked_sub(self.a.checked_mul(4)?.checked_mul(c)?)).ok_or_else(ovf)?;
        if disc < 0 {
            return Ok(());
        }
        let s = isqrt_u128(disc as u128) as i128;
        if s * s != disc {
            return Ok(());
        }
        let den = 2 * self.a;
        for num in [-b + s, -b - s] {
            if num % den == 0 {
                push(num / den, out);
            }
            if s == 0 {
                break;
            }
        }
        Ok(())
    }
}

/// Exact count by a two-dimensional scan with an exact quadratic solve.
pub fn count_generic(form: &TernaryForm, a: Target, t: f64, norm: NormSpec) -> Result<CountResult, EnumError> {
    count_generic_with_guard(form, a, t, norm, GENERIC_T_GUARD)
}

/// As [`count_generic`] with a caller-chosen radius guard, clamped to the default.
pub fn count_generic_with_guard(
    form: &TernaryForm,
    a: Target,
    t: f64,
    norm: NormSpec,
    guard: f64,
) -> Result<CountResult, EnumError> {
    let start = Instant::now();
    let bound = check_radius(t, guard.min(GENERIC_T_GUARD))?;
    let slice = Slice::new(form);
    let target = a.get() as i128;
    let count = (-bound..=bound)
        .into_par_iter()
        .map(|u| -> Result<u64, EnumError> {
            let mut roots = Vec::with_capacity(2);
            let mut n = 0u64;
            for w in -bound..=bound {
                slice.roots(u, w, target, bound, &mut roots)?;
                for &k in roots.iter() {
                    let mut v = [0i64; 3];
                    v[slice.k] = k;
                    v[slice.u] = u;
                    v[slice.w] = w;
                    if within(norm, v, t, bound) {
                        n += 1;
                    }
                }
            }
            Ok(n)
        })
        .try_reduce(|| 0, |x, y| Ok(x + y))?;
    Ok(CountResult {
        t,
        count,
        method: CountMethod::GenericScan,
        norm: norm.kind,
        elapsed_ms: start.elapsed().as_millis() as u64,
    })
}

/// Number of ordered pairs `(x, y)` with `x^2 + y^2 = m`.
pub fn r2(m: u64) -> Result<u64, FactorError> {
    r2_with_budget(m, DEFAULT_RETRY_BUDGET)
}

pub fn r2_with_budget(m: u64, budget: u32) -> Result<u64, FactorError> {
    if m == 0 {
        return Ok(1);
    }
    let mut prod = 4u64;
    for (p, e) in factorize_with_budget(m, budget)? {
        match p % 4 {
            1 => prod *= e as u64 + 1,
            3 if e % 2 == 1 => return Ok(0),
            _ => {}
        }
    }
    Ok(prod)
}

type Gaussian = (i128, i128);

fn gmul(x: Gaussian, y: Gaussian) -> Gaussian {
    (x.0 * y.0 - x.1 * y.1, x.0 * y.1 + x.1 * y.0)
}

fn gpow(x: Gaussian, e: u32) -> Gaussian {
    (0..e).fold((1, 0), |acc, _| gmul(acc, x))
}

/// Every `(x, y)` with `x^2 + y^2 = m`, from the Gaussian factorization of `m`.
pub fn two_square_representations(m: u64, budget: u32) -> Result<Vec<(i64, i64)>, FactorError> {
    if m == 0 {
        return Ok(vec![(0, 0)]);
    }
    let mut partial: Vec<Gaussian> = vec![(1, 0)];
    for (p, e) in factorize_with_budget(m, budget)? {
        match p % 4 {
            2 => {
                let g = gpow((1, 1), e);
                partial.iter_mut().for_each(|z| *z = gmul(*z, g));
            }
            3 => {
                if e % 2 == 1 {
                    return Ok(Vec::new());
                }
                let g = gpow((p as i128, 0), e / 2);
                partial.iter_mut().for_each(|z| *z = gmul(*z, g));
            }
            _ => {
                let (s, t) = two_square_prime(p);
                let pi = (s as i128, t as i128);
                let pibar = (s as i128, -(t as i128));
                let choices: Vec<Gaussian> = (0..=e).map(|k| gmul(gpow(pi, k), gpow(pibar, e - k))).collect();
                partial = partial.iter().flat_map(|&z| choices.iter().map(move |&c| gmul(z, c))).collect();
            }
        }
    }
    let mut reps = Vec::with_capacity(4 * partial.len());
    for z in partial {
        let mut u = z;
        for _ in 0..4 {
            reps.push((u.0 as i64, u.1 as i64));
            u = gmul(u, (0, 1));
        }
    }
    Ok(reps)
}

/// Contribution of one `z` to the family count.
fn family_slice(delta: u64, a: i64, z: i64, t: f64, bound: i64, norm: NormSpec, budget: u32) -> Result<u64, EnumError> {
    let m = a as i128 + delta as i128 * (z as i128) * (z as i128);
    if m < 0 {
        return Ok(0);
    }
    let m = u64::try_from(m).map_err(|_| EnumError::Overflow { t, guard: FAMILY_T_GUARD })?;
    match norm.kind {
        NormKind::Euclidean => {
            if (m as f64 + (z as f64) * (z as f64)) > t * t {
                return Ok(0);
            }
            Ok(r2_with_budget(m, budget)?)
        }
        NormKind::Sup => {
            let b = bound as u128;
            if z.unsigned_abs() as u128 > b || m as u128 > 2 * b * b {
                return Ok(0);
            }
            if (m as u128) <= b * b {
                return Ok(r2_with_budget(m, budget)?);
            }
            let reps = two_square_representations(m, budget)?;
            Ok(reps.iter().filter(|(x, y)| x.abs() <= bound && y.abs() <= bound).count() as u64)
        }
    }
}

/// Largest `|z|` that can contribute at radius `T`.
fn z_reach(delta: u64, a: i64, t: f64, bound: i64, norm: NormSpec) -> i64 {
    match norm.kind {
        // a + (1 + delta) z^2 <= T^2
        NormKind::Euclidean => {
            let r = ((t * t - a as f64) / (1.0 + delta as f64)).max(0.0).sqrt().floor() as i64 + 1;
            r.min(bound)
        }
        NormKind::Sup => bound,
    }
}

fn family_delta(form: &TernaryForm) -> Result<u64, EnumError> {
    form.family_delta().filter(|&d| d >= 1).ok_or(EnumError::NotFamily)
}

/// Exact count for `x^2 + y^2 - delta z^2 = a` by summing `r2(a + delta z^2)`.
pub fn count_family_fast(delta: u64, a: Target, t: f64, norm: NormSpec) -> Result<CountResult, EnumError> {
    count_family_fast_with_budget(delta, a, t, norm, DEFAULT_RETRY_BUDGET)
}

pub fn count_family_fast_with_budget(
    delta: u64,
    a: Target,
    t: f64,
    norm: NormSpec,
    budget: u32,
) -> Result<CountResult, EnumError> {
    let start = Instant::now();
    if delta == 0 {
        return Err(EnumError::NotFamily);
    }
    let bound = check_radius(t, FAMILY_T_GUARD)?;
    let reach = z_reach(delta, a.get(), t, bound, norm);
    let count = sum_over_z(delta, a.get(), 0, reach, t, bound, norm, budget)?;
    Ok(CountResult {
        t,
        count,
        method: CountMethod::FamilyR2,
        norm: norm.kind,
        elapsed_ms: start.elapsed().as_millis() as u64,
    })
}

/// Sum of slices over `lo <= |z| <= hi`.
#[allow(clippy::too_many_arguments)]
fn sum_over_z(
    delta: u64,
    a: i64,
    lo: i64,
    hi: i64,
    t: f64,
    bound: i64,
    norm: NormSpec,
    budget: u32,
) -> Result<u64, EnumError> {
    if hi < lo {
        return Ok(0);
    }
    const CHUNK: i64 = 1024;
    let chunks = (hi - lo) / CHUNK + 1;
    (0..chunks)
        .into_par_iter()
        .map(|c| -> Result<u64, EnumError> {
            let first = lo + c * CHUNK;
            let last = (first + CHUNK - 1).min(hi);
            let mut n = 0u64;
            for z in first..=last {
                let s = family_slice(delta, a, z, t, bound, norm, budget)?;
                n += if z == 0 { s } else { 2 * s };
            }
            Ok(n)
        })
        .try_reduce(|| 0, |x, y| Ok(x + y))
}

/// Running Euclidean family count that only processes new `z` as `T` grows.
#[derive(Debug, Clone)]
pub struct FamilyAccumulator {
    delta: u64,
    a: Target,
    norm: NormSpec,
    budget: u32,
    next_z: i64,
    total: u64,
    last_t: f64,
}

impl FamilyAccumulator {
    pub fn new(delta: u64, a: Target, norm: NormSpec) -> Result<Self, EnumError> {
        if delta == 0 {
            return Err(EnumError::NotFamily);
        }
        Ok(FamilyAccumulator { delta, a, norm, budget: DEFAULT_RETRY_BUDGET, next_z: 0, total: 0, last_t: 0.0 })
    }

    /// Count at radius `t`, which must not be below the previous radius.
    pub fn advance_to(&mut self, t: f64) -> Result<CountResult, EnumError> {
        if t < self.last_t {
            return Err(EnumError::InvalidRadius(t));
        }
        if self.norm.kind == NormKind::Sup {
            // sup-norm slices depend on T through the (x, y) filter
            self.last_t = t;
            return count_family_fast_with_budget(self.delta, self.a, t, self.norm, self.budget);
        }
        let start = Instant::now();
        let bound = check_radius(t, FAMILY_T_GUARD)?;
        // a + (1 + delta) z^2 is increasing in |z|, so slices switch on in order
        let reach = z_reach(self.delta, self.a.get(), t, bound, self.norm);
        let mut hi = self.next_z;
        while hi <= reach && self.slice_live(hi, t) {
            hi += 1;
        }
        self.total += sum_over_z(self.delta, self.a.get(), self.next_z, hi - 1, t, bound, self.norm, self.budget)?;
        self.next_z = hi;
        self.last_t = t;
        Ok(CountResult {
            t,
            count: self.total,
            method: CountMethod::FamilyR2,
            norm: self.norm.kind,
            elapsed_ms: start.elapsed().as_millis() as u64,
        })
    }

    fn slice_live(&self, z: i64, t: f64) -> bool {
        let m = self.a.get() as f64 + self.delta as f64 * (z as f64) * (z as f64);
        m + (z as f64) * (z as f64) <= t * t
    }
}

/// Dual-method agreement at every integer `T <= t_max`.
pub fn cross_check(form: &TernaryForm, a: Target, t_max: u64, norm: NormSpec) -> Result<(), EnumError> {
    let delta = family_delta(form)?;
    let results: Vec<Result<(), EnumError>> = (0..=t_max)
        .into_par_iter()
        .map(|t| {
            let g = count_generic(form, a, t as f64, norm)?.count;
            let f = count_family_fast(delta, a, t as f64, norm)?.count;
            if g == f {
                Ok(())
            } else {
                Err(EnumError::Mismatch { t, generic: g, fast: f })
            }
        })
        .collect();
    results.into_iter().collect()
}
