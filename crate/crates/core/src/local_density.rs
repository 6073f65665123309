//! p-adic local densities `alpha_p(f, a) = lim count(p^k) / p^(2k)`.
//!
//! `count(p^k)` is the number of `(x, y, z) mod p^k` with `f ≡ a`. For
//! diagonal forms (and, at odd p, for any form after a p-adic
//! diagonalization) the count is assembled from square-root tables in
//! `O(k p^k)` time: the pair count `#{c1 x^2 + c2 y^2 ≡ s}` is constant on
//! orbits of `s` under multiplication by unit squares, and there are only
//! `O(k)` such orbits.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::arith::{is_prime, legendre, valuation, valuation_big};
use crate::forms::{Target, TernaryForm};

/// Largest modulus `p^k` a single count may use.
pub const DEFAULT_CAP: u64 = 10_000_000;

/// Bound on `p^(3k)` for the plain triple loop used by non-diagonal forms at p = 2.
pub const TRIPLE_LOOP_CAP: u128 = 20_000_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DensityError {
    #[error("modulus {p}^{k} exceeds the cap {cap}")]
    CapExceeded { p: u64, k: u32, cap: u64 },
    #[error("counts mod {p}^k did not settle into p^2 growth up to k = {k_cap}")]
    NotStabilized { p: u64, k_cap: u32 },
    #[error("{0} is not prime")]
    NotPrime(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DensityConfig {
    pub cap: u64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig { cap: DEFAULT_CAP }
    }
}

/// Which branch of the closed-form table for `x^2 + y^2 - delta z^2 = 1` applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ClosedFormCase {
    /// p odd, p ∤ delta: `1 + (delta/p)/p`.
    OddCoprime,
    /// p odd, p | delta: `1 - (-1/p)/p`.
    OddDividing,
    /// p = 2, 4 | delta or delta ≡ 1 mod 8: `1`.
    TwoFourDividesOrOneMod8,
    /// p = 2, delta ≡ 3, 7 mod 8: `3/4`.
    TwoThreeOrSevenMod8,
    /// p = 2, 2 || delta or delta ≡ 5 mod 8: `1/2`.
    TwoExactlyEvenOrFiveMod8,
    /// Generic `1 + 1/p` at primes outside `2 a det(2G)` in the square case.
    UnramifiedSquare,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum DensityMethod {
    BruteForce { k_used: u32 },
    ClosedForm(ClosedFormCase),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalDensity {
    pub p: u64,
    pub value: BigRational,
    pub method: DensityMethod,
    pub stabilized: bool,
    /// `count(p^k), count(p^(k+1)), count(p^(k+2))` for brute-force results.
    pub counts: Vec<u128>,
}

fn checked_modulus(p: u64, k: u32, cap: u64) -> Result<u64, DensityError> {
    p.checked_pow(k).filter(|&m| m <= cap).ok_or(DensityError::CapExceeded { p, k, cap })
}

/// `table[r] = #{w mod p^k : w^2 ≡ r}`.
pub fn sqrt_count_table(p: u64, k: u32, cap: u64) -> Result<Vec<u32>, DensityError> {
    let m = checked_modulus(p, k, cap)?;
    Ok(scaled_square_table(1, m))
}

/// `table[r] = #{w mod m : c w^2 ≡ r}`.
fn scaled_square_table(c: u64, m: u64) -> Vec<u32> {
    let mut table = vec![0u32; m as usize];
    let c = (c % m) as u128;
    for w in 0..m {
        let r = ((w as u128 * w as u128 % m as u128) * c % m as u128) as usize;
        table[r] += 1;
    }
    table
}

/// Labels residues mod p^k by their orbit under multiplication by unit squares.
struct OrbitLabels {
    p: u64,
    k: u32,
    residue_is_square: Vec<bool>,
}

impl OrbitLabels {
    fn new(p: u64, k: u32) -> Self {
        let mut residue_is_square = vec![false; p as usize];
        if p != 2 {
            for w in 1..p {
                residue_is_square[(w * w % p) as usize] = true;
            }
        }
        OrbitLabels { p, k, residue_is_square }
    }

    fn count(&self) -> usize {
        1 + 4 * self.k as usize
    }

    fn label(&self, s: u64) -> usize {
        if s == 0 {
            return 0;
        }
        let mut t = s;
        let mut j = 0u32;
        while t.is_multiple_of(self.p) {
            t /= self.p;
            j += 1;
        }
        let rem = self.k - j;
        let class = if self.p == 2 {
            match rem {
                1 => 0,
                2 => ((t % 4) / 2) as usize,
                _ => ((t % 8) / 2) as usize,
            }
        } else if self.residue_is_square[(t % self.p) as usize] {
            0
        } else {
            1
        };
        1 + 4 * j as usize + class
    }
}

/// Solutions of `c1 x^2 + c2 y^2 + c3 z^2 ≡ a (mod m)`, `m = p^k`.
fn count_diagonal(c: [u64; 3], a: u64, p: u64, k: u32, m: u64) -> u128 {
    let t1 = scaled_square_table(c[0], m);
    let t2 = scaled_square_table(c[1], m);
    let t3 = scaled_square_table(c[2], m);
    let support1: Vec<(u64, u64)> =
        t1.iter().enumerate().filter(|(_, &n)| n > 0).map(|(r, &n)| (r as u64, n as u64)).collect();

    let labels = OrbitLabels::new(p, k);
    let mut reps: Vec<Option<u64>> = vec![None; labels.count()];
    for s in 0..m {
        let l = labels.label(s);
        if reps[l].is_none() {
            reps[l] = Some(s);
        }
    }
    let pair_count: Vec<u64> = reps
        .par_iter()
        .map(|rep| match rep {
            None => 0,
            Some(s) => support1.iter().map(|&(r1, n1)| n1 * t2[((s + m - r1) % m) as usize] as u64).sum(),
        })
        .collect();

    t3.par_iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(r3, &n3)| {
            let s = (a + m - r3 as u64) % m;
            pair_count[labels.label(s)] as u128 * n3 as u128
        })
        .sum()
}

fn rational_valuation(p: u64, r: &BigRational) -> Option<i64> {
    if r.is_zero() {
        return None;
    }
    Some(valuation_big(p, r.numer()) as i64 - valuation_big(p, r.denom()) as i64)
}

/// Diagonal entries of a form congruent to `gram` over `Z_p`, p odd.
///
/// Pivots on an entry of least valuation; when that entry is off-diagonal,
/// `e_i <- e_i + e_j` first moves it onto the diagonal. All multipliers are
/// p-integral, so the change of variables is invertible modulo every `p^k`.
fn diagonalize_p_adic(gram: &[[BigRational; 3]; 3], p: u64) -> Vec<BigRational> {
    debug_assert!(p != 2);
    let mut m: Vec<Vec<BigRational>> = gram.iter().map(|r| r.to_vec()).collect();
    let mut diag = Vec::with_capacity(3);
    while !m.is_empty() {
        let n = m.len();
        let mut best: Option<(i64, usize, usize)> = None;
        for i in 0..n {
            for j in 0..n {
                if let Some(v) = rational_valuation(p, &m[i][j]) {
                    // prefer diagonal entries on ties
                    let better = match best {
                        None => true,
                        Some((bv, bi, bj)) => v < bv || (v == bv && i == j && bi != bj),
                    };
                    if better {
                        best = Some((v, i, j));
                    }
                }
            }
        }
        let (_, i, j) = best.expect("nondegenerate form");
        if i != j {
            for k in 0..n {
                let add = m[j][k].clone();
                m[i][k] += add;
            }
            for k in 0..n {
                let add = m[k][j].clone();
                m[k][i] += add;
            }
        }
        let d = m[i][i].clone();
        let rest: Vec<usize> = (0..n).filter(|&k| k != i).collect();
        m = rest.iter().map(|&r| rest.iter().map(|&c| &m[r][c] - &m[r][i] * &m[i][c] / &d).collect()).collect();
        diag.push(d);
    }
    diag
}

/// `r mod m` for a p-integral rational `r`.
fn reduce_mod(r: &BigRational, m: u64) -> u64 {
    let mb = BigInt::from(m);
    let num = r.numer().mod_floor(&mb);
    let den = r.denom().mod_floor(&mb);
    let den_inv = den.extended_gcd(&mb).x.mod_floor(&mb);
    (num * den_inv).mod_floor(&mb).to_u64().expect("residue below modulus")
}

fn count_triple_loop(form: &TernaryForm, a: i64, m: u64) -> u128 {
    let [a11, a22, a33, a12, a13, a23] = form.coeffs().map(|c| c.rem_euclid(m as i64) as u128);
    let mm = m as u128;
    let target = a.rem_euclid(m as i64) as u128;
    (0..m)
        .into_par_iter()
        .map(|x| {
            let x = x as u128;
            let mut n = 0u128;
            for y in 0..mm {
                let base = (a11 * x % mm * x + a22 * y % mm * y + a12 * x % mm * y) % mm;
                let lin = (a13 * x + a23 * y) % mm;
                for z in 0..mm {
                    let v = (base + (a33 * z + lin) % mm * z) % mm;
                    if v == target {
                        n += 1;
                    }
                }
            }
            n
        })
        .sum()
}

/// `#{(x, y, z) mod p^k : f(x, y, z) ≡ a}`.
pub fn count_mod_pk(form: &TernaryForm, a: Target, p: u64, k: u32, cap: u64) -> Result<u128, DensityError> {
    if !is_prime(p) {
        return Err(DensityError::NotPrime(p));
    }
    let m = checked_modulus(p, k, cap)?;
    let target = a.get().rem_euclid(m as i64) as u64;
    if form.is_diagonal() {
        let c = form.coeffs();
        let c = [0, 1, 2].map(|i| c[i].rem_euclid(m as i64) as u64);
        return Ok(count_diagonal(c, target, p, k, m));
    }
    if p != 2 {
        let diag = diagonalize_p_adic(form.gram(), p);
        let c = [0, 1, 2].map(|i| reduce_mod(&diag[i], m));
        return Ok(count_diagonal(c, target, p, k, m));
    }
    if (m as u128).pow(3) > TRIPLE_LOOP_CAP {
        return Err(DensityError::CapExceeded { p, k, cap: m });
    }
    Ok(count_triple_loop(form, a.get(), m))
}

/// First exponent at which counts are guaranteed to grow by exactly `p^2`.
///
/// Every solution `v` satisfies `v · ∇f(v) = 2 f(v) ≡ 2a`, so the gradient
/// has valuation at most `e = v_p(2a)`; for `k ≥ 2e + 1` the solution set
/// mod `p^k` is a union of cosets of `p^(k-e)` on which one more digit of
/// precision cuts out exactly `1/p` of the measure.
pub fn stabilization_start(a: Target, p: u64) -> u32 {
    2 * valuation(p, 2 * a.get().unsigned_abs() as u128) + 1
}

/// `alpha_p(f, a)` from exact counts, confirmed by two consecutive `p^2` steps.
pub fn alpha_p_brute(form: &TernaryForm, a: Target, p: u64) -> Result<LocalDensity, DensityError> {
    alpha_p_brute_with(form, a, p, &DensityConfig::default())
}

pub fn alpha_p_brute_with(
    form: &TernaryForm,
    a: Target,
    p: u64,
    cfg: &DensityConfig,
) -> Result<LocalDensity, DensityError> {
    if !is_prime(p) {
        return Err(DensityError::NotPrime(p));
    }
    let p2 = (p as u128) * (p as u128);
    let mut k = stabilization_start(a, p);
    let mut counts: Vec<u128> = Vec::new();
    loop {
        while counts.len() < 3 {
            let kk = k + counts.len() as u32;
            match count_mod_pk(form, a, p, kk, cfg.cap) {
                Ok(n) => counts.push(n),
                Err(DensityError::CapExceeded { .. }) if k > stabilization_start(a, p) => {
                    return Err(DensityError::NotStabilized { p, k_cap: kk - 1 });
                }
                Err(e) => return Err(e),
            }
        }
        if counts[1] == p2 * counts[0] && counts[2] == p2 * counts[1] {
            let denom = BigInt::from(p).pow(2 * k);
            return Ok(LocalDensity {
                p,
                value: BigRational::new(BigInt::from(counts[0]), denom),
                method: DensityMethod::BruteForce { k_used: k },
                stabilized: true,
                counts,
            });
        }
        counts.remove(0);
        k += 1;
    }
}

fn closed(p: u64, value: BigRational, case: ClosedFormCase) -> LocalDensity {
    LocalDensity { p, value, method: DensityMethod::ClosedForm(case), stabilized: true, counts: Vec::new() }
}

fn frac(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// Closed-form table for `x^2 + y^2 - delta z^2 = 1`.
pub fn alpha_p_closed_family(delta: u64, p: u64) -> Result<LocalDensity, DensityError> {
    if !is_prime(p) {
        return Err(DensityError::NotPrime(p));
    }
    let pi = p as i64;
    if p != 2 {
        let density = if !delta.is_multiple_of(p) {
            let s = legendre(delta as i64, p) as i64;
            closed(p, BigRational::one() + frac(s, pi), ClosedFormCase::OddCoprime)
        } else {
            let s = legendre(-1, p) as i64;
            closed(p, BigRational::one() - frac(s, pi), ClosedFormCase::OddDividing)
        };
        return Ok(density);
    }
    let density = if delta.is_multiple_of(4) || delta % 8 == 1 {
        closed(2, BigRational::one(), ClosedFormCase::TwoFourDividesOrOneMod8)
    } else if delta % 8 == 3 || delta % 8 == 7 {
        closed(2, frac(3, 4), ClosedFormCase::TwoThreeOrSevenMod8)
    } else {
        // delta ≡ 2 mod 4 or delta ≡ 5 mod 8
        closed(2, frac(1, 2), ClosedFormCase::TwoExactlyEvenOrFiveMod8)
    };
    Ok(density)
}

/// `1 + 1/p`, valid in the square case for p outside `2 a det(2G)`.
pub fn alpha_p_unramified_square_case(p: u64) -> Result<LocalDensity, DensityError> {
    if !is_prime(p) {
        return Err(DensityError::NotPrime(p));
    }
    Ok(closed(p, BigRational::one() + frac(1, p as i64), ClosedFormCase::UnramifiedSquare))
}

/// Primes dividing `2 a det(2G)`.
pub fn ramified_primes(form: &TernaryForm, a: Target) -> Result<Vec<u64>, crate::arith::FactorError> {
    let n = form.det_of_double_gram() * BigInt::from(2 * a.get());
    let n = n.abs();
    // det(2G) is bounded by 8·(6·2^63)^3 in principle; peel small primes
    // exactly and hand the cofactor to rho when it fits a machine word.
    let mut rest = n;
    let mut primes = Vec::new();
    let mut d = 2u64;
    while d < 1_000_000 && rest > BigInt::one() {
        let bd = BigInt::from(d);
        if (&rest % &bd).is_zero() {
            primes.push(d);
            while (&rest % &bd).is_zero() {
                rest /= &bd;
            }
        }
        d += if d == 2 { 1 } else { 2 };
        if rest.bits() <= 64 {
            break;
        }
    }
    if rest > BigInt::one() {
        let r = rest.to_u64().expect("cofactor fits u64 after trial division");
        for (q, _) in crate::arith::factorize(r)? {
            if !primes.contains(&q) {
                primes.push(q);
            }
        }
    }
    primes.sort_unstable();
    Ok(primes)
}
