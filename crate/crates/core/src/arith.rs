//! Elementary integer arithmetic: primality, factorization, residue symbols.
//!
//! Factorization is Pollard rho with Brent's cycle detection on top of a
//! deterministic Miller-Rabin test that is exact for every `u64`.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FactorError {
    #[error("pollard rho exhausted its retry budget on {0}")]
    Timeout(u64),
}

/// Miller-Rabin witnesses that decide primality for every n < 2^64.
const MR_BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

const SMALL_PRIMES: [u64; 25] =
    [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97];

#[inline]
pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    if m == 1 {
        return 0;
    }
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &p in SMALL_PRIMES.iter() {
        if n == p {
            return true;
        }
        if n.is_multiple_of(p) {
            return false;
        }
    }
    let s = (n - 1).trailing_zeros();
    let d = (n - 1) >> s;
    'witness: for &a in MR_BASES.iter() {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn gcd_u64(a: u64, b: u64) -> u64 {
    a.gcd(&b)
}

/// One Brent run of `x -> x^2 + c`. Returns a nontrivial factor or `None`.
fn brent(n: u64, c: u64, seed: u64) -> Option<u64> {
    const BATCH: u64 = 128;
    let f = |x: u64| (mul_mod(x, x, n) + c) % n;
    let mut y = seed % n;
    let mut r = 1u64;
    let mut q = 1u64;
    let mut g = 1u64;
    let mut x = y;
    let mut ys = y;
    while g == 1 {
        x = y;
        for _ in 0..r {
            y = f(y);
        }
        let mut k = 0;
        while k < r && g == 1 {
            ys = y;
            for _ in 0..BATCH.min(r - k) {
                y = f(y);
                q = mul_mod(q, x.abs_diff(y), n);
            }
            g = gcd_u64(q, n);
            k += BATCH;
        }
        r <<= 1;
        if r > 1 << 26 {
            return None;
        }
    }
    if g == n {
        // batch overshot: replay one step at a time
        loop {
            ys = f(ys);
            g = gcd_u64(x.abs_diff(ys), n);
            if g > 1 {
                break;
            }
        }
    }
    (g != n).then_some(g)
}

fn find_factor(n: u64, budget: u32) -> Result<u64, FactorError> {
    if n.is_multiple_of(2) {
        return Ok(2);
    }
    for attempt in 0..budget as u64 {
        if let Some(d) = brent(n, attempt + 1, attempt + 2) {
            return Ok(d);
        }
    }
    Err(FactorError::Timeout(n))
}

/// Default number of distinct rho parameters tried before giving up on a
/// composite.
pub const DEFAULT_RETRY_BUDGET: u32 = 64;

/// Prime factorization as sorted `(prime, exponent)` pairs. `factorize(1)`
/// is empty; `factorize(0)` is empty as well and callers must special-case it.
pub fn factorize(n: u64) -> Result<Vec<(u64, u32)>, FactorError> {
    factorize_with_budget(n, DEFAULT_RETRY_BUDGET)
}

pub fn factorize_with_budget(mut n: u64, budget: u32) -> Result<Vec<(u64, u32)>, FactorError> {
    let mut primes: Vec<u64> = Vec::new();
    if n == 0 {
        return Ok(Vec::new());
    }
    for &p in SMALL_PRIMES.iter() {
        while n.is_multiple_of(p) {
            primes.push(p);
            n /= p;
        }
    }
    let mut stack = vec![n];
    while let Some(m) = stack.pop() {
        if m == 1 {
            continue;
        }
        if is_prime(m) {
            primes.push(m);
            continue;
        }
        if let Some(r) = perfect_square_root(m) {
            stack.push(r);
            stack.push(r);
            continue;
        }
        let d = find_factor(m, budget)?;
        stack.push(d);
        stack.push(m / d);
    }
    primes.sort_unstable();
    let mut out: Vec<(u64, u32)> = Vec::new();
    for p in primes {
        match out.last_mut() {
            Some((q, e)) if *q == p => *e += 1,
            _ => out.push((p, 1)),
        }
    }
    Ok(out)
}

pub fn isqrt_u128(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as u128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

pub fn perfect_square_root(n: u64) -> Option<u64> {
    let r = isqrt_u128(n as u128) as u64;
    (r as u128 * r as u128 == n as u128).then_some(r)
}

pub fn perfect_square_root_big(n: &BigInt) -> Option<BigInt> {
    if n.is_negative() {
        return None;
    }
    let r = n.sqrt();
    (&r * &r == *n).then_some(r)
}

/// Exponent of `p` in `n`; `n` must be nonzero.
pub fn valuation(p: u64, mut n: u128) -> u32 {
    debug_assert!(n != 0 && p > 1);
    let p = p as u128;
    let mut v = 0;
    while n.is_multiple_of(p) {
        n /= p;
        v += 1;
    }
    v
}

pub fn valuation_big(p: u64, n: &BigInt) -> u32 {
    debug_assert!(!n.is_zero());
    let p = BigInt::from(p);
    let mut n = n.abs();
    let mut v = 0;
    loop {
        let (q, r) = n.div_rem(&p);
        if !r.is_zero() {
            return v;
        }
        n = q;
        v += 1;
    }
}

/// Primes up to and including `limit`.
pub fn primes_up_to(limit: u64) -> Vec<u64> {
    if limit < 2 {
        return Vec::new();
    }
    let limit = limit as usize;
    let mut composite = vec![false; limit + 1];
    let mut out = Vec::new();
    for i in 2..=limit {
        if composite[i] {
            continue;
        }
        out.push(i as u64);
        let mut j = i * i;
        while j <= limit {
            composite[j] = true;
            j += i;
        }
    }
    out
}

/// Jacobi symbol (a/n) for odd positive n.
pub fn jacobi(a: i64, n: u64) -> i32 {
    assert!(n % 2 == 1, "jacobi symbol needs an odd modulus");
    let mut a = a.rem_euclid(n as i64) as u64;
    let mut n = n;
    let mut sign = 1;
    while a != 0 {
        while a.is_multiple_of(2) {
            a /= 2;
            if n % 8 == 3 || n % 8 == 5 {
                sign = -sign;
            }
        }
        std::mem::swap(&mut a, &mut n);
        if a % 4 == 3 && n % 4 == 3 {
            sign = -sign;
        }
        a %= n;
    }
    if n == 1 {
        sign
    } else {
        0
    }
}

/// Legendre symbol (a/p) for an odd prime p.
pub fn legendre(a: i64, p: u64) -> i32 {
    jacobi(a, p)
}

/// Kronecker symbol (d/n) for n >= 1.
pub fn kronecker(d: i64, n: u64) -> i32 {
    assert!(n >= 1);
    let twos = n.trailing_zeros();
    let odd = n >> twos;
    let mut out = 1;
    if twos > 0 {
        let k2 = if d % 2 == 0 {
            0
        } else {
            match d.rem_euclid(8) {
                1 | 7 => 1,
                _ => -1,
            }
        };
        if k2 == 0 {
            return 0;
        }
        if twos % 2 == 1 {
            out = k2;
        }
    }
    if odd > 1 {
        out *= jacobi(d, odd);
    }
    out
}

/// Writes `n = core * root^2` with `core` squarefree.
pub fn squarefree_decomposition(n: u64) -> Result<(u64, u64), FactorError> {
    let mut core = 1u64;
    let mut root = 1u64;
    for (p, e) in factorize(n)? {
        if e % 2 == 1 {
            core *= p;
        }
        root *= p.pow(e / 2);
    }
    Ok((core, root))
}

/// Smallest quadratic non-residue modulo an odd prime.
fn nonresidue(p: u64) -> u64 {
    (2..p).find(|&c| legendre(c as i64, p) == -1).expect("odd prime has a non-residue")
}

/// The unique `(a, b)` with `a > b > 0`, `a^2 + b^2 = p` for a prime `p ≡ 1 mod 4`
/// (Hermite-Serret descent from a square root of -1).
pub fn two_square_prime(p: u64) -> (u64, u64) {
    debug_assert!(p % 4 == 1 && is_prime(p));
    let c = nonresidue(p);
    let r = pow_mod(c, (p - 1) / 4, p);
    let bound = isqrt_u128(p as u128) as u64;
    let (mut a, mut b) = (p, r.min(p - r));
    while b > bound {
        let t = a % b;
        a = b;
        b = t;
    }
    let other = perfect_square_root(p - b * b).expect("descent lands on a two-square decomposition");
    (other.max(b), other.min(b))
}

/// Natural logarithm of a positive big integer that may exceed `f64` range.
pub fn ln_big(n: &BigInt) -> f64 {
    debug_assert!(n.is_positive());
    let bits = n.bits();
    if bits < 1000 {
        return n.to_f64().expect("fits in f64").ln();
    }
    let shift = bits - 64;
    let top: BigInt = n >> shift;
    top.to_f64().expect("64-bit head").ln() + shift as f64 * std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn primality_agrees_with_sieve() {
        let sieve = primes_up_to(20_000);
        let from_mr: Vec<u64> = (0..=20_000).filter(|&n| is_prime(n)).collect();
        assert_eq!(sieve, from_mr);
    }

    #[test]
    fn strong_pseudoprimes_are_rejected() {
        // base-2 strong pseudoprimes and a Carmichael number
        for n in [2047u64, 3215031751, 3825123056546413051, 561] {
            assert!(!is_prime(n), "{n}");
        }
        assert!(is_prime(18446744073709551557));
    }

    #[test]
    fn factorization_multiplies_back() {
        for n in [1u64, 2, 97, 1_000_000_007 * 998_244_353, 600851475143, 1 << 63, 99991 * 99991] {
            let f = factorize(n).unwrap();
            let back: u64 = f.iter().map(|&(p, e)| p.pow(e)).product();
            assert_eq!(back, n);
            assert!(f.iter().all(|&(p, _)| is_prime(p)));
        }
    }

    #[test]
    fn kronecker_matches_legendre_on_primes() {
        for &p in primes_up_to(200).iter().skip(1) {
            for d in -30i64..30 {
                let euler = match pow_mod(d.rem_euclid(p as i64) as u64, (p - 1) / 2, p) {
                    0 => 0,
                    1 => 1,
                    _ => -1,
                };
                assert_eq!(kronecker(d, p), euler, "({d}/{p})");
            }
        }
        assert_eq!(kronecker(8, 2), 0);
        assert_eq!(kronecker(5, 2), -1);
        assert_eq!(kronecker(17, 2), 1);
        assert_eq!(kronecker(12, 7), -1);
        assert_eq!(kronecker(12, 11), 1);
    }

    #[test]
    fn two_square_primes() {
        for &p in primes_up_to(5000).iter().filter(|&&p| p % 4 == 1) {
            let (a, b) = two_square_prime(p);
            assert_eq!(a * a + b * b, p);
        }
    }

    #[test]
    fn squarefree_parts() {
        assert_eq!(squarefree_decomposition(72).unwrap(), (2, 6));
        assert_eq!(squarefree_decomposition(1).unwrap(), (1, 1));
        assert_eq!(squarefree_decomposition(45).unwrap(), (5, 3));
    }
}
