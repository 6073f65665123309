//! The archimedean factor: the Leray volume of `{f = a, ||v|| <= T}`.
//!
//! The measure `omega` on the surface is fixed by `omega ∧ df = dx dy dz`.
//! After an orthogonal change of variables `u = Q^T v` the form reads
//! `l1 u1^2 + l2 u2^2 - mu u3^2` (negating `f` and `a` if needed). With
//!
//! ```text
//! u1 = R cos(th) / sqrt(l1),  u2 = R sin(th) / sqrt(l2),  u3 = t,  R^2 = a + mu t^2
//! ```
//!
//! the Leray measure becomes `dth dt / (2 sqrt(l1 l2))` on every sheet, so
//! the volume is a one-dimensional integral over `th` of the length of the
//! admissible `t`-set. That length is available in closed form (Euclidean)
//! or from the roots of a few quadratics (sup norm), and the only numerical
//! step left is an adaptive Gauss-Kronrod rule in `th`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::forms::{FormError, NormKind, NormSpec, Target, TernaryForm};

/// Requested relative accuracy of the quadrature.
pub const DEFAULT_REL_TOL: f64 = 1e-8;
/// Maximum bisection depth of any subinterval.
pub const DEFAULT_MAX_DEPTH: u32 = 22;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ArchError {
    #[error(transparent)]
    Form(#[from] FormError),
    #[error("T must be finite and non-negative (got {0})")]
    InvalidRadius(f64),
    #[error("quadrature reached depth {max_depth} with estimated relative error {achieved:e} > {requested:e}")]
    QuadratureFailure { achieved: f64, requested: f64, max_depth: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ArchMethod {
    ClosedFormFamily,
    Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ArchIntegral {
    #[serde(rename = "T")]
    pub t: f64,
    pub value: f64,
    pub method: ArchMethod,
    pub norm: NormKind,
    pub est_error: f64,
    /// True when the ball misses the real surface; `value` is then 0.
    pub empty_region: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub max_depth: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { rel_tol: DEFAULT_REL_TOL, max_depth: DEFAULT_MAX_DEPTH }
    }
}

/// `2 pi sqrt((T^2 - 1) / (1 + delta))` for `x^2 + y^2 - delta z^2 = 1`
/// under the Euclidean norm; zero for `T <= 1`.
pub fn closed_form_family(delta: u64, t: f64) -> Result<ArchIntegral, ArchError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(ArchError::InvalidRadius(t));
    }
    let value = if t <= 1.0 { 0.0 } else { 2.0 * PI * ((t * t - 1.0) / (1.0 + delta as f64)).sqrt() };
    Ok(ArchIntegral {
        t,
        value,
        method: ArchMethod::ClosedFormFamily,
        norm: NormKind::Euclidean,
        est_error: 0.0,
        empty_region: value == 0.0,
    })
}

/// Principal-axis data of a form of signature (2, 1) after the sign flip.
#[derive(Debug, Clone, Copy)]
struct Frame {
    l1: f64,
    l2: f64,
    mu: f64,
    /// `q[j][i]`: coordinate `j` of the `i`-th principal axis; axis 2 is the negative one.
    q: [[f64; 3]; 3],
    a: f64,
}

impl Frame {
    fn new(form: &TernaryForm, a: Target) -> Result<Frame, ArchError> {
        let sig = form.signature();
        if !sig.is_indefinite() {
            return Err(FormError::DefiniteForm(sig).into());
        }
        let flip = if sig.negatives == 2 { -1.0 } else { 1.0 };
        let g = form.gram_f64();
        let m = Matrix3::from_fn(|i, j| flip * g[i][j]);
        let eig = SymmetricEigen::new(m);
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
        let mut q = [[0.0; 3]; 3];
        for (col, &src) in order.iter().enumerate() {
            for (row, qrow) in q.iter_mut().enumerate() {
                qrow[col] = eig.eigenvectors[(row, src)];
            }
        }
        Ok(Frame {
            l1: eig.eigenvalues[order[0]],
            l2: eig.eigenvalues[order[1]],
            mu: -eig.eigenvalues[order[2]],
            q,
            a: flip * a.get() as f64,
        })
    }

    fn measure_scale(&self) -> f64 {
        0.5 / (self.l1 * self.l2).sqrt()
    }

    /// Smallest admissible `|t|` (two-sheeted case) or 0.
    fn t_floor(&self) -> f64 {
        if self.a < 0.0 {
            (-self.a / self.mu).sqrt()
        } else {
            0.0
        }
    }

    fn g(&self, th: f64) -> f64 {
        let (s, c) = th.sin_cos();
        c * c / self.l1 + s * s / self.l2
    }

    /// Length of `{t : |u(th, t)|_2 <= T}`.
    fn euclidean_length(&self, th: f64, t2: f64) -> f64 {
        let g = self.g(th);
        let hi = (t2 - self.a * g) / (self.mu * g + 1.0);
        let lo = self.t_floor();
        if hi <= lo * lo {
            0.0
        } else {
            2.0 * (hi.sqrt() - lo)
        }
    }

    /// Length of `{t : |Q u(th, t)|_inf <= T}`.
    fn sup_length(&self, th: f64, t: f64) -> f64 {
        let (s, c) = th.sin_cos();
        let coef: [(f64, f64); 3] = std::array::from_fn(|j| {
            (self.q[j][0] * c / self.l1.sqrt() + self.q[j][1] * s / self.l2.sqrt(), self.q[j][2])
        });
        // |t| <= |u| <= sqrt(3) |v|_inf
        let reach = 3f64.sqrt() * t * (1.0 + 1e-12) + 1e-12;
        let floor = self.t_floor();
        if floor >= reach {
            return 0.0;
        }
        let mut cuts = vec![-reach, reach];
        if floor > 0.0 {
            cuts.extend([-floor, floor]);
        }
        for &(cj, dj) in coef.iter() {
            // cj R = ±T - dj t, squared
            let qa = cj * cj * self.mu - dj * dj;
            let qc = cj * cj * self.a - t * t;
            for sign in [1.0, -1.0] {
                let qb = sign * 2.0 * dj * t;
                cuts.extend(real_roots(qa, qb, qc).into_iter().filter(|r| r.abs() < reach));
            }
        }
        cuts.sort_by(f64::total_cmp);
        let inside = |u3: f64| {
            let r2 = self.a + self.mu * u3 * u3;
            if r2 < 0.0 {
                return false;
            }
            let r = r2.sqrt();
            coef.iter().all(|&(cj, dj)| (cj * r + dj * u3).abs() <= t)
        };
        cuts.windows(2).filter(|w| w[1] > w[0] && inside(0.5 * (w[0] + w[1]))).map(|w| w[1] - w[0]).sum()
    }
}

fn real_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let sq = disc.sqrt();
    // cancellation-free pair
    let q = -0.5 * (b + b.signum() * sq);
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

const GK_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.000000000000000000000000000000000,
];
const GK_WEIGHTS_K: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];
/// Gauss weights for the odd-indexed Kronrod nodes.
const GK_WEIGHTS_G: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> (f64, f64) {
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let fc = f(mid);
    let mut k = fc * GK_WEIGHTS_K[7];
    let mut g = fc * GK_WEIGHTS_G[3];
    for i in 0..7 {
        let dx = half * GK_NODES[i];
        let pair = f(mid - dx) + f(mid + dx);
        k += GK_WEIGHTS_K[i] * pair;
        if i % 2 == 1 {
            g += GK_WEIGHTS_G[i / 2] * pair;
        }
    }
    (k * half, ((k - g) * half).abs())
}

/// Adaptive G7-K15 for a non-negative integrand; per-interval bisection
/// until `err <= rel_tol * |value|`. Returns `(value, err, converged)`.
fn adaptive<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, cfg: &QuadratureConfig) -> (f64, f64, bool) {
    let mut stack = vec![(lo, hi, 0u32)];
    let whole = gk15(f, lo, hi).0.abs();
    let mut value = 0.0;
    let mut err = 0.0;
    let mut converged = true;
    while let Some((a, b, depth)) = stack.pop() {
        let (v, e) = gk15(f, a, b);
        let local_tol = cfg.rel_tol * whole.max(v.abs()) * (b - a) / (hi - lo);
        if e <= local_tol || e <= f64::MIN_POSITIVE || depth >= cfg.max_depth {
            if e > local_tol && e > f64::MIN_POSITIVE {
                converged = false;
            }
            value += v;
            err += e;
        } else {
            let m = 0.5 * (a + b);
            stack.push((m, b, depth + 1));
            stack.push((a, m, depth + 1));
        }
    }
    (value, err, converged)
}

/// Integrates `length(th)` over `[0, 2 pi)` split at `cuts`, tiles in parallel.
fn integrate_theta<F>(length: F, mut cuts: Vec<f64>, cfg: &QuadratureConfig) -> Result<(f64, f64), ArchError>
where
    F: Fn(f64) -> f64 + Sync,
{
    cuts.retain(|c| *c > 0.0 && *c < 2.0 * PI);
    cuts.extend([0.0, 2.0 * PI]);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let tiles: Vec<(f64, f64, bool)> = cuts.par_windows(2).map(|w| adaptive(&length, w[0], w[1], cfg)).collect();
    let value: f64 = tiles.iter().map(|t| t.0).sum();
    let err: f64 = tiles.iter().map(|t| t.1).sum();
    if tiles.iter().any(|t| !t.2) && err > cfg.rel_tol * value.abs() {
        return Err(ArchError::QuadratureFailure {
            achieved: err / value.abs().max(f64::MIN_POSITIVE),
            requested: cfg.rel_tol,
            max_depth: cfg.max_depth,
        });
    }
    Ok((value, err))
}

pub fn leray_quadrature(form: &TernaryForm, a: Target, t: f64, norm: NormSpec) -> Result<ArchIntegral, ArchError> {
    leray_quadrature_with(form, a, t, norm, &QuadratureConfig::default())
}

pub fn leray_quadrature_with(
    form: &TernaryForm,
    a: Target,
    t: f64,
    norm: NormSpec,
    cfg: &QuadratureConfig,
) -> Result<ArchIntegral, ArchError> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(ArchError::InvalidRadius(t));
    }
    let frame = Frame::new(form, a)?;
    let (value, err) = match norm.kind {
        NormKind::Euclidean => {
            let t2 = t * t;
            // kinks where the admissible t-interval opens up: a g(th) = T^2
            let mut cuts = Vec::new();
            if frame.a > 0.0 {
                let (ga, gb) = (0.5 * (1.0 / frame.l1 + 1.0 / frame.l2), 0.5 * (1.0 / frame.l1 - 1.0 / frame.l2));
                if gb != 0.0 {
                    let c = (t2 / frame.a - ga) / gb;
                    if c.abs() < 1.0 {
                        let base = 0.5 * c.acos();
                        for k in 0..2 {
                            let shift = k as f64 * PI;
                            cuts.extend([base + shift, PI - base + shift]);
                        }
                    }
                }
            }
            cuts.extend((1..4).map(|k| k as f64 * PI / 2.0));
            integrate_theta(|th| frame.euclidean_length(th, t2), cuts, cfg)?
        }
        NormKind::Sup => {
            let cuts = (1..64).map(|k| k as f64 * PI / 32.0).collect();
            integrate_theta(|th| frame.sup_length(th, t), cuts, cfg)?
        }
    };
    let scale = frame.measure_scale();
    let value = value * scale;
    Ok(ArchIntegral {
        t,
        value,
        method: ArchMethod::Quadrature,
        norm: norm.kind,
        est_error: err * scale,
        empty_region: value == 0.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn family(delta: u64) -> TernaryForm {
        TernaryForm::family(delta).unwrap()
    }

    fn one() -> Target {
        Target::new(1).unwrap()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn closed_form_values() {
        assert!(rel(closed_form_family(1, 3.0).unwrap().value, 4.0 * PI) < 1e-15);
        assert_eq!(closed_form_family(7, 1.0).unwrap().value, 0.0);
        assert!(rel(closed_form_family(3, 5.0).unwrap().value, 2.0 * PI * 6f64.sqrt()) < 1e-15);
        assert!(closed_form_family(1, f64::NAN).is_err());
    }

    #[test]
    fn quadrature_matches_family_closed_form() {
        for delta in [1u64, 2, 3, 4, 9, 25] {
            for t in [2.0, 5.0, 10.0, 100.0] {
                let q = leray_quadrature(&family(delta), one(), t, NormSpec::EUCLIDEAN).unwrap();
                let c = closed_form_family(delta, t).unwrap();
                assert!(rel(q.value, c.value) < 1e-6, "delta={delta} T={t}: {} vs {}", q.value, c.value);
            }
        }
        let q = leray_quadrature(&family(2), one(), 10.0, NormSpec::EUCLIDEAN).unwrap();
        assert!((q.value - 36.09).abs() < 0.01);
    }

    /// Independent oracle: write points as `s w` with `w` on the unit sphere;
    /// then `omega = sqrt|a| / (2 |f(w)|^{3/2}) dsigma(w)` on `{a f(w) > 0, |a/f(w)| <= T^2}`.
    /// In polar angle `psi` at fixed azimuth, `f(w) = P + M cos(2 psi - rho)`, so the
    /// cutoff angles are explicit and each piece is smooth.
    fn sphere_oracle(form: &TernaryForm, a: f64, t: f64) -> f64 {
        let g = form.gram_f64();
        let level = a / (t * t);
        let at_azimuth = |phi: f64| {
            let (sp, cp) = phi.sin_cos();
            let alpha = g[0][0] * cp * cp + 2.0 * g[0][1] * cp * sp + g[1][1] * sp * sp;
            let beta = g[0][2] * cp + g[1][2] * sp;
            let gamma = g[2][2];
            let p = 0.5 * (alpha + gamma);
            let (mc, ms) = (0.5 * (gamma - alpha), beta);
            let m = mc.hypot(ms);
            let rho = ms.atan2(mc);
            let f = |psi: f64| p + m * (2.0 * psi - rho).cos();
            let mut cuts = vec![0.0, PI];
            if m > 0.0 && ((level - p) / m).abs() < 1.0 {
                let base = ((level - p) / m).acos();
                for k in -2..=2 {
                    for r in [rho + base, rho - base] {
                        let psi = 0.5 * (r + 2.0 * PI * k as f64);
                        if psi > 0.0 && psi < PI {
                            cuts.push(psi);
                        }
                    }
                }
            }
            cuts.sort_by(f64::total_cmp);
            let mut total = 0.0;
            for w in cuts.windows(2) {
                let fm = f(0.5 * (w[0] + w[1]));
                if !(a * fm > 0.0 && (a / fm).abs() <= t * t) {
                    continue;
                }
                let integrand = |psi: f64| psi.sin() * a.abs().sqrt() / (2.0 * f(psi).abs().powf(1.5));
                let h = (w[1] - w[0]) / 8.0;
                total += (0..8)
                    .map(|j| adaptive_simpson(&integrand, w[0] + j as f64 * h, w[0] + (j + 1) as f64 * h, 1e-11, 40))
                    .sum::<f64>();
            }
            total
        };
        // the azimuthal profile has kinks, so refine adaptively
        let panels = 64;
        (0..panels)
            .map(|i| {
                let (lo, hi) = (i as f64 * 2.0 * PI / panels as f64, (i + 1) as f64 * 2.0 * PI / panels as f64);
                adaptive_simpson(&at_azimuth, lo, hi, 1e-9, 40)
            })
            .sum()
    }

    fn simpson<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut acc = f(lo) + f(hi);
        for j in 1..n {
            acc += f(lo + j as f64 * h) * if j % 2 == 1 { 4.0 } else { 2.0 };
        }
        acc * h / 3.0
    }

    fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64, tol: f64, depth: u32) -> f64 {
        let whole = simpson(f, lo, hi, 2);
        let mid = 0.5 * (lo + hi);
        let (left, right) = (simpson(f, lo, mid, 2), simpson(f, mid, hi, 2));
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            left + right + (left + right - whole) / 15.0
        } else {
            adaptive_simpson(f, lo, mid, tol / 2.0, depth - 1) + adaptive_simpson(f, mid, hi, tol / 2.0, depth - 1)
        }
    }

    #[test]
    fn quadrature_matches_sphere_oracle_on_non_diagonal_forms() {
        let cases: [([i64; 6], i64, f64); 4] = [
            ([1, 1, -1, 0, 0, 0], 1, 3.0),
            ([0, 0, 0, 1, 1, 1], -1, 4.0),
            ([2, -3, 1, 1, 0, 2], 5, 6.0),
            ([1, 2, -5, 1, -1, 0], -3, 5.0),
        ];
        for (coeffs, a, t) in cases {
            let f = TernaryForm::new(coeffs).unwrap();
            let q = leray_quadrature(&f, Target::new(a).unwrap(), t, NormSpec::EUCLIDEAN).unwrap();
            let o = sphere_oracle(&f, a as f64, t);
            assert!(rel(q.value, o) < 1e-6, "{coeffs:?} a={a}: {} vs {o}", q.value);
        }
    }

    #[test]
    fn empty_region_is_zero() {
        // x^2 + y^2 - z^2 = 1 has no points with |v| < 1
        let q = leray_quadrature(&family(1), one(), 0.5, NormSpec::EUCLIDEAN).unwrap();
        assert_eq!(q.value, 0.0);
        assert!(q.empty_region);
        let q = leray_quadrature(&family(1), Target::new(-4).unwrap(), 1.5, NormSpec::SUP).unwrap();
        assert_eq!(q.value, 0.0);
    }

    #[test]
    fn definite_forms_are_rejected() {
        let f = TernaryForm::new([1, 1, 1, 0, 0, 0]).unwrap();
        assert!(matches!(
            leray_quadrature(&f, one(), 3.0, NormSpec::EUCLIDEAN),
            Err(ArchError::Form(FormError::DefiniteForm(_)))
        ));
    }

    #[test]
    fn sign_flipped_form_has_same_volume() {
        let f = family(2);
        let g = TernaryForm::new([-1, -1, 2, 0, 0, 0]).unwrap();
        for norm in [NormSpec::EUCLIDEAN, NormSpec::SUP] {
            let a = leray_quadrature(&f, one(), 7.0, norm).unwrap().value;
            let b = leray_quadrature(&g, Target::new(-1).unwrap(), 7.0, norm).unwrap().value;
            assert!(rel(a, b) < 1e-9);
        }
    }

    #[test]
    fn sup_norm_on_family_matches_direct_integration() {
        // x^2 + y^2 = 1 + z^2 with |x|, |y|, |z| <= T; measure dth dz / 2
        let t = 3.0f64;
        let n = 4000;
        let mut direct = 0.0;
        for i in 0..n {
            let th = (i as f64 + 0.5) * 2.0 * PI / n as f64;
            let (s, c) = th.sin_cos();
            let zmax_x = if c.abs() > 0.0 { ((t / c.abs()).powi(2) - 1.0).max(0.0).sqrt() } else { t };
            let zmax_y = if s.abs() > 0.0 { ((t / s.abs()).powi(2) - 1.0).max(0.0).sqrt() } else { t };
            direct += 2.0 * zmax_x.min(zmax_y).min(t);
        }
        direct *= 2.0 * PI / n as f64 * 0.5;
        let q = leray_quadrature(&family(1), one(), t, NormSpec::SUP).unwrap();
        assert!(rel(q.value, direct) < 1e-4, "{} vs {direct}", q.value);
    }

    #[test]
    fn norm_nesting_and_monotonicity() {
        for delta in [1u64, 2, 5] {
            let f = family(delta);
            let e3 = leray_quadrature(&f, one(), 3.0, NormSpec::EUCLIDEAN).unwrap().value;
            let s3 = leray_quadrature(&f, one(), 3.0, NormSpec::SUP).unwrap().value;
            let e3r3 = leray_quadrature(&f, one(), 3.0 * 3f64.sqrt(), NormSpec::EUCLIDEAN).unwrap().value;
            assert!(e3 < s3 && s3 <= e3r3, "delta={delta}: {e3} {s3} {e3r3}");
            let mut prev = 0.0;
            for t in [0.5, 1.0, 1.5, 2.0, 4.0, 8.0, 16.0] {
                let v = leray_quadrature(&f, one(), t, NormSpec::SUP).unwrap().value;
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn linear_growth_rate() {
        for delta in [1u64, 2, 3] {
            let f = family(delta);
            let r3 = leray_quadrature(&f, one(), 1e3, NormSpec::EUCLIDEAN).unwrap().value / 1e3;
            let r4 = leray_quadrature(&f, one(), 1e4, NormSpec::EUCLIDEAN).unwrap().value / 1e4;
            let rate = 2.0 * PI / (1.0 + delta as f64).sqrt();
            assert!(rel(r3, r4) < 1e-3);
            assert!(rel(r4, rate) < 1e-3);
        }
    }
}
