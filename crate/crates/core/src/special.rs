//! Special functions and scalar root finding.
//!
//! `erf`/`erfc` use an all-positive Taylor series below |x| = 3 and a
//! continued fraction for the scaled complement above it. The normal quantile
//! starts from Acklam's rational approximation and is polished with Halley
//! steps against the accurate CDF; its log-probability variant reaches far
//! into the lower tail where `Φ(z)` underflows.

use crate::{Error, Result};
use std::f64::consts::{LN_2, PI, SQRT_2};

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const SERIES_LIMIT: f64 = 3.0;

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(Error::Domain(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

// erf(x) = 2/√π · e^{-x²} · Σ (2x²)^n x / (1·3·…·(2n+1)); every term is positive.
fn erf_series(x: f64) -> f64 {
    let two_x2 = 2.0 * x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= two_x2 / (2.0 * n + 1.0);
        sum += term;
        if term <= sum * 1e-17 {
            break;
        }
    }
    FRAC_2_SQRT_PI * (-x * x).exp() * sum
}

// e^{x²} erfc(x) for x ≥ SERIES_LIMIT by modified Lentz on
// erfc(x) = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …)))).
fn erfcx_continued_fraction(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..5000 {
        let a = 0.5 * n as f64;
        d = x + a * d;
        if d.abs() < TINY {
            d = TINY;
        }
        d = 1.0 / d;
        c = x + a / c;
        if c.abs() < TINY {
            c = TINY;
        }
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 / (PI.sqrt() * f)
}

/// Error function, accurate to about 1e-15 absolute.
pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let ax = x.abs();
    let value = if ax < SERIES_LIMIT {
        erf_series(ax)
    } else if ax > 27.0 {
        1.0
    } else {
        1.0 - (-ax * ax).exp() * erfcx_continued_fraction(ax)
    };
    if x < 0.0 {
        -value
    } else {
        value
    }
}

/// Complementary error function with relative accuracy in the upper tail.
pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x < SERIES_LIMIT {
        if x > -SERIES_LIMIT {
            // erf(x) ≥ -1 + erfc(3) here, so 1 - erf keeps 1e-16 absolute accuracy.
            1.0 - if x < 0.0 { -erf_series(-x) } else { erf_series(x) }
        } else {
            2.0 - erfc(-x)
        }
    } else if x > 27.3 {
        0.0
    } else {
        (-x * x).exp() * erfcx_continued_fraction(x)
    }
}

/// Scaled complementary error function `e^{x²} erfc(x)` for `x ≥ 0`.
pub fn erfcx(x: f64) -> f64 {
    if x >= SERIES_LIMIT {
        erfcx_continued_fraction(x)
    } else {
        (x * x).exp() * erfc(x)
    }
}

/// Standard normal CDF `Φ(z)`.
pub fn norm_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// `ln Φ(z)`, finite for every finite `z`.
pub fn log_norm_cdf(z: f64) -> f64 {
    if z == f64::INFINITY {
        return 0.0;
    }
    if z == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if z < -5.0 {
        (0.5 * erfcx(-z / SQRT_2)).ln() - 0.5 * z * z
    } else if z < 0.0 {
        norm_cdf(z).ln()
    } else {
        (-0.5 * erfc(z / SQRT_2)).ln_1p()
    }
}

/// `ln φ(z)` of the standard normal density.
pub fn log_norm_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

// Acklam's rational approximation of Φ⁻¹, relative error ≈ 1e-9.
fn acklam(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.024_25;
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -acklam(1.0 - p)
    }
}

// Lower-tail quantile for p ≤ 0.5, polished against Φ.
fn lower_quantile(p: f64) -> f64 {
    let mut t = acklam(p);
    for _ in 0..3 {
        let e = norm_cdf(t) - p;
        let u = e * (2.0 * PI).sqrt() * (0.5 * t * t).exp();
        let step = u / (1.0 + 0.5 * t * u);
        t -= step;
        if step.abs() <= 1e-16 * t.abs().max(1.0) {
            break;
        }
    }
    t
}

/// Standard normal quantile `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn norm_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("normal quantile needs p in (0,1), got {p}")));
    }
    Ok(if p <= 0.5 {
        lower_quantile(p)
    } else {
        -lower_quantile(1.0 - p)
    })
}

/// `Φ⁻¹(exp(log_p))` for `log_p < 0`, valid far below the `f64` range of `p`.
pub fn norm_quantile_from_log(log_p: f64) -> Result<f64> {
    if log_p.is_nan() || log_p >= 0.0 {
        return Err(Error::Domain(format!(
            "log-probability must be negative, got {log_p}"
        )));
    }
    if log_p == f64::NEG_INFINITY {
        return Ok(f64::NEG_INFINITY);
    }
    if log_p > -LN_2 {
        // Upper half: use the complementary tail mass directly.
        let upper = -log_p.exp_m1();
        return Ok(-lower_quantile(upper));
    }
    if log_p > -700.0 {
        return Ok(lower_quantile(log_p.exp()));
    }
    // Deep tail: Newton on ln Φ(t) = log_p starting from the Mills-ratio asymptote.
    let w = -2.0 * log_p;
    let mut t = -(w - w.ln() - (2.0 * PI).ln()).sqrt();
    for _ in 0..50 {
        let g = log_norm_cdf(t) - log_p;
        let slope = (log_norm_pdf(t) - log_norm_cdf(t)).exp();
        let step = g / slope;
        t -= step;
        if step.abs() <= 1e-15 * t.abs() {
            break;
        }
    }
    Ok(t)
}

/// Inverse error function on `(-1, 1)`.
pub fn erf_inv(y: f64) -> Result<f64> {
    if !(y > -1.0 && y < 1.0) {
        return Err(Error::Domain(format!("erf_inv needs |y| < 1, got {y}")));
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    if y > 0.0 {
        return erf_inv(-y).map(|v| -v);
    }
    // y < 0: erf(x) = y  ⇔  Φ(√2 x) = (1 + y)/2, and 1 + y is exact for y ≤ -0.5.
    let one_plus_y = 1.0 + y;
    let mut x = lower_quantile(0.5 * one_plus_y) / SQRT_2;
    for _ in 0..2 {
        let residual = if y < -0.5 {
            erfc(-x) - one_plus_y
        } else {
            erf(x) - y
        };
        let slope = FRAC_2_SQRT_PI * (-x * x).exp();
        if slope == 0.0 {
            break;
        }
        x -= residual / slope;
    }
    Ok(x)
}

/// `ln Γ(x)` for `x > 0` by the Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection.
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower incomplete gamma `P(a, x)`.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let log_prefactor = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..100_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        (sum.ln() + log_prefactor).exp().min(1.0)
    } else {
        1.0 - gamma_q_continued_fraction(a, x, log_prefactor)
    }
}

// Q(a, x) by modified Lentz, valid for x ≥ a + 1.
fn gamma_q_continued_fraction(a: f64, x: f64, log_prefactor: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..100_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (log_prefactor + h.ln()).exp()
}

/// Chi-squared CDF with `dof` degrees of freedom.
pub fn chi2_cdf(x: f64, dof: u32) -> f64 {
    gamma_p(0.5 * dof as f64, 0.5 * x)
}

fn chi2_log_pdf(x: f64, dof: u32) -> f64 {
    let a = 0.5 * dof as f64;
    (a - 1.0) * x.ln() - 0.5 * x - a * LN_2 - ln_gamma(a)
}

/// Chi-squared quantile: Newton on `P(dof/2, x/2)` with a bisection safeguard.
pub fn chi2_quantile(p: f64, dof: u32) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("chi2_quantile needs p in (0,1), got {p}")));
    }
    if dof == 0 {
        return Err(Error::Domain("chi2_quantile needs dof ≥ 1".into()));
    }
    let k = dof as f64;
    let mut lo = 0.0_f64;
    let mut hi = k + 10.0 * (2.0 * k).sqrt() + 20.0;
    while chi2_cdf(hi, dof) < p {
        lo = hi;
        hi *= 2.0;
    }
    // Wilson–Hilferty start.
    let z = norm_quantile(p)?;
    let c = 2.0 / (9.0 * k);
    let mut x = k * (1.0 - c + z * c.sqrt()).powi(3);
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let f = chi2_cdf(x, dof) - p;
        if f == 0.0 {
            return Ok(x);
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let density = chi2_log_pdf(x, dof).exp();
        let newton = x - f / density;
        let next = if density > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (next - x).abs() <= 1e-15 * x.abs() || hi - lo <= 1e-15 * hi {
            return Ok(next);
        }
        x = next;
    }
    Ok(x)
}

/// Chandrupatla's bracketing root finder with bisection safeguard.
///
/// Returns a point inside `bracket` whose enclosing sign-change interval is no
/// wider than `tol` (plus a few ulps of the root's magnitude).
pub fn find_root<F: FnMut(f64) -> f64>(mut f: F, bracket: Interval, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (bracket.hi, bracket.lo);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(Error::NoSignChange { f_lo: fb, f_hi: fa });
    }
    let mut c;
    let mut fc;
    let mut t = 0.5_f64;
    for _ in 0..500 {
        let xt = a + t * (b - a);
        let ft = f(xt);
        if ft == 0.0 {
            return Ok(xt);
        }
        if ft.signum() == fa.signum() {
            c = a;
            fc = fa;
        } else {
            c = b;
            b = a;
            fc = fb;
            fb = fa;
        }
        a = xt;
        fa = ft;
        let (xm, fm) = if fa.abs() < fb.abs() { (a, fa) } else { (b, fb) };
        let width = (b - a).abs();
        let tol_here = tol + 4.0 * f64::EPSILON * xm.abs();
        if width <= tol_here || fm == 0.0 {
            return Ok(xm.clamp(bracket.lo, bracket.hi));
        }
        let tl = 0.5 * tol_here / width;
        let xi = (a - b) / (c - b);
        let phi = (fa - fb) / (fc - fb);
        t = if phi * phi < xi && (1.0 - phi) * (1.0 - phi) < 1.0 - xi {
            fa / (fb - fa) * fc / (fb - fc) + (c - a) / (b - a) * fa / (fc - fa) * fb / (fc - fb)
        } else {
            0.5
        };
        t = t.clamp(tl, 1.0 - tl);
    }
    let xm = if fa.abs() < fb.abs() { a } else { b };
    Ok(xm.clamp(bracket.lo, bracket.hi))
}
