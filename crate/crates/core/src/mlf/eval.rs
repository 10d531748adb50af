//! Pointwise evaluation of E_{α,β}(-y), y >= 0, 0 < α <= 1.
//!
//! Three regimes. Near the origin the Taylor series is summed with
//! compensation and accepted only if its condition number is small. For
//! large y the asymptotic expansion is truncated where the Γ-envelope of its
//! terms bottoms out; it is accepted only if that envelope plus the
//! exponentially small pole contribution is below a relative 1e-15. In
//! between, α < 1 goes through the real integral obtained by collapsing the
//! Hankel contour onto the negative axis, and α = 1 through Kummer's
//! transformation of the confluent series.

use std::f64::consts::PI;

use super::gamma::{ln_gamma, rgamma, sin_pi};
use crate::error::{Error, Result};
use crate::quad::{self, CompensatedSum, Tolerance};

/// Largest condition number (sum of |terms| over |sum|) tolerated for the
/// Taylor series.
const SERIES_MAX_COND: f64 = 100.0;
/// Relative accuracy demanded of the asymptotic expansion before it is used.
const ASYMPTOTIC_TARGET: f64 = 1e-15;
/// Estimated relative error above which evaluation fails loudly.
pub(crate) const FAIL_TOL: f64 = 1e-10;
/// Absolute error floor accepted near sign changes of E, where no method
/// can deliver relative accuracy.
const ABS_FLOOR: f64 = 1e-16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Summed {
    pub value: f64,
    pub abs_sum: f64,
}

/// Σ x^k / Γ(αk+β), compensated. `None` if the terms are still growing
/// after the term budget or overflow.
pub(crate) fn taylor(alpha: f64, beta: f64, x: f64) -> Option<Summed> {
    let mut s = CompensatedSum::new();
    let mut abs_sum = 0.0;
    let ax = x.abs();
    let ln_ax = ax.ln();
    let mut prev = f64::INFINITY;
    for k in 0..20_000usize {
        let kf = k as f64;
        let arg = alpha * kf + beta;
        let mag = if k == 0 {
            rgamma(beta)
        } else if kf * ln_ax < 600.0 && arg < 170.0 {
            ax.powf(kf) * rgamma(arg)
        } else if arg > 0.0 {
            (kf * ln_ax - ln_gamma(arg)).exp()
        } else {
            return None;
        };
        let t = if x < 0.0 && k % 2 == 1 { -mag } else { mag };
        if !t.is_finite() {
            return None;
        }
        s.add(t);
        abs_sum += t.abs();
        let a = t.abs();
        // Past the peak the terms fall off super-geometrically.
        if arg > 2.0 && a <= prev && a <= 1e-18 * abs_sum {
            return Some(Summed {
                value: s.value(),
                abs_sum,
            });
        }
        if arg > 1.0 {
            prev = a;
        }
    }
    None
}

fn series_ok(r: &Summed) -> bool {
    r.abs_sum <= SERIES_MAX_COND * r.value.abs()
}

/// Asymptotic expansion with an estimate of its total error.
pub(crate) fn asymptotic(alpha: f64, beta: f64, y: f64) -> (f64, f64) {
    let (v, e, _) = asymptotic_terms(alpha, beta, y);
    (v, e)
}

/// As [`asymptotic`], also returning how many terms were summed.
pub(crate) fn asymptotic_terms(alpha: f64, beta: f64, y: f64) -> (f64, f64, usize) {
    let ln_y = y.ln();
    let mut s = CompensatedSum::new();
    let mut prev_env = f64::INFINITY;
    let mut err = f64::INFINITY;
    let mut used = 0;
    for k in 1..=2000usize {
        let kf = k as f64;
        let x = beta - alpha * kf;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let (term, env) = if x >= 0.5 {
            let t = (-kf * ln_y).exp() * rgamma(x);
            (t, t.abs())
        } else {
            let m = (ln_gamma(1.0 - x) - kf * ln_y).exp() / PI;
            (sin_pi(x) * m, m)
        };
        let past_start = alpha * kf > beta + 1.0;
        if past_start && env > prev_env {
            // Envelope turned up: the first omitted term bounds the error.
            err = env;
            break;
        }
        let cur = s.value();
        if past_start && env < 1e-17 * cur.abs() {
            err = env;
            break;
        }
        s.add(sign * term);
        used = k;
        if past_start {
            prev_env = env;
        }
    }
    let value = s.value();
    (value, err + pole_term(alpha, beta, y), used)
}

/// The exponentially small remainder the expansion omits. For α < 1 the
/// poles of the contour integrand lie off the principal sheet and there is
/// none; at α = 1 the pole sits on the negative axis and contributes
/// y^{1-β} e^{-y}.
fn pole_term(alpha: f64, beta: f64, y: f64) -> f64 {
    if alpha < 1.0 {
        return 0.0;
    }
    ((1.0 - beta) * y.ln() - y).exp()
}

fn accept_asymptotic(alpha: f64, beta: f64, y: f64) -> Option<f64> {
    if y < 1.0 {
        return None;
    }
    let (v, e) = asymptotic(alpha, beta, y);
    (e <= ASYMPTOTIC_TARGET * v.abs()).then_some(v)
}

/// E_{α,β}(-y) for y >= 0. α is assumed already validated.
pub(crate) fn e_neg(alpha: f64, beta: f64, y: f64) -> Result<f64> {
    if y == 0.0 {
        return Ok(rgamma(beta));
    }
    if !y.is_finite() || y < 0.0 {
        return Err(Error::domain(format!("argument -y with y = {y}")));
    }
    if alpha == 1.0 {
        return e1_neg(beta, y);
    }
    if y.powf(1.0 / alpha) <= 25.0 {
        if let Some(r) = taylor(alpha, beta, -y) {
            if series_ok(&r) {
                return Ok(r.value);
            }
        }
    }
    if let Some(v) = accept_asymptotic(alpha, beta, y) {
        return Ok(v);
    }
    contour_integral(alpha, beta, y)
}

fn e1_neg(beta: f64, y: f64) -> Result<f64> {
    if beta == 1.0 {
        return Ok((-y).exp());
    }
    if let Some(v) = accept_asymptotic(1.0, beta, y) {
        return Ok(v);
    }
    if beta <= 0.0 {
        // E_{1,β}(z) = 1/Γ(β) + z E_{1,β+1}(z)
        let up = e1_neg(beta + 1.0, y)?;
        let a = rgamma(beta);
        let v = a - y * up;
        let cond = (a.abs() + (y * up).abs()) / v.abs();
        let est = 1e-15 * cond;
        if est > FAIL_TOL && (v.abs() * est) > ABS_FLOOR {
            return Err(Error::NonConvergence {
                what: format!("E_{{1,{beta}}}(-{y}) by upward recurrence"),
                estimate: est,
                tolerance: FAIL_TOL,
            });
        }
        return Ok(v);
    }
    Ok(kummer(beta, y))
}

/// E_{1,β}(-y) = e^{-y} M(β-1, β, y) / Γ(β); the transformed series has
/// Poisson weights and at most one sign change, so it is well conditioned.
fn kummer(beta: f64, y: f64) -> f64 {
    let b1 = beta - 1.0;
    let mut s = CompensatedSum::new();
    let mut p = (-y).exp();
    s.add(p);
    let mut k = 1.0;
    loop {
        p *= y / k;
        s.add(p * b1 / (b1 + k));
        if k > y && p < 1e-20 {
            break;
        }
        k += 1.0;
    }
    rgamma(beta) * s.value()
}

/// Real-axis integral representation for 0 < α < 1, y > 0:
///
/// E_{α,β}(-y) = (1/π) ∫_0^∞ r^{α-β} e^{-r}
///     [r^α sin(π(1-β)) + y sin(π(1-β+α))] / (r^{2α} + 2 r^α y cos(πα) + y²) dr
///
/// valid for β < 1 + α, with an extra 1/y at β = 1 + α. Larger β is
/// brought down by E_{α,β}(z) = (E_{α,β-α}(z) - 1/Γ(β-α)) / z.
fn contour_integral(alpha: f64, beta: f64, y: f64) -> Result<f64> {
    // Snap onto the boundary case so the 1/y residue is not lost to
    // rounding in 1 - β + α.
    let edge = (beta - (1.0 + alpha)).abs() <= 1e-12;
    if beta > 1.0 + alpha && !edge {
        let lower = e_neg(alpha, beta - alpha, y)?;
        return Ok((rgamma(beta - alpha) - lower) / y);
    }
    let s1 = sin_pi(1.0 - beta);
    let s2 = if edge { 0.0 } else { sin_pi(1.0 - beta + alpha) };
    let c = sin_pi(alpha + 0.5);
    let sa = sin_pi(alpha);
    let p = alpha - beta;
    // r^p g(r) with g(0) = s2/y. The r^p g(0) part is integrated exactly
    // over [0, split]; the remainder behaves like r^{2α-β}, which keeps the
    // quadrature well posed as β approaches 1 + α and p approaches -1.
    let g = |r: f64| -> f64 {
        let rho = r.powf(alpha);
        let d = (rho + y * c).powi(2) + (y * sa).powi(2);
        (-r).exp() * (rho * s1 + y * s2) / d
    };
    let g0 = s2 / y;
    let f = |r: f64| if r <= 0.0 { 0.0 } else { r.powf(p) * g(r) };
    let rem = |r: f64| if r <= 0.0 { 0.0 } else { r.powf(p) * (g(r) - g0) };
    const UPPER: f64 = 80.0;
    // Split where the denominator changes character: at its minimum when
    // cos(πα) < 0, otherwise where r^α ~ y.
    let split = if c < 0.0 {
        (-y * c).powf(1.0 / alpha)
    } else {
        y.powf(1.0 / alpha)
    }
    .min(0.5 * UPPER);
    let tol = Tolerance::new(1e-300, 1e-13).with_max_intervals(2000);
    let exact = if edge { 0.0 } else { g0 * split.powf(p + 1.0) / (p + 1.0) };
    let head = quad::graded_estimate(&|n: quad::Node| rem(n.from_a), 0.0, split, (p + alpha).min(0.0), 0.0, tol)?;
    let tail = quad::integrate_estimate(&f, split, UPPER, tol);
    let mut value = (exact + head.value + tail.value) / PI;
    let err = (head.error + tail.error) / PI;
    if edge {
        value += 1.0 / y;
    }
    if !value.is_finite() || (err > FAIL_TOL * value.abs() && err > ABS_FLOOR) {
        return Err(Error::NonConvergence {
            what: format!("E_{{{alpha},{beta}}}(-{y}) by contour integral"),
            estimate: err / value.abs(),
            tolerance: FAIL_TOL,
        });
    }
    Ok(value)
}
