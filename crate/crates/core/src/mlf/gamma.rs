//! Gamma function by the Lanczos approximation (g = 607/128, 15 terms) with
//! reflection for arguments below one half.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const G: f64 = 607.0 / 128.0;

const LANCZOS: [f64; 15] = [
    0.999_999_999_999_997_091_82,
    57.156_235_665_862_923_517,
    -59.597_960_355_475_491_248,
    14.136_097_974_741_747_174,
    -0.491_913_816_097_620_199_78,
    0.339_946_499_848_118_886_99e-4,
    0.465_236_289_270_485_756_65e-4,
    -0.983_744_753_048_795_646_77e-4,
    0.158_088_703_224_912_488_84e-3,
    -0.210_264_441_724_104_883_19e-3,
    0.217_439_618_115_212_643_20e-3,
    -0.164_318_106_536_763_890_22e-3,
    0.844_182_239_838_527_432_93e-4,
    -0.261_908_384_015_814_086_70e-4,
    0.368_991_826_595_316_227_04e-5,
];

const SQRT_2PI: f64 = 2.506_628_274_631_000_5;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Lanczos series sum for Γ(x), x >= 1/2.
fn series(x: f64) -> f64 {
    let xm1 = x - 1.0;
    let mut a = LANCZOS[0];
    for (k, c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (xm1 + k as f64);
    }
    a
}

/// sin(πx) with exact zeros at the integers and no loss of accuracy for
/// large |x|.
pub fn sin_pi(x: f64) -> f64 {
    if !x.is_finite() {
        return f64::NAN;
    }
    // Reduce to r in [-1, 1]; x - 2*round(x/2) is exact in binary.
    let r = x - 2.0 * (0.5 * x).round();
    let s = if r > 0.5 {
        (PI * (1.0 - r)).sin()
    } else if r < -0.5 {
        -(PI * (1.0 + r)).sin()
    } else {
        (PI * r).sin()
    };
    if s == 0.0 {
        0.0
    } else {
        s
    }
}

fn is_pole(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

/// Γ(x) for x >= 1/2. The power is split so that large arguments do not
/// overflow before the exponential brings them back.
fn gamma_right(x: f64) -> f64 {
    let t = x + G - 0.5;
    let p = t.powf(0.5 * (x - 0.5));
    SQRT_2PI * series(x) * p * (p * (-t).exp())
}

/// Γ(x). Returns ±∞ at the poles; use [`gamma_fn`] for a checked version.
pub fn gamma(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if is_pole(x) {
        return f64::INFINITY;
    }
    if x == x.floor() && x <= 23.0 {
        // Exact factorials.
        let mut f = 1.0;
        let mut k = 2.0;
        while k < x {
            f *= k;
            k += 1.0;
        }
        return f;
    }
    if x >= 0.5 {
        gamma_right(x)
    } else {
        PI / (sin_pi(x) * gamma_right(1.0 - x))
    }
}

/// Γ(x) with an error at the non-positive integers.
pub fn gamma_fn(x: f64) -> Result<f64> {
    if is_pole(x) {
        return Err(Error::Pole(x));
    }
    if x.is_nan() {
        return Err(Error::domain("gamma of NaN"));
    }
    Ok(gamma(x))
}

/// ln Γ(x) for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    if x < 0.5 {
        return (PI / (sin_pi(x) * gamma_right(1.0 - x))).ln();
    }
    if x < 20.0 {
        return gamma_right(x).ln();
    }
    let t = x + G - 0.5;
    LN_SQRT_2PI + series(x).ln() + (x - 0.5) * t.ln() - t
}

/// 1/Γ(x), an entire function: exactly zero at the poles of Γ.
pub fn rgamma(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if is_pole(x) {
        return 0.0;
    }
    if x >= 0.5 {
        if x > 170.0 {
            return (-ln_gamma(x)).exp();
        }
        1.0 / gamma(x)
    } else {
        let s = sin_pi(x);
        let y = 1.0 - x;
        if y > 170.0 {
            s / PI * ln_gamma(y).exp()
        } else {
            s * gamma_right(y) / PI
        }
    }
}
