//! Cached piecewise-Chebyshev tables of y ↦ E_{α,β}(-y) for fixed (α, β).
//!
//! The kernels of the forward and inverse problems are evaluated millions
//! of times at the same (α, β), so each pair is fitted once on [0, y_max]
//! and continued by a precomputed asymptotic polynomial in 1/y beyond it.
//! y_max is the first point at which the asymptotic expansion meets its
//! 1e-15 error estimate.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};


use super::eval::{asymptotic_terms, e_neg};
use super::gamma::rgamma;
use crate::error::{Error, Result};

const DEGREE: usize = 32;
const FIT_TOL: f64 = 1e-14;
const Y_CAP: f64 = 4096.0;

#[derive(Debug, Clone)]
struct Segment {
    a: f64,
    b: f64,
    coeffs: Vec<f64>,
}

impl Segment {
    fn eval(&self, y: f64) -> f64 {
        let t = (2.0 * y - self.a - self.b) / (self.b - self.a);
        clenshaw(&self.coeffs, t)
    }
}

#[derive(Debug, Clone)]
enum Repr {
    /// α = 1, β ∈ {0, 1}: closed forms.
    Exp { beta: f64 },
    Fitted {
        segments: Vec<Segment>,
        y_max: f64,
        /// Coefficients of the asymptotic polynomial in 1/y; empty if the
        /// expansion never became accurate below `Y_CAP`.
        asym: Vec<f64>,
    },
}

/// Fast evaluator of E_{α,β}(-y) for y >= 0.
#[derive(Debug, Clone)]
pub struct MlTable {
    alpha: f64,
    beta: f64,
    repr: Repr,
}

fn clenshaw(c: &[f64], t: f64) -> f64 {
    let mut b1 = 0.0;
    let mut b2 = 0.0;
    for &ck in c.iter().skip(1).rev() {
        let b0 = 2.0 * t * b1 - b2 + ck;
        b2 = b1;
        b1 = b0;
    }
    t * b1 - b2 + c[0]
}

/// Chebyshev interpolant through the first-kind nodes of `[a, b]`.
fn fit(f: &dyn Fn(f64) -> Result<f64>, a: f64, b: f64) -> Result<(Vec<f64>, f64)> {
    let n = DEGREE;
    let mut vals = Vec::with_capacity(n);
    let theta = |j: usize| std::f64::consts::PI * (j as f64 + 0.5) / n as f64;
    for j in 0..n {
        let t = theta(j).cos();
        vals.push(f(0.5 * (a + b) + 0.5 * (b - a) * t)?);
    }
    let mut c = vec![0.0; n];
    for (k, ck) in c.iter_mut().enumerate() {
        let s: f64 = (0..n).map(|j| vals[j] * (k as f64 * theta(j)).cos()).sum();
        *ck = 2.0 * s / n as f64;
    }
    c[0] *= 0.5;
    let scale = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok((c, scale))
}

fn build_segments(
    f: &dyn Fn(f64) -> Result<f64>,
    a: f64,
    b: f64,
    depth: usize,
    out: &mut Vec<Segment>,
) -> Result<()> {
    let (coeffs, scale) = fit(f, a, b)?;
    let tail = coeffs[DEGREE - 3..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if tail <= FIT_TOL * scale || depth == 0 {
        if tail > 1e-12 * scale {
            return Err(Error::NonConvergence {
                what: format!("Chebyshev fit on [{a}, {b}]"),
                estimate: tail / scale,
                tolerance: FIT_TOL,
            });
        }
        out.push(Segment { a, b, coeffs });
        return Ok(());
    }
    let m = 0.5 * (a + b);
    build_segments(f, a, m, depth - 1, out)?;
    build_segments(f, m, b, depth - 1, out)
}

impl MlTable {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        super::check_alpha(alpha)?;
        if alpha == 1.0 && (beta == 1.0 || beta == 0.0) {
            return Ok(MlTable {
                alpha,
                beta,
                repr: Repr::Exp { beta },
            });
        }
        // First y on a geometric grid where the expansion is good enough.
        let mut y_max = 1.0;
        let mut asym = Vec::new();
        while y_max < Y_CAP {
            let (v, e, n) = asymptotic_terms(alpha, beta, y_max);
            if e <= 1e-15 * v.abs() {
                asym = (1..=n)
                    .map(|k| if k % 2 == 1 { 1.0 } else { -1.0 } * rgamma(beta - alpha * k as f64))
                    .collect();
                break;
            }
            y_max *= 2f64.powf(0.25);
        }
        let y_max = y_max.min(Y_CAP);
        let f = |y: f64| e_neg(alpha, beta, y);
        let mut segments = Vec::new();
        let mut a = 0.0;
        let mut b = 0.25f64.min(y_max);
        while a < y_max {
            build_segments(&f, a, b, 12, &mut segments)?;
            a = b;
            b = (2.0 * b).min(y_max);
        }
        Ok(MlTable {
            alpha,
            beta,
            repr: Repr::Fitted {
                segments,
                y_max,
                asym,
            },
        })
    }

    /// Number of Chebyshev pieces and the end of the fitted range.
    pub fn layout(&self) -> (usize, f64) {
        match &self.repr {
            Repr::Exp { .. } => (0, 0.0),
            Repr::Fitted { segments, y_max, .. } => (segments.len(), *y_max),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// E_{α,β}(-y). Negative or non-finite y yields NaN.
    pub fn eval(&self, y: f64) -> f64 {
        if !(y >= 0.0) {
            return f64::NAN;
        }
        match &self.repr {
            Repr::Exp { beta } => {
                if *beta == 1.0 {
                    (-y).exp()
                } else {
                    -y * (-y).exp()
                }
            }
            Repr::Fitted {
                segments,
                y_max,
                asym,
            } => {
                if y <= *y_max {
                    let i = segments.partition_point(|s| s.b < y).min(segments.len() - 1);
                    segments[i].eval(y)
                } else if asym.is_empty() {
                    e_neg(self.alpha, self.beta, y).unwrap_or(f64::NAN)
                } else {
                    let w = 1.0 / y;
                    let mut acc = 0.0;
                    for &c in asym.iter().rev() {
                        acc = acc * w + c;
                    }
                    acc * w
                }
            }
        }
    }
}

type Cache = Mutex<HashMap<(u64, u64), Arc<MlTable>>>;

static CACHE: LazyLock<Cache> = LazyLock::new(|| Mutex::new(HashMap::new()));

/// Shared table for (α, β), built on first use.
pub fn ml_table(alpha: f64, beta: f64) -> Result<Arc<MlTable>> {
    let key = (alpha.to_bits(), beta.to_bits());
    let mut cache = CACHE.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(t) = cache.get(&key) {
        return Ok(Arc::clone(t));
    }
    let t = Arc::new(MlTable::new(alpha, beta)?);
    cache.insert(key, Arc::clone(&t));
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_matches_direct_evaluation() {
        for &(a, b) in &[(0.3, 0.3), (0.75, 0.75), (0.8, -0.2), (0.95, 0.95), (1.0, 0.5), (0.5, 1.0)] {
            let t = MlTable::new(a, b).unwrap();
            for i in 0..400 {
                let y = 1e-3 * 1.035f64.powi(i);
                let d = e_neg(a, b, y).unwrap();
                let v = t.eval(y);
                assert!(
                    (v - d).abs() <= 1e-13 * d.abs().max(1e-3 / (1.0 + y * y)),
                    "({a},{b}) y={y}: {v} vs {d}"
                );
            }
            assert!((t.eval(0.0) - rgamma(b)).abs() < 1e-14);
        }
    }

    #[test]
    fn exact_forms() {
        let t = MlTable::new(1.0, 0.0).unwrap();
        assert_eq!(t.eval(2.0), -2.0 * (-2f64).exp());
        assert!(t.eval(-1.0).is_nan());
    }

    #[test]
    fn cache_returns_same_table() {
        let a = ml_table(0.61, 0.61).unwrap();
        let b = ml_table(0.61, 0.61).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
    }
}
