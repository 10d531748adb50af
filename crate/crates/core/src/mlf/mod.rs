//! Two-parameter Mittag-Leffler function E_{α,β}(z) = Σ z^k / Γ(αk + β)
//! on the negative real axis, and the relaxation kernels built from it.

mod eval;
mod gamma;
mod table;

pub use gamma::{gamma, gamma_fn, ln_gamma, rgamma, sin_pi};
pub use table::{ml_table, MlTable};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MLQuery {
    pub alpha: f64,
    pub beta: f64,
    pub x: f64,
}

impl MLQuery {
    pub fn new(alpha: f64, beta: f64, x: f64) -> Self {
        MLQuery { alpha, beta, x }
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 2.0 {
        if alpha > 1.0 {
            return Err(Error::domain(format!(
                "alpha = {alpha}: only 0 < alpha <= 1 is implemented"
            )));
        }
        Ok(())
    } else {
        Err(Error::domain(format!("alpha = {alpha} outside (0, 2)")))
    }
}

/// E_{α,β}(x).
///
/// Every x <= 0 is supported. Positive x is summed by the Taylor series and
/// only accepted while the terms stay representable.
pub fn ml_eval(q: MLQuery) -> Result<f64> {
    check_alpha(q.alpha)?;
    if !q.beta.is_finite() || !q.x.is_finite() {
        return Err(Error::domain("non-finite beta or argument"));
    }
    if q.x <= 0.0 {
        return eval::e_neg(q.alpha, q.beta, -q.x);
    }
    eval::taylor(q.alpha, q.beta, q.x)
        .map(|s| s.value)
        .ok_or_else(|| Error::domain(format!("E_{{{},{}}}({}) overflows", q.alpha, q.beta, q.x)))
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("kernel time t = {t} must be positive")))
    }
}

/// t^{α-1} E_{α,α}(-λ t^α), the resolvent kernel of the fractional
/// relaxation equation. Positive and non-increasing in t.
pub fn ml_phi(alpha: f64, lambda: f64, t: f64) -> Result<f64> {
    check_t(t)?;
    if !(lambda > 0.0) {
        return Err(Error::domain(format!("lambda = {lambda} must be positive")));
    }
    check_alpha(alpha)?;
    Ok(t.powf(alpha - 1.0) * eval::e_neg(alpha, alpha, lambda * t.powf(alpha))?)
}

/// d/dt ml_phi = t^{α-2} E_{α,α-1}(-λ t^α).
pub fn ml_phi_derivative(alpha: f64, lambda: f64, t: f64) -> Result<f64> {
    check_t(t)?;
    if !(lambda > 0.0) {
        return Err(Error::domain(format!("lambda = {lambda} must be positive")));
    }
    check_alpha(alpha)?;
    Ok(t.powf(alpha - 2.0) * eval::e_neg(alpha, alpha - 1.0, lambda * t.powf(alpha))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let e1 = (-1f64).exp();
        assert!((ml_eval(MLQuery::new(1.0, 1.0, -1.0)).unwrap() - e1).abs() < 1e-15);
        for &(a, b) in &[(0.3, 0.7), (0.9, 2.5), (1.0, -0.5)] {
            assert_eq!(ml_eval(MLQuery::new(a, b, 0.0)).unwrap(), rgamma(b));
        }
        assert!((ml_phi(1.0, 2.0, 0.5).unwrap() - e1).abs() < 1e-15);
        assert!((ml_phi_derivative(1.0, 1.0, 1.0).unwrap() + e1).abs() < 1e-15);
        assert!(ml_phi_derivative(0.6, 1.0, 2.0).unwrap() < 0.0);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(ml_eval(MLQuery::new(0.0, 1.0, -1.0)), Err(Error::Domain(_))));
        assert!(matches!(ml_eval(MLQuery::new(2.5, 1.0, -1.0)), Err(Error::Domain(_))));
        assert!(matches!(ml_eval(MLQuery::new(1.5, 1.0, -1.0)), Err(Error::Domain(_))));
        assert!(matches!(ml_phi(0.5, 1.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(ml_phi_derivative(0.5, 1.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn positive_argument() {
        // E_{1,1}(2) = e^2, E_{1/2,1}(x) = e^{x²} erfc(-x)
        let v = ml_eval(MLQuery::new(1.0, 1.0, 2.0)).unwrap();
        assert!((v / 2f64.exp() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let (a, l, t) = (0.8, 3.0, 0.7);
        let h = 1e-6;
        let fd = (ml_phi(a, l, t + h).unwrap() - ml_phi(a, l, t - h).unwrap()) / (2.0 * h);
        let d = ml_phi_derivative(a, l, t).unwrap();
        assert!((fd / d - 1.0).abs() < 1e-5, "{fd} vs {d}");
    }
}
