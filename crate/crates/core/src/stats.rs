//! Sample statistics with standard errors, and the two-sample
//! Kolmogorov-Smirnov test.

use crate::quad::CompensatedSum;

pub fn mean(x: &[f64]) -> f64 {
    let s: CompensatedSum = x.iter().copied().collect();
    s.value() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    let s: CompensatedSum = x.iter().map(|v| (v - m) * (v - m)).collect();
    s.value() / (x.len() as f64 - 1.0)
}

/// Unbiased sample covariance.
pub fn covariance(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let (mx, my) = (mean(x), mean(y));
    let s: CompensatedSum = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    s.value() / (x.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn se_mean(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}

/// Standard error of the unbiased sample variance,
/// sqrt((μ4 - σ⁴ (M-3)/(M-1)) / M), with plug-in central moments.
pub fn se_variance(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = mean(x);
    let m2: CompensatedSum = x.iter().map(|v| (v - m).powi(2)).collect();
    let m4: CompensatedSum = x.iter().map(|v| (v - m).powi(4)).collect();
    let s2 = m2.value() / n;
    let mu4 = m4.value() / n;
    ((mu4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
}

/// Standard error of the sample covariance from the spread of the
/// centred products.
pub fn se_covariance(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let p: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    (variance(&p) / x.len() as f64).sqrt()
}

/// Slope and intercept of the least-squares line through (x, y).
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

/// Two-sample Kolmogorov-Smirnov statistic and its asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    (d, kolmogorov_q((ne + 0.12 + 0.11 / ne) * d))
}

/// Q(λ) = 2 Σ (-1)^{k-1} exp(-2k²λ²).
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let t = (-2.0 * kf * kf * lambda * lambda).exp();
        s += if k % 2 == 1 { t } else { -t };
        if t < 1e-16 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}
