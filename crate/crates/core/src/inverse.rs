//! Recovery of f and |g| from final-time moments, the inversion factors
//! A_k, B_kl, and diagnostics of how fast the inversion degrades with k.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fintegral::{second_moment_pair, KernelParams, WeightedFunction};
use crate::forward::{assemble_field, ml_convolution, EigenSystem, EnsembleMoments, Point, SimConfig, TimeProfile};
use crate::mlf::ml_table;
use crate::quad::Tolerance;
use crate::stats;

/// Tolerances for B_kl: the diagonal decays like a power of λ_k, so the
/// absolute floor has to sit well below B_KK.
pub const FACTOR_KSTAR_TOL: Tolerance = Tolerance::new(1e-10, 1e-10);
pub const FACTOR_MOMENT_TOL: Tolerance = Tolerance::new(1e-10, 1e-9);

/// A_k, B_kl and their lower bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionFactors {
    pub lambdas: Vec<f64>,
    pub a: Vec<f64>,
    /// Row-major K x K, symmetric.
    pub b: Vec<f64>,
    /// c_h T^α E_{α,α}(-λ_k T^α) ≤ A_k.
    pub c1: Vec<f64>,
    /// T^{2(α+H-1)} E_{α,α}(-λ_k T^α) E_{α,α}(-λ_l T^α) ≤ B_kl, H > 1/2 only.
    pub c2: Option<Vec<f64>>,
}

impl InversionFactors {
    pub fn modes(&self) -> usize {
        self.a.len()
    }

    pub fn b_kl(&self, k: usize, l: usize) -> f64 {
        self.b[k * self.modes() + l]
    }
}

fn factor_params(cfg: &SimConfig) -> Result<KernelParams> {
    Ok(cfg.kernel_params()?.with_tolerances(FACTOR_KSTAR_TOL, FACTOR_MOMENT_TOL))
}

/// A_k for every mode of `es` up to `cfg.modes`.
pub fn a_factors(cfg: &SimConfig, es: &EigenSystem, h: &TimeProfile) -> Result<Vec<f64>> {
    let a = es.lambdas()[..cfg.modes]
        .par_iter()
        .map(|&l| ml_convolution(cfg.alpha, l, cfg.t_end, h, cfg.t_end))
        .collect::<Result<Vec<f64>>>()?;
    for (k, v) in a.iter().enumerate() {
        if !(*v > 0.0) {
            return Err(Error::Positivity(format!(
                "A_{} = {v:e}; the factor is positive for every admissible h, so quadrature failed",
                k + 1
            )));
        }
    }
    Ok(a)
}

/// B_kk only, which is all the instability diagnostics need.
pub fn b_diagonal(cfg: &SimConfig, es: &EigenSystem) -> Result<Vec<f64>> {
    let p = factor_params(cfg)?;
    let b = es.lambdas()[..cfg.modes]
        .par_iter()
        .map(|&l| {
            let psi = WeightedFunction::ml_kernel(cfg.t_end, cfg.alpha, l)?;
            second_moment_pair(&p, &psi, &psi)
        })
        .collect::<Result<Vec<f64>>>()?;
    for (k, v) in b.iter().enumerate() {
        if !(*v > 0.0) {
            return Err(Error::Positivity(format!("B_{{{0},{0}}} = {v:e} is not positive", k + 1)));
        }
    }
    Ok(b)
}

pub fn compute_factors(cfg: &SimConfig, es: &EigenSystem, h: &TimeProfile, c_h: f64) -> Result<InversionFactors> {
    cfg.validate()?;
    if es.count() < cfg.modes {
        return Err(Error::Config(format!(
            "eigensystem has {} modes, configuration asks for {}",
            es.count(),
            cfg.modes
        )));
    }
    let k = cfg.modes;
    let lambdas = es.lambdas()[..k].to_vec();
    let a = a_factors(cfg, es, h)?;

    let p = factor_params(cfg)?;
    let kernels = lambdas
        .iter()
        .map(|&l| WeightedFunction::ml_kernel(cfg.t_end, cfg.alpha, l))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..k).flat_map(|i| (i..k).map(move |j| (i, j))).collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| second_moment_pair(&p, &kernels[i], &kernels[j]))
        .collect::<Result<Vec<f64>>>()?;
    let mut b = vec![0.0; k * k];
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        if !(v > 0.0) {
            return Err(Error::Positivity(format!(
                "B_{{{},{}}} = {v:e} is not positive; quadrature failed",
                i + 1,
                j + 1
            )));
        }
        b[i * k + j] = v;
        b[j * k + i] = v;
    }

    let table = ml_table(cfg.alpha, cfg.alpha)?;
    let e: Vec<f64> = lambdas
        .iter()
        .map(|l| table.eval(l * cfg.t_end.powf(cfg.alpha)))
        .collect();
    let c1 = e.iter().map(|ek| c_h * cfg.t_end.powf(cfg.alpha) * ek).collect();
    let c2 = (cfg.hurst > 0.5).then(|| {
        let scale = cfg.t_end.powf(2.0 * (cfg.alpha + cfg.hurst - 1.0));
        (0..k * k).map(|ij| scale * e[ij / k] * e[ij % k]).collect()
    });
    Ok(InversionFactors { lambdas, a, b, c1, c2 })
}

fn check_cut(k_cut: usize, moments: &EnsembleMoments, factors: &InversionFactors) -> Result<()> {
    if k_cut > moments.modes() || k_cut > factors.modes() {
        return Err(Error::Config(format!(
            "K_cut = {k_cut} exceeds the {} moment modes or {} factor modes",
            moments.modes(),
            factors.modes()
        )));
    }
    Ok(())
}

/// f̂_k = mean_k / A_k for k < K_cut, zero beyond.
pub fn reconstruct_f(moments: &EnsembleMoments, factors: &InversionFactors, k_cut: usize) -> Result<Vec<f64>> {
    check_cut(k_cut, moments, factors)?;
    (0..moments.modes())
        .map(|k| {
            if k >= k_cut {
                return Ok(0.0);
            }
            let a = factors.a[k];
            if !(a.abs() >= 1e-300) {
                return Err(Error::Positivity(format!("A_{} = {a:e} is too small to divide by", k + 1)));
            }
            Ok(moments.mean[k] / a)
        })
        .collect()
}

/// Recovered |g| with the diagnostics of the variance inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GRecovery {
    pub g_abs: Vec<f64>,
    /// variance_k / B_kk before clamping.
    pub g_sq: Vec<f64>,
    /// Modes whose ĝ_k² came out negative and was clamped to zero.
    pub clamped: usize,
    /// max_{k≠l} |s_k s_l |ĝ_k| |ĝ_l| - Cov_kl / B_kl| under the best sign
    /// assignment s; None without off-diagonal covariances.
    pub residual: Option<f64>,
}

pub fn reconstruct_g_abs(moments: &EnsembleMoments, factors: &InversionFactors, k_cut: usize) -> Result<GRecovery> {
    check_cut(k_cut, moments, factors)?;
    let k = moments.modes();
    let g_sq: Vec<f64> = (0..k)
        .map(|i| if i < k_cut { moments.variance[i] / factors.b_kl(i, i) } else { 0.0 })
        .collect();
    let clamped = g_sq.iter().filter(|&&v| v < 0.0).count();
    if clamped > 0 {
        log::warn!("{clamped} negative estimates of g_k^2 clamped to zero");
    }
    let g_abs: Vec<f64> = g_sq.iter().map(|&v| v.max(0.0).sqrt()).collect();
    let ratio = |i: usize, j: usize| moments.cov(i, j) / factors.b_kl(i, j);
    let off_diag_known = (0..k_cut).all(|i| (0..k_cut).all(|j| i == j || moments.cov(i, j).is_finite()));
    let residual = (off_diag_known && k_cut > 1).then(|| best_sign_residual(&g_abs[..k_cut], ratio));
    Ok(GRecovery {
        g_abs,
        g_sq,
        clamped,
        residual,
    })
}

// Exhaustive over sign patterns up to this many modes, greedy beyond.
const EXHAUSTIVE_SIGNS: usize = 16;

fn best_sign_residual(g: &[f64], ratio: impl Fn(usize, usize) -> f64) -> f64 {
    let n = g.len();
    let worst = |s: &[f64]| {
        let mut m: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m = m.max((s[i] * s[j] * g[i] * g[j] - ratio(i, j)).abs());
                }
            }
        }
        m
    };
    let mut s = vec![1.0; n];
    if n <= EXHAUSTIVE_SIGNS {
        // The first sign is free, since flipping all signs changes nothing.
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << (n - 1)) {
            for (i, si) in s.iter_mut().enumerate().skip(1) {
                *si = if mask >> (i - 1) & 1 == 1 { -1.0 } else { 1.0 };
            }
            best = best.min(worst(&s));
        }
        return best;
    }
    // Signs relative to the mode with the largest |ĝ|.
    let anchor = (0..n).max_by(|&a, &b| g[a].total_cmp(&g[b])).unwrap_or(0);
    for (i, si) in s.iter_mut().enumerate() {
        if i != anchor && ratio(anchor, i) < 0.0 {
            *si = -1.0;
        }
    }
    worst(&s)
}

/// Number of leading modes whose variance is resolved above the sampling
/// noise: variance_k > safety · SE(variance_k).
pub fn suggest_k_cut(moments: &EnsembleMoments, safety: f64) -> usize {
    (0..moments.modes())
        .take_while(|&k| moments.variance[k] > safety * moments.se_variance[k])
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeRow {
    pub k: usize,
    pub lambda: f64,
    pub f_hat: f64,
    pub g_abs: f64,
    pub f_rel_err: Option<f64>,
    pub g_rel_err: Option<f64>,
    pub a: f64,
    pub b_kk: f64,
    pub inv_a: f64,
    pub inv_b_kk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub k_cut: usize,
    pub rows: Vec<ModeRow>,
    pub clamped: usize,
    pub residual: Option<f64>,
}

fn rel_err(est: f64, truth: f64) -> f64 {
    if truth == 0.0 {
        est.abs()
    } else {
        (est - truth).abs() / truth.abs()
    }
}

impl ReconstructionReport {
    /// `truth` is (f, g) when the ground truth is known; g is compared in
    /// absolute value.
    pub fn new(
        moments: &EnsembleMoments,
        factors: &InversionFactors,
        k_cut: usize,
        truth: Option<(&[f64], &[f64])>,
    ) -> Result<Self> {
        let f = reconstruct_f(moments, factors, k_cut)?;
        let g = reconstruct_g_abs(moments, factors, k_cut)?;
        let at = |v: &[f64], k: usize| v.get(k).copied().unwrap_or(0.0);
        let rows = (0..moments.modes())
            .map(|k| {
                let b = factors.b_kl(k, k);
                ModeRow {
                    k: k + 1,
                    lambda: factors.lambdas[k],
                    f_hat: f[k],
                    g_abs: g.g_abs[k],
                    f_rel_err: truth.map(|(tf, _)| rel_err(f[k], at(tf, k))),
                    g_rel_err: truth.map(|(_, tg)| rel_err(g.g_abs[k], at(tg, k).abs())),
                    a: factors.a[k],
                    b_kk: b,
                    inv_a: 1.0 / factors.a[k],
                    inv_b_kk: 1.0 / b,
                }
            })
            .collect();
        Ok(ReconstructionReport {
            k_cut,
            rows,
            clamped: g.clamped,
            residual: g.residual,
        })
    }

    pub fn f_hat(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.f_hat).collect()
    }

    pub fn g_abs(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.g_abs).collect()
    }

    /// Reconstructed f on `points`.
    pub fn f_field(&self, points: &[Point], es: &EigenSystem) -> Result<Vec<f64>> {
        assemble_field(&self.f_hat(), points, es)
    }

    /// Reconstructed |g| expansion on `points`; the signs of the modal
    /// coefficients are not identifiable and are taken positive.
    pub fn g_field(&self, points: &[Point], es: &EigenSystem) -> Result<Vec<f64>> {
        assemble_field(&self.g_abs(), points, es)
    }

    pub fn write_csv<W: Write>(&self, mut w: W, header: &str) -> Result<()> {
        writeln!(w, "# {header}")?;
        writeln!(w, "k,lambda,f_hat,g_abs,f_rel_err,g_rel_err,A,B_kk,inv_A,inv_B_kk")?;
        let opt = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.16e}"));
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{},{},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.k,
                r.lambda,
                r.f_hat,
                r.g_abs,
                opt(r.f_rel_err),
                opt(r.g_rel_err),
                r.a,
                r.b_kk,
                r.inv_a,
                r.inv_b_kk
            )?;
        }
        Ok(())
    }
}

/// Which exponent to use for the rough-noise case of `beta_exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaVariant {
    /// min{2γ(α+H-1), 2-2γ(H-1), 2H, γ} as stated.
    #[default]
    Printed,
    /// Same with 2γH in place of 2H, which is what t_* = λ^{-γ} gives when
    /// substituted into the t_*^{2H} term.
    Substituted,
}

/// Decay exponent β with B_kk ≲ λ_k^{-β}.
pub fn beta_exponent(alpha: f64, hurst: f64, gamma: f64, variant: BetaVariant) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::domain(format!("gamma = {gamma} must lie in (0, 1)")));
    }
    if !(alpha > 0.0 && alpha <= 1.0 && hurst > 0.0 && hurst < 1.0) {
        return Err(Error::domain(format!("need alpha in (0, 1] and H in (0, 1), got {alpha}, {hurst}")));
    }
    let (a, h, g) = (alpha, hurst, gamma);
    if h == 0.5 {
        if !(a > 0.5) {
            return Err(Error::domain(format!("H = 1/2 requires alpha > 1/2, got {a}")));
        }
        return Ok((g * (2.0 * a - 1.0)).min(1.0 - g));
    }
    if !(a + h > 1.0) {
        return Err(Error::domain(format!("alpha + H = {} must exceed 1", a + h)));
    }
    let lead = 2.0 * g * (a + h - 1.0);
    Ok(if h < 0.5 {
        let third = match variant {
            BetaVariant::Printed => 2.0 * h,
            BetaVariant::Substituted => 2.0 * g * h,
        };
        lead.min(2.0 - 2.0 * g * (h - 1.0)).min(third).min(g)
    } else {
        lead.min(2.0 * (1.0 - g)).min(1.0 - g * (1.0 - a))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilityRow {
    pub k: usize,
    pub lambda: f64,
    pub t_star: f64,
    pub a: f64,
    pub a_lambda: f64,
    pub b_kk: f64,
    pub b_lambda_beta: f64,
    /// |Δĝ_k²| caused by perturbing variance_k by ε.
    pub g_sq_shift: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilityProfile {
    pub gamma: f64,
    pub beta: f64,
    pub variant: BetaVariant,
    pub epsilon: f64,
    pub rows: Vec<InstabilityRow>,
    /// Least-squares slopes of log(A_k λ_k) and log(B_kk λ_k^β) against
    /// log λ_k; bounded sequences have slope near or below zero.
    pub slope_a: f64,
    pub slope_b: f64,
}

/// Smallest λ_K / λ_1 for which the decay tables are meaningful.
pub const MIN_DYNAMIC_RANGE: f64 = 50.0;

pub fn instability_report(
    cfg: &SimConfig,
    es: &EigenSystem,
    h: &TimeProfile,
    gamma: f64,
    variant: BetaVariant,
    epsilon: f64,
) -> Result<InstabilityProfile> {
    cfg.validate()?;
    let beta = beta_exponent(cfg.alpha, cfg.hurst, gamma, variant)?;
    if es.count() < cfg.modes {
        return Err(Error::Config(format!(
            "eigensystem has {} modes, configuration asks for {}",
            es.count(),
            cfg.modes
        )));
    }
    let lambdas = &es.lambdas()[..cfg.modes];
    let range = lambdas[cfg.modes - 1] / lambdas[0];
    if range < MIN_DYNAMIC_RANGE {
        return Err(Error::Config(format!(
            "lambda_K / lambda_1 = {range:.1} is below {MIN_DYNAMIC_RANGE}; use more modes"
        )));
    }
    let a = a_factors(cfg, es, h)?;
    let b = b_diagonal(cfg, es)?;
    let rows: Vec<InstabilityRow> = (0..cfg.modes)
        .map(|k| {
            let l = lambdas[k];
            InstabilityRow {
                k: k + 1,
                lambda: l,
                t_star: l.powf(-gamma),
                a: a[k],
                a_lambda: a[k] * l,
                b_kk: b[k],
                b_lambda_beta: b[k] * l.powf(beta),
                g_sq_shift: epsilon / b[k],
            }
        })
        .collect();
    let ll: Vec<f64> = lambdas.iter().map(|l| l.ln()).collect();
    let la: Vec<f64> = rows.iter().map(|r| r.a_lambda.ln()).collect();
    let lb: Vec<f64> = rows.iter().map(|r| r.b_lambda_beta.ln()).collect();
    Ok(InstabilityProfile {
        gamma,
        beta,
        variant,
        epsilon,
        slope_a: stats::linear_fit(&ll, &la).0,
        slope_b: stats::linear_fit(&ll, &lb).0,
        rows,
    })
}

impl InstabilityProfile {
    pub fn write_csv<W: Write>(&self, mut w: W, header: &str) -> Result<()> {
        writeln!(w, "# {header}")?;
        writeln!(
            w,
            "# gamma={:.16e},beta={:.16e},slope_a={:.16e},slope_b={:.16e}",
            self.gamma, self.beta, self.slope_a, self.slope_b
        )?;
        writeln!(w, "k,lambda,t_star,A,A_lambda,B_kk,B_lambda_beta,g_sq_shift")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.k, r.lambda, r.t_star, r.a, r.a_lambda, r.b_kk, r.b_lambda_beta, r.g_sq_shift
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward::SpatialDomain;

    #[test]
    fn beta_cases() {
        let b = |a, h, g| beta_exponent(a, h, g, BetaVariant::Printed).unwrap();
        assert!((b(0.75, 0.5, 0.5) - 0.25).abs() < 1e-15);
        assert!((b(0.9, 0.75, 0.5) - 0.65).abs() < 1e-15);
        assert!((b(0.9, 0.3, 0.8) - 0.32).abs() < 1e-15);
        // 2γH = 0.48 does not undercut 0.32 here but does for small γ.
        assert!((beta_exponent(0.9, 0.3, 0.8, BetaVariant::Substituted).unwrap() - 0.32).abs() < 1e-15);
        let s = beta_exponent(0.95, 0.2, 0.9, BetaVariant::Substituted).unwrap();
        let p = b(0.95, 0.2, 0.9);
        assert!((s - 0.27).abs() < 1e-15 && (p - 0.27).abs() < 1e-15);
        let s = beta_exponent(0.99, 0.3, 0.3, BetaVariant::Substituted).unwrap();
        assert!((s - 0.174).abs() < 1e-15, "{s}");
        assert!(beta_exponent(0.5, 0.5, 0.5, BetaVariant::Printed).is_err());
        assert!(beta_exponent(0.6, 0.3, 0.5, BetaVariant::Printed).is_err());
        assert!(beta_exponent(0.9, 0.7, 1.0, BetaVariant::Printed).is_err());
    }

    #[test]
    fn sign_residual_ignores_signs() {
        let g = [1.0, 2.0, 0.5];
        let s = [1.0, -1.0, -1.0];
        let r = best_sign_residual(&g, |i, j| s[i] * s[j] * g[i] * g[j]);
        assert_eq!(r, 0.0);
    }

    fn brownian_config(modes: usize) -> SimConfig {
        SimConfig {
            alpha: 1.0,
            hurst: 0.5,
            t_end: 1.0,
            steps: 64,
            modes,
            paths: 2,
            seed: 0,
        }
    }

    #[test]
    fn heat_equation_factors() {
        let cfg = brownian_config(6);
        let es = EigenSystem::build(SpatialDomain::Interval { length: 1.0 }, 6).unwrap();
        let f = compute_factors(&cfg, &es, &TimeProfile::Constant { value: 1.0 }, 1.0).unwrap();
        for k in 0..6 {
            let l = es.lambdas()[k];
            assert!((f.a[k] * l / (1.0 - (-l).exp()) - 1.0).abs() < 1e-10);
            for j in 0..6 {
                let m = es.lambdas()[j];
                let want = (1.0 - (-(l + m)).exp()) / (l + m);
                assert!((f.b_kl(k, j) / want - 1.0).abs() < 1e-8, "B_{k}{j}");
            }
            assert!(f.a[k] >= f.c1[k]);
        }
        assert!(f.c2.is_none());
    }

    #[test]
    fn exact_moments_round_trip() {
        let cfg = brownian_config(4);
        let es = EigenSystem::build(SpatialDomain::Interval { length: 1.0 }, 4).unwrap();
        let fac = compute_factors(&cfg, &es, &TimeProfile::Constant { value: 1.0 }, 1.0).unwrap();
        let (f, g) = ([1.0, -0.5, 0.0, 2.0], [0.3, -1.0, 0.7, 0.1]);
        let k = 4;
        let cov: Vec<f64> = (0..k * k).map(|ij| g[ij / k] * g[ij % k] * fac.b_kl(ij / k, ij % k)).collect();
        let m = EnsembleMoments {
            n_paths: 0,
            mean: (0..k).map(|i| f[i] * fac.a[i]).collect(),
            se_mean: vec![0.0; k],
            variance: (0..k).map(|i| cov[i * k + i]).collect(),
            se_variance: vec![0.0; k],
            covariance: cov,
            se_covariance: vec![0.0; k * k],
        };
        let rep = ReconstructionReport::new(&m, &fac, k, Some((&f, &g))).unwrap();
        for r in &rep.rows {
            assert!(r.f_rel_err.unwrap() < 1e-12 && r.g_rel_err.unwrap() < 1e-12);
        }
        assert!(rep.residual.unwrap() < 1e-14);
        // Truncation zeroes the tail.
        let f2 = reconstruct_f(&m, &fac, 2).unwrap();
        assert_eq!(&f2[2..], &[0.0, 0.0]);
        assert!(reconstruct_f(&m, &fac, 5).is_err());
    }
}
