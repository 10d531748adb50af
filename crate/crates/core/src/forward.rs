//! Spectral mild solution and Monte Carlo ensembles of the final-time modal
//! data u_k(T) = I_{k,1}(T) + I_{k,2}(T).

use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{sample_bm_increments, TimeGrid};
use crate::fintegral::{KernelParams, PathwiseIntegrator, WeightedFunction};
use crate::mlf::ml_table;
use crate::quad::{integrate_graded, Node, Tolerance};
use crate::stats;

/// Spatial domain with explicit Dirichlet eigenpairs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpatialDomain {
    Interval { length: f64 },
    Rectangle { lx: f64, ly: f64 },
}

/// A point of the domain; intervals use the first coordinate only.
pub type Point = [f64; 2];

/// Dirichlet eigenpairs of -Δ, sorted by eigenvalue.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    domain: SpatialDomain,
    lambdas: Vec<f64>,
    // (m, n) wave numbers; n = 0 for intervals.
    waves: Vec<(u32, u32)>,
}

impl EigenSystem {
    pub fn build(domain: SpatialDomain, count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::domain("eigensystem needs at least one mode"));
        }
        let (lambdas, waves) = match domain {
            SpatialDomain::Interval { length } => {
                if !(length > 0.0) {
                    return Err(Error::domain(format!("interval length {length} must be positive")));
                }
                (1..=count as u32)
                    .map(|m| ((m as f64 * PI / length).powi(2), (m, 0)))
                    .unzip()
            }
            SpatialDomain::Rectangle { lx, ly } => {
                if !(lx > 0.0 && ly > 0.0) {
                    return Err(Error::domain(format!("rectangle sides {lx} x {ly} must be positive")));
                }
                // The K smallest eigenvalues have m, n ≤ K.
                let mut all: Vec<(f64, (u32, u32))> = (1..=count as u32)
                    .flat_map(|m| (1..=count as u32).map(move |n| (m, n)))
                    .map(|(m, n)| {
                        let l = PI * PI * ((m as f64 / lx).powi(2) + (n as f64 / ly).powi(2));
                        (l, (m, n))
                    })
                    .collect();
                all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                all.truncate(count);
                all.into_iter().unzip()
            }
        };
        Ok(EigenSystem { domain, lambdas, waves })
    }

    pub fn domain(&self) -> SpatialDomain {
        self.domain
    }

    pub fn count(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// Normalized eigenfunction of mode `k` (0-based) at `p`.
    pub fn phi(&self, k: usize, p: Point) -> f64 {
        let (m, n) = self.waves[k];
        match self.domain {
            SpatialDomain::Interval { length } => (2.0 / length).sqrt() * (m as f64 * PI * p[0] / length).sin(),
            SpatialDomain::Rectangle { lx, ly } => {
                2.0 / (lx * ly).sqrt()
                    * (m as f64 * PI * p[0] / lx).sin()
                    * (n as f64 * PI * p[1] / ly).sin()
            }
        }
    }
}

/// Σ_k c_k φ_k(x) at each point.
pub fn assemble_field(coeffs: &[f64], points: &[Point], es: &EigenSystem) -> Result<Vec<f64>> {
    if coeffs.len() > es.count() {
        return Err(Error::domain(format!(
            "{} coefficients for an eigensystem of {} modes",
            coeffs.len(),
            es.count()
        )));
    }
    Ok(points
        .iter()
        .map(|&p| coeffs.iter().enumerate().map(|(k, c)| c * es.phi(k, p)).sum())
        .collect())
}

/// The time factor h of the source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TimeProfile {
    Constant { value: f64 },
    /// a + b t
    Linear { a: f64, b: f64 },
    /// a e^{rate t}
    Exponential { a: f64, rate: f64 },
    /// Values on a uniform grid over [0, T], linearly interpolated.
    Samples { values: Vec<f64> },
}

impl TimeProfile {
    pub fn eval(&self, t: f64, t_end: f64) -> f64 {
        match self {
            TimeProfile::Constant { value } => *value,
            TimeProfile::Linear { a, b } => a + b * t,
            TimeProfile::Exponential { a, rate } => a * (rate * t).exp(),
            TimeProfile::Samples { values } => {
                let n = values.len() - 1;
                if n == 0 {
                    return values[0];
                }
                let x = (t / t_end).clamp(0.0, 1.0) * n as f64;
                let i = (x.floor() as usize).min(n - 1);
                let w = x - i as f64;
                values[i] * (1.0 - w) + values[i + 1] * w
            }
        }
    }

    /// Minimum over [0, T]; exact since every profile is monotone or
    /// piecewise linear.
    pub fn min_on(&self, t_end: f64) -> f64 {
        match self {
            TimeProfile::Samples { values } => values.iter().copied().fold(f64::INFINITY, f64::min),
            _ => self.eval(0.0, t_end).min(self.eval(t_end, t_end)),
        }
    }

    pub fn max_on(&self, t_end: f64) -> f64 {
        match self {
            TimeProfile::Samples { values } => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            _ => self.eval(0.0, t_end).max(self.eval(t_end, t_end)),
        }
    }

    pub fn is_constant(&self) -> Option<f64> {
        match self {
            TimeProfile::Constant { value } => Some(*value),
            _ => None,
        }
    }
}

/// Source F(x, t) = f(x) h(t) and noise amplitude g(x), in modal form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub h: TimeProfile,
    /// Certified lower bound of h on [0, T].
    pub c_h: f64,
}

impl SourceSpec {
    pub fn validate(&self, t_end: f64, modes: usize) -> Result<()> {
        if self.f.len() > modes || self.g.len() > modes {
            return Err(Error::Config(format!(
                "source has {} f and {} g coefficients but only {modes} modes",
                self.f.len(),
                self.g.len()
            )));
        }
        if self.f.iter().chain(&self.g).any(|v| !v.is_finite()) {
            return Err(Error::Config("source coefficients must be finite".into()));
        }
        if self.g.iter().all(|&v| v == 0.0) {
            return Err(Error::Config("noise amplitude g must not vanish identically".into()));
        }
        if let TimeProfile::Samples { values } = &self.h {
            if values.is_empty() {
                return Err(Error::Config("h samples must not be empty".into()));
            }
        }
        if !(self.c_h > 0.0) {
            return Err(Error::Config(format!(
                "lower bound c_h = {} of h must be positive",
                self.c_h
            )));
        }
        let lo = self.h.min_on(t_end);
        if !(lo >= self.c_h) || !self.h.max_on(t_end).is_finite() {
            return Err(Error::Config(format!(
                "h must be bounded with h >= c_h = {} on [0, T], but min h = {lo}",
                self.c_h
            )));
        }
        Ok(())
    }

    pub fn f_k(&self, k: usize) -> f64 {
        self.f.get(k).copied().unwrap_or(0.0)
    }

    pub fn g_k(&self, k: usize) -> f64 {
        self.g.get(k).copied().unwrap_or(0.0)
    }
}

fn default_steps() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub alpha: f64,
    pub hurst: f64,
    pub t_end: f64,
    /// Number of time steps of the driving path.
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub modes: usize,
    pub paths: usize,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let (a, h) = (self.alpha, self.hurst);
        if !(a > 0.0 && a <= 1.0) {
            return Err(Error::Config(format!("alpha = {a} must lie in (0, 1]")));
        }
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::Config(format!("Hurst index H = {h} must lie in (0, 1)")));
        }
        if !(a + h > 1.0) {
            return Err(Error::Config(format!(
                "alpha + H = {} violates the standing hypothesis alpha + H > 1 \
                 under which the stochastic convolution has finite second moment",
                a + h
            )));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("horizon T = {} must be positive", self.t_end)));
        }
        if self.steps == 0 || self.modes == 0 {
            return Err(Error::Config("steps and modes must be at least 1".into()));
        }
        if self.paths < 2 {
            return Err(Error::Config("at least two paths are needed for sample moments".into()));
        }
        Ok(())
    }

    pub fn kernel_params(&self) -> Result<KernelParams> {
        KernelParams::new(self.hurst, self.t_end)
    }
}

const CONVOLUTION_TOL: Tolerance = Tolerance::new(1e-15, 1e-12);

/// ∫_0^t (t-τ)^{α-1} E_{α,α}(-λ (t-τ)^α) h(τ) dτ.
pub fn ml_convolution(alpha: f64, lambda: f64, t: f64, h: &TimeProfile, t_end: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("convolution time t = {t} must be positive")));
    }
    let table = ml_table(alpha, alpha)?;
    if let Some(c) = h.is_constant() {
        // Substituting x = r^α removes the weight entirely.
        let e = integrate_graded(
            |n: Node| table.eval(lambda * n.x),
            0.0,
            t.powf(alpha),
            0.0,
            0.0,
            CONVOLUTION_TOL,
        )?;
        return Ok(c * e / alpha);
    }
    integrate_graded(
        |n: Node| {
            let r = n.from_b;
            r.powf(alpha - 1.0) * table.eval(lambda * r.powf(alpha)) * h.eval(n.x, t_end)
        },
        0.0,
        t,
        0.0,
        alpha - 1.0,
        CONVOLUTION_TOL,
    )
}

/// I_{k,1}(t) = f_k ∫_0^t (t-τ)^{α-1} E_{α,α}(-λ_k (t-τ)^α) h(τ) dτ.
pub fn deterministic_coefficient(
    k: usize,
    t: f64,
    cfg: &SimConfig,
    src: &SourceSpec,
    es: &EigenSystem,
) -> Result<f64> {
    if !(t > 0.0 && t <= cfg.t_end) {
        return Err(Error::domain(format!("t = {t} outside (0, T]")));
    }
    let fk = src.f_k(k);
    if fk == 0.0 {
        return Ok(0.0);
    }
    Ok(fk * ml_convolution(cfg.alpha, es.lambdas()[k], t, &src.h, cfg.t_end)?)
}

fn modal_kernels(cfg: &SimConfig, es: &EigenSystem, modes: &[usize]) -> Result<Vec<WeightedFunction>> {
    modes
        .iter()
        .map(|&k| WeightedFunction::ml_kernel(cfg.t_end, cfg.alpha, es.lambdas()[k]))
        .collect()
}

fn driving_grid(cfg: &SimConfig) -> Result<TimeGrid> {
    TimeGrid::new(cfg.t_end, cfg.steps)
}

/// Samples of I_{k,2}(T) = g_k ∫_0^T φ_k dB^H, one per path of `bm`.
pub fn stochastic_coefficient_samples(
    k: usize,
    cfg: &SimConfig,
    src: &SourceSpec,
    es: &EigenSystem,
    bm: &crate::fbm::PathBatch,
) -> Result<Vec<f64>> {
    let gk = src.g_k(k);
    if gk == 0.0 {
        return Ok(vec![0.0; bm.n_paths()]);
    }
    let psi = modal_kernels(cfg, es, &[k])?;
    let integ = PathwiseIntegrator::new(&cfg.kernel_params()?, &psi, bm.grid)?;
    let mut v = integ.apply(bm)?.pop().expect("one mode");
    v.iter_mut().for_each(|x| *x *= gk);
    Ok(v)
}

/// Sample moments of the modal data with their standard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMoments {
    pub n_paths: usize,
    pub mean: Vec<f64>,
    pub se_mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub se_variance: Vec<f64>,
    /// Row-major K x K.
    pub covariance: Vec<f64>,
    pub se_covariance: Vec<f64>,
}

impl EnsembleMoments {
    /// `samples[k][m]` is mode k on path m.
    pub fn from_samples(samples: &[Vec<f64>]) -> Self {
        let k = samples.len();
        let mut covariance = vec![0.0; k * k];
        let mut se_covariance = vec![0.0; k * k];
        for i in 0..k {
            for j in i..k {
                let (c, s) = if i == j {
                    (stats::variance(&samples[i]), stats::se_variance(&samples[i]))
                } else {
                    (
                        stats::covariance(&samples[i], &samples[j]),
                        stats::se_covariance(&samples[i], &samples[j]),
                    )
                };
                covariance[i * k + j] = c;
                covariance[j * k + i] = c;
                se_covariance[i * k + j] = s;
                se_covariance[j * k + i] = s;
            }
        }
        EnsembleMoments {
            n_paths: samples.first().map_or(0, Vec::len),
            mean: samples.iter().map(|x| stats::mean(x)).collect(),
            se_mean: samples.iter().map(|x| stats::se_mean(x)).collect(),
            variance: (0..k).map(|i| covariance[i * k + i]).collect(),
            se_variance: (0..k).map(|i| se_covariance[i * k + i]).collect(),
            covariance,
            se_covariance,
        }
    }

    pub fn modes(&self) -> usize {
        self.mean.len()
    }

    pub fn cov(&self, k: usize, l: usize) -> f64 {
        self.covariance[k * self.modes() + l]
    }

    /// Columns k, lambda, mean, se_mean, var, se_var after the `header`
    /// comment line.
    pub fn write_csv<W: Write>(&self, mut w: W, lambdas: &[f64], header: &str) -> Result<()> {
        writeln!(w, "# {header}")?;
        writeln!(w, "k,lambda,mean,se_mean,var,se_var")?;
        for k in 0..self.modes() {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                k + 1,
                lambdas[k],
                self.mean[k],
                self.se_mean[k],
                self.variance[k],
                self.se_variance[k]
            )?;
        }
        Ok(())
    }

    /// Dense K x K covariance after the `header` comment line.
    pub fn write_covariance_csv<W: Write>(&self, mut w: W, header: &str) -> Result<()> {
        writeln!(w, "# {header}")?;
        let k = self.modes();
        for i in 0..k {
            let row: Vec<String> = (0..k).map(|j| format!("{:.16e}", self.cov(i, j))).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Parses the output of `write_csv`, and of `write_covariance_csv` if
    /// given. Without a covariance file the off-diagonal entries are NaN.
    /// Standard errors of the covariance are not stored and read as NaN.
    pub fn read_csv(moments: &str, covariance: Option<&str>, n_paths: usize) -> Result<(Self, Vec<f64>)> {
        let mut lambdas = Vec::new();
        let mut cols: [Vec<f64>; 4] = Default::default();
        let mut header_seen = false;
        for (ln, line) in moments.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !header_seen {
                if line != "k,lambda,mean,se_mean,var,se_var" {
                    return Err(Error::Parse(format!("line {}: unexpected moments header {line:?}", ln + 1)));
                }
                header_seen = true;
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::Parse(format!("line {}: expected 6 fields, found {}", ln + 1, fields.len())));
            }
            let k: usize = fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad mode index {:?}", ln + 1, fields[0])))?;
            if k != lambdas.len() + 1 {
                return Err(Error::Parse(format!("line {}: modes must be listed 1, 2, ... in order", ln + 1)));
            }
            let num = |s: &str| -> Result<f64> {
                s.trim()
                    .parse()
                    .map_err(|_| Error::Parse(format!("line {}: bad number {s:?}", ln + 1)))
            };
            lambdas.push(num(fields[1])?);
            for (c, f) in cols.iter_mut().zip(&fields[2..]) {
                c.push(num(f)?);
            }
        }
        if lambdas.is_empty() {
            return Err(Error::Parse("moments file lists no modes".into()));
        }
        let k = lambdas.len();
        let [mean, se_mean, variance, se_variance] = cols;
        let mut cov = vec![f64::NAN; k * k];
        if let Some(text) = covariance {
            let rows: Vec<&str> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .collect();
            if rows.len() != k {
                return Err(Error::Parse(format!("covariance has {} rows for {k} modes", rows.len())));
            }
            for (i, row) in rows.iter().enumerate() {
                let vals: Vec<f64> = row
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Parse(format!("covariance row {}: {e}", i + 1)))?;
                if vals.len() != k {
                    return Err(Error::Parse(format!("covariance row {} has {} entries", i + 1, vals.len())));
                }
                cov[i * k..(i + 1) * k].copy_from_slice(&vals);
            }
        }
        for i in 0..k {
            cov[i * k + i] = variance[i];
        }
        let mut se_cov = vec![f64::NAN; k * k];
        for i in 0..k {
            se_cov[i * k + i] = se_variance[i];
        }
        Ok((
            EnsembleMoments {
                n_paths,
                mean,
                se_mean,
                variance,
                se_variance,
                covariance: cov,
                se_covariance: se_cov,
            },
            lambdas,
        ))
    }
}

#[derive(Debug, Clone)]
pub struct Ensemble {
    /// I_{k,1}(T) per mode.
    pub deterministic: Vec<f64>,
    /// `samples[k][m]` = u_k(T, ω_m).
    pub samples: Vec<Vec<f64>>,
    pub moments: EnsembleMoments,
}

/// Monte Carlo ensemble of u_k(T) for all modes, every mode driven by the
/// same path of B^H.
pub fn simulate_ensemble(cfg: &SimConfig, src: &SourceSpec, es: &EigenSystem) -> Result<Ensemble> {
    cfg.validate()?;
    src.validate(cfg.t_end, cfg.modes)?;
    if es.count() < cfg.modes {
        return Err(Error::Config(format!(
            "eigensystem has {} modes, configuration asks for {}",
            es.count(),
            cfg.modes
        )));
    }
    let k = cfg.modes;
    let deterministic = (0..k)
        .map(|i| deterministic_coefficient(i, cfg.t_end, cfg, src, es))
        .collect::<Result<Vec<_>>>()?;
    let noisy: Vec<usize> = (0..k).filter(|&i| src.g_k(i) != 0.0).collect();
    let grid = driving_grid(cfg)?;
    let integ = PathwiseIntegrator::new(&cfg.kernel_params()?, &modal_kernels(cfg, es, &noisy)?, grid)?;
    let bm = sample_bm_increments(grid, cfg.paths, cfg.seed);
    let mut stochastic = integ.apply(&bm)?.into_iter();
    let samples: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            let gk = src.g_k(i);
            if gk == 0.0 {
                vec![deterministic[i]; cfg.paths]
            } else {
                let w = stochastic.next().expect("one row per noisy mode");
                w.into_iter().map(|x| deterministic[i] + gk * x).collect()
            }
        })
        .collect();
    let moments = EnsembleMoments::from_samples(&samples);
    Ok(Ensemble {
        deterministic,
        samples,
        moments,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::gauss_legendre;

    #[test]
    fn interval_and_rectangle_spectra() {
        let es = EigenSystem::build(SpatialDomain::Interval { length: 1.0 }, 3).unwrap();
        for (k, l) in es.lambdas().iter().enumerate() {
            assert!((l / (PI * PI * ((k + 1) * (k + 1)) as f64) - 1.0).abs() < 1e-15);
        }
        let es = EigenSystem::build(SpatialDomain::Rectangle { lx: 1.0, ly: 1.0 }, 4).unwrap();
        let want = [2.0, 5.0, 5.0, 8.0];
        for (l, w) in es.lambdas().iter().zip(want) {
            assert!((l / (PI * PI) - w).abs() < 1e-13);
        }
        assert!(EigenSystem::build(SpatialDomain::Interval { length: 1.0 }, 0).is_err());
    }

    #[test]
    fn interval_eigenfunctions_are_orthonormal() {
        let es = EigenSystem::build(SpatialDomain::Interval { length: 2.0 }, 4).unwrap();
        let (x, w) = gauss_legendre(64);
        for i in 0..4 {
            for j in 0..4 {
                let ip: f64 = x
                    .iter()
                    .zip(&w)
                    .map(|(xi, wi)| wi * es.phi(i, [1.0 + xi, 0.0]) * es.phi(j, [1.0 + xi, 0.0]))
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip - want).abs() < 1e-10, "({i},{j}): {ip}");
            }
        }
    }

    #[test]
    fn first_mode_field() {
        let es = EigenSystem::build(SpatialDomain::Interval { length: 1.0 }, 3).unwrap();
        let pts: Vec<Point> = (0..=10).map(|i| [i as f64 / 10.0, 0.0]).collect();
        let u = assemble_field(&[1.0, 0.0, 0.0], &pts, &es).unwrap();
        for (p, v) in pts.iter().zip(u) {
            assert!((v - 2f64.sqrt() * (PI * p[0]).sin()).abs() < 1e-15);
        }
        assert!(assemble_field(&[0.0; 3], &pts, &es).unwrap().iter().all(|&v| v == 0.0));
        assert!(assemble_field(&[1.0; 4], &pts, &es).is_err());
    }

    #[test]
    fn exponential_convolution() {
        let h = TimeProfile::Constant { value: 1.0 };
        for &l in &[PI * PI, 100.0, 2500.0] {
            let v = ml_convolution(1.0, l, 0.7, &h, 1.0).unwrap();
            let want = (1.0 - (-l * 0.7f64).exp()) / l;
            assert!((v / want - 1.0).abs() < 1e-10, "λ={l}: {v} vs {want}");
        }
        // The general path agrees with the substituted one.
        let lin = TimeProfile::Linear { a: 1.0, b: 0.0 };
        let a = ml_convolution(0.6, 30.0, 1.0, &lin, 1.0).unwrap();
        let b = ml_convolution(0.6, 30.0, 1.0, &h, 1.0).unwrap();
        assert!((a / b - 1.0).abs() < 1e-10, "{a} vs {b}");
    }

    #[test]
    fn profiles() {
        let s = TimeProfile::Samples {
            values: vec![1.0, 3.0, 2.0],
        };
        assert_eq!(s.eval(0.25, 1.0), 2.0);
        assert_eq!(s.eval(1.0, 1.0), 2.0);
        assert_eq!(s.min_on(1.0), 1.0);
        let e = TimeProfile::Exponential { a: 2.0, rate: -1.0 };
        assert!((e.min_on(1.0) - 2.0 * (-1f64).exp()).abs() < 1e-15);
    }

    fn config(alpha: f64, hurst: f64) -> SimConfig {
        SimConfig {
            alpha,
            hurst,
            t_end: 1.0,
            steps: 64,
            modes: 3,
            paths: 100,
            seed: 1,
        }
    }

    #[test]
    fn validation() {
        assert!(config(0.8, 0.3).validate().is_ok());
        assert!(matches!(config(0.6, 0.3).validate(), Err(Error::Config(m)) if m.contains("alpha + H > 1")));
        assert!(config(1.2, 0.3).validate().is_err());
        let mut src = SourceSpec {
            f: vec![1.0],
            g: vec![0.0, 1.0],
            h: TimeProfile::Linear { a: 1.0, b: -0.5 },
            c_h: 0.5,
        };
        assert!(src.validate(1.0, 3).is_ok());
        src.c_h = 0.6;
        assert!(src.validate(1.0, 3).is_err());
        src.c_h = 0.0;
        assert!(src.validate(1.0, 3).is_err());
        src.c_h = 0.5;
        src.g = vec![0.0];
        assert!(src.validate(1.0, 3).is_err());
    }

    #[test]
    fn deterministic_modes_and_zero_noise() {
        let cfg = config(0.9, 0.6);
        let es = EigenSystem::build(SpatialDomain::Interval { length: 1.0 }, 3).unwrap();
        let src = SourceSpec {
            f: vec![0.0, 2.0],
            g: vec![1.0],
            h: TimeProfile::Constant { value: 1.0 },
            c_h: 1.0,
        };
        assert_eq!(deterministic_coefficient(0, 1.0, &cfg, &src, &es).unwrap(), 0.0);
        let ens = simulate_ensemble(&cfg, &src, &es).unwrap();
        // Modes without noise are deterministic.
        assert!(ens.samples[1].iter().all(|&v| v == ens.deterministic[1]));
        assert_eq!(ens.moments.variance[1], 0.0);
        assert!(ens.moments.variance[0] > 0.0);
    }

    #[test]
    fn moments_csv_round_trip() {
        let samples = vec![vec![1.0, 2.0, 4.0], vec![0.5, -1.0, 3.0]];
        let m = EnsembleMoments::from_samples(&samples);
        let mut a = Vec::new();
        let mut c = Vec::new();
        m.write_csv(&mut a, &[1.0, 4.0], "seed=1").unwrap();
        m.write_covariance_csv(&mut c, "seed=1").unwrap();
        let (r, l) = EnsembleMoments::read_csv(
            std::str::from_utf8(&a).unwrap(),
            Some(std::str::from_utf8(&c).unwrap()),
            3,
        )
        .unwrap();
        assert_eq!(l, vec![1.0, 4.0]);
        assert_eq!(r.mean, m.mean);
        assert_eq!(r.covariance, m.covariance);
        assert!(EnsembleMoments::read_csv("k,wrong\n", None, 3).is_err());
    }
}
