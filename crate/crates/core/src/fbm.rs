//! Brownian increments and fractional Brownian motion on uniform grids.
//!
//! Two exact samplers for B^H: a dense Cholesky factor of the covariance
//! matrix, and circulant embedding of the stationary increment sequence
//! (Davies-Harte), which is O(n log n) per path and falls back to Cholesky
//! when the embedding is not positive semidefinite.

use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Uniform grid t_i = i T / n, i = 0..=n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t_end: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(t_end: f64, n: usize) -> Result<Self> {
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::domain(format!("horizon T = {t_end} must be positive")));
        }
        if n == 0 {
            return Err(Error::domain("grid needs at least one subinterval"));
        }
        Ok(TimeGrid { t_end, n })
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    /// Number of subintervals.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.n {
            self.t_end
        } else {
            self.t_end * i as f64 / self.n as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.node(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PathKind {
    /// n increments W(t_{i+1}) - W(t_i) per path.
    BrownianIncrements,
    /// n + 1 values B^H(t_0 = 0), ..., B^H(t_n) per path.
    FbmValues,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sampler {
    Direct,
    Cholesky,
    Circulant,
}

/// How a batch was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerInfo {
    pub method: Sampler,
    /// Diagonal shift added before factorization, 0 if none.
    pub jitter: f64,
    /// Circulant embedding had to give way to Cholesky.
    pub fell_back: bool,
}

/// A batch of sample paths stored row-major, one row per path. Row p is
/// generated from stream p of the master seed, whatever the batch size or
/// thread count.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub grid: TimeGrid,
    pub kind: PathKind,
    pub hurst: Option<f64>,
    pub seed: u64,
    pub info: SamplerInfo,
    n_paths: usize,
    data: Vec<f64>,
}

impl PathBatch {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn cols(&self) -> usize {
        match self.kind {
            PathKind::BrownianIncrements => self.grid.n,
            PathKind::FbmValues => self.grid.n + 1,
        }
    }

    pub fn row(&self, p: usize) -> &[f64] {
        let c = self.cols();
        &self.data[p * c..(p + 1) * c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols())
    }

    /// Column j across all paths.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    /// One line per path after a two-line header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let kind = match self.kind {
            PathKind::BrownianIncrements => "BrownianIncrements",
            PathKind::FbmValues => "FbmValues",
        };
        let h = self.hurst.map(|h| format!("{h}")).unwrap_or_default();
        writeln!(w, "# kind,H,T,n,seed")?;
        writeln!(w, "# {kind},{h},{},{},{}", self.grid.t_end, self.grid.n, self.seed)?;
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

fn check_hurst(h: f64) -> Result<()> {
    if h > 0.0 && h < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("Hurst index H = {h} outside (0, 1)")))
    }
}

/// R_H(t, s) = (t^{2H} + s^{2H} - |t - s|^{2H}) / 2.
pub fn fbm_covariance(h: f64, t: f64, s: f64) -> Result<f64> {
    check_hurst(h)?;
    if t < 0.0 || s < 0.0 {
        return Err(Error::domain("fBm covariance needs t, s >= 0"));
    }
    let p = 2.0 * h;
    Ok(0.5 * (t.powf(p) + s.powf(p) - (t - s).abs().powf(p)))
}

fn fill_rows<F>(data: &mut [f64], cols: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    data.par_chunks_mut(cols)
        .enumerate()
        .for_each(|(p, row)| f(p, row));
}

pub fn sample_bm_increments(grid: TimeGrid, n_paths: usize, seed: u64) -> PathBatch {
    let n = grid.n;
    let sd = grid.dt().sqrt();
    let mut data = vec![0.0; n * n_paths];
    fill_rows(&mut data, n, |p, row| {
        let mut r = rng::stream(seed, Domain::BrownianIncrements, p as u64);
        for v in row.iter_mut() {
            let z: f64 = r.sample(StandardNormal);
            *v = sd * z;
        }
    });
    PathBatch {
        grid,
        kind: PathKind::BrownianIncrements,
        hurst: None,
        seed,
        info: SamplerInfo {
            method: Sampler::Direct,
            jitter: 0.0,
            fell_back: false,
        },
        n_paths,
        data,
    }
}

/// Dense lower-triangular factor, row-major.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    l: Vec<f64>,
}

impl Cholesky {
    pub fn factor(a: &[f64], n: usize) -> Result<Self> {
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d -= l[j * n + k] * l[j * n + k];
            }
            if !(d > 0.0) {
                return Err(Error::Factorization { pivot: j, value: d });
            }
            let djj = d.sqrt();
            l[j * n + j] = djj;
            for i in j + 1..n {
                let mut s = a[i * n + j];
                let (ri, rj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
                for k in 0..j {
                    s -= ri[k] * rj[k];
                }
                l[i * n + j] = s / djj;
            }
        }
        Ok(Cholesky { n, l })
    }

    /// out = L z
    pub fn mul(&self, z: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let row = &self.l[i * self.n..i * self.n + i + 1];
            out[i] = row.iter().zip(z).map(|(a, b)| a * b).sum();
        }
    }
}

/// [R_H(t_i, t_j)] for i, j = 1..=n.
pub fn fbm_covariance_matrix(h: f64, grid: &TimeGrid) -> Result<Vec<f64>> {
    check_hurst(h)?;
    let n = grid.n;
    let mut c = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = fbm_covariance(h, grid.node(i + 1), grid.node(j + 1))?;
            c[i * n + j] = v;
            c[j * n + i] = v;
        }
    }
    Ok(c)
}

pub const CHOLESKY_MAX_N: usize = 4096;

/// Factor, adding `1e-12 trace / n` to the diagonal if the plain attempt
/// fails. Returns the jitter used.
fn factor_with_jitter(mut c: Vec<f64>, n: usize) -> Result<(Cholesky, f64)> {
    match Cholesky::factor(&c, n) {
        Ok(l) => Ok((l, 0.0)),
        Err(_) => {
            let trace: f64 = (0..n).map(|i| c[i * n + i]).sum();
            let jitter = 1e-12 * trace / n as f64;
            for i in 0..n {
                c[i * n + i] += jitter;
            }
            log::warn!("fBm covariance not numerically PD; added jitter {jitter:.3e}");
            Cholesky::factor(&c, n).map(|l| (l, jitter))
        }
    }
}

pub fn sample_fbm_cholesky(h: f64, grid: TimeGrid, n_paths: usize, seed: u64) -> Result<PathBatch> {
    check_hurst(h)?;
    let n = grid.n;
    if n > CHOLESKY_MAX_N {
        return Err(Error::domain(format!(
            "Cholesky sampler limited to n <= {CHOLESKY_MAX_N} (got {n})"
        )));
    }
    let (l, jitter) = factor_with_jitter(fbm_covariance_matrix(h, &grid)?, n)?;
    let mut data = vec![0.0; (n + 1) * n_paths];
    fill_rows(&mut data, n + 1, |p, row| {
        let mut r = rng::stream(seed, Domain::FbmCholesky, p as u64);
        let z: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        row[0] = 0.0;
        l.mul(&z, &mut row[1..]);
    });
    Ok(PathBatch {
        grid,
        kind: PathKind::FbmValues,
        hurst: Some(h),
        seed,
        info: SamplerInfo {
            method: Sampler::Cholesky,
            jitter,
            fell_back: false,
        },
        n_paths,
        data,
    })
}

/// Autocovariance of fractional Gaussian noise at lag k (unit spacing).
fn fgn_autocov(h: f64, k: usize) -> f64 {
    let k = k as f64;
    let p = 2.0 * h;
    0.5 * ((k + 1.0).powf(p) - 2.0 * k.powf(p) + (k - 1.0).abs().powf(p))
}

/// Eigenvalues of the 2n circulant embedding of the fGn covariance.
fn embedding_eigenvalues(h: f64, n: usize) -> Vec<f64> {
    let m = 2 * n;
    let mut c: Vec<Complex64> = (0..m)
        .map(|j| {
            let lag = if j <= n { j } else { m - j };
            Complex64::new(fgn_autocov(h, lag), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut c);
    c.iter().map(|z| z.re).collect()
}

pub fn sample_fbm_circulant(h: f64, grid: TimeGrid, n_paths: usize, seed: u64) -> Result<PathBatch> {
    check_hurst(h)?;
    let n = grid.n;
    let m = 2 * n;
    let lam = embedding_eigenvalues(h, n);
    let max = lam.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = lam.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if min < -1e-10 * max {
        log::warn!("circulant embedding has eigenvalue {min:.3e}; falling back to Cholesky");
        let mut b = sample_fbm_cholesky(h, grid, n_paths, seed)?;
        b.info.fell_back = true;
        return Ok(b);
    }
    let scale: Vec<f64> = lam.iter().map(|&l| (l.max(0.0) / m as f64).sqrt()).collect();
    let fft = FftPlanner::new().plan_fft_forward(m);
    let fft: Arc<dyn rustfft::Fft<f64>> = fft;
    // Increments over a step dt have standard deviation dt^H.
    let step = grid.dt().powf(h);
    let mut data = vec![0.0; (n + 1) * n_paths];
    fill_rows(&mut data, n + 1, |p, row| {
        let mut r = rng::stream(seed, Domain::FbmCirculant, p as u64);
        let mut w: Vec<Complex64> = scale
            .iter()
            .map(|&s| {
                let re: f64 = r.sample(StandardNormal);
                let im: f64 = r.sample(StandardNormal);
                Complex64::new(s * re, s * im)
            })
            .collect();
        fft.process(&mut w);
        row[0] = 0.0;
        let mut acc = 0.0;
        for i in 0..n {
            acc += step * w[i].re;
            row[i + 1] = acc;
        }
    });
    Ok(PathBatch {
        grid,
        kind: PathKind::FbmValues,
        hurst: Some(h),
        seed,
        info: SamplerInfo {
            method: Sampler::Circulant,
            jitter: 0.0,
            fell_back: false,
        },
        n_paths,
        data,
    })
}

/// Smallest eigenvalue of a symmetric matrix by cyclic Jacobi rotations;
/// meant for the modest matrices in diagnostics and tests.
pub fn min_eigenvalue(a: &[f64], n: usize) -> f64 {
    symmetric_eigenvalues(a, n)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

pub fn symmetric_eigenvalues(a: &[f64], n: usize) -> Vec<f64> {
    let mut a = a.to_vec();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum();
        let diag: f64 = (0..n).map(|i| a[i * n + i] * a[i * n + i]).sum();
        if off <= 1e-30 * diag {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}
