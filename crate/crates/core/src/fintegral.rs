//! Volterra kernels of fractional Brownian motion, the transfer operator
//! K*_{H,T}, and the two ways of getting at E[∫ψ dB^H ∫φ dB^H]: pathwise
//! sums against Brownian increments and deterministic quadrature.
//!
//! Integrands are carried as `WeightedFunction`s, ψ(τ) = (T-τ)^a m(T-τ),
//! and every evaluation is done in distance-to-horizon coordinates so the
//! endpoint singularity at τ = T never suffers cancellation.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fbm::{PathBatch, PathKind, TimeGrid};
use crate::mlf::{gamma, ml_table};
use crate::quad::{self, gauss_legendre, integrate_graded, Node, Tolerance};
use crate::rng::{self, Domain};
use crate::stats;

fn beta_fn(a: f64, b: f64) -> f64 {
    gamma(a) * gamma(b) / gamma(a + b)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regime {
    /// H < 1/2
    Rough,
    /// H = 1/2
    Brownian,
    /// H > 1/2
    Smooth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub hurst: f64,
    pub t_end: f64,
    pub c_h: f64,
    /// H(2H - 1); only meaningful for H > 1/2.
    pub alpha_h: f64,
    /// Per-point target for K*ψ.
    pub kstar_tol: Tolerance,
    /// Target for deterministic second moments.
    pub moment_tol: Tolerance,
}

impl KernelParams {
    pub fn new(hurst: f64, t_end: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::domain(format!("Hurst index H = {hurst} outside (0, 1)")));
        }
        if !(t_end > 0.0 && t_end.is_finite()) {
            return Err(Error::domain(format!("horizon T = {t_end} must be positive")));
        }
        let h = hurst;
        let alpha_h = h * (2.0 * h - 1.0);
        let c_h = if h > 0.5 {
            (alpha_h / beta_fn(2.0 - 2.0 * h, h - 0.5)).sqrt()
        } else if h < 0.5 {
            (2.0 * h / ((1.0 - 2.0 * h) * beta_fn(1.0 - 2.0 * h, h + 0.5))).sqrt()
        } else {
            1.0
        };
        Ok(KernelParams {
            hurst,
            t_end,
            c_h,
            alpha_h,
            kstar_tol: Tolerance::new(1e-6, 1e-10),
            moment_tol: Tolerance::new(1e-6, 1e-9),
        })
    }

    pub fn with_tolerances(mut self, kstar: Tolerance, moment: Tolerance) -> Self {
        self.kstar_tol = kstar;
        self.moment_tol = moment;
        self
    }

    pub fn regime(&self) -> Regime {
        if self.hurst < 0.5 {
            Regime::Rough
        } else if self.hurst > 0.5 {
            Regime::Smooth
        } else {
            Regime::Brownian
        }
    }
}

/// Tight target for kernel integrals nested inside other quadratures.
const INNER: Tolerance = Tolerance::new(1e-300, 1e-12);

/// K_H(t, s) in terms of the gap d = t - s > 0 and s > 0.
fn kernel_from_gap(p: &KernelParams, d: f64, s: f64) -> Result<f64> {
    let h = p.hurst;
    let rho = d / s;
    match p.regime() {
        Regime::Brownian => Ok(1.0),
        Regime::Smooth => {
            // ∫_0^1 (1 + ρv)^{H-1/2} v^{H-3/2} dv
            let f = integrate_graded(
                |n: Node| (1.0 + rho * n.from_a).powf(h - 0.5) * n.from_a.powf(h - 1.5),
                0.0,
                1.0,
                h - 1.5,
                0.0,
                INNER,
            )?;
            Ok(p.c_h * d.powf(h - 0.5) * f)
        }
        Regime::Rough => {
            // ∫_0^1 (1 + ρv)^{H-3/2} v^{H-1/2} dv
            let j = integrate_graded(
                |n: Node| (1.0 + rho * n.from_a).powf(h - 1.5) * n.from_a.powf(h - 0.5),
                0.0,
                1.0,
                h - 0.5,
                0.0,
                INNER,
            )?;
            let bracket = (1.0 + rho).powf(h - 0.5) - (h - 0.5) * rho * j;
            Ok(p.c_h * d.powf(h - 0.5) * bracket)
        }
    }
}

/// Square-integrable kernel with B^H(t) = ∫_0^t K_H(t, s) dW(s).
pub fn kernel_kh(p: &KernelParams, t: f64, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < t) {
        return Err(Error::domain(format!("K_H(t, s) needs 0 < s < t (t = {t}, s = {s})")));
    }
    kernel_from_gap(p, t - s, s)
}

/// ∂K_H(u, s)/∂u in terms of the gap x = u - s.
fn kernel_du_from_gap(p: &KernelParams, x: f64, s: f64) -> f64 {
    let h = p.hurst;
    let base = p.c_h * (1.0 + x / s).powf(h - 0.5) * x.powf(h - 1.5);
    match p.regime() {
        Regime::Smooth => base,
        Regime::Rough => (h - 0.5) * base,
        Regime::Brownian => 0.0,
    }
}

/// ∂K_H(u, s)/∂u = c_H (H - 1/2)^{[H<1/2]} (u/s)^{H-1/2} (u-s)^{H-3/2}.
pub fn kernel_kh_du(p: &KernelParams, u: f64, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < u) {
        return Err(Error::domain(format!("∂K_H/∂u needs 0 < s < u (u = {u}, s = {s})")));
    }
    Ok(kernel_du_from_gap(p, u - s, s))
}

/// ψ(τ) = r^a m(r) with r = horizon - τ, vanishing for τ > horizon.
#[derive(Clone)]
pub struct WeightedFunction {
    horizon: f64,
    exponent: f64,
    smooth: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for WeightedFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WeightedFunction")
            .field("horizon", &self.horizon)
            .field("exponent", &self.exponent)
            .finish_non_exhaustive()
    }
}

impl WeightedFunction {
    /// `smooth` receives the distance r = horizon - τ.
    pub fn new<F>(horizon: f64, exponent: f64, smooth: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(horizon > 0.0) || !(exponent > -1.0) {
            return Err(Error::domain(format!(
                "weighted function needs horizon > 0 and exponent > -1 (got {horizon}, {exponent})"
            )));
        }
        Ok(WeightedFunction {
            horizon,
            exponent,
            smooth: Arc::new(smooth),
        })
    }

    pub fn constant(horizon: f64, c: f64) -> Result<Self> {
        Self::new(horizon, 0.0, move |_| c)
    }

    /// (T-τ)^{α-1} E_{α,α}(-λ (T-τ)^α), the modal kernel of the mild solution.
    pub fn ml_kernel(horizon: f64, alpha: f64, lambda: f64) -> Result<Self> {
        let table = ml_table(alpha, alpha)?;
        Self::new(horizon, alpha - 1.0, move |r| table.eval(lambda * r.powf(alpha)))
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }

    /// Value at distance r > 0 from the horizon.
    pub fn at_distance(&self, r: f64) -> f64 {
        let m = (self.smooth)(r);
        if self.exponent == 0.0 {
            m
        } else {
            r.powf(self.exponent) * m
        }
    }

    pub fn eval(&self, tau: f64) -> f64 {
        if tau >= self.horizon {
            0.0
        } else {
            self.at_distance(self.horizon - tau)
        }
    }
}

/// (K*ψ)(s) at a point given both s and its distance d to the horizon.
fn kstar_point(p: &KernelParams, psi: &WeightedFunction, s: f64, d: f64, tol: Tolerance) -> Result<f64> {
    if d <= 0.0 {
        return Ok(0.0);
    }
    let h = p.hurst;
    let a = psi.exponent.min(0.0);
    match p.regime() {
        Regime::Brownian => Ok(psi.at_distance(d)),
        Regime::Smooth => {
            let f = |n: Node| psi.at_distance(n.from_b) * kernel_du_from_gap(p, n.from_a, s);
            let e = quad::graded_estimate(&f, 0.0, d, h - 1.5, a, tol)?;
            quad::check(e, tol, &format!("K* quadrature at s = {s}, T - s = {d}")).map(|e| e.value)
        }
        Regime::Rough => {
            let ps = psi.at_distance(d);
            let head = kernel_from_gap(p, d, s)? * ps;
            // The sum is no more accurate than tol.rel relative to its
            // larger term, so the correction need not be either.
            let tol = Tolerance {
                abs: tol.abs.max(tol.rel * head.abs()),
                ..tol
            };
            // Below r0 the difference ψ(s+r) - ψ(s) is lost to rounding and
            // the weight r^{H-3/2} would amplify it, so that piece uses
            // ψ(s+r) - ψ(s) ≈ -ψ'·r with ψ' (in distance) from a central
            // difference. The neglected terms are O(r0^{H+3/2}).
            let r0 = 1e-6 * d.min(s);
            let step = 1e-4 * d;
            let slope = (psi.at_distance(d + step) - psi.at_distance(d - step)) / (2.0 * step);
            let near = -slope * p.c_h * (h - 0.5) * r0.powf(h + 0.5) / (h + 0.5);
            let f = |n: Node| (psi.at_distance(n.from_b) - ps) * kernel_du_from_gap(p, n.x, s);
            let e = quad::graded_estimate(&f, r0, d, h - 0.5, a, tol)?;
            let e = quad::check(e, tol, &format!("K* quadrature at s = {s}, T - s = {d}"))?;
            Ok(head + near + e.value)
        }
    }
}

/// (K*_{H,T} ψ)(s) on a grid of points inside (0, horizon); zero beyond
/// the horizon of ψ.
pub fn kstar_apply(p: &KernelParams, psi: &WeightedFunction, s_grid: &[f64]) -> Result<Vec<f64>> {
    check_horizon(p, psi)?;
    s_grid
        .par_iter()
        .enumerate()
        .map(|(i, &s)| {
            if !(s > 0.0) {
                return Err(Error::domain(format!("K* grid point {i} (s = {s}) must be positive")));
            }
            kstar_point(p, psi, s, psi.horizon - s, p.kstar_tol).map_err(|e| match e {
                Error::NonConvergence {
                    what,
                    estimate,
                    tolerance,
                } => Error::NonConvergence {
                    what: format!("{what} at grid point {i} (s = {s})"),
                    estimate,
                    tolerance,
                },
                other => other,
            })
        })
        .collect()
}

fn check_horizon(p: &KernelParams, psi: &WeightedFunction) -> Result<()> {
    if psi.horizon > p.t_end * (1.0 + 1e-12) {
        return Err(Error::domain(format!(
            "integrand horizon {} exceeds T = {}",
            psi.horizon, p.t_end
        )));
    }
    Ok(())
}

/// Exponent p with (K*ψ)(s) ~ s^p as s -> 0.
fn exponent_at_origin(p: &KernelParams) -> f64 {
    -(p.hurst - 0.5).abs()
}

/// Exponent with (K*ψ)(s) ~ (T-s)^p as s -> T.
fn exponent_at_horizon(p: &KernelParams, psi: &WeightedFunction) -> f64 {
    psi.exponent + p.hurst - 0.5
}

/// Octaves of geometric refinement below the refined block so that the
/// unresolved innermost cell holds a negligible share (~1e-4) of ∫ g² when
/// g ~ r^p; at least `MIN_OCTAVES` so that kernels decaying on scales much
/// shorter than a grid cell are resolved.
fn refinement_octaves(p: f64) -> usize {
    const MIN_OCTAVES: usize = 12;
    if p >= 0.0 {
        return MIN_OCTAVES;
    }
    ((4.0 * std::f64::consts::LOG2_10 / (2.0 * p + 1.0)).ceil() as usize).clamp(MIN_OCTAVES, 60)
}

/// Grid cells covered by each end refinement.
const COVER: usize = 8;
/// Geometric sub-cells per octave.
const PER_OCTAVE: usize = 4;

/// Sub-grid over the `cover` grid cells next to one end, in distance from
/// that end: geometric toward the end, always containing the grid nodes.
#[derive(Debug, Clone)]
struct EndRefinement {
    cover: usize,
    /// Ascending breakpoints b_1 < ... < b_m = cover·Δ; sub-cell j is
    /// [b_{j-1}, b_j] with b_0 = 0.
    points: Vec<f64>,
    /// Mode-major averages of K*ψ_k over the sub-cells.
    averages: Vec<f64>,
}

impl EndRefinement {
    fn empty() -> Self {
        EndRefinement {
            cover: 0,
            points: Vec::new(),
            averages: Vec::new(),
        }
    }

    fn breakpoints(cover: usize, dt: f64, octaves: usize) -> Vec<f64> {
        let top = cover as f64 * dt;
        let mut pts: Vec<f64> = (1..=cover).map(|i| i as f64 * dt).collect();
        let steps = PER_OCTAVE * (octaves + (cover as f64).log2().ceil() as usize);
        for j in 1..=steps {
            pts.push(top * 2f64.powf(-(j as f64) / PER_OCTAVE as f64));
        }
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * b.abs());
        pts
    }
}

/// Precomputed cell averages of K*ψ_k, turning Brownian increments into
/// samples of ∫ψ_k dB^H.
///
/// Near both ends K*ψ is singular, and for large eigenvalues it also decays
/// on scales far below one grid cell, so a single increment per cell
/// discards a visible part of the variance. The cells next to each end are
/// therefore split geometrically and the Brownian path inside them is
/// filled in by bridge sampling, conditioned on the grid increments, from a
/// stream reserved for that purpose.
#[derive(Debug, Clone)]
pub struct PathwiseIntegrator {
    grid: TimeGrid,
    modes: usize,
    cells: Vec<f64>,
    left: EndRefinement,
    right: EndRefinement,
}

const GL_POINTS: usize = 6;

impl PathwiseIntegrator {
    pub fn new(p: &KernelParams, psis: &[WeightedFunction], grid: TimeGrid) -> Result<Self> {
        let t = grid.t_end();
        for psi in psis {
            check_horizon(p, psi)?;
            if (psi.horizon - t).abs() > 1e-12 * t {
                return Err(Error::GridMismatch(format!(
                    "integrand horizon {} differs from grid horizon {t}",
                    psi.horizon
                )));
            }
        }
        let n = grid.n();
        let dt = grid.dt();
        let (gx, gw) = gauss_legendre(GL_POINTS);
        let tol = p.kstar_tol;
        let modes = psis.len();

        // Average over the cell starting at s0 (distance d0 to the horizon)
        // of width w.
        let avg = |psi: &WeightedFunction, s0: f64, d0: f64, w: f64| -> Result<f64> {
            let mut acc = 0.0;
            for (x, wt) in gx.iter().zip(&gw) {
                let off = 0.5 * w * (1.0 + x);
                acc += wt * kstar_point(p, psi, s0 + off, d0 - off, tol)?;
            }
            Ok(0.5 * acc)
        };

        let right_cover = COVER.min(n.div_ceil(2));
        let left_cover = if p.regime() == Regime::Brownian {
            0
        } else {
            COVER.min(n - right_cover)
        };
        let jobs: Vec<(usize, usize)> = (0..modes)
            .flat_map(|k| (left_cover..n - right_cover).map(move |i| (k, i)))
            .collect();
        let vals: Vec<f64> = jobs
            .par_iter()
            .map(|&(k, i)| {
                let s0 = grid.node(i);
                avg(&psis[k], s0, t - s0, dt)
            })
            .collect::<Result<_>>()?;
        let mut cells = vec![0.0; modes * n];
        for (&(k, i), v) in jobs.iter().zip(vals) {
            cells[k * n + i] = v;
        }

        let left = if left_cover > 0 {
            let oct = refinement_octaves(exponent_at_origin(p));
            Self::refine(p, psis, left_cover, dt, oct, true, &avg)?
        } else {
            EndRefinement::empty()
        };
        let oct = psis
            .iter()
            .map(|psi| refinement_octaves(exponent_at_horizon(p, psi)))
            .max()
            .unwrap_or(0);
        let right = Self::refine(p, psis, right_cover, dt, oct, false, &avg)?;
        Ok(PathwiseIntegrator {
            grid,
            modes,
            cells,
            left,
            right,
        })
    }

    fn refine(
        p: &KernelParams,
        psis: &[WeightedFunction],
        cover: usize,
        dt: f64,
        octaves: usize,
        at_origin: bool,
        avg: &(dyn Fn(&WeightedFunction, f64, f64, f64) -> Result<f64> + Sync),
    ) -> Result<EndRefinement> {
        let points = EndRefinement::breakpoints(cover, dt, octaves);
        let m = points.len();
        let jobs: Vec<(usize, usize)> = (0..psis.len()).flat_map(|k| (0..m).map(move |j| (k, j))).collect();
        let averages = jobs
            .par_iter()
            .map(|&(k, j)| {
                let psi = &psis[k];
                let t = psi.horizon;
                if j == 0 {
                    return innermost_average(p, psi, points[0], at_origin);
                }
                let (lo, hi) = (points[j - 1], points[j]);
                if at_origin {
                    avg(psi, lo, t - lo, hi - lo)
                } else {
                    avg(psi, t - hi, hi, hi - lo)
                }
            })
            .collect::<Result<_>>()?;
        Ok(EndRefinement {
            cover,
            points,
            averages,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// Samples of ∫ψ_k dB^H, mode-major: out[k][path].
    pub fn apply(&self, bm: &PathBatch) -> Result<Vec<Vec<f64>>> {
        if bm.kind != PathKind::BrownianIncrements {
            return Err(Error::GridMismatch("expected Brownian increments".into()));
        }
        if bm.grid != self.grid {
            return Err(Error::GridMismatch(format!(
                "increments on {:?}, integrator built for {:?}",
                bm.grid, self.grid
            )));
        }
        let per_path: Vec<Vec<f64>> = (0..bm.n_paths())
            .into_par_iter()
            .map(|path| self.integrate_path(bm.row(path), bm.seed, path))
            .collect();
        Ok((0..self.modes)
            .map(|k| per_path.iter().map(|v| v[k]).collect())
            .collect())
    }

    fn integrate_path(&self, dw: &[f64], seed: u64, path: usize) -> Vec<f64> {
        let n = self.grid.n();
        let dt = self.grid.dt();
        let mut r = rng::stream(seed, Domain::BridgeRefinement, path as u64);
        let left_inc: Vec<f64> = dw[..self.left.cover].to_vec();
        let right_inc: Vec<f64> = (0..self.right.cover).map(|i| dw[n - 1 - i]).collect();
        let left = bridge(&left_inc, dt, &self.left.points, &mut r);
        let right = bridge(&right_inc, dt, &self.right.points, &mut r);
        (0..self.modes)
            .map(|k| {
                let row = &self.cells[k * n..(k + 1) * n];
                let mut acc = 0.0;
                for i in self.left.cover..n - self.right.cover {
                    acc += row[i] * dw[i];
                }
                for (refn, incs) in [(&self.left, &left), (&self.right, &right)] {
                    let m = refn.points.len();
                    if m > 0 {
                        let a = &refn.averages[k * m..(k + 1) * m];
                        for (aj, ij) in a.iter().zip(incs) {
                            acc += aj * ij;
                        }
                    }
                }
                acc
            })
            .collect()
    }
}

/// Brownian motion V in distance from one end, V(0) = 0, with the
/// increments over [iΔ, (i+1)Δ] given; returns its increments over the
/// sub-cells [b_{j-1}, b_j] by sampling the bridge inside every cell.
fn bridge<R: Rng>(cell_inc: &[f64], dt: f64, points: &[f64], r: &mut R) -> Vec<f64> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut v = vec![0.0; points.len()];
    let mut j = 0;
    let mut base = 0.0;
    for (i, inc) in cell_inc.iter().enumerate() {
        let lo = i as f64 * dt;
        let top = base + inc;
        // Interior points of this cell, filled from the top down.
        let start = j;
        while j < points.len() && points[j] < lo + dt * (1.0 - 1e-9) {
            j += 1;
        }
        // points[j] is the cell's upper node.
        v[j] = top;
        let (mut hi_x, mut hi_v) = (points[j], top);
        for q in (start..j).rev() {
            let y = points[q];
            let frac = (y - lo) / (hi_x - lo);
            let sd = ((y - lo) * (hi_x - y) / (hi_x - lo)).sqrt();
            let z: f64 = r.sample(StandardNormal);
            v[q] = base + (hi_v - base) * frac + sd * z;
            hi_x = y;
            hi_v = v[q];
        }
        j += 1;
        base = top;
    }
    let mut out = Vec::with_capacity(v.len());
    let mut prev = 0.0;
    for x in v {
        out.push(x - prev);
        prev = x;
    }
    out
}

/// Average of K*ψ over the innermost cell [0, w] in distance from one end.
fn innermost_average(p: &KernelParams, psi: &WeightedFunction, w: f64, at_origin: bool) -> Result<f64> {
    let t = psi.horizon;
    let point_tol = Tolerance::new(p.kstar_tol.abs * 1e-3, p.kstar_tol.rel);
    let failure = std::sync::Mutex::new(None);
    let expo = if at_origin {
        exponent_at_origin(p)
    } else {
        exponent_at_horizon(p, psi)
    };
    let f = |n: Node| {
        let (s, d) = if at_origin {
            (n.from_a, t - n.from_a)
        } else {
            (t - n.from_a, n.from_a)
        };
        kstar_point(p, psi, s, d, point_tol).unwrap_or_else(|e| {
            failure.lock().unwrap().get_or_insert(e);
            0.0
        })
    };
    let v = integrate_graded(f, 0.0, w, expo.min(0.0), 0.0, Tolerance::new(p.kstar_tol.abs * w, p.kstar_tol.rel));
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    Ok(v? / w)
}

/// Samples of ∫_0^T ψ dB^H, one per path of `bm`.
pub fn integrate_pathwise(p: &KernelParams, psi: &WeightedFunction, bm: &PathBatch) -> Result<Vec<f64>> {
    let integ = PathwiseIntegrator::new(p, std::slice::from_ref(psi), bm.grid)?;
    Ok(integ.apply(bm)?.pop().expect("one mode"))
}

/// E[∫ψ dB^H · ∫φ dB^H], computed deterministically.
pub fn second_moment_pair(p: &KernelParams, psi: &WeightedFunction, phi: &WeightedFunction) -> Result<f64> {
    check_horizon(p, psi)?;
    check_horizon(p, phi)?;
    if psi.horizon != phi.horizon {
        return Err(Error::GridMismatch(format!(
            "integrands have horizons {} and {}",
            psi.horizon, phi.horizon
        )));
    }
    let t = psi.horizon;
    let (a, b) = (psi.exponent, phi.exponent);
    let tol = p.moment_tol;
    let failed = FirstError::default();
    match p.regime() {
        Regime::Brownian => integrate_graded(
            |n: Node| psi.at_distance(n.from_a) * phi.at_distance(n.from_a),
            0.0,
            t,
            (a + b).min(0.0),
            0.0,
            tol,
        ),
        Regime::Smooth => {
            // α_H ∫_0^T v^{2H-2} G(v) dv,
            // G(v) = ∫_0^{T-v} [ψ(u+v) φ(u) + ψ(u) φ(u+v)] du,
            // with u measured as distance r from the horizon: ψ(u+v) sits at
            // distance r and φ(u) at r + v.
            let h = p.hurst;
            let inner_tol = Tolerance::new(tol.abs * 1e-3 / t, tol.rel * 1e-2);
            let g = |v: f64| -> f64 {
                let len = t - v;
                if len <= 0.0 {
                    return 0.0;
                }
                let f = |n: Node| {
                    let r = n.from_a;
                    psi.at_distance(r) * phi.at_distance(r + v) + phi.at_distance(r) * psi.at_distance(r + v)
                };
                failed.keep(
                    quad::graded_estimate(&f, 0.0, len, a.min(b).min(0.0), 0.0, inner_tol)
                        .and_then(|e| quad::check(e, inner_tol, "second-moment inner quadrature"))
                        .map(|e| e.value),
                )
            };
            let outer = integrate_graded(
                |n: Node| n.from_a.powf(2.0 * h - 2.0) * g(n.from_a),
                0.0,
                t,
                2.0 * h - 2.0,
                0.0,
                tol,
            );
            failed.or(outer).map(|v| p.alpha_h * v)
        }
        Regime::Rough => {
            let h = p.hurst;
            // An error δ in K*ψ moves the outer integral by about δ ‖K*φ‖₁.
            let inner_tol = Tolerance::new(tol.abs * 0.1, tol.rel * 0.1);
            let f = |n: Node| {
                let s = n.from_a;
                let d = n.from_b;
                let x = failed.keep(kstar_point(p, psi, s, d, inner_tol));
                let y = if std::ptr::eq(psi, phi) {
                    x
                } else {
                    failed.keep(kstar_point(p, phi, s, d, inner_tol))
                };
                x * y
            };
            let pb = (a + b + 2.0 * h - 1.0).min(0.0);
            if pb <= -1.0 {
                return Err(Error::Config(format!(
                    "second moment diverges: endpoint exponent {} requires alpha + H > 1",
                    a + b + 2.0 * h - 1.0
                )));
            }
            let outer = integrate_graded(f, 0.0, t, 2.0 * h - 1.0, pb, tol);
            failed.or(outer)
        }
    }
}

/// First error raised inside a quadrature closure, which can only hand
/// back numbers.
#[derive(Default)]
struct FirstError(std::cell::RefCell<Option<Error>>);

impl FirstError {
    fn keep(&self, r: Result<f64>) -> f64 {
        r.unwrap_or_else(|e| {
            self.0.borrow_mut().get_or_insert(e);
            f64::NAN
        })
    }

    /// The kept error in preference to the outer result.
    fn or(&self, outer: Result<f64>) -> Result<f64> {
        match self.0.borrow_mut().take() {
            Some(e) => Err(e),
            None => outer,
        }
    }
}

/// Log-log slope of t ↦ E|∫_0^t φ(t-τ) dB^H(τ)|² with
/// φ(r) = r^{α-1} E_{α,α}(-λ r^α).
pub fn scaling_exponent_check(p: &KernelParams, alpha: f64, lambda: f64, t_list: &[f64]) -> Result<f64> {
    if !(alpha + p.hurst > 1.0) {
        return Err(Error::Config(format!(
            "alpha + H = {} must exceed 1 for the stochastic convolution to be square integrable",
            alpha + p.hurst
        )));
    }
    if t_list.len() < 2 {
        return Err(Error::domain("need at least two times to fit a slope"));
    }
    let moments: Vec<f64> = t_list
        .par_iter()
        .map(|&t| {
            let q = KernelParams { t_end: t, ..*p };
            let phi = WeightedFunction::ml_kernel(t, alpha, lambda)?;
            second_moment_pair(&q, &phi, &phi)
        })
        .collect::<Result<_>>()?;
    for (t, m) in t_list.iter().zip(&moments) {
        if !(*m > 0.0 && m.is_finite()) {
            return Err(Error::Positivity(format!("second moment {m} at t = {t}")));
        }
    }
    let lx: Vec<f64> = t_list.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = moments.iter().map(|m| m.ln()).collect();
    Ok(stats::linear_fit(&lx, &ly).0)
}
