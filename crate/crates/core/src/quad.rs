//! Adaptive Gauss-Kronrod quadrature and graded product rules for integrands
//! with algebraic endpoint singularities.
//!
//! The workhorse is a globally adaptive 10/21-point Gauss-Kronrod scheme in
//! the spirit of QUADPACK's QAG. Singular endpoints are removed by a power
//! substitution before the adaptive rule ever sees them: near an endpoint
//! where the integrand behaves like `d^p` with `-1 < p < 0`, writing
//! `d = L w^(1/(1+p))` turns the integrand into a bounded function of `w`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Absolute and relative error targets. The adaptive loop stops once the
/// summed error estimate is below `max(abs, rel * |value|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Tolerance {
            abs,
            rel,
            max_intervals: 4000,
        }
    }

    pub fn with_max_intervals(mut self, n: usize) -> Self {
        self.max_intervals = n;
        self
    }

    pub fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::new(1e-12, 1e-10)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    /// Integral of |f|, which sets the round-off floor of `error`.
    pub magnitude: f64,
    pub evals: usize,
}

impl Estimate {
    /// Error level below which further refinement only measures round-off.
    pub fn roundoff(&self) -> f64 {
        ROUNDOFF * self.magnitude
    }
}

const ROUNDOFF: f64 = 100.0 * f64::EPSILON;

impl std::ops::Add for Estimate {
    type Output = Estimate;
    fn add(self, o: Estimate) -> Estimate {
        Estimate {
            value: self.value + o.value,
            error: self.error + o.error,
            magnitude: self.magnitude + o.magnitude,
            evals: self.evals + o.evals,
        }
    }
}

fn rescale_error(err: f64, res_abs: f64, res_asc: f64) -> f64 {
    let mut e = err.abs();
    if res_asc != 0.0 && e != 0.0 {
        let scale = (200.0 * e / res_asc).powf(1.5);
        e = if scale < 1.0 { res_asc * scale } else { res_asc };
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        e = e.max(50.0 * f64::EPSILON * res_abs);
    }
    e
}

/// One 21-point Kronrod panel on `[a, b]`: value, error and ∫|f|.
pub fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[10];
    let mut rg = 0.0;
    let mut rabs = rk.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        fv1[j] = f1;
        fv2[j] = f2;
        rk += WGK[j] * (f1 + f2);
        rabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            rg += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * rk;
    let mut rasc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        rasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let hl = h.abs();
    let err = rescale_error((rk - rg) * h, rabs * hl, rasc * hl);
    (rk * h, err, rabs * hl)
}

#[derive(Debug)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    magnitude: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Globally adaptive Gauss-Kronrod integration of a regular integrand.
///
/// On failure to reach the tolerance the best estimate is still available
/// through [`integrate_estimate`]; this wrapper turns it into an error.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: Tolerance) -> Result<f64> {
    let est = integrate_estimate(&f, a, b, tol);
    check(est, tol, "adaptive quadrature").map(|e| e.value)
}

/// Accepts `est` if its error is within tolerance or at the round-off floor.
pub(crate) fn check(est: Estimate, tol: Tolerance, what: &str) -> Result<Estimate> {
    let target = tol.target(est.value).max(est.roundoff());
    if !est.value.is_finite() {
        return Err(Error::NonConvergence {
            what: format!("{what} (non-finite value)"),
            estimate: f64::INFINITY,
            tolerance: target,
        });
    }
    if est.error > target {
        return Err(Error::NonConvergence {
            what: what.to_string(),
            estimate: est.error,
            tolerance: target,
        });
    }
    Ok(est)
}

pub fn integrate_estimate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: Tolerance) -> Estimate {
    if a == b {
        return Estimate {
            value: 0.0,
            error: 0.0,
            magnitude: 0.0,
            evals: 0,
        };
    }
    let (v, e, m) = gk21(f, a, b);
    let mut evals = 21;
    let mut heap = BinaryHeap::new();
    heap.push(Panel {
        a,
        b,
        value: v,
        error: e,
        magnitude: m,
    });
    let mut total = v;
    let mut total_err = e;
    let mut total_mag = m;
    while total_err > tol.target(total).max(ROUNDOFF * total_mag) && heap.len() < tol.max_intervals {
        let p = heap.pop().expect("heap is never empty");
        let m = 0.5 * (p.a + p.b);
        if m <= p.a.min(p.b) || m >= p.a.max(p.b) {
            // Panel cannot be split further in floating point.
            heap.push(p);
            break;
        }
        let (v1, e1, m1) = gk21(f, p.a, m);
        let (v2, e2, m2) = gk21(f, m, p.b);
        evals += 42;
        total += v1 + v2 - p.value;
        total_err += e1 + e2 - p.error;
        total_mag += m1 + m2 - p.magnitude;
        heap.push(Panel {
            a: p.a,
            b: m,
            value: v1,
            error: e1,
            magnitude: m1,
        });
        heap.push(Panel {
            a: m,
            b: p.b,
            value: v2,
            error: e2,
            magnitude: m2,
        });
    }
    // Re-sum to shed drift from the running updates.
    let mut value = 0.0;
    let mut error = 0.0;
    let mut magnitude = 0.0;
    for p in heap.iter() {
        value += p.value;
        error += p.error;
        magnitude += p.magnitude;
    }
    Estimate {
        value,
        error,
        magnitude,
        evals,
    }
}

/// A point inside `[a, b]` carrying its distances to both endpoints, each
/// computed without cancellation so that integrands singular at an endpoint
/// can be evaluated arbitrarily close to it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub x: f64,
    pub from_a: f64,
    pub from_b: f64,
}

/// Integrate `f` over `[a, b]` when `f ~ (x-a)^pa` near `a` and
/// `f ~ (b-x)^pb` near `b` (`pa, pb > -1`). Each half of the interval is
/// mapped by a power substitution that cancels the singular factor.
pub fn integrate_graded<F: Fn(Node) -> f64>(
    f: F,
    a: f64,
    b: f64,
    pa: f64,
    pb: f64,
    tol: Tolerance,
) -> Result<f64> {
    graded_estimate(&f, a, b, pa, pb, tol).and_then(|e| check(e, tol, "graded quadrature").map(|e| e.value))
}

pub fn graded_estimate<F: Fn(Node) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    pa: f64,
    pb: f64,
    tol: Tolerance,
) -> Result<Estimate> {
    if !(pa > -1.0 && pb > -1.0) {
        return Err(Error::domain(format!(
            "endpoint exponents must exceed -1 (got {pa}, {pb})"
        )));
    }
    if !(b > a) {
        return Ok(Estimate {
            value: 0.0,
            error: 0.0,
            magnitude: 0.0,
            evals: 0,
        });
    }
    let half = 0.5 * (b - a);
    let qa = if pa < 0.0 { 1.0 / (1.0 + pa) } else { 1.0 };
    let qb = if pb < 0.0 { 1.0 / (1.0 + pb) } else { 1.0 };
    // Split the tolerance between the halves.
    let sub = Tolerance {
        abs: 0.5 * tol.abs,
        ..tol
    };
    let left = |w: f64| {
        if w <= 0.0 {
            return 0.0;
        }
        let d = half * w.powf(qa);
        let jac = half * qa * w.powf(qa - 1.0);
        let v = f(Node {
            x: a + d,
            from_a: d,
            from_b: (b - a) - d,
        });
        v * jac
    };
    let right = |w: f64| {
        if w <= 0.0 {
            return 0.0;
        }
        let d = half * w.powf(qb);
        let jac = half * qb * w.powf(qb - 1.0);
        let v = f(Node {
            x: b - d,
            from_a: (b - a) - d,
            from_b: d,
        });
        v * jac
    };
    let l = integrate_estimate(&left, 0.0, 1.0, sub);
    let r = integrate_estimate(&right, 0.0, 1.0, sub);
    let sum = l + r;
    let target = tol.target(sum.value);
    if sum.error <= target.max(sum.roundoff()) {
        return Ok(sum);
    }
    // The halves met relative targets of their own, which is not enough
    // when they partly cancel; redo them against the combined value.
    let sub = Tolerance {
        abs: 0.5 * target,
        rel: 0.0,
        ..tol
    };
    let again = integrate_estimate(&left, 0.0, 1.0, sub) + integrate_estimate(&right, 0.0, 1.0, sub);
    Ok(Estimate {
        evals: again.evals + sum.evals,
        ..again
    })
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` by Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let mut p0 = 1.0;
            let mut p1 = z;
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gk_integrates_polynomials_exactly() {
        let v = integrate(|x| x.powi(7) - 3.0 * x * x, -1.0, 2.0, Tolerance::default()).unwrap();
        let exact = (2f64.powi(8) - 1.0) / 8.0 - (8.0 + 1.0);
        assert!((v - exact).abs() < 1e-13);
    }

    #[test]
    fn graded_handles_both_endpoint_singularities() {
        // Beta(0.3, 0.6) = Γ(0.3)Γ(0.6)/Γ(0.9)
        let v = integrate_graded(
            |n| n.from_a.powf(-0.7) * n.from_b.powf(-0.4),
            0.0,
            1.0,
            -0.7,
            -0.4,
            Tolerance::new(1e-14, 1e-13),
        )
        .unwrap();
        let exact = crate::mlf::gamma(0.3) * crate::mlf::gamma(0.6) / crate::mlf::gamma(0.9);
        assert!((v / exact - 1.0).abs() < 1e-12, "{v} vs {exact}");
    }

    #[test]
    fn graded_distance_is_exact_near_far_endpoint() {
        // The integrand only sees from_b, so a shifted interval must not lose
        // digits to cancellation in b - x.
        let a = 1.0e6;
        let v = integrate_graded(
            |n| n.from_b.powf(-0.9),
            a,
            a + 1e-3,
            0.0,
            -0.9,
            Tolerance::new(0.0, 1e-12),
        )
        .unwrap();
        let len = (a + 1e-3) - a;
        let exact = len.powf(0.1) / 0.1;
        assert!((v / exact - 1.0).abs() < 1e-11);
    }

    #[test]
    fn gauss_legendre_weights_sum_to_two() {
        for n in [1, 2, 5, 16, 33] {
            let (x, w) = gauss_legendre(n);
            let s: f64 = w.iter().sum();
            assert!((s - 2.0).abs() < 1e-13, "n={n}");
            let m2: f64 = x.iter().zip(&w).map(|(x, w)| x * x * w).sum();
            if n >= 2 {
                assert!((m2 - 2.0 / 3.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let s: CompensatedSum = [1e16, 1.0, -1e16, 1.0].into_iter().collect();
        assert_eq!(s.value(), 2.0);
    }
}
