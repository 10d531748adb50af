use std::f64::consts::PI;

use proptest::prelude::*;
use sfde_core::forward::{
    assemble_field, ml_convolution, simulate_ensemble, EigenSystem, EnsembleMoments, SimConfig, SourceSpec,
    SpatialDomain, TimeProfile,
};
use sfde_core::inverse::b_diagonal;
use sfde_core::mlf::{ml_eval, MLQuery};
use sfde_core::{selftest, stats, Error};

fn cfg(alpha: f64, hurst: f64, t_end: f64, modes: usize, paths: usize) -> SimConfig {
    SimConfig {
        alpha,
        hurst,
        t_end,
        steps: 256,
        modes,
        paths,
        seed: 42,
    }
}

fn unit() -> SpatialDomain {
    SpatialDomain::Interval { length: 1.0 }
}

/// ∫_0^t (t-τ)^{α-1} E_{α,α}(-λ(t-τ)^α) h(τ) dτ by Simpson's rule in
/// x = (t-τ)^α, Richardson-extrapolated from n and 2n panels.
fn simpson_reference(alpha: f64, lambda: f64, t: f64, h: impl Fn(f64) -> f64) -> f64 {
    let g = |x: f64| ml_eval(MLQuery::new(alpha, alpha, -lambda * x)).unwrap() * h(t - x.powf(1.0 / alpha)) / alpha;
    let top = t.powf(alpha);
    let simpson = |n: usize| {
        let dx = top / n as f64;
        let mut s = g(0.0) + g(top);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * g(i as f64 * dx);
        }
        s * dx / 3.0
    };
    let (a, b) = (simpson(4000), simpson(8000));
    b + (b - a) / 15.0
}

#[test]
fn convolution_against_closed_form_and_simpson() {
    let (a, lam, t) = (0.7, PI * PI, 1.0);
    let v = ml_convolution(a, lam, t, &TimeProfile::Constant { value: 1.0 }, t).unwrap();
    let closed = t.powf(a) * ml_eval(MLQuery::new(a, a + 1.0, -lam * t.powf(a))).unwrap();
    let via_e1 = (1.0 - ml_eval(MLQuery::new(a, 1.0, -lam * t.powf(a))).unwrap()) / lam;
    let simpson = simpson_reference(a, lam, t, |_| 1.0);
    assert!((v / closed - 1.0).abs() < 1e-12, "{v} vs {closed}");
    assert!((v / via_e1 - 1.0).abs() < 1e-12, "{v} vs {via_e1}");
    assert!((v / simpson - 1.0).abs() < 1e-9, "{v} vs {simpson}");
}

#[test]
fn convolution_with_varying_source() {
    for (a, lam) in [(0.5, 10.0), (0.8, 40.0), (1.0, 3.0)] {
        let h = TimeProfile::Linear { a: 1.0, b: 0.5 };
        let v = ml_convolution(a, lam, 1.0, &h, 1.0).unwrap();
        let r = simpson_reference(a, lam, 1.0, |tau| 1.0 + 0.5 * tau);
        assert!((v / r - 1.0).abs() < 1e-8, "α={a} λ={lam}: {v} vs {r}");
        let h = TimeProfile::Exponential { a: 2.0, rate: -0.7 };
        let v = ml_convolution(a, lam, 0.8, &h, 1.0).unwrap();
        let r = simpson_reference(a, lam, 0.8, |tau| 2.0 * (-0.7 * tau).exp());
        assert!((v / r - 1.0).abs() < 1e-8, "α={a} λ={lam}: {v} vs {r}");
    }
}

#[test]
fn heat_equation_limit() {
    let c = selftest::heat_degeneration(20_000, 8);
    assert!(c.passed, "{c}");
}

#[test]
fn standing_hypothesis_is_enforced() {
    let err = cfg(0.6, 0.3, 1.0, 4, 10).validate().unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(err.to_string().contains("alpha + H"), "{err}");
    assert!(cfg(0.6, 0.5, 1.0, 4, 10).validate().is_ok());
}

#[test]
fn source_lower_bound_is_checked() {
    let mut src = selftest::demo_source();
    src.c_h = 2.0;
    assert!(src.validate(1.0, 8).is_err());
    src.c_h = 1.0;
    assert!(src.validate(1.0, 8).is_ok());
    assert!(src.validate(1.0, 4).is_err());
}

#[test]
fn variance_scales_with_horizon() {
    // Σ_k Var u_k(T) / T^{2α+2H-2} stays bounded as T shrinks.
    for (a, h) in [(0.8, 0.6), (0.9, 0.3), (0.7, 0.8)] {
        let ratios: Vec<f64> = [0.25, 0.5, 1.0]
            .iter()
            .map(|&t| {
                let c = cfg(a, h, t, 6, 2);
                let es = EigenSystem::build(unit(), 6).unwrap();
                let total: f64 = b_diagonal(&c, &es).unwrap().iter().sum();
                total / t.powf(2.0 * a + 2.0 * h - 2.0)
            })
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, u), &r| (l.min(r), u.max(r)));
        assert!(lo > 0.0 && hi / lo < 5.0, "α={a} H={h}: {ratios:?}");
    }
}

#[test]
fn correlation_signs_follow_noise_amplitudes() {
    let c = cfg(0.8, 0.7, 1.0, 4, 4000);
    let src = SourceSpec {
        f: vec![0.0; 4],
        g: vec![1.0, -1.0, 1.0, -1.0],
        h: TimeProfile::Constant { value: 1.0 },
        c_h: 1.0,
    };
    let es = EigenSystem::build(unit(), 4).unwrap();
    let ens = simulate_ensemble(&c, &src, &es).unwrap();
    let m = &ens.moments;
    for k in 0..4 {
        for l in 0..k {
            let (cov, se) = (m.cov(k, l), m.se_covariance[k * 4 + l]);
            if cov.abs() > 4.0 * se {
                assert_eq!(cov > 0.0, src.g[k] * src.g[l] > 0.0, "({k},{l}): {cov} ± {se}");
            }
        }
    }
    // Adjacent modes share enough of the driving noise to be resolved.
    assert!(m.cov(1, 0).abs() > 4.0 * m.se_covariance[4]);
}

#[test]
fn ensemble_is_reproducible_and_thread_independent() {
    let c = cfg(0.9, 0.4, 1.0, 3, 300);
    let src = selftest::demo_source();
    let src = SourceSpec {
        f: src.f[..3].to_vec(),
        g: src.g[..3].to_vec(),
        ..src
    };
    let es = EigenSystem::build(unit(), 3).unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| simulate_ensemble(&c, &src, &es).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.moments, b.moments);
}

#[test]
fn moments_csv_round_trip() {
    let samples = vec![vec![0.1, -0.4, 0.9, 0.3], vec![1.0, 0.2, -0.5, 0.7]];
    let m = EnsembleMoments::from_samples(&samples);
    let lambdas = [PI * PI, 4.0 * PI * PI];
    let (mut a, mut b) = (Vec::new(), Vec::new());
    m.write_csv(&mut a, &lambdas, "seed=1").unwrap();
    m.write_covariance_csv(&mut b, "seed=1").unwrap();
    let (back, lam) = EnsembleMoments::read_csv(
        std::str::from_utf8(&a).unwrap(),
        Some(std::str::from_utf8(&b).unwrap()),
        4,
    )
    .unwrap();
    assert_eq!(lam, lambdas);
    assert_eq!(back.mean, m.mean);
    assert_eq!(back.variance, m.variance);
    assert_eq!(back.covariance, m.covariance);
    assert_eq!(stats::mean(&samples[0]), m.mean[0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn eigenfunctions_are_orthonormal(lx in 0.5f64..3.0, ly in 0.5f64..3.0, rect in any::<bool>()) {
        let d = if rect { SpatialDomain::Rectangle { lx, ly } } else { SpatialDomain::Interval { length: lx } };
        let es = EigenSystem::build(d, 6).unwrap();
        prop_assert!(es.lambdas().windows(2).all(|w| w[0] <= w[1]));
        // Midpoint rule is exact for products of sines on a fine uniform grid.
        let n = 64;
        let (ny, wy) = if rect { (n, ly / n as f64) } else { (1, 1.0) };
        let pts: Vec<[f64; 2]> = (0..n)
            .flat_map(|i| (0..ny).map(move |j| [(i as f64 + 0.5) * lx / n as f64, (j as f64 + 0.5) * wy]))
            .collect();
        let w = lx / n as f64 * wy;
        for k in 0..6 {
            for l in 0..=k {
                let ip: f64 = pts.iter().map(|&p| es.phi(k, p) * es.phi(l, p)).sum::<f64>() * w;
                let want = if k == l { 1.0 } else { 0.0 };
                prop_assert!((ip - want).abs() < 1e-10, "({}, {}): {}", k, l, ip);
            }
        }
    }

    #[test]
    fn field_assembly_is_linear(c1 in prop::collection::vec(-2.0f64..2.0, 5), c2 in prop::collection::vec(-2.0f64..2.0, 5), s in -3.0f64..3.0) {
        let es = EigenSystem::build(unit(), 5).unwrap();
        let pts: Vec<[f64; 2]> = (0..11).map(|i| [i as f64 / 10.0, 0.0]).collect();
        let sum: Vec<f64> = c1.iter().zip(&c2).map(|(a, b)| a + s * b).collect();
        let (f1, f2, fs) = (
            assemble_field(&c1, &pts, &es).unwrap(),
            assemble_field(&c2, &pts, &es).unwrap(),
            assemble_field(&sum, &pts, &es).unwrap(),
        );
        for i in 0..pts.len() {
            prop_assert!((fs[i] - f1[i] - s * f2[i]).abs() < 1e-12);
        }
        prop_assert!(f1[0].abs() < 1e-12 && f1[10].abs() < 1e-12);
    }
}
