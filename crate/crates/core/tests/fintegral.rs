use std::f64::consts::PI;

use proptest::prelude::*;
use sfde_core::fintegral::{kernel_kh, kernel_kh_du, second_moment_pair, KernelParams, WeightedFunction};
use sfde_core::quad::{integrate, Tolerance};
use sfde_core::selftest;

/// E|∫_0^1 φ dB^H|² for φ(τ) = (1-τ)^{-0.2} E_{0.8,0.8}(-π²(1-τ)^{0.8}),
/// H = 0.7, from a 30-digit double integral (data/moment_oracle.py).
const MOMENT_ORACLE: f64 = 0.032_906_574_964_098_09;

fn smooth(t: f64, freq: f64, shift: f64) -> WeightedFunction {
    WeightedFunction::new(t, 0.0, move |r| (freq * r + shift).cos() + 0.3 * r).unwrap()
}

#[test]
fn kernel_reproduces_covariance() {
    for h in [0.25, 0.75] {
        let c = selftest::kernel_covariance(h);
        assert!(c.passed, "{c}");
    }
}

#[test]
fn smooth_regime_matches_high_precision_moment() {
    let p = KernelParams::new(0.7, 1.0).unwrap();
    let phi = WeightedFunction::ml_kernel(1.0, 0.8, PI * PI).unwrap();
    let m = second_moment_pair(&p, &phi, &phi).unwrap();
    assert!((m / MOMENT_ORACLE - 1.0).abs() < 1e-8, "{m} vs {MOMENT_ORACLE}");
    // Tight tolerances approach the reference to near machine precision.
    let tight = p.with_tolerances(Tolerance::new(1e-12, 1e-12), Tolerance::new(1e-14, 1e-12));
    let m = second_moment_pair(&tight, &phi, &phi).unwrap();
    assert!((m / MOMENT_ORACLE - 1.0).abs() < 1e-12, "{m} vs {MOMENT_ORACLE}");
}

#[test]
fn isometry_against_monte_carlo() {
    for (a, h) in [(0.8, 0.7), (1.0, 0.3)] {
        let c = selftest::isometry(a, h, 10_000, 512, 99);
        assert!(c.passed, "{c}");
    }
}

#[test]
fn unit_integrand_gives_t_to_the_2h() {
    for h in [0.2, 0.5, 0.9] {
        for t in [0.5, 1.0, 3.0] {
            let p = KernelParams::new(h, t).unwrap();
            let one = WeightedFunction::constant(t, 1.0).unwrap();
            let m = second_moment_pair(&p, &one, &one).unwrap();
            assert!((m / t.powf(2.0 * h) - 1.0).abs() < 1e-6, "H={h} T={t}: {m}");
        }
    }
}

#[test]
fn half_degenerates_to_l2_product() {
    let t = 1.5;
    let p = KernelParams::new(0.5, t).unwrap();
    let (psi, phi) = (smooth(t, 2.0, 0.3), smooth(t, 5.0, -1.0));
    let m = second_moment_pair(&p, &psi, &phi).unwrap();
    let l2 = integrate(|s| psi.eval(s) * phi.eval(s), 0.0, t, Tolerance::new(1e-14, 1e-13)).unwrap();
    assert!((m - l2).abs() < 1e-8, "{m} vs {l2}");
}

#[test]
fn kernel_derivative_matches_differences() {
    for h in [0.3, 0.7] {
        let p = KernelParams::new(h, 1.0).unwrap();
        for &(u, s) in &[(0.5, 0.2), (0.9, 0.1), (0.3, 0.25)] {
            let d = 1e-6;
            let fd = (kernel_kh(&p, u + d, s).unwrap() - kernel_kh(&p, u - d, s).unwrap()) / (2.0 * d);
            let want = kernel_kh_du(&p, u, s).unwrap();
            assert!((fd / want - 1.0).abs() < 1e-4, "H={h} u={u} s={s}: {fd} vs {want}");
            assert_eq!(want < 0.0, h < 0.5);
        }
    }
}

#[test]
fn scaling_exponent() {
    let c = selftest::scaling_law(0.8, 0.4, selftest::scaling_lambda());
    assert!(c.passed, "{c}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn bilinear_and_symmetric(
        h in prop_oneof![0.25f64..0.45, 0.55f64..0.85],
        f1 in 0.5f64..4.0,
        f2 in 0.5f64..4.0,
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
    ) {
        let t = 1.0;
        let p = KernelParams::new(h, t).unwrap();
        let psi = WeightedFunction::ml_kernel(t, 0.9, 4.0).unwrap();
        let (u, v) = (smooth(t, f1, 0.0), smooth(t, f2, 1.0));
        let (uc, vc) = (u.clone(), v.clone());
        let w = WeightedFunction::new(t, 0.0, move |r| a * uc.at_distance(r) + b * vc.at_distance(r)).unwrap();
        let m = |x: &WeightedFunction, y: &WeightedFunction| second_moment_pair(&p, x, y).unwrap();
        let lin = a * m(&psi, &u) + b * m(&psi, &v);
        let direct = m(&psi, &w);
        let scale = a.abs() * m(&u, &u).sqrt() + b.abs() * m(&v, &v).sqrt();
        prop_assert!((direct - lin).abs() <= 1e-7 * (1.0 + scale), "{} vs {}", direct, lin);
        let (uv, vu) = (m(&u, &v), m(&v, &u));
        prop_assert!((uv - vu).abs() <= 1e-8 * (1.0 + uv.abs()), "{} vs {}", uv, vu);
    }
}
