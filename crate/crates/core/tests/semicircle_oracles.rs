use approx::assert_abs_diff_eq;
use num_complex::Complex64 as C64;
use quelab::quadrature::{adaptive, GaussLegendre};
use quelab::semicircle::*;
use std::f64::consts::PI;

/// `int_{-2}^{x} rho_sc` via `t = 2 sin(theta)`, which removes the square-root endpoints.
fn cdf_by_quadrature(x: f64) -> f64 {
    let top = (x / 2.0).clamp(-1.0, 1.0).asin();
    adaptive(&GaussLegendre::new(20), -PI / 2.0, top, 1e-15, 1e-15, 4, 10_000, |th: f64| {
        2.0 * th.cos() * th.cos() / PI
    })
    .unwrap()
    .value
}

fn stieltjes_by_quadrature(zs: &[C64]) -> C64 {
    adaptive(&GaussLegendre::new(20), -PI / 2.0, PI / 2.0, 1e-14, 1e-14, 16, 100_000, |th: f64| {
        let x = 2.0 * th.sin();
        let w = C64::new(2.0 * th.cos() * th.cos() / PI, 0.0);
        zs.iter().fold(w, |acc, z| acc / (x - z))
    })
    .unwrap()
    .value
}

#[test]
fn density_values() {
    assert_abs_diff_eq!(rho_sc(0.0), 1.0 / PI, epsilon = 1e-15);
    assert_eq!(rho_sc(2.0), 0.0);
    assert_eq!(rho_sc(-2.0), 0.0);
    assert_eq!(rho_sc(2.5), 0.0);
    let mass = adaptive(&GaussLegendre::new(20), -2.0, 2.0, 1e-13, 1e-13, 8, 100_000, rho_sc).unwrap().value;
    assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-10);
}

#[test]
fn stieltjes_transform() {
    let z = C64::new(0.0, 1.0);
    let m = m_sc(z).unwrap();
    assert!((m + z + 1.0 / m).norm() < 1e-12);
    assert_abs_diff_eq!(m.im, (5f64.sqrt() - 1.0) / 2.0, epsilon = 1e-14);

    for z in [C64::new(0.7, 0.2), C64::new(-2.4, 0.01), C64::new(1.99, -0.3)] {
        let a = m_sc(z.conj()).unwrap();
        let b = m_sc(z).unwrap().conj();
        assert!((a - b).norm() < 1e-14);
        assert!(m_sc(z).unwrap().im * z.im > 0.0);
    }

    // reference from an independent high-precision quadrature
    let reference = C64::new(-0.530217545416679405936, 0.282161211132801069203);
    let z = C64::new(2.0, 0.5);
    assert!((m_sc(z).unwrap() - reference).norm() < 1e-12);
    assert!((stieltjes_by_quadrature(&[z]) - reference).norm() < 1e-8);
}

#[test]
fn cdf_values() {
    assert_abs_diff_eq!(semicircle_cdf(0.0), 0.5, epsilon = 1e-15);
    assert_eq!(semicircle_cdf(2.0), 1.0);
    assert_eq!(semicircle_cdf(-3.0), 0.0);
    let frozen = 0.804498890522114679044;
    assert_abs_diff_eq!(semicircle_cdf(1.0), frozen, epsilon = 1e-10);
    assert_abs_diff_eq!(cdf_by_quadrature(1.0), frozen, epsilon = 1e-10);
}

#[test]
fn classical_locations() {
    assert_eq!(gamma_quantile(7, 7).unwrap(), 2.0);
    assert_abs_diff_eq!(gamma_quantile(50, 100).unwrap(), 0.0, epsilon = 1e-12);

    // bisection on the quadrature CDF, independent of the closed form
    let (mut lo, mut hi) = (-2.0f64, 0.0f64);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if cdf_by_quadrature(mid) < 1e-3 {
            lo = mid
        } else {
            hi = mid
        }
    }
    let g = gamma_quantile(1, 1000).unwrap();
    assert_abs_diff_eq!(g, 0.5 * (lo + hi), epsilon = 1e-10);
    assert_abs_diff_eq!(g, -1.971852485305271642, epsilon = 1e-10);

    let table = QuantileTable::new(40).unwrap();
    assert!(table.as_slice().windows(2).all(|w| w[0] < w[1]));
    assert!(gamma_quantile(0, 10).is_err());
    assert!(gamma_quantile(11, 10).is_err());
}

#[test]
fn gap_scales() {
    assert_abs_diff_eq!(gap_scale(1, 1000).unwrap(), 0.01, epsilon = 1e-15);
    assert_abs_diff_eq!(gap_scale(1000, 1000).unwrap(), 0.01, epsilon = 1e-15);
    let d: Vec<f64> = (1..=500).map(|k| gap_scale(k, 1000).unwrap()).collect();
    assert!(d.windows(2).all(|w| w[1] < w[0]));
}

#[test]
fn control_parameter() {
    let z = C64::new(0.0, 1.0);
    let expected = (m_sc(z).unwrap().im / 100.0).sqrt() + 0.01;
    assert_abs_diff_eq!(psi(z, 100).unwrap(), expected, epsilon = 1e-15);

    let mut prev = f64::INFINITY;
    for j in 0..40 {
        let p = psi(C64::new(0.5, 1.0 + 0.5 * j as f64), 500).unwrap();
        assert!(p < prev);
        prev = p;
    }

    // lower bound of order tau^{1/4} N^{-1/2} across the domain
    let (n, tau) = (1000usize, 0.2);
    let mut worst = f64::INFINITY;
    for e in [-10.0, -3.0, -2.0, -1.0, 0.0, 1.9, 2.0, 5.0, 40.0] {
        for eta in [(n as f64).powf(-1.0 + tau / 10.0), 1e-2, 0.3, 5.0, 10.0 / tau] {
            let p = SpectralPoint::new(e, eta, tau);
            assert!(p.in_domain(n));
            worst = worst.min(psi(p.z, n).unwrap() / (tau.powf(0.25) * (n as f64).powf(-0.5)));
        }
    }
    assert!(worst > 0.01, "fitted constant {worst}");
}

#[test]
fn divided_differences() {
    let z1 = C64::new(0.4, 0.2);
    let z2 = C64::new(-1.3, -0.7);
    assert!((m_divided(&[z1]).unwrap() - m_sc(z1).unwrap()).norm() < 1e-12);
    let pf = (m_sc(z1).unwrap() - m_sc(z2).unwrap()) / (z1 - z2);
    assert!((m_divided(&[z1, z2]).unwrap() - pf).norm() < 1e-8);
    assert!((stieltjes_by_quadrature(&[z1, z2]) - pf).norm() < 1e-8);

    let zs = [C64::new(0.3, 0.7), C64::new(-1.1, -0.4), C64::new(0.05, -1.3)];
    let frozen = C64::new(0.476494489937667093008, -0.205948211259443237128);
    let perm = [zs[2], zs[0], zs[1]];
    assert!((m_divided(&zs).unwrap() - frozen).norm() < 1e-8);
    assert!((m_divided(&perm).unwrap() - m_divided(&zs).unwrap()).norm() < 1e-12);
    assert!(m_divided(&[]).is_err());
}
