use num_complex::Complex64 as C64;
use quelab::eigensolve::*;
use quelab::ensembles::*;
use quelab::linalg::{Lu, Matrix};
use quelab::resolvent::*;
use quelab::harness::runs::default_z_grid;
use quelab::semicircle::{m_sc, psi, QuantileTable, SpectralPoint};

fn goe(n: usize, seed: u64, trial: u64) -> Matrix<f64> {
    match sample_wigner(&EnsembleSpec::goe(n), seed, trial).unwrap().matrix {
        WignerMatrix::Real(h) => h,
        WignerMatrix::Complex(_) => unreachable!(),
    }
}

#[test]
fn samples_are_self_adjoint_and_reproducible() {
    for beta in [1, 2] {
        for law in [EntryLaw::Gaussian, EntryLaw::Rademacher, EntryLaw::Uniform] {
            let spec = EnsembleSpec { n: 30, beta, law, diag_variance_factor: None };
            let a = sample_wigner(&spec, 4, 9).unwrap();
            let b = sample_wigner(&spec, 4, 9).unwrap();
            assert_eq!(a.matrix, b.matrix);
            assert_eq!(a.matrix.to_c64().self_adjoint_defect(), 0.0);
            assert_ne!(a.matrix, sample_wigner(&spec, 4, 10).unwrap().matrix);
        }
    }
}

#[test]
fn off_diagonal_variance() {
    let n = 2000;
    let (mut sum, mut count) = (0.0, 0usize);
    for trial in 0..50 {
        let h = goe(n, 21, trial);
        for i in 0..n {
            for j in i + 1..n {
                sum += h[(i, j)] * h[(i, j)];
                count += 1;
            }
        }
    }
    let ratio = sum / count as f64 * n as f64;
    // standard error of the ratio is sqrt(2 / count), about 3e-4
    assert!((0.9..=1.1).contains(&ratio), "{ratio}");
    assert!((ratio - 1.0).abs() < 5e-3, "{ratio}");
}

#[test]
fn entry_cumulant_values() {
    let g = entry_cumulants(&EntryLaw::Gaussian, 6).unwrap();
    assert_eq!(&g[..2], &[0.0, 1.0]);
    assert!(g[2..].iter().all(|k| k.abs() < 1e-12));
    let r = entry_cumulants(&EntryLaw::Rademacher, 4).unwrap();
    assert_eq!(r, vec![0.0, 1.0, 0.0, -2.0]);
    // atoms +-2 with mass 0.1 each and +-1/2 with 0.4 each: E[X^4] = 3.25
    let four = EntryLaw::Custom { values: vec![-2.0, -0.5, 0.5, 2.0], probs: vec![0.1, 0.4, 0.4, 0.1] };
    let k = entry_cumulants(&four, 4).unwrap();
    assert!(k[0].abs() < 1e-15 && (k[1] - 1.0).abs() < 1e-14 && k[2].abs() < 1e-15);
    assert!((k[3] - 0.25).abs() < 1e-14);
    let r2 = 0.5f64.sqrt();
    let skew = EntryLaw::Custom { values: vec![-r2, 2.0 * r2], probs: vec![2.0 / 3.0, 1.0 / 3.0] };
    assert!(entry_cumulants(&skew, 3).is_err());
}

#[test]
fn eigensolver_small_cases() {
    let h = Matrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    let s = eig_sym(&h).unwrap();
    let r = 0.5f64.sqrt();
    assert!((s.lambda(0) + 1.0).abs() < 1e-14 && (s.lambda(1) - 1.0).abs() < 1e-14);
    assert!((s.vector(0)[0] - r).abs() < 1e-14 && (s.vector(0)[1] + r).abs() < 1e-14);
    assert!((s.vector(1)[0] - r).abs() < 1e-14 && (s.vector(1)[1] - r).abs() < 1e-14);

    let s = eig_sym(&Matrix::diag(&[3.0, 1.0, 2.0])).unwrap();
    assert_eq!(s.lambdas(), &[1.0, 2.0, 3.0]);
    assert_eq!(s.vector(0), &[0.0, 1.0, 0.0]);
    assert_eq!(s.vector(1), &[0.0, 0.0, 1.0]);
    assert_eq!(s.vector(2), &[1.0, 0.0, 0.0]);
}

#[test]
fn eigensolver_residuals_goe() {
    let h = goe(200, 2, 0);
    let s = eig_sym(&h).unwrap();
    assert!(s.orthogonality_defect() < 1e-10);
    let mut worst = 0.0f64;
    for k in 0..200 {
        let hv = h.matvec(s.vector(k));
        for (a, b) in hv.iter().zip(s.vector(k)) {
            worst = worst.max((a - s.lambda(k) * b).abs());
        }
    }
    assert!(worst < 1e-9, "{worst}");
    assert!(s.reconstruct().max_abs_diff(&h) < 1e-10);

    // selected vectors agree with the full decomposition up to sign
    let sel = eig_selected(&h, &[0, 100, 199]).unwrap();
    for k in [0, 100, 199] {
        let v = sel.vector(k).unwrap();
        let d: f64 = v.iter().zip(s.vector(k)).map(|(a, b)| a * b).sum();
        assert!((d.abs() - 1.0).abs() < 1e-9);
        assert!((sel.lambdas[k] - s.lambda(k)).abs() < 1e-12);
    }
}

#[test]
fn complex_eigensolver() {
    let s = sample_wigner(&EnsembleSpec::gue(80), 1, 1).unwrap();
    let WignerMatrix::Complex(h) = &s.matrix else { unreachable!() };
    let sp = eig_sym(h).unwrap();
    assert!(sp.orthogonality_defect() < 1e-10);
    assert!(sp.reconstruct().max_abs_diff(h) < 1e-10);
}

#[test]
fn edge_positions() {
    assert_eq!(resolve_edge_index(EdgeSpec::Bottom(1), 500).unwrap(), 1);
    assert!(is_edge_regime(1, 500, 0.2));
    assert_eq!(resolve_edge_index(EdgeSpec::Top(1), 500).unwrap(), 500);
    assert_eq!(resolve_edge_index(EdgeSpec::Bottom(300), 500).unwrap(), 300);
    assert!(!is_edge_regime(300, 500, 0.2));
    assert!(resolve_edge_index(EdgeSpec::Top(501), 500).is_err());
}

#[test]
fn resolvent_basics() {
    let zero = Matrix::<f64>::zeros(2, 2);
    let z = C64::new(0.0, 1.0);
    let g = resolvent_direct(&zero, z).unwrap();
    assert!(g.g.max_abs_diff(&Matrix::<C64>::identity(2).scale(C64::new(0.0, 1.0))) < 1e-15);
    assert!((g.m_n + 1.0 / z).norm() < 1e-15);

    let h = goe(100, 5, 0);
    let s = eig_sym(&h).unwrap();
    for z in [C64::new(0.1, 0.02), C64::new(-2.3, 0.5), C64::new(1.0, -0.1)] {
        let a = resolvent_from_spectrum(&s, z).unwrap();
        let b = resolvent_direct(&h, z).unwrap();
        assert!(a.g.max_abs_diff(&b.g) < 1e-8);
        let bound = 1.0 / z.im.abs();
        assert!(s.lambdas().iter().all(|&l| (1.0 / (l - z)).norm() <= bound + 1e-12));
        assert!(a.g.max_abs() <= bound + 1e-12);
        let conj = resolvent_from_spectrum(&s, z.conj()).unwrap();
        assert!((conj.m_n - a.m_n.conj()).norm() < 1e-13);
    }
    assert!(resolvent_direct(&h, C64::new(0.3, 0.0)).is_err());
}

#[test]
fn empirical_stieltjes_near_semicircle() {
    let n = 2000;
    let s = sample_wigner(&EnsembleSpec::goe(n), 8, 0).unwrap();
    let l = eigvals_wigner(&s.matrix).unwrap();
    let z = C64::new(0.1, 0.9);
    let mn = stieltjes_trace(&l, z).unwrap();
    assert!((mn - m_sc(z).unwrap()).norm() <= 5.0 * psi(z, n).unwrap());
}

#[test]
fn isotropic_residuals() {
    let n = 1000;
    let grid: Vec<C64> = default_z_grid().iter().map(|&[e, eta]| C64::new(e, eta)).collect();
    assert!(grid.iter().all(|z| SpectralPoint { z: *z, tau: 0.2 }.in_domain(n)));
    let bound = (n as f64).powf(0.1);
    let trials = 20;
    let mut e1 = vec![0.0; n];
    e1[0] = 1.0;
    let mut e2 = vec![0.0; n];
    e2[1] = 1.0;
    let (mut diagonal, mut orthogonal) = (0, 0);
    for trial in 0..trials {
        let s = eig_sym(&goe(n, 33, trial)).unwrap();
        diagonal += grid.iter().all(|&z| iso_residual(&s, &e1, &e1, z).unwrap() <= bound) as usize;
        orthogonal += grid.iter().all(|&z| iso_residual(&s, &e1, &e2, z).unwrap() <= bound) as usize;
    }
    let need = 0.95 * trials as f64;
    assert!(diagonal as f64 >= need && orthogonal as f64 >= need, "x = y: {diagonal}/{trials}, x _|_ y: {orthogonal}/{trials}");
}

#[test]
fn isotropic_on_classical_locations() {
    // with H = diag(gamma) the only error is the quantile discretisation
    let z = C64::new(0.3, 0.2);
    let mut prev = f64::INFINITY;
    for n in [100, 400, 1600] {
        let h = Matrix::diag(QuantileTable::new(n).unwrap().as_slice());
        let s = eig_sym(&h).unwrap();
        let mn = stieltjes_trace(s.lambdas(), z).unwrap();
        let err = (mn - m_sc(z).unwrap()).norm();
        assert!(err < prev);
        prev = err;
    }
    assert!(prev < 1e-3);
}

#[test]
fn minors() {
    let h = goe(40, 6, 0);
    let z = C64::new(0.2, 0.3);
    let a = 7;
    let r = minor_resolvent(&h, a, z).unwrap();
    assert!((r[(a, a)] + 1.0 / z).norm() < 1e-15);
    for j in 0..40 {
        if j != a {
            assert_eq!(r[(a, j)], C64::new(0.0, 0.0));
            assert_eq!(r[(j, a)], C64::new(0.0, 0.0));
        }
    }
    let keep: Vec<usize> = (0..40).filter(|&i| i != a).collect();
    let mut sub = Matrix::<C64>::from_fn(39, 39, |i, j| C64::new(h[(keep[i], keep[j])], 0.0));
    sub.add_diag(-z);
    let inv = Lu::factor(&sub).unwrap().inverse();
    for (i, &ki) in keep.iter().enumerate() {
        for (j, &kj) in keep.iter().enumerate() {
            assert!((inv[(i, j)] - r[(ki, kj)]).norm() < 1e-9);
        }
    }
}

#[test]
fn schur_identities_hold() {
    let h = goe(100, 12, 0);
    let mut worst = Vec::new();
    for z in [C64::new(0.0, 0.05), C64::new(1.9, 0.01), C64::new(-4.0, 2.0), C64::new(0.5, -0.3)] {
        let c = schur_identity_check(&h, 3, 50, z).unwrap();
        assert!(c.max() < 1e-9, "{z}: {c:?}");
        worst.push(c.max());
    }

    // a decoupled row makes the off-diagonal relations trivial
    let mut d = h.clone();
    for j in 0..100 {
        if j != 3 {
            d[(3, j)] = 0.0;
            d[(j, 3)] = 0.0;
        }
    }
    let z = C64::new(0.2, 0.1);
    let g = resolvent_direct(&d, z).unwrap().g;
    assert!(g[(3, 60)].norm() < 1e-15);
    assert!(schur_identity_check(&d, 3, 60, z).unwrap().max() < 1e-12);
}

#[test]
fn resolvent_expansion() {
    let n = 100;
    let mut h = goe(n, 14, 0);
    let z = C64::new(0.3, 0.4);
    let c = expansion_check(&h, 2, 9, z).unwrap();
    assert!(c.identity_defect < 1e-9);

    h[(2, 9)] = 0.0;
    h[(9, 2)] = 0.0;
    let c = expansion_check(&h, 2, 9, z).unwrap();
    assert_eq!(c.remainder, 0.0);
    assert!(c.identity_defect < 1e-14);

    // remainder scales like h_ab^4
    let sigma = 1.0 / (n as f64).sqrt();
    let mut rem = Vec::new();
    for scale in [1.0, 2.0] {
        h[(2, 9)] = scale * sigma;
        h[(9, 2)] = scale * sigma;
        rem.push(expansion_check(&h, 2, 9, z).unwrap().remainder);
    }
    let exponent = (rem[1] / rem[0]).log2();
    assert!((exponent - 4.0).abs() < 0.3, "{exponent}");
}

#[test]
fn ward_identity() {
    let h = goe(60, 15, 0);
    assert!(ward_defect(&h, C64::new(0.5, 0.1)).unwrap() < 1e-10);
}

#[test]
fn poisson_mass_is_imaginary_part() {
    let h = goe(80, 16, 0);
    let s = eig_sym(&h).unwrap();
    let mut x = vec![0.0; 80];
    x[4] = 0.6;
    x[70] = 0.8;
    let p = Projection::new(&s, &x).unwrap();
    let (e, eta) = (0.4, 0.07);
    let g = resolvent_direct(&h, C64::new(e, eta)).unwrap().g;
    let xc: Vec<C64> = x.iter().map(|&v| C64::new(v, 0.0)).collect();
    let gx = g.matvec(&xc);
    let im: f64 = xc.iter().zip(&gx).map(|(a, b)| (a.conj() * b).im).sum();
    assert!((poisson_mass(s.lambdas(), &p, e, eta) - im / std::f64::consts::PI).abs() < 1e-12);
}
