use num_complex::Complex64 as C64;
use proptest::prelude::*;
use quelab::eigensolve::eig_sym;
use quelab::harness::stats::{percentile, MomentAccumulator};
use quelab::linalg::Matrix;
use quelab::ncfree::{enumerate_nc, kreweras};
use quelab::observables::{overlaps, traceless_projector, Basis, IndexSet, SmoothBump};
use quelab::semicircle::{gamma_quantile, m_divided, m_sc, semicircle_cdf};

fn off_axis() -> impl Strategy<Value = C64> {
    (-4.0..4.0f64, 1e-3..5.0f64, any::<bool>()).prop_map(|(re, im, up)| C64::new(re, if up { im } else { -im }))
}

fn symmetric(max_n: usize) -> impl Strategy<Value = Matrix<f64>> {
    (2..=max_n).prop_flat_map(|n| {
        prop::collection::vec(-3.0..3.0f64, n * n).prop_map(move |v| {
            Matrix::from_fn(n, n, |i, j| if i <= j { v[i * n + j] } else { v[j * n + i] })
        })
    })
}

fn subset(n: usize) -> impl Strategy<Value = IndexSet> {
    prop::collection::vec(any::<bool>(), n)
        .prop_map(move |mask| IndexSet::new(n, (0..n).filter(|&i| mask[i]).collect()).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stieltjes_solves_self_consistent_equation(z in off_axis()) {
        let m = m_sc(z).unwrap();
        prop_assert!((m * m + z * m + 1.0).norm() < 1e-10 * (1.0 + z.norm()));
        prop_assert!(m.im * z.im > 0.0);
        prop_assert!((m_sc(z.conj()).unwrap() - m.conj()).norm() < 1e-13);
        prop_assert!(m.norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn quantiles_invert_the_distribution_function(n in 2usize..400, frac in 0.0..1.0f64) {
        let i = 1 + ((n - 1) as f64 * frac) as usize;
        let g = gamma_quantile(i, n).unwrap();
        prop_assert!((semicircle_cdf(g) - i as f64 / n as f64).abs() < 1e-10);
        if i < n {
            prop_assert!(gamma_quantile(i + 1, n).unwrap() > g);
        }
    }

    #[test]
    fn divided_differences_are_symmetric(zs in prop::collection::vec(off_axis(), 1..5), rot in 0usize..4) {
        let mut perm = zs.clone();
        let len = perm.len();
        perm.rotate_left(rot % len);
        perm.reverse();
        let a = m_divided(&zs).unwrap();
        let b = m_divided(&perm).unwrap();
        prop_assert!((a - b).norm() < 1e-8 * (1.0 + a.norm()));
    }

    #[test]
    fn eigendecomposition_reconstructs(h in symmetric(12)) {
        let s = eig_sym(&h).unwrap();
        let n = h.rows();
        let lam = s.lambdas();
        prop_assert!(lam.windows(2).all(|w| w[0] <= w[1]));
        let trace: f64 = (0..n).map(|i| h[(i, i)]).sum();
        prop_assert!((lam.iter().sum::<f64>() - trace).abs() < 1e-10);
        for k in 0..n {
            let u = s.vector(k);
            let hu = h.matvec(u);
            let res = hu.iter().zip(u).map(|(a, b)| (a - lam[k] * b).powi(2)).sum::<f64>().sqrt();
            prop_assert!(res < 1e-10, "residual {res}");
        }
    }

    #[test]
    fn complement_block_counts(k in 1usize..=8, pick in any::<prop::sample::Index>()) {
        let all = enumerate_nc(k).unwrap();
        let pi = &all[pick.index(all.len())];
        let kp = kreweras(pi).unwrap();
        prop_assert_eq!(pi.len() + kp.len(), k + 1);
        let mut a: Vec<usize> = pi.blocks().iter().map(Vec::len).collect();
        let mut b: Vec<usize> = kreweras(&kp).unwrap().blocks().iter().map(Vec::len).collect();
        a.sort_unstable();
        b.sort_unstable();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn centred_overlaps_cancel(h in symmetric(10), seed in any::<u64>(), mask in prop::collection::vec(any::<bool>(), 10)) {
        let n = h.rows();
        let set = IndexSet::new(n, (0..n).filter(|&i| mask[i]).collect()).unwrap();
        let s = eig_sym(&h).unwrap();
        for basis in [Basis::Standard, Basis::haar(n, seed).unwrap()] {
            let o = overlaps(&s, &set, &basis, 1).unwrap();
            prop_assert!(o.p.iter().sum::<f64>().abs() < 1e-10);
            let a = traceless_projector(&set, &basis).unwrap();
            prop_assert!(a.trace().abs() < 1e-10);
        }
    }

    #[test]
    fn projector_is_traceless_for_any_subset(set in subset(16)) {
        let a = traceless_projector(&set, &Basis::Standard).unwrap();
        prop_assert!(a.trace().abs() < 1e-12);
    }

    #[test]
    fn bump_stays_in_unit_interval(e1 in -3.0..3.0f64, width in 1e-3..2.0f64, eta in 1e-4..1.0f64, x in -6.0..6.0f64) {
        let b = SmoothBump::new(e1, e1 + width, eta).unwrap();
        let v = b.eval(x);
        prop_assert!((0.0..=1.0).contains(&v));
        if x >= e1 && x <= e1 + width {
            prop_assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn accumulator_is_split_invariant(xs in prop::collection::vec(-10.0..10.0f64, 2..200), cut in any::<prop::sample::Index>()) {
        let n = xs.len() as u64;
        let c = cut.index(xs.len());
        let mut whole = MomentAccumulator::new(n);
        let (mut a, mut b) = (MomentAccumulator::new(n), MomentAccumulator::new(n));
        for (i, &x) in xs.iter().enumerate() {
            whole.push(i as u64, x);
            if i < c { a.push(i as u64, x) } else { b.push(i as u64, x) }
        }
        b.merge(&a);
        for p in 2..=4 {
            let (u, v) = (whole.central(p), b.central(p));
            prop_assert!((u - v).abs() < 1e-8 * (1.0 + u.abs()), "order {p}: {u} vs {v}");
        }
        prop_assert!((whole.mean() - b.mean()).abs() < 1e-12 * 10.0);
    }

    #[test]
    fn percentiles_are_monotone(xs in prop::collection::vec(-1e3..1e3f64, 1..100), q1 in 0.0..100.0f64, q2 in 0.0..100.0f64) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        prop_assert!(percentile(&xs, lo) <= percentile(&xs, hi));
        let min = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert_eq!(percentile(&xs, 0.0), min);
    }
}
