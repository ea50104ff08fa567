use approx::assert_abs_diff_eq;
use quelab::eigensolve::eig_sym;
use quelab::ensembles::{trial_rng, EntryLaw};
use quelab::harness::artifacts::*;
use quelab::harness::cumulant::{cumulant_expansion_validate, expectation, sin_derivative};
use quelab::cli::preset;
use quelab::harness::runs::{que_statistic, rigidity_ratio, run_clt, TrialRecord};
use quelab::harness::ExperimentConfig;
use quelab::harness::stats::*;
use quelab::linalg::Matrix;
use quelab::observables::{Basis, IndexSet};
use quelab::semicircle::QuantileTable;
use rand::Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};

fn normals(seed: u64, n: usize, shift: f64) -> Vec<f64> {
    let mut rng = trial_rng(seed, 0);
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) + shift).collect()
}

#[test]
fn ks_calibration_and_power() {
    // 1.63 is the 99% point of the Kolmogorov distribution
    assert_abs_diff_eq!(kolmogorov_tail(1.6276), 0.01, epsilon = 2e-4);
    assert_abs_diff_eq!(kolmogorov_tail(1.3581), 0.05, epsilon = 2e-4);
    let meta = 40;
    let inside = (0..meta)
        .filter(|&s| {
            let r = ks_statistic(&normals(100 + s, 5000, 0.0)).unwrap();
            r.distance * (r.n as f64).sqrt() <= 1.63
        })
        .count();
    assert!(inside as f64 >= 0.95 * meta as f64, "{inside}/{meta}");

    let shifted = ks_statistic(&normals(7, 5000, 0.5)).unwrap();
    assert!(shifted.p_value < 0.01, "{shifted:?}");
    assert!(ks_statistic(&[0.3; 500]).unwrap().distance >= 0.5);
    assert!(ks_statistic(&[0.0; 10]).is_err());
    assert!(ks_statistic(&[f64::NAN; 200]).is_err());
}

#[test]
fn moment_accumulator_merges_exactly() {
    let xs = normals(3, 3000, 0.4);
    let naive = |p: i32| {
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        xs.iter().map(|x| (x - m).powi(p)).sum::<f64>() / xs.len() as f64
    };
    let mut whole = MomentAccumulator::new(xs.len() as u64);
    for (i, &x) in xs.iter().enumerate() {
        whole.push(i as u64, x);
    }
    let mut left = MomentAccumulator::new(xs.len() as u64);
    let mut right = MomentAccumulator::new(xs.len() as u64);
    for (i, &x) in xs.iter().enumerate().rev() {
        if i % 3 == 0 { &mut left } else { &mut right }.push(i as u64, x);
    }
    left.merge(&right);
    assert_eq!(left.count(), 3000);
    for p in 2..=MAX_ORDER {
        let exact = naive(p as i32);
        assert!((whole.central(p) - exact).abs() < 1e-10 * (1.0 + exact.abs()), "order {p}");
        assert!((left.central(p) - exact).abs() < 1e-10 * (1.0 + exact.abs()), "merged order {p}");
    }
    let raw4 = xs.iter().map(|x| x.powi(4)).sum::<f64>() / xs.len() as f64;
    assert_abs_diff_eq!(whole.raw(4), raw4, epsilon = 1e-10);
    // batch errors only depend on trial index
    assert_eq!(whole.batch_count(), 54);
    assert_abs_diff_eq!(whole.standard_error(2), left.standard_error(2), epsilon = 1e-14);
    assert!(whole.standard_error(1) < 0.05);
}

#[test]
fn percentiles_and_histograms() {
    let v: Vec<f64> = (0..=100).rev().map(f64::from).collect();
    assert_eq!(percentile(&v, 95.0), 95.0);
    assert_eq!(median(&v), 50.0);
    assert_eq!(percentile(&[1.0, 2.0], 50.0), 1.5);
    assert!(percentile(&[], 50.0).is_nan());
    let mut h = Histogram::standard();
    for x in [-6.0, -5.0, 0.0, 4.99, 5.0] {
        h.push(x);
    }
    assert_eq!((h.underflow, h.overflow, h.total()), (1, 1, 5));
    assert_eq!(h.counts[0] + h.counts[HIST_BINS / 2] + h.counts[HIST_BINS - 1], 3);
    assert_eq!(h.edges().len(), HIST_BINS + 1);
}

#[test]
fn statistics_vanish_on_trivial_inputs() {
    let n = 50;
    let gammas = QuantileTable::new(n).unwrap();
    assert_eq!(rigidity_ratio(gammas.as_slice(), &gammas).unwrap(), 0.0);
    assert!(rigidity_ratio(&[0.0; 3], &gammas).is_err());

    let h = Matrix::from_fn(n, n, |i, j| if i == j { gammas.gamma(i + 1) } else { 0.0 });
    let spec = eig_sym(&h).unwrap();
    assert!(que_statistic(&spec, &IndexSet::leading(n, n).unwrap(), &Basis::Standard).unwrap() < 1e-12);
    assert_eq!(que_statistic(&spec, &IndexSet::new(n, vec![]).unwrap(), &Basis::Standard).unwrap(), 0.0);
    // diagonal matrix: each eigenvector is a coordinate vector
    let one = que_statistic(&spec, &IndexSet::new(n, vec![3]).unwrap(), &Basis::Standard).unwrap();
    assert_abs_diff_eq!(one, (1.0 - 1.0 / n as f64) * n as f64, epsilon = 1e-10);
}

#[test]
fn cumulant_expansion_for_small_entries() {
    let n = 100.0f64;
    let scale = n.powf(-0.5);
    let mut prev = f64::INFINITY;
    for t in [2, 4, 6, 8] {
        let r = cumulant_expansion_validate(&EntryLaw::Rademacher, scale, &sin_derivative, t).unwrap();
        assert_abs_diff_eq!(r.lhs, scale * scale.sin(), epsilon = 1e-16);
        assert_abs_diff_eq!(r.moment_t_plus_2, scale.powi(t as i32 + 2), epsilon = 1e-18);
        assert!(r.residual.abs() <= r.moment_t_plus_2, "T={t}: {r:?}");
        assert!(r.residual.abs() < prev);
        prev = r.residual.abs();
    }
    // Rademacher has kappa_4 = -2, kappa_6 = 16; the missing terms are
    // kappa_{r+1} / r! s^{r+1} E[sin^(r)(Y)] with sin''' = sin^(5) = -cos, cos
    let r = cumulant_expansion_validate(&EntryLaw::Rademacher, scale, &sin_derivative, 2).unwrap();
    let missing = (2.0 / 6.0 * scale.powi(4) + 16.0 / 120.0 * scale.powi(6)) * scale.cos();
    assert_abs_diff_eq!(r.residual, missing, epsilon = 1e-9);

    for law in [EntryLaw::Gaussian, EntryLaw::Uniform] {
        assert_abs_diff_eq!(expectation(&law, 1.0, &|y| y * y).unwrap(), 1.0, epsilon = 1e-12);
    }
    assert!(cumulant_expansion_validate(&EntryLaw::Gaussian, 0.0, &sin_derivative, 2).is_err());
    assert!(cumulant_expansion_validate(&EntryLaw::Gaussian, 1.0, &sin_derivative, 21).is_err());
}

#[test]
fn artifact_schemas() {
    let rec = TrialRecord { trial: 3, n: 10, p_hat: Some(0.25), status: "ok".into(), ..Default::default() };
    let bad = TrialRecord { trial: 4, n: 10, status: "error: a, \"b\"".into(), ..Default::default() };
    let csv = trial_csv(&[rec, bad]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], TRIAL_HEADER);
    assert_eq!(lines[0].split(',').count(), 8);
    assert_eq!(lines[1], "3,10,2.5000000000000000e-1,,,,,ok");
    assert_eq!(lines[2], "4,10,,,,,,\"error: a, \"\"b\"\"\"");
    assert_eq!(local_law_csv(&[]).trim_end(), LOCAL_LAW_HEADER);
    assert_eq!(fmt_f64(f64::NAN), "");

    let text = summary_json("clt", true, &json!({"x": 1})).unwrap();
    let v: Value = serde_json::from_str(&text).unwrap();
    check_schema(&v).unwrap();
    assert_eq!(v["schema_version"], SCHEMA_VERSION);
    assert_eq!(v["command"], "clt");
    assert_eq!(v["passed"], true);
    assert_eq!(v["report"]["x"], 1);
    assert!(check_schema(&json!({"schema_version": SCHEMA_VERSION + 1})).is_err());
    assert!(check_schema(&json!({"command": "clt"})).is_err());

    let echo: Value = serde_json::from_str(&config_echo_json(&json!({"seed": 7})).unwrap()).unwrap();
    check_schema(&echo).unwrap();
    assert_eq!(echo["config"]["seed"], 7);
}

#[test]
fn edge_overlap_mean_is_centred() {
    let text = preset("goe-n300-edge").unwrap().replace("trials = 4000", "trials = 2000").replace("seed = 7", "seed = 21");
    let r = run_clt(&ExperimentConfig::from_toml(&text).unwrap()).unwrap();
    assert_eq!((r.n, r.ell, r.index_size, r.skipped), (300, 1, 150, 0));
    let (mean, se) = (r.raw_moments[0], r.standard_errors[0]);
    assert!(mean.abs() <= 3.0 * se, "mean {mean}, SE {se}");
}
