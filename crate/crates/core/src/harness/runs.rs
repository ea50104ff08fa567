use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::stats::{ks_statistic, median, pearson, percentile, Histogram, KsResult, MomentAccumulator, MAX_ORDER};
use crate::eigensolve::{eig_selected, eig_wigner, eigvals_wigner, Spectrum, WignerSpectrum};
use crate::ensembles::{sample_wigner, trial_rng, EnsembleSpec, WignerMatrix};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Scalar, C64};
use crate::observables::{
    clt_normalization, overlap_of, overlaps, traceless_projector, v_ell, Basis, IndexSet, RegularizationParams,
};
use crate::semicircle::{gap_scale, m_sc, psi, QuantileTable, SpectralPoint};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub criterion: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Verdict {
    /// Passes when `value <= threshold`.
    pub fn at_most(criterion: impl Into<String>, value: f64, threshold: f64) -> Self {
        Verdict { criterion: criterion.into(), value, threshold, pass: value <= threshold }
    }

    pub fn at_least(criterion: impl Into<String>, value: f64, threshold: f64) -> Self {
        Verdict { criterion: criterion.into(), value, threshold, pass: value >= threshold }
    }
}

pub fn all_pass(verdicts: &[Verdict]) -> bool {
    verdicts.iter().all(|v| v.pass)
}

/// One row of `results.csv`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub n: usize,
    pub p_hat: Option<f64>,
    pub v: Option<f64>,
    pub lambda: Option<f64>,
    pub rigidity_ratio: Option<f64>,
    pub que_statistic: Option<f64>,
    /// `ok`, or the error that caused the trial to be skipped.
    pub status: String,
}

impl TrialRecord {
    fn new(trial: u64, n: usize) -> Self {
        TrialRecord { trial, n, status: "ok".into(), ..Default::default() }
    }

    fn failed(trial: u64, n: usize, e: &Error) -> Self {
        TrialRecord { trial, n, status: format!("error: {e}"), ..Default::default() }
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Runs `f` for every trial on a pool of `workers` threads. The output is in
/// trial order whatever the pool size, so downstream reductions are
/// deterministic.
pub fn par_trials<R, F>(workers: usize, count: u64, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(u64) -> R + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(|| (0..count).into_par_iter().map(&f).collect()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CltReport {
    pub n: usize,
    pub beta: u8,
    pub ell: usize,
    pub index_size: usize,
    pub trials: u64,
    pub skipped: u64,
    /// `E[p^r]` for `r = 1..=8`.
    pub raw_moments: Vec<f64>,
    /// Batch-means SE of each raw moment.
    pub standard_errors: Vec<f64>,
    /// Central moments of orders `2..=8`.
    pub central_moments: Vec<f64>,
    pub ks: KsResult,
    pub histogram: Histogram,
    pub verdicts: Vec<Verdict>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

fn selected_overlap(
    matrix: &WignerMatrix,
    ell: usize,
    set: &IndexSet,
    basis: &Basis,
) -> Result<(f64, f64)> {
    fn go<T: Scalar>(h: &Matrix<T>, ell: usize, set: &IndexSet, basis: &Basis) -> Result<(f64, f64)> {
        let sel = eig_selected(h, &[ell - 1])?;
        let u = sel.vector(ell - 1).ok_or(Error::IndexOutOfRange { index: ell, n: h.rows() })?;
        Ok((overlap_of(u, set, basis)?, sel.lambdas[ell - 1]))
    }
    match matrix {
        WignerMatrix::Real(h) => go(h, ell, set, basis),
        WignerMatrix::Complex(h) => go(h, ell, set, basis),
    }
}

/// Edge CLT experiment: moments, KS distance and histogram of `p_hat_l`.
pub fn run_clt(cfg: &ExperimentConfig) -> Result<CltReport> {
    cfg.validate()?;
    let spec = cfg.ensemble.spec()?;
    let n = spec.n;
    let ex = &cfg.experiment;
    let ell = ex.ell.resolve(n)?;
    let set = ex.index_set.resolve(n)?;
    let c = clt_normalization(n, set.len(), spec.beta)?;
    let basis = ex.basis.resolve(n, ex.seed)?;
    let records = par_trials(cfg.workers(), ex.trials, |t| {
        match sample_wigner(&spec, ex.seed, t).and_then(|s| selected_overlap(&s.matrix, ell, &set, &basis)) {
            Ok((p, lambda)) => TrialRecord { p_hat: Some(p * c), lambda: Some(lambda), ..TrialRecord::new(t, n) },
            Err(e) => TrialRecord::failed(t, n, &e),
        }
    })?;
    let mut acc = MomentAccumulator::new(ex.trials);
    let mut hist = Histogram::standard();
    let mut values = Vec::new();
    for r in &records {
        if let Some(p) = r.p_hat {
            acc.push(r.trial, p);
            hist.push(p);
            values.push(p);
        }
    }
    let skipped = ex.trials - acc.count();
    if values.is_empty() {
        return Err(Error::InvalidArgument("every trial failed".into()));
    }
    let ks = ks_statistic(&values)?;
    let raw: Vec<f64> = (1..=MAX_ORDER).map(|r| acc.raw(r)).collect();
    let se: Vec<f64> = (1..=MAX_ORDER).map(|r| acc.standard_error(r)).collect();
    let th = &ex.thresholds;
    let k = th.se_multiplier;
    let verdicts = vec![
        Verdict::at_most("|E[p]|", raw[0].abs(), k * se[0]),
        Verdict::at_most("|E[p^2] - 1|", (raw[1] - 1.0).abs(), th.second_moment_floor.max(k * se[1])),
        Verdict::at_most("|E[p^3]|", raw[2].abs(), k * se[2]),
        Verdict::at_most("|E[p^4] - 3|", (raw[3] - 3.0).abs(), th.fourth_moment_floor.max(k * se[3])),
        Verdict::at_most("KS distance", ks.distance, th.ks_distance),
    ];
    Ok(CltReport {
        n,
        beta: spec.beta,
        ell,
        index_size: set.len(),
        trials: ex.trials,
        skipped,
        raw_moments: raw,
        standard_errors: se,
        central_moments: (2..=MAX_ORDER).map(|p| acc.central(p)).collect(),
        ks,
        histogram: hist,
        verdicts,
        records,
    })
}

fn sweep_sizes(cfg: &ExperimentConfig) -> Vec<usize> {
    let mut ns = cfg.experiment.n_sweep.clone();
    ns.push(cfg.ensemble.n);
    ns.sort_unstable();
    ns.dedup();
    ns
}

fn spectrum_of(spec: &EnsembleSpec, seed: u64, trial: u64) -> Result<WignerSpectrum> {
    eig_wigner(&sample_wigner(spec, seed, trial)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SizeSummary {
    pub n: usize,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
    pub bound: f64,
    pub count: usize,
}

impl SizeSummary {
    fn of(n: usize, values: &[f64], exponent: f64) -> Self {
        SizeSummary {
            n,
            median: median(values),
            p95: percentile(values, 95.0),
            max: values.iter().cloned().fold(f64::NAN, f64::max),
            bound: (n as f64).powf(exponent),
            count: values.len(),
        }
    }
}

/// `true` when the medians strictly decrease along increasing `N`.
fn medians_decrease(rows: &[SizeSummary]) -> (bool, f64) {
    let ok = rows.windows(2).all(|w| w[1].median < w[0].median);
    let last = rows.last().map_or(f64::NAN, |r| r.median);
    let first = rows.first().map_or(f64::NAN, |r| r.median);
    (ok, last - first)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QueReport {
    pub sizes: Vec<SizeSummary>,
    pub verdicts: Vec<Verdict>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

/// `max_k |p_k| N / sqrt(|I|)` for one spectrum.
pub fn que_statistic<T: Scalar>(spec: &Spectrum<T>, set: &IndexSet, basis: &Basis) -> Result<f64> {
    if set.is_empty() {
        return Ok(0.0);
    }
    let ov = overlaps(spec, set, basis, 1)?;
    let m = ov.p.iter().fold(0.0f64, |a, p| a.max(p.abs()));
    Ok(m * spec.n() as f64 / (set.len() as f64).sqrt())
}

pub fn run_que_check(cfg: &ExperimentConfig) -> Result<QueReport> {
    cfg.validate()?;
    let ex = &cfg.experiment;
    let mut sizes = Vec::new();
    let mut records = Vec::new();
    for n in sweep_sizes(cfg) {
        let spec = cfg.ensemble.spec_with_n(n)?;
        let set = ex.index_set.resolve(n)?;
        let basis = ex.basis.resolve(n, ex.seed)?;
        let recs = par_trials(cfg.workers(), ex.trials, |t| {
            let stat = spectrum_of(&spec, ex.seed, t).and_then(|ws| match &ws {
                WignerSpectrum::Real(s) => que_statistic(s, &set, &basis),
                WignerSpectrum::Complex(s) => que_statistic(s, &set, &basis),
            });
            match stat {
                Ok(s) => TrialRecord { que_statistic: Some(s), ..TrialRecord::new(t, n) },
                Err(e) => TrialRecord::failed(t, n, &e),
            }
        })?;
        let vals: Vec<f64> = recs.iter().filter_map(|r| r.que_statistic).collect();
        sizes.push(SizeSummary::of(n, &vals, ex.thresholds.que_exponent));
        records.extend(recs);
    }
    let main = sizes.iter().find(|s| s.n == cfg.ensemble.n).cloned().expect("main size is part of the sweep");
    let mut verdicts = vec![Verdict::at_most(format!("p95 QUE statistic at N={}", main.n), main.p95, main.bound)];
    if sizes.len() > 1 {
        let (ok, change) = medians_decrease(&sizes);
        verdicts.push(Verdict { criterion: "median QUE statistic decreasing in N".into(), value: change, threshold: 0.0, pass: ok });
    }
    Ok(QueReport { sizes, verdicts, records })
}

/// `max_i |lambda_i - gamma_i| / Delta_i`.
pub fn rigidity_ratio(lambdas: &[f64], table: &QuantileTable) -> Result<f64> {
    let n = lambdas.len();
    if table.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: table.n() });
    }
    let mut worst = 0.0f64;
    for (i, &l) in lambdas.iter().enumerate() {
        worst = worst.max((l - table.gamma(i + 1)).abs() / gap_scale(i + 1, n)?);
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepulsionRow {
    pub epsilon: f64,
    pub threshold: f64,
    pub frequency: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidityReport {
    pub rigidity: SizeSummary,
    pub repulsion: Vec<RepulsionRow>,
    pub verdicts: Vec<Verdict>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
    #[serde(skip)]
    pub gaps: Vec<f64>,
}

pub fn run_rigidity_and_repulsion(cfg: &ExperimentConfig) -> Result<RigidityReport> {
    cfg.validate()?;
    let ex = &cfg.experiment;
    let spec = cfg.ensemble.spec()?;
    let n = spec.n;
    if n < 2 {
        return Err(Error::InvalidArgument("rigidity run needs N >= 2".into()));
    }
    let table = QuantileTable::new(n)?;
    let out = par_trials(cfg.workers(), ex.trials, |t| {
        let res = sample_wigner(&spec, ex.seed, t)
            .and_then(|s| eigvals_wigner(&s.matrix))
            .and_then(|l| Ok((rigidity_ratio(&l, &table)?, l[1] - l[0], l[0])));
        match res {
            Ok((r, gap, l1)) => (TrialRecord { rigidity_ratio: Some(r), lambda: Some(l1), ..TrialRecord::new(t, n) }, Some(gap)),
            Err(e) => (TrialRecord::failed(t, n, &e), None),
        }
    })?;
    let (records, gaps): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    let gaps: Vec<f64> = gaps.into_iter().flatten().collect();
    let ratios: Vec<f64> = records.iter().filter_map(|r| r.rigidity_ratio).collect();
    let rigidity = SizeSummary::of(n, &ratios, ex.thresholds.rigidity_exponent);
    let mut eps = ex.repulsion_epsilons.clone();
    eps.sort_by(f64::total_cmp);
    let nf = n as f64;
    let repulsion: Vec<RepulsionRow> = eps
        .iter()
        .map(|&e| {
            let thr = nf.powf(-2.0 / 3.0 - e);
            let hits = gaps.iter().filter(|&&g| g < thr).count();
            RepulsionRow { epsilon: e, threshold: thr, frequency: hits as f64 / gaps.len().max(1) as f64 }
        })
        .collect();
    let monotone = repulsion.windows(2).all(|w| w[1].frequency <= w[0].frequency);
    let verdicts = vec![
        Verdict::at_most(format!("p95 rigidity ratio at N={n}"), rigidity.p95, rigidity.bound),
        Verdict {
            criterion: "repulsion frequency non-increasing in epsilon".into(),
            value: repulsion.last().map_or(0.0, |r| r.frequency) - repulsion.first().map_or(0.0, |r| r.frequency),
            threshold: 0.0,
            pass: monotone,
        },
    ];
    Ok(RigidityReport { rigidity, repulsion, verdicts, records, gaps })
}

pub const LAW_ISOTROPIC: &str = "isotropic";
pub const LAW_GG: &str = "two_resolvent_gg";
pub const LAW_GGBAR: &str = "two_resolvent_ggbar";
pub const LAW_TRACELESS_TWO: &str = "traceless_two";
pub const LAW_TRACELESS_THREE: &str = "traceless_three";
pub const LAWS: [&str; 5] = [LAW_ISOTROPIC, LAW_GG, LAW_GGBAR, LAW_TRACELESS_TWO, LAW_TRACELESS_THREE];

/// Default 12 points `(E, eta)`, inside the domain for `tau = 0.2` and `N >= 250`.
pub fn default_z_grid() -> Vec<[f64; 2]> {
    let mut g = Vec::new();
    for e in [-2.0, -1.0, 0.0, 1.5] {
        for eta in [0.01, 0.05, 0.3] {
            g.push([e, eta]);
        }
    }
    g
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalLawRow {
    pub n: usize,
    pub law: String,
    pub e: f64,
    pub eta: f64,
    /// Point of the edge window `E in I_l, eta = eta_l`.
    pub window: bool,
    pub in_domain: bool,
    pub p95: f64,
    pub median: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawSummary {
    pub n: usize,
    pub law: String,
    /// Largest 95th percentile over the grid points.
    pub worst_p95: f64,
    /// Median over every point, trial and probe.
    pub median: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalLawReport {
    pub rows: Vec<LocalLawRow>,
    pub summaries: Vec<LawSummary>,
    pub verdicts: Vec<Verdict>,
    pub skipped: u64,
}

struct Probes {
    /// Vectors in coordinate space.
    vectors: Vec<Vec<C64>>,
    /// `(x, y)` index pairs into `vectors` for the isotropic laws.
    pairs: Vec<(usize, usize)>,
    /// `(c, d)` coordinate pairs for the traceless laws.
    entries: Vec<(usize, usize)>,
}

fn make_probes(n: usize, seed: u64) -> Probes {
    let entries = vec![(0, 0), (0, 1.min(n - 1)), (n / 2, n - 1), (n - 1, n - 1)];
    let mut vectors = Vec::new();
    let mut pairs = Vec::new();
    for &(c, d) in &entries {
        let mut ec = vec![C64::new(0.0, 0.0); n];
        ec[c] = C64::new(1.0, 0.0);
        let mut ed = vec![C64::new(0.0, 0.0); n];
        ed[d] = C64::new(1.0, 0.0);
        vectors.push(ec);
        vectors.push(ed);
        pairs.push((vectors.len() - 2, vectors.len() - 1));
    }
    // delocalised probes, fixed for all trials
    let mut rng = trial_rng(seed ^ 0x5eed_0f_9a0be5, 0);
    for _ in 0..2 {
        let mut pair = Vec::new();
        for _ in 0..2 {
            let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            vectors.push(v.into_iter().map(|x| C64::new(x / norm, 0.0)).collect());
            pair.push(vectors.len() - 1);
        }
        pairs.push((pair[0], pair[1]));
    }
    Probes { vectors, pairs, entries }
}

fn coeffs<T: Scalar>(spec: &Spectrum<T>, x: &[C64]) -> Vec<C64> {
    (0..spec.n())
        .map(|i| spec.vector(i).iter().zip(x).map(|(u, v)| u.to_c64().conj() * v).sum())
        .collect()
}

fn synth<T: Scalar>(spec: &Spectrum<T>, c: &[C64]) -> Vec<C64> {
    let n = spec.n();
    let mut out = vec![C64::new(0.0, 0.0); n];
    for (i, &ci) in c.iter().enumerate() {
        if ci == C64::new(0.0, 0.0) {
            continue;
        }
        for (o, u) in out.iter_mut().zip(spec.vector(i)) {
            *o += ci * u.to_c64();
        }
    }
    out
}

fn scale_coeffs(lambdas: &[f64], c: &[C64], z: C64) -> Vec<C64> {
    c.iter().zip(lambdas).map(|(&ci, &l)| ci / (l - z)).collect()
}

fn pair_form(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn apply_a(a: &Matrix<f64>, diag: Option<&[f64]>, v: &[C64]) -> Vec<C64> {
    match diag {
        Some(d) => v.iter().zip(d).map(|(x, w)| x * w).collect(),
        None => (0..a.rows()).map(|i| a.row(i).iter().zip(v).map(|(w, x)| x * w).sum()).collect(),
    }
}

/// Per-law samples for one trial: `(point index, law index, value)`.
fn local_law_trial<T: Scalar>(
    spec: &Spectrum<T>,
    points: &[(C64, bool)],
    probes: &Probes,
    a: &Matrix<f64>,
    a_diag: Option<&[f64]>,
) -> Result<Vec<(usize, usize, f64)>> {
    let n = spec.n();
    let nf = n as f64;
    let lambdas = spec.lambdas();
    let proj: Vec<Vec<C64>> = probes.vectors.iter().map(|v| coeffs(spec, v)).collect();
    let mut out = Vec::new();
    for (pi, &(z, window)) in points.iter().enumerate() {
        let m = m_sc(z)?;
        let ps = psi(z, n)?;
        for &(x, y) in &probes.pairs {
            let (a_x, a_y) = (&proj[x], &proj[y]);
            let xy = pair_form(&probes.vectors[x], &probes.vectors[y]);
            let (mut g1, mut g2, mut gb) = (C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(0.0, 0.0));
            for i in 0..n {
                let w = a_x[i].conj() * a_y[i];
                let r = 1.0 / (lambdas[i] - z);
                g1 += w * r;
                g2 += w * r * r;
                gb += w * r.norm_sqr();
            }
            out.push((pi, 0, (g1 - xy * m).norm() / ps));
            out.push((pi, 1, g2.norm() / (nf * ps * ps)));
            out.push((pi, 2, gb.norm() / (nf * ps * ps)));
        }
        if window {
            let mut ds: Vec<usize> = probes.entries.iter().map(|e| e.1).collect();
            ds.sort_unstable();
            ds.dedup();
            for d in ds {
                let mut e = vec![C64::new(0.0, 0.0); n];
                e[d] = C64::new(1.0, 0.0);
                let cd = coeffs(spec, &e);
                // S A Sbar e_d and S A Sbar S e_d, with Sbar = G(zbar)
                let two = scale_coeffs(lambdas, &coeffs(spec, &apply_a(a, a_diag, &synth(spec, &scale_coeffs(lambdas, &cd, z.conj())))), z);
                let gcd = scale_coeffs(lambdas, &cd, z);
                let inner = scale_coeffs(lambdas, &gcd, z.conj());
                let three = scale_coeffs(lambdas, &coeffs(spec, &apply_a(a, a_diag, &synth(spec, &inner))), z);
                let two_v = synth(spec, &two);
                let three_v = synth(spec, &three);
                for &(c, dd) in &probes.entries {
                    if dd != d {
                        continue;
                    }
                    out.push((pi, 3, two_v[c].norm() / (nf.sqrt() * ps)));
                    out.push((pi, 4, three_v[c].norm() / (nf.powf(1.5) * ps.powf(2.25))));
                }
            }
        }
    }
    Ok(out)
}

/// Edge-window points: `edge_points` energies spread over `I_l`, `eta = eta_l`.
pub fn edge_window(params: &RegularizationParams, points: usize) -> Vec<[f64; 2]> {
    let (lo, hi) = params.interval;
    let k = points.max(1);
    (0..k)
        .map(|i| {
            let t = if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
            [lo + t * (hi - lo), params.eta]
        })
        .collect()
}

pub fn run_local_law_sweep(cfg: &ExperimentConfig) -> Result<LocalLawReport> {
    cfg.validate()?;
    let ex = &cfg.experiment;
    let tau = cfg.regularization.tau;
    let grid = if ex.z_grid.is_empty() { default_z_grid() } else { ex.z_grid.clone() };
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let mut skipped = 0;
    for n in sweep_sizes(cfg) {
        let spec = cfg.ensemble.spec_with_n(n)?;
        for &[e, eta] in &grid {
            if !SpectralPoint::new(e, eta, tau).in_domain(n) {
                return Err(Error::Config(format!("experiment.z_grid: ({e}, {eta}) is outside the domain for N = {n}")));
            }
        }
        let ell = ex.ell.resolve(n)?;
        let params = cfg.regularization.params(ell, n)?;
        let window = edge_window(&params, ex.edge_points);
        let mut points: Vec<(C64, bool, bool)> = grid.iter().map(|&[e, eta]| (C64::new(e, eta), false, true)).collect();
        for &[e, eta] in &window {
            points.push((C64::new(e, eta), true, SpectralPoint::new(e, eta, tau).in_domain(n)));
        }
        let set = ex.index_set.resolve(n)?;
        let basis = ex.basis.resolve(n, ex.seed)?;
        let a = traceless_projector(&set, &basis)?;
        let a_diag: Option<Vec<f64>> = matches!(basis, Basis::Standard).then(|| (0..n).map(|i| a[(i, i)]).collect());
        let probes = make_probes(n, ex.seed);
        let zs: Vec<(C64, bool)> = points.iter().map(|&(z, w, _)| (z, w)).collect();
        let per_trial = par_trials(cfg.workers(), ex.trials, |t| {
            spectrum_of(&spec, ex.seed, t).and_then(|ws| match &ws {
                WignerSpectrum::Real(s) => local_law_trial(s, &zs, &probes, &a, a_diag.as_deref()),
                WignerSpectrum::Complex(s) => local_law_trial(s, &zs, &probes, &a, a_diag.as_deref()),
            })
        })?;
        let mut samples = vec![vec![Vec::new(); LAWS.len()]; points.len()];
        for res in per_trial {
            match res {
                Ok(vals) => {
                    for (p, l, v) in vals {
                        samples[p][l].push(v);
                    }
                }
                Err(_) => skipped += 1,
            }
        }
        let bound = (n as f64).powf(ex.thresholds.local_law_exponent);
        for (li, law) in LAWS.iter().enumerate() {
            let mut all = Vec::new();
            let mut worst = f64::NEG_INFINITY;
            for (pi, &(z, window, in_domain)) in points.iter().enumerate() {
                let v = &samples[pi][li];
                if v.is_empty() {
                    continue;
                }
                let p95 = percentile(v, 95.0);
                worst = worst.max(p95);
                all.extend_from_slice(v);
                rows.push(LocalLawRow {
                    n,
                    law: law.to_string(),
                    e: z.re,
                    eta: z.im,
                    window,
                    in_domain,
                    p95,
                    median: median(v),
                    max: v.iter().cloned().fold(f64::NAN, f64::max),
                    count: v.len(),
                });
            }
            summaries.push(LawSummary { n, law: law.to_string(), worst_p95: worst, median: median(&all), bound });
        }
    }
    let main_n = cfg.ensemble.n;
    let mut verdicts = Vec::new();
    for law in LAWS {
        let s: Vec<&LawSummary> = summaries.iter().filter(|s| s.law == law).collect();
        if let Some(m) = s.iter().find(|s| s.n == main_n) {
            verdicts.push(Verdict::at_most(format!("{law}: worst p95 at N={main_n}"), m.worst_p95, m.bound));
        }
        if s.len() > 1 {
            let ok = s.windows(2).all(|w| w[1].median < w[0].median);
            verdicts.push(Verdict {
                criterion: format!("{law}: median decreasing in N"),
                value: s[s.len() - 1].median - s[0].median,
                threshold: 0.0,
                pass: ok,
            });
        }
    }
    Ok(LocalLawReport { rows, summaries, verdicts, skipped })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationReport {
    pub n: usize,
    pub ell: usize,
    pub params: RegularizationParams,
    pub trials: u64,
    pub skipped: u64,
    pub correlation: f64,
    /// `E[p^r]` and `E[v^r]` for `r = 1..=4`.
    pub p_moments: Vec<f64>,
    pub v_moments: Vec<f64>,
    pub moment_gaps: Vec<f64>,
    pub verdicts: Vec<Verdict>,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

pub fn run_regularization_fidelity(cfg: &ExperimentConfig) -> Result<RegularizationReport> {
    cfg.validate()?;
    let ex = &cfg.experiment;
    let spec = cfg.ensemble.spec()?;
    let n = spec.n;
    let ell = ex.ell.resolve(n)?;
    let params = cfg.regularization.params(ell, n)?;
    let set = ex.index_set.resolve(n)?;
    let basis = ex.basis.resolve(n, ex.seed)?;
    let records = par_trials(cfg.workers(), ex.trials, |t| {
        let res = spectrum_of(&spec, ex.seed, t).and_then(|ws| {
            let (ov, lambdas) = match &ws {
                WignerSpectrum::Real(s) => (overlaps(s, &set, &basis, spec.beta)?, s.lambdas()),
                WignerSpectrum::Complex(s) => (overlaps(s, &set, &basis, spec.beta)?, s.lambdas()),
            };
            let v = v_ell(lambdas, &ov, &params)?;
            Ok((ov.p_hat()?[ell - 1], v.value, lambdas[ell - 1]))
        });
        match res {
            Ok((p, v, l)) => TrialRecord { p_hat: Some(p), v: Some(v), lambda: Some(l), ..TrialRecord::new(t, n) },
            Err(e) => TrialRecord::failed(t, n, &e),
        }
    })?;
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.is_ok()).collect();
    if ok.len() < 2 {
        return Err(Error::InvalidArgument("fewer than two successful trials".into()));
    }
    let ps: Vec<f64> = ok.iter().map(|r| r.p_hat.unwrap()).collect();
    let vs: Vec<f64> = ok.iter().map(|r| r.v.unwrap()).collect();
    let mom = |x: &[f64], r: i32| x.iter().map(|v| v.powi(r)).sum::<f64>() / x.len() as f64;
    let p_moments: Vec<f64> = (1..=4).map(|r| mom(&ps, r)).collect();
    let v_moments: Vec<f64> = (1..=4).map(|r| mom(&vs, r)).collect();
    let moment_gaps: Vec<f64> = p_moments.iter().zip(&v_moments).map(|(a, b)| (a - b).abs()).collect();
    let correlation = pearson(&ps, &vs);
    let th = &ex.thresholds;
    let verdicts = vec![
        Verdict::at_least("corr(v, p_hat)", correlation, th.min_correlation),
        Verdict::at_most("|E[p^2] - E[v^2]|", moment_gaps[1], th.max_second_moment_gap),
    ];
    Ok(RegularizationReport {
        n,
        ell,
        params,
        trials: ex.trials,
        skipped: ex.trials - ok.len() as u64,
        correlation,
        p_moments,
        v_moments,
        moment_gaps,
        verdicts,
        records,
    })
}
