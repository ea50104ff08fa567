//! Eigenvector overlaps and the smoothed edge observable `v_l`.

use std::f64::consts::PI;

use rand_distr::StandardNormal;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::eigensolve::Spectrum;
use crate::ensembles::trial_rng;
use crate::error::{Error, Result};
use crate::linalg::{dot, Lu, Matrix, Scalar, C64};
use crate::quadrature::{adaptive, GaussLegendre};
use crate::semicircle::{gamma_quantile, gap_scale};

/// Subset `I` of the coordinates `0..n` (0-based).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexSet {
    n: usize,
    members: Vec<usize>,
}

impl IndexSet {
    pub fn new(n: usize, mut members: Vec<usize>) -> Result<Self> {
        members.sort_unstable();
        members.dedup();
        if let Some(&m) = members.last() {
            if m >= n {
                return Err(Error::IndexOutOfRange { index: m + 1, n });
            }
        }
        Ok(IndexSet { n, members })
    }

    /// The first `size` coordinates.
    pub fn leading(n: usize, size: usize) -> Result<Self> {
        if size > n {
            return Err(Error::InvalidArgument(format!("|I| = {size} exceeds N = {n}")));
        }
        Ok(IndexSet { n, members: (0..size).collect() })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn mask(&self) -> Vec<bool> {
        let mut m = vec![false; self.n];
        for &i in &self.members {
            m[i] = true;
        }
        m
    }
}

/// Orthonormal reference vectors `q_alpha`.
#[derive(Clone, Debug, PartialEq)]
pub enum Basis {
    Standard,
    /// Rows are the basis vectors.
    Orthonormal(Matrix<f64>),
}

impl Basis {
    pub fn orthonormal(rows: Matrix<f64>) -> Result<Self> {
        if !rows.is_square() {
            return Err(Error::NotSquare { rows: rows.rows(), cols: rows.cols() });
        }
        let gram = rows.matmul(&rows.transpose());
        let defect = gram.max_abs_diff(&Matrix::identity(rows.rows()));
        if defect > 1e-10 {
            return Err(Error::InvalidArgument(format!("basis is not orthonormal (defect {defect:e})")));
        }
        Ok(Basis::Orthonormal(rows))
    }

    /// Haar-distributed orthogonal basis: QR of a Gaussian matrix with the
    /// diagonal of `R` made positive.
    pub fn haar(n: usize, seed: u64) -> Result<Self> {
        let mut rng = trial_rng(seed, u64::MAX);
        let g = Matrix::<f64>::from_fn(n, n, |_, _| rng.sample(StandardNormal));
        Basis::orthonormal(householder_q(&g).transpose())
    }

    fn vector(&self, alpha: usize, n: usize) -> Vec<f64> {
        match self {
            Basis::Standard => {
                let mut e = vec![0.0; n];
                e[alpha] = 1.0;
                e
            }
            Basis::Orthonormal(m) => m.row(alpha).to_vec(),
        }
    }

    fn dim_ok(&self, n: usize) -> Result<()> {
        match self {
            Basis::Standard => Ok(()),
            Basis::Orthonormal(m) if m.rows() == n => Ok(()),
            Basis::Orthonormal(m) => Err(Error::DimensionMismatch { expected: n, got: m.rows() }),
        }
    }
}

/// `Q` from a Householder QR of `a`, columns signed so that `diag(R) > 0`.
fn householder_q(a: &Matrix<f64>) -> Matrix<f64> {
    let n = a.rows();
    let mut r = a.clone();
    let mut vs: Vec<(usize, Vec<f64>, f64)> = Vec::new();
    for k in 0..n {
        let x: Vec<f64> = (k..n).map(|i| r[(i, k)]).collect();
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if xn == 0.0 {
            continue;
        }
        let alpha = if x[0] >= 0.0 { -xn } else { xn };
        let mut v = x;
        v[0] -= alpha;
        let vn2: f64 = v.iter().map(|t| t * t).sum();
        if vn2 == 0.0 {
            continue;
        }
        let tau = 2.0 / vn2;
        for j in k..n {
            let s: f64 = (k..n).map(|i| v[i - k] * r[(i, j)]).sum::<f64>() * tau;
            for i in k..n {
                r[(i, j)] -= s * v[i - k];
            }
        }
        vs.push((k, v, tau));
    }
    let mut q = Matrix::<f64>::identity(n);
    for (k, v, tau) in vs.iter().rev() {
        for j in 0..n {
            let s: f64 = (*k..n).map(|i| v[i - k] * q[(i, j)]).sum::<f64>() * tau;
            for i in *k..n {
                q[(i, j)] -= s * v[i - k];
            }
        }
    }
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// `sqrt(beta N^3 / (2 |I| (N - |I|)))`.
pub fn clt_normalization(n: usize, size: usize, beta: u8) -> Result<f64> {
    if size == 0 || size >= n {
        return Err(Error::InvalidArgument(format!(
            "normalised overlap needs 0 < |I| < N (got |I| = {size}, N = {n})"
        )));
    }
    let (nf, s) = (n as f64, size as f64);
    Ok((beta as f64 * nf.powi(3) / (2.0 * s * (nf - s))).sqrt())
}

#[derive(Clone, Debug)]
pub struct OverlapSet {
    pub index_set: IndexSet,
    pub beta: u8,
    /// `p_k = sum_{alpha in I} |<q_alpha, u_k>|^2 - |I|/N`.
    pub p: Vec<f64>,
    /// Normalised overlaps; `None` when `|I|` is `0` or `N`.
    pub p_hat: Option<Vec<f64>>,
}

impl OverlapSet {
    /// Overlaps given directly, e.g. for synthetic tests.
    pub fn from_p_hat(index_set: IndexSet, beta: u8, p_hat: Vec<f64>) -> Result<Self> {
        let c = clt_normalization(index_set.n(), index_set.len(), beta)?;
        let p = p_hat.iter().map(|v| v / c).collect();
        Ok(OverlapSet { index_set, beta, p, p_hat: Some(p_hat) })
    }

    pub fn p_hat(&self) -> Result<&[f64]> {
        self.p_hat.as_deref().ok_or_else(|| {
            Error::InvalidArgument(format!("p_hat undefined for |I| = {}", self.index_set.len()))
        })
    }
}

/// Self-overlap of one unit vector.
pub fn overlap_of<T: Scalar>(u: &[T], set: &IndexSet, basis: &Basis) -> Result<f64> {
    let n = u.len();
    if set.n() != n {
        return Err(Error::DimensionMismatch { expected: n, got: set.n() });
    }
    basis.dim_ok(n)?;
    let mass: f64 = match basis {
        Basis::Standard => set.members().iter().map(|&a| u[a].abs2()).sum(),
        Basis::Orthonormal(q) => set
            .members()
            .iter()
            .map(|&a| {
                let qa: Vec<T> = q.row(a).iter().map(|&x| T::from_real(x)).collect();
                dot(&qa, u).abs2()
            })
            .sum(),
    };
    Ok(mass - set.len() as f64 / n as f64)
}

pub fn overlaps<T: Scalar>(spec: &Spectrum<T>, set: &IndexSet, basis: &Basis, beta: u8) -> Result<OverlapSet> {
    let n = spec.n();
    let p = (0..n).map(|k| overlap_of(spec.vector(k), set, basis)).collect::<Result<Vec<_>>>()?;
    let p_hat = clt_normalization(n, set.len(), beta).ok().map(|c| p.iter().map(|v| v * c).collect());
    Ok(OverlapSet { index_set: set.clone(), beta, p, p_hat })
}

/// `A = sum_{alpha in I} (1 - |I|/N) q q^T - sum_{alpha not in I} (|I|/N) q q^T`.
pub fn traceless_projector(set: &IndexSet, basis: &Basis) -> Result<Matrix<f64>> {
    let n = set.n();
    basis.dim_ok(n)?;
    let frac = set.len() as f64 / n as f64;
    let mask = set.mask();
    let weight = |a: usize| if mask[a] { 1.0 - frac } else { -frac };
    Ok(match basis {
        Basis::Standard => Matrix::diag(&(0..n).map(weight).collect::<Vec<_>>()),
        Basis::Orthonormal(_) => {
            let mut out = Matrix::<f64>::zeros(n, n);
            for a in 0..n {
                let q = basis.vector(a, n);
                let w = weight(a);
                for i in 0..n {
                    let s = w * q[i];
                    let row = out.row_mut(i);
                    for j in 0..n {
                        row[j] += s * q[j];
                    }
                }
            }
            out
        }
    })
}

/// Quintic smoothstep `t^3 (10 - 15 t + 6 t^2)` and its derivatives, as
/// polynomial coefficients in `t`.
const STEP: [f64; 6] = [0.0, 0.0, 0.0, 10.0, -15.0, 6.0];
const STEP_D1: [f64; 6] = [0.0, 0.0, 30.0, -60.0, 30.0, 0.0];
const STEP_D2: [f64; 6] = [0.0, 60.0, -180.0, 120.0, 0.0, 0.0];

fn poly(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * t + a)
}

/// Coefficients of `p(1 - t)`.
fn reflect(c: &[f64; 6]) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (j, &a) in c.iter().enumerate() {
        // a (1 - t)^j
        let mut binom = 1.0;
        for i in 0..=j {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            out[i] += a * binom * sign;
            binom = binom * (j - i) as f64 / (i + 1) as f64;
        }
    }
    out
}

/// `f_{E1,E2,eta}`: one on `[E1, E2]`, zero outside `[E1 - eta, E2 + eta]`,
/// quintic smoothstep ramps in between.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoothBump {
    pub e1: f64,
    pub e2: f64,
    pub eta: f64,
}

impl SmoothBump {
    pub fn new(e1: f64, e2: f64, eta: f64) -> Result<Self> {
        if !(e1 < e2) || !(eta > 0.0) || !e1.is_finite() || !e2.is_finite() || !eta.is_finite() {
            return Err(Error::InvalidArgument(format!("bump needs E1 < E2 and eta > 0 (got {e1}, {e2}, {eta})")));
        }
        Ok(SmoothBump { e1, e2, eta })
    }

    fn eval_with(&self, x: f64, order: usize) -> f64 {
        let c: &[f64; 6] = match order {
            0 => &STEP,
            1 => &STEP_D1,
            _ => &STEP_D2,
        };
        let scale = self.eta.powi(order as i32);
        if x <= self.e1 - self.eta || x >= self.e2 + self.eta {
            0.0
        } else if x < self.e1 {
            poly(c, (x - (self.e1 - self.eta)) / self.eta) / scale
        } else if x <= self.e2 {
            if order == 0 {
                1.0
            } else {
                0.0
            }
        } else {
            let sign = if order == 1 { -1.0 } else { 1.0 };
            sign * poly(c, (self.e2 + self.eta - x) / self.eta) / scale
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with(x, 0)
    }

    pub fn d1(&self, x: f64) -> f64 {
        self.eval_with(x, 1)
    }

    pub fn d2(&self, x: f64) -> f64 {
        self.eval_with(x, 2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    /// Exponents from the proof: `eps1 = min(eps0/2, tau/10000)`.
    Paper { eps0: f64, c0: f64 },
    /// Fixed exponents usable at moderate `N`.
    Practical,
    Custom { delta: [f64; 5] },
}

/// Exponents of the practical profile, `(delta_1, ..., delta_5)`.
pub const PRACTICAL_DELTA: [f64; 5] = [0.3, 0.3, 0.1, 0.6, 1.2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizationParams {
    /// 1-based eigenvalue index.
    pub ell: usize,
    pub n: usize,
    pub tau: f64,
    pub profile: Profile,
    pub epsilon1: Option<f64>,
    pub delta: [f64; 5],
    pub gamma_ell: f64,
    pub delta_ell: f64,
    pub eta: f64,
    pub interval: (f64, f64),
    pub shift: f64,
    pub bump_width: f64,
    pub eta_tilde: f64,
    pub kappa: f64,
}

impl RegularizationParams {
    pub fn new(ell: usize, n: usize, tau: f64, profile: Profile) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidArgument(format!("tau must lie in (0, 1), got {tau}")));
        }
        let (epsilon1, delta) = match profile {
            Profile::Paper { eps0, c0 } => {
                if !(eps0 > 0.0) || !(c0 >= 0.0) {
                    return Err(Error::InvalidArgument("paper profile needs eps0 > 0 and C0 >= 0".into()));
                }
                let e1 = (eps0 / 2.0).min(tau / 10000.0);
                (Some(e1), [2.0 * e1, e1 / (c0 + 1.0).max(100.0), e1 / 2.0, 6.0 * e1, 8.0 * e1])
            }
            Profile::Practical => (None, PRACTICAL_DELTA),
            Profile::Custom { delta } => {
                if delta.iter().any(|d| !(*d > 0.0)) {
                    return Err(Error::InvalidArgument("all delta exponents must be positive".into()));
                }
                (None, delta)
            }
        };
        let gamma_ell = gamma_quantile(ell, n)?;
        let delta_ell = gap_scale(ell, n)?;
        let nf = n as f64;
        let half = delta_ell * nf.powf(delta[1]);
        Ok(RegularizationParams {
            ell,
            n,
            tau,
            profile,
            epsilon1,
            delta,
            gamma_ell,
            delta_ell,
            eta: delta_ell * nf.powf(-delta[0]),
            interval: (gamma_ell - half, gamma_ell + half),
            shift: delta_ell * nf.powf(-delta[2]),
            bump_width: delta_ell * nf.powf(-delta[3]),
            eta_tilde: delta_ell * nf.powf(-delta[4]),
            kappa: (ell as f64 / nf).powf(2.0 / 3.0),
        })
    }

    /// `f_E = f_{-3, E^+, bump_width}`.
    pub fn f_e(&self, e: f64) -> SmoothBump {
        SmoothBump { e1: -3.0, e2: e + self.shift, eta: self.bump_width }
    }

    /// `q = f_{l - 1/3, l + 1/3, 1/3}`.
    pub fn q(&self) -> SmoothBump {
        let l = self.ell as f64;
        SmoothBump { e1: l - 1.0 / 3.0, e2: l + 1.0 / 3.0, eta: 1.0 / 3.0 }
    }

    /// `f~ = f_{-kappa/2, kappa/2, kappa/2}`.
    pub fn f_tilde(&self) -> SmoothBump {
        SmoothBump { e1: -self.kappa / 2.0, e2: self.kappa / 2.0, eta: self.kappa / 2.0 }
    }
}

pub fn default_params(ell: usize, n: usize, tau: f64, profile: Profile) -> Result<RegularizationParams> {
    RegularizationParams::new(ell, n, tau, profile)
}

/// `x(E) = (eta/pi) sum_i p_hat_i / ((lambda_i - E)^2 + eta^2)`.
pub fn x_of_e(lambdas: &[f64], overlaps: &OverlapSet, params: &RegularizationParams, e: f64) -> Result<f64> {
    let ph = overlaps.p_hat()?;
    if ph.len() != lambdas.len() {
        return Err(Error::DimensionMismatch { expected: lambdas.len(), got: ph.len() });
    }
    Ok(x_spectral(lambdas, ph, params.eta, e))
}

fn x_spectral(lambdas: &[f64], p_hat: &[f64], eta: f64, e: f64) -> f64 {
    let s: f64 = lambdas.iter().zip(p_hat).map(|(&l, &p)| p / ((l - e) * (l - e) + eta * eta)).sum();
    s * eta / PI
}

/// `x(E)` from `G(E + i eta)` by direct solve, without an eigendecomposition.
pub fn x_of_e_resolvent<T: Scalar>(
    h: &Matrix<T>,
    set: &IndexSet,
    basis: &Basis,
    beta: u8,
    params: &RegularizationParams,
    e: f64,
) -> Result<f64> {
    let n = h.rows();
    basis.dim_ok(n)?;
    let c = clt_normalization(n, set.len(), beta)?;
    let z = C64::new(e, params.eta);
    let mut m = h.to_c64();
    m.add_diag(-z);
    let lu = Lu::factor(&m.adjoint())?;
    let frac = set.len() as f64 / n as f64;
    let mask = set.mask();
    let mut acc = 0.0;
    for a in 0..n {
        let q: Vec<C64> = basis.vector(a, n).into_iter().map(C64::from).collect();
        // ||G^* q||^2 = (G G^*)_{qq}
        let g = lu.solve(&q);
        let w: f64 = g.iter().map(|v| v.norm_sqr()).sum();
        acc += if mask[a] { (1.0 - frac) * w } else { -frac * w };
    }
    Ok(params.eta / PI * c * acc)
}

/// Moments `int_0^1 P(t) (t - 1/2)^n dt` for the series branch.
const SERIES_TERMS: usize = 40;

/// `SERIES_CUTS[k]` is the largest `r^2` for which `k + 1` terms reach 1e-16.
static SERIES_CUTS: std::sync::LazyLock<Vec<f64>> =
    std::sync::LazyLock::new(|| (1..=SERIES_TERMS).map(|k| 10f64.powf(-32.0 / k as f64)).collect());

struct RampPoly {
    coeffs: [f64; 6],
    moments: [f64; SERIES_TERMS],
}

impl RampPoly {
    fn new(coeffs: [f64; 6]) -> Self {
        let gl = GaussLegendre::new(30);
        let mut moments = [0.0; SERIES_TERMS];
        for (n, m) in moments.iter_mut().enumerate() {
            *m = gl.integrate(0.0, 1.0, |t| poly(&coeffs, t) * (t - 0.5).powi(n as i32));
        }
        RampPoly { coeffs, moments }
    }

    /// `int_0^1 P(t) / (g - t) dt` with `Im g != 0`.
    fn cauchy(&self, g: C64) -> C64 {
        let c = g - 0.5;
        let r2 = 0.25 / c.norm_sqr();
        if r2 <= 1.0 / 16.0 {
            let inv = 1.0 / c;
            // moments are bounded by 2^-n, so r^K bounds the tail
            let terms = SERIES_CUTS.iter().position(|&cut| r2 <= cut).map_or(SERIES_TERMS, |k| k + 1);
            let mut pw = inv;
            let mut s = C64::new(0.0, 0.0);
            for &m in &self.moments[..terms] {
                s += pw * m;
                pw *= inv;
            }
            s
        } else {
            // P(t) = P(g) + (t - g) Q(t)
            let d = self.coeffs.len() - 1;
            let mut b = [C64::new(0.0, 0.0); 6];
            b[d - 1] = C64::from(self.coeffs[d]);
            for j in (1..d).rev() {
                b[j - 1] = self.coeffs[j] + g * b[j];
            }
            let pg = self.coeffs[0] + g * b[0];
            let int_q: C64 = b[..d].iter().enumerate().map(|(j, &bj)| bj / (j as f64 + 1.0)).sum();
            pg * (g.ln() - (g - 1.0).ln()) - int_q
        }
    }
}

/// Helffer–Sjostrand evaluation of `y(E)` from the eigenvalues.
///
/// The `e`-integrals over the polynomial ramps of `f_E` are done in closed
/// form per eigenvalue; the `sigma`-integral uses Gauss–Legendre panels,
/// geometric on `[eta~, kappa/2]` and uniform on `[kappa/2, kappa]`.
pub struct HsEvaluator<'a> {
    lambdas: &'a [f64],
    params: RegularizationParams,
    cutoff: f64,
    /// `(sigma, weight, f~(sigma), f~'(sigma))` on the lower segment (f~ = 1).
    lower: Vec<(f64, f64)>,
    upper: Vec<(f64, f64, f64, f64)>,
    /// Left-ramp and `-3`-endpoint contributions, independent of `E`.
    left_lower: Vec<C64>,
    left_upper: Vec<(C64, C64, C64, C64)>,
    polys: [RampPoly; 6],
}

const LEFT_F: usize = 0;
const LEFT_D1: usize = 1;
const LEFT_D2: usize = 2;
const RIGHT_F: usize = 3;
const RIGHT_D1: usize = 4;
const RIGHT_D2: usize = 5;

impl<'a> HsEvaluator<'a> {
    /// `level >= 1` controls the number of sigma panels; `cutoff` replaces
    /// `eta~` when given (zero recovers the full integral).
    pub fn new(lambdas: &'a [f64], params: &RegularizationParams, level: usize, cutoff: Option<f64>) -> Self {
        let kappa = params.kappa;
        let w = params.bump_width;
        let cutoff = cutoff.unwrap_or(params.eta_tilde).max(1e-9 * w.min(kappa));
        let gl = GaussLegendre::new(6);
        let level = level.max(1);
        let mut lower = Vec::new();
        let half = kappa / 2.0;
        if cutoff < half {
            let decades = (half / cutoff).log2();
            let panels = ((decades.ceil() as usize).max(1)) * level;
            let ratio = (half / cutoff).powf(1.0 / panels as f64);
            let mut lo = cutoff;
            for _ in 0..panels {
                let hi = lo * ratio;
                lower.extend(gl.mapped(lo, hi.min(half)));
                lo = hi;
            }
        }
        let ft = params.f_tilde();
        let mut upper = Vec::new();
        let start = cutoff.max(half);
        let panels = 2 * level;
        let width = (kappa - start) / panels as f64;
        for p in 0..panels {
            let lo = start + p as f64 * width;
            for (s, wt) in gl.mapped(lo, lo + width) {
                upper.push((s, wt, ft.eval(s), ft.d1(s)));
            }
        }
        let polys = [
            RampPoly::new(STEP),
            RampPoly::new(STEP_D1),
            RampPoly::new(STEP_D2),
            RampPoly::new(reflect(&STEP)),
            RampPoly::new(reflect(&STEP_D1)),
            RampPoly::new(reflect(&STEP_D2)),
        ];
        let mut ev = HsEvaluator {
            lambdas,
            params: params.clone(),
            cutoff,
            lower,
            upper,
            left_lower: Vec::new(),
            left_upper: Vec::new(),
            polys,
        };
        let a = -3.0 - w;
        ev.left_lower = ev.lower.iter().map(|&(s, _)| ev.ramp_sum(a, s, &[LEFT_D2])[0]).collect();
        ev.left_upper = ev
            .upper
            .iter()
            .map(|&(s, ..)| {
                let r = ev.ramp_sum(a, s, &[LEFT_F, LEFT_D1, LEFT_D2]);
                let lg: C64 = ev.lambdas.iter().map(|&l| C64::new(l + 3.0, -s).ln()).sum();
                (r[0], r[1], r[2], lg)
            })
            .collect();
        ev
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn sigma_nodes(&self) -> usize {
        self.lower.len() + self.upper.len()
    }

    /// `sum_i int_0^1 P(t) / (gamma_i - t) dt` for a ramp starting at `a`.
    fn ramp_sum(&self, a: f64, sigma: f64, which: &[usize]) -> Vec<C64> {
        let w = self.params.bump_width;
        let mut out = vec![C64::new(0.0, 0.0); which.len()];
        for &l in self.lambdas {
            let g = C64::new((l - a) / w, -sigma / w);
            for (o, &k) in out.iter_mut().zip(which) {
                *o += self.polys[k].cauchy(g);
            }
        }
        out
    }

    pub fn eval(&self, e: f64) -> f64 {
        let w = self.params.bump_width;
        let ep = e + self.params.shift;
        let mut total = C64::new(0.0, 0.0);
        // f'' term, f~ = 1
        for (k, &(s, wt)) in self.lower.iter().enumerate() {
            let right = self.ramp_sum(ep, s, &[RIGHT_D2])[0];
            let f2 = (self.left_lower[k] + right) / (w * w);
            total += C64::new(0.0, s) * f2 * wt;
        }
        for (k, &(s, wt, ft, dft)) in self.upper.iter().enumerate() {
            let r = self.ramp_sum(ep, s, &[RIGHT_F, RIGHT_D1, RIGHT_D2]);
            let (lf, l1, l2, lg) = self.left_upper[k];
            let f2 = (l2 + r[2]) / (w * w);
            let f1 = (l1 - r[1]) / w;
            let plateau = lg - self.lambdas.iter().map(|&l| C64::new(l - ep, -s).ln()).sum::<C64>();
            let f0 = lf + plateau + r[0];
            total += (C64::new(0.0, s) * ft * f2 + C64::new(0.0, dft) * f0 - s * dft * f1) * wt;
        }
        total.re / PI
    }
}

/// `Tr f_E(H)` evaluated directly on the spectrum.
pub fn trace_f_e(lambdas: &[f64], params: &RegularizationParams, e: f64) -> f64 {
    let f = params.f_e(e);
    lambdas.iter().map(|&l| f.eval(l)).sum()
}

pub const HS_TOLERANCE: f64 = 1e-6;
const HS_MAX_LEVEL: usize = 6;

/// Smallest sigma-refinement level whose value agrees with the next level.
pub fn calibrate_level(lambdas: &[f64], params: &RegularizationParams, probes: &[f64]) -> Result<usize> {
    let mut prev = HsEvaluator::new(lambdas, params, 1, None);
    for level in 1..HS_MAX_LEVEL {
        let next = HsEvaluator::new(lambdas, params, level + 1, None);
        let worst = probes.iter().map(|&e| (prev.eval(e) - next.eval(e)).abs()).fold(0.0, f64::max);
        if worst < HS_TOLERANCE {
            return Ok(level);
        }
        prev = next;
    }
    Err(Error::Quadrature(format!("y(E) did not settle within {HS_MAX_LEVEL} refinement levels")))
}

/// `y(E)` with refinement until two successive levels agree.
pub fn y_of_e(lambdas: &[f64], params: &RegularizationParams, e: f64) -> Result<f64> {
    let level = calibrate_level(lambdas, params, &[e])?;
    Ok(HsEvaluator::new(lambdas, params, level, None).eval(e))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VEll {
    pub value: f64,
    pub error_estimate: f64,
    pub nodes: usize,
    pub hs_level: usize,
}

pub const V_MIN_NODES: usize = 200;

/// `v_l = int_{I_l} x(E) q(y_E) dE`.
pub fn v_ell(lambdas: &[f64], overlaps: &OverlapSet, params: &RegularizationParams) -> Result<VEll> {
    let ph = overlaps.p_hat()?;
    if ph.len() != lambdas.len() {
        return Err(Error::DimensionMismatch { expected: lambdas.len(), got: ph.len() });
    }
    let (lo, hi) = params.interval;
    let level = calibrate_level(lambdas, params, &[lo, params.gamma_ell, hi])?;
    let hs = HsEvaluator::new(lambdas, params, level, None);
    let q = params.q();
    let rule = GaussLegendre::new(8);
    let panels = V_MIN_NODES.div_ceil(rule.len());
    let out = adaptive(&rule, lo, hi, 1e-7, 1e-9, panels, 100_000, |e: f64| {
        let x = x_spectral(lambdas, ph, params.eta, e);
        if x == 0.0 {
            return 0.0;
        }
        let qv = q.eval(hs.eval(e));
        if qv == 0.0 {
            0.0
        } else {
            x * qv
        }
    })?;
    Ok(VEll { value: out.value, error_estimate: out.error_estimate, nodes: out.evaluations, hs_level: level })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_matches_composition() {
        let r = reflect(&STEP);
        for t in [0.0, 0.3, 0.8, 1.0] {
            assert!((poly(&r, t) - poly(&STEP, 1.0 - t)).abs() < 1e-13);
        }
    }

    #[test]
    fn cauchy_branches_agree() {
        let p = RampPoly::new(STEP_D2);
        // evaluate both formulas where each is valid
        for g in [C64::new(2.6, -0.3), C64::new(-1.9, -0.01), C64::new(0.5, -2.1)] {
            let series = p.cauchy(g);
            let gl = GaussLegendre::new(40);
            let direct: C64 = gl.integrate(0.0, 1.0, |t| poly(&STEP_D2, t) / (g - t));
            assert!((series - direct).norm() < 1e-10, "{g}: {series} vs {direct}");
        }
        let g = C64::new(0.4, -1e-3);
        let exact = p.cauchy(g);
        let fine: C64 = adaptive(&GaussLegendre::new(10), 0.0, 1.0, 1e-13, 1e-13, 8, 100_000, |t: f64| {
            poly(&STEP_D2, t) / (g - t)
        })
        .unwrap()
        .value;
        assert!((exact - fine).norm() < 1e-9);
    }

    #[test]
    fn bump_basics() {
        let f = SmoothBump::new(0.0, 1.0, 0.1).unwrap();
        assert_eq!(f.eval(0.5), 1.0);
        assert_eq!(f.eval(1.2), 0.0);
        assert!((f.eval(-0.05) - 0.5).abs() < 1e-12);
        assert!(SmoothBump::new(1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn paper_profile_exponents() {
        let p = RegularizationParams::new(1, 1000, 0.2, Profile::Paper { eps0: 0.1, c0: 1.0 }).unwrap();
        assert!((p.epsilon1.unwrap() - 2e-5).abs() < 1e-18);
        assert!((p.delta[0] - 4e-5).abs() < 1e-18);
        assert!(p.eta > 0.0);
    }

    #[test]
    fn two_by_two_overlap() {
        let set = IndexSet::new(2, vec![0]).unwrap();
        let p = overlap_of(&[1.0, 0.0], &set, &Basis::Standard).unwrap();
        assert_eq!(p, 0.5);
    }
}
