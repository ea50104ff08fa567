//! Symmetric / Hermitian eigensolver: Householder tridiagonalisation followed by
//! implicit QL with Wilkinson shifts.
//!
//! Eigenvalues are returned in ascending order. Each eigenvector is rotated so
//! that its first coordinate of modulus above `1e-12` is real and positive.

use serde::{Deserialize, Serialize};

use crate::ensembles::{SampleTag, WignerMatrix, WignerSample};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Matrix, Scalar, C64};

pub const MAX_QL_ITERATIONS: usize = 60;
const SIGN_THRESHOLD: f64 = 1e-12;

/// Full eigendecomposition. Row `i` of `vectors` is the eigenvector `u_i`.
#[derive(Clone, Debug)]
pub struct Spectrum<T> {
    lambdas: Vec<f64>,
    vectors: Matrix<T>,
    pub tag: Option<SampleTag>,
}

impl<T: Scalar> Spectrum<T> {
    /// Builds a spectrum from explicit eigenpairs (rows of `vectors`).
    pub fn from_parts(lambdas: Vec<f64>, vectors: Matrix<T>) -> Result<Self> {
        if vectors.rows() != lambdas.len() || vectors.cols() != lambdas.len() {
            return Err(Error::DimensionMismatch { expected: lambdas.len(), got: vectors.rows() });
        }
        Ok(Spectrum { lambdas, vectors, tag: None })
    }

    pub fn n(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn lambda(&self, i: usize) -> f64 {
        self.lambdas[i]
    }

    pub fn vector(&self, i: usize) -> &[T] {
        self.vectors.row(i)
    }

    pub fn vectors(&self) -> &Matrix<T> {
        &self.vectors
    }

    /// Coefficients `u_i^* x` for every eigenvector.
    pub fn project(&self, x: &[T]) -> Vec<T> {
        (0..self.n()).map(|i| dot(self.vector(i), x)).collect()
    }

    /// `U diag(lambda) U^*`.
    pub fn reconstruct(&self) -> Matrix<T> {
        let n = self.n();
        let mut out = Matrix::zeros(n, n);
        for k in 0..n {
            let u = self.vector(k);
            let l = self.lambdas[k];
            for i in 0..n {
                let a = u[i].scale(l);
                let row = out.row_mut(i);
                for j in 0..n {
                    row[j] += a * u[j].conj();
                }
            }
        }
        out
    }

    /// Largest entry of `U^* U - I`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.n();
        let mut worst = 0.0f64;
        for i in 0..n {
            for j in i..n {
                let g = dot(self.vector(i), self.vector(j));
                let t = if i == j { g - T::one() } else { g };
                worst = worst.max(t.abs());
            }
        }
        worst
    }
}

/// Eigenvalues plus a subset of eigenvectors.
#[derive(Clone, Debug)]
pub struct SelectedSpectrum<T> {
    pub lambdas: Vec<f64>,
    /// `(index, eigenvector)` pairs, 0-based indices into `lambdas`.
    pub vectors: Vec<(usize, Vec<T>)>,
}

impl<T> SelectedSpectrum<T> {
    pub fn vector(&self, index: usize) -> Option<&[T]> {
        self.vectors.iter().find(|(i, _)| *i == index).map(|(_, v)| v.as_slice())
    }
}

struct Reflector<T> {
    start: usize,
    v: Vec<T>,
    tau: f64,
}

/// `H = (Q D) T (Q D)^*` with `T` real symmetric tridiagonal.
struct Reduction<T> {
    d: Vec<f64>,
    /// `e[i]` couples `i` and `i + 1`; the last entry is zero.
    e: Vec<f64>,
    reflectors: Vec<Reflector<T>>,
    phases: Vec<T>,
}

fn validate<T: Scalar>(h: &Matrix<T>) -> Result<()> {
    if !h.is_square() {
        return Err(Error::NotSquare { rows: h.rows(), cols: h.cols() });
    }
    if h.rows() == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    h.check_finite()?;
    let defect = h.self_adjoint_defect();
    if defect > 1e-12 * h.max_abs().max(1.0) {
        return Err(Error::NotSelfAdjoint(defect));
    }
    Ok(())
}

fn reduce<T: Scalar>(h: &Matrix<T>) -> Reduction<T> {
    let n = h.rows();
    let mut a = h.clone();
    let mut d = vec![0.0; n];
    let mut off = vec![T::zero(); n.saturating_sub(1)];
    let mut reflectors = Vec::with_capacity(n.saturating_sub(2));
    let mut p = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    let mut vc = vec![T::zero(); n];
    for k in 0..n.saturating_sub(1) {
        d[k] = a[(k, k)].re();
        let m = n - k - 1;
        // column k below the diagonal; only the lower triangle is kept current
        let mut v: Vec<T> = (k + 1..n).map(|i| a[(i, k)]).collect();
        if m == 1 {
            off[k] = v[0];
            continue;
        }
        let xnorm = norm(&v);
        if xnorm == 0.0 {
            continue;
        }
        let x0 = v[0];
        let alpha = -(x0.phase().scale(xnorm));
        let vnorm2 = 2.0 * xnorm * xnorm + 2.0 * x0.abs() * xnorm;
        v[0] -= alpha;
        let tau = 2.0 / vnorm2;
        off[k] = alpha;
        let s = k + 1;
        for j in 0..m {
            vc[j] = v[j].conj();
        }
        // p = tau B v on the lower triangle, symmetric accumulation
        for pi in p[..m].iter_mut() {
            *pi = T::zero();
        }
        for i in 0..m {
            let row = &a.row(s + i)[s..s + i + 1];
            let vi = v[i];
            let mut acc = T::zero();
            for j in 0..i {
                acc += row[j] * v[j];
                p[j] += row[j].conj() * vi;
            }
            acc += row[i] * vi;
            p[i] += acc;
        }
        for pi in p[..m].iter_mut() {
            *pi = pi.scale(tau);
        }
        let kk = dot(&v, &p[..m]).re() * 0.5 * tau;
        for j in 0..m {
            w[j] = p[j] - v[j].scale(kk);
        }
        let wc: Vec<T> = w[..m].iter().map(|x| x.conj()).collect();
        for i in 0..m {
            let vi = v[i];
            let wi = w[i];
            let row = &mut a.row_mut(s + i)[s..s + i + 1];
            for j in 0..=i {
                row[j] -= vi * wc[j] + wi * vc[j];
            }
        }
        reflectors.push(Reflector { start: s, v, tau });
    }
    d[n - 1] = a[(n - 1, n - 1)].re();
    let mut phases = vec![T::one(); n];
    let mut e = vec![0.0; n];
    for j in 0..n.saturating_sub(1) {
        phases[j + 1] = phases[j] * off[j].phase();
        e[j] = off[j].abs();
    }
    Reduction { d, e, reflectors, phases }
}

impl<T: Scalar> Reduction<T> {
    /// Rows are the columns of `Q D`.
    fn basis_rows(&self) -> Matrix<T> {
        let n = self.d.len();
        let mut q = Matrix::<T>::identity(n);
        let mut acc = vec![T::zero(); n];
        for r in self.reflectors.iter().rev() {
            let s = r.start;
            let m = n - s;
            for a in acc[..m].iter_mut() {
                *a = T::zero();
            }
            for i in 0..m {
                let cv = r.v[i].conj();
                let row = &q.row(s + i)[s..];
                for j in 0..m {
                    acc[j] += cv * row[j];
                }
            }
            for i in 0..m {
                let f = r.v[i].scale(r.tau);
                let row = &mut q.row_mut(s + i)[s..];
                for j in 0..m {
                    row[j] -= f * acc[j];
                }
            }
        }
        let mut vt = q.transpose();
        for j in 0..n {
            let ph = self.phases[j];
            for x in vt.row_mut(j) {
                *x = *x * ph;
            }
        }
        vt
    }

    /// `Q D z`.
    fn apply(&self, z: &[f64]) -> Vec<T> {
        let mut y: Vec<T> = z.iter().zip(&self.phases).map(|(&x, &p)| p.scale(x)).collect();
        for r in self.reflectors.iter().rev() {
            let s = r.start;
            let c = dot(&r.v, &y[s..]).scale(r.tau);
            for (yi, &vi) in y[s..].iter_mut().zip(&r.v) {
                *yi -= vi * c;
            }
        }
        y
    }
}

/// Implicit QL on a symmetric tridiagonal matrix; rotations are applied to
/// the rows of `vt` when given.
fn tql<T: Scalar>(d: &mut [f64], e: &mut [f64], mut vt: Option<&mut Matrix<T>>) -> Result<()> {
    let n = d.len();
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            if iter == MAX_QL_ITERATIONS {
                return Err(Error::NonConvergence { index: l, iterations: iter });
            }
            iter += 1;
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0f64, 1.0f64, 0.0f64);
            let mut i = m;
            let mut deflated = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(v) = vt.as_deref_mut() {
                    let (ri, rj) = v.two_rows_mut(i, i + 1);
                    for (a, b) in ri.iter_mut().zip(rj.iter_mut()) {
                        let f = *b;
                        *b = a.scale(s) + f.scale(c);
                        *a = a.scale(c) - f.scale(s);
                    }
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

fn normalize_sign<T: Scalar>(u: &mut [T]) {
    if let Some(&x) = u.iter().find(|x| x.abs() > SIGN_THRESHOLD) {
        let ph = x.phase().conj();
        if ph != T::one() {
            for v in u.iter_mut() {
                *v = *v * ph;
            }
        }
    }
}

fn sorted_order(d: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    idx
}

/// Full eigendecomposition of a real symmetric or complex Hermitian matrix.
pub fn eig_sym<T: Scalar>(h: &Matrix<T>) -> Result<Spectrum<T>> {
    validate(h)?;
    let red = reduce(h);
    let mut vt = red.basis_rows();
    let (mut d, mut e) = (red.d, red.e);
    tql(&mut d, &mut e, Some(&mut vt))?;
    let order = sorted_order(&d);
    let n = d.len();
    let mut vectors = Matrix::zeros(n, n);
    let mut lambdas = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        lambdas.push(d[src]);
        let row = vectors.row_mut(dst);
        row.copy_from_slice(vt.row(src));
        normalize_sign(row);
    }
    Ok(Spectrum { lambdas, vectors, tag: None })
}

/// Eigenvalues only, ascending.
pub fn eigvals_sym<T: Scalar>(h: &Matrix<T>) -> Result<Vec<f64>> {
    validate(h)?;
    let red = reduce(h);
    let (mut d, mut e) = (red.d, red.e);
    tql::<T>(&mut d, &mut e, None)?;
    d.sort_by(|a, b| a.total_cmp(b));
    Ok(d)
}

/// All eigenvalues and the eigenvectors at the given 0-based indices.
///
/// Vectors come from inverse iteration on the tridiagonal form; if the
/// residual check fails the full solver is used instead.
pub fn eig_selected<T: Scalar>(h: &Matrix<T>, indices: &[usize]) -> Result<SelectedSpectrum<T>> {
    validate(h)?;
    let n = h.rows();
    if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad + 1, n });
    }
    let red = reduce(h);
    let mut d = red.d.clone();
    let mut e = red.e.clone();
    tql::<T>(&mut d, &mut e, None)?;
    d.sort_by(|a, b| a.total_cmp(b));
    let scale = d[0].abs().max(d[n - 1].abs()).max(1.0);
    let mut vectors = Vec::with_capacity(indices.len());
    for &idx in indices {
        let z = inverse_iteration(&red.d, &red.e, d[idx], scale);
        let mut u = red.apply(&z);
        let hu = h.matvec(&u);
        let resid: f64 = hu
            .iter()
            .zip(&u)
            .map(|(&a, &b)| (a - b.scale(d[idx])).abs2())
            .sum::<f64>()
            .sqrt();
        if !(resid <= 1e-10 * scale) || !gap_ok(&d, idx, scale) {
            let full = eig_sym(h)?;
            return Ok(SelectedSpectrum {
                lambdas: full.lambdas.clone(),
                vectors: indices.iter().map(|&i| (i, full.vector(i).to_vec())).collect(),
            });
        }
        normalize_sign(&mut u);
        vectors.push((idx, u));
    }
    Ok(SelectedSpectrum { lambdas: d, vectors })
}

// Inverse iteration cannot separate eigenvalues closer than roundoff.
fn gap_ok(d: &[f64], idx: usize, scale: f64) -> bool {
    let tol = 1e-9 * scale;
    (idx == 0 || d[idx] - d[idx - 1] > tol) && (idx + 1 == d.len() || d[idx + 1] - d[idx] > tol)
}

/// Eigenvector of the tridiagonal `(d, e)` for eigenvalue `lambda`.
fn inverse_iteration(d: &[f64], e: &[f64], lambda: f64, scale: f64) -> Vec<f64> {
    let n = d.len();
    if n == 1 {
        return vec![1.0];
    }
    let mut x: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.7548776662).fract()).collect();
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let tiny = f64::EPSILON * scale;
    for _ in 0..3 {
        let mut dl: Vec<f64> = e[..n - 1].to_vec();
        let mut du: Vec<f64> = e[..n - 1].to_vec();
        let mut dd: Vec<f64> = d.iter().map(|&v| v - lambda).collect();
        tridiagonal_solve(&mut dl, &mut dd, &mut du, &mut x, tiny);
        let nx = norm(&x);
        x.iter_mut().for_each(|v| *v /= nx);
    }
    x
}

/// Gaussian elimination with partial pivoting for a tridiagonal system.
/// Zero pivots are replaced by `tiny`. On return `b` holds the solution.
fn tridiagonal_solve(dl: &mut [f64], d: &mut [f64], du: &mut [f64], b: &mut [f64], tiny: f64) {
    let n = d.len();
    let mut du2 = vec![0.0; n.saturating_sub(2)];
    for i in 0..n - 1 {
        if d[i].abs() >= dl[i].abs() {
            if d[i] == 0.0 {
                d[i] = tiny;
            }
            let fact = dl[i] / d[i];
            d[i + 1] -= fact * du[i];
            b[i + 1] -= fact * b[i];
        } else {
            let fact = d[i] / dl[i];
            d[i] = dl[i];
            let temp = d[i + 1];
            d[i + 1] = du[i] - fact * temp;
            if i + 2 < n {
                du2[i] = du[i + 1];
                du[i + 1] = -fact * du2[i];
            }
            du[i] = temp;
            let tb = b[i];
            b[i] = b[i + 1];
            b[i + 1] = tb - fact * b[i + 1];
        }
    }
    if d[n - 1] == 0.0 {
        d[n - 1] = tiny;
    }
    b[n - 1] /= d[n - 1];
    b[n - 2] = (b[n - 2] - du[n - 2] * b[n - 1]) / d[n - 2];
    for i in (0..n.saturating_sub(2)).rev() {
        b[i] = (b[i] - du[i] * b[i + 1] - du2[i] * b[i + 2]) / d[i];
    }
}

/// Position of an eigenvalue counted from one spectral edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeSpec {
    /// `k`-th smallest.
    Bottom(usize),
    /// `k`-th largest.
    Top(usize),
}

/// 1-based index `l` in ascending order.
pub fn resolve_edge_index(edge: EdgeSpec, n: usize) -> Result<usize> {
    match edge {
        EdgeSpec::Bottom(k) if k >= 1 && k <= n => Ok(k),
        EdgeSpec::Top(k) if k >= 1 && k <= n => Ok(n + 1 - k),
        EdgeSpec::Bottom(k) | EdgeSpec::Top(k) => Err(Error::IndexOutOfRange { index: k, n }),
    }
}

/// `l <= N^{1-tau}` or `l >= N - N^{1-tau}`.
pub fn is_edge_regime(l: usize, n: usize, tau: f64) -> bool {
    let w = (n as f64).powf(1.0 - tau);
    (l as f64) <= w || (l as f64) >= n as f64 - w
}

/// Spectrum of a sampled Wigner matrix.
pub enum WignerSpectrum {
    Real(Spectrum<f64>),
    Complex(Spectrum<C64>),
}

impl WignerSpectrum {
    pub fn lambdas(&self) -> &[f64] {
        match self {
            WignerSpectrum::Real(s) => s.lambdas(),
            WignerSpectrum::Complex(s) => s.lambdas(),
        }
    }
}

pub fn eig_wigner(sample: &WignerSample) -> Result<WignerSpectrum> {
    let tag = Some(sample.tag);
    Ok(match &sample.matrix {
        WignerMatrix::Real(h) => {
            let mut s = eig_sym(h)?;
            s.tag = tag;
            WignerSpectrum::Real(s)
        }
        WignerMatrix::Complex(h) => {
            let mut s = eig_sym(h)?;
            s.tag = tag;
            WignerSpectrum::Complex(s)
        }
    })
}

pub fn eigvals_wigner(matrix: &WignerMatrix) -> Result<Vec<f64>> {
    match matrix {
        WignerMatrix::Real(h) => eigvals_sym(h),
        WignerMatrix::Complex(h) => eigvals_sym(h),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_matrix() {
        let h = Matrix::diag(&[3.0, -1.0, 2.0]);
        let s = eig_sym(&h).unwrap();
        assert_eq!(s.lambdas(), &[-1.0, 2.0, 3.0]);
        assert_eq!(s.vector(0), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_by_two() {
        let h = Matrix::from_vec(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let s = eig_sym(&h).unwrap();
        assert!((s.lambda(0) + 1.0).abs() < 1e-15 && (s.lambda(1) - 1.0).abs() < 1e-15);
        let r = 0.5f64.sqrt();
        assert!((s.vector(0)[0] - r).abs() < 1e-15 && (s.vector(0)[1] + r).abs() < 1e-15);
    }

    #[test]
    fn rejects_asymmetric() {
        let h = Matrix::from_vec(2, 2, vec![0.0, 1.0, 0.5, 0.0]).unwrap();
        assert!(matches!(eig_sym(&h), Err(Error::NotSelfAdjoint(_))));
    }

    #[test]
    fn rejects_nan() {
        let h = Matrix::from_vec(2, 2, vec![f64::NAN, 0.0, 0.0, 1.0]).unwrap();
        assert!(matches!(eig_sym(&h), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn edge_indices() {
        assert_eq!(resolve_edge_index(EdgeSpec::Top(1), 500).unwrap(), 500);
        assert_eq!(resolve_edge_index(EdgeSpec::Bottom(300), 500).unwrap(), 300);
        assert!(!is_edge_regime(300, 500, 0.2));
        assert!(is_edge_regime(500, 500, 0.2));
        assert!(resolve_edge_index(EdgeSpec::Top(0), 5).is_err());
    }

    #[test]
    fn tridiagonal_solver_matches_dense() {
        let d = [2.0, -1.0, 0.5, 3.0, 0.1];
        let e = [1.0, 2.0, -0.7, 0.3];
        let b = [1.0, 2.0, 3.0, 4.0, 5.0];
        let mut x = b.to_vec();
        tridiagonal_solve(&mut e.to_vec(), &mut d.to_vec(), &mut e.to_vec(), &mut x, 1e-300);
        for i in 0..5 {
            let mut s = d[i] * x[i];
            if i > 0 {
                s += e[i - 1] * x[i - 1];
            }
            if i < 4 {
                s += e[i] * x[i + 1];
            }
            assert!((s - b[i]).abs() < 1e-12);
        }
    }
}
