//! Resolvents `G(z) = (H - z)^{-1}`, minors, and the identities they satisfy.

use crate::eigensolve::Spectrum;
use crate::error::{Error, Result};
use crate::linalg::{dot, Lu, Matrix, Scalar, C64};
use crate::semicircle::{m_sc, psi};

#[derive(Clone, Debug)]
pub struct ResolventBundle {
    pub z: C64,
    pub g: Matrix<C64>,
    /// `(1/N) Tr G`.
    pub m_n: C64,
}

fn check_z(z: C64) -> Result<()> {
    if z.im == 0.0 || !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::OnRealAxis(format!("{z}")));
    }
    Ok(())
}

/// `G = sum_i u_i u_i^* / (lambda_i - z)`.
pub fn resolvent_from_spectrum<T: Scalar>(spec: &Spectrum<T>, z: C64) -> Result<ResolventBundle> {
    check_z(z)?;
    let n = spec.n();
    let mut g = Matrix::<C64>::zeros(n, n);
    let mut u = vec![C64::new(0.0, 0.0); n];
    for k in 0..n {
        let w = 1.0 / (spec.lambda(k) - z);
        for (dst, &src) in u.iter_mut().zip(spec.vector(k)) {
            *dst = src.to_c64();
        }
        for i in 0..n {
            let a = u[i] * w;
            let row = g.row_mut(i);
            for j in 0..n {
                row[j] += a * u[j].conj();
            }
        }
    }
    let m_n = g.trace() / n as f64;
    Ok(ResolventBundle { z, g, m_n })
}

/// `G` by LU factorisation of `H - z`.
pub fn resolvent_direct<T: Scalar>(h: &Matrix<T>, z: C64) -> Result<ResolventBundle> {
    check_z(z)?;
    let mut m = h.to_c64();
    m.add_diag(-z);
    let g = Lu::factor(&m)?.inverse();
    let m_n = g.trace() / h.rows() as f64;
    Ok(ResolventBundle { z, g, m_n })
}

/// Normalised trace `(1/N) sum_i 1/(lambda_i - z)`.
pub fn stieltjes_trace(lambdas: &[f64], z: C64) -> Result<C64> {
    check_z(z)?;
    let s: C64 = lambdas.iter().map(|&l| 1.0 / (l - z)).sum();
    Ok(s / lambdas.len() as f64)
}

/// Coefficients of a fixed vector in an eigenbasis, reused across many `z`.
#[derive(Clone, Debug)]
pub struct Projection {
    coeffs: Vec<C64>,
}

impl Projection {
    pub fn new<T: Scalar>(spec: &Spectrum<T>, x: &[T]) -> Result<Self> {
        if x.len() != spec.n() {
            return Err(Error::DimensionMismatch { expected: spec.n(), got: x.len() });
        }
        Ok(Projection { coeffs: spec.project(x).into_iter().map(|c| c.to_c64()).collect() })
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }
}

/// `x^* f(H) y = sum_i conj(a_i) b_i f(lambda_i)` for projections `a`, `b`.
pub fn spectral_form(lambdas: &[f64], x: &Projection, y: &Projection, f: impl Fn(f64) -> C64) -> C64 {
    lambdas
        .iter()
        .zip(x.coeffs.iter().zip(&y.coeffs))
        .map(|(&l, (a, b))| a.conj() * b * f(l))
        .sum()
}

/// `<x, G(z) y>`.
pub fn iso_entry(lambdas: &[f64], x: &Projection, y: &Projection, z: C64) -> Result<C64> {
    check_z(z)?;
    Ok(spectral_form(lambdas, x, y, |l| 1.0 / (l - z)))
}

/// `|<x, G y> - <x, y> m_sc(z)| / Psi(z)`.
pub fn iso_residual<T: Scalar>(spec: &Spectrum<T>, x: &[T], y: &[T], z: C64) -> Result<f64> {
    let px = Projection::new(spec, x)?;
    let py = Projection::new(spec, y)?;
    let xy = dot(x, y).to_c64();
    iso_residual_projected(spec.lambdas(), &px, &py, xy, z)
}

pub fn iso_residual_projected(lambdas: &[f64], x: &Projection, y: &Projection, xy: C64, z: C64) -> Result<f64> {
    let g = iso_entry(lambdas, x, y, z)?;
    let m = m_sc(z)?;
    Ok((g - xy * m).norm() / psi(z, lambdas.len())?)
}

/// `prod_j G(z_j) y` as a vector (resolvents of one matrix commute).
pub fn resolvent_chain_apply<T: Scalar>(spec: &Spectrum<T>, y: &Projection, zs: &[C64]) -> Result<Vec<C64>> {
    for &z in zs {
        check_z(z)?;
    }
    let n = spec.n();
    let mut out = vec![C64::new(0.0, 0.0); n];
    for k in 0..n {
        let l = spec.lambda(k);
        let mut w = y.coeffs[k];
        for &z in zs {
            w /= l - z;
        }
        for (o, &u) in out.iter_mut().zip(spec.vector(k)) {
            *o += u.to_c64() * w;
        }
    }
    Ok(out)
}

/// Resolvent of the matrix with row and column `a` set to zero.
///
/// Entries with exactly one index equal to `a` vanish and the `(a, a)` entry
/// is `-1/z`.
pub fn minor_resolvent<T: Scalar>(h: &Matrix<T>, a: usize, z: C64) -> Result<Matrix<C64>> {
    check_z(z)?;
    let n = h.rows();
    if !h.is_square() {
        return Err(Error::NotSquare { rows: h.rows(), cols: h.cols() });
    }
    if a >= n {
        return Err(Error::IndexOutOfRange { index: a + 1, n });
    }
    let mut out = Matrix::<C64>::zeros(n, n);
    out[(a, a)] = -1.0 / z;
    if n == 1 {
        return Ok(out);
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != a).collect();
    let mut sub = Matrix::<C64>::from_fn(n - 1, n - 1, |i, j| h[(keep[i], keep[j])].to_c64());
    sub.add_diag(-z);
    let inv = Lu::factor(&sub)?.inverse();
    for (i, &ki) in keep.iter().enumerate() {
        for (j, &kj) in keep.iter().enumerate() {
            out[(ki, kj)] = inv[(i, j)];
        }
    }
    Ok(out)
}

/// `H` with the `(a, b)` and `(b, a)` entries removed.
pub fn remove_pair<T: Scalar>(h: &Matrix<T>, a: usize, b: usize) -> Matrix<T> {
    let mut q = h.clone();
    q[(a, b)] = T::zero();
    q[(b, a)] = T::zero();
    q
}

/// Largest discrepancies in the three Schur-complement identities relating
/// `R = (Q - z)^{-1}` to its minor `R^{(a)}`, where `Q` is `H` without the
/// `(a, b)` pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SchurCheck {
    pub diagonal: f64,
    pub off_diagonal: f64,
    pub bulk: f64,
}

impl SchurCheck {
    pub fn max(&self) -> f64 {
        self.diagonal.max(self.off_diagonal).max(self.bulk)
    }
}

pub fn schur_identity_check<T: Scalar>(h: &Matrix<T>, a: usize, b: usize, z: C64) -> Result<SchurCheck> {
    let n = h.rows();
    if a >= n || b >= n {
        return Err(Error::IndexOutOfRange { index: a.max(b) + 1, n });
    }
    let q = remove_pair(h, a, b).to_c64();
    let r = resolvent_direct(&q, z)?.g;
    let ra = minor_resolvent(&q, a, z)?;
    let others: Vec<usize> = (0..n).filter(|&i| i != a).collect();
    let row_a: Vec<C64> = (0..n).map(|j| q[(a, j)]).collect();

    // R_aa = 1 / (q_aa - z - sum_{r,s != a} q_ar R^{(a)}_rs q_sa)
    let mut quad = C64::new(0.0, 0.0);
    for &r_ in &others {
        for &s_ in &others {
            quad += row_a[r_] * ra[(r_, s_)] * row_a[s_].conj();
        }
    }
    let raa = 1.0 / (q[(a, a)] - z - quad);
    let diagonal = (raa - r[(a, a)]).norm();

    // t_i = sum_{r != a} R^{(a)}_ir q_ra
    let t: Vec<C64> = (0..n).map(|i| others.iter().map(|&r_| ra[(i, r_)] * q[(r_, a)]).sum()).collect();
    // u_j = sum_{s != a} q_as R^{(a)}_sj
    let u: Vec<C64> = (0..n).map(|j| others.iter().map(|&s_| row_a[s_] * ra[(s_, j)]).sum()).collect();

    let mut off_diagonal = 0.0f64;
    let mut bulk = 0.0f64;
    for &i in &others {
        off_diagonal = off_diagonal.max((r[(i, a)] + r[(a, a)] * t[i]).norm());
        off_diagonal = off_diagonal.max((r[(a, i)] + r[(a, a)] * u[i]).norm());
        for &j in &others {
            let pred = ra[(i, j)] + r[(a, a)] * t[i] * u[j];
            bulk = bulk.max((pred - r[(i, j)]).norm());
        }
    }
    Ok(SchurCheck { diagonal, off_diagonal, bulk })
}

/// Resolvent expansion `G = R - RUR + RURUR - RURURUR + (RU)^4 G` with
/// `U = H - Q` carrying only the `(a, b)` pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExpansionCheck {
    /// Largest entry of the identity's defect (roundoff only).
    pub identity_defect: f64,
    /// Largest entry of `(RU)^4 G`, the part left after the third-order truncation.
    pub remainder: f64,
}

pub fn expansion_check<T: Scalar>(h: &Matrix<T>, a: usize, b: usize, z: C64) -> Result<ExpansionCheck> {
    let n = h.rows();
    if a >= n || b >= n {
        return Err(Error::IndexOutOfRange { index: a.max(b) + 1, n });
    }
    let hc = h.to_c64();
    let q = remove_pair(&hc, a, b);
    let mut u = Matrix::<C64>::zeros(n, n);
    u[(a, b)] = hc[(a, b)];
    u[(b, a)] = hc[(b, a)];
    let g = resolvent_direct(&hc, z)?.g;
    let r = resolvent_direct(&q, z)?.g;
    let ru = r.matmul(&u);
    let t1 = ru.matmul(&r);
    let t2 = ru.matmul(&t1);
    let t3 = ru.matmul(&t2);
    let mut truncated = r.clone();
    truncated.add_scaled(&t1, C64::new(-1.0, 0.0));
    truncated.add_scaled(&t2, C64::new(1.0, 0.0));
    truncated.add_scaled(&t3, C64::new(-1.0, 0.0));
    let ru2 = ru.matmul(&ru);
    let ru4 = ru2.matmul(&ru2);
    let rem = ru4.matmul(&g);
    let mut full = truncated.clone();
    full.add_scaled(&rem, C64::new(1.0, 0.0));
    Ok(ExpansionCheck { identity_defect: full.max_abs_diff(&g), remainder: rem.max_abs() })
}

/// Largest entry of `G(z) G(zbar) - (G(z) - G(zbar)) / (z - zbar)`.
pub fn ward_defect<T: Scalar>(h: &Matrix<T>, z: C64) -> Result<f64> {
    let g = resolvent_direct(h, z)?.g;
    let gb = resolvent_direct(h, z.conj())?.g;
    let lhs = g.matmul(&gb);
    let mut rhs = g.clone();
    rhs.add_scaled(&gb, C64::new(-1.0, 0.0));
    let rhs = rhs.scale(1.0 / (z - z.conj()));
    Ok(lhs.max_abs_diff(&rhs))
}

/// Poisson-kernel mass `(eta/pi) sum_i |<x, u_i>|^2 / ((lambda_i - E)^2 + eta^2)`,
/// which equals `Im <x, G(E + i eta) x> / pi`.
pub fn poisson_mass(lambdas: &[f64], x: &Projection, e: f64, eta: f64) -> f64 {
    lambdas
        .iter()
        .zip(&x.coeffs)
        .map(|(&l, c)| c.norm_sqr() * eta / ((l - e).powi(2) + eta * eta))
        .sum::<f64>()
        / std::f64::consts::PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigensolve::eig_sym;

    fn small() -> Matrix<f64> {
        Matrix::from_fn(6, 6, |i, j| {
            let (a, b) = (i.min(j) as f64, i.max(j) as f64);
            ((a * 1.7 + b * 0.9).sin()) / 3.0
        })
    }

    #[test]
    fn direct_and_spectral_agree() {
        let h = small();
        let z = C64::new(0.2, 0.3);
        let s = eig_sym(&h).unwrap();
        let a = resolvent_from_spectrum(&s, z).unwrap();
        let b = resolvent_direct(&h, z).unwrap();
        assert!(a.g.max_abs_diff(&b.g) < 1e-12);
        assert!((a.m_n - stieltjes_trace(s.lambdas(), z).unwrap()).norm() < 1e-13);
    }

    #[test]
    fn minor_has_exact_zeros() {
        let h = small();
        let z = C64::new(-0.4, 0.2);
        let r = minor_resolvent(&h, 2, z).unwrap();
        for j in 0..6 {
            if j != 2 {
                assert_eq!(r[(2, j)], C64::new(0.0, 0.0));
                assert_eq!(r[(j, 2)], C64::new(0.0, 0.0));
            }
        }
        assert!((r[(2, 2)] + 1.0 / z).norm() < 1e-15);
    }

    #[test]
    fn rejects_real_z() {
        assert!(resolvent_direct(&small(), C64::new(0.1, 0.0)).is_err());
    }
}
