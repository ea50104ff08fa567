//! Semicircle law: density, Stieltjes transform, quantiles and local scales.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::quadrature::{adaptive, GaussLegendre};

/// Semicircle density on `[-2, 2]`.
pub fn rho_sc(e: f64) -> f64 {
    let v = 4.0 - e * e;
    if v <= 0.0 {
        0.0
    } else {
        v.sqrt() / (2.0 * PI)
    }
}

/// Stieltjes transform of the semicircle law.
///
/// Uses the factorised root `sqrt(z-2) sqrt(z+2)`, which has its cut on
/// `[-2, 2]` and gives `Im m > 0` in the upper half plane.
pub fn m_sc(z: C64) -> Result<C64> {
    if z.im == 0.0 {
        return Err(Error::OnRealAxis(format!("{z}")));
    }
    Ok(m_sc_unchecked(z))
}

pub(crate) fn m_sc_unchecked(z: C64) -> C64 {
    let s = (z - 2.0).sqrt() * (z + 2.0).sqrt();
    // -2/(z+s) is the small root, computed without cancellation.
    -2.0 / (z + s)
}

/// Distribution function of the semicircle law.
pub fn semicircle_cdf(x: f64) -> f64 {
    if x <= -2.0 {
        0.0
    } else if x >= 2.0 {
        1.0
    } else {
        0.5 + x * (4.0 - x * x).sqrt() / (4.0 * PI) + (x / 2.0).asin() / PI
    }
}

/// Classical location `gamma_i` with `F(gamma_i) = i/N`, for `1 <= i <= N`.
pub fn gamma_quantile(i: usize, n: usize) -> Result<f64> {
    if n == 0 || i == 0 || i > n {
        return Err(Error::IndexOutOfRange { index: i, n });
    }
    if i == n {
        return Ok(2.0);
    }
    let target = i as f64 / n as f64;
    let (mut lo, mut hi) = (-2.0f64, 2.0f64);
    while hi - lo > 1e-14 {
        let mid = 0.5 * (lo + hi);
        if semicircle_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// All classical locations for a given `N`.
#[derive(Clone, Debug)]
pub struct QuantileTable {
    n: usize,
    gammas: Vec<f64>,
}

impl QuantileTable {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("N must be positive".into()));
        }
        let gammas = (1..=n).map(|i| gamma_quantile(i, n)).collect::<Result<Vec<_>>>()?;
        Ok(QuantileTable { n, gammas })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `gamma_i` for 1-based `i`.
    pub fn gamma(&self, i: usize) -> f64 {
        self.gammas[i - 1]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.gammas
    }
}

/// Local eigenvalue spacing `N^{-2/3} min(k, N+1-k)^{-1/3}`.
pub fn gap_scale(k: usize, n: usize) -> Result<f64> {
    if n == 0 || k == 0 || k > n {
        return Err(Error::IndexOutOfRange { index: k, n });
    }
    let kk = k.min(n + 1 - k) as f64;
    Ok((n as f64).powf(-2.0 / 3.0) * kk.powf(-1.0 / 3.0))
}

/// Local-law control parameter `sqrt(Im m / (N|eta|)) + 1/(N|eta|)`.
pub fn psi(z: C64, n: usize) -> Result<f64> {
    let m = m_sc(z)?;
    let neta = n as f64 * z.im.abs();
    Ok((m.im.abs() / neta).sqrt() + 1.0 / neta)
}

/// A spectral parameter tagged with the domain exponent `tau`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralPoint {
    pub z: C64,
    pub tau: f64,
}

impl SpectralPoint {
    pub fn new(e: f64, eta: f64, tau: f64) -> Self {
        SpectralPoint { z: C64::new(e, eta), tau }
    }

    /// Membership in `{|E| <= 10/tau, N^{-1+tau/10} <= |eta| <= 10/tau}`.
    pub fn in_domain(&self, n: usize) -> bool {
        let lim = 10.0 / self.tau;
        let eta = self.z.im.abs();
        self.z.re.abs() <= lim && eta >= (n as f64).powf(-1.0 + self.tau / 10.0) && eta <= lim
    }
}

/// `int rho_sc(x) prod_j 1/(x - z_j) dx`, by adaptive quadrature in `x = 2 sin(theta)`.
///
/// Repeated points are allowed; every `z_j` must be off the real axis.
pub fn m_divided(zs: &[C64]) -> Result<C64> {
    if zs.is_empty() {
        return Err(Error::InvalidArgument("m_divided needs at least one point".into()));
    }
    if let Some(z) = zs.iter().find(|z| z.im == 0.0) {
        return Err(Error::OnRealAxis(format!("{z}")));
    }
    let rule = GaussLegendre::new(12);
    let out = adaptive(&rule, -PI / 2.0, PI / 2.0, 1e-300, 1e-13, 8, 200_000, |t: f64| {
        let (s, c) = t.sin_cos();
        let x = 2.0 * s;
        let mut v = C64::new(2.0 * c * c / PI, 0.0);
        for z in zs {
            v /= C64::new(x, 0.0) - z;
        }
        v
    })?;
    Ok(out.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m_at_i() {
        let m = m_sc(C64::new(0.0, 1.0)).unwrap();
        assert!((m - C64::new(0.0, (5f64.sqrt() - 1.0) / 2.0)).norm() < 1e-15);
    }

    #[test]
    fn m_rejects_real_axis() {
        assert!(matches!(m_sc(C64::new(0.3, 0.0)), Err(Error::OnRealAxis(_))));
    }

    #[test]
    fn gamma_endpoints() {
        assert_eq!(gamma_quantile(1000, 1000).unwrap(), 2.0);
        assert!(gamma_quantile(0, 10).is_err());
        assert!(gamma_quantile(11, 10).is_err());
        assert!(gamma_quantile(500, 1000).unwrap().abs() < 1e-12);
    }

    #[test]
    fn gap_scale_is_symmetric() {
        for k in 1..=20 {
            assert_eq!(gap_scale(k, 20).unwrap(), gap_scale(21 - k, 20).unwrap());
        }
        assert!((gap_scale(1, 1000).unwrap() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn domain_membership() {
        let p = SpectralPoint::new(0.0, 1.0, 0.2);
        assert!(p.in_domain(1000));
        assert!(!SpectralPoint::new(0.0, 1e-4, 0.2).in_domain(1000));
        assert!(!SpectralPoint::new(60.0, 1.0, 0.2).in_domain(1000));
    }

    #[test]
    fn divided_single_matches_closed_form() {
        for z in [C64::new(0.3, 0.5), C64::new(-1.9, 0.05), C64::new(2.5, -0.2)] {
            let q = m_divided(&[z]).unwrap();
            let m = m_sc_unchecked(z);
            assert!((q - m).norm() <= 1e-11 * m.norm(), "{z}: {q} vs {m}");
        }
    }
}
