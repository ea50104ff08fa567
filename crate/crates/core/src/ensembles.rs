//! Wigner ensembles with configurable entry laws and reproducible per-trial streams.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, C64};

/// Law of the standardised entry `sqrt(N) h_ij` (mean zero, variance one).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntryLaw {
    Gaussian,
    Rademacher,
    /// Uniform on `[-sqrt(3), sqrt(3)]`.
    Uniform,
    /// Finitely supported law given by atoms and their probabilities.
    Custom { values: Vec<f64>, probs: Vec<f64> },
}

impl EntryLaw {
    pub fn name(&self) -> &'static str {
        match self {
            EntryLaw::Gaussian => "gaussian",
            EntryLaw::Rademacher => "rademacher",
            EntryLaw::Uniform => "uniform",
            EntryLaw::Custom { .. } => "custom",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let EntryLaw::Custom { values, probs } = self {
            if values.is_empty() || values.len() != probs.len() {
                return Err(Error::InvalidArgument("custom law needs matching values and probs".into()));
            }
            if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) || values.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("custom law has invalid atoms".into()));
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("custom law probabilities sum to {total}")));
            }
            let mean: f64 = values.iter().zip(probs).map(|(v, p)| v * p).sum();
            let var: f64 = values.iter().zip(probs).map(|(v, p)| v * v * p).sum();
            if mean.abs() > 1e-12 || (var - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!(
                    "custom law must have mean 0 and variance 1 (got {mean}, {var})"
                )));
            }
            // symmetric: odd moments vanish atom by atom after pairing
            for (v, p) in values.iter().zip(probs) {
                let mirror: f64 = values.iter().zip(probs).filter(|(w, _)| (**w + v).abs() < 1e-12).map(|(_, q)| q).sum();
                let same: f64 = values.iter().zip(probs).filter(|(w, _)| (**w - v).abs() < 1e-12).map(|(_, q)| q).sum();
                if *p > 0.0 && (mirror - same).abs() > 1e-12 {
                    return Err(Error::InvalidArgument("custom law must be symmetric".into()));
                }
            }
        }
        Ok(())
    }

    /// Raw moment `E[X^r]` of the standardised law.
    pub fn moment(&self, r: usize) -> f64 {
        if r == 0 {
            return 1.0;
        }
        match self {
            EntryLaw::Gaussian => {
                if r % 2 == 1 {
                    0.0
                } else {
                    (1..r).step_by(2).map(|k| k as f64).product()
                }
            }
            EntryLaw::Rademacher => {
                if r % 2 == 1 {
                    0.0
                } else {
                    1.0
                }
            }
            EntryLaw::Uniform => {
                if r % 2 == 1 {
                    0.0
                } else {
                    3f64.powi(r as i32 / 2) / (r as f64 + 1.0)
                }
            }
            EntryLaw::Custom { values, probs } => values.iter().zip(probs).map(|(v, p)| p * v.powi(r as i32)).sum(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            EntryLaw::Gaussian => rng.sample(StandardNormal),
            EntryLaw::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            EntryLaw::Uniform => 3f64.sqrt() * (2.0 * rng.gen::<f64>() - 1.0),
            EntryLaw::Custom { values, probs } => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().unwrap()
            }
        }
    }
}

/// Cumulants `kappa_1..=kappa_r` from raw moments `m_1..=m_r`.
pub fn moments_to_cumulants(moments: &[f64]) -> Vec<f64> {
    let r = moments.len();
    let m = |k: usize| if k == 0 { 1.0 } else { moments[k - 1] };
    let mut kappa = vec![0.0; r];
    for n in 1..=r {
        let mut s = m(n);
        let mut binom = 1.0; // C(n-1, j-1)
        for j in 1..n {
            s -= binom * kappa[j - 1] * m(n - j);
            binom = binom * (n - j) as f64 / j as f64;
        }
        kappa[n - 1] = s;
    }
    kappa
}

/// Cumulants `kappa_1..=kappa_r` of `sqrt(N) h_ij` under `law`.
pub fn entry_cumulants(law: &EntryLaw, r: usize) -> Result<Vec<f64>> {
    law.validate()?;
    let moments: Vec<f64> = (1..=r).map(|k| law.moment(k)).collect();
    Ok(moments_to_cumulants(&moments))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n: usize,
    pub beta: u8,
    pub law: EntryLaw,
    /// `N * Var(h_ii)`; defaults to 2 for real and 1 for complex ensembles.
    pub diag_variance_factor: Option<f64>,
}

impl EnsembleSpec {
    pub fn goe(n: usize) -> Self {
        EnsembleSpec { n, beta: 1, law: EntryLaw::Gaussian, diag_variance_factor: None }
    }

    pub fn gue(n: usize) -> Self {
        EnsembleSpec { n, beta: 2, law: EntryLaw::Gaussian, diag_variance_factor: None }
    }

    pub fn with_law(mut self, law: EntryLaw) -> Self {
        self.law = law;
        self
    }

    pub fn diag_factor(&self) -> f64 {
        self.diag_variance_factor.unwrap_or(if self.beta == 1 { 2.0 } else { 1.0 })
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("N must be at least 1".into()));
        }
        if self.beta != 1 && self.beta != 2 {
            return Err(Error::InvalidArgument(format!("beta must be 1 or 2, got {}", self.beta)));
        }
        let d = self.diag_factor();
        if !(d >= 0.0) || !d.is_finite() {
            return Err(Error::InvalidArgument(format!("diag_variance_factor must be non-negative, got {d}")));
        }
        self.law.validate()
    }
}

/// Identifies the random stream a sample was drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleTag {
    pub seed: u64,
    pub trial: u64,
}

/// Independent stream for `(seed, trial)`; does not depend on evaluation order.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[derive(Clone, Debug, PartialEq)]
pub enum WignerMatrix {
    Real(Matrix<f64>),
    Complex(Matrix<C64>),
}

impl WignerMatrix {
    pub fn n(&self) -> usize {
        match self {
            WignerMatrix::Real(m) => m.rows(),
            WignerMatrix::Complex(m) => m.rows(),
        }
    }

    pub fn beta(&self) -> u8 {
        match self {
            WignerMatrix::Real(_) => 1,
            WignerMatrix::Complex(_) => 2,
        }
    }

    pub fn to_c64(&self) -> Matrix<C64> {
        match self {
            WignerMatrix::Real(m) => m.to_c64(),
            WignerMatrix::Complex(m) => m.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct WignerSample {
    pub spec: EnsembleSpec,
    pub tag: SampleTag,
    pub matrix: WignerMatrix,
}

/// Draws the `trial`-th sample of the ensemble for `seed`.
///
/// Entries are filled over the upper triangle in row-major order.
pub fn sample_wigner(spec: &EnsembleSpec, seed: u64, trial: u64) -> Result<WignerSample> {
    spec.validate()?;
    let n = spec.n;
    let mut rng = trial_rng(seed, trial);
    let off = 1.0 / (n as f64).sqrt();
    let diag = (spec.diag_factor() / n as f64).sqrt();
    let matrix = if spec.beta == 1 {
        let mut h = Matrix::<f64>::zeros(n, n);
        for i in 0..n {
            h[(i, i)] = diag * spec.law.sample(&mut rng);
            for j in i + 1..n {
                let x = off * spec.law.sample(&mut rng);
                h[(i, j)] = x;
                h[(j, i)] = x;
            }
        }
        WignerMatrix::Real(h)
    } else {
        let mut h = Matrix::<C64>::zeros(n, n);
        let half = off / 2f64.sqrt();
        for i in 0..n {
            h[(i, i)] = C64::new(diag * spec.law.sample(&mut rng), 0.0);
            for j in i + 1..n {
                let x = spec.law.sample(&mut rng);
                let y = spec.law.sample(&mut rng);
                let v = C64::new(half * x, half * y);
                h[(i, j)] = v;
                h[(j, i)] = v.conj();
            }
        }
        WignerMatrix::Complex(h)
    };
    Ok(WignerSample { spec: spec.clone(), tag: SampleTag { seed, trial }, matrix })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rademacher_fourth_cumulant() {
        let k = entry_cumulants(&EntryLaw::Rademacher, 6).unwrap();
        assert_eq!(k[0], 0.0);
        assert_eq!(k[1], 1.0);
        assert!((k[3] + 2.0).abs() < 1e-14);
        assert!((k[5] - 16.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_cumulants_vanish_beyond_two() {
        let k = entry_cumulants(&EntryLaw::Gaussian, 8).unwrap();
        for (i, &v) in k.iter().enumerate() {
            let expect = if i == 1 { 1.0 } else { 0.0 };
            assert!((v - expect).abs() < 1e-10, "kappa_{} = {v}", i + 1);
        }
    }

    #[test]
    fn uniform_fourth_cumulant() {
        let k = entry_cumulants(&EntryLaw::Uniform, 4).unwrap();
        assert!((k[3] + 1.2).abs() < 1e-12);
    }

    #[test]
    fn custom_law_validation() {
        let ok = EntryLaw::Custom { values: vec![-2.0, 0.0, 2.0], probs: vec![0.125, 0.75, 0.125] };
        assert!(ok.validate().is_ok());
        let skew = EntryLaw::Custom { values: vec![-1.0, 2.0], probs: vec![2.0 / 3.0, 1.0 / 3.0] };
        assert!(skew.validate().is_err());
    }

    #[test]
    fn n_one_is_scalar() {
        let s = sample_wigner(&EnsembleSpec::goe(1), 3, 0).unwrap();
        assert_eq!(s.matrix.n(), 1);
    }

    #[test]
    fn streams_are_reproducible() {
        let spec = EnsembleSpec::gue(6);
        let a = sample_wigner(&spec, 7, 5).unwrap();
        let b = sample_wigner(&spec, 7, 5).unwrap();
        let c = sample_wigner(&spec, 7, 6).unwrap();
        assert_eq!(a.matrix, b.matrix);
        assert_ne!(a.matrix, c.matrix);
    }
}
