use serde::{Deserialize, Serialize};

use crate::ensembles::{entry_cumulants, EntryLaw};
use crate::error::{Error, Result};
use crate::quadrature::{adaptive, GaussLegendre};

/// Highest truncation order accepted by the validator.
pub const MAX_TRUNCATION: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionResidual {
    /// `E[Y F(Y)]`.
    pub lhs: f64,
    /// `sum_{r <= T} kappa_{r+1} / r! E[F^(r)(Y)]`.
    pub expansion: f64,
    pub residual: f64,
    /// `E|Y|^{T+2}`, the shape of the remainder bound.
    pub moment_t_plus_2: f64,
}

/// Expectation of `g(Y)` with `Y = scale * X` and `X` drawn from `law`.
pub fn expectation(law: &EntryLaw, scale: f64, g: &dyn Fn(f64) -> f64) -> Result<f64> {
    law.validate()?;
    match law {
        EntryLaw::Rademacher => Ok(0.5 * (g(scale) + g(-scale))),
        EntryLaw::Custom { values, probs } => Ok(values.iter().zip(probs).map(|(v, p)| p * g(scale * v)).sum()),
        EntryLaw::Gaussian => {
            let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
            let out = adaptive(&GaussLegendre::new(20), -14.0, 14.0, 1e-15, 1e-14, 16, 100_000, |x: f64| {
                norm * (-0.5 * x * x).exp() * g(scale * x)
            })?;
            Ok(out.value)
        }
        EntryLaw::Uniform => {
            let a = 3f64.sqrt();
            let out = adaptive(&GaussLegendre::new(20), -a, a, 1e-15, 1e-14, 8, 100_000, |x: f64| g(scale * x) / (2.0 * a))?;
            Ok(out.value)
        }
    }
}

/// Residual of the truncated cumulant expansion of `E[Y F(Y)]`.
///
/// `f(r, y)` must return the `r`-th derivative of `F` at `y` for
/// `r = 0..=truncation`.
pub fn cumulant_expansion_validate(
    law: &EntryLaw,
    scale: f64,
    f: &dyn Fn(usize, f64) -> f64,
    truncation: usize,
) -> Result<ExpansionResidual> {
    if truncation > MAX_TRUNCATION {
        return Err(Error::InvalidArgument(format!("truncation order {truncation} exceeds {MAX_TRUNCATION}")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
    }
    let kappa = entry_cumulants(law, truncation + 1)?;
    let lhs = expectation(law, scale, &|y| y * f(0, y))?;
    let mut expansion = 0.0;
    let mut fact = 1.0;
    for r in 0..=truncation {
        if r > 0 {
            fact *= r as f64;
        }
        let k = kappa[r] * scale.powi(r as i32 + 1);
        if k != 0.0 {
            expansion += k / fact * expectation(law, scale, &|y| f(r, y))?;
        }
    }
    let moment_t_plus_2 = expectation(law, scale, &|y| y.abs().powi(truncation as i32 + 2))?;
    Ok(ExpansionResidual { lhs, expansion, residual: lhs - expansion, moment_t_plus_2 })
}

/// Derivatives of `sin`: `sin^(r)(y) = sin(y + r pi / 2)`.
pub fn sin_derivative(r: usize, y: f64) -> f64 {
    match r % 4 {
        0 => y.sin(),
        1 => y.cos(),
        2 => -y.sin(),
        _ => -y.cos(),
    }
}
