//! Gauss–Legendre rules and an adaptive bisection integrator.

use std::f64::consts::PI;
use std::ops::{Add, Mul};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// `n`-point rule on `[-1, 1]`, nodes by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let h = 0.5 * (b - a);
        let c = 0.5 * (b + a);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (c + h * x, w * h))
    }

    pub fn integrate<V, F>(&self, a: f64, b: f64, mut f: F) -> V
    where
        V: Copy + Add<Output = V> + Mul<f64, Output = V> + Default,
        F: FnMut(f64) -> V,
    {
        let mut s = V::default();
        for (x, w) in self.mapped(a, b) {
            s = s + f(x) * w;
        }
        s
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Magnitude used by the adaptive integrator for tolerance checks.
pub trait Magnitude {
    fn magnitude(&self) -> f64;
}

impl Magnitude for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl Magnitude for num_complex::Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct AdaptiveOutcome<V> {
    pub value: V,
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// Adaptive bisection: a panel is accepted once the rule on the panel agrees
/// with the sum over its two halves.
pub fn adaptive<V, F>(
    rule: &GaussLegendre,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    initial_panels: usize,
    max_panels: usize,
    mut f: F,
) -> Result<AdaptiveOutcome<V>>
where
    V: Copy + Add<Output = V> + Mul<f64, Output = V> + Default + std::ops::Sub<Output = V> + Magnitude,
    F: FnMut(f64) -> V,
{
    let mut evaluations = 0usize;
    let mut eval_panel = |lo: f64, hi: f64, evals: &mut usize| -> V {
        *evals += rule.len();
        rule.integrate(lo, hi, &mut f)
    };
    let panels = initial_panels.max(1);
    let width = (b - a) / panels as f64;
    let mut stack: Vec<(f64, f64, V)> = Vec::new();
    let mut coarse_total = V::default();
    for p in (0..panels).rev() {
        let lo = a + p as f64 * width;
        let hi = if p + 1 == panels { b } else { lo + width };
        let v = eval_panel(lo, hi, &mut evaluations);
        coarse_total = coarse_total + v;
        stack.push((lo, hi, v));
    }
    let scale_ref = coarse_total.magnitude();
    let tol = abs_tol.max(rel_tol * scale_ref);
    let mut total = V::default();
    let mut err = 0.0;
    let mut accepted = 0usize;
    while let Some((lo, hi, whole)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = eval_panel(lo, mid, &mut evaluations);
        let right = eval_panel(mid, hi, &mut evaluations);
        let fine = left + right;
        let diff = (fine - whole).magnitude();
        let share = tol * (hi - lo) / (b - a);
        if diff <= share || (hi - lo) <= 1e-15 * (b - a).abs().max(1.0) {
            total = total + fine;
            err += diff;
            accepted += 1;
        } else {
            if accepted + stack.len() + 2 > max_panels {
                return Err(Error::Quadrature(format!(
                    "panel budget {max_panels} exhausted on [{a}, {b}] (local discrepancy {diff:e})"
                )));
            }
            stack.push((mid, hi, right));
            stack.push((lo, mid, left));
        }
    }
    Ok(AdaptiveOutcome { value: total, error_estimate: err, evaluations })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let g = GaussLegendre::new(6);
        // exact for degree 11
        let v: f64 = g.integrate(-1.0, 2.0, |x| x.powi(11) - 3.0 * x.powi(4));
        let exact = (2f64.powi(12) - 1.0) / 12.0 - 3.0 * (2f64.powi(5) + 1.0) / 5.0;
        assert!((v - exact).abs() < 1e-11);
        let wsum: f64 = g.weights.iter().sum();
        assert!((wsum - 2.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_peaks() {
        let g = GaussLegendre::new(8);
        let eta = 1e-3;
        let out = adaptive(&g, -1.0, 1.0, 1e-12, 1e-12, 4, 10_000, |x: f64| eta / (x * x + eta * eta)).unwrap();
        let exact = 2.0 * (1.0 / eta).atan();
        assert!((out.value - exact).abs() < 1e-9, "{} vs {}", out.value, exact);
    }
}
