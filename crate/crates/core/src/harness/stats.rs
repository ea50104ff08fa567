//! Streaming moments, batch-means errors, KS distance, histograms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 8;

/// One-pass central moments up to order 8 with pairwise (Pebay) merging.
///
/// Batch-means standard errors of the raw moments are tracked alongside:
/// a value is assigned to batch `index * batches / expected`, so the batch
/// layout only depends on the trial index and not on arrival order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentAccumulator {
    count: u64,
    mean: f64,
    /// `m[p]` is the centred power sum of order `p` (`m[0]`, `m[1]` unused).
    m: [f64; MAX_ORDER + 1],
    expected: u64,
    /// Per batch: count followed by the power sums of orders 1..=8.
    batches: Vec<[f64; MAX_ORDER + 1]>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl MomentAccumulator {
    /// `expected` is the number of trials planned; it fixes the batch count
    /// at `floor(sqrt(expected))`.
    pub fn new(expected: u64) -> Self {
        let b = ((expected as f64).sqrt().floor() as usize).max(1);
        MomentAccumulator { count: 0, mean: 0.0, m: [0.0; MAX_ORDER + 1], expected: expected.max(1), batches: vec![[0.0; MAX_ORDER + 1]; b] }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn batch_count(&self) -> usize {
        self.batches.len()
    }

    pub fn push(&mut self, index: u64, x: f64) {
        let mut single = MomentAccumulator {
            count: 1,
            mean: x,
            m: [0.0; MAX_ORDER + 1],
            expected: self.expected,
            batches: vec![[0.0; MAX_ORDER + 1]; self.batches.len()],
        };
        let b = ((index.min(self.expected - 1) as u128 * self.batches.len() as u128) / self.expected as u128) as usize;
        let mut pw = 1.0;
        single.batches[b][0] = 1.0;
        for r in 1..=MAX_ORDER {
            pw *= x;
            single.batches[b][r] = pw;
        }
        self.merge(&single);
    }

    pub fn merge(&mut self, other: &MomentAccumulator) {
        assert_eq!(self.batches.len(), other.batches.len(), "accumulators with different batch layouts");
        for (a, b) in self.batches.iter_mut().zip(&other.batches) {
            for r in 0..=MAX_ORDER {
                a[r] += b[r];
            }
        }
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            self.count = other.count;
            self.mean = other.mean;
            self.m = other.m;
            return;
        }
        let (na, nb) = (self.count as f64, other.count as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let mut out = [0.0; MAX_ORDER + 1];
        for p in 2..=MAX_ORDER {
            let mut s = self.m[p] + other.m[p];
            for k in 1..=p - 2 {
                s += binomial(p, k)
                    * delta.powi(k as i32)
                    * ((-nb / n).powi(k as i32) * self.m[p - k] + (na / n).powi(k as i32) * other.m[p - k]);
            }
            s += (na * nb * delta / n).powi(p as i32)
                * (1.0 / nb.powi(p as i32 - 1) - (-1.0 / na).powi(p as i32 - 1));
            out[p] = s;
        }
        self.m = out;
        self.mean += delta * nb / n;
        self.count += other.count;
    }

    /// Central moment `E[(X - mean)^p]` (population normalisation).
    pub fn central(&self, p: usize) -> f64 {
        match p {
            0 => 1.0,
            1 => 0.0,
            _ => self.m[p] / self.count as f64,
        }
    }

    /// Raw moment `E[X^r]` from the mean and the central moments.
    pub fn raw(&self, r: usize) -> f64 {
        (0..=r).map(|k| binomial(r, k) * self.mean.powi((r - k) as i32) * self.central(k)).sum()
    }

    pub fn variance(&self) -> f64 {
        self.central(2)
    }

    /// Batch-means standard error of the raw moment of order `r`.
    pub fn standard_error(&self, r: usize) -> f64 {
        let means: Vec<f64> = self.batches.iter().filter(|b| b[0] > 0.0).map(|b| b[r] / b[0]).collect();
        let k = means.len();
        if k < 2 {
            return f64::NAN;
        }
        let mu = means.iter().sum::<f64>() / k as f64;
        let var = means.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    }
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Asymptotic Kolmogorov tail `P(K > x)`, series truncated at 100 terms.
pub fn kolmogorov_tail(x: f64) -> f64 {
    if x <= 0.27 {
        // the alternating series is useless here and the tail is 1 to 1e-6
        return 1.0;
    }
    let mut s = 0.0;
    for j in 1..=100 {
        let jf = j as f64;
        let term = (-2.0 * jf * jf * x * x).exp();
        s += if j % 2 == 1 { term } else { -term };
    }
    (2.0 * s).clamp(0.0, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub distance: f64,
    pub p_value: f64,
    pub n: usize,
}

pub const KS_MIN_SAMPLES: usize = 100;

/// One-sample KS distance against the standard normal.
pub fn ks_statistic(samples: &[f64]) -> Result<KsResult> {
    let n = samples.len();
    if n < KS_MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("KS needs at least {KS_MIN_SAMPLES} samples, got {n}")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("KS samples must be finite".into()));
    }
    let mut xs = samples.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = normal_cdf(x);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    Ok(KsResult { distance: d, p_value: kolmogorov_tail(nf.sqrt() * d), n })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
    pub underflow: u64,
    pub overflow: u64,
}

pub const HIST_BINS: usize = 60;
pub const HIST_RANGE: (f64, f64) = (-5.0, 5.0);

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Histogram { lo, hi, counts: vec![0; bins], underflow: 0, overflow: 0 }
    }

    pub fn standard() -> Self {
        Histogram::new(HIST_RANGE.0, HIST_RANGE.1, HIST_BINS)
    }

    pub fn push(&mut self, x: f64) {
        if x < self.lo {
            self.underflow += 1;
        } else if x >= self.hi {
            self.overflow += 1;
        } else {
            let b = ((x - self.lo) / (self.hi - self.lo) * self.counts.len() as f64) as usize;
            let last = self.counts.len() - 1;
            self.counts[b.min(last)] += 1;
        }
    }

    pub fn edges(&self) -> Vec<f64> {
        let k = self.counts.len();
        (0..=k).map(|i| self.lo + (self.hi - self.lo) * i as f64 / k as f64).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum::<u64>() + self.underflow + self.overflow
    }
}

/// Linear-interpolation percentile (`q` in `[0, 100]`).
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * (q / 100.0).clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(values: &[f64]) -> f64 {
    percentile(values, 50.0)
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return f64::NAN;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (a, b) = (x[i] - mx, y[i] - my);
        sxy += a * b;
        sxx += a * a;
        syy += b * b;
    }
    sxy / (sxx * syy).sqrt()
}
