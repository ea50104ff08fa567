//! Non-crossing partitions, Kreweras complements, free cumulants of the
//! divided Stieltjes transform and the deterministic approximation `M`.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Deserialize, Serialize};

use crate::eigensolve::Spectrum;
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix, Scalar, C64};
use crate::semicircle::m_divided;

pub const MAX_K: usize = 10;
pub const MAX_K_DENSE: usize = 6;

/// A partition of `{1, ..., k}`; blocks are sorted and ordered by minimum.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NcPartition {
    k: usize,
    blocks: Vec<Vec<usize>>,
}

impl NcPartition {
    /// Validates that `blocks` partition `{1..k}` without crossings.
    pub fn new(k: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let p = Self::canonical(k, blocks)?;
        if !is_noncrossing(&p.blocks) {
            return Err(Error::NotNonCrossing(format!("{:?}", p.blocks)));
        }
        Ok(p)
    }

    fn canonical(k: usize, mut blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; k + 1];
        for b in blocks.iter_mut() {
            if b.is_empty() {
                return Err(Error::InvalidArgument("empty block".into()));
            }
            b.sort_unstable();
            for &x in b.iter() {
                if x == 0 || x > k || seen[x] {
                    return Err(Error::InvalidArgument(format!("blocks do not partition 1..={k}")));
                }
                seen[x] = true;
            }
        }
        if seen[1..].iter().any(|s| !s) {
            return Err(Error::InvalidArgument(format!("blocks do not cover 1..={k}")));
        }
        blocks.sort();
        Ok(NcPartition { k, blocks })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn block_of(&self, x: usize) -> &[usize] {
        self.blocks.iter().find(|b| b.contains(&x)).expect("element in range")
    }
}

/// True when no two bumps `(i1, i2)`, `(j1, j2)` of distinct blocks satisfy
/// `i1 < j1 < i2 < j2`. A bump joins consecutive elements of a block.
pub fn is_noncrossing(blocks: &[Vec<usize>]) -> bool {
    let mut bumps: Vec<(usize, usize, usize)> = Vec::new();
    for (bi, b) in blocks.iter().enumerate() {
        let mut s = b.clone();
        s.sort_unstable();
        for w in s.windows(2) {
            bumps.push((w[0], w[1], bi));
        }
    }
    for &(i1, i2, a) in &bumps {
        for &(j1, j2, b) in &bumps {
            if a != b && i1 < j1 && j1 < i2 && i2 < j2 {
                return false;
            }
        }
    }
    true
}

fn nc_cache() -> &'static Mutex<HashMap<usize, Arc<Vec<NcPartition>>>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Vec<NcPartition>>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// All non-crossing partitions of `{1..k}` in canonical order.
pub fn enumerate_nc(k: usize) -> Result<Arc<Vec<NcPartition>>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if k > MAX_K {
        return Err(Error::TooLarge(k, MAX_K));
    }
    if let Some(v) = nc_cache().lock().unwrap().get(&k) {
        return Ok(v.clone());
    }
    let mut out = Vec::new();
    // restricted growth strings: a[0] = 0, a[i] <= 1 + max(a[..i])
    let mut a = vec![0usize; k];
    loop {
        let nb = a.iter().max().unwrap() + 1;
        let mut blocks = vec![Vec::new(); nb];
        for (i, &b) in a.iter().enumerate() {
            blocks[b].push(i + 1);
        }
        if is_noncrossing(&blocks) {
            out.push(NcPartition::canonical(k, blocks)?);
        }
        // next string
        let mut i = k - 1;
        loop {
            if i == 0 {
                out.sort();
                let arc = Arc::new(out);
                nc_cache().lock().unwrap().insert(k, arc.clone());
                return Ok(arc);
            }
            let m = a[..i].iter().max().copied().unwrap_or(0);
            if a[i] <= m {
                a[i] += 1;
                for x in a[i + 1..].iter_mut() {
                    *x = 0;
                }
                break;
            }
            i -= 1;
        }
    }
}

/// Kreweras complement: on the points `1, 1', 2, 2', ..., k, k'` the coarsest
/// partition of the primed points whose union with `pi` stays non-crossing.
/// Primed point `i'` is labelled `i` in the result.
pub fn kreweras(pi: &NcPartition) -> Result<NcPartition> {
    if !is_noncrossing(&pi.blocks) {
        return Err(Error::NotNonCrossing(format!("{:?}", pi.blocks)));
    }
    let k = pi.k;
    // point i sits at position 2i-1, point i' at 2i
    let base: Vec<Vec<usize>> = pi.blocks.iter().map(|b| b.iter().map(|&x| 2 * x - 1).collect()).collect();
    let mut label: Vec<usize> = (0..=k).collect();
    let blocks_of = |label: &[usize]| -> Vec<Vec<usize>> {
        let mut m: Vec<Vec<usize>> = Vec::new();
        let mut idx: HashMap<usize, usize> = HashMap::new();
        for i in 1..=k {
            let e = idx.entry(label[i]).or_insert_with(|| {
                m.push(Vec::new());
                m.len() - 1
            });
            m[*e].push(i);
        }
        m
    };
    let compatible = |sigma: &[Vec<usize>]| -> bool {
        let mut all = base.clone();
        all.extend(sigma.iter().map(|b| b.iter().map(|&x| 2 * x).collect::<Vec<_>>()));
        is_noncrossing(&all)
    };
    loop {
        let mut merged = false;
        for i in 1..=k {
            for j in i + 1..=k {
                if label[i] == label[j] {
                    continue;
                }
                let mut trial = label.clone();
                let (from, to) = (label[j], label[i]);
                for x in trial.iter_mut().skip(1) {
                    if *x == from {
                        *x = to;
                    }
                }
                if compatible(&blocks_of(&trial)) {
                    label = trial;
                    merged = true;
                }
            }
        }
        if !merged {
            break;
        }
    }
    NcPartition::new(k, blocks_of(&label))
}

/// `prod_{B != B(k)} <prod_{j in B} A_j> * prod_{j in B(k) \ {k}} A_j`, with
/// `<X> = Tr(X)/N` per traced block.
pub fn partial_trace(pi: &NcPartition, a_mats: &[Matrix<C64>]) -> Result<Matrix<C64>> {
    let k = pi.k;
    if a_mats.len() + 1 != k {
        return Err(Error::DimensionMismatch { expected: k - 1, got: a_mats.len() });
    }
    let n = check_dims(a_mats)?.unwrap_or(1);
    let mut products = ProductCache::new(a_mats, n);
    let (coef, mask) = trace_structure(pi, &mut products);
    Ok(products.get(mask).scale(coef))
}

fn check_dims(a_mats: &[Matrix<C64>]) -> Result<Option<usize>> {
    let mut n = None;
    for a in a_mats {
        if !a.is_square() {
            return Err(Error::NotSquare { rows: a.rows(), cols: a.cols() });
        }
        match n {
            None => n = Some(a.rows()),
            Some(m) if m != a.rows() => return Err(Error::DimensionMismatch { expected: m, got: a.rows() }),
            _ => {}
        }
    }
    Ok(n)
}

/// Ordered products `prod_{j in S} A_j` keyed by bitmask (bit `j-1` for `A_j`).
struct ProductCache<'a> {
    mats: &'a [Matrix<C64>],
    n: usize,
    cache: HashMap<u32, Matrix<C64>>,
    traces: HashMap<u32, C64>,
}

impl<'a> ProductCache<'a> {
    fn new(mats: &'a [Matrix<C64>], n: usize) -> Self {
        ProductCache { mats, n, cache: HashMap::new(), traces: HashMap::new() }
    }

    fn get(&mut self, mask: u32) -> Matrix<C64> {
        if let Some(m) = self.cache.get(&mask) {
            return m.clone();
        }
        let m = if mask == 0 {
            Matrix::identity(self.n)
        } else {
            let top = 31 - mask.leading_zeros();
            let rest = mask & !(1 << top);
            let a = &self.mats[top as usize];
            if rest == 0 {
                a.clone()
            } else {
                self.get(rest).matmul(a)
            }
        };
        self.cache.insert(mask, m.clone());
        m
    }

    fn normalized_trace(&mut self, mask: u32) -> C64 {
        if let Some(&t) = self.traces.get(&mask) {
            return t;
        }
        let t = self.get(mask).trace() / self.n as f64;
        self.traces.insert(mask, t);
        t
    }
}

fn mask_of(block: &[usize]) -> u32 {
    block.iter().fold(0u32, |m, &x| m | (1 << (x - 1)))
}

/// Scalar prefactor and the mask of the untraced product for `pTr_pi`.
fn trace_structure(pi: &NcPartition, products: &mut ProductCache) -> (C64, u32) {
    let k = pi.k;
    let mut coef = C64::new(1.0, 0.0);
    let mut open = 0u32;
    for b in &pi.blocks {
        if b.contains(&k) {
            open = mask_of(b) & !(1 << (k - 1));
        } else {
            coef *= products.normalized_trace(mask_of(b));
        }
    }
    (coef, open)
}

/// Divided transforms `m[B]` and free cumulants `m_o[B]` for every subset `B`.
#[derive(Clone, Debug)]
pub struct CumulantTable {
    zs: Vec<C64>,
    moments: Vec<C64>,
    cumulants: Vec<C64>,
}

impl CumulantTable {
    pub fn k(&self) -> usize {
        self.zs.len()
    }

    pub fn zs(&self) -> &[C64] {
        &self.zs
    }

    /// `m[B]` for a 1-based block.
    pub fn moment(&self, block: &[usize]) -> C64 {
        self.moments[mask_of(block) as usize]
    }

    /// `m_o[B]` for a 1-based block.
    pub fn cumulant(&self, block: &[usize]) -> C64 {
        self.cumulants[mask_of(block) as usize]
    }

    pub fn moment_mask(&self, mask: u32) -> C64 {
        self.moments[mask as usize]
    }

    pub fn cumulant_mask(&self, mask: u32) -> C64 {
        self.cumulants[mask as usize]
    }

    /// `sum_{pi in NC(B)} prod m_o[B']`, which should equal `m[B]`.
    pub fn reconstruct(&self, block: &[usize]) -> Result<C64> {
        let elems = sorted(block);
        let parts = enumerate_nc(elems.len())?;
        Ok(parts.iter().map(|p| self.product_over(p, &elems)).sum())
    }

    fn product_over(&self, p: &NcPartition, elems: &[usize]) -> C64 {
        p.blocks
            .iter()
            .map(|b| {
                let mask = b.iter().fold(0u32, |m, &x| m | (1 << (elems[x - 1] - 1)));
                self.cumulants[mask as usize]
            })
            .product()
    }
}

fn sorted(block: &[usize]) -> Vec<usize> {
    let mut v = block.to_vec();
    v.sort_unstable();
    v
}

pub fn free_cumulants(zs: &[C64]) -> Result<CumulantTable> {
    let k = zs.len();
    if k == 0 {
        return Err(Error::InvalidArgument("at least one spectral parameter required".into()));
    }
    if k > MAX_K {
        return Err(Error::TooLarge(k, MAX_K));
    }
    let size = 1usize << k;
    let mut moments = vec![C64::new(0.0, 0.0); size];
    for mask in 1..size {
        let pts: Vec<C64> = (0..k).filter(|j| mask & (1 << j) != 0).map(|j| zs[j]).collect();
        moments[mask] = m_divided(&pts)?;
    }
    let mut table = CumulantTable { zs: zs.to_vec(), moments, cumulants: vec![C64::new(0.0, 0.0); size] };
    let mut masks: Vec<usize> = (1..size).collect();
    masks.sort_by_key(|m| m.count_ones());
    for mask in masks {
        let elems: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).map(|j| j + 1).collect();
        let parts = enumerate_nc(elems.len())?;
        let mut rest = C64::new(0.0, 0.0);
        for p in parts.iter().filter(|p| p.len() > 1) {
            rest += table.product_over(p, &elems);
        }
        table.cumulants[mask] = table.moments[mask] - rest;
    }
    Ok(table)
}

#[derive(Clone, Debug)]
pub struct DeterministicApprox {
    pub zs: Vec<C64>,
    pub matrix: Matrix<C64>,
}

/// `M(z_1, A_1, ..., A_{k-1}, z_k) = sum_{pi in NC[k]} pTr_{K(pi)}(A) prod_{B in pi} m_o[B]`.
pub fn m_det(zs: &[C64], a_mats: &[Matrix<C64>]) -> Result<DeterministicApprox> {
    let k = zs.len();
    if k == 0 {
        return Err(Error::InvalidArgument("at least one spectral parameter required".into()));
    }
    if k > MAX_K_DENSE {
        return Err(Error::TooLarge(k, MAX_K_DENSE));
    }
    if a_mats.len() + 1 != k {
        return Err(Error::DimensionMismatch { expected: k - 1, got: a_mats.len() });
    }
    let n = match check_dims(a_mats)? {
        Some(n) => n,
        None => return Err(Error::InvalidArgument("k = 1 needs the dimension; use m_det_scalar".into())),
    };
    let table = free_cumulants(zs)?;
    let mut products = ProductCache::new(a_mats, n);
    let mut coeffs: HashMap<u32, C64> = HashMap::new();
    let all: Vec<usize> = (1..=k).collect();
    for pi in enumerate_nc(k)?.iter() {
        let kp = kreweras(pi)?;
        let (c, open) = trace_structure(&kp, &mut products);
        let w = table.product_over(pi, &all);
        *coeffs.entry(open).or_insert(C64::new(0.0, 0.0)) += c * w;
    }
    let mut keys: Vec<u32> = coeffs.keys().copied().collect();
    keys.sort_unstable();
    let mut m = Matrix::<C64>::zeros(n, n);
    for key in keys {
        let p = products.get(key);
        m.add_scaled(&p, coeffs[&key]);
    }
    Ok(DeterministicApprox { zs: zs.to_vec(), matrix: m })
}

/// `M(z) = m_sc(z) I` for a single parameter.
pub fn m_det_scalar(z: C64, n: usize) -> Result<DeterministicApprox> {
    let m = m_divided(&[z])?;
    Ok(DeterministicApprox { zs: vec![z], matrix: Matrix::<C64>::identity(n).scale(m) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualMode {
    Avg,
    Iso,
}

/// `U^* A U` in the eigenbasis of `spec`.
pub fn to_eigenbasis<T: Scalar>(spec: &Spectrum<T>, a: &Matrix<C64>) -> Matrix<C64> {
    let v = spec.vectors().to_c64();
    v.conj().matmul(a).matmul(&v.transpose())
}

/// Normalised multi-resolvent residual.
///
/// `Avg`: `|Tr(G_1 A_1 ... G_k A_k - M(z_1, A_1, ..., z_k) A_k)|` times
/// `eta^{k - m/2}` (or `d^{k+1}` when `d >= 1`), with `k = zs.len() = a_mats.len()`.
///
/// `Iso`: `|<x, (G_1 A_1 ... A_k G_{k+1} - M) y>|` times `sqrt(N) eta^{k - m/2 + 1/2}`
/// (or `sqrt(N) d^{k+2}`), with `zs.len() = a_mats.len() + 1`.
///
/// `traceless` is the caller-declared count `m`.
#[allow(clippy::too_many_arguments)]
pub fn multiresolvent_residual<T: Scalar>(
    spec: &Spectrum<T>,
    zs: &[C64],
    a_mats: &[Matrix<C64>],
    traceless: usize,
    mode: ResidualMode,
    x: Option<&[T]>,
    y: Option<&[T]>,
) -> Result<f64> {
    let n = spec.n();
    for a in a_mats {
        if a.rows() != n || a.cols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.rows() });
        }
    }
    let eta = zs.iter().map(|z| z.im.abs()).fold(f64::INFINITY, f64::min);
    let d = zs.iter().map(|z| dist_to_support(*z)).fold(f64::INFINITY, f64::min);
    let lam = spec.lambdas();
    let diag = |z: C64| -> Vec<C64> { lam.iter().map(|&l| 1.0 / (l - z)).collect() };
    let tilde: Vec<Matrix<C64>> = a_mats.iter().map(|a| to_eigenbasis(spec, a)).collect();
    match mode {
        ResidualMode::Avg => {
            let k = zs.len();
            if a_mats.len() != k || k == 0 {
                return Err(Error::DimensionMismatch { expected: k, got: a_mats.len() });
            }
            // X = D_1 A~_1 D_2 A~_2 ... D_k A~_k, trace only
            let mut x = scale_rows(&tilde[0], &diag(zs[0]));
            for j in 1..k {
                let dj = scale_rows(&tilde[j], &diag(zs[j]));
                x = x.matmul(&dj);
            }
            let tr_g = x.trace();
            let m = if k == 1 {
                m_det_scalar(zs[0], n)?.matrix
            } else {
                m_det(zs, &a_mats[..k - 1])?.matrix
            };
            let tr_m = m.matmul(&a_mats[k - 1]).trace();
            let norm = if d >= 1.0 { d.powi(k as i32 + 1) } else { eta.powf(k as f64 - traceless as f64 / 2.0) };
            Ok((tr_g - tr_m).norm() * norm)
        }
        ResidualMode::Iso => {
            let k = a_mats.len();
            if zs.len() != k + 1 {
                return Err(Error::DimensionMismatch { expected: k + 1, got: zs.len() });
            }
            let (x, y) = match (x, y) {
                (Some(x), Some(y)) if x.len() == n && y.len() == n => (x, y),
                _ => return Err(Error::InvalidArgument("iso mode needs x and y of length N".into())),
            };
            let xt: Vec<C64> = spec.project(x).into_iter().map(|c| c.to_c64()).collect();
            let yt: Vec<C64> = spec.project(y).into_iter().map(|c| c.to_c64()).collect();
            // w = D_{k+1} y~, then w <- D_j A~_j w for j = k..1
            let mut w: Vec<C64> = yt.iter().zip(diag(zs[k])).map(|(a, b)| a * b).collect();
            for j in (0..k).rev() {
                let aw = tilde[j].matvec(&w);
                w = aw.iter().zip(diag(zs[j])).map(|(a, b)| a * b).collect();
            }
            let g_form = dot(&xt, &w);
            let xc: Vec<C64> = x.iter().map(|v| v.to_c64()).collect();
            let yc: Vec<C64> = y.iter().map(|v| v.to_c64()).collect();
            let m = if k == 0 { m_det_scalar(zs[0], n)?.matrix } else { m_det(zs, a_mats)?.matrix };
            let m_form = m.form(&xc, &yc);
            let sn = (n as f64).sqrt();
            let norm = if d >= 1.0 {
                sn * d.powi(k as i32 + 2)
            } else {
                sn * eta.powf(k as f64 - traceless as f64 / 2.0 + 0.5)
            };
            Ok((g_form - m_form).norm() * norm)
        }
    }
}

fn scale_rows(a: &Matrix<C64>, d: &[C64]) -> Matrix<C64> {
    let mut out = a.clone();
    for (i, &s) in d.iter().enumerate() {
        for v in out.row_mut(i) {
            *v *= s;
        }
    }
    out
}

/// Distance from `z` to `[-2, 2]`.
pub fn dist_to_support(z: C64) -> f64 {
    let dx = if z.re > 2.0 {
        z.re - 2.0
    } else if z.re < -2.0 {
        -2.0 - z.re
    } else {
        0.0
    };
    dx.hypot(z.im)
}
