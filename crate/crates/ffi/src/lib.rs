//! C ABI over `quelab`.
//!
//! Every fallible call returns a status code (`QUELAB_OK` on success) and
//! writes its result through an out-pointer. The message for the last failure
//! on the calling thread is available from `quelab_last_error_message`.
//! Objects are opaque handles released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;
use quelab::eigensolve::{eig_sym, WignerSpectrum};
use quelab::ensembles::{sample_wigner, EnsembleSpec, EntryLaw, WignerSample};
use quelab::linalg::Matrix;
use quelab::ncfree::enumerate_nc;
use quelab::observables::{clt_normalization, overlap_of, Basis, IndexSet};
use quelab::semicircle::{gamma_quantile, m_sc};
use quelab::Error;

pub const QUELAB_OK: c_int = 0;
pub const QUELAB_ERR_NULL_POINTER: c_int = 1;
pub const QUELAB_ERR_INVALID_ARGUMENT: c_int = 2;
pub const QUELAB_ERR_DIMENSION: c_int = 3;
pub const QUELAB_ERR_OUT_OF_RANGE: c_int = 4;
pub const QUELAB_ERR_NUMERICAL: c_int = 5;
pub const QUELAB_ERR_BUFFER_TOO_SMALL: c_int = 6;
pub const QUELAB_ERR_PANIC: c_int = 7;

pub const QUELAB_LAW_GAUSSIAN: c_int = 0;
pub const QUELAB_LAW_RADEMACHER: c_int = 1;
pub const QUELAB_LAW_UNIFORM: c_int = 2;

/// A sampled Wigner matrix.
pub struct QuelabSample {
    inner: WignerSample,
}

/// Eigenvalues (ascending) and eigenvectors of a self-adjoint matrix.
pub struct QuelabSpectrum {
    inner: WignerSpectrum,
    beta: u8,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn code_of(e: &Error) -> c_int {
    match e {
        Error::NotSquare { .. } | Error::DimensionMismatch { .. } => QUELAB_ERR_DIMENSION,
        Error::IndexOutOfRange { .. } | Error::TooLarge(..) => QUELAB_ERR_OUT_OF_RANGE,
        Error::NonConvergence { .. } | Error::Singular(_) | Error::Quadrature(_) => QUELAB_ERR_NUMERICAL,
        _ => QUELAB_ERR_INVALID_ARGUMENT,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), (c_int, String)>>(f: F) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QUELAB_OK,
        Ok(Err((code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            QUELAB_ERR_PANIC
        }
    }
}

fn lift<T>(r: quelab::Result<T>) -> Result<T, (c_int, String)> {
    r.map_err(|e| (code_of(&e), e.to_string()))
}

fn null(what: &str) -> (c_int, String) {
    (QUELAB_ERR_NULL_POINTER, format!("{what} is null"))
}

/// Copies the last error message (NUL-terminated, truncated to fit) into
/// `buf` and returns the full message length in bytes, excluding the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn quelab_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn quelab_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Stieltjes transform of the semicircle law at `re + i im` (`im != 0`).
///
/// # Safety
/// `out_re` and `out_im` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn quelab_m_sc(re: f64, im: f64, out_re: *mut f64, out_im: *mut f64) -> c_int {
    guard(|| {
        if out_re.is_null() || out_im.is_null() {
            return Err(null("output"));
        }
        let m = lift(m_sc(Complex64::new(re, im)))?;
        *out_re = m.re;
        *out_im = m.im;
        Ok(())
    })
}

/// Classical location `gamma_i` of the `i`-th eigenvalue (1-based) for size `n`,
/// the point where the semicircle distribution function reaches `i / n`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn quelab_gamma_quantile(i: usize, n: usize, out: *mut f64) -> c_int {
    guard(|| {
        if out.is_null() {
            return Err(null("output"));
        }
        *out = lift(gamma_quantile(i, n))?;
        Ok(())
    })
}

/// Number of non-crossing partitions of `k` points (`1 <= k <= 10`).
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn quelab_nc_count(k: usize, out: *mut usize) -> c_int {
    guard(|| {
        if out.is_null() {
            return Err(null("output"));
        }
        *out = lift(enumerate_nc(k))?.len();
        Ok(())
    })
}

/// Samples trial `trial` of a Wigner ensemble (`beta` 1 or 2, `law` one of
/// the `QUELAB_LAW_*` constants).
///
/// # Safety
/// `out` must be valid for writes; the handle is released with
/// `quelab_sample_free`.
#[no_mangle]
pub unsafe extern "C" fn quelab_sample_new(
    n: usize,
    beta: u8,
    law: c_int,
    seed: u64,
    trial: u64,
    out: *mut *mut QuelabSample,
) -> c_int {
    guard(|| {
        if out.is_null() {
            return Err(null("output"));
        }
        let law = match law {
            QUELAB_LAW_GAUSSIAN => EntryLaw::Gaussian,
            QUELAB_LAW_RADEMACHER => EntryLaw::Rademacher,
            QUELAB_LAW_UNIFORM => EntryLaw::Uniform,
            other => return Err((QUELAB_ERR_INVALID_ARGUMENT, format!("unknown law code {other}"))),
        };
        let spec = EnsembleSpec { n, beta, law, diag_variance_factor: None };
        let s = lift(sample_wigner(&spec, seed, trial))?;
        *out = Box::into_raw(Box::new(QuelabSample { inner: s }));
        Ok(())
    })
}

/// # Safety
/// `sample` must be null or a live handle from `quelab_sample_new`.
#[no_mangle]
pub unsafe extern "C" fn quelab_sample_free(sample: *mut QuelabSample) {
    if !sample.is_null() {
        drop(Box::from_raw(sample));
    }
}

/// Matrix dimension of a sample.
///
/// # Safety
/// `sample` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn quelab_sample_dim(sample: *const QuelabSample) -> usize {
    sample.as_ref().map_or(0, |s| s.inner.matrix.n())
}

/// Eigendecomposition of a sampled matrix.
///
/// # Safety
/// `sample` must be a live handle and `out` valid for writes; release the
/// result with `quelab_spectrum_free`.
#[no_mangle]
pub unsafe extern "C" fn quelab_spectrum_of_sample(sample: *const QuelabSample, out: *mut *mut QuelabSpectrum) -> c_int {
    guard(|| {
        let s = sample.as_ref().ok_or_else(|| null("sample"))?;
        if out.is_null() {
            return Err(null("output"));
        }
        let inner = lift(quelab::eigensolve::eig_wigner(&s.inner))?;
        *out = Box::into_raw(Box::new(QuelabSpectrum { inner, beta: s.inner.matrix.beta() }));
        Ok(())
    })
}

/// Eigendecomposition of a real symmetric `n x n` matrix in row-major order.
///
/// # Safety
/// `data` must be valid for `n * n` reads and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn quelab_spectrum_of_real(data: *const f64, n: usize, out: *mut *mut QuelabSpectrum) -> c_int {
    guard(|| {
        if data.is_null() {
            return Err(null("data"));
        }
        if out.is_null() {
            return Err(null("output"));
        }
        let slice = std::slice::from_raw_parts(data, n * n);
        let m = lift(Matrix::from_vec(n, n, slice.to_vec()))?;
        let spec = lift(eig_sym(&m))?;
        *out = Box::into_raw(Box::new(QuelabSpectrum { inner: WignerSpectrum::Real(spec), beta: 1 }));
        Ok(())
    })
}

/// # Safety
/// `spectrum` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn quelab_spectrum_free(spectrum: *mut QuelabSpectrum) {
    if !spectrum.is_null() {
        drop(Box::from_raw(spectrum));
    }
}

/// Number of eigenvalues held by a spectrum.
///
/// # Safety
/// `spectrum` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn quelab_spectrum_dim(spectrum: *const QuelabSpectrum) -> usize {
    spectrum.as_ref().map_or(0, |s| s.inner.lambdas().len())
}

/// Copies the ascending eigenvalues into `buf`.
///
/// # Safety
/// `spectrum` must be a live handle and `buf` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn quelab_spectrum_eigenvalues(spectrum: *const QuelabSpectrum, buf: *mut f64, len: usize) -> c_int {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        if buf.is_null() {
            return Err(null("buffer"));
        }
        let l = s.inner.lambdas();
        if len < l.len() {
            return Err((QUELAB_ERR_BUFFER_TOO_SMALL, format!("buffer holds {len} values, {} needed", l.len())));
        }
        ptr::copy_nonoverlapping(l.as_ptr(), buf, l.len());
        Ok(())
    })
}

/// Centred self-overlap of eigenvector `k` (1-based) with the coordinates
/// listed in `members` (0-based): the mass of the vector on those coordinates
/// minus `count / n`. With `normalized != 0` the CLT-normalised value is
/// returned instead; that needs `0 < count < n`.
///
/// # Safety
/// `spectrum` must be a live handle, `members` valid for `count` reads and
/// `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn quelab_spectrum_overlap(
    spectrum: *const QuelabSpectrum,
    k: usize,
    members: *const usize,
    count: usize,
    normalized: c_int,
    out: *mut f64,
) -> c_int {
    guard(|| {
        let s = spectrum.as_ref().ok_or_else(|| null("spectrum"))?;
        if out.is_null() {
            return Err(null("output"));
        }
        if members.is_null() && count > 0 {
            return Err(null("members"));
        }
        let n = s.inner.lambdas().len();
        if k == 0 || k > n {
            return Err((QUELAB_ERR_OUT_OF_RANGE, format!("eigenvector index {k} outside 1..={n}")));
        }
        let list = if count == 0 { Vec::new() } else { std::slice::from_raw_parts(members, count).to_vec() };
        let set = lift(IndexSet::new(n, list))?;
        let p = match &s.inner {
            WignerSpectrum::Real(sp) => lift(overlap_of(sp.vector(k - 1), &set, &Basis::Standard))?,
            WignerSpectrum::Complex(sp) => lift(overlap_of(sp.vector(k - 1), &set, &Basis::Standard))?,
        };
        *out = if normalized != 0 { p * lift(clt_normalization(n, set.len(), s.beta))? } else { p };
        Ok(())
    })
}
