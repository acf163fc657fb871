//! C interface to the flatlab kernels.
//!
//! Every fallible function returns a [`FlatlabStatus`]; on failure the
//! message is available from [`flatlab_last_error`] on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use flatlab::haar::{haar_rotation, SamplerConfig};
use flatlab::interlace::{recursive_i, QuadBudget};
use flatlab::mc::{estimate_i, Reduction};
use flatlab::spectrum::{a_n, classify_regime, l_n, tilde_beta, RegimeKind, Spectrum};
use flatlab::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlatlabStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    DimensionMismatch = 3,
    NotConverged = 4,
    Singular = 5,
    QuadratureBudget = 6,
    RegimeMismatch = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlatlabRegime {
    OneGap = 0,
    OneGapExceptional42 = 1,
    TwoGap = 2,
    TwoGapExceptional1Nm1 = 3,
    Generic = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlatlabReduction {
    None = 0,
    TraceReduced = 1,
    TraceCutoff = 2,
}

/// Monte Carlo result with its 95% Wilson interval.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatlabEstimate {
    pub p_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub hits: u64,
    pub total: u64,
    pub reduction: FlatlabReduction,
}

/// Quadrature value, error estimate, and a nonzero flag when converged.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatlabQuadValue {
    pub value: f64,
    pub error: f64,
    pub converged: i32,
}

/// Opaque spectrum handle.
pub struct FlatlabSpectrum(Spectrum);

/// Opaque Haar sampler handle (seed and dimension).
pub struct FlatlabSampler(SamplerConfig);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> FlatlabStatus {
    match e {
        Error::InvalidInput(_) => FlatlabStatus::InvalidInput,
        Error::DimensionMismatch { .. } => FlatlabStatus::DimensionMismatch,
        Error::NotConverged { .. } => FlatlabStatus::NotConverged,
        Error::Singular(_) => FlatlabStatus::Singular,
        Error::QuadratureBudget { .. } => FlatlabStatus::QuadratureBudget,
        Error::RegimeMismatch { .. } => FlatlabStatus::RegimeMismatch,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => FlatlabStatus::Io,
    }
}

enum Fail {
    Status(FlatlabStatus, String),
    Lib(Error),
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Lib(e)
    }
}

fn null(what: &str) -> Fail {
    Fail::Status(FlatlabStatus::NullPointer, format!("null pointer: {what}"))
}

/// Runs `f`, records any failure, and maps panics to `Panic`.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> FlatlabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FlatlabStatus::Ok,
        Ok(Err(Fail::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Fail::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".to_string());
            FlatlabStatus::Panic
        }
    }
}

unsafe fn spectrum_ref<'a>(s: *const FlatlabSpectrum) -> Result<&'a Spectrum, Fail> {
    s.as_ref().map(|h| &h.0).ok_or_else(|| null("spectrum"))
}

unsafe fn write_out<T>(out: *mut T, v: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output"));
    }
    out.write(v);
    Ok(())
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn flatlab_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a spectrum from `n` values (sorted on entry).
///
/// # Safety
/// `values` must point to `n` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flatlab_spectrum_new(values: *const f64, n: usize, out: *mut *mut FlatlabSpectrum) -> FlatlabStatus {
    guard(|| {
        if values.is_null() {
            return Err(null("values"));
        }
        let s = Spectrum::new(std::slice::from_raw_parts(values, n).to_vec())?;
        write_out(out, Box::into_raw(Box::new(FlatlabSpectrum(s))))
    })
}

/// # Safety
/// `s` must come from [`flatlab_spectrum_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn flatlab_spectrum_free(s: *mut FlatlabSpectrum) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Dimension of `s`, or 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn flatlab_spectrum_dim(s: *const FlatlabSpectrum) -> usize {
    s.as_ref().map_or(0, |h| h.0.dim())
}

/// Copies the sorted values of `s` into `buf` of length `len`.
///
/// # Safety
/// `s` must be a live handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn flatlab_spectrum_values(s: *const FlatlabSpectrum, buf: *mut f64, len: usize) -> FlatlabStatus {
    guard(|| {
        let s = spectrum_ref(s)?;
        if buf.is_null() {
            return Err(null("buffer"));
        }
        if len < s.dim() {
            return Err(Fail::Status(FlatlabStatus::BufferTooSmall, format!("need {} doubles, got {len}", s.dim())));
        }
        ptr::copy_nonoverlapping(s.values().as_ptr(), buf, s.dim());
        Ok(())
    })
}

/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn flatlab_l_n(s: *const FlatlabSpectrum, out: *mut f64) -> FlatlabStatus {
    guard(|| write_out(out, l_n(spectrum_ref(s)?)))
}

/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn flatlab_a_n(s: *const FlatlabSpectrum, out: *mut f64) -> FlatlabStatus {
    guard(|| write_out(out, a_n(spectrum_ref(s)?)))
}

/// # Safety
/// `s` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn flatlab_tilde_beta(s: *const FlatlabSpectrum, out: *mut f64) -> FlatlabStatus {
    guard(|| write_out(out, tilde_beta(spectrum_ref(s)?)))
}

/// Regime of `s` and its 1-based largest-gap index.
///
/// # Safety
/// `s` must be a live handle; `kind` and `gap_index` writable.
#[no_mangle]
pub unsafe extern "C" fn flatlab_classify(
    s: *const FlatlabSpectrum,
    kind: *mut FlatlabRegime,
    gap_index: *mut usize,
) -> FlatlabStatus {
    guard(|| {
        let tag = classify_regime(spectrum_ref(s)?)?;
        let k = match tag.kind {
            RegimeKind::OneGap => FlatlabRegime::OneGap,
            RegimeKind::OneGapExceptional4_2 => FlatlabRegime::OneGapExceptional42,
            RegimeKind::TwoGap => FlatlabRegime::TwoGap,
            RegimeKind::TwoGapExceptional1_nm1 => FlatlabRegime::TwoGapExceptional1Nm1,
            RegimeKind::Generic => FlatlabRegime::Generic,
        };
        write_out(kind, k)?;
        write_out(gap_index, tag.i)
    })
}

/// Haar sampler for dimension `n`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn flatlab_sampler_new(seed: u64, n: usize, out: *mut *mut FlatlabSampler) -> FlatlabStatus {
    guard(|| {
        if !(2..=flatlab::linalg::MAX_DIM).contains(&n) {
            return Err(Error::InvalidInput(format!("sampler dimension must be in 2..={}, got {n}", flatlab::linalg::MAX_DIM)).into());
        }
        write_out(out, Box::into_raw(Box::new(FlatlabSampler(SamplerConfig::new(seed, n)))))
    })
}

/// # Safety
/// `s` must come from [`flatlab_sampler_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn flatlab_sampler_free(s: *mut FlatlabSampler) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Haar rotation number `index` of the sampler's stream, row-major into
/// `buf` of length at least `n²`.
///
/// # Safety
/// `sampler` must be a live handle and `buf` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn flatlab_haar_rotation(
    sampler: *const FlatlabSampler,
    index: u64,
    buf: *mut f64,
    len: usize,
) -> FlatlabStatus {
    guard(|| {
        let cfg = sampler.as_ref().map(|h| &h.0).ok_or_else(|| null("sampler"))?;
        if buf.is_null() {
            return Err(null("buffer"));
        }
        let need = cfg.n * cfg.n;
        if len < need {
            return Err(Fail::Status(FlatlabStatus::BufferTooSmall, format!("need {need} doubles, got {len}")));
        }
        let k = haar_rotation(cfg, index)?;
        ptr::copy_nonoverlapping(k.matrix().as_slice().as_ptr(), buf, need);
        Ok(())
    })
}

/// Monte Carlo `I_n(λ; r)` from the first `samples` rotations of `sampler`.
///
/// # Safety
/// `s` and `sampler` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn flatlab_estimate_i(
    s: *const FlatlabSpectrum,
    radius: f64,
    samples: u64,
    sampler: *const FlatlabSampler,
    out: *mut FlatlabEstimate,
) -> FlatlabStatus {
    guard(|| {
        let cfg = sampler.as_ref().map(|h| &h.0).ok_or_else(|| null("sampler"))?;
        let e = estimate_i(spectrum_ref(s)?, radius, samples, cfg)?;
        let reduction = match e.reduction {
            Reduction::None => FlatlabReduction::None,
            Reduction::TraceReduced => FlatlabReduction::TraceReduced,
            Reduction::TraceCutoff => FlatlabReduction::TraceCutoff,
        };
        write_out(
            out,
            FlatlabEstimate { p_hat: e.p_hat, ci_low: e.ci_low, ci_high: e.ci_high, hits: e.hits, total: e.total, reduction },
        )
    })
}

/// `I_n(λ; r)` from the interlacing recursion, `n ≤ 4`, with the default
/// budget for the dimension.
///
/// # Safety
/// `s` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn flatlab_recursive_i(s: *const FlatlabSpectrum, radius: f64, out: *mut FlatlabQuadValue) -> FlatlabStatus {
    guard(|| {
        let s = spectrum_ref(s)?;
        let r = recursive_i(s, radius, &QuadBudget::for_recursion(s.dim()))?;
        write_out(out, FlatlabQuadValue { value: r.value, error: r.error, converged: r.converged as i32 })
    })
}
