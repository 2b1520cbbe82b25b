//! C interface to `dp-kde`.
//!
//! Structures are handed out as opaque `DpKdeStructure` pointers that must be
//! released with [`dp_kde_free`]. Every fallible function returns a
//! [`DpKdeStatus`]; on failure a description is available from
//! [`dp_kde_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use dp_kde::format::{Kernel, Structure};
use dp_kde::{
    EmbeddingSpec, Error, HighDimLpTree, HighDimTree, L2KdeStructure, PrivacyBudget, RngSeed,
};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpKdeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfDomain = 3,
    DimensionMismatch = 4,
    Io = 5,
    Format = 6,
    Panic = 7,
}

/// Released structure handle.
pub struct DpKdeStructure {
    inner: Structure,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> DpKdeStatus {
    match err {
        Error::OutOfDomain { .. } => DpKdeStatus::OutOfDomain,
        Error::DimensionMismatch { .. } => DpKdeStatus::DimensionMismatch,
        Error::Io(_) => DpKdeStatus::Io,
        Error::Format(_) | Error::Csv { .. } => DpKdeStatus::Format,
        _ => DpKdeStatus::InvalidArgument,
    }
}

struct Failure(DpKdeStatus, String);

impl From<Error> for Failure {
    fn from(err: Error) -> Self {
        Failure(status_of(&err), err.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DpKdeStatus::NullPointer, format!("{what} is null"))
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DpKdeStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => DpKdeStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".to_string());
            DpKdeStatus::Panic
        }
    }
}

/// # Safety
/// `points` must be null only when `n * d == 0`, otherwise valid for
/// `n * d` reads.
unsafe fn rows<'a>(points: *const f64, n: usize, d: usize) -> Result<Vec<&'a [f64]>, Failure> {
    if d == 0 {
        return Err(Failure(
            DpKdeStatus::InvalidArgument,
            "dimension must be positive".into(),
        ));
    }
    let total = n
        .checked_mul(d)
        .ok_or_else(|| Failure(DpKdeStatus::InvalidArgument, "n * d overflows".into()))?;
    if total == 0 {
        return Ok(Vec::new());
    }
    if points.is_null() {
        return Err(null("points"));
    }
    let flat = std::slice::from_raw_parts(points, total);
    Ok(flat.chunks_exact(d).collect())
}

/// # Safety
/// `out` must be valid for one write.
unsafe fn emit(out: *mut *mut DpKdeStructure, kernel: Kernel) {
    *out = Box::into_raw(Box::new(DpKdeStructure {
        inner: Structure::new(kernel),
    }));
}

fn noise_seed(noisy: bool, seed: u64) -> Option<RngSeed> {
    noisy.then(|| RngSeed(seed).derive("noise", 0))
}

/// Builds an l1 structure over `n` row-major points of dimension `d` in
/// `[0, bound)^d`. `noisy = false` releases exact statistics.
///
/// # Safety
/// `points` must be valid for `n * d` reads and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn dp_kde_build_l1(
    points: *const f64,
    n: usize,
    d: usize,
    bound: f64,
    epsilon: f64,
    noisy: bool,
    seed: u64,
    out: *mut *mut DpKdeStructure,
) -> DpKdeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let rows = rows(points, n, d)?;
        let budget = PrivacyBudget::pure(epsilon)?;
        let tree = HighDimTree::build(&rows, d, bound, budget, noise_seed(noisy, seed))?;
        emit(out, Kernel::L1(tree));
        Ok(())
    })
}

/// Builds an `||x - y||_p^p` structure.
///
/// # Safety
/// As [`dp_kde_build_l1`].
#[no_mangle]
pub unsafe extern "C" fn dp_kde_build_lpp(
    points: *const f64,
    n: usize,
    d: usize,
    bound: f64,
    p: u32,
    epsilon: f64,
    noisy: bool,
    seed: u64,
    out: *mut *mut DpKdeStructure,
) -> DpKdeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let rows = rows(points, n, d)?;
        let budget = PrivacyBudget::pure(epsilon)?;
        let tree = HighDimLpTree::build(&rows, d, bound, p, None, budget, noise_seed(noisy, seed))?;
        emit(out, Kernel::Lpp(tree));
        Ok(())
    })
}

/// Builds an l2 structure with embedding distortion `alpha`.
///
/// # Safety
/// As [`dp_kde_build_l1`].
#[no_mangle]
pub unsafe extern "C" fn dp_kde_build_l2(
    points: *const f64,
    n: usize,
    d: usize,
    alpha: f64,
    epsilon: f64,
    noisy: bool,
    seed: u64,
    out: *mut *mut DpKdeStructure,
) -> DpKdeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let rows = rows(points, n, d)?;
        let budget = PrivacyBudget::pure(epsilon)?;
        let spec = EmbeddingSpec::new(d, alpha, n, RngSeed(seed).derive("embedding", 0))?;
        let s = L2KdeStructure::build(&rows, spec, budget, noise_seed(noisy, seed))?;
        emit(out, Kernel::L2(s));
        Ok(())
    })
}

/// Reads a structure file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn dp_kde_load(
    path: *const c_char,
    out: *mut *mut DpKdeStructure,
) -> DpKdeStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(DpKdeStatus::InvalidArgument, "path is not UTF-8".into()))?;
        let inner = Structure::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(DpKdeStructure { inner }));
        Ok(())
    })
}

/// Writes a structure file.
///
/// # Safety
/// `handle` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dp_kde_save(
    handle: *const DpKdeStructure,
    path: *const c_char,
) -> DpKdeStatus {
    guard(|| {
        let handle = handle.as_ref().ok_or_else(|| null("handle"))?;
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure(DpKdeStatus::InvalidArgument, "path is not UTF-8".into()))?;
        handle.inner.save(Path::new(path))?;
        Ok(())
    })
}

/// Answers one query of dimension `d`.
///
/// # Safety
/// `handle` must come from this library, `y` be valid for `d` reads and
/// `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn dp_kde_query(
    handle: *const DpKdeStructure,
    y: *const f64,
    d: usize,
    out: *mut f64,
) -> DpKdeStatus {
    guard(|| {
        let handle = handle.as_ref().ok_or_else(|| null("handle"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let y = if d == 0 {
            &[][..]
        } else if y.is_null() {
            return Err(null("y"));
        } else {
            std::slice::from_raw_parts(y, d)
        };
        *out = handle.inner.query(y)?;
        Ok(())
    })
}

/// Query dimension, or 0 for a null handle.
///
/// # Safety
/// `handle` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn dp_kde_dim(handle: *const DpKdeStructure) -> usize {
    handle.as_ref().map_or(0, |h| h.inner.dim())
}

/// Total privacy budget spent by the release, or NaN for a null handle.
///
/// # Safety
/// `handle` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn dp_kde_epsilon(handle: *const DpKdeStructure) -> f64 {
    handle
        .as_ref()
        .map_or(f64::NAN, |h| h.inner.total_budget().epsilon())
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `handle` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn dp_kde_free(handle: *mut DpKdeStructure) {
    if !handle.is_null() {
        drop(Box::from_raw(handle));
    }
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dp_kde_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}
