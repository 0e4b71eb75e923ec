//! C bindings.
//!
//! Functions return a [`BscStatus`]; on failure the message is available
//! from [`bsc_last_error`] on the same thread. Handles are opaque and must
//! be released with their `_free` function. Point data is row-major
//! `n * dim` doubles.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use bsc_core::clustering::{cluster_forest, ClusterResult, ForestClusterParams};
use bsc_core::density::{fit_forest, DensityForest, ForestParams};
use bsc_core::eval::ari;
use bsc_core::partition::SplitMode;
use bsc_core::{Error, Points};

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BscStatus {
    Ok = 0,
    InvalidInput = 1,
    InvalidState = 2,
    /// No density level yields the requested number of clusters.
    NoValidLevel = 3,
    UnsupportedDimension = 4,
    Io = 5,
    Format = 6,
    NullPointer = 7,
    /// An internal panic was caught at the boundary.
    Panic = 8,
}

/// Opaque fitted density forest.
pub struct BscForest {
    inner: DensityForest,
}

/// Opaque clustering result.
pub struct BscClusterResult {
    inner: ClusterResult,
}

/// Split rule: 0 = pure random, 1 = adaptive.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BscForestParams {
    pub m: usize,
    pub k: usize,
    pub p: usize,
    pub mode: u32,
    pub holdout_fraction: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct BscClusterParams {
    pub m: usize,
    pub r_ratio: f64,
    pub q: f64,
    pub k: usize,
    pub k_n: usize,
    pub k_c: usize,
    pub q_eps: f64,
    pub mode: u32,
    pub holdout_fraction: f64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BscStatus {
    match e {
        Error::InvalidInput(_) => BscStatus::InvalidInput,
        Error::InvalidState(_) => BscStatus::InvalidState,
        Error::NoValidLevel { .. } => BscStatus::NoValidLevel,
        Error::UnsupportedDimension(_) => BscStatus::UnsupportedDimension,
        Error::Io { .. } => BscStatus::Io,
        Error::Format(_) => BscStatus::Format,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (BscStatus, String)>) -> BscStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BscStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            BscStatus::Panic
        }
    }
}

fn lib(e: Error) -> (BscStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (BscStatus, String) {
    (BscStatus::NullPointer, format!("{what} is null"))
}

fn mode_of(mode: u32) -> Result<SplitMode, (BscStatus, String)> {
    match mode {
        0 => Ok(SplitMode::Pure),
        1 => Ok(SplitMode::Adaptive),
        other => Err((BscStatus::InvalidInput, format!("unknown split mode {other}"))),
    }
}

fn mode_code(mode: SplitMode) -> u32 {
    match mode {
        SplitMode::Pure => 0,
        SplitMode::Adaptive => 1,
    }
}

/// # Safety
/// `data` must point to `n * dim` readable doubles unless `n * dim == 0`.
unsafe fn read_points(data: *const f64, n: usize, dim: usize) -> Result<Points, (BscStatus, String)> {
    let len = n
        .checked_mul(dim)
        .ok_or_else(|| (BscStatus::InvalidInput, "n * dim overflows".to_string()))?;
    if dim == 0 {
        return Err((BscStatus::InvalidInput, "dim must be >= 1".into()));
    }
    let values = if len == 0 {
        Vec::new()
    } else {
        if data.is_null() {
            return Err(null("data"));
        }
        // SAFETY: the caller guarantees `len` readable doubles.
        unsafe { std::slice::from_raw_parts(data, len) }.to_vec()
    };
    Points::new(dim, values).map_err(lib)
}

/// Message of the last failed call on this thread, or null. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn bsc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn bsc_forest_params_default() -> BscForestParams {
    let p = ForestParams::default();
    BscForestParams {
        m: p.m,
        k: p.k,
        p: p.p,
        mode: mode_code(p.mode),
        holdout_fraction: p.holdout_fraction,
        seed: p.seed,
    }
}

#[no_mangle]
pub extern "C" fn bsc_cluster_params_default() -> BscClusterParams {
    let p = ForestClusterParams::default();
    BscClusterParams {
        m: p.m,
        r_ratio: p.r_ratio,
        q: p.q,
        k: p.k,
        k_n: p.k_n,
        k_c: p.k_c,
        q_eps: p.q_eps,
        mode: mode_code(p.mode),
        holdout_fraction: p.holdout_fraction,
        seed: p.seed,
    }
}

/// Fits a forest to `n` points of dimension `dim`; stores a new handle in
/// `*out`.
///
/// # Safety
/// `data` must hold `n * dim` doubles; `params` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bsc_forest_fit(
    data: *const f64,
    n: usize,
    dim: usize,
    params: *const BscForestParams,
    out: *mut *mut BscForest,
) -> BscStatus {
    guard(|| {
        if params.is_null() {
            return Err(null("params"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: checked non-null; the caller guarantees validity.
        let p = unsafe { *params };
        let points = unsafe { read_points(data, n, dim) }?;
        let fp = ForestParams {
            m: p.m,
            k: p.k,
            p: p.p,
            mode: mode_of(p.mode)?,
            holdout_fraction: p.holdout_fraction,
            seed: p.seed,
        };
        let forest = fit_forest(&points, &fp).map_err(lib)?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = Box::into_raw(Box::new(BscForest { inner: forest })) };
        Ok(())
    })
}

/// Dimension of the forest's data space, or 0 for a null handle.
///
/// # Safety
/// `forest` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bsc_forest_dim(forest: *const BscForest) -> usize {
    // SAFETY: null or live handle per contract.
    unsafe { forest.as_ref() }.map_or(0, |f| f.inner.root().dim())
}

/// Evaluates the density at `n` points, writing `n` values to `out`.
///
/// # Safety
/// `forest` must be a live handle; `x` must hold `n * dim` doubles and
/// `out` room for `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn bsc_forest_eval(
    forest: *const BscForest,
    x: *const f64,
    n: usize,
    dim: usize,
    out: *mut f64,
) -> BscStatus {
    guard(|| {
        // SAFETY: null or live handle per contract.
        let forest = unsafe { forest.as_ref() }.ok_or_else(|| null("forest"))?;
        if dim != forest.inner.root().dim() {
            return Err((BscStatus::InvalidInput, "dimension does not match the forest".into()));
        }
        let points = unsafe { read_points(x, n, dim) }?;
        if n == 0 {
            return Ok(());
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let values = forest.inner.eval_many(&points);
        // SAFETY: `out` has room for `n` doubles.
        unsafe { std::slice::from_raw_parts_mut(out, n) }.copy_from_slice(&values);
        Ok(())
    })
}

/// Serializes the forest as JSON into a new string in `*out`; release it
/// with [`bsc_string_free`].
///
/// # Safety
/// `forest` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bsc_forest_to_json(forest: *const BscForest, out: *mut *mut c_char) -> BscStatus {
    guard(|| {
        // SAFETY: null or live handle per contract.
        let forest = unsafe { forest.as_ref() }.ok_or_else(|| null("forest"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json = forest.inner.to_json().map_err(lib)?;
        let c = CString::new(json).map_err(|_| (BscStatus::Format, "nul byte in JSON".to_string()))?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = c.into_raw() };
        Ok(())
    })
}

/// Parses a forest from JSON.
///
/// # Safety
/// `json` must be a nul-terminated string and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn bsc_forest_from_json(json: *const c_char, out: *mut *mut BscForest) -> BscStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: nul-terminated per contract.
        let s = unsafe { std::ffi::CStr::from_ptr(json) }
            .to_str()
            .map_err(|_| (BscStatus::Format, "JSON is not UTF-8".to_string()))?;
        let forest = DensityForest::from_json(s).map_err(lib)?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = Box::into_raw(Box::new(BscForest { inner: forest })) };
        Ok(())
    })
}

/// # Safety
/// `forest` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bsc_forest_free(forest: *mut BscForest) {
    if !forest.is_null() {
        // SAFETY: created by Box::into_raw and not freed before.
        drop(unsafe { Box::from_raw(forest) });
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bsc_string_free(s: *mut c_char) {
    if !s.is_null() {
        // SAFETY: created by CString::into_raw.
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Runs forest clustering with background assignment. On
/// [`BscStatus::NoValidLevel`] no handle is produced.
///
/// # Safety
/// `data` must hold `n * dim` doubles; `params` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn bsc_cluster(
    data: *const f64,
    n: usize,
    dim: usize,
    params: *const BscClusterParams,
    out: *mut *mut BscClusterResult,
) -> BscStatus {
    guard(|| {
        if params.is_null() {
            return Err(null("params"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: checked non-null.
        let p = unsafe { *params };
        let points = unsafe { read_points(data, n, dim) }?;
        let cp = ForestClusterParams {
            m: p.m,
            r_ratio: p.r_ratio,
            q: p.q,
            k: p.k,
            k_n: p.k_n,
            k_c: p.k_c,
            q_eps: p.q_eps,
            mode: mode_of(p.mode)?,
            holdout_fraction: p.holdout_fraction,
            seed: p.seed,
        };
        let result = cluster_forest(&points, &cp).map_err(lib)?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = Box::into_raw(Box::new(BscClusterResult { inner: result })) };
        Ok(())
    })
}

/// Number of labels, or 0 for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bsc_cluster_result_len(result: *const BscClusterResult) -> usize {
    // SAFETY: null or live handle per contract.
    unsafe { result.as_ref() }.map_or(0, |r| r.inner.labels.len())
}

/// Copies the labels into `out`, which must have room for `len` values
/// with `len` equal to [`bsc_cluster_result_len`].
///
/// # Safety
/// `result` must be a live handle and `out` writable for `len` values.
#[no_mangle]
pub unsafe extern "C" fn bsc_cluster_result_labels(
    result: *const BscClusterResult,
    out: *mut i64,
    len: usize,
) -> BscStatus {
    guard(|| {
        // SAFETY: null or live handle per contract.
        let r = unsafe { result.as_ref() }.ok_or_else(|| null("result"))?;
        if len != r.inner.labels.len() {
            return Err((
                BscStatus::InvalidInput,
                format!("buffer holds {len} labels, result has {}", r.inner.labels.len()),
            ));
        }
        if len == 0 {
            return Ok(());
        }
        if out.is_null() {
            return Err(null("out"));
        }
        // SAFETY: writable for `len` values per contract.
        unsafe { std::slice::from_raw_parts_mut(out, len) }.copy_from_slice(&r.inner.labels);
        Ok(())
    })
}

/// Level at which the clusters were read off; NaN for a null handle.
///
/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bsc_cluster_result_rho_out(result: *const BscClusterResult) -> f64 {
    // SAFETY: null or live handle per contract.
    unsafe { result.as_ref() }.map_or(f64::NAN, |r| r.inner.rho_out)
}

/// # Safety
/// `result` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn bsc_cluster_result_n_clusters(result: *const BscClusterResult) -> usize {
    // SAFETY: null or live handle per contract.
    unsafe { result.as_ref() }.map_or(0, |r| r.inner.n_clusters)
}

/// # Safety
/// `result` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bsc_cluster_result_free(result: *mut BscClusterResult) {
    if !result.is_null() {
        // SAFETY: created by Box::into_raw and not freed before.
        drop(unsafe { Box::from_raw(result) });
    }
}

/// Adjusted Rand index of two labelings of length `n`.
///
/// # Safety
/// `a` and `b` must hold `n` values and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bsc_ari(a: *const i64, b: *const i64, n: usize, out: *mut f64) -> BscStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let (sa, sb): (&[i64], &[i64]) = if n == 0 {
            (&[], &[])
        } else {
            if a.is_null() || b.is_null() {
                return Err(null("labels"));
            }
            // SAFETY: `n` readable values each per contract.
            unsafe { (std::slice::from_raw_parts(a, n), std::slice::from_raw_parts(b, n)) }
        };
        let v = ari(sa, sb).map_err(lib)?;
        // SAFETY: `out` is non-null and writable.
        unsafe { *out = v };
        Ok(())
    })
}
