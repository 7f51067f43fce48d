//! C interface to `dmm`.
//!
//! Every fallible call returns a [`DmmStatus`]. On failure the message is kept
//! per thread and read back with [`dmm_last_error`]. Handles are opaque and
//! released with their matching `_free` function.

// `!(a > b)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use dmm::finite::evolve_density;
use dmm::generator::{ConstantRate, DensityVector, RateMatrix, ScoreTable};
use dmm::run::{sample_run, train_run, SampleOptions};
use dmm::train::RunConfig;
use dmm::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DmmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Numeric = 5,
    HashMismatch = 6,
    Panic = 7,
}

/// Parsed run configuration.
pub struct DmmConfig(RunConfig);

/// Finite-state rate matrix, columns summing to zero.
pub struct DmmRateMatrix(RateMatrix);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(DmmStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn status_of(e: &Error) -> DmmStatus {
    match e {
        Error::Config(_) | Error::Checkpoint(_) | Error::Json(_) => DmmStatus::Config,
        Error::Io(_) => DmmStatus::Io,
        Error::HashMismatch { .. } => DmmStatus::HashMismatch,
        Error::DimensionMismatch { .. } => DmmStatus::InvalidArgument,
        Error::Step { source, .. } => status_of(source),
        _ => DmmStatus::Numeric,
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DmmStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => DmmStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside dmm".into());
            DmmStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(DmmStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(DmmStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

fn check_len(expected: usize, got: usize, what: &str) -> Result<(), Failure> {
    if expected != got {
        return Err(Failure(DmmStatus::InvalidArgument, format!("{what} has length {got}, expected {expected}")));
    }
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn dmm_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dmm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads and validates a JSON run configuration.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn dmm_config_load(path: *const c_char, out: *mut *mut DmmConfig) -> DmmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let cfg = RunConfig::load(&path_arg(path, "path")?)?;
        *out = Box::into_raw(Box::new(DmmConfig(cfg)));
        Ok(())
    })
}

/// Overrides the master seed.
///
/// # Safety
/// `cfg` must come from [`dmm_config_load`].
#[no_mangle]
pub unsafe extern "C" fn dmm_config_set_seed(cfg: *mut DmmConfig, seed: u64) -> DmmStatus {
    guard(|| {
        let cfg = cfg.as_mut().ok_or_else(|| null("cfg"))?;
        cfg.0.train.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or come from [`dmm_config_load`], and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dmm_config_free(cfg: *mut DmmConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Trains and writes the checkpoint, loss log and manifest into `out_dir`.
///
/// # Safety
/// `cfg` must come from [`dmm_config_load`]; `out_dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dmm_train(cfg: *const DmmConfig, out_dir: *const c_char) -> DmmStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        train_run(&cfg.0, &path_arg(out_dir, "out_dir")?)?;
        Ok(())
    })
}

/// Samples from the checkpoint in `out_dir`. A negative `n` or `steps` keeps
/// the configured value.
///
/// # Safety
/// `cfg` must come from [`dmm_config_load`]; `out_dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn dmm_sample(cfg: *const DmmConfig, out_dir: *const c_char, n: i64, steps: i64) -> DmmStatus {
    guard(|| {
        let cfg = cfg.as_ref().ok_or_else(|| null("cfg"))?;
        let opts = SampleOptions {
            n: usize::try_from(n).ok(),
            steps: usize::try_from(steps).ok(),
            ..SampleOptions::default()
        };
        sample_run(&cfg.0, &path_arg(out_dir, "out_dir")?, &opts)?;
        Ok(())
    })
}

/// Builds a rate matrix from `n * n` row-major entries, `rates[y * n + x]`
/// being the rate from `x` to `y`.
///
/// # Safety
/// `rates` must point to `n * n` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn dmm_rate_matrix_new(n: usize, rates: *const f64, out: *mut *mut DmmRateMatrix) -> DmmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let len = n.checked_mul(n).ok_or_else(|| Failure(DmmStatus::InvalidArgument, "n overflows".into()))?;
        let rm = RateMatrix::new(n, slice_arg(rates, len, "rates")?.to_vec())?;
        *out = Box::into_raw(Box::new(DmmRateMatrix(rm)));
        Ok(())
    })
}

/// # Safety
/// `rm` must be null or a live handle, and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dmm_rate_matrix_free(rm: *mut DmmRateMatrix) {
    if !rm.is_null() {
        drop(Box::from_raw(rm));
    }
}

/// Number of states, or 0 for a null handle.
///
/// # Safety
/// `rm` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dmm_rate_matrix_size(rm: *const DmmRateMatrix) -> usize {
    rm.as_ref().map_or(0, |r| r.0.size())
}

/// Copies the `n * n` entries into `out`.
///
/// # Safety
/// `rm` must be a live handle and `out` point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dmm_rate_matrix_rates(rm: *const DmmRateMatrix, out: *mut f64, len: usize) -> DmmStatus {
    guard(|| {
        let rm = rm.as_ref().ok_or_else(|| null("rm"))?;
        check_len(rm.0.as_slice().len(), len, "out")?;
        out_slice(out, len, "out")?.copy_from_slice(rm.0.as_slice());
        Ok(())
    })
}

/// Backward rate matrix for a score table `scores[x * n + y] = s(x, y)`.
///
/// # Safety
/// `rm` must be a live handle, `scores` point to `n * n` doubles and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn dmm_rate_matrix_backward(
    rm: *const DmmRateMatrix,
    scores: *const f64,
    out: *mut *mut DmmRateMatrix,
) -> DmmStatus {
    guard(|| {
        let rm = rm.as_ref().ok_or_else(|| null("rm"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = rm.0.size();
        let table = ScoreTable::new(n, slice_arg(scores, n * n, "scores")?.to_vec())?;
        *out = Box::into_raw(Box::new(DmmRateMatrix(rm.0.backward(&table)?)));
        Ok(())
    })
}

/// Evolves the density `p0` under the constant generator for time `t`,
/// writing the result into `out`.
///
/// # Safety
/// `rm` must be a live handle; `p0` and `out` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dmm_evolve_density(
    rm: *const DmmRateMatrix,
    p0: *const f64,
    len: usize,
    t: f64,
    out: *mut f64,
) -> DmmStatus {
    guard(|| {
        let rm = rm.as_ref().ok_or_else(|| null("rm"))?;
        check_len(rm.0.size(), len, "p0")?;
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Failure(DmmStatus::InvalidArgument, format!("time {t} must be finite and nonnegative")));
        }
        let p = DensityVector::new(slice_arg(p0, len, "p0")?.to_vec(), 0.0)?;
        let q = evolve_density(&ConstantRate(rm.0.clone()), &p, t)?;
        out_slice(out, len, "out")?.copy_from_slice(&q.values);
        Ok(())
    })
}
