//! C ABI over `duality-core`.
//!
//! Every function returns a [`DualityStatus`]. On failure a message is kept in
//! thread-local storage and can be read with [`duality_last_error`]. Models are
//! opaque: build one with [`duality_model_from_json`] and release it with
//! [`duality_model_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use duality_core::deflator::check_nupbr;
use duality_core::{bessel, dual, primal, Error, Scenario};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DualityStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// The JSON text or its UTF-8 encoding is malformed.
    Parse = 3,
    /// The scenario parsed but violates the tree invariants.
    Validation = 4,
    /// The market admits no strictly positive deflator.
    NoDeflator = 5,
    Solver = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque handle to a validated scenario (tree plus utility field).
pub struct DualityModel {
    scenario: Scenario,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> DualityStatus {
    match e {
        Error::Json(_) => DualityStatus::Parse,
        Error::Schema(_)
        | Error::ProbabilityMismatch { .. }
        | Error::NegativeClock { .. }
        | Error::ClockBoundExceeded { .. }
        | Error::ZeroClockMass => DualityStatus::Validation,
        Error::NupbrFails { .. } => DualityStatus::NoDeflator,
        Error::InvalidArgument(_) | Error::Dimension(_) => DualityStatus::InvalidArgument,
        _ => DualityStatus::Solver,
    }
}

/// Runs `f`, clearing the error slot first and translating errors and panics.
fn guard(f: impl FnOnce() -> Result<(), (DualityStatus, String)>) -> DualityStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DualityStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            DualityStatus::Panic
        }
    }
}

fn core(e: Error) -> (DualityStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (DualityStatus, String) {
    (DualityStatus::NullPointer, format!("{what} is null"))
}

unsafe fn model<'a>(m: *const DualityModel) -> Result<&'a DualityModel, (DualityStatus, String)> {
    m.as_ref().ok_or_else(|| null("model"))
}

/// Copies node values into a caller buffer of `len` doubles.
unsafe fn fill(
    out: *mut f64,
    len: usize,
    values: impl ExactSizeIterator<Item = f64>,
) -> Result<(), (DualityStatus, String)> {
    if out.is_null() {
        return Ok(());
    }
    if len < values.len() {
        return Err((DualityStatus::BufferTooSmall, format!("buffer holds {len} values, {} needed", values.len())));
    }
    for (i, v) in values.enumerate() {
        *out.add(i) = v;
    }
    Ok(())
}

/// Message for the most recent failure on this thread, or NULL after a success.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn duality_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Parses and validates a scenario document. On success `*out` owns a new model.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn duality_model_from_json(json: *const c_char, out: *mut *mut DualityModel) -> DualityStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if json.is_null() {
            return Err(null("json"));
        }
        let text =
            CStr::from_ptr(json).to_str().map_err(|e| (DualityStatus::Parse, format!("scenario is not UTF-8: {e}")))?;
        let scenario = Scenario::parse(text).map_err(core)?;
        *out = Box::into_raw(Box::new(DualityModel { scenario }));
        Ok(())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from [`duality_model_from_json`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn duality_model_free(model: *mut DualityModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of nodes in the tree; node buffers must hold this many doubles.
///
/// # Safety
/// `m` must be a live model and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn duality_model_node_count(m: *const DualityModel, out: *mut usize) -> DualityStatus {
    guard(|| {
        let m = model(m)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.scenario.model.len();
        Ok(())
    })
}

/// Writes whether a strictly positive deflator exists and the margin `eps_star`.
/// Either output may be NULL.
///
/// # Safety
/// `m` must be a live model; non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn duality_check_nupbr(
    m: *const DualityModel,
    holds: *mut bool,
    eps_star: *mut f64,
) -> DualityStatus {
    guard(|| {
        let m = model(m)?;
        let rep = check_nupbr(&m.scenario.model).map_err(core)?;
        if let Some(h) = holds.as_mut() {
            *h = rep.holds;
        }
        if let Some(e) = eps_star.as_mut() {
            *e = rep.eps_star;
        }
        Ok(())
    })
}

/// Maximises expected utility from initial capital `x`. Writes `u(x)` and, when
/// `consumption` is not NULL, the optimal plan (one value per node, BFS order).
///
/// # Safety
/// `m` must be a live model; `consumption` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn duality_solve_primal(
    m: *const DualityModel,
    x: f64,
    tol: f64,
    value: *mut f64,
    consumption: *mut f64,
    len: usize,
) -> DualityStatus {
    guard(|| {
        let m = model(m)?;
        let sol = primal::solve_primal(&m.scenario.model, &m.scenario.utility, x, tol).map_err(core)?;
        fill(consumption, len, sol.plan.values().iter().copied())?;
        if let Some(v) = value.as_mut() {
            *v = sol.value;
        }
        Ok(())
    })
}

/// Minimises the dual problem at `y`. Writes `v(y)` and, when `process` is not
/// NULL, the optimal dual process `Y`; nodes without clock mass get NaN.
///
/// # Safety
/// `m` must be a live model; `process` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn duality_solve_dual(
    m: *const DualityModel,
    y: f64,
    tol: f64,
    value: *mut f64,
    process: *mut f64,
    len: usize,
) -> DualityStatus {
    guard(|| {
        let m = model(m)?;
        let sol = dual::solve_dual(&m.scenario.model, &m.scenario.utility, y, tol).map_err(core)?;
        fill(process, len, sol.yhat.iter().map(|v| v.unwrap_or(f64::NAN)))?;
        if let Some(v) = value.as_mut() {
            *v = sol.value;
        }
        Ok(())
    })
}

/// Monte Carlo estimate of `E[1/R_t]` for a 3-d Bessel process from 1, with its
/// standard error. Reproducible for a given `seed`.
///
/// # Safety
/// Non-NULL outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn duality_bessel_defect(
    t: f64,
    paths: u64,
    seed: u64,
    estimate: *mut f64,
    std_error: *mut f64,
) -> DualityStatus {
    guard(|| {
        let est = bessel::estimate_defect(t, paths, seed).map_err(core)?;
        if let Some(e) = estimate.as_mut() {
            *e = est.estimate;
        }
        if let Some(s) = std_error.as_mut() {
            *s = est.std_error;
        }
        Ok(())
    })
}
