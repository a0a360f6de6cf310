//! C interface to `hfnet`.
//!
//! Objects are opaque handles owned by the caller and released with the
//! matching `*_free` function. Every function returns an [`HfnetStatus`];
//! on failure [`hfnet_last_error`] describes the problem. Array outputs use a
//! two-call pattern: pass null (or a short buffer) to learn the size, then call
//! again with room for it.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use hfnet::fixtures;
use hfnet::hfnmcf::{SolveError, Trajectories, DEFAULT_RESIDUAL_TOL};
use hfnet::model::{ModelError, SystemModel};
use hfnet::pipeline::{analyze, Error, Method};
use hfnet::validate_model;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidModel = 5,
    Derive = 6,
    Underdetermined = 7,
    Inconsistent = 8,
    BufferTooSmall = 9,
    InvalidArgument = 10,
    Panic = 11,
    Other = 12,
}

/// Loaded system model.
pub struct HfnetModel {
    model: SystemModel,
}

/// Time histories with labels.
pub struct HfnetTrajectory {
    traj: Trajectories,
    labels: Vec<CString>,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: HfnetStatus, msg: impl Into<String>) -> HfnetStatus {
    set_error(msg);
    status
}

fn status_of(e: &Error) -> HfnetStatus {
    match e {
        Error::Model(ModelError::Io { .. }) | Error::Io { .. } => HfnetStatus::Io,
        Error::Model(_) => HfnetStatus::Parse,
        Error::Invalid(_) | Error::Net(_) | Error::Tree(_) => HfnetStatus::InvalidModel,
        Error::Derive(_) | Error::Oracle(_) => HfnetStatus::Derive,
        Error::Solve(SolveError::Underdetermined { .. }) => HfnetStatus::Underdetermined,
        Error::Solve(SolveError::Inconsistent { .. }) | Error::Solve(SolveError::Numerical { .. }) => {
            HfnetStatus::Inconsistent
        }
        Error::Solve(_) | Error::Usage(_) => HfnetStatus::InvalidArgument,
    }
}

fn from_error(e: Error) -> HfnetStatus {
    let s = status_of(&e);
    fail(s, e.to_string())
}

fn guard(f: impl FnOnce() -> HfnetStatus) -> HfnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == HfnetStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(HfnetStatus::Panic, "internal panic"),
    }
}

unsafe fn text<'a>(p: *const c_char) -> Result<&'a str, HfnetStatus> {
    if p.is_null() {
        return Err(fail(HfnetStatus::NullPointer, "null string argument"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(HfnetStatus::InvalidUtf8, "argument is not UTF-8"))
}

unsafe fn model_ref<'a>(m: *const HfnetModel) -> Result<&'a HfnetModel, HfnetStatus> {
    m.as_ref().ok_or_else(|| fail(HfnetStatus::NullPointer, "null model handle"))
}

fn store_model(model: SystemModel, out: *mut *mut HfnetModel) -> HfnetStatus {
    unsafe { *out = Box::into_raw(Box::new(HfnetModel { model })) };
    HfnetStatus::Ok
}

/// Copies `src` into `dst` when it fits; always reports the needed length.
unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize, needed: *mut usize) -> HfnetStatus {
    if !needed.is_null() {
        *needed = src.len();
    }
    if src.is_empty() {
        return HfnetStatus::Ok;
    }
    if dst.is_null() || len < src.len() {
        return fail(
            HfnetStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        );
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    HfnetStatus::Ok
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn hfnet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses a model from JSON text (linear graph or bond graph).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hfnet_model_from_json(json: *const c_char, out: *mut *mut HfnetModel) -> HfnetStatus {
    guard(|| {
        if out.is_null() {
            return fail(HfnetStatus::NullPointer, "null output pointer");
        }
        let text = match text(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match SystemModel::from_json_str(text) {
            Ok(m) => store_model(m, out),
            Err(e) => from_error(e.into()),
        }
    })
}

/// Loads a model file, or a bundled fixture when `path` names one (e.g. `"electrical"`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hfnet_model_load(path: *const c_char, out: *mut *mut HfnetModel) -> HfnetStatus {
    guard(|| {
        if out.is_null() {
            return fail(HfnetStatus::NullPointer, "null output pointer");
        }
        let path = match text(path) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match fixtures::resolve(path) {
            Ok(m) => store_model(m, out),
            Err(e) => from_error(e.into()),
        }
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hfnet_model_free(model: *mut HfnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Counts invariant violations. Returns `HFNET_STATUS_INVALID_MODEL` when there
/// are any; the error message lists them.
///
/// # Safety
/// `model` must be a live handle; `issues` may be null.
#[no_mangle]
pub unsafe extern "C" fn hfnet_model_validate(model: *const HfnetModel, issues: *mut usize) -> HfnetStatus {
    guard(|| {
        let m = match model_ref(model) {
            Ok(m) => m,
            Err(s) => return s,
        };
        let report = validate_model(&m.model);
        if !issues.is_null() {
            *issues = report.issues.len();
        }
        if report.is_empty() {
            HfnetStatus::Ok
        } else {
            fail(HfnetStatus::InvalidModel, report.to_string())
        }
    })
}

/// Derives `dx/dt = A x + B u`. Writes the state count to `n` and input count
/// to `m`, then A (n×n) and B (n×m) row-major when the buffers are large enough.
///
/// # Safety
/// `model` must be a live handle; buffers must hold `a_len` / `b_len` values or be null.
#[no_mangle]
pub unsafe extern "C" fn hfnet_state_space(
    model: *const HfnetModel,
    n: *mut usize,
    m: *mut usize,
    a: *mut f64,
    a_len: usize,
    b: *mut f64,
    b_len: usize,
) -> HfnetStatus {
    guard(|| {
        let h = match model_ref(model) {
            Ok(h) => h,
            Err(s) => return s,
        };
        let d = match analyze(h.model.clone()).and_then(|a| a.derivation()) {
            Ok(d) => d,
            Err(e) => return from_error(e),
        };
        let ss = d.state_space;
        if !n.is_null() {
            *n = ss.a.nrows();
        }
        if !m.is_null() {
            *m = ss.b.ncols();
        }
        let a_rows: Vec<f64> = ss.a.transpose().iter().copied().collect();
        let b_rows: Vec<f64> = ss.b.transpose().iter().copied().collect();
        match copy_out(&a_rows, a, a_len, ptr::null_mut()) {
            HfnetStatus::Ok => copy_out(&b_rows, b, b_len, ptr::null_mut()),
            s => s,
        }
    })
}

fn store_traj(traj: Trajectories, out: *mut *mut HfnetTrajectory) -> HfnetStatus {
    let labels = traj
        .labels
        .iter()
        .map(|l| CString::new(l.as_str()).unwrap_or_default())
        .collect();
    unsafe { *out = Box::into_raw(Box::new(HfnetTrajectory { traj, labels })) };
    HfnetStatus::Ok
}

fn grid_args(dt: f64, steps: usize) -> (Option<f64>, Option<usize>) {
    ((dt > 0.0).then_some(dt), (steps > 0).then_some(steps))
}

/// Solves the time-stepped flow problem. `dt <= 0` or `steps == 0` fall back
/// to the model's own grid.
///
/// # Safety
/// `model` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hfnet_solve(
    model: *const HfnetModel,
    dt: f64,
    steps: usize,
    out: *mut *mut HfnetTrajectory,
) -> HfnetStatus {
    guard(|| {
        if out.is_null() {
            return fail(HfnetStatus::NullPointer, "null output pointer");
        }
        let h = match model_ref(model) {
            Ok(h) => h,
            Err(s) => return s,
        };
        let (dt, steps) = grid_args(dt, steps);
        let result = analyze(h.model.clone()).and_then(|a| {
            let grid = a.grid(dt, steps)?;
            a.solve(grid, &BTreeMap::new(), DEFAULT_RESIDUAL_TOL)
        });
        match result {
            Ok(s) => store_traj(s.trajectories, out),
            Err(e) => from_error(e),
        }
    })
}

/// Integrates the derived state-space model; `method` 0 is forward Euler, 1 is RK4.
///
/// # Safety
/// `model` must be a live handle and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn hfnet_simulate(
    model: *const HfnetModel,
    dt: f64,
    steps: usize,
    method: c_int,
    out: *mut *mut HfnetTrajectory,
) -> HfnetStatus {
    guard(|| {
        if out.is_null() {
            return fail(HfnetStatus::NullPointer, "null output pointer");
        }
        let h = match model_ref(model) {
            Ok(h) => h,
            Err(s) => return s,
        };
        let method = match method {
            0 => Method::Euler,
            1 => Method::Rk4,
            other => return fail(HfnetStatus::InvalidArgument, format!("unknown method {other}")),
        };
        let (dt, steps) = grid_args(dt, steps);
        let result = analyze(h.model.clone()).and_then(|a| {
            let grid = a.grid(dt, steps)?;
            let d = a.derivation()?;
            a.simulate(&d, grid, &BTreeMap::new(), method)
        });
        match result {
            Ok(t) => store_traj(t, out),
            Err(e) => from_error(e),
        }
    })
}

/// Number of time steps and of variables.
///
/// # Safety
/// `traj` must be a live handle; outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn hfnet_trajectory_dims(
    traj: *const HfnetTrajectory,
    steps: *mut usize,
    variables: *mut usize,
) -> HfnetStatus {
    guard(|| {
        let Some(t) = traj.as_ref() else {
            return fail(HfnetStatus::NullPointer, "null trajectory handle");
        };
        if !steps.is_null() {
            *steps = t.traj.times.len();
        }
        if !variables.is_null() {
            *variables = t.traj.labels.len();
        }
        HfnetStatus::Ok
    })
}

/// Label of variable `index`, such as `U[R1]` or `y[V_C1]`. Owned by the
/// trajectory; null when out of range.
///
/// # Safety
/// `traj` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hfnet_trajectory_label(traj: *const HfnetTrajectory, index: usize) -> *const c_char {
    match traj.as_ref().and_then(|t| t.labels.get(index)) {
        Some(l) => l.as_ptr(),
        None => ptr::null(),
    }
}

/// Copies the sample times.
///
/// # Safety
/// `traj` must be a live handle; `buf` must hold `len` values or be null.
#[no_mangle]
pub unsafe extern "C" fn hfnet_trajectory_times(
    traj: *const HfnetTrajectory,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> HfnetStatus {
    guard(|| {
        let Some(t) = traj.as_ref() else {
            return fail(HfnetStatus::NullPointer, "null trajectory handle");
        };
        copy_out(&t.traj.times, buf, len, needed)
    })
}

/// Copies the values row-major: step by step, variables in label order.
///
/// # Safety
/// `traj` must be a live handle; `buf` must hold `len` values or be null.
#[no_mangle]
pub unsafe extern "C" fn hfnet_trajectory_data(
    traj: *const HfnetTrajectory,
    buf: *mut f64,
    len: usize,
    needed: *mut usize,
) -> HfnetStatus {
    guard(|| {
        let Some(t) = traj.as_ref() else {
            return fail(HfnetStatus::NullPointer, "null trajectory handle");
        };
        let rows: Vec<f64> = t.traj.values.transpose().iter().copied().collect();
        copy_out(&rows, buf, len, needed)
    })
}

/// Releases a trajectory. Null is ignored.
///
/// # Safety
/// `traj` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hfnet_trajectory_free(traj: *mut HfnetTrajectory) {
    if !traj.is_null() {
        drop(Box::from_raw(traj));
    }
}
