//! C ABI over `robust-proxy`: load a trained proxy, run inference, check
//! robust feasibility and call the reference solver.
//!
//! Every function returns an [`RpStatus`]; on failure a description is
//! available from [`rp_last_error_message`] on the same thread. Instances
//! are passed as one dataset JSONL line (`{"app": .., "fields": ..}`).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use robust_proxy::domain::LayerMode;
use robust_proxy::problems::{App, Dataset, Instance};
use robust_proxy::solvers::{feasibility_check, solve_instance};
use robust_proxy::{Error, ProxyModel};

/// Result codes. `RP_OK` is zero; everything else is an error.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RpStatus {
    RpOk = 0,
    RpNullPointer = 1,
    RpInvalidUtf8 = 2,
    RpIo = 3,
    RpParse = 4,
    RpShape = 5,
    RpConfig = 6,
    RpUnsupported = 7,
    RpNumerical = 8,
    RpBufferTooSmall = 9,
    RpPanic = 10,
}

/// Opaque handle to a loaded proxy model.
pub struct RpModel {
    inner: ProxyModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(err: &Error) -> RpStatus {
    match err {
        Error::Io(_) => RpStatus::RpIo,
        Error::Json(_) | Error::Csv(_) | Error::Checkpoint(_) | Error::Dataset(_) => RpStatus::RpParse,
        Error::Shape { .. } => RpStatus::RpShape,
        Error::UnsupportedOracle(_) => RpStatus::RpUnsupported,
        Error::Numerical(_) | Error::NonFiniteGradient { .. } | Error::NonFiniteLoss { .. } => RpStatus::RpNumerical,
        _ => RpStatus::RpConfig,
    }
}

struct Fail(RpStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            RpStatus::RpOk
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            RpStatus::RpPanic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(RpStatus::RpNullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(RpStatus::RpInvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn model_arg<'a>(m: *const RpModel) -> Result<&'a ProxyModel, Fail> {
    m.as_ref()
        .map(|m| &m.inner)
        .ok_or_else(|| Fail(RpStatus::RpNullPointer, "model handle is null".into()))
}

fn parse_instance(line: &str) -> Result<(App, Instance), Fail> {
    let mut ds = Dataset::from_jsonl(line.as_bytes())?;
    if ds.instances.len() != 1 {
        return Err(Fail(RpStatus::RpParse, format!("expected one instance, got {}", ds.instances.len())));
    }
    Ok((ds.app, ds.instances.remove(0)))
}

unsafe fn write_out(values: &[f64], out: *mut f64, out_len: usize, written: *mut usize) -> Result<(), Fail> {
    if !written.is_null() {
        *written = values.len();
    }
    if values.len() > out_len {
        return Err(Fail(
            RpStatus::RpBufferTooSmall,
            format!("output needs {} values, buffer holds {out_len}", values.len()),
        ));
    }
    if out.is_null() {
        return Err(Fail(RpStatus::RpNullPointer, "output buffer is null".into()));
    }
    std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, empty after a success.
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a checkpoint JSON file. On success `*out` owns a new handle that
/// must be released with [`rp_model_free`].
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn rp_model_load(path: *const c_char, out: *mut *mut RpModel) -> RpStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail(RpStatus::RpNullPointer, "out is null".into()));
        }
        *out = std::ptr::null_mut();
        let path = str_arg(path, "path")?;
        let inner = ProxyModel::load(Path::new(path))?;
        *out = Box::into_raw(Box::new(RpModel { inner }));
        Ok(())
    })
}

/// Releases a handle from [`rp_model_load`]. Null is ignored.
///
/// # Safety
/// `model` must come from [`rp_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn rp_model_free(model: *mut RpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Feature width expected by the network, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rp_model_input_dim(model: *const RpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.mlp.input_dim())
}

/// Decision width produced by the network, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rp_model_output_dim(model: *const RpModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.mlp.output_dim())
}

/// Deployed (test-mode) decision for one instance. `*written` receives the
/// decision length even when the buffer is too small.
///
/// # Safety
/// `instance_json` must be NUL-terminated; `out` must hold `out_len` doubles;
/// `written` may be null.
#[no_mangle]
pub unsafe extern "C" fn rp_model_predict_json(
    model: *const RpModel,
    instance_json: *const c_char,
    out: *mut f64,
    out_len: usize,
    written: *mut usize,
) -> RpStatus {
    guard(|| {
        let model = model_arg(model)?;
        let (app, inst) = parse_instance(str_arg(instance_json, "instance_json")?)?;
        if app != model.app {
            return Err(Fail(RpStatus::RpConfig, format!("instance app {app} does not match model app {}", model.app)));
        }
        let x = model.decide(&inst, LayerMode::Test)?;
        write_out(&x, out, out_len, written)
    })
}

/// Worst-case feasibility of a decision for one instance.
///
/// # Safety
/// `instance_json` must be NUL-terminated, `decision` must hold `len`
/// doubles, and the output pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn rp_instance_feasibility(
    instance_json: *const c_char,
    decision: *const f64,
    len: usize,
    max_violation: *mut f64,
    feasible: *mut bool,
) -> RpStatus {
    guard(|| {
        if decision.is_null() || max_violation.is_null() || feasible.is_null() {
            return Err(Fail(RpStatus::RpNullPointer, "decision or output pointer is null".into()));
        }
        let (_, inst) = parse_instance(str_arg(instance_json, "instance_json")?)?;
        let x = std::slice::from_raw_parts(decision, len);
        let f = feasibility_check(&inst, x)?;
        *max_violation = f.max_violation;
        *feasible = f.feasible;
        Ok(())
    })
}

/// Robust optimum from the reference solver (box sets only).
///
/// # Safety
/// `instance_json` must be NUL-terminated; `out` must hold `out_len`
/// doubles; `written` may be null; `f_star` must be valid.
#[no_mangle]
pub unsafe extern "C" fn rp_instance_solve(
    instance_json: *const c_char,
    out: *mut f64,
    out_len: usize,
    written: *mut usize,
    f_star: *mut f64,
) -> RpStatus {
    guard(|| {
        if f_star.is_null() {
            return Err(Fail(RpStatus::RpNullPointer, "f_star is null".into()));
        }
        let (app, inst) = parse_instance(str_arg(instance_json, "instance_json")?)?;
        let sol = solve_instance(app, &inst)?;
        write_out(&sol.x_star, out, out_len, written)?;
        *f_star = sol.f_star;
        Ok(())
    })
}
