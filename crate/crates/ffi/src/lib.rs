//! C ABI over the analysis library.
//!
//! Every function returns a [`GssaStatus`]; on failure the message is kept in
//! a thread-local slot readable through [`gssa_last_error`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use gridform_ssa::design::{mstar, necessary_condition};
use gridform_ssa::devices::park_extremes;
use gridform_ssa::modal::{self, ModalConfig, Mode, ModeClass};
use gridform_ssa::model::GridModel;
use gridform_ssa::sensitivity::{asymptotic_matrices, sensitivity_reports};
use gridform_ssa::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GssaStatus {
    Ok = 0,
    /// Null pointer, short buffer or out-of-range index.
    InvalidArgument = 1,
    /// Malformed case or violated model precondition.
    Validation = 2,
    /// Eigensolver, tracking or other numerical failure.
    Numerical = 3,
    /// Unexpected internal failure.
    Internal = 4,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GssaModeClass {
    InterArea = 0,
    Local = 1,
    Real = 2,
    Inverter = 3,
}

/// Network model with its device park.
pub struct GssaModel {
    inner: GridModel,
}

/// Modal analysis result bound to the model state it was computed from.
pub struct GssaModes {
    modes: Vec<Mode>,
    mp: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GssaModeInfo {
    pub re: f64,
    pub im: f64,
    pub freq_hz: f64,
    /// Damping ratio as a fraction.
    pub damping: f64,
    pub class_: i32,
    pub residual: f64,
    pub slow_ratio: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GssaSensitivity {
    pub re: f64,
    pub im: f64,
    pub fd_re: f64,
    pub fd_im: f64,
    pub rel_err: f64,
    pub cond: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct GssaDesign {
    /// Droop lower bound; +inf when unbounded.
    pub mstar: f64,
    pub preconditions: bool,
    pub condition_lhs: f64,
    pub condition_holds: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: GssaStatus, msg: impl Into<String>) -> GssaStatus {
    set_error(msg.into());
    status
}

fn from_error(e: Error) -> GssaStatus {
    let status = if e.exit_code() == 1 {
        GssaStatus::Validation
    } else {
        GssaStatus::Numerical
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> GssaStatus) -> GssaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(GssaStatus::Internal, "internal panic"),
    }
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(GssaStatus::InvalidArgument, concat!("null pointer: ", stringify!($p)));
        })+
    };
}

/// Message of the last failure on this thread, or null. Valid until the next
/// call into the library from the same thread.
#[no_mangle]
pub extern "C" fn gssa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn gssa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parse a case document and build the model.
///
/// # Safety
/// `json` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gssa_model_from_json(json: *const c_char, out: *mut *mut GssaModel) -> GssaStatus {
    guard(|| {
        non_null!(json, out);
        let text = match CStr::from_ptr(json).to_str() {
            Ok(t) => t,
            Err(e) => return fail(GssaStatus::Validation, format!("case is not UTF-8: {e}")),
        };
        match GridModel::from_json(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(GssaModel { inner }));
                GssaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `model` must come from [`gssa_model_from_json`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gssa_model_free(model: *mut GssaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Generator count, inverter count and state dimension `2 n_g + n_i`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gssa_model_dims(
    model: *const GssaModel,
    n_g: *mut usize,
    n_i: *mut usize,
    n_states: *mut usize,
) -> GssaStatus {
    guard(|| {
        non_null!(model, n_g, n_i, n_states);
        let m = &(*model).inner;
        *n_g = m.jac.n_g;
        *n_i = m.jac.n_i;
        *n_states = 2 * m.jac.n_g + m.jac.n_i;
        GssaStatus::Ok
    })
}

/// Set a uniform droop setting m̂_p (fraction) on every inverter.
///
/// # Safety
/// `model` must be valid.
#[no_mangle]
pub unsafe extern "C" fn gssa_model_set_droop(model: *mut GssaModel, setting: f64) -> GssaStatus {
    guard(|| {
        non_null!(model);
        let m = &mut (*model).inner;
        match m.with_droop_setting(setting) {
            Ok(next) => {
                *m = next;
                GssaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Droop gain entering the state matrix.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gssa_model_droop_gain(model: *const GssaModel, out: *mut f64) -> GssaStatus {
    guard(|| {
        non_null!(model, out);
        *out = (*model).inner.park.droop_gain();
        GssaStatus::Ok
    })
}

/// Copy the state matrix, row-major, into `buf` of `len ≥ n_states²` doubles.
///
/// # Safety
/// `buf` must be writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gssa_state_matrix(model: *const GssaModel, buf: *mut f64, len: usize) -> GssaStatus {
    guard(|| {
        non_null!(model, buf);
        let sm = match (*model).inner.state_matrix() {
            Ok(s) => s,
            Err(e) => return from_error(e),
        };
        let n = sm.dim();
        if len < n * n {
            return fail(GssaStatus::InvalidArgument, format!("buffer holds {len} values, need {}", n * n));
        }
        let out = std::slice::from_raw_parts_mut(buf, n * n);
        for r in 0..n {
            for c in 0..n {
                out[r * n + c] = sm.a[(r, c)];
            }
        }
        GssaStatus::Ok
    })
}

/// Modal analysis with inter-area band `[band_lo, band_hi]` Hz.
///
/// # Safety
/// `model` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn gssa_modes_compute(
    model: *const GssaModel,
    band_lo: f64,
    band_hi: f64,
    out: *mut *mut GssaModes,
) -> GssaStatus {
    guard(|| {
        non_null!(model, out);
        if !(band_lo >= 0.0 && band_lo < band_hi) {
            return fail(GssaStatus::Validation, format!("band must satisfy 0 ≤ lo < hi, got ({band_lo}, {band_hi})"));
        }
        let m = &(*model).inner;
        let cfg = ModalConfig {
            band: (band_lo, band_hi),
            ..ModalConfig::default()
        };
        match modal::analyze(&m.jac, &m.park, &cfg) {
            Ok(modes) => {
                *out = Box::into_raw(Box::new(GssaModes {
                    modes,
                    mp: m.park.droop_gain(),
                }));
                GssaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `modes` must come from [`gssa_modes_compute`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn gssa_modes_free(modes: *mut GssaModes) {
    if !modes.is_null() {
        drop(Box::from_raw(modes));
    }
}

/// Number of modes (eigenvalues with Im λ ≥ 0).
///
/// # Safety
/// `modes` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn gssa_modes_count(modes: *const GssaModes) -> usize {
    if modes.is_null() {
        0
    } else {
        (*modes).modes.len()
    }
}

fn class_code(c: ModeClass) -> GssaModeClass {
    match c {
        ModeClass::InterArea => GssaModeClass::InterArea,
        ModeClass::Local => GssaModeClass::Local,
        ModeClass::Real => GssaModeClass::Real,
        ModeClass::Inverter => GssaModeClass::Inverter,
    }
}

unsafe fn mode_at<'a>(modes: *const GssaModes, index: usize) -> Result<&'a Mode, GssaStatus> {
    let list = &(*modes).modes;
    list.get(index).ok_or_else(|| {
        fail(
            GssaStatus::InvalidArgument,
            format!("mode index {index} out of range ({} modes)", list.len()),
        )
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn gssa_modes_get(modes: *const GssaModes, index: usize, out: *mut GssaModeInfo) -> GssaStatus {
    guard(|| {
        non_null!(modes, out);
        let m = match mode_at(modes, index) {
            Ok(m) => m,
            Err(s) => return s,
        };
        *out = GssaModeInfo {
            re: m.lambda.re,
            im: m.lambda.im,
            freq_hz: m.freq_hz,
            damping: m.damping,
            class_: class_code(m.class) as i32,
            residual: m.residual(),
            slow_ratio: m.slow_ratio,
        };
        GssaStatus::Ok
    })
}

fn stale(model: &GridModel, modes: &GssaModes) -> Option<GssaStatus> {
    (model.park.droop_gain() != modes.mp).then(|| {
        fail(
            GssaStatus::InvalidArgument,
            "modes were computed for a different droop setting; recompute them",
        )
    })
}

/// Analytic dλ/dm_p for one mode with a finite-difference cross-check at
/// relative step `fd_step` (0 selects the default).
///
/// # Safety
/// Pointers must be valid; `modes` must come from the same model.
#[no_mangle]
pub unsafe extern "C" fn gssa_sensitivity(
    model: *const GssaModel,
    modes: *const GssaModes,
    index: usize,
    fd_step: f64,
    out: *mut GssaSensitivity,
) -> GssaStatus {
    guard(|| {
        non_null!(model, modes, out);
        let m = &(*model).inner;
        if let Some(s) = stale(m, &*modes) {
            return s;
        }
        let mode = match mode_at(modes, index) {
            Ok(x) => x,
            Err(s) => return s,
        };
        let h = if fd_step == 0.0 { gridform_ssa::sensitivity::FD_STEP_REL } else { fd_step };
        if !(h > 0.0 && h < 1.0) {
            return fail(GssaStatus::Validation, format!("fd_step must lie in (0, 1), got {h}"));
        }
        match sensitivity_reports(&m.jac, &m.park, &[mode], h) {
            Ok(r) => {
                let r = &r[0];
                *out = GssaSensitivity {
                    re: r.analytic.formula.0.re,
                    im: r.analytic.formula.0.im,
                    fd_re: r.fd.richardson.0.re,
                    fd_im: r.fd.richardson.0.im,
                    rel_err: r.rel_err,
                    cond: r.analytic.cond,
                };
                GssaStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Droop lower bound m*(λ) and the necessary condition for one mode.
///
/// # Safety
/// Pointers must be valid; `modes` must come from the same model.
#[no_mangle]
pub unsafe extern "C" fn gssa_mstar(
    model: *const GssaModel,
    modes: *const GssaModes,
    index: usize,
    out: *mut GssaDesign,
) -> GssaStatus {
    guard(|| {
        non_null!(model, modes, out);
        let m = &(*model).inner;
        if let Some(s) = stale(m, &*modes) {
            return s;
        }
        let mode = match mode_at(modes, index) {
            Ok(x) => x,
            Err(s) => return s,
        };
        let mp = m.park.droop_gain();
        let ms = mstar(mode.lambda, mode.damping, &park_extremes(&m.park), m.strength.gamma_u, m.strength.gamma_l);
        let aset = match asymptotic_matrices(&m.jac, &m.park, mode.lambda, mp) {
            Ok(a) => a,
            Err(e) => return from_error(e),
        };
        let t1 = necessary_condition(&aset, mp);
        *out = GssaDesign {
            mstar: ms.value,
            preconditions: ms.preconditions,
            condition_lhs: t1.lhs,
            condition_holds: t1.holds,
        };
        GssaStatus::Ok
    })
}
