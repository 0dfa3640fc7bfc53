//! C ABI over `dgplan`.
//!
//! Cases and solutions are opaque handles owned by the caller and released
//! with the matching `*_free` function. Every fallible call returns a
//! [`DgplanStatus`]; on failure a description is available from
//! [`dgplan_last_error`] until the next call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dgplan::case_model::{builtin_case, parse_case, NetworkCase};
use dgplan::mc_allocation::{apply_dg, DgUnit};
use dgplan::power_flow::{self, PowerFlowError, PowerFlowSolution, SolverOptions};
use dgplan::report::{evaluate_configuration, EvaluationError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DgplanStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ParseError = 3,
    NonConvergence = 4,
    NotRadial = 5,
    InvalidDg = 6,
    BufferTooSmall = 7,
    Panic = 99,
}

/// Opaque feeder model.
pub struct DgplanCase {
    inner: NetworkCase,
}

/// Opaque power-flow result.
pub struct DgplanSolution {
    inner: PowerFlowSolution,
    bus_ids: Vec<usize>,
}

/// Score of a fixed DG configuration against the no-DG base case.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DgplanEvaluation {
    pub base_loss_mw: f64,
    pub loss_mw: f64,
    pub loss_reduction_pct: f64,
    pub voltage_deviation: f64,
    pub v_min: f64,
    pub v_min_bus: usize,
    pub within_band: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn fail(status: DgplanStatus, msg: impl Into<String>) -> DgplanStatus {
    set_error(msg);
    status
}

fn guard<F: FnOnce() -> DgplanStatus>(f: F) -> DgplanStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(DgplanStatus::Panic, "internal panic"))
}

fn pf_status(e: &PowerFlowError) -> DgplanStatus {
    match e {
        PowerFlowError::NonConvergence { .. } => DgplanStatus::NonConvergence,
        PowerFlowError::NotRadial => DgplanStatus::NotRadial,
        PowerFlowError::InvalidTolerance(_) => DgplanStatus::InvalidArgument,
    }
}

unsafe fn read_str<'a>(s: *const c_char) -> Result<&'a str, DgplanStatus> {
    if s.is_null() {
        return Err(fail(DgplanStatus::NullPointer, "string argument is null"));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| fail(DgplanStatus::InvalidArgument, "string is not valid UTF-8"))
}

unsafe fn read_dgs(buses: *const usize, mw: *const f64, count: usize) -> Result<Vec<DgUnit>, DgplanStatus> {
    if count == 0 {
        return Ok(Vec::new());
    }
    if buses.is_null() || mw.is_null() {
        return Err(fail(DgplanStatus::NullPointer, "DG arrays are null"));
    }
    let buses = std::slice::from_raw_parts(buses, count);
    let mw = std::slice::from_raw_parts(mw, count);
    Ok(buses
        .iter()
        .zip(mw)
        .map(|(&bus, &p_mw)| DgUnit { bus, p_mw })
        .collect())
}

fn solver(tol: f64, max_iter: usize) -> SolverOptions {
    let default = SolverOptions::default();
    SolverOptions {
        tol: if tol > 0.0 { tol } else { default.tol },
        max_iter: if max_iter > 0 { max_iter } else { default.max_iter },
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next `dgplan_*` call on the same thread.
#[no_mangle]
pub extern "C" fn dgplan_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dgplan_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a built-in feeder (`"ieee33"`, `"ieee33bw"`, optionally prefixed
/// with `"builtin:"`).
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgplan_case_builtin(name: *const c_char, out: *mut *mut DgplanCase) -> DgplanStatus {
    guard(|| {
        if out.is_null() {
            return fail(DgplanStatus::NullPointer, "out is null");
        }
        let name = match read_str(name) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match builtin_case(name) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DgplanCase { inner }));
                DgplanStatus::Ok
            }
            Err(e) => fail(DgplanStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Parses a MATPOWER-style case from text.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgplan_case_parse(text: *const c_char, out: *mut *mut DgplanCase) -> DgplanStatus {
    guard(|| {
        if out.is_null() {
            return fail(DgplanStatus::NullPointer, "out is null");
        }
        let text = match read_str(text) {
            Ok(s) => s,
            Err(s) => return s,
        };
        match parse_case(text) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DgplanCase { inner }));
                DgplanStatus::Ok
            }
            Err(e) => fail(DgplanStatus::ParseError, e.to_string()),
        }
    })
}

/// # Safety
/// `case` must come from a `dgplan_case_*` constructor and not be freed yet.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn dgplan_case_free(case: *mut DgplanCase) {
    if !case.is_null() {
        drop(Box::from_raw(case));
    }
}

/// # Safety
/// `case` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgplan_case_bus_count(case: *const DgplanCase, out: *mut usize) -> DgplanStatus {
    guard(|| match (case.as_ref(), out.is_null()) {
        (Some(c), false) => {
            *out = c.inner.bus_count();
            DgplanStatus::Ok
        }
        _ => fail(DgplanStatus::NullPointer, "case or out is null"),
    })
}

/// New case with `count` DG units added as active injections.
///
/// # Safety
/// `case` must be a live handle, `buses` and `mw` must each hold `count`
/// elements (they may be null when `count` is 0) and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dgplan_case_with_dg(
    case: *const DgplanCase,
    buses: *const usize,
    mw: *const f64,
    count: usize,
    out: *mut *mut DgplanCase,
) -> DgplanStatus {
    guard(|| {
        let Some(c) = case.as_ref() else {
            return fail(DgplanStatus::NullPointer, "case is null");
        };
        if out.is_null() {
            return fail(DgplanStatus::NullPointer, "out is null");
        }
        let dgs = match read_dgs(buses, mw, count) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match apply_dg(&c.inner, &dgs) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(DgplanCase { inner }));
                DgplanStatus::Ok
            }
            Err(e) => fail(DgplanStatus::InvalidDg, e.to_string()),
        }
    })
}

/// Solves the power flow. `tol <= 0` or `max_iter == 0` select the defaults
/// (1e-8, 50).
///
/// # Safety
/// `case` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgplan_solve(
    case: *const DgplanCase,
    tol: f64,
    max_iter: usize,
    out: *mut *mut DgplanSolution,
) -> DgplanStatus {
    guard(|| {
        let Some(c) = case.as_ref() else {
            return fail(DgplanStatus::NullPointer, "case is null");
        };
        if out.is_null() {
            return fail(DgplanStatus::NullPointer, "out is null");
        }
        match power_flow::solve(&c.inner, &solver(tol, max_iter)) {
            Ok(inner) => {
                let bus_ids = c.inner.buses().iter().map(|b| b.id).collect();
                *out = Box::into_raw(Box::new(DgplanSolution { inner, bus_ids }));
                DgplanStatus::Ok
            }
            Err(e) => fail(pf_status(&e), e.to_string()),
        }
    })
}

/// # Safety
/// `sol` must come from [`dgplan_solve`] and not be freed yet. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn dgplan_solution_free(sol: *mut DgplanSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Total active (MW) and reactive (MVar) loss.
///
/// # Safety
/// `sol` must be a live handle; `p_mw` and `q_mvar` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dgplan_solution_losses(
    sol: *const DgplanSolution,
    p_mw: *mut f64,
    q_mvar: *mut f64,
) -> DgplanStatus {
    guard(|| match sol.as_ref() {
        Some(s) if !p_mw.is_null() && !q_mvar.is_null() => {
            *p_mw = s.inner.p_loss_total;
            *q_mvar = s.inner.q_loss_total;
            DgplanStatus::Ok
        }
        _ => fail(DgplanStatus::NullPointer, "null argument"),
    })
}

/// Lowest voltage magnitude (p.u.) and its external bus id.
///
/// # Safety
/// `sol` must be a live handle; `v` and `bus` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn dgplan_solution_min_voltage(
    sol: *const DgplanSolution,
    v: *mut f64,
    bus: *mut usize,
) -> DgplanStatus {
    guard(|| match sol.as_ref() {
        Some(s) if !v.is_null() && !bus.is_null() => {
            let (vmin, at) = s.inner.min_voltage();
            *v = vmin;
            *bus = s.bus_ids[at];
            DgplanStatus::Ok
        }
        _ => fail(DgplanStatus::NullPointer, "null argument"),
    })
}

/// Copies voltage magnitudes (case bus order) into `buf`. `len` is the
/// buffer capacity; the bus count is always written to `written`.
///
/// # Safety
/// `sol` must be a live handle, `buf` must hold `len` doubles and
/// `written` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dgplan_solution_voltages(
    sol: *const DgplanSolution,
    buf: *mut f64,
    len: usize,
    written: *mut usize,
) -> DgplanStatus {
    guard(|| {
        let Some(s) = sol.as_ref() else {
            return fail(DgplanStatus::NullPointer, "solution is null");
        };
        if written.is_null() {
            return fail(DgplanStatus::NullPointer, "written is null");
        }
        let n = s.inner.v_mag.len();
        *written = n;
        if len < n || buf.is_null() {
            return fail(
                DgplanStatus::BufferTooSmall,
                format!("buffer holds {len} values, {n} needed"),
            );
        }
        ptr::copy_nonoverlapping(s.inner.v_mag.as_ptr(), buf, n);
        DgplanStatus::Ok
    })
}

/// Scores `count` DG units against the case's own no-DG base case, using a
/// uniform `[v_min, v_max]` band for `within_band`.
///
/// # Safety
/// `case` must be a live handle, `buses` and `mw` must each hold `count`
/// elements (null allowed when `count` is 0) and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn dgplan_evaluate(
    case: *const DgplanCase,
    buses: *const usize,
    mw: *const f64,
    count: usize,
    v_min: f64,
    v_max: f64,
    out: *mut DgplanEvaluation,
) -> DgplanStatus {
    guard(|| {
        let Some(c) = case.as_ref() else {
            return fail(DgplanStatus::NullPointer, "case is null");
        };
        if out.is_null() {
            return fail(DgplanStatus::NullPointer, "out is null");
        }
        if v_min.partial_cmp(&v_max) != Some(std::cmp::Ordering::Less) {
            return fail(DgplanStatus::InvalidArgument, "v_min must be below v_max");
        }
        let dgs = match read_dgs(buses, mw, count) {
            Ok(d) => d,
            Err(s) => return s,
        };
        let bands = vec![(v_min, v_max); c.inner.bus_count()];
        match evaluate_configuration(&c.inner, &dgs, &bands, &SolverOptions::default()) {
            Ok(e) => {
                *out = DgplanEvaluation {
                    base_loss_mw: e.base_loss_mw,
                    loss_mw: e.loss_mw,
                    loss_reduction_pct: e.loss_reduction_pct,
                    voltage_deviation: e.voltage_deviation,
                    v_min: e.v_min,
                    v_min_bus: e.v_min_bus,
                    within_band: e.within_band,
                };
                DgplanStatus::Ok
            }
            Err(EvaluationError::PowerFlow(e)) => fail(pf_status(&e), e.to_string()),
            Err(EvaluationError::Allocation(e)) => fail(DgplanStatus::InvalidDg, e.to_string()),
        }
    })
}
