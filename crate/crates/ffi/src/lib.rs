//! C ABI over the `uqgroup` library.
//!
//! Every fallible function returns a [`UqgStatus`]; on failure the message is
//! kept per thread and read with [`uqg_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function. Strings returned
//! by the library are released with [`uqg_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use uqgroup::grouping::{compute_r, group_by_key, group_natural, Strategy};
use uqgroup::harness::{adaptive_run, emit_reports, RunConfig, RunReport, StopReason};
use uqgroup::Error;

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UqgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Domain = 4,
    Numerical = 5,
    Io = 6,
    Json = 7,
    NotFound = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UqgStopReason {
    ToleranceMet = 0,
    BudgetExhausted = 1,
    Aborted = 2,
}

/// Opaque result of an adaptive run.
pub struct UqgReport {
    inner: RunReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn status_of(err: &Error) -> UqgStatus {
    match err {
        Error::Config(_) => UqgStatus::Config,
        Error::Domain(_) | Error::IncompleteData(_) => UqgStatus::Domain,
        Error::Numerical(_) | Error::Assembly(_) => UqgStatus::Numerical,
        Error::Io { .. } | Error::Csv(_) => UqgStatus::Io,
        Error::Json(_) => UqgStatus::Json,
    }
}

fn fail(status: UqgStatus, msg: impl Into<String>) -> UqgStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> Result<(), UqgStatus>) -> UqgStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => UqgStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(UqgStatus::Panic, "panic inside uqgroup"),
    }
}

fn lib_err(e: Error) -> UqgStatus {
    let s = status_of(&e);
    fail(s, e.to_string())
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, UqgStatus> {
    if p.is_null() {
        return Err(fail(UqgStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(UqgStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn report_arg<'a>(p: *const UqgReport) -> Result<&'a RunReport, UqgStatus> {
    p.as_ref()
        .map(|r| &r.inner)
        .ok_or_else(|| fail(UqgStatus::NullPointer, "report is null"))
}

unsafe fn out_arg<'a, T>(p: *mut T) -> Result<&'a mut T, UqgStatus> {
    p.as_mut()
        .ok_or_else(|| fail(UqgStatus::NullPointer, "output pointer is null"))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn uqg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length excluding the NUL, or
/// 0 if there is no error. `buf` may be null to query the length.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn uqg_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && cap > 0 {
            let n = bytes.len().min(cap - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Run the adaptive loop for a JSON configuration. On success `*out` owns a
/// new report; on failure it is set to null. A failed solve is not an error:
/// the report carries stop reason `ABORTED` and the levels completed so far.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn uqg_run_json(
    config_json: *const c_char,
    out: *mut *mut UqgReport,
) -> UqgStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let text = str_arg(config_json, "config_json")?;
        let cfg = RunConfig::from_json(text).map_err(lib_err)?;
        let report = adaptive_run(cfg).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(UqgReport { inner: report }));
        Ok(())
    })
}

/// Release a report. Null is ignored.
///
/// # Safety
/// `report` must be null or come from [`uqg_run_json`] and not be used again.
#[no_mangle]
pub unsafe extern "C" fn uqg_report_free(report: *mut UqgReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `report` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn uqg_report_stop_reason(
    report: *const UqgReport,
    out: *mut UqgStopReason,
) -> UqgStatus {
    guard(|| {
        let r = report_arg(report)?;
        *out_arg(out)? = match r.stop_reason {
            StopReason::ToleranceMet => UqgStopReason::ToleranceMet,
            StopReason::BudgetExhausted => UqgStopReason::BudgetExhausted,
            StopReason::Aborted => UqgStopReason::Aborted,
        };
        Ok(())
    })
}

/// Number of samples evaluated.
///
/// # Safety
/// `report` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn uqg_report_n_samples(
    report: *const UqgReport,
    out: *mut usize,
) -> UqgStatus {
    guard(|| {
        let r = report_arg(report)?;
        *out_arg(out)? = r.samples.len();
        Ok(())
    })
}

/// Number of grid levels processed.
///
/// # Safety
/// `report` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn uqg_report_n_levels(
    report: *const UqgReport,
    out: *mut usize,
) -> UqgStatus {
    guard(|| {
        let r = report_arg(report)?;
        *out_arg(out)? = r.levels.len();
        Ok(())
    })
}

/// Mean of the QoI surrogate. `NOT_FOUND` if no level completed.
///
/// # Safety
/// `report` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn uqg_report_qoi_mean(report: *const UqgReport, out: *mut f64) -> UqgStatus {
    guard(|| {
        let r = report_arg(report)?;
        let out = out_arg(out)?;
        *out = r
            .qoi_mean
            .ok_or_else(|| fail(UqgStatus::NotFound, "no QoI surrogate"))?;
        Ok(())
    })
}

/// Total `R` for a strategy tag (`"nat"`, `"par"`, `"sur"`, `"its"`) and
/// ensemble size. `NOT_FOUND` if that pair was not requested.
///
/// # Safety
/// `report` and `out` must be valid pointers, `strategy` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn uqg_report_r(
    report: *const UqgReport,
    strategy: *const c_char,
    ensemble_size: usize,
    out: *mut f64,
) -> UqgStatus {
    guard(|| {
        let r = report_arg(report)?;
        let tag = str_arg(strategy, "strategy")?;
        let out = out_arg(out)?;
        let s: Strategy = tag.parse().map_err(lib_err)?;
        *out = r.r(s, ensemble_size).ok_or_else(|| {
            fail(
                UqgStatus::NotFound,
                format!("no R for strategy {tag} with S={ensemble_size}"),
            )
        })?;
        Ok(())
    })
}

/// Write the CSV and JSON reports into `out_dir` (created if missing).
///
/// # Safety
/// `report` must be valid, `out_dir` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn uqg_report_write(
    report: *const UqgReport,
    out_dir: *const c_char,
) -> UqgStatus {
    guard(|| {
        let r = report_arg(report)?;
        let dir = Path::new(str_arg(out_dir, "out_dir")?);
        std::fs::create_dir_all(dir).map_err(|e| fail(UqgStatus::Io, e.to_string()))?;
        emit_reports(r, dir).map_err(lib_err)?;
        Ok(())
    })
}

/// Serialize the full report as JSON. `*out` receives a string to release
/// with [`uqg_string_free`].
///
/// # Safety
/// `report` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn uqg_report_to_json(
    report: *const UqgReport,
    out: *mut *mut c_char,
) -> UqgStatus {
    guard(|| {
        let out = out_arg(out)?;
        *out = ptr::null_mut();
        let r = report_arg(report)?;
        let text = serde_json::to_string(r).map_err(|e| fail(UqgStatus::Json, e.to_string()))?;
        *out = CString::new(text)
            .map_err(|e| fail(UqgStatus::Json, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn uqg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Group `n` iteration counts into ensembles of `ensemble_size` and return
/// the ratio of padded ensemble cost to total iterations. With `sorted` the
/// counts are grouped in ascending order, otherwise in the given order.
///
/// # Safety
/// `iterations` must point to `n` readable values and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn uqg_grouping_r(
    iterations: *const f64,
    n: usize,
    ensemble_size: usize,
    sorted: bool,
    out: *mut f64,
) -> UqgStatus {
    guard(|| {
        let out = out_arg(out)?;
        if iterations.is_null() {
            return Err(fail(UqgStatus::NullPointer, "iterations is null"));
        }
        let vals = std::slice::from_raw_parts(iterations, n);
        let ids: Vec<usize> = (0..n).collect();
        let plan = if sorted {
            let key = ids.iter().map(|&i| (i, vals[i])).collect();
            group_by_key(1, Strategy::Its, &ids, &key, ensemble_size)
        } else {
            group_natural(1, Strategy::Nat, &ids, ensemble_size)
        }
        .map_err(lib_err)?;
        let lookup = ids.iter().map(|&i| (i, vals[i])).collect();
        let slots = plan.slot_values(&lookup).map_err(lib_err)?;
        *out = compute_r(&[(&plan, &slots)]).map_err(lib_err)?.total;
        Ok(())
    })
}
