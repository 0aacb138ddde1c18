//! C interface to the vrpvp solver.
//!
//! Instances and reports are opaque handles owned by the caller and released
//! with their `_free` functions. Every fallible call returns a [`VrpvpStatus`];
//! on failure [`vrpvp_last_error`] describes the problem for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::time::Duration;

use vrpvp::cost::{apply_precision, matrix_for_instance};
use vrpvp::model::parse_instance;
use vrpvp::{solve_vrpvp, CostMatrix, CostUnit, Error, Instance, ObjectiveMode, SolveOptions, SolveReport};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VrpvpStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    InvalidInstance = 4,
    Dimension = 5,
    InvalidArgument = 6,
    Lp = 7,
    Io = 8,
    Transport = 9,
    OutOfRange = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VrpvpObjective {
    MaxMin = 0,
    /// Total of `VrpvpOptions::stakeholder` (1-based).
    Stakeholder = 1,
    /// Unweighted sum over stakeholders.
    Sum = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VrpvpOptions {
    pub objective: VrpvpObjective,
    pub stakeholder: u32,
    /// Columns added per pricing round; 0 adds every violating route.
    pub max_columns: u64,
    pub iteration_cap: u64,
    /// Seconds; 0 or negative means no limit.
    pub time_limit_s: f64,
    pub workers: u32,
}

/// Opaque instance handle.
pub struct VrpvpInstance {
    instance: Instance,
    base_dir: Option<PathBuf>,
}

/// Opaque solve report handle.
pub struct VrpvpReport {
    report: SolveReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> VrpvpStatus {
    match err {
        Error::Parse(_) => VrpvpStatus::Parse,
        Error::InvalidInstance(_) | Error::NoReachableSite => VrpvpStatus::InvalidInstance,
        Error::Dimension(_) | Error::SubsetTooLarge { .. } => VrpvpStatus::Dimension,
        Error::InvalidArgument(_) => VrpvpStatus::InvalidArgument,
        Error::Lp(_) => VrpvpStatus::Lp,
        Error::Io(_) => VrpvpStatus::Io,
        Error::Transport(_) | Error::Remote { .. } => VrpvpStatus::Transport,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (VrpvpStatus, String)>) -> VrpvpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VrpvpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            VrpvpStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (VrpvpStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (VrpvpStatus, String) {
    (VrpvpStatus::NullArgument, format!("{what} is null"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (VrpvpStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (VrpvpStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vrpvp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vrpvp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn vrpvp_options_default() -> VrpvpOptions {
    VrpvpOptions {
        objective: VrpvpObjective::MaxMin,
        stakeholder: 1,
        max_columns: 0,
        iteration_cap: 10_000,
        time_limit_s: 0.0,
        workers: 1,
    }
}

/// Parses an instance document. Relative matrix paths resolve against the
/// current directory.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vrpvp_instance_from_json(json: *const c_char, out: *mut *mut VrpvpInstance) -> VrpvpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = read_str(json, "json")?;
        let instance = parse_instance(text).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(VrpvpInstance { instance, base_dir: None }));
        Ok(())
    })
}

/// Loads an instance file; relative matrix paths resolve against its directory.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vrpvp_instance_from_file(path: *const c_char, out: *mut *mut VrpvpInstance) -> VrpvpStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = PathBuf::from(read_str(path, "path")?);
        let text = std::fs::read_to_string(&path).map_err(|e| lib_err(Error::Io(e)))?;
        let instance = parse_instance(&text).map_err(lib_err)?;
        let base_dir = path.parent().map(PathBuf::from);
        *out = Box::into_raw(Box::new(VrpvpInstance { instance, base_dir }));
        Ok(())
    })
}

/// # Safety
/// `instance` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vrpvp_instance_free(instance: *mut VrpvpInstance) {
    if !instance.is_null() {
        drop(Box::from_raw(instance));
    }
}

/// Number of sites, or 0 for a null handle.
///
/// # Safety
/// `instance` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vrpvp_instance_site_count(instance: *const VrpvpInstance) -> usize {
    instance.as_ref().map_or(0, |i| i.instance.n_sites())
}

/// Number of stakeholders, or 0 for a null handle.
///
/// # Safety
/// `instance` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vrpvp_instance_stakeholder_count(instance: *const VrpvpInstance) -> usize {
    instance.as_ref().map_or(0, |i| i.instance.n_stakeholders)
}

fn to_options(o: &VrpvpOptions, n_stakeholders: usize) -> SolveOptions {
    let objective = match o.objective {
        VrpvpObjective::MaxMin => ObjectiveMode::MaxMin,
        VrpvpObjective::Stakeholder => ObjectiveMode::Stakeholder(o.stakeholder as usize),
        VrpvpObjective::Sum => ObjectiveMode::WeightedSum(vec![1.0; n_stakeholders]),
    };
    SolveOptions {
        objective,
        max_columns: (o.max_columns > 0).then_some(o.max_columns as usize),
        iteration_cap: o.iteration_cap as usize,
        time_limit: (o.time_limit_s > 0.0 && o.time_limit_s.is_finite()).then(|| Duration::from_secs_f64(o.time_limit_s)),
        workers: o.workers.max(1) as usize,
    }
}

unsafe fn finish_solve(
    inst: &VrpvpInstance,
    matrix: &CostMatrix,
    options: *const VrpvpOptions,
    out: *mut *mut VrpvpReport,
) -> Result<(), (VrpvpStatus, String)> {
    let opts = options.as_ref().copied().unwrap_or_else(|| vrpvp_options_default());
    let report = solve_vrpvp(&inst.instance, matrix, &to_options(&opts, inst.instance.n_stakeholders)).map_err(lib_err)?;
    *out = Box::into_raw(Box::new(VrpvpReport { report }));
    Ok(())
}

/// Solves with the instance's own metric. A null `options` uses the defaults.
///
/// # Safety
/// `instance` must be a live handle, `options` null or valid, `out` valid.
#[no_mangle]
pub unsafe extern "C" fn vrpvp_solve(
    instance: *const VrpvpInstance,
    options: *const VrpvpOptions,
    out: *mut *mut VrpvpReport,
) -> VrpvpStatus {
    guard(|| {
        let inst = instance.as_ref().ok_or_else(|| null("instance"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let matrix = matrix_for_instance(&inst.instance, inst.base_dir.as_deref()).map_err(lib_err)?;
        finish_solve(inst, &matrix, options, out)
    })
}

/// Solves with a caller-supplied row-major `dim × dim` cost matrix, node 0
/// being the depot. `unit_hours` selects hours over km.
///
/// # Safety
/// `costs` must point to `dim * dim` doubles; other pointers as in [`vrpvp_solve`].
#[no_mangle]
pub unsafe extern "C" fn vrpvp_solve_with_matrix(
    instance: *const VrpvpInstance,
    costs: *const f64,
    dim: usize,
    unit_hours: bool,
    options: *const VrpvpOptions,
    out: *mut *mut VrpvpReport,
) -> VrpvpStatus {
    guard(|| {
        let inst = instance.as_ref().ok_or_else(|| null("instance"))?;
        if costs.is_null() {
            return Err(null("costs"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let flat = std::slice::from_raw_parts(costs, dim.checked_mul(dim).ok_or_else(|| null("dim overflow"))?);
        let rows: Vec<Vec<f64>> = flat.chunks(dim.max(1)).map(<[f64]>::to_vec).collect();
        let unit = if unit_hours { CostUnit::Hours } else { CostUnit::Km };
        let matrix = CostMatrix::from_rows(rows, unit).map_err(lib_err)?;
        let matrix = apply_precision(&inst.instance, matrix);
        finish_solve(inst, &matrix, options, out)
    })
}

/// # Safety
/// `report` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vrpvp_report_free(report: *mut VrpvpReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// LP bound in maximization form; NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vrpvp_report_z_lp(report: *const VrpvpReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.report.z_lp)
}

/// Integer objective in maximization form; NaN for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vrpvp_report_z_mip(report: *const VrpvpReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.report.z_mip)
}

/// Optimality gap in percent; NaN when undefined or for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vrpvp_report_gap_pct(report: *const VrpvpReport) -> f64 {
    report.as_ref().and_then(|r| r.report.gap_pct).unwrap_or(f64::NAN)
}

/// Number of selected routes, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vrpvp_report_route_count(report: *const VrpvpReport) -> usize {
    report.as_ref().map_or(0, |r| r.report.routes.len())
}

unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, cap: usize, len: *mut usize) -> Result<(), (VrpvpStatus, String)> {
    if len.is_null() {
        return Err(null("len"));
    }
    *len = src.len();
    if src.len() > cap {
        return Err((VrpvpStatus::OutOfRange, format!("buffer holds {cap}, need {}", src.len())));
    }
    if !src.is_empty() {
        if buf.is_null() {
            return Err(null("buf"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    }
    Ok(())
}

/// Copies the closed tour of route `index` (depot = 0 at both ends) into
/// `buf`. `*len` always receives the required length; a short buffer yields
/// `OutOfRange` without writing.
///
/// # Safety
/// `buf` must hold `cap` elements; `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vrpvp_report_route_tour(
    report: *const VrpvpReport,
    index: usize,
    buf: *mut usize,
    cap: usize,
    len: *mut usize,
) -> VrpvpStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        let route = r
            .report
            .routes
            .get(index)
            .ok_or_else(|| (VrpvpStatus::OutOfRange, format!("route {index} of {}", r.report.routes.len())))?;
        copy_out(&route.tour, buf, cap, len)
    })
}

/// Copies the per-stakeholder profit totals into `buf`, same protocol as
/// [`vrpvp_report_route_tour`].
///
/// # Safety
/// `buf` must hold `cap` elements; `len` must be valid.
#[no_mangle]
pub unsafe extern "C" fn vrpvp_report_profit_sums(
    report: *const VrpvpReport,
    buf: *mut f64,
    cap: usize,
    len: *mut usize,
) -> VrpvpStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        copy_out(&r.report.profit_sums, buf, cap, len)
    })
}

/// The full report as JSON; release with [`vrpvp_string_free`]. Null on a
/// null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vrpvp_report_to_json(report: *const VrpvpReport) -> *mut c_char {
    match report.as_ref() {
        Some(r) => CString::new(r.report.to_json()).map_or(ptr::null_mut(), CString::into_raw),
        None => ptr::null_mut(),
    }
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vrpvp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
