//! C ABI over the `crnas` crate.
//!
//! Every entry point returns a [`CrnasStatus`]; on failure the message is
//! kept per thread and read back with [`crnas_last_error_message`]. Handles
//! are opaque and owned by the caller until passed to their `_free`.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, c_void, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crnas::bench::sample_initial_points;
use crnas::biomodels::{as_conic_program, Dataset, ModelKind};
use crnas::datagen::{generate_dataset, stream_rng, RangeTable};
use crnas::problem::{feasible_interior_point, ConicProgram, Evaluation, Objective};
use crnas::solver::{self, Method, SolveReport, SolverConfig, Termination};
use crnas::CrnasError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrnasStatus {
    Ok = 0,
    NullPointer = 1,
    /// Bad configuration, dimension mismatch or contract violation.
    InvalidArgument = 2,
    /// No strictly feasible interior, or the feasible set is a single point.
    Infeasible = 3,
    Domain = 4,
    Io = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrnasMethod {
    Crnas = 0,
    Foas = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrnasTermination {
    StepBelowEta = 0,
    SmallGradient = 1,
    SmallStep = 2,
    MaxIterations = 3,
    RegularizationLimit = 4,
}

/// Plain-data mirror of the solver settings.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CrnasSolverConfig {
    pub alpha: f64,
    pub m0: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub max_iter: usize,
    pub adaptive: bool,
    pub m_min: f64,
    pub m_max: f64,
    pub practical_stops: bool,
}

/// Objective callback.
///
/// Writes the value at `x` (length `n`) to `*value`. When `gradient` is not
/// null it receives `n` entries; when `hessian` is not null it receives
/// `n*n` entries in column-major order. Return 0 on success; any other value
/// marks `x` as outside the domain. Must be safe to call from several threads.
pub type CrnasEvalFn = Option<
    unsafe extern "C" fn(
        user_data: *mut c_void,
        x: *const f64,
        n: usize,
        value: *mut f64,
        gradient: *mut f64,
        hessian: *mut f64,
    ) -> c_int,
>;

pub struct CrnasDataset(Dataset);

pub struct CrnasProgram {
    program: ConicProgram,
    /// Present for programs built from a dataset; used to sample starts.
    table: Option<RangeTable>,
}

pub struct CrnasReport(SolveReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &CrnasError) -> CrnasStatus {
    match e {
        CrnasError::Config(_) | CrnasError::DimensionMismatch { .. } | CrnasError::Contract(_) => {
            CrnasStatus::InvalidArgument
        }
        CrnasError::Infeasible(_) | CrnasError::FullyDetermined { .. } => CrnasStatus::Infeasible,
        CrnasError::Domain { .. } => CrnasStatus::Domain,
        CrnasError::Io(_) => CrnasStatus::Io,
    }
}

enum Failure {
    Null(&'static str),
    Arg(String),
    Core(CrnasError),
}

impl From<CrnasError> for Failure {
    fn from(e: CrnasError) -> Self {
        Failure::Core(e)
    }
}

type Outcome = std::result::Result<(), Failure>;

fn guard(f: impl FnOnce() -> Outcome) -> CrnasStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CrnasStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            CrnasStatus::NullPointer
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(msg);
            CrnasStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CrnasStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn c_str<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Arg(format!("{what} is not valid UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut *mut T, value: T) -> Outcome {
    if out.is_null() {
        return Err(Failure::Null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn copy_into(dst: *mut f64, len: usize, src: &DVector<f64>) -> Outcome {
    if len != src.len() {
        return Err(CrnasError::DimensionMismatch {
            expected: src.len(),
            got: len,
        }
        .into());
    }
    if dst.is_null() {
        return Err(Failure::Null("output buffer"));
    }
    std::slice::from_raw_parts_mut(dst, len).copy_from_slice(src.as_slice());
    Ok(())
}

/// Message for the last failure on this thread, or null after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn crnas_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Frees a string returned by this library.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn crnas_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Simulates dataset `index` of the stream seeded by `seed`.
/// `model` is one of `phenopop`, `lbd`, `logistic`.
///
/// # Safety
/// `model` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crnas_dataset_simulate(
    model: *const c_char,
    s: usize,
    x0: f64,
    seed: u64,
    index: u64,
    out: *mut *mut CrnasDataset,
) -> CrnasStatus {
    guard(|| {
        let kind: ModelKind = c_str(model, "model")?.parse()?;
        let data = generate_dataset(kind, s, x0, seed, index)?;
        write_out(out, CrnasDataset(data))
    })
}

/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crnas_dataset_from_json(
    json: *const c_char,
    out: *mut *mut CrnasDataset,
) -> CrnasStatus {
    guard(|| {
        let data = Dataset::from_json(c_str(json, "json")?)?;
        write_out(out, CrnasDataset(data))
    })
}

/// Serializes a dataset; free the result with [`crnas_string_free`].
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crnas_dataset_to_json(
    dataset: *const CrnasDataset,
    out: *mut *mut c_char,
) -> CrnasStatus {
    guard(|| {
        let text = deref(dataset, "dataset")?.0.to_json()?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = CString::new(text)
            .map_err(|e| Failure::Arg(e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn crnas_dataset_free(dataset: *mut CrnasDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Builds the fitting program of a dataset with the standard parameter bounds.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crnas_program_from_dataset(
    dataset: *const CrnasDataset,
    out: *mut *mut CrnasProgram,
) -> CrnasStatus {
    guard(|| {
        let data = &deref(dataset, "dataset")?.0;
        let table = RangeTable::standard(data.model, data.s, data.x0)?;
        let program = as_conic_program(data, &table.bounds_as_pairs())?;
        write_out(
            out,
            CrnasProgram {
                program,
                table: Some(table),
            },
        )
    })
}

struct CallbackObjective {
    n: usize,
    eval: unsafe extern "C" fn(*mut c_void, *const f64, usize, *mut f64, *mut f64, *mut f64) -> c_int,
    user_data: *mut c_void,
}

// The caller promises the callback and its user data are thread-safe.
unsafe impl Send for CallbackObjective {}
unsafe impl Sync for CallbackObjective {}

impl CallbackObjective {
    fn call(&self, x: &DVector<f64>, grad: bool, hess: bool) -> Option<Evaluation> {
        let n = self.n;
        let mut value = f64::NAN;
        let mut g = DVector::zeros(if grad { n } else { 0 });
        let mut h = DMatrix::zeros(if hess { n } else { 0 }, if hess { n } else { 0 });
        let gp = if grad { g.as_mut_ptr() } else { ptr::null_mut() };
        let hp = if hess { h.as_mut_ptr() } else { ptr::null_mut() };
        let rc = unsafe { (self.eval)(self.user_data, x.as_ptr(), n, &mut value, gp, hp) };
        (rc == 0).then_some(Evaluation {
            value,
            gradient: g,
            hessian: h,
        })
    }
}

impl Objective for CallbackObjective {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        self.call(x, false, false).map_or(f64::NAN, |e| e.value)
    }

    fn evaluate(&self, x: &DVector<f64>) -> Evaluation {
        self.call(x, true, true).unwrap_or_else(|| Evaluation {
            value: f64::NAN,
            gradient: DVector::from_element(self.n, f64::NAN),
            hessian: DMatrix::from_element(self.n, self.n, f64::NAN),
        })
    }
}

/// Builds `min f(θ) s.t. Aθ = b, θ > 0` over `n` coordinates.
///
/// `a` holds `m*n` entries in row-major order and `b` holds `m`; both may be
/// null when `m == 0`.
///
/// # Safety
/// Buffers must have the stated lengths; `user_data` must stay valid for the
/// lifetime of the program.
#[no_mangle]
pub unsafe extern "C" fn crnas_program_new(
    n: usize,
    m: usize,
    a: *const f64,
    b: *const f64,
    eval: CrnasEvalFn,
    user_data: *mut c_void,
    out: *mut *mut CrnasProgram,
) -> CrnasStatus {
    guard(|| {
        let eval = eval.ok_or(Failure::Null("eval"))?;
        let a = DMatrix::from_row_slice(m, n, slice(a, m * n, "a")?);
        let b = DVector::from_column_slice(slice(b, m, "b")?);
        let objective = Arc::new(CallbackObjective { n, eval, user_data });
        let program = ConicProgram::new(objective, a, b)?;
        write_out(out, CrnasProgram { program, table: None })
    })
}

/// Number of cone coordinates.
///
/// # Safety
/// `program` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn crnas_program_dim(program: *const CrnasProgram) -> usize {
    program.as_ref().map_or(0, |p| p.program.dim())
}

/// Number of coordinates of the original parameter vector.
///
/// # Safety
/// `program` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn crnas_program_original_dim(program: *const CrnasProgram) -> usize {
    program.as_ref().map_or(0, |p| {
        p.program
            .provenance()
            .map_or(p.program.dim(), |m| m.original_dim())
    })
}

/// Writes a strictly interior feasible point into `theta` (length `n`).
///
/// # Safety
/// `program` must be live; `theta` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn crnas_program_interior_point(
    program: *const CrnasProgram,
    seed: u64,
    theta: *mut f64,
    n: usize,
) -> CrnasStatus {
    guard(|| {
        let p = deref(program, "program")?;
        let mut rng = stream_rng(seed, 0);
        let point = match &p.table {
            Some(table) => sample_initial_points(table, &p.program, 1, &mut rng)?.remove(0),
            None => feasible_interior_point(&p.program, None, &mut rng)?,
        };
        copy_into(theta, n, &point)
    })
}

/// Maps cone coordinates back to the original parameters.
///
/// # Safety
/// `theta` must hold `n` doubles and `x` must hold `original_dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn crnas_program_to_original(
    program: *const CrnasProgram,
    theta: *const f64,
    n: usize,
    x: *mut f64,
    original_dim: usize,
) -> CrnasStatus {
    guard(|| {
        let p = deref(program, "program")?;
        if n != p.program.dim() {
            return Err(CrnasError::DimensionMismatch {
                expected: p.program.dim(),
                got: n,
            }
            .into());
        }
        let theta = DVector::from_column_slice(slice(theta, n, "theta")?);
        copy_into(x, original_dim, &p.program.to_original(&theta))
    })
}

/// # Safety
/// `program` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn crnas_program_free(program: *mut CrnasProgram) {
    if !program.is_null() {
        drop(Box::from_raw(program));
    }
}

#[no_mangle]
pub extern "C" fn crnas_solver_config_default() -> CrnasSolverConfig {
    let d = SolverConfig::default();
    CrnasSolverConfig {
        alpha: d.alpha,
        m0: d.m0,
        eta: d.eta,
        epsilon: d.epsilon,
        max_iter: d.max_iter,
        adaptive: d.adaptive,
        m_min: d.m_min,
        m_max: d.m_max,
        practical_stops: d.practical_stops,
    }
}

impl From<&CrnasSolverConfig> for SolverConfig {
    fn from(c: &CrnasSolverConfig) -> Self {
        SolverConfig {
            alpha: c.alpha,
            m0: c.m0,
            eta: c.eta,
            epsilon: c.epsilon,
            max_iter: c.max_iter,
            adaptive: c.adaptive,
            m_min: c.m_min,
            m_max: c.m_max,
            practical_stops: c.practical_stops,
        }
    }
}

/// Runs the solver from `theta0` (length `n`). A null `config` uses defaults.
///
/// # Safety
/// `program` must be live; `theta0` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crnas_solve(
    program: *const CrnasProgram,
    theta0: *const f64,
    n: usize,
    config: *const CrnasSolverConfig,
    method: CrnasMethod,
    out: *mut *mut CrnasReport,
) -> CrnasStatus {
    guard(|| {
        let p = deref(program, "program")?;
        let start = DVector::from_column_slice(slice(theta0, n, "theta0")?);
        let cfg = config.as_ref().map(SolverConfig::from).unwrap_or_default();
        let method = match method {
            CrnasMethod::Crnas => Method::Crnas,
            CrnasMethod::Foas => Method::Foas,
        };
        let report = solver::solve(&p.program, &start, &cfg, method)?;
        write_out(out, CrnasReport(report))
    })
}

/// Final objective value, or NaN for a null handle.
///
/// # Safety
/// `report` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn crnas_report_objective(report: *const CrnasReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.objective)
}

/// # Safety
/// `report` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn crnas_report_iterations(report: *const CrnasReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.iterations)
}

/// # Safety
/// `report` must be a live handle or null (returns `MaxIterations`).
#[no_mangle]
pub unsafe extern "C" fn crnas_report_termination(report: *const CrnasReport) -> CrnasTermination {
    match report.as_ref().map(|r| r.0.termination) {
        Some(Termination::StepBelowEta) => CrnasTermination::StepBelowEta,
        Some(Termination::SmallGradient) => CrnasTermination::SmallGradient,
        Some(Termination::SmallStep) => CrnasTermination::SmallStep,
        Some(Termination::RegularizationLimit) => CrnasTermination::RegularizationLimit,
        Some(Termination::MaxIterations) | None => CrnasTermination::MaxIterations,
    }
}

/// First-order stationarity measure at the final iterate, NaN for null.
///
/// # Safety
/// `report` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn crnas_report_fosp(report: *const CrnasReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.fosp())
}

/// Smallest eigenvalue of the scaled reduced Hessian at the final iterate.
///
/// # Safety
/// `report` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn crnas_report_sosp(report: *const CrnasReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.sosp())
}

/// Copies the final iterate into `theta` (length `n`).
///
/// # Safety
/// `report` must be live; `theta` must hold `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn crnas_report_theta(
    report: *const CrnasReport,
    theta: *mut f64,
    n: usize,
) -> CrnasStatus {
    guard(|| copy_into(theta, n, &deref(report, "report")?.0.theta))
}

/// Full report as JSON; free the result with [`crnas_string_free`].
///
/// # Safety
/// `report` must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn crnas_report_to_json(
    report: *const CrnasReport,
    out: *mut *mut c_char,
) -> CrnasStatus {
    guard(|| {
        let text = serde_json::to_string(&deref(report, "report")?.0)
            .map_err(|e| Failure::Core(e.into()))?;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = CString::new(text)
            .map_err(|e| Failure::Arg(e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn crnas_report_free(report: *mut CrnasReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}
