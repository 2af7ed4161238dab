//! C interface to `qfilt`.
//!
//! Matrices cross the boundary as `2·dim·dim` doubles in row-major order
//! with real and imaginary parts interleaved. Every function returns a
//! [`QfStatus`]; on failure [`qf_last_error_message`] describes the cause.
//! Handles are opaque and must be released with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use qfilt::filters::{FilterKind, FilterState, MeasurementScheme, StepOperators};
use qfilt::lindblad::semigroup_evolve;
use qfilt::persist::{read_record, write_record};
use qfilt::trajectory::{Grid, ObservationRecord, Simulator};
use qfilt::{DensityState, Error, Operator, SystemModel, C64};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numerical = 3,
    Io = 4,
    Panic = 5,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QfScheme {
    Homodyne = 0,
    Counting = 1,
    /// Homodyne with detector efficiency set by `kappa`.
    Imperfect = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QfFilterKind {
    Zakai = 0,
    Bks = 1,
}

/// Lindblad model: Hamiltonian plus coupling operators.
pub struct QfModel {
    model: SystemModel,
}

/// A running filter.
pub struct QfFilter {
    ops: StepOperators,
    scheme: MeasurementScheme,
    kind: FilterKind,
    state: FilterState,
}

/// An observation record.
pub struct QfRecord {
    record: ObservationRecord,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

enum Failure {
    Null(&'static str),
    Lib(Error),
    Arg(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> QfStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            set_error("");
            QfStatus::Ok
        }
        Ok(Err(Failure::Null(name))) => {
            set_error(format!("{name} is null"));
            QfStatus::NullPointer
        }
        Ok(Err(Failure::Arg(message))) => {
            set_error(message);
            QfStatus::InvalidArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            match e {
                Error::Io { .. } => QfStatus::Io,
                e if e.is_numerical() => QfStatus::Numerical,
                _ => QfStatus::InvalidArgument,
            }
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {message}"));
            QfStatus::Panic
        }
    }
}

fn nonnull<'a, T>(p: *const T, name: &'static str) -> Result<&'a T, Failure> {
    unsafe { p.as_ref() }.ok_or(Failure::Null(name))
}

fn nonnull_mut<'a, T>(p: *mut T, name: &'static str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or(Failure::Null(name))
}

unsafe fn read_matrix(data: *const f64, dim: usize, name: &'static str) -> Result<Operator, Failure> {
    if data.is_null() {
        return Err(Failure::Null(name));
    }
    let raw = std::slice::from_raw_parts(data, 2 * dim * dim);
    let entries: Vec<C64> = raw.chunks_exact(2).map(|c| C64::new(c[0], c[1])).collect();
    Ok(Operator::from_row_major(dim, &entries)?)
}

unsafe fn write_matrix(op: &Operator, out: *mut f64, name: &'static str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Null(name));
    }
    let target = std::slice::from_raw_parts_mut(out, 2 * op.dim() * op.dim());
    for (slot, z) in target.chunks_exact_mut(2).zip(op.to_row_major()) {
        slot[0] = z.re;
        slot[1] = z.im;
    }
    Ok(())
}

fn scheme(kind: u32, kappa: f64) -> Result<MeasurementScheme, Failure> {
    Ok(match kind {
        k if k == QfScheme::Homodyne as u32 => MeasurementScheme::homodyne(),
        k if k == QfScheme::Counting as u32 => MeasurementScheme::counting(),
        k if k == QfScheme::Imperfect as u32 => MeasurementScheme::imperfect(kappa)?,
        other => return Err(Failure::Arg(format!("unknown scheme {other}"))),
    })
}

fn density(op: Operator) -> Result<DensityState, Failure> {
    Ok(DensityState::new(op)?)
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, Failure> {
    if path.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(Path::new)
        .map_err(|_| Failure::Arg("path is not valid UTF-8".into()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn qf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failing call on this thread; empty after a
/// successful call. Valid until the next call into the library.
#[no_mangle]
pub extern "C" fn qf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a model from a Hamiltonian and `n_channels` coupling operators
/// stored back to back in `channels`.
///
/// # Safety
/// `hamiltonian` must hold `2·dim·dim` doubles and `channels`
/// `n_channels·2·dim·dim`; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qf_model_new(
    dim: usize,
    hamiltonian: *const f64,
    channels: *const f64,
    n_channels: usize,
    out: *mut *mut QfModel,
) -> QfStatus {
    guard(|| {
        let out = nonnull_mut(out, "out")?;
        *out = ptr::null_mut();
        if dim == 0 {
            return Err(Failure::Arg("dim must be positive".into()));
        }
        let h = read_matrix(hamiltonian, dim, "hamiltonian")?;
        let mut ls = Vec::with_capacity(n_channels);
        for j in 0..n_channels {
            ls.push(read_matrix(channels.wrapping_add(2 * dim * dim * j), dim, "channels")?);
        }
        let model = SystemModel::new(h, ls)?;
        *out = Box::into_raw(Box::new(QfModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`qf_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qf_model_free(model: *mut QfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qf_model_dim(model: *const QfModel, out: *mut usize) -> QfStatus {
    guard(|| {
        *nonnull_mut(out, "out")? = nonnull(model, "model")?.model.dim();
        Ok(())
    })
}

/// Unconditional state exp(t𝓛')(ρ0).
///
/// # Safety
/// `rho0` and `out` must hold `2·dim·dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn qf_semigroup_evolve(
    model: *const QfModel,
    rho0: *const f64,
    t: f64,
    out: *mut f64,
) -> QfStatus {
    guard(|| {
        let model = &nonnull(model, "model")?.model;
        let rho0 = density(read_matrix(rho0, model.dim(), "rho0")?)?;
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Failure::Arg(format!("t must be finite and non-negative, got {t}")));
        }
        let rho = semigroup_evolve(&rho0, model, t)?;
        write_matrix(rho.op(), out, "out")
    })
}

/// Creates a filter at `rho0`. The model must have exactly one channel.
/// `scheme_kind` takes a [`QfScheme`] value and `kind` a [`QfFilterKind`].
///
/// # Safety
/// `model` must be a live handle, `rho0` must hold `2·dim·dim` doubles and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qf_filter_new(
    model: *const QfModel,
    scheme_kind: u32,
    kappa: f64,
    kind: u32,
    rho0: *const f64,
    out: *mut *mut QfFilter,
) -> QfStatus {
    guard(|| {
        let out = nonnull_mut(out, "out")?;
        *out = ptr::null_mut();
        let model = &nonnull(model, "model")?.model;
        let scheme = scheme(scheme_kind, kappa)?;
        let ops = StepOperators::new(model, &scheme)?;
        let rho0 = density(read_matrix(rho0, model.dim(), "rho0")?)?;
        let (kind, state) = match kind {
            k if k == QfFilterKind::Zakai as u32 => (FilterKind::Zakai, FilterState::unnormalized(&rho0)),
            k if k == QfFilterKind::Bks as u32 => (FilterKind::Bks, FilterState::normalized(&rho0)),
            other => return Err(Failure::Arg(format!("unknown filter kind {other}"))),
        };
        *out = Box::into_raw(Box::new(QfFilter {
            ops,
            scheme,
            kind,
            state,
        }));
        Ok(())
    })
}

/// # Safety
/// `filter` must come from [`qf_filter_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qf_filter_free(filter: *mut QfFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

/// Advances the filter by one increment `dy` over `dt`. On failure the
/// state is left unchanged.
///
/// # Safety
/// `filter` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn qf_filter_step(filter: *mut QfFilter, dy: f64, dt: f64) -> QfStatus {
    guard(|| {
        let f = nonnull_mut(filter, "filter")?;
        if !(dt > 0.0 && dt.is_finite()) || !dy.is_finite() {
            return Err(Failure::Arg(format!("invalid increment dy = {dy}, dt = {dt}")));
        }
        f.state = f.ops.step(f.kind, &f.scheme, &f.state, dy, dt)?;
        Ok(())
    })
}

/// Feeds every increment of `record` through the filter.
///
/// # Safety
/// `filter` and `record` must be live handles.
#[no_mangle]
pub unsafe extern "C" fn qf_filter_run_record(filter: *mut QfFilter, record: *const QfRecord) -> QfStatus {
    guard(|| {
        let f = nonnull_mut(filter, "filter")?;
        let record = &nonnull(record, "record")?.record;
        if record.scheme.kind != f.scheme.kind {
            return Err(Failure::Arg(format!(
                "record was taken with scheme {}, filter expects {}",
                record.scheme.kind, f.scheme.kind
            )));
        }
        let mut state = f.state.clone();
        for &dy in &record.increments {
            state = f.ops.step(f.kind, &f.scheme, &state, dy, record.dt)?;
        }
        f.state = state;
        Ok(())
    })
}

/// Copies the current filter matrix (unnormalized for Zakai filters).
///
/// # Safety
/// `out` must hold `2·dim·dim` doubles.
#[no_mangle]
pub unsafe extern "C" fn qf_filter_state(filter: *const QfFilter, out: *mut f64) -> QfStatus {
    guard(|| write_matrix(&nonnull(filter, "filter")?.state.rho, out, "out"))
}

/// Normalized expectation trace(ϖX)/trace(ϖ).
///
/// # Safety
/// `x` must hold `2·dim·dim` doubles; `re` and `im` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qf_filter_expectation(
    filter: *const QfFilter,
    x: *const f64,
    re: *mut f64,
    im: *mut f64,
) -> QfStatus {
    guard(|| {
        let f = nonnull(filter, "filter")?;
        let x = read_matrix(x, f.state.dim(), "x")?;
        let z = f.state.expectation(&x);
        *nonnull_mut(re, "re")? = z.re;
        *nonnull_mut(im, "im")? = z.im;
        Ok(())
    })
}

/// Record likelihood accumulated so far.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qf_filter_likelihood(filter: *const QfFilter, out: *mut f64) -> QfStatus {
    guard(|| {
        *nonnull_mut(out, "out")? = nonnull(filter, "filter")?.state.likelihood;
        Ok(())
    })
}

/// Samples an observation record of `horizon / dt` steps. `scheme_kind`
/// takes a [`QfScheme`] value.
///
/// # Safety
/// `model` must be a live handle, `rho0` must hold `2·dim·dim` doubles and
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qf_simulate(
    model: *const QfModel,
    scheme_kind: u32,
    kappa: f64,
    rho0: *const f64,
    horizon: f64,
    dt: f64,
    seed: u64,
    out: *mut *mut QfRecord,
) -> QfStatus {
    guard(|| {
        let out = nonnull_mut(out, "out")?;
        *out = ptr::null_mut();
        let model = &nonnull(model, "model")?.model;
        let rho0 = density(read_matrix(rho0, model.dim(), "rho0")?)?;
        let grid = Grid::new(horizon, dt)?;
        let record = Simulator::new(model, scheme(scheme_kind, kappa)?)?.simulate(&rho0, grid, seed, |_, _| {})?;
        *out = Box::into_raw(Box::new(QfRecord { record }));
        Ok(())
    })
}

/// # Safety
/// `record` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn qf_record_free(record: *mut QfRecord) {
    if !record.is_null() {
        drop(Box::from_raw(record));
    }
}

/// # Safety
/// `steps` and `dt` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qf_record_info(record: *const QfRecord, steps: *mut usize, dt: *mut f64) -> QfStatus {
    guard(|| {
        let r = &nonnull(record, "record")?.record;
        *nonnull_mut(steps, "steps")? = r.steps();
        *nonnull_mut(dt, "dt")? = r.dt;
        Ok(())
    })
}

/// Copies the increments into `out`, which must hold `len` ≥ steps doubles.
///
/// # Safety
/// `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn qf_record_increments(record: *const QfRecord, out: *mut f64, len: usize) -> QfStatus {
    guard(|| {
        let r = &nonnull(record, "record")?.record;
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        if len < r.steps() {
            return Err(Failure::Arg(format!(
                "buffer holds {len} values, record has {}",
                r.steps()
            )));
        }
        std::slice::from_raw_parts_mut(out, r.steps()).copy_from_slice(&r.increments);
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string.
#[no_mangle]
pub unsafe extern "C" fn qf_record_write(record: *const QfRecord, path: *const c_char) -> QfStatus {
    guard(|| {
        let r = &nonnull(record, "record")?.record;
        Ok(write_record(r, path_arg(path)?)?)
    })
}

/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qf_record_read(path: *const c_char, out: *mut *mut QfRecord) -> QfStatus {
    guard(|| {
        let out = nonnull_mut(out, "out")?;
        *out = ptr::null_mut();
        let record = read_record(path_arg(path)?)?;
        *out = Box::into_raw(Box::new(QfRecord { record }));
        Ok(())
    })
}
