//! C ABI over `dynabo-core`.
//!
//! Conventions:
//! - Every fallible entry point returns a [`DynaboStatus`]. On failure the
//!   code and message are kept per thread; read them with
//!   [`dynabo_last_error_code`] and [`dynabo_last_error_message`].
//! - Handles are opaque. Free them with the matching `_free` function.
//! - Strings returned through `out_json` are owned by the caller and must be
//!   released with [`dynabo_string_free`].
//! - Panics never cross the boundary; they surface as
//!   [`DynaboStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use dynabo_core::config::RunConfig;
use dynabo_core::error::Error;
use dynabo_core::plant::{self, PlantConfig, PlantState, ShotRequest};
use dynabo_core::replay::cumulative_regret;
use dynabo_core::service::{CreateSession, ServiceContext, SessionStore, ShotInput};

/// Result of a call. Values from 10 up match the `dynabo` CLI exit codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DynaboStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Panic = 3,
    Schema = 10,
    NoFlatTop = 11,
    DegenerateData = 12,
    DegenerateProfile = 13,
    EmptyDataset = 14,
    NonFiniteLoss = 15,
    NumericalFailure = 16,
    EmptyCandidates = 17,
    NoGyrotrons = 18,
    Range = 19,
    DatasetNotFound = 20,
    SessionNotFound = 21,
    Validation = 22,
    StaleWrite = 23,
    Config = 24,
    Io = 30,
    Json = 31,
    Csv = 32,
}

impl From<&Error> for DynaboStatus {
    fn from(e: &Error) -> Self {
        use DynaboStatus as S;
        match e {
            Error::Schema(_) => S::Schema,
            Error::NoFlatTop { .. } => S::NoFlatTop,
            Error::DegenerateData(_) => S::DegenerateData,
            Error::DegenerateProfile { .. } => S::DegenerateProfile,
            Error::EmptyDataset(_) => S::EmptyDataset,
            Error::NonFiniteLoss { .. } => S::NonFiniteLoss,
            Error::NumericalFailure(_) => S::NumericalFailure,
            Error::EmptyCandidates => S::EmptyCandidates,
            Error::NoGyrotrons => S::NoGyrotrons,
            Error::Range(_) => S::Range,
            Error::DatasetNotFound(_) => S::DatasetNotFound,
            Error::SessionNotFound(_) => S::SessionNotFound,
            Error::Validation { .. } => S::Validation,
            Error::StaleWrite { .. } => S::StaleWrite,
            Error::Config(_) => S::Config,
            Error::Io(_) => S::Io,
            Error::Json(_) => S::Json,
            Error::Csv(_) => S::Csv,
        }
    }
}

/// Failure carried across the boundary.
struct Failure {
    status: DynaboStatus,
    code: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure { status: DynaboStatus::from(&e), code: e.code(), message: e.to_string() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::Schema(e.to_string()).into()
    }
}

impl Failure {
    fn null(name: &str) -> Self {
        Failure { status: DynaboStatus::NullArgument, code: "null_argument", message: format!("`{name}` is null") }
    }
}

struct LastError {
    code: CString,
    message: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<LastError>> = const { RefCell::new(None) };
}

fn set_last_error(f: &Failure) {
    let clean = |s: &str| CString::new(s.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|l| *l.borrow_mut() = Some(LastError { code: clean(f.code), message: clean(&f.message) }));
}

/// Run `body`, record any failure and turn it into a status.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> DynaboStatus {
    LAST_ERROR.with(|l| *l.borrow_mut() = None);
    let outcome = catch_unwind(AssertUnwindSafe(body)).unwrap_or_else(|p| {
        let message = p
            .downcast_ref::<&str>()
            .map(|s| s.to_string())
            .or_else(|| p.downcast_ref::<String>().cloned())
            .unwrap_or_else(|| "panic".into());
        Err(Failure { status: DynaboStatus::Panic, code: "panic", message })
    });
    match outcome {
        Ok(()) => DynaboStatus::Ok,
        Err(f) => {
            set_last_error(&f);
            f.status
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure {
        status: DynaboStatus::InvalidUtf8,
        code: "invalid_utf8",
        message: format!("`{name}` is not valid UTF-8"),
    })
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(name))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(name))
}

fn write_json<T: serde::Serialize>(out: &mut *mut c_char, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string(value)?;
    *out = CString::new(text).map_err(|e| Error::Schema(e.to_string()))?.into_raw();
    Ok(())
}

fn load_config(path: Option<&str>) -> Result<RunConfig, Failure> {
    Ok(match path {
        Some(p) => RunConfig::load(Path::new(p))?,
        None => RunConfig::default(),
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dynabo_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Machine-readable code of the last failure on this thread (for example
/// `"stale_write"`), or NULL after a successful call. Valid until the next
/// call into the library on this thread.
#[no_mangle]
pub extern "C" fn dynabo_last_error_code() -> *const c_char {
    LAST_ERROR.with(|l| l.borrow().as_ref().map_or(ptr::null(), |e| e.code.as_ptr()))
}

/// Human-readable message of the last failure on this thread, or NULL.
/// Same lifetime as [`dynabo_last_error_code`].
#[no_mangle]
pub extern "C" fn dynabo_last_error_message() -> *const c_char {
    LAST_ERROR.with(|l| l.borrow().as_ref().map_or(ptr::null(), |e| e.message.as_ptr()))
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn dynabo_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ------------------------------------------------------------------ service

/// Between-shot session store.
pub struct DynaboService {
    store: SessionStore,
}

/// Open a session store.
///
/// `config_path` (TOML) and `prior_dir` may be NULL for defaults and a zero
/// prior. `data_dir` holds `<name>.csv` datasets that sessions can start
/// from.
///
/// # Safety
/// String arguments must be NUL-terminated or NULL where allowed; `out` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn dynabo_service_open(
    config_path: *const c_char,
    prior_dir: *const c_char,
    data_dir: *const c_char,
    out: *mut *mut DynaboService,
) -> DynaboStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let cfg = load_config(opt_str_arg(config_path, "config_path")?)?;
        let prior = opt_str_arg(prior_dir, "prior_dir")?.map(Path::new);
        let data = PathBuf::from(str_arg(data_dir, "data_dir")?);
        let ctx = ServiceContext::load(&cfg, prior, data)?;
        *out = Box::into_raw(Box::new(DynaboService { store: SessionStore::new(ctx) }));
        Ok(())
    })
}

/// Release a store. NULL is ignored.
///
/// # Safety
/// `svc` must come from [`dynabo_service_open`] and must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn dynabo_service_free(svc: *mut DynaboService) {
    if !svc.is_null() {
        drop(Box::from_raw(svc));
    }
}

/// Create a session from a JSON request (NULL or `""` for all defaults).
/// Writes the session summary as JSON.
///
/// # Safety
/// Pointers must be valid; see the module conventions.
#[no_mangle]
pub unsafe extern "C" fn dynabo_session_create(
    svc: *const DynaboService,
    request_json: *const c_char,
    out_json: *mut *mut c_char,
) -> DynaboStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let svc = handle(svc, "svc")?;
        let req: CreateSession = match opt_str_arg(request_json, "request_json")? {
            Some(t) if !t.trim().is_empty() => serde_json::from_str(t)?,
            _ => CreateSession::default(),
        };
        write_json(out, &svc.store.create(req)?)
    })
}

/// Propose an ECH profile for `target_beta_n`. A NaN `alpha` uses the
/// session's exploration weight.
///
/// # Safety
/// Pointers must be valid; see the module conventions.
#[no_mangle]
pub unsafe extern "C" fn dynabo_session_propose(
    svc: *const DynaboService,
    session_id: *const c_char,
    target_beta_n: f64,
    alpha: f64,
    out_json: *mut *mut c_char,
) -> DynaboStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let svc = handle(svc, "svc")?;
        let id = str_arg(session_id, "session_id")?;
        let alpha = (!alpha.is_nan()).then_some(alpha);
        write_json(out, &svc.store.propose(id, target_beta_n, alpha)?)
    })
}

/// Record a measured shot given as JSON. The body must carry the current
/// `version`; a mismatch returns [`DynaboStatus::StaleWrite`].
///
/// # Safety
/// Pointers must be valid; see the module conventions.
#[no_mangle]
pub unsafe extern "C" fn dynabo_session_record(
    svc: *const DynaboService,
    session_id: *const c_char,
    shot_json: *const c_char,
    out_json: *mut *mut c_char,
) -> DynaboStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let svc = handle(svc, "svc")?;
        let id = str_arg(session_id, "session_id")?;
        let input: ShotInput = serde_json::from_str(str_arg(shot_json, "shot_json")?)?;
        write_json(out, &svc.store.record(id, &input)?)
    })
}

/// Write the full shot and proposal history of a session as JSON.
///
/// # Safety
/// Pointers must be valid; see the module conventions.
#[no_mangle]
pub unsafe extern "C" fn dynabo_session_history(
    svc: *const DynaboService,
    session_id: *const c_char,
    out_json: *mut *mut c_char,
) -> DynaboStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let svc = handle(svc, "svc")?;
        write_json(out, &svc.store.history(str_arg(session_id, "session_id")?)?)
    })
}

/// Write the session summary as JSON.
///
/// # Safety
/// Pointers must be valid; see the module conventions.
#[no_mangle]
pub unsafe extern "C" fn dynabo_session_summary(
    svc: *const DynaboService,
    session_id: *const c_char,
    out_json: *mut *mut c_char,
) -> DynaboStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let svc = handle(svc, "svc")?;
        write_json(out, &svc.store.summary(str_arg(session_id, "session_id")?)?)
    })
}

// -------------------------------------------------------------------- plant

/// Synthetic plant configuration.
pub struct DynaboPlant {
    cfg: PlantConfig,
}

/// Plant from the `[plant]` table of a TOML run configuration, or the
/// default plant when `config_path` is NULL.
///
/// # Safety
/// `config_path` must be NUL-terminated or NULL; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dynabo_plant_new(config_path: *const c_char, out: *mut *mut DynaboPlant) -> DynaboStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let cfg = load_config(opt_str_arg(config_path, "config_path")?)?.plant;
        *out = Box::into_raw(Box::new(DynaboPlant { cfg }));
        Ok(())
    })
}

/// Release a plant. NULL is ignored.
///
/// # Safety
/// `plant` must come from [`dynabo_plant_new`] and must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn dynabo_plant_free(plant: *mut DynaboPlant) {
    if !plant.is_null() {
        drop(Box::from_raw(plant));
    }
}

/// Length of the plant state vector, or 0 for NULL.
///
/// # Safety
/// `plant` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn dynabo_plant_state_dim(plant: *const DynaboPlant) -> usize {
    plant.as_ref().map_or(0, |p| p.cfg.state_dim)
}

/// Per-step tearing probability for a state and a 7-channel action.
///
/// # Safety
/// `state` and `action` must point to `state_len` and `action_len` doubles;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn dynabo_plant_hazard(
    plant: *const DynaboPlant,
    state: *const f64,
    state_len: usize,
    action: *const f64,
    action_len: usize,
    out: *mut f64,
) -> DynaboStatus {
    guard(|| {
        let plant = handle(plant, "plant")?;
        if state.is_null() {
            return Err(Failure::null("state"));
        }
        if action.is_null() {
            return Err(Failure::null("action"));
        }
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let s = PlantState::new(std::slice::from_raw_parts(state, state_len).to_vec());
        let a = std::slice::from_raw_parts(action, action_len);
        *out = plant::hazard(&s, a, &plant.cfg)?;
        Ok(())
    })
}

/// Run one shot from a JSON request and write the trajectory as JSON.
///
/// # Safety
/// Pointers must be valid; see the module conventions.
#[no_mangle]
pub unsafe extern "C" fn dynabo_plant_run_shot(
    plant: *const DynaboPlant,
    request_json: *const c_char,
    out_json: *mut *mut c_char,
) -> DynaboStatus {
    guard(|| {
        let out = out_arg(out_json, "out_json")?;
        let plant = handle(plant, "plant")?;
        let req: ShotRequest = serde_json::from_str(str_arg(request_json, "request_json")?)?;
        write_json(out, &plant::run_shot(&req, &plant.cfg)?)
    })
}

// ------------------------------------------------------------------- regret

/// Cumulative regret of `n` times-to-onset against `tau_max`, written to
/// `out[0..n]`.
///
/// # Safety
/// `outcomes` and `out` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn dynabo_cumulative_regret(
    outcomes: *const f64,
    n: usize,
    tau_max: f64,
    out: *mut f64,
) -> DynaboStatus {
    guard(|| {
        if outcomes.is_null() {
            return Err(Failure::null("outcomes"));
        }
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        let r = cumulative_regret(std::slice::from_raw_parts(outcomes, n), tau_max)?;
        std::slice::from_raw_parts_mut(out, n).copy_from_slice(&r);
        Ok(())
    })
}
