//! C ABI over the simulator.
//!
//! Every entry point returns an [`EmcomStatus`]. Inputs and outputs cross the
//! boundary as UTF-8 JSON (or TOML for experiment files). Strings handed out
//! by the library must be released with [`emcom_string_free`]; handles with
//! their matching `_free`. After a non-zero status, [`emcom_last_error`]
//! describes the failure on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use emcom::cli::{run_experiment, ExperimentConfig};
use emcom::naming::{GameConfig, GameSetup, GameState, GameTrace};
use emcom::pgm::Dataset;
use emcom::verify::run_battery;
use emcom::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmcomStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Contract = 3,
    Domain = 4,
    Config = 5,
    SizeCap = 6,
    Property = 7,
    NonFinite = 8,
    Io = 9,
    Json = 10,
    Panic = 11,
}

/// A naming game in progress.
pub struct EmcomNamingGame {
    state: GameState,
    trace: GameTrace,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &Error) -> EmcomStatus {
    match err {
        Error::Contract(_) => EmcomStatus::Contract,
        Error::Domain(_) => EmcomStatus::Domain,
        Error::Config(_) => EmcomStatus::Config,
        Error::SizeCap { .. } => EmcomStatus::SizeCap,
        Error::Property(_) => EmcomStatus::Property,
        Error::NonFinite(_) => EmcomStatus::NonFinite,
        Error::Io(_) => EmcomStatus::Io,
        Error::Json(_) => EmcomStatus::Json,
    }
}

struct Fail(EmcomStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

impl From<serde_json::Error> for Fail {
    fn from(e: serde_json::Error) -> Self {
        Fail(EmcomStatus::Json, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> EmcomStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EmcomStatus::Ok,
        Ok(Err(Fail(code, msg))) => {
            set_error(&msg);
            code
        }
        Err(_) => {
            set_error("panic inside emcom");
            EmcomStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(EmcomStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(EmcomStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(EmcomStatus::NullPointer, "output pointer is null".into()));
    }
    let c = CString::new(s).map_err(|_| Fail(EmcomStatus::Json, "interior NUL in output".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn game_mut<'a>(g: *mut EmcomNamingGame) -> Result<&'a mut EmcomNamingGame, Fail> {
    g.as_mut()
        .ok_or_else(|| Fail(EmcomStatus::NullPointer, "game handle is null".into()))
}

/// Message for the last failed call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn emcom_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn emcom_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn emcom_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Creates a naming game from a JSON game config and a JSON dataset.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emcom_naming_game_new(
    config_json: *const c_char,
    dataset_json: *const c_char,
    out: *mut *mut EmcomNamingGame,
) -> EmcomStatus {
    guard(|| {
        if out.is_null() {
            return Err(Fail(EmcomStatus::NullPointer, "output pointer is null".into()));
        }
        *out = ptr::null_mut();
        let cfg: GameConfig = serde_json::from_str(read_str(config_json, "config_json")?)?;
        let dataset = Dataset::from_json(read_str(dataset_json, "dataset_json")?)?;
        let state = GameState::new(&cfg, &dataset, GameSetup::default())?;
        let mut trace = GameTrace::new(cfg);
        trace.metrics.push(state.snapshot(&[])?);
        *out = Box::into_raw(Box::new(EmcomNamingGame { state, trace }));
        Ok(())
    })
}

/// Plays `rounds` further rounds.
///
/// # Safety
/// `game` must be a live handle from [`emcom_naming_game_new`].
#[no_mangle]
pub unsafe extern "C" fn emcom_naming_game_step(game: *mut EmcomNamingGame, rounds: usize) -> EmcomStatus {
    guard(|| {
        let g = game_mut(game)?;
        for _ in 0..rounds {
            let events = g.state.run_round()?;
            g.trace.metrics.push(g.state.snapshot(&events)?);
            g.trace.events.extend(events);
        }
        Ok(())
    })
}

/// Current per-agent signs as a JSON array of arrays.
///
/// # Safety
/// `game` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emcom_naming_game_signs(game: *mut EmcomNamingGame, out: *mut *mut c_char) -> EmcomStatus {
    guard(|| {
        let g = game_mut(game)?;
        let signs: Vec<&Vec<usize>> = g.state.agents.iter().map(|a| &a.signs).collect();
        write_string(out, serde_json::to_string(&signs)?)
    })
}

/// The trace so far as JSONL.
///
/// # Safety
/// `game` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emcom_naming_game_trace(game: *mut EmcomNamingGame, out: *mut *mut c_char) -> EmcomStatus {
    guard(|| {
        let g = game_mut(game)?;
        write_string(out, g.trace.to_jsonl()?)
    })
}

/// # Safety
/// `game` must be null or a live handle; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn emcom_naming_game_free(game: *mut EmcomNamingGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Runs an experiment file given as TOML text, writing its artifacts to the
/// configured output directory. Returns `Property` when checks fail.
///
/// # Safety
/// `config_toml` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn emcom_run_experiment(config_toml: *const c_char) -> EmcomStatus {
    guard(|| {
        let cfg = ExperimentConfig::from_toml(read_str(config_toml, "config_toml")?, &[])?;
        let outcome = run_experiment(&cfg)?;
        if outcome.property_failures > 0 {
            return Err(Fail(
                EmcomStatus::Property,
                format!("{} property checks failed", outcome.property_failures),
            ));
        }
        Ok(())
    })
}

/// Runs the oracle battery; `out` receives the JSON array of reports and
/// `n_failed` the number of failing ones.
///
/// # Safety
/// `out` and `n_failed` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emcom_verify(out: *mut *mut c_char, n_failed: *mut usize) -> EmcomStatus {
    guard(|| {
        if n_failed.is_null() {
            return Err(Fail(EmcomStatus::NullPointer, "n_failed is null".into()));
        }
        let reports = run_battery()?;
        *n_failed = reports.iter().filter(|r| !r.pass).count();
        write_string(out, serde_json::to_string(&reports)?)
    })
}
