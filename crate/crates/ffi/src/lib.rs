//! C ABI over the `idlepower` engine.
//!
//! Engines are opaque handles created by `ip_engine_new_builtin` or
//! `ip_engine_from_json` and released with `ip_engine_free`. Every fallible
//! call returns an [`IpStatus`]; on failure, `ip_last_error_message` returns a
//! description that stays valid until the next failing call on the same
//! thread. Strings handed out by the library must be released with
//! `ip_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use idlepower::{handle_line, Engine, Scenario};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidScenario = 3,
    /// The command was parsed or applied and refused; the reply is still
    /// returned.
    CommandRejected = 4,
    Engine = 5,
    Panic = 6,
}

/// Opaque simulation engine.
pub struct IpEngine {
    engine: Engine,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let mut bytes = message.into().into_bytes();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("NUL bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn fail(status: IpStatus, message: impl Into<String>) -> IpStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> IpStatus) -> IpStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(IpStatus::Panic, "internal panic"))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, IpStatus> {
    if p.is_null() {
        return Err(fail(IpStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(IpStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

fn into_c_string(s: String) -> *mut c_char {
    let mut bytes = s.into_bytes();
    bytes.retain(|&b| b != 0);
    CString::new(bytes).expect("NUL bytes removed").into_raw()
}

unsafe fn publish(scenario: Result<Scenario, idlepower::ScenarioError>, out: *mut *mut IpEngine) -> IpStatus {
    let engine = scenario.and_then(|s| s.build_engine());
    match engine {
        Ok(engine) => {
            *out = Box::into_raw(Box::new(IpEngine { engine }));
            IpStatus::Ok
        }
        Err(e) => fail(IpStatus::InvalidScenario, format!("{}: {e}", e.code())),
    }
}

/// Creates an engine from a built-in scenario such as `"dual_core_phone"`.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ip_engine_new_builtin(name: *const c_char, out: *mut *mut IpEngine) -> IpStatus {
    guard(|| {
        if out.is_null() {
            return fail(IpStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let name = match read_str(name, "name") {
            Ok(n) => n,
            Err(s) => return s,
        };
        publish(Scenario::builtin(name), out)
    })
}

/// Creates an engine from a scenario document in JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ip_engine_from_json(json: *const c_char, out: *mut *mut IpEngine) -> IpStatus {
    guard(|| {
        if out.is_null() {
            return fail(IpStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let json = match read_str(json, "json") {
            Ok(j) => j,
            Err(s) => return s,
        };
        publish(Scenario::from_json(json), out)
    })
}

/// Releases an engine. Null is ignored.
///
/// # Safety
/// `engine` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ip_engine_free(engine: *mut IpEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Current simulated instant, in minutes since midnight of day 0.
///
/// # Safety
/// `engine` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ip_engine_now(engine: *const IpEngine, out: *mut u64) -> IpStatus {
    guard(|| match (engine.as_ref(), out.is_null()) {
        (Some(e), false) => {
            *out = e.engine.now();
            IpStatus::Ok
        }
        _ => fail(IpStatus::NullPointer, "engine or out is null"),
    })
}

/// Advances the simulation to the absolute instant `end` (inclusive).
///
/// # Safety
/// `engine` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ip_engine_run_until(engine: *mut IpEngine, end: u64) -> IpStatus {
    guard(|| {
        let Some(e) = engine.as_mut() else {
            return fail(IpStatus::NullPointer, "engine is null");
        };
        match e.engine.run_until(end) {
            Ok(_) => IpStatus::Ok,
            Err(err) => fail(IpStatus::Engine, format!("{}: {err}", err.code())),
        }
    })
}

/// Remaining battery charge in mAh.
///
/// # Safety
/// `engine` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ip_engine_remaining_mah(engine: *const IpEngine, out: *mut f64) -> IpStatus {
    guard(|| match (engine.as_ref(), out.is_null()) {
        (Some(e), false) => {
            *out = e.engine.battery().remaining_mah;
            IpStatus::Ok
        }
        _ => fail(IpStatus::NullPointer, "engine or out is null"),
    })
}

/// Applies one protocol line and stores the reply line in `*reply`, which
/// the caller frees with `ip_string_free`. Returns
/// `IP_STATUS_COMMAND_REJECTED` for `ERR` replies.
///
/// # Safety
/// `engine` and `reply` must be valid pointers; `line` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ip_engine_handle_line(
    engine: *mut IpEngine,
    line: *const c_char,
    reply: *mut *mut c_char,
) -> IpStatus {
    guard(|| {
        if reply.is_null() {
            return fail(IpStatus::NullPointer, "reply is null");
        }
        *reply = ptr::null_mut();
        let Some(e) = engine.as_mut() else {
            return fail(IpStatus::NullPointer, "engine is null");
        };
        let line = match read_str(line, "line") {
            Ok(l) => l,
            Err(s) => return s,
        };
        let r = handle_line(line, &mut e.engine);
        let text = r.to_string();
        *reply = into_c_string(text.clone());
        if r.is_ok() {
            IpStatus::Ok
        } else {
            fail(IpStatus::CommandRejected, text)
        }
    })
}

/// The event log as a JSON array, freed with `ip_string_free`.
///
/// # Safety
/// `engine` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ip_engine_event_log_json(engine: *const IpEngine, out: *mut *mut c_char) -> IpStatus {
    guard(|| {
        if out.is_null() {
            return fail(IpStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let Some(e) = engine.as_ref() else {
            return fail(IpStatus::NullPointer, "engine is null");
        };
        match serde_json::to_string(e.engine.log()) {
            Ok(json) => *out = into_c_string(json),
            Err(err) => return fail(IpStatus::Engine, err.to_string()),
        }
        IpStatus::Ok
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ip_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failure on this thread; empty if none. Owned by the
/// library.
#[no_mangle]
pub extern "C" fn ip_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}
