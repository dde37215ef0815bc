//! C ABI over the agrichat service.
//!
//! Every function returns an [`AgriStatus`]. On failure a description is kept
//! per thread and can be read with [`agri_last_error`]. Strings handed out by
//! this library must be released with [`agri_string_free`]; a service handle
//! with [`agri_service_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use agrichat::config::{FarmConfig, ServiceConfig};
use agrichat::gateway::{encode_message_string, Gateway, GatewayError, OutboundMessage};
use agrichat::intent::levenshtein;
use agrichat::orchestrator::Orchestrator;
use agrichat::store::{Durability, Store};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgriStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Store = 4,
    MalformedFrame = 5,
    DuplicateEvent = 6,
    Panic = 7,
}

/// Opaque service handle.
pub struct AgriService {
    gateway: Gateway,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', "\\0");
    let c = CString::new(msg).expect("interior NULs replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: AgriStatus, msg: impl Into<String>) -> AgriStatus {
    set_last_error(msg);
    status
}

fn guard(f: impl FnOnce() -> AgriStatus) -> AgriStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            fail(AgriStatus::Panic, msg)
        }
    }
}

/// Borrows a required C string argument.
unsafe fn arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, AgriStatus> {
    if p.is_null() {
        return Err(fail(AgriStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| fail(AgriStatus::InvalidUtf8, format!("{name}: {e}")))
}

unsafe fn opt_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, AgriStatus> {
    if p.is_null() {
        Ok(None)
    } else {
        arg(p, name).map(Some)
    }
}

unsafe fn hand_out(out: *mut *mut c_char, text: String) -> AgriStatus {
    match CString::new(text) {
        Ok(c) => {
            *out = c.into_raw();
            AgriStatus::Ok
        }
        Err(e) => fail(AgriStatus::MalformedFrame, e.to_string()),
    }
}

fn frames(msgs: &[OutboundMessage]) -> String {
    let mut s = String::new();
    for m in msgs {
        if let Ok(line) = encode_message_string(m) {
            s.push_str(&line);
            s.push('\n');
        }
    }
    s
}

/// Creates a service.
///
/// `config_path` and `data_dir` may be null: the built-in configuration is
/// used, and the logs are kept in memory. `seed` replaces the sim seed.
/// The simulated clock starts at `start_ts` (unix seconds).
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn agri_service_new(
    config_path: *const c_char,
    data_dir: *const c_char,
    seed: u64,
    start_ts: i64,
    out: *mut *mut AgriService,
) -> AgriStatus {
    guard(|| {
        if out.is_null() {
            return fail(AgriStatus::NullArgument, "out is null");
        }
        let config_path = match opt_arg(config_path, "config_path") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let data_dir = match opt_arg(data_dir, "data_dir") {
            Ok(p) => p,
            Err(s) => return s,
        };
        let cfg = match config_path {
            Some(p) => match FarmConfig::load(Path::new(p)).and_then(|c| c.resolve()) {
                Ok(c) => c,
                Err(e) => return fail(AgriStatus::Config, e.to_string()),
            },
            None => ServiceConfig::default(),
        };
        let mut cfg = cfg;
        cfg.sim.seed = seed;
        let store = match data_dir {
            Some(d) => match Store::open(Path::new(d), Durability::Sync) {
                Ok(s) => s,
                Err(e) => return fail(AgriStatus::Store, e.to_string()),
            },
            None => Store::in_memory(),
        };
        let allowlist = cfg.allowlist.clone();
        let gateway = Gateway::new(Orchestrator::new(cfg, start_ts, store), allowlist);
        *out = Box::into_raw(Box::new(AgriService { gateway }));
        AgriStatus::Ok
    })
}

/// Releases a service. Null is ignored.
///
/// # Safety
/// `svc` must come from [`agri_service_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn agri_service_free(svc: *mut AgriService) {
    if !svc.is_null() {
        drop(Box::from_raw(svc));
    }
}

/// Routes one inbound frame. On success `*out_frames` receives the reply
/// batch as newline-terminated outbound frames.
///
/// # Safety
/// `svc` must be a live handle; `frame` NUL-terminated; `out_frames` writable.
#[no_mangle]
pub unsafe extern "C" fn agri_service_route(
    svc: *mut AgriService,
    frame: *const c_char,
    out_frames: *mut *mut c_char,
) -> AgriStatus {
    guard(|| {
        if svc.is_null() || out_frames.is_null() {
            return fail(AgriStatus::NullArgument, "svc or out_frames is null");
        }
        let frame = match arg(frame, "frame") {
            Ok(f) => f,
            Err(s) => return s,
        };
        let svc = &mut *svc;
        match svc.gateway.route_frame(frame.as_bytes()) {
            Ok(replies) => hand_out(out_frames, frames(&replies)),
            Err(e @ GatewayError::DuplicateEvent(_)) => fail(AgriStatus::DuplicateEvent, e.to_string()),
            Err(e) => fail(AgriStatus::MalformedFrame, e.to_string()),
        }
    })
}

/// Advances the simulated clock by `ticks` ticks.
///
/// # Safety
/// `svc` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn agri_service_tick(svc: *mut AgriService, ticks: u64) -> AgriStatus {
    guard(|| {
        if svc.is_null() {
            return fail(AgriStatus::NullArgument, "svc is null");
        }
        let svc = &mut *svc;
        for _ in 0..ticks {
            svc.gateway.tick();
        }
        AgriStatus::Ok
    })
}

/// Connects `user_id` and drains its pushed messages into `*out_frames`
/// (possibly an empty string).
///
/// # Safety
/// `svc` must be a live handle; `user_id` NUL-terminated; `out_frames` writable.
#[no_mangle]
pub unsafe extern "C" fn agri_service_poll(
    svc: *mut AgriService,
    user_id: *const c_char,
    out_frames: *mut *mut c_char,
) -> AgriStatus {
    guard(|| {
        if svc.is_null() || out_frames.is_null() {
            return fail(AgriStatus::NullArgument, "svc or out_frames is null");
        }
        let user = match arg(user_id, "user_id") {
            Ok(u) => u,
            Err(s) => return s,
        };
        let svc = &mut *svc;
        svc.gateway.connect(user);
        let msgs = svc.gateway.take_delivered(user);
        hand_out(out_frames, frames(&msgs))
    })
}

/// Edit distance between two UTF-8 strings, counted in Unicode scalar values.
///
/// # Safety
/// `a` and `b` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn agri_levenshtein(a: *const c_char, b: *const c_char, out: *mut usize) -> AgriStatus {
    guard(|| {
        if out.is_null() {
            return fail(AgriStatus::NullArgument, "out is null");
        }
        let (a, b) = match (arg(a, "a"), arg(b, "b")) {
            (Ok(a), Ok(b)) => (a, b),
            (Err(s), _) | (_, Err(s)) => return s,
        };
        *out = levenshtein(a, b);
        AgriStatus::Ok
    })
}

/// The calling thread's last error message, or null. Valid until the next
/// call into this library on the same thread.
#[no_mangle]
pub extern "C" fn agri_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn agri_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
