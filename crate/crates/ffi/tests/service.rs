use std::ffi::{CStr, CString};
use std::ptr;

use agrichat_ffi::*;

const START: i64 = 1_699_981_200;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take(p: *mut std::ffi::c_char) -> String {
    let s = CStr::from_ptr(p).to_str().unwrap().to_owned();
    agri_string_free(p);
    s
}

unsafe fn new_service(data: Option<&std::path::Path>) -> *mut AgriService {
    let mut svc = ptr::null_mut();
    let dir = data.map(|d| c(d.to_str().unwrap()));
    let status = agri_service_new(
        ptr::null(),
        dir.as_ref().map_or(ptr::null(), |d| d.as_ptr()),
        42,
        START,
        &mut svc,
    );
    assert_eq!(status, AgriStatus::Ok);
    assert!(!svc.is_null());
    svc
}

#[test]
fn session_lifecycle() {
    unsafe {
        let svc = new_service(None);
        let mut out = ptr::null_mut();
        let start = c(r#"{"type":"postback","event_id":"e1","user_id":"u1","ts":1699981200,"action":"TOGGLE_SESSION"}"#);
        assert_eq!(agri_service_route(svc, start.as_ptr(), &mut out), AgriStatus::Ok);
        let replies = take(out);
        assert_eq!(replies.lines().count(), 2);
        assert!(replies.starts_with(r#"{"type":"text","user_id":"u1","text":"Welcome"#));

        assert_eq!(agri_service_route(svc, start.as_ptr(), &mut out), AgriStatus::DuplicateEvent);
        let bad = c(r#"{"type":"sticker"}"#);
        assert_eq!(agri_service_route(svc, bad.as_ptr(), &mut out), AgriStatus::MalformedFrame);
        assert!(CStr::from_ptr(agri_last_error()).to_str().unwrap().contains("sticker"));

        assert_eq!(agri_service_tick(svc, 36), AgriStatus::Ok);
        let user = c("u1");
        assert_eq!(agri_service_poll(svc, user.as_ptr(), &mut out), AgriStatus::Ok);
        let pushed = take(out);
        assert!(pushed.lines().next().unwrap().starts_with(r#"{"type":"video""#));
        assert_eq!(agri_service_poll(svc, user.as_ptr(), &mut out), AgriStatus::Ok);
        assert_eq!(take(out), "");
        agri_service_free(svc);
    }
}

#[test]
fn file_backed_service_persists_sessions() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let svc = new_service(Some(dir.path()));
        let mut out = ptr::null_mut();
        let start = c(r#"{"type":"postback","event_id":"e1","user_id":"u1","ts":1699981200,"action":"TOGGLE_SESSION"}"#);
        assert_eq!(agri_service_route(svc, start.as_ptr(), &mut out), AgriStatus::Ok);
        agri_string_free(out);
        agri_service_free(svc);

        let svc = new_service(Some(dir.path()));
        let monitor = c(r#"{"type":"postback","event_id":"e2","user_id":"u1","ts":1699981201,"action":"SHOW_MONITOR"}"#);
        assert_eq!(agri_service_route(svc, monitor.as_ptr(), &mut out), AgriStatus::Ok);
        assert!(take(out).contains(r#""title":"Field status""#));
        agri_service_free(svc);
    }
    let sessions = std::fs::read_to_string(dir.path().join("sessions.log")).unwrap();
    assert_eq!(sessions.lines().count(), 1);
}

#[test]
fn bad_config_path_is_a_config_error() {
    unsafe {
        let mut svc = ptr::null_mut();
        let path = c("/nonexistent/farm.conf");
        let status = agri_service_new(path.as_ptr(), ptr::null(), 0, START, &mut svc);
        assert_eq!(status, AgriStatus::Config);
        assert!(svc.is_null());
        assert!(CStr::from_ptr(agri_last_error()).to_str().unwrap().contains("/nonexistent/farm.conf"));
        agri_service_free(ptr::null_mut());
        agri_string_free(ptr::null_mut());
    }
}
