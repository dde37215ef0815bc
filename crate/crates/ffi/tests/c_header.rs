//! Compiles and runs a small C program against the generated header and the
//! static library. Skipped when no C compiler is on PATH.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "agrichat.h"

int main(void) {
    size_t d = 0;
    if (agri_levenshtein("wether forcast", "weather forecast", &d) != AGRI_STATUS_OK || d != 2) return 1;
    if (agri_levenshtein(NULL, "x", &d) != AGRI_STATUS_NULL_ARGUMENT || agri_last_error() == NULL) return 2;

    AgriService *svc = NULL;
    if (agri_service_new(NULL, NULL, 42, 1699981200, &svc) != AGRI_STATUS_OK) return 3;
    char *out = NULL;
    const char *ev = "{\"type\":\"message\",\"event_id\":\"e1\",\"user_id\":\"u1\",\"ts\":1699981200,\"text\":\"help\"}";
    if (agri_service_route(svc, ev, &out) != AGRI_STATUS_OK) return 4;
    if (strstr(out, "tap START") == NULL) return 5;
    agri_string_free(out);
    if (agri_service_tick(svc, 10) != AGRI_STATUS_OK) return 6;
    agri_service_free(svc);
    puts("ok");
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps/
    std::env::current_exe()
        .unwrap()
        .parent()
        .and_then(Path::parent)
        .unwrap()
        .to_path_buf()
}

fn compiler() -> Option<String> {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    Command::new(&cc).arg("--version").output().ok()?.status.success().then_some(cc)
}

#[test]
fn header_compiles_and_links() {
    let Some(cc) = compiler() else {
        eprintln!("no C compiler found, skipping");
        return;
    };
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = target_dir().join("libagrichat_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-I"])
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C build failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "C program exited {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "ok");
}
