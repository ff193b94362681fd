use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use gridform_ssa::fixtures::TOY2X3;
use gridform_ssa_ffi::*;

fn load() -> *mut GssaModel {
    let json = CString::new(TOY2X3).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { gssa_model_from_json(json.as_ptr(), &mut model) }, GssaStatus::Ok);
    model
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(gssa_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn dims_and_state_matrix() {
    let model = load();
    let (mut g, mut i, mut n) = (0, 0, 0);
    unsafe {
        assert_eq!(gssa_model_dims(model, &mut g, &mut i, &mut n), GssaStatus::Ok);
        assert_eq!((g, i, n), (2, 3, 7));
        let mut buf = vec![0.0; n * n];
        assert_eq!(gssa_state_matrix(model, buf.as_mut_ptr(), buf.len()), GssaStatus::Ok);
        // Angle rows are [0 I 0].
        assert_eq!(&buf[0..7], &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(gssa_state_matrix(model, buf.as_mut_ptr(), 10), GssaStatus::InvalidArgument);
        assert!(last_error().contains("need 49"));
        gssa_model_free(model);
    }
}

#[test]
fn modes_sensitivity_and_design() {
    let model = load();
    unsafe {
        let mut modes = ptr::null_mut();
        assert_eq!(gssa_modes_compute(model, 0.1, 1.0, &mut modes), GssaStatus::Ok);
        let count = gssa_modes_count(modes);
        assert!(count > 0);
        let mut inter = None;
        for k in 0..count {
            let mut info = GssaModeInfo::default();
            assert_eq!(gssa_modes_get(modes, k, &mut info), GssaStatus::Ok);
            assert!(info.re < 0.0);
            if info.class_ == GssaModeClass::InterArea as i32 {
                inter = Some(k);
            }
        }
        let k = inter.expect("an inter-area mode");

        let mut s = GssaSensitivity::default();
        assert_eq!(gssa_sensitivity(model, modes, k, 0.0, &mut s), GssaStatus::Ok);
        assert!(s.rel_err < 1e-4, "{s:?}");

        let mut d = GssaDesign::default();
        assert_eq!(gssa_mstar(model, modes, k, &mut d), GssaStatus::Ok);
        assert!(d.condition_lhs.is_finite());
        assert_eq!(d.condition_holds, d.condition_lhs > 0.0);

        let mut info = GssaModeInfo::default();
        assert_eq!(gssa_modes_get(modes, count, &mut info), GssaStatus::InvalidArgument);

        let mut gain = 0.0;
        assert_eq!(gssa_model_set_droop(model, 0.02), GssaStatus::Ok);
        assert_eq!(gssa_model_droop_gain(model, &mut gain), GssaStatus::Ok);
        assert!(gain > 0.0);
        assert_eq!(gssa_sensitivity(model, modes, k, 0.0, &mut s), GssaStatus::InvalidArgument);
        assert!(last_error().contains("recompute"));

        gssa_modes_free(modes);
        gssa_model_free(model);
    }
}

#[test]
fn errors_are_reported() {
    unsafe {
        let mut model = ptr::null_mut();
        let bad = CString::new(TOY2X3.replace("\"to\": \"b3\"", "\"to\": \"b99\"")).unwrap();
        assert_eq!(gssa_model_from_json(bad.as_ptr(), &mut model), GssaStatus::Validation);
        assert!(last_error().contains("b99"));
        assert!(model.is_null());
        assert_eq!(gssa_model_from_json(ptr::null(), &mut model), GssaStatus::InvalidArgument);
        assert_eq!(gssa_modes_count(ptr::null()), 0);
        gssa_model_free(ptr::null_mut());
        let v = CStr::from_ptr(gssa_version()).to_str().unwrap();
        assert_eq!(v, env!("CARGO_PKG_VERSION"));
    }
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <stdint.h>
#include <stdlib.h>
#include "gridform_ssa.h"

int main(int argc, char **argv) {
    FILE *f = fopen(argv[1], "rb");
    if (!f) return 10;
    fseek(f, 0, SEEK_END);
    long n = ftell(f);
    fseek(f, 0, SEEK_SET);
    char *buf = calloc(n + 1, 1);
    fread(buf, 1, n, f);
    fclose(f);
    GssaModel *m = NULL;
    if (gssa_model_from_json(buf, &m) != GSSA_STATUS_OK) { puts(gssa_last_error()); return 11; }
    GssaModes *modes = NULL;
    if (gssa_modes_compute(m, 0.1, 1.0, &modes) != GSSA_STATUS_OK) return 12;
    int inter = 0;
    for (size_t k = 0; k < gssa_modes_count(modes); k++) {
        GssaModeInfo info;
        gssa_modes_get(modes, k, &info);
        if (info.class_ == GSSA_MODE_CLASS_INTER_AREA) inter++;
    }
    printf("version=%s inter=%d\n", gssa_version(), inter);
    gssa_modes_free(modes);
    gssa_model_free(m);
    free(buf);
    return 0;
}
"#;

/// Compiles a C consumer against the generated header and the static library.
#[test]
fn c_consumer_links_against_header() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let manifest = env!("CARGO_MANIFEST_DIR");
    let target = std::path::Path::new(manifest).join("../../target/debug");
    let lib = target.join("libgridform_ssa_ffi.a");
    if !lib.exists() {
        eprintln!("static library not built at {}; skipping", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let case = dir.path().join("toy.json");
    std::fs::write(&case, TOY2X3).unwrap();
    let exe = dir.path().join("main");
    let status = Command::new(cc)
        .arg(&src)
        .arg(format!("-I{manifest}/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).arg(&case).output().unwrap();
    assert!(out.status.success(), "{out:?}");
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("inter=") && !text.contains("inter=0"), "{text}");
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| Command::new(c).arg("--version").output().is_ok_and(|o| o.status.success()))
        .ok_or(())
}
