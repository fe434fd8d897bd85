use std::path::PathBuf;
use std::process::Command;

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let lib = target_dir().join("libqfo_ffi.a");
    assert!(lib.exists(), "{} was not built", lib.display());
    let exe = target_dir().join("qfo_ffi_smoke");
    let status = Command::new("cc")
        .arg("-std=c11")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest.join("include"))
        .arg(manifest.join("tests/c/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .expect("a C compiler is on PATH");
    assert!(status.success());
    let out = Command::new(&exe).arg("1010").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(out.status.success(), "{text}{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(text, "verdict=2 probability=0.5\nparse=3\nqtm=0.5\n");
}

#[test]
fn header_declares_the_api() {
    let h = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/qfo.h")).unwrap();
    for name in [
        "qfo_last_error",
        "qfo_status_str",
        "qfo_string_free",
        "qfo_formula_parse",
        "qfo_formula_free",
        "qfo_formula_n",
        "qfo_formula_pretty",
        "qfo_formula_check",
        "qfo_formula_eval",
        "qfo_qtm_parse",
        "qfo_qtm_free",
        "qfo_qtm_run",
        "qfo_qtm_check",
        "qfo_qtm_compile",
    ] {
        assert!(h.contains(&format!("{name}(")), "{name}");
    }
    assert!(h.contains("typedef struct QfoFormula QfoFormula;"));
    assert!(h.contains("QFO_STATUS_CAPACITY = 5"));
}
