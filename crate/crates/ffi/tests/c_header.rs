//! Compiles a C program against the generated header and runs it linked to
//! the shared library.

use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <math.h>
#include <stdio.h>
#include <string.h>
#include "dmm.h"

int main(void) {
    double rates[4] = {-1.0, 2.0, 1.0, -2.0};
    DmmRateMatrix *rm = NULL;
    if (dmm_rate_matrix_new(2, rates, &rm) != DMM_STATUS_OK) return 1;
    double p0[2] = {1.0, 0.0}, out[2];
    if (dmm_evolve_density(rm, p0, 2, 50.0, out) != DMM_STATUS_OK) return 2;
    if (fabs(out[0] - 2.0 / 3.0) > 1e-8) return 3;
    if (dmm_evolve_density(rm, p0, 3, 1.0, out) != DMM_STATUS_INVALID_ARGUMENT) return 4;
    if (dmm_last_error() == NULL || strstr(dmm_last_error(), "p0") == NULL) return 5;
    dmm_rate_matrix_free(rm);
    DmmConfig *cfg = NULL;
    if (dmm_config_load("/nonexistent.json", &cfg) != DMM_STATUS_CONFIG) return 6;
    printf("ok %s\n", dmm_version());
    return 0;
}
"#;

fn library_dir() -> PathBuf {
    // target/<profile>/deps/<test> -> target/<profile>
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let lib = library_dir();
    if !lib.join("libdmm_ffi.so").exists() && !lib.join("libdmm_ffi.dylib").exists() {
        panic!("shared library not found in {}", lib.display());
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin = dir.path().join("main");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-pedantic"])
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg("-L")
        .arg(&lib)
        .arg(format!("-Wl,-rpath,{}", lib.display()))
        .args(["-ldmm_ffi", "-lm", "-o"])
        .arg(&bin)
        .status()
        .expect("C compiler");
    assert!(status.success(), "compilation failed");
    let run = Command::new(&bin).output().unwrap();
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert!(run.status.success(), "exit {:?}: {stdout}", run.status.code());
    assert_eq!(stdout.trim(), format!("ok {}", env!("CARGO_PKG_VERSION")));
}
