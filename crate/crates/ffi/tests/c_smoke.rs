//! Compiles a small C program against the generated header and the static
//! library. Skipped when no C compiler or static library is available.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "ipae.h"

int main(void) {
    IpaeDataset *ds = NULL;
    if (ipae_dataset_gen_gmm(0, &ds) != IPAE_STATUS_OK) return 1;
    size_t rows = 0, cols = 0, classes = 0;
    if (ipae_dataset_shape(ds, &rows, &cols, &classes) != IPAE_STATUS_OK) return 2;
    ipae_dataset_free(ds);
    if (rows != 5000 || cols != 2 || classes != 25) return 3;

    double mu[2] = {0.0, 0.0}, sigma[2] = {2.0, 1.0}, kl = 0.0;
    if (ipae_parametric_mi_bound(mu, sigma, 1, 2, &kl) != IPAE_STATUS_OK) return 4;
    if (kl < 0.8068 || kl > 0.8069) return 5;

    IpaeCodec *c = NULL;
    if (ipae_codec_load("/nonexistent.json", &c) != IPAE_STATUS_IO) return 6;
    if (strstr(ipae_last_error(), "nonexistent") == NULL) return 7;
    printf("%s\n", ipae_version());
    return 0;
}
"#;

fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let profile_dir = exe.parent()?.parent()?;
    let lib = profile_dir.join("libipae_ffi.a");
    lib.is_file().then_some(lib)
}

#[test]
fn c_program_links_and_runs() {
    let Some(lib) = static_lib() else {
        eprintln!("skipped: static library not found");
        return;
    };
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipped: no C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    let exe = dir.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I", include])
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert_eq!(run.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
