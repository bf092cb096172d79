use std::ffi::{CStr, CString};
use std::ptr;

use ipae_ffi::*;

fn last_error() -> String {
    let p = ipae_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const TINY: &str = r#"{"codec": {"input_dim": 2, "hidden_dim": 8, "latent_dim": 3,
  "hidden_activation": "relu", "output_activation": "identity"},
  "reg": {"kind": "information_potential", "beta": 0.001, "k": 1, "nj": 1},
  "distortion": "mse", "lr": 0.001, "batch_size": 32, "total_batches": 5, "seed": 1, "log_every": 5}"#;

fn gmm() -> (Vec<f64>, Vec<u32>) {
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { ipae_dataset_gen_gmm(4, &mut ds) }, IpaeStatus::Ok);
    let (mut rows, mut cols, mut classes) = (0, 0, 0);
    assert_eq!(unsafe { ipae_dataset_shape(ds, &mut rows, &mut cols, &mut classes) }, IpaeStatus::Ok);
    assert_eq!((rows, cols, classes), (5000, 2, 25));
    let mut x = vec![0.0; rows * cols];
    let mut labels = vec![0u32; rows];
    assert_eq!(unsafe { ipae_dataset_copy(ds, x.as_mut_ptr(), labels.as_mut_ptr()) }, IpaeStatus::Ok);
    unsafe { ipae_dataset_free(ds) };
    (x, labels)
}

#[test]
fn version_is_the_crate_version() {
    let v = unsafe { CStr::from_ptr(ipae_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn train_encode_decode_save_load() {
    let (x, labels) = gmm();
    assert!(labels.iter().all(|&l| l < 25));
    let cfg = CString::new(TINY).unwrap();
    let mut codec = ptr::null_mut();
    let st = unsafe { ipae_train(cfg.as_ptr(), x.as_ptr(), 5000, 2, &mut codec) };
    assert_eq!(st, IpaeStatus::Ok);

    let (mut i, mut h, mut d) = (0, 0, 0);
    assert_eq!(unsafe { ipae_codec_dims(codec, &mut i, &mut h, &mut d) }, IpaeStatus::Ok);
    assert_eq!((i, h, d), (2, 8, 3));

    let n = 10;
    let (mut mu, mut sigma) = (vec![0.0; n * 3], vec![0.0; n * 3]);
    assert_eq!(unsafe { ipae_codec_encode(codec, x.as_ptr(), n, mu.as_mut_ptr(), sigma.as_mut_ptr()) }, IpaeStatus::Ok);
    assert!(sigma.iter().all(|&s| s > 0.0));
    let mut recon = vec![0.0; n * 2];
    assert_eq!(unsafe { ipae_codec_decode(codec, mu.as_ptr(), n, recon.as_mut_ptr()) }, IpaeStatus::Ok);
    assert!(recon.iter().all(|v| v.is_finite()));

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("ck.json").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ipae_codec_save(codec, path.as_ptr(), 1) }, IpaeStatus::Ok);
    let mut loaded = ptr::null_mut();
    assert_eq!(unsafe { ipae_codec_load(path.as_ptr(), &mut loaded) }, IpaeStatus::Ok);
    let mut recon2 = vec![0.0; n * 2];
    assert_eq!(unsafe { ipae_codec_decode(loaded, mu.as_ptr(), n, recon2.as_mut_ptr()) }, IpaeStatus::Ok);
    assert_eq!(recon, recon2);
    unsafe {
        ipae_codec_free(codec);
        ipae_codec_free(loaded);
    }
}

#[test]
fn bounds_match_known_values() {
    let (mu, sigma) = ([0.0, 0.0], [2.0, 1.0]);
    let mut v = 0.0;
    assert_eq!(unsafe { ipae_parametric_mi_bound(mu.as_ptr(), sigma.as_ptr(), 1, 2, &mut v) }, IpaeStatus::Ok);
    assert!((v - 0.806_852_819_440_054_7).abs() < 1e-12);

    let (mu, sigma, eps) = ([0.0, 1.0], [1.0, 1.0], [0.0, 0.0]);
    let partners = [0usize, 1, 0, 1];
    let st = unsafe { ipae_ip_mi_bound(mu.as_ptr(), sigma.as_ptr(), 2, 1, eps.as_ptr(), 1, partners.as_ptr(), 2, &mut v) };
    assert_eq!(st, IpaeStatus::Ok);
    assert!((v - 0.25).abs() < 1e-15);
}

#[test]
fn errors_set_status_and_message() {
    let mut codec = ptr::null_mut();
    let missing = CString::new("/nonexistent/ck.json").unwrap();
    assert_eq!(unsafe { ipae_codec_load(missing.as_ptr(), &mut codec) }, IpaeStatus::Io);
    assert!(codec.is_null());
    assert!(last_error().contains("nonexistent"));

    assert_eq!(unsafe { ipae_codec_load(ptr::null(), &mut codec) }, IpaeStatus::NullPointer);

    let mut v = 0.0;
    let (mu, sigma) = ([0.0], [-1.0]);
    assert_eq!(unsafe { ipae_parametric_mi_bound(mu.as_ptr(), sigma.as_ptr(), 1, 1, &mut v) }, IpaeStatus::Numeric);

    let bad = CString::new(TINY.replace("information_potential", "nope")).unwrap();
    let x = [0.0; 64];
    assert_eq!(unsafe { ipae_train(bad.as_ptr(), x.as_ptr(), 32, 2, &mut codec) }, IpaeStatus::InvalidArgument);
    assert!(last_error().contains("reg.kind"));

    let ok = CString::new(TINY).unwrap();
    assert_eq!(unsafe { ipae_train(ok.as_ptr(), x.as_ptr(), 32, 3, &mut codec) }, IpaeStatus::Shape);
}

#[test]
fn divergence_returns_last_parameters() {
    let (x, _) = gmm();
    let cfg = CString::new(TINY.replace("\"lr\": 0.001", "\"lr\": 1e300")).unwrap();
    let mut codec = ptr::null_mut();
    assert_eq!(unsafe { ipae_train(cfg.as_ptr(), x.as_ptr(), 5000, 2, &mut codec) }, IpaeStatus::Diverged);
    assert!(!codec.is_null());
    unsafe { ipae_codec_free(codec) };
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ipae.h")).unwrap();
    for f in [
        "ipae_last_error", "ipae_version", "ipae_codec_load", "ipae_codec_save", "ipae_codec_free", "ipae_codec_dims",
        "ipae_codec_encode", "ipae_codec_decode", "ipae_train", "ipae_dataset_gen_gmm", "ipae_dataset_load_csv",
        "ipae_dataset_free", "ipae_dataset_shape", "ipae_dataset_copy", "ipae_parametric_mi_bound", "ipae_ip_mi_bound",
    ] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
    assert!(header.contains("typedef struct IpaeCodec IpaeCodec;"));
}
