//! C ABI for the `ipae` crate.
//!
//! Objects cross the boundary as opaque handles created by `ipae_*_new`,
//! `ipae_*_load` or `ipae_*_gen` functions and released with the matching
//! `ipae_*_free`. Every fallible function returns an [`IpaeStatus`]; on
//! failure, [`ipae_last_error`] describes the problem. Matrices are dense,
//! row-major `double` buffers owned by the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use ipae::checkpoint::Checkpoint;
use ipae::codec::{Codec, GaussianCode, NoiseBlock};
use ipae::config::TrainConfig;
use ipae::datasets::{gen_gmm, read_dataset_csv, LabeledDataset};
use ipae::matrix::Matrix;
use ipae::objectives::{ip_mi_bound, parametric_mi_bound, Partners};
use ipae::train::{train, TrainOptions};
use ipae::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpaeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Numeric = 4,
    Diverged = 5,
    Io = 6,
    Format = 7,
    Panic = 8,
}

/// A trained or loaded encoder/decoder pair.
pub struct IpaeCodec {
    inner: Codec,
}

/// A labeled dataset.
pub struct IpaeDataset {
    inner: LabeledDataset,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> IpaeStatus {
    match err {
        Error::Shape { .. } => IpaeStatus::Shape,
        Error::Numeric { .. } => IpaeStatus::Numeric,
        Error::Diverged { .. } => IpaeStatus::Diverged,
        Error::Io { .. } => IpaeStatus::Io,
        Error::Format { .. } | Error::Json { .. } => IpaeStatus::Format,
        Error::Contract(_) | Error::Domain(_) | Error::Config { .. } => IpaeStatus::InvalidArgument,
    }
}

struct Fail(IpaeStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IpaeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IpaeStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| (*s).to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            IpaeStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(IpaeStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(IpaeStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn matrix_arg(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<Matrix, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Fail(IpaeStatus::InvalidArgument, format!("{what} size overflows")))?;
    Ok(Matrix::from_vec(rows, cols, std::slice::from_raw_parts(p, len).to_vec())?)
}

unsafe fn write_out(dst: *mut f64, src: &Matrix, what: &str) -> Result<(), Fail> {
    if dst.is_null() {
        return Err(null(what));
    }
    ptr::copy_nonoverlapping(src.as_slice().as_ptr(), dst, src.as_slice().len());
    Ok(())
}

unsafe fn codec_ref<'a>(c: *const IpaeCodec) -> Result<&'a Codec, Fail> {
    c.as_ref().map(|c| &c.inner).ok_or_else(|| null("codec"))
}

unsafe fn dataset_ref<'a>(d: *const IpaeDataset) -> Result<&'a LabeledDataset, Fail> {
    d.as_ref().map(|d| &d.inner).ok_or_else(|| null("dataset"))
}

unsafe fn code_arg(mu: *const f64, sigma: *const f64, n: usize, dims: usize) -> Result<GaussianCode, Fail> {
    Ok(GaussianCode::new(matrix_arg(mu, n, dims, "mu")?, matrix_arg(sigma, n, dims, "sigma")?)?)
}

/// Message for the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ipae_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ipae_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a JSON checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ipae_codec_load(path: *const c_char, out: *mut *mut IpaeCodec) -> IpaeStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let codec = Checkpoint::load(&path)?.to_codec()?;
        *out = Box::into_raw(Box::new(IpaeCodec { inner: codec }));
        Ok(())
    })
}

/// Writes `codec` as a JSON checkpoint tagged with `seed`.
///
/// # Safety
/// `codec` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ipae_codec_save(codec: *const IpaeCodec, path: *const c_char, seed: u64) -> IpaeStatus {
    guard(|| {
        let codec = codec_ref(codec)?;
        let path = PathBuf::from(str_arg(path, "path")?);
        Checkpoint::from_codec(codec, seed).save(&path)?;
        Ok(())
    })
}

/// # Safety
/// `codec` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn ipae_codec_free(codec: *mut IpaeCodec) {
    if !codec.is_null() {
        drop(Box::from_raw(codec));
    }
}

/// Input, hidden and latent widths.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ipae_codec_dims(
    codec: *const IpaeCodec,
    input_dim: *mut usize,
    hidden_dim: *mut usize,
    latent_dim: *mut usize,
) -> IpaeStatus {
    guard(|| {
        let spec = codec_ref(codec)?.spec;
        if input_dim.is_null() || hidden_dim.is_null() || latent_dim.is_null() {
            return Err(null("dimension output"));
        }
        *input_dim = spec.input_dim;
        *hidden_dim = spec.hidden_dim;
        *latent_dim = spec.latent_dim;
        Ok(())
    })
}

/// Encodes `n` rows of `x` (`n × input_dim`) into posterior means and
/// standard deviations (`n × latent_dim` each).
///
/// # Safety
/// Buffers must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn ipae_codec_encode(
    codec: *const IpaeCodec,
    x: *const f64,
    n: usize,
    mu_out: *mut f64,
    sigma_out: *mut f64,
) -> IpaeStatus {
    guard(|| {
        let codec = codec_ref(codec)?;
        let x = matrix_arg(x, n, codec.spec.input_dim, "x")?;
        let code = codec.encode(&x)?;
        write_out(mu_out, &code.mu, "mu_out")?;
        write_out(sigma_out, &code.sigma, "sigma_out")
    })
}

/// Decodes `n` codes (`n × latent_dim`) into `out` (`n × input_dim`).
///
/// # Safety
/// Buffers must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn ipae_codec_decode(
    codec: *const IpaeCodec,
    z: *const f64,
    n: usize,
    out: *mut f64,
) -> IpaeStatus {
    guard(|| {
        let codec = codec_ref(codec)?;
        let z = matrix_arg(z, n, codec.spec.latent_dim, "z")?;
        write_out(out, &codec.decode(&z)?, "out")
    })
}

/// Trains a codec on `n × dim` rows with a JSON training config.
///
/// On divergence the status is `Diverged` and `*out` receives the last
/// finite parameters.
///
/// # Safety
/// `config_json` must be NUL-terminated, `x` must hold `n * dim` doubles
/// and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ipae_train(
    config_json: *const c_char,
    x: *const f64,
    n: usize,
    dim: usize,
    out: *mut *mut IpaeCodec,
) -> IpaeStatus {
    guard(|| {
        let config = TrainConfig::from_json(str_arg(config_json, "config_json")?)?;
        let x = matrix_arg(x, n, dim, "x")?;
        if out.is_null() {
            return Err(null("out"));
        }
        match train(&config, &x, TrainOptions::default()) {
            Ok(outcome) => {
                *out = Box::into_raw(Box::new(IpaeCodec { inner: outcome.codec }));
                Ok(())
            }
            Err(Error::Diverged { step, reason, last_good }) => {
                *out = Box::into_raw(Box::new(IpaeCodec { inner: *last_good }));
                Err(Fail(IpaeStatus::Diverged, format!("training diverged at step {step}: {reason}")))
            }
            Err(e) => Err(e.into()),
        }
    })
}

/// The 25-component grid mixture drawn with `seed`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ipae_dataset_gen_gmm(seed: u64, out: *mut *mut IpaeDataset) -> IpaeStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(IpaeDataset { inner: gen_gmm(seed) }));
        Ok(())
    })
}

/// Reads a dataset CSV.
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn ipae_dataset_load_csv(path: *const c_char, out: *mut *mut IpaeDataset) -> IpaeStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        if out.is_null() {
            return Err(null("out"));
        }
        let (ds, _) = read_dataset_csv(&path)?;
        *out = Box::into_raw(Box::new(IpaeDataset { inner: ds }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must come from this library and not be used afterwards. Null
/// is ignored.
#[no_mangle]
pub unsafe extern "C" fn ipae_dataset_free(dataset: *mut IpaeDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Row count, column count and number of classes.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn ipae_dataset_shape(
    dataset: *const IpaeDataset,
    rows: *mut usize,
    cols: *mut usize,
    num_classes: *mut usize,
) -> IpaeStatus {
    guard(|| {
        let ds = dataset_ref(dataset)?;
        if rows.is_null() || cols.is_null() || num_classes.is_null() {
            return Err(null("shape output"));
        }
        *rows = ds.len();
        *cols = ds.dim();
        *num_classes = ds.num_classes;
        Ok(())
    })
}

/// Copies the features (`rows × cols`) and labels (`rows`). Either output
/// may be null to skip it.
///
/// # Safety
/// Non-null buffers must hold the stated number of elements.
#[no_mangle]
pub unsafe extern "C" fn ipae_dataset_copy(
    dataset: *const IpaeDataset,
    x_out: *mut f64,
    labels_out: *mut u32,
) -> IpaeStatus {
    guard(|| {
        let ds = dataset_ref(dataset)?;
        if !x_out.is_null() {
            write_out(x_out, &ds.x, "x_out")?;
        }
        if !labels_out.is_null() {
            for (i, &l) in ds.labels.iter().enumerate() {
                *labels_out.add(i) = l as u32;
            }
        }
        Ok(())
    })
}

/// Batch-mean KL divergence from `N(mu, diag sigma^2)` to `N(0, I)`.
///
/// # Safety
/// `mu` and `sigma` must hold `n * dims` doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ipae_parametric_mi_bound(
    mu: *const f64,
    sigma: *const f64,
    n: usize,
    dims: usize,
    out: *mut f64,
) -> IpaeStatus {
    guard(|| {
        let code = code_arg(mu, sigma, n, dims)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = parametric_mi_bound(&code)?;
        Ok(())
    })
}

/// Pairwise information-potential bound.
///
/// `eps` holds `n * k` noise rows of width `dims`, row `i * k + s` being
/// draw `s` of sample `i`. `partners` holds `n * nj` row indices, `nj` per
/// anchor.
///
/// # Safety
/// Buffers must hold the stated number of elements; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ipae_ip_mi_bound(
    mu: *const f64,
    sigma: *const f64,
    n: usize,
    dims: usize,
    eps: *const f64,
    k: usize,
    partners: *const usize,
    nj: usize,
    out: *mut f64,
) -> IpaeStatus {
    guard(|| {
        let code = code_arg(mu, sigma, n, dims)?;
        let noise = NoiseBlock::from_matrix(k, matrix_arg(eps, n * k, dims, "eps")?)?;
        if partners.is_null() {
            return Err(null("partners"));
        }
        let idx = std::slice::from_raw_parts(partners, n * nj).to_vec();
        let partners = Partners::new(nj, idx)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ip_mi_bound(&code, &noise, &partners)?;
        Ok(())
    })
}
