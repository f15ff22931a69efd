//! C interface to `sfl`: dimensionality reduction and trained-model
//! inference.
//!
//! Every function returns an [`SflStatus`]; on failure the message is
//! available from [`sfl_last_error_message`] on the same thread. Handles are
//! opaque and released with their `_free` function. Matrices are row-major
//! `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use sfl::manifold::{reduce, EmbeddingConfig, EmbeddingResult, Method};
use sfl::neuralnet::{load_model, predict_proba, TrainedModel};
use sfl::numerics::Matrix;
use sfl::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SflStatus {
    Ok = 0,
    InvalidInput = 1,
    InvalidArgument = 2,
    NumericalFailure = 3,
    DisconnectedGraph = 4,
    EmptyDataset = 5,
    SpecValidation = 6,
    Divergence = 7,
    Config = 8,
    Io = 9,
    Format = 10,
    NullPointer = 11,
    Panic = 12,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SflMethod {
    Lle = 0,
    Se = 1,
    Mds = 2,
    Iso = 3,
    Tsne = 4,
    Pca = 5,
}

fn method_from(code: u32) -> Result<Method, Error> {
    const ALL: [(SflMethod, Method); 6] = [
        (SflMethod::Lle, Method::Lle),
        (SflMethod::Se, Method::Se),
        (SflMethod::Mds, Method::Mds),
        (SflMethod::Iso, Method::Iso),
        (SflMethod::Tsne, Method::Tsne),
        (SflMethod::Pca, Method::Pca),
    ];
    ALL.iter()
        .find(|(c, _)| *c as u32 == code)
        .map(|(_, m)| *m)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown method code {code}")))
}

/// A fitted embedding.
pub struct SflEmbedding {
    result: EmbeddingResult,
}

/// A trained network loaded from a model file.
pub struct SflModel {
    model: TrainedModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SflStatus {
    match e {
        Error::InvalidInput(_) => SflStatus::InvalidInput,
        Error::InvalidArgument(_) => SflStatus::InvalidArgument,
        Error::NumericalFailure(_) => SflStatus::NumericalFailure,
        Error::DisconnectedGraph { .. } => SflStatus::DisconnectedGraph,
        Error::EmptyDataset(_) => SflStatus::EmptyDataset,
        Error::SpecValidation { .. } => SflStatus::SpecValidation,
        Error::Divergence { .. } => SflStatus::Divergence,
        Error::Config { .. } => SflStatus::Config,
        Error::Fold { source, .. } => status_of(source),
        Error::Io { .. } => SflStatus::Io,
        _ => SflStatus::Format,
    }
}

enum Failure {
    Null(&'static str),
    Lib(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SflStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SflStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer: {what}"));
            SflStatus::NullPointer
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            SflStatus::Panic
        }
    }
}

unsafe fn matrix_arg(data: *const f64, rows: usize, cols: usize, what: &'static str) -> Result<Matrix, Failure> {
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::InvalidArgument(format!("{what}: {rows} x {cols} overflows")))?;
    if len == 0 {
        return Ok(Matrix::zeros(rows, cols));
    }
    if data.is_null() {
        return Err(Failure::Null(what));
    }
    let slice = std::slice::from_raw_parts(data, len);
    Ok(Matrix::from_vec(rows, cols, slice.to_vec())?)
}

fn nonnull<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    // SAFETY: callers pass handles from this library or null.
    unsafe { p.as_ref() }.ok_or(Failure::Null(what))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn sfl_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn sfl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Reduces a `rows × cols` matrix to `n_components` columns.
///
/// `method` is an [`SflMethod`] value. `n_neighbors == 0` and
/// `perplexity <= 0` select the method defaults.
///
/// # Safety
/// `data` points to `rows * cols` doubles; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn sfl_reduce(
    data: *const f64,
    rows: usize,
    cols: usize,
    method: u32,
    n_components: usize,
    n_neighbors: usize,
    perplexity: f64,
    seed: u64,
    out: *mut *mut SflEmbedding,
) -> SflStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = ptr::null_mut();
        let x = matrix_arg(data, rows, cols, "data")?;
        let mut cfg = EmbeddingConfig::new(method_from(method)?, n_components).with_seed(seed);
        if n_neighbors > 0 {
            cfg.n_neighbors = n_neighbors;
        }
        if perplexity > 0.0 {
            cfg.perplexity = perplexity;
        }
        let result = reduce(&x, &cfg)?;
        *out = Box::into_raw(Box::new(SflEmbedding { result }));
        Ok(())
    })
}

/// # Safety
/// `emb` is a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sfl_embedding_rows(emb: *const SflEmbedding) -> usize {
    emb.as_ref().map_or(0, |e| e.result.coords.rows())
}

/// # Safety
/// `emb` is a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sfl_embedding_cols(emb: *const SflEmbedding) -> usize {
    emb.as_ref().map_or(0, |e| e.result.coords.cols())
}

/// Copies the coordinates, row-major, into `out` of length `len`
/// (at least rows × cols).
///
/// # Safety
/// `out` points to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn sfl_embedding_copy(emb: *const SflEmbedding, out: *mut f64, len: usize) -> SflStatus {
    guard(|| {
        let e = nonnull(emb, "embedding")?;
        let src = e.result.coords.as_slice();
        if len < src.len() {
            return Err(Error::InvalidArgument(format!("buffer holds {len} values, need {}", src.len())).into());
        }
        if !src.is_empty() {
            if out.is_null() {
                return Err(Failure::Null("out"));
            }
            ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
        }
        Ok(())
    })
}

/// Fit diagnostics as JSON (stress, KL divergence, spectrum, iterations,
/// seconds). Release with [`sfl_string_free`].
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn sfl_embedding_diagnostics_json(emb: *const SflEmbedding, out: *mut *mut c_char) -> SflStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = ptr::null_mut();
        let e = nonnull(emb, "embedding")?;
        let json = serde_json::to_string(&e.result.diagnostics).map_err(Error::from)?;
        *out = CString::new(json).expect("JSON has no nul").into_raw();
        Ok(())
    })
}

/// # Safety
/// `emb` came from [`sfl_reduce`] and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sfl_embedding_free(emb: *mut SflEmbedding) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// # Safety
/// `s` came from this library and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sfl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a model file written by `sfl train`.
///
/// # Safety
/// `path` is a NUL-terminated UTF-8 string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn sfl_model_load(path: *const c_char, out: *mut *mut SflModel) -> SflStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        *out = ptr::null_mut();
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        let p = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Error::InvalidArgument("path is not UTF-8".into()))?;
        let model = load_model(Path::new(p))?;
        *out = Box::into_raw(Box::new(SflModel { model }));
        Ok(())
    })
}

/// # Safety
/// `model` is a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sfl_model_n_params(model: *const SflModel) -> usize {
    model.as_ref().map_or(0, |m| m.model.n_params())
}

/// Class probabilities (`rows × 3`, row-major) and, when `labels` is
/// non-null, the argmax class per row.
///
/// # Safety
/// `bio` holds `rows * bio_cols` doubles, `landmarks` `rows * landmark_cols`,
/// `proba` has room for `rows * 3`, `labels` (optional) for `rows`.
#[no_mangle]
pub unsafe extern "C" fn sfl_model_predict(
    model: *const SflModel,
    bio: *const f64,
    bio_cols: usize,
    landmarks: *const f64,
    landmark_cols: usize,
    rows: usize,
    proba: *mut f64,
    labels: *mut u8,
) -> SflStatus {
    guard(|| {
        let m = nonnull(model, "model")?;
        let b = matrix_arg(bio, rows, bio_cols, "bio")?;
        let l = matrix_arg(landmarks, rows, landmark_cols, "landmarks")?;
        let p = predict_proba(&m.model, &b, &l)?;
        if rows == 0 {
            return Ok(());
        }
        if proba.is_null() {
            return Err(Failure::Null("proba"));
        }
        let out = std::slice::from_raw_parts_mut(proba, rows * 3);
        for (dst, src) in out.chunks_exact_mut(3).zip(&p) {
            dst.copy_from_slice(src);
        }
        if !labels.is_null() {
            let lab = std::slice::from_raw_parts_mut(labels, rows);
            for (dst, src) in lab.iter_mut().zip(&p) {
                *dst = sfl::neuralnet::argmax(src);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `model` came from [`sfl_model_load`] and is not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sfl_model_free(model: *mut SflModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
