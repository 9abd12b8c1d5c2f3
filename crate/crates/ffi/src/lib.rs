//! C ABI over `emodistill`: CCC statistics, checkpoint inference and the
//! residual gate.
//!
//! Every fallible function returns an [`EmdStatus`]. On failure a message is
//! available from [`emd_last_error`] until the next call on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use emodistill::data::{FeatureSequence, Utterance};
use emodistill::encoder::{load_checkpoint, EmotionModel, Modality};
use emodistill::filter::{fit_residual_model, ResidualModel};
use emodistill::losses::ccc_stats;
use emodistill::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Data = 5,
    Numerical = 6,
    Config = 7,
    Panic = 8,
}

impl From<&Error> for EmdStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => EmdStatus::Io,
            Error::Format { .. } => EmdStatus::Format,
            Error::Data(_) => EmdStatus::Data,
            Error::NonFinite { .. } | Error::Numerical(_) => EmdStatus::Numerical,
            Error::Config(_) => EmdStatus::Config,
            Error::Shape { .. } | Error::InvalidInput(_) => EmdStatus::InvalidArgument,
        }
    }
}

/// Concordance statistics of one prediction/label pair.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EmdCccStats {
    pub ccc: f64,
    pub rho: f64,
    pub c_b: f64,
    pub mean_pred: f64,
    pub mean_label: f64,
    pub var_pred: f64,
    pub var_label: f64,
    pub cov: f64,
}

/// Opaque trained model.
pub struct EmdModel(EmotionModel);

/// Opaque per-dimension residual regression.
pub struct EmdResidualModel(ResidualModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn fail(status: EmdStatus, msg: impl Into<String>) -> EmdStatus {
    set_error(msg);
    status
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), EmdStatus>) -> EmdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EmdStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => fail(EmdStatus::Panic, "internal panic"),
    }
}

fn lib_err(e: Error) -> EmdStatus {
    let status = EmdStatus::from(&e);
    fail(status, e.to_string())
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), EmdStatus> {
    if p.is_null() {
        Err(fail(EmdStatus::NullPointer, format!("{name} is null")))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be valid for `len` reads (or `len == 0`).
unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], EmdStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, name)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// Message describing the most recent failure on this thread; empty after a
/// success. The pointer stays valid until the next library call on this thread.
#[no_mangle]
pub extern "C" fn emd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn emd_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// CCC, Pearson correlation and bias correction of `n` predictions against
/// `n` labels.
///
/// # Safety
/// `pred` and `label` must each point to `n` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emd_ccc_stats(
    pred: *const f32,
    label: *const f32,
    n: usize,
    out: *mut EmdCccStats,
) -> EmdStatus {
    guard(|| {
        non_null(out, "out")?;
        let (p, y) = (slice(pred, n, "pred")?, slice(label, n, "label")?);
        let s = ccc_stats(p, y).map_err(lib_err)?;
        *out = EmdCccStats {
            ccc: s.ccc,
            rho: s.rho,
            c_b: s.c_b,
            mean_pred: s.mean_pred,
            mean_label: s.mean_label,
            var_pred: s.var_pred,
            var_label: s.var_label,
            cov: s.cov,
        };
        Ok(())
    })
}

/// Loads a checkpoint. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emd_model_load(path: *const c_char, out: *mut *mut EmdModel) -> EmdStatus {
    guard(|| {
        non_null(path, "path")?;
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(EmdStatus::InvalidArgument, "path is not valid UTF-8"))?;
        let model = load_checkpoint(Path::new(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EmdModel(model)));
        Ok(())
    })
}

/// Releases a model handle. Null is ignored.
///
/// # Safety
/// `model` must come from [`emd_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn emd_model_free(model: *mut EmdModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the feature widths and embedding size; `text_dim` is 0 for
/// audio-only models. Any output pointer may be null.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn emd_model_dims(
    model: *const EmdModel,
    audio_dim: *mut usize,
    text_dim: *mut usize,
    embed_dim: *mut usize,
) -> EmdStatus {
    guard(|| {
        non_null(model, "model")?;
        let cfg = (*model).0.config();
        for (p, v) in [(audio_dim, cfg.audio_dim), (text_dim, cfg.text_dim), (embed_dim, cfg.embed_dim)] {
            if !p.is_null() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid for the implied lengths.
unsafe fn utterance(
    model: &EmotionModel,
    audio: *const f32,
    audio_frames: usize,
    text: *const f32,
    text_tokens: usize,
) -> Result<Utterance, EmdStatus> {
    let cfg = model.config();
    let seq = |p: *const f32, n: usize, dim: usize, name: &str| -> Result<FeatureSequence, EmdStatus> {
        let values = slice(p, n * dim, name)?.to_vec();
        FeatureSequence::new(n, dim, values).map_err(lib_err)
    };
    let audio = seq(audio, audio_frames, cfg.audio_dim, "audio")?;
    let text = match model.modality() {
        Modality::Audio => None,
        Modality::Multimodal => Some(seq(text, text_tokens, cfg.text_dim, "text")?),
    };
    Ok(Utterance {
        id: String::from("ffi"),
        audio,
        text,
        label: [0.0; 3],
    })
}

/// Predicts `[activation, valence, dominance]` into `out[0..3]`.
///
/// `audio` holds `audio_frames × audio_dim` row-major floats. `text` holds
/// `text_tokens × text_dim` floats and is ignored by audio-only models.
///
/// # Safety
/// `model` must be a live handle; buffers must match the stated sizes;
/// `out` must have room for 3 floats.
#[no_mangle]
pub unsafe extern "C" fn emd_model_predict(
    model: *const EmdModel,
    audio: *const f32,
    audio_frames: usize,
    text: *const f32,
    text_tokens: usize,
    out: *mut f32,
) -> EmdStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let model = &(*model).0;
        let utt = utterance(model, audio, audio_frames, text, text_tokens)?;
        let pred = model.predict(&utt).map_err(lib_err)?;
        ptr::copy_nonoverlapping(pred.as_ptr(), out, 3);
        Ok(())
    })
}

/// Writes the utterance embedding into `out[0..out_len]`; `out_len` must
/// equal the model's embedding size.
///
/// # Safety
/// As for [`emd_model_predict`], with `out` valid for `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn emd_model_embed(
    model: *const EmdModel,
    audio: *const f32,
    audio_frames: usize,
    text: *const f32,
    text_tokens: usize,
    out: *mut f32,
    out_len: usize,
) -> EmdStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let model = &(*model).0;
        if out_len != model.embed_dim() {
            return Err(fail(
                EmdStatus::InvalidArgument,
                format!("out_len {out_len} != embedding size {}", model.embed_dim()),
            ));
        }
        let utt = utterance(model, audio, audio_frames, text, text_tokens)?;
        let e = model.embed(&utt).map_err(lib_err)?;
        ptr::copy_nonoverlapping(e.as_ptr(), out, out_len);
        Ok(())
    })
}

/// # Safety
/// `p` must point to `3 * n` floats.
unsafe fn triples(p: *const f32, n: usize, name: &str) -> Result<Vec<[f32; 3]>, EmdStatus> {
    Ok(slice(p, 3 * n, name)?
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect())
}

/// Fits the per-dimension regression from `n` teacher predictions to `n`
/// labels (both `n × 3` row-major).
///
/// # Safety
/// `preds` and `labels` must each hold `3 * n` floats; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn emd_residual_fit(
    preds: *const f32,
    labels: *const f32,
    n: usize,
    out: *mut *mut EmdResidualModel,
) -> EmdStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let model = fit_residual_model(&triples(preds, n, "preds")?, &triples(labels, n, "labels")?)
            .map_err(lib_err)?;
        *out = Box::into_raw(Box::new(EmdResidualModel(model)));
        Ok(())
    })
}

/// Copies slope, intercept and residual standard deviation per dimension.
/// Any output pointer may be null.
///
/// # Safety
/// `model` must be a live handle; non-null outputs must hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn emd_residual_params(
    model: *const EmdResidualModel,
    w: *mut f64,
    b: *mut f64,
    sigma: *mut f64,
) -> EmdStatus {
    guard(|| {
        non_null(model, "model")?;
        let dims = (*model).0.dims;
        for (p, vals) in [(w, dims.map(|d| d.w)), (b, dims.map(|d| d.b)), (sigma, dims.map(|d| d.sigma))] {
            if !p.is_null() {
                ptr::copy_nonoverlapping(vals.as_ptr(), p, 3);
            }
        }
        Ok(())
    })
}

/// Gate decision for `n` utterances: `keep[i]` is 1 when no dimension's
/// residual exceeds `tau` standard deviations, else 0.
///
/// # Safety
/// `preds` and `labels` must hold `3 * n` floats; `keep` must hold `n` bytes.
#[no_mangle]
pub unsafe extern "C" fn emd_residual_keep(
    model: *const EmdResidualModel,
    preds: *const f32,
    labels: *const f32,
    n: usize,
    tau: f64,
    keep: *mut u8,
) -> EmdStatus {
    guard(|| {
        non_null(model, "model")?;
        if n > 0 {
            non_null(keep, "keep")?;
        }
        let model = &(*model).0;
        let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
        let mask = emodistill::filter::compute_mask(
            model,
            &ids,
            &triples(preds, n, "preds")?,
            &triples(labels, n, "labels")?,
            tau,
        )
        .map_err(lib_err)?;
        for (i, e) in mask.entries.iter().enumerate() {
            *keep.add(i) = u8::from(e.keep);
        }
        Ok(())
    })
}

/// Releases a residual model. Null is ignored.
///
/// # Safety
/// `model` must come from [`emd_residual_fit`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn emd_residual_free(model: *mut EmdResidualModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
