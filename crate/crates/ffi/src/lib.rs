//! C ABI over the `srmt` engine.
//!
//! Models are exposed as opaque [`SrmtModel`] handles. Every fallible call
//! returns an [`SrmtStatus`]; on failure a human-readable message is kept per
//! thread and can be fetched with [`srmt_last_error_message`]. Images are
//! passed as C×H×W `float` arrays in [0,1], matching the model input shape.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use srmt::campaign::{self, CampaignConfig};
use srmt::gradcam;
use srmt::sensitivity::{self, Fusion};
use srmt::{Error, Model, Tensor};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrmtStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    BufferTooSmall = 3,
    Panic = 4,
    Io = 10,
    BadMagic = 11,
    UnsupportedVersion = 12,
    ShapeChainBroken = 13,
    TruncatedBlob = 14,
    MalformedDescriptor = 15,
    ModelHasNoTargetLayer = 16,
    DecodeError = 17,
    EmptySeedSet = 18,
    ShapeMismatch = 20,
    InvalidClass = 21,
    InvalidArgument = 22,
    EmptyHeatmapList = 23,
    RectLargerThanImage = 24,
    RectOutOfBounds = 25,
    UndefinedForZeroTrials = 26,
    FewerThanTwoBins = 27,
    Config = 28,
}

impl From<&Error> for SrmtStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => SrmtStatus::Io,
            Error::BadMagic => SrmtStatus::BadMagic,
            Error::UnsupportedVersion(_) => SrmtStatus::UnsupportedVersion,
            Error::ShapeChainBroken { .. } => SrmtStatus::ShapeChainBroken,
            Error::TruncatedBlob { .. } => SrmtStatus::TruncatedBlob,
            Error::MalformedDescriptor(_) => SrmtStatus::MalformedDescriptor,
            Error::ModelHasNoTargetLayer(_) => SrmtStatus::ModelHasNoTargetLayer,
            Error::DecodeError { .. } => SrmtStatus::DecodeError,
            Error::EmptySeedSet => SrmtStatus::EmptySeedSet,
            Error::ShapeMismatch(_) => SrmtStatus::ShapeMismatch,
            Error::InvalidClass { .. } => SrmtStatus::InvalidClass,
            Error::InvalidArgument(_) => SrmtStatus::InvalidArgument,
            Error::EmptyHeatmapList => SrmtStatus::EmptyHeatmapList,
            Error::RectLargerThanImage { .. } => SrmtStatus::RectLargerThanImage,
            Error::RectOutOfBounds(_) => SrmtStatus::RectOutOfBounds,
            Error::UndefinedForZeroTrials => SrmtStatus::UndefinedForZeroTrials,
            Error::FewerThanTwoBins(_) => SrmtStatus::FewerThanTwoBins,
            Error::Config(_) => SrmtStatus::Config,
        }
    }
}

/// Region-selection fusion for [`srmt_sensitive_mask`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SrmtFusion {
    Max = 0,
    Avg = 1,
    Best = 2,
}

impl From<SrmtFusion> for Fusion {
    fn from(f: SrmtFusion) -> Self {
        match f {
            SrmtFusion::Max => Fusion::Max,
            SrmtFusion::Avg => Fusion::Avg,
            SrmtFusion::Best => Fusion::Best,
        }
    }
}

/// Opaque model handle.
pub struct SrmtModel {
    inner: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(SrmtStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(SrmtStatus::from(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SrmtStatus::NullPointer, format!("NullPointer: {what} is null"))
}

/// Runs `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SrmtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SrmtStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("Panic: internal error".into());
            SrmtStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Fail(SrmtStatus::InvalidUtf8, format!("InvalidUtf8: {what} is not UTF-8")))
}

unsafe fn model_arg<'a>(m: *const SrmtModel) -> Result<&'a Model, Fail> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn image_arg(model: &Model, data: *const f32, len: usize) -> Result<Tensor, Fail> {
    if data.is_null() {
        return Err(null("image"));
    }
    let shape = model.input_shape();
    let expected: usize = shape.iter().product();
    if len != expected {
        return Err(Error::ShapeMismatch(format!("image has {len} values, model expects {shape:?} = {expected}")).into());
    }
    let values = std::slice::from_raw_parts(data, len).to_vec();
    Ok(Tensor::new(shape.to_vec(), values)?)
}

unsafe fn out_slice<'a, T>(out: *mut T, len: usize, needed: usize, what: &str) -> Result<&'a mut [T], Fail> {
    if out.is_null() {
        return Err(null(what));
    }
    if len < needed {
        return Err(Fail(
            SrmtStatus::BufferTooSmall,
            format!("BufferTooSmall: {what} holds {len}, needs {needed}"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(out, needed))
}

/// Engine version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn srmt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn srmt_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads an SRMTW model file. On success `*out` receives a handle that must
/// be released with [`srmt_model_free`].
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn srmt_model_load(path: *const c_char, out: *mut *mut SrmtModel) -> SrmtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let inner = srmt::model_io::load_model(path)?;
        *out = Box::into_raw(Box::new(SrmtModel { inner }));
        Ok(())
    })
}

/// Releases a handle from [`srmt_model_load`]. NULL is ignored.
///
/// # Safety
/// `model` must come from [`srmt_model_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn srmt_model_free(model: *mut SrmtModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the input shape (channels, height, width) and class count.
///
/// # Safety
/// `model` must be a live handle; each out pointer must be writable.
#[no_mangle]
pub unsafe extern "C" fn srmt_model_describe(
    model: *const SrmtModel,
    out_channels: *mut usize,
    out_height: *mut usize,
    out_width: *mut usize,
    out_num_classes: *mut usize,
) -> SrmtStatus {
    guard(|| {
        let m = model_arg(model)?;
        if out_channels.is_null() || out_height.is_null() || out_width.is_null() || out_num_classes.is_null() {
            return Err(null("out"));
        }
        let [c, h, w] = m.input_shape();
        *out_channels = c;
        *out_height = h;
        *out_width = w;
        *out_num_classes = m.num_classes();
        Ok(())
    })
}

/// Forward pass: writes `num_classes` pre-softmax logits to `out_logits` and
/// the predicted class (lowest index on ties) to `out_best_class` if non-NULL.
///
/// # Safety
/// `image` must point to `image_len` floats; `out_logits` to `out_len` writable floats.
#[no_mangle]
pub unsafe extern "C" fn srmt_model_logits(
    model: *const SrmtModel,
    image: *const f32,
    image_len: usize,
    out_logits: *mut f32,
    out_len: usize,
    out_best_class: *mut usize,
) -> SrmtStatus {
    guard(|| {
        let m = model_arg(model)?;
        let img = image_arg(m, image, image_len)?;
        let out = out_slice(out_logits, out_len, m.num_classes(), "out_logits")?;
        let pred = m.predict(&img)?;
        out.copy_from_slice(&pred.logits);
        if !out_best_class.is_null() {
            *out_best_class = pred.best_class;
        }
        Ok(())
    })
}

/// Grad-CAM heat map of `class` at input resolution (H×W values in [0,1]).
///
/// # Safety
/// As for [`srmt_model_logits`]; `out` must hold `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn srmt_heatmap(
    model: *const SrmtModel,
    image: *const f32,
    image_len: usize,
    class: usize,
    out: *mut f32,
    out_len: usize,
) -> SrmtStatus {
    guard(|| {
        let m = model_arg(model)?;
        m.check_class(class)?;
        let img = image_arg(m, image, image_len)?;
        let [_, h, w] = m.input_shape();
        let out = out_slice(out, out_len, h * w, "out")?;
        let trace = m.trace(&img)?;
        let map = gradcam::class_heatmap(m, &trace, class)?;
        out.copy_from_slice(&map.grid.values);
        Ok(())
    })
}

/// Sensitive-region mask (H×W bytes, 1 = selected) for the given fusion and
/// threshold; `out_count` receives the number of selected pixels if non-NULL.
///
/// # Safety
/// As for [`srmt_model_logits`]; `out` must hold `out_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn srmt_sensitive_mask(
    model: *const SrmtModel,
    image: *const f32,
    image_len: usize,
    fusion: SrmtFusion,
    threshold: f32,
    out: *mut u8,
    out_len: usize,
    out_count: *mut usize,
) -> SrmtStatus {
    guard(|| {
        let m = model_arg(model)?;
        let img = image_arg(m, image, image_len)?;
        let [_, h, w] = m.input_shape();
        let out = out_slice(out, out_len, h * w, "out")?;
        let fusion = Fusion::from(fusion);
        let (pred, maps) = if fusion == Fusion::Best {
            let (p, map) = gradcam::best_class_heatmap(m, &img)?;
            (p, vec![map])
        } else {
            gradcam::heatmaps_with_prediction(m, &img)?
        };
        let mask = sensitivity::select(&maps, &pred, fusion, threshold)?;
        for (o, &c) in out.iter_mut().zip(&mask.cells) {
            *o = u8::from(c);
        }
        if !out_count.is_null() {
            *out_count = mask.count();
        }
        Ok(())
    })
}

/// False detection rate `negatives / (positives + negatives)`.
/// Fails with `UndefinedForZeroTrials` when both counts are zero.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn srmt_fdr(positives: u64, negatives: u64, out: *mut f64) -> SrmtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = campaign::fdr(positives, negatives)?;
        Ok(())
    })
}

/// Runs the campaign described by the JSON config at `config_path` with
/// `jobs` worker threads (0 = all processors) and writes `report.json`,
/// `trials.csv` and `bins.csv` into `out_dir` (NULL = the config's out_dir).
/// `out_gate_tripped`, if non-NULL, is set to 1 when a method's FDR exceeds
/// the configured fail threshold.
///
/// # Safety
/// Strings must be valid NUL-terminated UTF-8; `out_gate_tripped` writable or NULL.
#[no_mangle]
pub unsafe extern "C" fn srmt_campaign_run(
    config_path: *const c_char,
    out_dir: *const c_char,
    jobs: usize,
    out_gate_tripped: *mut u8,
) -> SrmtStatus {
    guard(|| {
        let cfg = CampaignConfig::load(path_arg(config_path, "config_path")?)?;
        let dir = if out_dir.is_null() {
            cfg.out_dir
                .clone()
                .ok_or_else(|| Error::Config("no output directory given".into()))?
        } else {
            path_arg(out_dir, "out_dir")?
        };
        let outcome = campaign::run_campaign(&cfg, (jobs > 0).then_some(jobs))?;
        campaign::write_outputs(&outcome, &dir)?;
        if !out_gate_tripped.is_null() {
            *out_gate_tripped = u8::from(!outcome.report.gate_violations().is_empty());
        }
        Ok(())
    })
}
