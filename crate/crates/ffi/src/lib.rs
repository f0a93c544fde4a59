//! C ABI over the `recnet` crate.
//!
//! Images cross the boundary as interleaved RGB `float` buffers, row-major,
//! `width * height * 3` values in `[0, 1]`. Masks come back as one
//! `width * height` plane per block, concatenated.
//!
//! Every function returns a [`RecnetStatus`]. On failure a description is
//! kept per thread and can be read with [`recnet_last_error`]. Panics are
//! caught at the boundary and reported as `RECNET_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use recnet::data::{images_to_tensor, tensor_to_images, tensor_to_planes, Image};
use recnet::eval;
use recnet::model::{ModelConfig, Recnet};
use recnet::training::{load_checkpoint, save_checkpoint};
use recnet::Error;

/// Result code of every exported function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecnetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Checkpoint = 5,
    Config = 6,
    Internal = 7,
    Panic = 8,
}

/// Opaque model handle. Create with `recnet_model_new` or
/// `recnet_model_load`, release with `recnet_model_free`.
pub struct RecnetModel {
    inner: Recnet<f32>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RecnetStatus {
    match e {
        Error::Shape(_) => RecnetStatus::Shape,
        Error::InvalidArgument(_) => RecnetStatus::InvalidArgument,
        Error::Config(_) => RecnetStatus::Config,
        Error::Checkpoint(_) => RecnetStatus::Checkpoint,
        Error::Io { .. } | Error::Image { .. } | Error::PerceptualWeights { .. } => RecnetStatus::Io,
        Error::NonFiniteLoss { .. } => RecnetStatus::Internal,
    }
}

struct Fail(RecnetStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(RecnetStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RecnetStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            RecnetStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            RecnetStatus::Panic
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path)
        .to_str()
        .map_err(|_| Fail(RecnetStatus::InvalidArgument, "path is not valid UTF-8".into()))?;
    Ok(PathBuf::from(s))
}

unsafe fn model_ref<'a>(model: *const RecnetModel) -> Result<&'a RecnetModel, Fail> {
    model.as_ref().ok_or_else(|| null("model"))
}

unsafe fn image_arg(data: *const f32, width: usize, height: usize, what: &str) -> Result<Image, Fail> {
    if data.is_null() {
        return Err(null(what));
    }
    let n = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(3))
        .ok_or_else(|| Fail(RecnetStatus::InvalidArgument, "image dimensions overflow".into()))?;
    Ok(Image::new(width, height, std::slice::from_raw_parts(data, n).to_vec())?)
}

fn boxed(out: *mut *mut RecnetModel, model: Recnet<f32>) -> Result<(), Fail> {
    let handle = Box::into_raw(Box::new(RecnetModel { inner: model }));
    // SAFETY: the caller checked `out` for null
    unsafe { *out = handle };
    Ok(())
}

/// Writes the last error of the calling thread into `buf` as a
/// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
/// message length excluding the terminator, or 0 when there is no error.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn recnet_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn recnet_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Creates a freshly initialized model. Passing 0 for `num_blocks`,
/// `base_channels` or `attn_heads` selects the default for that field.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn recnet_model_new(
    num_blocks: usize,
    base_channels: usize,
    attn_heads: usize,
    seed: u64,
    out: *mut *mut RecnetModel,
) -> RecnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let d = ModelConfig::default();
        let pick = |v: usize, default: usize| if v == 0 { default } else { v };
        let cfg = ModelConfig::new(
            pick(num_blocks, d.num_blocks),
            pick(base_channels, d.base_channels),
            pick(attn_heads, d.attn_heads),
        )?;
        boxed(out, Recnet::new(cfg, seed)?)
    })
}

/// Loads model weights from a checkpoint file; optimizer state is ignored.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn recnet_model_load(path: *const c_char, out: *mut *mut RecnetModel) -> RecnetStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ck = load_checkpoint(&path_arg(path)?, None)?;
        boxed(out, ck.model)
    })
}

/// Saves model weights (step 0, no optimizer state).
///
/// # Safety
/// `model` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn recnet_model_save(model: *const RecnetModel, path: *const c_char) -> RecnetStatus {
    guard(|| {
        let m = model_ref(model)?;
        save_checkpoint(&path_arg(path)?, &m.inner, None, 0)?;
        Ok(())
    })
}

/// Releases a handle. Null is a no-op.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn recnet_model_free(model: *mut RecnetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of blocks, which is the number of mask planes `recnet_correct`
/// writes.
///
/// # Safety
/// `model` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn recnet_model_num_blocks(model: *const RecnetModel, out: *mut usize) -> RecnetStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.inner.config().num_blocks;
        Ok(())
    })
}

/// Total trainable parameter count.
///
/// # Safety
/// `model` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn recnet_model_num_params(model: *const RecnetModel, out: *mut usize) -> RecnetStatus {
    guard(|| {
        let m = model_ref(model)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = m.inner.num_params();
        Ok(())
    })
}

/// Corrects one image. `output` receives `width * height * 3` values;
/// `masks`, if not null, receives `num_blocks * width * height` values.
/// Both sides must be at least 8 pixels.
///
/// # Safety
/// `input` must hold `width * height * 3` readable floats, `output` as many
/// writable ones, and `masks` null or `num_blocks * width * height`
/// writable floats.
#[no_mangle]
pub unsafe extern "C" fn recnet_correct(
    model: *const RecnetModel,
    input: *const f32,
    width: usize,
    height: usize,
    output: *mut f32,
    masks: *mut f32,
) -> RecnetStatus {
    guard(|| {
        let m = model_ref(model)?;
        let img = image_arg(input, width, height, "input")?;
        if output.is_null() {
            return Err(null("output"));
        }
        let (out, mask_tensors) = m.inner.infer(&images_to_tensor::<f32>(std::slice::from_ref(&img))?)?;
        let corrected = tensor_to_images(&out)?.remove(0);
        std::slice::from_raw_parts_mut(output, corrected.data().len()).copy_from_slice(corrected.data());
        if !masks.is_null() {
            let plane = width * height;
            for (k, t) in mask_tensors.iter().enumerate() {
                let p = tensor_to_planes(t)?.remove(0);
                std::slice::from_raw_parts_mut(masks.add(k * plane), plane).copy_from_slice(p.data());
            }
        }
        Ok(())
    })
}

/// PSNR in dB between two images of equal size, capped at 100 for
/// identical inputs.
///
/// # Safety
/// `a` and `b` must each hold `width * height * 3` floats; `out` valid
/// for one write.
#[no_mangle]
pub unsafe extern "C" fn recnet_psnr(
    a: *const f32,
    b: *const f32,
    width: usize,
    height: usize,
    out: *mut f64,
) -> RecnetStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = eval::psnr(&image_arg(a, width, height, "a")?, &image_arg(b, width, height, "b")?)?;
        Ok(())
    })
}

/// Mean SSIM over luma, 11x11 Gaussian window (sigma 1.5). Both sides
/// must be at least 11 pixels.
///
/// # Safety
/// Same as `recnet_psnr`.
#[no_mangle]
pub unsafe extern "C" fn recnet_ssim(
    a: *const f32,
    b: *const f32,
    width: usize,
    height: usize,
    out: *mut f64,
) -> RecnetStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = eval::ssim(&image_arg(a, width, height, "a")?, &image_arg(b, width, height, "b")?)?;
        Ok(())
    })
}
