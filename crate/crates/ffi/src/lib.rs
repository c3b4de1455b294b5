//! C interface to trained nova scenes.
//!
//! Every fallible call returns a [`NovaStatus`]; on failure
//! [`nova_last_error`] describes the most recent error on the calling
//! thread. Models are opaque [`NovaModel`] handles owned by the caller
//! until passed to [`nova_model_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nova_core::data::{mask_iou, psnr};
use nova_core::geometry::{Camera, Se3};
use nova_core::model::SceneModel;
use nova_core::renderer::{render_image, RenderOptions};
use nova_core::NovaError;

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NovaStatus {
    Ok = 0,
    /// A required pointer was null.
    NullPointer = 1,
    /// Arguments violate a precondition.
    InvalidArgument = 2,
    /// A file could not be read.
    Io = 3,
    /// A file was read but is not a valid checkpoint.
    Format = 4,
    /// A computation produced a non-finite value.
    Numerical = 5,
    /// Internal failure; the handle should not be used further.
    Internal = 6,
}

/// Opaque handle to a loaded scene.
pub struct NovaModel {
    inner: SceneModel,
}

/// Pinhole camera. `rotation` is the camera-to-world rotation in row-major
/// order and `translation` the camera center. The camera looks down its
/// local -z axis with +y up; image rows grow downwards.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct NovaCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct NovaRenderSettings {
    pub near: f64,
    pub far: f64,
    /// Samples per ray, at least 2.
    pub samples: u32,
    /// Blending factor of the static field: 1 for a normal render, 0 to
    /// show the dynamic fields alone.
    pub static_beta: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("nul bytes removed"));
}

fn status_of(err: &NovaError) -> NovaStatus {
    match err {
        NovaError::Io { .. } => NovaStatus::Io,
        NovaError::Format { .. } | NovaError::CheckpointMismatch(_) => NovaStatus::Format,
        NovaError::NonFinite(_) | NovaError::VerifyFailed(_) => NovaStatus::Numerical,
        _ => NovaStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), NovaStatus>) -> NovaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NovaStatus::Ok
        }
        Ok(Err(status)) => status,
        Err(_) => {
            set_error("internal panic");
            NovaStatus::Internal
        }
    }
}

fn fail(err: NovaError) -> NovaStatus {
    set_error(err.to_string());
    status_of(&err)
}

fn null(what: &str) -> NovaStatus {
    set_error(format!("{what} is null"));
    NovaStatus::NullPointer
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn nova_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads a checkpoint into `*out`.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nova_model_load(path: *const c_char, out: *mut *mut NovaModel) -> NovaStatus {
    guard(|| {
        if path.is_null() {
            return Err(null("path"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(NovaError::InvalidInput("path is not UTF-8".into())))?;
        let (model, _) = SceneModel::load(Path::new(path)).map_err(fail)?;
        *out = Box::into_raw(Box::new(NovaModel { inner: model }));
        Ok(())
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`nova_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nova_model_free(model: *mut NovaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of fields: one static field plus one per object. 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nova_model_field_count(model: *const NovaModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.fields.len())
}

/// Total trainable parameter count. 0 for null.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nova_model_param_count(model: *const NovaModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.param_count())
}

fn to_camera(c: &NovaCamera) -> Result<Camera, NovaError> {
    let pose = Se3::from_row_major(c.rotation, c.translation)?;
    Camera::new(c.fx, c.fy, c.cx, c.cy, c.width as usize, c.height as usize, pose)
}

/// Renders the scene at `time`. `rgb` receives `width * height * 3` values
/// (row-major, channels interleaved). `masks`, when not null, receives
/// `field_count * width * height` values, field-major. `depth`, when not
/// null, receives `width * height` values (0 where nothing was hit).
///
/// # Safety
/// Buffers must be valid for the sizes above.
#[no_mangle]
pub unsafe extern "C" fn nova_render(
    model: *const NovaModel,
    camera: *const NovaCamera,
    time: f64,
    settings: *const NovaRenderSettings,
    rgb: *mut f64,
    masks: *mut f64,
    depth: *mut f64,
) -> NovaStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let camera = camera.as_ref().ok_or_else(|| null("camera"))?;
        let settings = settings.as_ref().ok_or_else(|| null("settings"))?;
        if rgb.is_null() {
            return Err(null("rgb"));
        }
        let cam = to_camera(camera).map_err(fail)?;
        if !(0.0..=1.0).contains(&settings.static_beta) {
            return Err(fail(NovaError::InvalidInput("static_beta must lie in [0, 1]".into())));
        }
        let options = RenderOptions {
            near: settings.near,
            far: settings.far,
            samples: settings.samples as usize,
            stratified: false,
            seed: 0,
            chunk_rays: 256,
        };
        let elements = model.inner.elements(settings.static_beta).map_err(fail)?;
        let out = render_image(&elements, &cam, time, &options, None).map_err(fail)?;
        let n = cam.pixel_count();
        let rgb = std::slice::from_raw_parts_mut(rgb, 3 * n);
        for (dst, c) in rgb.chunks_exact_mut(3).zip(&out.color) {
            dst.copy_from_slice(c);
        }
        if !masks.is_null() {
            let masks = std::slice::from_raw_parts_mut(masks, out.masks.len() * n);
            for (dst, m) in masks.chunks_exact_mut(n).zip(&out.masks) {
                dst.copy_from_slice(m);
            }
        }
        if !depth.is_null() {
            std::slice::from_raw_parts_mut(depth, n).copy_from_slice(&out.depth);
        }
        Ok(())
    })
}

/// PSNR in dB of two `pixels * 3` images, capped at 99.
///
/// # Safety
/// `pred` and `gt` must hold `pixels * 3` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nova_psnr(pred: *const f64, gt: *const f64, pixels: usize, out: *mut f64) -> NovaStatus {
    guard(|| {
        if pred.is_null() || gt.is_null() || out.is_null() {
            return Err(null("image or output"));
        }
        let as_rgb = |p: *const f64| -> Vec<[f64; 3]> {
            std::slice::from_raw_parts(p, 3 * pixels)
                .chunks_exact(3)
                .map(|c| [c[0], c[1], c[2]])
                .collect()
        };
        *out = psnr(&as_rgb(pred), &as_rgb(gt)).map_err(fail)?;
        Ok(())
    })
}

/// IoU of `pred >= 0.5` against the binary `gt`; 1 when both are empty.
///
/// # Safety
/// `pred` and `gt` must hold `len` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nova_mask_iou(pred: *const f64, gt: *const u8, len: usize, out: *mut f64) -> NovaStatus {
    guard(|| {
        if pred.is_null() || gt.is_null() || out.is_null() {
            return Err(null("mask or output"));
        }
        *out = mask_iou(std::slice::from_raw_parts(pred, len), std::slice::from_raw_parts(gt, len)).map_err(fail)?;
        Ok(())
    })
}
