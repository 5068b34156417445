//! C ABI over the inference path: load a checkpoint, build or load a
//! G-buffer frame, run the model.
//!
//! Every fallible function returns a [`NistStatus`]; on failure the message
//! is available from [`nist_last_error_message`] on the same thread.
//! Handles are opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use nist::image::Image;
use nist::network::{checkpoint, predict, Params};
use nist::raster::GBufferFrame;
use nist::Error;

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NistStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Checkpoint = 5,
    Shape = 6,
    Config = 7,
    Panic = 8,
    Other = 9,
}

/// Trained model (opaque).
pub struct NistModel {
    params: Params<f32>,
}

/// One G-buffer frame (opaque).
pub struct NistFrame {
    frame: GBufferFrame,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> NistStatus {
    match e {
        Error::Shape { .. } => NistStatus::Shape,
        Error::InvalidArgument(_) | Error::InvalidMesh(_) | Error::DegenerateTriangle(_) => NistStatus::InvalidArgument,
        Error::Io { .. } => NistStatus::Io,
        Error::Format { .. } => NistStatus::Format,
        Error::Checkpoint(_) => NistStatus::Checkpoint,
        Error::Config(_) => NistStatus::Config,
        _ => NistStatus::Other,
    }
}

/// Runs `f`, recording its error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), (NistStatus, String)>) -> NistStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            NistStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NistStatus::Panic
        }
    }
}

fn lift(e: Error) -> (NistStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (NistStatus, String) {
    (NistStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, (NistStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (NistStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

/// Message of the last failed call on this thread ("" after success).
/// Valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn nist_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nist_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nist_model_load(path: *const c_char, out: *mut *mut NistModel) -> NistStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let p = path_arg(path, "path")?;
        let params = checkpoint::load(&p).map_err(lift)?;
        *out = Box::into_raw(Box::new(NistModel { params }));
        Ok(())
    })
}

/// Number of scalar parameters, 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nist_model_param_count(model: *const NistModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.count())
}

/// Full-resolution sizes must be multiples of this; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nist_model_resolution_divisor(model: *const NistModel) -> usize {
    model.as_ref().map_or(0, |m| m.params.config.divisor())
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nist_model_free(model: *mut NistModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Reads a frame directory (`color.pfm`, `depth.pfm`, ...).
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nist_frame_load_dir(dir: *const c_char, out: *mut *mut NistFrame) -> NistStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        let p = path_arg(dir, "dir")?;
        let frame = GBufferFrame::read_dir(&p).map_err(lift)?;
        *out = Box::into_raw(Box::new(NistFrame { frame }));
        Ok(())
    })
}

unsafe fn buffer(ptr: *const f32, w: usize, h: usize, c: usize, what: &str) -> Result<Image, (NistStatus, String)> {
    if ptr.is_null() {
        return Err(null(what));
    }
    let n = w * h * c;
    Image::from_vec(w, h, c, std::slice::from_raw_parts(ptr, n).to_vec()).map_err(lift)
}

/// Builds a frame from interleaved row-major (top row first) buffers:
/// color, gnormal and snormal hold 3 floats per pixel, depth and coverage 1.
/// The label channel is set to the color (it is unused for inference).
///
/// # Safety
/// Each pointer must reference `width * height * channels` floats.
#[no_mangle]
pub unsafe extern "C" fn nist_frame_from_buffers(
    width: usize,
    height: usize,
    color: *const f32,
    depth: *const f32,
    gnormal: *const f32,
    snormal: *const f32,
    coverage: *const f32,
    out: *mut *mut NistFrame,
) -> NistStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = std::ptr::null_mut();
        if width == 0 || height == 0 {
            return Err((NistStatus::InvalidArgument, format!("frame size {width}x{height}")));
        }
        let color = buffer(color, width, height, 3, "color")?;
        let frame = GBufferFrame {
            label: color.clone(),
            color,
            depth: buffer(depth, width, height, 1, "depth")?,
            gnormal: buffer(gnormal, width, height, 3, "gnormal")?,
            snormal: buffer(snormal, width, height, 3, "snormal")?,
            coverage: buffer(coverage, width, height, 1, "coverage")?,
        };
        *out = Box::into_raw(Box::new(NistFrame { frame }));
        Ok(())
    })
}

/// # Safety
/// `frame` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nist_frame_width(frame: *const NistFrame) -> usize {
    frame.as_ref().map_or(0, |f| f.frame.width())
}

/// # Safety
/// `frame` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nist_frame_height(frame: *const NistFrame) -> usize {
    frame.as_ref().map_or(0, |f| f.frame.height())
}

/// # Safety
/// `frame` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nist_frame_free(frame: *mut NistFrame) {
    if !frame.is_null() {
        drop(Box::from_raw(frame));
    }
}

/// Runs the model and writes `width * height * 3` interleaved RGB floats.
///
/// # Safety
/// Handles must be live; `out_rgb` must hold `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn nist_model_infer(
    model: *const NistModel,
    frame: *const NistFrame,
    out_rgb: *mut f32,
    out_len: usize,
) -> NistStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let f = frame.as_ref().ok_or_else(|| null("frame"))?;
        if out_rgb.is_null() {
            return Err(null("out_rgb"));
        }
        let need = f.frame.width() * f.frame.height() * 3;
        if out_len < need {
            return Err((
                NistStatus::InvalidArgument,
                format!("output buffer holds {out_len} floats, {need} needed"),
            ));
        }
        let pred = predict(&m.params, &f.frame).map_err(lift)?;
        std::slice::from_raw_parts_mut(out_rgb, need).copy_from_slice(pred.image.data());
        Ok(())
    })
}

/// Phong-tessellated point of barycentric `uvw` on one triangle.
/// `vertices` and `normals` are three xyz triples; normals must be unit.
///
/// # Safety
/// `vertices`, `normals` hold 9 doubles, `uvw` and `out` 3.
#[no_mangle]
pub unsafe extern "C" fn nist_phong_point(
    vertices: *const f64,
    normals: *const f64,
    uvw: *const f64,
    alpha: f64,
    out: *mut f64,
) -> NistStatus {
    guard(|| {
        if vertices.is_null() || normals.is_null() || uvw.is_null() || out.is_null() {
            return Err(null("argument"));
        }
        let v = std::slice::from_raw_parts(vertices, 9);
        let n = std::slice::from_raw_parts(normals, 9);
        let b = std::slice::from_raw_parts(uvw, 3);
        if !(0.0..=1.0).contains(&alpha) {
            return Err((NistStatus::InvalidArgument, format!("alpha {alpha} outside [0, 1]")));
        }
        let tri = |s: &[f64]| [0, 1, 2].map(|i| nist::mesh::Vec3::new(s[3 * i], s[3 * i + 1], s[3 * i + 2]));
        let normals = tri(n);
        if let Some(bad) = normals.iter().find(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err((NistStatus::InvalidArgument, format!("normal {bad:?} is not unit length")));
        }
        let p = nist::mesh::phong_point(tri(v), normals, [b[0], b[1], b[2]], alpha);
        std::slice::from_raw_parts_mut(out, 3).copy_from_slice(&[p.x, p.y, p.z]);
        Ok(())
    })
}
