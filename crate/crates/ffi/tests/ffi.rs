use std::ffi::{CStr, CString};
use std::ptr;

use nist::network::{checkpoint, init_params, predict, ModelConfig};
use nist::raster::{make_pair, Camera, SceneSpec, Shape};
use nist::mesh::{TessellationConfig, Vec3};
use nist_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(nist_last_error_message()) }.to_string_lossy().into_owned()
}

fn small_config() -> ModelConfig {
    ModelConfig {
        c_g: 4,
        c_d: 4,
        c_c: 4,
        ..ModelConfig::default()
    }
}

fn frame() -> nist::raster::GBufferFrame {
    let cam = Camera::new(
        Vec3::new(0.3, 0.4, 3.2),
        Vec3::zeros(),
        Vec3::y(),
        40f64.to_radians(),
        (0.1, 10.0),
        (32, 32),
    )
    .unwrap();
    make_pair(&SceneSpec::new(Shape::Icosphere(1)), &cam, &TessellationConfig::new(2, 0.75).unwrap()).unwrap()
}

#[test]
fn null_arguments_are_reported() {
    let mut model = ptr::null_mut();
    let s = unsafe { nist_model_load(ptr::null(), &mut model) };
    assert_eq!(s, NistStatus::NullPointer);
    assert!(model.is_null());
    assert!(last_error().contains("path"));
    assert_eq!(unsafe { nist_model_load(ptr::null(), ptr::null_mut()) }, NistStatus::NullPointer);
    unsafe {
        nist_model_free(ptr::null_mut());
        nist_frame_free(ptr::null_mut());
        assert_eq!(nist_model_param_count(ptr::null()), 0);
        assert_eq!(nist_frame_width(ptr::null()), 0);
    }
}

#[test]
fn missing_checkpoint_is_an_io_error_naming_the_path() {
    let path = CString::new("/nonexistent/model.nist").unwrap();
    let mut model = ptr::null_mut();
    let s = unsafe { nist_model_load(path.as_ptr(), &mut model) };
    assert_eq!(s, NistStatus::Io);
    assert!(last_error().contains("/nonexistent/model.nist"));
}

#[test]
fn corrupt_checkpoint_is_a_checkpoint_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.nist");
    std::fs::write(&p, b"NOPE").unwrap();
    let c = CString::new(p.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { nist_model_load(c.as_ptr(), &mut model) }, NistStatus::Checkpoint);
    assert!(last_error().contains("magic"));
}

#[test]
fn inference_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let params = init_params(&small_config(), 5).unwrap();
    let ckpt = dir.path().join("m.nist");
    checkpoint::save(&ckpt, &params).unwrap();
    let f = frame();
    let fdir = dir.path().join("frame");
    f.write_dir(&fdir).unwrap();

    let c = CString::new(ckpt.to_str().unwrap()).unwrap();
    let d = CString::new(fdir.to_str().unwrap()).unwrap();
    let mut model = ptr::null_mut();
    let mut handle = ptr::null_mut();
    unsafe {
        assert_eq!(nist_model_load(c.as_ptr(), &mut model), NistStatus::Ok);
        assert_eq!(last_error(), "");
        assert_eq!(nist_model_param_count(model), params.count());
        assert_eq!(nist_model_resolution_divisor(model), 8);
        assert_eq!(nist_frame_load_dir(d.as_ptr(), &mut handle), NistStatus::Ok);
        assert_eq!((nist_frame_width(handle), nist_frame_height(handle)), (32, 32));

        let mut out = vec![0f32; 32 * 32 * 3];
        assert_eq!(
            nist_model_infer(model, handle, out.as_mut_ptr(), out.len() - 1),
            NistStatus::InvalidArgument
        );
        assert_eq!(nist_model_infer(model, handle, out.as_mut_ptr(), out.len()), NistStatus::Ok);
        assert_eq!(out, predict(&params, &f).unwrap().image.data());

        // same frame from raw buffers
        let mut raw = ptr::null_mut();
        let s = nist_frame_from_buffers(
            32,
            32,
            f.color.data().as_ptr(),
            f.depth.data().as_ptr(),
            f.gnormal.data().as_ptr(),
            f.snormal.data().as_ptr(),
            f.coverage.data().as_ptr(),
            &mut raw,
        );
        assert_eq!(s, NistStatus::Ok);
        let mut out2 = vec![0f32; out.len()];
        assert_eq!(nist_model_infer(model, raw, out2.as_mut_ptr(), out2.len()), NistStatus::Ok);
        assert_eq!(out, out2);
        nist_frame_free(raw);
        nist_frame_free(handle);
        nist_model_free(model);
    }
}

#[test]
fn resolution_mismatch_names_working_resolution() {
    let params = init_params(&small_config(), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("m.nist");
    checkpoint::save(&ckpt, &params).unwrap();
    let c = CString::new(ckpt.to_str().unwrap()).unwrap();
    let (w, h) = (12, 12);
    let ones3 = vec![0.5f32; w * h * 3];
    let ones1 = vec![0.5f32; w * h];
    unsafe {
        let mut model = ptr::null_mut();
        let mut f = ptr::null_mut();
        assert_eq!(nist_model_load(c.as_ptr(), &mut model), NistStatus::Ok);
        let s = nist_frame_from_buffers(
            w,
            h,
            ones3.as_ptr(),
            ones1.as_ptr(),
            ones3.as_ptr(),
            ones3.as_ptr(),
            ones1.as_ptr(),
            &mut f,
        );
        assert_eq!(s, NistStatus::Ok);
        let mut out = vec![0f32; w * h * 3];
        assert_eq!(nist_model_infer(model, f, out.as_mut_ptr(), out.len()), NistStatus::InvalidArgument);
        assert!(last_error().contains("working resolution"));
        nist_frame_free(f);
        nist_model_free(model);
    }
}

#[test]
fn phong_point_through_the_abi() {
    let v = [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0];
    let n = [0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
    let mut out = [9.0; 3];
    unsafe {
        assert_eq!(
            nist_phong_point(v.as_ptr(), n.as_ptr(), [0.2, 0.3, 0.5].as_ptr(), 0.75, out.as_mut_ptr()),
            NistStatus::Ok
        );
        assert!((out[0] - 0.3).abs() < 1e-15 && (out[1] - 0.5).abs() < 1e-15 && out[2] == 0.0);
        let bad = [0.0, 0.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0];
        assert_eq!(
            nist_phong_point(v.as_ptr(), bad.as_ptr(), [0.2, 0.3, 0.5].as_ptr(), 0.75, out.as_mut_ptr()),
            NistStatus::InvalidArgument
        );
        assert!(last_error().contains("unit"));
    }
}

#[test]
fn header_declares_the_abi() {
    let h = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/nist.h")).unwrap();
    for sym in [
        "nist_model_load",
        "nist_model_infer",
        "nist_model_free",
        "nist_frame_load_dir",
        "nist_frame_from_buffers",
        "nist_frame_free",
        "nist_last_error_message",
        "nist_phong_point",
        "NIST_STATUS_OK = 0",
        "typedef struct NistModel NistModel",
    ] {
        assert!(h.contains(sym), "header lacks {sym}");
    }
    let v = unsafe { CStr::from_ptr(nist_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}
