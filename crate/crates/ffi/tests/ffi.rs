use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use nova_core::data::SceneConfig;
use nova_core::geometry::{Camera, Se3, Vec3};
use nova_core::model::SceneModel;
use nova_core::renderer::{render_image, RenderOptions};
use nova_ffi::*;

fn small_config() -> SceneConfig {
    let mut cfg = SceneConfig::default();
    cfg.field.depth = 2;
    cfg.field.width = 8;
    cfg.field.skip = None;
    cfg.field.color_width = 8;
    cfg
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(nova_last_error()) }.to_string_lossy().into_owned()
}

fn saved_model(dir: &tempfile::TempDir) -> (SceneModel, CString) {
    let model = SceneModel::new(&small_config(), 1, 9).unwrap();
    let path = dir.path().join("m.ckpt");
    model.save(&path, 0).unwrap();
    (model, CString::new(path.to_str().unwrap()).unwrap())
}

#[test]
fn load_render_free_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let (model, path) = saved_model(&dir);
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { nova_model_load(path.as_ptr(), &mut handle) }, NovaStatus::Ok);
    assert_eq!(unsafe { nova_model_field_count(handle) }, 2);
    assert_eq!(unsafe { nova_model_param_count(handle) }, model.param_count());

    let pose = Se3::look_at(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), Vec3::y()).unwrap();
    let cam = Camera::new(4.0, 4.0, 2.0, 2.0, 4, 4, pose).unwrap();
    let r = pose.rotation;
    let c_cam = NovaCamera {
        fx: 4.0,
        fy: 4.0,
        cx: 2.0,
        cy: 2.0,
        width: 4,
        height: 4,
        rotation: [r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        translation: [0.0, 0.0, 3.0],
    };
    let settings = NovaRenderSettings {
        near: 1.0,
        far: 5.0,
        samples: 16,
        static_beta: 1.0,
    };
    let mut rgb = vec![0.0; 48];
    let mut masks = vec![0.0; 32];
    let mut depth = vec![0.0; 16];
    let status = unsafe {
        nova_render(handle, &c_cam, 0.5, &settings, rgb.as_mut_ptr(), masks.as_mut_ptr(), depth.as_mut_ptr())
    };
    assert_eq!(status, NovaStatus::Ok, "{}", last_error());

    let options = RenderOptions {
        near: 1.0,
        far: 5.0,
        samples: 16,
        ..RenderOptions::default()
    };
    let expect = render_image(&model.elements(1.0).unwrap(), &cam, 0.5, &options, None).unwrap();
    let flat: Vec<f64> = expect.color.iter().flatten().copied().collect();
    assert_eq!(rgb, flat);
    assert_eq!(&masks[16..], &expect.masks[1][..]);
    assert_eq!(depth, expect.depth);
    unsafe { nova_model_free(handle) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let mut handle = ptr::null_mut();
    let missing = CString::new("/nonexistent/m.ckpt").unwrap();
    assert_eq!(unsafe { nova_model_load(missing.as_ptr(), &mut handle) }, NovaStatus::Io);
    assert!(last_error().contains("/nonexistent/m.ckpt"));
    assert!(handle.is_null());

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let junk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { nova_model_load(junk.as_ptr(), &mut handle) }, NovaStatus::Format);

    assert_eq!(unsafe { nova_model_load(ptr::null(), &mut handle) }, NovaStatus::NullPointer);
    assert_eq!(unsafe { nova_model_field_count(ptr::null()) }, 0);
    unsafe { nova_model_free(ptr::null_mut()) };

    let (_, path) = saved_model(&dir);
    assert_eq!(unsafe { nova_model_load(path.as_ptr(), &mut handle) }, NovaStatus::Ok);
    let bad = NovaCamera {
        fx: 1.0,
        fy: 1.0,
        cx: 0.5,
        cy: 0.5,
        width: 1,
        height: 1,
        rotation: [2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
        translation: [0.0; 3],
    };
    let settings = NovaRenderSettings {
        near: 1.0,
        far: 2.0,
        samples: 4,
        static_beta: 1.0,
    };
    let mut rgb = [0.0; 3];
    let status = unsafe { nova_render(handle, &bad, 0.0, &settings, rgb.as_mut_ptr(), ptr::null_mut(), ptr::null_mut()) };
    assert_eq!(status, NovaStatus::InvalidArgument);
    assert!(!last_error().is_empty());
    unsafe { nova_model_free(handle) };
}

#[test]
fn metrics() {
    let a = [0.5; 6];
    let b = [0.6; 6];
    let mut out = 0.0;
    assert_eq!(unsafe { nova_psnr(a.as_ptr(), b.as_ptr(), 2, &mut out) }, NovaStatus::Ok);
    assert!((out - 20.0).abs() < 1e-9);
    assert_eq!(unsafe { nova_psnr(a.as_ptr(), a.as_ptr(), 2, &mut out) }, NovaStatus::Ok);
    assert_eq!(out, 99.0);
    let pred = [1.0, 1.0, 0.0, 0.0];
    let gt = [0u8, 1, 1, 0];
    assert_eq!(unsafe { nova_mask_iou(pred.as_ptr(), gt.as_ptr(), 4, &mut out) }, NovaStatus::Ok);
    assert!((out - 1.0 / 3.0).abs() < 1e-15);
    assert_eq!(unsafe { nova_mask_iou(ptr::null(), gt.as_ptr(), 4, &mut out) }, NovaStatus::NullPointer);
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = concat!(env!("CARGO_MANIFEST_DIR"), "/include/nova.h");
    let text = std::fs::read_to_string(header).unwrap();
    for name in [
        "nova_model_load",
        "nova_model_free",
        "nova_render",
        "nova_psnr",
        "nova_mask_iou",
        "nova_last_error",
        "typedef struct NovaModel NovaModel",
        "NOVA_STATUS_OK",
    ] {
        assert!(text.contains(name), "header lacks {name}");
    }
    match Command::new("cc").args(["-fsyntax-only", "-x", "c", header]).status() {
        Ok(status) => assert!(status.success(), "header does not compile"),
        Err(e) => eprintln!("no C compiler available ({e}); skipped compile check"),
    }
}
