use std::fs;

use nova_core::data::{generate_synthetic_scene, load_dataset, save_dataset, SceneConfig};
use nova_core::NovaError;

fn small() -> SceneConfig {
    let mut cfg = SceneConfig::default();
    cfg.scene.width = 16;
    cfg.scene.height = 12;
    cfg.scene.focal = 17.0;
    cfg
}

fn saved() -> (tempfile::TempDir, Vec<nova_core::data::Frame>) {
    let dir = tempfile::tempdir().unwrap();
    let frames = generate_synthetic_scene(&small(), 1).unwrap();
    save_dataset(&frames, dir.path()).unwrap();
    (dir, frames)
}

#[test]
fn round_trip_is_exact() {
    let (dir, frames) = saved();
    assert_eq!(load_dataset(dir.path()).unwrap(), frames);
}

#[test]
fn missing_frame_is_named() {
    let (dir, _) = saved();
    fs::remove_file(dir.path().join("frame_0011_rgb.png")).unwrap();
    let err = load_dataset(dir.path()).unwrap_err();
    assert!(err.to_string().contains("frame 11 missing"), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn missing_mask_and_depth_are_named() {
    let (dir, _) = saved();
    fs::remove_file(dir.path().join("frame_0004_mask_0.png")).unwrap();
    assert!(load_dataset(dir.path()).unwrap_err().to_string().contains("frame 4 missing"));

    let (dir, _) = saved();
    fs::remove_file(dir.path().join("frame_0007_depth.f32")).unwrap();
    assert!(load_dataset(dir.path()).unwrap_err().to_string().contains("frame 7 missing"));
}

#[test]
fn truncated_depth_is_a_format_error() {
    let (dir, _) = saved();
    let p = dir.path().join("frame_0003_depth.f32");
    let bytes = fs::read(&p).unwrap();
    fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
    let err = load_dataset(dir.path()).unwrap_err();
    assert!(matches!(err, NovaError::Format { .. }));
    assert!(err.to_string().contains("frame 3"), "{err}");
}

#[test]
fn resized_image_and_bad_manifest_are_rejected() {
    let (dir, _) = saved();
    image::RgbImage::new(5, 5).save(dir.path().join("frame_0002_rgb.png")).unwrap();
    assert!(load_dataset(dir.path()).unwrap_err().to_string().contains("frame 2"));

    let (dir, _) = saved();
    fs::write(dir.path().join("manifest.json"), "{\"version\": 1").unwrap();
    assert_eq!(load_dataset(dir.path()).unwrap_err().exit_code(), 2);

    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(load_dataset(empty.path()).unwrap_err(), NovaError::Io { .. }));
}

#[test]
fn stray_frames_on_disk_are_reported() {
    let (dir, _) = saved();
    fs::copy(dir.path().join("frame_0000_rgb.png"), dir.path().join("frame_0099_rgb.png")).unwrap();
    assert!(load_dataset(dir.path()).is_err());
}
