//! On-disk dataset: one directory per scene.
//!
//! ```text
//! manifest.json            version, image size, object count, per-frame records
//! frame_0000_rgb.png       8-bit RGB
//! frame_0000_mask_0.png    8-bit gray, 0 or 255, one per object
//! frame_0000_depth.f32     width*height little-endian f32, row-major
//! ```
//!
//! Pixels without geometry store `+inf` depth.

use std::fs;
use std::path::Path;

use image::{GrayImage, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{NovaError, Result};
use crate::geometry::Camera;

pub const DATASET_VERSION: u32 = 1;
const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    /// Held out from training; used by evaluation only.
    Eval,
}

/// One observation. Images are row-major with `width * height` entries.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub rgb: Vec<[f64; 3]>,
    /// One binary image per dynamic object.
    pub masks: Vec<Vec<u8>>,
    /// Depth along the optical axis.
    pub depth: Vec<f32>,
    pub camera: Camera,
    pub time: f64,
    pub split: Split,
}

impl Frame {
    pub fn width(&self) -> usize {
        self.camera.width
    }

    pub fn height(&self) -> usize {
        self.camera.height
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.camera.pixel_count();
        if self.rgb.len() != n || self.depth.len() != n || self.masks.iter().any(|m| m.len() != n) {
            return Err(NovaError::InvalidInput(format!(
                "frame images do not match the {}x{} camera",
                self.camera.width, self.camera.height
            )));
        }
        for p in 0..n {
            if self.masks.iter().filter(|m| m[p] != 0).count() > 1 {
                return Err(NovaError::InvalidInput(format!("masks overlap at pixel {p}")));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    version: u32,
    width: usize,
    height: usize,
    objects: usize,
    frames: Vec<FrameRecord>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    index: usize,
    time: f64,
    split: Split,
    camera: Camera,
    rgb: String,
    depth: String,
    masks: Vec<String>,
}

fn frame_files(index: usize, objects: usize) -> (String, String, Vec<String>) {
    (
        format!("frame_{index:04}_rgb.png"),
        format!("frame_{index:04}_depth.f32"),
        (0..objects).map(|o| format!("frame_{index:04}_mask_{o}.png")).collect(),
    )
}

pub fn save_dataset(frames: &[Frame], directory: &Path) -> Result<()> {
    let first = frames
        .first()
        .ok_or_else(|| NovaError::InvalidInput("cannot save an empty dataset".into()))?;
    let (width, height, objects) = (first.width(), first.height(), first.masks.len());
    fs::create_dir_all(directory).map_err(|e| NovaError::io(directory, e))?;
    let mut records = Vec::with_capacity(frames.len());
    for (index, frame) in frames.iter().enumerate() {
        frame.validate()?;
        if frame.width() != width || frame.height() != height || frame.masks.len() != objects {
            return Err(NovaError::InvalidInput(format!("frame {index} differs in size or object count")));
        }
        let (rgb_name, depth_name, mask_names) = frame_files(index, objects);

        let mut rgb = RgbImage::new(width as u32, height as u32);
        for (px, c) in rgb.pixels_mut().zip(&frame.rgb) {
            px.0 = c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
        let path = directory.join(&rgb_name);
        rgb.save(&path).map_err(|e| NovaError::format(&path, e.to_string()))?;

        for (mask, name) in frame.masks.iter().zip(&mask_names) {
            let raw = mask.iter().map(|&m| if m != 0 { 255 } else { 0 }).collect();
            let img = GrayImage::from_raw(width as u32, height as u32, raw).expect("mask size checked");
            let path = directory.join(name);
            img.save(&path).map_err(|e| NovaError::format(&path, e.to_string()))?;
        }

        let bytes: Vec<u8> = frame.depth.iter().flat_map(|d| d.to_le_bytes()).collect();
        let path = directory.join(&depth_name);
        fs::write(&path, bytes).map_err(|e| NovaError::io(&path, e))?;

        records.push(FrameRecord {
            index,
            time: frame.time,
            split: frame.split,
            camera: frame.camera,
            rgb: rgb_name,
            depth: depth_name,
            masks: mask_names,
        });
    }
    let manifest = Manifest {
        version: DATASET_VERSION,
        width,
        height,
        objects,
        frames: records,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    let path = directory.join(MANIFEST);
    fs::write(&path, text + "\n").map_err(|e| NovaError::io(&path, e))
}

pub fn load_dataset(directory: &Path) -> Result<Vec<Frame>> {
    let path = directory.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| NovaError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| NovaError::format(&path, e.to_string()))?;
    if manifest.version != DATASET_VERSION {
        return Err(NovaError::format(
            &path,
            format!("unsupported dataset version {} (expected {DATASET_VERSION})", manifest.version),
        ));
    }
    let (w, h) = (manifest.width, manifest.height);
    let n = w * h;
    let on_disk = fs::read_dir(directory)
        .map_err(|e| NovaError::io(directory, e))?
        .filter_map(|e| e.ok())
        .filter(|e| {
            let name = e.file_name();
            let name = name.to_string_lossy();
            name.starts_with("frame_") && name.ends_with("_rgb.png")
        })
        .count();
    if on_disk > manifest.frames.len() {
        return Err(NovaError::format(
            &path,
            format!("manifest lists {} frames but {on_disk} are on disk", manifest.frames.len()),
        ));
    }
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for (pos, rec) in manifest.frames.iter().enumerate() {
        if rec.index != pos {
            return Err(NovaError::format(&path, format!("frame record {pos} has index {}", rec.index)));
        }
        let missing = || NovaError::Format {
            path: directory.to_path_buf(),
            message: format!("frame {pos} missing"),
        };
        let rgb_path = directory.join(&rec.rgb);
        if !rgb_path.exists() {
            return Err(missing());
        }
        if rec.camera.width != w || rec.camera.height != h {
            return Err(NovaError::format(&path, format!("frame {pos} camera size differs from the manifest")));
        }
        if rec.masks.len() != manifest.objects {
            return Err(NovaError::format(&path, format!("frame {pos} lists {} masks", rec.masks.len())));
        }
        rec.camera.validate()?;

        let rgb = image::open(&rgb_path)
            .map_err(|e| NovaError::format(&rgb_path, format!("frame {pos}: {e}")))?
            .to_rgb8();
        if rgb.dimensions() != (w as u32, h as u32) {
            return Err(NovaError::format(&rgb_path, format!("frame {pos}: image is not {w}x{h}")));
        }
        let rgb = rgb.pixels().map(|p| p.0.map(|c| f64::from(c) / 255.0)).collect();

        let mut masks = Vec::with_capacity(rec.masks.len());
        for name in &rec.masks {
            let mp = directory.join(name);
            if !mp.exists() {
                return Err(missing());
            }
            let img = image::open(&mp)
                .map_err(|e| NovaError::format(&mp, format!("frame {pos}: {e}")))?
                .to_luma8();
            if img.dimensions() != (w as u32, h as u32) {
                return Err(NovaError::format(&mp, format!("frame {pos}: mask is not {w}x{h}")));
            }
            masks.push(img.into_raw().into_iter().map(|v| u8::from(v >= 128)).collect());
        }

        let dp = directory.join(&rec.depth);
        if !dp.exists() {
            return Err(missing());
        }
        let bytes = fs::read(&dp).map_err(|e| NovaError::io(&dp, e))?;
        if bytes.len() != 4 * n {
            return Err(NovaError::format(
                &dp,
                format!("frame {pos}: depth has {} bytes, expected {}", bytes.len(), 4 * n),
            ));
        }
        let depth = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();

        let frame = Frame {
            rgb,
            masks,
            depth,
            camera: rec.camera,
            time: rec.time,
            split: rec.split,
        };
        frame.validate()?;
        frames.push(frame);
    }
    Ok(frames)
}

/// Preprocessed real-sequence layout: `images/NNN.png`, `masks/NNN_K.png`,
/// `depth/NNN.f32` and a `cameras.json` array of [`Camera`]s. Frames are
/// timed uniformly over `[0, 1]` and all marked for training. Depth must be
/// metric optical-axis depth in the camera poses' units.
pub fn convert_sequence(directory: &Path) -> Result<Vec<Frame>> {
    let cam_path = directory.join("cameras.json");
    let text = fs::read_to_string(&cam_path).map_err(|e| NovaError::io(&cam_path, e))?;
    let cameras: Vec<Camera> = serde_json::from_str(&text).map_err(|e| NovaError::format(&cam_path, e.to_string()))?;
    let count = cameras.len();
    let mut frames = Vec::with_capacity(count);
    for (i, camera) in cameras.into_iter().enumerate() {
        camera.validate()?;
        let n = camera.pixel_count();
        let ip = directory.join(format!("images/{i:03}.png"));
        let rgb = image::open(&ip)
            .map_err(|e| NovaError::format(&ip, e.to_string()))?
            .to_rgb8()
            .pixels()
            .map(|p| p.0.map(|c| f64::from(c) / 255.0))
            .collect();
        let mut masks = Vec::new();
        loop {
            let mp = directory.join(format!("masks/{i:03}_{}.png", masks.len()));
            if !mp.exists() {
                break;
            }
            let img = image::open(&mp).map_err(|e| NovaError::format(&mp, e.to_string()))?.to_luma8();
            masks.push(img.into_raw().into_iter().map(|v| u8::from(v >= 128)).collect());
        }
        let dp = directory.join(format!("depth/{i:03}.f32"));
        let bytes = fs::read(&dp).map_err(|e| NovaError::io(&dp, e))?;
        if bytes.len() != 4 * n {
            return Err(NovaError::format(&dp, format!("expected {} bytes", 4 * n)));
        }
        let frame = Frame {
            rgb,
            masks,
            depth: bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
            camera,
            time: if count > 1 { i as f64 / (count - 1) as f64 } else { 0.0 },
            split: Split::Train,
        };
        frame.validate()?;
        frames.push(frame);
    }
    Ok(frames)
}
