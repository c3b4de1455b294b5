//! Command implementations behind the `nova` binary.

use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, RgbImage};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::data::{generate_synthetic_scene, load_dataset, mask_iou, psnr, save_dataset, Frame, SceneConfig, Split, SyntheticScene};
use crate::error::{NovaError, Result};
use crate::fields::ObjectInstance;
use crate::geometry::{Camera, Se3, Vec3};
use crate::losses::LossReport;
use crate::model::SceneModel;
use crate::renderer::{render_image, RenderOptions, RenderOutput, SceneElement};
use crate::train::{eval_render_options, train, TrainOutput};

/// Everything a training run produced. Paths are relative to the run
/// directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Config file text exactly as given.
    pub config_snapshot: String,
    /// Copy of the snapshot on disk.
    pub config_file: PathBuf,
    pub overrides: Vec<String>,
    pub seed: u64,
    pub steps: usize,
    pub checkpoints: Vec<PathBuf>,
    pub log: PathBuf,
    pub final_loss: Option<LossReport>,
    pub final_metrics: Option<EvalReport>,
}

pub const MANIFEST_FILE: &str = "run.json";

pub fn cmd_gen(config: &SceneConfig, out_dir: &Path) -> Result<Vec<Frame>> {
    let frames = generate_synthetic_scene(config, config.seed)?;
    save_dataset(&frames, out_dir)?;
    info!("wrote {} frames to {}", frames.len(), out_dir.display());
    Ok(frames)
}

/// Trains on the dataset in `dataset_dir` and writes checkpoints, the loss
/// log, a config snapshot and [`MANIFEST_FILE`] into `out_dir`.
pub fn cmd_train(
    config: &SceneConfig,
    config_text: &str,
    overrides: &[String],
    dataset_dir: &Path,
    out_dir: &Path,
) -> Result<RunManifest> {
    let frames = load_dataset(dataset_dir)?;
    fs::create_dir_all(out_dir).map_err(|e| NovaError::io(out_dir, e))?;
    let snapshot = out_dir.join("config.toml");
    fs::write(&snapshot, config_text).map_err(|e| NovaError::io(&snapshot, e))?;
    let result = train(config, &frames, Some(&TrainOutput { dir: out_dir.to_path_buf() }))?;
    let final_metrics = if frames.iter().any(|f| f.split == Split::Eval) {
        Some(evaluate(&result.model, config, &frames)?)
    } else {
        None
    };
    let rel = |p: &Path| p.strip_prefix(out_dir).unwrap_or(p).to_path_buf();
    let manifest = RunManifest {
        config_snapshot: config_text.to_string(),
        config_file: rel(&snapshot),
        overrides: overrides.to_vec(),
        seed: config.seed,
        steps: result.steps,
        checkpoints: result.checkpoints.iter().map(|p| rel(p)).collect(),
        log: rel(result.log_path.as_deref().expect("training wrote a log")),
        final_loss: result.log.last().map(|(_, r)| r.clone()),
        final_metrics,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(|e| NovaError::io(&path, e))?;
    Ok(manifest)
}

/// Camera given either as a training-camera index of the configured scene
/// or as an explicit look-at rig.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSpec {
    pub frame: Option<usize>,
    pub eye: Option<[f64; 3]>,
    pub target: Option<[f64; 3]>,
    pub up: Option<[f64; 3]>,
    /// Defaults to the scene's focal length and image size.
    pub focal: Option<f64>,
    pub width: Option<usize>,
    pub height: Option<usize>,
}

impl CameraSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| NovaError::InvalidInput(format!("camera spec: {e}")))
    }

    pub fn resolve(&self, config: &SceneConfig) -> Result<Camera> {
        let scene = SyntheticScene::new(config)?;
        match (self.frame, self.eye) {
            (Some(i), None) => {
                if i >= config.scene.frames {
                    return Err(NovaError::InvalidInput(format!(
                        "camera spec: frame {i} out of range ({} frames)",
                        config.scene.frames
                    )));
                }
                let cam = scene.camera(i)?;
                if self.focal.is_some() || self.width.is_some() || self.height.is_some() {
                    return Err(NovaError::InvalidInput("camera spec: frame cameras take no intrinsics".into()));
                }
                Ok(cam)
            }
            (None, Some(eye)) => {
                let target = self.target.unwrap_or(config.camera.target);
                let up = self.up.unwrap_or(config.camera.up);
                let pose = Se3::look_at(Vec3::from(eye), Vec3::from(target), Vec3::from(up))
                    .map_err(|e| NovaError::InvalidInput(format!("camera spec: {e}")))?;
                let w = self.width.unwrap_or(config.scene.width);
                let h = self.height.unwrap_or(config.scene.height);
                let f = self.focal.unwrap_or(config.scene.focal);
                Camera::new(f, f, w as f64 / 2.0, h as f64 / 2.0, w, h, pose)
                    .map_err(|e| NovaError::InvalidInput(format!("camera spec: {e}")))
            }
            _ => Err(NovaError::InvalidInput(
                "camera spec: give exactly one of `frame` or `eye`".into(),
            )),
        }
    }
}

/// Full render of the trained scene. Shared by render and eval so their
/// numbers agree exactly.
pub fn render_view(model: &SceneModel, camera: &Camera, time: f64, options: &RenderOptions, dynamic_only: bool) -> Result<RenderOutput> {
    let elements = model.elements(if dynamic_only { 0.0 } else { 1.0 })?;
    render_image(&elements, camera, time, options, None)
}

fn write_rgb(path: &Path, camera: &Camera, rgb: &[[f64; 3]]) -> Result<()> {
    let mut img = RgbImage::new(camera.width as u32, camera.height as u32);
    for (px, c) in img.pixels_mut().zip(rgb) {
        px.0 = c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    img.save(path).map_err(|e| NovaError::format(path, e.to_string()))
}

fn write_gray(path: &Path, camera: &Camera, values: &[f64]) -> Result<()> {
    let raw = values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let img = GrayImage::from_raw(camera.width as u32, camera.height as u32, raw).expect("image size");
    img.save(path).map_err(|e| NovaError::format(path, e.to_string()))
}

/// Writes `rgb.png`, `mask_N.png` per render element and `depth.png`
/// (depth over `[near, far]` mapped to black..white, empty rays black).
pub fn write_render(out_dir: &Path, camera: &Camera, output: &RenderOutput, options: &RenderOptions) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| NovaError::io(out_dir, e))?;
    let mut files = vec![out_dir.join("rgb.png")];
    write_rgb(&files[0], camera, &output.color)?;
    for (n, m) in output.masks.iter().enumerate() {
        let p = out_dir.join(format!("mask_{n}.png"));
        write_gray(&p, camera, m)?;
        files.push(p);
    }
    let span = options.far - options.near;
    let depth: Vec<f64> = output
        .depth
        .iter()
        .map(|&d| if d > 0.0 { 1.0 - (d - options.near) / span } else { 0.0 })
        .collect();
    let p = out_dir.join("depth.png");
    write_gray(&p, camera, &depth)?;
    files.push(p);
    Ok(files)
}

pub fn cmd_render(
    model: &SceneModel,
    config: &SceneConfig,
    camera: &Camera,
    time: f64,
    dynamic_only: bool,
    out_dir: &Path,
) -> Result<RenderOutput> {
    let options = eval_render_options(config);
    let out = render_view(model, camera, time, &options, dynamic_only)?;
    write_render(out_dir, camera, &out, &options)?;
    Ok(out)
}

/// One inserted copy of a trained object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Insertion {
    pub object: usize,
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
    #[serde(default)]
    pub angle_deg: f64,
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default = "one")]
    pub time_scale: f64,
    #[serde(default)]
    pub time_offset: f64,
}

fn default_axis() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}

fn one() -> f64 {
    1.0
}

/// `[[insert]]` tables, e.g.
///
/// ```toml
/// [[insert]]
/// object = 0
///
/// [[insert]]
/// object = 0
/// axis = [0.0, 1.0, 0.0]
/// angle_deg = 30.0
/// translation = [0.0, 0.6, -0.4]
/// time_scale = -1.0
/// time_offset = 1.0
/// ```
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsertionSpec {
    #[serde(default)]
    pub insert: Vec<Insertion>,
}

impl InsertionSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| NovaError::InvalidInput(format!("insertion spec: {e}")))
    }
}

impl Insertion {
    pub fn transform(&self) -> Result<Se3> {
        Se3::from_axis_angle_deg(Vec3::from(self.axis), self.angle_deg, Vec3::from(self.translation))
    }
}

/// Static field plus every insertion, in spec order.
pub fn compose_elements<'a>(model: &'a SceneModel, spec: &InsertionSpec) -> Result<Vec<SceneElement<'a>>> {
    let mut elements = vec![SceneElement::Static {
        field: model.static_field(),
        beta: 1.0,
    }];
    for (i, ins) in spec.insert.iter().enumerate() {
        let field = model.object_field(ins.object)?;
        let tf = ins
            .transform()
            .map_err(|e| NovaError::InvalidInput(format!("insertion {i}: {e}")))?;
        let inst = ObjectInstance::new(field, tf, ins.time_scale, ins.time_offset)
            .map_err(|e| NovaError::InvalidInput(format!("insertion {i}: {e}")))?;
        elements.push(SceneElement::Object(inst));
    }
    Ok(elements)
}

pub fn cmd_compose(
    model: &SceneModel,
    config: &SceneConfig,
    spec: &InsertionSpec,
    camera: &Camera,
    time: f64,
    out_dir: Option<&Path>,
) -> Result<RenderOutput> {
    let options = eval_render_options(config);
    let elements = compose_elements(model, spec)?;
    let out = render_image(&elements, camera, time, &options, None)?;
    if let Some(dir) = out_dir {
        write_render(dir, camera, &out, &options)?;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub index: usize,
    pub time: f64,
    pub psnr: f64,
    /// One entry per object: IoU of the rendered mask against the frame's.
    pub mask_iou: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub frames: Vec<FrameMetrics>,
    pub mean_psnr: f64,
    /// Mean over frames and objects; 1 without objects.
    pub mean_mask_iou: f64,
    pub train_mean_psnr: f64,
    /// Set when training frames score below the held-out ones.
    pub train_below_held_out: bool,
}

pub fn frame_metrics(model: &SceneModel, config: &SceneConfig, index: usize, frame: &Frame) -> Result<FrameMetrics> {
    let out = render_view(model, &frame.camera, frame.time, &eval_render_options(config), false)?;
    let ious = frame
        .masks
        .iter()
        .enumerate()
        .map(|(o, m)| mask_iou(&out.masks[o + 1], m))
        .collect::<Result<_>>()?;
    Ok(FrameMetrics {
        index,
        time: frame.time,
        psnr: psnr(&out.color, &frame.rgb)?,
        mask_iou: ious,
    })
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Metrics on every held-out frame (fixed viewpoint, varying time) plus
/// the training-frame mean as a sanity reference.
pub fn evaluate(model: &SceneModel, config: &SceneConfig, frames: &[Frame]) -> Result<EvalReport> {
    let held: Vec<(usize, &Frame)> = frames.iter().enumerate().filter(|(_, f)| f.split == Split::Eval).collect();
    if held.is_empty() {
        return Err(NovaError::InvalidInput("dataset has no held-out frames".into()));
    }
    let per_frame = held
        .iter()
        .map(|&(i, f)| frame_metrics(model, config, i, f))
        .collect::<Result<Vec<_>>>()?;
    let train_psnr = frames
        .iter()
        .enumerate()
        .filter(|(_, f)| f.split == Split::Train)
        .map(|(i, f)| frame_metrics(model, config, i, f).map(|m| m.psnr))
        .collect::<Result<Vec<_>>>()?;
    let mean_psnr = mean(per_frame.iter().map(|m| m.psnr));
    let train_mean_psnr = mean(train_psnr.into_iter());
    let ious: Vec<f64> = per_frame.iter().flat_map(|m| m.mask_iou.iter().copied()).collect();
    let report = EvalReport {
        mean_mask_iou: if ious.is_empty() { 1.0 } else { mean(ious.into_iter()) },
        frames: per_frame,
        mean_psnr,
        train_mean_psnr,
        train_below_held_out: train_mean_psnr < mean_psnr,
    };
    if report.train_below_held_out {
        warn!(
            "training frames score below held-out frames ({:.2} < {:.2} dB)",
            train_mean_psnr, mean_psnr
        );
    }
    Ok(report)
}

pub fn cmd_eval(model: &SceneModel, config: &SceneConfig, dataset_dir: &Path, report_path: &Path) -> Result<EvalReport> {
    let frames = load_dataset(dataset_dir)?;
    let report = evaluate(model, config, &frames)?;
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    fs::write(report_path, text + "\n").map_err(|e| NovaError::io(report_path, e))?;
    Ok(report)
}
