//! Run configuration (TOML).
//!
//! Every section and key is optional; omitted keys take the defaults below,
//! which describe the 64×64, 12-frame desk scene with one moving sphere.
//! Unknown keys are rejected with the line and column of the offence.

use serde::{Deserialize, Serialize};

use crate::diffengine::AdamConfig;
use crate::error::{NovaError, Result};
use crate::fields::{Activation, FieldArch, FieldKind};
use crate::losses::LossWeights;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub version: u32,
    pub seed: u64,
    pub scene: SceneSection,
    pub camera: CameraPathConfig,
    pub background: BackgroundConfig,
    pub objects: Vec<ObjectConfig>,
    pub field: FieldConfig,
    pub render: RenderConfig,
    pub loss: LossWeights,
    pub augment: AugmentConfig,
    pub optim: AdamConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSection {
    pub width: usize,
    pub height: usize,
    /// Number of training (monocular) frames; times are `i / (frames - 1)`.
    pub frames: usize,
    /// Focal length in pixels (fx = fy), principal point at the image center.
    pub focal: f64,
    /// Also emit held-out frames: the first camera at every later time.
    pub held_out: bool,
}

/// Camera center moves linearly from `eye_start` to `eye_end` while looking
/// at `target`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraPathConfig {
    pub eye_start: [f64; 3],
    pub eye_end: [f64; 3],
    pub target: [f64; 3],
    pub up: [f64; 3],
}

/// Open-fronted box `|x| <= half_width`, `|y| <= half_height`, `z >= back_z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackgroundConfig {
    pub half_width: f64,
    pub half_height: f64,
    pub back_z: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Sphere,
    Box,
}

/// A solid moving from `start` (t = 0) to `end` (t = 1), lifted by
/// `arc_height · sin(π t)` along +y.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectConfig {
    pub shape: Shape,
    /// Sphere radius or box half extent.
    pub size: f64,
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub arc_height: f64,
    pub color: [f64; 3],
}

/// Network hyperparameters shared by the static and dynamic fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldConfig {
    pub depth: usize,
    pub width: usize,
    pub skip: Option<usize>,
    pub color_width: usize,
    pub pos_levels: usize,
    pub dir_levels: usize,
    pub time_levels: usize,
    pub activation: Activation,
    pub scene_scale: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub near: f64,
    pub far: f64,
    pub samples: usize,
    pub chunk_rays: usize,
}

/// Novel-view augmentation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub max_translation: f64,
    pub max_rotation_deg: f64,
    /// Apply the mask objectives at the reference camera as well.
    pub reference_mask_losses: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub rays_per_batch: usize,
    /// Fraction of reference rays drawn from object masks.
    pub mask_ray_fraction: f64,
    pub log_every: usize,
    pub checkpoint_every: usize,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            version: CONFIG_VERSION,
            seed: 7,
            scene: SceneSection::default(),
            camera: CameraPathConfig::default(),
            background: BackgroundConfig::default(),
            objects: vec![ObjectConfig::default()],
            field: FieldConfig::default(),
            render: RenderConfig::default(),
            loss: LossWeights::default(),
            augment: AugmentConfig::default(),
            optim: AdamConfig::default(),
            train: TrainConfig::default(),
        }
    }
}

impl Default for SceneSection {
    fn default() -> Self {
        SceneSection {
            width: 64,
            height: 64,
            frames: 12,
            focal: 64.0,
            held_out: true,
        }
    }
}

impl Default for CameraPathConfig {
    fn default() -> Self {
        CameraPathConfig {
            eye_start: [-0.5, 0.3, 3.5],
            eye_end: [0.5, 0.1, 3.5],
            target: [0.0, 0.0, -0.5],
            up: [0.0, 1.0, 0.0],
        }
    }
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig {
            half_width: 2.0,
            half_height: 1.6,
            back_z: -1.5,
        }
    }
}

impl Default for ObjectConfig {
    fn default() -> Self {
        ObjectConfig {
            shape: Shape::Sphere,
            size: 0.5,
            start: [-0.9, -0.2, 0.2],
            end: [0.9, -0.2, 0.2],
            arc_height: 0.4,
            color: [0.9, 0.45, 0.15],
        }
    }
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            depth: 4,
            width: 64,
            skip: Some(2),
            color_width: 32,
            pos_levels: 6,
            dir_levels: 2,
            time_levels: 2,
            activation: Activation::Relu,
            scene_scale: 3.0,
        }
    }
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            near: 1.0,
            far: 6.5,
            samples: 32,
            chunk_rays: 128,
        }
    }
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            max_translation: 0.8,
            max_rotation_deg: 3.0,
            reference_mask_losses: true,
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 2000,
            rays_per_batch: 512,
            mask_ray_fraction: 0.25,
            log_every: 50,
            checkpoint_every: 500,
        }
    }
}

impl FieldConfig {
    pub fn arch(&self, kind: FieldKind) -> FieldArch {
        FieldArch {
            kind,
            depth: self.depth,
            width: self.width,
            skip: self.skip,
            color_width: self.color_width,
            pos_levels: self.pos_levels,
            dir_levels: self.dir_levels,
            time_levels: self.time_levels,
            activation: self.activation,
            scene_scale: self.scene_scale,
        }
    }
}

fn config_err(key: &str, msg: impl std::fmt::Display) -> NovaError {
    NovaError::Config(format!("{key}: {msg}"))
}

impl SceneConfig {
    /// Parses and validates TOML text.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| NovaError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parses TOML text after applying `key=value` overrides, where `key` is a
    /// dotted path (`train.steps`, `loss.nvm`) and `value` is a TOML literal
    /// (bare words are taken as strings).
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Self::from_toml(text);
        }
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| NovaError::Config(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let cfg: SceneConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| NovaError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path, overrides: &[String]) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| NovaError::io(path, e))?;
        let cfg = Self::from_toml_with_overrides(&text, overrides)
            .map_err(|e| match e {
                NovaError::Config(m) => NovaError::Config(format!("{}: {m}", path.display())),
                other => other,
            })?;
        Ok((cfg, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(config_err("version", format!("unsupported version {} (expected {CONFIG_VERSION})", self.version)));
        }
        let s = &self.scene;
        if s.width == 0 || s.height == 0 {
            return Err(config_err("scene.width/scene.height", "must be >= 1"));
        }
        if s.frames == 0 {
            return Err(config_err("scene.frames", "must be >= 1"));
        }
        if !(s.focal > 0.0) {
            return Err(config_err("scene.focal", "must be > 0"));
        }
        let b = &self.background;
        if !(b.half_width > 0.0 && b.half_height > 0.0) {
            return Err(config_err("background", "half extents must be > 0"));
        }
        for (i, o) in self.objects.iter().enumerate() {
            if !(o.size > 0.0) {
                return Err(config_err(&format!("objects[{i}].size"), "must be > 0"));
            }
            if o.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return Err(config_err(&format!("objects[{i}].color"), "components must lie in [0, 1]"));
            }
        }
        self.field.arch(FieldKind::Static).validate()?;
        let r = &self.render;
        if !(r.near > 0.0 && r.far > r.near) {
            return Err(config_err("render.near/render.far", "need 0 < near < far"));
        }
        if r.samples < 2 {
            return Err(config_err("render.samples", "must be >= 2"));
        }
        if r.chunk_rays == 0 {
            return Err(config_err("render.chunk_rays", "must be >= 1"));
        }
        self.loss.validate()?;
        let a = &self.augment;
        if !(a.max_translation >= 0.0) {
            return Err(config_err("augment.max_translation", "must be >= 0"));
        }
        if !(0.0..=45.0).contains(&a.max_rotation_deg) {
            return Err(config_err("augment.max_rotation_deg", "must lie in [0, 45]"));
        }
        self.optim.validate()?;
        let t = &self.train;
        if t.rays_per_batch == 0 {
            return Err(config_err("train.rays_per_batch", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&t.mask_ray_fraction) {
            return Err(config_err("train.mask_ray_fraction", "must lie in [0, 1]"));
        }
        if t.log_every == 0 || t.checkpoint_every == 0 {
            return Err(config_err("train.log_every/train.checkpoint_every", "must be >= 1"));
        }
        Ok(())
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| NovaError::Config(format!("override {spec:?} is not key=value")))?;
    let key = key.trim();
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| NovaError::Config(format!("override {key}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
