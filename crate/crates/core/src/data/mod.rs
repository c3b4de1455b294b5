//! Scene configuration, synthetic data, dataset I/O and image metrics.

mod config;
mod dataset;
mod metrics;
mod synth;

pub use config::{
    AugmentConfig, BackgroundConfig, CameraPathConfig, FieldConfig, ObjectConfig, RenderConfig, SceneConfig,
    SceneSection, Shape, TrainConfig, CONFIG_VERSION,
};
pub use dataset::{convert_sequence, load_dataset, save_dataset, Frame, Split, DATASET_VERSION};
pub use metrics::{mask_iou, psnr, PSNR_CAP};
pub use synth::{generate_synthetic_scene, Hit, SyntheticScene};
