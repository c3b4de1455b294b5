//! Training loop.
//!
//! Each step draws a training frame and a ray batch from it, perturbs the
//! frame's camera, warps the frame's depth, color and masks into the
//! perturbed view, draws a second batch among the pixels that received
//! warped data, and takes one Adam step on the weighted sum of both passes.
//! Every random choice is keyed by `(seed, step)`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Frame, SceneConfig, Split};
use crate::diffengine::{clip_global_norm, optimizer_step, OptimizerState};
use crate::error::{NovaError, Result};
use crate::geometry::{perturb_camera, warp_frame, Camera};
use crate::losses::{total_loss, LossReport};
use crate::model::SceneModel;
use crate::pipeline::{batch_loss_and_grad, Batch, PassKind, Supervision};
use crate::renderer::RenderOptions;

/// Where training writes its artifacts. Without one nothing touches disk.
#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub dir: PathBuf,
}

#[derive(Clone, Debug)]
pub struct TrainResult {
    pub model: SceneModel,
    pub steps: usize,
    /// Report of every logged step.
    pub log: Vec<(usize, LossReport)>,
    pub checkpoints: Vec<PathBuf>,
    pub log_path: Option<PathBuf>,
    pub final_checkpoint: Option<PathBuf>,
}

/// Render settings of a training step.
pub fn train_render_options(config: &SceneConfig, step: usize) -> RenderOptions {
    RenderOptions {
        near: config.render.near,
        far: config.render.far,
        samples: config.render.samples,
        stratified: true,
        seed: step_seed(config.seed, step, 1),
        chunk_rays: config.render.chunk_rays,
    }
}

/// Render settings for evaluation and export.
pub fn eval_render_options(config: &SceneConfig) -> RenderOptions {
    RenderOptions {
        near: config.render.near,
        far: config.render.far,
        samples: config.render.samples,
        stratified: false,
        seed: 0,
        chunk_rays: config.render.chunk_rays,
    }
}

fn step_seed(seed: u64, step: usize, purpose: u64) -> u64 {
    seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ purpose.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Draws `count` pixels: a `focus_fraction` share from `focus` (when it is
/// non-empty) and the rest from `pool`, with replacement.
fn draw_pixels(rng: &mut ChaCha8Rng, pool: &[usize], focus: &[usize], count: usize, focus_fraction: f64) -> Vec<usize> {
    let n_focus = if focus.is_empty() { 0 } else { (count as f64 * focus_fraction).round() as usize };
    let mut out = Vec::with_capacity(count);
    for _ in 0..n_focus {
        out.push(focus[rng.random_range(0..focus.len())]);
    }
    for _ in n_focus..count {
        out.push(pool[rng.random_range(0..pool.len())]);
    }
    out
}

fn pixel_rays(camera: &Camera, pixels: &[usize], config: &SceneConfig) -> Result<Vec<crate::geometry::Ray>> {
    let coords: Vec<(usize, usize)> = pixels.iter().map(|&p| (p % camera.width, p / camera.width)).collect();
    camera.generate_rays(Some(&coords), config.render.near, config.render.far)
}

/// Reference and (when any novel weight is set) novel-view batches of one
/// step.
pub fn step_batches(config: &SceneConfig, train: &[&Frame], step: usize) -> Result<Vec<Batch>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(step as u64);
    let frame = train[rng.random_range(0..train.len())];
    let n_pix = frame.camera.pixel_count();
    let count = config.train.rays_per_batch;
    let fraction = config.train.mask_ray_fraction;
    let all: Vec<usize> = (0..n_pix).collect();
    let in_mask = |masks: &[Vec<u8>]| -> Vec<usize> { (0..n_pix).filter(|&p| masks.iter().any(|m| m[p] != 0)).collect() };

    let pixels = draw_pixels(&mut rng, &all, &in_mask(&frame.masks), count, fraction);
    let reference = Batch {
        rays: pixel_rays(&frame.camera, &pixels, config)?,
        time: frame.time,
        supervision: Supervision {
            rgb: pixels.iter().map(|&p| frame.rgb[p]).collect(),
            masks: frame.masks.iter().map(|m| pixels.iter().map(|&p| f64::from(m[p])).collect()).collect(),
            validity: vec![1; count],
        },
        kind: PassKind::Reference {
            mask_loss: config.augment.reference_mask_losses,
        },
    };
    let mut batches = vec![reference];
    if !config.loss.uses_novel_view() {
        return Ok(batches);
    }

    let novel = perturb_camera(
        &frame.camera,
        config.augment.max_translation,
        config.augment.max_rotation_deg,
        step_seed(config.seed, step, 2),
    )?;
    let warp = warp_frame(frame, &novel, true)?;
    let valid: Vec<usize> = (0..n_pix).filter(|&p| warp.validity[p] != 0).collect();
    if valid.is_empty() {
        debug!("step {step}: warp left no valid pixels, skipping the novel pass");
        return Ok(batches);
    }
    let focus: Vec<usize> = in_mask(&warp.masks);
    let pixels = draw_pixels(&mut rng, &valid, &focus, count, fraction);
    let rgb = warp.rgb.as_ref().expect("warp requested with colors");
    batches.push(Batch {
        rays: pixel_rays(&novel, &pixels, config)?,
        time: frame.time,
        supervision: Supervision {
            rgb: pixels.iter().map(|&p| rgb[p]).collect(),
            masks: warp.masks.iter().map(|m| pixels.iter().map(|&p| f64::from(m[p])).collect()).collect(),
            validity: pixels.iter().map(|&p| warp.validity[p]).collect(),
        },
        kind: PassKind::Novel,
    });
    Ok(batches)
}

/// Loss report and summed gradient of one step at the model's current
/// parameters.
pub fn step_gradient(model: &SceneModel, config: &SceneConfig, train: &[&Frame], step: usize) -> Result<(LossReport, Vec<f64>)> {
    let options = train_render_options(config, step);
    let mut grad = vec![0.0; model.param_count()];
    let mut passes = Vec::new();
    let mut ray_id = 0u64;
    for batch in step_batches(config, train, step)? {
        let r = batch_loss_and_grad(model, &batch, &config.loss, &options, ray_id)?;
        ray_id += batch.rays.len() as u64;
        for (a, b) in grad.iter_mut().zip(&r.grad) {
            *a += b;
        }
        passes.push(r.losses);
    }
    let report = total_loss(&passes, &config.loss);
    if !report.total.is_finite() {
        return Err(NovaError::NonFinite(format!("loss at step {step} is {}", report.total)));
    }
    Ok((report, grad))
}

fn train_frames(frames: &[Frame]) -> Result<Vec<&Frame>> {
    let train: Vec<&Frame> = frames.iter().filter(|f| f.split == Split::Train).collect();
    if train.is_empty() {
        return Err(NovaError::InvalidInput("dataset has no training frames".into()));
    }
    let objects = train[0].masks.len();
    if train.iter().any(|f| f.masks.len() != objects) {
        return Err(NovaError::InvalidInput("training frames disagree on the object count".into()));
    }
    Ok(train)
}

/// Trains a fresh model on the `Train` frames. With `output`, writes
/// `train_log.jsonl`, periodic `step_NNNNNN.ckpt` files and `final.ckpt`; a
/// non-finite loss writes `last_good.ckpt` and returns the error.
pub fn train(config: &SceneConfig, frames: &[Frame], output: Option<&TrainOutput>) -> Result<TrainResult> {
    config.validate()?;
    let train = train_frames(frames)?;
    let mut model = SceneModel::new(config, train[0].masks.len(), config.seed)?;
    let steps = config.train.steps;
    let mut state = OptimizerState::new(model.param_count(), &config.optim);
    let mut params = model.parameters().values;

    let mut log_file = match output {
        Some(out) => {
            fs::create_dir_all(&out.dir).map_err(|e| NovaError::io(&out.dir, e))?;
            let path = out.dir.join("train_log.jsonl");
            let f = File::create(&path).map_err(|e| NovaError::io(&path, e))?;
            Some((BufWriter::new(f), path))
        }
        None => None,
    };
    let mut result = TrainResult {
        model: model.clone(),
        steps,
        log: Vec::new(),
        checkpoints: Vec::new(),
        log_path: log_file.as_ref().map(|(_, p)| p.clone()),
        final_checkpoint: None,
    };

    let mut last_good = (params.clone(), 0usize);
    for step in 0..steps {
        let (report, mut grad) = match step_gradient(&model, config, &train, step) {
            Ok(r) => r,
            Err(e @ NovaError::NonFinite(_)) => {
                if let Some(out) = output {
                    let path = out.dir.join("last_good.ckpt");
                    model.set_parameters(&last_good.0)?;
                    model.save(&path, last_good.1 as u64)?;
                    result.checkpoints.push(path);
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        last_good = (params.clone(), step);
        if let Some(c) = config.optim.clip_norm {
            clip_global_norm(&mut grad, c);
        }
        state.lr = config.optim.lr_at(step, steps);
        optimizer_step(&mut params, &grad, &mut state)?;
        model.set_parameters(&params)?;

        if step % config.train.log_every.max(1) == 0 {
            let line = report.log_line(step);
            info!("{line}");
            if let Some((w, path)) = log_file.as_mut() {
                writeln!(w, "{line}").map_err(|e| NovaError::io(&*path, e))?;
            }
            result.log.push((step, report));
        }
        let done = step + 1;
        if let Some(out) = output {
            let every = config.train.checkpoint_every;
            if every > 0 && done % every == 0 && done < steps {
                let path = out.dir.join(format!("step_{done:06}.ckpt"));
                model.save(&path, done as u64)?;
                result.checkpoints.push(path);
            }
        }
    }

    if let Some((mut w, path)) = log_file {
        w.flush().map_err(|e| NovaError::io(&path, e))?;
    }
    if let Some(out) = output {
        let path = out.dir.join("final.ckpt");
        model.save(&path, steps as u64)?;
        result.checkpoints.push(path.clone());
        result.final_checkpoint = Some(path);
    }
    result.model = model;
    Ok(result)
}
