//! Loss and parameter gradient of one supervised ray batch.
//!
//! Rays are processed in fixed-size chunks: a forward sweep keeps each
//! chunk's field activations, the losses are formed over the whole batch,
//! and a backward sweep turns each chunk's share of the loss gradient into a
//! parameter gradient. Chunk gradients are summed in chunk order, so the
//! result is independent of how many threads ran the chunks.

use rayon::prelude::*;

use crate::error::{NovaError, Result};
use crate::geometry::Ray;
use crate::losses::{
    loss_nva_grad, loss_nvb_grad, loss_nvcf_grad, loss_nvcn_grad, loss_nvm_grad, loss_recon_grad, total_loss,
    LossWeights, PassLosses, Term,
};
use crate::model::SceneModel;
use crate::renderer::{
    evaluate_elements, render_grid, render_grid_backward, sample_along_rays_from, ElementEval, RaySampleGrid,
    RenderGrad, RenderOptions, RenderOutput, SceneElement,
};

/// Which objectives a batch feeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PassKind {
    /// Rays of a training frame: photometric loss, plus the mask loss on the
    /// frame's own masks when `mask_loss` is set.
    Reference { mask_loss: bool },
    /// Rays of a perturbed camera supervised by warped ground truth: the
    /// mask, per-field color, full color, blending and opacity losses.
    Novel,
}

/// Ground truth for every ray of a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Supervision {
    pub rgb: Vec<[f64; 3]>,
    /// `[object][ray]` in `[0, 1]`.
    pub masks: Vec<Vec<f64>>,
    pub validity: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct Batch {
    pub rays: Vec<Ray>,
    pub time: f64,
    pub supervision: Supervision,
    pub kind: PassKind,
}

/// Losses of a batch and the gradient of their weighted sum.
#[derive(Clone, Debug)]
pub struct BatchResult {
    pub losses: PassLosses,
    pub weighted: f64,
    pub grad: Vec<f64>,
}

struct ChunkForward {
    grid: RaySampleGrid,
    evals: Vec<ElementEval>,
    output: RenderOutput,
}

/// Terms a pass evaluates, given the weights.
fn active_terms(kind: PassKind, objects: usize) -> Vec<Term> {
    match kind {
        PassKind::Reference { mask_loss } => {
            let mut t = vec![Term::Recon];
            if mask_loss && objects > 0 {
                t.push(Term::Nvm);
            }
            t
        }
        PassKind::Novel => {
            let mut t = vec![Term::Nvcn, Term::Nvcf, Term::Nvb];
            if objects > 0 {
                t.extend([Term::Nvm, Term::Nva]);
            }
            t
        }
    }
}

/// Forward and backward pass of one batch through `model` rendered with
/// its static field at blending factor 1 and every object at its trained
/// pose. `first_ray_id` keys the stratified sample streams.
pub fn batch_loss_and_grad(
    model: &SceneModel,
    batch: &Batch,
    weights: &LossWeights,
    options: &RenderOptions,
    first_ray_id: u64,
) -> Result<BatchResult> {
    let elements = model.elements(1.0)?;
    let n_rays = batch.rays.len();
    let sup = &batch.supervision;
    let objects = model.object_count();
    if sup.rgb.len() != n_rays || sup.validity.len() != n_rays || sup.masks.len() != objects {
        return Err(NovaError::InvalidInput(format!(
            "supervision for {} rays / {} objects does not match the batch ({n_rays} rays, {objects} objects)",
            sup.rgb.len(),
            sup.masks.len()
        )));
    }
    if sup.masks.iter().any(|m| m.len() != n_rays) {
        return Err(NovaError::InvalidInput("mask supervision length differs from the ray count".into()));
    }
    let k = options.samples;
    let chunk = options.chunk_rays.max(1);

    let forwards: Vec<ChunkForward> = batch
        .rays
        .par_chunks(chunk)
        .enumerate()
        .map(|(ci, part)| {
            let id = first_ray_id + (ci * chunk) as u64;
            let samples = sample_along_rays_from(part, k, options.stratified, options.seed, id)?;
            let (grid, evals) = evaluate_elements(&elements, part, &samples, batch.time, true)?;
            let output = render_grid(&grid)?;
            Ok(ChunkForward { grid, evals, output })
        })
        .collect::<Result<_>>()?;

    // Batch-wide views of the outputs the losses read.
    let nf = elements.len();
    let mut color = Vec::with_capacity(n_rays);
    let mut masks = vec![Vec::with_capacity(n_rays); nf];
    let mut field_colors = vec![Vec::with_capacity(n_rays); nf];
    let mut alpha = vec![Vec::with_capacity(n_rays * k); nf];
    let mut beta = vec![Vec::with_capacity(n_rays * k); nf];
    for f in &forwards {
        color.extend_from_slice(&f.output.color);
        let span = f.grid.n_rays * k;
        for n in 0..nf {
            masks[n].extend_from_slice(&f.output.masks[n]);
            field_colors[n].extend_from_slice(&f.output.field_colors[n]);
            alpha[n].extend_from_slice(&f.grid.alpha[n * span..(n + 1) * span]);
            beta[n].extend_from_slice(&f.grid.beta[n * span..(n + 1) * span]);
        }
    }

    let mut losses = PassLosses::default();
    let mut g_color = vec![[0.0; 3]; n_rays];
    let mut g_masks = vec![vec![0.0; n_rays]; nf];
    let mut g_field_colors = vec![vec![[0.0; 3]; n_rays]; nf];
    let mut g_alpha = vec![vec![0.0; n_rays * k]; nf];
    let mut g_beta = vec![vec![0.0; n_rays * k]; nf];

    for term in active_terms(batch.kind, objects) {
        let w = weights.get(term);
        match term {
            Term::Recon => {
                let (t, g) = loss_recon_grad(&color, &sup.rgb)?;
                losses.set(term, t);
                axpy3(&mut g_color, w, &g);
            }
            Term::Nvm => {
                let validity = match batch.kind {
                    PassKind::Reference { .. } => vec![1; n_rays],
                    PassKind::Novel => sup.validity.clone(),
                };
                let (t, g) = loss_nvm_grad(&masks[1..], &sup.masks, &validity)?;
                losses.set(term, t);
                for (dst, src) in g_masks[1..].iter_mut().zip(&g) {
                    axpy(dst, w, src);
                }
            }
            Term::Nvcn => {
                let mut resp = Vec::with_capacity(nf);
                resp.push(
                    (0..n_rays)
                        .map(|r| (1.0 - sup.masks.iter().map(|m| m[r]).sum::<f64>()).max(0.0))
                        .collect(),
                );
                resp.extend(sup.masks.iter().cloned());
                let (t, g) = loss_nvcn_grad(&field_colors, &sup.rgb, &resp, &sup.validity)?;
                losses.set(term, t);
                for (dst, src) in g_field_colors.iter_mut().zip(&g) {
                    axpy3(dst, w, src);
                }
            }
            Term::Nvcf => {
                let (t, g) = loss_nvcf_grad(&color, &sup.rgb, &sup.validity)?;
                losses.set(term, t);
                axpy3(&mut g_color, w, &g);
            }
            Term::Nvb => {
                let (t, g) = loss_nvb_grad(&beta)?;
                losses.set(term, t);
                for (n, dst) in g_beta.iter_mut().enumerate() {
                    if matches!(elements[n], SceneElement::Object(_)) {
                        axpy(dst, w, &g);
                    }
                }
            }
            Term::Nva => {
                let (t, g) = loss_nva_grad(&alpha[1..], &sup.masks, &sup.validity, k)?;
                losses.set(term, t);
                for (dst, src) in g_alpha[1..].iter_mut().zip(&g) {
                    axpy(dst, w, src);
                }
            }
        }
    }
    let weighted = total_loss(&[losses], weights).total;
    if !weighted.is_finite() {
        return Err(NovaError::NonFinite(format!("batch loss is {weighted}")));
    }

    let offsets = model.offsets();
    let total = model.param_count();
    let chunk_grads: Vec<Vec<f64>> = forwards
        .par_iter()
        .enumerate()
        .map(|(ci, f)| {
            let r0 = ci * chunk;
            let rc = f.grid.n_rays;
            let upstream = RenderGrad {
                color: g_color[r0..r0 + rc].to_vec(),
                masks: g_masks.iter().map(|m| m[r0..r0 + rc].to_vec()).collect(),
                field_colors: g_field_colors.iter().map(|m| m[r0..r0 + rc].to_vec()).collect(),
                depth: Vec::new(),
            };
            let mut gg = render_grid_backward(&f.grid, &upstream);
            let span = rc * k;
            for n in 0..nf {
                for j in 0..span {
                    gg.alpha[n * span + j] += g_alpha[n][r0 * k + j];
                    gg.beta[n * span + j] += g_beta[n][r0 * k + j];
                }
            }
            let mut grad = vec![0.0; total];
            for (n, element) in elements.iter().enumerate() {
                let range = n * span..(n + 1) * span;
                let grad_sigma: Vec<f64> = range
                    .clone()
                    .map(|i| gg.alpha[i] * f.grid.deltas[i - n * span] * (1.0 - f.grid.alpha[i]))
                    .collect();
                let grad_beta = match element {
                    SceneElement::Object(_) => Some(&gg.beta[range.clone()]),
                    SceneElement::Static { .. } => None,
                };
                let cache = f.evals[n].cache.as_ref().expect("forward kept caches");
                let field = element.field();
                let start = offsets[n];
                field.backward(
                    cache,
                    &grad_sigma,
                    grad_beta,
                    &gg.color[range],
                    &mut grad[start..start + field.param_count()],
                );
            }
            grad
        })
        .collect();

    let mut grad = vec![0.0; total];
    for g in &chunk_grads {
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    Ok(BatchResult { losses, weighted, grad })
}

fn axpy(dst: &mut [f64], w: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += w * s;
    }
}

fn axpy3(dst: &mut [[f64; 3]], w: f64, src: &[[f64; 3]]) {
    for (d, s) in dst.iter_mut().zip(src) {
        for c in 0..3 {
            d[c] += w * s[c];
        }
    }
}

/// Weighted loss of a batch without gradients (same forward as training).
pub fn batch_loss(
    model: &SceneModel,
    batch: &Batch,
    weights: &LossWeights,
    options: &RenderOptions,
    first_ray_id: u64,
) -> Result<f64> {
    Ok(batch_loss_and_grad(model, batch, weights, options, first_ray_id)?.weighted)
}
