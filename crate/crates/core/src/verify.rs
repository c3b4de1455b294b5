//! Self-checks run by `nova verify`: loop oracles for every reduction and
//! loss, the single-field and homogeneous-medium reductions, a finite
//! difference check of the whole render and loss pipeline, and the warp
//! oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Frame, SceneConfig, Split, SyntheticScene};
use crate::diffengine::{grad_check, FnObjective};
use crate::error::{NovaError, Result};
use crate::fields::Activation;
use crate::geometry::{perturb_camera, warp_frame, Camera};
use crate::losses::{loss_nva, loss_nvb, loss_nvcf, loss_nvcn, loss_nvm, loss_recon, total_loss, LossWeights};
use crate::model::SceneModel;
use crate::pipeline::{batch_loss_and_grad, Batch, PassKind, Supervision};
use crate::renderer::{composite_full, render_depth, render_mask, render_rgb_per_field, RaySampleGrid, RenderOptions};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    pub fn into_result(self) -> Result<()> {
        if self.passed() {
            Ok(())
        } else {
            Err(NovaError::VerifyFailed(self.failures().join(", ")))
        }
    }
}

pub type ColorOracle = fn(&RaySampleGrid) -> Vec<[f64; 3]>;

/// Fault injection for exercising the checker itself.
#[derive(Clone, Copy, Default)]
pub struct VerifyHooks {
    /// Add 1 to this entry of the analytic gradient.
    pub corrupt_gradient: Option<usize>,
    /// Replace the composed-color oracle.
    pub composite_oracle: Option<ColorOracle>,
}

const ORACLE_TOL: f64 = 1e-12;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Random grid with `Σ_n β ≤ 1` when `budget` is set.
pub fn random_grid(rng: &mut ChaCha8Rng, n: usize, r: usize, k: usize, budget: bool) -> RaySampleGrid {
    let mut g = RaySampleGrid::zeros(n, r, k);
    for ray in 0..r {
        let mut t = rng.random_range(0.1..1.0);
        for s in 0..k {
            let j = ray * k + s;
            let d = rng.random_range(0.05..0.5);
            g.depths[j] = t;
            g.deltas[j] = d;
            t += d;
        }
    }
    for i in 0..g.alpha.len() {
        g.alpha[i] = rng.random();
        g.beta[i] = if budget { rng.random::<f64>() / n as f64 } else { rng.random() };
        g.color[i] = [rng.random(), rng.random(), rng.random()];
    }
    g
}

fn full_t(g: &RaySampleGrid, r: usize) -> (Vec<f64>, Vec<f64>) {
    let mut t = vec![0.0; g.n_samples];
    let mut a = vec![0.0; g.n_samples];
    let mut acc = 1.0;
    for k in 0..g.n_samples {
        let mut s = 0.0;
        for n in 0..g.n_fields {
            s += g.beta[g.index(n, r, k)] * g.alpha[g.index(n, r, k)];
        }
        a[k] = s.clamp(0.0, 1.0);
        t[k] = acc;
        acc *= 1.0 - a[k];
    }
    (t, a)
}

/// Term-by-term composed color.
pub fn oracle_composite(g: &RaySampleGrid) -> Vec<[f64; 3]> {
    (0..g.n_rays)
        .map(|r| {
            let (t, _) = full_t(g, r);
            let mut c = [0.0; 3];
            for (k, tk) in t.iter().enumerate() {
                for n in 0..g.n_fields {
                    let i = g.index(n, r, k);
                    for ch in 0..3 {
                        c[ch] += tk * g.alpha[i] * g.beta[i] * g.color[i][ch];
                    }
                }
            }
            c.map(|v| v.clamp(0.0, 1.0))
        })
        .collect()
}

fn oracle_mask(g: &RaySampleGrid, n: usize) -> Vec<f64> {
    (0..g.n_rays)
        .map(|r| {
            let (t, a) = full_t(g, r);
            (0..g.n_samples).map(|k| t[k] * a[k] * g.beta[g.index(n, r, k)]).sum()
        })
        .collect()
}

fn oracle_field_rgb(g: &RaySampleGrid, n: usize) -> Vec<[f64; 3]> {
    (0..g.n_rays)
        .map(|r| {
            let mut c = [0.0; 3];
            for k in 0..g.n_samples {
                let mut t = 1.0;
                for j in 0..k {
                    let i = g.index(n, r, j);
                    t *= 1.0 - g.alpha[i] * g.beta[i];
                }
                let i = g.index(n, r, k);
                for ch in 0..3 {
                    c[ch] += t * g.alpha[i] * g.beta[i] * g.color[i][ch];
                }
            }
            c
        })
        .collect()
}

fn oracle_depth(g: &RaySampleGrid) -> Vec<f64> {
    (0..g.n_rays)
        .map(|r| {
            let (t, a) = full_t(g, r);
            let num: f64 = (0..g.n_samples).map(|k| t[k] * a[k] * g.depths[r * g.n_samples + k]).sum();
            let den: f64 = (0..g.n_samples).map(|k| t[k] * a[k]).sum();
            num / den.max(crate::renderer::DEPTH_EPS)
        })
        .collect()
}

pub fn check_reductions(hooks: &VerifyHooks) -> Vec<Check> {
    let composite = hooks.composite_oracle.unwrap_or(oracle_composite);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut w_c, mut w_m, mut w_f, mut w_d) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut error = None;
    for _ in 0..200 {
        let n = rng.random_range(1..=3);
        let r = rng.random_range(1..=16);
        let k = rng.random_range(1..=8);
        let g = random_grid(&mut rng, n, r, k, false);
        let res = (|| -> Result<()> {
            let c = composite_full(&g)?;
            for (a, b) in c.color.iter().zip(composite(&g)) {
                for ch in 0..3 {
                    w_c = w_c.max(rel(a[ch], b[ch]));
                }
            }
            for f in 0..n {
                for (a, b) in render_mask(&g, f)?.iter().zip(oracle_mask(&g, f)) {
                    w_m = w_m.max(rel(*a, b));
                }
                for (a, b) in render_rgb_per_field(&g, f)?.iter().zip(oracle_field_rgb(&g, f)) {
                    for ch in 0..3 {
                        w_f = w_f.max(rel(a[ch], b[ch]));
                    }
                }
            }
            for (a, b) in render_depth(&g)?.iter().zip(oracle_depth(&g)) {
                w_d = w_d.max(rel(*a, b));
            }
            Ok(())
        })();
        if let Err(e) = res {
            error = Some(e.to_string());
        }
    }
    let mk = |name, worst: f64, tol| Check {
        name,
        passed: error.is_none() && worst < tol,
        detail: error.clone().unwrap_or_else(|| format!("worst relative error {worst:.3e} over 200 grids")),
    };
    vec![
        mk("composite_full oracle", w_c, ORACLE_TOL),
        mk("render_mask oracle", w_m, ORACLE_TOL),
        mk("render_rgb_per_field oracle", w_f, ORACLE_TOL),
        mk("render_depth oracle", w_d, 1e-9),
    ]
}

pub fn check_losses() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    let result = (|| -> Result<()> {
        for _ in 0..200 {
            let n = rng.random_range(1..=3);
            let r = rng.random_range(1..=16);
            let k = rng.random_range(1..=8);
            let rgb = |rng: &mut ChaCha8Rng| -> Vec<[f64; 3]> { (0..r).map(|_| [rng.random(), rng.random(), rng.random()]).collect() };
            let (pred, gt) = (rgb(&mut rng), rgb(&mut rng));
            let mut valid: Vec<u8> = (0..r).map(|_| u8::from(rng.random::<f64>() > 0.3)).collect();
            valid[0] = 1;
            let masks: Vec<Vec<f64>> = (0..n).map(|_| (0..r).map(|_| f64::from(u8::from(rng.random::<bool>()))).collect()).collect();
            let mpred: Vec<Vec<f64>> = (0..n).map(|_| (0..r).map(|_| rng.random()).collect()).collect();
            let fpred: Vec<Vec<[f64; 3]>> = (0..n).map(|_| rgb(&mut rng)).collect();
            let per_sample: Vec<Vec<f64>> = (0..n).map(|_| (0..r * k).map(|_| rng.random()).collect()).collect();

            let (mut s, mut c) = (0.0, 0.0);
            for i in 0..r {
                for ch in 0..3 {
                    s += (pred[i][ch] - gt[i][ch]).powi(2);
                }
            }
            worst = worst.max(rel(loss_recon(&pred, &gt)?, s / (3 * r) as f64));

            s = 0.0;
            for i in 0..r {
                if valid[i] != 0 {
                    c += 3.0;
                    for ch in 0..3 {
                        s += (pred[i][ch] - gt[i][ch]).powi(2);
                    }
                }
            }
            worst = worst.max(rel(loss_nvcf(&pred, &gt, &valid)?, s / c));

            let (mut s, mut c) = (0.0, 0.0);
            for f in 0..n {
                for i in 0..r {
                    if valid[i] != 0 {
                        s += (masks[f][i] - mpred[f][i]).powi(2);
                        c += 1.0;
                    }
                }
            }
            worst = worst.max(rel(loss_nvm(&mpred, &masks, &valid)?, s / c));

            let (mut s, mut c) = (0.0, 0.0);
            for f in 0..n {
                for i in 0..r {
                    let w = masks[f][i] * f64::from(valid[i]);
                    c += w;
                    for ch in 0..3 {
                        s += w * (gt[i][ch] - fpred[f][i][ch]).powi(2);
                    }
                }
            }
            let v = loss_nvcn(&fpred, &gt, &masks, &valid)?.value;
            worst = worst.max(rel(v, if c > 0.0 { s / c } else { 0.0 }));

            let mut s = 0.0;
            for j in 0..r * k {
                s += ((0..n).map(|f| per_sample[f][j]).sum::<f64>() - 1.0).abs();
            }
            worst = worst.max(rel(loss_nvb(&per_sample)?, s / (r * k) as f64));

            let (mut s, mut c) = (0.0, 0.0);
            for f in 0..n {
                for i in 0..r {
                    let w = (1.0 - masks[f][i]) * f64::from(valid[i]);
                    if w > 0.0 {
                        c += 1.0;
                        s += w * (0..k).map(|j| per_sample[f][i * k + j].abs()).sum::<f64>();
                    }
                }
            }
            let v = loss_nva(&per_sample, &masks, &valid, k)?.value;
            worst = worst.max(rel(v, if c > 0.0 { s / c } else { 0.0 }));
        }
        Ok(())
    })();
    Check {
        name: "loss oracles",
        passed: result.is_ok() && worst < ORACLE_TOL,
        detail: match result {
            Ok(()) => format!("worst relative error {worst:.3e} over 200 instances"),
            Err(e) => e.to_string(),
        },
    }
}

pub fn check_single_field() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut g = random_grid(&mut rng, 1, 16, 8, false);
    g.beta.iter_mut().for_each(|b| *b = 1.0);
    let classical: Vec<[f64; 3]> = (0..g.n_rays)
        .map(|r| {
            let mut t = 1.0;
            let mut c = [0.0; 3];
            for k in 0..g.n_samples {
                let i = g.index(0, r, k);
                for ch in 0..3 {
                    c[ch] += t * g.alpha[i] * g.color[i][ch];
                }
                t *= 1.0 - g.alpha[i];
            }
            c.map(|v| v.clamp(0.0, 1.0))
        })
        .collect();
    let bitwise = composite_full(&g).map(|c| c.color == classical).unwrap_or(false);

    let (sigma, near, far, k) = (0.7, 1.0, 3.0, 256);
    let mut h = RaySampleGrid::zeros(1, 1, k);
    for s in 0..k {
        let d = (far - near) / k as f64;
        h.depths[s] = near + d * (s as f64 + 0.5);
        h.deltas[s] = d;
        h.alpha[s] = 1.0 - (-sigma * d).exp();
        h.beta[s] = 1.0;
        h.color[s] = [0.8, 0.5, 0.2];
    }
    let expect = 1.0 - (-sigma * (far - near)).exp();
    let got = composite_full(&h).map(|c| c.color[0][0] / 0.8).unwrap_or(f64::NAN);
    let err = (got - expect).abs() / expect;
    vec![
        Check {
            name: "single-field reduction",
            passed: bitwise,
            detail: format!("bitwise equal to the classical render: {bitwise}"),
        },
        Check {
            name: "homogeneous medium",
            passed: err < 0.01,
            detail: format!("relative error {err:.3e} at K={k}"),
        },
    ]
}

/// Tiny two-field scene for gradient checks: one sphere, 4x4 images,
/// width-8 softplus networks, 8 samples per ray.
pub struct ToyProblem {
    pub config: SceneConfig,
    pub model: SceneModel,
    pub batches: Vec<Batch>,
    pub weights: LossWeights,
    pub options: RenderOptions,
}

impl ToyProblem {
    pub fn new(seed: u64) -> Result<Self> {
        let mut config = SceneConfig::default();
        config.scene.width = 4;
        config.scene.height = 4;
        config.scene.focal = 4.0;
        config.objects[0].size = 0.9;
        config.objects[0].start = [0.0, 0.0, 0.6];
        config.objects[0].end = [0.0, 0.0, 0.6];
        config.field.depth = 2;
        config.field.width = 8;
        config.field.skip = None;
        config.field.color_width = 8;
        config.field.pos_levels = 2;
        config.field.dir_levels = 1;
        config.field.time_levels = 1;
        config.field.activation = Activation::Softplus;
        config.render.samples = 8;
        let scene = SyntheticScene::new(&config)?;
        let frame = scene.render_frame(&scene.camera(0)?, 0.3, Split::Train)?;
        let model = SceneModel::new(&config, 1, seed)?;
        let novel = perturb_camera(&frame.camera, 0.3, 3.0, seed)?;
        let options = RenderOptions {
            samples: 8,
            chunk_rays: 5,
            ..RenderOptions::default()
        };
        let batches = vec![
            full_batch(&frame, &frame.camera, None, &options, PassKind::Reference { mask_loss: true })?,
            full_batch(&frame, &novel, Some(&novel), &options, PassKind::Novel)?,
        ];
        let weights = LossWeights {
            recon: 1.0,
            nvm: 1.0,
            nvcn: 1.0,
            nvcf: 1.0,
            nvb: 1.0,
            nva: 1.0,
        };
        Ok(ToyProblem {
            config,
            model,
            batches,
            weights,
            options,
        })
    }

    pub fn loss_and_grad(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let mut model = self.model.clone();
        model.set_parameters(params)?;
        let mut grad = vec![0.0; params.len()];
        let mut passes = Vec::new();
        for b in &self.batches {
            let r = batch_loss_and_grad(&model, b, &self.weights, &self.options, 0)?;
            grad.iter_mut().zip(&r.grad).for_each(|(a, g)| *a += g);
            passes.push(r.losses);
        }
        Ok((total_loss(&passes, &self.weights).total, grad))
    }
}

/// Every pixel of `camera`, supervised by `frame` directly or, with `warp`,
/// by the frame warped into that camera.
fn full_batch(frame: &Frame, camera: &Camera, warp: Option<&Camera>, options: &RenderOptions, kind: PassKind) -> Result<Batch> {
    let rays = camera.generate_rays(None, options.near, options.far)?;
    let supervision = match warp {
        None => Supervision {
            rgb: frame.rgb.clone(),
            masks: frame.masks.iter().map(|m| m.iter().map(|&v| f64::from(v)).collect()).collect(),
            validity: vec![1; rays.len()],
        },
        Some(novel) => {
            let w = warp_frame(frame, novel, true)?;
            Supervision {
                rgb: w.rgb.expect("colors requested"),
                masks: w.masks.iter().map(|m| m.iter().map(|&v| f64::from(v)).collect()).collect(),
                validity: w.validity,
            }
        }
    };
    Ok(Batch {
        rays,
        time: frame.time,
        supervision,
        kind,
    })
}

pub fn check_gradient(hooks: &VerifyHooks) -> Check {
    let result = (|| -> Result<(f64, usize, bool)> {
        let toy = ToyProblem::new(5)?;
        let params = toy.model.parameters().values;
        let objective = FnObjective {
            value: |p: &[f64]| toy.loss_and_grad(p).map(|r| r.0).unwrap_or(f64::NAN),
            gradient: |p: &[f64]| {
                let mut g = toy.loss_and_grad(p).map(|r| r.1).unwrap_or_else(|_| vec![f64::NAN; p.len()]);
                if let Some(i) = hooks.corrupt_gradient {
                    g[i] += 1.0;
                }
                g
            },
        };
        let probes = if hooks.corrupt_gradient.is_some() { params.len() } else { 100 };
        let report = grad_check(&objective, &params, probes, 1e-4, 1e-3, 17)?;
        let worst = report.worst_probe().map_or(0, |p| p.index);
        Ok((report.worst, worst, report.passed))
    })();
    match result {
        Ok((worst, index, passed)) => Check {
            name: "end-to-end gradient",
            passed,
            detail: format!("worst relative error {worst:.3e} at parameter {index}"),
        },
        Err(e) => Check {
            name: "end-to-end gradient",
            passed: false,
            detail: e.to_string(),
        },
    }
}

/// Brute-force warp: for every destination pixel scan all source pixels
/// and keep the nearest one landing in it.
pub fn oracle_warp_mask(frame: &Frame, object: usize, novel: &Camera) -> (Vec<u8>, Vec<u8>) {
    let (w, h) = (frame.camera.width, frame.camera.height);
    let mut landing: Vec<Option<(usize, f64)>> = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let z = f64::from(frame.depth[y * w + x]);
            if !(z.is_finite() && z > 0.0) {
                landing.push(None);
                continue;
            }
            let p = frame.camera.unproject(x as f64 + 0.5, y as f64 + 0.5, z);
            landing.push(novel.project(&p).ok().and_then(|(u, v, d)| {
                (u >= 0.0 && v >= 0.0 && u < novel.width as f64 && v < novel.height as f64)
                    .then(|| (v.floor() as usize * novel.width + u.floor() as usize, d))
            }));
        }
    }
    let n = novel.pixel_count();
    let mut mask = vec![0u8; n];
    let mut valid = vec![0u8; n];
    for dst in 0..n {
        let mut best: Option<(f64, usize)> = None;
        for (src, l) in landing.iter().enumerate() {
            if let Some((p, d)) = l {
                if *p == dst && best.is_none_or(|(bd, _)| *d < bd) {
                    best = Some((*d, src));
                }
            }
        }
        if let Some((_, src)) = best {
            valid[dst] = 1;
            mask[dst] = frame.masks[object][src];
        }
    }
    (mask, valid)
}

fn iou(a: &[u8], b: &[u8]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x != 0 && **y != 0).count();
    let union = a.iter().zip(b).filter(|(x, y)| **x != 0 || **y != 0).count();
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn check_warp(config: &SceneConfig) -> Check {
    let result = (|| -> Result<f64> {
        let mut cfg = config.clone();
        cfg.scene.width = cfg.scene.width.min(32);
        cfg.scene.height = cfg.scene.height.min(32);
        cfg.scene.focal = config.scene.focal * cfg.scene.width as f64 / config.scene.width as f64;
        let scene = SyntheticScene::new(&cfg)?;
        let mut worst = 1.0f64;
        for i in 0..cfg.scene.frames.min(4) {
            let frame = scene.render_frame(&scene.camera(i)?, scene.frame_time(i), Split::Train)?;
            let novel = perturb_camera(&frame.camera, 0.3, 3.0, i as u64)?;
            let w = warp_frame(&frame, &novel, false)?;
            for o in 0..frame.masks.len() {
                let (m, v) = oracle_warp_mask(&frame, o, &novel);
                worst = worst.min(iou(&w.masks[o], &m)).min(iou(&w.validity, &v));
            }
        }
        Ok(worst)
    })();
    match result {
        Ok(worst) => Check {
            name: "warp oracle",
            passed: worst >= 0.98,
            detail: format!("worst IoU {worst:.4}"),
        },
        Err(e) => Check {
            name: "warp oracle",
            passed: false,
            detail: e.to_string(),
        },
    }
}

pub fn check_mask_budget() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let mut ok = true;
    for _ in 0..100 {
        let n = rng.random_range(1..=3);
        let g = random_grid(&mut rng, n, 8, 8, true);
        let Ok(c) = composite_full(&g) else {
            ok = false;
            break;
        };
        for r in 0..g.n_rays {
            let k = g.n_samples;
            let opacity: f64 = (0..k).map(|s| c.transmittance[r * k + s] * c.alpha_full[r * k + s]).sum();
            let masks: f64 = (0..n).map(|f| render_mask(&g, f).map_or(f64::NAN, |m| m[r])).sum();
            let mono = (1..k).all(|s| c.transmittance[r * k + s] <= c.transmittance[r * k + s - 1]);
            ok &= masks <= opacity + 1e-12 && opacity <= 1.0 + 1e-12 && mono && c.transmittance[r * k] == 1.0;
        }
    }
    Check {
        name: "transmittance and mask budget",
        passed: ok,
        detail: "T non-increasing from 1; sum of masks <= total opacity <= 1".into(),
    }
}

/// Runs every check. Never fails early; failures are reported by name.
pub fn run_checks(config: &SceneConfig, hooks: &VerifyHooks) -> VerifyReport {
    let mut checks = check_reductions(hooks);
    checks.push(check_losses());
    checks.extend(check_single_field());
    checks.push(check_mask_budget());
    checks.push(check_gradient(hooks));
    checks.push(check_warp(config));
    VerifyReport { checks }
}
