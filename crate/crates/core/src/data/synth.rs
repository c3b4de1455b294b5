//! Analytically ray-traced desk scene: a textured open box with moving
//! solids. Depth, masks and colors come from exact ray intersections.

use log::warn;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ObjectConfig, SceneConfig, Shape};
use super::dataset::{Frame, Split};

use crate::error::Result;
use crate::geometry::{Camera, Ray, Se3, Vec3};

/// Nearest intersection along a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hit {
    /// Distance along the unit ray direction.
    pub t: f64,
    /// Index of the object hit, `None` for the background.
    pub object: Option<usize>,
    pub color: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    config: SceneConfig,
    /// Texture phase offsets per wall, drawn from the seed.
    phases: [[f64; 2]; 5],
}

const LIGHT: [f64; 3] = [0.4, 0.7, 0.6];

impl SyntheticScene {
    /// Scene seeded by `config.seed`.
    pub fn new(config: &SceneConfig) -> Result<Self> {
        Self::with_seed(config, config.seed)
    }

    pub fn with_seed(config: &SceneConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut phases = [[0.0; 2]; 5];
        for p in phases.iter_mut().flatten() {
            *p = rng.random_range(0.0..std::f64::consts::TAU);
        }
        Ok(SyntheticScene {
            config: config.clone(),
            phases,
        })
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn object_count(&self) -> usize {
        self.config.objects.len()
    }

    pub fn frame_time(&self, i: usize) -> f64 {
        let n = self.config.scene.frames;
        if n <= 1 {
            0.0
        } else {
            i as f64 / (n - 1) as f64
        }
    }

    /// Camera of training frame `i`.
    pub fn camera(&self, i: usize) -> Result<Camera> {
        let c = &self.config.camera;
        let s = &self.config.scene;
        let t = self.frame_time(i);
        let eye = Vec3::from(c.eye_start).lerp(&Vec3::from(c.eye_end), t);
        let pose = Se3::look_at(eye, Vec3::from(c.target), Vec3::from(c.up))?;
        Camera::new(
            s.focal,
            s.focal,
            s.width as f64 / 2.0,
            s.height as f64 / 2.0,
            s.width,
            s.height,
            pose,
        )
    }

    pub fn object_center(&self, object: usize, time: f64) -> Vec3 {
        let o = &self.config.objects[object];
        let base = Vec3::from(o.start).lerp(&Vec3::from(o.end), time);
        base + Vec3::y() * (o.arc_height * (std::f64::consts::PI * time).sin())
    }

    fn background_hit(&self, ray: &Ray) -> Option<(f64, [f64; 3])> {
        let b = &self.config.background;
        let (o, d) = (ray.origin, ray.direction);
        let mut best: Option<(f64, usize)> = None;
        let mut consider = |t: f64, plane: usize| {
            if t > 1e-9 && best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, plane));
            }
        };
        if d.z < 0.0 {
            consider((b.back_z - o.z) / d.z, 0);
        }
        if d.x < 0.0 {
            consider((-b.half_width - o.x) / d.x, 1);
        }
        if d.x > 0.0 {
            consider((b.half_width - o.x) / d.x, 2);
        }
        if d.y < 0.0 {
            consider((-b.half_height - o.y) / d.y, 3);
        }
        if d.y > 0.0 {
            consider((b.half_height - o.y) / d.y, 4);
        }
        let (t, plane) = best?;
        let p = ray.at(t);
        Some((t, wall_texture(plane, &p, self.phases[plane])))
    }

    /// Intersection of `ray` with object `index` placed at its position at
    /// `time` and then moved by `transform` (applied about the world origin).
    pub fn object_hit(&self, ray: &Ray, index: usize, time: f64, transform: &Se3) -> Option<(f64, [f64; 3])> {
        let obj = &self.config.objects[index];
        let inv = transform.inverse();
        let local = Ray {
            origin: inv.transform_point(&ray.origin),
            direction: inv.transform_vector(&ray.direction),
            ..*ray
        };
        let center = self.object_center(index, time);
        let (t, normal) = match obj.shape {
            Shape::Sphere => sphere_hit(&local, &center, obj.size)?,
            Shape::Box => box_hit(&local, &center, obj.size)?,
        };
        let n = transform.transform_vector(&normal);
        Some((t, shade(obj, &n)))
    }

    /// Nearest hit over the background and every object in its default pose.
    pub fn trace(&self, ray: &Ray, time: f64) -> Option<Hit> {
        let mut hit = self
            .background_hit(ray)
            .map(|(t, color)| Hit { t, object: None, color });
        for i in 0..self.object_count() {
            if let Some((t, color)) = self.object_hit(ray, i, time, &Se3::identity()) {
                if hit.is_none_or(|h| t < h.t) {
                    hit = Some(Hit { t, object: Some(i), color });
                }
            }
        }
        hit
    }

    /// Ground-truth frame seen by `camera` at `time`. Colors are quantized to
    /// 8 bits so a saved dataset reloads bit-exactly.
    pub fn render_frame(&self, camera: &Camera, time: f64, split: Split) -> Result<Frame> {
        let rays = camera.generate_rays(None, 1e-6, f64::MAX)?;
        let axis = camera.pose.transform_vector(&Vec3::new(0.0, 0.0, -1.0));
        let n = rays.len();
        let mut rgb = vec![[0.0; 3]; n];
        let mut depth = vec![f32::INFINITY; n];
        let mut masks = vec![vec![0u8; n]; self.object_count()];
        for (i, ray) in rays.iter().enumerate() {
            if let Some(hit) = self.trace(ray, time) {
                rgb[i] = hit.color.map(|c| (c.clamp(0.0, 1.0) * 255.0).round() / 255.0);
                depth[i] = (hit.t * ray.direction.dot(&axis)) as f32;
                if let Some(o) = hit.object {
                    masks[o][i] = 1;
                }
            }
        }
        Ok(Frame {
            rgb,
            masks,
            depth,
            camera: *camera,
            time,
            split,
        })
    }

    /// Binary support of object `index` at `time` moved by `transform`,
    /// ignoring occlusion by anything else.
    pub fn object_mask(&self, camera: &Camera, index: usize, time: f64, transform: &Se3) -> Result<Vec<u8>> {
        let rays = camera.generate_rays(None, 1e-6, f64::MAX)?;
        Ok(rays
            .iter()
            .map(|r| u8::from(self.object_hit(r, index, time, transform).is_some()))
            .collect())
    }

    /// Training frames followed, when enabled, by held-out frames that view
    /// every later time from the first camera.
    pub fn frames(&self) -> Result<Vec<Frame>> {
        let count = self.config.scene.frames;
        let cam0 = self.camera(0)?;
        let mut jobs: Vec<(Camera, f64, Split)> = Vec::with_capacity(2 * count);
        for i in 0..count {
            jobs.push((self.camera(i)?, self.frame_time(i), Split::Train));
        }
        if self.config.scene.held_out {
            jobs.extend((1..count).map(|i| (cam0, self.frame_time(i), Split::Eval)));
        }
        let frames = jobs
            .par_iter()
            .map(|(cam, t, split)| self.render_frame(cam, *t, *split))
            .collect::<Result<Vec<_>>>()?;
        for o in 0..self.object_count() {
            if frames.iter().all(|f| f.masks[o].iter().all(|&m| m == 0)) {
                warn!("object {o} is outside the camera frustum in every frame");
            }
        }
        Ok(frames)
    }
}

/// Frames of the analytic scene; `seed` picks the wall texture phases.
pub fn generate_synthetic_scene(config: &SceneConfig, seed: u64) -> Result<Vec<Frame>> {
    SyntheticScene::with_seed(config, seed)?.frames()
}

fn sphere_hit(ray: &Ray, center: &Vec3, radius: f64) -> Option<(f64, Vec3)> {
    let oc = ray.origin - center;
    let b = oc.dot(&ray.direction);
    let c = oc.norm_squared() - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let sq = disc.sqrt();
    let t = if -b - sq > 1e-9 { -b - sq } else { -b + sq };
    if t <= 1e-9 {
        return None;
    }
    Some((t, (ray.at(t) - center) / radius))
}

fn box_hit(ray: &Ray, center: &Vec3, half: f64) -> Option<(f64, Vec3)> {
    let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut axis = 0;
    for a in 0..3 {
        let (o, d) = (ray.origin[a] - center[a], ray.direction[a]);
        if d.abs() < 1e-15 {
            if o.abs() > half {
                return None;
            }
            continue;
        }
        let (t0, t1) = ((-half - o) / d, (half - o) / d);
        let (lo, hi) = if t0 < t1 { (t0, t1) } else { (t1, t0) };
        if lo > t_near {
            t_near = lo;
            axis = a;
        }
        t_far = t_far.min(hi);
    }
    if t_near > t_far || t_near <= 1e-9 {
        return None;
    }
    let mut n = Vec3::zeros();
    n[axis] = -ray.direction[axis].signum();
    Some((t_near, n))
}

fn shade(obj: &ObjectConfig, normal: &Vec3) -> [f64; 3] {
    let l = Vec3::from(LIGHT).normalize();
    let k = 0.55 + 0.45 * normal.dot(&l).max(0.0);
    obj.color.map(|c| c * k)
}

/// Smooth per-wall color patterns.
fn wall_texture(plane: usize, p: &Vec3, phase: [f64; 2]) -> [f64; 3] {
    let (u, v, base) = match plane {
        0 => (p.x, p.y, [0.35, 0.55, 0.75]),
        1 | 2 => (p.z, p.y, [0.45, 0.7, 0.45]),
        3 => (p.x, p.z, [0.6, 0.55, 0.45]),
        _ => (p.x, p.z, [0.8, 0.8, 0.75]),
    };
    let wave = 0.12 * (1.3 * u + phase[0]).sin() * (1.1 * v + phase[1]).cos();
    let ramp = 0.06 * (u + v);
    [
        (base[0] + wave + ramp).clamp(0.0, 1.0),
        (base[1] - 0.7 * wave + 0.5 * ramp).clamp(0.0, 1.0),
        (base[2] + 0.5 * wave - ramp).clamp(0.0, 1.0),
    ]
}
