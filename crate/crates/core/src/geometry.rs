//! Pinhole cameras, rigid transforms, ray casting and depth-based warping.
//!
//! Camera convention: right-handed camera frame with +x to the right, +y up
//! and the camera looking down -z. Image coordinates have their origin at the
//! top-left corner with `u` growing to the right and `v` growing downwards, so
//! a camera-frame point `(x, y, z)` with `z < 0` lands at
//! `u = cx + fx * x / -z`, `v = cy - fy * y / -z`. Pixel `(i, j)` is column
//! `i`, row `j`, and its center sits at `(i + 0.5, j + 0.5)`.
//!
//! Depth maps store depth along the optical axis (`-z` in the camera frame),
//! not distance along the ray.

use nalgebra::{Matrix3, Rotation3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::data::Frame;
use crate::error::{NovaError, Result};

pub type Vec3 = Vector3<f64>;

const ORTHONORMAL_TOL: f64 = 1e-6;

/// Rigid transform `x ↦ R x + t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Se3Repr", try_from = "Se3Repr")]
pub struct Se3 {
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

/// Row-major on-disk form of [`Se3`].
#[derive(Clone, Debug, Serialize, Deserialize)]
struct Se3Repr {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

impl From<Se3> for Se3Repr {
    fn from(t: Se3) -> Self {
        let r = &t.rotation;
        Se3Repr {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.translation.x, t.translation.y, t.translation.z],
        }
    }
}

impl TryFrom<Se3Repr> for Se3 {
    type Error = NovaError;

    fn try_from(r: Se3Repr) -> Result<Self> {
        let rotation = Matrix3::from_fn(|i, j| r.rotation[i][j]);
        Se3::new(rotation, Vec3::from(r.translation))
    }
}

impl Default for Se3 {
    fn default() -> Self {
        Se3::identity()
    }
}

impl Se3 {
    pub fn identity() -> Self {
        Se3 {
            rotation: Matrix3::identity(),
            translation: Vec3::zeros(),
        }
    }

    /// Validating constructor: the rotation must be orthonormal with det +1.
    pub fn new(rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let t = Se3 {
            rotation,
            translation,
        };
        t.validate()?;
        Ok(t)
    }

    /// Validating constructor from a row-major rotation.
    pub fn from_row_major(rotation: [f64; 9], translation: [f64; 3]) -> Result<Self> {
        Se3::new(Matrix3::from_row_slice(&rotation), Vec3::from(translation))
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Se3 {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    /// Rotation of `degrees` about `axis` followed by `translation`.
    /// A zero axis is only accepted together with a zero angle.
    pub fn from_axis_angle_deg(axis: Vec3, degrees: f64, translation: Vec3) -> Result<Self> {
        if !degrees.is_finite() || axis.iter().any(|v| !v.is_finite()) {
            return Err(NovaError::InvalidInput("non-finite axis-angle".into()));
        }
        let rotation = if degrees == 0.0 {
            Matrix3::identity()
        } else {
            let norm = axis.norm();
            if norm < 1e-12 {
                return Err(NovaError::InvalidInput(
                    "rotation axis must be nonzero for a nonzero angle".into(),
                ));
            }
            Rotation3::from_axis_angle(&Unit::new_normalize(axis), degrees.to_radians())
                .into_inner()
        };
        Se3::new(rotation, translation)
    }

    /// Camera-to-world pose of a camera at `eye` looking at `target`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Result<Self> {
        let back = eye - target;
        if back.norm() < 1e-12 {
            return Err(NovaError::InvalidInput("look_at eye equals target".into()));
        }
        let z = back.normalize();
        let x = up.cross(&z);
        if x.norm() < 1e-12 {
            return Err(NovaError::InvalidInput("look_at up is parallel to view".into()));
        }
        let x = x.normalize();
        let y = z.cross(&x);
        Se3::new(Matrix3::from_columns(&[x, y, z]), eye)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rotation.iter().chain(self.translation.iter()).any(|v| !v.is_finite()) {
            return Err(NovaError::InvalidInput("SE3 has non-finite entries".into()));
        }
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        if err >= ORTHONORMAL_TOL {
            return Err(NovaError::InvalidInput(format!(
                "SE3 rotation is not orthonormal (|R^T R - I| = {err:e})"
            )));
        }
        if self.rotation.determinant() <= 0.0 {
            return Err(NovaError::InvalidInput("SE3 rotation has determinant <= 0".into()));
        }
        Ok(())
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Se3) -> Se3 {
        Se3 {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Se3 {
        let rt = self.rotation.transpose();
        Se3 {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn transform_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// Rotation angle in degrees.
    pub fn rotation_angle_deg(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos().to_degrees()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Camera-to-world transform.
    pub pose: Se3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub near: f64,
    pub far: f64,
}

impl Ray {
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize, pose: Se3) -> Result<Self> {
        let cam = Camera {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            pose,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(NovaError::InvalidInput(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx.is_finite() && self.cy.is_finite()) {
            return Err(NovaError::InvalidInput("principal point is not finite".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(NovaError::InvalidInput(format!(
                "image size must be at least 1x1 (got {}x{})",
                self.width, self.height
            )));
        }
        self.pose.validate()
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn center(&self) -> Vec3 {
        self.pose.translation
    }

    pub fn with_pose(&self, pose: Se3) -> Camera {
        Camera { pose, ..*self }
    }

    /// Unnormalized camera-frame direction through continuous pixel `(u, v)`,
    /// scaled so that its depth component is 1.
    fn camera_direction(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, -(v - self.cy) / self.fy, -1.0)
    }

    /// Rays through pixel centers, row-major over the whole image when
    /// `pixels` is `None`. `near`/`far` are attached verbatim.
    pub fn generate_rays(&self, pixels: Option<&[(usize, usize)]>, near: f64, far: f64) -> Result<Vec<Ray>> {
        self.validate()?;
        if !(near > 0.0 && far > near) {
            return Err(NovaError::InvalidInput(format!(
                "ray bounds must satisfy 0 < near < far (near={near}, far={far})"
            )));
        }
        let make = |x: usize, y: usize| {
            let d = self.camera_direction(x as f64 + 0.5, y as f64 + 0.5);
            Ray {
                origin: self.pose.translation,
                direction: self.pose.transform_vector(&d).normalize(),
                near,
                far,
            }
        };
        match pixels {
            None => Ok((0..self.height)
                .flat_map(|y| (0..self.width).map(move |x| (x, y)))
                .map(|(x, y)| make(x, y))
                .collect()),
            Some(list) => list
                .iter()
                .map(|&(x, y)| {
                    if x >= self.width || y >= self.height {
                        Err(NovaError::PixelOutOfBounds {
                            x,
                            y,
                            width: self.width,
                            height: self.height,
                        })
                    } else {
                        Ok(make(x, y))
                    }
                })
                .collect(),
        }
    }

    /// Continuous pixel coordinates and optical-axis depth of a world point.
    pub fn project(&self, point: &Vec3) -> Result<(f64, f64, f64)> {
        let p = self.pose.inverse().transform_point(point);
        let depth = -p.z;
        if depth <= 0.0 || !depth.is_finite() {
            return Err(NovaError::BehindCamera { depth });
        }
        Ok((
            self.cx + self.fx * p.x / depth,
            self.cy - self.fy * p.y / depth,
            depth,
        ))
    }

    /// World point seen at continuous pixel `(u, v)` with optical-axis depth `depth`.
    pub fn unproject(&self, u: f64, v: f64, depth: f64) -> Vec3 {
        self.pose.transform_point(&(self.camera_direction(u, v) * depth))
    }
}

/// Random rigid offset of a camera: a translation drawn uniformly from the
/// ball of radius `max_translation` and a rotation about the camera center by
/// an angle uniform in `[0, max_rotation_deg]` about a uniformly drawn axis.
/// Intrinsics are untouched.
pub fn perturb_camera(camera: &Camera, max_translation: f64, max_rotation_deg: f64, seed: u64) -> Result<Camera> {
    if !(max_translation >= 0.0 && max_translation.is_finite()) {
        return Err(NovaError::InvalidInput(format!(
            "max_translation must be >= 0 (got {max_translation})"
        )));
    }
    if !(0.0..=45.0).contains(&max_rotation_deg) {
        return Err(NovaError::InvalidInput(format!(
            "max_rotation_deg must lie in [0, 45] (got {max_rotation_deg})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir: [f64; 3] = UnitSphere.sample(&mut rng);
    let radius = max_translation * rng.random::<f64>().cbrt();
    let axis: [f64; 3] = UnitSphere.sample(&mut rng);
    let angle = max_rotation_deg * rng.random::<f64>();

    let delta_t = Vec3::from(dir) * radius;
    let delta_r = if angle == 0.0 {
        Matrix3::identity()
    } else {
        Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::from(axis)), angle.to_radians()).into_inner()
    };
    let pose = Se3 {
        rotation: camera.pose.rotation * delta_r,
        translation: camera.pose.translation + delta_t,
    };
    Ok(camera.with_pose(pose))
}

/// Forward-warped supervision for a single object at a novel camera.
#[derive(Clone, Debug, PartialEq)]
pub struct WarpResult {
    pub width: usize,
    pub height: usize,
    /// 1 where the nearest splat came from the selected object.
    pub mask: Vec<u8>,
    /// 1 where any splat landed.
    pub validity: Vec<u8>,
    pub rgb: Option<Vec<[f64; 3]>>,
}

/// Forward-warped supervision for every object of a frame at once.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameWarp {
    pub width: usize,
    pub height: usize,
    /// One binary mask per object.
    pub masks: Vec<Vec<u8>>,
    pub validity: Vec<u8>,
    pub rgb: Option<Vec<[f64; 3]>>,
    /// Optical-axis depth at the novel camera; `f64::INFINITY` at holes.
    pub depth: Vec<f64>,
}

/// Splats every source pixel with a usable depth into `novel`, resolving
/// collisions with a z-buffer (nearest wins, ties keep the earlier pixel in
/// row-major order). Pixels whose depth is missing are skipped unless they
/// are covered by an object mask, which is an error.
pub fn warp_frame(source: &Frame, novel: &Camera, include_rgb: bool) -> Result<FrameWarp> {
    novel.validate()?;
    let (w, h) = (source.camera.width, source.camera.height);
    for (object, mask) in source.masks.iter().enumerate() {
        let count = mask
            .iter()
            .zip(&source.depth)
            .filter(|(&m, &d)| m != 0 && !(d.is_finite() && d > 0.0))
            .count();
        if count > 0 {
            return Err(NovaError::MissingDepth { object, count });
        }
    }

    let (nw, nh) = (novel.width, novel.height);
    let mut zbuf = vec![f64::INFINITY; nw * nh];
    let mut winner = vec![usize::MAX; nw * nh];
    let to_novel = novel.pose.inverse();
    for y in 0..h {
        for x in 0..w {
            let src = y * w + x;
            let z = source.depth[src] as f64;
            if !(z.is_finite() && z > 0.0) {
                continue;
            }
            let world = source.camera.unproject(x as f64 + 0.5, y as f64 + 0.5, z);
            let p = to_novel.transform_point(&world);
            let d = -p.z;
            if d <= 0.0 {
                continue;
            }
            let u = novel.cx + novel.fx * p.x / d;
            let v = novel.cy - novel.fy * p.y / d;
            if !(u >= 0.0 && v >= 0.0 && u < nw as f64 && v < nh as f64) {
                continue;
            }
            let dst = (v.floor() as usize) * nw + u.floor() as usize;
            if d < zbuf[dst] {
                zbuf[dst] = d;
                winner[dst] = src;
            }
        }
    }

    let validity: Vec<u8> = winner.iter().map(|&s| u8::from(s != usize::MAX)).collect();
    let masks = source
        .masks
        .iter()
        .map(|m| {
            winner
                .iter()
                .map(|&s| if s == usize::MAX { 0 } else { u8::from(m[s] != 0) })
                .collect()
        })
        .collect();
    let rgb = include_rgb.then(|| {
        winner
            .iter()
            .map(|&s| if s == usize::MAX { [0.0; 3] } else { source.rgb[s] })
            .collect()
    });
    Ok(FrameWarp {
        width: nw,
        height: nh,
        masks,
        validity,
        rgb,
        depth: zbuf,
    })
}

/// Ground-truth mask (and optionally RGB) of one object at a novel camera.
pub fn warp_to_novel_view(
    source: &Frame,
    source_object_index: usize,
    novel_camera: &Camera,
    include_rgb: bool,
) -> Result<WarpResult> {
    if source_object_index >= source.masks.len() {
        return Err(NovaError::InvalidInput(format!(
            "object index {source_object_index} out of range ({} objects)",
            source.masks.len()
        )));
    }
    let mut warp = warp_frame(source, novel_camera, include_rgb)?;
    Ok(WarpResult {
        width: warp.width,
        height: warp.height,
        mask: warp.masks.swap_remove(source_object_index),
        validity: warp.validity,
        rgb: warp.rgb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn unit_camera(pose: Se3) -> Camera {
        Camera::new(1.0, 1.0, 0.5, 0.5, 1, 1, pose).unwrap()
    }

    fn random_pose(rng: &mut ChaCha8Rng) -> Se3 {
        let axis: [f64; 3] = UnitSphere.sample(rng);
        let deg = rng.random_range(-180.0..180.0);
        let t = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        Se3::from_axis_angle_deg(Vec3::from(axis), deg, t).unwrap()
    }

    #[test]
    fn principal_ray_is_optical_axis() {
        let rays = unit_camera(Se3::identity()).generate_rays(Some(&[(0, 0)]), 0.1, 1.0).unwrap();
        assert_eq!(rays[0].origin, Vec3::zeros());
        assert_abs_diff_eq!(rays[0].direction, Vec3::new(0.0, 0.0, -1.0), epsilon = 1e-15);
    }

    #[test]
    fn translation_moves_origin_only() {
        let pose = Se3::from_translation(Vec3::new(1.0, 2.0, 3.0));
        let rays = unit_camera(pose).generate_rays(Some(&[(0, 0)]), 0.1, 1.0).unwrap();
        assert_eq!(rays[0].origin, Vec3::new(1.0, 2.0, 3.0));
        assert_abs_diff_eq!(rays[0].direction, Vec3::new(0.0, 0.0, -1.0), epsilon = 1e-15);
    }

    #[test]
    fn corner_pixel_direction_matches_inverse_intrinsics() {
        let cam = Camera::new(100.0, 100.0, 50.0, 50.0, 100, 100, Se3::identity()).unwrap();
        let ray = cam.generate_rays(Some(&[(0, 0)]), 0.1, 1.0).unwrap()[0];
        // K^-1 [u v 1]^T followed by the y/z flip of the -z looking convention.
        let k = Matrix3::new(100.0, 0.0, 50.0, 0.0, 100.0, 50.0, 0.0, 0.0, 1.0);
        let pix = k.try_inverse().unwrap() * Vec3::new(0.5, 0.5, 1.0);
        let flip = Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0));
        let expected = (flip * pix).normalize();
        assert_abs_diff_eq!(ray.direction, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected.x, -49.5 / (49.5f64 * 49.5 * 2.0 + 10000.0).sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn out_of_bounds_pixel_is_named() {
        let cam = Camera::new(10.0, 10.0, 2.0, 2.0, 4, 4, Se3::identity()).unwrap();
        let err = cam.generate_rays(Some(&[(1, 1), (4, 0)]), 0.1, 1.0).unwrap_err();
        assert!(err.to_string().contains("(4, 0)"), "{err}");
    }

    #[test]
    fn full_image_yields_one_unit_ray_per_pixel() {
        let cam = Camera::new(7.0, 9.0, 3.0, 2.0, 5, 3, Se3::identity()).unwrap();
        let rays = cam.generate_rays(None, 0.5, 2.0).unwrap();
        assert_eq!(rays.len(), 15);
        for r in rays {
            assert!((r.direction.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let pose = Se3::look_at(Vec3::new(1.0, 2.0, 3.0), Vec3::zeros(), Vec3::y()).unwrap();
        let cam = Camera::new(80.0, 60.0, 31.0, 17.0, 64, 48, pose).unwrap();
        let axis = pose.transform_vector(&Vec3::new(0.0, 0.0, -1.0));
        let (u, v, d) = cam.project(&(pose.translation + axis * 2.5)).unwrap();
        assert_abs_diff_eq!(u, 31.0, epsilon = 1e-9);
        assert_abs_diff_eq!(v, 17.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn behind_camera_is_rejected() {
        let cam = unit_camera(Se3::identity());
        assert!(matches!(cam.project(&Vec3::new(0.0, 0.0, 1.0)), Err(NovaError::BehindCamera { .. })));
        assert!(matches!(cam.project(&Vec3::new(1.0, 0.0, 0.0)), Err(NovaError::BehindCamera { .. })));
    }

    #[test]
    fn projection_matches_matrix_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let pose = random_pose(&mut rng);
            let cam = Camera::new(
                rng.random_range(20.0..200.0),
                rng.random_range(20.0..200.0),
                rng.random_range(0.0..64.0),
                rng.random_range(0.0..64.0),
                64,
                64,
                pose,
            )
            .unwrap();
            // Point in front of the camera.
            let local = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), -rng.random_range(0.5..5.0));
            let world = pose.transform_point(&local);

            // P = K * F * [R^T | -R^T t], F flips y and z.
            let k = Matrix3::new(cam.fx, 0.0, cam.cx, 0.0, cam.fy, cam.cy, 0.0, 0.0, 1.0);
            let f = Matrix3::from_diagonal(&Vec3::new(1.0, -1.0, -1.0));
            let rt = pose.rotation.transpose();
            let m = k * f;
            let h = m * (rt * world - rt * pose.translation);
            let (u, v, d) = cam.project(&world).unwrap();
            assert_abs_diff_eq!(u, h.x / h.z, epsilon = 1e-9);
            assert_abs_diff_eq!(v, h.y / h.z, epsilon = 1e-9);
            assert_abs_diff_eq!(d, h.z, epsilon = 1e-9);
        }
    }

    #[test]
    fn ray_projection_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pose = random_pose(&mut rng);
        let cam = Camera::new(50.0, 45.0, 15.5, 12.0, 32, 24, pose).unwrap();
        let rays = cam.generate_rays(None, 0.5, 4.0).unwrap();
        for (idx, ray) in rays.iter().enumerate() {
            let (i, j) = (idx % cam.width, idx / cam.width);
            for step in 0..5 {
                let t = ray.near + (ray.far - ray.near) * step as f64 / 4.0;
                let (u, v, d) = cam.project(&ray.at(t)).unwrap();
                assert!((u - (i as f64 + 0.5)).abs() < 1e-6);
                assert!((v - (j as f64 + 0.5)).abs() < 1e-6);
                let axis = pose.transform_vector(&Vec3::new(0.0, 0.0, -1.0));
                assert!((d - t * ray.direction.dot(&axis)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn se3_group_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let (a, b, c) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
            let l = a.compose(&b).compose(&c);
            let r = a.compose(&b.compose(&c));
            assert!((l.rotation - r.rotation).amax() < 1e-9);
            assert!((l.translation - r.translation).amax() < 1e-9);
            let id = a.compose(&a.inverse());
            assert!((id.rotation - Matrix3::identity()).amax() < 1e-9);
            assert!(id.translation.amax() < 1e-9);
        }
    }

    #[test]
    fn se3_rejects_non_rotation() {
        let bad = Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0));
        assert!(Se3::new(bad, Vec3::zeros()).is_err());
        assert!(Se3::new(Matrix3::identity() * 1.1, Vec3::zeros()).is_err());
    }

    #[test]
    fn zero_perturbation_is_identity() {
        let cam = Camera::new(10.0, 10.0, 2.0, 2.0, 4, 4, Se3::from_translation(Vec3::new(0.0, 0.0, 3.0))).unwrap();
        assert_eq!(perturb_camera(&cam, 0.0, 0.0, 17).unwrap(), cam);
    }

    #[test]
    fn perturbation_is_deterministic_and_rejects_bad_bounds() {
        let cam = Camera::new(10.0, 10.0, 2.0, 2.0, 4, 4, Se3::identity()).unwrap();
        let a = perturb_camera(&cam, 0.3, 10.0, 99).unwrap();
        let b = perturb_camera(&cam, 0.3, 10.0, 99).unwrap();
        assert_eq!(a, b);
        assert!(perturb_camera(&cam, -0.1, 0.0, 0).is_err());
        assert!(perturb_camera(&cam, 0.1, 46.0, 0).is_err());
    }

    #[test]
    fn perturbation_statistics_match_uniform_ball() {
        let pose = Se3::look_at(Vec3::new(0.0, 0.0, 4.0), Vec3::zeros(), Vec3::y()).unwrap();
        let cam = Camera::new(10.0, 10.0, 2.0, 2.0, 4, 4, pose).unwrap();
        let (max_t, max_deg) = (0.2, 8.0);
        let n = 10_000;
        let mut sum = 0.0;
        for seed in 0..n {
            let p = perturb_camera(&cam, max_t, max_deg, seed).unwrap();
            let dt = (p.pose.translation - cam.pose.translation).norm();
            assert!(dt <= max_t + 1e-12);
            let rel = cam.pose.inverse().compose(&p.pose);
            assert!(rel.rotation_angle_deg() <= max_deg + 1e-9);
            assert_eq!((p.fx, p.fy, p.cx, p.cy), (cam.fx, cam.fy, cam.cx, cam.cy));
            sum += dt;
        }
        // E|x| for x uniform in a ball of radius r is 3r/4.
        let mean = sum / n as f64;
        let analytic = 0.75 * max_t;
        assert!((mean - analytic).abs() / analytic < 0.05, "mean {mean} vs {analytic}");
    }
}
