use nova_core::data::{generate_synthetic_scene, ObjectConfig, SceneConfig, Split, SyntheticScene};
use nova_core::geometry::{Se3, Vec3};

#[test]
fn mask_centroid_follows_projected_trajectory() {
    let cfg = SceneConfig::default();
    let scene = SyntheticScene::new(&cfg).unwrap();
    for i in 0..cfg.scene.frames {
        let t = scene.frame_time(i);
        let cam = scene.camera(i).unwrap();
        let mask = scene.object_mask(&cam, 0, t, &Se3::identity()).unwrap();
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for (j, &m) in mask.iter().enumerate() {
            if m != 0 {
                sx += (j % cam.width) as f64 + 0.5;
                sy += (j / cam.width) as f64 + 0.5;
                n += 1.0;
            }
        }
        assert!(n > 0.0, "object not visible in frame {i}");
        let (u, v, _) = cam.project(&scene.object_center(0, t)).unwrap();
        let (cx, cy) = (sx / n, sy / n);
        assert!((cx - u).hypot(cy - v) <= 1.0, "frame {i}: centroid ({cx}, {cy}) vs ({u}, {v})");
    }
}

#[test]
fn crossing_objects_have_disjoint_masks_and_the_nearer_wins() {
    let mut cfg = SceneConfig::default();
    cfg.objects = vec![
        ObjectConfig {
            start: [-0.8, 0.0, 0.8],
            end: [0.8, 0.0, 0.8],
            arc_height: 0.0,
            size: 0.35,
            ..ObjectConfig::default()
        },
        ObjectConfig {
            start: [0.8, 0.0, -0.3],
            end: [-0.8, 0.0, -0.3],
            arc_height: 0.0,
            size: 0.35,
            color: [0.2, 0.4, 0.9],
            ..ObjectConfig::default()
        },
    ];
    let frames = generate_synthetic_scene(&cfg, 3).unwrap();
    let mid = &frames[cfg.scene.frames / 2 - 1];
    let overlap = mid.masks[0].iter().zip(&mid.masks[1]).filter(|(a, b)| **a != 0 && **b != 0).count();
    assert_eq!(overlap, 0);
    let scene = SyntheticScene::new(&cfg).unwrap();
    let far_alone = scene.object_mask(&mid.camera, 1, mid.time, &Se3::identity()).unwrap();
    let hidden = far_alone
        .iter()
        .zip(&mid.masks[0])
        .filter(|(f, n)| **f != 0 && **n != 0)
        .count();
    assert!(hidden > 0, "objects should overlap on screen at mid time");
    for f in &frames {
        assert!(f.masks[0].iter().zip(&f.masks[1]).all(|(a, b)| *a == 0 || *b == 0));
    }
}

#[test]
fn generation_is_deterministic_and_splits_held_out_frames() {
    let cfg = SceneConfig::default();
    let a = generate_synthetic_scene(&cfg, 11).unwrap();
    let b = generate_synthetic_scene(&cfg, 11).unwrap();
    assert_eq!(a, b);
    let c = generate_synthetic_scene(&cfg, 12).unwrap();
    assert_ne!(a[0].rgb, c[0].rgb);
    let train = a.iter().filter(|f| f.split == Split::Train).count();
    assert_eq!(train, cfg.scene.frames);
    let eval: Vec<_> = a.iter().filter(|f| f.split == Split::Eval).collect();
    assert_eq!(eval.len(), cfg.scene.frames - 1);
    for f in eval {
        assert_eq!(f.camera, a[0].camera);
        assert!(f.time > 0.0);
    }
}

#[test]
fn depth_is_optical_axis_distance_to_the_hit() {
    let cfg = SceneConfig::default();
    let scene = SyntheticScene::new(&cfg).unwrap();
    let cam = scene.camera(0).unwrap();
    let frame = scene.render_frame(&cam, 0.0, Split::Train).unwrap();
    let rays = cam.generate_rays(None, 1e-6, 100.0).unwrap();
    let axis = cam.pose.transform_vector(&Vec3::new(0.0, 0.0, -1.0));
    for (i, ray) in rays.iter().enumerate().step_by(37) {
        let hit = scene.trace(ray, 0.0).unwrap();
        let z = (ray.at(hit.t) - cam.center()).dot(&axis);
        assert!((f64::from(frame.depth[i]) - z).abs() < 1e-4 * z);
    }
}

#[test]
fn static_only_scene_has_empty_masks_and_moves_only_the_camera() {
    let mut cfg = SceneConfig::default();
    cfg.objects.clear();
    cfg.scene.width = 20;
    cfg.scene.height = 16;
    cfg.scene.focal = 22.0;
    let frames = generate_synthetic_scene(&cfg, 4).unwrap();
    assert!(frames.iter().all(|f| f.masks.is_empty()));
    let scene = SyntheticScene::with_seed(&cfg, 4).unwrap();
    let cam = scene.camera(2).unwrap();
    let later = scene.render_frame(&cam, 0.9, Split::Train).unwrap();
    assert_eq!(later.rgb, frames[2].rgb);
    assert_eq!(later.depth, frames[2].depth);
}

#[test]
fn crossing_sphere_coverage_rises_then_falls() {
    let mut cfg = SceneConfig::default();
    cfg.objects[0].start = [-3.0, 0.0, 0.2];
    cfg.objects[0].end = [3.0, 0.0, 0.2];
    cfg.objects[0].arc_height = 0.0;
    cfg.camera.eye_end = cfg.camera.eye_start;
    cfg.scene.frames = 15;
    cfg.scene.held_out = false;
    let frames = generate_synthetic_scene(&cfg, 0).unwrap();
    let counts: Vec<usize> = frames.iter().map(|f| f.masks[0].iter().filter(|&&m| m != 0).count()).collect();
    let peak = (0..counts.len()).max_by_key(|&i| counts[i]).unwrap();
    assert!(peak > 0 && peak < counts.len() - 1, "{counts:?}");
    assert!(counts[..=peak].windows(2).all(|w| w[0] <= w[1]), "{counts:?}");
    assert!(counts[peak..].windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
    assert_eq!(counts[0], 0);
    assert_eq!(counts[counts.len() - 1], 0);
}
