use std::f64::consts::TAU;

use moma::camera::CameraIntrinsics;
use moma::geometry::Pose;
use moma::vo::{generate_tracks, vo_step, FeatureField, SceneFeature, VisualOdometry, VoError, VoNoise};
use nalgebra::{Matrix3, Vector3};

fn intr() -> CameraIntrinsics {
    CameraIntrinsics::vga()
}

/// Camera-to-world placement of a forward-looking camera on a ground robot.
fn camera(x: f64, y: f64, yaw: f64) -> Pose {
    let mount = Pose::new(Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0), Vector3::new(0.0, 0.0, 0.3));
    Pose::from_xyz_yaw(x, y, 0.0, yaw).compose(&mount)
}

fn room(seed: u64) -> Vec<SceneFeature> {
    FeatureField::room(-3.0, -3.0, 3.0, 3.0, 2.5, 6.0).sample(seed)
}

/// Placement after `k` steps of a circle of radius 1 m, one lap per `lap` steps.
fn circle(k: usize, lap: usize) -> Pose {
    let a = TAU * k as f64 / lap as f64;
    camera(a.cos(), a.sin(), a + TAU / 4.0)
}

/// Dead-reckons a path and returns the final position error.
fn run(path: impl Fn(usize) -> Pose, steps: usize, features: &[SceneFeature], noise: &VoNoise) -> f64 {
    let mut vo = VisualOdometry::new(path(0).inverse());
    for k in 1..=steps {
        let tracks = generate_tracks(&path(k - 1), &path(k), features, &intr(), noise, k as u64);
        vo.update(tracks, &intr());
    }
    let est = vo.pose().inverse();
    (est.translation() - path(steps).translation()).norm()
}

fn mean_final_error(flow: f64, depth: f64, steps: usize, trials: u64) -> f64 {
    let features = room(0);
    let sum: f64 = (0..trials)
        .map(|seed| {
            let noise = VoNoise {
                flow_sigma: flow,
                depth_sigma: depth,
                max_tracks: 60,
                seed,
                ..VoNoise::default()
            };
            run(|k| circle(k, 400), steps, &features, &noise)
        })
        .sum();
    sum / trials as f64
}

#[test]
fn noiseless_dead_reckoning_is_exact_over_1000_steps() {
    let features = room(1);
    let noise = VoNoise::noiseless();
    let mut vo = VisualOdometry::new(circle(0, 500).inverse());
    for k in 1..=1000 {
        let tracks = generate_tracks(&circle(k - 1, 500), &circle(k, 500), &features, &intr(), &noise, k as u64);
        assert!(vo.update(tracks, &intr()), "step {k} failed");
        let (dr, dt) = vo.pose().frobenius_distance(&circle(k, 500).inverse());
        assert!(dr < 1e-6 && dt < 1e-6, "step {k}: rotation {dr:e} translation {dt:e}");
    }
    assert_eq!(vo.losses(), 0);
}

#[test]
fn pure_rotation_steps_have_larger_orientation_error() {
    let features = room(2);
    let (mut rot_err, mut trans_err) = (0.0, 0.0);
    let trials = 500;
    for seed in 0..trials {
        let noise = VoNoise {
            seed,
            ..VoNoise::default()
        };
        let start = camera(0.3, -0.2, 0.4);
        // One frame at 0.5 rad/s and at 0.2 m/s, 25 Hz.
        let turned = camera(0.3, -0.2, 0.4 + 0.02);
        let moved = camera(0.3 + 0.008 * 0.4f64.cos(), -0.2 + 0.008 * 0.4f64.sin(), 0.4);
        for (end, acc) in [(turned, &mut rot_err), (moved, &mut trans_err)] {
            let tracks = generate_tracks(&start, &end, &features, &intr(), &noise, 0).unwrap();
            let step = vo_step(&tracks, &intr()).unwrap();
            let truth = start.inverse().compose(&end);
            *acc += step.inverse().compose(&truth).rotation_angle();
        }
    }
    println!("orientation error: rotation {:.3e}, translation {:.3e}", rot_err / 500.0, trans_err / 500.0);
    assert!(rot_err > trans_err);
}

#[test]
fn step_error_is_roughly_proportional_to_noise() {
    let features = room(3);
    let start = camera(0.0, 0.0, 0.2);
    let end = camera(0.008, 0.001, 0.21);
    let truth = start.inverse().compose(&end);
    let mean_error = |scale: f64| -> f64 {
        (0..300)
            .map(|seed| {
                let noise = VoNoise {
                    flow_sigma: 0.5 * scale,
                    flow_scale: 0.0,
                    depth_sigma: 0.02 * scale,
                    seed,
                    ..VoNoise::default()
                };
                let tracks = generate_tracks(&start, &end, &features, &intr(), &noise, 0).unwrap();
                let step = vo_step(&tracks, &intr()).unwrap();
                (step.translation() - truth.translation()).norm()
            })
            .sum::<f64>()
            / 300.0
    };
    let (one, two) = (mean_error(1.0), mean_error(2.0));
    assert!(one > 0.0);
    let ratio = two / one;
    assert!((1.6..2.4).contains(&ratio), "ratio {ratio}");
}

#[test]
fn drift_grows_with_noise_and_step_count() {
    let trials = 500;
    let flows: Vec<f64> = [0.25, 0.5, 1.0].iter().map(|&f| mean_final_error(f, 0.02, 100, trials)).collect();
    let depths: Vec<f64> = [0.02, 0.1, 0.3].iter().map(|&d| mean_final_error(0.5, d, 100, trials)).collect();
    let steps: Vec<f64> = [50, 100, 200].iter().map(|&n| mean_final_error(0.5, 0.02, n, trials)).collect();
    println!("flow {flows:?}\ndepth {depths:?}\nsteps {steps:?}");
    for series in [&flows, &depths, &steps] {
        assert!(series.windows(2).all(|w| w[1] >= w[0]), "{series:?}");
    }
}

#[test]
fn featureless_stretch_is_one_loss_and_freezes_the_estimate() {
    let mut field = FeatureField::room(-3.0, -3.0, 3.0, 3.0, 2.5, 6.0);
    // Blank the wall the camera faces at yaw 0 (the x = 3 wall).
    field.surfaces[1].density = 0.0;
    let features = field.sample(4);
    let path = |k: usize| {
        let yaw = if k < 20 { TAU / 4.0 } else if k < 40 { 0.0 } else { TAU / 4.0 };
        camera(0.0, 0.0, yaw)
    };
    let mut vo = VisualOdometry::new(path(0).inverse());
    let mut frozen = None;
    for k in 1..60 {
        let tracks = generate_tracks(&path(k - 1), &path(k), &features, &intr(), &VoNoise::noiseless(), k as u64);
        let lost_now = matches!(tracks, Err(VoError::TrackingLost { .. }));
        vo.update(tracks, &intr());
        if lost_now {
            let pose = *vo.pose();
            assert_eq!(*frozen.get_or_insert(pose), pose);
        }
    }
    assert_eq!(vo.losses(), 1);
    assert!(!vo.is_lost());
}
