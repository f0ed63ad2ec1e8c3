//! Markerless frame-to-frame visual odometry, simulated at the
//! correspondence level.
//!
//! Static scene features are tracked between the previous frame `t̃` and the
//! current frame `t`. Each track carries the reconstructed depth `λ` of the
//! feature at `t`, so `λ · K⁻¹ x^t` is a 3D point in the current camera frame.
//! The relative pose `t̃ ← t` minimizes the reprojection error of those points
//! against `x^{t̃}`, and absolute poses are dead-reckoned by composing steps.

use nalgebra::{Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{project, CameraIntrinsics};
use crate::geometry::Pose;
use crate::noise::{keyed_rng, STREAM_VO_FIELD, STREAM_VO_TRACKS};
use crate::pnp::{self, PnpError, PointPair, SolverSettings};

/// Fewest tracks a step can be solved from.
pub const MIN_TRACKS: usize = 6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VoError {
    #[error("tracking lost: {tracks} tracks, {MIN_TRACKS} required")]
    TrackingLost { tracks: usize },
    #[error("step solver did not converge")]
    NotConverged,
    #[error("step solver failed: {0}")]
    Solver(#[from] PnpError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneFeature {
    pub id: u32,
    pub position: Vector3<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureTrack {
    pub feature: u32,
    /// Pixel in the previous frame.
    pub prev_pixel: Vector2<f64>,
    /// Pixel in the current frame.
    pub pixel: Vector2<f64>,
    /// Reconstructed depth at the current frame.
    pub depth: f64,
}

/// A planar rectangle `origin + a·u + b·v` for `a, b ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub origin: [f64; 3],
    pub u: [f64; 3],
    pub v: [f64; 3],
    /// Features per square meter.
    pub density: f64,
}

impl Surface {
    pub fn area(&self) -> f64 {
        Vector3::from(self.u).cross(&Vector3::from(self.v)).norm()
    }

    pub fn point(&self, a: f64, b: f64) -> Vector3<f64> {
        Vector3::from(self.origin) + Vector3::from(self.u) * a + Vector3::from(self.v) * b
    }

    /// Vertical wall along the segment `(x0, y0) → (x1, y1)` from the floor to `height`.
    pub fn wall(x0: f64, y0: f64, x1: f64, y1: f64, height: f64, density: f64) -> Self {
        Self {
            origin: [x0, y0, 0.0],
            u: [x1 - x0, y1 - y0, 0.0],
            v: [0.0, 0.0, height],
            density,
        }
    }
}

/// Texture-free part of a surface, in the surface's `(a, b)` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureMask {
    pub surface: usize,
    pub a: [f64; 2],
    pub b: [f64; 2],
}

impl TextureMask {
    fn contains(&self, a: f64, b: f64) -> bool {
        (self.a[0]..=self.a[1]).contains(&a) && (self.b[0]..=self.b[1]).contains(&b)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureField {
    pub surfaces: Vec<Surface>,
    #[serde(default)]
    pub masks: Vec<TextureMask>,
}

impl FeatureField {
    /// Draws the scene features. Each surface receives `round(density · area)`
    /// uniform samples, minus those falling inside a mask.
    pub fn sample(&self, seed: u64) -> Vec<SceneFeature> {
        let mut out = Vec::new();
        for (s, surf) in self.surfaces.iter().enumerate() {
            let count = (surf.density.max(0.0) * surf.area()).round() as u64;
            let mut rng = keyed_rng(&[seed, STREAM_VO_FIELD, s as u64]);
            for _ in 0..count {
                let a: f64 = rng.random();
                let b: f64 = rng.random();
                if self.masks.iter().any(|m| m.surface == s && m.contains(a, b)) {
                    continue;
                }
                out.push(SceneFeature {
                    id: out.len() as u32,
                    position: surf.point(a, b),
                });
            }
        }
        out
    }

    /// A closed room of four textured walls around `[x0, x1] × [y0, y1]`.
    pub fn room(x0: f64, y0: f64, x1: f64, y1: f64, height: f64, density: f64) -> Self {
        Self {
            surfaces: vec![
                Surface::wall(x0, y0, x1, y0, height, density),
                Surface::wall(x1, y0, x1, y1, height, density),
                Surface::wall(x1, y1, x0, y1, height, density),
                Surface::wall(x0, y1, x0, y0, height, density),
            ],
            masks: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VoNoise {
    /// Tracking noise on the previous-frame pixel, pixels.
    pub flow_sigma: f64,
    /// Extra tracking noise per pixel of image motion.
    pub flow_scale: f64,
    /// Relative depth noise.
    pub depth_sigma: f64,
    /// Fraction of tracks replaced by uniformly random pixels.
    pub outlier_fraction: f64,
    /// Tracks used per step, at most.
    pub max_tracks: usize,
    pub seed: u64,
}

impl Default for VoNoise {
    fn default() -> Self {
        Self {
            flow_sigma: 0.5,
            flow_scale: 0.05,
            depth_sigma: 0.02,
            outlier_fraction: 0.0,
            max_tracks: 200,
            seed: 0,
        }
    }
}

impl VoNoise {
    pub fn noiseless() -> Self {
        Self {
            flow_sigma: 0.0,
            flow_scale: 0.0,
            depth_sigma: 0.0,
            outlier_fraction: 0.0,
            ..Self::default()
        }
    }
}

/// Tracks of the features visible from both placements (camera-to-world).
/// `step` keys the noise draws.
pub fn generate_tracks(
    prev: &Pose,
    curr: &Pose,
    features: &[SceneFeature],
    intr: &CameraIntrinsics,
    noise: &VoNoise,
    step: u64,
) -> Result<Vec<FeatureTrack>, VoError> {
    let to_prev = prev.inverse();
    let to_curr = curr.inverse();
    let mut tracks = Vec::new();
    for f in features {
        if tracks.len() >= noise.max_tracks {
            break;
        }
        let pc = to_curr.act(&f.position);
        let pp = to_prev.act(&f.position);
        let (Ok(x), Ok(xp)) = (project(intr, &pc), project(intr, &pp)) else {
            continue;
        };
        if !intr.contains(&x) || !intr.contains(&xp) {
            continue;
        }
        let mut rng = keyed_rng(&[noise.seed, STREAM_VO_TRACKS, step, u64::from(f.id)]);
        let n: [f64; 3] = [
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
            StandardNormal.sample(&mut rng),
        ];
        let outlier: f64 = rng.random();
        let sigma = noise.flow_sigma.hypot(noise.flow_scale * (xp - x).norm());
        let prev_pixel = if outlier < noise.outlier_fraction {
            Vector2::new(rng.random::<f64>() * intr.width, rng.random::<f64>() * intr.height)
        } else {
            xp + Vector2::new(n[0], n[1]) * sigma
        };
        let depth = pc.z * (1.0 + noise.depth_sigma * n[2]);
        if depth <= 0.0 {
            continue;
        }
        tracks.push(FeatureTrack {
            feature: f.id,
            prev_pixel,
            pixel: x,
            depth,
        });
    }
    if tracks.len() < MIN_TRACKS {
        return Err(VoError::TrackingLost { tracks: tracks.len() });
    }
    Ok(tracks)
}

/// Relative pose mapping current-frame points into the previous frame.
pub fn vo_step(tracks: &[FeatureTrack], intr: &CameraIntrinsics) -> Result<Pose, VoError> {
    if tracks.len() < MIN_TRACKS {
        return Err(VoError::TrackingLost { tracks: tracks.len() });
    }
    let pairs: Vec<PointPair> = tracks
        .iter()
        .map(|t| (intr.back_project(&t.pixel, t.depth), t.prev_pixel))
        .collect();
    let sol = pnp::refine(&pairs, intr, Pose::identity(), &SolverSettings::default())?;
    if !sol.converged {
        return Err(VoError::NotConverged);
    }
    Ok(sol.pose)
}

/// Dead-reckoning update of a world-to-camera pose: `step · prev`, where
/// `step` maps previous-frame coordinates into the current frame.
pub fn accumulate(prev: &Pose, step: &Pose) -> Pose {
    step.compose(prev)
}

/// Running dead-reckoned estimate. While tracking is lost the estimate is
/// frozen; each loss is counted once.
#[derive(Debug, Clone)]
pub struct VisualOdometry {
    pose: Pose,
    lost: bool,
    losses: usize,
    failures: usize,
}

impl VisualOdometry {
    /// Starts from a known world-to-camera pose.
    pub fn new(initial: Pose) -> Self {
        Self {
            pose: initial,
            lost: false,
            losses: 0,
            failures: 0,
        }
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn is_lost(&self) -> bool {
        self.lost
    }

    pub fn losses(&self) -> usize {
        self.losses
    }

    /// Steps whose solver failed on otherwise sufficient tracks.
    pub fn failures(&self) -> usize {
        self.failures
    }

    /// Applies one frame of tracks. Returns whether the estimate advanced.
    pub fn update(&mut self, tracks: Result<Vec<FeatureTrack>, VoError>, intr: &CameraIntrinsics) -> bool {
        let step = tracks.and_then(|t| vo_step(&t, intr));
        match step {
            Ok(rel) => {
                self.pose = accumulate(&self.pose, &rel.inverse());
                self.lost = false;
                true
            }
            Err(VoError::TrackingLost { .. }) => {
                if !self.lost {
                    self.losses += 1;
                }
                self.lost = true;
                false
            }
            Err(_) => {
                self.failures += 1;
                false
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scene() -> Vec<SceneFeature> {
        FeatureField::room(-3.0, -3.0, 4.0, 4.0, 2.5, 20.0).sample(7)
    }

    fn cam(x: f64, y: f64, yaw: f64) -> Pose {
        // Forward-looking camera at 0.3 m: optical axis along body +X.
        let body = Pose::from_xyz_yaw(x, y, 0.3, yaw);
        let mount = Pose::new(
            nalgebra::Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0),
            Vector3::zeros(),
        );
        body.compose(&mount)
    }

    #[test]
    fn zero_motion_noiseless_tracks_are_identical() {
        let intr = CameraIntrinsics::vga();
        let p = cam(0.0, 0.0, 0.3);
        let tracks = generate_tracks(&p, &p, &scene(), &intr, &VoNoise::noiseless(), 0).unwrap();
        assert!(tracks.len() >= MIN_TRACKS);
        for t in &tracks {
            assert_eq!(t.prev_pixel, t.pixel);
        }
        let step = vo_step(&tracks, &intr).unwrap();
        let (dr, dt) = step.frobenius_distance(&Pose::identity());
        assert!(dr < 1e-9 && dt < 1e-9);
    }

    #[test]
    fn featureless_view_loses_tracking() {
        let intr = CameraIntrinsics::vga();
        let field = FeatureField::room(-3.0, -3.0, 4.0, 4.0, 2.5, 0.0);
        let p = cam(0.0, 0.0, 0.0);
        let r = generate_tracks(&p, &p, &field.sample(1), &intr, &VoNoise::noiseless(), 0);
        assert!(matches!(r, Err(VoError::TrackingLost { tracks: 0 })));
    }

    #[test]
    fn masked_region_has_no_features() {
        let mut field = FeatureField::room(-3.0, -3.0, 4.0, 4.0, 2.5, 20.0);
        field.masks.push(TextureMask {
            surface: 1,
            a: [0.0, 1.0],
            b: [0.0, 1.0],
        });
        for f in field.sample(3) {
            assert!((f.position.x - 4.0).abs() > 1e-12);
        }
    }

    #[test]
    fn forward_step_recovered_exactly() {
        let intr = CameraIntrinsics::vga();
        let a = cam(0.0, 0.0, 0.0);
        let b = cam(0.1, 0.0, 0.0);
        let tracks = generate_tracks(&a, &b, &scene(), &intr, &VoNoise::noiseless(), 0).unwrap();
        let step = vo_step(&tracks, &intr).unwrap();
        let truth = a.inverse().compose(&b);
        let (dr, dt) = step.frobenius_distance(&truth);
        assert!(dr < 1e-6 && dt < 1e-6, "{dr} {dt}");
        let next = accumulate(&a.inverse(), &step.inverse());
        let (dr, dt) = next.frobenius_distance(&b.inverse());
        assert!(dr < 1e-6 && dt < 1e-6);
    }

    #[test]
    fn accumulate_examples() {
        assert_eq!(accumulate(&Pose::identity(), &Pose::identity()), Pose::identity());
        let d = Pose::translation_xyz(0.0, 0.0, -0.05);
        let mut p = Pose::identity();
        for _ in 0..20 {
            p = accumulate(&p, &d);
        }
        assert!((p.translation().z + 1.0).abs() < 1e-12);
    }

    #[test]
    fn tracks_are_deterministic_per_step() {
        let intr = CameraIntrinsics::vga();
        let a = cam(0.0, 0.0, 0.0);
        let b = cam(0.01, 0.0, 0.01);
        let n = VoNoise::default();
        let f = scene();
        assert_eq!(
            generate_tracks(&a, &b, &f, &intr, &n, 5).unwrap(),
            generate_tracks(&a, &b, &f, &intr, &n, 5).unwrap()
        );
        assert_ne!(
            generate_tracks(&a, &b, &f, &intr, &n, 5).unwrap(),
            generate_tracks(&a, &b, &f, &intr, &n, 6).unwrap()
        );
    }
}
