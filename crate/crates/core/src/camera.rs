//! Synthetic marker observations through an ideal pinhole camera.
//!
//! Camera frame convention: +Z along the optical axis, +X to the right in the
//! image, +Y down. A [`MarkerBoard`] is a square in the `Z = 0` plane of its
//! own frame. Poses passed to [`observe`] are placements (frame-to-world).

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;
use crate::noise;

/// Depth at or below which a point counts as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CameraError {
    #[error("point is behind the camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid marker board: {0}")]
    InvalidBoard(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl CameraIntrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: f64,
        height: f64,
    ) -> Result<Self, CameraError> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// 640×480, f = 500 px, centered principal point.
    pub fn vga() -> Self {
        Self {
            fx: 500.0,
            fy: 500.0,
            cx: 320.0,
            cy: 240.0,
            width: 640.0,
            height: 480.0,
        }
    }

    /// 720×576 PAL frame behind a wide-angle lens, f = 400 px.
    pub fn pal_wide() -> Self {
        Self {
            fx: 400.0,
            fy: 400.0,
            cx: 360.0,
            cy: 288.0,
            width: 720.0,
            height: 576.0,
        }
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.width, self.height]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(CameraError::InvalidIntrinsics("non-finite value".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(CameraError::InvalidIntrinsics(
                "focal lengths must be positive".into(),
            ));
        }
        if !(0.0..self.width).contains(&self.cx) || !(0.0..self.height).contains(&self.cy) {
            return Err(CameraError::InvalidIntrinsics(
                "principal point outside the image".into(),
            ));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn contains(&self, pixel: &Vector2<f64>) -> bool {
        (0.0..=self.width).contains(&pixel.x) && (0.0..=self.height).contains(&pixel.y)
    }

    /// Pixel to normalized image coordinates `(X/Z, Y/Z)`.
    pub fn normalize(&self, pixel: &Vector2<f64>) -> Vector2<f64> {
        Vector2::new((pixel.x - self.cx) / self.fx, (pixel.y - self.cy) / self.fy)
    }

    /// Point at depth `depth` along the ray through `pixel`.
    pub fn back_project(&self, pixel: &Vector2<f64>, depth: f64) -> Vector3<f64> {
        let n = self.normalize(pixel);
        Vector3::new(n.x * depth, n.y * depth, depth)
    }

    /// Horizontal and vertical field of view in radians.
    pub fn field_of_view(&self) -> (f64, f64) {
        (
            (self.cx / self.fx).atan() + ((self.width - self.cx) / self.fx).atan(),
            (self.cy / self.fy).atan() + ((self.height - self.cy) / self.fy).atan(),
        )
    }
}

/// Pinhole projection of a camera-frame point.
pub fn project(intr: &CameraIntrinsics, point_cam: &Vector3<f64>) -> Result<Vector2<f64>, CameraError> {
    if point_cam.z <= MIN_DEPTH {
        return Err(CameraError::BehindCamera { z: point_cam.z });
    }
    Ok(Vector2::new(
        intr.fx * point_cam.x / point_cam.z + intr.cx,
        intr.fy * point_cam.y / point_cam.z + intr.cy,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerBoard {
    pub id: u32,
    pub side: f64,
    corners: [Vector3<f64>; 4],
}

impl MarkerBoard {
    /// Square marker of the given side length, centered on its frame origin.
    /// Corners run counter-clockwise from the top-left (+Y is up in the marker frame).
    pub fn square(id: u32, side: f64) -> Result<Self, CameraError> {
        if !(side.is_finite() && side > 0.0) {
            return Err(CameraError::InvalidBoard(format!("side {side} must be positive")));
        }
        let h = 0.5 * side;
        Ok(Self {
            id,
            side,
            corners: [
                Vector3::new(-h, h, 0.0),
                Vector3::new(-h, -h, 0.0),
                Vector3::new(h, -h, 0.0),
                Vector3::new(h, h, 0.0),
            ],
        })
    }

    pub fn corners(&self) -> &[Vector3<f64>; 4] {
        &self.corners
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    /// Marker-frame point (meters).
    pub point: Vector3<f64>,
    /// Observed pixel.
    pub pixel: Vector2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub marker_id: u32,
    pub correspondences: Vec<Correspondence>,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Isotropic Gaussian pixel noise, standard deviation in pixels.
    pub pixel_sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        Self {
            pixel_sigma: 0.0,
            seed: 0,
        }
    }
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            pixel_sigma: 0.5,
            seed: 0,
        }
    }
}

/// Identifies one image: the frame counter, its time, and the capturing camera.
/// Pixel noise is keyed on `(seed, frame, camera_id, marker id, corner)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stamp {
    pub frame: u64,
    pub time: f64,
    pub camera_id: u32,
}

impl Stamp {
    pub fn new(frame: u64, time: f64, camera_id: u32) -> Self {
        Self {
            frame,
            time,
            camera_id,
        }
    }
}

/// Noiseless projections of the board corners, or `None` if any corner is
/// behind the camera or outside the image.
pub fn project_board(
    camera_pose: &Pose,
    marker_pose: &Pose,
    board: &MarkerBoard,
    intr: &CameraIntrinsics,
) -> Option<[Vector2<f64>; 4]> {
    let marker_to_camera = camera_pose.inverse().compose(marker_pose);
    let mut pixels = [Vector2::zeros(); 4];
    for (px, corner) in pixels.iter_mut().zip(board.corners()) {
        let p = marker_to_camera.act(corner);
        let uv = project(intr, &p).ok()?;
        if !intr.contains(&uv) {
            return None;
        }
        *px = uv;
    }
    Some(pixels)
}

/// Simulated marker detection. `None` means the marker is not visible, which
/// is a normal outcome.
pub fn observe(
    camera_pose: &Pose,
    marker_pose: &Pose,
    board: &MarkerBoard,
    intr: &CameraIntrinsics,
    noise: &NoiseModel,
    stamp: Stamp,
) -> Option<Observation> {
    let pixels = project_board(camera_pose, marker_pose, board, intr)?;
    let correspondences = pixels
        .iter()
        .zip(board.corners())
        .enumerate()
        .map(|(i, (uv, corner))| {
            let pixel = if noise.pixel_sigma > 0.0 {
                let (du, dv) = noise::standard_normal_pair(&[
                    noise.seed,
                    noise::STREAM_MARKER_PIXELS,
                    stamp.frame,
                    u64::from(stamp.camera_id),
                    u64::from(board.id),
                    i as u64,
                ]);
                uv + Vector2::new(du, dv) * noise.pixel_sigma
            } else {
                *uv
            };
            Correspondence {
                point: *corner,
                pixel,
            }
        })
        .collect();
    Some(Observation {
        marker_id: board.id,
        correspondences,
        timestamp: stamp.time,
    })
}

/// Ground footprint of a downward-looking camera, in camera-aligned axes
/// relative to the point directly below the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroundRect {
    pub min_x: f64,
    pub max_x: f64,
    pub min_y: f64,
    pub max_y: f64,
}

impl GroundRect {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn height(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        (self.min_x..=self.max_x).contains(&x) && (self.min_y..=self.max_y).contains(&y)
    }
}

/// Back-projection of the image rectangle onto a plane at distance `h` below
/// a camera looking straight down.
pub fn coverage_area(intr: &CameraIntrinsics, h: f64) -> GroundRect {
    let h = h.max(0.0);
    GroundRect {
        min_x: -intr.cx * h / intr.fx,
        max_x: (intr.width - intr.cx) * h / intr.fx,
        min_y: -intr.cy * h / intr.fy,
        max_y: (intr.height - intr.cy) * h / intr.fy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn intr() -> CameraIntrinsics {
        CameraIntrinsics::vga()
    }

    #[test]
    fn projection_examples() {
        let i = intr();
        assert_eq!(project(&i, &Vector3::new(0.0, 0.0, 1.0)).unwrap(), Vector2::new(320.0, 240.0));
        assert_eq!(project(&i, &Vector3::new(0.1, 0.0, 1.0)).unwrap(), Vector2::new(370.0, 240.0));
        // 500·0.1/2 + 320 = 345, 500·0.2/2 + 240 = 290
        let p = project(&i, &Vector3::new(0.1, 0.2, 2.0)).unwrap();
        assert!((p - Vector2::new(345.0, 290.0)).norm() < 1e-12);
    }

    #[test]
    fn projection_rejects_points_behind() {
        let i = intr();
        assert!(matches!(
            project(&i, &Vector3::new(0.0, 0.0, 0.0)),
            Err(CameraError::BehindCamera { .. })
        ));
        assert!(project(&i, &Vector3::new(0.0, 0.0, -1.0)).is_err());
        assert!(project(&i, &Vector3::new(0.0, 0.0, 1e-9)).is_err());
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640.0, 480.0).is_ok());
        assert!(CameraIntrinsics::new(0.0, 500.0, 320.0, 240.0, 640.0, 480.0).is_err());
        assert!(CameraIntrinsics::new(500.0, 500.0, 640.0, 240.0, 640.0, 480.0).is_err());
        assert!(CameraIntrinsics::new(500.0, -1.0, 320.0, 240.0, 640.0, 480.0).is_err());
    }

    #[test]
    fn board_geometry() {
        let b = MarkerBoard::square(3, 0.2).unwrap();
        let c = b.corners();
        assert!(c.iter().all(|p| p.z == 0.0));
        for k in 0..4 {
            let d = (c[k] - c[(k + 1) % 4]).norm();
            assert!((d - 0.2).abs() < 1e-15);
        }
        // counter-clockwise seen from +Z
        let area2: f64 = (0..4)
            .map(|k| c[k].x * c[(k + 1) % 4].y - c[(k + 1) % 4].x * c[k].y)
            .sum();
        assert!(area2 > 0.0);
        assert!(c[0].x < 0.0 && c[0].y > 0.0);
        assert!(MarkerBoard::square(0, 0.0).is_err());
    }

    #[test]
    fn centered_marker_projects_symmetrically() {
        let board = MarkerBoard::square(0, 0.2).unwrap();
        let obs = observe(
            &Pose::identity(),
            &Pose::translation_xyz(0.0, 0.0, 1.0),
            &board,
            &intr(),
            &NoiseModel::noiseless(),
            Stamp::new(0, 0.0, 0),
        )
        .unwrap();
        assert_eq!(obs.correspondences.len(), 4);
        let centroid = obs
            .correspondences
            .iter()
            .fold(Vector2::zeros(), |acc, c| acc + c.pixel)
            / 4.0;
        assert!((centroid - Vector2::new(320.0, 240.0)).norm() < 1e-12);
        for c in &obs.correspondences {
            let d = c.pixel - Vector2::new(320.0, 240.0);
            assert!((d.x.abs() - 50.0).abs() < 1e-12 && (d.y.abs() - 50.0).abs() < 1e-12);
        }
    }

    #[test]
    fn marker_behind_camera_is_not_visible() {
        let board = MarkerBoard::square(0, 0.2).unwrap();
        let seen = observe(
            &Pose::identity(),
            &Pose::translation_xyz(0.0, 0.0, -1.0),
            &board,
            &intr(),
            &NoiseModel::default(),
            Stamp::new(0, 0.0, 0),
        );
        assert!(seen.is_none());
    }

    #[test]
    fn corner_just_outside_the_image_hides_the_marker() {
        let i = intr();
        let board = MarkerBoard::square(0, 0.2).unwrap();
        let depth = 1.0;
        // Place the top-right corner (index 3, at marker (+0.1, +0.1)) at u = width + 1.
        let target = i.back_project(&Vector2::new(i.width + 1.0, 240.0), depth);
        let center = target - board.corners()[3];
        let marker = Pose::from_translation(center);
        assert!(observe(&Pose::identity(), &marker, &board, &i, &NoiseModel::noiseless(), Stamp::new(0, 0.0, 0)).is_none());
        // Two pixels further in, the marker is visible again.
        let target = i.back_project(&Vector2::new(i.width - 1.0, 240.0), depth);
        let marker = Pose::from_translation(target - board.corners()[3]);
        assert!(observe(&Pose::identity(), &marker, &board, &i, &NoiseModel::noiseless(), Stamp::new(0, 0.0, 0)).is_some());
    }

    #[test]
    fn noise_is_deterministic_and_keyed() {
        let board = MarkerBoard::square(5, 0.2).unwrap();
        let cam = Pose::identity();
        let marker = Pose::translation_xyz(0.05, -0.02, 1.2);
        let noise = NoiseModel {
            pixel_sigma: 0.5,
            seed: 11,
        };
        let a = observe(&cam, &marker, &board, &intr(), &noise, Stamp::new(3, 0.12, 0)).unwrap();
        let b = observe(&cam, &marker, &board, &intr(), &noise, Stamp::new(3, 0.12, 0)).unwrap();
        assert_eq!(a, b);
        let c = observe(&cam, &marker, &board, &intr(), &noise, Stamp::new(4, 0.16, 0)).unwrap();
        assert_ne!(a, c);
        let d = observe(&cam, &marker, &board, &intr(), &noise, Stamp::new(3, 0.12, 1)).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn coverage_examples() {
        let i = intr();
        let r1 = coverage_area(&i, 1.0);
        // half-extents h·cx/fx = 0.64 m and h·cy/fy = 0.48 m
        assert!((r1.max_x - 0.64).abs() < 1e-12 && (r1.max_y - 0.48).abs() < 1e-12);
        assert!((r1.min_x + 0.64).abs() < 1e-12 && (r1.min_y + 0.48).abs() < 1e-12);
        let r2 = coverage_area(&i, 2.0);
        assert!((r2.width() - 2.0 * r1.width()).abs() < 1e-12);
        assert!((r2.height() - 2.0 * r1.height()).abs() < 1e-12);
        assert_eq!(coverage_area(&i, 0.0).area(), 0.0);
    }

    #[test]
    fn coverage_matches_back_projected_corners() {
        let i = CameraIntrinsics::new(450.0, 520.0, 300.0, 260.0, 640.0, 480.0).unwrap();
        let h = 1.7;
        let r = coverage_area(&i, h);
        let tl = i.back_project(&Vector2::new(0.0, 0.0), h);
        let br = i.back_project(&Vector2::new(i.width, i.height), h);
        assert!((r.min_x - tl.x).abs() < 1e-12 && (r.min_y - tl.y).abs() < 1e-12);
        assert!((r.max_x - br.x).abs() < 1e-12 && (r.max_y - br.y).abs() < 1e-12);
    }
}
