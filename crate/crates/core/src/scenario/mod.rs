//! Scripted multi-robot missions.
//!
//! A [`ScenarioScript`] lists the agents with their sensors, the camera to
//! marker links, a phase schedule and keyframed trajectories. Everything is
//! quantized to frames at [`ScenarioScript::frame_rate`]; an agent is mobile
//! at frame `k` when a mobile row covers `start ≤ t_k < end`.

mod generators;
mod validate;

pub use generators::{
    line_following_experiment, multi_robot_caterpillar, single_robot_caterpillar, square_waypoint_experiment,
    top_observer, two_robot_caterpillar, Altitude, CaterpillarOptions, LineOptions, SquareOptions,
    TopObserverOptions, Waypoint,
};
pub use validate::{validate, ScheduleViolation};

use std::path::Path;

use nalgebra::{Rotation3, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{project_board, CameraIntrinsics, MarkerBoard};
use crate::geometry::Pose;
use crate::odometry::cooperative::{BodySpec, Link, Rig};
use crate::odometry::AgentPhase;
use crate::vo::FeatureField;

pub const FRAME_RATE: f64 = 25.0;
pub const LINEAR_SPEED: f64 = 0.2;
pub const ANGULAR_SPEED: f64 = 0.5;
pub const WINDOW_FRAMES: usize = 10;
/// Smallest marker edge, in pixels, that still counts as detectable.
pub const MIN_MARKER_PIXELS: f64 = 20.0;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("agent {agent} loses sight of marker {marker} at frame {frame}: {reason}")]
    FovInfeasible {
        agent: usize,
        marker: usize,
        frame: u64,
        reason: String,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("schedule violation: {0}")]
    Schedule(#[from] ScheduleViolation),
    #[error("cannot read scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot write scenario file: {0}")]
    Serialize(#[from] toml::ser::Error),
}

/// Sensor placement in the body frame: translation, then roll/pitch/yaw
/// applied as `Rz(yaw) · Ry(pitch) · Rx(roll)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Mount {
    pub xyz: [f64; 3],
    pub rpy: [f64; 3],
}

impl Mount {
    pub fn new(xyz: [f64; 3], rpy: [f64; 3]) -> Self {
        Self { xyz, rpy }
    }

    pub fn pose(&self) -> Pose {
        let r = Rotation3::from_euler_angles(self.rpy[0], self.rpy[1], self.rpy[2]);
        Pose::new(*r.matrix(), Vector3::from(self.xyz))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkerSpec {
    pub id: u32,
    pub side: f64,
    pub mount: Mount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraSpec {
    pub id: u32,
    pub intrinsics: CameraIntrinsics,
    pub mount: Mount,
}

/// Trajectory sample: time in seconds, body position and heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keyframe {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub yaw: f64,
}

impl Keyframe {
    pub fn pose(&self) -> Pose {
        Pose::from_xyz_yaw(self.x, self.y, self.z, self.yaw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    pub marker: Option<MarkerSpec>,
    pub camera: Option<CameraSpec>,
    pub keyframes: Vec<Keyframe>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub agent: usize,
    pub phase: AgentPhase,
    pub start: f64,
    pub end: f64,
}

/// A stop of the main agent where its reference is switched.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub agent: usize,
    pub frame: u64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

/// Markerless visual odometry camera carried by one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoRig {
    pub agent: usize,
    pub intrinsics: CameraIntrinsics,
    pub mount: Mount,
    pub field: FeatureField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub name: String,
    pub frame_rate: f64,
    pub window_frames: usize,
    /// Number of frames in the run.
    pub frames: u64,
    pub main_agent: usize,
    pub agents: Vec<AgentSpec>,
    pub links: Vec<Link>,
    pub schedule: Vec<ScheduleRow>,
    #[serde(default)]
    pub keypoints: Vec<Keypoint>,
    #[serde(default)]
    pub vo: Option<VoRig>,
}

impl ScenarioScript {
    pub fn time(&self, frame: u64) -> f64 {
        frame as f64 / self.frame_rate
    }

    pub fn frame_of(&self, t: f64) -> u64 {
        (t * self.frame_rate).round().max(0.0) as u64
    }

    /// Static window length in seconds.
    pub fn dt(&self) -> f64 {
        self.window_frames as f64 / self.frame_rate
    }

    pub fn phase(&self, agent: usize, frame: u64) -> AgentPhase {
        let mobile = self.schedule.iter().any(|r| {
            r.agent == agent
                && r.phase == AgentPhase::Mobile
                && self.frame_of(r.start) <= frame
                && frame < self.frame_of(r.end)
        });
        if mobile {
            AgentPhase::Mobile
        } else {
            AgentPhase::Static
        }
    }

    pub fn phases(&self, frame: u64) -> Vec<AgentPhase> {
        (0..self.agents.len()).map(|a| self.phase(a, frame)).collect()
    }

    /// Mobile intervals of `agent` as half-open frame ranges, sorted.
    pub fn mobile_intervals(&self, agent: usize) -> Vec<(u64, u64)> {
        let mut v: Vec<(u64, u64)> = self
            .schedule
            .iter()
            .filter(|r| r.agent == agent && r.phase == AgentPhase::Mobile)
            .map(|r| (self.frame_of(r.start), self.frame_of(r.end)))
            .collect();
        v.sort_unstable();
        v
    }

    pub fn rig(&self) -> Rig {
        Rig {
            bodies: self
                .agents
                .iter()
                .map(|a| BodySpec {
                    name: a.name.clone(),
                    marker_mount: a.marker.map(|m| m.mount.pose()),
                    camera_mount: a.camera.map(|c| c.mount.pose()),
                })
                .collect(),
            links: self.links.clone(),
        }
    }

    pub fn truth(&self) -> GroundTruth {
        GroundTruth {
            tracks: self.agents.iter().map(|a| a.keyframes.clone()).collect(),
        }
    }

    pub fn board(&self, agent: usize) -> Option<MarkerBoard> {
        let m = self.agents.get(agent)?.marker?;
        MarkerBoard::square(m.id, m.side).ok()
    }

    /// Ground-truth path length of the main agent.
    pub fn path_length(&self) -> f64 {
        self.truth().path_length(self.main_agent)
    }

    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        std::fs::write(path, self.to_toml()?)?;
        Ok(())
    }

    /// Checks that every linked marker stays fully in view, and large
    /// enough, for every frame.
    pub fn check_visibility(&self) -> Result<(), ScenarioError> {
        let truth = self.truth();
        for frame in 0..self.frames {
            let t = self.time(frame);
            for link in &self.links {
                let cam_agent = &self.agents[link.camera];
                let (Some(cam), Some(_)) = (cam_agent.camera, self.agents[link.marker].marker) else {
                    return Err(ScenarioError::InvalidParameter(format!(
                        "link {} -> {} needs a camera and a marker",
                        link.camera, link.marker
                    )));
                };
                let board = self.board(link.marker).expect("checked above");
                let cam_pose = truth.camera_placement(self, link.camera, t).expect("camera present");
                let marker_pose = truth.marker_placement(self, link.marker, t).expect("marker present");
                let infeasible = |reason: String| ScenarioError::FovInfeasible {
                    agent: link.camera,
                    marker: link.marker,
                    frame,
                    reason,
                };
                let px = project_board(&cam_pose, &marker_pose, &board, &cam.intrinsics)
                    .ok_or_else(|| infeasible("marker leaves the image".into()))?;
                let edge = min_edge(&px);
                if edge < MIN_MARKER_PIXELS {
                    return Err(infeasible(format!("marker edge is {edge:.1} px")));
                }
            }
        }
        Ok(())
    }
}

fn min_edge(px: &[Vector2<f64>; 4]) -> f64 {
    (0..4)
        .map(|i| (px[(i + 1) % 4] - px[i]).norm())
        .fold(f64::INFINITY, f64::min)
}

/// Continuous-time body placements, linear between keyframes.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    tracks: Vec<Vec<Keyframe>>,
}

impl GroundTruth {
    /// Body-to-world placement of `agent` at time `t`.
    pub fn placement(&self, agent: usize, t: f64) -> Pose {
        let k = self.sample(agent, t);
        Pose::from_xyz_yaw(k.x, k.y, k.z, k.yaw)
    }

    /// Interpolated keyframe. Times outside the track clamp to its ends.
    pub fn sample(&self, agent: usize, t: f64) -> Keyframe {
        let kf = &self.tracks[agent];
        let i = kf.partition_point(|k| k.t <= t);
        if i == 0 {
            return Keyframe { t, ..kf[0] };
        }
        if i == kf.len() {
            return Keyframe { t, ..kf[kf.len() - 1] };
        }
        let (a, b) = (&kf[i - 1], &kf[i]);
        let s = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 1.0 };
        Keyframe {
            t,
            x: a.x + s * (b.x - a.x),
            y: a.y + s * (b.y - a.y),
            z: a.z + s * (b.z - a.z),
            yaw: a.yaw + s * (b.yaw - a.yaw),
        }
    }

    pub fn camera_placement(&self, script: &ScenarioScript, agent: usize, t: f64) -> Option<Pose> {
        let cam = script.agents[agent].camera?;
        Some(self.placement(agent, t).compose(&cam.mount.pose()))
    }

    pub fn marker_placement(&self, script: &ScenarioScript, agent: usize, t: f64) -> Option<Pose> {
        let m = script.agents[agent].marker?;
        Some(self.placement(agent, t).compose(&m.mount.pose()))
    }

    /// Distance travelled by the agent's body origin.
    pub fn path_length(&self, agent: usize) -> f64 {
        self.tracks[agent]
            .windows(2)
            .map(|w| {
                Vector3::new(w[1].x - w[0].x, w[1].y - w[0].y, w[1].z - w[0].z).norm()
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interpolation_is_linear_and_clamped() {
        let gt = GroundTruth {
            tracks: vec![vec![
                Keyframe { t: 0.0, x: 0.0, y: 0.0, z: 0.0, yaw: 0.0 },
                Keyframe { t: 2.0, x: 1.0, y: 0.0, z: 0.0, yaw: 1.0 },
            ]],
        };
        let k = gt.sample(0, 1.0);
        assert!((k.x - 0.5).abs() < 1e-15 && (k.yaw - 0.5).abs() < 1e-15);
        assert_eq!(gt.sample(0, -1.0).x, 0.0);
        assert_eq!(gt.sample(0, 5.0).x, 1.0);
        assert!((gt.path_length(0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn mount_angles_build_expected_axes() {
        // forward camera: optical axis along body +X, image x along body −Y
        let m = Mount::new([0.0; 3], [-std::f64::consts::FRAC_PI_2, 0.0, -std::f64::consts::FRAC_PI_2]).pose();
        assert!((m.rotate(&Vector3::z()) - Vector3::x()).norm() < 1e-12);
        assert!((m.rotate(&Vector3::x()) + Vector3::y()).norm() < 1e-12);
    }
}
