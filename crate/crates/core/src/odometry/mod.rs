//! The mobile-marker odometry estimator.
//!
//! Poses here follow the world-to-frame convention: a camera pose `G_C` maps
//! world coordinates into camera coordinates, a marker pose `G_M` maps world
//! coordinates into marker coordinates, and a relative measurement `g` maps
//! marker coordinates into camera coordinates. With that convention the
//! camera pose against a resting marker is `G_C = g · G_M`, and a marker that
//! moved from `g1` to `g2` under a resting camera ends at
//! `G_M' = g2⁻¹ · g1 · G_M`.
//!
//! [`MomaState`] and the free functions cover one camera and one marker.
//! [`cooperative`] generalizes the same recursion to rigs with several
//! cameras and markers mounted on rigid bodies.

pub mod cooperative;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentPhase {
    Static,
    Mobile,
}

impl AgentPhase {
    pub fn is_static(self) -> bool {
        self == AgentPhase::Static
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AgentPhase::Static => "static",
            AgentPhase::Mobile => "mobile",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolViolation {
    #[error("frame {frame}: every agent is mobile")]
    AllMobile { frame: u64 },
    #[error("frame {frame}: marker and observing camera are both mobile")]
    MarkerAndCameraMobile { frame: u64 },
    #[error("frame {frame}: body {body} is mobile without a static reference")]
    NoStaticReference { frame: u64, body: usize },
    #[error("frame {frame}: static window of body {body} is empty")]
    EmptyWindow { frame: u64, body: usize },
    #[error("frame {frame}: static window of body {body} lasted {frames} frames, {required} required")]
    ShortWindow {
        frame: u64,
        body: usize,
        frames: u64,
        required: u64,
    },
    #[error("frame {frame}: reference {reference} of body {body} moved during its motion")]
    ReferenceMoved {
        frame: u64,
        body: usize,
        reference: usize,
    },
    #[error("frame {frame}: frames must arrive in increasing order")]
    OutOfOrder { frame: u64 },
    #[error("frame {frame}: phase vector has {got} entries, rig has {expected} bodies")]
    PhaseCount {
        frame: u64,
        got: usize,
        expected: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdometryError {
    #[error("pose history is empty")]
    EmptyHistory,
    #[error("camera pose is undefined while the marker is mobile")]
    MarkerMobile,
    #[error("marker tracking needs a static camera and a mobile marker")]
    NotTracking,
    #[error("protocol violation: {0}")]
    Protocol(#[from] ProtocolViolation),
}

/// Marker displacement between two measurements taken from one resting camera:
/// `g2⁻¹ · g1`.
pub fn relative_marker_pose(g_tau1: &Pose, g_tau2: &Pose) -> Pose {
    g_tau2.inverse().compose(g_tau1)
}

/// Mean of the poses in one static window: arithmetic mean of translations,
/// normalized quaternion sum for rotations with signs aligned to the first entry.
pub fn average_pose(history: &[(Pose, f64)]) -> Result<Pose, OdometryError> {
    let ((first, _), rest) = history.split_first().ok_or(OdometryError::EmptyHistory)?;
    if rest.is_empty() {
        return Ok(*first);
    }
    let q0 = first.quaternion().into_inner();
    let mut qsum = q0;
    let mut tsum = *first.translation();
    for (pose, _) in rest {
        let q = pose.quaternion().into_inner();
        qsum += if q.dot(&q0) < 0.0 { -q } else { q };
        tsum += pose.translation();
    }
    let n = history.len() as f64;
    let q = UnitQuaternion::from_quaternion(Quaternion::from(qsum.coords / n));
    Ok(Pose::from_quaternion(&q, tsum / n))
}

/// Output of the estimator for one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryEstimate {
    pub camera: Pose,
    pub marker: Pose,
    pub timestamp: f64,
    pub cycle: usize,
}

/// Single camera, single marker estimator state.
#[derive(Debug, Clone, PartialEq)]
pub struct MomaState {
    /// Marker pose at the last committed switch.
    pub anchor: Pose,
    pub anchor_time: f64,
    pub marker_phase: AgentPhase,
    pub camera_phase: AgentPhase,
    /// Relative measurements of the current static window.
    pub history: Vec<(Pose, f64)>,
    pub cycle: usize,
}

impl MomaState {
    pub fn new(anchor: Pose, time: f64) -> Self {
        Self {
            anchor,
            anchor_time: time,
            marker_phase: AgentPhase::Static,
            camera_phase: AgentPhase::Static,
            history: Vec::new(),
            cycle: 0,
        }
    }

    /// Commits a marker move measured from a resting camera. `g_tau1` and
    /// `g_tau2` are the window averages before and after the move.
    pub fn commit_switch(&self, g_tau1: &Pose, g_tau2: &Pose, time: f64) -> MomaState {
        MomaState {
            anchor: relative_marker_pose(g_tau1, g_tau2).compose(&self.anchor),
            anchor_time: time,
            marker_phase: self.marker_phase,
            camera_phase: self.camera_phase,
            history: Vec::new(),
            cycle: self.cycle + 1,
        }
    }

    /// Window-checked variant of [`MomaState::commit_switch`].
    pub fn commit_windows(
        &self,
        before: &[(Pose, f64)],
        after: &[(Pose, f64)],
        time: f64,
    ) -> Result<MomaState, OdometryError> {
        let g1 = average_pose(before)?;
        let g2 = average_pose(after)?;
        Ok(self.commit_switch(&g1, &g2, time))
    }

    /// Camera pose against the resting marker, `g_t · anchor`.
    pub fn camera_pose(&self, g_t: &Pose, timestamp: f64) -> Result<OdometryEstimate, OdometryError> {
        if self.marker_phase == AgentPhase::Mobile {
            return Err(OdometryError::MarkerMobile);
        }
        Ok(OdometryEstimate {
            camera: g_t.compose(&self.anchor),
            marker: self.anchor,
            timestamp,
            cycle: self.cycle,
        })
    }

    /// Live marker pose while it moves under a resting camera.
    pub fn marker_pose_during_motion(&self, g_t: &Pose, g_tau1: &Pose) -> Result<Pose, OdometryError> {
        if self.camera_phase != AgentPhase::Static || self.marker_phase != AgentPhase::Mobile {
            return Err(OdometryError::NotTracking);
        }
        Ok(g_t.inverse().compose(g_tau1).compose(&self.anchor))
    }
}

/// Frame-driven wrapper around [`MomaState`] for one camera and one marker.
///
/// Phases come from the caller; the marker and the camera take turns and
/// every hand-over needs a window where both rest.
#[derive(Debug, Clone)]
pub struct MomaOdometry {
    state: MomaState,
    window_frames: usize,
    /// Averaged measurement of the window before the marker started moving.
    g_tau1: Option<Pose>,
    /// Whether the current both-static window follows a marker move.
    after_marker_move: bool,
    frame: u64,
    started: bool,
}

impl MomaOdometry {
    pub fn new(anchor: Pose, time: f64, window_frames: usize) -> Self {
        Self {
            state: MomaState::new(anchor, time),
            window_frames: window_frames.max(1),
            g_tau1: None,
            after_marker_move: false,
            frame: 0,
            started: false,
        }
    }

    pub fn state(&self) -> &MomaState {
        &self.state
    }

    /// Feeds one frame. `g_t` is the marker-to-camera measurement, if the
    /// marker was detected. Returns `None` when no estimate is available.
    pub fn process(
        &mut self,
        frame: u64,
        time: f64,
        marker: AgentPhase,
        camera: AgentPhase,
        g_t: Option<&Pose>,
    ) -> Result<Option<OdometryEstimate>, OdometryError> {
        if self.started && frame <= self.frame {
            return Err(ProtocolViolation::OutOfOrder { frame }.into());
        }
        self.started = true;
        self.frame = frame;
        if marker == AgentPhase::Mobile && camera == AgentPhase::Mobile {
            return Err(ProtocolViolation::MarkerAndCameraMobile { frame }.into());
        }
        let prev = (self.state.marker_phase, self.state.camera_phase);
        if prev != (marker, camera) {
            self.on_phase_change(frame, time, prev, (marker, camera))?;
        }
        self.state.marker_phase = marker;
        self.state.camera_phase = camera;

        match (marker, camera) {
            (AgentPhase::Static, AgentPhase::Static) => {
                if let Some(g) = g_t {
                    self.state.history.push((*g, time));
                }
                // Running window mean; equals the committed value once the window closes.
                if self.after_marker_move {
                    let g1 = self.g_tau1.expect("marker move always records g_tau1");
                    let g2 = match average_pose(&self.state.history) {
                        Ok(g) => g,
                        Err(_) => return Ok(None),
                    };
                    let marker_pose = relative_marker_pose(&g1, &g2).compose(&self.state.anchor);
                    return Ok(Some(OdometryEstimate {
                        camera: g1.compose(&self.state.anchor),
                        marker: marker_pose,
                        timestamp: time,
                        cycle: self.state.cycle,
                    }));
                }
                match g_t {
                    Some(g) => self.state.camera_pose(g, time).map(Some),
                    None => Ok(None),
                }
            }
            (AgentPhase::Static, AgentPhase::Mobile) => match g_t {
                Some(g) => self.state.camera_pose(g, time).map(Some),
                None => Ok(None),
            },
            (AgentPhase::Mobile, AgentPhase::Static) => {
                let g1 = self.g_tau1.expect("set when the marker starts moving");
                match g_t {
                    Some(g) => Ok(Some(OdometryEstimate {
                        camera: g1.compose(&self.state.anchor),
                        marker: self.state.marker_pose_during_motion(g, &g1)?,
                        timestamp: time,
                        cycle: self.state.cycle,
                    })),
                    None => Ok(None),
                }
            }
            (AgentPhase::Mobile, AgentPhase::Mobile) => unreachable!(),
        }
    }

    fn on_phase_change(
        &mut self,
        frame: u64,
        time: f64,
        prev: (AgentPhase, AgentPhase),
        next: (AgentPhase, AgentPhase),
    ) -> Result<(), OdometryError> {
        use AgentPhase::{Mobile, Static};
        let window_len = self.state.history.len();
        match (prev, next) {
            // Marker starts moving: close the τ1 window.
            ((Static, Static), (Mobile, Static)) => {
                self.check_window(frame, window_len)?;
                if self.after_marker_move {
                    self.close_marker_window(time)?;
                }
                self.g_tau1 = Some(average_pose(&self.state.history).map_err(|_| {
                    OdometryError::from(ProtocolViolation::EmptyWindow { frame, body: 1 })
                })?);
                self.state.history.clear();
            }
            // Camera starts moving after a marker move: close the τ2 window and commit.
            ((Static, Static), (Static, Mobile)) => {
                self.check_window(frame, window_len)?;
                if self.after_marker_move {
                    self.close_marker_window(time)?;
                }
                self.state.history.clear();
            }
            // A mover stops: a new both-static window begins.
            ((Mobile, Static), (Static, Static)) => {
                self.after_marker_move = true;
                self.state.history.clear();
            }
            ((Static, Mobile), (Static, Static)) => {
                self.state.history.clear();
            }
            // Switching movers without a both-static window.
            _ => {
                return Err(ProtocolViolation::ShortWindow {
                    frame,
                    body: 0,
                    frames: 0,
                    required: self.window_frames as u64,
                }
                .into())
            }
        }
        Ok(())
    }

    fn check_window(&self, frame: u64, len: usize) -> Result<(), OdometryError> {
        if len == 0 {
            return Err(ProtocolViolation::EmptyWindow { frame, body: 0 }.into());
        }
        if len < self.window_frames {
            return Err(ProtocolViolation::ShortWindow {
                frame,
                body: 0,
                frames: len as u64,
                required: self.window_frames as u64,
            }
            .into());
        }
        Ok(())
    }

    fn close_marker_window(&mut self, time: f64) -> Result<(), OdometryError> {
        let g1 = self.g_tau1.take().expect("marker move always records g_tau1");
        let g2 = average_pose(&self.state.history)?;
        self.state = MomaState {
            marker_phase: self.state.marker_phase,
            camera_phase: self.state.camera_phase,
            ..self.state.commit_switch(&g1, &g2, time)
        };
        self.after_marker_move = false;
        Ok(())
    }

    /// Closes a pending marker window at the end of a run.
    pub fn finish(&mut self, time: f64) -> Result<(), OdometryError> {
        if self.after_marker_move {
            self.close_marker_window(time)?;
        }
        Ok(())
    }
}

/// Translation of the frame described by a world-to-frame pose.
pub fn position_of(extrinsic: &Pose) -> Vector3<f64> {
    extrinsic.origin_in_world()
}
