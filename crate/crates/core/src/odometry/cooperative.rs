//! Mobile-marker odometry for rigs of several rigid bodies.
//!
//! Each body may carry a marker, a camera or both. A [`Link`] states that a
//! camera can observe a marker. Bodies take turns moving; every body that
//! comes to rest is re-anchored against a body that stayed static while it
//! moved, using the averaged measurements of its static window.
//!
//! Body poses are world-to-body extrinsics, mounts are placements of the
//! sensor frame in the body frame.

use serde::{Deserialize, Serialize};

use super::{average_pose, AgentPhase, OdometryError, ProtocolViolation};
use crate::geometry::Pose;

pub type BodyId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct BodySpec {
    pub name: String,
    pub marker_mount: Option<Pose>,
    pub camera_mount: Option<Pose>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Link {
    pub camera: BodyId,
    pub marker: BodyId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    pub bodies: Vec<BodySpec>,
    pub links: Vec<Link>,
}

impl Rig {
    fn has_link(&self, camera: BodyId, marker: BodyId) -> bool {
        self.links.iter().any(|l| l.camera == camera && l.marker == marker)
    }

    /// Ways to relate `body` to `reference`, best first.
    pub fn relations(&self, body: BodyId, reference: BodyId) -> Vec<Relation> {
        let mut out = Vec::new();
        if body == reference {
            return out;
        }
        if self.has_link(body, reference) {
            out.push(Relation::CameraSide);
        }
        if self.has_link(reference, body) {
            out.push(Relation::MarkerSide);
        }
        for c in 0..self.bodies.len() {
            if c != body && c != reference && self.has_link(c, body) && self.has_link(c, reference) {
                out.push(Relation::Shared { camera: c });
            }
        }
        out
    }

    fn marker_mount(&self, b: BodyId) -> Pose {
        self.bodies[b].marker_mount.unwrap_or_else(Pose::identity)
    }

    fn camera_mount(&self, b: BodyId) -> Pose {
        self.bodies[b].camera_mount.unwrap_or_else(Pose::identity)
    }

    /// Raw link measurement relating `body` to `reference` in one frame.
    pub fn link_measurement(
        &self,
        relation: Relation,
        body: BodyId,
        reference: BodyId,
        measurements: &[Measurement],
    ) -> Option<Pose> {
        let find = |c: BodyId, m: BodyId| {
            measurements
                .iter()
                .find(|x| x.camera == c && x.marker == m)
                .map(|x| x.g)
        };
        match relation {
            Relation::CameraSide => find(body, reference),
            Relation::MarkerSide => find(reference, body),
            Relation::Shared { camera } => {
                let gb = find(camera, body)?;
                let gr = find(camera, reference)?;
                Some(gb.inverse().compose(&gr))
            }
        }
    }

    /// Transform `X` with `G_body = X · G_reference` for a link measurement `m`.
    pub fn transfer(&self, relation: Relation, body: BodyId, reference: BodyId, m: &Pose) -> Pose {
        match relation {
            Relation::CameraSide => self
                .camera_mount(body)
                .compose(m)
                .compose(&self.marker_mount(reference).inverse()),
            Relation::MarkerSide => self
                .marker_mount(body)
                .compose(&m.inverse())
                .compose(&self.camera_mount(reference).inverse()),
            Relation::Shared { .. } => self
                .marker_mount(body)
                .compose(m)
                .compose(&self.marker_mount(reference).inverse()),
        }
    }
}

/// How a body is related to its reference body.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    /// The body's camera observes the reference's marker.
    CameraSide,
    /// The reference's camera observes the body's marker.
    MarkerSide,
    /// A third camera observes both markers.
    Shared { camera: BodyId },
}

/// Marker-to-camera pose measured by the camera on `camera` for the marker on `marker`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Measurement {
    pub camera: BodyId,
    pub marker: BodyId,
    pub g: Pose,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameInput {
    pub index: u64,
    pub time: f64,
    pub phases: Vec<AgentPhase>,
    pub measurements: Vec<Measurement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateSource {
    /// Committed anchor of a resting body.
    Anchored,
    /// Running mean of an open static window.
    Window,
    /// Single-frame estimate of a moving body.
    Live,
    Unavailable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyEstimate {
    pub pose: Option<Pose>,
    pub phase: AgentPhase,
    pub source: EstimateSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    pub index: u64,
    pub time: f64,
    pub estimates: Vec<BodyEstimate>,
    pub cycle: usize,
}

/// A committed static window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommitRecord {
    pub frame: u64,
    pub body: BodyId,
    pub reference: BodyId,
    pub relation: Relation,
    /// Window mean of the raw link measurements.
    pub averaged: Pose,
    pub anchor: Pose,
    pub after_motion: bool,
}

#[derive(Debug, Clone)]
struct Window {
    reference: BodyId,
    relation: Relation,
    history: Vec<(Pose, f64)>,
    start_frame: u64,
    after_motion: bool,
    order: u64,
}

#[derive(Debug, Clone)]
enum Status {
    Anchored(Pose),
    Pending(Window),
    Moving,
}

#[derive(Debug, Clone)]
struct Body {
    status: Status,
    phase: AgentPhase,
    static_since: u64,
    motion_start: u64,
}

#[derive(Debug, Clone)]
pub struct CooperativeEstimator {
    rig: Rig,
    window_frames: u64,
    initial: Vec<(BodyId, Pose)>,
    bodies: Vec<Body>,
    last_frame: Option<u64>,
    next_order: u64,
    switches: usize,
    commits: Vec<CommitRecord>,
}

impl CooperativeEstimator {
    /// `initial` fixes the world frame: those bodies start anchored at the
    /// given extrinsics, every other body is anchored from its first window.
    pub fn new(rig: Rig, initial: Vec<(BodyId, Pose)>, window_frames: usize) -> Self {
        Self {
            rig,
            window_frames: window_frames.max(1) as u64,
            initial,
            bodies: Vec::new(),
            last_frame: None,
            next_order: 0,
            switches: 0,
            commits: Vec::new(),
        }
    }

    pub fn rig(&self) -> &Rig {
        &self.rig
    }

    pub fn switches(&self) -> usize {
        self.switches
    }

    pub fn commits(&self) -> &[CommitRecord] {
        &self.commits
    }

    pub fn process(&mut self, input: &FrameInput) -> Result<FrameOutput, OdometryError> {
        let k = input.index;
        let n = self.rig.bodies.len();
        if input.phases.len() != n {
            return Err(ProtocolViolation::PhaseCount {
                frame: k,
                got: input.phases.len(),
                expected: n,
            }
            .into());
        }
        match self.last_frame {
            Some(last) if k <= last => return Err(ProtocolViolation::OutOfOrder { frame: k }.into()),
            None => self.initialize(input)?,
            Some(_) => self.advance_phases(input)?,
        }
        self.last_frame = Some(k);
        self.check_movers(k)?;

        for b in 0..n {
            let (reference, relation) = match &self.bodies[b].status {
                Status::Pending(w) => (w.reference, w.relation),
                _ => continue,
            };
            if let Some(m) = self.rig.link_measurement(relation, b, reference, &input.measurements) {
                if let Status::Pending(w) = &mut self.bodies[b].status {
                    w.history.push((m, input.time));
                }
            }
        }

        Ok(FrameOutput {
            index: k,
            time: input.time,
            estimates: self.estimates(&input.measurements),
            cycle: self.switches,
        })
    }

    /// Commits every open window at the end of a run.
    pub fn finish(&mut self) -> Result<(), OdometryError> {
        let frame = self.last_frame.map_or(0, |f| f + 1);
        self.finalize_windows(frame)
    }

    fn initialize(&mut self, input: &FrameInput) -> Result<(), OdometryError> {
        let k = input.index;
        self.bodies = input
            .phases
            .iter()
            .map(|&phase| Body {
                status: Status::Moving,
                phase,
                static_since: k,
                motion_start: k,
            })
            .collect();
        for &(b, pose) in &self.initial {
            if b < self.bodies.len() && self.bodies[b].phase.is_static() {
                self.bodies[b].status = Status::Anchored(pose);
            }
        }
        if !self.bodies.iter().any(|b| matches!(b.status, Status::Anchored(_))) {
            return Err(ProtocolViolation::NoStaticReference { frame: k, body: 0 }.into());
        }
        // Breadth-first over static bodies so every window has an earlier reference.
        loop {
            let mut progressed = false;
            for b in 0..self.bodies.len() {
                if !self.bodies[b].phase.is_static() || !matches!(self.bodies[b].status, Status::Moving) {
                    continue;
                }
                if let Some((r, rel)) = self.pick_reference(b, None) {
                    self.open_window(b, r, rel, k, false);
                    progressed = true;
                }
            }
            if !progressed {
                break;
            }
        }
        for (b, body) in self.bodies.iter().enumerate() {
            if body.phase.is_static() && matches!(body.status, Status::Moving) {
                return Err(ProtocolViolation::NoStaticReference { frame: k, body: b }.into());
            }
        }
        Ok(())
    }

    fn advance_phases(&mut self, input: &FrameInput) -> Result<(), OdometryError> {
        let k = input.index;
        let changed: Vec<BodyId> = (0..self.bodies.len())
            .filter(|&b| self.bodies[b].phase != input.phases[b])
            .collect();
        if changed.is_empty() {
            return Ok(());
        }
        self.finalize_windows(k)?;
        for &b in &changed {
            let body = &mut self.bodies[b];
            body.phase = input.phases[b];
            match body.phase {
                AgentPhase::Mobile => {
                    body.status = Status::Moving;
                    body.motion_start = k;
                }
                AgentPhase::Static => body.static_since = k,
            }
        }
        for &b in &changed {
            if !self.bodies[b].phase.is_static() {
                continue;
            }
            let since = self.bodies[b].motion_start;
            match self.pick_reference(b, Some(since)) {
                Some((r, rel)) => self.open_window(b, r, rel, k, true),
                None => {
                    let moved = (0..self.bodies.len()).find(|&r| {
                        !self.rig.relations(b, r).is_empty() && self.bodies[r].phase.is_static()
                    });
                    return Err(match moved {
                        Some(reference) => ProtocolViolation::ReferenceMoved {
                            frame: k,
                            body: b,
                            reference,
                        },
                        None => ProtocolViolation::NoStaticReference { frame: k, body: b },
                    }
                    .into());
                }
            }
        }
        Ok(())
    }

    /// Best static reference for `body`. With `since`, the reference must
    /// have rested from that frame on.
    fn pick_reference(&self, body: BodyId, since: Option<u64>) -> Option<(BodyId, Relation)> {
        let mut best: Option<(u8, BodyId, Relation)> = None;
        for r in 0..self.bodies.len() {
            let rb = &self.bodies[r];
            if r == body || !rb.phase.is_static() {
                continue;
            }
            if since.is_some_and(|s| rb.static_since > s) {
                continue;
            }
            let usable = match &rb.status {
                Status::Anchored(_) => true,
                Status::Pending(_) => since.is_none(),
                Status::Moving => false,
            };
            if !usable {
                continue;
            }
            if let Some(&rel) = self.rig.relations(body, r).first() {
                let rank = relation_rank(rel);
                if best.is_none_or(|(br, _, _)| rank < br) {
                    best = Some((rank, r, rel));
                }
            }
        }
        best.map(|(_, r, rel)| (r, rel))
    }

    fn open_window(&mut self, body: BodyId, reference: BodyId, relation: Relation, frame: u64, after_motion: bool) {
        self.bodies[body].status = Status::Pending(Window {
            reference,
            relation,
            history: Vec::new(),
            start_frame: frame,
            after_motion,
            order: self.next_order,
        });
        self.next_order += 1;
    }

    fn finalize_windows(&mut self, frame: u64) -> Result<(), OdometryError> {
        let mut pending: Vec<(u64, BodyId)> = self
            .bodies
            .iter()
            .enumerate()
            .filter_map(|(b, body)| match &body.status {
                Status::Pending(w) => Some((w.order, b)),
                _ => None,
            })
            .collect();
        pending.sort_unstable();
        for (_, b) in pending {
            let Status::Pending(w) = &self.bodies[b].status else {
                unreachable!()
            };
            let frames = frame.saturating_sub(w.start_frame);
            if w.history.is_empty() {
                return Err(ProtocolViolation::EmptyWindow { frame, body: b }.into());
            }
            if frames < self.window_frames {
                return Err(ProtocolViolation::ShortWindow {
                    frame,
                    body: b,
                    frames,
                    required: self.window_frames,
                }
                .into());
            }
            let Status::Anchored(reference_pose) = self.bodies[w.reference].status else {
                return Err(ProtocolViolation::ReferenceMoved {
                    frame,
                    body: b,
                    reference: w.reference,
                }
                .into());
            };
            let averaged = average_pose(&w.history)?;
            let anchor = self
                .rig
                .transfer(w.relation, b, w.reference, &averaged)
                .compose(&reference_pose);
            if w.after_motion {
                self.switches += 1;
            }
            self.commits.push(CommitRecord {
                frame,
                body: b,
                reference: w.reference,
                relation: w.relation,
                averaged,
                anchor,
                after_motion: w.after_motion,
            });
            self.bodies[b].status = Status::Anchored(anchor);
        }
        Ok(())
    }

    fn check_movers(&self, frame: u64) -> Result<(), OdometryError> {
        if self.bodies.iter().all(|b| !b.phase.is_static()) {
            return Err(ProtocolViolation::AllMobile { frame }.into());
        }
        for b in 0..self.bodies.len() {
            if self.bodies[b].phase.is_static() {
                continue;
            }
            let anchored = (0..self.bodies.len())
                .any(|r| self.bodies[r].phase.is_static() && !self.rig.relations(b, r).is_empty());
            if !anchored {
                return Err(ProtocolViolation::NoStaticReference { frame, body: b }.into());
            }
        }
        Ok(())
    }

    fn estimates(&self, measurements: &[Measurement]) -> Vec<BodyEstimate> {
        let n = self.bodies.len();
        let mut out = vec![
            BodyEstimate {
                pose: None,
                phase: AgentPhase::Static,
                source: EstimateSource::Unavailable,
            };
            n
        ];
        for (b, body) in self.bodies.iter().enumerate() {
            out[b].phase = body.phase;
            if let Status::Anchored(p) = body.status {
                out[b].pose = Some(p);
                out[b].source = EstimateSource::Anchored;
            }
        }
        let mut pending: Vec<(u64, BodyId)> = self
            .bodies
            .iter()
            .enumerate()
            .filter_map(|(b, body)| match &body.status {
                Status::Pending(w) => Some((w.order, b)),
                _ => None,
            })
            .collect();
        pending.sort_unstable();
        for (_, b) in pending {
            let Status::Pending(w) = &self.bodies[b].status else {
                unreachable!()
            };
            let (Some(reference), Ok(avg)) = (out[w.reference].pose, average_pose(&w.history)) else {
                continue;
            };
            out[b].pose = Some(self.rig.transfer(w.relation, b, w.reference, &avg).compose(&reference));
            out[b].source = EstimateSource::Window;
        }
        for b in 0..n {
            if !matches!(self.bodies[b].status, Status::Moving) {
                continue;
            }
            let mut best: Option<(u8, Pose)> = None;
            for r in 0..n {
                if !self.bodies[r].phase.is_static() {
                    continue;
                }
                let (rank_base, Some(reference)) = (match out[r].source {
                    EstimateSource::Anchored => 0,
                    _ => 8,
                }, out[r].pose) else {
                    continue;
                };
                for rel in self.rig.relations(b, r) {
                    let rank = rank_base + relation_rank(rel);
                    if best.is_some_and(|(br, _)| br <= rank) {
                        continue;
                    }
                    if let Some(m) = self.rig.link_measurement(rel, b, r, measurements) {
                        best = Some((rank, self.rig.transfer(rel, b, r, &m).compose(&reference)));
                    }
                }
            }
            if let Some((_, pose)) = best {
                out[b].pose = Some(pose);
                out[b].source = EstimateSource::Live;
            }
        }
        out
    }
}

fn relation_rank(rel: Relation) -> u8 {
    match rel {
        Relation::CameraSide => 0,
        Relation::MarkerSide => 1,
        Relation::Shared { .. } => 2,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn pair_rig() -> Rig {
        Rig {
            bodies: vec![
                BodySpec {
                    name: "marker".into(),
                    marker_mount: Some(Pose::identity()),
                    camera_mount: None,
                },
                BodySpec {
                    name: "camera".into(),
                    marker_mount: None,
                    camera_mount: Some(Pose::identity()),
                },
            ],
            links: vec![Link { camera: 1, marker: 0 }],
        }
    }

    fn frame(index: u64, phases: [AgentPhase; 2], g: Pose) -> FrameInput {
        FrameInput {
            index,
            time: index as f64 * 0.04,
            phases: phases.to_vec(),
            measurements: vec![Measurement { camera: 1, marker: 0, g }],
        }
    }

    #[test]
    fn transfer_matches_direct_composition_with_mounts() {
        let mut rig = pair_rig();
        rig.bodies[0].marker_mount = Some(Pose::from_xyz_yaw(0.1, 0.0, 0.3, 0.4));
        rig.bodies[1].camera_mount = Some(Pose::from_xyz_yaw(-0.2, 0.05, 0.25, -1.0));
        // placements of the two bodies in the world
        let pm = Pose::from_xyz_yaw(1.0, 0.5, 0.0, 0.3);
        let pc = Pose::from_xyz_yaw(-0.4, 0.1, 0.0, 0.2);
        let marker_world = pm.compose(rig.bodies[0].marker_mount.as_ref().unwrap());
        let camera_world = pc.compose(rig.bodies[1].camera_mount.as_ref().unwrap());
        let g = camera_world.inverse().compose(&marker_world);
        let g_cam = pc.inverse();
        let g_mark = pm.inverse();
        let est_cam = rig.transfer(Relation::CameraSide, 1, 0, &g).compose(&g_mark);
        let est_mark = rig.transfer(Relation::MarkerSide, 0, 1, &g).compose(&g_cam);
        assert!(est_cam.frobenius_distance(&g_cam).0 < 1e-12);
        assert!(est_cam.frobenius_distance(&g_cam).1 < 1e-12);
        assert!(est_mark.frobenius_distance(&g_mark).1 < 1e-12);
    }

    #[test]
    fn noiseless_leapfrog_is_exact() {
        use AgentPhase::{Mobile, Static};
        let rig = pair_rig();
        let mut est = CooperativeEstimator::new(rig, vec![(0, Pose::identity())], 3);
        // Marker at origin; camera 1 m behind along world -Z looking +Z.
        let mut marker = Pose::identity();
        let mut camera = Pose::translation_xyz(0.0, 0.0, -1.0);
        let mut k = 0;
        let feed = |est: &mut CooperativeEstimator, k: &mut u64, ph, m: &Pose, c: &Pose| {
            let g = c.inverse().compose(m);
            let out = est.process(&frame(*k, ph, g)).unwrap();
            *k += 1;
            out
        };
        for _ in 0..4 {
            feed(&mut est, &mut k, [Static, Static], &marker, &camera);
        }
        for step in 1..=5 {
            marker = Pose::translation_xyz(0.0, 0.0, 0.1 * step as f64);
            feed(&mut est, &mut k, [Mobile, Static], &marker, &camera);
        }
        for _ in 0..4 {
            feed(&mut est, &mut k, [Static, Static], &marker, &camera);
        }
        for step in 1..=5 {
            camera = Pose::translation_xyz(0.0, 0.0, -1.0 + 0.1 * step as f64);
            feed(&mut est, &mut k, [Static, Mobile], &marker, &camera);
        }
        let mut out = None;
        for _ in 0..3 {
            out = Some(feed(&mut est, &mut k, [Static, Static], &marker, &camera));
        }
        let out = out.unwrap();
        est.finish().unwrap();
        assert_eq!(out.cycle, 1);
        assert_eq!(est.switches(), 2);
        let cam = out.estimates[1].pose.unwrap();
        assert!((cam.origin_in_world() - Vector3::new(0.0, 0.0, -0.5)).norm() < 1e-12);
        let mk = out.estimates[0].pose.unwrap();
        assert!((mk.origin_in_world() - Vector3::new(0.0, 0.0, 0.5)).norm() < 1e-12);
    }

    #[test]
    fn short_window_is_rejected() {
        use AgentPhase::{Mobile, Static};
        let mut est = CooperativeEstimator::new(pair_rig(), vec![(0, Pose::identity())], 5);
        let g = Pose::translation_xyz(0.0, 0.0, 1.0);
        est.process(&frame(0, [Static, Static], g)).unwrap();
        est.process(&frame(1, [Static, Static], g)).unwrap();
        let err = est.process(&frame(2, [Mobile, Static], g)).unwrap_err();
        assert!(matches!(err, OdometryError::Protocol(ProtocolViolation::ShortWindow { .. })));
    }

    #[test]
    fn simultaneous_motion_is_rejected() {
        use AgentPhase::{Mobile, Static};
        let mut est = CooperativeEstimator::new(pair_rig(), vec![(0, Pose::identity())], 1);
        let g = Pose::translation_xyz(0.0, 0.0, 1.0);
        est.process(&frame(0, [Static, Static], g)).unwrap();
        let err = est.process(&frame(1, [Mobile, Mobile], g)).unwrap_err();
        assert!(matches!(err, OdometryError::Protocol(ProtocolViolation::AllMobile { .. })));
    }

    #[test]
    fn out_of_order_frames_are_rejected() {
        use AgentPhase::Static;
        let mut est = CooperativeEstimator::new(pair_rig(), vec![(0, Pose::identity())], 1);
        let g = Pose::translation_xyz(0.0, 0.0, 1.0);
        est.process(&frame(3, [Static, Static], g)).unwrap();
        assert!(est.process(&frame(3, [Static, Static], g)).is_err());
    }
}
