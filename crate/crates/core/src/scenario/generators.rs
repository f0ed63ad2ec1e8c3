//! Scenario generators: caterpillar chains, the sled, the top observer and
//! the two reference missions built on it.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{
    validate, AgentSpec, CameraSpec, Keyframe, Keypoint, MarkerSpec, Mount, ScenarioError, ScenarioScript,
    ScheduleRow, VoRig, ANGULAR_SPEED, FRAME_RATE, LINEAR_SPEED, WINDOW_FRAMES,
};
use crate::camera::{coverage_area, CameraIntrinsics};
use crate::odometry::cooperative::Link;
use crate::odometry::AgentPhase;
use crate::vo::{FeatureField, Surface};

/// Camera looking along body +X with image x along body −Y.
const FORWARD_CAMERA: [f64; 3] = [-FRAC_PI_2, 0.0, -FRAC_PI_2];
/// Camera looking along body −X with image x along body +Y.
const BACKWARD_CAMERA: [f64; 3] = [-FRAC_PI_2, 0.0, FRAC_PI_2];
/// Marker facing body −X, upright.
const BACKWARD_MARKER: [f64; 3] = [FRAC_PI_2, 0.0, -FRAC_PI_2];
/// Marker facing body +X, upright.
const FORWARD_MARKER: [f64; 3] = [FRAC_PI_2, 0.0, FRAC_PI_2];
/// Camera looking straight down, image x along body +X.
const DOWN_CAMERA: [f64; 3] = [PI, 0.0, 0.0];

/// Target pose of a ground robot. Consecutive waypoints up to and including
/// one with `stop` set form a single move.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
    pub stop: bool,
}

impl Waypoint {
    pub fn stop(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw, stop: true }
    }

    pub fn via(x: f64, y: f64, yaw: f64) -> Self {
        Self { x, y, yaw, stop: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Altitude {
    /// Lowest height that keeps every marker in view, within the height limits.
    Adaptive,
    /// Constant height above the marker plane.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Timing {
    frame_rate: f64,
    window_frames: usize,
    linear_speed: f64,
    angular_speed: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            frame_rate: FRAME_RATE,
            window_frames: WINDOW_FRAMES,
            linear_speed: LINEAR_SPEED,
            angular_speed: ANGULAR_SPEED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaterpillarOptions {
    pub intrinsics: CameraIntrinsics,
    pub marker_side: f64,
    /// Camera-to-marker distance while both robots rest.
    pub gap: f64,
    pub sensor_height: f64,
    /// Distance from the body origin to the front and back sensors.
    pub half_length: f64,
    pub window_frames: usize,
}

impl Default for CaterpillarOptions {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::vga(),
            marker_side: 0.15,
            gap: 0.5,
            sensor_height: 0.3,
            half_length: 0.15,
            window_frames: WINDOW_FRAMES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopObserverOptions {
    pub intrinsics: CameraIntrinsics,
    pub marker_side: f64,
    /// Height of the marker boards above the floor.
    pub marker_height: f64,
    pub altitude: Altitude,
    /// Height limits above the marker plane.
    pub min_height: f64,
    pub max_height: f64,
    /// Clearance kept between each board and the image border, meters.
    pub coverage_margin: f64,
    pub pursuit_time_constant: f64,
    pub window_frames: usize,
}

impl Default for TopObserverOptions {
    fn default() -> Self {
        Self {
            intrinsics: CameraIntrinsics::pal_wide(),
            marker_side: 0.3,
            marker_height: 0.25,
            altitude: Altitude::Adaptive,
            min_height: 1.0,
            max_height: 4.0,
            coverage_margin: 0.15,
            pursuit_time_constant: 0.3,
            window_frames: WINDOW_FRAMES,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquareOptions {
    /// Stops of the main robot along each side of the square.
    pub keypoints_per_leg: usize,
    /// Path length factor: each move runs `(factor − 1) / 2` of its length
    /// past the stop and comes back.
    pub overshoot: f64,
    /// Helper distance behind the main robot, along its next direction of travel.
    pub helper_offset: f64,
    pub helper_lateral: f64,
    pub observer: TopObserverOptions,
    /// Feature densities of the visual odometry scene.
    pub rich_density: f64,
    pub poor_density: f64,
}

impl Default for SquareOptions {
    fn default() -> Self {
        Self {
            keypoints_per_leg: 1,
            overshoot: 1.0,
            helper_offset: 0.35,
            helper_lateral: 0.0,
            observer: TopObserverOptions::default(),
            rich_density: 6.0,
            poor_density: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineOptions {
    pub segment_length: f64,
    pub segments: usize,
    pub keypoints_per_segment: usize,
    pub helper_offset: f64,
    pub helper_lateral: f64,
    pub observer: TopObserverOptions,
    pub feature_density: f64,
}

impl Default for LineOptions {
    fn default() -> Self {
        Self {
            segment_length: 4.595,
            segments: 3,
            keypoints_per_segment: 6,
            helper_offset: 0.35,
            helper_lateral: 0.4,
            observer: TopObserverOptions::default(),
            feature_density: 6.0,
        }
    }
}

/// Planar target of one piece of motion.
#[derive(Debug, Clone, Copy)]
struct Target {
    x: f64,
    y: f64,
    yaw: f64,
}

struct Builder {
    timing: Timing,
    frame: u64,
    tracks: Vec<Vec<Keyframe>>,
    schedule: Vec<ScheduleRow>,
    keypoints: Vec<Keypoint>,
    main: usize,
}

impl Builder {
    fn new(starts: &[Keyframe], timing: Timing, main: usize) -> Self {
        Self {
            timing,
            frame: 0,
            tracks: starts.iter().map(|k| vec![Keyframe { t: 0.0, ..*k }]).collect(),
            schedule: Vec::new(),
            keypoints: Vec::new(),
            main,
        }
    }

    fn time(&self, frame: u64) -> f64 {
        frame as f64 / self.timing.frame_rate
    }

    fn frames_for(&self, seconds: f64) -> u64 {
        (seconds * self.timing.frame_rate - 1e-9).ceil().max(0.0) as u64
    }

    fn last(&self, agent: usize) -> Keyframe {
        *self.tracks[agent].last().expect("tracks start with a keyframe")
    }

    fn push(&mut self, agent: usize, frame: u64, x: f64, y: f64, yaw: f64) {
        let last = self.last(agent);
        let t = self.time(frame);
        self.tracks[agent].push(Keyframe { t, x, y, z: last.z, yaw });
    }

    fn wait(&mut self, frames: u64) {
        self.frame += frames;
    }

    /// Moves several agents at once, each through its own targets, all
    /// starting at the current frame. Translation comes before rotation
    /// within each target. Returns the frame at which the last agent stops.
    fn move_group(&mut self, moves: &[(usize, Vec<Target>)], keypoint: bool) -> u64 {
        let start = self.frame;
        let mut end_all = start;
        for (agent, targets) in moves {
            let agent = *agent;
            let mut f = start;
            let mut cur = self.last(agent);
            if cur.t < self.time(start) {
                self.push(agent, start, cur.x, cur.y, cur.yaw);
            }
            for t in targets {
                let dist = (t.x - cur.x).hypot(t.y - cur.y);
                if dist > 1e-12 {
                    f += self.frames_for(dist / self.timing.linear_speed).max(1);
                    self.push(agent, f, t.x, t.y, cur.yaw);
                }
                let turn = (t.yaw - cur.yaw).abs();
                if turn > 1e-12 {
                    f += self.frames_for(turn / self.timing.angular_speed).max(1);
                    self.push(agent, f, t.x, t.y, t.yaw);
                }
                cur = self.last(agent);
            }
            if f > start {
                self.schedule.push(ScheduleRow {
                    agent,
                    phase: AgentPhase::Mobile,
                    start: self.time(start),
                    end: self.time(f),
                });
                if keypoint && agent == self.main {
                    self.keypoints.push(Keypoint {
                        agent,
                        frame: f,
                        x: cur.x,
                        y: cur.y,
                        yaw: cur.yaw,
                    });
                }
            }
            end_all = end_all.max(f);
        }
        self.frame = end_all;
        end_all
    }
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::InvalidParameter(msg.into())
}

fn finish(script: ScenarioScript) -> Result<ScenarioScript, ScenarioError> {
    validate(&script)?;
    script.check_visibility()?;
    Ok(script)
}

/// Room of textured walls around the rectangle, `pad` meters away.
fn room_around(min: Vector2<f64>, max: Vector2<f64>, pad: f64, density: f64) -> FeatureField {
    FeatureField::room(min.x - pad, min.y - pad, max.x + pad, max.y + pad, 2.5, density)
}

fn forward_vo(agent: usize, height: f64, field: FeatureField) -> VoRig {
    VoRig {
        agent,
        intrinsics: CameraIntrinsics::vga(),
        mount: Mount::new([0.1, 0.0, height], FORWARD_CAMERA),
        field,
    }
}

/// `n` robots in a line along +X, robot 0 in front. Each robot but the last
/// carries a marker facing back; each robot but the first carries a camera
/// facing forward at the marker ahead. Even and odd robots advance `segment`
/// meters in turns; the last robot is the main agent.
pub fn multi_robot_caterpillar(
    n: usize,
    segment: f64,
    cycles: usize,
    opts: &CaterpillarOptions,
) -> Result<ScenarioScript, ScenarioError> {
    if n < 2 {
        return Err(invalid("a caterpillar needs at least two robots"));
    }
    if !(segment >= 0.0 && segment.is_finite()) || (cycles > 0 && segment == 0.0) {
        return Err(invalid("segment length must be positive"));
    }
    let h = opts.half_length;
    let spacing = opts.gap + 2.0 * h;
    let timing = Timing {
        window_frames: opts.window_frames,
        ..Timing::default()
    };
    let mut agents = Vec::new();
    let mut links = Vec::new();
    let mut starts = Vec::new();
    for i in 0..n {
        let x = -(i as f64) * spacing;
        starts.push(Keyframe { t: 0.0, x, y: 0.0, z: 0.0, yaw: 0.0 });
        agents.push(AgentSpec {
            name: format!("robot{i}"),
            marker: (i + 1 < n).then_some(MarkerSpec {
                id: i as u32,
                side: opts.marker_side,
                mount: Mount::new([-h, 0.0, opts.sensor_height], BACKWARD_MARKER),
            }),
            camera: (i > 0).then_some(CameraSpec {
                id: i as u32,
                intrinsics: opts.intrinsics,
                mount: Mount::new([h, 0.0, opts.sensor_height], FORWARD_CAMERA),
            }),
            keyframes: Vec::new(),
        });
        if i > 0 {
            links.push(Link { camera: i, marker: i - 1 });
        }
    }
    let main = n - 1;
    let w = opts.window_frames as u64;
    let mut b = Builder::new(&starts, timing, main);
    b.wait(w);
    for _ in 0..cycles {
        for parity in [0, 1] {
            let moves: Vec<(usize, Vec<Target>)> = (0..n)
                .filter(|i| i % 2 == parity)
                .map(|i| {
                    let k = b.last(i);
                    (i, vec![Target { x: k.x + segment, y: k.y, yaw: k.yaw }])
                })
                .collect();
            b.move_group(&moves, true);
            b.wait(w);
        }
    }
    if cycles == 0 {
        b.wait(w);
    }
    let frames = b.frame;
    let x_end = b.last(0).x;
    let field = room_around(
        Vector2::new(-(n as f64) * spacing, 0.0),
        Vector2::new(x_end, 0.0),
        2.5,
        6.0,
    );
    build(
        format!("caterpillar-{n}"),
        b,
        agents,
        links,
        frames,
        opts.window_frames,
        Some(forward_vo(main, opts.sensor_height, field)),
    )
}

/// Marker robot in front, camera robot behind; they advance in turns.
pub fn two_robot_caterpillar(
    segment: f64,
    cycles: usize,
    opts: &CaterpillarOptions,
) -> Result<ScenarioScript, ScenarioError> {
    multi_robot_caterpillar(2, segment, cycles, opts)
}

/// One robot with a backward camera pulling a marker sled. The sled only
/// moves while the robot rests.
pub fn single_robot_caterpillar(
    segment: f64,
    cycles: usize,
    opts: &CaterpillarOptions,
) -> Result<ScenarioScript, ScenarioError> {
    if !(segment >= 0.0 && segment.is_finite()) || (cycles > 0 && segment == 0.0) {
        return Err(invalid("segment length must be positive"));
    }
    let h = opts.half_length;
    let timing = Timing {
        window_frames: opts.window_frames,
        ..Timing::default()
    };
    let starts = [
        Keyframe { t: 0.0, x: 0.0, y: 0.0, z: 0.0, yaw: 0.0 },
        Keyframe { t: 0.0, x: -(h + opts.gap), y: 0.0, z: 0.0, yaw: 0.0 },
    ];
    let agents = vec![
        AgentSpec {
            name: "robot".into(),
            marker: None,
            camera: Some(CameraSpec {
                id: 0,
                intrinsics: opts.intrinsics,
                mount: Mount::new([-h, 0.0, opts.sensor_height], BACKWARD_CAMERA),
            }),
            keyframes: Vec::new(),
        },
        AgentSpec {
            name: "sled".into(),
            marker: Some(MarkerSpec {
                id: 1,
                side: opts.marker_side,
                mount: Mount::new([0.0, 0.0, opts.sensor_height], FORWARD_MARKER),
            }),
            camera: None,
            keyframes: Vec::new(),
        },
    ];
    let links = vec![Link { camera: 0, marker: 1 }];
    let w = opts.window_frames as u64;
    let mut b = Builder::new(&starts, timing, 0);
    b.wait(w);
    for _ in 0..cycles {
        for agent in [0, 1] {
            let k = b.last(agent);
            b.move_group(&[(agent, vec![Target { x: k.x + segment, y: k.y, yaw: k.yaw }])], true);
            b.wait(w);
        }
    }
    if cycles == 0 {
        b.wait(w);
    }
    let frames = b.frame;
    let x_end = b.last(0).x;
    let field = room_around(Vector2::new(-1.0, 0.0), Vector2::new(x_end, 0.0), 2.5, 6.0);
    build(
        "sled".into(),
        b,
        agents,
        links,
        frames,
        opts.window_frames,
        Some(forward_vo(0, opts.sensor_height, field)),
    )
}

fn build(
    name: String,
    b: Builder,
    mut agents: Vec<AgentSpec>,
    links: Vec<Link>,
    frames: u64,
    window_frames: usize,
    vo: Option<VoRig>,
) -> Result<ScenarioScript, ScenarioError> {
    let end_t = b.time(frames);
    for (agent, mut track) in agents.iter_mut().zip(b.tracks) {
        let last = *track.last().expect("non-empty");
        if last.t < end_t {
            track.push(Keyframe { t: end_t, ..last });
        }
        agent.keyframes = track;
    }
    finish(ScenarioScript {
        name,
        frame_rate: b.timing.frame_rate,
        window_frames,
        frames,
        main_agent: b.main,
        agents,
        links,
        schedule: b.schedule,
        keypoints: b.keypoints,
        vo,
    })
}

/// Splits a waypoint list (after the start pose) into moves ending at stops.
fn legs(waypoints: &[Waypoint]) -> Vec<Vec<Target>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for w in waypoints {
        cur.push(Target { x: w.x, y: w.y, yaw: w.yaw });
        if w.stop {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Ground robots carrying upward-facing markers, watched by a downward camera
/// that never stops. `ugv_waypoints[u][0]` is the start pose of robot `u`;
/// the robots take turns, one move each in order, with a static window
/// between moves. Robot 0 is the main agent and each of its stops is a keypoint.
pub fn top_observer(
    ugv_waypoints: &[Vec<Waypoint>],
    opts: &TopObserverOptions,
) -> Result<ScenarioScript, ScenarioError> {
    top_observer_with_vo(ugv_waypoints, opts, None)
}

fn top_observer_with_vo(
    ugv_waypoints: &[Vec<Waypoint>],
    opts: &TopObserverOptions,
    vo: Option<VoRig>,
) -> Result<ScenarioScript, ScenarioError> {
    let n = ugv_waypoints.len();
    if n < 2 {
        return Err(invalid("the top observer needs at least two ground markers"));
    }
    if ugv_waypoints.iter().any(|w| w.is_empty()) {
        return Err(invalid("every ground robot needs a start pose"));
    }
    if !(opts.min_height > 0.0 && opts.max_height >= opts.min_height) {
        return Err(invalid("height limits must satisfy 0 < min ≤ max"));
    }
    let timing = Timing {
        window_frames: opts.window_frames,
        ..Timing::default()
    };
    let uav = n;
    let mut starts: Vec<Keyframe> = ugv_waypoints
        .iter()
        .map(|w| Keyframe { t: 0.0, x: w[0].x, y: w[0].y, z: 0.0, yaw: w[0].yaw })
        .collect();
    starts.push(Keyframe { t: 0.0, x: 0.0, y: 0.0, z: 0.0, yaw: 0.0 });
    let plans: Vec<Vec<Vec<Target>>> = ugv_waypoints.iter().map(|w| legs(&w[1..])).collect();
    let rounds = plans.iter().map(Vec::len).max().unwrap_or(0);

    let w = opts.window_frames as u64;
    let mut b = Builder::new(&starts, timing, 0);
    b.wait(w);
    for j in 0..rounds {
        for (u, plan) in plans.iter().enumerate() {
            if let Some(leg) = plan.get(j) {
                let start = b.frame;
                if b.move_group(&[(u, leg.clone())], true) > start {
                    b.wait(w);
                }
            }
        }
    }
    if rounds == 0 {
        b.wait(w);
    }
    let frames = b.frame;

    let mut agents: Vec<AgentSpec> = (0..n)
        .map(|u| AgentSpec {
            name: if u == 0 { "main".into() } else { format!("ugv{u}") },
            marker: Some(MarkerSpec {
                id: u as u32,
                side: opts.marker_side,
                mount: Mount::new([0.0, 0.0, opts.marker_height], [0.0; 3]),
            }),
            camera: None,
            keyframes: Vec::new(),
        })
        .collect();
    agents.push(AgentSpec {
        name: "observer".into(),
        marker: None,
        camera: Some(CameraSpec {
            id: uav as u32,
            intrinsics: opts.intrinsics,
            mount: Mount::new([0.0; 3], DOWN_CAMERA),
        }),
        keyframes: Vec::new(),
    });
    let links: Vec<Link> = (0..n).map(|u| Link { camera: uav, marker: u }).collect();

    // Observer trajectory: first-order pursuit of the hover point.
    let cov = coverage_area(&opts.intrinsics, 1.0);
    let half_w = (-cov.min_x).min(cov.max_x);
    let half_h = (-cov.min_y).min(cov.max_y);
    let reach = opts.marker_side * std::f64::consts::SQRT_2 / 2.0 + opts.coverage_margin;
    let alpha = 1.0 - (-1.0 / (timing.frame_rate * opts.pursuit_time_constant)).exp();
    let probe = ScenarioScript {
        name: String::new(),
        frame_rate: timing.frame_rate,
        window_frames: opts.window_frames,
        frames,
        main_agent: 0,
        agents: Vec::new(),
        links: Vec::new(),
        schedule: Vec::new(),
        keypoints: Vec::new(),
        vo: None,
    };
    let end_t = b.time(frames);
    let mut ugv_tracks = b.tracks;
    for track in ugv_tracks.iter_mut() {
        let last = *track.last().expect("non-empty");
        if last.t < end_t {
            track.push(Keyframe { t: end_t, ..last });
        }
    }
    let truth = super::GroundTruth {
        tracks: ugv_tracks[..n].to_vec(),
    };
    let mut uav_track = Vec::with_capacity(frames as usize + 1);
    let mut state: Option<[f64; 3]> = None;
    for k in 0..=frames {
        let t = probe.time(k);
        let pts: Vec<Vector2<f64>> = (0..n)
            .map(|u| {
                let p = truth.placement(u, t);
                Vector2::new(p.translation().x, p.translation().y)
            })
            .collect();
        let c = pts.iter().fold(Vector2::zeros(), |a, p| a + p) / n as f64;
        let ex = pts.iter().map(|p| (p.x - c.x).abs()).fold(0.0, f64::max) + reach;
        let ey = pts.iter().map(|p| (p.y - c.y).abs()).fold(0.0, f64::max) + reach;
        let required = (ex / half_w).max(ey / half_h);
        let height = match opts.altitude {
            Altitude::Adaptive => required.max(opts.min_height),
            Altitude::Fixed(h) => h,
        };
        let limit = match opts.altitude {
            Altitude::Adaptive => opts.max_height,
            Altitude::Fixed(h) => h,
        };
        if required > limit {
            return Err(ScenarioError::FovInfeasible {
                agent: uav,
                marker: 0,
                frame: k,
                reason: format!("coverage needs {required:.2} m of height, limit is {limit:.2} m"),
            });
        }
        let target = [c.x, c.y, opts.marker_height + height];
        let s = match state {
            None => target,
            Some(p) => [
                p[0] + alpha * (target[0] - p[0]),
                p[1] + alpha * (target[1] - p[1]),
                p[2] + alpha * (target[2] - p[2]),
            ],
        };
        state = Some(s);
        uav_track.push(Keyframe { t, x: s[0], y: s[1], z: s[2], yaw: 0.0 });
    }
    ugv_tracks[uav] = uav_track;
    for (agent, track) in agents.iter_mut().zip(ugv_tracks) {
        agent.keyframes = track;
    }
    let mut schedule = b.schedule;
    schedule.push(ScheduleRow {
        agent: uav,
        phase: AgentPhase::Mobile,
        start: 0.0,
        end: probe.time(frames),
    });
    finish(ScenarioScript {
        name: "top-observer".into(),
        frame_rate: timing.frame_rate,
        window_frames: opts.window_frames,
        frames,
        main_agent: 0,
        agents,
        links,
        schedule,
        keypoints: b.keypoints,
        vo,
    })
}

/// Main robot stops plus a helper that parks behind each stop, relative to
/// the main robot's next direction of travel. Each main move may overshoot
/// its stop and come back.
fn main_and_helper(
    stops: &[Waypoint],
    overshoot: f64,
    offset: f64,
    lateral: f64,
) -> Result<Vec<Vec<Waypoint>>, ScenarioError> {
    if !(overshoot >= 1.0) {
        return Err(invalid("overshoot factor must be at least 1"));
    }
    let dirs: Vec<Vector2<f64>> = stops
        .windows(2)
        .map(|w| Vector2::new(w[1].x - w[0].x, w[1].y - w[0].y).normalize())
        .collect();
    let helper_at = |i: usize| {
        let d = dirs[i.min(dirs.len() - 1)];
        let p = Vector2::new(stops[i].x, stops[i].y) - d * offset + Vector2::new(0.0, 1.0) * lateral;
        Waypoint::stop(p.x, p.y, 0.0)
    };
    let mut main = vec![stops[0]];
    for (i, w) in stops.windows(2).enumerate() {
        if overshoot > 1.0 {
            let len = (w[1].x - w[0].x).hypot(w[1].y - w[0].y);
            let extra = dirs[i] * ((overshoot - 1.0) / 2.0 * len);
            main.push(Waypoint::via(w[1].x + extra.x, w[1].y + extra.y, w[0].yaw));
        }
        main.push(w[1]);
    }
    let helper: Vec<Waypoint> = (0..stops.len() - 1).map(helper_at).collect();
    Ok(vec![main, helper])
}

/// Square mission of side 1 m: the main robot visits (0,0) → (0,1) → (1,1) →
/// (1,0) → (0,0), turning in place at the three inner corners.
pub fn square_waypoint_experiment(opts: &SquareOptions) -> Result<ScenarioScript, ScenarioError> {
    let k = opts.keypoints_per_leg;
    if k == 0 {
        return Err(invalid("at least one keypoint per leg"));
    }
    let corners = [(0.0, 0.0), (0.0, 1.0), (1.0, 1.0), (1.0, 0.0), (0.0, 0.0)];
    let yaw_after = [FRAC_PI_2, 0.0, -FRAC_PI_2, FRAC_PI_2];
    let mut stops = vec![Waypoint::stop(0.0, 0.0, FRAC_PI_2)];
    for side in 0..4 {
        let (x0, y0) = corners[side];
        let (x1, y1) = corners[side + 1];
        let heading = yaw_after[side];
        for j in 1..=k {
            let s = j as f64 / k as f64;
            let yaw = if j == k && side < 3 { yaw_after[side + 1] } else { heading };
            stops.push(Waypoint::stop(x0 + s * (x1 - x0), y0 + s * (y1 - y0), yaw));
        }
    }
    let plans = main_and_helper(&stops, opts.overshoot, opts.helper_offset, opts.helper_lateral)?;
    let (lo, hi) = (-2.5, 3.5);
    let field = FeatureField {
        surfaces: vec![
            Surface::wall(lo, hi, hi, hi, 2.5, opts.rich_density),
            Surface::wall(hi, hi, hi, lo, 2.5, opts.rich_density),
            Surface::wall(hi, lo, lo, lo, 2.5, opts.poor_density),
            Surface::wall(lo, lo, lo, hi, 2.5, opts.poor_density),
        ],
        masks: Vec::new(),
    };
    let vo = forward_vo(0, 0.3, field);
    let mut script = top_observer_with_vo(&plans, &opts.observer, Some(vo))?;
    script.name = "square".into();
    Ok(script)
}

/// Straight line traversed forward, backward and forward again, with equally
/// spaced stops of the main robot.
pub fn line_following_experiment(opts: &LineOptions) -> Result<ScenarioScript, ScenarioError> {
    if opts.keypoints_per_segment == 0 || opts.segments == 0 {
        return Err(invalid("need at least one segment and one keypoint per segment"));
    }
    let step = opts.segment_length / opts.keypoints_per_segment as f64;
    let mut stops = vec![Waypoint::stop(0.0, 0.0, 0.0)];
    let mut x = 0.0;
    for seg in 0..opts.segments {
        let dir = if seg % 2 == 0 { 1.0 } else { -1.0 };
        let start = x;
        for j in 1..=opts.keypoints_per_segment {
            x = if j == opts.keypoints_per_segment {
                start + dir * opts.segment_length
            } else {
                start + dir * step * j as f64
            };
            stops.push(Waypoint::stop(x, 0.0, 0.0));
        }
    }
    let plans = main_and_helper(&stops, 1.0, opts.helper_offset, opts.helper_lateral)?;
    let field = FeatureField::room(-2.5, -1.5, opts.segment_length + 2.5, 1.5, 2.5, opts.feature_density);
    let vo = forward_vo(0, 0.3, field);
    let mut script = top_observer_with_vo(&plans, &opts.observer, Some(vo))?;
    script.name = "line".into();
    Ok(script)
}
