//! Protocol checks for phase schedules.
//!
//! With `W` the window length in frames and `N` the run length:
//!
//! - at every frame at least one agent is static, and every mobile agent
//!   has a static agent it is linked to;
//! - an agent rests at least `W` frames before each move (unless it moves
//!   from frame 0) and after each move (unless it moves until frame `N`);
//! - every move `[s, e)` has one linked agent that stays static over
//!   `[s − W, e + W)`, clipped the same way, so both static windows of the
//!   hand-over see the same reference. An agent mobile for the whole run is
//!   exempt and only needs the per-frame rule;
//! - agents only move while mobile, and all agents resting at frame 0 are
//!   linked to the main agent through resting agents.

use std::collections::VecDeque;

use thiserror::Error;

use super::ScenarioScript;
use crate::odometry::AgentPhase;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleViolation {
    #[error("row {row} names an unknown agent")]
    UnknownAgent { row: usize },
    #[error("row {row} has an empty or reversed interval")]
    EmptyInterval { row: usize },
    #[error("row {row} lies outside the run")]
    OutOfRange { row: usize },
    #[error("agent {agent} is both static and mobile at frame {frame}")]
    ConflictingRows { agent: usize, frame: u64 },
    #[error("link {camera} -> {marker} needs a camera on {camera} and a marker on {marker}")]
    InvalidLink { camera: usize, marker: usize },
    #[error("every agent is mobile at frame {frame}")]
    AllMobile { frame: u64 },
    #[error("agent {agent} is mobile at frame {frame} without a static linked agent")]
    NoStaticReference { agent: usize, frame: u64 },
    #[error("agent {agent} rests only {frames} frames around frame {frame}, {required} required")]
    ShortRest {
        agent: usize,
        frame: u64,
        frames: u64,
        required: u64,
    },
    #[error("no linked agent stays static around the move of agent {agent} over frames {start}..{end}")]
    MissingOverlap { agent: usize, start: u64, end: u64 },
    #[error("agent {agent} moves at frame {frame} while static")]
    MovesWhileStatic { agent: usize, frame: u64 },
    #[error("main agent {agent} must rest at frame 0")]
    MainAgentMobile { agent: usize },
    #[error("agent {agent} rests at frame 0 but is not linked to the main agent")]
    Disconnected { agent: usize },
}

pub fn validate(script: &ScenarioScript) -> Result<(), ScheduleViolation> {
    let n_agents = script.agents.len();
    let n = script.frames;
    let w = script.window_frames as u64;
    let rig = script.rig();

    for (row, r) in script.schedule.iter().enumerate() {
        if r.agent >= n_agents {
            return Err(ScheduleViolation::UnknownAgent { row });
        }
        if !(r.end > r.start) || script.frame_of(r.end) <= script.frame_of(r.start) {
            return Err(ScheduleViolation::EmptyInterval { row });
        }
        if r.start < 0.0 || script.frame_of(r.end) > n {
            return Err(ScheduleViolation::OutOfRange { row });
        }
    }
    for l in &script.links {
        let ok = l.camera < n_agents
            && l.marker < n_agents
            && l.camera != l.marker
            && script.agents[l.camera].camera.is_some()
            && script.agents[l.marker].marker.is_some();
        if !ok {
            return Err(ScheduleViolation::InvalidLink {
                camera: l.camera,
                marker: l.marker,
            });
        }
    }
    for r in script.schedule.iter().filter(|r| r.phase == AgentPhase::Static) {
        let (s, e) = (script.frame_of(r.start), script.frame_of(r.end));
        for (ms, me) in script.mobile_intervals(r.agent) {
            if ms < e && s < me {
                return Err(ScheduleViolation::ConflictingRows {
                    agent: r.agent,
                    frame: s.max(ms),
                });
            }
        }
    }

    let phases: Vec<Vec<AgentPhase>> = (0..n).map(|k| script.phases(k)).collect();
    let is_static = |a: usize, k: u64| phases[k as usize][a] == AgentPhase::Static;

    for k in 0..n {
        if (0..n_agents).all(|a| !is_static(a, k)) {
            return Err(ScheduleViolation::AllMobile { frame: k });
        }
        for a in (0..n_agents).filter(|&a| !is_static(a, k)) {
            let linked = (0..n_agents).any(|r| is_static(r, k) && !rig.relations(a, r).is_empty());
            if !linked {
                return Err(ScheduleViolation::NoStaticReference { agent: a, frame: k });
            }
        }
    }

    for a in 0..n_agents {
        let intervals = merged(script.mobile_intervals(a));
        let mut rest_start = 0;
        for &(s, e) in &intervals {
            if s == 0 && e >= n {
                continue;
            }
            if s > 0 && s - rest_start < w {
                return Err(ScheduleViolation::ShortRest {
                    agent: a,
                    frame: s,
                    frames: s - rest_start,
                    required: w,
                });
            }
            if e < n && n - e < w {
                return Err(ScheduleViolation::ShortRest {
                    agent: a,
                    frame: e,
                    frames: n - e,
                    required: w,
                });
            }
            let lo = if s > 0 { s - w } else { 0 };
            let hi = if e < n { e + w } else { n };
            let covered = (0..n_agents).any(|r| {
                !rig.relations(a, r).is_empty() && (lo..hi).all(|k| is_static(r, k))
            });
            if !covered {
                return Err(ScheduleViolation::MissingOverlap { agent: a, start: s, end: e });
            }
            rest_start = e;
        }
    }

    let truth = script.truth();
    for a in 0..n_agents {
        let mut prev = truth.placement(a, script.time(0));
        for k in 0..n.saturating_sub(1) {
            let next = truth.placement(a, script.time(k + 1));
            let (dr, dt) = prev.frobenius_distance(&next);
            if (dr > 1e-9 || dt > 1e-9) && is_static(a, k) {
                return Err(ScheduleViolation::MovesWhileStatic { agent: a, frame: k });
            }
            prev = next;
        }
    }

    if n > 0 {
        let main = script.main_agent;
        if main >= n_agents || !is_static(main, 0) {
            return Err(ScheduleViolation::MainAgentMobile { agent: main });
        }
        let mut seen = vec![false; n_agents];
        seen[main] = true;
        let mut queue = VecDeque::from([main]);
        while let Some(b) = queue.pop_front() {
            for r in 0..n_agents {
                if !seen[r] && is_static(r, 0) && !rig.relations(r, b).is_empty() {
                    seen[r] = true;
                    queue.push_back(r);
                }
            }
        }
        if let Some(agent) = (0..n_agents).find(|&a| is_static(a, 0) && !seen[a]) {
            return Err(ScheduleViolation::Disconnected { agent });
        }
    }
    Ok(())
}

fn merged(intervals: Vec<(u64, u64)>) -> Vec<(u64, u64)> {
    let mut out: Vec<(u64, u64)> = Vec::new();
    for (s, e) in intervals {
        match out.last_mut() {
            Some(last) if s <= last.1 => last.1 = last.1.max(e),
            _ => out.push((s, e)),
        }
    }
    out
}
