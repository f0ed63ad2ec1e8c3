//! Hand-written schedules that break the motion protocol.

use moma::odometry::cooperative::Link;
use moma::odometry::AgentPhase;
use moma::scenario::{
    multi_robot_caterpillar, square_waypoint_experiment, CaterpillarOptions, ScenarioScript, ScheduleRow,
    SquareOptions,
};

const FRAME: f64 = 0.04;

fn pair() -> ScenarioScript {
    multi_robot_caterpillar(2, 0.5, 2, &CaterpillarOptions::default()).unwrap()
}

fn chain() -> ScenarioScript {
    multi_robot_caterpillar(3, 0.25, 2, &CaterpillarOptions::default()).unwrap()
}

fn square() -> ScenarioScript {
    square_waypoint_experiment(&SquareOptions::default()).unwrap()
}

/// Index of the `nth` mobile row of `agent`.
fn row(s: &ScenarioScript, agent: usize, nth: usize) -> usize {
    s.schedule
        .iter()
        .enumerate()
        .filter(|(_, r)| r.agent == agent && r.phase == AgentPhase::Mobile)
        .nth(nth)
        .map(|(i, _)| i)
        .expect("row exists")
}

fn edit(mut s: ScenarioScript, f: impl FnOnce(&mut ScenarioScript)) -> ScenarioScript {
    f(&mut s);
    s
}

pub fn illegal_schedules() -> Vec<(&'static str, ScenarioScript)> {
    vec![
        ("both robots mobile together", edit(pair(), |s| {
            let (a, b) = (row(s, 0, 0), row(s, 1, 0));
            s.schedule[b].start = s.schedule[a].start;
        })),
        ("moves overlap partially", edit(pair(), |s| {
            let (a, b) = (row(s, 0, 0), row(s, 1, 0));
            s.schedule[b].start = s.schedule[a].end - 5.0 * FRAME;
        })),
        ("no static window before the camera moves", edit(pair(), |s| {
            let (a, b) = (row(s, 0, 0), row(s, 1, 0));
            s.schedule[b].start = s.schedule[a].end + FRAME;
        })),
        ("no static window after the marker stops", edit(pair(), |s| {
            let (a, b) = (row(s, 0, 0), row(s, 1, 0));
            s.schedule[a].end = s.schedule[b].start - FRAME;
        })),
        ("static row inside a mobile interval", edit(pair(), |s| {
            let a = s.schedule[row(s, 0, 0)];
            s.schedule.push(ScheduleRow { phase: AgentPhase::Static, ..a });
        })),
        ("row for an unknown agent", edit(pair(), |s| {
            s.schedule.push(ScheduleRow { agent: 5, phase: AgentPhase::Mobile, start: 0.0, end: 0.2 });
        })),
        ("reversed interval", edit(pair(), |s| {
            let a = row(s, 0, 0);
            let r = &mut s.schedule[a];
            std::mem::swap(&mut r.start, &mut r.end);
        })),
        ("interval past the end of the run", edit(pair(), |s| {
            let end = s.time(s.frames);
            s.schedule.push(ScheduleRow { agent: 1, phase: AgentPhase::Mobile, start: end - 0.2, end: end + 1.0 });
        })),
        ("robot moves without a mobile row", edit(pair(), |s| {
            let a = row(s, 0, 1);
            s.schedule.remove(a);
        })),
        ("mobile row ends before the motion", edit(pair(), |s| {
            let a = row(s, 1, 0);
            s.schedule[a].end -= 10.0 * FRAME;
        })),
        ("main robot mobile at the start", edit(pair(), |s| {
            s.schedule.push(ScheduleRow { agent: 1, phase: AgentPhase::Mobile, start: 0.0, end: 4.0 * FRAME });
        })),
        ("link to a robot without a camera", edit(pair(), |s| {
            s.links = vec![Link { camera: 0, marker: 1 }];
        })),
        ("no links at all", edit(pair(), |s| s.links.clear())),
        ("window longer than every rest", edit(pair(), |s| s.window_frames = 40)),
        ("marker mobile while its observer is mobile", edit(chain(), |s| {
            let (a, b) = (row(s, 0, 0), row(s, 1, 0));
            s.schedule[b].start = s.schedule[a].start;
            s.schedule[b].end = s.schedule[a].end;
        })),
        ("whole chain mobile", edit(chain(), |s| {
            s.schedule.push(ScheduleRow { agent: 1, phase: AgentPhase::Mobile, start: 0.4, end: 0.8 });
        })),
        ("chain member cut off from the main robot", edit(chain(), |s| {
            s.links.retain(|l| l.marker != 0);
        })),
        ("two ground robots under the observer move together", edit(square(), |s| {
            let (a, b) = (row(s, 0, 0), row(s, 1, 0));
            s.schedule[b].start = s.schedule[a].start;
        })),
        ("helper moves right after the main robot stops", edit(square(), |s| {
            let (a, b) = (row(s, 0, 0), row(s, 1, 0));
            s.schedule[b].start = s.schedule[a].end + FRAME;
        })),
        ("observer flies without a mobile row", edit(square(), |s| {
            let obs = s.agents.len() - 1;
            s.schedule.retain(|r| r.agent != obs);
        })),
    ]
}
