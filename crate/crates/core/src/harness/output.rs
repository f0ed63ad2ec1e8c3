//! CSV writers. Floats use Rust's shortest round-trip formatting, so equal
//! results give byte-identical files.

use std::io::Write;

use serde::Serialize;

use super::metrics::{Aggregate, KeypointError, Method};
use super::{HarnessError, TrialResult};
use crate::geometry::Pose;
use crate::odometry::AgentPhase;

/// One row of the trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub trial: usize,
    pub t: f64,
    pub agent: String,
    pub truth_x: f64,
    pub truth_y: f64,
    pub truth_z: f64,
    pub truth_qw: f64,
    pub truth_qx: f64,
    pub truth_qy: f64,
    pub truth_qz: f64,
    pub est_x: f64,
    pub est_y: f64,
    pub est_z: f64,
    pub est_qw: f64,
    pub est_qx: f64,
    pub est_qy: f64,
    pub est_qz: f64,
    pub method: Method,
    pub cycle_index: usize,
    pub phase: AgentPhase,
}

impl TrajectoryRecord {
    /// `truth` and `estimate` are body-to-world placements. A missing
    /// estimate is written as NaN.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        trial: usize,
        t: f64,
        agent: &str,
        truth: &Pose,
        estimate: Option<&Pose>,
        method: Method,
        cycle_index: usize,
        phase: AgentPhase,
    ) -> Self {
        let tq = truth.quaternion();
        let tt = truth.translation();
        let (ep, eq) = match estimate {
            Some(e) => {
                let q = e.quaternion();
                let p = e.translation();
                ([p.x, p.y, p.z], [q.w, q.i, q.j, q.k])
            }
            None => ([f64::NAN; 3], [f64::NAN; 4]),
        };
        Self {
            trial,
            t,
            agent: agent.to_string(),
            truth_x: tt.x,
            truth_y: tt.y,
            truth_z: tt.z,
            truth_qw: tq.w,
            truth_qx: tq.i,
            truth_qy: tq.j,
            truth_qz: tq.k,
            est_x: ep[0],
            est_y: ep[1],
            est_z: ep[2],
            est_qw: eq[0],
            est_qx: eq[1],
            est_qy: eq[2],
            est_qz: eq[3],
            method,
            cycle_index,
            phase,
        }
    }
}

pub fn write_trajectory<W: Write>(out: W, records: &[TrajectoryRecord]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MetricsRow {
    trial: String,
    method: Method,
    #[serde(rename = "ME")]
    me: f64,
    #[serde(rename = "E_f")]
    e_f: f64,
    path_length: f64,
    percent_final_error: f64,
    switches: f64,
    tracking_lost: f64,
}

/// Per-trial rows followed by `mean` and `std` rows per method.
pub fn write_metrics<W: Write>(out: W, results: &[TrialResult], aggregates: &[Aggregate]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        for m in &r.metrics {
            w.serialize(MetricsRow {
                trial: m.trial.to_string(),
                method: m.method,
                me: m.mean_error,
                e_f: m.final_error,
                path_length: m.path_length,
                percent_final_error: m.percent_final_error,
                switches: m.switches as f64,
                tracking_lost: m.tracking_lost as f64,
            })?;
        }
    }
    for a in aggregates {
        for (label, pick) in [("mean", 0), ("std", 1)] {
            let get = |p: (f64, f64)| if pick == 0 { p.0 } else { p.1 };
            w.serialize(MetricsRow {
                trial: label.to_string(),
                method: a.method,
                me: get(a.mean_error),
                e_f: get(a.final_error),
                path_length: get(a.path_length),
                percent_final_error: get(a.percent_final_error),
                switches: get(a.switches),
                tracking_lost: get(a.tracking_lost),
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct KeypointRow {
    trial: usize,
    keypoint: usize,
    frame: u64,
    truth_x: f64,
    est_x: f64,
    error_x: f64,
    relative_error_x: f64,
    position_error: f64,
}

pub fn write_keypoints<W: Write>(out: W, results: &[TrialResult]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        for k in &r.keypoints {
            let KeypointError {
                index,
                frame,
                truth_x,
                estimate_x,
                error_x,
                relative_error_x,
                position_error,
            } = *k;
            w.serialize(KeypointRow {
                trial: r.trial,
                keypoint: index,
                frame,
                truth_x,
                est_x: estimate_x,
                error_x,
                relative_error_x,
                position_error,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One grid point of a noise sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub pixel_sigma: f64,
    pub flow_sigma: f64,
    pub depth_sigma: f64,
    pub method: Method,
    pub trials: usize,
    #[serde(rename = "ME")]
    pub me: f64,
    #[serde(rename = "ME_f")]
    pub me_f: f64,
    #[serde(rename = "E_f_std")]
    pub e_f_std: f64,
    pub percent_final_error: f64,
    pub loss_rate: f64,
}

pub fn write_sweep<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
