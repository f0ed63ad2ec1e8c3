//! Position error metrics of the main agent.

use serde::{Deserialize, Serialize};

use super::TrialResult;
use crate::odometry::cooperative::CommitRecord;
use crate::scenario::{GroundTruth, ScenarioScript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Moma,
    Vo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Moma => "moma",
            Method::Vo => "vo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialMetrics {
    pub trial: usize,
    pub method: Method,
    /// Mean per-frame position error over frames with an estimate.
    pub mean_error: f64,
    pub final_error: f64,
    pub path_length: f64,
    /// Final error as a percentage of the ground-truth path length.
    pub percent_final_error: f64,
    /// Committed switches of the main agent.
    pub switches: usize,
    /// Tracking-loss events for visual odometry; frames without an estimate
    /// for the marker method.
    pub tracking_lost: usize,
}

impl TrialMetrics {
    pub fn new(
        trial: usize,
        method: Method,
        errors: &[f64],
        final_error: f64,
        path_length: f64,
        switches: usize,
        tracking_lost: usize,
    ) -> Self {
        let mean_error = if errors.is_empty() {
            f64::NAN
        } else {
            errors.iter().sum::<f64>() / errors.len() as f64
        };
        let percent_final_error = if path_length > 0.0 {
            100.0 * final_error / path_length
        } else {
            f64::NAN
        };
        Self {
            trial,
            method,
            mean_error,
            final_error,
            path_length,
            percent_final_error,
            switches,
            tracking_lost,
        }
    }
}

/// Mean and sample standard deviation over trials, per method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub method: Method,
    pub trials: usize,
    pub mean_error: (f64, f64),
    pub final_error: (f64, f64),
    pub path_length: (f64, f64),
    pub percent_final_error: (f64, f64),
    pub switches: (f64, f64),
    pub tracking_lost: (f64, f64),
    /// Fraction of trials with at least one tracking loss.
    pub loss_rate: f64,
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    // Deviations are taken from the first value, so identical inputs give
    // exactly zero spread.
    let shift = values[0];
    let (s1, s2) = values
        .iter()
        .fold((0.0, 0.0), |(s1, s2), v| (s1 + (v - shift), s2 + (v - shift).powi(2)));
    let var = (s2 - s1 * s1 / n as f64) / (n - 1) as f64;
    (mean, var.max(0.0).sqrt())
}

pub fn aggregate(results: &[TrialResult]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for method in [Method::Moma, Method::Vo] {
        let rows: Vec<&TrialMetrics> = results.iter().filter_map(|r| r.method(method)).collect();
        if rows.is_empty() {
            continue;
        }
        let col = |f: fn(&TrialMetrics) -> f64| mean_std(&rows.iter().map(|m| f(m)).collect::<Vec<_>>());
        out.push(Aggregate {
            method,
            trials: rows.len(),
            mean_error: col(|m| m.mean_error),
            final_error: col(|m| m.final_error),
            path_length: col(|m| m.path_length),
            percent_final_error: col(|m| m.percent_final_error),
            switches: col(|m| m.switches as f64),
            tracking_lost: col(|m| m.tracking_lost as f64),
            loss_rate: rows.iter().filter(|m| m.tracking_lost > 0).count() as f64 / rows.len() as f64,
        });
    }
    out
}

/// Error of the main agent at one committed stop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointError {
    pub index: usize,
    pub frame: u64,
    pub truth_x: f64,
    pub estimate_x: f64,
    /// Signed X error, estimate minus truth.
    pub error_x: f64,
    /// Signed error of the X distance travelled since the previous keypoint.
    pub relative_error_x: f64,
    /// Euclidean position error.
    pub position_error: f64,
}

/// Pairs the main agent's stops with the commits that followed them.
pub fn keypoint_report(script: &ScenarioScript, commits: &[CommitRecord], truth: &GroundTruth) -> Vec<KeypointError> {
    let main = script.main_agent;
    let stops = script.keypoints.iter().filter(|k| k.agent == main);
    let anchors = commits.iter().filter(|c| c.body == main && c.after_motion);
    let mut prev_error = 0.0;
    stops
        .zip(anchors)
        .enumerate()
        .map(|(index, (stop, commit))| {
            let est = commit.anchor.inverse();
            let tp = truth.placement(main, script.time(stop.frame));
            let error_x = est.translation().x - tp.translation().x;
            let relative_error_x = error_x - prev_error;
            prev_error = error_x;
            KeypointError {
                index,
                frame: stop.frame,
                truth_x: tp.translation().x,
                estimate_x: est.translation().x,
                error_x,
                relative_error_x,
                position_error: (est.translation() - tp.translation()).norm(),
            }
        })
        .collect()
}
