//! Trial runner, Monte-Carlo aggregation and CSV output.
//!
//! A trial simulates one scenario frame by frame: marker observations feed
//! the mobile-marker estimator, and the feature tracks of a forward camera
//! feed the visual odometry baseline, both against the same ground truth.

mod config;
mod metrics;
mod output;

pub use config::{NoiseConfig, RunConfig, ScenarioConfig, VoConfig};
pub use metrics::{
    aggregate, mean_std, keypoint_report, Aggregate, KeypointError, Method, TrialMetrics,
};
pub use output::{write_keypoints, write_metrics, write_sweep, write_trajectory, SweepRow, TrajectoryRecord};

use std::path::PathBuf;

use rayon::prelude::*;
use thiserror::Error;

use crate::camera::{observe, NoiseModel, Stamp};
use crate::geometry::Pose;
use crate::odometry::cooperative::{CooperativeEstimator, FrameInput, Measurement};
use crate::odometry::OdometryError;
use crate::pnp;
use crate::scenario::{validate, ScenarioError, ScenarioScript};
use crate::vo::{generate_tracks, VisualOdometry, VoNoise};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("estimator failed: {0}")]
    Odometry(#[from] OdometryError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot write csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("cannot start worker pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Everything one trial produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub metrics: Vec<TrialMetrics>,
    pub keypoints: Vec<KeypointError>,
    /// Empty unless records were requested.
    pub records: Vec<TrajectoryRecord>,
}

impl TrialResult {
    pub fn method(&self, method: Method) -> Option<&TrialMetrics> {
        self.metrics.iter().find(|m| m.method == method)
    }
}

/// A built scenario plus the settings to simulate it.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: RunConfig,
    pub script: ScenarioScript,
}

impl Experiment {
    pub fn new(config: RunConfig) -> Result<Self, HarnessError> {
        config.check()?;
        let script = config.scenario.build(config.window_frames)?;
        validate(&script).map_err(ScenarioError::from)?;
        Ok(Self { config, script })
    }

    pub fn from_script(config: RunConfig, script: ScenarioScript) -> Result<Self, HarnessError> {
        config.check()?;
        validate(&script).map_err(ScenarioError::from)?;
        Ok(Self { config, script })
    }

    /// Runs one trial. The same `(trial, seed)` always yields the same result.
    pub fn run_trial(&self, trial: usize, seed: u64, keep_records: bool) -> Result<TrialResult, HarnessError> {
        let script = &self.script;
        let cfg = &self.config;
        let truth = script.truth();
        let rig = script.rig();
        let n = script.agents.len();
        let main = script.main_agent;
        let boards: Vec<_> = (0..n).map(|a| script.board(a)).collect();
        let marker_noise = NoiseModel {
            pixel_sigma: cfg.noise.pixel_sigma,
            seed,
        };

        let initial = truth.placement(main, 0.0).inverse();
        let mut estimator = CooperativeEstimator::new(rig, vec![(main, initial)], script.window_frames);

        let vo_setup = match (&script.vo, cfg.vo.enabled) {
            (Some(v), true) => Some(v),
            _ => None,
        };
        let vo_noise = VoNoise {
            flow_sigma: cfg.noise.flow_sigma,
            flow_scale: cfg.noise.flow_scale,
            depth_sigma: cfg.noise.depth_sigma,
            outlier_fraction: cfg.noise.outlier_fraction,
            max_tracks: cfg.vo.max_tracks,
            seed,
        };
        let features = vo_setup.map(|v| v.field.sample(seed)).unwrap_or_default();
        let vo_camera = |t: f64| {
            let v = vo_setup.expect("only called with a visual odometry rig");
            truth.placement(v.agent, t).compose(&v.mount.pose())
        };
        let mut vo = vo_setup.map(|_| VisualOdometry::new(vo_camera(0.0).inverse()));

        let mut moma_errors = Vec::with_capacity(script.frames as usize);
        let mut vo_errors = Vec::with_capacity(script.frames as usize);
        let mut moma_unavailable = 0;
        let mut last_main: Option<Pose> = None;
        let mut records = Vec::new();

        for k in 0..script.frames {
            let t = script.time(k);
            let phases = script.phases(k);
            let mut measurements = Vec::with_capacity(script.links.len());
            for link in &script.links {
                let (Some(cam), Some(board)) = (script.agents[link.camera].camera, &boards[link.marker]) else {
                    continue;
                };
                let cam_pose = truth.camera_placement(script, link.camera, t).expect("camera present");
                let marker_pose = truth.marker_placement(script, link.marker, t).expect("marker present");
                let stamp = Stamp::new(k, t, cam.id);
                let Some(obs) = observe(&cam_pose, &marker_pose, board, &cam.intrinsics, &marker_noise, stamp) else {
                    continue;
                };
                if let Ok(sol) = pnp::solve(&obs, board, &cam.intrinsics, None) {
                    measurements.push(Measurement {
                        camera: link.camera,
                        marker: link.marker,
                        g: sol.pose,
                    });
                }
            }
            let out = estimator.process(&FrameInput {
                index: k,
                time: t,
                phases: phases.clone(),
                measurements,
            })?;

            let truth_main = truth.placement(main, t);
            match out.estimates[main].pose {
                Some(g) => {
                    let est = g.inverse();
                    moma_errors.push((est.translation() - truth_main.translation()).norm());
                    last_main = Some(est);
                }
                None => moma_unavailable += 1,
            }

            if let (Some(vo), Some(setup)) = (vo.as_mut(), vo_setup) {
                if k > 0 {
                    let tracks = generate_tracks(
                        &vo_camera(script.time(k - 1)),
                        &vo_camera(t),
                        &features,
                        &setup.intrinsics,
                        &vo_noise,
                        k,
                    );
                    vo.update(tracks, &setup.intrinsics);
                }
                let body = vo_body(vo.pose(), setup);
                vo_errors.push((body.translation() - truth.placement(setup.agent, t).translation()).norm());
            }

            if keep_records {
                for a in 0..n {
                    let tp = truth.placement(a, t);
                    records.push(TrajectoryRecord::new(
                        trial,
                        t,
                        &script.agents[a].name,
                        &tp,
                        out.estimates[a].pose.map(|g| g.inverse()).as_ref(),
                        Method::Moma,
                        out.cycle,
                        phases[a],
                    ));
                }
                if let (Some(vo), Some(setup)) = (vo.as_ref(), vo_setup) {
                    let a = setup.agent;
                    records.push(TrajectoryRecord::new(
                        trial,
                        t,
                        &script.agents[a].name,
                        &truth.placement(a, t),
                        Some(&vo_body(vo.pose(), setup)),
                        Method::Vo,
                        0,
                        phases[a],
                    ));
                }
            }
        }
        estimator.finish()?;

        let path_length = script.path_length();
        let final_t = script.time(script.frames.saturating_sub(1));
        let final_truth = truth.placement(main, final_t);
        let moma_final = last_main
            .map(|p| (p.translation() - final_truth.translation()).norm())
            .unwrap_or(f64::NAN);
        let main_switches = estimator
            .commits()
            .iter()
            .filter(|c| c.body == main && c.after_motion)
            .count();
        let mut metrics = vec![TrialMetrics::new(
            trial,
            Method::Moma,
            &moma_errors,
            moma_final,
            path_length,
            main_switches,
            moma_unavailable,
        )];
        if let (Some(vo), Some(_)) = (vo.as_ref(), vo_setup) {
            let vo_final = vo_errors.last().copied().unwrap_or(f64::NAN);
            metrics.push(TrialMetrics::new(
                trial,
                Method::Vo,
                &vo_errors,
                vo_final,
                path_length,
                0,
                vo.losses(),
            ));
        }
        let keypoints = keypoint_report(script, estimator.commits(), &truth);
        Ok(TrialResult {
            trial,
            seed,
            metrics,
            keypoints,
            records,
        })
    }

    /// Runs `trials` trials with seeds `seed + i` on a pool of `workers`
    /// threads. Results come back ordered by trial index.
    pub fn monte_carlo(&self) -> Result<Vec<TrialResult>, HarnessError> {
        let cfg = &self.config;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(cfg.workers.max(1)).build()?;
        let mut results: Vec<TrialResult> = pool.install(|| {
            (0..cfg.trials)
                .into_par_iter()
                .map(|i| self.run_trial(i, cfg.seed.wrapping_add(i as u64), false))
                .collect::<Result<Vec<_>, _>>()
        })?;
        results.sort_by_key(|r| r.trial);
        Ok(results)
    }
}

fn vo_body(camera_extrinsic: &Pose, setup: &crate::scenario::VoRig) -> Pose {
    camera_extrinsic.inverse().compose(&setup.mount.pose().inverse())
}

/// Builds the configured scenario and runs a single trial with records.
pub fn run_trial(config: &RunConfig, seed: u64) -> Result<TrialResult, HarnessError> {
    Experiment::new(config.clone())?.run_trial(0, seed, true)
}

/// Builds the configured scenario and aggregates all trials per method.
pub fn monte_carlo(config: &RunConfig) -> Result<(Vec<TrialResult>, Vec<Aggregate>), HarnessError> {
    let results = Experiment::new(config.clone())?.monte_carlo()?;
    let aggregates = aggregate(&results);
    Ok((results, aggregates))
}
