//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 1
//! trials = 100
//! workers = 4
//! window_frames = 10
//! output = "out"
//!
//! [scenario]
//! name = "square"          # square | line | caterpillar | sled | file
//! keypoints_per_leg = 1
//!
//! [noise]
//! pixel_sigma = 0.5
//! flow_sigma = 0.5
//! depth_sigma = 0.02
//!
//! [vo]
//! enabled = true
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::scenario::{
    line_following_experiment, multi_robot_caterpillar, single_robot_caterpillar, square_waypoint_experiment,
    Altitude, CaterpillarOptions, LineOptions, ScenarioError, ScenarioScript, SquareOptions, WINDOW_FRAMES,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Square mission: main robot stops per side.
    pub keypoints_per_leg: usize,
    /// Square mission: path length factor of each move.
    pub overshoot: f64,
    /// Top observer height above the markers; adaptive when absent.
    pub fixed_altitude: Option<f64>,
    /// Caterpillar: number of robots.
    pub robots: usize,
    pub segment_length: f64,
    pub cycles: usize,
    /// Scenario file for `name = "file"`.
    pub path: Option<PathBuf>,
    pub rich_density: Option<f64>,
    pub poor_density: Option<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "square".into(),
            keypoints_per_leg: 1,
            overshoot: 1.0,
            fixed_altitude: None,
            robots: 2,
            segment_length: 0.25,
            cycles: 4,
            path: None,
            rich_density: None,
            poor_density: None,
        }
    }
}

impl ScenarioConfig {
    pub fn build(&self, window_frames: usize) -> Result<ScenarioScript, ScenarioError> {
        let altitude = self.fixed_altitude.map_or(Altitude::Adaptive, Altitude::Fixed);
        match self.name.as_str() {
            "square" => {
                let mut o = SquareOptions {
                    keypoints_per_leg: self.keypoints_per_leg,
                    overshoot: self.overshoot,
                    ..SquareOptions::default()
                };
                o.observer.altitude = altitude;
                o.observer.window_frames = window_frames;
                if let Some(d) = self.rich_density {
                    o.rich_density = d;
                }
                if let Some(d) = self.poor_density {
                    o.poor_density = d;
                }
                square_waypoint_experiment(&o)
            }
            "line" => {
                let mut o = LineOptions::default();
                o.observer.altitude = altitude;
                o.observer.window_frames = window_frames;
                if let Some(d) = self.rich_density {
                    o.feature_density = d;
                }
                line_following_experiment(&o)
            }
            "caterpillar" => multi_robot_caterpillar(
                self.robots,
                self.segment_length,
                self.cycles,
                &CaterpillarOptions {
                    window_frames,
                    ..CaterpillarOptions::default()
                },
            ),
            "sled" => single_robot_caterpillar(
                self.segment_length,
                self.cycles,
                &CaterpillarOptions {
                    window_frames,
                    ..CaterpillarOptions::default()
                },
            ),
            "file" => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| ScenarioError::InvalidParameter("scenario file path missing".into()))?;
                ScenarioScript::load(path)
            }
            other => Err(ScenarioError::InvalidParameter(format!("unknown scenario '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Marker corner noise, pixels.
    pub pixel_sigma: f64,
    /// Feature tracking noise, pixels.
    pub flow_sigma: f64,
    /// Extra tracking noise per pixel of image motion.
    pub flow_scale: f64,
    /// Relative depth noise of tracked features.
    pub depth_sigma: f64,
    pub outlier_fraction: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            pixel_sigma: 0.5,
            flow_sigma: 0.5,
            flow_scale: 0.05,
            depth_sigma: 0.02,
            outlier_fraction: 0.0,
        }
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            pixel_sigma: 0.0,
            flow_sigma: 0.0,
            flow_scale: 0.0,
            depth_sigma: 0.0,
            outlier_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoConfig {
    pub enabled: bool,
    pub max_tracks: usize,
}

impl Default for VoConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            max_tracks: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub trials: usize,
    pub workers: usize,
    pub window_frames: usize,
    pub output: Option<PathBuf>,
    pub scenario: ScenarioConfig,
    pub noise: NoiseConfig,
    pub vo: VoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 1,
            workers: 1,
            window_frames: WINDOW_FRAMES,
            output: None,
            scenario: ScenarioConfig::default(),
            noise: NoiseConfig::default(),
            vo: VoConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn check(&self) -> Result<(), HarnessError> {
        let n = &self.noise;
        let sigmas = [n.pixel_sigma, n.flow_sigma, n.flow_scale, n.depth_sigma];
        if sigmas.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
            return Err(HarnessError::Config("noise parameters must be finite and non-negative".into()));
        }
        if !(0.0..=1.0).contains(&n.outlier_fraction) {
            return Err(HarnessError::Config("outlier fraction must lie in [0, 1]".into()));
        }
        if self.trials < 1 {
            return Err(HarnessError::Config("at least one trial is required".into()));
        }
        if self.window_frames < 1 {
            return Err(HarnessError::Config("window must span at least one frame".into()));
        }
        Ok(())
    }
}
