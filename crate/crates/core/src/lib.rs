//! Mobile marker odometry.
//!
//! A fiducial marker and a camera take turns moving. While the marker rests,
//! the camera localizes against it; while the camera rests, it tracks the
//! marker to its new resting place, which then becomes the next reference.
//! Error only enters at those reference hand-overs.
//!
//! Modules, bottom-up:
//!
//! - [`geometry`]: SE(3) poses and twists.
//! - [`camera`]: pinhole projection and synthetic marker observations.
//! - [`pnp`]: Levenberg-Marquardt resection with homography initialization.
//! - [`odometry`]: the mobile-marker estimator.
//! - [`vo`]: a markerless frame-to-frame visual-odometry baseline.
//! - [`scenario`]: scripted multi-robot missions, ground truth and the protocol validator.
//! - [`harness`]: trials, Monte-Carlo aggregation, metrics and CSV output.

pub mod camera;
pub mod geometry;
pub mod harness;
mod noise;
pub mod odometry;
pub mod pnp;
pub mod scenario;
pub mod vo;

pub use geometry::{Pose, Twist};
