//! Spatial resection: the pose of a known point set relative to the camera,
//! found by Levenberg-Marquardt on the squared reprojection error.
//!
//! The estimated pose maps object-frame points into the camera frame
//! (`p_cam = pose · X`). Updates are left perturbations `exp(δ) · pose` on a
//! six-dimensional twist `δ = (ω, v)`.

use nalgebra::{DMatrix, DVector, Matrix2x3, Matrix3, Matrix6, SMatrix, Vector2, Vector3, Vector6};
use thiserror::Error;

use crate::camera::{project, CameraIntrinsics, MarkerBoard, Observation, MIN_DEPTH};
use crate::geometry::{nearest_rotation, skew, Pose, Twist};

/// Condition number above which the homography system is treated as singular.
pub const HOMOGRAPHY_CONDITION_LIMIT: f64 = 1e12;

/// Relative cost increase treated as rounding noise by the solver.
pub const COST_ROUNDING: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PnpError {
    #[error("need at least {needed} correspondences, got {got}")]
    TooFewCorrespondences { needed: usize, got: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(&'static str),
    #[error("degenerate homography (condition number {condition:e})")]
    DegenerateHomography { condition: f64 },
    #[error("a point lies behind the camera under the evaluated pose")]
    BehindCamera,
    #[error("observation of marker {observed} does not belong to board {board}")]
    BoardMismatch { observed: u32, board: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub initial_lambda: f64,
    pub lambda_factor: f64,
    pub max_iterations: usize,
    /// Stop when the gradient ∞-norm drops below this.
    pub gradient_tolerance: f64,
    /// Stop when an update step is shorter than this.
    pub step_tolerance: f64,
    /// Gradient bound under which a step-length stop still counts as converged.
    pub stationary_gradient_tolerance: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            initial_lambda: 1e-3,
            lambda_factor: 10.0,
            max_iterations: 100,
            gradient_tolerance: 1e-10,
            step_tolerance: 1e-12,
            stationary_gradient_tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpSolution {
    /// Object frame to camera frame.
    pub pose: Pose,
    /// Root-mean-square of the residual vector, in pixels.
    pub rms_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// ∞-norm of `Jᵀr` at the returned pose.
    pub gradient_norm: f64,
    /// Sum of squared residuals after each accepted iteration, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

/// A 3D point in the object frame paired with its observed pixel.
pub type PointPair = (Vector3<f64>, Vector2<f64>);

fn pairs_of(obs: &Observation) -> Vec<PointPair> {
    obs.correspondences
        .iter()
        .map(|c| (c.point, c.pixel))
        .collect()
}

fn residuals_of(pose: &Pose, pairs: &[PointPair], intr: &CameraIntrinsics) -> Result<DVector<f64>, PnpError> {
    let mut r = DVector::zeros(2 * pairs.len());
    for (i, (x, uv)) in pairs.iter().enumerate() {
        let pred = project(intr, &pose.act(x)).map_err(|_| PnpError::BehindCamera)?;
        r[2 * i] = uv.x - pred.x;
        r[2 * i + 1] = uv.y - pred.y;
    }
    Ok(r)
}

/// d(predicted pixel)/d(camera-frame point).
fn projection_jacobian(intr: &CameraIntrinsics, p: &Vector3<f64>) -> Matrix2x3<f64> {
    let iz = 1.0 / p.z;
    let iz2 = iz * iz;
    Matrix2x3::new(
        intr.fx * iz,
        0.0,
        -intr.fx * p.x * iz2,
        0.0,
        intr.fy * iz,
        -intr.fy * p.y * iz2,
    )
}

/// Residuals, normal matrix `JᵀJ` and gradient `Jᵀr` in one pass.
fn linearize(
    pose: &Pose,
    pairs: &[PointPair],
    intr: &CameraIntrinsics,
) -> Result<(f64, Matrix6<f64>, Vector6<f64>), PnpError> {
    let mut cost = 0.0;
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    for (x, uv) in pairs {
        let p = pose.act(x);
        if p.z <= MIN_DEPTH {
            return Err(PnpError::BehindCamera);
        }
        let pred = project(intr, &p).map_err(|_| PnpError::BehindCamera)?;
        let r = uv - pred;
        cost += r.norm_squared();
        let jp = projection_jacobian(intr, &p);
        let mut j = SMatrix::<f64, 2, 6>::zeros();
        // residual = observed − predicted, so the sign flips.
        j.fixed_view_mut::<2, 3>(0, 0).copy_from(&(jp * skew(&p)));
        j.fixed_view_mut::<2, 3>(0, 3).copy_from(&(-jp));
        h += j.transpose() * j;
        g += j.transpose() * r;
    }
    Ok((cost, h, g))
}

fn cost_of(pose: &Pose, pairs: &[PointPair], intr: &CameraIntrinsics) -> Option<f64> {
    let mut cost = 0.0;
    for (x, uv) in pairs {
        let pred = project(intr, &pose.act(x)).ok()?;
        cost += (uv - pred).norm_squared();
    }
    Some(cost)
}

/// Reprojection residuals `observed − predicted`, two per correspondence.
pub fn reprojection_residuals(
    pose: &Pose,
    obs: &Observation,
    intr: &CameraIntrinsics,
) -> Result<DVector<f64>, PnpError> {
    residuals_of(pose, &pairs_of(obs), intr)
}

/// Analytical Jacobian of [`reprojection_residuals`] with respect to a left
/// twist perturbation, `2n × 6`.
pub fn residual_jacobian(
    pose: &Pose,
    obs: &Observation,
    intr: &CameraIntrinsics,
) -> Result<DMatrix<f64>, PnpError> {
    let n = obs.correspondences.len();
    let mut jac = DMatrix::zeros(2 * n, 6);
    for (i, c) in obs.correspondences.iter().enumerate() {
        let p = pose.act(&c.point);
        if p.z <= MIN_DEPTH {
            return Err(PnpError::BehindCamera);
        }
        let jp = projection_jacobian(intr, &p);
        jac.fixed_view_mut::<2, 3>(2 * i, 0).copy_from(&(jp * skew(&p)));
        jac.fixed_view_mut::<2, 3>(2 * i, 3).copy_from(&(-jp));
    }
    Ok(jac)
}

/// Levenberg-Marquardt refinement of `init` over arbitrary 3D-2D pairs.
pub fn refine(
    pairs: &[PointPair],
    intr: &CameraIntrinsics,
    init: Pose,
    settings: &SolverSettings,
) -> Result<PnpSolution, PnpError> {
    let mut pose = init;
    let (mut cost, mut h, mut g) = linearize(&pose, pairs, intr)?;
    let mut lambda = settings.initial_lambda;
    let mut cost_history = vec![cost];
    let mut iterations = 0;
    let mut converged = false;

    'outer: while iterations < settings.max_iterations {
        if g.amax() < settings.gradient_tolerance {
            converged = true;
            break;
        }
        iterations += 1;
        loop {
            let mut damped = h;
            for k in 0..6 {
                damped[(k, k)] += lambda * h[(k, k)].max(1e-12);
            }
            let step = match damped.cholesky() {
                Some(chol) => chol.solve(&(-g)),
                None => {
                    lambda *= settings.lambda_factor;
                    continue;
                }
            };
            if step.norm() < settings.step_tolerance {
                converged = g.amax() < settings.stationary_gradient_tolerance;
                break 'outer;
            }
            let candidate = pose.retract(&Twist::from_vector(&step));
            let accepted = match cost_of(&candidate, pairs, intr) {
                Some(c) if c <= cost => Some(linearize(&candidate, pairs, intr)?),
                // A cost change at rounding level cannot rank the two poses;
                // the gradient still can.
                Some(c) if c - cost <= COST_ROUNDING * cost => {
                    let lin = linearize(&candidate, pairs, intr)?;
                    (lin.2.amax() < g.amax()).then_some(lin)
                }
                _ => None,
            };
            match accepted {
                Some(lin) => {
                    pose = candidate;
                    lambda = (lambda / settings.lambda_factor).max(1e-12);
                    cost = lin.0;
                    h = lin.1;
                    g = lin.2;
                    cost_history.push(cost);
                    break;
                }
                None => {
                    lambda *= settings.lambda_factor;
                    if lambda > 1e32 {
                        converged = g.amax() < settings.stationary_gradient_tolerance;
                        break 'outer;
                    }
                }
            }
        }
    }
    if !converged && g.amax() < settings.gradient_tolerance {
        converged = true;
    }
    let n = (2 * pairs.len()).max(1) as f64;
    Ok(PnpSolution {
        pose,
        rms_residual: (cost / n).sqrt(),
        iterations,
        converged,
        gradient_norm: g.amax(),
        cost_history,
    })
}

/// Ratio of the largest to the smallest spread of the object points in their
/// best-fit plane; infinite for collinear points.
fn planar_spread_ratio(points: &[Vector3<f64>]) -> f64 {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p - mean;
        cov += d * d.transpose();
    }
    let mut ev: Vec<f64> = cov.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if ev[0] <= 0.0 {
        return f64::INFINITY;
    }
    ev[0] / ev[1].max(0.0)
}

fn check_correspondences(obs: &Observation, board: &MarkerBoard) -> Result<(), PnpError> {
    if obs.marker_id != board.id {
        return Err(PnpError::BoardMismatch {
            observed: obs.marker_id,
            board: board.id,
        });
    }
    let n = obs.correspondences.len();
    if n < 4 {
        return Err(PnpError::TooFewCorrespondences { needed: 4, got: n });
    }
    let pts: Vec<Vector3<f64>> = obs.correspondences.iter().map(|c| c.point).collect();
    if planar_spread_ratio(&pts) > 1e12 {
        return Err(PnpError::DegenerateGeometry("object points are collinear"));
    }
    Ok(())
}

/// Estimate the marker-to-camera pose from one observation.
///
/// Without `init` the solver starts from [`init_from_homography`].
pub fn solve(
    obs: &Observation,
    board: &MarkerBoard,
    intr: &CameraIntrinsics,
    init: Option<Pose>,
) -> Result<PnpSolution, PnpError> {
    solve_with(obs, board, intr, init, &SolverSettings::default())
}

pub fn solve_with(
    obs: &Observation,
    board: &MarkerBoard,
    intr: &CameraIntrinsics,
    init: Option<Pose>,
    settings: &SolverSettings,
) -> Result<PnpSolution, PnpError> {
    check_correspondences(obs, board)?;
    let init = match init {
        Some(p) => p,
        None => init_from_homography(obs, board, intr)?,
    };
    refine(&pairs_of(obs), intr, init, settings)
}

/// Similarity transform that centers points and scales their mean distance to √2.
fn hartley(points: &[Vector2<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector2::zeros(), |a, p| a + p) / n;
    let spread = points.iter().map(|p| (p - mean).norm()).sum::<f64>() / n;
    let s = if spread > 0.0 { std::f64::consts::SQRT_2 / spread } else { 1.0 };
    Matrix3::new(s, 0.0, -s * mean.x, 0.0, s, -s * mean.y, 0.0, 0.0, 1.0)
}

fn apply_h(h: &Matrix3<f64>, p: &Vector2<f64>) -> Vector2<f64> {
    let q = h * p.push(1.0);
    Vector2::new(q.x / q.z, q.y / q.z)
}

/// Direct linear transform from marker-plane points to normalized image points.
fn plane_homography(plane: &[Vector2<f64>], image: &[Vector2<f64>]) -> Result<Matrix3<f64>, PnpError> {
    let tp = hartley(plane);
    let ti = hartley(image);
    let rows = (2 * plane.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, q)) in plane.iter().zip(image).enumerate() {
        let p = apply_h(&tp, p);
        let q = apply_h(&ti, q);
        let (x, y) = (p.x, p.y);
        let (u, v) = (q.x, q.y);
        let r0 = 2 * i;
        a.row_mut(r0)
            .copy_from_slice(&[-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u]);
        a.row_mut(r0 + 1)
            .copy_from_slice(&[0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v]);
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.ok_or(PnpError::DegenerateGeometry("homography SVD failed"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let largest = svd.singular_values[order[0]];
    let second_smallest = svd.singular_values[order[7]];
    let condition = if second_smallest > 0.0 {
        largest / second_smallest
    } else {
        f64::INFINITY
    };
    if !(condition <= HOMOGRAPHY_CONDITION_LIMIT) {
        return Err(PnpError::DegenerateHomography { condition });
    }
    let h = v_t.row(order[8]);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let ti_inv = ti
        .try_inverse()
        .ok_or(PnpError::DegenerateGeometry("image normalization is singular"))?;
    Ok(ti_inv * hn * tp)
}

/// Initial marker pose from the plane-to-image homography.
///
/// Both sign choices of the decomposition are scored; the one with every
/// corner in front of the camera wins, ties going to the lower reprojection
/// error.
pub fn init_from_homography(
    obs: &Observation,
    board: &MarkerBoard,
    intr: &CameraIntrinsics,
) -> Result<Pose, PnpError> {
    check_correspondences(obs, board)?;
    if obs.correspondences.iter().any(|c| c.point.z.abs() > 1e-9 * board.side.max(1.0)) {
        return Err(PnpError::DegenerateGeometry("board points are not on the Z = 0 plane"));
    }
    let plane: Vec<Vector2<f64>> = obs.correspondences.iter().map(|c| c.point.xy()).collect();
    let image: Vec<Vector2<f64>> = obs
        .correspondences
        .iter()
        .map(|c| intr.normalize(&c.pixel))
        .collect();
    let h = plane_homography(&plane, &image)?;
    let h1 = h.column(0).into_owned();
    let h2 = h.column(1).into_owned();
    let h3 = h.column(2).into_owned();
    let scale = 2.0 / (h1.norm() + h2.norm());
    if !scale.is_finite() {
        return Err(PnpError::DegenerateGeometry("homography columns vanish"));
    }

    let pairs = pairs_of(obs);
    let mut best: Option<(Pose, f64)> = None;
    for sign in [1.0, -1.0] {
        let s = sign * scale;
        let r1 = h1 * s;
        let r2 = h2 * s;
        let t = h3 * s;
        let r3 = r1.cross(&r2);
        let mut r = Matrix3::zeros();
        r.set_column(0, &r1);
        r.set_column(1, &r2);
        r.set_column(2, &r3);
        let pose = Pose::new(nearest_rotation(&r), t);
        if obs.correspondences.iter().any(|c| pose.act(&c.point).z <= MIN_DEPTH) {
            continue;
        }
        let Some(cost) = cost_of(&pose, &pairs, intr) else {
            continue;
        };
        if best.as_ref().is_none_or(|(_, c)| cost < *c) {
            best = Some((pose, cost));
        }
    }
    best.map(|(p, _)| p)
        .ok_or(PnpError::DegenerateGeometry("no homography decomposition has positive depth"))
}
