//! Rigid-body transforms in SE(3).
//!
//! A [`Pose`] is a rotation matrix plus a translation, acting on points as
//! `p' = R p + t`. Composition follows homogeneous matrix multiplication, so
//! `a.compose(&b)` applies `b` first and then `a`.
//!
//! [`Twist`] holds local coordinates `(ω, v)` (rotation first) used by the
//! least-squares solvers. The exponential map is the full SE(3) exponential
//! with the coupling matrix `V`, so `exp` of a pure rotation has zero
//! translation and `exp` of a pure translation is that translation.

use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4, Rotation3, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

/// Orthonormality residual above which a rotation gets projected back onto SO(3).
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-9;

/// Distance from π under which `log` refuses to pick an axis.
pub const CUT_LOCUS_TOLERANCE: f64 = 1e-6;

const SMALL_ANGLE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum GeometryError {
    #[error("rotation angle {angle} is at the cut locus (π); logarithm is not unique")]
    DegenerateRotation { angle: f64 },
}

#[derive(Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl fmt::Debug for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let q = self.quaternion();
        f.debug_struct("Pose")
            .field("t", &[self.translation.x, self.translation.y, self.translation.z])
            .field("q_wxyz", &[q.w, q.i, q.j, q.k])
            .finish()
    }
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, projecting `rotation` onto SO(3) if it is not already
    /// orthonormal to within [`ORTHONORMAL_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        let mut pose = Self {
            rotation,
            translation,
        };
        if pose.orthonormality_residual() > ORTHONORMAL_TOLERANCE {
            pose.orthonormalize();
        }
        pose
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn translation_xyz(x: f64, y: f64, z: f64) -> Self {
        Self::from_translation(Vector3::new(x, y, z))
    }

    /// Rotation by `angle` radians about `axis` (need not be normalized), zero translation.
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n == 0.0 {
            return Self::identity();
        }
        Self::from_rotation_vector(axis * (angle / n))
    }

    pub fn from_rotation_vector(omega: Vector3<f64>) -> Self {
        Self {
            rotation: so3_exp(&omega),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_quaternion(q: &UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self::new(q.to_rotation_matrix().into_inner(), translation)
    }

    /// Planar pose: translation `(x, y, z)` and heading `yaw` about +Z.
    pub fn from_xyz_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        let rotation = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        Self {
            rotation,
            translation: Vector3::new(x, y, z),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    /// Rotation angle in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        so3_angle(&self.rotation)
    }

    /// Homogeneous product `self · other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        let mut out = Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        };
        if out.orthonormality_residual() > ORTHONORMAL_TOLERANCE {
            out.orthonormalize();
        }
        out
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `R p + t`.
    pub fn act(&self, point: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * point + self.translation
    }

    /// Rotates a direction without translating it.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    pub fn exp(twist: &Twist) -> Pose {
        let omega = twist.rotation;
        let theta2 = omega.norm_squared();
        let theta = theta2.sqrt();
        let w = skew(&omega);
        let w2 = w * w;
        let (a, b) = if theta < SMALL_ANGLE {
            (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
        } else {
            (
                (1.0 - theta.cos()) / theta2,
                (theta - theta.sin()) / (theta2 * theta),
            )
        };
        let v = Matrix3::identity() + w * a + w2 * b;
        Pose {
            rotation: so3_exp(&omega),
            translation: v * twist.translation,
        }
    }

    /// Inverse of [`Pose::exp`] for rotation angles below π.
    pub fn log(&self) -> Result<Twist, GeometryError> {
        let omega = so3_log(&self.rotation)?;
        let theta2 = omega.norm_squared();
        let theta = theta2.sqrt();
        let w = skew(&omega);
        let c = if theta < SMALL_ANGLE {
            1.0 / 12.0 + theta2 / 720.0
        } else {
            let half = 0.5 * theta;
            (1.0 - half * half.cos() / half.sin()) / theta2
        };
        let v_inv = Matrix3::identity() - w * 0.5 + (w * w) * c;
        Ok(Twist {
            rotation: omega,
            translation: v_inv * self.translation,
        })
    }

    /// Left perturbation `exp(δ) · self`.
    pub fn retract(&self, delta: &Twist) -> Pose {
        Pose::exp(delta).compose(self)
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &Matrix4<f64>) -> Pose {
        Pose::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// Frobenius norm of `RᵀR − I` plus the deviation of `det R` from one.
    pub fn orthonormality_residual(&self) -> f64 {
        let gram = self.rotation.transpose() * self.rotation - Matrix3::identity();
        gram.norm() + (self.rotation.determinant() - 1.0).abs()
    }

    /// Projects the rotation onto the nearest proper rotation (polar decomposition).
    pub fn orthonormalize(&mut self) {
        self.rotation = nearest_rotation(&self.rotation);
    }

    /// Translation distance and rotation angle between two poses.
    pub fn distance(&self, other: &Pose) -> (f64, f64) {
        let dt = (self.translation - other.translation).norm();
        let dr = so3_angle(&(self.rotation.transpose() * other.rotation));
        (dt, dr)
    }

    /// Frobenius rotation difference and Euclidean translation difference.
    pub fn frobenius_distance(&self, other: &Pose) -> (f64, f64) {
        (
            (self.rotation - other.rotation).norm(),
            (self.translation - other.translation).norm(),
        )
    }

    /// Position of the frame described by this pose when it is read as a
    /// world-to-frame transform, i.e. `−Rᵀ t`.
    pub fn origin_in_world(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }
}

impl Mul for Pose {
    type Output = Pose;

    fn mul(self, rhs: Pose) -> Pose {
        self.compose(&rhs)
    }
}

impl Mul<&Pose> for &Pose {
    type Output = Pose;

    fn mul(self, rhs: &Pose) -> Pose {
        self.compose(rhs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub rotation: Vector3<f64>,
    pub translation: Vector3<f64>,
}

impl Twist {
    pub fn new(rotation: Vector3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            rotation: Vector3::new(v[0], v[1], v[2]),
            translation: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.rotation.x,
            self.rotation.y,
            self.rotation.z,
            self.translation.x,
            self.translation.y,
            self.translation.z,
        )
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula.
pub fn so3_exp(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let theta = theta2.sqrt();
    let w = skew(omega);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + w * a + (w * w) * b
}

fn so3_angle(r: &Matrix3<f64>) -> f64 {
    let s = 0.5 * vee_antisymmetric(r).norm();
    let c = 0.5 * (r.trace() - 1.0);
    s.atan2(c)
}

fn vee_antisymmetric(r: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)])
}

pub fn so3_log(r: &Matrix3<f64>) -> Result<Vector3<f64>, GeometryError> {
    let axis = vee_antisymmetric(r);
    let s = 0.5 * axis.norm();
    let c = 0.5 * (r.trace() - 1.0);
    let theta = s.atan2(c);
    if std::f64::consts::PI - theta < CUT_LOCUS_TOLERANCE {
        return Err(GeometryError::DegenerateRotation { angle: theta });
    }
    let scale = if theta < SMALL_ANGLE {
        0.5 * (1.0 + theta * theta / 6.0)
    } else {
        0.5 * theta / theta.sin()
    };
    Ok(axis * scale)
}

/// Closest proper rotation in the Frobenius sense.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Matrix3::identity(),
    };
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    r
}
