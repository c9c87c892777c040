//! SE(3) rigid-transform algebra.
//!
//! Transforms are parameterized by three Euler angles (radians) and a
//! translation (mm), applied about an explicit rotation center. The Euler
//! convention is fixed to extrinsic x-y-z throughout the crate:
//! `R = Rz(theta_z) * Ry(theta_y) * Rx(theta_x)`.
//!
//! Angles are radians internally; the JSON form and all user-facing reports
//! use degrees.

use nalgebra::{Matrix3, Matrix4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("matrix is not a rotation: {0}")]
    NotARotation(String),
}

/// 6-DoF rigid motion: Euler angles (radians), translation and rotation
/// center (mm). A point maps as `R * (p - center) + center + d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub theta: Vector3<f64>,
    pub d: Vector3<f64>,
    pub center: Vector3<f64>,
}

impl RigidTransform {
    pub fn new(theta: Vector3<f64>, d: Vector3<f64>, center: Vector3<f64>) -> Self {
        RigidTransform { theta, d, center }
    }

    pub fn identity() -> Self {
        RigidTransform {
            theta: Vector3::zeros(),
            d: Vector3::zeros(),
            center: Vector3::zeros(),
        }
    }

    /// Identity motion about a given center.
    pub fn identity_about(center: Vector3<f64>) -> Self {
        RigidTransform {
            theta: Vector3::zeros(),
            d: Vector3::zeros(),
            center,
        }
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        euler_to_matrix(self.theta)
    }

    /// Homogeneous 4x4 matrix with the center folded into the translation
    /// column: `T(p) = R p + (center + d - R center)`.
    pub fn matrix(&self) -> Matrix4<f64> {
        let r = self.rotation_matrix();
        let t = self.center + self.d - r * self.center;
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&t);
        m
    }

    /// Rebuilds the Euler-Cartesian form from a rotation matrix and raw
    /// translation column, keeping `center` as given.
    pub fn from_parts(r: &Matrix3<f64>, t: Vector3<f64>, center: Vector3<f64>) -> Self {
        let theta = matrix_to_euler(r);
        // t = center + d - R center  =>  d = t - center + R center
        let d = t - center + r * center;
        RigidTransform { theta, d, center }
    }

    pub fn is_identity(&self, tol: f64) -> bool {
        self.theta.norm() < tol && self.d.norm() < tol
    }
}

/// Serialized form: degrees for angles, mm for lengths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RigidTransformJson {
    pub theta_deg: [f64; 3],
    pub d_mm: [f64; 3],
    pub center_mm: [f64; 3],
}

impl From<&RigidTransform> for RigidTransformJson {
    fn from(t: &RigidTransform) -> Self {
        RigidTransformJson {
            theta_deg: [
                t.theta.x.to_degrees(),
                t.theta.y.to_degrees(),
                t.theta.z.to_degrees(),
            ],
            d_mm: [t.d.x, t.d.y, t.d.z],
            center_mm: [t.center.x, t.center.y, t.center.z],
        }
    }
}

impl From<&RigidTransformJson> for RigidTransform {
    fn from(j: &RigidTransformJson) -> Self {
        RigidTransform {
            theta: Vector3::new(
                j.theta_deg[0].to_radians(),
                j.theta_deg[1].to_radians(),
                j.theta_deg[2].to_radians(),
            ),
            d: Vector3::from(j.d_mm),
            center: Vector3::from(j.center_mm),
        }
    }
}

/// Weights of the composite slice loss: `gamma` balances rotation against
/// displacement units, `lambda` weighs the reconstruction consistency term.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossConfig {
    pub gamma: f64,
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            gamma: 1.0,
            lambda: 0.1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.gamma > 0.0) {
            return Err(format!("gamma must be > 0, got {}", self.gamma));
        }
        if !(self.lambda >= 0.0) {
            return Err(format!("lambda must be >= 0, got {}", self.lambda));
        }
        Ok(())
    }
}

/// Rotation matrix for extrinsic x-y-z Euler angles:
/// `R = Rz(theta_z) * Ry(theta_y) * Rx(theta_x)`.
pub fn euler_to_matrix(theta: Vector3<f64>) -> Matrix3<f64> {
    let (sx, cx) = theta.x.sin_cos();
    let (sy, cy) = theta.y.sin_cos();
    let (sz, cz) = theta.z.sin_cos();
    Matrix3::new(
        cz * cy,
        cz * sy * sx - sz * cx,
        cz * sy * cx + sz * sx,
        sz * cy,
        sz * sy * sx + cz * cx,
        sz * sy * cx - cz * sx,
        -sy,
        cy * sx,
        cy * cx,
    )
}

/// Inverse of [`euler_to_matrix`]. Near gimbal lock (|theta_y| -> pi/2) the
/// x/z split is degenerate; theta_x is pinned to zero there.
pub fn matrix_to_euler(r: &Matrix3<f64>) -> Vector3<f64> {
    let sy = -r[(2, 0)];
    let theta_y = sy.clamp(-1.0, 1.0).asin();
    let cy = (1.0 - sy * sy).max(0.0).sqrt();
    if cy > 1e-7 {
        Vector3::new(
            r[(2, 1)].atan2(r[(2, 2)]),
            theta_y,
            r[(1, 0)].atan2(r[(0, 0)]),
        )
    } else {
        Vector3::new(0.0, theta_y, (-r[(0, 1)]).atan2(r[(1, 1)]))
    }
}

/// Composition: `matrix(compose(a, b)) = matrix(a) * matrix(b)`. The result
/// keeps `a`'s rotation center.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    let ra = a.rotation_matrix();
    let rb = b.rotation_matrix();
    let r = ra * rb;
    let ta = a.center + a.d - ra * a.center;
    let tb = b.center + b.d - rb * b.center;
    let t = ra * tb + ta;
    RigidTransform::from_parts(&r, t, a.center)
}

/// Inverse transform, about the same center.
pub fn invert(t: &RigidTransform) -> RigidTransform {
    let r = t.rotation_matrix();
    let tr = t.center + t.d - r * t.center;
    let rinv = r.transpose();
    RigidTransform::from_parts(&rinv, -(rinv * tr), t.center)
}

/// Applies the motion to a world-space point: `R (p - center) + center + d`.
pub fn apply_to_point(t: &RigidTransform, p: Vector3<f64>) -> Vector3<f64> {
    t.rotation_matrix() * (p - t.center) + t.center + t.d
}

/// Unit quaternion (w, x, y, z) extracted from a rotation matrix using
/// Shepperd's method; numerically stable for all angles including near pi.
pub fn quaternion_from_matrix(r: &Matrix3<f64>) -> [f64; 4] {
    let trace = r[(0, 0)] + r[(1, 1)] + r[(2, 2)];
    let (w, x, y, z);
    if trace > 0.0 {
        let s = (trace + 1.0).sqrt() * 2.0;
        w = 0.25 * s;
        x = (r[(2, 1)] - r[(1, 2)]) / s;
        y = (r[(0, 2)] - r[(2, 0)]) / s;
        z = (r[(1, 0)] - r[(0, 1)]) / s;
    } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
        let s = (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt() * 2.0;
        w = (r[(2, 1)] - r[(1, 2)]) / s;
        x = 0.25 * s;
        y = (r[(0, 1)] + r[(1, 0)]) / s;
        z = (r[(0, 2)] + r[(2, 0)]) / s;
    } else if r[(1, 1)] > r[(2, 2)] {
        let s = (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt() * 2.0;
        w = (r[(0, 2)] - r[(2, 0)]) / s;
        x = (r[(0, 1)] + r[(1, 0)]) / s;
        y = 0.25 * s;
        z = (r[(1, 2)] + r[(2, 1)]) / s;
    } else {
        let s = (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt() * 2.0;
        w = (r[(1, 0)] - r[(0, 1)]) / s;
        x = (r[(0, 2)] + r[(2, 0)]) / s;
        y = (r[(1, 2)] + r[(2, 1)]) / s;
        z = 0.25 * s;
    }
    let n = (w * w + x * x + y * y + z * z).sqrt();
    [w / n, x / n, y / n, z / n]
}

/// Rotation angle in [0, pi] via quaternion extraction.
pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    let [w, x, y, z] = quaternion_from_matrix(r);
    2.0 * (x * x + y * y + z * z).sqrt().atan2(w.abs())
}

fn check_rotation(r: &Matrix3<f64>, tol: f64) -> Result<(), GeometryError> {
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    if err > tol {
        return Err(GeometryError::NotARotation(format!(
            "R^T R deviates from identity by {err:.3e}"
        )));
    }
    if r.determinant() < 0.0 {
        return Err(GeometryError::NotARotation(
            "determinant is negative".into(),
        ));
    }
    Ok(())
}

/// Matrix logarithm of a rotation, returned as the antisymmetric matrix
/// `angle * skew(axis)`. The axis is extracted from the quaternion form so
/// angles near pi stay stable.
pub fn matrix_log_rotation(r: &Matrix3<f64>) -> Result<Matrix3<f64>, GeometryError> {
    check_rotation(r, 1e-6)?;
    let [w, x, y, z] = quaternion_from_matrix(r);
    // Canonicalize to w >= 0 so the angle lands in [0, pi].
    let (w, v) = if w < 0.0 {
        (-w, Vector3::new(-x, -y, -z))
    } else {
        (w, Vector3::new(x, y, z))
    };
    let vn = v.norm();
    if vn < 1e-12 {
        return Ok(Matrix3::zeros());
    }
    let angle = 2.0 * vn.atan2(w);
    let axis = v / vn;
    Ok(skew(axis * angle))
}

/// Antisymmetric cross-product matrix of `v`.
pub fn skew(v: Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' rotation exponential of an axis-angle vector.
pub fn rotation_exp(v: Vector3<f64>) -> Matrix3<f64> {
    let angle = v.norm();
    if angle < 1e-12 {
        return Matrix3::identity() + skew(v);
    }
    let k = skew(v / angle);
    Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos())
}

/// Geodesic distance between two rigid motions (Eq. 7 form):
/// `sqrt(||log(Rhat^T R)||_F^2 + gamma ||dhat - d||^2)`.
///
/// `||log(Rhat^T R)||_F = sqrt(2) * angle(Rhat^T R)`, so the rotational part
/// is computed from the quaternion angle directly.
pub fn geodesic_slice_loss(t: &RigidTransform, t_hat: &RigidTransform, cfg: &LossConfig) -> f64 {
    let rel = t_hat.rotation_matrix().transpose() * t.rotation_matrix();
    let angle = rotation_angle(&rel);
    let dd = t_hat.d - t.d;
    (2.0 * angle * angle + cfg.gamma * dd.norm_squared()).sqrt()
}
