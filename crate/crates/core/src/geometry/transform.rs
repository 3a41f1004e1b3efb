use std::fmt;
use std::ops::Mul;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::Point3;
use crate::error::{Error, Result};

/// Tolerance for the orthonormality and determinant checks.
pub const ORTHONORMAL_TOL: f64 = 1e-9;

/// Element of SE(3): `p -> R p + t`.
#[derive(Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl fmt::Debug for RigidTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (axis, angle) = self.axis_angle();
        f.debug_struct("RigidTransform")
            .field("axis", &[axis.x, axis.y, axis.z])
            .field("angle_deg", &angle.to_degrees())
            .field("t", &[self.translation.x, self.translation.y, self.translation.z])
            .finish()
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, checking `RᵀR = I` and `det R = +1`.
    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite translation".into()));
        }
        let t = Self {
            rotation,
            translation,
        };
        if !t.is_valid() {
            return Err(Error::InvalidArgument(format!(
                "rotation is not orthonormal with det +1 (det = {})",
                rotation.determinant()
            )));
        }
        Ok(t)
    }

    /// Re-orthonormalizes `rotation` through its nearest rotation.
    pub fn from_parts_projected(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: project_to_so3(&rotation),
            translation,
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64, t: Vector3<f64>) -> Self {
        let rot = if axis.norm() == 0.0 {
            Rotation3::identity()
        } else {
            Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle)
        };
        Self {
            rotation: *rot.matrix(),
            translation: t,
        }
    }

    /// Rotation about +z by `yaw` radians followed by translation `t`.
    pub fn from_yaw(yaw: f64, t: Vector3<f64>) -> Self {
        Self::from_axis_angle(Vector3::z(), yaw, t)
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>, t: Vector3<f64>) -> Self {
        Self {
            rotation: *q.to_rotation_matrix().matrix(),
            translation: t,
        }
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(self.rotation))
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn is_valid(&self) -> bool {
        let r = &self.rotation;
        if !r.iter().all(|v| v.is_finite()) {
            return false;
        }
        let ortho = (r.transpose() * r - Matrix3::identity()).abs().max();
        ortho <= ORTHONORMAL_TOL && (r.determinant() - 1.0).abs() <= ORTHONORMAL_TOL
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Rotation angle in radians, in `[0, π]`.
    pub fn rotation_angle(&self) -> f64 {
        // atan2 keeps full precision near zero where acos does not.
        let r = &self.rotation;
        let vee = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
        (0.5 * vee.norm()).atan2(0.5 * (r.trace() - 1.0))
    }

    pub fn axis_angle(&self) -> (Vector3<f64>, f64) {
        let w = so3_log(&self.rotation);
        let angle = w.norm();
        if angle == 0.0 {
            (Vector3::z(), 0.0)
        } else {
            (w / angle, angle)
        }
    }

    /// Angle and translation distance between `self` and `other`.
    pub fn error_to(&self, other: &Self) -> (f64, f64) {
        let delta = self.inverse() * *other;
        (
            delta.rotation_angle(),
            (self.translation - other.translation).norm(),
        )
    }

    /// Tangent-space coordinates `[ρ, φ]` such that `exp([ρ, φ]) = self`.
    pub fn log(&self) -> Vector6<f64> {
        let phi = so3_log(&self.rotation);
        let rho = left_jacobian_inverse(&phi) * self.translation;
        Vector6::new(rho.x, rho.y, rho.z, phi.x, phi.y, phi.z)
    }

    pub fn exp(xi: &Vector6<f64>) -> Self {
        let rho = Vector3::new(xi[0], xi[1], xi[2]);
        let phi = Vector3::new(xi[3], xi[4], xi[5]);
        Self {
            rotation: so3_exp(&phi),
            translation: left_jacobian(&phi) * rho,
        }
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * rhs.rotation,
            translation: self.rotation * rhs.translation + self.translation,
        }
    }
}

impl Mul<&RigidTransform> for &RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: &RigidTransform) -> RigidTransform {
        *self * *rhs
    }
}

/// Serialized as a quaternion `[x, y, z, w]` plus translation.
#[derive(Serialize, Deserialize)]
struct TransformRepr {
    quaternion: [f64; 4],
    translation: [f64; 3],
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let q = self.quaternion();
        TransformRepr {
            quaternion: [q.i, q.j, q.k, q.w],
            translation: [self.translation.x, self.translation.y, self.translation.z],
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = TransformRepr::deserialize(d)?;
        let [x, y, z, w] = r.quaternion;
        let q = nalgebra::Quaternion::new(w, x, y, z);
        if q.norm() < 1e-12 || !q.coords.iter().all(|v| v.is_finite()) {
            return Err(serde::de::Error::custom("degenerate quaternion"));
        }
        Ok(Self::from_quaternion(
            UnitQuaternion::from_quaternion(q),
            Vector3::from(r.translation),
        ))
    }
}

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn so3_exp(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    if theta2 < 1e-16 {
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let theta = theta2.sqrt();
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / theta2;
    Matrix3::identity() + a * k + b * k * k
}

pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let vee = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let theta = cos.acos();
    if theta < 1e-8 {
        return 0.5 * vee;
    }
    if std::f64::consts::PI - theta < 1e-6 {
        // Near π the antisymmetric part vanishes; recover the axis from the
        // symmetric part, R ≈ 2 a aᵀ - I.
        let s = (r + Matrix3::identity()) * 0.5;
        let (i, _) = [s[(0, 0)], s[(1, 1)], s[(2, 2)]]
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        let mut axis = Vector3::new(s[(0, i)], s[(1, i)], s[(2, i)]);
        axis /= axis.norm();
        if axis.dot(&vee) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    vee * (theta / (2.0 * theta.sin()))
}

fn left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    if theta2 < 1e-12 {
        return Matrix3::identity() + 0.5 * k + k * k / 6.0;
    }
    let theta = theta2.sqrt();
    let a = (1.0 - theta.cos()) / theta2;
    let b = (theta - theta.sin()) / (theta2 * theta);
    Matrix3::identity() + a * k + b * k * k
}

fn left_jacobian_inverse(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = phi.norm_squared();
    let k = skew(phi);
    if theta2 < 1e-12 {
        return Matrix3::identity() - 0.5 * k + k * k / 12.0;
    }
    let theta = theta2.sqrt();
    let half = 0.5 * theta;
    let c = (1.0 - half * half.cos() / half.sin()) / theta2;
    Matrix3::identity() - 0.5 * k + c * k * k
}

/// Nearest rotation in the Frobenius sense, with the reflection fixed.
pub fn project_to_so3(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]` (Kabsch).
/// Returns `None` for fewer than three pairs or mismatched lengths.
pub fn fit_rigid(src: &[Point3], dst: &[Point3]) -> Option<RigidTransform> {
    if src.len() != dst.len() || src.len() < 3 {
        return None;
    }
    let cs = super::mean_of(src);
    let cd = super::mean_of(dst);
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (d.coords - cd) * (s.coords - cs).transpose();
    }
    let r = project_to_so3(&h);
    Some(RigidTransform {
        rotation: r,
        translation: cd - r * cs,
    })
}
