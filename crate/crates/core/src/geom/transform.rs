use std::ops::Mul;

use nalgebra::{Matrix3, Matrix4};
use serde::{Deserialize, Serialize};

use super::{GeomError, Point3, Vector3};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Rigid SE(3) transform `p -> R p + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3,
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

    /// Builds a transform, rejecting rotations that are not proper
    /// orthonormal matrices within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3) -> Result<Self, GeomError> {
        if !is_rotation(&rotation) {
            return Err(GeomError::Parameter("rotation is not orthonormal with det = +1".into()));
        }
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(GeomError::Parameter("translation is not finite".into()));
        }
        Ok(Self { rotation, translation })
    }

    /// Re-orthonormalizes `rotation` (SVD projection) before building.
    pub(crate) fn from_parts_projected(rotation: Matrix3<f64>, translation: Vector3) -> Self {
        Self {
            rotation: project_to_rotation(&rotation),
            translation,
        }
    }

    pub fn from_translation(t: Vector3) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    pub fn from_yaw(yaw: f64) -> Self {
        let (s, c) = yaw.sin_cos();
        Self {
            rotation: Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation by `yaw` about the vertical axis through `pivot`.
    pub fn yaw_about(pivot: &Point3, yaw: f64) -> Self {
        let r = Self::from_yaw(yaw);
        let t = pivot.coords - r.rotation * pivot.coords;
        Self {
            rotation: r.rotation,
            translation: t,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3 {
        &self.translation
    }

    /// Heading of the rotated x axis projected on the horizontal plane.
    pub fn yaw(&self) -> f64 {
        self.rotation[(1, 0)].atan2(self.rotation[(0, 0)])
    }

    /// Rotation angle of the full 3D rotation (axis-angle magnitude).
    pub fn rotation_angle(&self) -> f64 {
        let c = ((self.rotation.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
        c.acos()
    }

    pub fn apply(&self, p: &Point3) -> Point3 {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn apply_vector(&self, v: &Vector3) -> Vector3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_homogeneous(&self) -> [[f64; 4]; 4] {
        let m = self.to_matrix();
        let mut out = [[0.0; 4]; 4];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, v) in row.iter_mut().enumerate() {
                *v = m[(r, c)];
            }
        }
        out
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn from_homogeneous(m: &[[f64; 4]; 4]) -> Result<Self, GeomError> {
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(GeomError::Parameter(
                "last row of a rigid transform must be [0, 0, 0, 1]".into(),
            ));
        }
        let rotation = Matrix3::from_fn(|r, c| m[r][c]);
        let translation = Vector3::new(m[0][3], m[1][3], m[2][3]);
        Self::new(rotation, translation)
    }

    pub fn is_orthonormal(&self) -> bool {
        is_rotation(&self.rotation)
    }
}

impl Mul for RigidTransform {
    type Output = RigidTransform;

    fn mul(self, rhs: RigidTransform) -> RigidTransform {
        self.compose(&rhs)
    }
}

impl Serialize for RigidTransform {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_homogeneous().serialize(s)
    }
}

impl<'de> Deserialize<'de> for RigidTransform {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let m = <[[f64; 4]; 4]>::deserialize(d)?;
        Self::from_homogeneous(&m).map_err(serde::de::Error::custom)
    }
}

fn is_rotation(r: &Matrix3<f64>) -> bool {
    if !r.iter().all(|c| c.is_finite()) {
        return false;
    }
    let err = (r.transpose() * r - Matrix3::identity()).abs().max();
    err <= ORTHONORMAL_TOL && (r.determinant() - 1.0).abs() <= ORTHONORMAL_TOL
}

pub(crate) fn project_to_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn yaw_about_pivot_fixes_pivot() {
        let pivot = Point3::new(3.0, -1.0, 2.0);
        let t = RigidTransform::yaw_about(&pivot, 0.7);
        assert!((t.apply(&pivot) - pivot).norm() < 1e-12);
        assert!((t.yaw() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn compose_applies_right_first() {
        let a = RigidTransform::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let b = RigidTransform::from_yaw(FRAC_PI_2);
        let p = Point3::new(1.0, 0.0, 0.0);
        let q = (a * b).apply(&p);
        assert!((q - Point3::new(1.0, 1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn inverse_round_trip() {
        let t = RigidTransform::yaw_about(&Point3::new(1.0, 2.0, 3.0), 1.1)
            * RigidTransform::from_translation(Vector3::new(0.5, -4.0, 2.0));
        let id = t * t.inverse();
        assert!((id.to_matrix() - Matrix4::identity()).abs().max() < 1e-12);
        assert!(id.is_orthonormal());
    }

    #[test]
    fn rejects_non_orthonormal() {
        let mut m = RigidTransform::identity().to_homogeneous();
        m[0][0] = 1.01;
        assert!(RigidTransform::from_homogeneous(&m).is_err());
        let mut reflect = RigidTransform::identity().to_homogeneous();
        reflect[2][2] = -1.0;
        assert!(RigidTransform::from_homogeneous(&reflect).is_err());
    }

    #[test]
    fn serde_is_row_major_homogeneous() {
        let t = RigidTransform::from_translation(Vector3::new(1.0, 2.0, 3.0));
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(
            s,
            "[[1.0,0.0,0.0,1.0],[0.0,1.0,0.0,2.0],[0.0,0.0,1.0,3.0],[0.0,0.0,0.0,1.0]]"
        );
        let back: RigidTransform = serde_json::from_str(&s).unwrap();
        assert_eq!(back, t);
    }
}
