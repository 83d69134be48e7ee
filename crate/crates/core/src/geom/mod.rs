//! Geometric primitives and point-cloud preprocessing.
//!
//! Everything here lives in a right-handed frame with `z` pointing up
//! (antiparallel to gravity), in meters.

mod cloud;
mod heading;
mod hull;
pub mod kdtree;
pub mod ply;
mod transform;

pub use cloud::{radius_outlier_filter, voxel_downsample, PointCloud};
pub use heading::{principal_heading, Heading};
pub use hull::{convex_hull, convex_hull_edges, ConvexHull, HullEdgeSet};
pub use kdtree::KdTree;
pub use transform::RigidTransform;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point in meters.
pub type Point3 = nalgebra::Point3<f64>;
pub type Vector3 = nalgebra::Vector3<f64>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeomError {
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),
    #[error("empty point cloud")]
    Empty,
}

/// Camera or vehicle pose: position, heading about `z` and gimbal pitch.
///
/// Pitch is positive when the optical axis points above the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub position: [f64; 3],
    #[serde(default)]
    pub heading: f64,
    #[serde(default)]
    pub pitch: f64,
}

impl Pose {
    pub fn new(position: Point3, heading: f64, pitch: f64) -> Self {
        Self {
            position: [position.x, position.y, position.z],
            heading,
            pitch,
        }
    }

    pub fn at(position: Point3) -> Self {
        Self::new(position, 0.0, 0.0)
    }

    pub fn point(&self) -> Point3 {
        Point3::new(self.position[0], self.position[1], self.position[2])
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|c| c.is_finite()) && self.heading.is_finite() && self.pitch.is_finite()
    }

    /// Unit vector along the optical axis.
    pub fn optical_axis(&self) -> Vector3 {
        let (sp, cp) = self.pitch.sin_cos();
        let (sh, ch) = self.heading.sin_cos();
        Vector3::new(cp * ch, cp * sh, sp)
    }

    /// Pose at `position` looking toward `target`.
    pub fn looking_at(position: Point3, target: &Point3) -> Self {
        let d = target - position;
        let horizontal = d.x.hypot(d.y);
        let heading = if horizontal > 0.0 { d.y.atan2(d.x) } else { 0.0 };
        Self::new(position, heading, d.z.atan2(horizontal))
    }
}

/// Wraps an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut w = a.rem_euclid(TAU);
    if w > PI {
        w -= TAU;
    }
    w
}

/// Signed shortest rotation from `from` to `to`.
pub fn angle_diff(to: f64, from: f64) -> f64 {
    wrap_angle(to - from)
}

pub(crate) fn ensure_finite(points: &[Point3]) -> Result<(), GeomError> {
    match points.iter().position(|p| !p.coords.iter().all(|c| c.is_finite())) {
        Some(i) => Err(GeomError::NonFinite(i)),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((angle_diff(-3.0, 3.0) - (2.0 * PI - 6.0)).abs() < 1e-12);
    }

    #[test]
    fn looking_at_recovers_axis() {
        let p = Point3::new(1.0, 2.0, 3.0);
        let t = Point3::new(4.0, -2.0, 5.0);
        let pose = Pose::looking_at(p, &t);
        let expected = (t - p).normalize();
        assert!((pose.optical_axis() - expected).norm() < 1e-12);
    }
}
