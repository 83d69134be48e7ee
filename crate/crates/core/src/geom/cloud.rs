use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ensure_finite, GeomError, KdTree, Point3, RigidTransform};

/// An unordered set of 3D points tagged with the frame they are expressed in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Point3>,
    pub frame: String,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>, frame: impl Into<String>) -> Self {
        Self {
            points,
            frame: frame.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Checks the invariants alignment relies on.
    pub fn validate(&self) -> Result<(), GeomError> {
        if self.points.is_empty() {
            return Err(GeomError::Empty);
        }
        ensure_finite(&self.points)
    }

    pub fn transformed(&self, t: &RigidTransform, frame: impl Into<String>) -> Self {
        Self::new(self.points.iter().map(|p| t.apply(p)).collect(), frame)
    }

    pub fn centroid(&self) -> Option<Point3> {
        if self.points.is_empty() {
            return None;
        }
        let sum = self
            .points
            .iter()
            .fold(nalgebra::Vector3::zeros(), |acc, p| acc + p.coords);
        Some(Point3::from(sum / self.points.len() as f64))
    }

    pub fn min_z(&self) -> Option<f64> {
        self.points.iter().map(|p| p.z).min_by(f64::total_cmp)
    }

    /// Axis-aligned bounds `(min, max)`.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let first = *self.points.first()?;
        Some(
            self.points
                .iter()
                .fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))),
        )
    }
}

pub(crate) fn voxel_key(p: &Point3, origin: &Point3, leaf: f64) -> [i64; 3] {
    [
        ((p.x - origin.x) / leaf).floor() as i64,
        ((p.y - origin.y) / leaf).floor() as i64,
        ((p.z - origin.z) / leaf).floor() as i64,
    ]
}

/// Replaces the points of every occupied voxel by their centroid.
///
/// The grid is anchored at the coordinate origin. Output points are ordered
/// by voxel index, so the result does not depend on input order.
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> Result<PointCloud, GeomError> {
    if !(leaf > 0.0 && leaf.is_finite()) {
        return Err(GeomError::Parameter(format!("voxel leaf must be positive, got {leaf}")));
    }
    ensure_finite(&cloud.points)?;
    struct Acc {
        sum: nalgebra::Vector3<f64>,
        n: usize,
        lo: Point3,
        hi: Point3,
    }
    let origin = Point3::origin();
    let mut voxels: BTreeMap<[i64; 3], Acc> = BTreeMap::new();
    for p in &cloud.points {
        voxels
            .entry(voxel_key(p, &origin, leaf))
            .and_modify(|a| {
                a.sum += p.coords;
                a.n += 1;
                a.lo = a.lo.inf(p);
                a.hi = a.hi.sup(p);
            })
            .or_insert(Acc {
                sum: p.coords,
                n: 1,
                lo: *p,
                hi: *p,
            });
    }
    let points = voxels
        .into_values()
        .map(|a| {
            // Clamping keeps round-off from pushing the centroid out of its voxel.
            let c = Point3::from(a.sum / a.n as f64);
            c.sup(&a.lo).inf(&a.hi)
        })
        .collect();
    Ok(PointCloud::new(points, cloud.frame.clone()))
}

/// Keeps the points that have at least `min_neighbors` other points within
/// `radius`. Input order is preserved.
pub fn radius_outlier_filter(cloud: &PointCloud, radius: f64, min_neighbors: usize) -> Result<PointCloud, GeomError> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(GeomError::Parameter(format!(
            "outlier radius must be positive, got {radius}"
        )));
    }
    if min_neighbors == 0 {
        return Err(GeomError::Parameter("min_neighbors must be at least 1".into()));
    }
    if cloud.is_empty() {
        return Ok(cloud.clone());
    }
    ensure_finite(&cloud.points)?;
    let tree = KdTree::new(&cloud.points);
    let points = cloud
        .points
        .iter()
        .filter(|p| tree.count_within(p, radius) > min_neighbors)
        .copied()
        .collect();
    Ok(PointCloud::new(points, cloud.frame.clone()))
}
