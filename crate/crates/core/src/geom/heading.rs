use nalgebra::{Matrix3, SymmetricEigen};

use super::{ensure_finite, GeomError, PointCloud, Vector3};

/// Horizontal norms closer than this are treated as equal when choosing the
/// heading eigenvector; the larger eigenvalue wins such ties.
const HORIZONTAL_TIE: f64 = 1e-3;
/// Relative eigenvalue gap below which the heading is flagged ambiguous.
const EIGEN_GAP: f64 = 1e-3;

/// Dominant horizontal direction of a cloud.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Heading {
    /// Angle of the chosen eigenvector in the x-y plane, radians.
    pub theta: f64,
    /// Unit eigenvector with `x >= 0` (or `x == 0, y >= 0`).
    pub axis: Vector3,
    /// Set when the competing eigenvalue is too close to separate the two
    /// horizontal directions reliably.
    pub ambiguous: bool,
}

pub(crate) fn covariance(points: &[nalgebra::Point3<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n;
    points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = p.coords - mean;
        acc + d * d.transpose()
    }) / n
}

/// Heading of the covariance eigenvector with the largest horizontal
/// component.
///
/// Eigenvectors are only defined up to sign, so the returned angle carries
/// an inherent `pi` ambiguity; the sign is fixed so that `axis.x >= 0`.
pub fn principal_heading(cloud: &PointCloud) -> Result<Heading, GeomError> {
    if cloud.len() < 3 {
        return Err(GeomError::Parameter(format!(
            "principal heading needs at least 3 points, got {}",
            cloud.len()
        )));
    }
    ensure_finite(&cloud.points)?;
    let cov = covariance(&cloud.points);
    let eig = SymmetricEigen::new(cov);
    let largest = eig.eigenvalues.max();
    if !(largest > 0.0) {
        return Err(GeomError::Degenerate("all points coincide; covariance is zero".into()));
    }

    let mut candidates: Vec<(f64, f64, Vector3)> = (0..3)
        .map(|i| {
            let v: Vector3 = eig.eigenvectors.column(i).into();
            (v.x.hypot(v.y), eig.eigenvalues[i], v)
        })
        .collect();
    candidates.sort_by(|a, b| {
        if (a.0 - b.0).abs() <= HORIZONTAL_TIE {
            b.1.total_cmp(&a.1)
        } else {
            b.0.total_cmp(&a.0)
        }
    });
    let (_, lambda, mut axis) = candidates[0];
    if axis.x < 0.0 || (axis.x == 0.0 && axis.y < 0.0) {
        axis = -axis;
    }
    let ambiguous = candidates[1..]
        .iter()
        .any(|&(h, l, _)| h > 0.5 && (lambda - l).abs() <= EIGEN_GAP * largest);
    Ok(Heading {
        theta: axis.y.atan2(axis.x),
        axis,
        ambiguous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{Point3, RigidTransform};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn elongated(seed: u64, n: usize) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts = (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-10.0..10.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(0.0..1.0),
                )
            })
            .collect();
        PointCloud::new(pts, "t")
    }

    /// Cyclic Jacobi eigen-solver, independent of nalgebra's.
    fn jacobi_eigen(mut a: [[f64; 3]; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
        let mut v = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for _ in 0..100 {
            for (p, q) in [(0, 1), (0, 2), (1, 2)] {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..3 {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..3 {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
        ([a[0][0], a[1][1], a[2][2]], v)
    }

    #[test]
    fn x_aligned_cloud_has_zero_heading() {
        let h = principal_heading(&elongated(1, 2000)).unwrap();
        assert!(h.theta.abs() < 0.02, "{}", h.theta);
        assert!(!h.ambiguous);
    }

    #[test]
    fn rotation_equivariance() {
        let c = elongated(2, 2000);
        let base = principal_heading(&c).unwrap().theta;
        for deg in [30.0f64, 75.0, 120.0, -150.0] {
            let r = RigidTransform::from_yaw(deg.to_radians());
            let h = principal_heading(&c.transformed(&r, "r")).unwrap().theta;
            let diff = (h - base - deg.to_radians()).rem_euclid(PI);
            assert!(diff.min(PI - diff) < 1e-6, "deg {deg}: {diff}");
        }
        let r = RigidTransform::from_yaw(30f64.to_radians());
        let h = principal_heading(&c.transformed(&r, "r")).unwrap().theta;
        assert!((h - base - 30f64.to_radians()).abs() < 1e-6);
    }

    #[test]
    fn matches_independent_eigensolver() {
        // Synthetic nave: long walls plus a floor, rotated by 0.4 rad.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut pts = Vec::new();
        for _ in 0..3000 {
            let x = rng.random_range(0.0..30.0);
            match rng.random_range(0..3) {
                0 => pts.push(Point3::new(x, 0.0, rng.random_range(0.0..12.0))),
                1 => pts.push(Point3::new(x, 12.0, rng.random_range(0.0..12.0))),
                _ => pts.push(Point3::new(x, rng.random_range(0.0..12.0), 0.0)),
            }
        }
        let cloud = PointCloud::new(pts, "m").transformed(&RigidTransform::from_yaw(0.4), "m");
        let cov = covariance(&cloud.points);
        let arr = [
            [cov[(0, 0)], cov[(0, 1)], cov[(0, 2)]],
            [cov[(1, 0)], cov[(1, 1)], cov[(1, 2)]],
            [cov[(2, 0)], cov[(2, 1)], cov[(2, 2)]],
        ];
        let (vals, vecs) = jacobi_eigen(arr);
        let best = (0..3)
            .max_by(|&i, &j| {
                let hi = vecs[0][i].hypot(vecs[1][i]);
                let hj = vecs[0][j].hypot(vecs[1][j]);
                if (hi - hj).abs() <= HORIZONTAL_TIE {
                    vals[i].total_cmp(&vals[j])
                } else {
                    hi.total_cmp(&hj)
                }
            })
            .unwrap();
        let (mut x, mut y) = (vecs[0][best], vecs[1][best]);
        if x < 0.0 {
            x = -x;
            y = -y;
        }
        let oracle = y.atan2(x);
        let h = principal_heading(&cloud).unwrap();
        assert!((h.theta - oracle).abs() < 1e-9, "{} vs {}", h.theta, oracle);
        assert!((h.theta - 0.4).abs() < 0.05);
    }

    #[test]
    fn sign_convention() {
        let h =
            principal_heading(&elongated(4, 500).transformed(&RigidTransform::from_yaw(FRAC_PI_2 + 0.3), "r")).unwrap();
        assert!(h.axis.x >= 0.0);
        assert!(h.theta > -FRAC_PI_2 - 1e-12 && h.theta <= FRAC_PI_2 + 1e-12);
    }

    #[test]
    fn isotropic_cloud_is_flagged() {
        // Square ring: x and y variances are equal.
        let mut pts = Vec::new();
        for i in 0..100 {
            let t = i as f64 / 100.0 * 4.0 - 2.0;
            pts.extend([
                Point3::new(t, -2.0, 0.0),
                Point3::new(t, 2.0, 0.0),
                Point3::new(-2.0, t, 0.0),
                Point3::new(2.0, t, 0.0),
            ]);
        }
        pts.push(Point3::new(0.0, 0.0, 0.5));
        assert!(principal_heading(&PointCloud::new(pts, "t")).unwrap().ambiguous);
    }

    #[test]
    fn too_few_points() {
        let c = PointCloud::new(vec![Point3::origin(); 2], "t");
        assert!(matches!(principal_heading(&c), Err(GeomError::Parameter(_))));
        let c = PointCloud::new(vec![Point3::origin(); 5], "t");
        assert!(matches!(principal_heading(&c), Err(GeomError::Degenerate(_))));
    }
}
