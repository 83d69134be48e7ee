//! Point-to-point ICP with closed-form (SVD) rigid updates.

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::geom::{KdTree, Point3, PointCloud, RigidTransform, Vector3};

use super::AlignError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcpParams {
    /// Correspondences farther apart than this are ignored (m).
    pub max_corr_dist: f64,
    pub max_iterations: usize,
    /// Convergence: translation update below this (m) ...
    pub translation_eps: f64,
    /// ... and rotation update below this (rad).
    pub rotation_eps: f64,
}

impl IcpParams {
    pub fn validate(&self) -> Result<(), AlignError> {
        let ok = self.max_corr_dist > 0.0
            && self.max_iterations > 0
            && self.translation_eps > 0.0
            && self.rotation_eps > 0.0
            && self.max_corr_dist.is_finite();
        if ok {
            Ok(())
        } else {
            Err(AlignError::Config(format!(
                "ICP parameters must all be positive: {self:?}"
            )))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpOutcome {
    pub transform: RigidTransform,
    /// Mean squared distance over matched pairs at `transform`; `+inf` when
    /// nothing matched.
    pub cost: f64,
    /// Fraction of scan points with a correspondence at `transform`.
    pub overlap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub no_overlap: bool,
    /// Cost measured before each update, followed by the final cost.
    /// Points enter and leave the gate between iterations, so this may rise.
    pub trace: Vec<f64>,
    /// Mean of `min(d², max_corr_dist²)` over all scan points, at the same
    /// instants as `trace`. Each update minimizes it for the matched pairs,
    /// so it never increases.
    pub gated_trace: Vec<f64>,
}

/// A map prepared for repeated registration (kd-tree built once).
pub struct IcpTarget<'a> {
    points: &'a [Point3],
    tree: KdTree,
}

impl<'a> IcpTarget<'a> {
    pub fn new(map: &'a PointCloud) -> Self {
        Self {
            points: &map.points,
            tree: KdTree::new(&map.points),
        }
    }

    fn correspondences(
        &self,
        scan: &[Point3],
        t: &RigidTransform,
        max_dist2: f64,
    ) -> Vec<Option<(Point3, Point3, f64)>> {
        scan.par_iter()
            .map(|s| {
                let q = t.apply(s);
                self.tree
                    .nearest_within(&q, max_dist2)
                    .map(|(i, d2)| (q, self.points[i], d2))
            })
            .collect()
    }

    pub fn register(
        &self,
        scan: &PointCloud,
        init: &RigidTransform,
        params: &IcpParams,
    ) -> Result<IcpOutcome, AlignError> {
        params.validate()?;
        if self.points.is_empty() || scan.is_empty() {
            return Err(AlignError::EmptyCloud);
        }
        let gate2 = params.max_corr_dist * params.max_corr_dist;
        let n = scan.len() as f64;
        let mut current = *init;
        let mut trace = Vec::with_capacity(params.max_iterations + 1);
        let mut gated_trace = Vec::with_capacity(params.max_iterations + 1);
        let gated = |pairs: &[(Point3, Point3, f64)]| {
            (pairs.iter().map(|p| p.2).sum::<f64>() + (n - pairs.len() as f64) * gate2) / n
        };
        let mut converged = false;
        let mut iterations = 0;

        let no_overlap = |trace: Vec<f64>, gated_trace: Vec<f64>, iterations| IcpOutcome {
            transform: *init,
            cost: f64::INFINITY,
            overlap: 0.0,
            iterations,
            converged: false,
            no_overlap: true,
            trace,
            gated_trace,
        };

        while iterations < params.max_iterations {
            let pairs: Vec<_> = self
                .correspondences(&scan.points, &current, gate2)
                .into_iter()
                .flatten()
                .collect();
            if pairs.is_empty() {
                return Ok(no_overlap(trace, gated_trace, iterations));
            }
            trace.push(pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64);
            gated_trace.push(gated(&pairs));
            let update = kabsch(&pairs);
            current = update * current;
            iterations += 1;
            if update.translation().norm() < params.translation_eps && update.rotation_angle() < params.rotation_eps {
                converged = true;
                break;
            }
        }

        let pairs: Vec<_> = self
            .correspondences(&scan.points, &current, gate2)
            .into_iter()
            .flatten()
            .collect();
        if pairs.is_empty() {
            return Ok(no_overlap(trace, gated_trace, iterations));
        }
        let cost = pairs.iter().map(|p| p.2).sum::<f64>() / pairs.len() as f64;
        trace.push(cost);
        gated_trace.push(gated(&pairs));
        Ok(IcpOutcome {
            transform: current,
            cost,
            overlap: pairs.len() as f64 / n,
            iterations,
            converged,
            no_overlap: false,
            trace,
            gated_trace,
        })
    }
}

/// Registers `scan` onto `map` starting from `init`.
///
/// When no scan point has a map point within `max_corr_dist`, the outcome
/// carries `init`, infinite cost and `no_overlap = true`.
pub fn icp(
    map: &PointCloud,
    scan: &PointCloud,
    init: &RigidTransform,
    params: &IcpParams,
) -> Result<IcpOutcome, AlignError> {
    IcpTarget::new(map).register(scan, init, params)
}

/// Least-squares rigid transform taking each `src` onto its `dst`.
fn kabsch(pairs: &[(Point3, Point3, f64)]) -> RigidTransform {
    let n = pairs.len() as f64;
    let (cs, cd) = pairs
        .iter()
        .fold((Vector3::zeros(), Vector3::zeros()), |(a, b), (s, d, _)| {
            (a + s.coords, b + d.coords)
        });
    let (cs, cd) = (cs / n, cd / n);
    let h = pairs.iter().fold(Matrix3::zeros(), |acc, (s, d, _)| {
        acc + (s.coords - cs) * (d.coords - cd).transpose()
    });
    let svd = h.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let v = vt.transpose();
    let mut fix = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let r = v * fix * u.transpose();
    RigidTransform::from_parts_projected(r, cd - r * cs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn room(seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pts = Vec::new();
        for _ in 0..4000 {
            let (a, b) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            pts.push(match rng.random_range(0..5) {
                0 => Point3::new(a * 8.0, b * 5.0, 0.0),
                1 => Point3::new(a * 8.0, 0.0, b * 4.0),
                2 => Point3::new(a * 8.0, 5.0, b * 4.0),
                3 => Point3::new(0.0, a * 5.0, b * 4.0),
                _ => Point3::new(8.0, a * 5.0, b * 2.5),
            });
        }
        // A pillar to break the box symmetry.
        for _ in 0..400 {
            let t = rng.random_range(0.0..std::f64::consts::TAU);
            pts.push(Point3::new(
                2.0 + 0.3 * t.cos(),
                1.5 + 0.3 * t.sin(),
                rng.random_range(0.0..4.0),
            ));
        }
        PointCloud::new(pts, "map")
    }

    fn params(gate: f64) -> IcpParams {
        IcpParams {
            max_corr_dist: gate,
            max_iterations: 100,
            translation_eps: 1e-7,
            rotation_eps: 1e-7,
        }
    }

    #[test]
    fn identity_fixed_point() {
        let map = room(1);
        let out = icp(&map, &map, &RigidTransform::identity(), &params(1.0)).unwrap();
        assert!(out.converged);
        assert!(out.cost < 1e-20);
        assert!(out.transform.translation().norm() < 1e-12);
        assert_eq!(out.overlap, 1.0);
    }

    #[test]
    fn recovers_small_translation() {
        let map = room(2);
        let offset = Vector3::new(0.2, -0.1, 0.05).normalize() * 0.2;
        let scan = map.transformed(&RigidTransform::from_translation(offset), "scan");
        let out = icp(&map, &scan, &RigidTransform::identity(), &params(1.0)).unwrap();
        // Oracle: the exact inverse of the applied perturbation.
        let err = out.transform.translation() + offset;
        assert!(err.norm() < 1e-3, "residual translation {err}");
        assert!(out.transform.rotation_angle() < 1e-4);
    }

    #[test]
    fn gating_reports_no_overlap() {
        let map = room(3);
        let far = RigidTransform::from_translation(Vector3::new(100.0, 0.0, 0.0));
        let out = icp(&map, &map, &far, &params(1.0)).unwrap();
        assert!(out.no_overlap);
        assert_eq!(out.cost, f64::INFINITY);
        assert_eq!(out.transform, far);
    }

    #[test]
    fn cost_non_increasing_without_gating() {
        let map = room(4);
        let scan = map.transformed(
            &(RigidTransform::from_yaw(0.08) * RigidTransform::from_translation(Vector3::new(0.3, 0.2, 0.0))),
            "s",
        );
        let out = icp(&map, &scan, &RigidTransform::identity(), &params(1e6)).unwrap();
        for w in out.trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "{:?}", out.trace);
        }
    }

    #[test]
    fn kabsch_exact_on_noise_free_pairs() {
        let t = RigidTransform::yaw_about(&Point3::new(1.0, 2.0, 0.0), 0.7)
            * RigidTransform::from_translation(Vector3::new(0.5, -0.3, 0.2));
        let pairs: Vec<_> = room(5).points.iter().take(50).map(|p| (*p, t.apply(p), 0.0)).collect();
        let est = kabsch(&pairs);
        assert!((est.to_matrix() - t.to_matrix()).abs().max() < 1e-9);
    }

    #[test]
    fn rejects_bad_params() {
        let map = room(6);
        let mut p = params(1.0);
        p.max_iterations = 0;
        assert!(icp(&map, &map, &RigidTransform::identity(), &p).is_err());
    }
}
