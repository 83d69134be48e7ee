//! Synthetic interiors for tests, examples and demos.
//!
//! Surfaces are sampled uniformly with point counts proportional to their
//! area, so the clouds look like terrestrial-scanner maps at a fraction of
//! the size.

use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::geom::{Point3, PointCloud, Pose, RigidTransform, Vector3};
use crate::mission::{CaptureMode, MissionRequest, TechniqueId, Viewpoint};
use crate::FORMAT_VERSION;

/// A surface patch that can be sampled uniformly.
#[derive(Debug, Clone, Copy)]
enum Patch {
    /// Axis-aligned rectangle: origin + two edge vectors.
    Rect { origin: Point3, u: Vector3, v: Vector3 },
    /// Vertical cylinder wall segment between two angles.
    Cylinder {
        center: Point3,
        radius: f64,
        a0: f64,
        a1: f64,
        height: f64,
    },
    /// Horizontal circular sector (floor/ceiling of an apse).
    Sector {
        center: Point3,
        radius: f64,
        a0: f64,
        a1: f64,
    },
}

impl Patch {
    fn area(&self) -> f64 {
        match *self {
            Patch::Rect { u, v, .. } => u.cross(&v).norm(),
            Patch::Cylinder {
                radius, a0, a1, height, ..
            } => radius * (a1 - a0) * height,
            Patch::Sector { radius, a0, a1, .. } => 0.5 * radius * radius * (a1 - a0),
        }
    }

    fn sample(&self, rng: &mut impl Rng) -> Point3 {
        match *self {
            Patch::Rect { origin, u, v } => origin + u * rng.random::<f64>() + v * rng.random::<f64>(),
            Patch::Cylinder {
                center,
                radius,
                a0,
                a1,
                height,
            } => {
                let a = rng.random_range(a0..a1);
                center + Vector3::new(radius * a.cos(), radius * a.sin(), rng.random::<f64>() * height)
            }
            Patch::Sector { center, radius, a0, a1 } => {
                let a = rng.random_range(a0..a1);
                let r = radius * rng.random::<f64>().sqrt();
                center + Vector3::new(r * a.cos(), r * a.sin(), 0.0)
            }
        }
    }
}

fn rect(o: [f64; 3], u: [f64; 3], v: [f64; 3]) -> Patch {
    Patch::Rect {
        origin: Point3::from(o),
        u: Vector3::from(u),
        v: Vector3::from(v),
    }
}

fn sample_patches(patches: &[Patch], n: usize, rng: &mut impl Rng) -> Vec<Point3> {
    let total: f64 = patches.iter().map(Patch::area).sum();
    let mut pts = Vec::with_capacity(n);
    for (i, p) in patches.iter().enumerate() {
        let count = if i + 1 == patches.len() {
            n - pts.len()
        } else {
            ((p.area() / total) * n as f64).round() as usize
        };
        pts.extend((0..count).map(|_| p.sample(rng)));
    }
    pts
}

/// Dimensions of a single-nave church with a semicircular apse.
#[derive(Debug, Clone, Copy)]
pub struct ChurchDims {
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub apse_height: f64,
}

impl Default for ChurchDims {
    fn default() -> Self {
        Self {
            length: 30.0,
            width: 12.0,
            height: 12.0,
            apse_height: 9.0,
        }
    }
}

impl ChurchDims {
    pub fn apse_radius(&self) -> f64 {
        self.width / 2.0
    }

    /// Is `p` inside the walls (nave or apse), ignoring height?
    pub fn contains_xy(&self, p: &Point3) -> bool {
        let hw = self.width / 2.0;
        let in_nave = p.x >= 0.0 && p.x <= self.length && p.y.abs() <= hw;
        let in_apse = p.x >= self.length && (p - Point3::new(self.length, 0.0, p.z)).norm() <= self.apse_radius();
        in_nave || in_apse
    }
}

fn church_patches(d: &ChurchDims) -> Vec<Patch> {
    let (l, w, h, ah) = (d.length, d.width, d.height, d.apse_height);
    let hw = w / 2.0;
    let mut patches = vec![
        rect([0.0, -hw, 0.0], [l, 0.0, 0.0], [0.0, w, 0.0]),
        rect([0.0, -hw, h], [l, 0.0, 0.0], [0.0, w, 0.0]),
        rect([0.0, -hw, 0.0], [l, 0.0, 0.0], [0.0, 0.0, h]),
        rect([0.0, hw, 0.0], [l, 0.0, 0.0], [0.0, 0.0, h]),
        rect([0.0, -hw, 0.0], [0.0, w, 0.0], [0.0, 0.0, h]),
        // Triumphal arch wall above the apse opening.
        rect([l, -hw, ah], [0.0, w, 0.0], [0.0, 0.0, h - ah]),
        Patch::Cylinder {
            center: Point3::new(l, 0.0, 0.0),
            radius: hw,
            a0: -PI / 2.0,
            a1: PI / 2.0,
            height: ah,
        },
        Patch::Sector {
            center: Point3::new(l, 0.0, 0.0),
            radius: hw,
            a0: -PI / 2.0,
            a1: PI / 2.0,
        },
        Patch::Sector {
            center: Point3::new(l, 0.0, ah),
            radius: hw,
            a0: -PI / 2.0,
            a1: PI / 2.0,
        },
    ];
    // Two rows of pillars.
    let mut x = 5.0;
    while x < l - 2.0 {
        for y in [-hw * 0.6, hw * 0.6] {
            patches.push(Patch::Cylinder {
                center: Point3::new(x, y, 0.0),
                radius: 0.4,
                a0: 0.0,
                a1: TAU,
                height: h,
            });
        }
        x += 5.0;
    }
    patches
}

/// Single-nave church with an apse at `+x`, floor at `z = 0`.
pub fn church(dims: &ChurchDims, n: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new(sample_patches(&church_patches(dims), n, &mut rng), "map")
}

/// Rectangular nave, symmetric under a half turn about its center, with one
/// side chapel at `(chapel_x, -width/2)` that breaks the symmetry.
pub fn symmetric_nave_with_chapel(n: usize, seed: u64) -> PointCloud {
    let (l, w, h) = (32.0, 12.0, 12.0);
    let hw = w / 2.0;
    let (cx, cw, cd, ch) = (8.0, 6.0, 4.0, 6.0);
    let patches = vec![
        rect([-l / 2.0, -hw, 0.0], [l, 0.0, 0.0], [0.0, w, 0.0]),
        rect([-l / 2.0, -hw, h], [l, 0.0, 0.0], [0.0, w, 0.0]),
        rect([-l / 2.0, hw, 0.0], [l, 0.0, 0.0], [0.0, 0.0, h]),
        rect([-l / 2.0, -hw, 0.0], [0.0, w, 0.0], [0.0, 0.0, h]),
        rect([l / 2.0, -hw, 0.0], [0.0, w, 0.0], [0.0, 0.0, h]),
        // South wall with the chapel opening cut out of its lower part.
        rect([-l / 2.0, -hw, 0.0], [l / 2.0 + cx - cw / 2.0, 0.0, 0.0], [0.0, 0.0, h]),
        rect(
            [cx + cw / 2.0, -hw, 0.0],
            [l / 2.0 - cx - cw / 2.0, 0.0, 0.0],
            [0.0, 0.0, h],
        ),
        rect([cx - cw / 2.0, -hw, ch], [cw, 0.0, 0.0], [0.0, 0.0, h - ch]),
        // Chapel box.
        rect([cx - cw / 2.0, -hw - cd, 0.0], [cw, 0.0, 0.0], [0.0, cd, 0.0]),
        rect([cx - cw / 2.0, -hw - cd, ch], [cw, 0.0, 0.0], [0.0, cd, 0.0]),
        rect([cx - cw / 2.0, -hw - cd, 0.0], [cw, 0.0, 0.0], [0.0, 0.0, ch]),
        rect([cx - cw / 2.0, -hw - cd, 0.0], [0.0, cd, 0.0], [0.0, 0.0, ch]),
        rect([cx + cw / 2.0, -hw - cd, 0.0], [0.0, cd, 0.0], [0.0, 0.0, ch]),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new(sample_patches(&patches, n, &mut rng), "map")
}

/// A simulated first LiDAR frame of `map`.
#[derive(Debug, Clone)]
pub struct SyntheticScan {
    pub scan: PointCloud,
    /// Ground-truth scan-to-map transform (the sensor pose in the map).
    pub truth: RigidTransform,
}

/// Subsamples `map`, adds isotropic Gaussian noise and expresses the result
/// in a sensor frame placed at `truth`.
pub fn scan_of(map: &PointCloud, truth: RigidTransform, keep: f64, noise_sigma: f64, seed: u64) -> SyntheticScan {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_sigma.max(0.0)).unwrap();
    let to_sensor = truth.inverse();
    let mut points = Vec::with_capacity((map.len() as f64 * keep) as usize + 1);
    for p in &map.points {
        if rng.random::<f64>() < keep {
            let jitter = Vector3::new(noise.sample(&mut rng), noise.sample(&mut rng), noise.sample(&mut rng));
            points.push(to_sensor.apply(&(p + jitter)));
        }
    }
    SyntheticScan {
        scan: PointCloud::new(points, "scan"),
        truth,
    }
}

/// Random sensor pose on the nave floor (0.3 m above it) with random yaw.
pub fn random_sensor_pose(dims: &ChurchDims, seed: u64) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pos = Vector3::new(
        rng.random_range(0.2 * dims.length..0.8 * dims.length),
        rng.random_range(-0.3 * dims.width..0.3 * dims.width),
        0.3,
    );
    RigidTransform::from_translation(pos) * RigidTransform::from_yaw(rng.random_range(-PI..PI))
}

/// A mission photographing the side walls of [`church`] from the central
/// aisle.
///
/// Stops sit midway between pillar pairs at `x = 2.5, 7.5, …`, alternate
/// between the two walls and vary in height; each camera looks straight at
/// the wall point level with it. Takeoff is at the west end of the aisle.
pub fn aisle_mission(dims: &ChurchDims, count: usize, technique: TechniqueId, seed: u64) -> MissionRequest {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hw = dims.width / 2.0;
    let slots = ((dims.length - 2.5) / 5.0).floor().max(1.0) as usize;
    let viewpoints = (0..count)
        .map(|i| {
            let x = 2.5 + 5.0 * (i % slots) as f64;
            let z = rng.random_range(2.0..(dims.height - 4.0).max(2.5));
            let side = if i % 2 == 0 { 1.0 } else { -1.0 };
            let camera = Point3::new(x, rng.random_range(-1.0..1.0), z);
            let ooi = Point3::new(x, side * hw, z);
            Viewpoint {
                camera_pose: Pose::looking_at(camera, &ooi),
                ooi_point: ooi.into(),
                technique,
                acquire: true,
                capture: CaptureMode::OnboardCamera,
            }
        })
        .collect();
    MissionRequest {
        format_version: FORMAT_VERSION,
        takeoff: Pose::at(Point3::new(1.5, 0.0, 1.5)),
        viewpoints,
        team_size: 1,
        ambient_lux: 300.0,
        t_max: 600.0,
        cruise_speed: 0.5,
    }
}
