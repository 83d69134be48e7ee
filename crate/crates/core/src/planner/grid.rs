use serde::{Deserialize, Serialize};

use super::PlanError;
use crate::geom::{Point3, PointCloud};

/// Integer voxel coordinates.
pub type VoxelKey = [i64; 3];

/// Voxel occupancy of a map, inflated by a safety margin.
///
/// Raw voxels are kept sparse; the inflated set is stored densely over the
/// bounding box of the dilated raw voxels. Everything outside that box is
/// free space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OccupancyGrid {
    resolution: f64,
    origin: [f64; 3],
    inflation: f64,
    raw: Vec<VoxelKey>,
    lo: VoxelKey,
    dims: [usize; 3],
    #[serde(with = "bitset")]
    inflated: Vec<bool>,
}

impl OccupancyGrid {
    /// Builds the grid with the voxel lattice anchored at the world origin.
    pub fn build(map: &PointCloud, resolution: f64, inflation: f64) -> Result<Self, PlanError> {
        Self::build_at(map, Point3::origin(), resolution, inflation)
    }

    pub fn build_at(map: &PointCloud, origin: Point3, resolution: f64, inflation: f64) -> Result<Self, PlanError> {
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(PlanError::Parameter(format!(
                "resolution must be positive, got {resolution}"
            )));
        }
        if !(inflation >= 0.0 && inflation.is_finite()) {
            return Err(PlanError::Parameter(format!(
                "inflation must be non-negative, got {inflation}"
            )));
        }
        if map.is_empty() {
            return Err(PlanError::Parameter("empty map".into()));
        }
        map.validate().map_err(|e| PlanError::Parameter(e.to_string()))?;

        let key = |p: &Point3| -> VoxelKey {
            [
                ((p.x - origin.x) / resolution).floor() as i64,
                ((p.y - origin.y) / resolution).floor() as i64,
                ((p.z - origin.z) / resolution).floor() as i64,
            ]
        };
        let mut raw: Vec<VoxelKey> = map.points.iter().map(key).collect();
        raw.sort_unstable();
        raw.dedup();

        let r = dilation_steps(inflation, resolution);
        let mut lo = raw[0];
        let mut hi = raw[0];
        for k in &raw {
            for a in 0..3 {
                lo[a] = lo[a].min(k[a]);
                hi[a] = hi[a].max(k[a]);
            }
        }
        for a in 0..3 {
            lo[a] -= r;
            hi[a] += r;
        }
        let dims = [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as usize);
        let mut grid = Self {
            resolution,
            origin: [origin.x, origin.y, origin.z],
            inflation,
            raw,
            lo,
            dims,
            inflated: vec![false; dims[0] * dims[1] * dims[2]],
        };
        for k in &grid.raw {
            let i = grid.index(k).expect("raw voxel inside box");
            grid.inflated[i] = true;
        }
        // Chebyshev dilation is a box filter, so it separates per axis.
        for axis in 0..3 {
            grid.dilate_axis(axis, r);
        }
        Ok(grid)
    }

    fn dilate_axis(&mut self, axis: usize, r: i64) {
        if r == 0 {
            return;
        }
        let src = self.inflated.clone();
        let stride = [1, self.dims[0], self.dims[0] * self.dims[1]][axis];
        let n = self.dims[axis] as i64;
        for (i, &occ) in src.iter().enumerate() {
            if !occ {
                continue;
            }
            let c = ((i / stride) % self.dims[axis]) as i64;
            let base = i - c as usize * stride;
            for d in (c - r).max(0)..=(c + r).min(n - 1) {
                self.inflated[base + d as usize * stride] = true;
            }
        }
    }

    fn index(&self, k: &VoxelKey) -> Option<usize> {
        let mut idx = 0usize;
        let mut mul = 1usize;
        for a in 0..3 {
            let c = k[a] - self.lo[a];
            if c < 0 || c >= self.dims[a] as i64 {
                return None;
            }
            idx += c as usize * mul;
            mul *= self.dims[a];
        }
        Some(idx)
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn inflation(&self) -> f64 {
        self.inflation
    }

    pub fn origin(&self) -> Point3 {
        Point3::from(self.origin)
    }

    /// Voxels containing at least one map point, sorted.
    pub fn raw_voxels(&self) -> &[VoxelKey] {
        &self.raw
    }

    /// Inclusive key range of the stored dense box.
    pub fn bounds(&self) -> (VoxelKey, VoxelKey) {
        let hi = [0, 1, 2].map(|a| self.lo[a] + self.dims[a] as i64 - 1);
        (self.lo, hi)
    }

    pub fn key(&self, p: &Point3) -> VoxelKey {
        let o = self.origin;
        [
            ((p.x - o[0]) / self.resolution).floor() as i64,
            ((p.y - o[1]) / self.resolution).floor() as i64,
            ((p.z - o[2]) / self.resolution).floor() as i64,
        ]
    }

    pub fn center(&self, k: &VoxelKey) -> Point3 {
        let o = self.origin;
        let h = 0.5 * self.resolution;
        Point3::new(
            o[0] + k[0] as f64 * self.resolution + h,
            o[1] + k[1] as f64 * self.resolution + h,
            o[2] + k[2] as f64 * self.resolution + h,
        )
    }

    pub fn is_raw(&self, k: &VoxelKey) -> bool {
        self.raw.binary_search(k).is_ok()
    }

    /// Whether a voxel is occupied after inflation.
    pub fn is_occupied(&self, k: &VoxelKey) -> bool {
        self.index(k).is_some_and(|i| self.inflated[i])
    }

    pub fn is_occupied_at(&self, p: &Point3) -> bool {
        self.is_occupied(&self.key(p))
    }

    pub fn occupied_count(&self) -> usize {
        self.inflated.iter().filter(|&&b| b).count()
    }

    /// All inflated voxels in lexicographic `(x, y, z)` order.
    pub fn occupied_voxels(&self) -> Vec<VoxelKey> {
        let mut out = Vec::new();
        for (i, &b) in self.inflated.iter().enumerate() {
            if b {
                let x = i % self.dims[0];
                let y = (i / self.dims[0]) % self.dims[1];
                let z = i / (self.dims[0] * self.dims[1]);
                out.push([self.lo[0] + x as i64, self.lo[1] + y as i64, self.lo[2] + z as i64]);
            }
        }
        out.sort_unstable();
        out
    }

    /// True if the segment touches no inflated voxel.
    ///
    /// Walks every voxel the segment passes through; when the segment
    /// crosses a voxel edge or corner exactly, all voxels sharing that edge
    /// or corner are checked, so the test is conservative.
    pub fn segment_is_free(&self, a: &Point3, b: &Point3) -> bool {
        first_blocked_voxel(self, a, b).is_none()
    }

    /// Brute-force clearance check: samples the segment every `step` meters.
    pub fn segment_is_free_sampled(&self, a: &Point3, b: &Point3, step: f64) -> bool {
        let len = (b - a).norm();
        let n = (len / step).ceil().max(1.0) as usize;
        (0..=n).all(|i| !self.is_occupied_at(&(a + (b - a) * (i as f64 / n as f64))))
    }
}

/// Number of voxels a margin of `inflation` meters spans.
pub fn dilation_steps(inflation: f64, resolution: f64) -> i64 {
    // Guard against 0.75 / 0.25 landing a hair above 3.
    ((inflation / resolution) - 1e-9).ceil().max(0.0) as i64
}

fn first_blocked_voxel(grid: &OccupancyGrid, a: &Point3, b: &Point3) -> Option<VoxelKey> {
    const TIE: f64 = 1e-9;
    let res = grid.resolution;
    let o = grid.origin();
    let pa = (a - o) / res;
    let pb = (b - o) / res;
    let d = pb - pa;
    let mut cur = grid.key(a);
    let end = grid.key(b);
    if grid.is_occupied(&cur) {
        return Some(cur);
    }
    let mut step = [0i64; 3];
    let mut t_max = [f64::INFINITY; 3];
    let mut t_delta = [f64::INFINITY; 3];
    for ax in 0..3 {
        if d[ax] > 0.0 {
            step[ax] = 1;
            t_max[ax] = ((cur[ax] + 1) as f64 - pa[ax]) / d[ax];
            t_delta[ax] = 1.0 / d[ax];
        } else if d[ax] < 0.0 {
            step[ax] = -1;
            t_max[ax] = (cur[ax] as f64 - pa[ax]) / d[ax];
            t_delta[ax] = -1.0 / d[ax];
        }
    }
    let budget: i64 = (0..3).map(|ax| (end[ax] - cur[ax]).abs()).sum::<i64>() + 3;
    for _ in 0..budget {
        let t = t_max[0].min(t_max[1]).min(t_max[2]);
        if t > 1.0 {
            break;
        }
        let crossing: Vec<usize> = (0..3).filter(|&ax| t_max[ax] - t <= TIE).collect();
        // Every partial step across a tied boundary is a voxel the segment
        // grazes; check them all.
        let m = crossing.len();
        for mask in 1..(1u32 << m) {
            let mut k = cur;
            for (bit, &ax) in crossing.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    k[ax] += step[ax];
                }
            }
            if grid.is_occupied(&k) {
                return Some(k);
            }
        }
        for &ax in &crossing {
            cur[ax] += step[ax];
            t_max[ax] += t_delta[ax];
        }
    }
    if grid.is_occupied(&end) {
        return Some(end);
    }
    None
}

mod bitset {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
        let packed: Vec<u8> = bits
            .chunks(8)
            .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i)))
            .collect();
        (bits.len(), packed).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
        let (len, packed): (usize, Vec<u8>) = Deserialize::deserialize(d)?;
        Ok((0..len).map(|i| packed[i / 8] & (1 << (i % 8)) != 0).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(res: f64, infl: f64) -> OccupancyGrid {
        OccupancyGrid::build(&PointCloud::new(vec![Point3::new(0.1, 0.1, 0.1)], "m"), res, infl).unwrap()
    }

    #[test]
    fn single_point_counts() {
        let g = single(0.5, 0.0);
        assert_eq!(g.occupied_count(), 1);
        assert_eq!(g.occupied_voxels(), g.raw_voxels());
        assert_eq!(single(0.5, 0.5).occupied_count(), 27);
        assert_eq!(single(0.25, 0.75).occupied_count(), 343);
    }

    #[test]
    fn inflation_is_chebyshev_dilation() {
        let pts = vec![
            Point3::new(0.3, 0.2, 0.1),
            Point3::new(2.1, -0.7, 1.4),
            Point3::new(2.2, -0.6, 1.3),
        ];
        let g = OccupancyGrid::build(&PointCloud::new(pts, "m"), 0.25, 0.5).unwrap();
        let (lo, hi) = g.bounds();
        for x in lo[0] - 2..=hi[0] + 2 {
            for y in lo[1] - 2..=hi[1] + 2 {
                for z in lo[2] - 2..=hi[2] + 2 {
                    let k = [x, y, z];
                    let near = g.raw_voxels().iter().any(|r| (0..3).all(|a| (r[a] - k[a]).abs() <= 2));
                    assert_eq!(g.is_occupied(&k), near, "{k:?}");
                }
            }
        }
        for r in g.raw_voxels() {
            assert!(g.is_occupied(r) && g.is_raw(r));
        }
    }

    #[test]
    fn bad_resolution() {
        let c = PointCloud::new(vec![Point3::origin()], "m");
        assert!(matches!(
            OccupancyGrid::build(&c, 0.0, 0.0),
            Err(PlanError::Parameter(_))
        ));
        assert!(matches!(
            OccupancyGrid::build(&c, -1.0, 0.0),
            Err(PlanError::Parameter(_))
        ));
    }

    #[test]
    fn segment_test_matches_dense_sampling() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3> = (0..40)
            .map(|_| {
                Point3::new(
                    rng.random_range(0.0..5.0),
                    rng.random_range(0.0..5.0),
                    rng.random_range(0.0..5.0),
                )
            })
            .collect();
        let g = OccupancyGrid::build(&PointCloud::new(pts, "m"), 0.25, 0.25).unwrap();
        for _ in 0..500 {
            let a = Point3::new(
                rng.random_range(-1.0..6.0),
                rng.random_range(-1.0..6.0),
                rng.random_range(-1.0..6.0),
            );
            let b = Point3::new(
                rng.random_range(-1.0..6.0),
                rng.random_range(-1.0..6.0),
                rng.random_range(-1.0..6.0),
            );
            if g.segment_is_free(&a, &b) {
                assert!(g.segment_is_free_sampled(&a, &b, 0.001));
            }
        }
        // Axis-aligned and exact-diagonal segments through voxel corners.
        let a = Point3::new(-1.0, -1.0, -1.0);
        let b = Point3::new(6.0, 6.0, 6.0);
        assert!(!g.segment_is_free(&a, &b) || g.segment_is_free_sampled(&a, &b, 0.0005));
    }

    #[test]
    fn serde_roundtrip() {
        let g = single(0.25, 0.5);
        let text = serde_json::to_string(&g).unwrap();
        let back: OccupancyGrid = serde_json::from_str(&text).unwrap();
        assert_eq!(back.occupied_voxels(), g.occupied_voxels());
    }
}
