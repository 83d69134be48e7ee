use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::grid::{OccupancyGrid, VoxelKey};
use super::PlanError;
use crate::geom::Point3;

#[derive(PartialEq)]
struct Open {
    f: f64,
    g: f64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    // Min-heap on f; ties prefer larger g (deeper), then lower index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.g.total_cmp(&other.g))
            .then(other.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct Domain {
    lo: VoxelKey,
    dims: [usize; 3],
}

impl Domain {
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

    fn key(&self, i: usize) -> VoxelKey {
        let x = i % self.dims[0];
        let y = (i / self.dims[0]) % self.dims[1];
        let z = i / (self.dims[0] * self.dims[1]);
        [self.lo[0] + x as i64, self.lo[1] + y as i64, self.lo[2] + z as i64]
    }

    fn len(&self) -> usize {
        self.dims.iter().product()
    }
}

/// Octile distance generalised to 26-connectivity, in voxel units.
fn heuristic(a: &VoxelKey, b: &VoxelKey) -> f64 {
    let mut d = [0, 1, 2].map(|i| (a[i] - b[i]).abs() as f64);
    d.sort_by(f64::total_cmp);
    let (lo, mid, hi) = (d[0], d[1], d[2]);
    let s3 = 3f64.sqrt();
    let s2 = 2f64.sqrt();
    s3 * lo + s2 * (mid - lo) + (hi - mid)
}

fn moves() -> Vec<(VoxelKey, f64)> {
    let mut out = Vec::with_capacity(26);
    for dz in -1..=1i64 {
        for dy in -1..=1i64 {
            for dx in -1..=1i64 {
                if (dx, dy, dz) != (0, 0, 0) {
                    let n = (dx * dx + dy * dy + dz * dz) as f64;
                    out.push(([dx, dy, dz], n.sqrt()));
                }
            }
        }
    }
    out
}

/// A diagonal move is allowed only if every voxel of the small box it
/// cuts through is free, so the straight move never grazes an obstacle.
fn move_is_safe(grid: &OccupancyGrid, from: &VoxelKey, d: &VoxelKey) -> bool {
    let axes: Vec<usize> = (0..3).filter(|&a| d[a] != 0).collect();
    for mask in 1..(1u32 << axes.len()) {
        let mut k = *from;
        for (bit, &a) in axes.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                k[a] += d[a];
            }
        }
        if grid.is_occupied(&k) {
            return false;
        }
    }
    true
}

/// Raw 26-connected A* voxel path from `start` to `goal`, inclusive.
pub fn astar_voxels(grid: &OccupancyGrid, start: &VoxelKey, goal: &VoxelKey) -> Option<Vec<VoxelKey>> {
    let (mut lo, mut hi) = grid.bounds();
    for k in [start, goal] {
        for a in 0..3 {
            lo[a] = lo[a].min(k[a]);
            hi[a] = hi[a].max(k[a]);
        }
    }
    for a in 0..3 {
        lo[a] -= 1;
        hi[a] += 1;
    }
    let domain = Domain {
        lo,
        dims: [0, 1, 2].map(|a| (hi[a] - lo[a] + 1) as usize),
    };
    let s = domain.index(start)?;
    let t = domain.index(goal)?;
    let mut g = vec![f64::INFINITY; domain.len()];
    let mut parent = vec![usize::MAX; domain.len()];
    let mut closed = vec![false; domain.len()];
    let mut heap = BinaryHeap::new();
    g[s] = 0.0;
    heap.push(Open {
        f: heuristic(start, goal),
        g: 0.0,
        node: s,
    });
    let moves = moves();
    while let Some(Open { g: gc, node, .. }) = heap.pop() {
        if closed[node] {
            continue;
        }
        closed[node] = true;
        if node == t {
            let mut path = vec![domain.key(t)];
            let mut cur = t;
            while cur != s {
                cur = parent[cur];
                path.push(domain.key(cur));
            }
            path.reverse();
            return Some(path);
        }
        let k = domain.key(node);
        for (d, cost) in &moves {
            let nk = [k[0] + d[0], k[1] + d[1], k[2] + d[2]];
            let Some(ni) = domain.index(&nk) else { continue };
            if closed[ni] || grid.is_occupied(&nk) || !move_is_safe(grid, &k, d) {
                continue;
            }
            let ng = gc + cost;
            if ng < g[ni] {
                g[ni] = ng;
                parent[ni] = node;
                heap.push(Open {
                    f: ng + heuristic(&nk, goal),
                    g: ng,
                    node: ni,
                });
            }
        }
    }
    None
}

/// Collision-free path from `start` to `goal` through the inflated grid.
///
/// The A* voxel path is converted to voxel centres, bracketed by the exact
/// endpoints and then shortened greedily: from each kept point, jump to the
/// farthest later point still in line of sight.
pub fn plan_path(grid: &OccupancyGrid, start: &Point3, goal: &Point3) -> Result<Vec<Point3>, PlanError> {
    for (which, p) in [("start", start), ("goal", goal)] {
        if !p.coords.iter().all(|c| c.is_finite()) {
            return Err(PlanError::Parameter(format!("{which} is not finite")));
        }
        if grid.is_occupied_at(p) {
            return Err(PlanError::InfeasibleEndpoint {
                which: which.to_string(),
                point: [p.x, p.y, p.z],
            });
        }
    }
    if grid.segment_is_free(start, goal) {
        return Ok(vec![*start, *goal]);
    }
    let sk = grid.key(start);
    let gk = grid.key(goal);
    let voxels = astar_voxels(grid, &sk, &gk).ok_or(PlanError::Unreachable {
        from: [start.x, start.y, start.z],
        to: [goal.x, goal.y, goal.z],
    })?;

    let mut raw = Vec::with_capacity(voxels.len() + 2);
    raw.push(*start);
    raw.extend(
        voxels
            .iter()
            .skip(1)
            .take(voxels.len().saturating_sub(2))
            .map(|k| grid.center(k)),
    );
    raw.push(*goal);
    Ok(shortcut(grid, &raw))
}

fn shortcut(grid: &OccupancyGrid, raw: &[Point3]) -> Vec<Point3> {
    let mut out = vec![raw[0]];
    let mut i = 0;
    while i + 1 < raw.len() {
        let mut j = raw.len() - 1;
        while j > i + 1 && !grid.segment_is_free(&raw[i], &raw[j]) {
            j -= 1;
        }
        out.push(raw[j]);
        i = j;
    }
    out
}

/// Total length of a polyline.
pub fn path_length(path: &[Point3]) -> f64 {
    path.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::PointCloud;
    use std::collections::VecDeque;

    /// A 20 × 20 m wall at x = 5 with a 2 m square gap around (5, 2, 2).
    pub(crate) fn wall_with_gap() -> OccupancyGrid {
        let mut pts = Vec::new();
        for iy in 0..=200 {
            for iz in 0..=200 {
                let y = -10.0 + 0.1 * iy as f64;
                let z = -8.0 + 0.1 * iz as f64;
                if (y - 2.0).abs() < 1.0 && (z - 2.0).abs() < 1.0 {
                    continue;
                }
                pts.push(Point3::new(5.05, y, z));
            }
        }
        OccupancyGrid::build(&PointCloud::new(pts, "m"), 0.25, 0.25).unwrap()
    }

    /// Breadth-first search over the same move set, returning the shortest
    /// weighted path length by brute-force Dijkstra relaxation.
    fn brute_force_length(grid: &OccupancyGrid, s: VoxelKey, t: VoxelKey) -> Option<f64> {
        let (mut lo, mut hi) = grid.bounds();
        for a in 0..3 {
            lo[a] = lo[a].min(s[a]).min(t[a]) - 1;
            hi[a] = hi[a].max(s[a]).max(t[a]) + 1;
        }
        let inside = |k: &VoxelKey| (0..3).all(|a| k[a] >= lo[a] && k[a] <= hi[a]);
        let mut dist = std::collections::HashMap::new();
        dist.insert(s, 0.0f64);
        let mut queue = VecDeque::from([s]);
        while let Some(k) = queue.pop_front() {
            let dk = dist[&k];
            for (d, c) in moves() {
                let nk = [k[0] + d[0], k[1] + d[1], k[2] + d[2]];
                if !inside(&nk) || grid.is_occupied(&nk) || !move_is_safe(grid, &k, &d) {
                    continue;
                }
                let nd = dk + c;
                if dist.get(&nk).is_none_or(|&old| nd < old - 1e-12) {
                    dist.insert(nk, nd);
                    queue.push_back(nk);
                }
            }
        }
        dist.get(&t).copied()
    }

    #[test]
    fn free_space_is_straight() {
        let g = OccupancyGrid::build(&PointCloud::new(vec![Point3::new(50.0, 50.0, 50.0)], "m"), 0.25, 0.5).unwrap();
        let a = Point3::new(0.0, 0.0, 0.0);
        let b = Point3::new(3.0, 4.0, 1.0);
        assert_eq!(plan_path(&g, &a, &b).unwrap(), vec![a, b]);
    }

    #[test]
    fn path_through_gap() {
        let g = wall_with_gap();
        let a = Point3::new(1.0, -3.0, -1.0);
        let b = Point3::new(9.0, -3.0, -1.0);
        let path = plan_path(&g, &a, &b).unwrap();
        assert!(path.len() > 2);
        for w in path.windows(2) {
            assert!(g.segment_is_free_sampled(&w[0], &w[1], 0.05));
        }
        let len = path_length(&path);
        assert!(len >= (b - a).norm());
        // The passage must go near the gap.
        assert!(path
            .iter()
            .any(|p| (p.y - 2.0).abs() < 1.0 && (p.z - 2.0).abs() < 1.0 && (p.x - 5.0).abs() < 1.0));

        let res = g.resolution();
        let voxels = astar_voxels(&g, &g.key(&a), &g.key(&b)).unwrap();
        let astar_len: f64 = voxels
            .windows(2)
            .map(|w| (0..3).map(|i| ((w[1][i] - w[0][i]) as f64).powi(2)).sum::<f64>().sqrt())
            .sum();
        let oracle = brute_force_length(&g, g.key(&a), g.key(&b)).unwrap();
        assert!((astar_len - oracle).abs() < 1e-9, "{astar_len} vs {oracle}");
        // Shortcutting never lengthens the centre path.
        assert!(len <= astar_len * res + 2.0 * res);
    }

    #[test]
    fn endpoint_in_obstacle() {
        let g = wall_with_gap();
        let a = Point3::new(1.0, -3.0, -1.0);
        let b = Point3::new(5.2, -3.0, -1.0);
        assert!(
            matches!(plan_path(&g, &a, &b), Err(PlanError::InfeasibleEndpoint { ref which, .. }) if which == "goal")
        );
    }

    #[test]
    fn enclosed_goal_is_unreachable() {
        let mut pts = Vec::new();
        for i in -10..=10 {
            for j in -10..=10 {
                let (u, v) = (0.2 * i as f64, 0.2 * j as f64);
                for p in [
                    [2.0, u, v],
                    [-2.0, u, v],
                    [u, 2.0, v],
                    [u, -2.0, v],
                    [u, v, 2.0],
                    [u, v, -2.0],
                ] {
                    pts.push(Point3::from(p));
                }
            }
        }
        let g = OccupancyGrid::build(&PointCloud::new(pts, "m"), 0.25, 0.25).unwrap();
        let r = plan_path(&g, &Point3::new(0.1, 0.1, 0.1), &Point3::new(5.0, 0.0, 0.0));
        assert!(matches!(r, Err(PlanError::Unreachable { .. })));
    }
}
