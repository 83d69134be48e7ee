//! Static 3D kd-tree for nearest-neighbour and radius queries.
//!
//! Ties in distance resolve to the smallest point index, so query results
//! never depend on the internal tree layout.

use super::Point3;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    /// Points permuted into leaf order so every leaf is contiguous.
    points: Vec<[f64; 3]>,
    /// Original index of each entry of `points`.
    ids: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(points: &[Point3]) -> Self {
        let pts: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut order: Vec<usize> = (0..pts.len()).collect();
        let mut nodes = Vec::with_capacity(2 * pts.len() / LEAF_SIZE + 1);
        if !pts.is_empty() {
            build(&pts, &mut order, 0, pts.len(), &mut nodes);
        }
        let points = order.iter().map(|&i| pts[i]).collect();
        Self {
            points,
            ids: order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index and squared distance of the nearest point.
    pub fn nearest(&self, q: &Point3) -> Option<(usize, f64)> {
        self.nearest_within(q, f64::INFINITY)
    }

    /// Nearest point with squared distance `<= max_dist2`.
    pub fn nearest_within(&self, q: &Point3, max_dist2: f64) -> Option<(usize, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let q = [q.x, q.y, q.z];
        let mut best = (max_dist2, usize::MAX);
        self.nearest_rec(0, &q, &mut best);
        (best.1 != usize::MAX).then_some((best.1, best.0))
    }

    fn nearest_rec(&self, node: usize, q: &[f64; 3], best: &mut (f64, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for (p, &i) in self.points[start..end].iter().zip(&self.ids[start..end]) {
                    let d = dist2(p, q);
                    if d < best.0 || (d == best.0 && i < best.1) {
                        *best = (d, i);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near, q, best);
                if diff * diff <= best.0 {
                    self.nearest_rec(far, q, best);
                }
            }
        }
    }

    /// Indices of all points within `radius` of `q` (inclusive), sorted.
    pub fn within_radius(&self, q: &Point3, radius: f64) -> Vec<usize> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.radius_rec(0, &[q.x, q.y, q.z], radius * radius, &mut |i| out.push(i));
        }
        out.sort_unstable();
        out
    }

    /// Number of points within `radius` of `q` (inclusive).
    pub fn count_within(&self, q: &Point3, radius: f64) -> usize {
        let mut n = 0;
        if !self.nodes.is_empty() {
            self.radius_rec(0, &[q.x, q.y, q.z], radius * radius, &mut |_| n += 1);
        }
        n
    }

    fn radius_rec(&self, node: usize, q: &[f64; 3], r2: f64, visit: &mut dyn FnMut(usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for (p, &i) in self.points[start..end].iter().zip(&self.ids[start..end]) {
                    if dist2(p, q) <= r2 {
                        visit(i);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                if diff <= 0.0 || diff * diff <= r2 {
                    self.radius_rec(left, q, r2, visit);
                }
                if diff >= 0.0 || diff * diff <= r2 {
                    self.radius_rec(right, q, r2, visit);
                }
            }
        }
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let (dx, dy, dz) = (a[0] - b[0], a[1] - b[1], a[2] - b[2]);
    dx * dx + dy * dy + dz * dz
}

fn build(pts: &[[f64; 3]], order: &mut [usize], start: usize, end: usize, nodes: &mut Vec<Node>) -> usize {
    let id = nodes.len();
    if end - start <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let slice = &mut order[start..end];
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in slice.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(pts[i][a]);
            hi[a] = hi[a].max(pts[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap();
    if hi[axis] - lo[axis] == 0.0 {
        // All points coincide.
        nodes.push(Node::Leaf { start, end });
        return id;
    }
    let mid = slice.len() / 2;
    slice.select_nth_unstable_by(mid, |&a, &b| pts[a][axis].total_cmp(&pts[b][axis]).then(a.cmp(&b)));
    let value = pts[slice[mid]][axis];
    // Left holds [start, start+mid), right the rest; points equal to `value`
    // may land on both sides, which the `<=`/`>=` tests above account for.
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let left = build(pts, order, start, start + mid, nodes);
    let right = build(pts, order, start + mid, end, nodes);
    nodes[id] = Node::Split {
        axis,
        value,
        left,
        right,
    };
    id
}
