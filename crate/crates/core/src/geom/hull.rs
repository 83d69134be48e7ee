//! 3D convex hull by quickhull.
//!
//! The hull is triangulated internally; [`ConvexHull::edges`] reports only
//! the edges between facets that are not coplanar, so a cube yields its 12
//! edges rather than 18 triangulation edges.

use std::collections::HashMap;

use super::{ensure_finite, GeomError, Point3, PointCloud, Vector3};

/// Undirected hull edges as vertex pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct HullEdgeSet {
    pub edges: Vec<(Point3, Point3)>,
}

impl HullEdgeSet {
    pub fn new(edges: Vec<(Point3, Point3)>) -> Self {
        Self { edges }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|(a, b)| (b - a).norm()).sum()
    }
}

/// Triangulated convex hull referencing the input points by index.
#[derive(Debug, Clone)]
pub struct ConvexHull {
    points: Vec<Point3>,
    /// Outward-oriented (counter-clockwise seen from outside) triangles.
    pub facets: Vec<[usize; 3]>,
    tolerance: f64,
}

#[derive(Debug, Clone, Copy)]
struct Plane {
    normal: Vector3,
    offset: f64,
}

impl Plane {
    fn through(a: &Point3, b: &Point3, c: &Point3) -> Self {
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        let normal = if len > 0.0 { n / len } else { n };
        Self {
            normal,
            offset: normal.dot(&a.coords),
        }
    }

    fn distance(&self, p: &Point3) -> f64 {
        self.normal.dot(&p.coords) - self.offset
    }
}

struct Facet {
    v: [usize; 3],
    plane: Plane,
    outside: Vec<usize>,
    alive: bool,
}

impl ConvexHull {
    /// Distance tolerance used for visibility and coplanarity decisions.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Signed distance of `p` above each facet plane (positive = outside).
    pub fn facet_distances<'a>(&'a self, p: &'a Point3) -> impl Iterator<Item = f64> + 'a {
        self.facets.iter().map(move |f| self.plane(f).distance(p))
    }

    fn plane(&self, f: &[usize; 3]) -> Plane {
        Plane::through(&self.points[f[0]], &self.points[f[1]], &self.points[f[2]])
    }

    pub fn volume(&self) -> f64 {
        let o = self.points[self.facets[0][0]];
        self.facets
            .iter()
            .map(|f| {
                let (a, b, c) = (self.points[f[0]] - o, self.points[f[1]] - o, self.points[f[2]] - o);
                a.dot(&b.cross(&c)) / 6.0
            })
            .sum()
    }

    /// Input indices of the points that are hull vertices, sorted.
    pub fn vertex_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.facets.iter().flatten().copied().collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Edges between non-coplanar facets, sorted by vertex index.
    pub fn edges(&self) -> HullEdgeSet {
        self.edges_merged(0.0)
    }

    /// Edges whose adjacent facets meet at a dihedral angle (between
    /// normals) above `merge_angle` radians. Facets closer to coplanar than
    /// that are treated as one face.
    pub fn edges_merged(&self, merge_angle: f64) -> HullEdgeSet {
        let min_cos = merge_angle.cos().min(1.0 - 1e-9);
        let mut by_edge: HashMap<(usize, usize), Vec<Vector3>> = HashMap::new();
        for f in &self.facets {
            let n = self.plane(f).normal;
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                by_edge.entry((a.min(b), a.max(b))).or_default().push(n);
            }
        }
        let mut keys: Vec<(usize, usize)> = by_edge
            .iter()
            .filter(|(_, normals)| normals.len() != 2 || normals[0].dot(&normals[1]) < min_cos)
            .map(|(k, _)| *k)
            .collect();
        keys.sort_unstable();
        HullEdgeSet::new(
            keys.into_iter()
                .map(|(a, b)| (self.points[a], self.points[b]))
                .collect(),
        )
    }
}

/// Convex hull edge set of `cloud`.
pub fn convex_hull_edges(cloud: &PointCloud) -> Result<HullEdgeSet, GeomError> {
    Ok(convex_hull(&cloud.points)?.edges())
}

pub fn convex_hull(points: &[Point3]) -> Result<ConvexHull, GeomError> {
    if points.len() < 4 {
        return Err(GeomError::Degenerate(format!(
            "convex hull needs at least 4 points, got {}",
            points.len()
        )));
    }
    ensure_finite(points)?;

    let (lo, hi) = points
        .iter()
        .fold((points[0], points[0]), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    let scale = (hi - lo).norm().max(f64::MIN_POSITIVE);
    let eps = scale * 1e-11;

    let simplex = initial_simplex(points, &lo, &hi, eps)?;
    let mut facets: Vec<Facet> = Vec::new();
    let mut edge_owner: HashMap<(usize, usize), usize> = HashMap::new();

    let centroid = Point3::from(simplex.iter().map(|&i| points[i].coords).sum::<Vector3>() / 4.0);
    for skip in 0..4 {
        let mut v: Vec<usize> = (0..4).filter(|&k| k != skip).map(|k| simplex[k]).collect();
        let mut plane = Plane::through(&points[v[0]], &points[v[1]], &points[v[2]]);
        if plane.distance(&centroid) > 0.0 {
            v.swap(1, 2);
            plane = Plane::through(&points[v[0]], &points[v[1]], &points[v[2]]);
        }
        add_facet(&mut facets, &mut edge_owner, [v[0], v[1], v[2]], plane);
    }

    let mut pending: Vec<usize> = (0..points.len()).filter(|i| !simplex.contains(i)).collect();
    assign_outside(points, &mut facets, &[0, 1, 2, 3], &mut pending, eps);

    let mut queue: Vec<usize> = (0..4).collect();
    while let Some(fi) = queue.pop() {
        if !facets[fi].alive || facets[fi].outside.is_empty() {
            continue;
        }
        let eye = *facets[fi]
            .outside
            .iter()
            .max_by(|&&a, &&b| {
                let pa = facets[fi].plane.distance(&points[a]);
                let pb = facets[fi].plane.distance(&points[b]);
                pa.total_cmp(&pb).then(b.cmp(&a))
            })
            .unwrap();
        let eye_p = points[eye];

        // Flood the visible region from `fi` across shared edges.
        let mut visible = vec![fi];
        let mut is_visible: HashMap<usize, bool> = HashMap::from([(fi, true)]);
        let mut cursor = 0;
        while cursor < visible.len() {
            let f = visible[cursor];
            cursor += 1;
            let v = facets[f].v;
            for k in 0..3 {
                let nb = edge_owner[&(v[(k + 1) % 3], v[k])];
                if is_visible.contains_key(&nb) {
                    continue;
                }
                let vis = facets[nb].plane.distance(&eye_p) > eps;
                is_visible.insert(nb, vis);
                if vis {
                    visible.push(nb);
                }
            }
        }

        let mut horizon = Vec::new();
        for &f in &visible {
            let v = facets[f].v;
            for k in 0..3 {
                let (a, b) = (v[k], v[(k + 1) % 3]);
                if !is_visible[&edge_owner[&(b, a)]] {
                    horizon.push((a, b));
                }
            }
        }

        let mut orphans = Vec::new();
        for &f in &visible {
            let facet = &mut facets[f];
            facet.alive = false;
            orphans.extend(facet.outside.drain(..).filter(|&p| p != eye));
            let v = facet.v;
            for k in 0..3 {
                edge_owner.remove(&(v[k], v[(k + 1) % 3]));
            }
        }

        let mut created = Vec::with_capacity(horizon.len());
        for (a, b) in horizon {
            let plane = Plane::through(&points[a], &points[b], &eye_p);
            created.push(add_facet(&mut facets, &mut edge_owner, [a, b, eye], plane));
        }
        assign_outside(points, &mut facets, &created, &mut orphans, eps);
        queue.extend(created);
    }

    let mut tris: Vec<[usize; 3]> = facets.iter().filter(|f| f.alive).map(|f| f.v).collect();
    tris.sort_unstable();
    Ok(ConvexHull {
        points: points.to_vec(),
        facets: tris,
        tolerance: eps,
    })
}

fn add_facet(
    facets: &mut Vec<Facet>,
    edge_owner: &mut HashMap<(usize, usize), usize>,
    v: [usize; 3],
    plane: Plane,
) -> usize {
    let id = facets.len();
    for k in 0..3 {
        edge_owner.insert((v[k], v[(k + 1) % 3]), id);
    }
    facets.push(Facet {
        v,
        plane,
        outside: Vec::new(),
        alive: true,
    });
    id
}

fn assign_outside(points: &[Point3], facets: &mut [Facet], candidates: &[usize], pending: &mut Vec<usize>, eps: f64) {
    for p in pending.drain(..) {
        if let Some(&f) = candidates.iter().find(|&&f| facets[f].plane.distance(&points[p]) > eps) {
            facets[f].outside.push(p);
        }
    }
}

fn initial_simplex(points: &[Point3], lo: &Point3, hi: &Point3, eps: f64) -> Result<[usize; 4], GeomError> {
    let extent = hi - lo;
    let axis = extent.imax();
    let first_by = |key: &dyn Fn(&Point3) -> f64| {
        (0..points.len())
            .max_by(|&a, &b| key(&points[a]).total_cmp(&key(&points[b])).then(b.cmp(&a)))
            .unwrap()
    };
    let i0 = first_by(&|p: &Point3| -p[axis]);
    let i1 = first_by(&|p: &Point3| p[axis]);
    let (a, b) = (points[i0], points[i1]);
    if (b - a).norm() <= eps {
        return Err(GeomError::Degenerate("all points coincide".into()));
    }
    let dir = (b - a).normalize();
    let line_dist = |p: &Point3| {
        let d = p - a;
        (d - dir * d.dot(&dir)).norm()
    };
    let i2 = first_by(&line_dist);
    if line_dist(&points[i2]) <= eps {
        return Err(GeomError::Degenerate(format!(
            "points are collinear along ({:.3}, {:.3}, {:.3})",
            dir.x, dir.y, dir.z
        )));
    }
    let plane = Plane::through(&a, &b, &points[i2]);
    let i3 = first_by(&|p: &Point3| plane.distance(p).abs());
    let off = plane.distance(&points[i3]).abs();
    if off <= eps {
        let n = plane.normal;
        return Err(GeomError::Degenerate(format!(
            "points are coplanar (normal ({:.3}, {:.3}, {:.3}), max off-plane distance {off:.3e} m)",
            n.x, n.y, n.z
        )));
    }
    Ok([i0, i1, i2, i3])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cube_corners() -> Vec<Point3> {
        let mut pts = Vec::new();
        for &x in &[0.0, 1.0] {
            for &y in &[0.0, 1.0] {
                for &z in &[0.0, 1.0] {
                    pts.push(Point3::new(x, y, z));
                }
            }
        }
        pts
    }

    #[test]
    fn tetrahedron_has_six_edges() {
        let pts = vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull.facets.len(), 4);
        assert_eq!(hull.edges().len(), 6);
        assert!((hull.volume() - 1.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn cube_with_interior_points() {
        let mut pts = cube_corners();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            pts.push(Point3::new(
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
                rng.random_range(0.1..0.9),
            ));
        }
        let edges = convex_hull_edges(&PointCloud::new(pts, "t")).unwrap();
        assert_eq!(edges.len(), 12);
        for (a, b) in &edges.edges {
            assert!(((b - a).norm() - 1.0).abs() < 1e-12);
            for p in [a, b] {
                assert!(p.coords.iter().all(|&c| c == 0.0 || c == 1.0));
            }
        }
    }

    #[test]
    fn random_cloud_inside_all_facets() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<Point3> = (0..200)
            .map(|_| {
                Point3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(0.0..5.0),
                )
            })
            .collect();
        let hull = convex_hull(&pts).unwrap();
        // Oracle: recompute every facet plane from its vertices and test
        // every input point against it.
        for f in &hull.facets {
            let (a, b, c) = (pts[f[0]], pts[f[1]], pts[f[2]]);
            let n = (b - a).cross(&(c - a)).normalize();
            for p in &pts {
                assert!(n.dot(&(p - a)) <= 1e-9);
            }
        }
        // Closed 2-manifold: every directed edge has its twin.
        let mut directed = std::collections::HashSet::new();
        for f in &hull.facets {
            for k in 0..3 {
                assert!(directed.insert((f[k], f[(k + 1) % 3])));
            }
        }
        for &(a, b) in &directed {
            assert!(directed.contains(&(b, a)));
        }
    }

    #[test]
    fn degenerate_inputs() {
        let flat: Vec<Point3> = (0..20).map(|i| Point3::new(i as f64, (i * i) as f64, 2.0)).collect();
        match convex_hull(&flat) {
            Err(GeomError::Degenerate(msg)) => assert!(msg.contains("coplanar")),
            other => panic!("expected degeneracy, got {other:?}"),
        }
        let line: Vec<Point3> = (0..20).map(|i| Point3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        match convex_hull(&line) {
            Err(GeomError::Degenerate(msg)) => assert!(msg.contains("collinear")),
            other => panic!("expected degeneracy, got {other:?}"),
        }
        assert!(convex_hull(&cube_corners()[..3]).is_err());
    }

    proptest! {
        #[test]
        fn volume_permutation_invariant(
            raw in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 6..80),
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let pts: Vec<Point3> = raw.into_iter().map(|(x, y, z)| Point3::new(x, y, z)).collect();
            let Ok(h1) = convex_hull(&pts) else { return Ok(()); };
            let mut shuffled = pts.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let h2 = convex_hull(&shuffled).unwrap();
            prop_assert!((h1.volume() - h2.volume()).abs() < 1e-9 * h1.volume().max(1.0));
            for p in &pts {
                prop_assert!(h1.facet_distances(p).all(|d| d <= 1e-9));
            }
        }
    }
}
