//! Open-tour sequencing with a fixed first stop.
//!
//! Construction is nearest neighbour, seeded from several second stops;
//! improvement alternates 2-opt segment reversals and Or-opt segment moves
//! (lengths 1–3, both orientations) until neither finds an improving move. Every scan is in a fixed order
//! and takes the first improvement, so results depend only on the input.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::OccupancyGrid;
use super::path::{path_length, plan_path};
use super::PlanError;
use crate::geom::Pose;

const IMPROVE_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMode {
    #[default]
    Euclidean,
    /// Length of the collision-free path through the grid.
    PathLength,
}

/// Symmetric distance matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let v = f(i, j);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self { n, d }
    }

    pub fn euclidean(poses: &[Pose]) -> Self {
        Self::from_fn(poses.len(), |i, j| (poses[j].point() - poses[i].point()).norm())
    }

    /// Path lengths through the grid; pairs are planned in parallel.
    pub fn path_lengths(poses: &[Pose], grid: &OccupancyGrid) -> Result<Self, PlanError> {
        let n = poses.len();
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).collect();
        let lengths: Vec<Result<f64, PlanError>> = pairs
            .par_iter()
            .map(|&(i, j)| {
                plan_path(grid, &poses[i].point(), &poses[j].point())
                    .map(|p| path_length(&p))
                    .map_err(|e| match e {
                        PlanError::Unreachable { .. } => PlanError::UnreachablePair { from: i, to: j },
                        other => other,
                    })
            })
            .collect();
        let mut d = vec![0.0; n * n];
        for (&(i, j), len) in pairs.iter().zip(lengths) {
            let len = len?;
            d[i * n + j] = len;
            d[j * n + i] = len;
        }
        Ok(Self { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    /// Length of the open tour visiting `order`.
    pub fn tour_length(&self, order: &[usize]) -> f64 {
        order.windows(2).map(|w| self.get(w[0], w[1])).sum()
    }
}

/// Open tour from node 0 by repeatedly moving to the closest unvisited node
/// (ties to the lowest index).
pub fn nearest_neighbor_tour(dist: &DistanceMatrix) -> Vec<usize> {
    nearest_neighbor_from(dist, &[0])
}

/// Nearest-neighbour completion of a fixed tour prefix.
fn nearest_neighbor_from(dist: &DistanceMatrix, prefix: &[usize]) -> Vec<usize> {
    let n = dist.len();
    if n == 0 {
        return Vec::new();
    }
    let mut visited = vec![false; n];
    let mut tour = Vec::with_capacity(n);
    for &p in prefix {
        visited[p] = true;
        tour.push(p);
    }
    let mut cur = *tour.last().expect("non-empty prefix");
    for _ in prefix.len()..n {
        let next = (0..n)
            .filter(|&j| !visited[j])
            .min_by(|&a, &b| dist.get(cur, a).total_cmp(&dist.get(cur, b)).then(a.cmp(&b)))
            .expect("unvisited node left");
        visited[next] = true;
        tour.push(next);
        cur = next;
    }
    tour
}

fn two_opt_pass(dist: &DistanceMatrix, tour: &mut [usize]) -> bool {
    let n = tour.len();
    for i in 1..n.saturating_sub(1) {
        for j in (i + 1)..n {
            let a = tour[i - 1];
            let b = tour[i];
            let c = tour[j];
            let before = dist.get(a, b) + if j + 1 < n { dist.get(c, tour[j + 1]) } else { 0.0 };
            let after = dist.get(a, c) + if j + 1 < n { dist.get(b, tour[j + 1]) } else { 0.0 };
            if after < before - IMPROVE_EPS {
                tour[i..=j].reverse();
                return true;
            }
        }
    }
    false
}

fn or_opt_pass(dist: &DistanceMatrix, tour: &mut Vec<usize>) -> bool {
    let n = tour.len();
    let edge = |t: &[usize], i: usize, j: usize| dist.get(t[i], t[j]);
    for len in 1..=3usize {
        for i in 1..n {
            let end = i + len - 1;
            if end >= n {
                break;
            }
            // Gain from cutting out tour[i..=end].
            let prev = tour[i - 1];
            let removed = edge(tour, i - 1, i) + if end + 1 < n { edge(tour, end, end + 1) } else { 0.0 };
            let bridged = if end + 1 < n {
                dist.get(prev, tour[end + 1])
            } else {
                0.0
            };
            let gain = removed - bridged;
            if gain <= IMPROVE_EPS {
                continue;
            }
            let seg: Vec<usize> = tour[i..=end].to_vec();
            let rest: Vec<usize> = tour[..i].iter().chain(&tour[end + 1..]).copied().collect();
            // Insert between rest[k] and rest[k + 1] (or at the open end).
            for k in 0..rest.len() {
                let u = rest[k];
                let v = rest.get(k + 1).copied();
                for reversed in [false, true] {
                    let (first, last) = if reversed {
                        (seg[seg.len() - 1], seg[0])
                    } else {
                        (seg[0], seg[seg.len() - 1])
                    };
                    let added =
                        dist.get(u, first) + v.map_or(0.0, |v| dist.get(last, v)) - v.map_or(0.0, |v| dist.get(u, v));
                    if added < gain - IMPROVE_EPS {
                        let mut next = Vec::with_capacity(n);
                        next.extend_from_slice(&rest[..=k]);
                        if reversed {
                            next.extend(seg.iter().rev());
                        } else {
                            next.extend(&seg);
                        }
                        next.extend_from_slice(&rest[k + 1..]);
                        *tour = next;
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Improves an open tour in place; node `tour[0]` stays first.
pub fn improve_tour(dist: &DistanceMatrix, tour: &mut Vec<usize>) {
    loop {
        if two_opt_pass(dist, tour) {
            continue;
        }
        if or_opt_pass(dist, tour) {
            continue;
        }
        break;
    }
}

/// Number of alternative second stops tried as construction seeds.
const MAX_STARTS: usize = 32;

/// Heuristic open tour over all nodes, starting at node 0.
///
/// The plain nearest-neighbour tour is improved first; further seeds force
/// each of the closest second stops and complete greedily. The best
/// improved tour wins, earlier seeds on ties.
pub fn solve_tsp_matrix(dist: &DistanceMatrix) -> Vec<usize> {
    let mut best = nearest_neighbor_tour(dist);
    improve_tour(dist, &mut best);
    let mut best_len = dist.tour_length(&best);

    let mut seconds: Vec<usize> = (1..dist.len()).collect();
    seconds.sort_by(|&a, &b| dist.get(0, a).total_cmp(&dist.get(0, b)).then(a.cmp(&b)));
    for &second in seconds.iter().skip(1).take(MAX_STARTS) {
        let mut tour = nearest_neighbor_from(dist, &[0, second]);
        improve_tour(dist, &mut tour);
        let len = dist.tour_length(&tour);
        if len < best_len - IMPROVE_EPS {
            best = tour;
            best_len = len;
        }
    }
    best
}

/// Sequences `poses` starting from `poses[0]` (the takeoff pose).
pub fn solve_tsp(poses: &[Pose], mode: DistanceMode, grid: Option<&OccupancyGrid>) -> Result<Vec<usize>, PlanError> {
    if poses.is_empty() {
        return Err(PlanError::Parameter("no poses to sequence".into()));
    }
    let dist = match (mode, grid) {
        (DistanceMode::Euclidean, _) => DistanceMatrix::euclidean(poses),
        (DistanceMode::PathLength, Some(g)) => DistanceMatrix::path_lengths(poses, g)?,
        (DistanceMode::PathLength, None) => {
            return Err(PlanError::Parameter(
                "path_length distances need an occupancy grid".into(),
            ))
        }
    };
    Ok(solve_tsp_matrix(&dist))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Point3;
    use rand::{Rng, SeedableRng};

    fn poses(pts: &[[f64; 3]]) -> Vec<Pose> {
        pts.iter().map(|p| Pose::at(Point3::from(*p))).collect()
    }

    pub(crate) fn brute_force(dist: &DistanceMatrix) -> f64 {
        fn rec(dist: &DistanceMatrix, cur: usize, left: &mut Vec<usize>, acc: f64, best: &mut f64) {
            if acc >= *best {
                return;
            }
            if left.is_empty() {
                *best = acc;
                return;
            }
            for k in 0..left.len() {
                let nxt = left.swap_remove(k);
                rec(dist, nxt, left, acc + dist.get(cur, nxt), best);
                left.push(nxt);
                let last = left.len() - 1;
                left.swap(k, last);
            }
        }
        let mut left: Vec<usize> = (1..dist.len()).collect();
        let mut best = f64::INFINITY;
        rec(dist, 0, &mut left, 0.0, &mut best);
        if dist.len() == 1 {
            0.0
        } else {
            best
        }
    }

    #[test]
    fn square_perimeter() {
        let p = poses(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 1.0, 0.0]]);
        let t = solve_tsp(&p, DistanceMode::Euclidean, None).unwrap();
        assert_eq!(t[0], 0);
        assert!((DistanceMatrix::euclidean(&p).tour_length(&t) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn singleton() {
        let p = poses(&[[1.0, 2.0, 3.0]]);
        assert_eq!(solve_tsp(&p, DistanceMode::Euclidean, None).unwrap(), vec![0]);
        assert!(solve_tsp(&[], DistanceMode::Euclidean, None).is_err());
    }

    #[test]
    fn matches_brute_force_n8() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let mut optimal = 0;
        for _ in 0..30 {
            let pts: Vec<[f64; 3]> = (0..8)
                .map(|_| {
                    [
                        rng.random_range(0.0..20.0),
                        rng.random_range(0.0..20.0),
                        rng.random_range(0.0..5.0),
                    ]
                })
                .collect();
            let p = poses(&pts);
            let d = DistanceMatrix::euclidean(&p);
            let t = solve_tsp(&p, DistanceMode::Euclidean, None).unwrap();
            let mut sorted = t.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..8).collect::<Vec<_>>());
            let len = d.tour_length(&t);
            let opt = brute_force(&d);
            assert!(len <= opt * 1.05 + 1e-9);
            optimal += usize::from((len - opt).abs() < 1e-9);
            assert!(len <= d.tour_length(&nearest_neighbor_tour(&d)) + 1e-12);
        }
        assert!(optimal >= 28, "{optimal}/30 optimal");
    }

    #[test]
    fn path_length_mode_requires_grid() {
        let p = poses(&[[0.0; 3], [1.0, 0.0, 0.0]]);
        assert!(matches!(
            solve_tsp(&p, DistanceMode::PathLength, None),
            Err(PlanError::Parameter(_))
        ));
    }
}
