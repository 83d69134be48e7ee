//! Leader–follower lighting formations and multi-robot de-confliction.
//!
//! A follower carries a light. Relative to the object being documented
//! it keeps a fixed distance and sits at a fixed angle off the leader's
//! line of sight, on the chosen side. Separate robots must keep a
//! minimum distance and must never hover above one another (rotor
//! downwash). Conflicts are resolved by inserting hover samples into the
//! lower-priority trajectory, which preserves its already validated
//! geometry.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point3, Pose, Vector3};
use crate::planner::{path_length, plan_path, MissionPlan, OccupancyGrid};
use crate::trajectory::{DynamicConstraints, Trajectory, TrajectorySample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormationError {
    #[error("invalid formation parameter: {0}")]
    Parameter(String),
    #[error("separation cannot be restored; earliest violation at t = {t:.3} s between robots {a} and {b}")]
    Unresolvable { t: f64, a: usize, b: usize },
    #[error("no collision-free follower path from {from:?} to {to:?}")]
    NoPath { from: [f64; 3], to: [f64; 3] },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightSide {
    #[default]
    Left,
    Right,
    Above,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LightingSpec {
    /// Angle between the camera's and the light's lines to the target (rad).
    pub light_angle: f64,
    /// Distance of the light from the target (m).
    pub light_distance: f64,
    pub side: LightSide,
}

impl Default for LightingSpec {
    /// Raking light at 45° from the optical axis, 3 m from the target.
    fn default() -> Self {
        Self {
            light_angle: std::f64::consts::FRAC_PI_4,
            light_distance: 3.0,
            side: LightSide::Left,
        }
    }
}

impl LightingSpec {
    fn validate(&self) -> Result<(), FormationError> {
        if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&self.light_angle) {
            return Err(FormationError::Parameter(format!(
                "light_angle {} outside [0, π/2]",
                self.light_angle
            )));
        }
        if !(self.light_distance > 0.0 && self.light_distance.is_finite()) {
            return Err(FormationError::Parameter("light_distance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeparationSpec {
    pub d_min: f64,
    pub downwash_radius: f64,
    /// Longest hover inserted in one go, in samples.
    pub max_hover: usize,
}

impl Default for SeparationSpec {
    fn default() -> Self {
        Self {
            d_min: 2.0,
            downwash_radius: 1.0,
            max_hover: 600,
        }
    }
}

/// Follower trajectory plus the samples where the geometry was undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FollowerOutcome {
    pub trajectory: Trajectory,
    /// Sample indices where no lighting position exists (the leader sits on
    /// the target, or the side direction is undefined). The follower holds
    /// its previous position there.
    pub infeasible: Vec<usize>,
    /// Samples where the lighting geometry is enforced exactly.
    pub formation_required: Vec<bool>,
    /// The leader, with the waits the follower needed to reach its stops.
    /// All indices above refer to this trajectory.
    pub leader: Trajectory,
    /// `(sample, count)`: hovers inserted before leader sample `sample`
    /// (original indexing).
    pub leader_waits: Vec<(usize, usize)>,
}

/// Unit vector perpendicular to `u` pointing to the requested side, as
/// seen by a camera at the leader looking along `-u`.
fn side_vector(u: &Vector3, side: LightSide) -> Option<Vector3> {
    let up = Vector3::z();
    let w = match side {
        LightSide::Left => up.cross(&(-u)),
        LightSide::Right => -up.cross(&(-u)),
        LightSide::Above => up - u * up.dot(u),
    };
    let n = w.norm();
    (n > 1e-9).then(|| w / n)
}

/// Lighting position for one leader position, if defined.
pub fn light_position(leader: &Point3, ooi: &Point3, spec: &LightingSpec) -> Option<Point3> {
    let d = leader - ooi;
    let dist = d.norm();
    if dist < 1e-9 {
        return None;
    }
    let u = d / dist;
    let w = side_vector(&u, spec.side)?;
    let (s, c) = spec.light_angle.sin_cos();
    Some(ooi + (u * c + w * s) * spec.light_distance)
}

/// Follower reference lighting a single fixed target.
pub fn follower_reference(
    leader: &Trajectory,
    ooi: &Point3,
    spec: &LightingSpec,
) -> Result<FollowerOutcome, FormationError> {
    let oois = vec![*ooi; leader.len()];
    let required = vec![true; leader.len()];
    follower_reference_with(leader, &oois, &required, spec)
}

/// Follower reference with a per-sample target.
///
/// Where `required` is set the follower sits exactly at the lighting
/// position. In between, it blends linearly (by sample count) from the
/// last required position to the next, so switching targets never makes
/// it jump.
pub fn follower_reference_with(
    leader: &Trajectory,
    oois: &[Point3],
    required: &[bool],
    spec: &LightingSpec,
) -> Result<FollowerOutcome, FormationError> {
    spec.validate()?;
    let n = leader.len();
    if n == 0 {
        return Err(FormationError::Parameter("empty leader trajectory".into()));
    }
    if oois.len() != n || required.len() != n {
        return Err(FormationError::Parameter(
            "one target and flag per leader sample required".into(),
        ));
    }
    let exact: Vec<Option<Point3>> = (0..n)
        .map(|k| light_position(&leader.samples[k].position(), &oois[k], spec))
        .collect();
    let infeasible: Vec<usize> = (0..n).filter(|&k| exact[k].is_none()).collect();

    let anchors: Vec<usize> = (0..n).filter(|&k| required[k] && exact[k].is_some()).collect();
    let mut pos: Vec<Option<Point3>> = vec![None; n];
    if anchors.is_empty() {
        pos = exact.clone();
    } else {
        for k in 0..n {
            pos[k] = if required[k] {
                exact[k]
            } else {
                let next = anchors.partition_point(|&a| a < k);
                match (next.checked_sub(1).map(|i| anchors[i]), anchors.get(next).copied()) {
                    (Some(a), Some(b)) => {
                        let f = (k - a) as f64 / (b - a) as f64;
                        let (pa, pb) = (exact[a].expect("anchor"), exact[b].expect("anchor"));
                        Some(pa + (pb - pa) * f)
                    }
                    (Some(a), None) => exact[a],
                    (None, Some(b)) => exact[b],
                    (None, None) => unreachable!("anchors is non-empty"),
                }
            };
        }
    }
    // Hold through undefined samples (forward, then backward for a prefix).
    for k in 1..n {
        if pos[k].is_none() {
            pos[k] = pos[k - 1];
        }
    }
    for k in (0..n.saturating_sub(1)).rev() {
        if pos[k].is_none() {
            pos[k] = pos[k + 1];
        }
    }
    let pos: Vec<Point3> = pos
        .into_iter()
        .map(|p| p.ok_or_else(|| FormationError::Parameter("no sample admits a lighting position".into())))
        .collect::<Result<_, _>>()?;

    let dt = leader.dt;
    let samples = (0..n)
        .map(|k| {
            let v = if k + 1 < n && k > 0 {
                (pos[k + 1] - pos[k]) / dt
            } else {
                Vector3::zeros()
            };
            TrajectorySample {
                t: leader.samples[k].t,
                pose: Pose::looking_at(pos[k], &oois[k]),
                velocity: [v.x, v.y, v.z],
                acquire: leader.samples[k].acquire,
            }
        })
        .collect();
    Ok(FollowerOutcome {
        trajectory: Trajectory { dt, samples },
        infeasible,
        formation_required: required.to_vec(),
        leader: leader.clone(),
        leader_waits: Vec::new(),
    })
}

/// Collision-free follower trajectory for one flight of `plan`.
///
/// The follower holds the exact lighting position through every
/// acquisition window whose lighting position is free in `grid`, parks
/// beside the leader's first and last sample, and moves between these
/// stops along grid paths. Each move starts right after the previous stop
/// with a rest-to-rest (smoothstep) timing whose peak speed and
/// acceleration respect `limits`; the follower then waits at the next
/// stop. Where the leader's schedule leaves too little time, the leader
/// hovers where it is before the stop (see [`FollowerOutcome::leader`]). Windows whose lighting position
/// is undefined or occupied are listed as infeasible and not lit.
pub fn plan_follower(
    leader: &Trajectory,
    plan: &MissionPlan,
    spec: &LightingSpec,
    separation: &SeparationSpec,
    limits: &DynamicConstraints,
    grid: &OccupancyGrid,
) -> Result<FollowerOutcome, FormationError> {
    spec.validate()?;
    let (oois, mut required) = targets_along(leader, plan)?;
    let n = leader.len();

    // Stops: (first sample, last sample, position).
    let mut stops: Vec<(usize, usize, Point3)> = Vec::new();
    let mut infeasible = Vec::new();
    let mut k = 0;
    while k < n {
        if !required[k] {
            k += 1;
            continue;
        }
        let start = k;
        while k < n && required[k] {
            k += 1;
        }
        let end = k - 1;
        let exact =
            light_position(&leader.samples[start].position(), &oois[start], spec).filter(|p| !grid.is_occupied_at(p));
        match exact {
            Some(p) => stops.push((start, end, p)),
            None => {
                infeasible.extend(start..=end);
                required[start..=end].fill(false);
            }
        }
    }
    let park = |s: usize| parking_spot(leader, s, separation, grid);
    if stops.first().is_none_or(|f| f.0 > 0) {
        stops.insert(0, (0, 0, park(0)?));
    }
    if stops.last().is_none_or(|l| l.1 + 1 < n) {
        stops.push((n - 1, n - 1, park(n - 1)?));
    }

    // Legs between stops; the leader waits before a stop the follower
    // cannot reach in time.
    let dt = leader.dt;
    let mut legs = Vec::with_capacity(stops.len().saturating_sub(1));
    let mut waits = Vec::new();
    for w in stops.windows(2) {
        let ((_, b, p), (c, _, q)) = (w[0], w[1]);
        let path = plan_path(grid, &p, &q).map_err(|_| FormationError::NoPath {
            from: p.into(),
            to: q.into(),
        })?;
        let length = path_length(&path);
        // Smoothstep peaks at 1.5 L / D in speed and 6 L / D² in acceleration.
        let duration = (1.5 * length / limits.v_max).max((6.0 * length / limits.a_max).sqrt());
        let steps = ((duration / dt).ceil() as usize).max(1);
        if steps > c - b {
            waits.push((c, steps - (c - b)));
        }
        legs.push((path, length, steps));
    }
    let shift = |k: usize| k + waits.iter().filter(|&&(c, _)| c <= k).map(|&(_, e)| e).sum::<usize>();
    let leader = with_waits(leader, &waits);
    let n = leader.len();
    let (oois, _) = targets_along(&leader, plan)?;
    let mut shifted = vec![false; n];
    for k in (0..required.len()).filter(|&k| required[k]) {
        shifted[shift(k)] = true;
    }
    let stops: Vec<(usize, usize, Point3)> = stops.iter().map(|&(a, b, p)| (shift(a), shift(b), p)).collect();

    let mut pos = vec![Point3::origin(); n];
    for (i, &(a, b, p)) in stops.iter().enumerate() {
        pos[a..=b].fill(p);
        let (Some(&(c, _, _)), Some((path, length, steps))) = (stops.get(i + 1), legs.get(i)) else {
            break;
        };
        for (j, slot) in pos.iter_mut().enumerate().take(c).skip(b + 1) {
            let tau = ((j - b) as f64 / *steps as f64).min(1.0);
            *slot = point_at(path, length * tau * tau * (3.0 - 2.0 * tau));
        }
    }

    let samples = (0..n)
        .map(|k| {
            let v = if k + 1 < n && k > 0 && !shifted[k] {
                (pos[k + 1] - pos[k]) / dt
            } else {
                Vector3::zeros()
            };
            TrajectorySample {
                t: leader.samples[k].t,
                pose: Pose::looking_at(pos[k], &oois[k]),
                velocity: [v.x, v.y, v.z],
                acquire: leader.samples[k].acquire,
            }
        })
        .collect();
    Ok(FollowerOutcome {
        trajectory: Trajectory { dt, samples },
        infeasible: infeasible.into_iter().map(shift).collect(),
        formation_required: shifted,
        leader_waits: waits,
        leader,
    })
}

/// Inserts `extra` stationary copies of sample `at` before it, for every
/// `(at, extra)` (indices of the original trajectory).
fn with_waits(traj: &Trajectory, waits: &[(usize, usize)]) -> Trajectory {
    let mut samples = Vec::with_capacity(traj.len() + waits.iter().map(|w| w.1).sum::<usize>());
    for (k, s) in traj.samples.iter().enumerate() {
        for &(_, extra) in waits.iter().filter(|w| w.0 == k) {
            let hold = TrajectorySample {
                velocity: [0.0; 3],
                acquire: false,
                ..*s
            };
            samples.extend(std::iter::repeat_n(hold, extra));
        }
        samples.push(*s);
    }
    for (k, s) in samples.iter_mut().enumerate() {
        s.t = k as f64 * traj.dt;
    }
    Trajectory { dt: traj.dt, samples }
}

/// Extra free space wanted around a parking spot (m).
const PARKING_MARGIN: f64 = 0.5;

/// A free spot at the height of leader sample `at`, at least `d_min + 0.5`
/// m away from it, reachable in a straight line. Among the candidates the
/// one farthest (horizontally) from the whole leader trajectory wins, so
/// the leader does not pass over the parked follower.
fn parking_spot(
    leader: &Trajectory,
    at: usize,
    separation: &SeparationSpec,
    grid: &OccupancyGrid,
) -> Result<Point3, FormationError> {
    let origin = leader.samples[at].position();
    let r = separation.d_min.max(separation.downwash_radius) + 0.5;
    let mut best: Option<(bool, f64, Point3)> = None;
    for ring in 0..3 {
        for i in 0..16 {
            let a = i as f64 * std::f64::consts::TAU / 16.0;
            let radius = r + 1.5 * ring as f64;
            let p = origin + Vector3::new(radius * a.cos(), radius * a.sin(), 0.0);
            if grid.is_occupied_at(&p) || !grid.segment_is_free(&origin, &p) {
                continue;
            }
            // Spots with extra room beyond the inflation are preferred.
            let roomy = (0..3).all(|ax| {
                [-PARKING_MARGIN, PARKING_MARGIN].iter().all(|&m| {
                    let mut q = p;
                    q[ax] += m;
                    !grid.is_occupied_at(&q)
                })
            });
            let clearance = leader
                .samples
                .iter()
                .map(|s| (s.pose.position[0] - p.x).hypot(s.pose.position[1] - p.y))
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(r, c, _)| (roomy, clearance) > (r, c)) {
                best = Some((roomy, clearance, p));
            }
        }
    }
    best.map(|(_, _, p)| p)
        .ok_or_else(|| FormationError::Parameter(format!("no free parking spot near {origin}")))
}

/// Point at arc length `s` along a polyline.
fn point_at(path: &[Point3], s: f64) -> Point3 {
    let mut left = s;
    for w in path.windows(2) {
        let d = (w[1] - w[0]).norm();
        if left <= d && d > 0.0 {
            return w[0] + (w[1] - w[0]) * (left / d);
        }
        left -= d;
    }
    *path.last().expect("non-empty path")
}

/// Target per leader sample: the target of the acquisition window in
/// progress, or of the next one; after the last window, of the last one.
/// Windows in the trajectory are matched in order to the plan's acquiring
/// triplets. Also returns the window mask.
pub fn targets_along(leader: &Trajectory, plan: &MissionPlan) -> Result<(Vec<Point3>, Vec<bool>), FormationError> {
    let targets: Vec<Point3> = plan
        .triplets
        .iter()
        .filter(|t| t.acquire)
        .map(|t| Point3::from(t.p_ooi.expect("acquiring triplet has a target")))
        .collect();
    if targets.is_empty() {
        return Err(FormationError::Parameter("plan has no acquisitions to light".into()));
    }
    let n = leader.len();
    let mut window_of = vec![usize::MAX; n];
    let mut w = 0usize;
    for k in 0..n {
        if leader.samples[k].acquire {
            if k > 0 && !leader.samples[k - 1].acquire {
                w += 1;
            }
            if k == 0 {
                w = 1;
            }
            window_of[k] = w - 1;
        }
    }
    if w != targets.len() {
        return Err(FormationError::Parameter(format!(
            "trajectory has {w} acquisition windows, plan has {}",
            targets.len()
        )));
    }
    let mut out = vec![targets[targets.len() - 1]; n];
    let mut next = targets.len() - 1;
    for k in (0..n).rev() {
        if window_of[k] != usize::MAX {
            next = window_of[k];
        }
        out[k] = targets[next];
    }
    let mask = leader.samples.iter().map(|s| s.acquire).collect();
    Ok((out, mask))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Proximity,
    /// One robot above another within the downwash radius.
    Downwash,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: f64,
    pub sample: usize,
    pub a: usize,
    pub b: usize,
    pub kind: ViolationKind,
    pub distance: f64,
}

fn sample_at(traj: &Trajectory, k: usize) -> Point3 {
    traj.samples[k.min(traj.len() - 1)].position()
}

fn pair_violation(pa: &Point3, pb: &Point3, spec: &SeparationSpec) -> Option<(ViolationKind, f64)> {
    let d = pb - pa;
    let dist = d.norm();
    if dist < spec.d_min {
        return Some((ViolationKind::Proximity, dist));
    }
    let horizontal = d.x.hypot(d.y);
    if horizontal < spec.downwash_radius && d.z.abs() > 1e-9 {
        return Some((ViolationKind::Downwash, horizontal));
    }
    None
}

/// Every sample pair violating separation or downwash exclusion.
///
/// Trajectories share the sample grid; a trajectory that ends early holds
/// its last sample.
pub fn separation_violations(trajectories: &[Trajectory], spec: &SeparationSpec) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = trajectories.iter().map(Trajectory::len).max().unwrap_or(0);
    let dt = trajectories.first().map_or(0.0, |t| t.dt);
    for k in 0..n {
        for a in 0..trajectories.len() {
            for b in (a + 1)..trajectories.len() {
                if trajectories[a].is_empty() || trajectories[b].is_empty() {
                    continue;
                }
                let (pa, pb) = (sample_at(&trajectories[a], k), sample_at(&trajectories[b], k));
                if let Some((kind, distance)) = pair_violation(&pa, &pb, spec) {
                    out.push(Violation {
                        t: k as f64 * dt,
                        sample: k,
                        a,
                        b,
                        kind,
                        distance,
                    });
                }
            }
        }
    }
    out
}

/// Earliest sample at which robot `j` conflicts with a higher-priority
/// robot (lower index).
fn first_conflict(trajectories: &[Trajectory], j: usize, spec: &SeparationSpec) -> Option<(usize, usize)> {
    let n = trajectories.iter().map(Trajectory::len).max().unwrap_or(0);
    for k in 0..n {
        let pj = sample_at(&trajectories[j], k);
        for (i, ti) in trajectories.iter().enumerate().take(j) {
            if !ti.is_empty() && pair_violation(&sample_at(ti, k), &pj, spec).is_some() {
                return Some((k, i));
            }
        }
    }
    None
}

fn with_hover(traj: &Trajectory, at: usize, count: usize) -> Trajectory {
    let mut samples = Vec::with_capacity(traj.len() + count);
    samples.extend_from_slice(&traj.samples[..=at]);
    let mut hold = traj.samples[at];
    hold.velocity = [0.0; 3];
    hold.acquire = false;
    samples[at].velocity = [0.0; 3];
    samples.extend(std::iter::repeat_n(hold, count));
    samples.extend_from_slice(&traj.samples[at + 1..]);
    for (k, s) in samples.iter_mut().enumerate() {
        s.t = k as f64 * traj.dt;
    }
    Trajectory { dt: traj.dt, samples }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationOutcome {
    pub trajectories: Vec<Trajectory>,
    /// Violations found before adjustment.
    pub violations: Vec<Violation>,
    /// `(robot, sample, hover samples)` for every insertion.
    pub hovers: Vec<(usize, usize, usize)>,
}

/// Audits and de-conflicts trajectories; index 0 has the highest priority
/// and is never changed.
///
/// For each lower-priority robot in turn, the earliest conflict is removed
/// by hovering the robot before the conflict starts: it waits at an
/// earlier sample (trying progressively earlier ones) for the shortest
/// time that pushes its first conflict later. This repeats until the
/// robot is conflict-free or no hover helps. A conflict with a robot that
/// has already reached its final sample cannot be waited out and is
/// reported as unresolvable at once.
pub fn enforce_separation(
    trajectories: &[Trajectory],
    spec: &SeparationSpec,
) -> Result<SeparationOutcome, FormationError> {
    enforce_with(trajectories, spec, |_, traj, at, count| {
        Some(with_hover(traj, at, count))
    })
}

/// [`enforce_separation`] that keeps marked samples on their timestamps.
///
/// `anchored[j][k]` marks samples of robot `j` that must not move in time
/// (lit acquisition windows, for instance). Every hover is paid back by
/// dropping as many stationary samples between the hover and the next
/// anchored sample, so trajectories keep their length; a hover that cannot
/// be paid back is not used. Robots without an entry are unconstrained.
pub fn enforce_separation_anchored(
    trajectories: &[Trajectory],
    spec: &SeparationSpec,
    anchored: &[Vec<bool>],
) -> Result<SeparationOutcome, FormationError> {
    enforce_with(trajectories, spec, |j, traj, at, count| match anchored.get(j) {
        Some(marks) => with_absorbed_hover(traj, at, count, marks),
        None => Some(with_hover(traj, at, count)),
    })
}

/// Hover of `count` samples at `at`, followed by the removal of `count`
/// stationary samples before the next anchored sample, latest first.
fn with_absorbed_hover(traj: &Trajectory, at: usize, count: usize, anchored: &[bool]) -> Option<Trajectory> {
    let n = traj.len();
    let next = (at + 1..n)
        .find(|&k| anchored.get(k).copied().unwrap_or(false))
        .unwrap_or(n);
    let mut samples = with_hover(traj, at, count).samples;
    // Original samples at+1..next sit at at+1+count..next+count now.
    let mut left = count;
    let mut k = next + count;
    while left > 0 && k > at + count + 1 {
        k -= 1;
        if k < samples.len() && samples[k].position() == samples[k - 1].position() {
            samples.remove(k);
            left -= 1;
        }
    }
    if left > 0 {
        return None;
    }
    let dt = traj.dt;
    for k in 0..samples.len() {
        samples[k].t = k as f64 * dt;
        let v = if k > 0 && k + 1 < samples.len() {
            (samples[k + 1].position() - samples[k].position()) / dt
        } else {
            Vector3::zeros()
        };
        samples[k].velocity = [v.x, v.y, v.z];
    }
    Some(Trajectory { dt, samples })
}

fn enforce_with(
    trajectories: &[Trajectory],
    spec: &SeparationSpec,
    adjust: impl Fn(usize, &Trajectory, usize, usize) -> Option<Trajectory>,
) -> Result<SeparationOutcome, FormationError> {
    if !(spec.d_min > 0.0) || spec.downwash_radius < 0.0 {
        return Err(FormationError::Parameter(format!("bad separation spec {spec:?}")));
    }
    if let Some(first) = trajectories.first() {
        if trajectories.iter().any(|t| (t.dt - first.dt).abs() > 1e-12) {
            return Err(FormationError::Parameter(
                "trajectories must share one sample period".into(),
            ));
        }
    }
    let violations = separation_violations(trajectories, spec);
    let mut trajs = trajectories.to_vec();
    let mut hovers = Vec::new();
    for j in 1..trajs.len() {
        if trajs[j].is_empty() {
            continue;
        }
        while let Some((k, i)) = first_conflict(&trajs, j, spec) {
            // Robot i already holds its final sample. Waiting only delays
            // robot j's arrival at the conflicting point, where i will
            // still be, so no hover can help.
            if k + 1 >= trajs[i].len() {
                return Err(FormationError::Unresolvable {
                    t: k as f64 * trajs[j].dt,
                    a: i,
                    b: j,
                });
            }
            let mut fixed = false;
            // Candidate wait points: just before the conflict, then further back.
            let mut back = 1usize;
            'search: while back <= k.max(1) {
                let at = k.saturating_sub(back);
                if at + 1 >= trajs[j].len() {
                    back *= 2;
                    continue;
                }
                for count in 1..=spec.max_hover {
                    let Some(adjusted) = adjust(j, &trajs[j], at, count) else {
                        continue;
                    };
                    let mut trial = trajs.clone();
                    trial[j] = adjusted;
                    match first_conflict(&trial, j, spec) {
                        Some((k2, _)) if k2 <= k => {}
                        _ => {
                            trajs = trial;
                            hovers.push((j, at, count));
                            fixed = true;
                            break 'search;
                        }
                    }
                }
                if at == 0 {
                    break;
                }
                back *= 2;
            }
            if !fixed {
                return Err(FormationError::Unresolvable {
                    t: k as f64 * trajs[j].dt,
                    a: i,
                    b: j,
                });
            }
        }
    }
    Ok(SeparationOutcome {
        trajectories: trajs,
        violations,
        hovers,
    })
}

/// A light pose for reflectance imaging and its illumination direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightPose {
    pub pose: Pose,
    /// Unit vector from the target toward the light.
    pub direction: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RtiDome {
    pub poses: Vec<LightPose>,
    /// Poses removed because they fell into occupied space.
    pub filtered: usize,
    pub warning: Option<String>,
}

/// Quasi-uniform light poses on the hemisphere facing the camera.
///
/// Uses a Fibonacci lattice around the target-to-camera axis with polar
/// cosines `1 − (i + ½)/n`, all strictly in front of the target plane.
/// With a grid, poses in inflated voxels are dropped.
pub fn rti_light_poses(
    ooi: &Point3,
    camera: &Pose,
    count: usize,
    dome_radius: f64,
    grid: Option<&OccupancyGrid>,
) -> Result<RtiDome, FormationError> {
    if count == 0 {
        return Err(FormationError::Parameter("at least one light pose required".into()));
    }
    if !(dome_radius > 0.0 && dome_radius.is_finite()) {
        return Err(FormationError::Parameter("dome_radius must be positive".into()));
    }
    let axis = camera.point() - ooi;
    if axis.norm() < 1e-9 {
        return Err(FormationError::Parameter("camera coincides with the target".into()));
    }
    let c = axis.normalize();
    let helper = if c.z.abs() < 0.9 { Vector3::z() } else { Vector3::x() };
    let e1 = helper.cross(&c).normalize();
    let e2 = c.cross(&e1);
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut poses = Vec::with_capacity(count);
    let mut filtered = 0;
    for i in 0..count {
        let z = 1.0 - (i as f64 + 0.5) / count as f64;
        let r = (1.0 - z * z).sqrt();
        let phi = golden * i as f64;
        let dir = c * z + e1 * (r * phi.cos()) + e2 * (r * phi.sin());
        let p = ooi + dir * dome_radius;
        if grid.is_some_and(|g| g.is_occupied_at(&p)) {
            filtered += 1;
            continue;
        }
        let unit = (p - ooi).normalize();
        poses.push(LightPose {
            pose: Pose::looking_at(p, ooi),
            direction: [unit.x, unit.y, unit.z],
        });
    }
    let warning =
        (grid.is_some() && poses.len() < 3).then(|| format!("only {} light poses remain after filtering", poses.len()));
    Ok(RtiDome {
        poses,
        filtered,
        warning,
    })
}

/// One illumination direction per acquisition window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LightDirection {
    pub t: f64,
    pub direction: [f64; 3],
}

/// Unit target-to-light vectors at the first sample of every window.
pub fn light_direction_log(leader: &Trajectory, follower: &Trajectory, oois: &[Point3]) -> Vec<LightDirection> {
    let mut out = Vec::new();
    for k in 0..leader.len().min(follower.len()).min(oois.len()) {
        let starts = leader.samples[k].acquire && (k == 0 || !leader.samples[k - 1].acquire);
        if starts {
            let d = follower.samples[k].position() - oois[k];
            if d.norm() > 0.0 {
                let u = d.normalize();
                out.push(LightDirection {
                    t: leader.samples[k].t,
                    direction: [u.x, u.y, u.z],
                });
            }
        }
    }
    out
}

pub fn write_light_log<W: Write>(log: &[LightDirection], mut w: W) -> std::io::Result<()> {
    writeln!(w, "t,dx,dy,dz")?;
    for l in log {
        writeln!(w, "{},{},{},{}", l.t, l.direction[0], l.direction[1], l.direction[2])?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    fn line(from: [f64; 3], to: [f64; 3], n: usize) -> Trajectory {
        let (a, b) = (Point3::from(from), Point3::from(to));
        let samples = (0..n)
            .map(|k| {
                let f = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
                TrajectorySample {
                    t: k as f64 * 0.2,
                    pose: Pose::at(a + (b - a) * f),
                    velocity: [0.0; 3],
                    acquire: false,
                }
            })
            .collect();
        Trajectory { dt: 0.2, samples }
    }

    fn angle_at(ooi: &Point3, a: &Point3, b: &Point3) -> f64 {
        let (u, v) = (a - ooi, b - ooi);
        (u.dot(&v) / (u.norm() * v.norm())).clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn planned_follower_is_clear_and_exact_at_windows() {
        use crate::mission::TechniqueId;
        use crate::planner::{plan_mission, PlannerConfig};
        use crate::scene::{aisle_mission, church, ChurchDims};
        use crate::trajectory::{plan_reference, trajectory_is_clear};

        let dims = ChurchDims::default();
        let cfg = PlannerConfig::default();
        let grid = cfg.build_grid(&church(&dims, 40_000, 3)).unwrap();
        let req = aisle_mission(&dims, 4, TechniqueId::Vis, 5);
        let set = plan_mission(&req, &grid, &cfg).unwrap();
        let spec = LightingSpec {
            light_angle: FRAC_PI_4,
            light_distance: 4.0,
            side: LightSide::Above,
        };
        let mut lit = 0;
        for plan in &set.plans {
            let original = plan_reference(plan, set.cruise_speed, 0.2).unwrap();
            let out = plan_follower(
                &original,
                plan,
                &spec,
                &SeparationSpec::default(),
                &DynamicConstraints::default(),
                &grid,
            )
            .unwrap();
            // The leader only gains stationary samples.
            let leader = &out.leader;
            let extra: usize = out.leader_waits.iter().map(|w| w.1).sum();
            assert_eq!(leader.len(), original.len() + extra);
            let moved: Vec<_> = leader
                .samples
                .windows(2)
                .filter(|w| w[0].position() != w[1].position())
                .map(|w| (w[0].position(), w[1].position()))
                .collect();
            let moved_ref: Vec<_> = original
                .samples
                .windows(2)
                .filter(|w| w[0].position() != w[1].position())
                .map(|w| (w[0].position(), w[1].position()))
                .collect();
            assert_eq!(moved, moved_ref);
            assert_eq!(
                leader.samples.iter().filter(|s| s.acquire).count(),
                original.samples.iter().filter(|s| s.acquire).count()
            );
            assert_eq!(out.trajectory.len(), leader.len());
            assert!(trajectory_is_clear(&out.trajectory, &grid, 0.05));
            let speed = crate::trajectory::audit_dynamics(&out.trajectory).max_speed;
            assert!(speed <= DynamicConstraints::default().v_max + 1e-9, "{speed}");
            let (oois, _) = targets_along(leader, plan).unwrap();
            for (k, f) in out.trajectory.samples.iter().enumerate() {
                let l = &leader.samples[k];
                if out.formation_required[k] {
                    lit += 1;
                    let angle = angle_at(&oois[k], &l.position(), &f.position());
                    assert!((angle - FRAC_PI_4).abs() < 1e-6);
                    assert!(
                        out.trajectory.samples[k.saturating_sub(1)].position() == f.position()
                            || !leader.samples[k - 1].acquire
                    );
                } else if l.acquire {
                    assert!(out.infeasible.contains(&k));
                    let p = light_position(&l.position(), &oois[k], &spec);
                    assert!(p.is_none_or(|p| grid.is_occupied_at(&p)));
                }
            }
            let first = out.trajectory.samples[0].position();
            assert!((first - leader.samples[0].position()).norm() >= SeparationSpec::default().d_min);
        }
        assert!(lit > 0);
    }

    #[test]
    fn zero_angle_lies_on_the_ray() {
        let leader = line([5.0, 0.0, 2.0], [5.0, 3.0, 2.0], 10);
        let ooi = Point3::new(0.0, 0.0, 2.0);
        let spec = LightingSpec {
            light_angle: 0.0,
            light_distance: 3.0,
            side: LightSide::Left,
        };
        let out = follower_reference(&leader, &ooi, &spec).unwrap();
        for (l, f) in leader.samples.iter().zip(&out.trajectory.samples) {
            let expected = ooi + (l.position() - ooi).normalize() * 3.0;
            assert!((f.position() - expected).norm() < 1e-12);
        }
    }

    #[test]
    fn mural_angle_left() {
        // Camera 5 m in front of a wall target, light 5 m away at 45°.
        let ooi = Point3::new(0.0, 0.0, 3.0);
        let leader = line([5.0, 0.0, 3.0], [5.0, 0.0, 3.0], 5);
        let spec = LightingSpec {
            light_angle: FRAC_PI_4,
            light_distance: 5.0,
            side: LightSide::Left,
        };
        let out = follower_reference(&leader, &ooi, &spec).unwrap();
        assert!(out.infeasible.is_empty());
        for (l, f) in leader.samples.iter().zip(&out.trajectory.samples) {
            let angle = angle_at(&ooi, &l.position(), &f.position());
            assert!((angle - FRAC_PI_4).abs() < 1e-6);
            assert!(((f.position() - ooi).norm() - 5.0).abs() < 1e-9);
            // Camera looks along -x, so its left is -y.
            assert!(f.position().y < 0.0);
            assert!((f.pose.optical_axis() - (ooi - f.position()).normalize()).norm() < 1e-9);
        }
        // Stationary leader → stationary follower.
        let p0 = out.trajectory.samples[0].position();
        assert!(out.trajectory.samples.iter().all(|s| s.position() == p0));
    }

    #[test]
    fn sides_and_infeasibility() {
        let ooi = Point3::origin();
        let spec = |side| LightingSpec {
            light_angle: 0.5,
            light_distance: 2.0,
            side,
        };
        let leader = Point3::new(4.0, 0.0, 0.0);
        let left = light_position(&leader, &ooi, &spec(LightSide::Left)).unwrap();
        let right = light_position(&leader, &ooi, &spec(LightSide::Right)).unwrap();
        let above = light_position(&leader, &ooi, &spec(LightSide::Above)).unwrap();
        assert!(left.y < 0.0 && right.y > 0.0 && above.z > 0.0);
        assert!(light_position(&ooi, &ooi, &spec(LightSide::Left)).is_none());
        // Leader straight above the target: no horizontal "left".
        assert!(light_position(&Point3::new(0.0, 0.0, 3.0), &ooi, &spec(LightSide::Left)).is_none());
    }

    #[test]
    fn parallel_lines_are_clean() {
        let a = line([0.0, 0.0, 2.0], [10.0, 0.0, 2.0], 30);
        let b = line([0.0, 3.0, 2.0], [10.0, 3.0, 2.0], 30);
        assert!(separation_violations(&[a, b], &SeparationSpec::default()).is_empty());
    }

    #[test]
    fn vertical_stack_is_downwash() {
        let a = line([0.0, 0.0, 2.0], [10.0, 0.0, 2.0], 30);
        let b = line([0.0, 0.0, 4.5], [10.0, 0.0, 4.5], 30);
        let v = separation_violations(&[a, b], &SeparationSpec::default());
        assert_eq!(v.len(), 30);
        assert!(v.iter().all(|v| v.kind == ViolationKind::Downwash));
    }

    #[test]
    fn crossing_paths_get_a_hover() {
        let a = line([0.0, 0.0, 2.0], [10.0, 0.0, 2.0], 51);
        let b = line([5.0, -5.0, 2.0], [5.0, 5.0, 2.0], 51);
        let spec = SeparationSpec::default();
        assert!(!separation_violations(&[a.clone(), b.clone()], &spec).is_empty());
        let out = enforce_separation(&[a.clone(), b], &spec).unwrap();
        assert!(!out.hovers.is_empty());
        assert_eq!(out.trajectories[0], a);
        assert!(separation_violations(&out.trajectories, &spec).is_empty());
        let t = &out.trajectories[1];
        assert!(t.samples.windows(2).all(|w| w[1].t > w[0].t));
    }

    #[test]
    fn anchored_hover_is_paid_back_by_waiting() {
        let a = line([0.0, 0.0, 2.0], [20.0, 0.0, 2.0], 51);
        // Waits, crosses a's path in 10 samples, then waits at the far end.
        let y = |k: usize| (k.clamp(10, 20) as f64 - 10.0) - 5.0;
        let b = Trajectory {
            dt: 0.2,
            samples: (0..51)
                .map(|k| TrajectorySample {
                    t: k as f64 * 0.2,
                    pose: Pose::at(Point3::new(5.0, y(k), 2.0)),
                    velocity: [0.0; 3],
                    acquire: false,
                })
                .collect(),
        };
        let anchored: Vec<bool> = (0..51).map(|k| k >= 48).collect();
        let spec = SeparationSpec::default();
        assert!(!separation_violations(&[a.clone(), b.clone()], &spec).is_empty());
        let out = enforce_separation_anchored(&[a.clone(), b.clone()], &spec, &[Vec::new(), anchored.clone()]).unwrap();
        assert!(!out.hovers.is_empty());
        assert!(separation_violations(&out.trajectories, &spec).is_empty());
        let t = &out.trajectories[1];
        assert_eq!(t.len(), b.len());
        for k in (0..51).filter(|&k| anchored[k]) {
            assert_eq!(t.samples[k].position(), b.samples[k].position());
            assert_eq!(t.samples[k].t, b.samples[k].t);
        }
    }

    #[test]
    fn anchored_hover_needs_slack() {
        // No waiting before the anchor: the conflict cannot be shifted.
        let a = line([0.0, 0.0, 2.0], [10.0, 0.0, 2.0], 51);
        let b = line([5.0, -5.0, 2.0], [5.0, 5.0, 2.0], 51);
        let anchored = vec![false; 50].into_iter().chain([true]).collect();
        let err =
            enforce_separation_anchored(&[a, b], &SeparationSpec::default(), &[Vec::new(), anchored]).unwrap_err();
        assert!(matches!(err, FormationError::Unresolvable { .. }));
    }

    #[test]
    fn unresolvable_conflict() {
        // Both robots start in the same spot: no hover can help.
        let a = line([0.0, 0.0, 2.0], [0.0, 0.0, 2.0], 10);
        let b = line([0.5, 0.0, 2.0], [9.0, 0.0, 2.0], 10);
        let err = enforce_separation(&[a, b], &SeparationSpec::default()).unwrap_err();
        assert!(matches!(err, FormationError::Unresolvable { t, .. } if t == 0.0));
    }

    #[test]
    fn parked_robot_in_the_way_is_unresolvable() {
        // a stops at (10, 0) after 2 s; b crosses that spot much later.
        // Waiting only delays b's arrival, so this must end, not loop.
        let a = line([0.0, 0.0, 2.0], [10.0, 0.0, 2.0], 11);
        let b = line([10.0, -20.0, 2.0], [10.0, 20.0, 2.0], 81);
        let err = enforce_separation(&[a, b], &SeparationSpec::default()).unwrap_err();
        assert!(matches!(err, FormationError::Unresolvable { a: 0, b: 1, t } if t > 2.0));
    }

    #[test]
    fn rti_dome_geometry() {
        let ooi = Point3::new(0.0, 0.0, 3.0);
        let cam = Pose::looking_at(Point3::new(4.0, 0.0, 3.0), &ooi);
        let dome = rti_light_poses(&ooi, &cam, 50, 2.5, None).unwrap();
        assert_eq!(dome.poses.len(), 50);
        let ideal = (2.0 * std::f64::consts::PI / 50.0).sqrt();
        let mut min_sep = f64::INFINITY;
        for (i, a) in dome.poses.iter().enumerate() {
            let p = a.pose.point();
            assert!(((p - ooi).norm() - 2.5).abs() < 1e-9);
            let dir = Vector3::from(a.direction);
            assert!((dir - (p - ooi) / 2.5).norm() < 1e-12);
            assert!(dir.x > 0.0, "pose behind the target plane");
            for b in &dome.poses[i + 1..] {
                let d = Vector3::from(b.direction);
                min_sep = min_sep.min(dir.dot(&d).clamp(-1.0, 1.0).acos());
            }
        }
        assert!(min_sep >= 0.8 * ideal, "{min_sep} vs {ideal}");

        let one = rti_light_poses(&ooi, &cam, 1, 2.0, None).unwrap();
        let p = one.poses[0].pose.point();
        assert!((Vector3::from(one.poses[0].direction) - (p - ooi).normalize()).norm() < 1e-12);
    }
}
