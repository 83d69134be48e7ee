//! Time-parameterised reference trajectories.
//!
//! [`sample_reference`] walks a plan's polyline at cruise speed and holds
//! still for the dwell time at every acquisition. [`smooth_track`] then
//! makes the result dynamically feasible: it keeps the geometry and
//! retimes the transit runs (slowing into corners and stops), optionally
//! followed by a receding-horizon quadratic smoother that trades
//! deviation for lower acceleration. Acquisition windows pass through
//! untouched.
//!
//! All dynamic checks are finite differences at the sample period, with
//! the vehicle at rest before the first and after the last sample.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{angle_diff, wrap_angle, Point3, Pose, Vector3};
use crate::planner::{MissionPlan, OccupancyGrid, PlanTriplet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("invalid trajectory parameter: {0}")]
    Parameter(String),
    #[error("could not satisfy the dynamic constraints: {0}")]
    Infeasible(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t: f64,
    pub pose: Pose,
    pub velocity: [f64; 3],
    pub acquire: bool,
}

impl TrajectorySample {
    pub fn position(&self) -> Point3 {
        self.pose.point()
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }

    pub fn positions(&self) -> Vec<Point3> {
        self.samples.iter().map(TrajectorySample::position).collect()
    }

    /// CSV with header `t,x,y,z,heading,vx,vy,vz,acquire`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,x,y,z,heading,vx,vy,vz,acquire")?;
        for s in &self.samples {
            let [x, y, z] = s.pose.position;
            let [vx, vy, vz] = s.velocity;
            writeln!(
                w,
                "{},{x},{y},{z},{},{vx},{vy},{vz},{}",
                s.t,
                s.pose.heading,
                u8::from(s.acquire)
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is ascii")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DynamicConstraints {
    pub v_max: f64,
    pub a_max: f64,
    pub yaw_rate_max: f64,
}

impl Default for DynamicConstraints {
    fn default() -> Self {
        Self {
            v_max: 1.0,
            a_max: 1.0,
            yaw_rate_max: 1.0,
        }
    }
}

impl DynamicConstraints {
    fn validate(&self) -> Result<(), TrajectoryError> {
        if [self.v_max, self.a_max, self.yaw_rate_max]
            .iter()
            .all(|v| *v > 0.0 && v.is_finite())
        {
            Ok(())
        } else {
            Err(TrajectoryError::Parameter(format!(
                "constraints must be positive: {self:?}"
            )))
        }
    }
}

fn ceil_steps(duration: f64, dt: f64) -> usize {
    (duration / dt - 1e-9).ceil().max(0.0) as usize
}

/// Uniformly samples a plan at `cruise_speed`, `dt` apart in time.
///
/// Samples are `cruise_speed · dt` apart along each plan segment; every
/// plan vertex is itself a sample. An acquiring triplet turns into
/// `⌈dwell/dt⌉` identical, flagged, zero-velocity samples (the arrival
/// sample is the first of them).
pub fn sample_reference(triplets: &[PlanTriplet], cruise_speed: f64, dt: f64) -> Result<Trajectory, TrajectoryError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(TrajectoryError::Parameter(format!("dt must be positive, got {dt}")));
    }
    if !(cruise_speed > 0.0 && cruise_speed.is_finite()) {
        return Err(TrajectoryError::Parameter(format!(
            "cruise speed must be positive, got {cruise_speed}"
        )));
    }
    if triplets.is_empty() {
        return Ok(Trajectory {
            dt,
            samples: Vec::new(),
        });
    }
    let h = cruise_speed * dt;
    // (pose, acquire, hold) where hold marks zero-velocity samples.
    let mut raw: Vec<(Pose, bool, bool)> = Vec::new();
    let push_stop = |raw: &mut Vec<(Pose, bool, bool)>, tr: &PlanTriplet| {
        let n = if tr.dwell > 0.0 {
            ceil_steps(tr.dwell, dt).max(1)
        } else {
            1
        };
        for _ in 0..n {
            raw.push((tr.p_uav, tr.acquire, tr.acquire || tr.dwell > 0.0));
        }
    };
    push_stop(&mut raw, &triplets[0]);
    for w in triplets.windows(2) {
        let (a, b) = (&w[0].p_uav, &w[1].p_uav);
        let (pa, pb) = (a.point(), b.point());
        let len = (pb - pa).norm();
        let n = (len / h + 1e-9).floor() as usize;
        for k in 1..=n {
            let s = k as f64 * h;
            if s >= len - 1e-9 {
                break;
            }
            let f = s / len;
            let heading = wrap_angle(a.heading + f * angle_diff(b.heading, a.heading));
            let pitch = a.pitch + f * (b.pitch - a.pitch);
            raw.push((Pose::new(pa + (pb - pa) * f, heading, pitch), false, false));
        }
        push_stop(&mut raw, &w[1]);
    }

    let last = raw.len() - 1;
    let samples = (0..raw.len())
        .map(|k| {
            let (pose, acquire, hold) = raw[k];
            let velocity = if hold || k == 0 || k == last {
                [0.0; 3]
            } else {
                let v = (raw[k + 1].0.point() - pose.point()) / dt;
                [v.x, v.y, v.z]
            };
            TrajectorySample {
                t: k as f64 * dt,
                pose,
                velocity,
                acquire,
            }
        })
        .collect();
    Ok(Trajectory { dt, samples })
}

/// Sampled reference for a full mission plan.
pub fn plan_reference(plan: &MissionPlan, cruise_speed: f64, dt: f64) -> Result<Trajectory, TrajectoryError> {
    sample_reference(&plan.triplets, cruise_speed, dt)
}

/// Largest finite-difference speed, acceleration and yaw rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DynamicsAudit {
    pub max_speed: f64,
    pub max_accel: f64,
    pub max_yaw_rate: f64,
}

impl DynamicsAudit {
    pub fn satisfies(&self, c: &DynamicConstraints) -> bool {
        const TOL: f64 = 1e-9;
        self.max_speed <= c.v_max + TOL && self.max_accel <= c.a_max + TOL && self.max_yaw_rate <= c.yaw_rate_max + TOL
    }
}

pub fn audit_dynamics(traj: &Trajectory) -> DynamicsAudit {
    let dt = traj.dt;
    let p = traj.positions();
    let n = p.len();
    let mut out = DynamicsAudit::default();
    if n == 0 {
        return out;
    }
    let at = |k: isize| p[k.clamp(0, n as isize - 1) as usize];
    for k in 0..n {
        let ki = k as isize;
        if k + 1 < n {
            out.max_speed = out.max_speed.max((p[k + 1] - p[k]).norm() / dt);
            let dpsi = angle_diff(traj.samples[k + 1].pose.heading, traj.samples[k].pose.heading);
            out.max_yaw_rate = out.max_yaw_rate.max(dpsi.abs() / dt);
        }
        let a = (at(ki + 1) - 2.0 * at(ki).coords + at(ki - 1).coords).coords / (dt * dt);
        out.max_accel = out.max_accel.max(a.norm());
    }
    out
}

/// Distance from `q` to the polyline.
fn distance_to_polyline(q: &Point3, poly: &[Point3]) -> f64 {
    if poly.len() == 1 {
        return (q - poly[0]).norm();
    }
    poly.windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            let l2 = d.norm_squared();
            let t = if l2 > 0.0 {
                ((q - w[0]).dot(&d) / l2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            (q - (w[0] + d * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

/// Largest distance from any output sample to the reference path.
pub fn max_path_deviation(output: &Trajectory, reference: &Trajectory) -> f64 {
    let poly = reference.positions();
    if poly.is_empty() {
        return 0.0;
    }
    output
        .positions()
        .iter()
        .map(|q| distance_to_polyline(q, &poly))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmoothingParams {
    /// Receding-horizon window in samples; 0 disables the quadratic pass.
    pub horizon: usize,
    /// Largest allowed distance from the reference path (m).
    pub dev_max: f64,
    pub deviation_weight: f64,
    pub accel_weight: f64,
    /// Retiming attempts, each with tighter internal limits.
    pub max_retries: usize,
}

impl Default for SmoothingParams {
    fn default() -> Self {
        Self {
            horizon: 0,
            dev_max: 0.3,
            deviation_weight: 1.0,
            accel_weight: 4.0,
            max_retries: 25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingMethod {
    /// The reference already satisfied the constraints.
    Unchanged,
    Retimed,
    /// Retimed, then quadratically smoothed.
    Smoothed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothOutcome {
    pub trajectory: Trajectory,
    pub method: SmoothingMethod,
    pub audit: DynamicsAudit,
    pub deviation: f64,
    /// Retiming attempts used.
    pub attempts: usize,
}

/// Makes `reference` satisfy `constraints`.
///
/// A feasible reference is returned unchanged. Otherwise the transit runs
/// are retimed along the reference path, and, with a positive horizon,
/// smoothed quadratically; the smoothed version is kept only if it passes
/// the dynamics and deviation audits (and `keep_clear`, when given).
pub fn smooth_track(
    reference: &Trajectory,
    constraints: &DynamicConstraints,
    params: &SmoothingParams,
) -> Result<SmoothOutcome, TrajectoryError> {
    smooth_track_with(reference, constraints, params, None)
}

/// [`smooth_track`] that also rejects a smoothed result clipping the grid.
pub fn smooth_track_clear(
    reference: &Trajectory,
    constraints: &DynamicConstraints,
    params: &SmoothingParams,
    grid: &OccupancyGrid,
) -> Result<SmoothOutcome, TrajectoryError> {
    smooth_track_with(reference, constraints, params, Some(grid))
}

fn smooth_track_with(
    reference: &Trajectory,
    constraints: &DynamicConstraints,
    params: &SmoothingParams,
    grid: Option<&OccupancyGrid>,
) -> Result<SmoothOutcome, TrajectoryError> {
    constraints.validate()?;
    if reference.is_empty() {
        return Err(TrajectoryError::Parameter("empty reference".into()));
    }
    if !(reference.dt > 0.0) {
        return Err(TrajectoryError::Parameter("reference dt must be positive".into()));
    }
    let audit = audit_dynamics(reference);
    if audit.satisfies(constraints) {
        return Ok(SmoothOutcome {
            trajectory: reference.clone(),
            method: SmoothingMethod::Unchanged,
            audit,
            deviation: 0.0,
            attempts: 0,
        });
    }

    let blocks = split_blocks(reference);
    let mut scale = 1.0;
    let mut last = audit;
    for attempt in 1..=params.max_retries.max(1) {
        let retimed = retime(reference, &blocks, constraints, scale);
        let audit = audit_dynamics(&retimed);
        if audit.satisfies(constraints) {
            let deviation = max_path_deviation(&retimed, reference);
            if deviation > params.dev_max {
                return Err(TrajectoryError::Infeasible(format!(
                    "retimed path deviates {deviation:.3} m > {} m",
                    params.dev_max
                )));
            }
            if params.horizon > 0 {
                let smoothed = quadratic_smooth(&retimed, params);
                let s_audit = audit_dynamics(&smoothed);
                let s_dev = max_path_deviation(&smoothed, reference);
                let clear = grid.is_none_or(|g| trajectory_is_clear(&smoothed, g, 0.05));
                if s_audit.satisfies(constraints) && s_dev <= params.dev_max && clear {
                    return Ok(SmoothOutcome {
                        trajectory: smoothed,
                        method: SmoothingMethod::Smoothed,
                        audit: s_audit,
                        deviation: s_dev,
                        attempts: attempt,
                    });
                }
            }
            return Ok(SmoothOutcome {
                trajectory: retimed,
                method: SmoothingMethod::Retimed,
                audit,
                deviation,
                attempts: attempt,
            });
        }
        last = audit;
        scale *= 0.8;
    }
    Err(TrajectoryError::Infeasible(format!(
        "after {} attempts: speed {:.3}, accel {:.3}, yaw rate {:.3}",
        params.max_retries, last.max_speed, last.max_accel, last.max_yaw_rate
    )))
}

/// True if every sample and every segment between samples stays out of
/// the inflated grid (brute force, sampled every `step` meters).
pub fn trajectory_is_clear(traj: &Trajectory, grid: &OccupancyGrid, step: f64) -> bool {
    let p = traj.positions();
    match p.len() {
        0 => true,
        1 => !grid.is_occupied_at(&p[0]),
        _ => p.windows(2).all(|w| grid.segment_is_free_sampled(&w[0], &w[1], step)),
    }
}

/// Stretches of the reference: held samples (kept verbatim) and transit
/// runs (retimed).
#[derive(Debug, Clone)]
enum Block {
    Hold(std::ops::Range<usize>),
    Transit(std::ops::Range<usize>),
}

fn is_hold(s: &TrajectorySample) -> bool {
    s.acquire || s.velocity == [0.0; 3]
}

fn split_blocks(r: &Trajectory) -> Vec<Block> {
    let n = r.samples.len();
    let hold: Vec<bool> = (0..n).map(|k| k == 0 || k == n - 1 || is_hold(&r.samples[k])).collect();
    let mut blocks = Vec::new();
    let mut k = 0;
    while k < n {
        let start = k;
        let h = hold[k];
        while k < n && hold[k] == h {
            k += 1;
        }
        blocks.push(if h {
            Block::Hold(start..k)
        } else {
            Block::Transit(start..k)
        });
    }
    blocks
}

/// Speed profile over a fine arc-length discretisation of a polyline.
struct Profile {
    /// Cumulative arc length of every node.
    s: Vec<f64>,
    v: Vec<f64>,
    /// Arrival time at every node.
    t: Vec<f64>,
}

impl Profile {
    fn duration(&self) -> f64 {
        *self.t.last().expect("non-empty profile")
    }

    /// Arc length reached at time `time` (constant acceleration per piece).
    fn arc_at(&self, time: f64) -> f64 {
        if time >= self.duration() {
            return *self.s.last().expect("non-empty profile");
        }
        let i = self.t.partition_point(|&ti| ti <= time).saturating_sub(1);
        let tau = time - self.t[i];
        let ds = self.s[i + 1] - self.s[i];
        let dtp = self.t[i + 1] - self.t[i];
        let a = if dtp > 0.0 {
            (self.v[i + 1] - self.v[i]) / dtp
        } else {
            0.0
        };
        (self.s[i] + self.v[i] * tau + 0.5 * a * tau * tau).min(self.s[i] + ds)
    }
}

const FINE_DS: f64 = 0.02;

fn build_profile(poly: &[Point3], headings: &[f64], c: &DynamicConstraints, dt: f64, scale: f64) -> Profile {
    let a_lim = c.a_max * scale;
    let v_lim = c.v_max * (0.5 + 0.5 * scale);
    let mut s = vec![0.0];
    let mut cap = vec![0.0];
    for k in 0..poly.len() - 1 {
        let seg = poly[k + 1] - poly[k];
        let len = seg.norm();
        if len == 0.0 {
            continue;
        }
        let dpsi = angle_diff(headings[k + 1], headings[k]).abs();
        let yaw_cap = if dpsi > 0.0 {
            c.yaw_rate_max * scale * len / dpsi
        } else {
            f64::INFINITY
        };
        let pieces = (len / FINE_DS).ceil() as usize;
        let s0 = *s.last().expect("seeded");
        for j in 1..=pieces {
            s.push(s0 + len * j as f64 / pieces as f64);
            cap.push(v_lim.min(yaw_cap));
        }
        // The interior node before this segment also inherits its yaw cap.
        let first = cap.len() - pieces - 1;
        if first > 0 {
            cap[first] = cap[first].min(yaw_cap);
        }
        // Corner at poly[k + 1]: direction change over one sample period.
        if let Some(next) = poly.get(k + 2) {
            let out = next - poly[k + 1];
            if out.norm() > 0.0 {
                let cos = (seg.dot(&out) / (len * out.norm())).clamp(-1.0, 1.0);
                let half = 0.5 * cos.acos();
                if half > 1e-9 {
                    let corner = a_lim * dt / (2.0 * half.sin());
                    let last = cap.len() - 1;
                    cap[last] = cap[last].min(corner);
                }
            }
        }
    }
    let n = s.len();
    let last = n - 1;
    cap[last] = 0.0;
    let mut v = cap.clone();
    v[0] = 0.0;
    for i in 1..n {
        let ds = s[i] - s[i - 1];
        v[i] = v[i].min((v[i - 1] * v[i - 1] + 2.0 * a_lim * ds).sqrt());
    }
    for i in (0..last).rev() {
        let ds = s[i + 1] - s[i];
        v[i] = v[i].min((v[i + 1] * v[i + 1] + 2.0 * a_lim * ds).sqrt());
    }
    let mut t = vec![0.0; n];
    for i in 1..n {
        let ds = s[i] - s[i - 1];
        let vm = v[i - 1] + v[i];
        t[i] = t[i - 1] + if vm > 0.0 { 2.0 * ds / vm } else { 0.0 };
    }
    Profile { s, v, t }
}

/// Pose at arc length `arc` along the polyline.
fn pose_at(poly: &[Point3], headings: &[f64], pitches: &[f64], cum: &[f64], arc: f64) -> Pose {
    let k = cum.partition_point(|&c| c <= arc).clamp(1, poly.len() - 1) - 1;
    let len = cum[k + 1] - cum[k];
    let f = if len > 0.0 {
        ((arc - cum[k]) / len).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let heading = wrap_angle(headings[k] + f * angle_diff(headings[k + 1], headings[k]));
    let pitch = pitches[k] + f * (pitches[k + 1] - pitches[k]);
    Pose::new(poly[k] + (poly[k + 1] - poly[k]) * f, heading, pitch)
}

fn retime(reference: &Trajectory, blocks: &[Block], c: &DynamicConstraints, scale: f64) -> Trajectory {
    let dt = reference.dt;
    let r = &reference.samples;
    let mut out: Vec<TrajectorySample> = Vec::with_capacity(r.len());
    let mut held: Vec<bool> = Vec::with_capacity(r.len());
    for block in blocks {
        match block {
            Block::Hold(range) => {
                out.extend(r[range.clone()].iter().copied());
                held.extend(range.clone().map(|_| true));
            }
            Block::Transit(range) => {
                // The run spans from the last held sample before it to the
                // first held sample after it.
                let from = range.start - 1;
                let to = range.end;
                let poses: Vec<Pose> = r[from..=to].iter().map(|s| s.pose).collect();
                let poly: Vec<Point3> = poses.iter().map(Pose::point).collect();
                let headings: Vec<f64> = poses.iter().map(|p| p.heading).collect();
                let pitches: Vec<f64> = poses.iter().map(|p| p.pitch).collect();
                let mut cum = vec![0.0];
                for w in poly.windows(2) {
                    cum.push(cum.last().expect("seeded") + (w[1] - w[0]).norm());
                }
                let profile = build_profile(&poly, &headings, c, dt, scale);
                let steps = ceil_steps(profile.duration(), dt).max(1);
                for k in 1..steps {
                    let arc = profile.arc_at(k as f64 * dt);
                    out.push(TrajectorySample {
                        t: 0.0,
                        pose: pose_at(&poly, &headings, &pitches, &cum, arc),
                        velocity: [0.0; 3],
                        acquire: false,
                    });
                    held.push(false);
                }
            }
        }
    }
    finish(out, dt, &held)
}

/// Re-stamps times and recomputes forward-difference velocities of
/// non-held samples.
fn finish(mut samples: Vec<TrajectorySample>, dt: f64, held: &[bool]) -> Trajectory {
    let n = samples.len();
    for k in 0..n {
        samples[k].t = k as f64 * dt;
        if k == 0 || k + 1 == n || held[k] {
            samples[k].velocity = [0.0; 3];
        } else {
            let v: Vector3 = (samples[k + 1].position() - samples[k].position()) / dt;
            samples[k].velocity = [v.x, v.y, v.z];
        }
    }
    Trajectory { dt, samples }
}

/// Receding-horizon smoothing of transit samples.
///
/// For each free sample, minimises
/// `w_dev Σ |x_j − y_j|² + w_acc Σ |x_{j+1} − 2x_j + x_{j−1}|²` over the
/// next `horizon` samples, with already committed samples and the next
/// held sample fixed, and commits the first one.
fn quadratic_smooth(traj: &Trajectory, params: &SmoothingParams) -> Trajectory {
    let y = traj.positions();
    let n = y.len();
    let fixed: Vec<bool> = (0..n)
        .map(|k| k == 0 || k + 1 == n || is_hold(&traj.samples[k]))
        .collect();
    let mut x = y.clone();
    let wd = params.deviation_weight;
    let wa = params.accel_weight;
    for k in 0..n {
        if fixed[k] {
            continue;
        }
        // Window k..end (exclusive), stopping before the next fixed sample.
        let mut end = k;
        while end < n && end < k + params.horizon && !fixed[end] {
            end += 1;
        }
        let m = end - k;
        // Unknowns x_k..x_{end-1}; known neighbours x_{k-2}, x_{k-1} (committed)
        // and x_end (reference value, fixed when it is a held sample).
        let mut h = DMatrix::<f64>::zeros(m, m);
        let mut g = [
            DVector::<f64>::zeros(m),
            DVector::<f64>::zeros(m),
            DVector::<f64>::zeros(m),
        ];
        for j in 0..m {
            h[(j, j)] += wd;
            for ax in 0..3 {
                g[ax][j] += wd * y[k + j][ax];
            }
        }
        // Second-difference terms centred on i, for i in k-1 ..= end-1 and,
        // if x_end is a fixed neighbour, also i = end.
        let first = k as isize - 1;
        let last = if end < n { end as isize } else { end as isize - 1 };
        for i in first..=last {
            let idx = [i - 1, i, i + 1];
            let coef = [1.0, -2.0, 1.0];
            if idx.iter().any(|&q| q < 0 || q >= n as isize) {
                continue;
            }
            if !idx.iter().any(|&q| q >= k as isize && q < end as isize) {
                continue;
            }
            let mut rhs = [0.0; 3];
            for (q, cq) in idx.iter().zip(coef) {
                let q = *q as usize;
                if q < k || q >= end {
                    let known = if q < k { x[q] } else { y[q] };
                    for ax in 0..3 {
                        rhs[ax] -= cq * known[ax];
                    }
                }
            }
            for (qa, ca) in idx.iter().zip(coef) {
                let qa = *qa as usize;
                if qa < k || qa >= end {
                    continue;
                }
                let ja = qa - k;
                for (qb, cb) in idx.iter().zip(coef) {
                    let qb = *qb as usize;
                    if qb >= k && qb < end {
                        h[(ja, qb - k)] += wa * ca * cb;
                    }
                }
                for ax in 0..3 {
                    g[ax][ja] += wa * ca * rhs[ax];
                }
            }
        }
        if let Some(chol) = h.cholesky() {
            for ax in 0..3 {
                let sol = chol.solve(&g[ax]);
                x[k][ax] = sol[0];
            }
        }
    }
    let samples: Vec<TrajectorySample> = traj
        .samples
        .iter()
        .zip(&x)
        .map(|(s, p)| TrajectorySample {
            pose: Pose::new(*p, s.pose.heading, s.pose.pitch),
            ..*s
        })
        .collect();
    finish(samples, traj.dt, &fixed)
}
