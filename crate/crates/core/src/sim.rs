//! Deterministic kinematic simulation of mission execution.
//!
//! Each robot tracks its reference with a first-order lag,
//! `x[k+1] = r[k+1] + e^(−dt/τ) (x[k] − r[k]) + w[k]`, where `w` is
//! seeded Gaussian noise. It is a stand-in for a real tracking controller,
//! not a model of one. Every sample logs the distance to the nearest map
//! point, the height above the floor and the tracking error. Acquisitions
//! count when the robot is inside an acquisition window and within
//! tolerance of the reference.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{KdTree, Point3, PointCloud};
use crate::trajectory::{DynamicConstraints, Trajectory};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid simulation parameter: {0}")]
    Parameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotModel {
    /// Radius of the sphere enclosing the guarded frame (m).
    pub bounding_radius: f64,
    pub constraints: DynamicConstraints,
    /// Per-step, per-axis standard deviation of the tracking noise (m).
    pub tracking_noise_sigma: f64,
}

impl RobotModel {
    /// 78 × 81 × 40 cm documentation platform.
    pub fn primary() -> Self {
        Self {
            bounding_radius: 0.5 * 0.78f64.hypot(0.81),
            constraints: DynamicConstraints::default(),
            tracking_noise_sigma: 0.02,
        }
    }

    /// 68 × 68 × 30 cm lighting platform.
    pub fn secondary() -> Self {
        Self {
            bounding_radius: 0.5 * 0.68f64.hypot(0.68),
            ..Self::primary()
        }
    }
}

impl Default for RobotModel {
    fn default() -> Self {
        Self::primary()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Tracking time constant (s).
    pub tau: f64,
    /// Largest position error at which an acquisition counts (m).
    pub acquisition_tolerance: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            acquisition_tolerance: 0.1,
            seed: 0,
        }
    }
}

/// One robot flying one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRun {
    pub robot: usize,
    pub flight: usize,
    /// Runs with the same group fly at the same time.
    pub group: usize,
    pub model: RobotModel,
    pub trajectory: Trajectory,
    /// Start position if not on the first reference sample.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_position: Option<[f64; 3]>,
}

/// Static environment: the raw map and its floor height.
pub struct Environment {
    tree: KdTree,
    floor: f64,
}

impl Environment {
    pub fn new(map: &PointCloud) -> Result<Self, SimError> {
        map.validate().map_err(|e| SimError::Parameter(e.to_string()))?;
        let floor = map.min_z().ok_or_else(|| SimError::Parameter("empty map".into()))?;
        Ok(Self {
            tree: KdTree::new(&map.points),
            floor,
        })
    }

    /// Distance from `p` to the nearest map point.
    pub fn obstacle_distance(&self, p: &Point3) -> f64 {
        self.tree.nearest(p).map_or(f64::INFINITY, |(_, d2)| d2.sqrt())
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogSample {
    pub t: f64,
    pub position: [f64; 3],
    pub heading: f64,
    pub reference: [f64; 3],
    /// Distance between true and reference position (m).
    pub position_error: f64,
    /// Robot centre to nearest map point (m).
    pub obstacle_distance: f64,
    /// `obstacle_distance − bounding_radius`: frame to nearest map point.
    pub clearance: f64,
    pub height: f64,
    pub acquire: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub t: f64,
    pub sample: usize,
    pub position_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Collision {
    pub t: f64,
    pub sample: usize,
    pub obstacle_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightLog {
    pub robot: usize,
    pub flight: usize,
    pub group: usize,
    pub samples: Vec<LogSample>,
    /// One entry per acquisition window that captured.
    pub acquisitions: Vec<Acquisition>,
    /// Windows that never got within tolerance, by first sample time.
    pub missed_acquisitions: Vec<f64>,
    pub collisions: Vec<Collision>,
}

impl FlightLog {
    pub fn failed(&self) -> bool {
        !self.collisions.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn distance(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (Point3::from(w[1].position) - Point3::from(w[0].position)).norm())
            .sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "t,x,y,z,heading,rx,ry,rz,position_error,obstacle_distance,clearance,height,acquire"
        )?;
        for s in &self.samples {
            let [x, y, z] = s.position;
            let [rx, ry, rz] = s.reference;
            writeln!(
                w,
                "{},{x},{y},{z},{},{rx},{ry},{rz},{},{},{},{},{}",
                s.t,
                s.heading,
                s.position_error,
                s.obstacle_distance,
                s.clearance,
                s.height,
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

/// Independent noise stream per run, derived from the scenario seed.
fn run_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Simulates every run against the environment.
///
/// Runs are advanced on a shared clock, one tick at a time; each has its
/// own noise stream, so the result depends only on the inputs and seed.
pub fn simulate(runs: &[SimRun], env: &Environment, config: &SimConfig) -> Result<Vec<FlightLog>, SimError> {
    if !(config.tau > 0.0) || !(config.acquisition_tolerance >= 0.0) {
        return Err(SimError::Parameter(format!("bad simulation config {config:?}")));
    }
    for r in runs {
        if !(r.model.bounding_radius > 0.0) || !(r.model.tracking_noise_sigma >= 0.0) {
            return Err(SimError::Parameter(format!("bad robot model for robot {}", r.robot)));
        }
        if !r.trajectory.is_empty() && !(r.trajectory.dt > 0.0) {
            return Err(SimError::Parameter("trajectory dt must be positive".into()));
        }
    }
    let mut states: Vec<Option<Point3>> = vec![None; runs.len()];
    let mut rngs: Vec<ChaCha8Rng> = (0..runs.len()).map(|i| run_rng(config.seed, i)).collect();
    let noises: Vec<Option<Normal<f64>>> = runs
        .iter()
        .map(|r| {
            (r.model.tracking_noise_sigma > 0.0)
                .then(|| Normal::new(0.0, r.model.tracking_noise_sigma).expect("finite sigma"))
        })
        .collect();
    let mut logs: Vec<FlightLog> = runs
        .iter()
        .map(|r| FlightLog {
            robot: r.robot,
            flight: r.flight,
            group: r.group,
            samples: Vec::with_capacity(r.trajectory.len()),
            acquisitions: Vec::new(),
            missed_acquisitions: Vec::new(),
            collisions: Vec::new(),
        })
        .collect();

    let ticks = runs.iter().map(|r| r.trajectory.len()).max().unwrap_or(0);
    for k in 0..ticks {
        for (i, run) in runs.iter().enumerate() {
            let traj = &run.trajectory;
            if k >= traj.len() {
                continue;
            }
            let reference = traj.samples[k];
            let r = reference.position();
            let x = match states[i] {
                None => run.initial_position.map_or(r, Point3::from),
                Some(prev) => {
                    let alpha = (-traj.dt / config.tau).exp();
                    let r_prev = traj.samples[k - 1].position();
                    let mut x = r + (prev - r_prev) * alpha;
                    if let Some(noise) = &noises[i] {
                        for ax in 0..3 {
                            x[ax] += noise.sample(&mut rngs[i]);
                        }
                    }
                    x
                }
            };
            states[i] = Some(x);
            let obstacle_distance = env.obstacle_distance(&x);
            let clearance = obstacle_distance - run.model.bounding_radius;
            let log = &mut logs[i];
            if clearance < 0.0 {
                log.collisions.push(Collision {
                    t: reference.t,
                    sample: k,
                    obstacle_distance,
                });
            }
            log.samples.push(LogSample {
                t: reference.t,
                position: x.into(),
                heading: reference.pose.heading,
                reference: r.into(),
                position_error: (x - r).norm(),
                obstacle_distance,
                clearance,
                height: x.z - env.floor(),
                acquire: reference.acquire,
            });
        }
    }
    for log in &mut logs {
        record_acquisitions(log, config.acquisition_tolerance);
    }
    Ok(logs)
}

fn record_acquisitions(log: &mut FlightLog, tolerance: f64) {
    let s = &log.samples;
    let mut k = 0;
    while k < s.len() {
        if !s[k].acquire {
            k += 1;
            continue;
        }
        let start = k;
        while k < s.len() && s[k].acquire {
            k += 1;
        }
        match (start..k).find(|&j| s[j].position_error <= tolerance) {
            Some(j) => log.acquisitions.push(Acquisition {
                t: s[j].t,
                sample: j,
                position_error: s[j].position_error,
            }),
            None => log.missed_acquisitions.push(s[start].t),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MissionMetrics {
    pub flights: usize,
    pub images: usize,
    /// Sum of flight durations (s).
    pub flight_time: f64,
    /// Sum of flown distances (m).
    pub flight_distance: f64,
    pub max_height: f64,
    /// Smallest robot-centre distance to the map (m); `None` without
    /// samples.
    pub min_obstacle_distance: Option<f64>,
    /// Smallest frame clearance to the map (m).
    pub min_clearance: Option<f64>,
    /// Smallest distance between robots flying together (m); `None` if no
    /// two robots share a group.
    pub min_mutual_distance: Option<f64>,
    pub collisions: usize,
}

/// Aggregates mission metrics over all flight logs.
pub fn metrics(logs: &[FlightLog]) -> MissionMetrics {
    fn fold_min(acc: &mut Option<f64>, v: f64) {
        *acc = Some(acc.map_or(v, |a| a.min(v)));
    }
    let mut m = MissionMetrics {
        flights: logs.len(),
        ..MissionMetrics::default()
    };
    for log in logs {
        m.images += log.acquisitions.len();
        m.flight_time += log.duration();
        m.flight_distance += log.distance();
        m.collisions += log.collisions.len();
        for s in &log.samples {
            m.max_height = m.max_height.max(s.height);
            fold_min(&mut m.min_obstacle_distance, s.obstacle_distance);
            fold_min(&mut m.min_clearance, s.clearance);
        }
    }
    for (i, a) in logs.iter().enumerate() {
        for b in &logs[i + 1..] {
            if a.group != b.group || a.robot == b.robot {
                continue;
            }
            for (sa, sb) in a.samples.iter().zip(&b.samples) {
                let d = (Point3::from(sa.position) - Point3::from(sb.position)).norm();
                fold_min(&mut m.min_mutual_distance, d);
            }
        }
    }
    m
}

/// Mean position error over acquisition samples that captured.
pub fn mean_acquisition_error(logs: &[FlightLog]) -> Option<f64> {
    let errs: Vec<f64> = logs
        .iter()
        .flat_map(|l| l.acquisitions.iter().map(|a| a.position_error))
        .collect();
    (!errs.is_empty()).then(|| errs.iter().sum::<f64>() / errs.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupervisorAction {
    None,
    StopAll,
    GotoTakeoff,
    LandAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SupervisorRules {
    /// Tracking error beyond which control has run away (m).
    pub max_position_error: f64,
    /// Obstacle distance below which everything stops (m).
    pub min_obstacle_distance: f64,
    /// Fraction of `t_max` after which robots return to takeoff.
    pub budget_fraction: f64,
    pub t_max: f64,
}

impl Default for SupervisorRules {
    fn default() -> Self {
        Self {
            max_position_error: 1.0,
            min_obstacle_distance: 1.0,
            budget_fraction: 0.9,
            t_max: 600.0,
        }
    }
}

/// Most severe action triggered by the latest state of any robot.
///
/// Severity: land_all > goto_takeoff > stop_all > none.
pub fn supervisor_check(logs: &[FlightLog], rules: &SupervisorRules) -> SupervisorAction {
    let mut action = SupervisorAction::None;
    for log in logs {
        let (Some(first), Some(last)) = (log.samples.first(), log.samples.last()) else {
            continue;
        };
        if last.obstacle_distance < rules.min_obstacle_distance {
            action = action.max(SupervisorAction::StopAll);
        }
        if last.t - first.t >= rules.budget_fraction * rules.t_max {
            action = action.max(SupervisorAction::GotoTakeoff);
        }
        if last.position_error > rules.max_position_error {
            action = action.max(SupervisorAction::LandAll);
        }
    }
    action
}
