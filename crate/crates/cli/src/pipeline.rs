//! The pipeline stages behind the subcommands and the service.
//!
//! Each stage is a plain function from documents to documents; the CLI
//! adds file handling and the service adds HTTP. Nothing here depends on
//! wall-clock time or global state, so equal inputs give equal outputs.

use std::path::Path;

use nave_core::alignment::align;
use nave_core::formation::{
    enforce_separation, enforce_separation_anchored, light_direction_log, plan_follower, separation_violations,
    targets_along, FormationError,
};
use nave_core::geom::ply::read_ply_file;
use nave_core::geom::{PointCloud, Vector3};
use nave_core::mission::{validate_mission, MissionRequest, ValidationReport};
use nave_core::planner::{audit_plan_set, plan_mission, MissionPlanSet, OccupancyGrid, SegmentViolation};
use nave_core::sim::{
    mean_acquisition_error, metrics, simulate, supervisor_check, Environment, FlightLog, RobotModel, SimConfig, SimRun,
    SupervisorRules,
};
use nave_core::trajectory::{audit_dynamics, plan_reference, smooth_track_clear, trajectory_is_clear};
use nave_core::FORMAT_VERSION;
use serde::{Deserialize, Serialize};

use crate::docs::{
    AlignmentDocument, FlightSummary, FormationDocument, FormationFlight, PipelineConfig, Role, SimulationDocument,
    TrajectoryEntry, TrajectorySet,
};
use crate::error::CliError;

pub fn load_map(path: &Path) -> Result<PointCloud, CliError> {
    let cloud = read_ply_file(path).map_err(|e| match e {
        nave_core::geom::ply::PlyError::Io(source) => CliError::io(path, source),
        other => CliError::Format(format!("{}: {other}", path.display())),
    })?;
    cloud
        .validate()
        .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))?;
    Ok(cloud)
}

pub fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    match path {
        Some(p) => crate::docs::read_document(p),
        None => Ok(PipelineConfig::default()),
    }
}

pub fn build_grid(map: &PointCloud, config: &PipelineConfig) -> Result<OccupancyGrid, CliError> {
    Ok(config.planner.build_grid(map)?)
}

/// Registers `scan` into `map`; unaccepted results are still returned so
/// that the cost table can be inspected.
pub fn run_align(map: &PointCloud, scan: &PointCloud, config: &PipelineConfig) -> Result<AlignmentDocument, CliError> {
    let result = align(map, scan, &config.alignment)?;
    Ok(AlignmentDocument {
        format_version: FORMAT_VERSION,
        result,
    })
}

/// Technique validation; a rejected request becomes [`CliError::Rejected`].
pub fn check_mission(req: &MissionRequest, config: &PipelineConfig) -> Result<ValidationReport, CliError> {
    let report = validate_mission(req, &config.planner.validation)?;
    if report.accepted {
        Ok(report)
    } else {
        Err(CliError::Rejected(report))
    }
}

pub fn run_plan(
    req: &MissionRequest,
    grid: &OccupancyGrid,
    config: &PipelineConfig,
) -> Result<MissionPlanSet, CliError> {
    check_mission(req, config)?;
    let set = plan_mission(req, grid, &config.planner)?;
    let violations = audit_plan_set(&set, grid, config.audit_step);
    if !violations.is_empty() {
        return Err(CliError::Collision(violations.iter().map(describe_segment).collect()));
    }
    Ok(set)
}

pub fn describe_segment(v: &SegmentViolation) -> String {
    format!("plan {} segment {}: {:?} -> {:?}", v.plan, v.segment, v.from, v.to)
}

/// Leader trajectories, one group per flight.
pub fn run_trajectories(
    set: &MissionPlanSet,
    grid: &OccupancyGrid,
    config: &PipelineConfig,
) -> Result<TrajectorySet, CliError> {
    let mut entries = Vec::with_capacity(set.plans.len());
    for (i, plan) in set.plans.iter().enumerate() {
        let reference = plan_reference(plan, set.cruise_speed, config.dt)?;
        let out = smooth_track_clear(&reference, &config.constraints, &config.smoothing, grid)?;
        if !trajectory_is_clear(&out.trajectory, grid, config.audit_step) {
            return Err(CliError::Collision(vec![format!(
                "flight {i}: trajectory enters the inflated map"
            )]));
        }
        entries.push(TrajectoryEntry {
            robot: 0,
            flight: i,
            group: i,
            role: Role::Leader,
            trajectory: out.trajectory,
        });
    }
    Ok(TrajectorySet {
        format_version: FORMAT_VERSION,
        dt: config.dt,
        entries,
    })
}

/// Adds a grid-routed lighting follower to every leader flight and
/// de-conflicts it.
pub fn run_formation(
    set: &MissionPlanSet,
    leaders: &TrajectorySet,
    grid: &OccupancyGrid,
    config: &PipelineConfig,
) -> Result<(TrajectorySet, FormationDocument), CliError> {
    let mut entries = Vec::new();
    let mut flights = Vec::new();
    for leader in leaders.leaders() {
        let plan = set
            .plans
            .get(leader.flight)
            .ok_or_else(|| CliError::Format(format!("trajectory flight {} not in plan set", leader.flight)))?;
        let follower = plan_follower(
            &leader.trajectory,
            plan,
            &config.lighting,
            &config.separation,
            &config.constraints,
            grid,
        )?;
        let lead = follower.leader.clone();
        let (oois, _) = targets_along(&lead, plan)?;
        let pair = [lead.clone(), follower.trajectory.clone()];
        // Lit windows keep their timestamps when the follower has slack;
        // otherwise plain hovers restore separation at the cost of lighting.
        let sep = match enforce_separation_anchored(
            &pair,
            &config.separation,
            &[Vec::new(), follower.formation_required.clone()],
        ) {
            Err(FormationError::Unresolvable { .. }) => enforce_separation(&pair, &config.separation)?,
            other => other?,
        };
        let adjusted = sep.trajectories[1].clone();
        let mut max_angle_error: f64 = 0.0;
        for (k, s) in adjusted.samples.iter().enumerate().take(lead.len()) {
            if !follower.formation_required[k] {
                continue;
            }
            let a: Vector3 = oois[k] - lead.samples[k].position();
            let b: Vector3 = oois[k] - s.position();
            max_angle_error = max_angle_error.max((a.angle(&b) - config.lighting.light_angle).abs());
        }
        let occupied_samples = adjusted
            .samples
            .iter()
            .filter(|s| grid.is_occupied_at(&s.position()))
            .count();
        flights.push(FormationFlight {
            flight: leader.flight,
            infeasible_samples: follower.infeasible.len(),
            leader_waits: follower.leader_waits.clone(),
            initial_violations: sep.violations.len(),
            hovers: sep.hovers.iter().map(|&(_, at, n)| (at, n)).collect(),
            max_angle_error,
            max_speed: audit_dynamics(&adjusted).max_speed,
            occupied_samples,
            light_directions: light_direction_log(&lead, &adjusted, &oois)
                .into_iter()
                .filter(|l| follower.formation_required.get((l.t / lead.dt).round() as usize) == Some(&true))
                .collect(),
        });
        entries.push(TrajectoryEntry {
            trajectory: lead,
            ..leader.clone()
        });
        entries.push(TrajectoryEntry {
            robot: 1,
            flight: leader.flight,
            group: leader.group,
            role: Role::Follower,
            trajectory: adjusted,
        });
    }
    Ok((
        TrajectorySet {
            format_version: FORMAT_VERSION,
            dt: leaders.dt,
            entries,
        },
        FormationDocument {
            format_version: FORMAT_VERSION,
            lighting: config.lighting,
            separation: config.separation,
            flights,
        },
    ))
}

/// Separation violations left in the planned trajectories, per group.
pub fn unresolved_separation(set: &TrajectorySet, config: &PipelineConfig) -> Vec<String> {
    let mut groups: Vec<usize> = set.entries.iter().map(|e| e.group).collect();
    groups.sort_unstable();
    groups.dedup();
    let mut out = Vec::new();
    for g in groups {
        let members: Vec<&TrajectoryEntry> = set.entries.iter().filter(|e| e.group == g).collect();
        if members.len() < 2 {
            continue;
        }
        let trajs: Vec<_> = members.iter().map(|e| e.trajectory.clone()).collect();
        for v in separation_violations(&trajs, &config.separation) {
            out.push(format!(
                "group {g}: robots {} and {} at t = {:.2} s ({:?}, {:.3} m)",
                members[v.a].robot, members[v.b].robot, v.t, v.kind, v.distance
            ));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationOutput {
    pub document: SimulationDocument,
    pub logs: Vec<FlightLog>,
}

pub fn log_name(robot: usize, flight: usize) -> String {
    format!("log_r{robot}_f{flight}.csv")
}

pub fn run_simulation(
    set: &TrajectorySet,
    env: &Environment,
    config: &PipelineConfig,
    seed: u64,
    t_max: f64,
) -> Result<SimulationOutput, CliError> {
    let runs: Vec<SimRun> = set
        .entries
        .iter()
        .map(|e| SimRun {
            robot: e.robot,
            flight: e.flight,
            group: e.group,
            model: match e.role {
                Role::Leader => RobotModel::primary(),
                Role::Follower => RobotModel::secondary(),
            },
            trajectory: match e.role {
                Role::Leader => e.trajectory.clone(),
                // The follower's flags mark when its light is on; only the
                // leader captures images.
                Role::Follower => {
                    let mut t = e.trajectory.clone();
                    t.samples.iter_mut().for_each(|s| s.acquire = false);
                    t
                }
            },
            initial_position: None,
        })
        .collect();
    let sim = SimConfig { seed, ..config.sim };
    let logs = simulate(&runs, env, &sim)?;
    let rules = SupervisorRules {
        t_max,
        ..config.supervisor
    };
    let flights = logs
        .iter()
        .map(|l| FlightSummary {
            robot: l.robot,
            flight: l.flight,
            group: l.group,
            duration: l.duration(),
            distance: l.distance(),
            acquisitions: l.acquisitions.len(),
            missed_acquisitions: l.missed_acquisitions.len(),
            collisions: l.collisions.len(),
            log: log_name(l.robot, l.flight),
        })
        .collect();
    let document = SimulationDocument {
        format_version: FORMAT_VERSION,
        seed,
        metrics: metrics(&logs),
        mean_acquisition_error: mean_acquisition_error(&logs),
        supervisor: supervisor_check(&logs, &rules),
        flights,
    };
    Ok(SimulationOutput { document, logs })
}

/// Collision events of a simulation, one line each.
pub fn simulated_collisions(logs: &[FlightLog]) -> Vec<String> {
    logs.iter()
        .flat_map(|l| {
            l.collisions.iter().map(move |c| {
                format!(
                    "robot {} flight {}: t = {:.2} s, obstacle distance {:.3} m",
                    l.robot, l.flight, c.t, c.obstacle_distance
                )
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryViolation {
    pub robot: usize,
    pub flight: usize,
}

/// Output of `validate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateDocument {
    pub format_version: u32,
    pub report: ValidationReport,
    pub segment_violations: Vec<SegmentViolation>,
    pub trajectory_violations: Vec<TrajectoryViolation>,
}

impl ValidateDocument {
    pub fn passed(&self) -> bool {
        self.report.accepted && self.segment_violations.is_empty() && self.trajectory_violations.is_empty()
    }

    /// The error matching the first failed stage, with every finding listed.
    pub fn error(&self) -> Option<CliError> {
        if !self.report.accepted {
            return Some(CliError::Rejected(self.report.clone()));
        }
        let mut lines: Vec<String> = self.segment_violations.iter().map(describe_segment).collect();
        lines.extend(self.trajectory_violations.iter().map(|t| {
            format!(
                "robot {} flight {}: trajectory enters the inflated map",
                t.robot, t.flight
            )
        }));
        (!lines.is_empty()).then_some(CliError::Collision(lines))
    }
}

/// Mission checks plus the brute-force clearance audit of the plan set and
/// trajectories, when given.
pub fn run_validate(
    req: &MissionRequest,
    plans: Option<&MissionPlanSet>,
    trajectories: Option<&TrajectorySet>,
    grid: &OccupancyGrid,
    config: &PipelineConfig,
) -> Result<ValidateDocument, CliError> {
    let report = validate_mission(req, &config.planner.validation)?;
    let segment_violations = plans.map_or_else(Vec::new, |p| audit_plan_set(p, grid, config.audit_step));
    let trajectory_violations = trajectories.map_or_else(Vec::new, |t| {
        t.entries
            .iter()
            .filter(|e| !trajectory_is_clear(&e.trajectory, grid, config.audit_step))
            .map(|e| TrajectoryViolation {
                robot: e.robot,
                flight: e.flight,
            })
            .collect()
    });
    Ok(ValidateDocument {
        format_version: FORMAT_VERSION,
        report,
        segment_violations,
        trajectory_violations,
    })
}
