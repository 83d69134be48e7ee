//! Versioned JSON documents exchanged by the CLI and the service.
//!
//! Each document carries `format_version`; readers reject any other
//! version. The schemas live in `docs/schemas/`.

use std::path::Path;

use nave_core::alignment::{AlignmentConfig, AlignmentResult};
use nave_core::formation::{LightDirection, LightingSpec, SeparationSpec};
use nave_core::planner::PlannerConfig;
use nave_core::sim::{MissionMetrics, SimConfig, SupervisorAction, SupervisorRules};
use nave_core::trajectory::{DynamicConstraints, SmoothingParams, Trajectory};
use nave_core::FORMAT_VERSION;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Pipeline settings; every field is optional in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub format_version: u32,
    pub alignment: AlignmentConfig,
    pub planner: PlannerConfig,
    /// Trajectory sampling period (s).
    pub dt: f64,
    pub constraints: DynamicConstraints,
    pub smoothing: SmoothingParams,
    pub lighting: LightingSpec,
    pub separation: SeparationSpec,
    pub sim: SimConfig,
    pub supervisor: SupervisorRules,
    /// Sampling step of the brute-force clearance audit (m).
    pub audit_step: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            format_version: FORMAT_VERSION,
            alignment: AlignmentConfig::default(),
            planner: PlannerConfig::default(),
            dt: 0.2,
            constraints: DynamicConstraints::default(),
            smoothing: SmoothingParams::default(),
            lighting: LightingSpec::default(),
            separation: SeparationSpec::default(),
            sim: SimConfig::default(),
            supervisor: SupervisorRules::default(),
            audit_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentDocument {
    pub format_version: u32,
    #[serde(flatten)]
    pub result: AlignmentResult,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Carries the documentation camera and flies the plan.
    Leader,
    /// Carries the light and follows the leader.
    Follower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub robot: usize,
    /// Index of the plan in the plan set.
    pub flight: usize,
    /// Entries with the same group fly simultaneously.
    pub group: usize,
    pub role: Role,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub format_version: u32,
    pub dt: f64,
    pub entries: Vec<TrajectoryEntry>,
}

impl TrajectorySet {
    pub fn leaders(&self) -> impl Iterator<Item = &TrajectoryEntry> {
        self.entries.iter().filter(|e| e.role == Role::Leader)
    }

    /// All entries as one CSV with a leading `robot,flight` column pair.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("robot,flight,t,x,y,z,heading,vx,vy,vz,acquire\n");
        for e in &self.entries {
            for line in e.trajectory.to_csv().lines().skip(1) {
                out.push_str(&format!("{},{},{line}\n", e.robot, e.flight));
            }
        }
        out
    }
}

/// Result of the formation stage for one flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationFlight {
    pub flight: usize,
    /// Leader samples without a usable lighting position.
    pub infeasible_samples: usize,
    /// Hovers the leader makes so the follower can reach its next stop, as
    /// (sample of the input trajectory, count).
    pub leader_waits: Vec<(usize, usize)>,
    /// Separation violations before adjustment.
    pub initial_violations: usize,
    /// Inserted hovers as (sample, count).
    pub hovers: Vec<(usize, usize)>,
    /// Largest lighting-angle error at enforced samples (rad).
    pub max_angle_error: f64,
    /// Largest follower speed (m/s), by finite differences.
    pub max_speed: f64,
    /// Follower samples inside the inflated map.
    pub occupied_samples: usize,
    /// Target-to-light unit vectors at the start of every lit window.
    pub light_directions: Vec<LightDirection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationDocument {
    pub format_version: u32,
    pub lighting: LightingSpec,
    pub separation: SeparationSpec,
    pub flights: Vec<FormationFlight>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightSummary {
    pub robot: usize,
    pub flight: usize,
    pub group: usize,
    pub duration: f64,
    pub distance: f64,
    pub acquisitions: usize,
    pub missed_acquisitions: usize,
    pub collisions: usize,
    /// Name of the CSV log relative to the output directory.
    pub log: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDocument {
    pub format_version: u32,
    pub seed: u64,
    pub metrics: MissionMetrics,
    /// Mean position error over all acquisitions (m).
    pub mean_acquisition_error: Option<f64>,
    pub supervisor: SupervisorAction,
    pub flights: Vec<FlightSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapDocument {
    pub format_version: u32,
    pub leaf: f64,
    pub count: usize,
    pub points: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorDocument {
    pub format_version: u32,
    pub class: String,
    pub error: String,
}

impl ErrorDocument {
    pub fn new(class: &str, error: impl std::fmt::Display) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            class: class.into(),
            error: error.to_string(),
        }
    }
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<u32>,
}

/// Parses a versioned document, checking the version before the shape so
/// that a newer document reports a version error rather than a schema one.
pub fn parse_versioned<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let probe: VersionProbe = serde_json::from_str(text)?;
    match probe.format_version {
        Some(FORMAT_VERSION) => Ok(serde_json::from_str(text)?),
        Some(found) => Err(CliError::Version {
            found,
            expected: FORMAT_VERSION,
        }),
        None => Err(CliError::Format("missing format_version".into())),
    }
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn read_document<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    parse_versioned(&read_text(path)?).map_err(|e| match e {
        CliError::Format(m) => CliError::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialize");
    s.push('\n');
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn write_document<T: Serialize>(path: &Path, doc: &T) -> Result<(), CliError> {
    write_text(path, &to_json(doc))
}
