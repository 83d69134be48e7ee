//! Error classes and the exit-code table.
//!
//! Every failure the CLI can report belongs to exactly one [`ErrorClass`],
//! and every class has its own process exit code:
//!
//! | code | class        | meaning                                                       |
//! |------|--------------|---------------------------------------------------------------|
//! | 0    | —            | success                                                       |
//! | 2    | `usage`      | unknown subcommand or flag, missing or contradictory argument |
//! | 3    | `io`         | a file could not be read or written                           |
//! | 4    | `format`     | malformed JSON, PLY or config; schema violation               |
//! | 5    | `version`    | document `format_version` differs from the supported one      |
//! | 6    | `rejected`   | mission request failed technique validation                   |
//! | 7    | `collision`  | a plan, trajectory or simulated flight clips the map          |
//! | 8    | `alignment`  | registration failed or was not accepted                       |
//! | 9    | `planning`   | no feasible plan (blocked endpoint, unreachable, budget)      |
//! | 10   | `trajectory` | trajectory generation or smoothing failed                     |
//! | 11   | `formation`  | follower generation failed or separation is unresolvable      |
//! | 12   | `simulation` | invalid simulation input                                      |
//! | 13   | `service`    | the project service could not start                           |

use std::path::PathBuf;

use nave_core::alignment::AlignError;
use nave_core::formation::FormationError;
use nave_core::geom::ply::PlyError;
use nave_core::mission::{MissionError, ValidationReport};
use nave_core::planner::PlanError;
use nave_core::sim::SimError;
use nave_core::trajectory::TrajectoryError;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    Usage,
    Io,
    Format,
    Version,
    Rejected,
    Collision,
    Alignment,
    Planning,
    Trajectory,
    Formation,
    Simulation,
    Service,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 12] = [
        ErrorClass::Usage,
        ErrorClass::Io,
        ErrorClass::Format,
        ErrorClass::Version,
        ErrorClass::Rejected,
        ErrorClass::Collision,
        ErrorClass::Alignment,
        ErrorClass::Planning,
        ErrorClass::Trajectory,
        ErrorClass::Formation,
        ErrorClass::Simulation,
        ErrorClass::Service,
    ];

    pub fn exit_code(self) -> u8 {
        match self {
            ErrorClass::Usage => 2,
            ErrorClass::Io => 3,
            ErrorClass::Format => 4,
            ErrorClass::Version => 5,
            ErrorClass::Rejected => 6,
            ErrorClass::Collision => 7,
            ErrorClass::Alignment => 8,
            ErrorClass::Planning => 9,
            ErrorClass::Trajectory => 10,
            ErrorClass::Formation => 11,
            ErrorClass::Simulation => 12,
            ErrorClass::Service => 13,
        }
    }

    pub fn from_exit_code(code: u8) -> Option<ErrorClass> {
        Self::ALL.into_iter().find(|c| c.exit_code() == code)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorClass::Usage => "usage",
            ErrorClass::Io => "io",
            ErrorClass::Format => "format",
            ErrorClass::Version => "version",
            ErrorClass::Rejected => "rejected",
            ErrorClass::Collision => "collision",
            ErrorClass::Alignment => "alignment",
            ErrorClass::Planning => "planning",
            ErrorClass::Trajectory => "trajectory",
            ErrorClass::Formation => "formation",
            ErrorClass::Simulation => "simulation",
            ErrorClass::Service => "service",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Format(String),
    #[error("unsupported format_version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("mission rejected: {}", summarize(.0))]
    Rejected(ValidationReport),
    #[error("{} collision(s):\n{}", .0.len(), .0.join("\n"))]
    Collision(Vec<String>),
    #[error(transparent)]
    Alignment(#[from] AlignError),
    #[error("alignment not accepted: cost {cost:.4} m², overlap {overlap:.3}")]
    AlignmentRejected { cost: f64, overlap: f64 },
    #[error(transparent)]
    Planning(PlanError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Formation(#[from] FormationError),
    #[error("{0}")]
    UnresolvedSeparation(String),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error("{0}")]
    Service(String),
}

fn summarize(report: &ValidationReport) -> String {
    report
        .issues
        .iter()
        .map(|i| format!("viewpoint {}: {}", i.viewpoint, i.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl CliError {
    pub fn class(&self) -> ErrorClass {
        match self {
            CliError::Usage(_) => ErrorClass::Usage,
            CliError::Io { .. } => ErrorClass::Io,
            CliError::Format(_) => ErrorClass::Format,
            CliError::Version { .. } => ErrorClass::Version,
            CliError::Rejected(_) => ErrorClass::Rejected,
            CliError::Collision(_) => ErrorClass::Collision,
            CliError::Alignment(_) | CliError::AlignmentRejected { .. } => ErrorClass::Alignment,
            CliError::Planning(_) => ErrorClass::Planning,
            CliError::Trajectory(_) => ErrorClass::Trajectory,
            CliError::Formation(_) | CliError::UnresolvedSeparation(_) => ErrorClass::Formation,
            CliError::Simulation(_) => ErrorClass::Simulation,
            CliError::Service(_) => ErrorClass::Service,
        }
    }

    pub fn exit_code(&self) -> u8 {
        self.class().exit_code()
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<MissionError> for CliError {
    fn from(e: MissionError) -> Self {
        match e {
            MissionError::Version { found, expected } => CliError::Version { found, expected },
            other => CliError::Format(other.to_string()),
        }
    }
}

impl From<PlanError> for CliError {
    fn from(e: PlanError) -> Self {
        match e {
            PlanError::Mission(m) => m.into(),
            other => CliError::Planning(other),
        }
    }
}

impl From<PlyError> for CliError {
    fn from(e: PlyError) -> Self {
        CliError::Format(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Format(e.to_string())
    }
}
