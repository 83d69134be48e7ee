//! Documentation-technique catalog and mission-request validation.
//!
//! The catalog records, for every technique, which team sizes can realize
//! it, what equipment the aerial carrier must hold, the ambient-light
//! condition and the typical exposure time. Validation checks a
//! [`MissionRequest`] against these constraints viewpoint by viewpoint and
//! reports every problem it finds instead of stopping at the first one.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Point3, Pose};
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MissionError {
    #[error("invalid mission request: {0}")]
    Parameter(String),
    #[error("unknown technique `{0}`")]
    UnknownTechnique(String),
    #[error("unsupported format_version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("malformed mission document: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TechniqueId {
    /// Visible-spectrum photography.
    Vis,
    /// Visible transmitography.
    Vistr,
    /// Raking light.
    Rak,
    /// Three-point lighting.
    Tpl,
    /// Reflectance transformation imaging.
    Rti,
    /// Visible light-induced luminescence.
    Vivl,
    /// Ultraviolet reflectography.
    Uvr,
    /// Ultraviolet fluorescent photography.
    Uvf,
    /// Ultraviolet false-color reflectography.
    Uvrfc,
    /// Infrared reflectography.
    Irr,
    /// Infrared transmitography.
    Irrtr,
    /// Infrared fluorescent photography.
    Irf,
    /// Infrared false-color reflectography.
    Irrfc,
    Radiography,
    #[serde(rename = "RECON3D")]
    Recon3d,
    Photogrammetry,
    /// Environmental monitoring with carried sensors.
    Envmon,
}

impl TechniqueId {
    pub const ALL: [TechniqueId; 17] = [
        TechniqueId::Vis,
        TechniqueId::Vistr,
        TechniqueId::Rak,
        TechniqueId::Tpl,
        TechniqueId::Rti,
        TechniqueId::Vivl,
        TechniqueId::Uvr,
        TechniqueId::Uvf,
        TechniqueId::Uvrfc,
        TechniqueId::Irr,
        TechniqueId::Irrtr,
        TechniqueId::Irf,
        TechniqueId::Irrfc,
        TechniqueId::Radiography,
        TechniqueId::Recon3d,
        TechniqueId::Photogrammetry,
        TechniqueId::Envmon,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TechniqueId::Vis => "VIS",
            TechniqueId::Vistr => "VISTR",
            TechniqueId::Rak => "RAK",
            TechniqueId::Tpl => "TPL",
            TechniqueId::Rti => "RTI",
            TechniqueId::Vivl => "VIVL",
            TechniqueId::Uvr => "UVR",
            TechniqueId::Uvf => "UVF",
            TechniqueId::Uvrfc => "UVRFC",
            TechniqueId::Irr => "IRR",
            TechniqueId::Irrtr => "IRRTR",
            TechniqueId::Irf => "IRF",
            TechniqueId::Irrfc => "IRRFC",
            TechniqueId::Radiography => "RADIOGRAPHY",
            TechniqueId::Recon3d => "RECON3D",
            TechniqueId::Photogrammetry => "PHOTOGRAMMETRY",
            TechniqueId::Envmon => "ENVMON",
        }
    }

    pub fn spec(self) -> TechniqueSpec {
        catalog_row(self)
    }
}

impl fmt::Display for TechniqueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TechniqueId {
    type Err = MissionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TechniqueId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| MissionError::UnknownTechnique(s.to_string()))
    }
}

/// Whether a team configuration can realize a technique.
///
/// `Applied` marks configurations that have actually been flown in the
/// field, as opposed to ones that are merely considered feasible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Realizability {
    No,
    Yes,
    Applied,
}

impl Realizability {
    pub fn realizable(self) -> bool {
        !matches!(self, Realizability::No)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmbientLight {
    Required,
    Forbidden,
    Arbitrary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spectrum {
    Visible,
    Ultraviolet,
    Infrared,
    XRay,
    /// Non-spectral tasks (3D reconstruction, monitoring).
    None,
}

/// How the tabulated exposure relates to the true one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExposureBound {
    AtMost,
    Typical,
    AtLeast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Exposure {
    pub seconds: f64,
    pub bound: ExposureBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TechniqueSpec {
    pub id: TechniqueId,
    pub name: String,
    pub spectrum: Spectrum,
    pub single_robot: Realizability,
    pub multi_robot: Realizability,
    pub needs_onboard_camera: bool,
    pub needs_onboard_light: bool,
    pub ambient_light: AmbientLight,
    /// Typical exposure; `None` for techniques without a tabulated value.
    pub exposure: Option<Exposure>,
}

impl TechniqueSpec {
    pub fn exposure_s(&self) -> Option<f64> {
        self.exposure.map(|e| e.seconds)
    }

    /// True if some team configuration was flown in the field.
    pub fn field_applied(&self) -> bool {
        self.single_robot == Realizability::Applied || self.multi_robot == Realizability::Applied
    }
}

fn catalog_row(id: TechniqueId) -> TechniqueSpec {
    use AmbientLight::{Arbitrary, Forbidden, Required};
    use ExposureBound::{AtLeast, AtMost, Typical};
    use Realizability::{Applied as A, No as N, Yes as Y};
    use Spectrum::{Infrared as Ir, None as Non, Ultraviolet as Uv, Visible as Vi, XRay as Xr};

    // (name, spectrum, single, multi, camera, light, ambient, exposure)
    let (name, spectrum, single, multi, cam, light, ambient, exposure) = match id {
        TechniqueId::Vis => ("photography", Vi, A, N, true, true, Required, Some((0.2, AtMost))),
        TechniqueId::Vistr => ("transmitography", Vi, N, Y, true, true, Arbitrary, Some((2.0, Typical))),
        TechniqueId::Rak => ("raking light", Vi, A, Y, true, true, Arbitrary, Some((0.2, AtMost))),
        TechniqueId::Tpl => (
            "three point lighting",
            Vi,
            N,
            A,
            true,
            true,
            Arbitrary,
            Some((0.2, AtMost)),
        ),
        TechniqueId::Rti => (
            "reflectance transformation imaging",
            Vi,
            A,
            A,
            true,
            true,
            Forbidden,
            Some((0.2, AtMost)),
        ),
        TechniqueId::Vivl => (
            "light-induced luminescence",
            Vi,
            Y,
            N,
            false,
            true,
            Arbitrary,
            Some((25.0, Typical)),
        ),
        TechniqueId::Uvr => ("reflectography", Uv, A, N, false, true, Forbidden, Some((2.0, Typical))),
        TechniqueId::Uvf => (
            "fluorescent photography",
            Uv,
            A,
            Y,
            true,
            true,
            Arbitrary,
            Some((2.0, AtMost)),
        ),
        TechniqueId::Uvrfc => ("false-color reflectography", Uv, Y, N, false, true, Forbidden, None),
        TechniqueId::Irr => ("reflectography", Ir, A, N, false, true, Forbidden, Some((4.0, Typical))),
        TechniqueId::Irrtr => (
            "transmitography",
            Ir,
            Y,
            N,
            false,
            true,
            Forbidden,
            Some((20.0, Typical)),
        ),
        TechniqueId::Irf => (
            "fluorescent photography",
            Ir,
            A,
            Y,
            true,
            true,
            Arbitrary,
            Some((30.0, Typical)),
        ),
        TechniqueId::Irrfc => ("false-color reflectography", Ir, Y, N, false, true, Forbidden, None),
        TechniqueId::Radiography => ("radiography", Xr, N, Y, false, false, Arbitrary, Some((30.0, AtLeast))),
        TechniqueId::Recon3d => ("3D reconstruction", Non, A, Y, true, false, Arbitrary, None),
        TechniqueId::Photogrammetry => ("photogrammetry", Non, Y, Y, true, false, Required, None),
        TechniqueId::Envmon => ("environmental monitoring", Non, Y, Y, false, false, Arbitrary, None),
    };
    TechniqueSpec {
        id,
        name: name.to_string(),
        spectrum,
        single_robot: single,
        multi_robot: multi,
        needs_onboard_camera: cam,
        needs_onboard_light: light,
        ambient_light: ambient,
        exposure: exposure.map(|(seconds, bound)| Exposure { seconds, bound }),
    }
}

/// The full technique catalog in a fixed order.
pub fn technique_catalog() -> Vec<TechniqueSpec> {
    TechniqueId::ALL.into_iter().map(catalog_row).collect()
}

/// Thresholds used by [`validate_mission`] and [`dwell_time`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationConfig {
    /// Ambient illuminance (lux) below which a scene counts as dark.
    pub darkness_lux: f64,
    /// Longest exposure (s) that a hovering camera carrier can hold sharp.
    pub carrier_exposure_limit: f64,
    /// Hover time added around every exposure (s).
    pub settle_margin: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            darkness_lux: 10.0,
            carrier_exposure_limit: 2.0,
            settle_margin: 1.0,
        }
    }
}

/// Hover time at an acquisition: exposure plus settle margin.
///
/// Techniques without a tabulated exposure hover for the margin alone.
pub fn dwell_time(technique: TechniqueId, config: &ValidationConfig) -> f64 {
    technique.spec().exposure_s().unwrap_or(0.0) + config.settle_margin
}

/// Same as [`dwell_time`] for a technique given by name.
pub fn dwell_time_by_name(name: &str, config: &ValidationConfig) -> Result<f64, MissionError> {
    Ok(dwell_time(name.parse()?, config))
}

/// Where the imaging sensor sits during an acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureMode {
    /// The camera is carried by the aerial vehicle.
    #[default]
    OnboardCamera,
    /// The camera stands on a tripod; vehicles carry lights only.
    StaticCamera,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Viewpoint {
    pub camera_pose: Pose,
    pub ooi_point: [f64; 3],
    pub technique: TechniqueId,
    pub acquire: bool,
    #[serde(default)]
    pub capture: CaptureMode,
}

impl Viewpoint {
    pub fn ooi(&self) -> Point3 {
        Point3::from(self.ooi_point)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MissionRequest {
    pub format_version: u32,
    /// Takeoff and landing pose shared by every flight.
    pub takeoff: Pose,
    pub viewpoints: Vec<Viewpoint>,
    pub team_size: u32,
    pub ambient_lux: f64,
    /// Maximum flight time of one vehicle (s).
    pub t_max: f64,
    /// Transit speed (m/s).
    pub cruise_speed: f64,
}

impl MissionRequest {
    pub fn from_json(text: &str) -> Result<Self, MissionError> {
        let req: MissionRequest = serde_json::from_str(text).map_err(|e| MissionError::Json(e.to_string()))?;
        if req.format_version != FORMAT_VERSION {
            return Err(MissionError::Version {
                found: req.format_version,
                expected: FORMAT_VERSION,
            });
        }
        Ok(req)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mission request serializes")
    }

    /// Structural checks that do not depend on the catalog.
    pub fn check(&self) -> Result<(), MissionError> {
        let bad = |m: &str| Err(MissionError::Parameter(m.to_string()));
        if self.viewpoints.is_empty() {
            return bad("no viewpoints");
        }
        if self.team_size == 0 {
            return bad("team_size must be at least 1");
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad("t_max must be positive");
        }
        if !(self.cruise_speed > 0.0 && self.cruise_speed.is_finite()) {
            return bad("cruise_speed must be positive");
        }
        if !(self.ambient_lux >= 0.0 && self.ambient_lux.is_finite()) {
            return bad("ambient_lux must be non-negative");
        }
        if !self.takeoff.is_finite() {
            return bad("takeoff pose is not finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    /// Non-finite pose, or the camera sits on its own target.
    InvalidViewpoint,
    /// Needs several vehicles but the team has one.
    MultiRobotOnly,
    /// Not realizable by aerial vehicles at all.
    NotRealizable,
    AmbientForbidden,
    AmbientRequired,
    /// Exposure too long for a hovering camera carrier.
    ExposureTooLong,
    /// Technique images with a static camera only.
    NoOnboardCamera,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub viewpoint: usize,
    pub technique: TechniqueId,
    pub kind: IssueKind,
    pub message: String,
    /// Suggested fix, if one exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub format_version: u32,
    pub accepted: bool,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn has(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }
}

/// Checks every acquiring viewpoint against the technique catalog.
///
/// Viewpoints with `acquire == false` are transit waypoints and only get
/// the geometric sanity check.
pub fn validate_mission(req: &MissionRequest, config: &ValidationConfig) -> Result<ValidationReport, MissionError> {
    req.check()?;
    let mut issues = Vec::new();
    for (i, vp) in req.viewpoints.iter().enumerate() {
        let spec = vp.technique.spec();
        let mut push = |kind, message: String, suggestion: Option<&str>| {
            issues.push(ValidationIssue {
                viewpoint: i,
                technique: vp.technique,
                kind,
                message,
                suggestion: suggestion.map(str::to_string),
            })
        };

        let finite = vp.camera_pose.is_finite() && vp.ooi_point.iter().all(|c| c.is_finite());
        if !finite {
            push(IssueKind::InvalidViewpoint, "non-finite pose or target".into(), None);
            continue;
        }
        if !vp.acquire {
            continue;
        }
        if vp.camera_pose.point() == vp.ooi() {
            push(
                IssueKind::InvalidViewpoint,
                "camera coincides with its target".into(),
                None,
            );
        }

        match (spec.single_robot.realizable(), spec.multi_robot.realizable()) {
            (false, false) => push(IssueKind::NotRealizable, format!("{} is not realizable", spec.id), None),
            (false, true) if req.team_size < 2 => push(
                IssueKind::MultiRobotOnly,
                format!("{} needs multiple robots, team has {}", spec.id, req.team_size),
                Some("increase team_size to at least 2"),
            ),
            _ => {}
        }

        match spec.ambient_light {
            AmbientLight::Forbidden if req.ambient_lux >= config.darkness_lux => push(
                IssueKind::AmbientForbidden,
                format!(
                    "{}: ambient light forbidden ({} lux, darkness below {} lux)",
                    spec.id, req.ambient_lux, config.darkness_lux
                ),
                Some("schedule the acquisition in darkness"),
            ),
            AmbientLight::Required if req.ambient_lux < config.darkness_lux => push(
                IssueKind::AmbientRequired,
                format!("{}: ambient light required ({} lux)", spec.id, req.ambient_lux),
                None,
            ),
            _ => {}
        }

        if vp.capture == CaptureMode::OnboardCamera {
            if !spec.needs_onboard_camera {
                push(
                    IssueKind::NoOnboardCamera,
                    format!("{} is imaged by a static camera", spec.id),
                    Some("use capture mode static_camera"),
                );
            } else if let Some(t) = spec.exposure_s().filter(|&t| t > config.carrier_exposure_limit) {
                push(
                    IssueKind::ExposureTooLong,
                    format!(
                        "{}: exposure {} s exceeds the {} s camera-carrier limit",
                        spec.id, t, config.carrier_exposure_limit
                    ),
                    Some("use capture mode static_camera with onboard lighting"),
                );
            }
        }
    }
    Ok(ValidationReport {
        format_version: FORMAT_VERSION,
        accepted: issues.is_empty(),
        issues,
    })
}
