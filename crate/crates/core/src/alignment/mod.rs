//! Registration of a robot's first LiDAR scan to the prior global map.
//!
//! The pipeline runs four phases:
//!
//! 1. **Preprocessing**: voxel downsampling of map and scan, radius outlier
//!    filtering of the scan.
//! 2. **Global correlation**: a coarse transform from convex-hull polyline
//!    barycenters (x, y), the lowest points of both clouds (z) and the
//!    difference of the principal headings (yaw).
//! 3. **Global registration**: loose ICP from `k` evenly spaced extra yaw
//!    rotations; the rotation with the lowest final cost wins. This resolves
//!    the heading sign ambiguity and laterally symmetric floor plans.
//! 4. **Fine tuning**: strict ICP continuing from the loose-ICP estimate of
//!    the winning initialization.

mod icp;

pub use icp::{icp, IcpOutcome, IcpParams, IcpTarget};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    convex_hull, principal_heading, radius_outlier_filter, voxel_downsample, GeomError, HullEdgeSet, Point3,
    PointCloud, RigidTransform, Vector3,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Preprocessing,
    GlobalCorrelation,
    GlobalRegistration,
    FineTuning,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Phase::Preprocessing => "preprocessing",
            Phase::GlobalCorrelation => "global correlation",
            Phase::GlobalRegistration => "global registration",
            Phase::FineTuning => "fine tuning",
        })
    }
}

#[derive(Debug, Error)]
pub enum AlignError {
    #[error("invalid alignment configuration: {0}")]
    Config(String),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("degenerate hull edge set: total edge length is zero")]
    DegenerateEdges,
    #[error(transparent)]
    Geometry(#[from] GeomError),
    #[error("registration failed: no initialization overlapped the map")]
    RegistrationFailure,
    #[error("{phase} failed: {source}")]
    Phase {
        phase: Phase,
        #[source]
        source: Box<AlignError>,
    },
}

impl AlignError {
    fn in_phase(self, phase: Phase) -> Self {
        match self {
            e @ AlignError::Phase { .. } => e,
            e => AlignError::Phase {
                phase,
                source: Box::new(e),
            },
        }
    }

    /// The phase that failed, if known.
    pub fn phase(&self) -> Option<Phase> {
        match self {
            AlignError::Phase { phase, .. } => Some(*phase),
            _ => None,
        }
    }
}

/// Point about which the correlation and registration yaw rotations act.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RotationPivot {
    /// The scan's hull barycenter; keeps the barycenters matched for any yaw.
    #[default]
    Barycenter,
    /// The scan frame origin (the sensor position).
    ScanOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignmentConfig {
    pub leaf_map: f64,
    pub leaf_scan: f64,
    pub outlier_radius: f64,
    pub outlier_min_neighbors: usize,
    /// Number of yaw initializations tried during global registration.
    pub k: usize,
    pub loose_icp: IcpParams,
    pub strict_icp: IcpParams,
    pub pivot: RotationPivot,
    /// Hull facets meeting at less than this dihedral angle (rad) are merged
    /// before the barycenter is taken; noise on flat walls otherwise
    /// triangulates into thousands of spurious edges.
    pub hull_merge_angle: f64,
    /// Loose ICP runs on an evenly strided subset of at most this many scan
    /// points.
    pub loose_max_points: usize,
    /// Final cost (m²) above which a converged result is still rejected.
    pub max_accept_cost: f64,
    /// Minimum fraction of scan points matched by the final strict ICP.
    pub min_accept_overlap: f64,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        Self {
            leaf_map: 0.25,
            leaf_scan: 0.25,
            outlier_radius: 1.0,
            outlier_min_neighbors: 5,
            k: 8,
            loose_icp: IcpParams {
                max_corr_dist: 2.0,
                max_iterations: 30,
                translation_eps: 1e-3,
                rotation_eps: 1e-3,
            },
            strict_icp: IcpParams {
                max_corr_dist: 0.5,
                max_iterations: 100,
                translation_eps: 1e-4,
                rotation_eps: 1e-4,
            },
            pivot: RotationPivot::Barycenter,
            hull_merge_angle: 10f64.to_radians(),
            loose_max_points: 6000,
            max_accept_cost: 0.04,
            min_accept_overlap: 0.9,
        }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<(), AlignError> {
        if self.k == 0 {
            return Err(AlignError::Config("k must be at least 1".into()));
        }
        if !(self.leaf_map > 0.0 && self.leaf_scan > 0.0 && self.outlier_radius > 0.0) {
            return Err(AlignError::Config(
                "leaf sizes and outlier radius must be positive".into(),
            ));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.hull_merge_angle) {
            return Err(AlignError::Config("hull_merge_angle must lie in [0, pi/2)".into()));
        }
        if self.loose_max_points == 0 {
            return Err(AlignError::Config("loose_max_points must be at least 1".into()));
        }
        if self.outlier_min_neighbors == 0 {
            return Err(AlignError::Config("outlier_min_neighbors must be at least 1".into()));
        }
        self.loose_icp.validate()?;
        self.strict_icp.validate()?;
        if self.loose_icp.max_corr_dist < self.strict_icp.max_corr_dist {
            return Err(AlignError::Config(
                "loose ICP correspondence distance must not be below the strict one".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AlignWarning {
    /// A hull could not be built; the centroid stood in for its barycenter.
    DegenerateHull { cloud: String, detail: String },
    /// The principal heading of a cloud is poorly conditioned.
    AmbiguousHeading { cloud: String },
}

/// Yaw initialization and the loose-ICP cost it reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaCost {
    pub theta: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    /// `T_I`: scan-to-map initial transform.
    pub transform: RigidTransform,
    /// Pivot the yaw rotations act about, in scan coordinates.
    pub pivot: Point3,
    pub translation: Vector3,
    pub theta: f64,
    pub warnings: Vec<AlignWarning>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub theta_star: f64,
    pub per_theta_costs: Vec<ThetaCost>,
    /// Loose-ICP result of the winning initialization.
    pub best: IcpOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    /// Scan-to-map transform (the robot origin in the map frame).
    pub transform: RigidTransform,
    /// Strict-ICP mean squared correspondence distance (m²).
    pub cost: f64,
    pub theta_star: f64,
    pub per_theta_costs: Vec<ThetaCost>,
    pub converged: bool,
    /// Converged, `cost <= max_accept_cost` and
    /// `overlap >= min_accept_overlap`.
    pub accepted: bool,
    pub overlap: f64,
    pub initial_transform: RigidTransform,
    pub warnings: Vec<AlignWarning>,
}

/// Edge-length weighted mean of edge midpoints.
pub fn polyline_barycenter(hull: &HullEdgeSet) -> Result<Point3, AlignError> {
    let mut weighted = Vector3::zeros();
    let mut total = 0.0;
    for (a, b) in &hull.edges {
        let len = (b - a).norm();
        weighted += (a.coords + (b - a) / 2.0) * len;
        total += len;
    }
    if !(total > 0.0) {
        return Err(AlignError::DegenerateEdges);
    }
    Ok(Point3::from(weighted / total))
}

fn barycenter_or_centroid(
    cloud: &PointCloud,
    name: &str,
    merge_angle: f64,
    warnings: &mut Vec<AlignWarning>,
) -> Result<Point3, AlignError> {
    let hull = convex_hull(&cloud.points)
        .map_err(|e| e.to_string())
        .and_then(|h| polyline_barycenter(&h.edges_merged(merge_angle)).map_err(|e| e.to_string()));
    match hull {
        Ok(b) => Ok(b),
        Err(detail) => {
            warnings.push(AlignWarning::DegenerateHull {
                cloud: name.into(),
                detail,
            });
            cloud.centroid().ok_or(AlignError::EmptyCloud)
        }
    }
}

/// Coarse scan-to-map transform `T_I = T(t) · Rz(pivot, theta)`.
///
/// `merge_angle` is the hull facet merging tolerance (see
/// [`AlignmentConfig::hull_merge_angle`]); `0.0` keeps every non-coplanar
/// edge.
pub fn global_correlation(
    map: &PointCloud,
    scan: &PointCloud,
    pivot: RotationPivot,
    merge_angle: f64,
) -> Result<Correlation, AlignError> {
    map.validate()?;
    scan.validate()?;
    let mut warnings = Vec::new();
    let b_map = barycenter_or_centroid(map, "map", merge_angle, &mut warnings)?;
    let b_scan = barycenter_or_centroid(scan, "scan", merge_angle, &mut warnings)?;

    let mut translation = b_map - b_scan;
    translation.z = map.min_z().unwrap() - scan.min_z().unwrap();

    let h_map = principal_heading(map)?;
    let h_scan = principal_heading(scan)?;
    for (h, name) in [(&h_map, "map"), (&h_scan, "scan")] {
        if h.ambiguous {
            warnings.push(AlignWarning::AmbiguousHeading { cloud: name.into() });
        }
    }
    let theta = h_map.theta - h_scan.theta;
    let pivot = match pivot {
        RotationPivot::Barycenter => b_scan,
        RotationPivot::ScanOrigin => Point3::origin(),
    };
    let transform = RigidTransform::from_translation(translation) * RigidTransform::yaw_about(&pivot, theta);
    Ok(Correlation {
        transform,
        pivot,
        translation,
        theta,
        warnings,
    })
}

/// Evenly spaced yaw offsets `2 pi i / k`.
pub fn theta_candidates(k: usize) -> Vec<f64> {
    (0..k).map(|i| std::f64::consts::TAU * i as f64 / k as f64).collect()
}

/// Runs loose ICP from `T_I · Rz(pivot, theta)` for every candidate yaw and
/// keeps the lowest cost (ties: lowest index).
pub fn global_registration(
    target: &IcpTarget<'_>,
    scan: &PointCloud,
    initial: &RigidTransform,
    pivot: &Point3,
    config: &AlignmentConfig,
) -> Result<Registration, AlignError> {
    config.validate()?;
    let stride = scan.len().div_ceil(config.loose_max_points);
    let sparse;
    let scan = if stride > 1 {
        sparse = PointCloud::new(
            scan.points.iter().step_by(stride).copied().collect(),
            scan.frame.clone(),
        );
        &sparse
    } else {
        scan
    };
    let thetas = theta_candidates(config.k);
    let outcomes = thetas
        .par_iter()
        .map(|&theta| {
            target.register(
                scan,
                &(*initial * RigidTransform::yaw_about(pivot, theta)),
                &config.loose_icp,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    let per_theta_costs: Vec<ThetaCost> = thetas
        .iter()
        .zip(&outcomes)
        .map(|(&theta, o)| ThetaCost { theta, cost: o.cost })
        .collect();
    let best = (0..outcomes.len())
        .filter(|&i| !outcomes[i].no_overlap)
        .min_by(|&a, &b| outcomes[a].cost.total_cmp(&outcomes[b].cost).then(a.cmp(&b)))
        .ok_or(AlignError::RegistrationFailure)?;
    Ok(Registration {
        theta_star: thetas[best],
        per_theta_costs,
        best: outcomes.into_iter().nth(best).unwrap(),
    })
}

/// Downsampled map and downsampled, outlier-filtered scan.
pub fn preprocess(
    map: &PointCloud,
    scan: &PointCloud,
    config: &AlignmentConfig,
) -> Result<(PointCloud, PointCloud), AlignError> {
    map.validate()?;
    scan.validate()?;
    let map = voxel_downsample(map, config.leaf_map)?;
    let scan = voxel_downsample(scan, config.leaf_scan)?;
    let scan = radius_outlier_filter(&scan, config.outlier_radius, config.outlier_min_neighbors)?;
    if scan.is_empty() {
        return Err(AlignError::EmptyCloud);
    }
    Ok((map, scan))
}

/// Full four-phase alignment of `scan` to `map`.
pub fn align(map: &PointCloud, scan: &PointCloud, config: &AlignmentConfig) -> Result<AlignmentResult, AlignError> {
    config.validate()?;
    let (map_ds, scan_ds) = preprocess(map, scan, config).map_err(|e| e.in_phase(Phase::Preprocessing))?;
    let corr = global_correlation(&map_ds, &scan_ds, config.pivot, config.hull_merge_angle)
        .map_err(|e| e.in_phase(Phase::GlobalCorrelation))?;
    let target = IcpTarget::new(&map_ds);
    let reg = global_registration(&target, &scan_ds, &corr.transform, &corr.pivot, config)
        .map_err(|e| e.in_phase(Phase::GlobalRegistration))?;
    // Fine tuning continues from the loose estimate of the winning yaw.
    let fine = target
        .register(&scan_ds, &reg.best.transform, &config.strict_icp)
        .map_err(|e| e.in_phase(Phase::FineTuning))?;
    if fine.no_overlap {
        return Err(AlignError::RegistrationFailure.in_phase(Phase::FineTuning));
    }
    Ok(AlignmentResult {
        transform: fine.transform,
        cost: fine.cost,
        theta_star: reg.theta_star,
        per_theta_costs: reg.per_theta_costs,
        converged: fine.converged,
        accepted: fine.converged && fine.cost <= config.max_accept_cost && fine.overlap >= config.min_accept_overlap,
        overlap: fine.overlap,
        initial_transform: corr.transform,
        warnings: corr.warnings,
    })
}
