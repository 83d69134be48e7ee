//! Pre-deployment planning: occupancy grid, viewpoint sequencing,
//! collision-free connection and splitting into flights that each fit the
//! vehicle's flight-time budget.

mod grid;
mod path;
mod tsp;

pub use grid::{dilation_steps, OccupancyGrid, VoxelKey};
pub use path::{astar_voxels, path_length, plan_path};
pub use tsp::{improve_tour, nearest_neighbor_tour, solve_tsp, solve_tsp_matrix, DistanceMatrix, DistanceMode};

use std::cell::RefCell;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{angle_diff, wrap_angle, Point3, PointCloud, Pose};
use crate::mission::{dwell_time, MissionError, MissionRequest, TechniqueId, ValidationConfig, Viewpoint};
use crate::FORMAT_VERSION;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("invalid planning parameter: {0}")]
    Parameter(String),
    #[error("{which} {point:?} lies in occupied space")]
    InfeasibleEndpoint { which: String, point: [f64; 3] },
    #[error("no collision-free path from {from:?} to {to:?}")]
    Unreachable { from: [f64; 3], to: [f64; 3] },
    #[error("poses {from} and {to} are not connected by a collision-free path")]
    UnreachablePair { from: usize, to: usize },
    #[error("viewpoint {viewpoint} alone needs {required:.1} s, budget is {budget:.1} s")]
    InfeasibleBudget {
        viewpoint: usize,
        required: f64,
        budget: f64,
    },
    #[error(transparent)]
    Mission(#[from] MissionError),
}

/// One element of a flight plan: where to be, what to look at, whether to
/// capture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanTriplet {
    pub p_uav: Pose,
    /// Target being documented; absent on transit waypoints.
    pub p_ooi: Option<[f64; 3]>,
    pub acquire: bool,
    /// Index into the request's viewpoints, for viewpoint stops.
    pub viewpoint: Option<usize>,
    pub technique: Option<TechniqueId>,
    /// Hover time at this triplet (s).
    pub dwell: f64,
}

impl PlanTriplet {
    fn transit(p_uav: Pose) -> Self {
        Self {
            p_uav,
            p_ooi: None,
            acquire: false,
            viewpoint: None,
            technique: None,
            dwell: 0.0,
        }
    }
}

/// One flight: takeoff, a run of viewpoints, and back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPlan {
    /// The run of `sigma_star` this flight covers.
    pub viewpoints: Vec<usize>,
    pub triplets: Vec<PlanTriplet>,
    /// Estimated duration at cruise speed including dwell (s).
    pub duration: f64,
    /// Path length (m).
    pub length: f64,
}

impl MissionPlan {
    pub fn positions(&self) -> Vec<Point3> {
        self.triplets.iter().map(|t| t.p_uav.point()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionPlanSet {
    pub format_version: u32,
    pub takeoff: Pose,
    pub t_max: f64,
    pub safety_factor: f64,
    pub cruise_speed: f64,
    /// Full visiting order over the request's viewpoints.
    pub sigma_star: Vec<usize>,
    pub plans: Vec<MissionPlan>,
    pub durations: Vec<f64>,
}

impl MissionPlanSet {
    /// Viewpoint stops of all plans, in flight order.
    pub fn flattened(&self) -> Vec<usize> {
        self.plans
            .iter()
            .flat_map(|p| p.triplets.iter().filter_map(|t| t.viewpoint))
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PlanError> {
        let set: Self = serde_json::from_str(text).map_err(|e| MissionError::Json(e.to_string()))?;
        if set.format_version != FORMAT_VERSION {
            return Err(MissionError::Version {
                found: set.format_version,
                expected: FORMAT_VERSION,
            }
            .into());
        }
        Ok(set)
    }
}

/// Source of collision-free legs between two points.
pub trait LegPlanner {
    fn leg(&self, a: &Point3, b: &Point3) -> Result<Vec<Point3>, PlanError>;
}

impl LegPlanner for OccupancyGrid {
    fn leg(&self, a: &Point3, b: &Point3) -> Result<Vec<Point3>, PlanError> {
        plan_path(self, a, b)
    }
}

/// Straight legs, for obstacle-free scenarios.
#[derive(Debug, Clone, Copy, Default)]
pub struct FreeSpace;

impl LegPlanner for FreeSpace {
    fn leg(&self, a: &Point3, b: &Point3) -> Result<Vec<Point3>, PlanError> {
        Ok(vec![*a, *b])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitParams {
    pub t_max: f64,
    pub cruise_speed: f64,
    /// Fraction of `t_max` a flight may use.
    pub safety_factor: f64,
}

impl SplitParams {
    pub fn budget(&self) -> f64 {
        self.safety_factor * self.t_max
    }

    fn validate(&self) -> Result<(), PlanError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if !ok(self.t_max) || !ok(self.cruise_speed) || !ok(self.safety_factor) || self.safety_factor > 1.0 {
            return Err(PlanError::Parameter(format!("bad split parameters {self:?}")));
        }
        Ok(())
    }
}

/// Endpoints of a leg; `None` is the takeoff pose.
type LegKey = (Option<usize>, Option<usize>);

/// Leg cache keyed by stop.
struct Legs<'a, L: LegPlanner + ?Sized> {
    planner: &'a L,
    takeoff: Point3,
    stops: &'a [Viewpoint],
    cache: RefCell<HashMap<LegKey, Vec<Point3>>>,
}

impl<L: LegPlanner + ?Sized> Legs<'_, L> {
    fn point(&self, s: Option<usize>) -> Point3 {
        s.map_or(self.takeoff, |i| self.stops[i].camera_pose.point())
    }

    fn get(&self, a: Option<usize>, b: Option<usize>) -> Result<Vec<Point3>, PlanError> {
        if let Some(p) = self.cache.borrow().get(&(a, b)) {
            return Ok(p.clone());
        }
        let p = self.planner.leg(&self.point(a), &self.point(b))?;
        self.cache.borrow_mut().insert((a, b), p.clone());
        Ok(p)
    }

    fn length(&self, a: Option<usize>, b: Option<usize>) -> Result<f64, PlanError> {
        Ok(path_length(&self.get(a, b)?))
    }
}

/// Greedily cuts `sigma_star` into flights.
///
/// A flight keeps taking the next viewpoint while the estimated time of
/// takeoff → … → viewpoint → takeoff (cruise-speed travel plus dwell)
/// stays strictly below `safety_factor · t_max`.
pub fn split_plan<L: LegPlanner + ?Sized>(
    sigma_star: &[usize],
    viewpoints: &[Viewpoint],
    dwell: &[f64],
    takeoff: &Pose,
    legs: &L,
    params: &SplitParams,
) -> Result<MissionPlanSet, PlanError> {
    params.validate()?;
    if dwell.len() != viewpoints.len() {
        return Err(PlanError::Parameter("one dwell time per viewpoint required".into()));
    }
    if let Some(&bad) = sigma_star.iter().find(|&&i| i >= viewpoints.len()) {
        return Err(PlanError::Parameter(format!(
            "sequence refers to missing viewpoint {bad}"
        )));
    }
    let legs = Legs {
        planner: legs,
        takeoff: takeoff.point(),
        stops: viewpoints,
        cache: RefCell::new(HashMap::new()),
    };
    let budget = params.budget();
    let v = params.cruise_speed;

    let mut runs: Vec<Vec<usize>> = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    let mut open = 0.0;
    for &s in sigma_star {
        let back = legs.length(Some(s), None)? / v;
        let reach = legs.length(cur.last().copied(), Some(s))? / v + dwell[s];
        if open + reach + back < budget {
            cur.push(s);
            open += reach;
            continue;
        }
        let alone = legs.length(None, Some(s))? / v + dwell[s];
        if alone + back >= budget {
            return Err(PlanError::InfeasibleBudget {
                viewpoint: s,
                required: alone + back,
                budget,
            });
        }
        if !cur.is_empty() {
            runs.push(std::mem::take(&mut cur));
        }
        cur.push(s);
        open = alone;
    }
    if !cur.is_empty() {
        runs.push(cur);
    }

    let mut plans = Vec::with_capacity(runs.len());
    for run in runs {
        plans.push(build_plan(&legs, run, dwell, takeoff, v)?);
    }
    Ok(MissionPlanSet {
        format_version: FORMAT_VERSION,
        takeoff: *takeoff,
        t_max: params.t_max,
        safety_factor: params.safety_factor,
        cruise_speed: v,
        sigma_star: sigma_star.to_vec(),
        durations: plans.iter().map(|p| p.duration).collect(),
        plans,
    })
}

fn build_plan<L: LegPlanner + ?Sized>(
    legs: &Legs<'_, L>,
    run: Vec<usize>,
    dwell: &[f64],
    takeoff: &Pose,
    speed: f64,
) -> Result<MissionPlan, PlanError> {
    let pose_of = |s: Option<usize>| s.map_or(*takeoff, |i| legs.stops[i].camera_pose);
    let mut triplets = vec![PlanTriplet::transit(*takeoff)];
    let mut length = 0.0;
    let mut total_dwell = 0.0;
    let stops: Vec<Option<usize>> = std::iter::once(None)
        .chain(run.iter().map(|&i| Some(i)))
        .chain(std::iter::once(None))
        .collect();
    for w in stops.windows(2) {
        let (a, b) = (w[0], w[1]);
        let path = legs.get(a, b)?;
        let leg_len = path_length(&path);
        let (pa, pb) = (pose_of(a), pose_of(b));
        let mut along = 0.0;
        for k in 1..path.len().saturating_sub(1) {
            along += (path[k] - path[k - 1]).norm();
            let f = if leg_len > 0.0 { along / leg_len } else { 0.0 };
            let heading = wrap_angle(pa.heading + f * angle_diff(pb.heading, pa.heading));
            let pitch = pa.pitch + f * (pb.pitch - pa.pitch);
            triplets.push(PlanTriplet::transit(Pose::new(path[k], heading, pitch)));
        }
        length += leg_len;
        triplets.push(match b {
            None => PlanTriplet::transit(*takeoff),
            Some(i) => {
                let vp = &legs.stops[i];
                total_dwell += dwell[i];
                PlanTriplet {
                    p_uav: vp.camera_pose,
                    p_ooi: Some(vp.ooi_point),
                    acquire: vp.acquire,
                    viewpoint: Some(i),
                    technique: Some(vp.technique),
                    dwell: dwell[i],
                }
            }
        });
    }
    Ok(MissionPlan {
        viewpoints: run,
        triplets,
        duration: length / speed + total_dwell,
        length,
    })
}

/// Planner settings with the documented defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub resolution: f64,
    pub inflation: f64,
    pub distance: DistanceMode,
    pub safety_factor: f64,
    pub validation: ValidationConfig,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            resolution: 0.25,
            inflation: 0.75,
            distance: DistanceMode::PathLength,
            safety_factor: 0.8,
            validation: ValidationConfig::default(),
        }
    }
}

impl PlannerConfig {
    pub fn build_grid(&self, map: &PointCloud) -> Result<OccupancyGrid, PlanError> {
        OccupancyGrid::build(map, self.resolution, self.inflation)
    }
}

/// Hover time per viewpoint: technique dwell at acquisitions, zero on
/// plain waypoints.
pub fn viewpoint_dwell(viewpoints: &[Viewpoint], config: &ValidationConfig) -> Vec<f64> {
    viewpoints
        .iter()
        .map(|vp| {
            if vp.acquire {
                dwell_time(vp.technique, config)
            } else {
                0.0
            }
        })
        .collect()
}

/// Sequence and split a mission request over a grid.
pub fn plan_mission(
    req: &MissionRequest,
    grid: &OccupancyGrid,
    config: &PlannerConfig,
) -> Result<MissionPlanSet, PlanError> {
    req.check()?;
    let mut poses = Vec::with_capacity(req.viewpoints.len() + 1);
    poses.push(req.takeoff);
    poses.extend(req.viewpoints.iter().map(|v| v.camera_pose));
    let tour = solve_tsp(&poses, config.distance, Some(grid))?;
    let sigma: Vec<usize> = tour[1..].iter().map(|&i| i - 1).collect();
    let dwell = viewpoint_dwell(&req.viewpoints, &config.validation);
    split_plan(
        &sigma,
        &req.viewpoints,
        &dwell,
        &req.takeoff,
        grid,
        &SplitParams {
            t_max: req.t_max,
            cruise_speed: req.cruise_speed,
            safety_factor: config.safety_factor,
        },
    )
}

/// A plan segment that clips the inflated grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentViolation {
    pub plan: usize,
    pub segment: usize,
    pub from: [f64; 3],
    pub to: [f64; 3],
}

/// Brute-force clearance check of every plan segment, sampled every `step`
/// meters against the inflated grid.
pub fn audit_plan_set(set: &MissionPlanSet, grid: &OccupancyGrid, step: f64) -> Vec<SegmentViolation> {
    let mut out = Vec::new();
    for (pi, plan) in set.plans.iter().enumerate() {
        let pts = plan.positions();
        for (si, w) in pts.windows(2).enumerate() {
            if !grid.segment_is_free_sampled(&w[0], &w[1], step) {
                out.push(SegmentViolation {
                    plan: pi,
                    segment: si,
                    from: w[0].into(),
                    to: w[1].into(),
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mission::CaptureMode;

    fn line_viewpoints(n: usize, spacing: f64) -> Vec<Viewpoint> {
        (0..n)
            .map(|i| Viewpoint {
                camera_pose: Pose::at(Point3::new(spacing * (i + 1) as f64, 0.0, 0.0)),
                ooi_point: [spacing * (i + 1) as f64, 5.0, 0.0],
                technique: TechniqueId::Vis,
                acquire: true,
                capture: CaptureMode::OnboardCamera,
            })
            .collect()
    }

    #[test]
    fn everything_fits_in_one_flight() {
        let vps = line_viewpoints(3, 1.0);
        let params = SplitParams {
            t_max: 100.0,
            cruise_speed: 1.0,
            safety_factor: 0.8,
        };
        let set = split_plan(
            &[0, 1, 2],
            &vps,
            &[1.0; 3],
            &Pose::at(Point3::origin()),
            &FreeSpace,
            &params,
        )
        .unwrap();
        assert_eq!(set.plans.len(), 1);
        assert_eq!(set.flattened(), vec![0, 1, 2]);
        // 3 m out, 3 m back, 3 s dwell.
        assert!((set.durations[0] - 9.0).abs() < 1e-12);
    }

    #[test]
    fn line_split_into_three_flights() {
        // Six viewpoints 1 m apart on the x axis, 8 s dwell each, budget
        // 0.8 · 37.5 = 30 s. One flight over all of them would take
        // 6 + 48 + 6 = 60 s. By hand:
        //   [1, 2]: 1 + 8 + 1 + 8 + 2 = 20 s (adding 3 m gives exactly 30, not < 30)
        //   [3, 4]: 3 + 8 + 1 + 8 + 4 = 24 s (adding 5 m gives 34)
        //   [5, 6]: 5 + 8 + 1 + 8 + 6 = 28 s
        let vps = line_viewpoints(6, 1.0);
        let params = SplitParams {
            t_max: 37.5,
            cruise_speed: 1.0,
            safety_factor: 0.8,
        };
        let sigma: Vec<usize> = (0..6).collect();
        let set = split_plan(
            &sigma,
            &vps,
            &[8.0; 6],
            &Pose::at(Point3::origin()),
            &FreeSpace,
            &params,
        )
        .unwrap();
        assert_eq!(set.plans.len(), 3);
        for (d, e) in set.durations.iter().zip([20.0, 24.0, 28.0]) {
            assert!((d - e).abs() < 1e-9, "{d} vs {e}");
            assert!(*d < params.budget());
        }
        assert_eq!(set.plans[1].viewpoints, vec![2, 3]);
        assert_eq!(set.flattened(), sigma);
    }

    #[test]
    fn budget_too_small() {
        let vps = line_viewpoints(1, 10.0);
        let params = SplitParams {
            t_max: 20.0,
            cruise_speed: 1.0,
            safety_factor: 0.8,
        };
        let err = split_plan(&[0], &vps, &[1.0], &Pose::at(Point3::origin()), &FreeSpace, &params).unwrap_err();
        assert!(matches!(err, PlanError::InfeasibleBudget { viewpoint: 0, .. }));
    }

    #[test]
    fn transit_heading_takes_short_arc() {
        let mut vps = line_viewpoints(1, 4.0);
        vps[0].camera_pose.heading = -3.0;
        struct Kinked;
        impl LegPlanner for Kinked {
            fn leg(&self, a: &Point3, b: &Point3) -> Result<Vec<Point3>, PlanError> {
                let mid = Point3::new(0.5 * (a.x + b.x), 1.0, 0.0);
                Ok(vec![*a, mid, *b])
            }
        }
        let takeoff = Pose::new(Point3::origin(), 3.0, 0.0);
        let params = SplitParams {
            t_max: 1000.0,
            cruise_speed: 1.0,
            safety_factor: 0.8,
        };
        let set = split_plan(&[0], &vps, &[1.0], &takeoff, &Kinked, &params).unwrap();
        let mid = set.plans[0].triplets[1];
        assert!(mid.viewpoint.is_none() && !mid.acquire);
        // Halfway between 3.0 and -3.0 across ±π.
        assert!((mid.p_uav.heading.abs() - std::f64::consts::PI).abs() < 1e-9);
    }
}
