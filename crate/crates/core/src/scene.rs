//! Scenario and trajectory types plus the scenario JSON format.
//!
//! All geometry in a [`Scenario`] (ego pose, history, agents, map, route and
//! the human/previous trajectories) lives in one common scenario frame. The
//! camera and image detections are relative to the ego vehicle.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{polygon_is_simple, polygon_signed_area, Aabb, Point2, Pose2};

/// Planning horizon: number of future steps and their spacing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Horizon {
    pub steps: usize,
    pub dt: f64,
}

impl Default for Horizon {
    fn default() -> Self {
        Self { steps: 8, dt: 0.5 }
    }
}

impl Horizon {
    pub fn duration(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps < 2 {
            return Err(Error::Config("horizon.steps must be at least 2".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config("horizon.dt must be positive".into()));
        }
        Ok(())
    }
}

/// Future poses sampled every `dt` seconds. Pose `k` is at time `(k + 1) * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose2>,
    dt: f64,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose2>, dt: f64) -> Result<Self> {
        if poses.is_empty() {
            return Err(Error::validation("poses", "trajectory is empty"));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::validation("dt", format!("dt must be positive, got {dt}")));
        }
        if let Some(k) = poses.iter().position(|p| !p.is_finite()) {
            return Err(Error::validation(format!("poses[{k}]"), "non-finite coordinate"));
        }
        let poses = poses.into_iter().map(|p| Pose2::new(p.x, p.y, p.yaw)).collect();
        Ok(Self { poses, dt })
    }

    /// Builds a trajectory from positions, deriving yaw from the direction of
    /// travel. `start` is the pose preceding the first point.
    pub fn from_positions(points: &[Point2], dt: f64, start: Option<Pose2>) -> Result<Self> {
        let yaws = derive_yaw(points, start);
        let poses = points
            .iter()
            .zip(yaws)
            .map(|(p, yaw)| Pose2::new(p.x, p.y, yaw))
            .collect();
        Self::new(poses, dt)
    }

    pub fn poses(&self) -> &[Pose2] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn positions(&self) -> Vec<Point2> {
        self.poses.iter().map(Pose2::position).collect()
    }

    /// Re-expresses a trajectory given in `frame`'s local coordinates in the parent frame.
    pub fn to_parent(&self, frame: &Pose2) -> Trajectory {
        Trajectory {
            poses: self.poses.iter().map(|p| frame.compose(p)).collect(),
            dt: self.dt,
        }
    }

    /// Re-expresses a parent-frame trajectory in `frame`'s local coordinates.
    pub fn to_local(&self, frame: &Pose2) -> Trajectory {
        Trajectory {
            poses: self.poses.iter().map(|p| frame.relative(p)).collect(),
            dt: self.dt,
        }
    }

    /// Polyline length starting from `start` through every pose.
    pub fn arc_length_from(&self, start: Point2) -> f64 {
        let mut prev = start;
        let mut acc = 0.0;
        for p in &self.poses {
            acc += prev.distance(p.position());
            prev = p.position();
        }
        acc
    }

    /// Flattened `[x0, y0, yaw0, x1, ...]`.
    pub fn flatten(&self) -> Vec<f64> {
        self.poses.iter().flat_map(|p| [p.x, p.y, p.yaw]).collect()
    }
}

/// Heading of travel for each point: direction from the preceding point
/// (`start`, when given) to the current one. Stationary steps keep the previous
/// heading. Without `start`, the first heading comes from the first segment.
pub fn derive_yaw(points: &[Point2], start: Option<Pose2>) -> Vec<f64> {
    const MIN_STEP: f64 = 1e-6;
    let mut out = Vec::with_capacity(points.len());
    let mut prev_yaw = start.map_or(0.0, |s| s.yaw);
    for (k, &p) in points.iter().enumerate() {
        let seg = match (k, start) {
            (0, Some(s)) => p - s.position(),
            (0, None) if points.len() > 1 => points[1] - p,
            (0, None) => Point2::default(),
            _ => p - points[k - 1],
        };
        let yaw = if seg.norm() > MIN_STEP {
            seg.y.atan2(seg.x)
        } else {
            prev_yaw
        };
        out.push(yaw);
        prev_yaw = yaw;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EgoState {
    pub pose: Pose2,
    pub speed: f64,
    pub accel: f64,
    pub width: f64,
    pub length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub id: String,
    pub width: f64,
    pub length: f64,
    /// `T + 1` poses; index 0 is the current pose.
    pub track: Vec<Pose2>,
    pub is_stationary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LightState {
    Red,
    Green,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficLight {
    pub stop_line: [Point2; 2],
    pub state: LightState,
}

/// Pinhole camera rigidly attached to the ego vehicle.
///
/// Ego frame: x forward, y left, z up. Camera frame: x right, y down, z along
/// the optical axis. `p_cam = rotation * p_ego + translation`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl CameraModel {
    /// Forward-facing camera mounted at `(mount_x, 0, mount_z)` in the ego
    /// frame, pitched down by `pitch` radians.
    pub fn forward_facing(mount_x: f64, mount_z: f64, pitch: f64) -> Self {
        let (s, c) = pitch.sin_cos();
        // Rows are the camera axes expressed in ego coordinates.
        let rotation = [[0.0, -1.0, 0.0], [-s, 0.0, -c], [c, 0.0, -s]];
        let center = [mount_x, 0.0, mount_z];
        let mut translation = [0.0; 3];
        for (r, row) in rotation.iter().enumerate() {
            translation[r] = -(row[0] * center[0] + row[1] * center[1] + row[2] * center[2]);
        }
        Self {
            fx: 1000.0,
            fy: 1000.0,
            cx: 800.0,
            cy: 450.0,
            width: 1600,
            height: 900,
            rotation,
            translation,
        }
    }

    pub fn ego_to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + t[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + t[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + t[2],
        ]
    }

    /// Pinhole projection of a camera-frame point; `None` in front of the near plane.
    pub fn project_camera_point(&self, pc: [f64; 3], near: f64) -> Option<Point2> {
        if pc[2] <= near {
            return None;
        }
        Some(Point2::new(
            self.fx * pc[0] / pc[2] + self.cx,
            self.fy * pc[1] / pc[2] + self.cy,
        ))
    }

    pub fn project_ego_point(&self, p: [f64; 3], near: f64) -> Option<Point2> {
        self.project_camera_point(self.ego_to_camera(p), near)
    }

    pub fn clamp_to_image(&self, p: Point2) -> Point2 {
        Point2::new(p.x.clamp(0.0, self.width as f64), p.y.clamp(0.0, self.height as f64))
    }
}

/// Precomputed image-space detections: lane-line polylines and obstacle boxes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Detections2D {
    pub lane_lines: Vec<Vec<Point2>>,
    pub obstacles: Vec<Aabb>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Taken from the file stem; not part of the JSON body.
    pub id: String,
    pub ego: EgoState,
    /// Past ego poses at `dt` spacing, oldest first, excluding the current pose.
    pub ego_history: Vec<Pose2>,
    pub agents: Vec<Agent>,
    /// Counter-clockwise simple polygons; the drivable area is their union.
    pub drivable_area: Vec<Vec<Point2>>,
    /// Lane centerlines; travel direction follows point order.
    pub centerlines: Vec<Vec<Point2>>,
    pub traffic_lights: Vec<TrafficLight>,
    pub route: Vec<Point2>,
    pub human_trajectory: Trajectory,
    pub prev_plan: Option<Trajectory>,
    pub camera: CameraModel,
    pub detections2d: Detections2D,
    pub tags: BTreeSet<String>,
}

impl Scenario {
    /// Checks every structural invariant against the given horizon.
    pub fn validate(&self, horizon: &Horizon) -> Result<()> {
        let ego = &self.ego;
        check_pose("ego.pose", &ego.pose)?;
        if !(ego.speed >= 0.0 && ego.speed.is_finite()) {
            return Err(Error::validation("ego.speed", "must be finite and non-negative"));
        }
        if !ego.accel.is_finite() {
            return Err(Error::validation("ego.accel", "must be finite"));
        }
        check_positive("ego.width", ego.width)?;
        check_positive("ego.length", ego.length)?;
        for (i, p) in self.ego_history.iter().enumerate() {
            check_pose(&format!("ego_history[{i}]"), p)?;
        }
        for (i, a) in self.agents.iter().enumerate() {
            check_positive(&format!("agents[{i}].width"), a.width)?;
            check_positive(&format!("agents[{i}].length"), a.length)?;
            if a.track.len() != horizon.steps + 1 {
                return Err(Error::validation(
                    format!("agents[{i}].track"),
                    format!("expected {} poses, got {}", horizon.steps + 1, a.track.len()),
                ));
            }
            for (k, p) in a.track.iter().enumerate() {
                check_pose(&format!("agents[{i}].track[{k}]"), p)?;
            }
        }
        for (i, poly) in self.drivable_area.iter().enumerate() {
            let field = format!("drivable_area[{i}]");
            if poly.len() < 3 {
                return Err(Error::validation(field, "polygon needs at least 3 vertices"));
            }
            if poly.iter().any(|p| !p.is_finite()) {
                return Err(Error::validation(field, "non-finite vertex"));
            }
            if polygon_signed_area(poly) <= 0.0 {
                return Err(Error::validation(
                    field,
                    "polygon must be counter-clockwise with positive area",
                ));
            }
            if !polygon_is_simple(poly) {
                return Err(Error::validation(field, "polygon is self-intersecting"));
            }
        }
        for (i, line) in self.centerlines.iter().enumerate() {
            check_polyline(&format!("centerlines[{i}]"), line)?;
        }
        for (i, light) in self.traffic_lights.iter().enumerate() {
            let [a, b] = light.stop_line;
            if !a.is_finite() || !b.is_finite() || a == b {
                return Err(Error::validation(
                    format!("traffic_lights[{i}].stop_line"),
                    "stop line needs two distinct finite endpoints",
                ));
            }
        }
        check_polyline("route", &self.route)?;
        check_trajectory("human_trajectory", &self.human_trajectory, horizon)?;
        if let Some(prev) = &self.prev_plan {
            check_trajectory("prev_plan", prev, horizon)?;
        }
        let cam = &self.camera;
        check_positive("camera.fx", cam.fx)?;
        check_positive("camera.fy", cam.fy)?;
        if cam.width == 0 || cam.height == 0 {
            return Err(Error::validation("camera", "image dimensions must be positive"));
        }
        if !(cam.cx.is_finite() && cam.cy.is_finite()) {
            return Err(Error::validation("camera", "principal point must be finite"));
        }
        check_rotation(&cam.rotation)?;
        if cam.translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("camera.extrinsic.translation", "non-finite value"));
        }
        for (i, line) in self.detections2d.lane_lines.iter().enumerate() {
            if line.iter().any(|p| !p.is_finite()) {
                return Err(Error::validation(
                    format!("detections2d.lane_lines[{i}]"),
                    "non-finite point",
                ));
            }
        }
        for (i, b) in self.detections2d.obstacles.iter().enumerate() {
            if !b.min.is_finite() || !b.max.is_finite() || b.min.x > b.max.x || b.min.y > b.max.y {
                return Err(Error::validation(format!("detections2d.obstacles[{i}]"), "invalid box"));
            }
        }
        Ok(())
    }

    /// Applies a rigid transform to every scenario-frame quantity. Camera and
    /// detections are ego-relative and stay untouched.
    pub fn transformed(&self, rigid: &Pose2) -> Scenario {
        let tp = |p: &Pose2| rigid.compose(p);
        let pt = |p: &Point2| rigid.transform_point(*p);
        Scenario {
            id: self.id.clone(),
            ego: EgoState {
                pose: tp(&self.ego.pose),
                ..self.ego.clone()
            },
            ego_history: self.ego_history.iter().map(tp).collect(),
            agents: self
                .agents
                .iter()
                .map(|a| Agent {
                    track: a.track.iter().map(tp).collect(),
                    ..a.clone()
                })
                .collect(),
            drivable_area: self
                .drivable_area
                .iter()
                .map(|poly| poly.iter().map(pt).collect())
                .collect(),
            centerlines: self.centerlines.iter().map(|l| l.iter().map(pt).collect()).collect(),
            traffic_lights: self
                .traffic_lights
                .iter()
                .map(|l| TrafficLight {
                    stop_line: l.stop_line.map(|p| pt(&p)),
                    state: l.state,
                })
                .collect(),
            route: self.route.iter().map(pt).collect(),
            human_trajectory: self.human_trajectory.to_parent(rigid),
            prev_plan: self.prev_plan.as_ref().map(|t| t.to_parent(rigid)),
            camera: self.camera.clone(),
            detections2d: self.detections2d.clone(),
            tags: self.tags.clone(),
        }
    }

    /// Converts an ego-frame trajectory into the scenario frame.
    pub fn ego_to_scene(&self, traj: &Trajectory) -> Trajectory {
        traj.to_parent(&self.ego.pose)
    }

    /// Converts a scenario-frame trajectory into the ego frame.
    pub fn scene_to_ego(&self, traj: &Trajectory) -> Trajectory {
        traj.to_local(&self.ego.pose)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&ScenarioFile::from(self)).expect("scenario serializes")
    }

    pub fn from_json_str(text: &str, id: &str, horizon: &Horizon) -> Result<Self> {
        let file: ScenarioFile = serde_json::from_str(text).map_err(|source| Error::Parse {
            path: PathBuf::from(id),
            source,
        })?;
        let scenario = file.into_scenario(id)?;
        scenario.validate(horizon)?;
        Ok(scenario)
    }
}

fn check_positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, format!("must be positive, got {v}")))
    }
}

fn check_pose(field: &str, p: &Pose2) -> Result<()> {
    if p.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(field, "non-finite coordinate"))
    }
}

fn check_polyline(field: &str, line: &[Point2]) -> Result<()> {
    if line.len() < 2 {
        return Err(Error::validation(field, "polyline needs at least 2 points"));
    }
    if line.iter().any(|p| !p.is_finite()) {
        return Err(Error::validation(field, "non-finite point"));
    }
    Ok(())
}

fn check_trajectory(field: &str, t: &Trajectory, horizon: &Horizon) -> Result<()> {
    if t.len() != horizon.steps {
        return Err(Error::validation(
            format!("{field}.poses"),
            format!("expected {} poses, got {}", horizon.steps, t.len()),
        ));
    }
    if (t.dt() - horizon.dt).abs() > 1e-12 {
        return Err(Error::validation(
            format!("{field}.dt"),
            format!("expected {}, got {}", horizon.dt, t.dt()),
        ));
    }
    Ok(())
}

fn check_rotation(r: &[[f64; 3]; 3]) -> Result<()> {
    for i in 0..3 {
        for j in 0..3 {
            let dot: f64 = (0..3).map(|k| r[i][k] * r[j][k]).sum();
            let expect = if i == j { 1.0 } else { 0.0 };
            if !dot.is_finite() || (dot - expect).abs() > 1e-6 {
                return Err(Error::validation(
                    "camera.extrinsic.rotation",
                    "matrix is not orthonormal",
                ));
            }
        }
    }
    Ok(())
}

pub fn load_scenario(path: &Path, horizon: &Horizon) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file: ScenarioFile = serde_json::from_str(&text).map_err(|source| Error::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    let scenario = file.into_scenario(&id)?;
    scenario.validate(horizon)?;
    Ok(scenario)
}

pub fn save_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    let mut text = scenario.to_json_string();
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Loads every `*.json` scenario in `dir`, sorted by id.
pub fn load_dataset(dir: &Path, horizon: &Horizon) -> Result<Vec<Scenario>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths.iter().map(|p| load_scenario(p, horizon)).collect()
}

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    ego: EgoFile,
    ego_history: Vec<Vec<f64>>,
    agents: Vec<AgentFile>,
    drivable_area: Vec<Vec<[f64; 2]>>,
    centerlines: Vec<Vec<[f64; 2]>>,
    traffic_lights: Vec<LightFile>,
    route: Vec<[f64; 2]>,
    human_trajectory: TrajectoryFile,
    prev_plan: Option<TrajectoryFile>,
    camera: CameraFile,
    detections2d: DetectionsFile,
    tags: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EgoFile {
    pose: [f64; 3],
    speed: f64,
    accel: f64,
    width: f64,
    length: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentFile {
    id: String,
    width: f64,
    length: f64,
    track: Vec<Vec<f64>>,
    is_stationary: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LightFile {
    stop_line: [[f64; 2]; 2],
    state: LightState,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrajectoryFile {
    dt: f64,
    poses: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtrinsicFile {
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraFile {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    extrinsic: ExtrinsicFile,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectionsFile {
    lane_lines: Vec<Vec<[f64; 2]>>,
    obstacles: Vec<[f64; 4]>,
}

fn pt(p: [f64; 2]) -> Point2 {
    Point2::new(p[0], p[1])
}

fn pose_row(p: &Pose2) -> Vec<f64> {
    vec![p.x, p.y, p.yaw]
}

/// Parses `[x, y]` or `[x, y, yaw]` rows; missing yaw is derived from the
/// direction of travel. Either every row carries yaw or none does.
fn parse_pose_rows(field: &str, rows: &[Vec<f64>], start: Option<Pose2>) -> Result<Vec<Pose2>> {
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let width = rows[0].len();
    if width != 2 && width != 3 {
        return Err(Error::validation(format!("{field}[0]"), "pose must have 2 or 3 values"));
    }
    if let Some(k) = rows.iter().position(|r| r.len() != width) {
        return Err(Error::validation(format!("{field}[{k}]"), "inconsistent pose width"));
    }
    if width == 3 {
        return Ok(rows.iter().map(|r| Pose2::new(r[0], r[1], r[2])).collect());
    }
    let pts: Vec<Point2> = rows.iter().map(|r| Point2::new(r[0], r[1])).collect();
    let yaws = derive_yaw(&pts, start);
    Ok(pts.iter().zip(yaws).map(|(p, y)| Pose2::new(p.x, p.y, y)).collect())
}

impl ScenarioFile {
    fn into_scenario(self, id: &str) -> Result<Scenario> {
        let ego_pose = Pose2::new(self.ego.pose[0], self.ego.pose[1], self.ego.pose[2]);
        let ego = EgoState {
            pose: ego_pose,
            speed: self.ego.speed,
            accel: self.ego.accel,
            width: self.ego.width,
            length: self.ego.length,
        };
        let ego_history = parse_pose_rows("ego_history", &self.ego_history, None)?;
        let mut agents = Vec::with_capacity(self.agents.len());
        for (i, a) in self.agents.into_iter().enumerate() {
            let track = parse_pose_rows(&format!("agents[{i}].track"), &a.track, None)?;
            agents.push(Agent {
                id: a.id,
                width: a.width,
                length: a.length,
                track,
                is_stationary: a.is_stationary,
            });
        }
        let trajectory = |field: &str, t: TrajectoryFile| -> Result<Trajectory> {
            let poses = parse_pose_rows(&format!("{field}.poses"), &t.poses, Some(ego_pose))?;
            Trajectory::new(poses, t.dt).map_err(|e| match e {
                Error::Validation { field: f, reason } => Error::validation(format!("{field}.{f}"), reason),
                other => other,
            })
        };
        let human_trajectory = trajectory("human_trajectory", self.human_trajectory)?;
        let prev_plan = self.prev_plan.map(|t| trajectory("prev_plan", t)).transpose()?;
        let camera = CameraModel {
            fx: self.camera.fx,
            fy: self.camera.fy,
            cx: self.camera.cx,
            cy: self.camera.cy,
            width: self.camera.width,
            height: self.camera.height,
            rotation: self.camera.extrinsic.rotation,
            translation: self.camera.extrinsic.translation,
        };
        let detections2d = Detections2D {
            lane_lines: self
                .detections2d
                .lane_lines
                .iter()
                .map(|l| l.iter().map(|&p| camera.clamp_to_image(pt(p))).collect())
                .collect(),
            obstacles: self
                .detections2d
                .obstacles
                .iter()
                .map(|b| Aabb {
                    min: camera.clamp_to_image(Point2::new(b[0], b[1])),
                    max: camera.clamp_to_image(Point2::new(b[2], b[3])),
                })
                .collect(),
        };
        Ok(Scenario {
            id: id.to_string(),
            ego,
            ego_history,
            agents,
            drivable_area: self
                .drivable_area
                .into_iter()
                .map(|poly| poly.into_iter().map(pt).collect())
                .collect(),
            centerlines: self
                .centerlines
                .into_iter()
                .map(|l| l.into_iter().map(pt).collect())
                .collect(),
            traffic_lights: self
                .traffic_lights
                .into_iter()
                .map(|l| TrafficLight {
                    stop_line: [pt(l.stop_line[0]), pt(l.stop_line[1])],
                    state: l.state,
                })
                .collect(),
            route: self.route.into_iter().map(pt).collect(),
            human_trajectory,
            prev_plan,
            camera,
            detections2d,
            tags: self.tags.into_iter().collect(),
        })
    }
}

impl From<&Trajectory> for TrajectoryFile {
    fn from(t: &Trajectory) -> Self {
        TrajectoryFile {
            dt: t.dt(),
            poses: t.poses().iter().map(pose_row).collect(),
        }
    }
}

impl From<&Scenario> for ScenarioFile {
    fn from(s: &Scenario) -> Self {
        let xy = |p: &Point2| [p.x, p.y];
        ScenarioFile {
            ego: EgoFile {
                pose: [s.ego.pose.x, s.ego.pose.y, s.ego.pose.yaw],
                speed: s.ego.speed,
                accel: s.ego.accel,
                width: s.ego.width,
                length: s.ego.length,
            },
            ego_history: s.ego_history.iter().map(pose_row).collect(),
            agents: s
                .agents
                .iter()
                .map(|a| AgentFile {
                    id: a.id.clone(),
                    width: a.width,
                    length: a.length,
                    track: a.track.iter().map(pose_row).collect(),
                    is_stationary: a.is_stationary,
                })
                .collect(),
            drivable_area: s.drivable_area.iter().map(|p| p.iter().map(xy).collect()).collect(),
            centerlines: s.centerlines.iter().map(|l| l.iter().map(xy).collect()).collect(),
            traffic_lights: s
                .traffic_lights
                .iter()
                .map(|l| LightFile {
                    stop_line: [xy(&l.stop_line[0]), xy(&l.stop_line[1])],
                    state: l.state,
                })
                .collect(),
            route: s.route.iter().map(xy).collect(),
            human_trajectory: (&s.human_trajectory).into(),
            prev_plan: s.prev_plan.as_ref().map(Into::into),
            camera: CameraFile {
                fx: s.camera.fx,
                fy: s.camera.fy,
                cx: s.camera.cx,
                cy: s.camera.cy,
                width: s.camera.width,
                height: s.camera.height,
                extrinsic: ExtrinsicFile {
                    rotation: s.camera.rotation,
                    translation: s.camera.translation,
                },
            },
            detections2d: DetectionsFile {
                lane_lines: s
                    .detections2d
                    .lane_lines
                    .iter()
                    .map(|l| l.iter().map(xy).collect())
                    .collect(),
                obstacles: s
                    .detections2d
                    .obstacles
                    .iter()
                    .map(|b| [b.min.x, b.min.y, b.max.x, b.max.y])
                    .collect(),
            },
            tags: s.tags.iter().cloned().collect(),
        }
    }
}
