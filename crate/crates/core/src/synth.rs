//! Procedural scenario generator.
//!
//! Scenes are laid out in a road frame where the ego starts at the origin
//! heading +x, which is also the ego frame, so camera detections are computed
//! there. The finished scene is then moved by a random rigid transform.
//! Templates cycle by index so any prefix of a generated set covers every kind.

use std::collections::BTreeSet;
use std::f64::consts::FRAC_PI_2;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::anchors::travel_distance;
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Aabb, Point2, Pose2};
use crate::scene::{
    save_scenario, Agent, CameraModel, Detections2D, EgoState, Horizon, LightState, Scenario, TrafficLight, Trajectory,
};

pub const LANE_WIDTH: f64 = 3.5;
pub const EGO_WIDTH: f64 = 2.0;
pub const EGO_LENGTH: f64 = 4.5;
const HISTORY: usize = 4;
const CAMERA_PITCH: f64 = 0.1;
const OBSTACLE_HEIGHT: f64 = 1.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    Straight,
    Curve,
    SharpCurve,
    Junction,
    LaneChange,
    OffRoad,
}

impl Template {
    pub const ALL: [Template; 6] = [
        Template::Straight,
        Template::Junction,
        Template::Curve,
        Template::LaneChange,
        Template::SharpCurve,
        Template::OffRoad,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::Straight => "straight",
            Template::Curve => "curve",
            Template::SharpCurve => "sharp_curve_road",
            Template::Junction => "junction",
            Template::LaneChange => "lane_change",
            Template::OffRoad => "off_road",
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Straight(f64),
    Arc { curvature: f64, length: f64 },
}

/// Piecewise straight/arc reference path starting at `s = -lead` on the x axis.
#[derive(Debug, Clone)]
struct RefPath {
    lead: f64,
    segments: Vec<Segment>,
}

impl RefPath {
    fn straight() -> Self {
        RefPath {
            lead: 60.0,
            segments: vec![Segment::Straight(200.0)],
        }
    }

    fn pose_at(&self, s: f64) -> Pose2 {
        let mut pose = Pose2::new(-self.lead, 0.0, 0.0);
        let mut remaining = s + self.lead;
        if remaining < 0.0 {
            return Pose2::new(s, 0.0, 0.0);
        }
        for seg in &self.segments {
            let (len, k) = match *seg {
                Segment::Straight(l) => (l, 0.0),
                Segment::Arc { curvature, length } => (length, curvature),
            };
            let step = remaining.min(len);
            pose = advance(pose, step, k);
            remaining -= step;
            if remaining <= 0.0 {
                return pose;
            }
        }
        advance(pose, remaining, 0.0)
    }

    fn length(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| match *s {
                Segment::Straight(l) => l,
                Segment::Arc { length, .. } => length,
            })
            .sum::<f64>()
            - self.lead
    }

    fn sample(&self, from: f64, to: f64, step: f64, offset: f64) -> Vec<Point2> {
        let n = ((to - from) / step).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| {
                let s = from + (to - from) * i as f64 / n as f64;
                self.pose_at(s).transform_point(Point2::new(0.0, offset))
            })
            .collect()
    }
}

fn advance(p: Pose2, ds: f64, k: f64) -> Pose2 {
    if k.abs() < 1e-12 {
        let h = p.heading();
        return Pose2::new(p.x + h.x * ds, p.y + h.y * ds, p.yaw);
    }
    let yaw1 = p.yaw + k * ds;
    Pose2::new(
        p.x + (yaw1.sin() - p.yaw.sin()) / k,
        p.y - (yaw1.cos() - p.yaw.cos()) / k,
        yaw1,
    )
}

fn smoothstep(u: f64) -> f64 {
    let u = u.clamp(0.0, 1.0);
    u * u * (3.0 - 2.0 * u)
}

/// Human motion: longitudinal profile along a path plus a lateral offset.
struct Motion<'a> {
    path: &'a RefPath,
    speed: f64,
    accel: f64,
    lateral: Box<dyn Fn(f64) -> f64 + 'a>,
}

impl Motion<'_> {
    fn s_at(&self, t: f64) -> f64 {
        if t < 0.0 {
            self.speed * t
        } else {
            travel_distance(self.speed, self.accel, t)
        }
    }

    fn pose_at(&self, t: f64) -> Pose2 {
        let base = self.path.pose_at(self.s_at(t));
        let p = base.transform_point(Point2::new(0.0, (self.lateral)(t)));
        Pose2::new(p.x, p.y, base.yaw)
    }

    fn future(&self, horizon: &Horizon) -> Result<Trajectory> {
        let pts: Vec<Point2> = (1..=horizon.steps)
            .map(|k| self.pose_at(k as f64 * horizon.dt).position())
            .collect();
        Trajectory::from_positions(&pts, horizon.dt, Some(self.pose_at(0.0)))
    }
}

fn constant_agent(id: String, start: Pose2, speed: f64, horizon: &Horizon) -> Agent {
    let h = start.heading();
    let track = (0..=horizon.steps)
        .map(|k| {
            let d = speed * k as f64 * horizon.dt;
            Pose2::new(start.x + h.x * d, start.y + h.y * d, start.yaw)
        })
        .collect();
    Agent {
        id,
        width: 1.9,
        length: 4.6,
        track,
        is_stationary: speed == 0.0,
    }
}

/// Road polygon around a path, CCW: right edge forward, left edge back.
fn road_polygon(path: &RefPath, from: f64, to: f64, left: f64, right: f64) -> Vec<Point2> {
    let mut poly = path.sample(from, to, 2.0, -right);
    let mut l = path.sample(from, to, 2.0, left);
    l.reverse();
    poly.extend(l);
    poly
}

fn rect(x0: f64, x1: f64, y0: f64, y1: f64) -> Vec<Point2> {
    vec![
        Point2::new(x0, y0),
        Point2::new(x1, y0),
        Point2::new(x1, y1),
        Point2::new(x0, y1),
    ]
}

struct Layout {
    drivable: Vec<Vec<Point2>>,
    centerlines: Vec<Vec<Point2>>,
    route: Vec<Point2>,
    /// Road edges visible to the camera, in the ego frame.
    edges: Vec<Vec<Point2>>,
    lights: Vec<TrafficLight>,
    agents: Vec<Agent>,
    tags: BTreeSet<String>,
}

/// Generates scenario `index` of the set seeded by `seed`.
pub fn generate_scenario(seed: u64, index: usize, horizon: &Horizon) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let template = Template::ALL[index % Template::ALL.len()];
    let id = format!("scene_{index:05}");
    let scene = build(template, &id, &mut rng, horizon)?;
    let rigid = Pose2::new(
        rng.gen_range(-500.0..500.0),
        rng.gen_range(-500.0..500.0),
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    );
    let scene = scene.transformed(&rigid);
    scene.validate(horizon)?;
    Ok(scene)
}

/// Writes `count` scenarios as `scene_00000.json`, ... into `out_dir`.
pub fn generate_dataset(out_dir: &Path, count: usize, seed: u64, horizon: &Horizon) -> Result<Vec<Scenario>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let s = generate_scenario(seed, i, horizon)?;
        save_scenario(&out_dir.join(format!("{}.json", s.id)), &s)?;
        out.push(s);
    }
    Ok(out)
}

fn build(template: Template, id: &str, rng: &mut ChaCha8Rng, horizon: &Horizon) -> Result<Scenario> {
    let mut tags = BTreeSet::new();
    tags.insert(template.name().to_string());
    let straight = RefPath::straight();
    let (path, motion_speed, accel, lateral, layout): (RefPath, f64, f64, Box<dyn Fn(f64) -> f64>, Layout) =
        match template {
            Template::Straight | Template::LaneChange | Template::OffRoad => {
                let speed: f64 = match template {
                    Template::LaneChange => rng.gen_range(5.0..10.0),
                    _ => rng.gen_range(2.0..13.0),
                };
                let mut agents = Vec::new();
                let mut accel = rng.gen_range(-0.8..0.8);
                let lateral: Box<dyn Fn(f64) -> f64> = match template {
                    Template::LaneChange => {
                        let t0: f64 = rng.gen_range(0.0..1.0);
                        let x_park = (speed * (t0 + 2.5) + 6.0).max(20.0) + rng.gen_range(0.0..5.0);
                        agents.push(constant_agent(
                            "parked".into(),
                            Pose2::new(x_park, 0.0, 0.0),
                            0.0,
                            horizon,
                        ));
                        accel = 0.0;
                        Box::new(move |t| LANE_WIDTH * smoothstep((t - t0) / 3.0))
                    }
                    Template::OffRoad => {
                        let d = rng.gen_range(2.6..3.5);
                        Box::new(move |t| -d * smoothstep(t / 4.0))
                    }
                    _ => {
                        if rng.gen_bool(0.6) {
                            let lead_speed = (speed + rng.gen_range(-1.0..2.0)).max(0.0);
                            let gap = rng.gen_range(12.0..30.0);
                            agents.push(constant_agent(
                                "lead".into(),
                                Pose2::new(gap, 0.0, 0.0),
                                lead_speed,
                                horizon,
                            ));
                            accel = ((lead_speed - speed) / 4.0).clamp(-1.5, 1.0);
                        }
                        Box::new(|_| 0.0)
                    }
                };
                if template != Template::LaneChange && rng.gen_bool(0.5) {
                    let x = rng.gen_range(-15.0..30.0);
                    let v = if rng.gen_bool(0.3) {
                        0.0
                    } else {
                        rng.gen_range(4.0..12.0)
                    };
                    agents.push(constant_agent(
                        "left".into(),
                        Pose2::new(x, LANE_WIDTH, 0.0),
                        v,
                        horizon,
                    ));
                }
                let layout = Layout {
                    drivable: vec![rect(-60.0, 140.0, -0.5 * LANE_WIDTH, 1.5 * LANE_WIDTH)],
                    centerlines: vec![
                        straight.sample(-60.0, 140.0, 10.0, 0.0),
                        straight.sample(-60.0, 140.0, 10.0, LANE_WIDTH),
                    ],
                    route: straight.sample(
                        -10.0,
                        130.0,
                        10.0,
                        if template == Template::LaneChange {
                            LANE_WIDTH
                        } else {
                            0.0
                        },
                    ),
                    edges: vec![
                        straight.sample(2.0, 80.0, 1.0, -0.5 * LANE_WIDTH),
                        straight.sample(2.0, 80.0, 1.0, 1.5 * LANE_WIDTH),
                    ],
                    lights: Vec::new(),
                    agents,
                    tags: BTreeSet::new(),
                };
                (straight.clone(), speed, accel, lateral, layout)
            }
            Template::Curve | Template::SharpCurve => {
                let sharp = template == Template::SharpCurve;
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let k: f64 = if sharp {
                    rng.gen_range(0.21..0.28)
                } else {
                    rng.gen_range(0.01..0.06)
                };
                let v_max = (3.0 / k).sqrt().min(13.0);
                let speed = rng.gen_range((0.4 * v_max).max(1.5)..v_max);
                let start = rng.gen_range(0.0..8.0);
                let turn = if sharp { FRAC_PI_2 } else { (k * 60.0).min(FRAC_PI_2) };
                let path = RefPath {
                    lead: 60.0,
                    segments: vec![
                        Segment::Straight(60.0 + start),
                        Segment::Arc {
                            curvature: sign * k,
                            length: turn / k,
                        },
                        Segment::Straight(80.0),
                    ],
                };
                let end = path.length();
                let (left, right) = if sharp {
                    (2.5, 2.5)
                } else {
                    (1.5 * LANE_WIDTH, 0.5 * LANE_WIDTH)
                };
                let mut centerlines = vec![path.sample(-60.0, end, 2.0, 0.0)];
                if !sharp {
                    centerlines.push(path.sample(-60.0, end, 2.0, LANE_WIDTH));
                }
                let edge_end = visible_edge_end(&path, 80.0);
                let mut agents = Vec::new();
                if !sharp && rng.gen_bool(0.5) {
                    let s0 = rng.gen_range(15.0..35.0);
                    let mut lead = constant_agent("lead".into(), path.pose_at(s0), speed, horizon);
                    lead.track = (0..=horizon.steps)
                        .map(|j| path.pose_at(s0 + speed * j as f64 * horizon.dt))
                        .collect();
                    agents.push(lead);
                }
                let layout = Layout {
                    drivable: vec![road_polygon(&path, -60.0, end, left, right)],
                    centerlines,
                    route: path.sample(-10.0, end, 2.0, 0.0),
                    edges: vec![
                        path.sample(2.0, edge_end, 1.0, -right),
                        path.sample(2.0, edge_end, 1.0, left),
                    ],
                    lights: Vec::new(),
                    agents,
                    tags: BTreeSet::new(),
                };
                (path, speed, 0.0, Box::new(|_| 0.0), layout)
            }
            Template::Junction => junction(rng, horizon)?,
        };
    for t in layout.tags.iter() {
        tags.insert(t.clone());
    }

    let motion = Motion {
        path: &path,
        speed: motion_speed,
        accel,
        lateral,
    };
    let ego_pose = motion.pose_at(0.0);
    let human = motion.future(horizon)?;
    let history: Vec<Pose2> = (1..=HISTORY)
        .rev()
        .map(|m| motion.pose_at(-(m as f64) * horizon.dt))
        .collect();
    let prev_plan = if rng.gen_bool(0.7) {
        let pts: Vec<Point2> = (0..horizon.steps)
            .map(|j| motion.pose_at(j as f64 * horizon.dt).position())
            .collect();
        let mut prev = Trajectory::from_positions(&pts, horizon.dt, Some(motion.pose_at(-horizon.dt)))?;
        if rng.gen_bool(0.3) {
            // Previous plan braked harder than the current one.
            let extra = rng.gen_range(0.5..2.5);
            let poses = prev
                .poses()
                .iter()
                .enumerate()
                .map(|(j, p)| {
                    let t = j as f64 * horizon.dt;
                    let back = 0.5 * extra * t * t;
                    let h = p.heading();
                    Pose2::new(p.x - h.x * back, p.y - h.y * back, p.yaw)
                })
                .collect();
            prev = Trajectory::new(poses, horizon.dt)?;
        }
        Some(prev)
    } else {
        None
    };

    let camera = CameraModel::forward_facing(1.5, 1.5, CAMERA_PITCH);
    let detections2d = detections(&camera, &layout.edges, &layout.agents);
    Ok(Scenario {
        id: id.to_string(),
        ego: EgoState {
            pose: ego_pose,
            speed: motion_speed,
            accel,
            width: EGO_WIDTH,
            length: EGO_LENGTH,
        },
        ego_history: history,
        agents: layout.agents,
        drivable_area: layout.drivable,
        centerlines: layout.centerlines,
        traffic_lights: layout.lights,
        route: layout.route,
        human_trajectory: human,
        prev_plan,
        camera,
        detections2d,
        tags,
    })
}

/// Arc length up to which the road heading stays within 0.6 rad of the ego's.
fn visible_edge_end(path: &RefPath, max: f64) -> f64 {
    let mut s = 2.0;
    while s < max && wrap_angle(path.pose_at(s).yaw).abs() < 0.6 {
        s += 1.0;
    }
    s
}

#[allow(clippy::type_complexity)]
fn junction(rng: &mut ChaCha8Rng, horizon: &Horizon) -> Result<(RefPath, f64, f64, Box<dyn Fn(f64) -> f64>, Layout)> {
    let red = rng.gen_bool(0.5);
    let mut tags = BTreeSet::new();
    if rng.gen_bool(0.3) {
        tags.insert("occluded_junction".to_string());
    }
    let (speed, accel, xj, path, exit): (f64, f64, f64, RefPath, Vec<Point2>);
    let half_box = 9.0;
    if red {
        speed = rng.gen_range(4.0..12.0);
        let decel = rng.gen_range(1.5..2.5);
        let stop_dist = speed * speed / (2.0 * decel);
        let x_stop = stop_dist + 0.5 * EGO_LENGTH + 0.5;
        accel = -decel;
        xj = x_stop + 1.0 + half_box;
        path = RefPath::straight();
        exit = RefPath::straight().sample(-10.0, 130.0, 10.0, 0.0);
    } else {
        let turn = rng.gen_range(0..3);
        xj = rng.gen_range(18.0..30.0);
        accel = 0.0;
        match turn {
            0 => {
                speed = rng.gen_range(5.0..12.0);
                path = RefPath::straight();
                exit = path.sample(-10.0, 130.0, 10.0, 0.0);
            }
            1 => {
                // Left turn into the northbound lane.
                let r = 9.0;
                speed = rng.gen_range(3.0..5.0);
                let x0 = xj + 0.5 * LANE_WIDTH - r;
                path = RefPath {
                    lead: 60.0,
                    segments: vec![
                        Segment::Straight(60.0 + x0),
                        Segment::Arc {
                            curvature: 1.0 / r,
                            length: r * FRAC_PI_2,
                        },
                        Segment::Straight(80.0),
                    ],
                };
                exit = path.sample(-10.0, path.length(), 2.0, 0.0);
                tags.insert("unprotected_turn".to_string());
            }
            _ => {
                let r = 5.0;
                speed = rng.gen_range(3.0..3.8);
                let x0 = xj - 0.5 * LANE_WIDTH - r;
                path = RefPath {
                    lead: 60.0,
                    segments: vec![
                        Segment::Straight(60.0 + x0),
                        Segment::Arc {
                            curvature: -1.0 / r,
                            length: r * FRAC_PI_2,
                        },
                        Segment::Straight(80.0),
                    ],
                };
                exit = path.sample(-10.0, path.length(), 2.0, 0.0);
            }
        }
    }
    let x_entry = xj - half_box;
    let mut drivable = vec![
        rect(-60.0, x_entry + 0.5, -0.5 * LANE_WIDTH, 1.5 * LANE_WIDTH),
        rect(x_entry, xj + half_box, -half_box, half_box + LANE_WIDTH),
        rect(xj + half_box - 0.5, xj + 100.0, -0.5 * LANE_WIDTH, 1.5 * LANE_WIDTH),
        rect(xj - LANE_WIDTH, xj + LANE_WIDTH, -80.0, -half_box + 0.5),
        rect(xj - LANE_WIDTH, xj + LANE_WIDTH, half_box + LANE_WIDTH - 0.5, 80.0),
    ];
    drivable.retain(|p| p.len() == 4);
    let hl = 0.5 * LANE_WIDTH;
    let mut centerlines = vec![
        vec![Point2::new(-60.0, 0.0), Point2::new(xj + 100.0, 0.0)],
        vec![Point2::new(-60.0, LANE_WIDTH), Point2::new(xj + 100.0, LANE_WIDTH)],
        vec![Point2::new(xj + hl, -80.0), Point2::new(xj + hl, 80.0)],
        vec![Point2::new(xj - hl, 80.0), Point2::new(xj - hl, -80.0)],
    ];
    if !red {
        centerlines.push(exit.clone());
    }
    let x_stop = x_entry - 1.0;
    let lights = vec![TrafficLight {
        stop_line: [Point2::new(x_stop, -hl), Point2::new(x_stop, hl)],
        state: if red { LightState::Red } else { LightState::Green },
    }];
    let mut agents = Vec::new();
    if red {
        let y0 = -rng.gen_range(10.0..25.0);
        let v = rng.gen_range(6.0..10.0);
        agents.push(constant_agent(
            "cross".into(),
            Pose2::new(xj + hl, y0, FRAC_PI_2),
            v,
            horizon,
        ));
    } else {
        agents.push(constant_agent(
            "waiting".into(),
            Pose2::new(xj + hl, -half_box - 4.0, FRAC_PI_2),
            0.0,
            horizon,
        ));
    }
    let edges = vec![
        RefPath::straight().sample(2.0, x_entry, 1.0, -hl),
        RefPath::straight().sample(2.0, x_entry, 1.0, 3.0 * hl),
    ];
    let layout = Layout {
        drivable,
        centerlines,
        route: exit,
        edges,
        lights,
        agents,
        tags,
    };
    Ok((path, speed, accel, Box::new(|_| 0.0), layout))
}

/// Projects road edges to lane-line polylines (in-image parts only) and
/// stationary agents to obstacle boxes.
fn detections(cam: &CameraModel, edges: &[Vec<Point2>], agents: &[Agent]) -> Detections2D {
    let near = 0.5;
    let (w, h) = (cam.width as f64, cam.height as f64);
    let inside = |p: &Point2| p.x >= 0.0 && p.x <= w && p.y >= 0.0 && p.y <= h;
    let mut lane_lines = Vec::new();
    for edge in edges {
        let pts: Vec<Point2> = edge
            .iter()
            .filter_map(|p| cam.project_ego_point([p.x, p.y, 0.0], near))
            .filter(inside)
            .collect();
        if pts.len() >= 2 {
            lane_lines.push(pts);
        }
    }
    let mut obstacles = Vec::new();
    for a in agents.iter().filter(|a| a.is_stationary) {
        let fp = crate::geometry::ego_footprint(&a.track[0], a.width, a.length);
        let mut proj = Vec::with_capacity(8);
        for c in fp.corners {
            for z in [0.0, OBSTACLE_HEIGHT] {
                proj.push(cam.project_ego_point([c.x, c.y, z], near));
            }
        }
        let Some(proj) = proj.into_iter().collect::<Option<Vec<Point2>>>() else {
            continue;
        };
        let lo = proj.iter().fold(Point2::new(f64::INFINITY, f64::INFINITY), |m, p| {
            Point2::new(m.x.min(p.x), m.y.min(p.y))
        });
        let hi = proj
            .iter()
            .fold(Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY), |m, p| {
                Point2::new(m.x.max(p.x), m.y.max(p.y))
            });
        if hi.x < 0.0 || lo.x > w || hi.y < 0.0 || lo.y > h {
            continue;
        }
        obstacles.push(Aabb {
            min: cam.clamp_to_image(lo),
            max: cam.clamp_to_image(hi),
        });
    }
    Detections2D { lane_lines, obstacles }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arc_path_turns_quarter() {
        let r = 5.0;
        let p = RefPath {
            lead: 0.0,
            segments: vec![Segment::Arc {
                curvature: 1.0 / r,
                length: r * FRAC_PI_2,
            }],
        };
        let end = p.pose_at(r * FRAC_PI_2);
        assert!((end.x - r).abs() < 1e-9 && (end.y - r).abs() < 1e-9);
        assert!((end.yaw - FRAC_PI_2).abs() < 1e-9);
    }

    #[test]
    fn every_template_validates() {
        let h = Horizon::default();
        for i in 0..24 {
            generate_scenario(7, i, &h).unwrap();
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let h = Horizon::default();
        let a = generate_scenario(3, 5, &h).unwrap();
        let b = generate_scenario(3, 5, &h).unwrap();
        assert_eq!(a.to_json_string(), b.to_json_string());
    }
}
