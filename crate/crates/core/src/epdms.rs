//! Rule-based driving-quality oracle.
//!
//! A trajectory is rolled out open-loop: the ego occupies `ego.pose` at step 0
//! and the trajectory's poses at steps `1..=T`; agents replay their recorded
//! tracks. Nine sub-metrics are computed for both the candidate and the human
//! reference, each candidate term is forgiven when the human fails it, and the
//! result is aggregated as
//!
//! `epdms = NC·DAC·DDC·TLC · (Σ w_m m) / (Σ w_m)` over `m ∈ {TTC, EP, HC, LK, EC}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    ego_footprint, obb_intersects, point_in_polygon, project_onto_polyline, segments_intersect, wrap_angle,
    OrientedRect, Point2, Pose2,
};
use crate::scene::{LightState, Scenario, Trajectory};

/// Per-term weights of the averaged part of the score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricWeights {
    pub ttc: f64,
    pub ep: f64,
    pub hc: f64,
    pub lk: f64,
    pub ec: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self {
            ttc: 1.0,
            ep: 1.0,
            hc: 1.0,
            lk: 1.0,
            ec: 1.0,
        }
    }
}

impl MetricWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.ttc, self.ep, self.hc, self.lk, self.ec];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("metric weights must be finite and non-negative".into()));
        }
        if all.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("metric weights sum to zero".into()));
        }
        Ok(())
    }
}

/// Thresholds of every sub-metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricConfig {
    /// Below this speed (m/s) a collision from behind is not the ego's fault.
    pub stopped_speed: f64,
    /// Wrong-way distance (m) still scored 1.
    pub ddc_full: f64,
    /// Wrong-way distance (m) still scored 0.5.
    pub ddc_half: f64,
    /// Floor of the progress normalizer (m).
    pub ep_min_progress: f64,
    /// Human progress (m) below which progress is not scored.
    pub ep_human_epsilon: f64,
    pub ttc_horizon: f64,
    pub ttc_step: f64,
    /// Minimum ego speed (m/s) for a time-to-collision check.
    pub ttc_min_speed: f64,
    pub max_lon_accel: f64,
    pub max_lat_accel: f64,
    pub max_jerk: f64,
    pub max_yaw_rate: f64,
    /// Largest lateral offset (m) from a centerline that counts as lane keeping.
    pub lk_max_offset: f64,
    /// Largest acceleration difference (m/s²) against the previous plan.
    pub ec_max_accel_diff: f64,
    pub weights: MetricWeights,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            stopped_speed: 0.1,
            ddc_full: 2.0,
            ddc_half: 6.0,
            ep_min_progress: 5.0,
            ep_human_epsilon: 0.1,
            ttc_horizon: 1.0,
            ttc_step: 0.1,
            ttc_min_speed: 0.1,
            max_lon_accel: 4.0,
            max_lat_accel: 4.0,
            max_jerk: 8.0,
            max_yaw_rate: 1.0,
            lk_max_offset: 0.5,
            ec_max_accel_diff: 2.0,
            weights: MetricWeights::default(),
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("ttc_horizon", self.ttc_horizon),
            ("ttc_step", self.ttc_step),
            ("ep_min_progress", self.ep_min_progress),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("metrics.{name} must be positive, got {v}")));
            }
        }
        if !(self.ddc_full <= self.ddc_half) {
            return Err(Error::Config(
                "metrics.ddc_full must not exceed metrics.ddc_half".into(),
            ));
        }
        self.weights.validate()
    }

    fn ttc_samples(&self) -> usize {
        (self.ttc_horizon / self.ttc_step + 1e-9).floor() as usize
    }
}

/// The nine sub-metric values of one rollout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubMetrics {
    pub nc: f64,
    pub dac: f64,
    pub ddc: f64,
    pub tlc: f64,
    pub ep: f64,
    pub ttc: f64,
    pub hc: f64,
    pub lk: f64,
    pub ec: f64,
}

impl SubMetrics {
    pub const ALL_ONE: SubMetrics = SubMetrics {
        nc: 1.0,
        dac: 1.0,
        ddc: 1.0,
        tlc: 1.0,
        ep: 1.0,
        ttc: 1.0,
        hc: 1.0,
        lk: 1.0,
        ec: 1.0,
    };

    /// Values in the display order `NC DAC DDC TLC EP TTC LK HC EC`.
    pub fn as_array(&self) -> [f64; 9] {
        [
            self.nc, self.dac, self.ddc, self.tlc, self.ep, self.ttc, self.lk, self.hc, self.ec,
        ]
    }

    /// Inverse of [`SubMetrics::as_array`].
    pub fn from_array(v: [f64; 9]) -> Self {
        let [nc, dac, ddc, tlc, ep, ttc, lk, hc, ec] = v;
        Self {
            nc,
            dac,
            ddc,
            tlc,
            ep,
            ttc,
            hc,
            lk,
            ec,
        }
    }

    pub const NAMES: [&'static str; 9] = ["nc", "dac", "ddc", "tlc", "ep", "ttc", "lk", "hc", "ec"];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub agent: SubMetrics,
    pub human: SubMetrics,
    pub filtered: SubMetrics,
    pub epdms: f64,
}

/// Full credit when the human reference also scores zero on a term.
pub fn filter_metric(agent_value: f64, human_value: f64) -> f64 {
    if human_value == 0.0 {
        1.0
    } else {
        agent_value
    }
}

pub fn filter_all(agent: &SubMetrics, human: &SubMetrics) -> SubMetrics {
    SubMetrics {
        nc: filter_metric(agent.nc, human.nc),
        dac: filter_metric(agent.dac, human.dac),
        ddc: filter_metric(agent.ddc, human.ddc),
        tlc: filter_metric(agent.tlc, human.tlc),
        ep: filter_metric(agent.ep, human.ep),
        ttc: filter_metric(agent.ttc, human.ttc),
        hc: filter_metric(agent.hc, human.hc),
        lk: filter_metric(agent.lk, human.lk),
        ec: filter_metric(agent.ec, human.ec),
    }
}

pub fn aggregate_epdms(agent: &SubMetrics, human: &SubMetrics, w: &MetricWeights) -> Result<f64> {
    w.validate()?;
    let f = filter_all(agent, human);
    let product = f.nc * f.dac * f.ddc * f.tlc;
    let total = w.ttc + w.ep + w.hc + w.lk + w.ec;
    let mean = (w.ttc * f.ttc + w.ep * f.ep + w.hc * f.hc + w.lk * f.lk + w.ec * f.ec) / total;
    Ok((product * mean).clamp(0.0, 1.0))
}

/// Scores an ego-frame trajectory against the scenario.
pub fn evaluate(s: &Scenario, traj: &Trajectory, cfg: &MetricConfig) -> Result<MetricReport> {
    let agent = eval_submetrics(s, traj, cfg);
    let human = eval_scene_frame(s, &s.human_trajectory, cfg);
    let filtered = filter_all(&agent, &human);
    let epdms = aggregate_epdms(&agent, &human, &cfg.weights)?;
    Ok(MetricReport {
        agent,
        human,
        filtered,
        epdms,
    })
}

/// Sub-metrics of an ego-frame trajectory.
pub fn eval_submetrics(s: &Scenario, traj: &Trajectory, cfg: &MetricConfig) -> SubMetrics {
    eval_scene_frame(s, &s.ego_to_scene(traj), cfg)
}

/// Sub-metrics of a trajectory already expressed in the scenario frame.
pub fn eval_scene_frame(s: &Scenario, traj: &Trajectory, cfg: &MetricConfig) -> SubMetrics {
    let rollout = Rollout::new(s, traj);
    SubMetrics {
        nc: no_collision(s, &rollout, cfg),
        dac: drivable_compliance(s, &rollout),
        ddc: direction_compliance(s, &rollout, cfg),
        tlc: traffic_light_compliance(s, &rollout),
        ep: ego_progress(s, &rollout, traj_progress(s, &s.human_trajectory, s.ego.pose), cfg),
        ttc: time_to_collision(s, &rollout, cfg),
        hc: history_comfort(s, &rollout, cfg),
        lk: lane_keeping(s, &rollout, cfg),
        ec: extended_comfort(s, &rollout, cfg),
    }
}

/// Ego states at steps `0..=T` with backward-difference velocities.
struct Rollout {
    poses: Vec<Pose2>,
    footprints: Vec<OrientedRect>,
    /// `velocity[k]` is `(p_k - p_{k-1}) / dt`; `velocity[0]` is zero.
    velocity: Vec<Point2>,
    dt: f64,
}

impl Rollout {
    fn new(s: &Scenario, traj: &Trajectory) -> Self {
        let mut poses = Vec::with_capacity(traj.len() + 1);
        poses.push(s.ego.pose);
        poses.extend_from_slice(traj.poses());
        let footprints = poses
            .iter()
            .map(|p| ego_footprint(p, s.ego.width, s.ego.length))
            .collect();
        let dt = traj.dt();
        let mut velocity = vec![Point2::default()];
        for w in poses.windows(2) {
            velocity.push((w[1].position() - w[0].position()) * (1.0 / dt));
        }
        Self {
            poses,
            footprints,
            velocity,
            dt,
        }
    }

    fn steps(&self) -> std::ops::RangeInclusive<usize> {
        1..=self.poses.len() - 1
    }
}

fn no_collision(s: &Scenario, r: &Rollout, cfg: &MetricConfig) -> f64 {
    for k in r.steps() {
        let pose = r.poses[k];
        let speed = r.velocity[k].norm();
        for a in &s.agents {
            let Some(ap) = a.track.get(k) else { continue };
            let other = ego_footprint(ap, a.width, a.length);
            if !obb_intersects(&r.footprints[k], &other) {
                continue;
            }
            let heading = pose.heading();
            let rear_axle = pose.position() - heading * (0.25 * s.ego.length);
            let behind = (ap.position() - rear_axle).dot(heading) < 0.0;
            if !(speed < cfg.stopped_speed && behind) {
                return 0.0;
            }
        }
    }
    1.0
}

fn drivable_compliance(s: &Scenario, r: &Rollout) -> f64 {
    for k in r.steps() {
        for c in r.footprints[k].corners {
            if !s.drivable_area.iter().any(|poly| point_in_polygon(c, poly)) {
                return 0.0;
            }
        }
    }
    1.0
}

/// Direction of the centerline segment nearest to `p`; earlier lines win ties.
fn nearest_lane(s: &Scenario, p: Point2) -> Option<(f64, Point2)> {
    let mut best: Option<(f64, Point2)> = None;
    for line in &s.centerlines {
        if let Some(pr) = project_onto_polyline(p, line) {
            if best.is_none_or(|(d, _)| pr.distance < d) {
                best = Some((pr.distance, pr.direction));
            }
        }
    }
    best
}

fn direction_compliance(s: &Scenario, r: &Rollout, cfg: &MetricConfig) -> f64 {
    if s.centerlines.is_empty() {
        return 1.0;
    }
    let mut wrong_way = 0.0;
    for k in r.steps() {
        let Some((_, dir)) = nearest_lane(s, r.poses[k].position()) else {
            continue;
        };
        let along = (r.poses[k].position() - r.poses[k - 1].position()).dot(dir);
        if along < 0.0 {
            wrong_way -= along;
        }
    }
    if wrong_way < cfg.ddc_full {
        1.0
    } else if wrong_way < cfg.ddc_half {
        0.5
    } else {
        0.0
    }
}

fn rect_touches_segment(rect: &OrientedRect, a: Point2, b: Point2) -> bool {
    if rect.contains(a) || rect.contains(b) {
        return true;
    }
    let c = rect.corners;
    (0..4).any(|i| segments_intersect(a, b, c[i], c[(i + 1) % 4]))
}

fn traffic_light_compliance(s: &Scenario, r: &Rollout) -> f64 {
    for light in s.traffic_lights.iter().filter(|l| l.state == LightState::Red) {
        let [a, b] = light.stop_line;
        for k in r.steps() {
            let path_crosses = segments_intersect(r.poses[k - 1].position(), r.poses[k].position(), a, b);
            if path_crosses || rect_touches_segment(&r.footprints[k], a, b) {
                return 0.0;
            }
        }
    }
    1.0
}

/// Route progress between `start` and the final pose of a scenario-frame trajectory.
pub fn traj_progress(s: &Scenario, traj: &Trajectory, start: Pose2) -> f64 {
    let end = traj.poses()[traj.len() - 1];
    match (
        project_onto_polyline(start.position(), &s.route),
        project_onto_polyline(end.position(), &s.route),
    ) {
        (Some(a), Some(b)) => b.arc_length - a.arc_length,
        _ => 0.0,
    }
}

fn ego_progress(s: &Scenario, r: &Rollout, human_progress: f64, cfg: &MetricConfig) -> f64 {
    if human_progress < cfg.ep_human_epsilon {
        return 1.0;
    }
    let end = r.poses[r.poses.len() - 1].position();
    let progress = match (
        project_onto_polyline(r.poses[0].position(), &s.route),
        project_onto_polyline(end, &s.route),
    ) {
        (Some(a), Some(b)) => b.arc_length - a.arc_length,
        _ => 0.0,
    };
    (progress / human_progress.max(cfg.ep_min_progress)).clamp(0.0, 1.0)
}

fn time_to_collision(s: &Scenario, r: &Rollout, cfg: &MetricConfig) -> f64 {
    let samples = cfg.ttc_samples();
    for k in r.steps() {
        let v = r.velocity[k];
        if v.norm() < cfg.ttc_min_speed {
            continue;
        }
        for a in &s.agents {
            let (Some(now), Some(prev)) = (a.track.get(k), a.track.get(k - 1)) else {
                continue;
            };
            let va = (now.position() - prev.position()) * (1.0 / r.dt);
            let agent_rect = ego_footprint(now, a.width, a.length);
            for i in 1..=samples {
                let t = i as f64 * cfg.ttc_step;
                let ego = r.footprints[k].translated(v * t);
                if obb_intersects(&ego, &agent_rect.translated(va * t)) {
                    return 0.0;
                }
            }
        }
    }
    1.0
}

/// Finite-difference comfort over the last two history poses, the current pose
/// and the rollout.
fn history_comfort(s: &Scenario, r: &Rollout, cfg: &MetricConfig) -> f64 {
    let hist = &s.ego_history[s.ego_history.len().saturating_sub(2)..];
    let q: Vec<Pose2> = hist.iter().chain(&r.poses).copied().collect();
    let dt = r.dt;
    let tol = 1e-9;
    for i in 1..q.len() {
        let yaw_rate = wrap_angle(q[i].yaw - q[i - 1].yaw) / dt;
        if yaw_rate.abs() > cfg.max_yaw_rate + tol {
            return 0.0;
        }
    }
    for i in 2..q.len() {
        let acc = second_difference(q[i - 2].position(), q[i - 1].position(), q[i].position(), dt);
        let heading = q[i - 1].heading();
        if acc.dot(heading).abs() > cfg.max_lon_accel + tol || heading.cross(acc).abs() > cfg.max_lat_accel + tol {
            return 0.0;
        }
    }
    for i in 3..q.len() {
        let a1 = second_difference(q[i - 2].position(), q[i - 1].position(), q[i].position(), dt);
        let a0 = second_difference(q[i - 3].position(), q[i - 2].position(), q[i - 1].position(), dt);
        if ((a1 - a0) * (1.0 / dt)).norm() > cfg.max_jerk + tol {
            return 0.0;
        }
    }
    1.0
}

fn second_difference(a: Point2, b: Point2, c: Point2, dt: f64) -> Point2 {
    (c - b * 2.0 + a) * (1.0 / (dt * dt))
}

fn lane_keeping(s: &Scenario, r: &Rollout, cfg: &MetricConfig) -> f64 {
    if s.centerlines.is_empty() {
        return 1.0;
    }
    let steps = r.poses.len() - 1;
    let kept = r
        .steps()
        .filter(|&k| nearest_lane(s, r.poses[k].position()).is_some_and(|(d, _)| d <= cfg.lk_max_offset))
        .count();
    kept as f64 / steps as f64
}

/// Compares accelerations against the previous plan. Previous-plan pose `j`
/// falls at the current time `j·dt`, so it aligns with rollout step `j`.
fn extended_comfort(s: &Scenario, r: &Rollout, cfg: &MetricConfig) -> f64 {
    let Some(prev) = &s.prev_plan else { return 1.0 };
    let overlap = prev.len().min(r.poses.len());
    let dt = r.dt;
    for m in 1..overlap.saturating_sub(1) {
        let pp = prev.poses();
        let cur = second_difference(
            r.poses[m - 1].position(),
            r.poses[m].position(),
            r.poses[m + 1].position(),
            dt,
        );
        let old = second_difference(pp[m - 1].position(), pp[m].position(), pp[m + 1].position(), dt);
        if (cur - old).norm() > cfg.ec_max_accel_diff + 1e-9 {
            return 0.0;
        }
    }
    1.0
}
