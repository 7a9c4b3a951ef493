//! Independent oracles shared by the integration tests. Nothing here calls the
//! library routine it is used to check.
#![allow(dead_code)]

use planscore::epdms::{MetricConfig, MetricWeights, SubMetrics};
use planscore::geometry::{Point2, Pose2};
use planscore::nn::ParamStore;
use planscore::scene::{LightState, Scenario, Trajectory};

// ---------------------------------------------------------------- aggregation

/// Metric values in table order: NC DAC DDC TLC EP TTC LK HC EC.
pub fn reference_filter(agent: f64, human: f64) -> f64 {
    if human == 0.0 {
        1.0
    } else {
        agent
    }
}

pub fn reference_epdms(agent: [f64; 9], human: [f64; 9], w: &MetricWeights) -> f64 {
    let mut f = [0.0; 9];
    for i in 0..9 {
        f[i] = reference_filter(agent[i], human[i]);
    }
    let product = f[0] * f[1] * f[2] * f[3];
    // EP TTC LK HC EC
    let weights = [w.ep, w.ttc, w.lk, w.hc, w.ec];
    let mut num = 0.0;
    let mut den = 0.0;
    for (k, wk) in weights.iter().enumerate() {
        num += wk * f[4 + k];
        den += wk;
    }
    let v = product * num / den;
    v.max(0.0).min(1.0)
}

// ------------------------------------------------------------------ geometry

pub fn corners(center: Point2, yaw: f64, width: f64, length: f64) -> [Point2; 4] {
    let (s, c) = yaw.sin_cos();
    let local = [
        (-length / 2.0, -width / 2.0),
        (length / 2.0, -width / 2.0),
        (length / 2.0, width / 2.0),
        (-length / 2.0, width / 2.0),
    ];
    local.map(|(x, y)| Point2::new(center.x + c * x - s * y, center.y + s * x + c * y))
}

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) - 1e-9 && p.x <= a.x.max(b.x) + 1e-9 && p.y >= a.y.min(b.y) - 1e-9 && p.y <= a.y.max(b.y) + 1e-9
}

pub fn seg_cross(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

fn dist_to_seg(p: Point2, a: Point2, b: Point2) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let l2 = dx * dx + dy * dy;
    let t = if l2 == 0.0 {
        0.0
    } else {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / l2).max(0.0).min(1.0)
    };
    let (cx, cy) = (a.x + t * dx, a.y + t * dy);
    ((p.x - cx).powi(2) + (p.y - cy).powi(2)).sqrt()
}

/// Winding-number containment; points within 1e-9 of an edge count as inside.
pub fn inside_polygon(p: Point2, poly: &[Point2]) -> bool {
    if poly.len() < 3 {
        return false;
    }
    let mut winding = 0i32;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        if dist_to_seg(p, a, b) <= 1e-9 {
            return true;
        }
        if a.y <= p.y {
            if b.y > p.y && orient(a, b, p) > 0.0 {
                winding += 1;
            }
        } else if b.y <= p.y && orient(a, b, p) < 0.0 {
            winding -= 1;
        }
    }
    winding != 0
}

/// Convex polygons overlap if any edges cross or one holds a vertex of the other.
pub fn convex_overlap(a: &[Point2], b: &[Point2]) -> bool {
    for i in 0..a.len() {
        for j in 0..b.len() {
            if seg_cross(a[i], a[(i + 1) % a.len()], b[j], b[(j + 1) % b.len()]) {
                return true;
            }
        }
    }
    inside_polygon(a[0], b) || inside_polygon(b[0], a)
}

/// Dense-grid estimate of whether two rectangles share area.
pub fn monte_carlo_overlap(a: &[Point2; 4], b: &[Point2; 4], per_axis: usize) -> bool {
    let lo_x = a.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let hi_x = a.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let lo_y = a.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let hi_y = a.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    for i in 0..per_axis {
        for j in 0..per_axis {
            let p = Point2::new(
                lo_x + (hi_x - lo_x) * (i as f64 + 0.5) / per_axis as f64,
                lo_y + (hi_y - lo_y) * (j as f64 + 0.5) / per_axis as f64,
            );
            if inside_polygon(p, a) && inside_polygon(p, b) {
                return true;
            }
        }
    }
    false
}

/// Closest point of a polyline: (distance, arc length, unit direction).
/// Earliest segment wins ties.
fn polyline_closest(p: Point2, line: &[Point2]) -> Option<(f64, f64, Point2)> {
    if line.len() < 2 {
        return None;
    }
    let mut best: Option<(f64, f64, Point2)> = None;
    let mut walked = 0.0;
    for w in line.windows(2) {
        let seg = w[1] - w[0];
        let len = seg.norm();
        let l2 = seg.norm_sq();
        let t = if l2 == 0.0 {
            0.0
        } else {
            ((p - w[0]).dot(seg) / l2).clamp(0.0, 1.0)
        };
        let c = w[0] + seg * t;
        let d = p.distance(c);
        if best.is_none() || d < best.unwrap().0 {
            let dir = if len > 0.0 {
                seg * (1.0 / len)
            } else {
                Point2::new(1.0, 0.0)
            };
            best = Some((d, walked + t * len, dir));
        }
        walked += len;
    }
    best
}

// ------------------------------------------------------- re-simulation oracle

/// Step-by-step walk over a scenario-frame trajectory, recomputing every
/// sub-metric with the helpers above.
pub fn resimulate(s: &Scenario, traj: &Trajectory, cfg: &MetricConfig) -> SubMetrics {
    let dt = traj.dt();
    let mut poses = vec![s.ego.pose];
    poses.extend(traj.poses().iter().copied());
    let t_steps = poses.len() - 1;
    let velocity = |k: usize| -> Point2 {
        if k == 0 {
            Point2::new(0.0, 0.0)
        } else {
            Point2::new((poses[k].x - poses[k - 1].x) / dt, (poses[k].y - poses[k - 1].y) / dt)
        }
    };
    let ego_box = |k: usize| corners(poses[k].position(), poses[k].yaw, s.ego.width, s.ego.length);

    let mut nc = 1.0;
    let mut dac = 1.0;
    let mut tlc = 1.0;
    let mut ttc = 1.0;
    let mut wrong_way = 0.0;
    let mut kept = 0usize;
    for k in 1..=t_steps {
        let p = poses[k];
        let v = velocity(k);
        let speed = (v.x * v.x + v.y * v.y).sqrt();
        let ebox = ego_box(k);

        for a in &s.agents {
            if k >= a.track.len() {
                continue;
            }
            let ap = a.track[k];
            let abox = corners(ap.position(), ap.yaw, a.width, a.length);
            if convex_overlap(&ebox, &abox) {
                let (hs, hc) = p.yaw.sin_cos();
                let axle = Point2::new(p.x - hc * 0.25 * s.ego.length, p.y - hs * 0.25 * s.ego.length);
                let rel = (ap.x - axle.x) * hc + (ap.y - axle.y) * hs;
                let exempt = speed < cfg.stopped_speed && rel < 0.0;
                if !exempt {
                    nc = 0.0;
                }
            }
            if speed >= cfg.ttc_min_speed {
                let prev = a.track[k - 1];
                let va = Point2::new((ap.x - prev.x) / dt, (ap.y - prev.y) / dt);
                let n = (cfg.ttc_horizon / cfg.ttc_step + 1e-9).floor() as usize;
                for i in 1..=n {
                    let t = i as f64 * cfg.ttc_step;
                    let e = ebox.map(|c| Point2::new(c.x + v.x * t, c.y + v.y * t));
                    let o = abox.map(|c| Point2::new(c.x + va.x * t, c.y + va.y * t));
                    if convex_overlap(&e, &o) {
                        ttc = 0.0;
                    }
                }
            }
        }

        for c in ebox {
            if !s.drivable_area.iter().any(|poly| inside_polygon(c, poly)) {
                dac = 0.0;
            }
        }

        for light in &s.traffic_lights {
            if light.state != LightState::Red {
                continue;
            }
            let [a, b] = light.stop_line;
            let crosses = seg_cross(poses[k - 1].position(), p.position(), a, b);
            let touches = inside_polygon(a, &ebox)
                || inside_polygon(b, &ebox)
                || (0..4).any(|i| seg_cross(a, b, ebox[i], ebox[(i + 1) % 4]));
            if crosses || touches {
                tlc = 0.0;
            }
        }

        let mut nearest: Option<(f64, Point2)> = None;
        for line in &s.centerlines {
            if let Some((d, _, dir)) = polyline_closest(p.position(), line) {
                if nearest.is_none() || d < nearest.unwrap().0 {
                    nearest = Some((d, dir));
                }
            }
        }
        if let Some((d, dir)) = nearest {
            let step = p.position() - poses[k - 1].position();
            let along = step.x * dir.x + step.y * dir.y;
            if along < 0.0 {
                wrong_way += -along;
            }
            if d <= cfg.lk_max_offset {
                kept += 1;
            }
        }
    }

    let ddc = if s.centerlines.is_empty() || wrong_way < cfg.ddc_full {
        1.0
    } else if wrong_way < cfg.ddc_half {
        0.5
    } else {
        0.0
    };
    let lk = if s.centerlines.is_empty() {
        1.0
    } else {
        kept as f64 / t_steps as f64
    };

    let progress_of = |start: Point2, end: Point2| -> f64 {
        match (polyline_closest(start, &s.route), polyline_closest(end, &s.route)) {
            (Some(a), Some(b)) => b.1 - a.1,
            _ => 0.0,
        }
    };
    let human = s.human_trajectory.poses();
    let human_progress = progress_of(s.ego.pose.position(), human[human.len() - 1].position());
    let ep = if human_progress < cfg.ep_human_epsilon {
        1.0
    } else {
        let prog = progress_of(poses[0].position(), poses[t_steps].position());
        (prog / human_progress.max(cfg.ep_min_progress)).clamp(0.0, 1.0)
    };

    SubMetrics {
        nc,
        dac,
        ddc,
        tlc,
        ep,
        ttc,
        hc: comfort_oracle(s, &poses, dt, cfg),
        lk,
        ec: extended_comfort_oracle(s, &poses, dt, cfg),
    }
}

fn accel_at(q: &[Pose2], i: usize, dt: f64) -> Point2 {
    // Velocity differences rather than a second difference.
    let v1 = (q[i].position() - q[i - 1].position()) * (1.0 / dt);
    let v0 = (q[i - 1].position() - q[i - 2].position()) * (1.0 / dt);
    (v1 - v0) * (1.0 / dt)
}

fn comfort_oracle(s: &Scenario, poses: &[Pose2], dt: f64, cfg: &MetricConfig) -> f64 {
    let h = &s.ego_history;
    let mut q: Vec<Pose2> = h.iter().skip(h.len().saturating_sub(2)).copied().collect();
    q.extend_from_slice(poses);
    let tol = 1e-9;
    for i in 1..q.len() {
        let mut d = q[i].yaw - q[i - 1].yaw;
        while d > std::f64::consts::PI {
            d -= 2.0 * std::f64::consts::PI;
        }
        while d <= -std::f64::consts::PI {
            d += 2.0 * std::f64::consts::PI;
        }
        if (d / dt).abs() > cfg.max_yaw_rate + tol {
            return 0.0;
        }
    }
    for i in 2..q.len() {
        let a = accel_at(&q, i, dt);
        let (sn, cs) = q[i - 1].yaw.sin_cos();
        let lon = a.x * cs + a.y * sn;
        let lat = -a.x * sn + a.y * cs;
        if lon.abs() > cfg.max_lon_accel + tol || lat.abs() > cfg.max_lat_accel + tol {
            return 0.0;
        }
    }
    for i in 3..q.len() {
        let j = (accel_at(&q, i, dt) - accel_at(&q, i - 1, dt)) * (1.0 / dt);
        if j.norm() > cfg.max_jerk + tol {
            return 0.0;
        }
    }
    1.0
}

fn extended_comfort_oracle(s: &Scenario, poses: &[Pose2], dt: f64, cfg: &MetricConfig) -> f64 {
    let Some(prev) = &s.prev_plan else { return 1.0 };
    let pp = prev.poses();
    let n = pp.len().min(poses.len());
    for m in 2..n {
        let diff = accel_at(poses, m, dt) - accel_at(pp, m, dt);
        if diff.norm() > cfg.ec_max_accel_diff + 1e-9 {
            return 0.0;
        }
    }
    1.0
}

// ---------------------------------------------------------------- projection

/// Camera projection through an explicit 3×4 matrix `K [R | -R c]` built from
/// the mount position and pitch.
pub fn homogeneous_projection(mount: [f64; 3], pitch: f64, k: [f64; 4], p: [f64; 3]) -> Option<Point2> {
    let (fx, fy, cx, cy) = (k[0], k[1], k[2], k[3]);
    // Camera axes in ego coordinates: right, down, forward.
    let (s, c) = pitch.sin_cos();
    let fwd = [c, 0.0, -s];
    let right = [0.0, -1.0, 0.0];
    // Right-handed camera frame: down = forward × right.
    let down = [
        fwd[1] * right[2] - fwd[2] * right[1],
        fwd[2] * right[0] - fwd[0] * right[2],
        fwd[0] * right[1] - fwd[1] * right[0],
    ];
    let r = [right, down, fwd];
    let mut ext = [[0.0; 4]; 3];
    for i in 0..3 {
        ext[i][..3].copy_from_slice(&r[i]);
        ext[i][3] = -(r[i][0] * mount[0] + r[i][1] * mount[1] + r[i][2] * mount[2]);
    }
    let kmat = [[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]];
    let mut proj = [[0.0; 4]; 3];
    for i in 0..3 {
        for j in 0..4 {
            proj[i][j] = (0..3).map(|m| kmat[i][m] * ext[m][j]).sum();
        }
    }
    let h = [p[0], p[1], p[2], 1.0];
    let img: Vec<f64> = (0..3).map(|i| (0..4).map(|j| proj[i][j] * h[j]).sum()).collect();
    if img[2] <= 0.5 {
        return None;
    }
    Some(Point2::new(img[0] / img[2], img[1] / img[2]))
}

// ----------------------------------------------------------- finite differences

/// Relative error with a floor on the denominator so that vanishing gradients
/// are compared absolutely. Central differences at h = 1e-6 carry roundoff
/// near 1e-9, so gradients below 1e-4 cannot be resolved relatively.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / (a.abs() + n.abs()).max(1e-4)
}

/// Largest relative error between `analytic` and central differences of
/// `loss` over every parameter entry.
pub fn gradcheck_params(params: &ParamStore, analytic: &ParamStore, h: f64, loss: impl Fn(&ParamStore) -> f64) -> f64 {
    let base = params.flat();
    let grad = analytic.flat();
    let mut probe = params.clone();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut v = base.clone();
        v[i] = base[i] + h;
        probe.set_flat(&v).unwrap();
        let up = loss(&probe);
        v[i] = base[i] - h;
        probe.set_flat(&v).unwrap();
        let down = loss(&probe);
        worst = worst.max(rel_err(grad[i], (up - down) / (2.0 * h)));
    }
    worst
}

/// Largest relative error of an input gradient against central differences.
pub fn gradcheck_input(x: &[f64], analytic: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> f64 {
    let mut worst: f64 = 0.0;
    let mut v = x.to_vec();
    for i in 0..x.len() {
        v[i] = x[i] + h;
        let up = f(&v);
        v[i] = x[i] - h;
        let down = f(&v);
        v[i] = x[i];
        worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * h)));
    }
    worst
}

// --------------------------------------------------------------------- misc

/// Trajectory from `(x, y)` points with yaw following the path, starting at the origin.
pub fn path(points: &[(f64, f64)], dt: f64) -> Trajectory {
    let pts: Vec<Point2> = points.iter().map(|&(x, y)| Point2::new(x, y)).collect();
    Trajectory::from_positions(&pts, dt, Some(Pose2::identity())).unwrap()
}
