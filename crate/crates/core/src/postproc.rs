//! Image-space post-selection of scored candidates.
//!
//! Candidates are discarded when their travel distance leaves the kinematic
//! envelope, when the projected ego-width band overlaps a detected obstacle box,
//! or when the band leaves the corridor between the outermost detected lane
//! lines. The best surviving candidate by predicted score is chosen; if none
//! survive, the best candidate overall is kept and the fallback flag is set.

use serde::{Deserialize, Serialize};

use crate::anchors::travel_distance;
use crate::decoder::CandidateSet;
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point2};
use crate::scene::{CameraModel, EgoState, Scenario, Trajectory};
use crate::scorer::{select_trajectory, ScorePrediction};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PostprocConfig {
    /// Strongest braking assumed for the minimum distance (m/s², negative).
    pub a_min: f64,
    /// Strongest acceleration assumed for the maximum distance (m/s²).
    pub a_max: f64,
    /// Camera-frame depth (m) below which a band point counts as not visible.
    pub near_plane: f64,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        Self {
            a_min: -3.0,
            a_max: 2.0,
            near_plane: 0.5,
        }
    }
}

impl PostprocConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.a_min <= self.a_max) || !self.a_min.is_finite() || !self.a_max.is_finite() {
            return Err(Error::Config("postproc.a_min must not exceed postproc.a_max".into()));
        }
        if !(self.near_plane > 0.0) {
            return Err(Error::Config("postproc.near_plane must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceEnvelope {
    pub d_min: f64,
    pub d_max: f64,
}

impl DistanceEnvelope {
    pub const UNBOUNDED: DistanceEnvelope = DistanceEnvelope {
        d_min: 0.0,
        d_max: f64::INFINITY,
    };

    pub fn contains(&self, d: f64) -> bool {
        d >= self.d_min && d <= self.d_max
    }
}

/// Travel-distance bounds over `horizon_s` under constant acceleration
/// `a_min` or `a_max`. Braking stops at zero speed rather than reversing.
pub fn distance_envelope(ego: &EgoState, horizon_s: f64, a_min: f64, a_max: f64) -> DistanceEnvelope {
    let v = ego.speed.max(0.0);
    DistanceEnvelope {
        d_min: travel_distance(v, a_min, horizon_s).max(0.0),
        d_max: travel_distance(v, a_max, horizon_s).max(0.0),
    }
}

/// Left and right edges of the ego-width band in pixels. Entries whose
/// `visible` flag is false lie behind the near plane and hold `(0, 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedBand {
    pub left: Vec<Point2>,
    pub right: Vec<Point2>,
    pub visible: Vec<bool>,
}

/// Projects the band swept by an ego-frame trajectory onto the image.
pub fn project_band(traj: &Trajectory, ego_width: f64, cam: &CameraModel, near_plane: f64) -> ProjectedBand {
    let n = traj.len();
    let mut band = ProjectedBand {
        left: Vec::with_capacity(n),
        right: Vec::with_capacity(n),
        visible: Vec::with_capacity(n),
    };
    let hw = 0.5 * ego_width;
    for pose in traj.poses() {
        let l = pose.transform_point(Point2::new(0.0, hw));
        let r = pose.transform_point(Point2::new(0.0, -hw));
        let pl = cam.project_ego_point([l.x, l.y, 0.0], near_plane);
        let pr = cam.project_ego_point([r.x, r.y, 0.0], near_plane);
        match (pl, pr) {
            (Some(a), Some(b)) => {
                band.left.push(a);
                band.right.push(b);
                band.visible.push(true);
            }
            _ => {
                band.left.push(Point2::default());
                band.right.push(Point2::default());
                band.visible.push(false);
            }
        }
    }
    band
}

impl ProjectedBand {
    /// Quads between consecutive visible band points, plus a cross segment
    /// (as a degenerate quad) for an isolated visible point.
    fn pieces(&self) -> Vec<Vec<Point2>> {
        let n = self.visible.len();
        let mut out = Vec::new();
        for k in 0..n {
            if !self.visible[k] {
                continue;
            }
            let next_visible = k + 1 < n && self.visible[k + 1];
            let prev_visible = k > 0 && self.visible[k - 1];
            if next_visible {
                out.push(vec![self.left[k], self.left[k + 1], self.right[k + 1], self.right[k]]);
            } else if !prev_visible {
                out.push(vec![self.left[k], self.right[k]]);
            }
        }
        out
    }

    fn overlaps(&self, b: &Aabb) -> bool {
        self.pieces().iter().any(|piece| match piece.len() {
            2 => b.intersects_segment(piece[0], piece[1]),
            _ => b.intersects_polygon(piece),
        })
    }
}

/// Horizontal extent `[u_min, u_max]` spanned by the lane lines at image row
/// `v`, or `None` when fewer than two lines reach that row.
pub fn lane_corridor_at(lines: &[Vec<Point2>], v: f64) -> Option<(f64, f64)> {
    let mut us = Vec::new();
    for line in lines {
        let hit = line.windows(2).find_map(|w| {
            let (a, b) = (w[0], w[1]);
            let (lo, hi) = if a.y <= b.y { (a.y, b.y) } else { (b.y, a.y) };
            if v < lo || v > hi {
                return None;
            }
            if hi == lo {
                return Some(a.x.min(b.x));
            }
            let t = (v - a.y) / (b.y - a.y);
            Some(a.x + t * (b.x - a.x))
        });
        if let Some(u) = hit {
            us.push(u);
        }
    }
    if us.len() < 2 {
        return None;
    }
    let lo = us.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = us.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Some((lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    DistanceEnvelope,
    Obstacle,
    LaneCorridor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateDecision {
    pub index: usize,
    pub arc_length: f64,
    pub reasons: Vec<DiscardReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub survivors: Vec<usize>,
    pub chosen: usize,
    pub fallback: bool,
    pub envelope: DistanceEnvelope,
    pub decisions: Vec<CandidateDecision>,
}

/// Checks one ego-frame candidate against every rule.
pub fn discard_reasons(
    traj: &Trajectory,
    s: &Scenario,
    envelope: &DistanceEnvelope,
    cfg: &PostprocConfig,
) -> (f64, Vec<DiscardReason>) {
    let mut reasons = Vec::new();
    let arc = traj.arc_length_from(Point2::default());
    if !envelope.contains(arc) {
        reasons.push(DiscardReason::DistanceEnvelope);
    }
    let band = project_band(traj, s.ego.width, &s.camera, cfg.near_plane);
    if s.detections2d.obstacles.iter().any(|b| band.overlaps(b)) {
        reasons.push(DiscardReason::Obstacle);
    }
    let lines = &s.detections2d.lane_lines;
    if lines.len() >= 2 {
        let outside = (0..band.visible.len()).filter(|&k| band.visible[k]).any(|k| {
            [band.left[k], band.right[k]].iter().any(|p| {
                if p.y < 0.0 || p.y > s.camera.height as f64 {
                    return false;
                }
                lane_corridor_at(lines, p.y).is_some_and(|(lo, hi)| p.x < lo || p.x > hi)
            })
        });
        if outside {
            reasons.push(DiscardReason::LaneCorridor);
        }
    }
    (arc, reasons)
}

pub fn filter_candidates(
    candidates: &CandidateSet,
    predictions: &[ScorePrediction],
    s: &Scenario,
    horizon_s: f64,
    cfg: &PostprocConfig,
) -> Result<FilterOutcome> {
    let envelope = distance_envelope(&s.ego, horizon_s, cfg.a_min, cfg.a_max);
    filter_with_envelope(candidates, predictions, s, envelope, cfg)
}

pub fn filter_with_envelope(
    candidates: &CandidateSet,
    predictions: &[ScorePrediction],
    s: &Scenario,
    envelope: DistanceEnvelope,
    cfg: &PostprocConfig,
) -> Result<FilterOutcome> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    if predictions.len() != candidates.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} candidates",
            predictions.len(),
            candidates.len()
        )));
    }
    let decisions: Vec<CandidateDecision> = candidates
        .trajectories
        .iter()
        .enumerate()
        .map(|(index, t)| {
            let (arc_length, reasons) = discard_reasons(t, s, &envelope, cfg);
            CandidateDecision {
                index,
                arc_length,
                reasons,
            }
        })
        .collect();
    let survivors: Vec<usize> = decisions
        .iter()
        .filter(|d| d.reasons.is_empty())
        .map(|d| d.index)
        .collect();
    let (chosen, fallback) = if survivors.is_empty() {
        (select_trajectory(predictions)?, true)
    } else {
        let sub: Vec<ScorePrediction> = survivors.iter().map(|&i| predictions[i]).collect();
        (survivors[select_trajectory(&sub)?], false)
    };
    Ok(FilterOutcome {
        survivors,
        chosen,
        fallback,
        envelope,
        decisions,
    })
}
