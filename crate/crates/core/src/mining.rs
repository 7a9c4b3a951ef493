//! Hard-case detection and training-schedule upsampling.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{project_onto_polyline, Point2};
use crate::scene::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardCaseTag {
    UnprotectedTurn,
    OccludedJunction,
    SharpCurve,
    LaneDeparture,
}

impl HardCaseTag {
    pub fn as_str(self) -> &'static str {
        match self {
            HardCaseTag::UnprotectedTurn => "unprotected_turn",
            HardCaseTag::OccludedJunction => "occluded_junction",
            HardCaseTag::SharpCurve => "sharp_curve",
            HardCaseTag::LaneDeparture => "lane_departure",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MiningConfig {
    /// Discrete curvature (1/m) above which a human path is a sharp curve.
    pub curvature_threshold: f64,
    /// Lateral offset (m) from the nearest centerline that counts as a lane departure.
    pub lateral_threshold: f64,
    /// Total number of times a hard case appears in the schedule.
    pub multiplicity: usize,
}

impl Default for MiningConfig {
    fn default() -> Self {
        Self {
            curvature_threshold: 0.2,
            lateral_threshold: 1.0,
            multiplicity: 3,
        }
    }
}

impl MiningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.multiplicity == 0 {
            return Err(Error::Config("mining.multiplicity must be at least 1".into()));
        }
        if !(self.curvature_threshold >= 0.0 && self.lateral_threshold >= 0.0) {
            return Err(Error::Config("mining thresholds must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardCaseReport {
    pub id: String,
    pub tags: BTreeSet<HardCaseTag>,
    pub max_curvature: f64,
    pub max_lateral_offset: f64,
}

impl HardCaseReport {
    pub fn is_hard(&self) -> bool {
        !self.tags.is_empty()
    }
}

/// Curvature of the circle through three points; zero for collinear or repeated points.
pub fn three_point_curvature(a: Point2, b: Point2, c: Point2) -> f64 {
    let ab = a.distance(b);
    let bc = b.distance(c);
    let ca = c.distance(a);
    let denom = ab * bc * ca;
    if denom < 1e-12 {
        return 0.0;
    }
    2.0 * (b - a).cross(c - a).abs() / denom
}

pub fn detect_hard_case(s: &Scenario, cfg: &MiningConfig) -> HardCaseReport {
    let pts = s.human_trajectory.positions();
    let max_curvature = pts
        .windows(3)
        .map(|w| three_point_curvature(w[0], w[1], w[2]))
        .fold(0.0, f64::max);
    let max_lateral_offset = pts
        .iter()
        .filter_map(|&p| {
            s.centerlines
                .iter()
                .filter_map(|l| project_onto_polyline(p, l))
                .map(|pr| pr.distance)
                .reduce(f64::min)
        })
        .fold(0.0, f64::max);
    let mut tags = BTreeSet::new();
    if max_curvature > cfg.curvature_threshold {
        tags.insert(HardCaseTag::SharpCurve);
    }
    if max_lateral_offset > cfg.lateral_threshold {
        tags.insert(HardCaseTag::LaneDeparture);
    }
    for tag in [HardCaseTag::UnprotectedTurn, HardCaseTag::OccludedJunction] {
        if s.tags.contains(tag.as_str()) {
            tags.insert(tag);
        }
    }
    HardCaseReport {
        id: s.id.clone(),
        tags,
        max_curvature,
        max_lateral_offset,
    }
}

/// Repeats each hard case `multiplicity` times in place; other ids appear once.
pub fn upsample(ids: &[String], reports: &[HardCaseReport], multiplicity: usize) -> Result<Vec<String>> {
    let by_id: BTreeMap<&str, &HardCaseReport> = reports.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let report = by_id
            .get(id.as_str())
            .ok_or_else(|| Error::Missing(format!("hard-case report for scenario {id}")))?;
        let times = if report.is_hard() { multiplicity } else { 1 };
        out.extend(std::iter::repeat_n(id.clone(), times));
    }
    Ok(out)
}
