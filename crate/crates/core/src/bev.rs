//! Bird's-eye-view feature grid rendered from scene geometry, plus the
//! trajectory-conditioned bilinear sampler and GridMask augmentation.
//!
//! The grid is ego-centered with x forward and y left. Cell `(i, j)` covers
//! x-index `i` and y-index `j`; its center sits at
//! `(-extent/2 + (i + 0.5) * res, -extent/2 + (j + 0.5) * res)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ego_footprint, point_in_polygon, point_segment_distance, project_onto_polyline, Point2};
use crate::scene::{LightState, Scenario, Trajectory};

/// Channel layout of a rendered grid.
pub mod channel {
    pub const DRIVABLE: usize = 0;
    /// Signed distance to the nearest drivable boundary, positive inside.
    pub const BOUNDARY_DISTANCE: usize = 1;
    pub const CENTERLINE_DISTANCE: usize = 2;
    pub const LANE_COS: usize = 3;
    pub const LANE_SIN: usize = 4;
    pub const OCCUPANCY_NOW: usize = 5;
    pub const OCCUPANCY_FUTURE: usize = 6;
    pub const RED_STOP_LINE: usize = 7;
    pub const COUNT: usize = 8;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BevConfig {
    pub channels: usize,
    /// Cells per side.
    pub size: usize,
    /// Meters per side.
    pub extent: f64,
    /// Clamp for the boundary and centerline distance channels, meters.
    pub distance_clamp: f64,
    /// Red stop lines mark every cell whose center lies within this distance,
    /// or within half a cell if that is larger. The default is half the ego
    /// length, so a pose sample lands on the mark whenever the footprint
    /// straddles the line.
    pub stop_line_halfwidth: f64,
}

impl Default for BevConfig {
    fn default() -> Self {
        Self {
            channels: channel::COUNT,
            size: 100,
            extent: 64.0,
            distance_clamp: 8.0,
            stop_line_halfwidth: 2.25,
        }
    }
}

impl BevConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels != channel::COUNT {
            return Err(Error::Config(format!(
                "bev.channels must be {}, got {}",
                channel::COUNT,
                self.channels
            )));
        }
        if self.size < 2 {
            return Err(Error::Config("bev.size must be at least 2".into()));
        }
        if !(self.extent > 0.0) || !(self.distance_clamp > 0.0) {
            return Err(Error::Config(
                "bev.extent and bev.distance_clamp must be positive".into(),
            ));
        }
        if !(self.stop_line_halfwidth >= 0.0) {
            return Err(Error::Config("bev.stop_line_halfwidth must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BevGrid {
    data: Vec<f64>,
    channels: usize,
    size: usize,
    extent: f64,
}

impl BevGrid {
    pub fn zeros(channels: usize, size: usize, extent: f64) -> Self {
        Self {
            data: vec![0.0; channels * size * size],
            channels,
            size,
            extent,
        }
    }

    pub fn filled(channels: usize, size: usize, extent: f64, value: f64) -> Self {
        Self {
            data: vec![value; channels * size * size],
            channels,
            size,
            extent,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn resolution(&self) -> f64 {
        self.extent / self.size as f64
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    fn index(&self, c: usize, i: usize, j: usize) -> usize {
        (c * self.size + i) * self.size + j
    }

    pub fn get(&self, c: usize, i: usize, j: usize) -> f64 {
        self.data[self.index(c, i, j)]
    }

    pub fn set(&mut self, c: usize, i: usize, j: usize, v: f64) {
        let k = self.index(c, i, j);
        self.data[k] = v;
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.size * self.size;
        &self.data[c * n..(c + 1) * n]
    }

    /// Ego-frame center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> Point2 {
        let res = self.resolution();
        let half = 0.5 * self.extent;
        Point2::new(-half + (i as f64 + 0.5) * res, -half + (j as f64 + 0.5) * res)
    }

    /// Bilinear sample at an ego-frame position. Positions outside the extent
    /// give the zero vector; inside, indices are clamped to the edge cells.
    pub fn sample(&self, p: Point2) -> Vec<f64> {
        let mut out = vec![0.0; self.channels];
        self.sample_into(p, &mut out);
        out
    }

    pub fn sample_into(&self, p: Point2, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let half = 0.5 * self.extent;
        if !(p.x >= -half && p.x <= half && p.y >= -half && p.y <= half) {
            return;
        }
        let res = self.resolution();
        let last = (self.size - 1) as f64;
        let u = ((p.x + half) / res - 0.5).clamp(0.0, last);
        let v = ((p.y + half) / res - 0.5).clamp(0.0, last);
        let i0 = (u.floor() as usize).min(self.size - 2);
        let j0 = (v.floor() as usize).min(self.size - 2);
        let fu = u - i0 as f64;
        let fv = v - j0 as f64;
        let w00 = (1.0 - fu) * (1.0 - fv);
        let w01 = (1.0 - fu) * fv;
        let w10 = fu * (1.0 - fv);
        let w11 = fu * fv;
        for (c, o) in out.iter_mut().enumerate() {
            *o = w00 * self.get(c, i0, j0)
                + w01 * self.get(c, i0, j0 + 1)
                + w10 * self.get(c, i0 + 1, j0)
                + w11 * self.get(c, i0 + 1, j0 + 1);
        }
    }

    /// Writes one channel as a binary PGM, min–max rescaled to 8 bits.
    /// Image rows run from the far (+x) edge to the near edge, columns from +y to -y,
    /// so the ego's forward direction points up.
    pub fn write_pgm(&self, c: usize, path: &Path) -> Result<()> {
        if c >= self.channels {
            return Err(Error::Shape(format!("channel {c} out of range")));
        }
        let ch = self.channel(c);
        let lo = ch.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ch.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let n = self.size;
        let mut bytes = format!("P5\n{n} {n}\n255\n").into_bytes();
        for r in 0..n {
            for col in 0..n {
                let v = self.get(c, n - 1 - r, n - 1 - col);
                bytes.push((((v - lo) / span) * 255.0).round() as u8);
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }
}

/// Renders the feature grid for a scenario in the ego frame.
pub fn render_bev(s: &Scenario, cfg: &BevConfig) -> BevGrid {
    let mut grid = BevGrid::zeros(channel::COUNT, cfg.size, cfg.extent);
    let ego = s.ego.pose;
    let clamp = cfg.distance_clamp;
    let stop_band = cfg.stop_line_halfwidth.max(0.5 * grid.resolution());

    let now: Vec<_> = s
        .agents
        .iter()
        .map(|a| ego_footprint(&a.track[0], a.width, a.length))
        .collect();
    let future: Vec<_> = s
        .agents
        .iter()
        .flat_map(|a| a.track.iter().skip(1).map(move |p| ego_footprint(p, a.width, a.length)))
        .collect();
    let red_lines: Vec<_> = s
        .traffic_lights
        .iter()
        .filter(|l| l.state == LightState::Red)
        .map(|l| l.stop_line)
        .collect();

    for i in 0..cfg.size {
        for j in 0..cfg.size {
            let w = ego.transform_point(grid.cell_center(i, j));

            let inside = s.drivable_area.iter().any(|poly| point_in_polygon(w, poly));
            grid.set(channel::DRIVABLE, i, j, if inside { 1.0 } else { 0.0 });

            let boundary = s
                .drivable_area
                .iter()
                .flat_map(|poly| (0..poly.len()).map(move |k| (poly[k], poly[(k + 1) % poly.len()])))
                .map(|(a, b)| point_segment_distance(w, a, b))
                .fold(f64::INFINITY, f64::min);
            let signed = if inside { boundary } else { -boundary };
            grid.set(channel::BOUNDARY_DISTANCE, i, j, signed.clamp(-clamp, clamp) / clamp);

            let nearest = s
                .centerlines
                .iter()
                .filter_map(|line| project_onto_polyline(w, line))
                .fold(
                    None,
                    |best: Option<crate::geometry::PolylineProjection>, pr| match best {
                        Some(b) if b.distance <= pr.distance => Some(b),
                        _ => Some(pr),
                    },
                );
            match nearest {
                Some(pr) => {
                    grid.set(channel::CENTERLINE_DISTANCE, i, j, pr.distance.min(clamp) / clamp);
                    let local = pr.direction.rotate(-ego.yaw);
                    grid.set(channel::LANE_COS, i, j, local.x);
                    grid.set(channel::LANE_SIN, i, j, local.y);
                }
                None => grid.set(channel::CENTERLINE_DISTANCE, i, j, 1.0),
            }

            if now.iter().any(|r| r.contains(w)) {
                grid.set(channel::OCCUPANCY_NOW, i, j, 1.0);
            }
            if future.iter().any(|r| r.contains(w)) {
                grid.set(channel::OCCUPANCY_FUTURE, i, j, 1.0);
            }
            if red_lines
                .iter()
                .any(|[a, b]| point_segment_distance(w, *a, *b) <= stop_band)
            {
                grid.set(channel::RED_STOP_LINE, i, j, 1.0);
            }
        }
    }
    grid
}

/// One bilinear feature sample per pose of an ego-frame trajectory.
pub fn sample_bev(grid: &BevGrid, traj: &Trajectory) -> Vec<Vec<f64>> {
    traj.poses().iter().map(|p| grid.sample(p.position())).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridMaskConfig {
    /// Side of each masked square, in cells.
    pub block: usize,
    /// Target fraction of cells left untouched.
    pub keep_ratio: f64,
}

impl Default for GridMaskConfig {
    fn default() -> Self {
        Self {
            block: 10,
            keep_ratio: 0.5,
        }
    }
}

impl GridMaskConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block == 0 {
            return Err(Error::Config("grid_mask.block must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.keep_ratio) {
            return Err(Error::Config("grid_mask.keep_ratio must be in [0, 1]".into()));
        }
        Ok(())
    }

    /// Period of the mask pattern: one `block × block` square per `period × period` tile.
    pub fn period(&self) -> usize {
        let mask_ratio = (1.0 - self.keep_ratio).clamp(0.0, 1.0);
        if mask_ratio <= 0.0 {
            return usize::MAX;
        }
        ((self.block as f64 / mask_ratio.sqrt()).round() as usize).max(self.block)
    }
}

/// With probability `probability`, zeroes a regular lattice of square blocks
/// across every channel. The lattice offset is drawn from the seeded RNG.
pub fn grid_mask(grid: &BevGrid, probability: f64, seed: u64, cfg: &GridMaskConfig) -> BevGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let apply = rng.gen::<f64>() < probability;
    let period = cfg.period();
    if !apply || period == usize::MAX || cfg.block == 0 {
        return grid.clone();
    }
    let ox = rng.gen_range(0..period);
    let oy = rng.gen_range(0..period);
    let mut out = grid.clone();
    let n = grid.size;
    for i in 0..n {
        if (i + ox) % period >= cfg.block {
            continue;
        }
        for j in 0..n {
            if (j + oy) % period >= cfg.block {
                continue;
            }
            for c in 0..grid.channels {
                out.set(c, i, j, 0.0);
            }
        }
    }
    out
}
