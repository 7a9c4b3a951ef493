//! Anchor trajectory dictionary built by K-means over trajectory positions.
//!
//! Anchors live in the ego frame. Clustering uses the flattened `(x, y)`
//! positions only; each anchor's yaw is re-derived from its centroid positions.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Pose2};
use crate::scene::{Horizon, Trajectory};

pub const MAX_ITERATIONS: usize = 100;
pub const CONVERGENCE_SHIFT: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorDictionary {
    anchors: Vec<Trajectory>,
    pub corpus_size: usize,
    pub iterations: usize,
    pub inertia: f64,
    /// Inertia after each assignment step, first to last.
    pub inertia_history: Vec<f64>,
}

impl AnchorDictionary {
    /// Wraps a fixed list of anchors (all with the same horizon).
    pub fn from_anchors(anchors: Vec<Trajectory>) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::Empty("anchor dictionary"));
        }
        let t = anchors[0].len();
        let dt = anchors[0].dt();
        if anchors.iter().any(|a| a.len() != t || a.dt() != dt) {
            return Err(Error::Shape("anchors disagree on horizon".into()));
        }
        Ok(Self {
            corpus_size: anchors.len(),
            anchors,
            iterations: 0,
            inertia: 0.0,
            inertia_history: Vec::new(),
        })
    }

    pub fn anchors(&self) -> &[Trajectory] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn steps(&self) -> usize {
        self.anchors[0].len()
    }

    pub fn dt(&self) -> f64 {
        self.anchors[0].dt()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = DictionaryFile {
            n: self.len(),
            t: self.steps(),
            dt: self.dt(),
            anchors: self
                .anchors
                .iter()
                .map(|a| a.poses().iter().map(|p| [p.x, p.y, p.yaw]).collect())
                .collect(),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("dictionary serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: DictionaryFile = serde_json::from_str(&text).map_err(|source| Error::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        if file.anchors.len() != file.n {
            return Err(Error::validation("anchors", format!("expected {} anchors", file.n)));
        }
        let mut anchors = Vec::with_capacity(file.n);
        for (i, rows) in file.anchors.iter().enumerate() {
            if rows.len() != file.t {
                return Err(Error::validation(
                    format!("anchors[{i}]"),
                    format!("expected {} poses", file.t),
                ));
            }
            let poses = rows.iter().map(|r| Pose2::new(r[0], r[1], r[2])).collect();
            anchors.push(Trajectory::new(poses, file.dt)?);
        }
        Self::from_anchors(anchors)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DictionaryFile {
    #[serde(rename = "N")]
    n: usize,
    #[serde(rename = "T")]
    t: usize,
    dt: f64,
    anchors: Vec<Vec<[f64; 3]>>,
}

fn xy_vector(t: &Trajectory) -> Vec<f64> {
    t.poses().iter().flat_map(|p| [p.x, p.y]).collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the closest centroid; ties go to the lowest index.
fn closest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (k, c) in centroids.iter().enumerate() {
        let d = sq_dist(point, c);
        if d < best.1 {
            best = (k, d);
        }
    }
    best
}

fn kmeans_plus_plus(points: &[Vec<f64>], n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < n {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut chosen = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && r < w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            // Guard against round-off landing on a zero-weight tail point.
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        let c = points[pick].clone();
        for (w, p) in d2.iter_mut().zip(points) {
            *w = w.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Clusters `corpus` into `n` anchors with k-means++ seeding and Lloyd
/// iterations. Empty clusters are reseeded to the point farthest from its
/// assigned centroid.
pub fn build_dictionary(corpus: &[Trajectory], n: usize, seed: u64) -> Result<AnchorDictionary> {
    if n == 0 {
        return Err(Error::Config("anchor count must be at least 1".into()));
    }
    if corpus.len() < n {
        return Err(Error::CorpusTooSmall {
            got: corpus.len(),
            needed: n,
        });
    }
    let steps = corpus[0].len();
    let dt = corpus[0].dt();
    if let Some(i) = corpus.iter().position(|t| t.len() != steps) {
        return Err(Error::Shape(format!(
            "corpus[{i}] has {} steps, expected {steps}",
            corpus[i].len()
        )));
    }
    let points: Vec<Vec<f64>> = corpus.iter().map(xy_vector).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(&points, n, &mut rng);
    let dim = points[0].len();

    let mut history = Vec::new();
    let mut iterations = 0;
    let mut assignment = vec![0usize; points.len()];
    let mut dists = vec![0.0; points.len()];
    loop {
        let mut inertia = 0.0;
        for (i, p) in points.iter().enumerate() {
            let (k, d) = closest(p, &centroids);
            assignment[i] = k;
            dists[i] = d;
            inertia += d;
        }
        history.push(inertia);
        if iterations == MAX_ITERATIONS {
            break;
        }
        iterations += 1;

        let mut sums = vec![vec![0.0; dim]; n];
        let mut counts = vec![0usize; n];
        for (p, &k) in points.iter().zip(&assignment) {
            counts[k] += 1;
            for (s, v) in sums[k].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut taken = vec![false; points.len()];
        let mut shift: f64 = 0.0;
        for k in 0..n {
            let next = if counts[k] > 0 {
                sums[k].iter().map(|s| s / counts[k] as f64).collect::<Vec<_>>()
            } else {
                // Farthest point not already used for reseeding; lowest index on ties.
                let mut far = (usize::MAX, f64::NEG_INFINITY);
                for (i, &d) in dists.iter().enumerate() {
                    if !taken[i] && d > far.1 {
                        far = (i, d);
                    }
                }
                taken[far.0] = true;
                dists[far.0] = 0.0;
                points[far.0].clone()
            };
            shift = shift.max(sq_dist(&next, &centroids[k]).sqrt());
            centroids[k] = next;
        }
        if shift < CONVERGENCE_SHIFT {
            let mut inertia = 0.0;
            for p in &points {
                inertia += closest(p, &centroids).1;
            }
            history.push(inertia);
            break;
        }
    }

    let origin = Pose2::identity();
    let anchors = centroids
        .iter()
        .map(|c| {
            let pts: Vec<Point2> = c.chunks(2).map(|xy| Point2::new(xy[0], xy[1])).collect();
            Trajectory::from_positions(&pts, dt, Some(origin))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnchorDictionary {
        anchors,
        corpus_size: corpus.len(),
        iterations,
        inertia: *history.last().unwrap_or(&0.0),
        inertia_history: history,
    })
}

/// Index of the anchor with the smallest summed squared position distance to
/// `traj`; ties go to the lowest index.
pub fn nearest_anchor(dict: &AnchorDictionary, traj: &Trajectory) -> usize {
    let target = xy_vector(traj);
    let mut best = (0, f64::INFINITY);
    for (i, a) in dict.anchors.iter().enumerate() {
        let d = sq_dist(&xy_vector(a), &target);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// Distance travelled after `t` seconds from speed `v0` under constant
/// acceleration `accel`, never reversing.
pub fn travel_distance(v0: f64, accel: f64, t: f64) -> f64 {
    if accel < 0.0 {
        let stop = -v0 / accel;
        if t >= stop {
            return v0 * stop + 0.5 * accel * stop * stop;
        }
    }
    v0 * t + 0.5 * accel * t * t
}

/// Pose after driving `s` meters from the origin along a constant-curvature arc.
pub fn arc_pose(s: f64, curvature: f64) -> Pose2 {
    if curvature.abs() < 1e-12 {
        return Pose2::new(s, 0.0, 0.0);
    }
    let heading = curvature * s;
    Pose2::new(heading.sin() / curvature, (1.0 - heading.cos()) / curvature, heading)
}

/// Ego-frame corpus of straight, curved and lane-change motions over a grid
/// of speeds and accelerations.
pub fn synthetic_corpus(horizon: &Horizon) -> Vec<Trajectory> {
    let speeds: [f64; 10] = [0.0, 1.0, 2.5, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0];
    let accels = [-2.5, -1.0, 0.0, 1.0];
    let curvatures: [f64; 9] = [0.0, 0.015, -0.015, 0.04, -0.04, 0.08, -0.08, 0.15, -0.15];
    let lane_shifts = [3.5, -3.5];
    let times: Vec<f64> = (1..=horizon.steps).map(|k| k as f64 * horizon.dt).collect();
    let origin = Pose2::identity();
    let mut out = Vec::new();
    for &v in &speeds {
        for &a in &accels {
            if v == 0.0 && a <= 0.0 {
                continue;
            }
            let dists: Vec<f64> = times.iter().map(|&t| travel_distance(v, a, t)).collect();
            let total = *dists.last().unwrap();
            for &k in &curvatures {
                // Keep lateral acceleration plausible.
                if k.abs() * v * v > 5.0 {
                    continue;
                }
                let poses: Vec<Pose2> = dists.iter().map(|&s| arc_pose(s, k)).collect();
                out.push(Trajectory::new(poses, horizon.dt).expect("finite corpus"));
            }
            if total > 10.0 {
                for &w in &lane_shifts {
                    let pts: Vec<Point2> = dists
                        .iter()
                        .map(|&s| {
                            let phase = (s / total).min(1.0);
                            Point2::new(s, w * 0.5 * (1.0 - (std::f64::consts::PI * phase).cos()))
                        })
                        .collect();
                    out.push(Trajectory::from_positions(&pts, horizon.dt, Some(origin)).expect("finite corpus"));
                }
            }
        }
    }
    out
}
