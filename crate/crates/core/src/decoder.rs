//! Anchor-offset trajectory decoder.
//!
//! Each anchor `a_i` is embedded once into a query `Q_i = TrajEnc(a_i)`. Layer
//! `j` samples BEV features along the current hypothesis, projects them (with a
//! timestep encoding) to keys and values, attends with `Q_i`, and maps the
//! result to a `T×3` offset clipped to `±delta_max` per coordinate:
//!
//! `τ^{j+1} = τ^j + clip(Head_j(Attn(Q_i, K_j(G(F, τ^j)), V_j(G(F, τ^j)))))`.
//!
//! Gradients flow through features at the sampled locations but not through
//! the sampling positions themselves.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::anchors::{nearest_anchor, AnchorDictionary};
use crate::bev::{grid_mask, render_bev, sample_bev, BevConfig, BevGrid, GridMaskConfig};
use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Pose2};
use crate::nn::{
    attention, attention_backward, load_checkpoint, positional_encoding, save_checkpoint, sgd_step, AttentionCache,
    Linear, Mlp, MlpCache, ParamStore, Tensor,
};
use crate::scene::{Scenario, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecoderConfig {
    pub layers: usize,
    /// Per-layer offset bound, meters for x/y and radians for yaw.
    pub delta_max: f64,
    pub d_model: usize,
    /// Width of the per-timestep positional encoding.
    pub pe_dim: usize,
    pub hidden: usize,
    /// Positions are divided by this before entering the encoder.
    pub pos_scale: f64,
}

impl Default for DecoderConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            delta_max: 1.0,
            d_model: 64,
            pe_dim: 8,
            hidden: 64,
            pos_scale: 10.0,
        }
    }
}

impl DecoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("decoder.layers must be at least 1".into()));
        }
        if !(self.delta_max > 0.0 && self.delta_max.is_finite()) {
            return Err(Error::Config(format!(
                "decoder.delta_max must be positive, got {}",
                self.delta_max
            )));
        }
        if self.d_model == 0 || self.hidden == 0 {
            return Err(Error::Config("decoder widths must be positive".into()));
        }
        if self.pe_dim == 0 || !self.pe_dim.is_multiple_of(2) {
            return Err(Error::Config("decoder.pe_dim must be even and positive".into()));
        }
        if !(self.pos_scale > 0.0) {
            return Err(Error::Config("decoder.pos_scale must be positive".into()));
        }
        Ok(())
    }
}

/// Per-step encoder input: `[x/s, y/s, yaw, pe(t)...]` for every pose.
pub(crate) fn trajectory_features(traj: &Trajectory, pe_dim: usize, pos_scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(traj.len() * (3 + pe_dim));
    for (t, p) in traj.poses().iter().enumerate() {
        out.extend_from_slice(&[p.x / pos_scale, p.y / pos_scale, p.yaw]);
        out.extend(positional_encoding(t, pe_dim));
    }
    out
}

/// Key/value input rows: each sampled feature vector followed by its timestep encoding.
pub(crate) fn feature_rows(features: &[Vec<f64>], pe_dim: usize) -> Vec<Vec<f64>> {
    features
        .iter()
        .enumerate()
        .map(|(t, f)| {
            let mut row = f.clone();
            row.extend(positional_encoding(t, pe_dim));
            row
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayer {
    pub key: Linear,
    pub value: Linear,
    pub head: Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderModel {
    pub config: DecoderConfig,
    pub steps: usize,
    pub channels: usize,
    pub params: ParamStore,
    pub encoder: Mlp,
    pub layers: Vec<DecoderLayer>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DecoderMeta {
    kind: String,
    config: DecoderConfig,
    steps: usize,
    channels: usize,
}

impl DecoderModel {
    /// Seeded random initialization. Offset heads start at zero so an untrained
    /// model reproduces the anchors exactly.
    pub fn new(config: DecoderConfig, steps: usize, channels: usize, seed: u64) -> Result<Self> {
        Self::build(config, steps, channels, seed, false)
    }

    /// Every parameter zero.
    pub fn zeroed(config: DecoderConfig, steps: usize, channels: usize) -> Result<Self> {
        Self::build(config, steps, channels, 0, true)
    }

    fn build(config: DecoderConfig, steps: usize, channels: usize, seed: u64, zero: bool) -> Result<Self> {
        config.validate()?;
        if steps == 0 || channels == 0 {
            return Err(Error::Config("decoder needs positive steps and channels".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new(seed);
        let d = config.d_model;
        let enc_in = steps * (3 + config.pe_dim);
        let encoder = Mlp::new(&mut params, "encoder", &[enc_in, config.hidden, d], &mut rng)?;
        let kv_in = channels + config.pe_dim;
        let mut layers = Vec::with_capacity(config.layers);
        for j in 0..config.layers {
            let key = Linear::new(&mut params, &format!("layer{j}.key"), kv_in, d, &mut rng)?;
            let value = Linear::new(&mut params, &format!("layer{j}.value"), kv_in, d, &mut rng)?;
            let head = Linear::zeroed(&mut params, &format!("layer{j}.head"), d, 3 * steps)?;
            layers.push(DecoderLayer { key, value, head });
        }
        if zero {
            params.zero();
        }
        Ok(Self {
            config,
            steps,
            channels,
            params,
            encoder,
            layers,
        })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Copy keeping only the first `k` layers.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.layers.len() {
            return Err(Error::Config(format!(
                "cannot use {k} layers of a {}-layer decoder",
                self.layers.len()
            )));
        }
        let mut out = self.clone();
        out.layers.truncate(k);
        out.config.layers = k;
        Ok(out)
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        let meta = DecoderMeta {
            kind: "decoder".into(),
            config: self.config,
            steps: self.steps,
            channels: self.channels,
        };
        save_checkpoint(stem, &self.params, serde_json::to_value(meta).expect("meta serializes"))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let ck = load_checkpoint(stem)?;
        let meta: DecoderMeta = serde_json::from_value(ck.meta)
            .map_err(|e| Error::Config(format!("{}: bad decoder metadata: {e}", stem.display())))?;
        if meta.kind != "decoder" {
            return Err(Error::Config(format!(
                "{} is a {} checkpoint",
                stem.display(),
                meta.kind
            )));
        }
        let mut model = Self::zeroed(meta.config, meta.steps, meta.channels)?;
        model.params.check_layout(&ck.params)?;
        model.params = ck.params;
        Ok(model)
    }

    fn check_dictionary(&self, dict: &AnchorDictionary) -> Result<()> {
        if dict.steps() != self.steps {
            return Err(Error::Shape(format!(
                "dictionary has {} steps, decoder expects {}",
                dict.steps(),
                self.steps
            )));
        }
        Ok(())
    }
}

pub fn traj_enc(model: &DecoderModel, traj: &Trajectory) -> Result<(Vec<f64>, MlpCache)> {
    if traj.len() != model.steps {
        return Err(Error::Shape(format!(
            "trajectory has {} poses, encoder expects {}",
            traj.len(),
            model.steps
        )));
    }
    let x = trajectory_features(traj, model.config.pe_dim, model.config.pos_scale);
    model.encoder.forward(&model.params, &x)
}

#[derive(Debug, Clone)]
pub struct LayerCache {
    rows: Vec<Vec<f64>>,
    attn: AttentionCache,
    attn_out: Vec<f64>,
    /// Head output before clipping, `[dx0, dy0, dyaw0, dx1, ...]`.
    pub raw: Vec<f64>,
    /// Offsets actually applied.
    pub applied: Vec<f64>,
}

/// One refinement layer with features sampled from `grid` at `hyp`.
pub fn decode_layer(
    model: &DecoderModel,
    j: usize,
    query: &[f64],
    hyp: &Trajectory,
    grid: &BevGrid,
) -> Result<(Trajectory, LayerCache)> {
    let features = sample_bev(grid, hyp);
    decode_layer_with_features(model, j, query, hyp, &features)
}

/// [`decode_layer`] with caller-supplied features (one vector per pose).
pub fn decode_layer_with_features(
    model: &DecoderModel,
    j: usize,
    query: &[f64],
    hyp: &Trajectory,
    features: &[Vec<f64>],
) -> Result<(Trajectory, LayerCache)> {
    let layer = model
        .layers
        .get(j)
        .ok_or_else(|| Error::Shape(format!("layer {j} out of range")))?;
    if hyp.len() != model.steps || features.len() != model.steps {
        return Err(Error::Shape(
            "hypothesis/feature length does not match decoder steps".into(),
        ));
    }
    let d = model.config.d_model;
    let rows = feature_rows(features, model.config.pe_dim);
    let mut keys = Tensor::zeros(&[model.steps, d]);
    let mut values = Tensor::zeros(&[model.steps, d]);
    for (t, row) in rows.iter().enumerate() {
        keys.row_mut(t).copy_from_slice(&layer.key.forward(&model.params, row)?);
        values
            .row_mut(t)
            .copy_from_slice(&layer.value.forward(&model.params, row)?);
    }
    let (attn_out, attn) = attention(query, &keys, &values)?;
    let raw = layer.head.forward(&model.params, &attn_out)?;
    let dm = model.config.delta_max;
    let applied: Vec<f64> = raw.iter().map(|v| v.clamp(-dm, dm)).collect();
    let poses = hyp
        .poses()
        .iter()
        .enumerate()
        .map(|(t, p)| {
            Pose2::new(
                p.x + applied[3 * t],
                p.y + applied[3 * t + 1],
                wrap_angle(p.yaw + applied[3 * t + 2]),
            )
        })
        .collect();
    let next = Trajectory::new(poses, hyp.dt())?;
    Ok((
        next,
        LayerCache {
            rows,
            attn,
            attn_out,
            raw,
            applied,
        },
    ))
}

/// Backpropagates the gradient on a layer's output hypothesis. Accumulates
/// parameter gradients and returns the gradient on the query. The gradient on
/// the input hypothesis equals `d_next` (identity path).
pub fn decode_layer_backward(
    model: &DecoderModel,
    j: usize,
    cache: &LayerCache,
    d_next: &[f64],
    grads: &mut ParamStore,
) -> Vec<f64> {
    let layer = &model.layers[j];
    let dm = model.config.delta_max;
    let d_raw: Vec<f64> = d_next
        .iter()
        .zip(&cache.raw)
        .map(|(g, r)| if r.abs() < dm { *g } else { 0.0 })
        .collect();
    let d_attn = layer.head.backward(&model.params, &cache.attn_out, &d_raw, grads);
    let (dq, dk, dv) = attention_backward(&cache.attn, &d_attn);
    for (t, row) in cache.rows.iter().enumerate() {
        layer.key.accumulate_param_grads(row, dk.row(t), grads);
        layer.value.accumulate_param_grads(row, dv.row(t), grads);
    }
    dq
}

/// Forward state of one candidate: query, every hypothesis and every layer cache.
#[derive(Debug, Clone)]
pub struct CandidateTrace {
    pub query: Vec<f64>,
    enc_cache: MlpCache,
    /// `hypotheses[0]` is the anchor, `hypotheses[j+1]` the output of layer `j`.
    pub hypotheses: Vec<Trajectory>,
    pub layers: Vec<LayerCache>,
}

impl CandidateTrace {
    pub fn output(&self) -> &Trajectory {
        self.hypotheses.last().expect("at least the anchor")
    }

    /// Features sampled at each layer's input hypothesis.
    pub fn sampled_features(&self, grid: &BevGrid) -> Vec<Vec<Vec<f64>>> {
        self.hypotheses[..self.layers.len()]
            .iter()
            .map(|h| sample_bev(grid, h))
            .collect()
    }
}

/// Runs every layer for one anchor. With `fixed_features`, layer `j` uses
/// `fixed_features[j]` instead of sampling the grid (used to hold sampling
/// positions constant).
pub fn forward_candidate(
    model: &DecoderModel,
    anchor: &Trajectory,
    grid: &BevGrid,
    fixed_features: Option<&[Vec<Vec<f64>>]>,
) -> Result<CandidateTrace> {
    let (query, enc_cache) = traj_enc(model, anchor)?;
    let mut hypotheses = vec![anchor.clone()];
    let mut layers = Vec::with_capacity(model.layers.len());
    for j in 0..model.layers.len() {
        let hyp = &hypotheses[j];
        let (next, cache) = match fixed_features {
            Some(f) => decode_layer_with_features(model, j, &query, hyp, &f[j])?,
            None => decode_layer(model, j, &query, hyp, grid)?,
        };
        hypotheses.push(next);
        layers.push(cache);
    }
    Ok(CandidateTrace {
        query,
        enc_cache,
        hypotheses,
        layers,
    })
}

/// Accumulates parameter gradients for a gradient on the final hypothesis.
pub fn backward_candidate(model: &DecoderModel, trace: &CandidateTrace, d_final: &[f64], grads: &mut ParamStore) {
    let mut dq = vec![0.0; model.config.d_model];
    for j in (0..trace.layers.len()).rev() {
        let g = decode_layer_backward(model, j, &trace.layers[j], d_final, grads);
        dq.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    model.encoder.backward(&model.params, &trace.enc_cache, &dq, grads);
}

/// Refined candidates plus every intermediate hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub trajectories: Vec<Trajectory>,
    /// `intermediates[i][j]` is hypothesis `j` of candidate `i`; index 0 is the anchor.
    pub intermediates: Vec<Vec<Trajectory>>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }
}

pub fn generate_candidates(model: &DecoderModel, dict: &AnchorDictionary, grid: &BevGrid) -> Result<CandidateSet> {
    model.check_dictionary(dict)?;
    if grid.channels() != model.channels {
        return Err(Error::Shape(format!(
            "grid has {} channels, decoder expects {}",
            grid.channels(),
            model.channels
        )));
    }
    let mut trajectories = Vec::with_capacity(dict.len());
    let mut intermediates = Vec::with_capacity(dict.len());
    for a in dict.anchors() {
        let trace = forward_candidate(model, a, grid, None)?;
        trajectories.push(trace.output().clone());
        intermediates.push(trace.hypotheses);
    }
    Ok(CandidateSet {
        trajectories,
        intermediates,
    })
}

/// Mean absolute error over all `3T` coordinates, yaw difference wrapped, and
/// its gradient with respect to the prediction.
pub fn l1_loss(pred: &Trajectory, target: &Trajectory) -> (f64, Vec<f64>) {
    let n = 3 * pred.len();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(n);
    for (p, t) in pred.poses().iter().zip(target.poses()) {
        for diff in [p.x - t.x, p.y - t.y, wrap_angle(p.yaw - t.yaw)] {
            loss += diff.abs();
            let sign = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            grad.push(sign / n as f64);
        }
    }
    (loss / n as f64, grad)
}

/// Training hyper-parameters shared by the decoder and scorer loops.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Optional cap on the number of SGD steps.
    pub max_steps: Option<usize>,
    pub grid_mask_probability: f64,
    pub grid_mask: GridMaskConfig,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 1e-3,
            seed: 0,
            max_steps: None,
            grid_mask_probability: 0.5,
            grid_mask: GridMaskConfig::default(),
        }
    }
}

impl TrainOptions {
    pub fn total_steps(&self, per_epoch: usize) -> usize {
        let full = self.epochs * per_epoch;
        self.max_steps.map_or(full, |m| m.min(full))
    }

    /// Cosine decay from `lr` to zero over the run.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        let frac = step as f64 / total.max(1) as f64;
        (self.lr * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())).max(self.lr * 1e-3)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub step_losses: Vec<f64>,
    pub epoch_losses: Vec<f64>,
}

/// Canonical, seed-shuffled visiting order for each epoch. Items are first
/// sorted by key, so the input order does not affect the schedule.
pub(crate) fn epoch_orders(keys: &[&str], epochs: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut canonical: Vec<usize> = (0..keys.len()).collect();
    canonical.sort_by(|&a, &b| keys[a].cmp(keys[b]).then(a.cmp(&b)));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..epochs)
        .map(|_| {
            let mut order = canonical.clone();
            order.shuffle(&mut rng);
            order
        })
        .collect()
}

/// Renders each distinct scenario once.
pub(crate) fn render_unique(dataset: &[Scenario], bev: &BevConfig) -> BTreeMap<String, BevGrid> {
    use rayon::prelude::*;
    let mut unique: BTreeMap<&str, &Scenario> = BTreeMap::new();
    for s in dataset {
        unique.entry(s.id.as_str()).or_insert(s);
    }
    unique
        .into_par_iter()
        .map(|(id, s)| (id.to_string(), render_bev(s, bev)))
        .collect()
}

/// Winner-take-all imitation: per scenario, only the candidate whose anchor is
/// nearest the human trajectory is pulled towards it with an L1 loss.
/// `dataset` is the training schedule and may repeat scenarios.
pub fn train_decoder(
    model: &mut DecoderModel,
    dataset: &[Scenario],
    dict: &AnchorDictionary,
    bev: &BevConfig,
    opts: &TrainOptions,
) -> Result<TrainHistory> {
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    model.check_dictionary(dict)?;
    let grids = render_unique(dataset, bev);
    let targets: Vec<(Trajectory, usize)> = dataset
        .iter()
        .map(|s| {
            let human = s.scene_to_ego(&s.human_trajectory);
            let i = nearest_anchor(dict, &human);
            (human, i)
        })
        .collect();
    let keys: Vec<&str> = dataset.iter().map(|s| s.id.as_str()).collect();
    let orders = epoch_orders(&keys, opts.epochs, opts.seed);
    let total = opts.total_steps(dataset.len());
    let mut mask_rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6d61_736b);
    let mut grads = model.params.zeros_like();
    let mut history = TrainHistory::default();
    let mut step = 0;
    'epochs: for order in &orders {
        let mut epoch_sum = 0.0;
        let mut epoch_n = 0;
        for &idx in order {
            if step >= total {
                break 'epochs;
            }
            let s = &dataset[idx];
            let clean = &grids[&s.id];
            let mask_seed: u64 = mask_rng.gen();
            let grid = grid_mask(clean, opts.grid_mask_probability, mask_seed, &opts.grid_mask);
            let (target, anchor) = &targets[idx];
            let trace = forward_candidate(model, &dict.anchors()[*anchor], &grid, None)?;
            let (loss, d_final) = l1_loss(trace.output(), target);
            grads.zero();
            backward_candidate(model, &trace, &d_final, &mut grads);
            sgd_step(&mut model.params, &grads, opts.lr_at(step, total))?;
            history.step_losses.push(loss);
            epoch_sum += loss;
            epoch_n += 1;
            step += 1;
        }
        if epoch_n > 0 {
            history.epoch_losses.push(epoch_sum / epoch_n as f64);
        }
    }
    Ok(history)
}
