//! Learned trajectory scorer supervised by the metric oracle.
//!
//! A candidate is embedded into a query (positions, yaw and timestep encodings
//! through an MLP). Keys and values come from the BEV features sampled along
//! the candidate. The attended vector plus the query feeds a ReLU trunk and
//! four sigmoid heads: overall score, no-collision, drivable-area and comfort.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anchors::AnchorDictionary;
use crate::bev::{grid_mask, sample_bev, BevConfig, BevGrid};
use crate::decoder::{
    epoch_orders, feature_rows, generate_candidates, render_unique, trajectory_features, CandidateSet, DecoderModel,
    TrainHistory, TrainOptions,
};
use crate::epdms::{evaluate, MetricConfig};
use crate::error::{Error, Result};
use crate::nn::{
    attention, attention_backward, load_checkpoint, relu, save_checkpoint, sgd_step, sigmoid, AttentionCache, Linear,
    Mlp, MlpCache, ParamStore, Tensor,
};
use crate::scene::{Scenario, Trajectory};

/// Number of output heads.
pub const HEADS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerConfig {
    pub d_model: usize,
    pub pe_dim: usize,
    pub hidden: usize,
    pub pos_scale: f64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            pe_dim: 8,
            hidden: 64,
            pos_scale: 10.0,
        }
    }
}

impl ScorerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.hidden == 0 {
            return Err(Error::Config("scorer widths must be positive".into()));
        }
        if self.pe_dim == 0 || !self.pe_dim.is_multiple_of(2) {
            return Err(Error::Config("scorer.pe_dim must be even and positive".into()));
        }
        if !(self.pos_scale > 0.0) {
            return Err(Error::Config("scorer.pos_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePrediction {
    pub epdms: f64,
    pub nc: f64,
    pub dac: f64,
    pub comfort: f64,
}

impl ScorePrediction {
    fn from_probs(p: &[f64]) -> Self {
        Self {
            epdms: p[0],
            nc: p[1],
            dac: p[2],
            comfort: p[3],
        }
    }
}

/// Oracle targets for the four heads.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreLabels {
    pub epdms: f64,
    pub nc: f64,
    pub dac: f64,
    pub comfort: f64,
}

impl ScoreLabels {
    fn as_array(&self) -> [f64; HEADS] {
        [self.epdms, self.nc, self.dac, self.comfort]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScorerModel {
    pub config: ScorerConfig,
    pub steps: usize,
    pub channels: usize,
    pub params: ParamStore,
    pub embed: Mlp,
    pub key: Linear,
    pub value: Linear,
    pub trunk: Linear,
    pub heads: Linear,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScorerMeta {
    kind: String,
    config: ScorerConfig,
    steps: usize,
    channels: usize,
}

impl ScorerModel {
    pub fn new(config: ScorerConfig, steps: usize, channels: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if steps == 0 || channels == 0 {
            return Err(Error::Config("scorer needs positive steps and channels".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new(seed);
        let d = config.d_model;
        let embed = Mlp::new(
            &mut params,
            "embed",
            &[steps * (3 + config.pe_dim), config.hidden, d],
            &mut rng,
        )?;
        let kv_in = channels + config.pe_dim;
        let key = Linear::new(&mut params, "key", kv_in, d, &mut rng)?;
        let value = Linear::new(&mut params, "value", kv_in, d, &mut rng)?;
        let trunk = Linear::new(&mut params, "trunk", d, config.hidden, &mut rng)?;
        let heads = Linear::new(&mut params, "heads", config.hidden, HEADS, &mut rng)?;
        Ok(Self {
            config,
            steps,
            channels,
            params,
            embed,
            key,
            value,
            trunk,
            heads,
        })
    }

    pub fn save(&self, stem: &Path) -> Result<()> {
        let meta = ScorerMeta {
            kind: "scorer".into(),
            config: self.config,
            steps: self.steps,
            channels: self.channels,
        };
        save_checkpoint(stem, &self.params, serde_json::to_value(meta).expect("meta serializes"))
    }

    pub fn load(stem: &Path) -> Result<Self> {
        let ck = load_checkpoint(stem)?;
        let meta: ScorerMeta = serde_json::from_value(ck.meta)
            .map_err(|e| Error::Config(format!("{}: bad scorer metadata: {e}", stem.display())))?;
        if meta.kind != "scorer" {
            return Err(Error::Config(format!(
                "{} is a {} checkpoint",
                stem.display(),
                meta.kind
            )));
        }
        let mut model = Self::new(meta.config, meta.steps, meta.channels, ck.params.seed())?;
        model.params.check_layout(&ck.params)?;
        model.params = ck.params;
        Ok(model)
    }
}

/// Forward state of one scored trajectory.
#[derive(Debug, Clone)]
pub struct ScoreTrace {
    embed_cache: MlpCache,
    rows: Vec<Vec<f64>>,
    attn: AttentionCache,
    hidden_in: Vec<f64>,
    trunk_pre: Vec<f64>,
    trunk_out: Vec<f64>,
    /// Head outputs before the sigmoid.
    pub logits: Vec<f64>,
}

pub fn score_trajectory(model: &ScorerModel, traj: &Trajectory, grid: &BevGrid) -> Result<ScorePrediction> {
    score_forward(model, traj, &sample_bev(grid, traj)).map(|(p, _)| p)
}

/// Forward pass with the features sampled along `traj` supplied by the caller.
pub fn score_forward(
    model: &ScorerModel,
    traj: &Trajectory,
    features: &[Vec<f64>],
) -> Result<(ScorePrediction, ScoreTrace)> {
    if traj.len() != model.steps || features.len() != model.steps {
        return Err(Error::Shape(format!(
            "scorer expects {} poses, got {}",
            model.steps,
            traj.len()
        )));
    }
    let p = &model.params;
    let d = model.config.d_model;
    let x = trajectory_features(traj, model.config.pe_dim, model.config.pos_scale);
    let (query, embed_cache) = model.embed.forward(p, &x)?;
    let rows = feature_rows(features, model.config.pe_dim);
    let mut keys = Tensor::zeros(&[model.steps, d]);
    let mut values = Tensor::zeros(&[model.steps, d]);
    for (t, row) in rows.iter().enumerate() {
        keys.row_mut(t).copy_from_slice(&model.key.forward(p, row)?);
        values.row_mut(t).copy_from_slice(&model.value.forward(p, row)?);
    }
    let (attended, attn) = attention(&query, &keys, &values)?;
    let hidden_in: Vec<f64> = query.iter().zip(&attended).map(|(a, b)| a + b).collect();
    let trunk_pre = model.trunk.forward(p, &hidden_in)?;
    let trunk_out: Vec<f64> = trunk_pre.iter().map(|&v| relu(v)).collect();
    let logits = model.heads.forward(p, &trunk_out)?;
    let probs: Vec<f64> = logits.iter().map(|&z| sigmoid(z)).collect();
    Ok((
        ScorePrediction::from_probs(&probs),
        ScoreTrace {
            embed_cache,
            rows,
            attn,
            hidden_in,
            trunk_pre,
            trunk_out,
            logits,
        },
    ))
}

/// Accumulates parameter gradients for a gradient on the four logits.
pub fn score_backward(model: &ScorerModel, trace: &ScoreTrace, d_logits: &[f64], grads: &mut ParamStore) {
    let p = &model.params;
    let mut d_hidden = model.heads.backward(p, &trace.trunk_out, d_logits, grads);
    for (g, &z) in d_hidden.iter_mut().zip(&trace.trunk_pre) {
        if z <= 0.0 {
            *g = 0.0;
        }
    }
    let d_in = model.trunk.backward(p, &trace.hidden_in, &d_hidden, grads);
    let (dq, dk, dv) = attention_backward(&trace.attn, &d_in);
    for (t, row) in trace.rows.iter().enumerate() {
        model.key.accumulate_param_grads(row, dk.row(t), grads);
        model.value.accumulate_param_grads(row, dv.row(t), grads);
    }
    let dquery: Vec<f64> = d_in.iter().zip(&dq).map(|(a, b)| a + b).collect();
    model.embed.backward(p, &trace.embed_cache, &dquery, grads);
}

/// Squared error on the overall head plus binary cross-entropy on the other
/// three, with the gradient on the logits.
pub fn score_loss(logits: &[f64], labels: &ScoreLabels) -> (f64, [f64; HEADS]) {
    let y = labels.as_array();
    let s0 = sigmoid(logits[0]);
    let mut loss = (s0 - y[0]).powi(2);
    let mut grad = [0.0; HEADS];
    grad[0] = 2.0 * (s0 - y[0]) * s0 * (1.0 - s0);
    for h in 1..HEADS {
        let z = logits[h];
        // log(1 + e^{-|z|}) + max(z, 0) - y z, computed stably.
        loss += z.max(0.0) - y[h] * z + (-z.abs()).exp().ln_1p();
        grad[h] = sigmoid(z) - y[h];
    }
    (loss, grad)
}

pub fn score_batch(model: &ScorerModel, candidates: &CandidateSet, grid: &BevGrid) -> Result<Vec<ScorePrediction>> {
    if candidates.is_empty() {
        return Err(Error::Empty("candidate set"));
    }
    candidates
        .trajectories
        .iter()
        .map(|t| score_trajectory(model, t, grid))
        .collect()
}

/// Index of the highest predicted overall score; ties go to the lowest index.
pub fn select_trajectory(predictions: &[ScorePrediction]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, p) in predictions.iter().enumerate() {
        if best.is_none_or(|(_, v)| p.epdms > v) {
            best = Some((i, p.epdms));
        }
    }
    best.map(|(i, _)| i).ok_or(Error::Empty("candidate set"))
}

/// Candidates of one scenario with their oracle labels.
#[derive(Debug, Clone)]
pub struct LabeledScenario {
    pub id: String,
    pub candidates: CandidateSet,
    pub labels: Vec<ScoreLabels>,
}

pub fn label_candidates(s: &Scenario, candidates: &CandidateSet, metrics: &MetricConfig) -> Result<Vec<ScoreLabels>> {
    candidates
        .trajectories
        .iter()
        .map(|t| {
            let r = evaluate(s, t, metrics)?;
            Ok(ScoreLabels {
                epdms: r.epdms,
                nc: r.filtered.nc,
                dac: r.filtered.dac,
                comfort: r.filtered.hc,
            })
        })
        .collect()
}

/// Generates and labels candidates for every distinct scenario.
pub fn build_labels(
    dataset: &[Scenario],
    decoder: &DecoderModel,
    dict: &AnchorDictionary,
    bev: &BevConfig,
    metrics: &MetricConfig,
) -> Result<(Vec<LabeledScenario>, std::collections::BTreeMap<String, BevGrid>)> {
    let grids = render_unique(dataset, bev);
    let labeled = dataset
        .par_iter()
        .map(|s| {
            let candidates = generate_candidates(decoder, dict, &grids[&s.id])?;
            let labels = label_candidates(s, &candidates, metrics)?;
            Ok(LabeledScenario {
                id: s.id.clone(),
                candidates,
                labels,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((labeled, grids))
}

/// One SGD step per scenario on the mean loss over its candidates.
pub fn train_on_labels(
    model: &mut ScorerModel,
    labeled: &[LabeledScenario],
    grids: &std::collections::BTreeMap<String, BevGrid>,
    opts: &TrainOptions,
) -> Result<TrainHistory> {
    if labeled.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    let keys: Vec<&str> = labeled.iter().map(|l| l.id.as_str()).collect();
    let orders = epoch_orders(&keys, opts.epochs, opts.seed);
    let total = opts.total_steps(labeled.len());
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
            let item = &labeled[idx];
            let clean = grids
                .get(&item.id)
                .ok_or_else(|| Error::Missing(format!("feature grid for scenario {}", item.id)))?;
            let mask_seed: u64 = mask_rng.gen();
            let grid = grid_mask(clean, opts.grid_mask_probability, mask_seed, &opts.grid_mask);
            grads.zero();
            let n = item.candidates.len();
            let mut loss_sum = 0.0;
            for (traj, labels) in item.candidates.trajectories.iter().zip(&item.labels) {
                let (_, trace) = score_forward(model, traj, &sample_bev(&grid, traj))?;
                let (loss, d_logits) = score_loss(&trace.logits, labels);
                loss_sum += loss;
                score_backward(model, &trace, &d_logits, &mut grads);
            }
            grads.scale(1.0 / n as f64);
            sgd_step(&mut model.params, &grads, opts.lr_at(step, total))?;
            let loss = loss_sum / n as f64;
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

/// Labels candidates from the frozen decoder with the oracle, then fits the scorer.
pub fn train_scorer(
    model: &mut ScorerModel,
    dataset: &[Scenario],
    dict: &AnchorDictionary,
    decoder: &DecoderModel,
    bev: &BevConfig,
    metrics: &MetricConfig,
    opts: &TrainOptions,
) -> Result<TrainHistory> {
    if dataset.is_empty() {
        return Err(Error::Empty("training dataset"));
    }
    let mut unique: Vec<Scenario> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for s in dataset {
        if seen.insert(s.id.as_str()) {
            unique.push(s.clone());
        }
    }
    let (labeled, grids) = build_labels(&unique, decoder, dict, bev, metrics)?;
    let by_id: std::collections::BTreeMap<&str, &LabeledScenario> =
        labeled.iter().map(|l| (l.id.as_str(), l)).collect();
    // Repeats in the schedule share one labeling pass.
    let schedule: Vec<LabeledScenario> = dataset.iter().map(|s| by_id[s.id.as_str()].clone()).collect();
    train_on_labels(model, &schedule, &grids, opts)
}
