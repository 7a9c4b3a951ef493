use rand::Rng;

use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Sinusoidal encoding of an integer position: `[sin(t w_0), cos(t w_0), sin(t w_1), ...]`
/// with `w_i = 10000^(-2i/d)`.
pub fn positional_encoding(t: usize, d: usize) -> Vec<f64> {
    assert!(d.is_multiple_of(2), "positional encoding width must be even");
    let mut out = Vec::with_capacity(d);
    for i in 0..d / 2 {
        let freq = 10000f64.powf(-(2.0 * i as f64) / d as f64);
        let (s, c) = (t as f64 * freq).sin_cos();
        out.push(s);
        out.push(c);
    }
    out
}

/// Affine map `y = W x + b` with `W: [d_out, d_in]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Result<Self> {
        let weight = store.register_uniform(&format!("{name}.weight"), &[d_out, d_in], d_in, rng)?;
        let bias = store.register_uniform(&format!("{name}.bias"), &[d_out], d_in, rng)?;
        Ok(Self {
            weight,
            bias,
            d_in,
            d_out,
        })
    }

    /// Registers an all-zero layer.
    pub fn zeroed(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        let weight = store.register(&format!("{name}.weight"), Tensor::zeros(&[d_out, d_in]))?;
        let bias = store.register(&format!("{name}.bias"), Tensor::zeros(&[d_out]))?;
        Ok(Self {
            weight,
            bias,
            d_in,
            d_out,
        })
    }

    pub fn forward(&self, p: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in {
            return Err(Error::Shape(format!(
                "linear layer expects {} inputs, got {}",
                self.d_in,
                x.len()
            )));
        }
        let w = &p[self.weight];
        let b = p[self.bias].data();
        Ok((0..self.d_out)
            .map(|o| b[o] + w.row(o).iter().zip(x).map(|(a, v)| a * v).sum::<f64>())
            .collect())
    }

    /// Accumulates parameter gradients for input `x` and upstream `dy`; returns `dx`.
    pub fn backward(&self, p: &ParamStore, x: &[f64], dy: &[f64], grads: &mut ParamStore) -> Vec<f64> {
        self.accumulate_param_grads(x, dy, grads);
        let w = &p[self.weight];
        let mut dx = vec![0.0; self.d_in];
        for (o, &g) in dy.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            for (d, a) in dx.iter_mut().zip(w.row(o)) {
                *d += g * a;
            }
        }
        dx
    }

    pub fn accumulate_param_grads(&self, x: &[f64], dy: &[f64], grads: &mut ParamStore) {
        {
            let gw = &mut grads[self.weight];
            for (o, &g) in dy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                for (d, v) in gw.row_mut(o).iter_mut().zip(x) {
                    *d += g * v;
                }
            }
        }
        let gb = grads[self.bias].data_mut();
        for (d, g) in gb.iter_mut().zip(dy) {
            *d += g;
        }
    }
}

/// Stack of affine layers with ReLU between them; the last layer is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

/// Per-layer inputs and pre-activations from a forward pass.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Vec<f64>>,
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    /// `dims = [d_in, hidden..., d_out]`.
    pub fn new(store: &mut ParamStore, name: &str, dims: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Shape("mlp needs at least input and output widths".into()));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| Linear::new(store, &format!("{name}.{i}"), w[0], w[1], rng))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in
    }

    pub fn d_out(&self) -> usize {
        self.layers.last().map_or(0, |l| l.d_out)
    }

    pub fn forward(&self, p: &ParamStore, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
        };
        let mut h = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(p, &h)?;
            cache.inputs.push(std::mem::take(&mut h));
            h = if i == last {
                z.clone()
            } else {
                z.iter().map(|&v| relu(v)).collect()
            };
            cache.pre.push(z);
        }
        Ok((h, cache))
    }

    /// Backpropagates `dout`, accumulating into `grads`; returns the input gradient.
    pub fn backward(&self, p: &ParamStore, cache: &MlpCache, dout: &[f64], grads: &mut ParamStore) -> Vec<f64> {
        let mut d = dout.to_vec();
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            if i != last {
                for (g, &z) in d.iter_mut().zip(&cache.pre[i]) {
                    if z <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            d = self.layers[i].backward(p, &cache.inputs[i], &d, grads);
        }
        d
    }
}

pub fn mlp_forward(params: &ParamStore, input: &[f64], spec: &Mlp) -> Result<Vec<f64>> {
    spec.forward(params, input).map(|(y, _)| y)
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    pub weights: Vec<f64>,
    query: Vec<f64>,
    keys: Tensor,
    values: Tensor,
}

/// Single-query scaled dot-product attention: `softmax(q Kᵀ / sqrt(d)) V`.
pub fn attention(query: &[f64], keys: &Tensor, values: &Tensor) -> Result<(Vec<f64>, AttentionCache)> {
    let d = query.len();
    if d == 0 {
        return Err(Error::Shape("attention width must be positive".into()));
    }
    if keys.shape().len() != 2 || values.shape().len() != 2 {
        return Err(Error::Shape("keys and values must be 2-D".into()));
    }
    let t = keys.shape()[0];
    if t == 0 || keys.shape()[1] != d || values.shape()[0] != t {
        return Err(Error::Shape(format!(
            "query width {d} incompatible with keys {:?} / values {:?}",
            keys.shape(),
            values.shape()
        )));
    }
    let scale = 1.0 / (d as f64).sqrt();
    let scores: Vec<f64> = (0..t)
        .map(|r| keys.row(r).iter().zip(query).map(|(k, q)| k * q).sum::<f64>() * scale)
        .collect();
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let weights: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let dv = values.shape()[1];
    let mut out = vec![0.0; dv];
    for (r, &w) in weights.iter().enumerate() {
        for (o, v) in out.iter_mut().zip(values.row(r)) {
            *o += w * v;
        }
    }
    Ok((
        out,
        AttentionCache {
            weights,
            query: query.to_vec(),
            keys: keys.clone(),
            values: values.clone(),
        },
    ))
}

/// Gradients of attention with respect to `(query, keys, values)`.
pub fn attention_backward(cache: &AttentionCache, dout: &[f64]) -> (Vec<f64>, Tensor, Tensor) {
    let t = cache.weights.len();
    let d = cache.query.len();
    let scale = 1.0 / (d as f64).sqrt();
    let mut dvalues = Tensor::zeros(cache.values.shape());
    let mut dw = vec![0.0; t];
    for r in 0..t {
        let w = cache.weights[r];
        for (g, o) in dvalues.row_mut(r).iter_mut().zip(dout) {
            *g = w * o;
        }
        dw[r] = cache.values.row(r).iter().zip(dout).map(|(v, o)| v * o).sum();
    }
    let mean: f64 = cache.weights.iter().zip(&dw).map(|(w, g)| w * g).sum();
    let dscore: Vec<f64> = cache.weights.iter().zip(&dw).map(|(w, g)| w * (g - mean)).collect();
    let mut dquery = vec![0.0; d];
    let mut dkeys = Tensor::zeros(cache.keys.shape());
    for r in 0..t {
        let s = dscore[r] * scale;
        for (q, k) in dquery.iter_mut().zip(cache.keys.row(r)) {
            *q += s * k;
        }
        for (k, q) in dkeys.row_mut(r).iter_mut().zip(&cache.query) {
            *k = s * q;
        }
    }
    (dquery, dkeys, dvalues)
}
