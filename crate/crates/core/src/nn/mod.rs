//! Small neural toolkit: named parameter storage, affine/MLP layers,
//! single-head scaled dot-product attention, sinusoidal positional encoding and
//! plain SGD. Every op exposes an explicit backward pass.

mod checkpoint;
mod ops;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use ops::{
    attention, attention_backward, mlp_forward, positional_encoding, relu, sigmoid, AttentionCache, Linear, Mlp,
    MlpCache,
};

use std::collections::HashMap;
use std::ops::{Index, IndexMut};

use rand::Rng;

use crate::error::{Error, Result};

/// Dense row-major array of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Row `r` of a 2-D tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.shape[1];
        &mut self.data[r * cols..(r + 1) * cols]
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

/// Handle to a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

/// Named parameter tensors in registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    seed: u64,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            names: Vec::new(),
            tensors: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn register(&mut self, name: &str, tensor: Tensor) -> Result<ParamId> {
        if self.index.contains_key(name) {
            return Err(Error::Shape(format!("duplicate parameter name `{name}`")));
        }
        let id = self.tensors.len();
        self.index.insert(name.to_string(), id);
        self.names.push(name.to_string());
        self.tensors.push(tensor);
        Ok(ParamId(id))
    }

    /// Registers a tensor initialized uniformly in `±1/sqrt(fan_in)`.
    pub fn register_uniform(
        &mut self,
        name: &str,
        shape: &[usize],
        fan_in: usize,
        rng: &mut impl Rng,
    ) -> Result<ParamId> {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        self.register(name, Tensor::from_vec(shape, data)?)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.tensors[i])
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter_mut())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    /// Same names and shapes, all zeros. Used as a gradient buffer.
    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            seed: self.seed,
            names: self.names.clone(),
            tensors: self.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
            index: self.index.clone(),
        }
    }

    pub fn zero(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.fill(0.0));
    }

    pub fn scale(&mut self, s: f64) {
        for t in &mut self.tensors {
            t.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    /// `self += other`, requiring identical layout.
    pub fn add_assign(&mut self, other: &ParamStore) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data_mut().iter_mut().zip(b.data()).for_each(|(x, y)| *x += y);
        }
        Ok(())
    }

    /// Copies values from `other`, which must have the same names and shapes.
    pub fn copy_from(&mut self, other: &ParamStore) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data_mut().copy_from_slice(b.data());
        }
        Ok(())
    }

    pub fn check_layout(&self, other: &ParamStore) -> Result<()> {
        if self.names != other.names {
            return Err(Error::Shape("parameter names differ".into()));
        }
        for (n, (a, b)) in self.names.iter().zip(self.tensors.iter().zip(&other.tensors)) {
            if a.shape() != b.shape() {
                return Err(Error::Shape(format!(
                    "parameter `{n}` has shape {:?}, expected {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        Ok(())
    }

    /// All parameter values, flattened in registration order.
    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.tensors.iter().map(Tensor::len).sum();
        if values.len() != total {
            return Err(Error::Shape(format!("expected {total} values, got {}", values.len())));
        }
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

impl Index<ParamId> for ParamStore {
    type Output = Tensor;
    fn index(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }
}

impl IndexMut<ParamId> for ParamStore {
    fn index_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }
}

/// Plain gradient descent: `p <- p - lr * g`.
pub fn sgd_step(params: &mut ParamStore, grads: &ParamStore, lr: f64) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    params.check_layout(grads)?;
    for (p, g) in params.tensors.iter_mut().zip(&grads.tensors) {
        p.data_mut().iter_mut().zip(g.data()).for_each(|(x, d)| *x -= lr * d);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_scalar_arithmetic() {
        let mut p = ParamStore::new(0);
        let id = p.register("p", Tensor::from_vec(&[1], vec![1.0]).unwrap()).unwrap();
        let mut g = p.zeros_like();
        g[id].data_mut()[0] = 2.0;
        sgd_step(&mut p, &g, 0.1).unwrap();
        assert!((p[id].data()[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_grad_is_noop() {
        let mut p = ParamStore::new(0);
        p.register("w", Tensor::from_vec(&[2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap())
            .unwrap();
        let before = p.clone();
        let g = p.zeros_like();
        sgd_step(&mut p, &g, 0.3).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn sgd_quadratic_converges() {
        // loss = p^2 / 2, gradient = p; p_k = 0.9^k.
        let mut p = ParamStore::new(0);
        let id = p.register("p", Tensor::from_vec(&[1], vec![1.0]).unwrap()).unwrap();
        let mut steps = 0;
        while p[id].data()[0].abs() >= 1e-3 {
            let mut g = p.zeros_like();
            g[id].data_mut()[0] = p[id].data()[0];
            sgd_step(&mut p, &g, 0.1).unwrap();
            steps += 1;
        }
        // ceil(ln(1e-3) / ln(0.9)) = 66
        assert_eq!(steps, 66);
        assert!(steps <= 200);
    }

    #[test]
    fn sgd_shape_mismatch() {
        let mut a = ParamStore::new(0);
        a.register("w", Tensor::zeros(&[2])).unwrap();
        let mut b = ParamStore::new(0);
        b.register("w", Tensor::zeros(&[3])).unwrap();
        assert!(matches!(sgd_step(&mut a, &b, 0.1), Err(Error::Shape(_))));
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut a = ParamStore::new(0);
        a.register("w", Tensor::zeros(&[2])).unwrap();
        assert!(a.register("w", Tensor::zeros(&[2])).is_err());
    }
}
