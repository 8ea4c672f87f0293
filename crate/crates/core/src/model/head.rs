//! Projection head, prototype embedding and linear baseline.

use crate::error::Result;
use crate::model::init::{LINEAR_BIAS, LINEAR_WEIGHT, PROJ_BIAS, PROJ_WEIGHT};
use crate::numerics::{Conv1d, Dense, GlobalAvgPool, L2Normalize, ParameterSet, Real, Relu, Tensor};

/// Two-layer MLP with unit-norm output rows.
#[derive(Debug, Clone)]
pub struct Head<T> {
    fc1: Dense<T>,
    relu: Relu,
    fc2: Dense<T>,
    norm: L2Normalize<T>,
}

impl<T: Real> Default for Head<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Head<T> {
    pub fn new() -> Self {
        Self {
            fc1: Dense::new(),
            relu: Relu::new(),
            fc2: Dense::new(),
            norm: L2Normalize::new(),
        }
    }

    pub fn forward(&mut self, params: &ParameterSet<T>, pooled: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.fc1.forward(pooled, params.get("head.fc1.weight")?, params.get("head.fc1.bias")?)?;
        let h = self.relu.forward(&h);
        let h = self.fc2.forward(&h, params.get("head.fc2.weight")?, params.get("head.fc2.bias")?)?;
        Ok(self.norm.forward(&h)?.output)
    }

    pub fn backward(&self, params: &mut ParameterSet<T>, dz: &Tensor<T>) -> Result<Tensor<T>> {
        let dh = self.norm.backward(dz)?;
        let g2 = self.fc2.backward(&dh)?;
        params.accumulate_grad("head.fc2.weight", &g2.weight)?;
        params.accumulate_grad("head.fc2.bias", &g2.bias)?;
        let dh = self.relu.backward(&g2.input)?;
        let g1 = self.fc1.backward(&dh)?;
        params.accumulate_grad("head.fc1.weight", &g1.weight)?;
        params.accumulate_grad("head.fc1.bias", &g1.bias)?;
        Ok(g1.input)
    }

    pub fn signature(&self, seed: u64) -> u64 {
        self.norm.signature(self.relu.signature(seed))
    }
}

/// Width-1 convolution over the extractor map, ReLU, then global average
/// pooling: `[B, C, F] -> [B, out_dim]`.
#[derive(Debug, Clone)]
pub struct Classifier<T> {
    proj: Conv1d<T>,
    relu: Relu,
    pool: GlobalAvgPool,
}

impl<T: Real> Default for Classifier<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Classifier<T> {
    pub fn new() -> Self {
        Self {
            proj: Conv1d::new(1, 0),
            relu: Relu::new(),
            pool: GlobalAvgPool::new(),
        }
    }

    pub fn forward(&mut self, params: &ParameterSet<T>, map: &Tensor<T>) -> Result<Tensor<T>> {
        let h = self.proj.forward(map, params.get(PROJ_WEIGHT)?, params.get(PROJ_BIAS)?)?;
        let h = self.relu.forward(&h);
        self.pool.forward(&h)
    }

    /// Accumulates classifier gradients and returns the map gradient.
    pub fn backward(&self, params: &mut ParameterSet<T>, demb: &Tensor<T>) -> Result<Tensor<T>> {
        let dh = self.pool.backward(demb)?;
        let dh = self.relu.backward(&dh)?;
        let g = self.proj.backward(&dh)?;
        params.accumulate_grad(PROJ_WEIGHT, &g.kernel)?;
        params.accumulate_grad(PROJ_BIAS, &g.bias)?;
        Ok(g.input)
    }

    pub fn signature(&self, seed: u64) -> u64 {
        self.relu.signature(seed)
    }
}

/// Single dense layer producing class logits from pooled features.
#[derive(Debug, Clone)]
pub struct LinearBaseline<T> {
    dense: Dense<T>,
}

impl<T: Real> Default for LinearBaseline<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> LinearBaseline<T> {
    pub fn new() -> Self {
        Self { dense: Dense::new() }
    }

    pub fn forward(&mut self, params: &ParameterSet<T>, pooled: &Tensor<T>) -> Result<Tensor<T>> {
        self.dense.forward(pooled, params.get(LINEAR_WEIGHT)?, params.get(LINEAR_BIAS)?)
    }

    pub fn backward(&self, params: &mut ParameterSet<T>, dlogits: &Tensor<T>) -> Result<Tensor<T>> {
        let g = self.dense.backward(dlogits)?;
        params.accumulate_grad(LINEAR_WEIGHT, &g.weight)?;
        params.accumulate_grad(LINEAR_BIAS, &g.bias)?;
        Ok(g.input)
    }
}
