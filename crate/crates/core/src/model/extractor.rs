//! Residual 1-D convolutional feature extractor.

use crate::error::{Error, Result};
use crate::model::config::ExtractorConfig;
use crate::model::init::unit_prefix;
use crate::numerics::{
    BatchNorm1d, BnMode, Conv1d, GlobalAvgPool, ParameterSet, Real, Relu, Tensor,
};

/// Whether batch norm uses batch statistics (and may update running ones).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub(crate) fn add<T: Real>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape() != b.shape() {
        return Err(Error::dimension(
            op,
            format!("cannot add shapes {:?} and {:?}", a.shape(), b.shape()),
        ));
    }
    let v = a.values().iter().zip(b.values()).map(|(&x, &y)| x + y).collect();
    Tensor::new(a.shape().to_vec(), v)
}

#[derive(Debug, Clone)]
struct ConvBn<T> {
    prefix: String,
    conv: Conv1d<T>,
    bn: BatchNorm1d<T>,
}

impl<T: Real> ConvBn<T> {
    fn new(prefix: String, cfg: &ExtractorConfig) -> Self {
        Self {
            prefix,
            conv: Conv1d::new(1, cfg.padding()),
            bn: BatchNorm1d::new(cfg.bn_momentum, cfg.bn_epsilon),
        }
    }

    fn name(&self, suffix: &str) -> String {
        format!("{}.{suffix}", self.prefix)
    }

    fn forward(&mut self, params: &ParameterSet<T>, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        let h = self.conv.forward(
            x,
            params.get(&self.name("conv.weight"))?,
            params.get(&self.name("conv.bias"))?,
        )?;
        let gamma = params.get(&self.name("bn.gamma"))?;
        let beta = params.get(&self.name("bn.beta"))?;
        match mode {
            Mode::Train => self.bn.forward(&h, gamma, beta, BnMode::Train),
            Mode::Eval => self.bn.forward(
                &h,
                gamma,
                beta,
                BnMode::Eval {
                    running_mean: params.get(&self.name("bn.running_mean"))?,
                    running_var: params.get(&self.name("bn.running_var"))?,
                },
            ),
        }
    }

    fn backward(&self, params: &mut ParameterSet<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
        let bn = self.bn.backward(dy)?;
        params.accumulate_grad(&self.name("bn.gamma"), &bn.gamma)?;
        params.accumulate_grad(&self.name("bn.beta"), &bn.beta)?;
        let conv = self.conv.backward(&bn.input)?;
        params.accumulate_grad(&self.name("conv.weight"), &conv.kernel)?;
        params.accumulate_grad(&self.name("conv.bias"), &conv.bias)?;
        Ok(conv.input)
    }

    fn commit(&self, params: &mut ParameterSet<T>) -> Result<()> {
        let (mn, vn) = (self.name("bn.running_mean"), self.name("bn.running_var"));
        let mut mean = params.get(&mn)?.clone();
        let mut var = params.get(&vn)?.clone();
        self.bn.update_running_stats(&mut mean, &mut var)?;
        params.replace(&mn, mean)?;
        params.replace(&vn, var)
    }
}

#[derive(Debug, Clone)]
struct Block<T> {
    first: ConvBn<T>,
    inner_relu: Relu,
    second: ConvBn<T>,
    out_relu: Relu,
}

/// Output of [`Extractor::forward`].
#[derive(Debug, Clone)]
pub struct Features<T> {
    /// `[B, C, F]` map before pooling.
    pub map: Tensor<T>,
    /// `[B, C]` global average of the map.
    pub pooled: Tensor<T>,
}

/// Forward/backward driver for the extractor. Parameters live in a
/// [`ParameterSet`]; this struct only holds the per-pass caches.
#[derive(Debug, Clone)]
pub struct Extractor<T> {
    cfg: ExtractorConfig,
    stem: ConvBn<T>,
    stem_relu: Relu,
    blocks: Vec<Block<T>>,
    pool: GlobalAvgPool,
    last_mode: Option<Mode>,
}

impl<T: Real> Extractor<T> {
    pub fn new(cfg: &ExtractorConfig) -> Self {
        let blocks = (0..cfg.blocks)
            .map(|b| Block {
                first: ConvBn::new(unit_prefix(1 + 2 * b), cfg),
                inner_relu: Relu::new(),
                second: ConvBn::new(unit_prefix(2 + 2 * b), cfg),
                out_relu: Relu::new(),
            })
            .collect();
        Self {
            cfg: cfg.clone(),
            stem: ConvBn::new(unit_prefix(0), cfg),
            stem_relu: Relu::new(),
            blocks,
            pool: GlobalAvgPool::new(),
            last_mode: None,
        }
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.cfg
    }

    /// Shapes a row-major `[B, F]` batch as `[B, 1, F]`.
    pub fn input_tensor(&self, rows: &[T], batch: usize) -> Result<Tensor<T>> {
        Tensor::new([batch, 1, self.cfg.input_len], rows.to_vec())
    }

    pub fn forward(&mut self, params: &ParameterSet<T>, input: &Tensor<T>, mode: Mode) -> Result<Features<T>> {
        input.expect_rank("extractor", "input", 3)?;
        if input.shape()[1] != 1 || input.shape()[2] != self.cfg.input_len {
            return Err(Error::dimension(
                "extractor",
                format!(
                    "input shape {:?}, expected [B, 1, {}]",
                    input.shape(),
                    self.cfg.input_len
                ),
            ));
        }
        let h = self.stem.forward(params, input, mode)?;
        let mut x = self.stem_relu.forward(&h);
        for block in &mut self.blocks {
            let h = block.first.forward(params, &x, mode)?;
            let h = block.inner_relu.forward(&h);
            let h = block.second.forward(params, &h, mode)?;
            let s = add("residual", &h, &x)?;
            x = block.out_relu.forward(&s);
        }
        let pooled = self.pool.forward(&x)?;
        self.last_mode = Some(mode);
        Ok(Features { map: x, pooled })
    }

    /// Accumulates parameter gradients for upstream gradients on the map
    /// and/or the pooled features; returns the input gradient.
    pub fn backward(
        &self,
        params: &mut ParameterSet<T>,
        d_map: Option<&Tensor<T>>,
        d_pooled: Option<&Tensor<T>>,
    ) -> Result<Tensor<T>> {
        if self.last_mode.is_none() {
            return Err(Error::state("extractor", "backward called before forward"));
        }
        let mut g = match (d_map, d_pooled) {
            (Some(m), Some(p)) => add("extractor", m, &self.pool.backward(p)?)?,
            (Some(m), None) => m.clone(),
            (None, Some(p)) => self.pool.backward(p)?,
            (None, None) => return Err(Error::state("extractor", "no upstream gradient given")),
        };
        for block in self.blocks.iter().rev() {
            let ds = block.out_relu.backward(&g)?;
            let dh = block.second.backward(params, &ds)?;
            let dh = block.inner_relu.backward(&dh)?;
            let dx = block.first.backward(params, &dh)?;
            g = add("residual", &dx, &ds)?;
        }
        let dh = self.stem_relu.backward(&g)?;
        self.stem.backward(params, &dh)
    }

    /// Folds the last train-mode batch statistics into the running ones.
    pub fn commit_running_stats(&self, params: &mut ParameterSet<T>) -> Result<()> {
        if self.last_mode != Some(Mode::Train) {
            return Err(Error::state("extractor", "running statistics need a train-mode forward"));
        }
        self.stem.commit(params)?;
        for b in &self.blocks {
            b.first.commit(params)?;
            b.second.commit(params)?;
        }
        Ok(())
    }

    /// Hash of every ReLU activation pattern from the last forward.
    pub fn signature(&self) -> u64 {
        let mut s = self.stem_relu.signature(0);
        for b in &self.blocks {
            s = b.inner_relu.signature(s);
            s = b.out_relu.signature(s);
        }
        s
    }
}
