//! Parameter construction with seeded fan-in scaled initialization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::model::config::{ClassifierConfig, ExtractorConfig, HeadConfig};
use crate::numerics::{ParameterSet, Real, Tensor};

pub const PROJ_WEIGHT: &str = "classifier.proj.weight";
pub const PROJ_BIAS: &str = "classifier.proj.bias";
pub const LINEAR_WEIGHT: &str = "classifier.linear.weight";
pub const LINEAR_BIAS: &str = "classifier.linear.bias";
pub const PROTOTYPES: &str = "classifier.prototypes";

/// Name prefix of the conv-BN unit `index` in execution order: 0 is the
/// stem, then `block{b}.conv1`, `block{b}.conv2`.
pub fn unit_prefix(index: usize) -> String {
    if index == 0 {
        "extractor.stem".to_string()
    } else {
        let b = (index - 1) / 2;
        let c = (index - 1) % 2 + 1;
        format!("extractor.block{b}.conv{c}")
    }
}

fn kaiming<T: Real>(shape: &[usize], fan_in: usize, rng: &mut ChaCha8Rng) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let normal = Normal::new(0.0, std).expect("positive std");
    Tensor::from_fn(shape.to_vec(), |_| T::of(normal.sample(rng)))
}

/// Conv weights, biases and batch-norm state of the extractor.
pub fn init_extractor<T: Real>(params: &mut ParameterSet<T>, cfg: &ExtractorConfig, seed: u64) -> Result<()> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, k) = (cfg.channels, cfg.kernel_size);
    for unit in 0..cfg.conv_layers() {
        let prefix = unit_prefix(unit);
        let cin = if unit == 0 { 1 } else { c };
        params.insert_named(format!("{prefix}.conv.weight"), kaiming(&[c, cin, k], cin * k, &mut rng))?;
        params.insert_named(format!("{prefix}.conv.bias"), Tensor::zeros([c]))?;
        params.insert_named(format!("{prefix}.bn.gamma"), Tensor::filled([c], T::one()))?;
        params.insert_named(format!("{prefix}.bn.beta"), Tensor::zeros([c]))?;
        params.insert_named(format!("{prefix}.bn.running_mean"), Tensor::zeros([c]))?;
        params.insert_named(format!("{prefix}.bn.running_var"), Tensor::filled([c], T::one()))?;
    }
    Ok(())
}

pub fn init_head<T: Real>(params: &mut ParameterSet<T>, input: usize, cfg: &HeadConfig, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    params.insert_named("head.fc1.weight", kaiming(&[cfg.hidden, input], input, &mut rng))?;
    params.insert_named("head.fc1.bias", Tensor::zeros([cfg.hidden]))?;
    params.insert_named("head.fc2.weight", kaiming(&[cfg.output, cfg.hidden], cfg.hidden, &mut rng))?;
    params.insert_named("head.fc2.bias", Tensor::zeros([cfg.output]))?;
    Ok(())
}

/// Width-1 projection from the extractor's channels to `out_dim`.
pub fn init_classifier<T: Real>(
    params: &mut ParameterSet<T>,
    channels: usize,
    cfg: &ClassifierConfig,
    seed: u64,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    params.insert_named(PROJ_WEIGHT, kaiming(&[cfg.out_dim, channels, 1], channels, &mut rng))?;
    params.insert_named(PROJ_BIAS, Tensor::zeros([cfg.out_dim]))?;
    Ok(())
}

pub fn init_linear<T: Real>(params: &mut ParameterSet<T>, channels: usize, classes: usize, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    params.insert_named(LINEAR_WEIGHT, kaiming(&[classes, channels], channels, &mut rng))?;
    params.insert_named(LINEAR_BIAS, Tensor::zeros([classes]))?;
    Ok(())
}

/// Extractor plus contrastive head, as used for pretraining.
pub fn init_backbone<T: Real>(ext: &ExtractorConfig, head: &HeadConfig, seed: u64) -> Result<ParameterSet<T>> {
    let mut params = ParameterSet::new();
    init_extractor(&mut params, ext, seed)?;
    init_head(&mut params, ext.channels, head, seed.wrapping_add(0x9e37_79b9_7f4a_7c15))?;
    Ok(params)
}
