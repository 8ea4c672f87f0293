use crate::data::EpisodeShape;
use crate::error::{Error, Result};
use crate::losses::ClassificationLoss;
use crate::numerics::Precision;

pub const DEFAULT_EVAL_EPISODES: usize = 200;

/// Hyper-parameters shared by both training stages and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Episodes per training stage.
    pub episodes: usize,
    pub shape: EpisodeShape,
    pub tau: f64,
    pub beta: f64,
    pub alpha: f64,
    pub stage2_loss: ClassificationLoss,
    pub seeds: Vec<u64>,
    pub precision: Precision,
    pub eval_episodes: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            episodes: 1000,
            shape: EpisodeShape::default(),
            tau: 0.1,
            beta: 1.0,
            alpha: 0.001,
            stage2_loss: ClassificationLoss::Infomax,
            seeds: vec![1],
            precision: Precision::F32,
            eval_episodes: DEFAULT_EVAL_EPISODES,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning_rate must be a finite non-negative number, got {}",
                self.learning_rate
            )));
        }
        if self.episodes == 0 || self.eval_episodes == 0 {
            return Err(Error::Config("episode counts must be at least 1".into()));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be non-negative, got {}", self.alpha)));
        }
        if !(self.tau > 0.0) || !(self.beta >= self.tau) || !self.beta.is_finite() {
            return Err(Error::Config(format!(
                "temperatures must satisfy 0 < tau <= beta (tau = {}, beta = {})",
                self.tau, self.beta
            )));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        EpisodeShape::new(self.shape.ways, self.shape.shots, self.shape.queries)?;
        Ok(())
    }

    /// Same settings with the same-class temperature equal to `tau`.
    pub fn without_cii(&self) -> Self {
        Self {
            beta: self.tau,
            ..self.clone()
        }
    }
}

/// Independent random streams derived from one base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    BackboneInit,
    Pretrain,
    ClassifierInit,
    Classifier,
    Evaluation,
    Reference,
}

/// SplitMix64 finalizer over `(seed, stream)`.
pub fn derive_seed(seed: u64, stream: Stream) -> u64 {
    let mut z = seed
        .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(stream as u64 + 1));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
