//! Episodic evaluation with "abnormal" as the positive class.

use crate::data::{Dataset, Episode, EpisodeItem, EpisodeSampler, EpisodeShape, Label};
use crate::error::{Error, Result};
use crate::losses::{compute_prototypes, nearest, squared_distances, PrototypeSet};
use crate::model::{Classifier, Extractor, LinearBaseline, Mode, ModelConfig};
use crate::numerics::{ParameterSet, Real, Tensor};
use crate::pipeline::metrics::{Confusion, MetricsReport};
use crate::pipeline::train::{batch_tensor, support_prototypes};

/// Anything that labels the queries of an episode given its support set.
pub trait EpisodeClassifier {
    /// One label per query, in query order.
    fn classify(&mut self, ds: &Dataset, episode: &Episode) -> Result<Vec<Label>>;
}

fn nearest_labels<T: Real>(queries: &Tensor<T>, protos: &PrototypeSet<T>) -> Result<Vec<Label>> {
    let dist = squared_distances(queries, protos)?;
    Ok((0..dist.shape()[0]).map(|q| protos.classes[nearest(dist.row(q))]).collect())
}

/// Nearest prototype in the classifier's embedding space.
pub struct PrototypeModel<T> {
    params: ParameterSet<T>,
    extractor: Extractor<T>,
    classifier: Classifier<T>,
}

impl<T: Real> PrototypeModel<T> {
    pub fn new(params: ParameterSet<T>, model: &ModelConfig) -> Self {
        Self {
            params,
            extractor: Extractor::new(&model.extractor),
            classifier: Classifier::new(),
        }
    }

    pub fn params(&self) -> &ParameterSet<T> {
        &self.params
    }

    /// Embeddings of arbitrary feature rows, `[B, D]`.
    pub fn embed_rows(&mut self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let features = self.extractor.forward(&self.params, input, Mode::Eval)?;
        self.classifier.forward(&self.params, &features.map)
    }

    pub fn prototypes(&mut self, ds: &Dataset, episode: &Episode) -> Result<PrototypeSet<T>> {
        support_prototypes(ds, episode, &self.params, &mut self.extractor, &mut self.classifier)
    }
}

impl<T: Real> EpisodeClassifier for PrototypeModel<T> {
    fn classify(&mut self, ds: &Dataset, episode: &Episode) -> Result<Vec<Label>> {
        let protos = self.prototypes(ds, episode)?;
        let queries = self.embed_rows(&batch_tensor(ds, &episode.query)?)?;
        nearest_labels(&queries, &protos)
    }
}

/// Nearest prototype over the input features themselves (no learned
/// mapping).
#[derive(Debug, Clone, Copy, Default)]
pub struct RawPrototype;

impl EpisodeClassifier for RawPrototype {
    fn classify(&mut self, ds: &Dataset, episode: &Episode) -> Result<Vec<Label>> {
        let rows = |items: &[EpisodeItem]| Tensor::<f64>::new([items.len(), ds.width()], Episode::gather(ds, items));
        let support = rows(&episode.support)?;
        let ids: Vec<usize> = episode.support.iter().map(|i| i.index).collect();
        let protos = compute_prototypes(&support, &episode.support_classes(), &ids, &episode.classes)?;
        nearest_labels(&rows(&episode.query)?, &protos)
    }
}

/// Dense softmax over pooled features; ignores the support set.
pub struct LinearModel<T> {
    params: ParameterSet<T>,
    extractor: Extractor<T>,
    linear: LinearBaseline<T>,
}

impl<T: Real> LinearModel<T> {
    pub fn new(params: ParameterSet<T>, model: &ModelConfig) -> Self {
        Self {
            params,
            extractor: Extractor::new(&model.extractor),
            linear: LinearBaseline::new(),
        }
    }
}

impl<T: Real> EpisodeClassifier for LinearModel<T> {
    fn classify(&mut self, ds: &Dataset, episode: &Episode) -> Result<Vec<Label>> {
        let input = batch_tensor(ds, &episode.query)?;
        let pooled = self.extractor.forward(&self.params, &input, Mode::Eval)?.pooled;
        let logits = self.linear.forward(&self.params, &pooled)?;
        (0..logits.shape()[0])
            .map(|q| {
                let id = nearest(&logits.row(q).iter().map(|&v| -v).collect::<Vec<_>>());
                Label::from_class_id(id as u32)
                    .ok_or_else(|| Error::Contract(format!("linear classifier produced class {id}")))
            })
            .collect()
    }
}

/// Returns the true labels.
#[derive(Debug, Clone, Copy, Default)]
pub struct Oracle;

impl EpisodeClassifier for Oracle {
    fn classify(&mut self, _ds: &Dataset, episode: &Episode) -> Result<Vec<Label>> {
        Ok(episode.query.iter().map(|i| i.label).collect())
    }
}

/// Confusion counts summed over `episodes` sampled episodes.
pub fn evaluate_counts(
    ds: &Dataset,
    classifier: &mut dyn EpisodeClassifier,
    shape: EpisodeShape,
    episodes: usize,
    seed: u64,
) -> Result<Confusion> {
    let mut sampler = EpisodeSampler::new(seed);
    let mut counts = Confusion::default();
    for _ in 0..episodes {
        let ep = sampler.sample(ds, shape)?;
        let predicted = classifier.classify(ds, &ep)?;
        if predicted.len() != ep.query.len() {
            return Err(Error::Contract(format!(
                "classifier returned {} labels for {} queries",
                predicted.len(),
                ep.query.len()
            )));
        }
        for (item, p) in ep.query.iter().zip(predicted) {
            counts.record(item.label != Label::Normal, p != Label::Normal);
        }
    }
    Ok(counts)
}

/// Metrics over the pooled confusion counts of `episodes` episodes.
pub fn evaluate(
    ds: &Dataset,
    classifier: &mut dyn EpisodeClassifier,
    shape: EpisodeShape,
    episodes: usize,
    seed: u64,
) -> Result<MetricsReport> {
    evaluate_counts(ds, classifier, shape, episodes, seed).map(MetricsReport::from_counts)
}
