//! Stage one (contrastive pretraining of extractor and head) and stage two
//! (classifier training on a frozen extractor).

use crate::data::{Dataset, Episode, EpisodeItem, EpisodeSampler, EpisodeShape};
use crate::error::{Error, Result};
use crate::losses::{
    compute_prototypes, episode_objective, prototype_backward, softmax_cross_entropy, supcon_cii_loss, PrototypeSet,
};
use crate::model::init::PROTOTYPES;
use crate::model::{
    init_backbone, init_classifier, init_linear, Classifier, Extractor, Head, LinearBaseline, Mode, ModelConfig,
};
use crate::numerics::{sgd_step, ParameterSet, Partition, Real, Tensor};
use crate::pipeline::config::{derive_seed, Stream, TrainConfig};

const LOG_EVERY: usize = 100;

/// `[B, 1, F]` input tensor for the given dataset rows.
pub fn batch_tensor<T: Real>(ds: &Dataset, items: &[EpisodeItem]) -> Result<Tensor<T>> {
    let values = items
        .iter()
        .flat_map(|i| ds.row(i.index).iter().map(|&v| T::of(v)))
        .collect();
    Tensor::new([items.len(), 1, ds.width()], values)
}

/// Support followed by query items.
fn episode_items(ep: &Episode) -> Vec<EpisodeItem> {
    ep.support.iter().chain(&ep.query).copied().collect()
}

fn check_width(ds: &Dataset, model: &ModelConfig) -> Result<()> {
    if ds.width() != model.extractor.input_len {
        return Err(Error::dimension(
            "pipeline",
            format!(
                "dataset has {} features, model expects {}",
                ds.width(),
                model.extractor.input_len
            ),
        ));
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome<T> {
    /// Extractor and head parameters.
    pub params: ParameterSet<T>,
    pub losses: Vec<f64>,
    pub skipped_anchors: usize,
}

/// Trains extractor and head with the contrastive loss; each episode is one
/// mini-batch of its support and query samples.
pub fn pretrain_extractor<T: Real>(
    ds: &Dataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<PretrainOutcome<T>> {
    cfg.validate()?;
    model.validate()?;
    check_width(ds, model)?;
    let mut params: ParameterSet<T> =
        init_backbone(&model.extractor, &model.head, derive_seed(seed, Stream::BackboneInit))?;
    let mut sampler = EpisodeSampler::new(derive_seed(seed, Stream::Pretrain));
    let mut extractor = Extractor::new(&model.extractor);
    let mut head = Head::new();
    let lr = T::of(cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.episodes);
    let mut skipped_anchors = 0;
    for episode in 0..cfg.episodes {
        let ep = sampler.sample(ds, cfg.shape)?;
        let items = episode_items(&ep);
        let labels: Vec<usize> = items.iter().map(|i| i.class).collect();
        let input = batch_tensor(ds, &items)?;
        let features = extractor.forward(&params, &input, Mode::Train)?;
        let z = head.forward(&params, &features.pooled)?;
        let loss = supcon_cii_loss(&z, &labels, cfg.tau, cfg.beta)?;
        let value = loss.value.as_f64();
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "pretraining episode {episode}: non-finite loss {value} ({} anchors, embeddings finite: {}, parameters finite: {})",
                loss.anchors,
                z.is_finite(),
                params.check_finite().is_ok()
            )));
        }
        skipped_anchors += loss.skipped;
        params.zero_grad();
        let d_pooled = head.backward(&mut params, &loss.grad)?;
        extractor.backward(&mut params, None, Some(&d_pooled))?;
        extractor.commit_running_stats(&mut params)?;
        sgd_step(&mut params, lr)?;
        losses.push(value);
        if (episode + 1) % LOG_EVERY == 0 {
            log::info!("pretrain episode {}/{}: loss {value:.4}", episode + 1, cfg.episodes);
        }
    }
    params.zero_grad();
    params.check_finite()?;
    Ok(PretrainOutcome {
        params,
        losses,
        skipped_anchors,
    })
}

#[derive(Debug, Clone)]
pub struct ClassifierOutcome<T> {
    /// Backbone plus classifier parameters (and reference prototypes).
    pub params: ParameterSet<T>,
    pub losses: Vec<f64>,
    pub clamped: usize,
    pub dropped_terms: usize,
}

/// Checksum over every extractor and head entry, buffers included.
pub fn backbone_checksum<T: Real>(params: &ParameterSet<T>) -> [u64; 2] {
    [params.checksum(Partition::Extractor), params.checksum(Partition::Head)]
}

/// Embeds support and query rows with the frozen extractor and the
/// classifier in one pass; rows follow `items`.
fn embed<T: Real>(
    ds: &Dataset,
    items: &[EpisodeItem],
    params: &ParameterSet<T>,
    extractor: &mut Extractor<T>,
    classifier: &mut Classifier<T>,
) -> Result<Tensor<T>> {
    let input = batch_tensor(ds, items)?;
    let features = extractor.forward(params, &input, Mode::Eval)?;
    classifier.forward(params, &features.map)
}

fn split_rows<T: Real>(t: &Tensor<T>, at: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (n, d) = (t.shape()[0], t.shape()[1]);
    let (a, b) = t.values().split_at(at * d);
    Ok((Tensor::new([at, d], a.to_vec())?, Tensor::new([n - at, d], b.to_vec())?))
}

/// Prototypes for `episode`'s support set under the current parameters.
pub fn support_prototypes<T: Real>(
    ds: &Dataset,
    ep: &Episode,
    params: &ParameterSet<T>,
    extractor: &mut Extractor<T>,
    classifier: &mut Classifier<T>,
) -> Result<PrototypeSet<T>> {
    let emb = embed(ds, &ep.support, params, extractor, classifier)?;
    let ids: Vec<usize> = ep.support.iter().map(|i| i.index).collect();
    compute_prototypes(&emb, &ep.support_classes(), &ids, &ep.classes)
}

/// Trains the prototype classifier on top of a frozen backbone. Batch norm
/// uses its running statistics; any change to the backbone is reported as
/// a contract violation.
pub fn train_classifier<T: Real>(
    ds: &Dataset,
    backbone: &ParameterSet<T>,
    model: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ClassifierOutcome<T>> {
    cfg.validate()?;
    check_width(ds, model)?;
    let mut params = backbone.clone();
    params.remove(PROTOTYPES);
    for name in ["classifier.proj.weight", "classifier.proj.bias"] {
        params.remove(name);
    }
    init_classifier(
        &mut params,
        model.extractor.channels,
        &model.classifier,
        derive_seed(seed, Stream::ClassifierInit),
    )?;
    params.freeze(Partition::Extractor);
    params.freeze(Partition::Head);
    let before = backbone_checksum(&params);

    let mut sampler = EpisodeSampler::new(derive_seed(seed, Stream::Classifier));
    let mut extractor = Extractor::new(&model.extractor);
    let mut classifier = Classifier::new();
    let lr = T::of(cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.episodes);
    let (mut clamped, mut dropped_terms) = (0, 0);
    for episode in 0..cfg.episodes {
        let ep = sampler.sample(ds, cfg.shape)?;
        let items = episode_items(&ep);
        let emb = embed(ds, &items, &params, &mut extractor, &mut classifier)?;
        let (support, queries) = split_rows(&emb, ep.support.len())?;
        let ids: Vec<usize> = ep.support.iter().map(|i| i.index).collect();
        let support_classes = ep.support_classes();
        let protos = compute_prototypes(&support, &support_classes, &ids, &ep.classes)?;
        let out = episode_objective(&queries, &ep.query_classes(), &protos, cfg.stage2_loss, cfg.alpha)?;
        let value = out.value.as_f64();
        if !value.is_finite() {
            return Err(Error::Numeric(format!(
                "classifier episode {episode}: non-finite loss {value} (classification {}, regularizer {})",
                out.classification, out.regularizer
            )));
        }
        clamped += out.clamped;
        dropped_terms += out.dropped_terms;
        let d_support = prototype_backward(&protos, &out.d_prototypes, &support_classes)?;
        let d_emb = Tensor::new(
            emb.shape().to_vec(),
            [d_support.values(), out.d_queries.values()].concat(),
        )?;
        params.zero_grad();
        classifier.backward(&mut params, &d_emb)?;
        sgd_step(&mut params, lr)?;
        losses.push(value);
        if (episode + 1) % LOG_EVERY == 0 {
            log::info!("classifier episode {}/{}: loss {value:.4}", episode + 1, cfg.episodes);
        }
    }
    params.zero_grad();
    if backbone_checksum(&params) != before {
        return Err(Error::Contract("extractor or head parameters changed during classifier training".into()));
    }
    params.check_finite()?;

    // Reference prototypes from one training support set, kept for
    // single-record inference.
    let reference_shape = EpisodeShape::new(cfg.shape.ways, cfg.shape.shots, 1)?;
    let ep = EpisodeSampler::new(derive_seed(seed, Stream::Reference)).sample(ds, reference_shape)?;
    let protos = support_prototypes(ds, &ep, &params, &mut extractor, &mut classifier)?;
    store_prototypes(&mut params, &protos)?;
    params.unfreeze(Partition::Extractor);
    params.unfreeze(Partition::Head);
    Ok(ClassifierOutcome {
        params,
        losses,
        clamped,
        dropped_terms,
    })
}

/// Keeps prototypes as a `[C, D]` buffer; rows follow class identifiers.
pub fn store_prototypes<T: Real>(params: &mut ParameterSet<T>, protos: &PrototypeSet<T>) -> Result<()> {
    let mut rows = vec![Vec::new(); protos.len()];
    for (c, label) in protos.classes.iter().enumerate() {
        let id = label.class_id() as usize;
        if id >= rows.len() {
            return Err(Error::Prototype(format!("class {label} has no slot among {} prototypes", rows.len())));
        }
        rows[id] = protos.get(c).to_vec();
    }
    params.remove(PROTOTYPES);
    params.insert_named(PROTOTYPES, Tensor::from_rows(&rows)?)
}

#[derive(Debug, Clone)]
pub struct LinearOutcome<T> {
    pub params: ParameterSet<T>,
    pub losses: Vec<f64>,
}

/// Trains a dense softmax classifier on pooled features of a frozen
/// backbone, using every labelled sample of each episode.
pub fn train_linear<T: Real>(
    ds: &Dataset,
    backbone: &ParameterSet<T>,
    model: &ModelConfig,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<LinearOutcome<T>> {
    cfg.validate()?;
    check_width(ds, model)?;
    let mut params = backbone.clone();
    init_linear(&mut params, model.extractor.channels, 2, derive_seed(seed, Stream::ClassifierInit))?;
    params.freeze(Partition::Extractor);
    params.freeze(Partition::Head);
    let before = backbone_checksum(&params);
    let mut sampler = EpisodeSampler::new(derive_seed(seed, Stream::Classifier));
    let mut extractor = Extractor::new(&model.extractor);
    let mut linear = LinearBaseline::new();
    let lr = T::of(cfg.learning_rate);
    let mut losses = Vec::with_capacity(cfg.episodes);
    for episode in 0..cfg.episodes {
        let ep = sampler.sample(ds, cfg.shape)?;
        let items = episode_items(&ep);
        let input = batch_tensor(ds, &items)?;
        let pooled = extractor.forward(&params, &input, Mode::Eval)?.pooled;
        let logits = linear.forward(&params, &pooled)?;
        let targets: Vec<usize> = items.iter().map(|i| i.label.class_id() as usize).collect();
        let (value, d_logits) = softmax_cross_entropy(&logits, &targets)?;
        let value = value.as_f64();
        if !value.is_finite() {
            return Err(Error::Numeric(format!("linear episode {episode}: non-finite loss {value}")));
        }
        params.zero_grad();
        linear.backward(&mut params, &d_logits)?;
        sgd_step(&mut params, lr)?;
        losses.push(value);
    }
    params.zero_grad();
    if backbone_checksum(&params) != before {
        return Err(Error::Contract("extractor or head parameters changed during linear training".into()));
    }
    params.unfreeze(Partition::Extractor);
    params.unfreeze(Partition::Head);
    Ok(LinearOutcome { params, losses })
}
