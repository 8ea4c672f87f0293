use fslpn_core::data::synthetic::{synthetic_dataset, SyntheticConfig};
use fslpn_core::data::{Dataset, EpisodeShape};
use fslpn_core::losses::{nearest, ClassificationLoss};
use fslpn_core::model::init::PROTOTYPES;
use fslpn_core::model::{ClassifierConfig, ExtractorConfig, HeadConfig, ModelConfig};
use fslpn_core::numerics::{EntryKind, ParameterSet, Partition};
use fslpn_core::pipeline::{
    backbone_checksum, evaluate, pretrain_extractor, run_ablation, run_seed, sweep, train_classifier, Confusion,
    MetricsReport, Oracle, PrototypeModel, SweepParameter, TrainConfig, Variant,
};
use fslpn_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WIDTH: usize = 8;

fn data(seed: u64, separation: f64) -> Dataset {
    synthetic_dataset(
        &SyntheticConfig {
            normal: 120,
            abnormal: 120,
            separation,
            seed,
        },
        WIDTH,
    )
}

fn small_model() -> ModelConfig {
    ModelConfig {
        extractor: ExtractorConfig {
            channels: 8,
            blocks: 1,
            ..ExtractorConfig::new(WIDTH)
        },
        head: HeadConfig { hidden: 16, output: 16 },
        classifier: ClassifierConfig { out_dim: 8 },
    }
}

fn small_train(episodes: usize) -> TrainConfig {
    TrainConfig {
        episodes,
        learning_rate: 0.05,
        shape: EpisodeShape::new(2, 2, 5).unwrap(),
        eval_episodes: 20,
        ..Default::default()
    }
}

fn trainable(params: &ParameterSet<f64>) -> Vec<(String, Vec<f64>)> {
    params
        .iter()
        .filter(|(_, e)| e.kind() == EntryKind::Trainable)
        .map(|(n, e)| (n.to_string(), e.tensor.values().to_vec()))
        .collect()
}

fn bits(params: &ParameterSet<f32>) -> Vec<(String, Vec<u32>)> {
    params
        .iter()
        .map(|(n, e)| (n.to_string(), e.tensor.values().iter().map(|v| v.to_bits()).collect()))
        .collect()
}

#[test]
fn random_confusions_match_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let close = |a: f64, b: f64| a == b || (a - b).abs() <= 1e-12 * a.abs().max(b.abs());
    for _ in 0..1000 {
        let [tp, fp, tn, fn_] = [0; 4].map(|_: u64| rng.random_range(0..500u64));
        let m = MetricsReport::from_counts(Confusion::new(tp, fp, tn, fn_));
        let (tp, fp, tn, fn_) = (tp as f64, fp as f64, tn as f64, fn_ as f64);
        let div = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };
        let (p, r) = (div(tp, tp + fp), div(tp, tp + fn_));
        assert!(close(m.precision, p));
        assert!(close(m.recall, r));
        assert!(close(m.f1, div(2.0 * p * r, p + r)));
        assert!(close(m.far, div(fp, fp + tn)));
        assert!(close(m.accuracy, div(tp + tn, tp + fp + tn + fn_)));
        if fp + tn > 0.0 {
            assert!(close(m.far, 1.0 - m.specificity()));
        }
    }
}

#[test]
fn oracle_scores_perfectly() {
    let ds = data(1, 2.0);
    let m = evaluate(&ds, &mut Oracle, EpisodeShape::default(), 10, 3).unwrap();
    assert_eq!((m.precision, m.recall, m.f1, m.far), (1.0, 1.0, 1.0, 0.0));
    assert_eq!(m.counts.total(), 10 * 30);
}

#[test]
fn infeasible_evaluation_shape_is_sampling_error() {
    let ds = data(1, 2.0);
    let shape = EpisodeShape::new(2, 100, 50).unwrap();
    assert!(matches!(evaluate(&ds, &mut Oracle, shape, 1, 0), Err(Error::Sampling(_))));
}

#[test]
fn zero_learning_rate_leaves_weights() {
    let ds = data(2, 2.0);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..small_train(3)
    };
    let model = small_model();
    let a = pretrain_extractor::<f64>(&ds, &model, &cfg, 5).unwrap();
    let b = pretrain_extractor::<f64>(&ds, &model, &TrainConfig { episodes: 1, ..cfg }, 5).unwrap();
    assert_eq!(trainable(&a.params), trainable(&b.params));
}

#[test]
fn pretraining_is_bit_exact() {
    let ds = data(3, 2.0);
    let cfg = small_train(2);
    let a = pretrain_extractor::<f32>(&ds, &small_model(), &cfg, 9).unwrap();
    let b = pretrain_extractor::<f32>(&ds, &small_model(), &cfg, 9).unwrap();
    assert_eq!(bits(&a.params), bits(&b.params));
    assert_eq!(a.losses, b.losses);
}

#[test]
fn pretraining_loss_decreases() {
    let ds = data(4, 3.0);
    let out = pretrain_extractor::<f32>(&ds, &small_model(), &small_train(200), 1).unwrap();
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let (first, last) = (mean(&out.losses[..50]), mean(&out.losses[150..]));
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn divergence_reports_episode() {
    let ds = data(5, 2.0);
    let cfg = TrainConfig {
        learning_rate: 1e30,
        ..small_train(20)
    };
    match pretrain_extractor::<f32>(&ds, &small_model(), &cfg, 1) {
        Err(Error::Numeric(msg)) => assert!(msg.contains("episode"), "{msg}"),
        other => panic!("expected numeric error, got {:?}", other.map(|o| o.losses)),
    }
}

#[test]
fn classifier_stage_keeps_backbone() {
    let ds = data(6, 2.0);
    let model = small_model();
    let cfg = small_train(20);
    let pre = pretrain_extractor::<f32>(&ds, &model, &cfg, 2).unwrap();
    let a = train_classifier(&ds, &pre.params, &model, &cfg, 2).unwrap();
    assert_eq!(backbone_checksum(&a.params), backbone_checksum(&pre.params));
    let protos = a.params.get(PROTOTYPES).unwrap();
    assert_eq!(protos.shape(), &[2, 8]);
    assert!(a.params.trainable_count(Partition::Classifier) > 0);
    let b = train_classifier(&ds, &pre.params, &model, &cfg, 2).unwrap();
    assert_eq!(bits(&a.params), bits(&b.params));
}

#[test]
fn nll_and_infomax_both_train() {
    let ds = data(6, 2.0);
    let model = small_model();
    let pre = pretrain_extractor::<f64>(&ds, &model, &small_train(5), 2).unwrap();
    for loss in [ClassificationLoss::Nll, ClassificationLoss::Infomax] {
        let cfg = TrainConfig {
            stage2_loss: loss,
            ..small_train(5)
        };
        let out = train_classifier(&ds, &pre.params, &model, &cfg, 2).unwrap();
        assert!(out.losses.iter().all(|l| l.is_finite()));
    }
}

#[test]
fn separable_data_is_learned() {
    let (train, test) = (data(7, 4.0), data(8, 4.0));
    let run = run_seed::<f32>(&train, &test, &small_model(), &small_train(150), 1).unwrap();
    assert!(run.metrics.f1 > 0.9, "{:?}", run.metrics);
    let mut clf = PrototypeModel::<f32>::new(ParameterSet::new(), &small_model());
    assert!(matches!(evaluate(&test, &mut clf, EpisodeShape::default(), 1, 0), Err(Error::Parameter(_))));
}

#[test]
fn ablation_rows_and_determinism() {
    let (train, test) = (data(9, 3.0), data(10, 3.0));
    let cfg = TrainConfig {
        seeds: vec![1, 2],
        ..small_train(10)
    };
    let a = run_ablation::<f32>(&train, &test, &small_model(), &cfg, &Variant::ALL).unwrap();
    let names: Vec<&str> = a.rows.iter().map(|r| r.label.as_str()).collect();
    assert_eq!(
        names,
        [
            "PN",
            "F(·) + linerclassifier",
            "F(·) + PN",
            "F(·) + PN + CII",
            "F(·) + PN +CII + SPinfomax (ours)"
        ]
    );
    assert!(a.rows.iter().all(|r| r.failure.is_none() && r.runs.len() == 2));
    let b = run_ablation::<f32>(&train, &test, &small_model(), &cfg, &Variant::ALL).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    let metrics = |t: &fslpn_core::pipeline::ResultTable| {
        t.rows.iter().flat_map(|r| r.runs.iter().map(|x| x.metrics)).collect::<Vec<_>>()
    };
    assert_eq!(metrics(&a), metrics(&b));
    assert!(a.to_csv().starts_with("variant,runs,precision,recall,f1,far,accuracy,note\n"));
}

#[test]
fn sweep_annotates_bad_values() {
    let (train, test) = (data(11, 3.0), data(12, 3.0));
    let t = sweep::<f32>(
        &train,
        &test,
        &small_model(),
        &small_train(5),
        SweepParameter::ConvLayers,
        &[1.0, 2.0, 3.0],
    )
    .unwrap();
    assert_eq!(t.rows.len(), 3);
    assert!(t.rows[0].failure.is_none());
    assert!(t.rows[1].failure.is_some() && t.rows[1].runs.is_empty());
    assert!(t.rows[2].failure.is_none());
    let csv = t.to_csv();
    assert!(csv.lines().nth(2).unwrap().contains("failed"), "{csv}");
}

#[test]
fn stage_two_sweep_reuses_pretraining() {
    let (train, test) = (data(13, 3.0), data(14, 3.0));
    let cfg = small_train(5);
    let t = sweep::<f32>(&train, &test, &small_model(), &cfg, SweepParameter::Alpha, &[0.0, 0.001]).unwrap();
    let direct = run_seed::<f32>(
        &train,
        &test,
        &small_model(),
        &TrainConfig { alpha: 0.001, ..cfg },
        1,
    )
    .unwrap();
    assert_eq!(t.rows[1].runs[0].metrics, direct.metrics);
}

proptest! {
    #[test]
    fn argmax_ignores_distance_scaling(d in prop::collection::vec(0.0f64..10.0, 2..6), k in 0.01f64..100.0) {
        let scaled: Vec<f64> = d.iter().map(|v| v * k).collect();
        prop_assert_eq!(nearest(&d), nearest(&scaled));
    }
}
