mod common;

use common::{small_dims, take};
use maglev::builder::{build_graph, BuildConfig, ExtraModality, ViewMode};
use maglev::graph::{GraphBuilder, HeteroGraph, NodeType};
use maglev::layers::{LayerKind, Model, ModelSpec, Params};
use maglev::tensor::Tensor;
use maglev::train::{
    argmax, class_stats, cross_validate, epoch_batches, evaluate, evaluate_with_predictions,
    f1_at_threshold, macro_f1, make_folds, thresholded_predictions, top1_accuracy, train,
    validation_loss, OptimizerKind, TrainConfig,
};
use maglev::Error;
use proptest::prelude::*;

const CLASSES: u32 = 5;

fn config() -> BuildConfig {
    BuildConfig {
        views: ViewMode::MultiView,
        modalities: vec![ExtraModality::Depth],
        num_classes: CLASSES as usize,
        dims: small_dims(),
        ..Default::default()
    }
}

fn graphs(n: usize, seed: u64) -> Vec<HeteroGraph> {
    (0..n)
        .map(|i| build_graph(&take(&format!("t{i:02}"), 4 + i % 3, 2, CLASSES, small_dims(), seed + i as u64), &config()).unwrap())
        .collect()
}

fn spec(dropout: f64) -> ModelSpec {
    ModelSpec::stack(
        &[LayerKind::EdgeConv, LayerKind::Rgcn],
        small_dims(),
        Some(6),
        6,
        CLASSES as usize,
        config().relations(),
    )
    .unwrap()
    .with_dropout(dropout)
}

fn cfg(epochs: usize, batch: usize) -> TrainConfig {
    TrainConfig {
        max_epochs: epochs,
        batch_size_graphs: batch,
        lr: 1e-2,
        seed: 7,
        ..Default::default()
    }
}

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("take-{i}")).collect()
}

#[test]
fn fold_examples() {
    let plan = make_folds(&ids(10), 3).unwrap();
    assert!(plan.folds.iter().all(|f| f.len() == 2));
    assert_eq!(make_folds(&ids(10), 3).unwrap(), plan);

    let plan = make_folds(&ids(12), 1).unwrap();
    let mut sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
    sizes.sort();
    assert_eq!(sizes, vec![2, 2, 2, 3, 3]);
    let mut all: Vec<String> = plan.folds.concat();
    all.sort();
    let mut want = ids(12);
    want.sort();
    assert_eq!(all, want);

    assert!(matches!(make_folds(&ids(4), 0), Err(Error::Split(_))));
}

#[test]
fn config_validation() {
    assert!(TrainConfig::default().validate().is_ok());
    for bad in [cfg(0, 1), cfg(1, 0)] {
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
    let d = TrainConfig::default();
    assert_eq!((d.batch_size_graphs, d.lr, d.max_epochs), (32, 5e-4, 60));
    assert_eq!(d.optimizer, OptimizerKind::Adam);
}

#[test]
fn single_graph_gives_one_batch() {
    for epoch in 0..3 {
        assert_eq!(epoch_batches(1, 32, 9, epoch), vec![vec![0]]);
    }
    assert_ne!(epoch_batches(40, 32, 9, 0), epoch_batches(40, 32, 9, 1));
}

#[test]
fn zero_learning_rate_keeps_parameters_and_loss() {
    let gs = graphs(6, 1);
    let mut model = Model::init(spec(0.0), 3).unwrap();
    let before = model.params().clone();
    let c = TrainConfig { lr: 0.0, ..cfg(4, 32) };
    let h = train(&mut model, &gs[..4], &gs[4..], &c).unwrap();
    assert_eq!(model.params(), &before);
    assert_eq!(h.epochs.len(), 4);
    for e in &h.epochs {
        assert!((e.train_loss - h.epochs[0].train_loss).abs() < 1e-12);
        assert_eq!(e.val_loss, h.epochs[0].val_loss);
    }
    assert!((h.initial_loss - h.epochs[0].train_loss).abs() < 1e-12);
}

#[test]
fn training_is_deterministic_and_keeps_best_epoch() {
    let gs = graphs(8, 2);
    let run = || {
        let mut model = Model::init(spec(0.2), 5).unwrap();
        let h = train(&mut model, &gs[..6], &gs[6..], &cfg(6, 2)).unwrap();
        (model, h)
    };
    let (m1, h1) = run();
    let (m2, h2) = run();
    assert_eq!(h1, h2);
    assert_eq!(m1.params(), m2.params());

    let best = h1.epochs.iter().map(|e| e.val_loss.unwrap()).fold(f64::INFINITY, f64::min);
    assert_eq!(h1.epochs[h1.best_epoch].val_loss, Some(best));
    let now = validation_loss(&m1, &gs[6..], TrainConfig::default().inference_mode).unwrap();
    assert_eq!(now, Some(best));

    let csv = h1.to_csv();
    assert!(csv.starts_with("epoch,train_loss,val_loss\n"));
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn training_lowers_loss() {
    let gs = graphs(6, 3);
    let mut model = Model::init(spec(0.0), 1).unwrap();
    let h = train(&mut model, &gs, &[], &cfg(30, 2)).unwrap();
    assert!(h.epochs.last().unwrap().train_loss < h.initial_loss);
    assert!(h.epochs.iter().all(|e| e.val_loss.is_none()));
}

#[test]
fn unlabeled_graphs_are_a_training_error() {
    let mut b = GraphBuilder::new("u", CLASSES as usize, small_dims());
    b.add_node(NodeType::VisionEgo, 0, 0, &[0.0; 4], None).unwrap();
    let g = b.finalize().unwrap();
    let mut model = Model::init(spec(0.0), 1).unwrap();
    assert!(matches!(
        train(&mut model, &[g], &[], &cfg(1, 1)),
        Err(Error::Training(_))
    ));
}

fn fixture() -> (Tensor, Vec<usize>) {
    let probs = Tensor::from_rows(&[
        [0.9, 0.1],
        [0.6, 0.4],
        [0.3, 0.7],
        [0.2, 0.8],
        [0.55, 0.45],
        [0.5, 0.5],
    ]);
    (probs, vec![0, 0, 0, 1, 1, 1])
}

#[test]
fn six_node_fixture_matches_hand_enumeration() {
    // Predictions 0,0,1,1,0,0 (the last by the tie rule).
    // Class 0: tp 2, predicted 4, support 3 -> P 1/2, R 2/3, F1 4/7.
    // Class 1: tp 1, predicted 2, support 3 -> P 1/2, R 1/3, F1 2/5.
    let (probs, labels) = fixture();
    let preds: Vec<usize> = (0..6).map(|i| argmax(probs.row(i))).collect();
    assert_eq!(preds, vec![0, 0, 1, 1, 0, 0]);
    assert_eq!(top1_accuracy(&preds, &labels).unwrap(), 0.5);
    let stats = class_stats(&thresholded_predictions(&probs, 0.1), &labels, 2);
    assert_eq!((stats[0].precision, stats[0].recall), (0.5, 2.0 / 3.0));
    assert_eq!((stats[1].precision, stats[1].recall), (0.5, 1.0 / 3.0));
    assert!((stats[0].f1 - 4.0 / 7.0).abs() < 1e-15);
    assert!((stats[1].f1 - 2.0 / 5.0).abs() < 1e-15);
    assert!((f1_at_threshold(&probs, &labels, 0.1) - 17.0 / 35.0).abs() < 1e-15);
}

#[test]
fn uniform_probabilities_reduce_to_tie_rule() {
    // Every node predicts class 0. Class 0: P 2/5, R 1, F1 4/7; classes 1..3
    // score 0; class 4 has no support.
    let probs = Tensor::filled(5, 5, 0.2);
    let labels = [0, 1, 2, 0, 3];
    let preds: Vec<usize> = (0..5).map(|i| argmax(probs.row(i))).collect();
    assert_eq!(top1_accuracy(&preds, &labels).unwrap(), 0.4);
    let f1 = f1_at_threshold(&probs, &labels, 0.1);
    assert!((f1 - 1.0 / 7.0).abs() < 1e-15);
    let perfect = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0]]);
    assert_eq!(f1_at_threshold(&perfect, &[0, 1], 0.1), 1.0);
}

#[test]
fn zero_model_predicts_class_zero_everywhere() {
    let gs = graphs(3, 4);
    let s = spec(0.0);
    let model = Model::from_parts(s.clone(), Params::zeros(&s)).unwrap();
    let (report, preds) = evaluate_with_predictions(&model, &gs, &TrainConfig::default()).unwrap();
    let labels: Vec<u32> = gs
        .iter()
        .flat_map(|g| g.table(NodeType::VisionEgo).labels().iter().map(|l| l.unwrap()))
        .collect();
    let zeros = labels.iter().filter(|&&l| l == 0).count();
    assert_eq!(report.top1, zeros as f64 / labels.len() as f64);
    assert_eq!(report.num_nodes, labels.len());
    assert_eq!(preds.len(), labels.len());
    assert!(preds.iter().all(|p| p.pred_class == 0 && p.probs_top5.len() == 5));
}

#[test]
fn evaluation_ignores_exocentric_features() {
    let gs = graphs(4, 5);
    let model = Model::init(spec(0.0), 2).unwrap();
    let zeroed: Vec<HeteroGraph> = gs
        .iter()
        .map(|g| {
            let mut b = GraphBuilder::new(g.take_id(), g.num_classes(), small_dims());
            for ty in NodeType::ALL {
                let t = g.table(ty);
                for i in 0..t.len() {
                    let f = if ty == NodeType::VisionExo {
                        vec![0.0; t.dim()]
                    } else {
                        t.feature(i).to_vec()
                    };
                    b.add_node(ty, t.views()[i], t.segments()[i], &f, t.labels()[i]).unwrap();
                }
            }
            for (r, csr) in g.relations() {
                for (s, d) in csr.arcs() {
                    b.push_arc_unchecked(r, s, d);
                }
            }
            b.finalize().unwrap()
        })
        .collect();
    let c = TrainConfig::default();
    let (a, pa) = evaluate_with_predictions(&model, &gs, &c).unwrap();
    let (b, pb) = evaluate_with_predictions(&model, &zeroed, &c).unwrap();
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    let ego: usize = gs.iter().map(|g| g.num_nodes(NodeType::VisionEgo)).sum();
    assert_eq!(pa.len(), ego);
}

#[test]
fn empty_evaluation_is_a_metric_error() {
    let model = Model::init(spec(0.0), 2).unwrap();
    assert!(matches!(
        evaluate(&model, &[], &TrainConfig::default()),
        Err(Error::Metric(_))
    ));
}

#[test]
fn cross_validation_is_reproducible() {
    let gs = graphs(10, 6);
    let ids: Vec<String> = gs.iter().map(|g| g.take_id().to_string()).collect();
    let plan = make_folds(&ids, 1).unwrap();
    let c = cfg(3, 4);
    let run = || cross_validate(|k| Model::init(spec(0.1), k as u64), &gs, &plan, &c).unwrap();
    let r1 = run();
    assert_eq!(r1, run());
    assert_eq!(r1.folds.len(), 5);
    let top1: Vec<f64> = r1.folds.iter().map(|f| f.metrics.top1).collect();
    assert!(top1.iter().all(|t| (0.0..=1.0).contains(t)));
    let lo = top1.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = top1.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    assert!(lo <= r1.mean_top1 && r1.mean_top1 <= hi);
    assert!(r1.sd_top1 >= 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn folds_partition_takes(n in 5usize..60, seed in any::<u64>()) {
        let plan = make_folds(&ids(n), seed).unwrap();
        let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all = plan.folds.concat();
        all.sort();
        let mut want = ids(n);
        want.sort();
        prop_assert_eq!(all, want);
    }

    #[test]
    fn batch_sizes_cover_the_same_graphs(n in 1usize..80, b in 1usize..40, seed in any::<u64>(), epoch in 0usize..5) {
        let mut one: Vec<usize> = epoch_batches(n, 1, seed, epoch).concat();
        let mut many: Vec<usize> = epoch_batches(n, b, seed, epoch).concat();
        prop_assert!(epoch_batches(n, b, seed, epoch).iter().all(|c| c.len() <= b));
        one.sort();
        many.sort();
        prop_assert_eq!(&one, &many);
        prop_assert_eq!(one, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn metrics_survive_relabeling(
        rows in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 4), 1..30),
        labels in prop::collection::vec(0usize..4, 30),
        perm_seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let n = rows.len();
        let norm: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| {
                let s: f64 = r.iter().sum::<f64>() + 1e-9;
                r.iter().map(|v| (v + 1e-9 / 4.0) / s).collect()
            })
            .collect();
        let labels = &labels[..n];
        let mut perm: Vec<usize> = (0..4).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm_seed));
        // Distinct values avoid ties, which the lowest-index rule resolves
        // differently after permutation.
        prop_assume!(norm.iter().all(|r| {
            let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            r.iter().filter(|&&v| v == m).count() == 1
        }));
        let permuted: Vec<Vec<f64>> = norm
            .iter()
            .map(|r| {
                let mut out = vec![0.0; 4];
                for c in 0..4 {
                    out[perm[c]] = r[c];
                }
                out
            })
            .collect();
        let plabels: Vec<usize> = labels.iter().map(|&l| perm[l]).collect();
        let a = Tensor::from_rows(&norm);
        let b = Tensor::from_rows(&permuted);
        let pa: Vec<usize> = norm.iter().map(|r| argmax(r)).collect();
        let pb: Vec<usize> = permuted.iter().map(|r| argmax(r)).collect();
        prop_assert_eq!(top1_accuracy(&pa, labels).unwrap(), top1_accuracy(&pb, &plabels).unwrap());
        let fa = f1_at_threshold(&a, labels, 0.1);
        let fb = f1_at_threshold(&b, &plabels, 0.1);
        prop_assert!((fa - fb).abs() < 1e-12);
        let sa = macro_f1(&class_stats(&thresholded_predictions(&a, 0.3), labels, 4));
        let sb = macro_f1(&class_stats(&thresholded_predictions(&b, 0.3), &plabels, 4));
        prop_assert!((sa - sb).abs() < 1e-12);
    }
}

#[test]
fn initial_loss_is_near_log_classes_on_balanced_data() {
    use maglev::config::RunConfig;
    use maglev::data::{generate_synthetic, SyntheticConfig};
    let mut run = RunConfig {
        synthetic: SyntheticConfig {
            num_takes: 12,
            uniform_transitions: true,
            class_spread: 0.3,
            sigma_ego: 0.3,
            sigma_exo: 0.3,
            window_jitter: 0.3,
            ..Default::default()
        },
        ..Default::default()
    }
    .aligned_with_synthetic();
    run.train = TrainConfig {
        max_epochs: 1,
        lr: 0.0,
        ..Default::default()
    };
    let data = generate_synthetic(&run.synthetic).unwrap();
    let gs: Vec<HeteroGraph> = data.takes.iter().map(|t| build_graph(t, &run.build).unwrap()).collect();
    let mut model = Model::init(run.model.spec(&run.build).unwrap(), 0).unwrap();
    let h = train(&mut model, &gs, &[], &run.train).unwrap();
    let ln_c = (run.synthetic.num_classes as f64).ln();
    assert!((h.initial_loss - ln_c).abs() < 0.1 * ln_c, "{} vs {ln_c}", h.initial_loss);
}
