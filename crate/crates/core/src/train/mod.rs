//! Training with graph-count batching, validation-loss model selection,
//! evaluation on inference graphs, and cross-validation.

mod eval;
mod metrics;

use std::fmt::Write as _;

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::builder::{extract_inference_graph, InferenceMode};
use crate::error::{Error, Result};
use crate::graph::{disjoint_union, HeteroGraph};
use crate::layers::{model_forward, GraphInput, Model};
use crate::tensor::{AdamState, Optimizer, Sgd, Tape};

pub use eval::{
    cross_validate, evaluate, evaluate_with_predictions, CrossValReport, FoldResult, MetricsReport,
    NodePrediction,
};
pub use metrics::{
    argmax, class_stats, f1_at_threshold, macro_f1, thresholded_predictions, top1_accuracy, ClassStats,
    F1_THRESHOLD,
};

pub const NUM_FOLDS: usize = 5;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size_graphs: usize,
    pub lr: f64,
    pub max_epochs: usize,
    pub seed: u64,
    /// Score only ego vision nodes of the inference graph.
    pub ego_only_eval: bool,
    pub inference_mode: InferenceMode,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size_graphs: 32,
            lr: 5e-4,
            max_epochs: 60,
            seed: 0,
            ego_only_eval: true,
            inference_mode: InferenceMode::default(),
            optimizer: OptimizerKind::Adam,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size_graphs == 0 {
            return Err(Error::Config("batch_size_graphs must be at least 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("invalid learning rate {}", self.lr)));
        }
        Ok(())
    }

    fn optimizer(&self) -> Box<dyn Optimizer> {
        match self.optimizer {
            OptimizerKind::Adam => Box::new(AdamState::new(self.lr)),
            OptimizerKind::Sgd => Box::new(Sgd { lr: self.lr }),
        }
    }
}

/// Take ids partitioned into folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub folds: Vec<Vec<String>>,
}

impl SplitPlan {
    pub fn num_folds(&self) -> usize {
        self.folds.len()
    }

    /// Ids outside fold `k`, in fold order.
    pub fn train_ids(&self, k: usize) -> Vec<&str> {
        self.folds
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != k)
            .flat_map(|(_, f)| f.iter().map(String::as_str))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds.len() < 2 {
            return Err(Error::Split(format!("{} folds; need at least 2", self.folds.len())));
        }
        let mut seen = std::collections::HashSet::new();
        for (k, f) in self.folds.iter().enumerate() {
            if f.is_empty() {
                return Err(Error::Split(format!("fold {k} is empty")));
            }
            for id in f {
                if !seen.insert(id.as_str()) {
                    return Err(Error::Split(format!("take {id} appears in more than one fold")));
                }
            }
        }
        Ok(())
    }
}

/// Seeded shuffle of `ids` dealt into five folds whose sizes differ by at
/// most one.
pub fn make_folds(ids: &[String], seed: u64) -> Result<SplitPlan> {
    if ids.len() < NUM_FOLDS {
        return Err(Error::Split(format!(
            "{} takes cannot fill {NUM_FOLDS} folds",
            ids.len()
        )));
    }
    let mut sorted = ids.to_vec();
    sorted.sort();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Split("duplicate take ids".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let (q, r) = (sorted.len() / NUM_FOLDS, sorted.len() % NUM_FOLDS);
    let mut folds = Vec::with_capacity(NUM_FOLDS);
    let mut it = sorted.into_iter();
    for k in 0..NUM_FOLDS {
        let size = q + usize::from(k < r);
        folds.push(it.by_ref().take(size).collect());
    }
    Ok(SplitPlan { folds })
}

/// Graph indices for each batch of `epoch`: a seeded permutation of
/// `0..n` cut into chunks of `batch`.
pub fn epoch_batches(n: usize, batch: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    order.shuffle(&mut rng);
    order.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Node-weighted mean loss over the epoch's training batches.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Loss of the initial parameters over all labeled training nodes.
    pub initial_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            let val = e.val_loss.map(|v| format!("{v:.17e}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:.17e},{}", e.epoch, e.train_loss, val);
        }
        s
    }
}

/// Mean cross-entropy over masked rows, with no dropout. Returns the loss
/// and the number of rows scored.
fn dataset_loss(model: &Model, graphs: &[&HeteroGraph], ego_only: bool) -> Result<(f64, usize)> {
    let batch = disjoint_union(graphs)?;
    let input = model.input(batch.graph())?;
    let mut mask = input.mask().to_vec();
    if ego_only {
        mask[input.num_ego()..].iter_mut().for_each(|m| *m = false);
    }
    let count = mask.iter().filter(|&&m| m).count();
    if count == 0 {
        return Ok((0.0, 0));
    }
    let mut t = Tape::new();
    let bound = model.params().bind(&mut t, false);
    let logits = model_forward(&mut t, model.spec(), &bound, &input, None)?;
    let loss = t.softmax_cross_entropy(logits, input.labels(), &mask)?;
    Ok((t.value(loss).item(), count))
}

/// Loss on the inference graphs of `val`, over labeled ego nodes.
pub fn validation_loss(model: &Model, val: &[HeteroGraph], mode: InferenceMode) -> Result<Option<f64>> {
    if val.is_empty() {
        return Ok(None);
    }
    let pruned: Vec<HeteroGraph> = val.iter().map(|g| extract_inference_graph(g, mode)).collect();
    let refs: Vec<&HeteroGraph> = pruned.iter().collect();
    let (loss, count) = dataset_loss(model, &refs, true)?;
    Ok((count > 0).then_some(loss))
}

/// Trains `model` in place. Every labeled vision node of `train_graphs`
/// (ego and exo) is supervised. After training the parameters of the epoch
/// with the lowest validation loss are restored; without validation graphs
/// the training loss decides.
pub fn train(
    model: &mut Model,
    train_graphs: &[HeteroGraph],
    val_graphs: &[HeteroGraph],
    cfg: &TrainConfig,
) -> Result<TrainHistory> {
    cfg.validate()?;
    if train_graphs.iter().all(|g| g.labeled_nodes() == 0) {
        return Err(Error::Training("no labeled nodes in the training graphs".into()));
    }
    let all: Vec<&HeteroGraph> = train_graphs.iter().collect();
    let (initial_loss, _) = dataset_loss(model, &all, false)?;

    let mut optimizer = cfg.optimizer();
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    dropout_rng.set_stream(u64::MAX);
    let mut best = (f64::INFINITY, 0usize, model.params().clone());
    let mut epochs = Vec::with_capacity(cfg.max_epochs);

    for epoch in 0..cfg.max_epochs {
        let mut total = 0.0;
        let mut count = 0usize;
        for batch in epoch_batches(train_graphs.len(), cfg.batch_size_graphs, cfg.seed, epoch) {
            let members: Vec<&HeteroGraph> = batch.iter().map(|&i| &train_graphs[i]).collect();
            if members.iter().all(|g| g.labeled_nodes() == 0) {
                continue;
            }
            let union = disjoint_union(&members)?;
            let input = GraphInput::new(union.graph(), model.spec())?;
            let labeled = input.mask().iter().filter(|&&m| m).count();

            let mut t = Tape::new();
            let bound = model.params().bind(&mut t, true);
            let vars = bound.vars().to_vec();
            let logits = model_forward(&mut t, model.spec(), &bound, &input, Some(&mut dropout_rng))?;
            let loss = t.softmax_cross_entropy(logits, input.labels(), input.mask())?;
            let value = t.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
            }
            let grads = t.backward(loss)?;
            let grads: Vec<_> = vars.iter().map(|&v| grads.get_or_zeros(&t, v)).collect();
            optimizer.step(model.params_mut().values_mut(), &grads)?;
            total += value * labeled as f64;
            count += labeled;
        }
        let train_loss = total / count as f64;
        let val_loss = validation_loss(model, val_graphs, cfg.inference_mode)?;
        let score = val_loss.unwrap_or(train_loss);
        debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:?}");
        if score < best.0 {
            best = (score, epoch, model.params().clone());
        }
        epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
    }
    let (_, best_epoch, params) = best;
    *model.params_mut() = params;
    Ok(TrainHistory {
        initial_loss,
        epochs,
        best_epoch,
    })
}
