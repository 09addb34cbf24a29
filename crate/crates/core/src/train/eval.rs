use std::collections::HashMap;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{argmax, class_stats, macro_f1, thresholded_predictions, ClassStats, F1_THRESHOLD};
use super::{train, SplitPlan, TrainConfig, TrainHistory};
use crate::builder::extract_inference_graph;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NodeType};
use crate::layers::Model;
use crate::tensor::{softmax_rows, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub top1: f64,
    #[serde(rename = "f1_at_0.1")]
    pub f1_at_threshold: f64,
    pub threshold: f64,
    pub num_graphs: usize,
    /// Scored (labeled, eval-masked) nodes.
    pub num_nodes: usize,
    /// Classes with support or predictions.
    pub per_class: Vec<ClassStats>,
}

/// One scored node, for external tools.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodePrediction {
    pub take: String,
    pub view: u32,
    pub segment: u32,
    pub label: Option<u32>,
    pub pred_class: usize,
    pub probs_top5: Vec<(usize, f64)>,
}

struct GraphScores {
    probs: Tensor,
    labels: Vec<Option<u32>>,
    views: Vec<u32>,
    segments: Vec<u32>,
}

fn score_graph(model: &Model, g: &HeteroGraph, cfg: &TrainConfig) -> Result<GraphScores> {
    let pruned;
    let g = if cfg.ego_only_eval {
        pruned = extract_inference_graph(g, cfg.inference_mode);
        let dropped = g.total_nodes() - pruned.total_nodes();
        if g.num_nodes(NodeType::VisionExo) > 0 {
            info!(
                "{}: evaluating the inference graph ({dropped} exocentric-side nodes removed)",
                g.take_id()
            );
        }
        &pruned
    } else {
        g
    };
    let probs = softmax_rows(&model.logits_for(g)?);
    let mut labels = Vec::with_capacity(probs.rows());
    let mut views = Vec::with_capacity(probs.rows());
    let mut segments = Vec::with_capacity(probs.rows());
    for ty in [NodeType::VisionEgo, NodeType::VisionExo] {
        let t = g.table(ty);
        labels.extend_from_slice(t.labels());
        views.extend_from_slice(t.views());
        segments.extend_from_slice(t.segments());
    }
    Ok(GraphScores {
        probs,
        labels,
        views,
        segments,
    })
}

fn top5(row: &[f64]) -> Vec<(usize, f64)> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
    idx.into_iter().take(5).map(|c| (c, row[c])).collect()
}

/// Metrics and per-node predictions. With `ego_only_eval` each graph is
/// first reduced to its inference graph; otherwise every vision node is
/// scored.
pub fn evaluate_with_predictions(
    model: &Model,
    graphs: &[HeteroGraph],
    cfg: &TrainConfig,
) -> Result<(MetricsReport, Vec<NodePrediction>)> {
    let scores: Vec<GraphScores> = graphs
        .par_iter()
        .map(|g| score_graph(model, g, cfg))
        .collect::<Result<_>>()?;

    let num_classes = model.spec().num_classes;
    let mut preds = Vec::new();
    let mut rows: Vec<&[f64]> = Vec::new();
    let mut labels = Vec::new();
    for (g, s) in graphs.iter().zip(&scores) {
        for i in 0..s.probs.rows() {
            let row = s.probs.row(i);
            let pred = argmax(row);
            preds.push(NodePrediction {
                take: g.take_id().to_string(),
                view: s.views[i],
                segment: s.segments[i],
                label: s.labels[i],
                pred_class: pred,
                probs_top5: top5(row),
            });
            if let Some(l) = s.labels[i] {
                rows.push(row);
                labels.push(l as usize);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::Metric("evaluation set has no labeled nodes".into()));
    }
    let probs = Tensor::from_rows(&rows);
    let argmaxes: Vec<usize> = rows.iter().map(|r| argmax(r)).collect();
    let top1 = super::top1_accuracy(&argmaxes, &labels)?;
    let thresholded = thresholded_predictions(&probs, F1_THRESHOLD);
    let stats = class_stats(&thresholded, &labels, num_classes);
    let f1 = macro_f1(&stats);
    let mut predicted = vec![false; num_classes];
    for p in thresholded.iter().flatten() {
        predicted[*p] = true;
    }
    let per_class = stats
        .into_iter()
        .filter(|s| s.support > 0 || predicted[s.class])
        .collect();
    Ok((
        MetricsReport {
            top1,
            f1_at_threshold: f1,
            threshold: F1_THRESHOLD,
            num_graphs: graphs.len(),
            num_nodes: labels.len(),
            per_class,
        },
        preds,
    ))
}

pub fn evaluate(model: &Model, graphs: &[HeteroGraph], cfg: &TrainConfig) -> Result<MetricsReport> {
    Ok(evaluate_with_predictions(model, graphs, cfg)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub metrics: MetricsReport,
    pub history: TrainHistory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossValReport {
    pub folds: Vec<FoldResult>,
    pub mean_top1: f64,
    pub sd_top1: f64,
    pub mean_f1: f64,
    pub sd_f1: f64,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// For each fold: a fresh model from `factory(fold)`, trained on the other
/// folds with the held-out fold as validation set, then evaluated on it.
/// Folds run in parallel. Reports mean and sample standard deviation.
pub fn cross_validate<F>(
    factory: F,
    graphs: &[HeteroGraph],
    plan: &SplitPlan,
    cfg: &TrainConfig,
) -> Result<CrossValReport>
where
    F: Fn(usize) -> Result<Model> + Sync,
{
    plan.validate()?;
    let by_id: HashMap<&str, &HeteroGraph> = graphs.iter().map(|g| (g.take_id(), g)).collect();
    let lookup = |ids: &mut dyn Iterator<Item = &str>| -> Result<Vec<HeteroGraph>> {
        ids.map(|id| {
            by_id
                .get(id)
                .map(|g| (*g).clone())
                .ok_or_else(|| Error::Split(format!("take {id} has no graph")))
        })
        .collect()
    };
    let jobs: Vec<(usize, Vec<HeteroGraph>, Vec<HeteroGraph>)> = (0..plan.num_folds())
        .map(|k| {
            let tr = lookup(&mut plan.train_ids(k).into_iter())?;
            let held = lookup(&mut plan.folds[k].iter().map(String::as_str))?;
            Ok((k, tr, held))
        })
        .collect::<Result<_>>()?;
    let folds: Vec<FoldResult> = jobs
        .into_par_iter()
        .map(|(fold, tr, held)| {
            let mut model = factory(fold)?;
            let history = train(&mut model, &tr, &held, cfg)?;
            let metrics = evaluate(&model, &held, cfg)?;
            Ok(FoldResult {
                fold,
                metrics,
                history,
            })
        })
        .collect::<Result<_>>()?;
    let top1: Vec<f64> = folds.iter().map(|f| f.metrics.top1).collect();
    let f1: Vec<f64> = folds.iter().map(|f| f.metrics.f1_at_threshold).collect();
    let (mean_top1, sd_top1) = mean_sd(&top1);
    let (mean_f1, sd_f1) = mean_sd(&f1);
    Ok(CrossValReport {
        folds,
        mean_top1,
        sd_top1,
        mean_f1,
        sd_f1,
    })
}
