use super::synth::GenerativeParams;
use crate::builder::{pool_segment_features, TakeRecord};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Per-segment ego observations of one take.
#[derive(Clone, Debug, PartialEq)]
pub struct Observations {
    pub vision: Tensor,
    pub depth: Option<Tensor>,
    pub text: Option<Tensor>,
}

impl Observations {
    pub fn vision_only(vision: Tensor) -> Self {
        Observations {
            vision,
            depth: None,
            text: None,
        }
    }

    /// Pooled ego vision features per segment, as the graph builder computes
    /// them, with the ego depth and narration rows when present.
    pub fn of_take(take: &TakeRecord) -> Result<Self> {
        let ego = take
            .ego_view()
            .ok_or_else(|| Error::ingestion(&take.take_id, "views", "no ego view"))?;
        let rows: Vec<Vec<f64>> = take
            .segments
            .iter()
            .map(|s| pool_segment_features(&ego.vision, s.start_s, s.end_s))
            .collect::<Result<_>>()?;
        Ok(Observations {
            vision: Tensor::from_rows(&rows),
            depth: ego.depth.clone(),
            text: take.text.clone(),
        })
    }

    fn len(&self) -> usize {
        self.vision.rows()
    }
}

/// Exact posteriors under the generative model.
#[derive(Clone, Debug, PartialEq)]
pub struct OraclePosteriors {
    /// Each segment alone, with its position-marginal prior.
    pub per_node: Tensor,
    /// Forward-backward over the whole take.
    pub temporal: Tensor,
}

/// Adds the isotropic Gaussian log-density (up to a class-independent
/// constant) of `x` for every class mean. With `sigma = 0` the nearest mean
/// gets 0 and every other class minus infinity.
fn add_gaussian(loglik: &mut Tensor, x: &Tensor, means: &[Vec<f64>], sigma: f64) {
    for i in 0..x.rows() {
        let d2: Vec<f64> = means
            .iter()
            .map(|m| x.row(i).iter().zip(m).map(|(a, b)| (a - b) * (a - b)).sum())
            .collect();
        let row = loglik.row_mut(i);
        if sigma == 0.0 {
            let best = d2.iter().cloned().fold(f64::INFINITY, f64::min);
            for (l, v) in row.iter_mut().zip(&d2) {
                if *v > best {
                    *l = f64::NEG_INFINITY;
                }
            }
        } else {
            for (l, v) in row.iter_mut().zip(&d2) {
                *l -= v / (2.0 * sigma * sigma);
            }
        }
    }
}

/// Log-likelihood of each segment's observations under each class.
pub fn log_likelihoods(p: &GenerativeParams, obs: &Observations) -> Result<Tensor> {
    let n = obs.len();
    let c = p.num_classes;
    if obs.vision.cols() != p.dims.vision {
        return Err(Error::Dimension {
            op: "bayes_oracle",
            left: obs.vision.shape(),
            right: (n, p.dims.vision),
        });
    }
    let mut ll = Tensor::zeros(n, c);
    add_gaussian(&mut ll, &obs.vision, &p.vision_means, p.sigma_ego);
    for (x, means, sigma) in [
        (&obs.depth, &p.depth_means, p.sigma_depth),
        (&obs.text, &p.text_means, p.sigma_text),
    ] {
        if let (Some(x), Some(m)) = (x, means) {
            if x.rows() != n {
                return Err(Error::Dimension {
                    op: "bayes_oracle",
                    left: x.shape(),
                    right: (n, m.first().map_or(0, Vec::len)),
                });
            }
            add_gaussian(&mut ll, x, m, sigma);
        }
    }
    Ok(ll)
}

fn normalize_exp(row: &[f64], prior: &[f64]) -> Vec<f64> {
    let logs: Vec<f64> = row.iter().zip(prior).map(|(l, p)| l + p.ln()).collect();
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn step(dist: &[f64], t: &[Vec<f64>]) -> Vec<f64> {
    let c = dist.len();
    (0..c).map(|b| (0..c).map(|a| dist[a] * t[a][b]).sum()).collect()
}

/// Per-node and forward-backward class posteriors for one take.
pub fn bayes_oracle(p: &GenerativeParams, obs: &Observations) -> Result<OraclePosteriors> {
    let ll = log_likelihoods(p, obs)?;
    let (n, c) = ll.shape();
    let mut per_node = Tensor::zeros(n, c);
    let mut prior = p.initial.clone();
    for i in 0..n {
        if i > 0 {
            prior = step(&prior, &p.transitions);
        }
        per_node.row_mut(i).copy_from_slice(&normalize_exp(ll.row(i), &prior));
    }

    // Scaled forward-backward with likelihoods shifted by their row maxima.
    let lik: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row = ll.row(i);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            row.iter().map(|l| (l - m).exp()).collect()
        })
        .collect();
    let mut alpha = vec![vec![0.0; c]; n];
    for i in 0..n {
        let pred = if i == 0 {
            p.initial.clone()
        } else {
            step(&alpha[i - 1], &p.transitions)
        };
        let a: Vec<f64> = pred.iter().zip(&lik[i]).map(|(x, y)| x * y).collect();
        let s: f64 = a.iter().sum();
        alpha[i] = a.into_iter().map(|v| v / s).collect();
    }
    let mut beta = vec![vec![1.0; c]; n];
    for i in (0..n.saturating_sub(1)).rev() {
        let b: Vec<f64> = (0..c)
            .map(|a| (0..c).map(|x| p.transitions[a][x] * lik[i + 1][x] * beta[i + 1][x]).sum())
            .collect();
        let s: f64 = b.iter().sum();
        beta[i] = b.into_iter().map(|v| v / s).collect();
    }
    let mut temporal = Tensor::zeros(n, c);
    for i in 0..n {
        let g: Vec<f64> = alpha[i].iter().zip(&beta[i]).map(|(a, b)| a * b).collect();
        let s: f64 = g.iter().sum();
        for (o, v) in temporal.row_mut(i).iter_mut().zip(g) {
            *o = v / s;
        }
    }
    Ok(OraclePosteriors { per_node, temporal })
}

/// Accuracy of argmax decisions over a set of takes, for both posteriors:
/// `(per_node, temporal)`.
pub fn bayes_ceilings(p: &GenerativeParams, takes: &[TakeRecord]) -> Result<(f64, f64)> {
    let (mut hits_node, mut hits_temporal, mut total) = (0usize, 0usize, 0usize);
    for take in takes {
        let post = bayes_oracle(p, &Observations::of_take(take)?)?;
        for (i, s) in take.segments.iter().enumerate() {
            let y = s.class_id as usize;
            hits_node += usize::from(crate::train::argmax(post.per_node.row(i)) == y);
            hits_temporal += usize::from(crate::train::argmax(post.temporal.row(i)) == y);
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Metric("no segments".into()));
    }
    Ok((hits_node as f64 / total as f64, hits_temporal as f64 / total as f64))
}
