use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::builder::{Segment, TakeRecord, ViewRecord, ViewRole, WindowFeatures};
use crate::error::{Error, Result};
use crate::graph::TypeDims;
use crate::tensor::Tensor;

/// Parameters of the synthetic ego-exo generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub num_takes: usize,
    pub min_segments: usize,
    pub max_segments: usize,
    pub num_classes: usize,
    /// Exocentric views per take.
    pub num_exo_views: usize,
    /// Softmax temperature of the transition logits.
    pub temperature: f64,
    /// Logit bonus for each class's designated successor.
    pub successor_boost: f64,
    /// Every transition row uniform; overrides temperature and boost.
    pub uniform_transitions: bool,
    pub feature_dim: usize,
    pub depth_dim: usize,
    pub text_dim: usize,
    /// Standard deviation of class-mean coordinates.
    pub class_spread: f64,
    pub sigma_ego: f64,
    pub sigma_exo: f64,
    /// Distance of each exo view's rotation from the identity.
    pub exo_mixing: f64,
    pub windows_per_segment: usize,
    /// Spread of window features around their segment feature.
    pub window_jitter: f64,
    /// Largest pause between segments, in seconds; pauses hold unlabeled
    /// windows.
    pub max_gap_s: f64,
    pub depth: bool,
    pub text: bool,
    pub sigma_depth: f64,
    pub sigma_text: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            num_takes: 60,
            min_segments: 10,
            max_segments: 30,
            num_classes: 20,
            num_exo_views: 4,
            temperature: 1.0,
            successor_boost: 4.0,
            uniform_transitions: false,
            feature_dim: 16,
            depth_dim: 8,
            text_dim: 8,
            class_spread: 1.0,
            sigma_ego: 1.0,
            sigma_exo: 0.5,
            exo_mixing: 0.3,
            windows_per_segment: 3,
            window_jitter: 0.5,
            max_gap_s: 0.5,
            depth: false,
            text: false,
            sigma_depth: 1.0,
            sigma_text: 1.0,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic config: {m}")));
        if self.num_takes == 0 || self.num_classes < 2 {
            return bad("need at least one take and two classes");
        }
        if self.min_segments == 0 || self.min_segments > self.max_segments {
            return bad("segment range must satisfy 1 <= min <= max");
        }
        if self.feature_dim == 0 || self.windows_per_segment == 0 {
            return bad("feature_dim and windows_per_segment must be positive");
        }
        if (self.depth && self.depth_dim == 0) || (self.text && self.text_dim == 0) {
            return bad("enabled modalities need positive widths");
        }
        let sigmas = [
            self.sigma_ego,
            self.sigma_exo,
            self.sigma_depth,
            self.sigma_text,
            self.class_spread,
            self.window_jitter,
            self.exo_mixing,
            self.max_gap_s,
        ];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("noise scales must be finite and non-negative");
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) || !self.successor_boost.is_finite() {
            return bad("temperature must be positive and boost finite");
        }
        Ok(())
    }

    pub fn dims(&self) -> TypeDims {
        TypeDims {
            vision: self.feature_dim,
            depth: self.depth_dim,
            text: self.text_dim,
        }
    }
}

/// Ground truth of a generated dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerativeParams {
    pub num_classes: usize,
    pub dims: TypeDims,
    pub initial: Vec<f64>,
    /// Row-stochastic: `transitions[a][b]` = P(next = b | current = a).
    pub transitions: Vec<Vec<f64>>,
    pub vision_means: Vec<Vec<f64>>,
    pub sigma_ego: f64,
    pub sigma_exo: f64,
    /// Orthogonal map of each exo view, row-major, in view-id order from 1.
    pub exo_maps: Vec<Vec<Vec<f64>>>,
    pub depth_means: Option<Vec<Vec<f64>>>,
    pub sigma_depth: f64,
    pub text_means: Option<Vec<Vec<f64>>>,
    pub sigma_text: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticDataset {
    pub takes: Vec<TakeRecord>,
    pub params: GenerativeParams,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn round_f32(v: f64) -> f64 {
    v as f32 as f64
}

fn class_means(rng: &mut ChaCha8Rng, classes: usize, dim: usize, spread: f64) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|_| (0..dim).map(|_| round_f32(spread * normal(rng))).collect())
        .collect()
}

/// Row-wise softmax of `(G + boost·[b = succ(a)]) / temperature` with `G`
/// standard normal and `succ` a random cyclic order over the classes.
fn transition_matrix(rng: &mut ChaCha8Rng, cfg: &SyntheticConfig) -> Vec<Vec<f64>> {
    let c = cfg.num_classes;
    if cfg.uniform_transitions {
        return vec![vec![1.0 / c as f64; c]; c];
    }
    let mut order: Vec<usize> = (0..c).collect();
    order.shuffle(rng);
    let mut succ = vec![0; c];
    for i in 0..c {
        succ[order[i]] = order[(i + 1) % c];
    }
    (0..c)
        .map(|a| {
            let logits: Vec<f64> = (0..c)
                .map(|b| {
                    let bonus = if b == succ[a] { cfg.successor_boost } else { 0.0 };
                    (normal(rng) + bonus) / cfg.temperature
                })
                .collect();
            let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

/// Orthonormalized columns of `I + strength·G` (modified Gram-Schmidt).
fn orthogonal_map(rng: &mut ChaCha8Rng, d: usize, strength: f64) -> Vec<Vec<f64>> {
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            (0..d)
                .map(|i| f64::from(u8::from(i == j)) + strength * normal(rng))
                .collect()
        })
        .collect();
    for j in 0..d {
        for k in 0..j {
            let dot: f64 = (0..d).map(|i| cols[j][i] * cols[k][i]).sum();
            for i in 0..d {
                cols[j][i] -= dot * cols[k][i];
            }
        }
        let norm = cols[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        for v in &mut cols[j] {
            *v /= norm;
        }
    }
    (0..d).map(|i| (0..d).map(|j| cols[j][i]).collect()).collect()
}

fn sample_index(rng: &mut ChaCha8Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn gaussian_row(rng: &mut ChaCha8Rng, mean: &[f64], sigma: f64) -> Vec<f64> {
    mean.iter().map(|m| m + sigma * normal(rng)).collect()
}

/// Window rows around `feature`: centered offsets that average to zero, so
/// pooling recovers the segment feature up to f32 rounding.
fn windows_around(rng: &mut ChaCha8Rng, feature: &[f64], w: usize, jitter: f64) -> Vec<Vec<f64>> {
    let d = feature.len();
    let offsets: Vec<Vec<f64>> = (0..w).map(|_| (0..d).map(|_| jitter * normal(rng)).collect()).collect();
    let mean: Vec<f64> = (0..d).map(|k| offsets.iter().map(|o| o[k]).sum::<f64>() / w as f64).collect();
    offsets
        .iter()
        .map(|o| (0..d).map(|k| round_f32(feature[k] + o[k] - mean[k])).collect())
        .collect()
}

struct ViewBuffer {
    centers: Vec<f64>,
    rows: Vec<f64>,
    depth: Vec<f64>,
}

/// A dataset drawn from a Markov chain over keysteps with class-conditional
/// Gaussian features. Exo view `v` sees `Q_v · ego + σ_exo · noise` for a
/// fixed orthogonal `Q_v`. All stored features are f32-representable.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<SyntheticDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let c = cfg.num_classes;
    let d = cfg.feature_dim;
    let transitions = transition_matrix(&mut rng, cfg);
    let initial = vec![1.0 / c as f64; c];
    let vision_means = class_means(&mut rng, c, d, cfg.class_spread);
    let exo_maps: Vec<_> = (0..cfg.num_exo_views)
        .map(|_| orthogonal_map(&mut rng, d, cfg.exo_mixing))
        .collect();
    let depth_means = cfg.depth.then(|| class_means(&mut rng, c, cfg.depth_dim, cfg.class_spread));
    let text_means = cfg.text.then(|| class_means(&mut rng, c, cfg.text_dim, cfg.class_spread));

    let mut takes = Vec::with_capacity(cfg.num_takes);
    for t in 0..cfg.num_takes {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(t as u64 + 1);
        let n = rng.random_range(cfg.min_segments..=cfg.max_segments);
        let mut labels = Vec::with_capacity(n);
        labels.push(sample_index(&mut rng, &initial));
        for i in 1..n {
            labels.push(sample_index(&mut rng, &transitions[labels[i - 1]]));
        }
        let mut segments = Vec::with_capacity(n);
        let mut gaps = Vec::new();
        let mut clock = 0.0;
        for &l in &labels {
            let gap = if cfg.max_gap_s > 0.0 {
                round_f32(rng.random_range(0.0..cfg.max_gap_s))
            } else {
                0.0
            };
            if gap > 0.0 {
                gaps.push((clock, clock + gap));
            }
            let start = clock + gap;
            let end = start + round_f32(rng.random_range(1.0..3.0));
            segments.push(Segment {
                start_s: start,
                end_s: end,
                class_id: l as u32,
            });
            clock = end;
        }

        let views = 1 + cfg.num_exo_views;
        let mut buffers: Vec<ViewBuffer> = (0..views)
            .map(|_| ViewBuffer {
                centers: Vec::new(),
                rows: Vec::new(),
                depth: Vec::new(),
            })
            .collect();
        let mut text = Vec::new();
        let w = cfg.windows_per_segment;
        let mut gap_iter = gaps.iter().peekable();
        for (s, seg) in segments.iter().enumerate() {
            let centers: Vec<f64> = (0..w)
                .map(|j| seg.start_s + (j as f64 + 0.5) * (seg.end_s - seg.start_s) / w as f64)
                .collect();
            let gap = gap_iter.next_if(|g| g.1 <= seg.start_s).copied();
            let ego = gaussian_row(&mut rng, &vision_means[labels[s]], cfg.sigma_ego);
            for (v, buf) in buffers.iter_mut().enumerate() {
                if let Some((a, b)) = gap {
                    buf.centers.push(0.5 * (a + b));
                    let noise: Vec<f64> = (0..d).map(|_| round_f32(cfg.class_spread * normal(&mut rng))).collect();
                    buf.rows.extend(noise);
                }
                let feature = if v == 0 {
                    ego.clone()
                } else {
                    let q = &exo_maps[v - 1];
                    (0..d)
                        .map(|i| (0..d).map(|k| q[i][k] * ego[k]).sum::<f64>() + cfg.sigma_exo * normal(&mut rng))
                        .collect()
                };
                buf.centers.extend_from_slice(&centers);
                for row in windows_around(&mut rng, &feature, w, cfg.window_jitter) {
                    buf.rows.extend(row);
                }
                if let Some(dm) = &depth_means {
                    buf.depth
                        .extend(gaussian_row(&mut rng, &dm[labels[s]], cfg.sigma_depth).into_iter().map(round_f32));
                }
            }
            if let Some(tm) = &text_means {
                text.extend(gaussian_row(&mut rng, &tm[labels[s]], cfg.sigma_text).into_iter().map(round_f32));
            }
        }
        let views = buffers
            .into_iter()
            .enumerate()
            .map(|(v, b)| {
                let rows = b.centers.len();
                Ok(ViewRecord {
                    view_id: v as u32,
                    role: if v == 0 { ViewRole::Ego } else { ViewRole::Exo },
                    vision: WindowFeatures {
                        centers: b.centers,
                        features: Tensor::from_vec(rows, d, b.rows)?,
                    },
                    depth: if cfg.depth {
                        Some(Tensor::from_vec(n, cfg.depth_dim, b.depth)?)
                    } else {
                        None
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        takes.push(TakeRecord {
            take_id: format!("synth-{t:04}"),
            scenario: "synthetic".into(),
            segments,
            views,
            text: if cfg.text {
                Some(Tensor::from_vec(n, cfg.text_dim, text)?)
            } else {
                None
            },
            objects: None,
        });
    }
    Ok(SyntheticDataset {
        takes,
        params: GenerativeParams {
            num_classes: c,
            dims: cfg.dims(),
            initial,
            transitions,
            vision_means,
            sigma_ego: cfg.sigma_ego,
            sigma_exo: cfg.sigma_exo,
            exo_maps,
            depth_means,
            sigma_depth: cfg.sigma_depth,
            text_means,
            sigma_text: cfg.sigma_text,
        },
    })
}
