//! Self-checks run by `maglev verify`: gradient checks, agreement with the
//! naive reference layers, construction counting rules, inference pruning,
//! metric fixtures and serialization round trips.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::builder::{
    build_graph, extract_inference_graph, BuildConfig, DepthEdges, Directions, ExtraModality, InferenceMode, Segment,
    TakeRecord, ViewMode, ViewRecord, ViewRole, WindowFeatures,
};
use crate::data::FeatureBlock;
use crate::error::Result;
use crate::graph::{HeteroGraph, NodeType, TypeDims};
use crate::layers::{
    edgeconv_forward, gatv2_forward, init_weights, model_forward, reference, rgcn_forward, sage_forward, Activation,
    Arcs, Bound, EdgeConvWeights, GatWeights, GraphInput, LayerKind, Model, ModelSpec, RgcnWeights, SageWeights,
    GAT_NEGATIVE_SLOPE,
};
use crate::tensor::{finite_diff_check, Tape, Tensor, Var};
use crate::train::{argmax, f1_at_threshold, top1_accuracy};

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub detail: String,
    pub seconds: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyOptions {
    pub gradient_graphs: usize,
    pub oracle_graphs: usize,
    pub construction_draws: usize,
    pub seed: u64,
}

impl VerifyOptions {
    pub fn full() -> Self {
        VerifyOptions {
            gradient_graphs: 10,
            oracle_graphs: 200,
            construction_draws: 500,
            seed: 0,
        }
    }

    pub fn quick() -> Self {
        VerifyOptions {
            gradient_graphs: 2,
            oracle_graphs: 30,
            construction_draws: 60,
            seed: 0,
        }
    }
}

const DIMS: TypeDims = TypeDims {
    vision: 4,
    depth: 3,
    text: 2,
};

fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

/// A take with `n` one-second segments, `k` exo views, two windows per
/// segment and every optional modality.
pub fn random_take(id: &str, n: usize, k: usize, num_classes: u32, dims: TypeDims, seed: u64) -> TakeRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let segments = (0..n)
        .map(|s| Segment {
            start_s: s as f64,
            end_s: s as f64 + 1.0,
            class_id: rng.random_range(0..num_classes),
        })
        .collect();
    let views = (0..=k as u32)
        .map(|v| ViewRecord {
            view_id: v,
            role: if v == 0 { ViewRole::Ego } else { ViewRole::Exo },
            vision: WindowFeatures {
                centers: (0..2 * n).map(|w| 0.25 + 0.5 * w as f64).collect(),
                features: random(&mut rng, 2 * n, dims.vision),
            },
            depth: Some(random(&mut rng, n, dims.depth)),
        })
        .collect();
    TakeRecord {
        take_id: id.to_string(),
        scenario: "check".into(),
        segments,
        views,
        text: Some(random(&mut rng, n, dims.text)),
        objects: Some(random(&mut rng, n, dims.text)),
    }
}

fn random_directions(rng: &mut ChaCha8Rng) -> Directions {
    Directions {
        fwd: rng.random(),
        bwd: rng.random(),
        und: rng.random(),
    }
}

/// A random valid build configuration.
pub fn random_config(rng: &mut ChaCha8Rng, num_classes: usize) -> BuildConfig {
    let mut temporal = random_directions(rng);
    if temporal.is_empty() {
        temporal.fwd = true;
    }
    let mut modalities = Vec::new();
    if rng.random() {
        modalities.push(ExtraModality::Depth);
    }
    match rng.random_range(0..3) {
        1 => modalities.push(ExtraModality::Text),
        2 => modalities.push(ExtraModality::Objects),
        _ => {}
    }
    BuildConfig {
        views: if rng.random() {
            ViewMode::MultiView
        } else {
            ViewMode::EgoOnly
        },
        temporal,
        exo_temporal: random_directions(rng),
        ego_exo: random_directions(rng),
        exo_exo: random_directions(rng),
        modalities,
        depth_edges: DepthEdges {
            cross_view: rng.random(),
            to_vision: rng.random(),
            temporal: rng.random(),
        },
        self_loops: rng.random(),
        num_classes,
        dims: DIMS,
    }
}

/// Node and arc counts implied by the construction rules:
/// `(vision, depth, text, arcs)`.
pub fn closed_form_counts(n: usize, k: usize, c: &BuildConfig) -> (usize, usize, usize, usize) {
    let multi = c.views == ViewMode::MultiView;
    let k = if multi { k } else { 0 };
    let vision = n * (k + 1);
    let mut arcs = (n - 1) * c.temporal.arcs_per_pair();
    if multi {
        arcs += k * (n - 1) * c.exo_temporal.arcs_per_pair();
        arcs += n * k * c.ego_exo.arcs_per_pair();
        arcs += n * (k * k.saturating_sub(1) / 2) * c.exo_exo.arcs_per_pair();
    }
    let depth = if c.uses_depth() { vision } else { 0 };
    if depth > 0 {
        let e = c.depth_edges;
        arcs += usize::from(e.to_vision) * vision;
        arcs += usize::from(e.cross_view && multi) * n * k;
        arcs += usize::from(e.temporal) * (k + 1) * (n - 1);
    }
    let text = if c.text_source().is_some() { n } else { 0 };
    arcs += text;
    if c.self_loops {
        arcs += vision + depth + text;
    }
    (vision, depth, text, arcs)
}

fn check_counts(opts: &VerifyOptions) -> Result<(usize, Option<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xC0);
    for draw in 0..opts.construction_draws {
        let n = rng.random_range(1..=20);
        let k = rng.random_range(0..=5);
        let c = random_config(&mut rng, 5);
        let take = random_take("v", n, k, 5, DIMS, rng.random());
        let g = build_graph(&take, &c)?;
        let got = (
            g.num_nodes(NodeType::VisionEgo) + g.num_nodes(NodeType::VisionExo),
            g.num_nodes(NodeType::Depth),
            g.num_nodes(NodeType::Text),
            g.num_arcs(),
        );
        let want = closed_form_counts(n, k, &c);
        if got != want {
            return Ok((draw + 1, Some(format!("draw {draw} (N={n}, K={k}): {got:?} != {want:?}"))));
        }
    }
    Ok((opts.construction_draws, None))
}

fn check_inference_identity(opts: &VerifyOptions) -> Result<(usize, Option<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xC0);
    for draw in 0..opts.construction_draws {
        let n = rng.random_range(1..=20);
        let k = rng.random_range(0..=5);
        let mut c = random_config(&mut rng, 5);
        c.views = ViewMode::MultiView;
        let take = random_take("v", n, k, 5, DIMS, rng.random());
        let pruned = extract_inference_graph(&build_graph(&take, &c)?, InferenceMode::EgoWithModalities);
        let direct = build_graph(&take, &c.ego_restricted())?;
        if pruned.to_bytes() != direct.to_bytes() {
            return Ok((draw + 1, Some(format!("draw {draw} (N={n}, K={k}) differs"))));
        }
    }
    Ok((opts.construction_draws, None))
}

fn random_arcs(rng: &mut ChaCha8Rng, n: usize, e: usize) -> Vec<(usize, usize)> {
    (0..e).map(|_| (rng.random_range(0..n), rng.random_range(0..n))).collect()
}

fn check_oracle(opts: &VerifyOptions) -> Result<(usize, Option<String>)> {
    const TOL: f64 = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x0A);
    let (din, dout) = (5, 4);
    for case in 0..opts.oracle_graphs {
        let n = rng.random_range(1..=50);
        let e = rng.random_range(0..3 * n);
        let h = random(&mut rng, n, din);
        let pairs = random_arcs(&mut rng, n, e);
        let w: Vec<Tensor> = (0..4).map(|_| random(&mut rng, din, dout)).collect();
        let b = random(&mut rng, 1, dout);
        let arcs = Arcs::new(n, &pairs)?;
        let mut t = Tape::new();
        let hv = t.constant(h.clone());
        let c = |t: &mut Tape, x: &Tensor| t.constant(x.clone());
        let ew = EdgeConvWeights {
            w_center: c(&mut t, &w[0]),
            w_offset: c(&mut t, &w[1]),
            b: c(&mut t, &b),
        };
        let fast = edgeconv_forward(&mut t, hv, &arcs, &ew, Activation::Relu)?;
        let slow = reference::edgeconv(&h, &pairs, &w[0], &w[1], &b, Activation::Relu);
        let mut worst = t.value(fast).max_abs_diff(&slow);

        let sw = SageWeights {
            w_self: c(&mut t, &w[0]),
            w_neigh: c(&mut t, &w[1]),
            b: c(&mut t, &b),
        };
        let fast = sage_forward(&mut t, hv, &arcs, &sw, Activation::Relu)?;
        worst = worst.max(t.value(fast).max_abs_diff(&reference::sage(&h, &pairs, &w[0], &w[1], &b, Activation::Relu)));

        let split = pairs.len() / 2;
        let slots = vec![pairs[..split].to_vec(), pairs[split..].to_vec()];
        let slot_arcs: Vec<Arcs> = slots.iter().map(|s| Arcs::new(n, s)).collect::<Result<_>>()?;
        let rw = RgcnWeights {
            w_root: c(&mut t, &w[0]),
            w_slots: vec![c(&mut t, &w[1]), c(&mut t, &w[2])],
            b: c(&mut t, &b),
        };
        let fast = rgcn_forward(&mut t, hv, &slot_arcs, &rw, Activation::Relu)?;
        let slow = reference::rgcn(&h, &slots, &w[0], &w[1..3], &b, Activation::Relu);
        worst = worst.max(t.value(fast).max_abs_diff(&slow));

        let mut with_self = pairs.clone();
        with_self.extend((0..n).map(|i| (i, i)));
        let att = random(&mut rng, 1, dout);
        let gw = GatWeights {
            w_dst: c(&mut t, &w[0]),
            w_src: c(&mut t, &w[1]),
            att: c(&mut t, &att),
            b: c(&mut t, &b),
            heads: 2,
        };
        let fast = gatv2_forward(&mut t, hv, &Arcs::new(n, &with_self)?, &gw, Activation::Relu)?;
        let (slow, _) = reference::gatv2(&h, &with_self, &w[0], &w[1], &att, &b, 2, GAT_NEGATIVE_SLOPE, Activation::Relu);
        worst = worst.max(t.value(fast).max_abs_diff(&slow));
        if !(worst < TOL) {
            return Ok((case + 1, Some(format!("graph {case} ({n} nodes): max difference {worst:e}"))));
        }
    }
    Ok((opts.oracle_graphs, None))
}

fn check_gradients(opts: &VerifyOptions) -> Result<(usize, Option<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x6D);
    let c = BuildConfig {
        views: ViewMode::MultiView,
        modalities: vec![ExtraModality::Depth],
        num_classes: 5,
        dims: DIMS,
        ..Default::default()
    };
    let stacks = [
        vec![LayerKind::EdgeConv, LayerKind::Sage],
        vec![LayerKind::EdgeConv, LayerKind::Rgcn],
        vec![LayerKind::Gat, LayerKind::Linear],
    ];
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    for i in 0..opts.gradient_graphs {
        let n = rng.random_range(1..=3);
        let k = rng.random_range(0..=1);
        let g = build_graph(&random_take("g", n, k, 5, DIMS, rng.random()), &c)?;
        for kinds in &stacks {
            let spec = ModelSpec::stack(kinds, DIMS, Some(4), 4, 5, c.relations())?.with_dropout(0.0);
            let mut params = init_weights(&spec, rng.random());
            for v in params.values_mut() {
                for x in v.data_mut() {
                    *x += rng.random_range(-0.1..0.1);
                }
            }
            let input = GraphInput::new(&g, &spec)?;
            let check = finite_diff_check(
                |t: &mut Tape, vars: &[Var]| {
                    let bound = Bound::from_vars(&params, vars.to_vec())?;
                    let logits = model_forward(t, &spec, &bound, &input, None)?;
                    t.softmax_cross_entropy(logits, input.labels(), input.mask())
                },
                params.values(),
                1e-5,
            )?;
            cases += 1;
            worst = worst.max(check.max_rel_error);
            if !(check.max_rel_error < 1e-4) {
                return Ok((
                    cases,
                    Some(format!(
                        "graph {i}, stack {kinds:?}: relative error {:e} at {}",
                        check.max_rel_error,
                        check.worst.map_or(String::new(), |(p, c)| format!("{}[{c}]", params.names()[p]))
                    )),
                ));
            }
        }
    }
    Ok((cases, None))
}

fn check_metrics() -> Result<(usize, Option<String>)> {
    let probs = Tensor::from_rows(&[[0.9, 0.1], [0.6, 0.4], [0.3, 0.7], [0.2, 0.8], [0.55, 0.45], [0.5, 0.5]]);
    let labels = [0, 0, 0, 1, 1, 1];
    let preds: Vec<usize> = (0..6).map(|i| argmax(probs.row(i))).collect();
    let top1 = top1_accuracy(&preds, &labels)?;
    let f1 = f1_at_threshold(&probs, &labels, 0.1);
    if top1 != 0.5 || (f1 - 17.0 / 35.0).abs() > 1e-15 {
        return Ok((1, Some(format!("top1 {top1}, F1@0.1 {f1}; expected 0.5 and 17/35"))));
    }
    Ok((1, None))
}

fn check_round_trips(opts: &VerifyOptions) -> Result<(usize, Option<String>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x77);
    let draws = opts.construction_draws.min(100);
    for draw in 0..draws {
        let c = random_config(&mut rng, 5);
        let take = random_take("r", rng.random_range(1..=8), rng.random_range(0..=3), 5, DIMS, rng.random());
        let g = build_graph(&take, &c)?;
        let bytes = g.to_bytes();
        if HeteroGraph::from_bytes(&bytes)?.to_bytes() != bytes {
            return Ok((draw + 1, Some(format!("graph draw {draw} does not round-trip"))));
        }
        for block in crate::data::take_blocks(&take) {
            let b = block.to_bytes();
            if FeatureBlock::from_bytes(&b)?.to_bytes() != b {
                return Ok((draw + 1, Some(format!("feature draw {draw} does not round-trip"))));
            }
        }
        let spec = ModelSpec::stack(&[LayerKind::EdgeConv, LayerKind::Rgcn], DIMS, Some(3), 3, 5, c.relations())?;
        let m = Model::init(spec, rng.random())?;
        let b = m.to_bytes()?;
        if Model::from_bytes(&b)?.to_bytes()? != b {
            return Ok((draw + 1, Some(format!("checkpoint draw {draw} does not round-trip"))));
        }
    }
    Ok((draws, None))
}

/// Runs every check; errors inside a check count as failures.
pub fn run_checks(opts: &VerifyOptions) -> Vec<CheckResult> {
    type Check<'a> = (&'static str, Box<dyn Fn() -> Result<(usize, Option<String>)> + 'a>);
    let checks: Vec<Check> = vec![
        ("gradient-fidelity", Box::new(|| check_gradients(opts))),
        ("oracle-equivalence", Box::new(|| check_oracle(opts))),
        ("construction-counting", Box::new(|| check_counts(opts))),
        ("inference-pruning", Box::new(|| check_inference_identity(opts))),
        ("metric-fixture", Box::new(check_metrics)),
        ("round-trips", Box::new(|| check_round_trips(opts))),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            let start = Instant::now();
            let (cases, failure) = match f() {
                Ok(r) => r,
                Err(e) => (0, Some(format!("error: {e}"))),
            };
            let seconds = Duration::as_secs_f64(&start.elapsed());
            CheckResult {
                name,
                passed: failure.is_none(),
                cases,
                detail: failure.unwrap_or_else(|| "ok".into()),
                seconds,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_counts() {
        let c = BuildConfig {
            ego_exo: Directions::only(crate::builder::Direction::Und),
            exo_exo: Directions::only(crate::builder::Direction::Und),
            num_classes: 5,
            dims: DIMS,
            ..Default::default()
        };
        assert_eq!(closed_form_counts(3, 2, &c), (9, 0, 0, 51));
    }

    #[test]
    fn quick_checks_pass() {
        for r in run_checks(&VerifyOptions::quick()) {
            assert!(r.passed, "{}: {}", r.name, r.detail);
            assert!(r.cases > 0);
        }
    }
}
