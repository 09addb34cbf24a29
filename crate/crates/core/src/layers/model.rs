use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::conv::{
    edgeconv_forward, gatv2_forward, linear_forward, rgcn_forward, sage_forward, Arcs,
    EdgeConvWeights, GatWeights, RgcnWeights, SageWeights,
};
use super::params::{init_weights, modality_name, Bound, Params};
use super::spec::{Activation, LayerKind, MlpBaselineSpec, ModelSpec};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::graph::{EdgeKind, HeteroGraph, NodeType, Relation};
use crate::tensor::{Tape, Tensor, Var};

/// A graph flattened into model rows: all node types stacked in
/// [`NodeType::ALL`] order, so vision nodes (ego, then exo) come first.
#[derive(Clone, Debug)]
pub struct GraphInput {
    features: [Tensor; 4],
    offsets: [usize; 5],
    /// Union of all arcs, for relation-agnostic layers.
    pub arcs: Arcs,
    /// The union without self-loop arcs when those are folded into root
    /// weights, otherwise equal to `arcs`.
    pub neighbor_arcs: Arcs,
    /// Arcs grouped by relational weight slot.
    pub slot_arcs: Vec<Arcs>,
    labels: Vec<usize>,
    mask: Vec<bool>,
}

impl GraphInput {
    pub fn new(g: &HeteroGraph, spec: &ModelSpec) -> Result<Self> {
        let modalities = spec.modalities();
        let mut offsets = [0; 5];
        let mut features: [Tensor; 4] = Default::default();
        for ty in NodeType::ALL {
            let t = g.table(ty);
            let i = ty.index();
            offsets[i + 1] = offsets[i] + t.len();
            if t.is_empty() {
                continue;
            }
            let projected = spec.projection.is_some() && modalities.contains(&ty.modality());
            if !projected && !(spec.projection.is_none() && ty.is_vision()) {
                return Err(Error::Config(format!("model has no input projection for {ty} nodes")));
            }
            let want = spec.input_dims.of(ty);
            if t.dim() != want {
                return Err(Error::Dimension {
                    op: "model_input",
                    left: (t.len(), t.dim()),
                    right: (t.len(), want),
                });
            }
            features[i] = Tensor::from_vec(t.len(), t.dim(), t.features().to_vec())?;
        }
        let n = offsets[4];
        if n == 0 {
            return Err(Error::InvalidBatch(format!("graph {} has no nodes", g.take_id())));
        }
        let global = |ty: NodeType, i: usize| offsets[ty.index()] + i;
        let skip_self = |rel: Relation| spec.self_loops_via_root && rel.kind == EdgeKind::SelfLoop;
        let mut all = Vec::with_capacity(g.num_arcs());
        let mut neighbors = Vec::with_capacity(g.num_arcs());
        for (rel, csr) in g.relations() {
            let start = all.len();
            all.extend(csr.arcs().map(|(s, d)| (global(rel.src, s), global(rel.dst, d))));
            if !skip_self(rel) {
                neighbors.extend_from_slice(&all[start..]);
            }
        }
        let arcs = Arcs::new(n, &all)?;
        let neighbor_arcs = Arcs::new(n, &neighbors)?;
        let slot_arcs = if spec.has_relational_layer() {
            let map = spec.weight_map();
            let mut groups = vec![Vec::new(); map.num_slots()];
            for (rel, csr) in g.relations().filter(|(r, _)| !skip_self(*r)) {
                let slot = map.resolve(rel)?;
                groups[slot].extend(csr.arcs().map(|(s, d)| (global(rel.src, s), global(rel.dst, d))));
            }
            groups.iter().map(|p| Arcs::new(n, p)).collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        let (mut labels, mut mask) = (Vec::new(), Vec::new());
        for ty in [NodeType::VisionEgo, NodeType::VisionExo] {
            for l in g.table(ty).labels() {
                labels.push(l.map_or(0, |c| c as usize));
                mask.push(l.is_some());
            }
        }
        Ok(GraphInput {
            features,
            offsets,
            arcs,
            neighbor_arcs,
            slot_arcs,
            labels,
            mask,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets[4]
    }

    /// Rows that receive logits: ego vision nodes then exo vision nodes.
    pub fn num_vision(&self) -> usize {
        self.offsets[2]
    }

    pub fn num_ego(&self) -> usize {
        self.offsets[1]
    }

    pub fn features(&self, ty: NodeType) -> &Tensor {
        &self.features[ty.index()]
    }

    /// Class per vision row; unlabeled rows hold 0 and are cleared in
    /// [`GraphInput::mask`].
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }
}

fn dropout(t: &mut Tape, x: Var, p: f64, rng: &mut ChaCha8Rng) -> Result<Var> {
    let (r, c) = t.value(x).shape();
    let keep = 1.0 / (1.0 - p);
    let mut mask = Tensor::zeros(r, c);
    for v in mask.data_mut() {
        if rng.random::<f64>() >= p {
            *v = keep;
        }
    }
    let m = t.constant(mask);
    t.mul(x, m)
}

/// Logits for the vision rows of `input`. Dropout runs only when `rng` is
/// given.
pub fn model_forward(
    t: &mut Tape,
    spec: &ModelSpec,
    p: &Bound,
    input: &GraphInput,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    let mut parts = Vec::new();
    for ty in NodeType::ALL {
        let x = input.features(ty);
        if x.rows() == 0 {
            continue;
        }
        let x = t.constant(x.clone());
        parts.push(match spec.projection {
            Some(_) => {
                let m = modality_name(ty.modality());
                let w = p.var(&format!("proj.{m}.w"))?;
                let b = p.var(&format!("proj.{m}.b"))?;
                linear_forward(t, x, w, b, Activation::None)?
            }
            None => x,
        });
    }
    let mut h = t.concat_rows(&parts)?;
    for (i, l) in spec.layers.iter().enumerate() {
        if i > 0 && l.dropout > 0.0 {
            if let Some(r) = rng.as_deref_mut() {
                h = dropout(t, h, l.dropout, r)?;
            }
        }
        let v = |s: &str| p.var(&format!("layer{i}.{s}"));
        let b = v("b")?;
        h = match l.kind {
            LayerKind::Linear => linear_forward(t, h, v("w")?, b, l.activation)?,
            LayerKind::EdgeConv => {
                let w = EdgeConvWeights {
                    w_center: v("w_center")?,
                    w_offset: v("w_offset")?,
                    b,
                };
                edgeconv_forward(t, h, &input.arcs, &w, l.activation)?
            }
            LayerKind::Sage => {
                let w = SageWeights {
                    w_self: v("w_self")?,
                    w_neigh: v("w_neigh")?,
                    b,
                };
                sage_forward(t, h, &input.neighbor_arcs, &w, l.activation)?
            }
            LayerKind::Gat => {
                let w = GatWeights {
                    w_dst: v("w_dst")?,
                    w_src: v("w_src")?,
                    att: v("att")?,
                    b,
                    heads: l.heads,
                };
                gatv2_forward(t, h, &input.arcs, &w, l.activation)?
            }
            LayerKind::Rgcn => {
                let w = RgcnWeights {
                    w_root: v("w_root")?,
                    w_slots: (0..l.num_relations)
                        .map(|s| v(&format!("w_rel{s}")))
                        .collect::<Result<_>>()?,
                    b,
                };
                rgcn_forward(t, h, &input.slot_arcs, &w, l.activation)?
            }
        };
    }
    if let Some(r) = rng {
        if let Some(l) = spec.layers.last().filter(|l| l.dropout > 0.0) {
            h = dropout(t, h, l.dropout, r)?;
        }
    }
    let nv = input.num_vision();
    if nv < input.num_nodes() {
        h = t.gather_rows(h, (0..nv).collect())?;
    }
    linear_forward(t, h, p.var("head.w")?, p.var("head.b")?, Activation::None)
}

/// `relu(x·W1 + b1)·W2 + b2` on the tape.
pub fn mlp_baseline_tape(t: &mut Tape, w1: Var, b1: Var, w2: Var, b2: Var, x: Var) -> Result<Var> {
    let hidden = linear_forward(t, x, w1, b1, Activation::Relu)?;
    linear_forward(t, hidden, w2, b2, Activation::None)
}

/// Per-row logits of the perceptron baseline. `params` follow the layout of
/// [`MlpBaselineSpec::model_spec`].
pub fn mlp_baseline_forward(spec: &MlpBaselineSpec, params: &Params, features: &Tensor) -> Result<Tensor> {
    if features.cols() != spec.input {
        return Err(Error::Dimension {
            op: "mlp_baseline",
            left: features.shape(),
            right: (features.rows(), spec.input),
        });
    }
    params.check_against(&spec.model_spec())?;
    let mut t = Tape::new();
    let b = params.bind(&mut t, false);
    let x = t.constant(features.clone());
    let out = mlp_baseline_tape(
        &mut t,
        b.var("layer0.w")?,
        b.var("layer0.b")?,
        b.var("head.w")?,
        b.var("head.b")?,
        x,
    )?;
    Ok(t.value(out).clone())
}

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MGWT";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Architecture plus trained parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: Params,
}

impl Model {
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let params = init_weights(&spec, seed);
        Ok(Model { spec, params })
    }

    pub fn from_parts(spec: ModelSpec, params: Params) -> Result<Self> {
        spec.validate()?;
        params.check_against(&spec)?;
        Ok(Model { spec, params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn input(&self, g: &HeteroGraph) -> Result<GraphInput> {
        GraphInput::new(g, &self.spec)
    }

    /// Inference logits, one row per vision node (ego first).
    pub fn logits(&self, input: &GraphInput) -> Result<Tensor> {
        let mut t = Tape::new();
        let b = self.params.bind(&mut t, false);
        let out = model_forward(&mut t, &self.spec, &b, input, None)?;
        Ok(t.value(out).clone())
    }

    pub fn logits_for(&self, g: &HeteroGraph) -> Result<Tensor> {
        self.logits(&self.input(g)?)
    }

    /// `MGWT` container: magic, version, spec JSON, then each parameter as
    /// name, rows, cols and f64 values; CRC-32 trailer.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
        w.str(&serde_json::to_string(&self.spec)?);
        w.u32(self.params.len() as u32);
        for (name, v) in self.params.names().iter().zip(self.params.values()) {
            w.str(name);
            w.u32(v.rows() as u32);
            w.u32(v.cols() as u32);
            w.f64s(v.data());
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)?;
        let spec: ModelSpec = serde_json::from_str(&r.str()?)?;
        let n = r.u32()? as usize;
        let mut names = Vec::with_capacity(n);
        let mut values = Vec::with_capacity(n);
        for _ in 0..n {
            names.push(r.str()?);
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            values.push(Tensor::from_vec(rows, cols, r.f64s(rows * cols)?)?);
        }
        r.finish()?;
        Model::from_parts(spec, Params::new(names, values)?)
    }
}
