use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeKind, Modality, NodeType, Relation, TypeDims};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    EdgeConv,
    Sage,
    Gat,
    Rgcn,
    Linear,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    #[serde(default = "one")]
    pub heads: usize,
    /// Weight slots of a relational layer; filled in by [`ModelSpec::new`].
    #[serde(default)]
    pub num_relations: usize,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub dropout: f64,
}

fn one() -> usize {
    1
}

impl LayerSpec {
    pub fn new(kind: LayerKind, in_dim: usize, out_dim: usize) -> Self {
        LayerSpec {
            kind,
            in_dim,
            out_dim,
            heads: 1,
            num_relations: 0,
            activation: Activation::Relu,
            dropout: DEFAULT_DROPOUT,
        }
    }

    pub fn with_heads(mut self, heads: usize) -> Self {
        self.heads = heads;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_dropout(mut self, dropout: f64) -> Self {
        self.dropout = dropout;
        self
    }

}

pub const DEFAULT_DROPOUT: f64 = 0.2;
pub const DEFAULT_HIDDEN: usize = 512;
pub const DEFAULT_HEADS: usize = 4;
pub const DEFAULT_NUM_CLASSES: usize = 289;

/// How relations map onto relational weight slots.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightSharing {
    /// Key on (src type, kind, dst type).
    ByType,
    /// Key on (src modality, kind, dst modality): ego and exo vision nodes
    /// are one node type for weight purposes.
    #[default]
    ByModality,
    /// Every relation shares one weight.
    Single,
}

/// Relation → weight slot resolution for relational layers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HeteroWeightMap {
    slots: Vec<String>,
    map: BTreeMap<Relation, usize>,
}

fn type_key(t: NodeType, sharing: WeightSharing) -> String {
    match sharing {
        WeightSharing::ByType => t.to_string(),
        _ => match t.modality() {
            Modality::Vision => "Vision".into(),
            Modality::Depth => "Depth".into(),
            Modality::Text => "Text".into(),
        },
    }
}

impl HeteroWeightMap {
    pub fn new(relations: &[Relation], sharing: WeightSharing) -> Self {
        let mut slots: Vec<String> = Vec::new();
        let mut map = BTreeMap::new();
        let mut sorted = relations.to_vec();
        sorted.sort();
        sorted.dedup();
        for rel in sorted {
            let key = match sharing {
                WeightSharing::Single => "shared".to_string(),
                _ => format!(
                    "{}-{:?}-{}",
                    type_key(rel.src, sharing),
                    rel.kind,
                    type_key(rel.dst, sharing)
                ),
            };
            let slot = match slots.iter().position(|s| *s == key) {
                Some(i) => i,
                None => {
                    slots.push(key);
                    slots.len() - 1
                }
            };
            map.insert(rel, slot);
        }
        HeteroWeightMap { slots, map }
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    pub fn slot_name(&self, slot: usize) -> &str {
        &self.slots[slot]
    }

    pub fn resolve(&self, rel: Relation) -> Result<usize> {
        self.map
            .get(&rel)
            .copied()
            .ok_or_else(|| Error::Config(format!("relation {rel} has no relational weight")))
    }

    pub fn relations(&self) -> impl Iterator<Item = (Relation, usize)> + '_ {
        self.map.iter().map(|(r, s)| (*r, *s))
    }
}

/// Layer stack plus input projections and classifier head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Raw feature width per modality.
    pub input_dims: TypeDims,
    /// Width of the per-modality input projection; `None` feeds raw features
    /// straight into the first layer.
    pub projection: Option<usize>,
    pub layers: Vec<LayerSpec>,
    pub num_classes: usize,
    /// Relations consumed by relational layers.
    #[serde(default)]
    pub relations: Vec<Relation>,
    #[serde(default)]
    pub weight_sharing: WeightSharing,
    /// SAGE and RGCN layers skip self-loop arcs and rely on their own self
    /// weight; when unset, self-loops are ordinary neighbors.
    #[serde(default = "yes")]
    pub self_loops_via_root: bool,
}

fn yes() -> bool {
    true
}

impl ModelSpec {
    /// Fills relational slot counts and validates the stack.
    pub fn new(
        input_dims: TypeDims,
        projection: Option<usize>,
        mut layers: Vec<LayerSpec>,
        num_classes: usize,
        relations: Vec<Relation>,
        weight_sharing: WeightSharing,
    ) -> Result<Self> {
        let mut spec = ModelSpec {
            input_dims,
            projection,
            layers: Vec::new(),
            num_classes,
            relations,
            weight_sharing,
            self_loops_via_root: true,
        };
        let slots = spec.weight_map().num_slots();
        for l in &mut layers {
            if l.kind == LayerKind::Rgcn {
                l.num_relations = slots;
            }
        }
        spec.layers = layers;
        spec.validate()?;
        Ok(spec)
    }

    /// Stack of `kinds` with equal hidden widths.
    pub fn stack(
        kinds: &[LayerKind],
        input_dims: TypeDims,
        projection: Option<usize>,
        hidden: usize,
        num_classes: usize,
        relations: Vec<Relation>,
    ) -> Result<Self> {
        let mut width = projection.unwrap_or(input_dims.vision);
        let layers = kinds
            .iter()
            .map(|&k| {
                let mut l = LayerSpec::new(k, width, hidden);
                if k == LayerKind::Gat {
                    l.heads = DEFAULT_HEADS;
                }
                width = hidden;
                l
            })
            .collect();
        Self::new(
            input_dims,
            projection,
            layers,
            num_classes,
            relations,
            WeightSharing::default(),
        )
    }

    /// Relational weight slots; self-loop relations get none when they are
    /// folded into the root weight.
    pub fn weight_map(&self) -> HeteroWeightMap {
        let rels: Vec<Relation> = self
            .relations
            .iter()
            .copied()
            .filter(|r| !(self.self_loops_via_root && r.kind == EdgeKind::SelfLoop))
            .collect();
        HeteroWeightMap::new(&rels, self.weight_sharing)
    }

    pub fn input_width(&self) -> usize {
        self.projection.unwrap_or(self.input_dims.vision)
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(self.input_width(), |l| l.out_dim)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        if self.projection == Some(0) {
            return Err(Error::Config("projection width must be positive".into()));
        }
        let slots = self.weight_map().num_slots();
        let mut width = self.input_width();
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_dim == 0 || l.out_dim == 0 {
                return Err(Error::Config(format!("layer {i}: dimensions must be positive")));
            }
            if l.in_dim != width {
                return Err(Error::Config(format!(
                    "layer {i}: in_dim {} does not follow width {width}",
                    l.in_dim
                )));
            }
            if l.heads == 0 || l.out_dim % l.heads != 0 {
                return Err(Error::Config(format!(
                    "layer {i}: {} heads do not divide out_dim {}",
                    l.heads, l.out_dim
                )));
            }
            if l.kind != LayerKind::Gat && l.heads != 1 {
                return Err(Error::Config(format!("layer {i}: heads only apply to GAT")));
            }
            if l.kind == LayerKind::Rgcn && l.num_relations != slots {
                return Err(Error::Config(format!(
                    "layer {i}: {} relations declared, weight map has {slots}",
                    l.num_relations
                )));
            }
            if !(0.0..1.0).contains(&l.dropout) {
                return Err(Error::Config(format!("layer {i}: dropout must lie in [0, 1)")));
            }
            width = l.out_dim;
        }
        Ok(())
    }

    /// Copy with every dropout rate set to `p`.
    pub fn with_dropout(mut self, p: f64) -> Self {
        for l in &mut self.layers {
            l.dropout = p;
        }
        self
    }

    /// Modalities with an input projection: vision plus every modality
    /// touched by a declared relation.
    pub fn modalities(&self) -> Vec<Modality> {
        Modality::ALL
            .into_iter()
            .filter(|&m| {
                m == Modality::Vision
                    || self
                        .relations
                        .iter()
                        .any(|r| r.src.modality() == m || r.dst.modality() == m)
            })
            .collect()
    }

    /// Same spec with self-loops treated as ordinary arcs or folded into the
    /// root weight; relational slot counts are refreshed.
    pub fn with_self_loops_via_root(mut self, on: bool) -> Self {
        self.self_loops_via_root = on;
        let slots = self.weight_map().num_slots();
        for l in &mut self.layers {
            if l.kind == LayerKind::Rgcn {
                l.num_relations = slots;
            }
        }
        self
    }

    pub fn has_relational_layer(&self) -> bool {
        self.layers.iter().any(|l| l.kind == LayerKind::Rgcn)
    }
}

/// Single-hidden-layer perceptron on vision features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpBaselineSpec {
    pub input: usize,
    pub hidden: usize,
    pub num_classes: usize,
}

impl Default for MlpBaselineSpec {
    fn default() -> Self {
        MlpBaselineSpec {
            input: 1536,
            hidden: 1056,
            num_classes: DEFAULT_NUM_CLASSES,
        }
    }
}

impl MlpBaselineSpec {
    /// The same network as a graph model that ignores arcs: one Linear+ReLU
    /// layer followed by the classifier head.
    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            input_dims: TypeDims {
                vision: self.input,
                ..TypeDims::default()
            },
            projection: None,
            layers: vec![LayerSpec::new(LayerKind::Linear, self.input, self.hidden).with_dropout(0.0)],
            num_classes: self.num_classes,
            relations: Vec::new(),
            weight_sharing: WeightSharing::default(),
            self_loops_via_root: true,
        }
    }
}
