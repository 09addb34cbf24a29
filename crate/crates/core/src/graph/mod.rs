//! Typed heterogeneous graphs with relation-indexed, destination-sorted arcs.

mod batch;
mod codec;

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batch::{disjoint_union, GraphBatch, Member};
pub use codec::{GraphSidecar, GRAPH_MAGIC, GRAPH_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeType {
    VisionEgo,
    VisionExo,
    Depth,
    Text,
}

impl NodeType {
    pub const ALL: [NodeType; 4] = [
        NodeType::VisionEgo,
        NodeType::VisionExo,
        NodeType::Depth,
        NodeType::Text,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_vision(self) -> bool {
        matches!(self, NodeType::VisionEgo | NodeType::VisionExo)
    }

    /// Feature family: ego and exo vision nodes carry the same features.
    pub fn modality(self) -> Modality {
        match self {
            NodeType::VisionEgo | NodeType::VisionExo => Modality::Vision,
            NodeType::Depth => Modality::Depth,
            NodeType::Text => Modality::Text,
        }
    }
}

impl fmt::Display for NodeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Vision,
    Depth,
    Text,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Vision, Modality::Depth, Modality::Text];
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    TemporalFwd,
    TemporalBwd,
    TemporalUnd,
    SelfLoop,
    CrossViewEgoExo,
    ExoExo,
    ModalityToVision,
    DepthCrossView,
    DepthTemporal,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 9] = [
        EdgeKind::TemporalFwd,
        EdgeKind::TemporalBwd,
        EdgeKind::TemporalUnd,
        EdgeKind::SelfLoop,
        EdgeKind::CrossViewEgoExo,
        EdgeKind::ExoExo,
        EdgeKind::ModalityToVision,
        EdgeKind::DepthCrossView,
        EdgeKind::DepthTemporal,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn is_temporal(self) -> bool {
        matches!(
            self,
            EdgeKind::TemporalFwd | EdgeKind::TemporalBwd | EdgeKind::TemporalUnd
        )
    }
}

/// A typed arc category. Ordering follows [`Relation::id`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relation {
    pub src: NodeType,
    pub kind: EdgeKind,
    pub dst: NodeType,
}

impl Relation {
    pub const COUNT: usize = NodeType::ALL.len() * EdgeKind::ALL.len() * NodeType::ALL.len();

    pub fn new(src: NodeType, kind: EdgeKind, dst: NodeType) -> Self {
        Relation { src, kind, dst }
    }

    /// Dense id over all (src, kind, dst) triples; stable across graphs.
    pub fn id(self) -> u32 {
        ((self.src.index() * EdgeKind::ALL.len() + self.kind.index()) * NodeType::ALL.len()
            + self.dst.index()) as u32
    }

    pub fn from_id(id: u32) -> Option<Self> {
        let id = id as usize;
        if id >= Self::COUNT {
            return None;
        }
        let nt = NodeType::ALL.len();
        let dst = NodeType::from_index(id % nt)?;
        let kind = EdgeKind::from_index((id / nt) % EdgeKind::ALL.len())?;
        let src = NodeType::from_index(id / nt / EdgeKind::ALL.len())?;
        Some(Relation { src, kind, dst })
    }

    /// Whether this triple is one the builders may produce.
    pub fn is_well_formed(self) -> bool {
        use EdgeKind::*;
        use NodeType::*;
        match self.kind {
            TemporalFwd | TemporalBwd | TemporalUnd | SelfLoop => self.src == self.dst,
            CrossViewEgoExo => {
                matches!((self.src, self.dst), (VisionEgo, VisionExo) | (VisionExo, VisionEgo))
            }
            ExoExo => self.src == VisionExo && self.dst == VisionExo,
            ModalityToVision => matches!(self.src, Depth | Text) && self.dst.is_vision(),
            DepthCrossView | DepthTemporal => self.src == Depth && self.dst == Depth,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{:?}->{}", self.src, self.kind, self.dst)
    }
}

/// Feature width of each node type.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeDims {
    pub vision: usize,
    pub depth: usize,
    pub text: usize,
}

impl Default for TypeDims {
    fn default() -> Self {
        TypeDims {
            vision: 1536,
            depth: 3136,
            text: 512,
        }
    }
}

impl TypeDims {
    pub fn of(&self, ty: NodeType) -> usize {
        self.of_modality(ty.modality())
    }

    pub fn of_modality(&self, m: Modality) -> usize {
        match m {
            Modality::Vision => self.vision,
            Modality::Depth => self.depth,
            Modality::Text => self.text,
        }
    }
}

/// Node handle: type plus index within that type's table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    pub ty: NodeType,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct NodeTable {
    pub(crate) dim: usize,
    pub(crate) features: Vec<f64>,
    pub(crate) labels: Vec<Option<u32>>,
    pub(crate) views: Vec<u32>,
    pub(crate) segments: Vec<u32>,
}

impl NodeTable {
    fn with_dim(dim: usize) -> Self {
        NodeTable {
            dim,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn labels(&self) -> &[Option<u32>] {
        &self.labels
    }

    pub fn views(&self) -> &[u32] {
        &self.views
    }

    pub fn segments(&self) -> &[u32] {
        &self.segments
    }

    fn push_from(&mut self, other: &NodeTable, i: usize) {
        self.features.extend_from_slice(other.feature(i));
        self.labels.push(other.labels[i]);
        self.views.push(other.views[i]);
        self.segments.push(other.segments[i]);
    }
}

/// Arcs of one relation in compressed sparse form keyed by destination.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Csr {
    pub(crate) offsets: Vec<u32>,
    pub(crate) sources: Vec<u32>,
}

impl Csr {
    fn from_sorted(pairs: &[(u32, u32)], num_dst: usize) -> Self {
        // pairs are (dst, src), sorted
        let mut offsets = vec![0u32; num_dst + 1];
        for &(d, _) in pairs {
            offsets[d as usize + 1] += 1;
        }
        for i in 0..num_dst {
            offsets[i + 1] += offsets[i];
        }
        Csr {
            offsets,
            sources: pairs.iter().map(|&(_, s)| s).collect(),
        }
    }

    pub fn num_arcs(&self) -> usize {
        self.sources.len()
    }

    pub fn num_dst(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    /// Sources of arcs arriving at `dst`.
    pub fn incoming(&self, dst: usize) -> &[u32] {
        &self.sources[self.offsets[dst] as usize..self.offsets[dst + 1] as usize]
    }

    /// (src, dst) pairs in storage order.
    pub fn arcs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.num_dst()).flat_map(move |d| self.incoming(d).iter().map(move |&s| (s as usize, d)))
    }
}

/// An immutable, validated heterogeneous graph.
#[derive(Clone, Debug, PartialEq)]
pub struct HeteroGraph {
    pub(crate) take_id: String,
    pub(crate) num_classes: usize,
    pub(crate) tables: [NodeTable; 4],
    pub(crate) relations: BTreeMap<Relation, Csr>,
}

impl HeteroGraph {
    pub fn take_id(&self) -> &str {
        &self.take_id
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn table(&self, ty: NodeType) -> &NodeTable {
        &self.tables[ty.index()]
    }

    pub fn num_nodes(&self, ty: NodeType) -> usize {
        self.tables[ty.index()].len()
    }

    pub fn total_nodes(&self) -> usize {
        self.tables.iter().map(NodeTable::len).sum()
    }

    pub fn dims(&self) -> [usize; 4] {
        [0, 1, 2, 3].map(|i| self.tables[i].dim)
    }

    /// Relations with at least one arc, in id order.
    pub fn relations(&self) -> impl Iterator<Item = (Relation, &Csr)> {
        self.relations.iter().map(|(r, c)| (*r, c))
    }

    pub fn csr(&self, rel: Relation) -> Option<&Csr> {
        self.relations.get(&rel)
    }

    pub fn num_arcs(&self) -> usize {
        self.relations.values().map(Csr::num_arcs).sum()
    }

    pub fn arcs_of_kind(&self, kind: EdgeKind) -> usize {
        self.relations
            .iter()
            .filter(|(r, _)| r.kind == kind)
            .map(|(_, c)| c.num_arcs())
            .sum()
    }

    /// Count of labeled nodes across all types.
    pub fn labeled_nodes(&self) -> usize {
        self.tables
            .iter()
            .map(|t| t.labels.iter().filter(|l| l.is_some()).count())
            .sum()
    }

    /// Serialized container bytes; see [`codec`](self) for the layout.
    pub fn to_bytes(&self) -> Vec<u8> {
        codec::encode(self)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        codec::decode(bytes)
    }

    pub fn sidecar(&self) -> GraphSidecar {
        GraphSidecar::of(self)
    }

    /// Returns a builder holding a copy of this graph's nodes and arcs.
    pub fn to_builder(&self) -> GraphBuilder {
        let mut b = GraphBuilder {
            take_id: self.take_id.clone(),
            num_classes: self.num_classes,
            tables: self.tables.clone(),
            arcs: Vec::new(),
            keys: HashSet::new(),
        };
        for ty in NodeType::ALL {
            let t = &self.tables[ty.index()];
            for i in 0..t.len() {
                b.keys.insert((t.views[i], t.segments[i], ty));
            }
        }
        for (rel, csr) in &self.relations {
            for (s, d) in csr.arcs() {
                b.arcs.push((*rel, s as u32, d as u32));
            }
        }
        b
    }
}

/// Mutable graph under construction; [`GraphBuilder::finalize`] validates it
/// and produces the canonical [`HeteroGraph`].
#[derive(Clone, Debug)]
pub struct GraphBuilder {
    take_id: String,
    num_classes: usize,
    tables: [NodeTable; 4],
    arcs: Vec<(Relation, u32, u32)>,
    keys: HashSet<(u32, u32, NodeType)>,
}

impl GraphBuilder {
    pub fn new(take_id: impl Into<String>, num_classes: usize, dims: TypeDims) -> Self {
        GraphBuilder {
            take_id: take_id.into(),
            num_classes,
            tables: NodeType::ALL.map(|t| NodeTable::with_dim(dims.of(t))),
            arcs: Vec::new(),
            keys: HashSet::new(),
        }
    }

    pub fn num_nodes(&self, ty: NodeType) -> usize {
        self.tables[ty.index()].len()
    }

    pub fn add_node(
        &mut self,
        ty: NodeType,
        view: u32,
        segment: u32,
        features: &[f64],
        label: Option<u32>,
    ) -> Result<NodeId> {
        let table = &mut self.tables[ty.index()];
        if features.len() != table.dim {
            return Err(Error::Dimension {
                op: "add_node",
                left: (1, table.dim),
                right: (1, features.len()),
            });
        }
        if !self.keys.insert((view, segment, ty)) {
            return Err(Error::DuplicateNode {
                take: self.take_id.clone(),
                view,
                segment,
                node_type: ty.to_string(),
            });
        }
        table.features.extend_from_slice(features);
        table.labels.push(label);
        table.views.push(view);
        table.segments.push(segment);
        Ok(NodeId {
            ty,
            index: table.len() - 1,
        })
    }

    pub fn add_arc(&mut self, rel: Relation, src: NodeId, dst: NodeId) -> Result<()> {
        if src.ty != rel.src || dst.ty != rel.dst {
            return Err(Error::GraphIntegrity(format!(
                "arc {}[{}] -> {}[{}] does not match relation {rel}",
                src.ty, src.index, dst.ty, dst.index
            )));
        }
        if src.index >= self.num_nodes(src.ty) || dst.index >= self.num_nodes(dst.ty) {
            return Err(Error::GraphIntegrity(format!(
                "arc {}[{}] -> {}[{}] references a missing node",
                src.ty, src.index, dst.ty, dst.index
            )));
        }
        if rel.kind == EdgeKind::SelfLoop && src.index != dst.index {
            return Err(Error::GraphIntegrity(format!(
                "self-loop {}[{}] -> [{}] has distinct endpoints",
                src.ty, src.index, dst.index
            )));
        }
        if !rel.is_well_formed() {
            return Err(Error::GraphIntegrity(format!("relation {rel} is not permitted")));
        }
        self.arcs.push((rel, src.index as u32, dst.index as u32));
        Ok(())
    }

    /// Records an arc without any checks; [`GraphBuilder::finalize`] still
    /// validates it.
    pub fn push_arc_unchecked(&mut self, rel: Relation, src: usize, dst: usize) {
        self.arcs.push((rel, src as u32, dst as u32));
    }

    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for ty in NodeType::ALL {
            let t = &self.tables[ty.index()];
            for (i, l) in t.labels.iter().enumerate() {
                if let Some(l) = l {
                    if *l as usize >= self.num_classes {
                        out.push(format!(
                            "{ty}[{i}] label {l} >= {} classes",
                            self.num_classes
                        ));
                    }
                }
            }
            if let Some(pos) = t.features.iter().position(|v| !v.is_finite()) {
                out.push(format!("{ty}[{}] has a non-finite feature", pos / t.dim.max(1)));
            }
        }
        for (k, &(rel, s, d)) in self.arcs.iter().enumerate() {
            let ns = self.num_nodes(rel.src);
            let nd = self.num_nodes(rel.dst);
            if !rel.is_well_formed() {
                out.push(format!("arc #{k} uses invalid relation {rel}"));
            }
            if s as usize >= ns || d as usize >= nd {
                out.push(format!(
                    "arc #{k} {rel} ({s} -> {d}) is dangling ({ns} src nodes, {nd} dst nodes)"
                ));
            }
            if rel.kind == EdgeKind::SelfLoop && s != d {
                out.push(format!("arc #{k} self-loop ({s} -> {d}) has distinct endpoints"));
            }
        }
        out
    }

    pub fn finalize(self) -> Result<HeteroGraph> {
        let problems = self.violations();
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        let mut by_rel: BTreeMap<Relation, Vec<(u32, u32)>> = BTreeMap::new();
        for (rel, s, d) in self.arcs {
            by_rel.entry(rel).or_default().push((d, s));
        }
        let relations = by_rel
            .into_iter()
            .map(|(rel, mut pairs)| {
                pairs.sort_unstable();
                let csr = Csr::from_sorted(&pairs, self.tables[rel.dst.index()].len());
                (rel, csr)
            })
            .collect();
        Ok(HeteroGraph {
            take_id: self.take_id,
            num_classes: self.num_classes,
            tables: self.tables,
            relations,
        })
    }
}

/// Old-to-new node index map produced by [`filter_subgraph`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdMap {
    map: [Vec<Option<usize>>; 4],
}

impl IdMap {
    pub fn get(&self, old: NodeId) -> Option<NodeId> {
        self.map[old.ty.index()]
            .get(old.index)
            .copied()
            .flatten()
            .map(|index| NodeId { ty: old.ty, index })
    }

    pub fn is_identity(&self) -> bool {
        self.map
            .iter()
            .all(|m| m.iter().enumerate().all(|(i, v)| *v == Some(i)))
    }
}

/// Induced subgraph on the kept node types and edge kinds.
pub fn filter_subgraph(
    g: &HeteroGraph,
    keep_types: &[NodeType],
    keep_kinds: &[EdgeKind],
) -> (HeteroGraph, IdMap) {
    filter_subgraph_by(
        g,
        |ty, _view| keep_types.contains(&ty),
        |rel| keep_kinds.contains(&rel.kind),
    )
}

/// General form of [`filter_subgraph`]: nodes survive when `keep_node(type,
/// view)` holds, arcs when `keep_rel` holds and both endpoints survive.
pub fn filter_subgraph_by(
    g: &HeteroGraph,
    keep_node: impl Fn(NodeType, u32) -> bool,
    keep_rel: impl Fn(Relation) -> bool,
) -> (HeteroGraph, IdMap) {
    let mut tables: [NodeTable; 4] = NodeType::ALL.map(|t| NodeTable::with_dim(g.table(t).dim));
    let mut map: [Vec<Option<usize>>; 4] = Default::default();
    for ty in NodeType::ALL {
        let old = g.table(ty);
        let new = &mut tables[ty.index()];
        map[ty.index()] = (0..old.len())
            .map(|i| {
                if keep_node(ty, old.views[i]) {
                    new.push_from(old, i);
                    Some(new.len() - 1)
                } else {
                    None
                }
            })
            .collect();
    }
    let mut relations = BTreeMap::new();
    for (rel, csr) in &g.relations {
        if !keep_rel(*rel) {
            continue;
        }
        let (ms, md) = (&map[rel.src.index()], &map[rel.dst.index()]);
        let mut pairs = Vec::new();
        for (s, d) in csr.arcs() {
            if let (Some(ns), Some(nd)) = (ms[s], md[d]) {
                pairs.push((nd as u32, ns as u32));
            }
        }
        if pairs.is_empty() {
            continue;
        }
        // Order-preserving remap keeps (dst, src) sorted.
        relations.insert(*rel, Csr::from_sorted(&pairs, tables[rel.dst.index()].len()));
    }
    (
        HeteroGraph {
            take_id: g.take_id.clone(),
            num_classes: g.num_classes,
            tables,
            relations,
        },
        IdMap { map },
    )
}
