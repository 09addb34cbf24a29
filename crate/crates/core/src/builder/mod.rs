//! Graph construction from takes under a declarative edge configuration.

mod take;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    filter_subgraph_by, EdgeKind, GraphBuilder, HeteroGraph, NodeId, NodeType, Relation, TypeDims,
};
use crate::tensor::Tensor;

pub use take::{pool_segment_features, Segment, TakeRecord, ViewRecord, ViewRole, WindowFeatures};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Fwd,
    Bwd,
    Und,
}

/// Subset of {fwd, bwd, und}; serialized as a list.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<Direction>", into = "Vec<Direction>")]
pub struct Directions {
    pub fwd: bool,
    pub bwd: bool,
    pub und: bool,
}

impl Directions {
    pub const NONE: Directions = Directions {
        fwd: false,
        bwd: false,
        und: false,
    };
    pub const ALL: Directions = Directions {
        fwd: true,
        bwd: true,
        und: true,
    };

    pub fn only(d: Direction) -> Self {
        Directions::from(vec![d])
    }

    pub fn is_empty(&self) -> bool {
        !(self.fwd || self.bwd || self.und)
    }

    /// Arcs produced per connected pair.
    pub fn arcs_per_pair(&self) -> usize {
        self.fwd as usize + self.bwd as usize + 2 * self.und as usize
    }
}

impl From<Vec<Direction>> for Directions {
    fn from(v: Vec<Direction>) -> Self {
        Directions {
            fwd: v.contains(&Direction::Fwd),
            bwd: v.contains(&Direction::Bwd),
            und: v.contains(&Direction::Und),
        }
    }
}

impl From<Directions> for Vec<Direction> {
    fn from(d: Directions) -> Self {
        let mut v = Vec::new();
        if d.fwd {
            v.push(Direction::Fwd);
        }
        if d.bwd {
            v.push(Direction::Bwd);
        }
        if d.und {
            v.push(Direction::Und);
        }
        v
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ViewMode {
    EgoOnly,
    MultiView,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtraModality {
    Depth,
    Text,
    Objects,
}

/// Source of the per-segment text node features.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextSource {
    Narration,
    Objects,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DepthEdges {
    pub cross_view: bool,
    pub to_vision: bool,
    pub temporal: bool,
}

impl Default for DepthEdges {
    fn default() -> Self {
        DepthEdges {
            cross_view: true,
            to_vision: true,
            temporal: true,
        }
    }
}

/// Which nodes and arcs to instantiate for each take.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BuildConfig {
    pub views: ViewMode,
    /// Temporal arcs within the ego view.
    pub temporal: Directions,
    /// Temporal arcs within each exo view.
    pub exo_temporal: Directions,
    /// Same-segment arcs between the ego node and each exo node; `fwd` is
    /// exo→ego, `bwd` ego→exo.
    pub ego_exo: Directions,
    /// Same-segment arcs between exo pairs; `fwd` runs from the lower to the
    /// higher view id.
    pub exo_exo: Directions,
    pub modalities: Vec<ExtraModality>,
    pub depth_edges: DepthEdges,
    pub self_loops: bool,
    pub num_classes: usize,
    pub dims: TypeDims,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            views: ViewMode::MultiView,
            temporal: Directions::ALL,
            exo_temporal: Directions::ALL,
            ego_exo: Directions::ALL,
            exo_exo: Directions::ALL,
            modalities: Vec::new(),
            depth_edges: DepthEdges::default(),
            self_loops: true,
            num_classes: 289,
            dims: TypeDims::default(),
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        if self.temporal.is_empty() {
            return Err(Error::Config(
                "temporal arcs within the ego view must be enabled".into(),
            ));
        }
        if self.modalities.contains(&ExtraModality::Text) && self.modalities.contains(&ExtraModality::Objects) {
            return Err(Error::Config(
                "text and objects both map to the text node type; choose one".into(),
            ));
        }
        if self.num_classes == 0 {
            return Err(Error::Config("num_classes must be positive".into()));
        }
        Ok(())
    }

    /// The same configuration with exocentric views switched off.
    pub fn ego_restricted(&self) -> BuildConfig {
        BuildConfig {
            views: ViewMode::EgoOnly,
            ..self.clone()
        }
    }

    pub fn text_source(&self) -> Option<TextSource> {
        if self.modalities.contains(&ExtraModality::Text) {
            Some(TextSource::Narration)
        } else if self.modalities.contains(&ExtraModality::Objects) {
            Some(TextSource::Objects)
        } else {
            None
        }
    }

    pub fn uses_depth(&self) -> bool {
        self.modalities.contains(&ExtraModality::Depth)
    }

    /// Every relation this configuration can produce, in id order.
    pub fn relations(&self) -> Vec<Relation> {
        use EdgeKind::*;
        use NodeType::*;
        let mut out = Vec::new();
        let temporal = |ty: NodeType, d: Directions, out: &mut Vec<Relation>| {
            for (on, kind) in [(d.fwd, TemporalFwd), (d.bwd, TemporalBwd), (d.und, TemporalUnd)] {
                if on {
                    out.push(Relation::new(ty, kind, ty));
                }
            }
        };
        temporal(VisionEgo, self.temporal, &mut out);
        let multi = self.views == ViewMode::MultiView;
        if multi {
            temporal(VisionExo, self.exo_temporal, &mut out);
            if self.ego_exo.fwd || self.ego_exo.und {
                out.push(Relation::new(VisionExo, CrossViewEgoExo, VisionEgo));
            }
            if self.ego_exo.bwd || self.ego_exo.und {
                out.push(Relation::new(VisionEgo, CrossViewEgoExo, VisionExo));
            }
            if !self.exo_exo.is_empty() {
                out.push(Relation::new(VisionExo, ExoExo, VisionExo));
            }
        }
        let mut types = vec![VisionEgo];
        if multi {
            types.push(VisionExo);
        }
        if self.uses_depth() {
            types.push(Depth);
            let e = self.depth_edges;
            if e.to_vision {
                out.push(Relation::new(Depth, ModalityToVision, VisionEgo));
                if multi {
                    out.push(Relation::new(Depth, ModalityToVision, VisionExo));
                }
            }
            if e.cross_view && multi {
                out.push(Relation::new(Depth, DepthCrossView, Depth));
            }
            if e.temporal {
                out.push(Relation::new(Depth, DepthTemporal, Depth));
            }
        }
        if self.text_source().is_some() {
            types.push(Text);
            out.push(Relation::new(Text, ModalityToVision, VisionEgo));
        }
        if self.self_loops {
            for ty in types {
                out.push(Relation::new(ty, SelfLoop, ty));
            }
        }
        out.sort();
        out.dedup();
        out
    }
}

fn add_temporal(
    b: &mut GraphBuilder,
    ty: NodeType,
    nodes: &[NodeId],
    d: Directions,
) -> Result<()> {
    for w in nodes.windows(2) {
        let (a, c) = (w[0], w[1]);
        if d.fwd {
            b.add_arc(Relation::new(ty, EdgeKind::TemporalFwd, ty), a, c)?;
        }
        if d.bwd {
            b.add_arc(Relation::new(ty, EdgeKind::TemporalBwd, ty), c, a)?;
        }
        if d.und {
            let r = Relation::new(ty, EdgeKind::TemporalUnd, ty);
            b.add_arc(r, a, c)?;
            b.add_arc(r, c, a)?;
        }
    }
    Ok(())
}

fn add_self_loops(b: &mut GraphBuilder, ty: NodeType, nodes: &[NodeId]) -> Result<()> {
    let r = Relation::new(ty, EdgeKind::SelfLoop, ty);
    for &n in nodes {
        b.add_arc(r, n, n)?;
    }
    Ok(())
}

fn add_vision_view(
    b: &mut GraphBuilder,
    take: &TakeRecord,
    view: &ViewRecord,
    ty: NodeType,
) -> Result<Vec<NodeId>> {
    take.segments
        .iter()
        .enumerate()
        .map(|(s, seg)| {
            let feat = pool_segment_features(&view.vision, seg.start_s, seg.end_s).map_err(|e| match e {
                Error::Ingestion { message, .. } => Error::ingestion(
                    &take.take_id,
                    format!("views[{}].vision", view.view_id),
                    message,
                ),
                other => other,
            })?;
            b.add_node(ty, view.view_id, s as u32, &feat, Some(seg.class_id))
        })
        .collect()
}

fn check_take(take: &TakeRecord, cfg: &BuildConfig) -> Result<()> {
    cfg.validate()?;
    take.validate(&cfg.dims, cfg.num_classes)?;
    if take.segments.is_empty() {
        return Err(Error::ingestion(&take.take_id, "segments", "take has no segments"));
    }
    Ok(())
}

/// One ego vision node per segment with temporal arcs and optional
/// self-loops.
pub fn build_ego_graph(take: &TakeRecord, cfg: &BuildConfig) -> Result<HeteroGraph> {
    if cfg.views != ViewMode::EgoOnly {
        return Err(Error::Config("build_ego_graph requires views = ego-only".into()));
    }
    check_take(take, cfg)?;
    let ego = take.ego_view().expect("validated");
    let mut b = GraphBuilder::new(&take.take_id, cfg.num_classes, cfg.dims);
    let nodes = add_vision_view(&mut b, take, ego, NodeType::VisionEgo)?;
    add_temporal(&mut b, NodeType::VisionEgo, &nodes, cfg.temporal)?;
    if cfg.self_loops {
        add_self_loops(&mut b, NodeType::VisionEgo, &nodes)?;
    }
    b.finalize()
}

/// Ego and exo vision nodes for every segment, with temporal, cross-view and
/// exo-exo arcs per configuration.
pub fn build_multiview_graph(take: &TakeRecord, cfg: &BuildConfig) -> Result<HeteroGraph> {
    if cfg.views != ViewMode::MultiView {
        return Err(Error::Config("build_multiview_graph requires views = multi-view".into()));
    }
    check_take(take, cfg)?;
    let ego = take.ego_view().expect("validated");
    let exo = take.exo_views();
    let mut b = GraphBuilder::new(&take.take_id, cfg.num_classes, cfg.dims);
    let ego_nodes = add_vision_view(&mut b, take, ego, NodeType::VisionEgo)?;
    let exo_nodes = exo
        .iter()
        .map(|v| add_vision_view(&mut b, take, v, NodeType::VisionExo))
        .collect::<Result<Vec<_>>>()?;

    add_temporal(&mut b, NodeType::VisionEgo, &ego_nodes, cfg.temporal)?;
    for nodes in &exo_nodes {
        add_temporal(&mut b, NodeType::VisionExo, nodes, cfg.exo_temporal)?;
    }

    let to_ego = Relation::new(NodeType::VisionExo, EdgeKind::CrossViewEgoExo, NodeType::VisionEgo);
    let from_ego = Relation::new(NodeType::VisionEgo, EdgeKind::CrossViewEgoExo, NodeType::VisionExo);
    let exo_exo = Relation::new(NodeType::VisionExo, EdgeKind::ExoExo, NodeType::VisionExo);
    for (s, &e) in ego_nodes.iter().enumerate() {
        for nodes in &exo_nodes {
            let x = nodes[s];
            if cfg.ego_exo.fwd {
                b.add_arc(to_ego, x, e)?;
            }
            if cfg.ego_exo.bwd {
                b.add_arc(from_ego, e, x)?;
            }
            if cfg.ego_exo.und {
                b.add_arc(to_ego, x, e)?;
                b.add_arc(from_ego, e, x)?;
            }
        }
        for i in 0..exo_nodes.len() {
            for j in i + 1..exo_nodes.len() {
                let (lo, hi) = (exo_nodes[i][s], exo_nodes[j][s]);
                if cfg.exo_exo.fwd {
                    b.add_arc(exo_exo, lo, hi)?;
                }
                if cfg.exo_exo.bwd {
                    b.add_arc(exo_exo, hi, lo)?;
                }
                if cfg.exo_exo.und {
                    b.add_arc(exo_exo, lo, hi)?;
                    b.add_arc(exo_exo, hi, lo)?;
                }
            }
        }
    }
    if cfg.self_loops {
        add_self_loops(&mut b, NodeType::VisionEgo, &ego_nodes)?;
        for nodes in &exo_nodes {
            add_self_loops(&mut b, NodeType::VisionExo, nodes)?;
        }
    }
    b.finalize()
}

fn vision_index(g: &HeteroGraph, ty: NodeType) -> HashMap<(u32, u32), usize> {
    let t = g.table(ty);
    (0..t.len()).map(|i| ((t.views()[i], t.segments()[i]), i)).collect()
}

/// Adds one depth node per vision node with cross-view, depth-to-vision and
/// depth-temporal arcs per `cfg.depth_edges`.
pub fn attach_depth_nodes(g: &HeteroGraph, take: &TakeRecord, cfg: &BuildConfig) -> Result<HeteroGraph> {
    let mut b = g.to_builder();
    let ego_view = take
        .ego_view()
        .ok_or_else(|| Error::ingestion(&take.take_id, "views", "no ego view"))?
        .view_id;
    let views: HashMap<u32, &ViewRecord> = take.views.iter().map(|v| (v.view_id, v)).collect();
    let edges = cfg.depth_edges;

    // (view, segment) -> depth node, in vision-table order
    let mut depth_nodes: Vec<(u32, u32, NodeId, NodeId)> = Vec::new();
    for ty in [NodeType::VisionEgo, NodeType::VisionExo] {
        let t = g.table(ty);
        for i in 0..t.len() {
            let (view, seg) = (t.views()[i], t.segments()[i]);
            let missing = || {
                Error::ingestion(
                    &take.take_id,
                    format!("depth[view={view}, segment={seg}]"),
                    "missing depth feature",
                )
            };
            let feats = views
                .get(&view)
                .and_then(|v| v.depth.as_ref())
                .filter(|d| (seg as usize) < d.rows())
                .ok_or_else(missing)?;
            let d = b.add_node(NodeType::Depth, view, seg, feats.row(seg as usize), None)?;
            depth_nodes.push((view, seg, d, NodeId { ty, index: i }));
        }
    }

    let by_key: HashMap<(u32, u32), NodeId> = depth_nodes.iter().map(|&(v, s, d, _)| ((v, s), d)).collect();
    for &(view, seg, d, vision) in &depth_nodes {
        if edges.to_vision {
            b.add_arc(Relation::new(NodeType::Depth, EdgeKind::ModalityToVision, vision.ty), d, vision)?;
        }
        if edges.cross_view && view != ego_view {
            if let Some(&ego_d) = by_key.get(&(ego_view, seg)) {
                b.add_arc(Relation::new(NodeType::Depth, EdgeKind::DepthCrossView, NodeType::Depth), d, ego_d)?;
            }
        }
        if edges.temporal {
            if let Some(&next) = by_key.get(&(view, seg + 1)) {
                b.add_arc(Relation::new(NodeType::Depth, EdgeKind::DepthTemporal, NodeType::Depth), d, next)?;
            }
        }
        if cfg.self_loops {
            b.add_arc(Relation::new(NodeType::Depth, EdgeKind::SelfLoop, NodeType::Depth), d, d)?;
        }
    }
    b.finalize()
}

/// Adds one text node per segment connected to the segment's ego vision node.
pub fn attach_text_nodes(
    g: &HeteroGraph,
    take: &TakeRecord,
    source: TextSource,
    cfg: &BuildConfig,
) -> Result<HeteroGraph> {
    let feats = match source {
        TextSource::Narration => take.text.as_ref(),
        TextSource::Objects => take.objects.as_ref(),
    };
    if take.segments.is_empty() {
        return Ok(g.clone());
    }
    let field = match source {
        TextSource::Narration => "text",
        TextSource::Objects => "objects",
    };
    let feats: &Tensor = feats
        .filter(|f| f.rows() == take.segments.len())
        .ok_or_else(|| Error::ingestion(&take.take_id, field, "missing per-segment text features"))?;
    let ego_view = take
        .ego_view()
        .ok_or_else(|| Error::ingestion(&take.take_id, "views", "no ego view"))?
        .view_id;
    let ego = vision_index(g, NodeType::VisionEgo);
    let mut b = g.to_builder();
    for s in 0..take.segments.len() {
        let Some(&v) = ego.get(&(ego_view, s as u32)) else {
            return Err(Error::GraphIntegrity(format!("no ego vision node for segment {s}")));
        };
        let t = b.add_node(NodeType::Text, ego_view, s as u32, feats.row(s), None)?;
        let vision = NodeId {
            ty: NodeType::VisionEgo,
            index: v,
        };
        b.add_arc(Relation::new(NodeType::Text, EdgeKind::ModalityToVision, NodeType::VisionEgo), t, vision)?;
        if cfg.self_loops {
            b.add_arc(Relation::new(NodeType::Text, EdgeKind::SelfLoop, NodeType::Text), t, t)?;
        }
    }
    b.finalize()
}

/// Full construction: vision graph for `cfg.views` plus configured modalities.
pub fn build_graph(take: &TakeRecord, cfg: &BuildConfig) -> Result<HeteroGraph> {
    let mut g = match cfg.views {
        ViewMode::EgoOnly => build_ego_graph(take, cfg)?,
        ViewMode::MultiView => build_multiview_graph(take, cfg)?,
    };
    if cfg.uses_depth() {
        g = attach_depth_nodes(&g, take, cfg)?;
    }
    if let Some(src) = cfg.text_source() {
        g = attach_text_nodes(&g, take, src, cfg)?;
    }
    Ok(g)
}

/// What survives in the test-time graph.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InferenceMode {
    /// Ego vision nodes plus the ego-side text and depth nodes.
    #[default]
    EgoWithModalities,
    /// Ego vision nodes and temporal arcs only.
    VisionOnly,
}

/// Drops exocentric nodes and every arc that needs them.
pub fn extract_inference_graph(g: &HeteroGraph, mode: InferenceMode) -> HeteroGraph {
    let ego_views: Vec<u32> = {
        let mut v = g.table(NodeType::VisionEgo).views().to_vec();
        v.sort_unstable();
        v.dedup();
        v
    };
    let keep_node = |ty: NodeType, view: u32| match (ty, mode) {
        (NodeType::VisionEgo, _) => true,
        (NodeType::VisionExo, _) => false,
        (_, InferenceMode::VisionOnly) => false,
        (NodeType::Text, _) => true,
        (NodeType::Depth, _) => ego_views.binary_search(&view).is_ok(),
    };
    let keep_rel = |r: Relation| {
        r.kind.is_temporal()
            || matches!(
                r.kind,
                EdgeKind::SelfLoop | EdgeKind::ModalityToVision | EdgeKind::DepthTemporal
            )
    };
    filter_subgraph_by(g, keep_node, keep_rel).0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn directions_serialize_as_lists() {
        let d = Directions {
            fwd: true,
            bwd: false,
            und: true,
        };
        let s = serde_json::to_string(&d).unwrap();
        assert_eq!(s, r#"["fwd","und"]"#);
        assert_eq!(serde_json::from_str::<Directions>(&s).unwrap(), d);
    }

    #[test]
    fn config_requires_ego_temporal() {
        let cfg = BuildConfig {
            temporal: Directions::NONE,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = BuildConfig {
            modalities: vec![ExtraModality::Depth, ExtraModality::Text],
            ..Default::default()
        };
        let back: BuildConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let partial: BuildConfig = serde_json::from_str(r#"{"views": "ego-only"}"#).unwrap();
        assert_eq!(partial.views, ViewMode::EgoOnly);
        assert!(partial.self_loops);
    }
}
