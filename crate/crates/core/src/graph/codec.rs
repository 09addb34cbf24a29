//! Binary graph container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MGLV" | version u32 | take_id (u32 len + utf8) | num_classes u32
//! 4 × node table (VisionEgo, VisionExo, Depth, Text):
//!     dim u32 | count u32 | features f64[count·dim] | labels u32[count] (u32::MAX = none)
//!     | views u32[count] | segments u32[count]
//! relation count u32
//! per relation: relation_id u32 | arc count u32 | offsets u32[dst_count + 1] | sources u32[arcs]
//! crc32 of everything above, u32
//! ```

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Csr, HeteroGraph, NodeTable, NodeType, Relation};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

pub const GRAPH_MAGIC: &[u8; 4] = b"MGLV";
pub const GRAPH_VERSION: u32 = 1;

const NO_LABEL: u32 = u32::MAX;

pub(super) fn encode(g: &HeteroGraph) -> Vec<u8> {
    let mut w = Writer::new(GRAPH_MAGIC, GRAPH_VERSION);
    w.str(&g.take_id);
    w.u32(g.num_classes as u32);
    for t in &g.tables {
        w.u32(t.dim as u32);
        w.u32(t.len() as u32);
        w.f64s(&t.features);
        for l in &t.labels {
            w.u32(l.unwrap_or(NO_LABEL));
        }
        for v in &t.views {
            w.u32(*v);
        }
        for s in &t.segments {
            w.u32(*s);
        }
    }
    w.u32(g.relations.len() as u32);
    for (rel, csr) in &g.relations {
        w.u32(rel.id());
        w.u32(csr.sources.len() as u32);
        for o in &csr.offsets {
            w.u32(*o);
        }
        for s in &csr.sources {
            w.u32(*s);
        }
    }
    w.finish()
}

pub(super) fn decode(bytes: &[u8]) -> Result<HeteroGraph> {
    let mut r = Reader::open(bytes, GRAPH_MAGIC, GRAPH_VERSION)?;
    let take_id = r.str()?;
    let num_classes = r.u32()? as usize;
    let mut tables: [NodeTable; 4] = Default::default();
    for t in &mut tables {
        let dim = r.u32()? as usize;
        let n = r.u32()? as usize;
        t.dim = dim;
        t.features = r.f64s(n * dim)?;
        t.labels = r
            .u32s(n)?
            .into_iter()
            .map(|l| (l != NO_LABEL).then_some(l))
            .collect();
        t.views = r.u32s(n)?;
        t.segments = r.u32s(n)?;
    }
    let nrel = r.u32()? as usize;
    let mut relations = BTreeMap::new();
    for _ in 0..nrel {
        let id = r.u32()?;
        let rel = Relation::from_id(id).ok_or_else(|| Error::Format(format!("unknown relation id {id}")))?;
        let arcs = r.u32()? as usize;
        let num_dst = tables[rel.dst.index()].len();
        let offsets = r.u32s(num_dst + 1)?;
        let sources = r.u32s(arcs)?;
        if offsets.first() != Some(&0)
            || offsets.last().copied() != Some(arcs as u32)
            || offsets.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::Format(format!("relation {rel}: malformed offsets")));
        }
        let num_src = tables[rel.src.index()].len() as u32;
        if sources.iter().any(|&s| s >= num_src) {
            return Err(Error::Format(format!("relation {rel}: source out of range")));
        }
        if relations.insert(rel, Csr { offsets, sources }).is_some() {
            return Err(Error::Format(format!("relation {rel} repeated")));
        }
    }
    r.finish()?;
    Ok(HeteroGraph {
        take_id,
        num_classes,
        tables,
        relations,
    })
}

/// Human-readable metadata written next to a graph container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSidecar {
    pub format: String,
    pub version: u32,
    pub take_ids: Vec<String>,
    pub num_classes: usize,
    pub type_dims: BTreeMap<NodeType, usize>,
    pub node_counts: BTreeMap<NodeType, usize>,
    pub arc_counts: BTreeMap<String, usize>,
}

impl GraphSidecar {
    pub fn of(g: &HeteroGraph) -> Self {
        GraphSidecar {
            format: String::from_utf8_lossy(GRAPH_MAGIC).into_owned(),
            version: GRAPH_VERSION,
            take_ids: vec![g.take_id.clone()],
            num_classes: g.num_classes,
            type_dims: NodeType::ALL.iter().map(|&t| (t, g.table(t).dim)).collect(),
            node_counts: NodeType::ALL.iter().map(|&t| (t, g.num_nodes(t))).collect(),
            arc_counts: g
                .relations
                .iter()
                .map(|(r, c)| (r.to_string(), c.num_arcs()))
                .collect(),
        }
    }
}
