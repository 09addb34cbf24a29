use std::collections::BTreeMap;

use super::{Csr, HeteroGraph, NodeTable, NodeType};
use crate::error::{Error, Result};

/// Placement of one member graph inside a [`GraphBatch`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Member {
    pub take_id: String,
    pub offsets: [usize; 4],
    pub counts: [usize; 4],
}

/// Disjoint union of several graphs with recoverable member boundaries.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    graph: HeteroGraph,
    members: Vec<Member>,
}

impl GraphBatch {
    pub fn graph(&self) -> &HeteroGraph {
        &self.graph
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    /// Member index owning node `index` of type `ty`.
    pub fn member_of(&self, ty: NodeType, index: usize) -> Option<usize> {
        let t = ty.index();
        self.members
            .iter()
            .position(|m| index >= m.offsets[t] && index < m.offsets[t] + m.counts[t])
    }

    /// Recovers the member graphs.
    pub fn unbatch(&self) -> Vec<HeteroGraph> {
        self.members.iter().map(|m| self.extract(m)).collect()
    }

    fn extract(&self, m: &Member) -> HeteroGraph {
        let g = &self.graph;
        let tables = NodeType::ALL.map(|ty| {
            let t = ty.index();
            let src = g.table(ty);
            let (lo, n) = (m.offsets[t], m.counts[t]);
            NodeTable {
                dim: src.dim,
                features: src.features[lo * src.dim..(lo + n) * src.dim].to_vec(),
                labels: src.labels[lo..lo + n].to_vec(),
                views: src.views[lo..lo + n].to_vec(),
                segments: src.segments[lo..lo + n].to_vec(),
            }
        });
        let mut relations = BTreeMap::new();
        for (rel, csr) in &g.relations {
            let (dlo, dn) = (m.offsets[rel.dst.index()], m.counts[rel.dst.index()]);
            let slo = m.offsets[rel.src.index()] as u32;
            let start = csr.offsets[dlo];
            let end = csr.offsets[dlo + dn];
            if start == end {
                continue;
            }
            let offsets = csr.offsets[dlo..=dlo + dn].iter().map(|o| o - start).collect();
            let sources = csr.sources[start as usize..end as usize]
                .iter()
                .map(|s| s - slo)
                .collect();
            relations.insert(*rel, Csr { offsets, sources });
        }
        HeteroGraph {
            take_id: m.take_id.clone(),
            num_classes: g.num_classes,
            tables,
            relations,
        }
    }
}

/// Concatenates graphs, offsetting node ids per type. Relation ids are global
/// so they carry over unchanged.
pub fn disjoint_union(graphs: &[&HeteroGraph]) -> Result<GraphBatch> {
    let first = graphs
        .first()
        .ok_or_else(|| Error::InvalidBatch("cannot batch zero graphs".into()))?;
    let dims = first.dims();
    let num_classes = first.num_classes;
    for g in graphs {
        if g.dims() != dims || g.num_classes != num_classes {
            return Err(Error::InvalidBatch(format!(
                "graph {} has dims {:?} / {} classes, expected {:?} / {}",
                g.take_id,
                g.dims(),
                g.num_classes,
                dims,
                num_classes
            )));
        }
    }

    let mut tables: [NodeTable; 4] = NodeType::ALL.map(|ty| NodeTable {
        dim: dims[ty.index()],
        ..Default::default()
    });
    let mut members = Vec::with_capacity(graphs.len());
    for g in graphs {
        let mut offsets = [0; 4];
        let mut counts = [0; 4];
        for ty in NodeType::ALL {
            let t = ty.index();
            offsets[t] = tables[t].len();
            counts[t] = g.tables[t].len();
            let src = &g.tables[t];
            let dst = &mut tables[t];
            dst.features.extend_from_slice(&src.features);
            dst.labels.extend_from_slice(&src.labels);
            dst.views.extend_from_slice(&src.views);
            dst.segments.extend_from_slice(&src.segments);
        }
        members.push(Member {
            take_id: g.take_id.clone(),
            offsets,
            counts,
        });
    }

    let mut relations: BTreeMap<_, Csr> = BTreeMap::new();
    let all_rels: std::collections::BTreeSet<_> =
        graphs.iter().flat_map(|g| g.relations.keys().copied()).collect();
    for rel in all_rels {
        let mut csr = Csr {
            offsets: vec![0],
            sources: Vec::new(),
        };
        for (g, m) in graphs.iter().zip(&members) {
            let slo = m.offsets[rel.src.index()] as u32;
            let base = csr.sources.len() as u32;
            match g.relations.get(&rel) {
                Some(c) => {
                    csr.offsets.extend(c.offsets[1..].iter().map(|o| o + base));
                    csr.sources.extend(c.sources.iter().map(|s| s + slo));
                }
                None => {
                    let n = m.counts[rel.dst.index()];
                    csr.offsets.extend(std::iter::repeat_n(base, n));
                }
            }
        }
        relations.insert(rel, csr);
    }

    Ok(GraphBatch {
        graph: HeteroGraph {
            take_id: members
                .iter()
                .map(|m| m.take_id.as_str())
                .collect::<Vec<_>>()
                .join("+"),
            num_classes,
            tables,
            relations,
        },
        members,
    })
}
