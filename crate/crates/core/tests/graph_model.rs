mod common;

use common::{small_dims, take};
use maglev::builder::{build_graph, BuildConfig, ExtraModality, ViewMode};
use maglev::graph::{
    disjoint_union, filter_subgraph, EdgeKind, GraphBuilder, HeteroGraph, NodeId, NodeType, Relation,
    TypeDims, GRAPH_MAGIC,
};
use maglev::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn dims() -> TypeDims {
    small_dims()
}

fn fwd() -> Relation {
    Relation::new(NodeType::VisionEgo, EdgeKind::TemporalFwd, NodeType::VisionEgo)
}

fn ego_chain(id: &str, n: usize) -> HeteroGraph {
    let mut b = GraphBuilder::new(id, 5, dims());
    let nodes: Vec<_> = (0..n)
        .map(|s| {
            b.add_node(NodeType::VisionEgo, 0, s as u32, &[s as f64; 4], Some(s as u32 % 5))
                .unwrap()
        })
        .collect();
    for w in nodes.windows(2) {
        b.add_arc(fwd(), w[0], w[1]).unwrap();
    }
    b.finalize().unwrap()
}

fn rich(id: &str, seed: u64) -> HeteroGraph {
    let c = BuildConfig {
        views: ViewMode::MultiView,
        modalities: vec![ExtraModality::Depth, ExtraModality::Text],
        num_classes: 5,
        dims: dims(),
        ..Default::default()
    };
    build_graph(&take(id, 3, 2, 5, dims(), seed), &c).unwrap()
}

#[test]
fn add_node_examples() {
    let mut b = GraphBuilder::new("t", 5, dims());
    let first = b.add_node(NodeType::VisionEgo, 0, 0, &[0.0; 4], Some(1)).unwrap();
    assert_eq!(first.index, 0);
    assert!(matches!(
        b.add_node(NodeType::VisionEgo, 0, 0, &[0.0; 4], Some(1)),
        Err(Error::DuplicateNode { .. })
    ));
    assert!(matches!(
        b.add_node(NodeType::VisionEgo, 0, 1, &[0.0; 3], None),
        Err(Error::Dimension { .. })
    ));
    b.add_node(NodeType::VisionEgo, 0, 1, &[0.0; 4], None).unwrap();
    b.add_node(NodeType::VisionEgo, 0, 2, &[0.0; 4], None).unwrap();
    let g = b.finalize().unwrap();
    assert_eq!(g.table(NodeType::VisionEgo).segments(), &[0, 1, 2]);
}

#[test]
fn add_arc_examples() {
    let mut b = GraphBuilder::new("t", 5, dims());
    let a = b.add_node(NodeType::VisionEgo, 0, 0, &[0.0; 4], None).unwrap();
    let c = b.add_node(NodeType::VisionEgo, 0, 1, &[0.0; 4], None).unwrap();
    let x = b.add_node(NodeType::VisionExo, 1, 0, &[0.0; 4], None).unwrap();
    let selfloop = Relation::new(NodeType::VisionEgo, EdgeKind::SelfLoop, NodeType::VisionEgo);
    assert!(matches!(b.add_arc(selfloop, a, c), Err(Error::GraphIntegrity(_))));
    assert!(matches!(b.add_arc(fwd(), a, x), Err(Error::GraphIntegrity(_))));
    let missing = NodeId {
        ty: NodeType::VisionEgo,
        index: 7,
    };
    assert!(matches!(b.add_arc(fwd(), a, missing), Err(Error::GraphIntegrity(_))));
    b.add_arc(fwd(), a, c).unwrap();
    let g = b.finalize().unwrap();
    let csr = g.csr(fwd()).unwrap();
    assert_eq!(csr.incoming(1), &[0]);
    assert!(csr.incoming(0).is_empty());
}

#[test]
fn finalize_examples() {
    let g = GraphBuilder::new("empty", 5, dims()).finalize().unwrap();
    assert_eq!((g.total_nodes(), g.num_arcs()), (0, 0));

    let mut b = GraphBuilder::new("t", 5, dims());
    b.add_node(NodeType::VisionEgo, 0, 0, &[0.0; 4], Some(9)).unwrap();
    b.push_arc_unchecked(fwd(), 0, 4);
    match b.finalize() {
        Err(Error::Validation(problems)) => {
            assert_eq!(problems.len(), 2, "{problems:?}");
            assert!(problems.iter().any(|p| p.contains("label 9")));
            assert!(problems.iter().any(|p| p.contains("arc #0") && p.contains("dangling")));
        }
        other => panic!("expected validation report, got {other:?}"),
    }
}

#[test]
fn union_examples() {
    let g1 = ego_chain("a", 3);
    let g2 = ego_chain("b", 4);
    let one = disjoint_union(&[&g1]).unwrap();
    assert_eq!(one.graph().to_bytes(), g1.to_bytes());

    let batch = disjoint_union(&[&g1, &g2]).unwrap();
    let g = batch.graph();
    assert_eq!(g.num_nodes(NodeType::VisionEgo), 7);
    assert_eq!(batch.members()[1].offsets[NodeType::VisionEgo.index()], 3);
    let arcs: Vec<_> = g.csr(fwd()).unwrap().arcs().collect();
    assert_eq!(arcs, vec![(0, 1), (1, 2), (3, 4), (4, 5), (5, 6)]);
    assert_eq!(batch.unbatch(), vec![g1.clone(), g2]);

    let other = GraphBuilder::new("c", 6, dims()).finalize().unwrap();
    assert!(matches!(disjoint_union(&[&g1, &other]), Err(Error::InvalidBatch(_))));
    assert!(matches!(disjoint_union(&[]), Err(Error::InvalidBatch(_))));
}

#[test]
fn filter_examples() {
    let g = rich("t", 1);
    let (all, map) = filter_subgraph(&g, &NodeType::ALL, &EdgeKind::ALL);
    assert!(map.is_identity());
    assert_eq!(all, g);

    let (none, _) = filter_subgraph(&g, &[], &[]);
    assert_eq!((none.total_nodes(), none.num_arcs()), (0, 0));

    let kinds = [
        EdgeKind::TemporalFwd,
        EdgeKind::TemporalBwd,
        EdgeKind::TemporalUnd,
        EdgeKind::SelfLoop,
    ];
    let (ego, map) = filter_subgraph(&g, &[NodeType::VisionEgo], &kinds);
    assert_eq!(ego.total_nodes(), 3);
    assert!(ego.relations().all(|(r, _)| r.src == NodeType::VisionEgo && r.dst == NodeType::VisionEgo));
    let exo0 = NodeId {
        ty: NodeType::VisionExo,
        index: 0,
    };
    assert_eq!(map.get(exo0), None);
}

#[test]
fn codec_round_trip_and_corruption() {
    let g = rich("take-1", 2);
    let bytes = g.to_bytes();
    assert_eq!(&bytes[..4], GRAPH_MAGIC);
    let back = HeteroGraph::from_bytes(&bytes).unwrap();
    assert_eq!(back, g);
    assert_eq!(back.to_bytes(), bytes);

    let mut flipped = bytes.clone();
    flipped[20] ^= 1;
    assert!(matches!(HeteroGraph::from_bytes(&flipped), Err(Error::Format(_))));
    assert!(matches!(HeteroGraph::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
    let mut magic = bytes.clone();
    magic[0] = b'X';
    assert!(matches!(HeteroGraph::from_bytes(&magic), Err(Error::Format(_))));

    let side = g.sidecar();
    assert_eq!(side.take_ids, vec!["take-1".to_string()]);
    assert_eq!(side.node_counts[&NodeType::Depth], 9);
    let json = serde_json::to_value(&side).unwrap();
    assert_eq!(json["num_classes"], 5);
}

#[test]
fn relation_ids_are_dense_and_stable() {
    let mut seen = vec![false; Relation::COUNT];
    for src in NodeType::ALL {
        for kind in EdgeKind::ALL {
            for dst in NodeType::ALL {
                let r = Relation::new(src, kind, dst);
                let id = r.id() as usize;
                assert!(!seen[id]);
                seen[id] = true;
                assert_eq!(Relation::from_id(r.id()), Some(r));
            }
        }
    }
    assert!(seen.into_iter().all(|s| s));
    assert_eq!(Relation::from_id(Relation::COUNT as u32), None);
}

fn rebuild_shuffled(g: &HeteroGraph, seed: u64) -> HeteroGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = GraphBuilder::new(g.take_id(), g.num_classes(), dims());
    for ty in NodeType::ALL {
        let t = g.table(ty);
        for i in 0..t.len() {
            b.add_node(ty, t.views()[i], t.segments()[i], t.feature(i), t.labels()[i]).unwrap();
        }
    }
    let mut arcs: Vec<_> = g
        .relations()
        .flat_map(|(r, c)| c.arcs().map(move |(s, d)| (r, s, d)).collect::<Vec<_>>())
        .collect();
    arcs.shuffle(&mut rng);
    for (r, s, d) in arcs {
        b.add_arc(r, NodeId { ty: r.src, index: s }, NodeId { ty: r.dst, index: d }).unwrap();
    }
    b.finalize().unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn finalize_ignores_arc_order(seed in any::<u64>()) {
        let g = rich("p", seed);
        let again = rebuild_shuffled(&g, seed ^ 0x5555);
        prop_assert_eq!(again.to_bytes(), g.to_bytes());
        let twice = again.to_builder().finalize().unwrap();
        prop_assert_eq!(twice, again);
    }

    #[test]
    fn union_then_unbatch_is_identity(seeds in prop::collection::vec(any::<u64>(), 1..5)) {
        let graphs: Vec<_> = seeds.iter().enumerate().map(|(i, &s)| rich(&format!("g{i}"), s)).collect();
        let refs: Vec<_> = graphs.iter().collect();
        let batch = disjoint_union(&refs).unwrap();
        prop_assert_eq!(batch.unbatch(), graphs.clone());
        let g = batch.graph();
        for (rel, csr) in g.relations() {
            for (s, d) in csr.arcs() {
                prop_assert_eq!(batch.member_of(rel.src, s), batch.member_of(rel.dst, d));
            }
        }
    }
}
