mod common;

use common::{small_dims, take};
use maglev::builder::{
    attach_depth_nodes, attach_text_nodes, build_ego_graph, build_graph, build_multiview_graph,
    extract_inference_graph, BuildConfig, DepthEdges, Direction, Directions, ExtraModality,
    InferenceMode, TextSource, ViewMode,
};
use maglev::graph::{EdgeKind, GraphBuilder, HeteroGraph, NodeType};
use maglev::Error;
use proptest::prelude::*;

fn cfg(views: ViewMode) -> BuildConfig {
    BuildConfig {
        views,
        num_classes: 5,
        dims: small_dims(),
        ..Default::default()
    }
}

fn kind_count(g: &HeteroGraph, kind: EdgeKind) -> usize {
    g.arcs_of_kind(kind)
}

#[test]
fn ego_graph_counts() {
    let t = take("t", 3, 0, 5, small_dims(), 1);
    let g = build_ego_graph(&t, &cfg(ViewMode::EgoOnly)).unwrap();
    assert_eq!(g.num_nodes(NodeType::VisionEgo), 3);
    assert_eq!(kind_count(&g, EdgeKind::TemporalFwd), 2);
    assert_eq!(kind_count(&g, EdgeKind::TemporalBwd), 2);
    assert_eq!(kind_count(&g, EdgeKind::TemporalUnd), 4);
    assert_eq!(kind_count(&g, EdgeKind::SelfLoop), 3);
    assert_eq!(g.num_arcs(), 11);

    let one = build_ego_graph(&take("t", 1, 0, 5, small_dims(), 1), &cfg(ViewMode::EgoOnly)).unwrap();
    assert_eq!((one.total_nodes(), one.num_arcs()), (1, 1));
    assert_eq!(kind_count(&one, EdgeKind::SelfLoop), 1);

    let fwd = BuildConfig {
        temporal: Directions::only(Direction::Fwd),
        self_loops: false,
        ..cfg(ViewMode::EgoOnly)
    };
    let g = build_ego_graph(&t, &fwd).unwrap();
    assert_eq!(g.num_arcs(), 2);
    let csr = g.csr(g.relations().next().unwrap().0).unwrap();
    assert_eq!(csr.incoming(1), &[0]);
    assert_eq!(csr.incoming(2), &[1]);
}

#[test]
fn ego_graph_labels_and_segments() {
    let t = take("t", 4, 0, 5, small_dims(), 2);
    let g = build_ego_graph(&t, &cfg(ViewMode::EgoOnly)).unwrap();
    let ego = g.table(NodeType::VisionEgo);
    assert_eq!(ego.segments(), &[0, 1, 2, 3]);
    let labels: Vec<_> = t.segments.iter().map(|s| Some(s.class_id)).collect();
    assert_eq!(ego.labels(), labels.as_slice());
}

#[test]
fn empty_take_is_rejected() {
    let mut t = take("t", 2, 0, 5, small_dims(), 1);
    t.segments.clear();
    t.text = None;
    t.objects = None;
    for v in &mut t.views {
        v.depth = None;
    }
    assert!(matches!(
        build_ego_graph(&t, &cfg(ViewMode::EgoOnly)),
        Err(Error::Ingestion { .. })
    ));
}

#[test]
fn multiview_counts() {
    let t = take("t", 3, 2, 5, small_dims(), 3);
    let c = BuildConfig {
        ego_exo: Directions::only(Direction::Und),
        exo_exo: Directions::only(Direction::Und),
        ..cfg(ViewMode::MultiView)
    };
    let g = build_multiview_graph(&t, &c).unwrap();
    assert_eq!(g.num_nodes(NodeType::VisionEgo) + g.num_nodes(NodeType::VisionExo), 9);
    let temporal: usize = [EdgeKind::TemporalFwd, EdgeKind::TemporalBwd, EdgeKind::TemporalUnd]
        .iter()
        .map(|&k| kind_count(&g, k))
        .sum();
    assert_eq!(temporal, 24);
    assert_eq!(kind_count(&g, EdgeKind::SelfLoop), 9);
    assert_eq!(kind_count(&g, EdgeKind::CrossViewEgoExo), 12);
    assert_eq!(kind_count(&g, EdgeKind::ExoExo), 6);
    assert_eq!(g.num_arcs(), 51);
    let exo = g.table(NodeType::VisionExo);
    assert!(exo.labels().iter().all(Option::is_some));
}

#[test]
fn zero_exo_views_equals_ego_build() {
    let t = take("t", 4, 0, 5, small_dims(), 4);
    let multi = build_multiview_graph(&t, &cfg(ViewMode::MultiView)).unwrap();
    let ego = build_ego_graph(&t, &cfg(ViewMode::EgoOnly)).unwrap();
    assert_eq!(multi.to_bytes(), ego.to_bytes());
}

#[test]
fn forward_cross_view_runs_exo_to_ego() {
    let t = take("t", 1, 3, 5, small_dims(), 5);
    let c = BuildConfig {
        ego_exo: Directions::only(Direction::Fwd),
        exo_exo: Directions::NONE,
        self_loops: false,
        ..cfg(ViewMode::MultiView)
    };
    let g = build_multiview_graph(&t, &c).unwrap();
    assert_eq!(g.num_arcs(), 3);
    let (rel, csr) = g.relations().next().unwrap();
    assert_eq!((rel.src, rel.dst), (NodeType::VisionExo, NodeType::VisionEgo));
    assert_eq!(csr.incoming(0), &[0, 1, 2]);
}

#[test]
fn depth_examples() {
    let dims = small_dims();
    let only = |to_vision, cross_view, temporal| BuildConfig {
        temporal: Directions::only(Direction::Fwd),
        exo_temporal: Directions::NONE,
        ego_exo: Directions::NONE,
        exo_exo: Directions::NONE,
        self_loops: false,
        modalities: vec![ExtraModality::Depth],
        depth_edges: DepthEdges {
            cross_view,
            to_vision,
            temporal,
        },
        ..cfg(ViewMode::EgoOnly)
    };

    let t = take("t", 2, 0, 5, dims, 6);
    let c = only(true, false, false);
    let g = build_ego_graph(&t, &c).unwrap();
    let d = attach_depth_nodes(&g, &t, &c).unwrap();
    assert_eq!(d.num_nodes(NodeType::Depth), 2);
    assert_eq!(kind_count(&d, EdgeKind::ModalityToVision), 2);
    assert_eq!(d.num_arcs() - g.num_arcs(), 2);

    let t = take("t", 1, 2, 5, dims, 7);
    let c = BuildConfig {
        views: ViewMode::MultiView,
        ..only(false, true, false)
    };
    let d = build_graph(&t, &c).unwrap();
    assert_eq!(kind_count(&d, EdgeKind::DepthCrossView), 2);
    let ego_depth = d
        .table(NodeType::Depth)
        .views()
        .iter()
        .position(|&v| v == 0)
        .unwrap();
    let csr = d.csr(d.relations().find(|(r, _)| r.kind == EdgeKind::DepthCrossView).unwrap().0).unwrap();
    assert_eq!(csr.incoming(ego_depth).len(), 2);

    let t = take("t", 3, 0, 5, dims, 8);
    let d = build_graph(&t, &only(false, false, true)).unwrap();
    assert_eq!(kind_count(&d, EdgeKind::DepthTemporal), 2);
    let csr = d.csr(d.relations().find(|(r, _)| r.kind == EdgeKind::DepthTemporal).unwrap().0).unwrap();
    assert_eq!(csr.arcs().collect::<Vec<_>>(), vec![(0, 1), (1, 2)]);
}

#[test]
fn missing_depth_names_the_node() {
    let mut t = take("take-9", 2, 1, 5, small_dims(), 9);
    t.views[1].depth = None;
    let c = BuildConfig {
        modalities: vec![ExtraModality::Depth],
        ..cfg(ViewMode::MultiView)
    };
    match build_graph(&t, &c) {
        Err(Error::Ingestion { path, field, .. }) => {
            assert_eq!(path.to_string_lossy(), "take-9");
            assert!(field.contains("view=1") && field.contains("segment=0"), "{field}");
        }
        other => panic!("expected ingestion error, got {other:?}"),
    }
}

#[test]
fn text_examples() {
    let dims = small_dims();
    let c = BuildConfig {
        self_loops: false,
        ..cfg(ViewMode::EgoOnly)
    };
    let t = take("t", 3, 0, 5, dims, 10);
    let g = build_ego_graph(&t, &c).unwrap();
    let x = attach_text_nodes(&g, &t, TextSource::Narration, &c).unwrap();
    assert_eq!(x.num_nodes(NodeType::Text), 3);
    assert_eq!(x.num_arcs() - g.num_arcs(), 3);
    assert_eq!(kind_count(&x, EdgeKind::ModalityToVision), 3);

    let t = take("t", 3, 3, 5, dims, 11);
    let c = BuildConfig {
        modalities: vec![ExtraModality::Objects],
        ..cfg(ViewMode::MultiView)
    };
    let x = build_graph(&t, &c).unwrap();
    assert_eq!(x.num_nodes(NodeType::Text), 3);
    assert_eq!(x.table(NodeType::Text).feature(1), t.objects.as_ref().unwrap().row(1));

    let mut empty_take = take("e", 1, 0, 5, dims, 12);
    empty_take.segments.clear();
    let empty = GraphBuilder::new("e", 5, dims).finalize().unwrap();
    let same = attach_text_nodes(&empty, &empty_take, TextSource::Narration, &c).unwrap();
    assert_eq!(same, empty);

    let mut no_text = take("t", 2, 0, 5, dims, 13);
    no_text.text = None;
    let g = build_ego_graph(&no_text, &cfg(ViewMode::EgoOnly)).unwrap();
    assert!(matches!(
        attach_text_nodes(&g, &no_text, TextSource::Narration, &c),
        Err(Error::Ingestion { .. })
    ));
}

#[test]
fn inference_graph_examples() {
    let t = take("t", 4, 3, 5, small_dims(), 14);
    let multi = cfg(ViewMode::MultiView);
    let g = build_multiview_graph(&t, &multi).unwrap();
    let inf = extract_inference_graph(&g, InferenceMode::EgoWithModalities);
    let ego = build_ego_graph(&t, &multi.ego_restricted()).unwrap();
    assert_eq!(inf.to_bytes(), ego.to_bytes());
    assert_eq!(extract_inference_graph(&ego, InferenceMode::EgoWithModalities), ego);

    let text = BuildConfig {
        modalities: vec![ExtraModality::Text],
        ..multi.clone()
    };
    let g = build_graph(&t, &text).unwrap();
    let inf = extract_inference_graph(&g, InferenceMode::EgoWithModalities);
    assert_eq!(inf.num_nodes(NodeType::VisionExo), 0);
    assert_eq!(inf.num_nodes(NodeType::Text), 4);
    assert_eq!(kind_count(&inf, EdgeKind::ModalityToVision), 4);
    let vision_only = extract_inference_graph(&g, InferenceMode::VisionOnly);
    assert_eq!(vision_only.num_nodes(NodeType::Text), 0);
    assert_eq!(vision_only.to_bytes(), ego.to_bytes());
}

#[test]
fn view_order_in_record_does_not_matter() {
    let t = take("t", 3, 3, 5, small_dims(), 15);
    let mut shuffled = t.clone();
    shuffled.views.reverse();
    let c = BuildConfig {
        modalities: vec![ExtraModality::Depth, ExtraModality::Text],
        ..cfg(ViewMode::MultiView)
    };
    assert_eq!(
        build_graph(&t, &c).unwrap().to_bytes(),
        build_graph(&shuffled, &c).unwrap().to_bytes()
    );
}

#[test]
fn relations_listed_by_config_cover_built_graph() {
    let t = take("t", 3, 2, 5, small_dims(), 16);
    let c = BuildConfig {
        modalities: vec![ExtraModality::Depth, ExtraModality::Text],
        ..cfg(ViewMode::MultiView)
    };
    let g = build_graph(&t, &c).unwrap();
    let declared = c.relations();
    for (rel, _) in g.relations() {
        assert!(declared.contains(&rel), "{rel} missing from config relations");
    }
    assert_eq!(g.relations().count(), declared.len());
}

fn directions() -> impl Strategy<Value = Directions> {
    (any::<bool>(), any::<bool>(), any::<bool>()).prop_map(|(fwd, bwd, und)| Directions { fwd, bwd, und })
}

/// Closed-form arc and node counts for a configuration, per construction
/// rule.
fn expected_counts(n: usize, k: usize, c: &BuildConfig) -> (usize, usize, usize, usize) {
    let per = |d: Directions| d.fwd as usize + d.bwd as usize + 2 * d.und as usize;
    let multi = c.views == ViewMode::MultiView;
    let k = if multi { k } else { 0 };
    let vision = n * (k + 1);
    let mut arcs = (n - 1) * per(c.temporal);
    if multi {
        arcs += k * (n - 1) * per(c.exo_temporal);
        arcs += n * k * per(c.ego_exo);
        arcs += n * (k * k.saturating_sub(1) / 2) * per(c.exo_exo);
    }
    let depth = if c.uses_depth() { vision } else { 0 };
    if depth > 0 {
        let e = c.depth_edges;
        arcs += e.to_vision as usize * vision;
        arcs += (e.cross_view && multi) as usize * n * k;
        arcs += e.temporal as usize * (k + 1) * (n - 1);
    }
    let text = if c.text_source().is_some() { n } else { 0 };
    arcs += text;
    if c.self_loops {
        arcs += vision + depth + text;
    }
    (vision, depth, text, arcs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn counts_match_closed_form(
        n in 1usize..6,
        k in 0usize..5,
        multi in any::<bool>(),
        temporal in directions(),
        exo_temporal in directions(),
        ego_exo in directions(),
        exo_exo in directions(),
        depth in any::<bool>(),
        text in 0u8..3,
        edges in (any::<bool>(), any::<bool>(), any::<bool>()),
        self_loops in any::<bool>(),
        seed in any::<u64>(),
    ) {
        prop_assume!(!temporal.is_empty());
        let mut modalities = Vec::new();
        if depth {
            modalities.push(ExtraModality::Depth);
        }
        match text {
            1 => modalities.push(ExtraModality::Text),
            2 => modalities.push(ExtraModality::Objects),
            _ => {}
        }
        let c = BuildConfig {
            views: if multi { ViewMode::MultiView } else { ViewMode::EgoOnly },
            temporal,
            exo_temporal,
            ego_exo,
            exo_exo,
            modalities,
            depth_edges: DepthEdges { cross_view: edges.0, to_vision: edges.1, temporal: edges.2 },
            self_loops,
            ..cfg(ViewMode::EgoOnly)
        };
        let t = take("p", n, k, 5, small_dims(), seed);
        let g = build_graph(&t, &c).unwrap();
        let (vision, depth, text, arcs) = expected_counts(n, k, &c);
        prop_assert_eq!(g.num_nodes(NodeType::VisionEgo) + g.num_nodes(NodeType::VisionExo), vision);
        prop_assert_eq!(g.num_nodes(NodeType::Depth), depth);
        prop_assert_eq!(g.num_nodes(NodeType::Text), text);
        prop_assert_eq!(g.num_arcs(), arcs);
        for (_, csr) in g.relations() {
            prop_assert_eq!(csr.arcs().count(), csr.num_arcs());
        }

        let inf = extract_inference_graph(&g, InferenceMode::EgoWithModalities);
        let ego = build_graph(&t, &c.ego_restricted()).unwrap();
        prop_assert_eq!(inf.to_bytes(), ego.to_bytes());
    }
}
