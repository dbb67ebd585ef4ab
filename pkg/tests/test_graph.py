import numpy as np
import pytest
from hypothesis import given, strategies as st

from videograph.errors import (
    FeatureDimensionMismatchError,
    UnknownKeyframeError,
)
from videograph.graph import (
    SUBJECT,
    OBJECT,
    BoundingBox,
    GraphNode,
    InterEdge,
    IntraEdge,
    Tracklet,
    Triplet,
    VideoGraph,
    add_inter_frame_edges,
    build_video_graph,
    filter_groundings,
    filter_ungrounded,
    load_graph,
    merged_edge_pairs,
    save_graph,
    validate_graph,
)
from videograph.structuring import SyntheticFeatureSource
from videograph.verification import hand_scenario


def box(x=1.0, y=1.0, w=5.0, h=5.0, frame=0):
    return BoundingBox(x, y, w, h, frame)


SOURCE = SyntheticFeatureSource(8, seed=1)


class TestTypes:
    def test_triplet_requires_nonempty_phrases(self):
        with pytest.raises(ValueError):
            Triplet("", "holds", "cup", 0)
        with pytest.raises(ValueError):
            Triplet("man", "", "cup", 0)
        with pytest.raises(ValueError):
            Triplet("man", "holds", "cup", -1)

    def test_box_rejects_degenerate_extent(self):
        with pytest.raises(ValueError):
            BoundingBox(0, 0, 0, 5)
        with pytest.raises(ValueError):
            BoundingBox(-1, 0, 5, 5)

    def test_tracklet_requires_increasing_keyframes(self):
        with pytest.raises(ValueError):
            Tracklet(1, ((3, box(frame=3)), (3, box(frame=3))))


class TestFilterUngrounded:
    def test_drops_triplet_missing_any_role(self):
        triplets = [Triplet("man", "cuts", "lime", 0), Triplet("sky", "over", "city", 0)]
        groundings = {(0, SUBJECT): box(), (0, OBJECT): box(10, 10)}
        assert filter_ungrounded(triplets, groundings) == [triplets[0]]

    def test_empty_input(self):
        assert filter_ungrounded([], {}) == []

    def test_fully_grounded_is_identity(self):
        triplets = [
            Triplet("a", "r", "b", 0),
            Triplet("c", "r", "d", 0),
            Triplet("e", "r", "f", 0),
        ]
        groundings = {}
        for i in range(3):
            groundings[(i, SUBJECT)] = box(i)
            groundings[(i, OBJECT)] = box(i + 10)
        assert filter_ungrounded(triplets, groundings) == triplets

    @given(st.lists(st.tuples(st.booleans(), st.booleans()), max_size=12))
    def test_soundness(self, grounded_roles):
        triplets = [Triplet(f"s{i}", "r", f"o{i}", 0) for i in range(len(grounded_roles))]
        groundings = {}
        for i, (has_subject, has_object) in enumerate(grounded_roles):
            if has_subject:
                groundings[(i, SUBJECT)] = box(i)
            if has_object:
                groundings[(i, OBJECT)] = box(i + 100)
        kept = filter_ungrounded(triplets, groundings)
        kept_ids = {triplets.index(t) for t in kept}
        for i in range(len(triplets)):
            both = (i, SUBJECT) in groundings and (i, OBJECT) in groundings
            assert (i in kept_ids) == both

    def test_rekey_compacts_indices(self):
        triplets = [Triplet("a", "r", "b", 0), Triplet("c", "r", "d", 0)]
        groundings = {(1, SUBJECT): box(), (1, OBJECT): box(9, 9)}
        kept, rekeyed = filter_groundings(triplets, groundings)
        assert kept == [triplets[1]]
        assert set(rekeyed) == {(0, SUBJECT), (0, OBJECT)}


class TestBuildVideoGraph:
    def test_empty(self):
        graph = build_video_graph("v", [0], [], {}, [], SOURCE)
        assert graph.nodes == [] and graph.intra_edges == [] and graph.inter_edges == []

    def test_two_keyframe_track(self):
        b_man0, b_cup0 = box(0, 0), box(20, 0)
        b_man1, b_cup1 = box(1, 0), box(21, 0)
        triplets = [Triplet("man", "holds", "cup", 0), Triplet("man", "drinks", "cup", 1)]
        groundings = {
            (0, SUBJECT): b_man0, (0, OBJECT): b_cup0,
            (1, SUBJECT): b_man1, (1, OBJECT): b_cup1,
        }
        tracklets = [Tracklet(7, ((0, b_man0), (1, b_man1)))]
        graph = build_video_graph("v", [0, 1], triplets, groundings, tracklets, SOURCE)
        assert len(graph.nodes) == 4
        assert len(graph.intra_edges) == 2
        assert set(map(tuple, graph.inter_edges)) == {(0, 2, 7), (2, 0, 7)}

    def test_hand_enumerated_scenario(self):
        s = hand_scenario()
        graph = build_video_graph(
            "v", s["keyframes"], s["triplets"], s["groundings"], s["tracklets"], SOURCE
        )
        assert [(n.node_id, n.keyframe, n.label, n.track_id) for n in graph.nodes] == s[
            "expected_nodes"
        ]
        assert [tuple(e) for e in graph.intra_edges] == s["expected_intra"]
        assert set(map(tuple, graph.inter_edges)) == s["expected_inter"]
        assert validate_graph(graph).ok

    def test_same_phrase_same_box_shares_node(self):
        shared = box(5, 5)
        triplets = [Triplet("man", "holds", "cup", 0), Triplet("man", "wears", "hat", 0)]
        groundings = {
            (0, SUBJECT): shared, (0, OBJECT): box(30, 0),
            (1, SUBJECT): shared, (1, OBJECT): box(40, 0),
        }
        graph = build_video_graph("v", [0], triplets, groundings, [], SOURCE)
        assert len(graph.nodes) == 3

    def test_same_phrase_different_box_splits_nodes(self):
        triplets = [Triplet("man", "faces", "man", 0)]
        groundings = {(0, SUBJECT): box(0, 0), (0, OBJECT): box(50, 0)}
        graph = build_video_graph("v", [0], triplets, groundings, [], SOURCE)
        assert len(graph.nodes) == 2

    def test_parallel_predicates_kept(self):
        b1, b2 = box(0, 0), box(30, 0)
        triplets = [Triplet("man", "holds", "cup", 0), Triplet("man", "lifts", "cup", 0)]
        groundings = {
            (0, SUBJECT): b1, (0, OBJECT): b2,
            (1, SUBJECT): b1, (1, OBJECT): b2,
        }
        graph = build_video_graph("v", [0], triplets, groundings, [], SOURCE)
        assert len(graph.nodes) == 2
        assert [e.predicate for e in graph.intra_edges] == ["holds", "lifts"]
        assert merged_edge_pairs(graph) == [(0, 1)]

    def test_unknown_keyframe(self):
        triplets = [Triplet("man", "holds", "cup", 3)]
        groundings = {(0, SUBJECT): box(), (0, OBJECT): box(9, 9)}
        with pytest.raises(UnknownKeyframeError):
            build_video_graph("v", [0, 1], triplets, groundings, [], SOURCE)

    def test_feature_dimension_mismatch(self):
        class BadSource:
            dimension = 8

            def __call__(self, keyframe, b):
                return np.zeros(5)

        triplets = [Triplet("man", "holds", "cup", 0)]
        groundings = {(0, SUBJECT): box(), (0, OBJECT): box(9, 9)}
        with pytest.raises(FeatureDimensionMismatchError):
            build_video_graph("v", [0], triplets, groundings, [], BadSource())

    @given(st.integers(1, 8), st.integers(0, 30))
    def test_node_count_upper_bound(self, keyframe_count, triplet_count):
        rng = np.random.default_rng(triplet_count * 31 + keyframe_count)
        keyframes = list(range(keyframe_count))
        triplets = []
        groundings = {}
        for i in range(triplet_count):
            kf = int(rng.integers(0, keyframe_count))
            triplets.append(Triplet(f"s{rng.integers(0, 4)}", "r", f"o{rng.integers(0, 4)}", kf))
            groundings[(i, SUBJECT)] = box(float(rng.integers(0, 3)) * 10 + 1, 1)
            groundings[(i, OBJECT)] = box(float(rng.integers(0, 3)) * 10 + 1, 50)
        graph = build_video_graph("v", keyframes, triplets, groundings, [], SOURCE)
        assert len(graph.nodes) <= 2 * len(triplets)

    def test_deterministic_serialization(self, tmp_path):
        s = hand_scenario()

        def build_and_save(path):
            graph = build_video_graph(
                "v", s["keyframes"], s["triplets"], s["groundings"], s["tracklets"], SOURCE
            )
            save_graph(graph, path)
            return path.read_bytes(), (path.parent / "g.features.bin").read_bytes()

        a = build_and_save(tmp_path / "a" / "g.graph.json")
        b = build_and_save(tmp_path / "b" / "g.graph.json")
        assert a[0] == b[0]
        assert a[1] == b[1]

    def test_save_load_round_trip(self, tmp_path):
        s = hand_scenario()
        graph = build_video_graph(
            "v", s["keyframes"], s["triplets"], s["groundings"], s["tracklets"], SOURCE
        )
        path = save_graph(graph, tmp_path / "v.graph.json")
        loaded = load_graph(path)
        assert loaded.video_id == graph.video_id
        assert [tuple(e) for e in loaded.intra_edges] == [tuple(e) for e in graph.intra_edges]
        assert [tuple(e) for e in loaded.inter_edges] == [tuple(e) for e in graph.inter_edges]
        for a, b in zip(loaded.nodes, graph.nodes):
            assert (a.node_id, a.keyframe, a.label, a.track_id) == (
                b.node_id, b.keyframe, b.label, b.track_id,
            )
            np.testing.assert_allclose(a.feature, b.feature, atol=1e-7)


class TestInterFrameEdges:
    def _graph_with_track_nodes(self, keyframes, track_id=5):
        nodes = [
            GraphNode(i, kf, "thing", track_id, np.zeros(4)) for i, kf in enumerate(keyframes)
        ]
        return VideoGraph("v", nodes, [], [])

    def test_consecutive_occurrences_only(self):
        graph = self._graph_with_track_nodes([0, 1, 2])
        b = box()
        track = Tracklet(5, ((0, b), (1, b), (2, b)))
        out = add_inter_frame_edges(graph, [track])
        assert set(map(tuple, out.inter_edges)) == {
            (0, 1, 5), (1, 0, 5), (1, 2, 5), (2, 1, 5),
        }

    def test_single_occurrence_yields_nothing(self):
        graph = self._graph_with_track_nodes([0])
        out = add_inter_frame_edges(graph, [Tracklet(5, ((0, box()),))])
        assert out.inter_edges == []

    def test_gap_in_track_is_still_consecutive(self):
        graph = self._graph_with_track_nodes([0, 2])
        out = add_inter_frame_edges(graph, [Tracklet(5, ((0, box()), (2, box())))])
        assert set(map(tuple, out.inter_edges)) == {(0, 1, 5), (1, 0, 5)}

    def test_occurrence_without_node_is_skipped_not_bridged(self):
        # track occurs at 0, 1, 2 but only keyframes 0 and 2 have nodes
        nodes = [
            GraphNode(0, 0, "thing", 5, np.zeros(4)),
            GraphNode(1, 2, "thing", 5, np.zeros(4)),
        ]
        graph = VideoGraph("v", nodes, [], [])
        track = Tracklet(5, ((0, box()), (1, box()), (2, box())))
        out = add_inter_frame_edges(graph, [track])
        assert out.inter_edges == []


class TestValidateGraph:
    def _valid_graph(self):
        nodes = [
            GraphNode(0, 0, "a", 1, np.zeros(4)),
            GraphNode(1, 0, "b", None, np.zeros(4)),
            GraphNode(2, 1, "a", 1, np.zeros(4)),
            GraphNode(3, 1, "c", None, np.zeros(4)),
        ]
        intra = [IntraEdge(0, 1, "r"), IntraEdge(2, 3, "r")]
        inter = [InterEdge(0, 2, 1), InterEdge(2, 0, 1)]
        return VideoGraph("v", nodes, intra, inter)

    def test_valid_graph_empty_report(self):
        assert validate_graph(self._valid_graph()).ok

    def test_missing_reverse_edge_named(self):
        graph = self._valid_graph()
        graph.inter_edges.pop()
        report = validate_graph(graph)
        assert not report.ok
        assert any("no reverse edge" in v and "(0->2" in v for v in report.violations)

    def test_cross_keyframe_intra_edge_flagged(self):
        graph = self._valid_graph()
        graph.intra_edges.append(IntraEdge(0, 2, "bad"))
        report = validate_graph(graph)
        assert any("spans keyframes" in v for v in report.violations)

    def test_track_mismatch_flagged(self):
        graph = self._valid_graph()
        graph.inter_edges.extend([InterEdge(1, 3, 9), InterEdge(3, 1, 9)])
        report = validate_graph(graph)
        assert any("carries track 9" in v for v in report.violations)

    def test_self_loop_flagged(self):
        graph = self._valid_graph()
        graph.intra_edges.append(IntraEdge(1, 1, "loop"))
        report = validate_graph(graph)
        assert any("self-loop" in v for v in report.violations)
