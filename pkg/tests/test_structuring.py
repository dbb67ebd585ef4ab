import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from videograph import formats
from videograph.errors import (
    EmptyInputError,
    FeatureDimensionMismatchError,
    MissingFeatureError,
)
from videograph.graph import SUBJECT, OBJECT, BoundingBox, Tracklet, save_graph
from videograph.structuring import (
    FileFeatureSource,
    FrameDescriptor,
    Scene,
    SyntheticFeatureSource,
    VideoBundle,
    detect_scenes,
    extract_node_features,
    select_keyframes,
    structure_video,
)


class TestDetectScenes:
    def test_constant_video_single_scene(self):
        descriptors = np.tile(np.full(8, 0.5), (20, 1))
        scenes = detect_scenes(descriptors, 0.15, 8)
        assert [(s.start, s.end, s.keyframe) for s in scenes] == [(0, 19, 9)]

    def test_single_jump_two_scenes(self):
        descriptors = np.tile(np.full(8, 0.1), (20, 1))
        descriptors[10:] = 0.9
        scenes = detect_scenes(descriptors, 0.15, 8)
        assert [(s.start, s.end, s.keyframe) for s in scenes] == [(0, 9, 4), (10, 19, 14)]

    def test_min_length_guard_on_alternating_frames(self):
        descriptors = np.array([np.full(4, t % 2) for t in range(12)], dtype=float)
        scenes = detect_scenes(descriptors, 0.15, 3)
        assert [s.start for s in scenes] == [0, 3, 6, 9]
        assert [s.end for s in scenes] == [2, 5, 8, 11]

    def test_empty_input(self):
        with pytest.raises(EmptyInputError):
            detect_scenes(np.zeros((0, 4)), 0.15, 8)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            detect_scenes(np.zeros((5, 4)), 0.0, 8)
        with pytest.raises(ValueError):
            detect_scenes(np.zeros((5, 4)), 0.15, 0)

    def test_accepts_frame_descriptor_objects(self):
        frames = [FrameDescriptor(i, np.full(4, 0.2)) for i in range(10)]
        scenes = detect_scenes(frames, 0.15, 4)
        assert [(s.start, s.end) for s in scenes] == [(0, 9)]

    def test_non_finite_rejected(self):
        descriptors = np.zeros((5, 4))
        descriptors[2, 1] = np.nan
        with pytest.raises(ValueError, match="finite"):
            detect_scenes(descriptors, 0.15, 2)

    @settings(max_examples=40)
    @given(st.integers(1, 60), st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_scenes_partition_frame_range(self, frame_count, min_len, seed):
        rng = np.random.default_rng(seed)
        descriptors = rng.uniform(0, 1, size=(frame_count, 6))
        scenes = detect_scenes(descriptors, 0.2, min_len)
        assert scenes[0].start == 0
        assert scenes[-1].end == frame_count - 1
        for a, b in zip(scenes, scenes[1:]):
            assert b.start == a.end + 1
        for s in scenes:
            assert s.start <= s.keyframe <= s.end
            assert s.keyframe == (s.start + s.end) // 2


class TestSelectKeyframes:
    def test_midpoints(self):
        scenes = [Scene(0, 9, 4), Scene(10, 19, 14)]
        assert select_keyframes(scenes) == [4, 14]

    def test_single_frame_scene(self):
        assert select_keyframes([Scene(5, 5, 5)]) == [5]

    def test_three_scenes(self):
        scenes = [Scene(0, 0, 0), Scene(1, 2, 1), Scene(3, 6, 4)]
        assert select_keyframes(scenes) == [0, 1, 4]

    def test_monotonicity_enforced(self):
        overlapping = [Scene(0, 9, 5), Scene(3, 19, 4)]
        with pytest.raises(ValueError, match="strictly increasing"):
            select_keyframes(overlapping)


class TestFeatureSources:
    def test_synthetic_deterministic(self):
        source = SyntheticFeatureSource(16, seed=9)
        b = BoundingBox(1.5, 2.5, 3.0, 4.0, 2)
        np.testing.assert_array_equal(source(2, b), source(2, b))

    def test_synthetic_unit_norm(self):
        source = SyntheticFeatureSource(64, seed=9)
        for i in range(5):
            v = source(i, BoundingBox(i + 1.0, 2.0, 3.0, 4.0, i))
            assert abs(np.linalg.norm(v) - 1.0) < 1e-12

    def test_synthetic_distinct_keys_differ(self):
        source = SyntheticFeatureSource(16, seed=9)
        a = source(0, BoundingBox(1, 2, 3, 4, 0))
        b = source(1, BoundingBox(1, 2, 3, 4, 1))
        assert not np.array_equal(a, b)

    def test_file_backed_round_trip(self, tmp_path):
        box = BoundingBox(1.25, 2.5, 3.0, 4.0, 3)
        stored = np.arange(8, dtype=np.float64) / 7.0
        path = tmp_path / "features.bin"
        formats.write_node_features(path, [(3, box.key(), stored)], 8)
        source = FileFeatureSource(path)
        got = source(3, box)
        np.testing.assert_array_equal(got, stored.astype(np.float32).astype(np.float64))

    def test_file_backed_missing_key(self, tmp_path):
        path = tmp_path / "features.bin"
        formats.write_node_features(path, [], 8)
        source = FileFeatureSource(path)
        with pytest.raises(MissingFeatureError, match="keyframe 4"):
            source(4, BoundingBox(1, 2, 3, 4, 4))

    def test_extract_checks_dimension(self):
        class Lying:
            dimension = 8

            def __call__(self, keyframe, box):
                return np.zeros(4)

        with pytest.raises(FeatureDimensionMismatchError):
            extract_node_features(0, BoundingBox(1, 1, 2, 2, 0), Lying())


def two_scene_bundle(source):
    """20 frames with one cut at frame 10 -> keyframes 4 and 14.

    Hand enumeration: keyframe 4 has (man, cuts, lime) and (man, holds, knife)
    -> nodes man/lime/knife; keyframe 14 has (man, washes, board) -> nodes
    man/board. The man is tracked across both keyframes: 5 nodes, 3 intra
    edges, 2 inter edges.
    """
    descriptors = np.tile(np.full(6, 0.1), (20, 1))
    descriptors[10:] = 0.9
    man4, man14 = BoundingBox(10, 10, 40, 80, 4), BoundingBox(12, 10, 40, 80, 14)
    lime4 = BoundingBox(60, 30, 10, 10, 4)
    knife4 = BoundingBox(80, 30, 8, 20, 4)
    board14 = BoundingBox(50, 60, 60, 30, 14)
    captions = [
        (4, "A man cuts a lime. A man holds a knife."),
        (14, "A man washes a board."),
    ]
    groundings = {
        (0, SUBJECT): man4, (0, OBJECT): lime4,
        (1, SUBJECT): man4, (1, OBJECT): knife4,
        (2, SUBJECT): man14, (2, OBJECT): board14,
    }
    tracklets = [Tracklet(1, ((4, man4), (14, man14)))]
    return VideoBundle(
        video_id="two-scene",
        feature_source=source,
        descriptors=descriptors,
        captions=captions,
        groundings=groundings,
        tracklets=tracklets,
    )


class TestStructureVideo:
    source = SyntheticFeatureSource(12, seed=4)

    def test_two_scene_bundle_matches_hand_enumeration(self):
        graph = structure_video(two_scene_bundle(self.source))
        assert [(n.node_id, n.keyframe, n.label, n.track_id) for n in graph.nodes] == [
            (0, 4, "man", 1),
            (1, 4, "lime", None),
            (2, 4, "knife", None),
            (3, 14, "man", 1),
            (4, 14, "board", None),
        ]
        assert [tuple(e) for e in graph.intra_edges] == [
            (0, 1, "cuts"), (0, 2, "holds"), (3, 4, "washes"),
        ]
        assert set(map(tuple, graph.inter_edges)) == {(0, 3, 1), (3, 0, 1)}

    def test_zero_grounded_triplets_gives_empty_graph(self):
        bundle = two_scene_bundle(self.source)
        bundle.groundings = {}
        graph = structure_video(bundle)
        assert graph.nodes == [] and graph.intra_edges == [] and graph.inter_edges == []

    def test_precomputed_scenes_path_matches_descriptor_path(self, tmp_path):
        by_descriptors = structure_video(two_scene_bundle(self.source))

        bundle = two_scene_bundle(self.source)
        bundle.scenes = [Scene(0, 9, 4), Scene(10, 19, 14)]
        bundle.descriptors = None
        by_scenes = structure_video(bundle)

        a = save_graph(by_descriptors, tmp_path / "a" / "v.graph.json")
        b = save_graph(by_scenes, tmp_path / "b" / "v.graph.json")
        assert a.read_bytes() == b.read_bytes()
        assert (a.parent / "v.features.bin").read_bytes() == (
            b.parent / "v.features.bin"
        ).read_bytes()

    def test_precomputed_triplets_path(self):
        bundle = two_scene_bundle(self.source)
        parsed = structure_video(bundle)

        from videograph.captions import parse_caption

        triplets = []
        for kf, text in bundle.captions:
            triplets.extend(parse_caption(text, kf).triplets)
        bundle2 = two_scene_bundle(self.source)
        bundle2.captions = None
        bundle2.triplets = triplets
        direct = structure_video(bundle2)
        assert [tuple(e) for e in direct.intra_edges] == [
            tuple(e) for e in parsed.intra_edges
        ]

    def test_bundle_without_inputs_rejected(self):
        bundle = two_scene_bundle(self.source)
        bundle.descriptors = None
        with pytest.raises(ValueError, match="neither"):
            structure_video(bundle)
        bundle = two_scene_bundle(self.source)
        bundle.captions = None
        with pytest.raises(ValueError, match="neither"):
            structure_video(bundle)
