from pathlib import Path

import pytest

from videograph import formats
from videograph.config import PipelineConfig
from videograph.corpus import (
    bundle_from_corpus,
    generate_corpus,
    load_groundings,
    load_tracklets,
    load_triplets,
    manifest,
)
from videograph.graph import SUBJECT, OBJECT, save_graph, validate_graph
from videograph.structuring import structure_video


def tree_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


class TestGenerateCorpus:
    def test_same_seed_is_byte_identical(self, tmp_path):
        a = generate_corpus(tmp_path / "a", seed=3, video_count=3, d_node=16)
        b = generate_corpus(tmp_path / "b", seed=3, video_count=3, d_node=16)
        assert tree_bytes(a) == tree_bytes(b)

    def test_different_seed_differs(self, tmp_path):
        a = generate_corpus(tmp_path / "a", seed=3, video_count=2, d_node=16)
        b = generate_corpus(tmp_path / "b", seed=4, video_count=2, d_node=16)
        assert tree_bytes(a) != tree_bytes(b)

    def test_zero_videos_empty_manifest(self, tmp_path):
        out = generate_corpus(tmp_path / "c", seed=1, video_count=0, d_node=8)
        doc = manifest(out)
        assert doc["videos"] == []
        assert formats.read_vector_store(out / "vectors.vvec") == []

    def test_every_video_structures_and_validates(self, small_corpus, small_config):
        for video_id in manifest(small_corpus)["videos"]:
            bundle = bundle_from_corpus(small_corpus, video_id, small_config)
            graph = structure_video(bundle)
            assert validate_graph(graph).ok

    def test_corpus_exercises_filtering_and_tracks(self, small_corpus, small_config):
        saw_ungrounded = False
        saw_inter_edges = False
        for video_id in manifest(small_corpus)["videos"]:
            video_dir = small_corpus / "videos" / video_id
            triplets = load_triplets(video_dir / "triplets.json")
            groundings = load_groundings(video_dir / "groundings.json")
            for i in range(len(triplets)):
                if (i, SUBJECT) in groundings and (i, OBJECT) not in groundings:
                    saw_ungrounded = True
            graph = structure_video(bundle_from_corpus(small_corpus, video_id, small_config))
            if graph.inter_edges:
                saw_inter_edges = True
        assert saw_ungrounded, "corpus should include ungrounded triplets"
        assert saw_inter_edges, "corpus should include multi-keyframe tracks"

    def test_caption_and_triplet_paths_agree(self, small_corpus, small_config, tmp_path):
        video_id = manifest(small_corpus)["videos"][0]
        via_captions = structure_video(
            bundle_from_corpus(small_corpus, video_id, small_config)
        )
        via_triplets = structure_video(
            bundle_from_corpus(
                small_corpus, video_id, small_config, use_precomputed_triplets=True
            )
        )
        a = save_graph(via_captions, tmp_path / "a" / "g.graph.json")
        b = save_graph(via_triplets, tmp_path / "b" / "g.graph.json")
        assert a.read_bytes() == b.read_bytes()

    def test_scene_paths_agree(self, small_corpus, small_config, tmp_path):
        video_id = manifest(small_corpus)["videos"][1]
        via_descriptors = structure_video(
            bundle_from_corpus(small_corpus, video_id, small_config)
        )
        via_scenes = structure_video(
            bundle_from_corpus(
                small_corpus, video_id, small_config, use_precomputed_scenes=True
            )
        )
        a = save_graph(via_descriptors, tmp_path / "a" / "g.graph.json")
        b = save_graph(via_scenes, tmp_path / "b" / "g.graph.json")
        assert a.read_bytes() == b.read_bytes()

    def test_loaders(self, small_corpus):
        video_id = manifest(small_corpus)["videos"][0]
        video_dir = small_corpus / "videos" / video_id
        groundings = load_groundings(video_dir / "groundings.json")
        assert all(role in (SUBJECT, OBJECT) for _, role in groundings)
        tracklets = load_tracklets(video_dir / "tracklets.json")
        assert tracklets and all(t.occurrences for t in tracklets)

    def test_unknown_video_rejected(self, small_corpus, small_config):
        with pytest.raises(FileNotFoundError):
            bundle_from_corpus(small_corpus, "missing", small_config)

    def test_bad_counts_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            generate_corpus(tmp_path / "x", seed=1, video_count=-1)
