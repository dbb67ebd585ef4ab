"""Deterministic synthetic corpus generation and ingestion.

The generator writes, per video, every artifact the pipeline can ingest:
frame descriptors, captions, pre-parsed triplets, pre-computed scenes,
groundings, tracklets, a keyed node-feature file and a retrieval vector.
Captions are composed from sentence templates whose parses are known, so the
grounding records (keyed by triplet index and role) line up with what the
caption parser extracts. A slice of triplets is left deliberately ungrounded
and some track occurrences have no graph node, so the filtering and edge
rules are exercised end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import captions as caption_parser
from . import formats
from .config import PipelineConfig
from .graph import SUBJECT, OBJECT, BoundingBox, Tracklet, Triplet
from .structuring import (
    FileFeatureSource,
    Scene,
    SyntheticFeatureSource,
    VideoBundle,
    detect_scenes,
    select_keyframes,
)

SUBJECTS = ["man", "woman", "chef", "bartender", "girl"]
VERBS = ["holds", "cuts", "lifts", "grabs", "washes"]
PREP_VERBS = [("pours", "into"), ("places", "on"), ("looks", "at")]
OBJECTS = ["lime", "cup", "shaker", "bottle", "glass", "knife", "board", "plate"]
FILLERS = ["The man smiles.", "The woman waits.", "The chef nods."]

DESCRIPTOR_DIM = 16
RETRIEVAL_DIM = 64
UNGROUNDED_STRIDE = 7  # every 7th triplet loses its object grounding


def _video_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, index])))


def _segment_layout(rng: np.random.Generator, frames: int, min_len: int) -> list[int]:
    """Segment lengths >= min_len summing to `frames` (1 to 3 segments)."""
    max_segments = max(1, min(3, frames // min_len))
    count = int(rng.integers(1, max_segments + 1))
    lengths = [min_len] * count
    spare = frames - min_len * count
    for _ in range(spare):
        lengths[int(rng.integers(0, count))] += 1
    return lengths


def _descriptors(rng: np.random.Generator, lengths: list[int]) -> np.ndarray:
    rows = []
    for i, length in enumerate(lengths):
        lo, hi = (0.0, 0.3) if i % 2 == 0 else (0.7, 1.0)
        level = rng.uniform(lo, hi, size=DESCRIPTOR_DIM)
        rows.extend([level] * length)
    return np.array(rows)


@dataclass
class _BoxTable:
    """Stable per-(phrase, keyframe) boxes so repeated mentions share nodes."""

    rng: np.random.Generator
    base: dict[str, tuple[float, float, float, float]] = field(default_factory=dict)

    def box(self, phrase: str, keyframe: int) -> BoundingBox:
        if phrase not in self.base:
            self.base[phrase] = (
                float(self.rng.uniform(0, 150)),
                float(self.rng.uniform(0, 150)),
                float(self.rng.uniform(20, 80)),
                float(self.rng.uniform(20, 80)),
            )
        x, y, w, h = self.base[phrase]
        return BoundingBox(
            x=round(x + 0.5 * keyframe, 1),
            y=round(y + 0.25 * keyframe, 1),
            w=round(w, 1),
            h=round(h, 1),
            frame=keyframe,
        )


def _compose_caption(rng: np.random.Generator, protagonist: str, recurring: str, ordinal: int) -> str:
    sentences = [f"A {protagonist} {VERBS[ordinal % len(VERBS)]} a {recurring}."]
    roll = rng.random()
    if roll < 0.45:
        subj = SUBJECTS[int(rng.integers(0, len(SUBJECTS)))]
        verb, prep = PREP_VERBS[int(rng.integers(0, len(PREP_VERBS)))]
        obj1 = OBJECTS[int(rng.integers(0, len(OBJECTS)))]
        obj2 = OBJECTS[int(rng.integers(0, len(OBJECTS)))]
        sentences.append(
            f"A {subj} grabs a {obj1} and {verb} juice {prep} a {obj2}."
        )
    elif roll < 0.7:
        subj = SUBJECTS[int(rng.integers(0, len(SUBJECTS)))]
        obj = OBJECTS[int(rng.integers(0, len(OBJECTS)))]
        sentences.append(f"A {subj} washes a {obj}.")
    if rng.random() < 0.3:
        sentences.append(FILLERS[int(rng.integers(0, len(FILLERS)))])
    return " ".join(sentences)


def generate_video(
    corpus_dir: Path,
    video_id: str,
    rng: np.random.Generator,
    frames: int,
    tracks: int,
    d_node: int,
    feature_seed: int,
    min_scene_len: int,
    scene_threshold: float,
) -> None:
    video_dir = corpus_dir / "videos" / video_id
    video_dir.mkdir(parents=True, exist_ok=True)

    lengths = _segment_layout(rng, frames, min_scene_len)
    descriptors = _descriptors(rng, lengths)
    formats.write_descriptors(video_dir / "descriptors.bin", descriptors)
    scenes = detect_scenes(descriptors, scene_threshold, min_scene_len)
    keyframes = select_keyframes(scenes)
    formats.dump_json(
        [{"start": s.start, "end": s.end, "keyframe": s.keyframe} for s in scenes],
        video_dir / "scenes.json",
    )

    protagonist = SUBJECTS[int(rng.integers(0, len(SUBJECTS)))]
    recurring = OBJECTS[int(rng.integers(0, len(OBJECTS)))]
    lines = []
    for ordinal, kf in enumerate(keyframes):
        lines.append(f"{kf}\t{_compose_caption(rng, protagonist, recurring, ordinal)}")
    (video_dir / "captions.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")

    triplets: list[Triplet] = []
    for line in lines:
        kf_text, _, caption = line.partition("\t")
        triplets.extend(caption_parser.parse_caption(caption, int(kf_text)).triplets)
    formats.dump_json(
        [
            {
                "subject": t.subject,
                "predicate": t.predicate,
                "object": t.object,
                "keyframe": t.source_keyframe,
            }
            for t in triplets
        ],
        video_dir / "triplets.json",
    )

    boxes = _BoxTable(rng)
    groundings_doc: dict[str, dict] = {}
    phrase_frames: dict[str, list[int]] = {}
    for i, t in enumerate(triplets):
        entry = {}
        entry[SUBJECT] = boxes.box(t.subject, t.source_keyframe)
        phrase_frames.setdefault(t.subject, [])
        if t.source_keyframe not in phrase_frames[t.subject]:
            phrase_frames[t.subject].append(t.source_keyframe)
        if i % UNGROUNDED_STRIDE != UNGROUNDED_STRIDE - 1:
            entry[OBJECT] = boxes.box(t.object, t.source_keyframe)
            phrase_frames.setdefault(t.object, [])
            if t.source_keyframe not in phrase_frames[t.object]:
                phrase_frames[t.object].append(t.source_keyframe)
        groundings_doc[str(i)] = {
            role: {"x": b.x, "y": b.y, "w": b.w, "h": b.h, "frame": b.frame}
            for role, b in entry.items()
        }
    formats.dump_json(groundings_doc, video_dir / "groundings.json")

    tracked_phrases = [protagonist, recurring]
    extra = [p for p in sorted(phrase_frames) if p not in tracked_phrases and len(phrase_frames[p]) > 1]
    tracked_phrases.extend(extra[: max(0, tracks - 2)])
    tracklets_doc = []
    for track_id, phrase in enumerate(tracked_phrases, start=1):
        frames_for = sorted(phrase_frames.get(phrase, []))
        if len(frames_for) < 1:
            continue
        occurrences = [
            {
                "keyframe": kf,
                "box": {
                    "x": boxes.box(phrase, kf).x,
                    "y": boxes.box(phrase, kf).y,
                    "w": boxes.box(phrase, kf).w,
                    "h": boxes.box(phrase, kf).h,
                },
            }
            for kf in frames_for
        ]
        tracklets_doc.append({"track_id": track_id, "occurrences": occurrences})
    formats.dump_json(tracklets_doc, video_dir / "tracklets.json")

    source = SyntheticFeatureSource(d_node, seed=feature_seed)
    feature_entries = []
    seen_keys = set()
    for entry in groundings_doc.values():
        for role_box in entry.values():
            kf = role_box["frame"]
            box = BoundingBox(role_box["x"], role_box["y"], role_box["w"], role_box["h"], kf)
            key = (kf, box.key())
            if key in seen_keys:
                continue
            seen_keys.add(key)
            feature_entries.append((kf, box.key(), source(kf, box)))
    formats.write_node_features(video_dir / "features.bin", feature_entries, d_node)


def generate_corpus(
    out_dir: str | Path,
    seed: int,
    video_count: int,
    frames: int = 48,
    tracks: int = 3,
    d_node: int = 1024,
    min_scene_len: int = 8,
    scene_threshold: float = 0.15,
) -> Path:
    """Write a self-consistent corpus; same arguments give identical bytes."""
    if video_count < 0 or frames < 1 or tracks < 0:
        raise ValueError("counts must be positive")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    video_ids = [f"video{v:03d}" for v in range(video_count)]

    vectors = []
    for v, video_id in enumerate(video_ids):
        rng = _video_rng(seed, v)
        generate_video(
            out_dir,
            video_id,
            rng,
            frames=frames,
            tracks=tracks,
            d_node=d_node,
            feature_seed=seed,
            min_scene_len=min_scene_len,
            scene_threshold=scene_threshold,
        )
        vec_rng = _video_rng(seed, 10_000 + v)
        vector = vec_rng.standard_normal(RETRIEVAL_DIM)
        vectors.append((video_id, vector / np.linalg.norm(vector)))
    formats.write_vector_store(out_dir / "vectors.vvec", vectors)

    formats.dump_json(
        {
            "seed": seed,
            "videos": video_ids,
            "frames": frames,
            "tracks": tracks,
            "d_node": d_node,
            "descriptor_dim": DESCRIPTOR_DIM,
            "retrieval_dim": RETRIEVAL_DIM,
        },
        out_dir / "manifest.json",
    )
    return out_dir


# -- ingestion ---------------------------------------------------------------------


def load_groundings(path: str | Path) -> dict[tuple[int, str], BoundingBox]:
    doc = formats.load_json(path)
    groundings = {}
    for index_text, roles in doc.items():
        for role, b in roles.items():
            groundings[(int(index_text), role)] = BoundingBox(
                x=b["x"], y=b["y"], w=b["w"], h=b["h"], frame=b.get("frame", 0)
            )
    return groundings


def load_tracklets(path: str | Path) -> list[Tracklet]:
    doc = formats.load_json(path)
    tracklets = []
    for entry in doc:
        occurrences = tuple(
            (
                occ["keyframe"],
                BoundingBox(
                    x=occ["box"]["x"],
                    y=occ["box"]["y"],
                    w=occ["box"]["w"],
                    h=occ["box"]["h"],
                    frame=occ["keyframe"],
                ),
            )
            for occ in entry["occurrences"]
        )
        tracklets.append(Tracklet(track_id=entry["track_id"], occurrences=occurrences))
    return tracklets


def load_triplets(path: str | Path) -> list[Triplet]:
    doc = formats.load_json(path)
    return [
        Triplet(
            subject=entry["subject"],
            predicate=entry["predicate"],
            object=entry["object"],
            source_keyframe=entry["keyframe"],
        )
        for entry in doc
    ]


def load_scenes(path: str | Path) -> list[Scene]:
    doc = formats.load_json(path)
    return [Scene(start=e["start"], end=e["end"], keyframe=e["keyframe"]) for e in doc]


def load_captions(path: str | Path) -> list[tuple[int, str]]:
    captions = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        kf_text, sep, caption = line.partition("\t")
        if not sep:
            raise ValueError(f"{path}: caption line missing keyframe<TAB> prefix")
        captions.append((int(kf_text), caption))
    return captions


def manifest(corpus_dir: str | Path) -> dict:
    return formats.load_json(Path(corpus_dir) / "manifest.json")


def bundle_from_corpus(
    corpus_dir: str | Path,
    video_id: str,
    config: PipelineConfig,
    *,
    use_precomputed_scenes: bool = False,
    use_precomputed_triplets: bool = False,
) -> VideoBundle:
    """Assemble a VideoBundle from a corpus directory.

    The file-backed feature source is used when features.bin exists,
    otherwise features are synthesised from the corpus seed."""
    corpus_dir = Path(corpus_dir)
    video_dir = corpus_dir / "videos" / video_id
    if not video_dir.is_dir():
        raise FileNotFoundError(f"no such corpus video: {video_dir}")

    features_path = video_dir / "features.bin"
    if features_path.exists():
        feature_source = FileFeatureSource(features_path)
    else:
        feature_source = SyntheticFeatureSource(
            config.d_node, seed=manifest(corpus_dir)["seed"]
        )

    bundle = VideoBundle(
        video_id=video_id,
        feature_source=feature_source,
        groundings=load_groundings(video_dir / "groundings.json"),
        tracklets=load_tracklets(video_dir / "tracklets.json"),
        scene_threshold=config.scene_threshold,
        min_scene_len=config.min_scene_len,
    )
    if use_precomputed_scenes:
        bundle.scenes = load_scenes(video_dir / "scenes.json")
    else:
        bundle.descriptors = formats.read_descriptors(video_dir / "descriptors.bin")
    if use_precomputed_triplets:
        bundle.triplets = load_triplets(video_dir / "triplets.json")
    else:
        bundle.captions = load_captions(video_dir / "captions.txt")
    return bundle
