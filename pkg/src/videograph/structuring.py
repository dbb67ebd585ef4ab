"""Video structuring pipeline: scene detection, keyframes, feature sources,
and the end-to-end conversion of per-video artifacts into a validated graph.

Captioning, detection and tracking run in external systems; their outputs are
ingested through the file formats in `formats` (or passed in pre-parsed).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import captions as caption_parser
from . import formats
from .errors import (
    EmptyInputError,
    FeatureDimensionMismatchError,
    MissingFeatureError,
    ValidationFailedError,
)
from .graph import (
    BoundingBox,
    FeatureSource,
    Tracklet,
    Triplet,
    VideoGraph,
    build_video_graph,
    filter_groundings,
    validate_graph,
)

DEFAULT_SCENE_THRESHOLD = 0.15
DEFAULT_MIN_SCENE_LEN = 8


@dataclass(frozen=True)
class FrameDescriptor:
    """Per-frame content signal (e.g. a colour histogram) for cut detection."""

    frame: int
    descriptor: np.ndarray


@dataclass(frozen=True)
class Scene:
    """A contiguous frame range [start, end] with its middle keyframe."""

    start: int
    end: int
    keyframe: int

    def __post_init__(self):
        if not (self.start <= self.keyframe <= self.end):
            raise ValueError(f"keyframe {self.keyframe} outside [{self.start}, {self.end}]")


def _descriptor_matrix(descriptors) -> np.ndarray:
    if isinstance(descriptors, np.ndarray):
        matrix = np.atleast_2d(np.asarray(descriptors, dtype=np.float64))
    else:
        rows = list(descriptors)
        if rows and isinstance(rows[0], FrameDescriptor):
            frames = [d.frame for d in rows]
            if frames != list(range(len(rows))):
                raise ValueError("frame descriptors must cover 0..n-1 in order")
            matrix = np.array([d.descriptor for d in rows], dtype=np.float64)
        else:
            matrix = np.atleast_2d(np.asarray(rows, dtype=np.float64))
    if matrix.size and not np.all(np.isfinite(matrix)):
        raise ValueError("frame descriptors contain non-finite values")
    return matrix


def detect_scenes(
    descriptors,
    threshold: float = DEFAULT_SCENE_THRESHOLD,
    min_scene_len: int = DEFAULT_MIN_SCENE_LEN,
) -> list[Scene]:
    """Content-based cut detection over per-frame descriptors.

    A cut lands before frame t when the mean absolute descriptor change from
    frame t-1 exceeds `threshold` and the open scene already spans at least
    `min_scene_len` frames. The keyframe of a scene is its floor midpoint.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if min_scene_len < 1:
        raise ValueError("min_scene_len must be >= 1")
    matrix = _descriptor_matrix(descriptors)
    if matrix.shape[0] == 0:
        raise EmptyInputError("no frame descriptors")

    n = matrix.shape[0]
    cuts = []
    start = 0
    for t in range(1, n):
        change = float(np.mean(np.abs(matrix[t] - matrix[t - 1])))
        if change > threshold and (t - start) >= min_scene_len:
            cuts.append(t)
            start = t
    scenes = []
    bounds = [0] + cuts + [n]
    for lo, hi in zip(bounds, bounds[1:]):
        end = hi - 1
        scenes.append(Scene(start=lo, end=end, keyframe=(lo + end) // 2))
    return scenes


def select_keyframes(scenes: Sequence[Scene]) -> list[int]:
    """One keyframe per scene, strictly increasing."""
    keyframes = [s.keyframe for s in scenes]
    if any(a >= b for a, b in zip(keyframes, keyframes[1:])):
        raise ValueError(f"keyframes not strictly increasing: {keyframes}")
    return keyframes


class SyntheticFeatureSource:
    """Deterministic stand-in for a crop feature extractor.

    The vector for a (keyframe, box) key is drawn by seeding a PCG64 generator
    with blake2b(seed | keyframe | box) and normalising a standard-normal draw
    to unit L2 norm. Same key, same vector, on every platform.
    """

    def __init__(self, dimension: int, seed: int = 0):
        self.dimension = dimension
        self.seed = seed

    def __call__(self, keyframe: int, box: BoundingBox) -> np.ndarray:
        key = f"{self.seed}|{keyframe}|{box.x!r}|{box.y!r}|{box.w!r}|{box.h!r}"
        digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
        vector = rng.standard_normal(self.dimension)
        return vector / np.linalg.norm(vector)


def _f32_box_key(keyframe: int, box_key: tuple) -> tuple:
    return (keyframe,) + tuple(float(np.float32(v)) for v in box_key)


class FileFeatureSource:
    """Looks node features up by exact (keyframe, box) key in a NFEA file.

    Keys are matched after rounding box coordinates to f32, the stored
    precision."""

    def __init__(self, path: str | Path):
        self.path = str(path)
        self.dimension, entries = formats.read_node_features(path)
        self._table = {
            _f32_box_key(keyframe, box): feature for keyframe, box, feature in entries
        }

    def __call__(self, keyframe: int, box: BoundingBox) -> np.ndarray:
        key = _f32_box_key(keyframe, box.key())
        try:
            return self._table[key]
        except KeyError:
            raise MissingFeatureError(
                f"{self.path}: no feature for keyframe {keyframe}, box {box.key()}"
            ) from None


def extract_node_features(
    keyframe: int, box: BoundingBox, source: FeatureSource
) -> np.ndarray:
    """Fetch the region feature vector, enforcing the configured dimension."""
    feature = np.asarray(source(keyframe, box), dtype=np.float64)
    if feature.shape != (source.dimension,):
        raise FeatureDimensionMismatchError(
            f"feature for keyframe {keyframe} has shape {feature.shape}, "
            f"expected ({source.dimension},)"
        )
    return feature


@dataclass
class VideoBundle:
    """Every ingested artifact needed to structure one video.

    Either `descriptors` or pre-computed `scenes` must be present, and either
    `captions` (keyframe, text pairs) or pre-parsed `triplets`.
    """

    video_id: str
    feature_source: FeatureSource
    descriptors: np.ndarray | None = None
    scenes: list[Scene] | None = None
    captions: list[tuple[int, str]] | None = None
    triplets: list[Triplet] | None = None
    groundings: dict[tuple[int, str], BoundingBox] = field(default_factory=dict)
    tracklets: list[Tracklet] = field(default_factory=list)
    scene_threshold: float = DEFAULT_SCENE_THRESHOLD
    min_scene_len: int = DEFAULT_MIN_SCENE_LEN


def structure_video(bundle: VideoBundle) -> VideoGraph:
    """Scene detection -> triplets -> grounding filter -> graph, validated."""
    if bundle.scenes is not None:
        scenes = list(bundle.scenes)
    elif bundle.descriptors is not None:
        scenes = detect_scenes(
            bundle.descriptors, bundle.scene_threshold, bundle.min_scene_len
        )
    else:
        raise ValueError(f"{bundle.video_id}: bundle has neither descriptors nor scenes")
    keyframes = select_keyframes(scenes)

    if bundle.triplets is not None:
        triplets = list(bundle.triplets)
    elif bundle.captions is not None:
        triplets = []
        for keyframe, text in bundle.captions:
            triplets.extend(caption_parser.parse_caption(text, keyframe).triplets)
    else:
        raise ValueError(f"{bundle.video_id}: bundle has neither captions nor triplets")

    grounded, groundings = filter_groundings(triplets, bundle.groundings)
    graph = build_video_graph(
        bundle.video_id,
        keyframes,
        grounded,
        groundings,
        bundle.tracklets,
        bundle.feature_source,
    )
    report = validate_graph(graph)
    if not report.ok:
        raise ValidationFailedError(
            f"{bundle.video_id}: graph failed validation", report.violations
        )
    return graph
