"""Spatio-temporal video graph model and construction.

A video graph holds one node per grounded phrase occurrence on a keyframe,
predicate-labelled intra-frame edges (subject -> object), and track-derived
inter-frame edges which are always stored in both directions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Protocol, Sequence

import numpy as np

from .errors import (
    FeatureDimensionMismatchError,
    UnknownKeyframeError,
)

SUBJECT = "subject"
OBJECT = "object"


@dataclass(frozen=True)
class Triplet:
    """A <subject, predicate, object> record anchored to a keyframe."""

    subject: str
    predicate: str
    object: str
    source_keyframe: int

    def __post_init__(self):
        if not self.subject or not self.object:
            raise ValueError("triplet subject and object must be non-empty")
        if not self.predicate:
            raise ValueError("triplet predicate must be non-empty")
        if self.source_keyframe < 0:
            raise ValueError("source_keyframe must be >= 0")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in pixels, (x, y) top-left corner plus width/height."""

    x: float
    y: float
    w: float
    h: float
    frame: int = 0

    def __post_init__(self):
        if self.x < 0 or self.y < 0:
            raise ValueError("box origin must be non-negative")
        if self.w <= 0 or self.h <= 0:
            raise ValueError("box width and height must be positive")

    def key(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class Tracklet:
    """A tracked object's (keyframe, box) occurrences under one tracking id."""

    track_id: int
    occurrences: tuple[tuple[int, BoundingBox], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "occurrences", tuple((kf, box) for kf, box in self.occurrences)
        )
        frames = [kf for kf, _ in self.occurrences]
        if any(a >= b for a, b in zip(frames, frames[1:])):
            raise ValueError(
                f"tracklet {self.track_id}: occurrence keyframes must be strictly increasing"
            )


@dataclass
class GraphNode:
    node_id: int
    keyframe: int
    label: str
    track_id: int | None
    feature: np.ndarray


class IntraEdge(NamedTuple):
    src: int
    dst: int
    predicate: str


class InterEdge(NamedTuple):
    src: int
    dst: int
    track_id: int


@dataclass
class VideoGraph:
    """Immutable-by-convention graph for one video.

    Intra edges connect same-keyframe nodes; inter edges connect nodes of one
    track on distinct keyframes and are closed under reversal. Self-loops are
    never stored; the fusion engine adds self-attention implicitly.
    """

    video_id: str
    nodes: list[GraphNode] = field(default_factory=list)
    intra_edges: list[IntraEdge] = field(default_factory=list)
    inter_edges: list[InterEdge] = field(default_factory=list)

    def node_by_id(self, node_id: int) -> GraphNode:
        return self._node_index()[node_id]

    def _node_index(self) -> dict[int, GraphNode]:
        return {n.node_id: n for n in self.nodes}

    def ordered_nodes(self) -> list[GraphNode]:
        """Nodes in token order: by keyframe, then node id."""
        return sorted(self.nodes, key=lambda n: (n.keyframe, n.node_id))


class FeatureSource(Protocol):
    """Yields one node feature vector per (keyframe, box) region."""

    dimension: int

    def __call__(self, keyframe: int, box: BoundingBox) -> np.ndarray: ...


GroundingMap = Mapping[tuple[int, str], BoundingBox]


def filter_ungrounded(
    triplets: Sequence[Triplet], groundings: GroundingMap
) -> list[Triplet]:
    """Keep exactly the triplets whose subject AND object are grounded.

    Grounding entries are keyed by (triplet index, role). Order is preserved.
    """
    return [
        t
        for i, t in enumerate(triplets)
        if (i, SUBJECT) in groundings and (i, OBJECT) in groundings
    ]


def filter_groundings(
    triplets: Sequence[Triplet], groundings: GroundingMap
) -> tuple[list[Triplet], dict[tuple[int, str], BoundingBox]]:
    """Filter ungrounded triplets and re-key the grounding map to the survivors."""
    kept = []
    rekeyed: dict[tuple[int, str], BoundingBox] = {}
    for i, t in enumerate(triplets):
        if (i, SUBJECT) in groundings and (i, OBJECT) in groundings:
            j = len(kept)
            kept.append(t)
            rekeyed[(j, SUBJECT)] = groundings[(i, SUBJECT)]
            rekeyed[(j, OBJECT)] = groundings[(i, OBJECT)]
    return kept, rekeyed


def build_video_graph(
    video_id: str,
    keyframes: Sequence[int],
    grounded_triplets: Sequence[Triplet],
    groundings: GroundingMap,
    tracklets: Sequence[Tracklet],
    feature_source: FeatureSource,
) -> VideoGraph:
    """Construct the video graph from grounded triplets, boxes and tracks.

    Node identity is (keyframe, label, grounding box): repeated mentions of
    one phrase with the same box share a node, different boxes make distinct
    nodes. Ids are assigned by ascending keyframe, then triplet order with
    the subject before the object. `groundings` is keyed by position within
    `grounded_triplets`.
    """
    keyframe_set = set(keyframes)
    for t in grounded_triplets:
        if t.source_keyframe not in keyframe_set:
            raise UnknownKeyframeError(
                f"{video_id}: triplet ({t.subject}, {t.predicate}, {t.object}) "
                f"references keyframe {t.source_keyframe} not in {sorted(keyframe_set)}"
            )

    d_node = feature_source.dimension
    nodes: list[GraphNode] = []
    node_boxes: dict[int, BoundingBox] = {}
    by_identity: dict[tuple[int, str, tuple], int] = {}

    def node_for(keyframe: int, label: str, box: BoundingBox) -> int:
        identity = (keyframe, label, box.key())
        if identity in by_identity:
            return by_identity[identity]
        feature = np.asarray(feature_source(keyframe, box), dtype=np.float64)
        if feature.shape != (d_node,):
            raise FeatureDimensionMismatchError(
                f"{video_id}: feature for ({keyframe}, {label}) has shape "
                f"{feature.shape}, expected ({d_node},)"
            )
        node_id = len(nodes)
        nodes.append(GraphNode(node_id, keyframe, label, None, feature))
        node_boxes[node_id] = box
        by_identity[identity] = node_id
        return node_id

    intra_edges: list[IntraEdge] = []
    for kf in sorted(keyframe_set):
        for i, t in enumerate(grounded_triplets):
            if t.source_keyframe != kf:
                continue
            s_id = node_for(kf, t.subject, groundings[(i, SUBJECT)])
            o_id = node_for(kf, t.object, groundings[(i, OBJECT)])
            intra_edges.append(IntraEdge(s_id, o_id, t.predicate))

    # Attach tracking ids by exact (keyframe, box) match; lowest track id wins.
    by_occurrence: dict[tuple[int, tuple], list[int]] = {}
    for node_id, box in node_boxes.items():
        kf = nodes[node_id].keyframe
        by_occurrence.setdefault((kf, box.key()), []).append(node_id)
    for tracklet in sorted(tracklets, key=lambda t: t.track_id):
        for kf, box in tracklet.occurrences:
            for node_id in by_occurrence.get((kf, box.key()), []):
                if nodes[node_id].track_id is None:
                    nodes[node_id].track_id = tracklet.track_id

    graph = VideoGraph(video_id, nodes, intra_edges, [])
    return add_inter_frame_edges(graph, tracklets)


def add_inter_frame_edges(
    graph: VideoGraph, tracklets: Sequence[Tracklet]
) -> VideoGraph:
    """Link consecutive tracklet occurrences that both have graph nodes.

    Only adjacent occurrences within one tracklet are linked (not all pairs),
    and every link is inserted in both directions. Occurrences without a
    matching node are skipped, never bridged over.
    """
    by_track_frame: dict[tuple[int, int], list[int]] = {}
    for node in graph.nodes:
        if node.track_id is not None:
            by_track_frame.setdefault((node.track_id, node.keyframe), []).append(
                node.node_id
            )

    existing = set(graph.inter_edges)
    inter = list(graph.inter_edges)
    for tracklet in sorted(tracklets, key=lambda t: t.track_id):
        tid = tracklet.track_id
        for (kf_a, _), (kf_b, _) in zip(tracklet.occurrences, tracklet.occurrences[1:]):
            src_nodes = by_track_frame.get((tid, kf_a), [])
            dst_nodes = by_track_frame.get((tid, kf_b), [])
            for u in sorted(src_nodes):
                for v in sorted(dst_nodes):
                    for edge in (InterEdge(u, v, tid), InterEdge(v, u, tid)):
                        if edge not in existing:
                            existing.add(edge)
                            inter.append(edge)

    return VideoGraph(graph.video_id, graph.nodes, list(graph.intra_edges), inter)


@dataclass
class ValidationReport:
    video_id: str
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_graph(graph: VideoGraph) -> ValidationReport:
    """Check every structural invariant, reporting violators by id."""
    report = ValidationReport(graph.video_id)
    add = report.violations.append

    ids = [n.node_id for n in graph.nodes]
    seen: set[int] = set()
    for node_id in ids:
        if node_id in seen:
            add(f"duplicate node id {node_id}")
        seen.add(node_id)

    dims = {n.feature.shape for n in graph.nodes}
    if len(dims) > 1:
        add(f"inconsistent feature shapes {sorted(dims)}")
    for n in graph.nodes:
        if not np.all(np.isfinite(n.feature)):
            add(f"node {n.node_id} has non-finite feature values")

    index = {n.node_id: n for n in graph.nodes}

    for k, (src, dst, predicate) in enumerate(graph.intra_edges):
        if src not in index or dst not in index:
            add(f"intra edge #{k} ({src}->{dst}, {predicate!r}) references missing node")
            continue
        if src == dst:
            add(f"intra edge #{k} is a self-loop on node {src}")
        elif index[src].keyframe != index[dst].keyframe:
            add(
                f"intra edge #{k} ({src}->{dst}) spans keyframes "
                f"{index[src].keyframe} and {index[dst].keyframe}"
            )

    inter_set = set(graph.inter_edges)
    for k, edge in enumerate(graph.inter_edges):
        src, dst, tid = edge
        if src not in index or dst not in index:
            add(f"inter edge #{k} ({src}->{dst}, track {tid}) references missing node")
            continue
        if src == dst:
            add(f"inter edge #{k} is a self-loop on node {src}")
            continue
        if index[src].keyframe == index[dst].keyframe:
            add(f"inter edge #{k} ({src}->{dst}) connects same keyframe {index[src].keyframe}")
        if index[src].track_id != tid or index[dst].track_id != tid:
            add(
                f"inter edge #{k} ({src}->{dst}) carries track {tid} but nodes have "
                f"tracks {index[src].track_id} and {index[dst].track_id}"
            )
        if InterEdge(dst, src, tid) not in inter_set:
            add(f"inter edge ({src}->{dst}, track {tid}) has no reverse edge")

    return report


def merged_edge_pairs(graph: VideoGraph) -> list[tuple[int, int]]:
    """Directed (src, dst) adjacency pairs for attention: intra plus inter,

    de-duplicated and ordered by (dst, src). Self-loops are not included;
    attention kernels add them implicitly."""
    seen: set[tuple[int, int]] = set()
    for src, dst, _ in graph.intra_edges:
        seen.add((src, dst))
    for src, dst, _ in graph.inter_edges:
        seen.add((src, dst))
    return sorted(seen, key=lambda e: (e[1], e[0]))


def save_graph(graph: VideoGraph, json_path: str | Path) -> Path:
    """Write the graph as JSON plus a companion feature matrix file.

    Features live in "<stem>.features.bin" next to the JSON document; each
    node's feature_ref is (file name, row index) into that matrix.
    """
    from . import formats

    json_path = Path(json_path)
    stem = json_path.stem
    if stem.endswith(".graph"):
        stem = stem[: -len(".graph")]
    features_name = stem + ".features.bin"
    nodes_sorted = sorted(graph.nodes, key=lambda n: n.node_id)
    doc = {
        "video_id": graph.video_id,
        "nodes": [
            {
                "id": n.node_id,
                "keyframe": n.keyframe,
                "label": n.label,
                "track_id": n.track_id,
                "feature_ref": [features_name, row],
            }
            for row, n in enumerate(nodes_sorted)
        ],
        "intra_edges": [[e.src, e.dst, e.predicate] for e in graph.intra_edges],
        "inter_edges": [[e.src, e.dst, e.track_id] for e in graph.inter_edges],
    }
    if nodes_sorted:
        matrix = np.stack([n.feature for n in nodes_sorted])
    else:
        matrix = np.zeros((0, 0))
    json_path.parent.mkdir(parents=True, exist_ok=True)
    formats.write_matrix(json_path.parent / features_name, matrix)
    formats.dump_json(doc, json_path)
    return json_path


def load_graph(json_path: str | Path) -> VideoGraph:
    """Read a graph document written by save_graph."""
    from . import formats

    json_path = Path(json_path)
    doc = formats.load_json(json_path)
    matrices: dict[str, np.ndarray] = {}
    nodes = []
    for entry in doc["nodes"]:
        file_name, row = entry["feature_ref"]
        if file_name not in matrices:
            matrices[file_name] = formats.read_matrix(json_path.parent / file_name)
        nodes.append(
            GraphNode(
                node_id=entry["id"],
                keyframe=entry["keyframe"],
                label=entry["label"],
                track_id=entry["track_id"],
                feature=matrices[file_name][row],
            )
        )
    return VideoGraph(
        video_id=doc["video_id"],
        nodes=nodes,
        intra_edges=[IntraEdge(s, d, p) for s, d, p in doc["intra_edges"]],
        inter_edges=[InterEdge(s, d, t) for s, d, t in doc["inter_edges"]],
    )
