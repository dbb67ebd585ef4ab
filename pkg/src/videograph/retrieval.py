"""Exact cosine-similarity retrieval over per-video feature vectors."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import formats
from .errors import DimensionMismatchError, DuplicateIdError, ZeroVectorError


@dataclass(frozen=True)
class VideoVector:
    video_id: str
    vector: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))


class Index:
    """Immutable exhaustive-scan index; exact, not approximate."""

    def __init__(self, video_ids: list[str], matrix: np.ndarray, norms: np.ndarray):
        self.video_ids = video_ids
        self.matrix = matrix
        self.norms = norms

    def __len__(self) -> int:
        return len(self.video_ids)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]


def build_index(entries: Sequence[VideoVector]) -> Index:
    """Validate entries (unique ids, one dimension, no zero vectors) and index them."""
    ids: list[str] = []
    rows: list[np.ndarray] = []
    seen: set[str] = set()
    dimension: int | None = None
    for entry in entries:
        vector = np.asarray(entry.vector, dtype=np.float64).reshape(-1)
        if dimension is None:
            dimension = len(vector)
        elif len(vector) != dimension:
            raise DimensionMismatchError(
                f"{entry.video_id!r}: vector length {len(vector)} != {dimension}"
            )
        if entry.video_id in seen:
            raise DuplicateIdError(f"duplicate video id {entry.video_id!r}")
        norm = np.linalg.norm(vector)
        if norm == 0.0:
            raise ZeroVectorError(f"{entry.video_id!r}: zero vector")
        seen.add(entry.video_id)
        ids.append(entry.video_id)
        rows.append(vector)
    matrix = np.stack(rows) if rows else np.zeros((0, dimension or 0))
    norms = np.linalg.norm(matrix, axis=1) if len(rows) else np.zeros(0)
    return Index(ids, matrix, norms)


def query_top_n(
    index: Index,
    query: VideoVector,
    n: int,
    exclude: Iterable[str] = (),
) -> list[tuple[str, float]]:
    """The n most cosine-similar entries not in `exclude`.

    Descending similarity, ties broken by ascending video id. Callers exclude
    the target video itself.
    """
    vector = np.asarray(query.vector, dtype=np.float64).reshape(-1)
    if len(index) and len(vector) != index.dimension:
        raise DimensionMismatchError(
            f"query length {len(vector)} != index dimension {index.dimension}"
        )
    qnorm = np.linalg.norm(vector)
    if qnorm == 0.0:
        raise ZeroVectorError("query is a zero vector")
    excluded = set(exclude)
    sims = index.matrix @ vector / (index.norms * qnorm) if len(index) else np.zeros(0)
    candidates = [
        (video_id, float(sims[i]))
        for i, video_id in enumerate(index.video_ids)
        if video_id not in excluded
    ]
    candidates.sort(key=lambda item: (-item[1], item[0]))
    return candidates[: max(n, 0)]


def save_index(path: str | Path, entries: Sequence[VideoVector]) -> None:
    formats.write_vector_store(path, [(e.video_id, e.vector) for e in entries])


def load_entries(path: str | Path) -> list[VideoVector]:
    return [
        VideoVector(video_id, vector)
        for video_id, vector in formats.read_vector_store(path)
    ]


def load_index(path: str | Path) -> Index:
    return build_index(load_entries(path))
