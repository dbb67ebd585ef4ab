"""Artifact file formats.

Binary layouts are little-endian with a 4-byte ASCII magic:

  FMAT  generic f32 matrix: magic, version u32, rows u32, cols u32, payload
  FDSC  frame descriptors:  magic, version u32, frames u32, dim u32, payload
  NFEA  keyed node features: magic, version u32, dim u32, count u32, then per
        record (keyframe u32, box x/y/w/h f32, feature dim*f32)
  VVEC  retrieval vectors:  magic, dim u32, count u32, then per entry
        (id length u32, id utf-8 bytes, vector dim*f32)
  GFMP  fusion checkpoint:  magic, version u32, then per tensor
        (name length u32, name utf-8, rank u32, dims rank*u32, payload f32)

Decoding failures raise CorruptFileError carrying the path and byte offset.
JSON artifacts are written with sorted keys so that equal content is equal
bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CorruptFileError

FORMAT_VERSION = 1

MAGIC_MATRIX = b"FMAT"
MAGIC_DESCRIPTORS = b"FDSC"
MAGIC_NODE_FEATURES = b"NFEA"
MAGIC_VECTOR_STORE = b"VVEC"
MAGIC_CHECKPOINT = b"GFMP"


class _Reader:
    """Cursor over a byte buffer that reports precise failure offsets."""

    def __init__(self, path: str | Path, data: bytes):
        self.path = str(path)
        self.data = data
        self.offset = 0

    def fail(self, reason: str) -> CorruptFileError:
        return CorruptFileError(self.path, self.offset, reason)

    def take(self, n: int, what: str) -> bytes:
        if self.offset + n > len(self.data):
            raise self.fail(
                f"truncated while reading {what} ({n} bytes needed, "
                f"{len(self.data) - self.offset} available)"
            )
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def magic(self, expected: bytes) -> None:
        got = self.take(4, "magic")
        if got != expected:
            self.offset -= 4
            raise self.fail(f"bad magic {got!r}, expected {expected!r}")

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def f32_array(self, count: int, what: str) -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").astype(np.float64)

    def text(self, n: int, what: str) -> str:
        raw = self.take(n, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            self.offset -= n
            raise self.fail(f"{what} is not valid utf-8: {exc}") from exc

    def at_end(self) -> bool:
        return self.offset == len(self.data)

    def expect_end(self) -> None:
        if not self.at_end():
            raise self.fail(f"{len(self.data) - self.offset} trailing bytes")


def _read_file(path: str | Path) -> _Reader:
    return _Reader(path, Path(path).read_bytes())


def _f32_bytes(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype="<f4").tobytes()


# -- generic matrix / frame descriptors -------------------------------------

def _write_matrix_format(path: str | Path, magic: bytes, matrix: np.ndarray) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    rows, cols = matrix.shape
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<III", FORMAT_VERSION, rows, cols))
        fh.write(_f32_bytes(matrix))


def _read_matrix_format(path: str | Path, magic: bytes) -> np.ndarray:
    r = _read_file(path)
    r.magic(magic)
    version = r.u32("version")
    if version != FORMAT_VERSION:
        r.offset -= 4
        raise r.fail(f"unsupported version {version}")
    rows = r.u32("row count")
    cols = r.u32("column count")
    data = r.f32_array(rows * cols, "matrix payload")
    r.expect_end()
    return data.reshape(rows, cols)


def write_matrix(path: str | Path, matrix: np.ndarray) -> None:
    _write_matrix_format(path, MAGIC_MATRIX, matrix)


def read_matrix(path: str | Path) -> np.ndarray:
    return _read_matrix_format(path, MAGIC_MATRIX)


def write_descriptors(path: str | Path, descriptors: np.ndarray) -> None:
    _write_matrix_format(path, MAGIC_DESCRIPTORS, descriptors)


def read_descriptors(path: str | Path) -> np.ndarray:
    return _read_matrix_format(path, MAGIC_DESCRIPTORS)


# -- keyed node features -----------------------------------------------------

def write_node_features(
    path: str | Path,
    entries: list[tuple[int, tuple[float, float, float, float], np.ndarray]],
    dimension: int,
) -> None:
    """Entries are (keyframe, (x, y, w, h), feature) records."""
    with open(path, "wb") as fh:
        fh.write(MAGIC_NODE_FEATURES)
        fh.write(struct.pack("<III", FORMAT_VERSION, dimension, len(entries)))
        for keyframe, box, feature in entries:
            feature = np.asarray(feature, dtype=np.float64)
            if feature.shape != (dimension,):
                raise ValueError(
                    f"feature for keyframe {keyframe} has shape {feature.shape}, "
                    f"expected ({dimension},)"
                )
            fh.write(struct.pack("<I", keyframe))
            fh.write(struct.pack("<4f", *box))
            fh.write(_f32_bytes(feature))


def read_node_features(
    path: str | Path,
) -> tuple[int, list[tuple[int, tuple[float, float, float, float], np.ndarray]]]:
    r = _read_file(path)
    r.magic(MAGIC_NODE_FEATURES)
    version = r.u32("version")
    if version != FORMAT_VERSION:
        r.offset -= 4
        raise r.fail(f"unsupported version {version}")
    dimension = r.u32("feature dimension")
    count = r.u32("entry count")
    entries = []
    for i in range(count):
        keyframe = r.u32(f"entry {i} keyframe")
        box = tuple(float(v) for v in r.f32_array(4, f"entry {i} box"))
        feature = r.f32_array(dimension, f"entry {i} feature")
        entries.append((keyframe, box, feature))
    r.expect_end()
    return dimension, entries


# -- retrieval vector store ----------------------------------------------------

def write_vector_store(path: str | Path, entries: list[tuple[str, np.ndarray]]) -> None:
    if entries:
        dimension = len(np.asarray(entries[0][1]).reshape(-1))
    else:
        dimension = 0
    with open(path, "wb") as fh:
        fh.write(MAGIC_VECTOR_STORE)
        fh.write(struct.pack("<II", dimension, len(entries)))
        for video_id, vector in entries:
            vector = np.asarray(vector, dtype=np.float64).reshape(-1)
            if len(vector) != dimension:
                raise ValueError(
                    f"vector for {video_id!r} has length {len(vector)}, expected {dimension}"
                )
            raw_id = video_id.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_id)))
            fh.write(raw_id)
            fh.write(_f32_bytes(vector))


def read_vector_store(path: str | Path) -> list[tuple[str, np.ndarray]]:
    r = _read_file(path)
    r.magic(MAGIC_VECTOR_STORE)
    dimension = r.u32("vector dimension")
    count = r.u32("entry count")
    entries = []
    for i in range(count):
        id_len = r.u32(f"entry {i} id length")
        video_id = r.text(id_len, f"entry {i} id")
        vector = r.f32_array(dimension, f"entry {i} vector")
        entries.append((video_id, vector))
    r.expect_end()
    return entries


# -- fusion parameter checkpoint ----------------------------------------------

def write_checkpoint(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    """Write named tensors in insertion order."""
    with open(path, "wb") as fh:
        fh.write(MAGIC_CHECKPOINT)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        for name, tensor in tensors.items():
            tensor = np.asarray(tensor, dtype=np.float64)
            raw_name = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw_name)))
            fh.write(raw_name)
            fh.write(struct.pack("<I", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
            fh.write(_f32_bytes(tensor))


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    r = _read_file(path)
    r.magic(MAGIC_CHECKPOINT)
    version = r.u32("version")
    if version != FORMAT_VERSION:
        r.offset -= 4
        raise r.fail(f"unsupported version {version}")
    tensors: dict[str, np.ndarray] = {}
    while not r.at_end():
        name_len = r.u32("tensor name length")
        name = r.text(name_len, "tensor name")
        rank = r.u32(f"{name} rank")
        if rank > 8:
            r.offset -= 4
            raise r.fail(f"{name}: implausible rank {rank}")
        dims = [r.u32(f"{name} dim {d}") for d in range(rank)]
        size = int(np.prod(dims)) if dims else 1
        payload = r.f32_array(size, f"{name} payload")
        tensors[name] = payload.reshape(dims)
    return tensors


# -- JSON helpers ---------------------------------------------------------------

def dump_json(obj, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_json(path: str | Path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
