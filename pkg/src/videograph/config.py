"""Declarative pipeline configuration.

One JSON config file plus explicit overrides; environment variables are never
consulted, so a config value pins behaviour completely.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from . import formats


@dataclass
class PipelineConfig:
    d_node: int = 1024
    d_model: int = 1024
    d_llm: int = 4096
    layer_count: int = 2
    n_related: int = 5
    frames_per_video: int = 8
    tokens_per_frame: int = 256
    scene_threshold: float = 0.15
    min_scene_len: int = 8
    graph_token_cap: int = 200
    separate_edge_weights: bool = False
    seed: int = 7
    fusion_seed: int = 11
    include_cot: bool = True
    one_shot: bool = False
    min_similarity: float | None = None
    max_similarity: float | None = None
    corpus_dir: str = "corpus"
    output_dir: str = "out"

    def __post_init__(self):
        for name in ("d_node", "d_model", "d_llm", "frames_per_video", "tokens_per_frame"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.layer_count < 0:
            raise ValueError("layer_count must be >= 0")
        if self.n_related < 0:
            raise ValueError("n_related must be >= 0")
        if self.graph_token_cap < 0:
            raise ValueError("graph_token_cap must be >= 0")

    @staticmethod
    def from_file(path: str | Path) -> "PipelineConfig":
        data = formats.load_json(path)
        known = {f.name for f in dataclasses.fields(PipelineConfig)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return PipelineConfig(**data)

    def with_overrides(self, **overrides) -> "PipelineConfig":
        changes = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **changes)

    def save(self, path: str | Path) -> None:
        formats.dump_json(dataclasses.asdict(self), path)
