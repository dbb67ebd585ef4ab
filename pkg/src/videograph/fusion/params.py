"""Fusion engine parameters: shapes, initialisation, checkpoint round-trip.

A layer owns exactly the graph-attention weights (W, a), the cross-attention
projections (Q/K/V), the class-embedding parameter, and two RMSNorm gains.
There is deliberately no feed-forward block. Global tensors are the input
lift (identity-initialised when the model width equals the node feature
width) and the output projection to the LLM embedding width.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import formats

LAYER_TENSOR_NAMES = (
    "gat_weight",
    "gat_attn",
    "q_weight",
    "k_weight",
    "v_weight",
    "alpha",
    "gat_gain",
    "cga_gain",
)
EDGE_TYPE_TENSOR_NAMES = ("gat_weight_inter", "gat_attn_inter")


@dataclass
class FusionLayerParams:
    gat_weight: np.ndarray  # (d_model, d_model)
    gat_attn: np.ndarray  # (2 * d_model,)
    q_weight: np.ndarray  # (d_model, d_model)
    k_weight: np.ndarray  # (d_model, d_model)
    v_weight: np.ndarray  # (d_model, d_model)
    alpha: np.ndarray  # (d_model,)
    gat_gain: np.ndarray  # (d_model,)
    cga_gain: np.ndarray  # (d_model,)
    # Optional second parameter set applied to inter-frame (track) edges only.
    gat_weight_inter: np.ndarray | None = None
    gat_attn_inter: np.ndarray | None = None

    @property
    def separate_edge_weights(self) -> bool:
        return self.gat_weight_inter is not None

    def tensor_names(self) -> tuple[str, ...]:
        names = LAYER_TENSOR_NAMES
        if self.separate_edge_weights:
            names = names + EDGE_TYPE_TENSOR_NAMES
        return names


@dataclass
class FusionParams:
    lift_weight: np.ndarray  # (d_node, d_model)
    lift_bias: np.ndarray  # (d_model,)
    layers: list[FusionLayerParams]
    proj_weight: np.ndarray  # (d_model, d_llm)
    proj_bias: np.ndarray  # (d_llm,)

    @property
    def d_node(self) -> int:
        return self.lift_weight.shape[0]

    @property
    def d_model(self) -> int:
        return self.lift_weight.shape[1]

    @property
    def d_llm(self) -> int:
        return self.proj_weight.shape[1]

    def flatten(self) -> dict[str, np.ndarray]:
        """Named tensors in a fixed order (checkpoint and gradient order)."""
        tensors: dict[str, np.ndarray] = {
            "lift.weight": self.lift_weight,
            "lift.bias": self.lift_bias,
        }
        for i, layer in enumerate(self.layers):
            for name in layer.tensor_names():
                tensors[f"layers.{i}.{name}"] = getattr(layer, name)
        tensors["proj.weight"] = self.proj_weight
        tensors["proj.bias"] = self.proj_bias
        return tensors

    @staticmethod
    def from_flat(tensors: dict[str, np.ndarray]) -> "FusionParams":
        layer_count = 0
        while f"layers.{layer_count}.gat_weight" in tensors:
            layer_count += 1
        layers = []
        for i in range(layer_count):
            kwargs = {
                name: tensors[f"layers.{i}.{name}"] for name in LAYER_TENSOR_NAMES
            }
            for name in EDGE_TYPE_TENSOR_NAMES:
                key = f"layers.{i}.{name}"
                if key in tensors:
                    kwargs[name] = tensors[key]
            layers.append(FusionLayerParams(**kwargs))
        return FusionParams(
            lift_weight=tensors["lift.weight"],
            lift_bias=tensors["lift.bias"],
            layers=layers,
            proj_weight=tensors["proj.weight"],
            proj_bias=tensors["proj.bias"],
        )

    def save(self, path: str | Path) -> None:
        formats.write_checkpoint(path, self.flatten())

    @staticmethod
    def load(path: str | Path) -> "FusionParams":
        return FusionParams.from_flat(formats.read_checkpoint(path))


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_params(
    d_node: int,
    d_model: int,
    d_llm: int,
    layer_count: int,
    rng: np.random.Generator,
    separate_edge_weights: bool = False,
) -> FusionParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) matrices, zero alpha, unit gains.

    Zero alpha starts both class embeddings at 0.5, an even prior between the
    target and related videos.
    """
    if d_model == d_node:
        lift_weight = np.eye(d_node)
    else:
        lift_weight = _uniform(rng, (d_node, d_model), d_node)
    lift_bias = np.zeros(d_model)
    layers = []
    for _ in range(layer_count):
        layer = FusionLayerParams(
            gat_weight=_uniform(rng, (d_model, d_model), d_model),
            gat_attn=_uniform(rng, (2 * d_model,), 2 * d_model),
            q_weight=_uniform(rng, (d_model, d_model), d_model),
            k_weight=_uniform(rng, (d_model, d_model), d_model),
            v_weight=_uniform(rng, (d_model, d_model), d_model),
            alpha=np.zeros(d_model),
            gat_gain=np.ones(d_model),
            cga_gain=np.ones(d_model),
        )
        if separate_edge_weights:
            layer.gat_weight_inter = _uniform(rng, (d_model, d_model), d_model)
            layer.gat_attn_inter = _uniform(rng, (2 * d_model,), 2 * d_model)
        layers.append(layer)
    return FusionParams(
        lift_weight=lift_weight,
        lift_bias=lift_bias,
        layers=layers,
        proj_weight=_uniform(rng, (d_model, d_llm), d_model),
        proj_bias=np.zeros(d_llm),
    )
