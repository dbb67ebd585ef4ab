"""Graph fusion engine: stacked graph attention + cross-graph attention."""

from .ops import (
    ClassEmbeddings,
    CgaTrace,
    FusionInput,
    FusionOutput,
    GatTrace,
    LEAKY_SLOPE,
    RMSNORM_EPS,
    class_embeddings,
    cross_graph_attention,
    gat_layer,
    gfm_forward,
    gfm_gradients,
    loss_sum_squares,
    project_tokens,
    rms_norm,
)
from .params import (
    EDGE_TYPE_TENSOR_NAMES,
    LAYER_TENSOR_NAMES,
    FusionLayerParams,
    FusionParams,
    init_params,
)

__all__ = [
    "ClassEmbeddings",
    "CgaTrace",
    "FusionInput",
    "FusionOutput",
    "GatTrace",
    "LEAKY_SLOPE",
    "RMSNORM_EPS",
    "class_embeddings",
    "cross_graph_attention",
    "gat_layer",
    "gfm_forward",
    "gfm_gradients",
    "loss_sum_squares",
    "project_tokens",
    "rms_norm",
    "EDGE_TYPE_TENSOR_NAMES",
    "LAYER_TENSOR_NAMES",
    "FusionLayerParams",
    "FusionParams",
    "init_params",
]
