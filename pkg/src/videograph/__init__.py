"""videograph: spatio-temporal video graphs, cross-graph fusion, retrieval,
and structured multi-video prompt assembly."""

__version__ = "0.1.0"

from .config import PipelineConfig
from .graph import (
    BoundingBox,
    GraphNode,
    IntraEdge,
    InterEdge,
    Tracklet,
    Triplet,
    VideoGraph,
    build_video_graph,
    filter_ungrounded,
    validate_graph,
)

__all__ = [
    "PipelineConfig",
    "BoundingBox",
    "GraphNode",
    "IntraEdge",
    "InterEdge",
    "Tracklet",
    "Triplet",
    "VideoGraph",
    "build_video_graph",
    "filter_ungrounded",
    "validate_graph",
    "__version__",
]
