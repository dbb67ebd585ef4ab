"""Fusion forward pass and gradients.

Each fusion layer runs graph attention over every video independently (merged
intra/inter neighbourhoods plus an implicit self-loop per node), then lets the
target video's tokens attend over the concatenation of all videos' tokens,
with a sigmoid class-embedding pair telling target keys/values apart from
related ones. Both blocks are pre-normed (RMSNorm) and residual; there is no
feed-forward block. Related tokens pass through cross-graph attention
unchanged. After the stack, an affine projection lifts tokens to the LLM
embedding width.

The forward pass is built on the autodiff tape, so `gfm_gradients` is exact
reverse-mode differentiation of the same code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeMismatchError
from ..graph import VideoGraph
from . import autodiff as ad
from .autodiff import Var
from .params import FusionParams

LEAKY_SLOPE = 0.2
RMSNORM_EPS = 1e-6

INTRA_EDGE = 0
INTER_EDGE = 1


@dataclass(frozen=True)
class ClassEmbeddings:
    """Complementary per-channel embeddings: ce_tar + ce_rel == 1."""

    ce_tar: np.ndarray
    ce_rel: np.ndarray


def class_embeddings(alpha: np.ndarray) -> ClassEmbeddings:
    ce_tar = 1.0 / (1.0 + np.exp(-np.asarray(alpha, dtype=np.float64)))
    return ClassEmbeddings(ce_tar=ce_tar, ce_rel=1.0 - ce_tar)


def rms_norm(x: np.ndarray, gain: np.ndarray, eps: float = RMSNORM_EPS) -> np.ndarray:
    """gain * x / sqrt(mean(x^2) + eps), row-wise for 2-D input."""
    x = np.asarray(x, dtype=np.float64)
    gain = np.asarray(gain, dtype=np.float64)
    squeeze = x.ndim == 1
    rows = np.atleast_2d(x)
    if gain.shape != (rows.shape[1],):
        raise ShapeMismatchError(f"gain shape {gain.shape} does not match width {rows.shape[1]}")
    ms = np.mean(rows * rows, axis=1, keepdims=True)
    out = rows / np.sqrt(ms + eps) * gain
    return out[0] if squeeze else out


@dataclass
class FusionInput:
    """One video's node tokens plus its directed attention adjacency.

    Rows follow the graph token order (keyframe, then node id). Edges carry
    no self-loops; attention adds them implicitly. `edge_types` distinguishes
    predicate (intra-frame) from track (inter-frame) links for the optional
    per-edge-type parameterisation.
    """

    owner: str
    features: np.ndarray  # (n, d_node)
    edges: np.ndarray  # (E, 2) int, (src, dst)
    edge_types: np.ndarray  # (E,) int

    @staticmethod
    def from_graph(graph: VideoGraph, d_node: int | None = None) -> "FusionInput":
        nodes = graph.ordered_nodes()
        if nodes:
            features = np.stack([n.feature for n in nodes]).astype(np.float64)
            if d_node is not None and features.shape[1] != d_node:
                raise ShapeMismatchError(
                    f"{graph.video_id}: node features are {features.shape[1]}-d, expected {d_node}"
                )
        else:
            if d_node is None:
                raise ValueError(
                    f"{graph.video_id}: empty graph needs an explicit feature dimension"
                )
            features = np.zeros((0, d_node))
        row = {n.node_id: i for i, n in enumerate(nodes)}
        typed: dict[tuple[int, int], int] = {}
        for src, dst, _ in graph.intra_edges:
            typed[(row[src], row[dst])] = INTRA_EDGE
        for src, dst, _ in graph.inter_edges:
            typed[(row[src], row[dst])] = INTER_EDGE
        ordered = sorted(typed, key=lambda e: (e[1], e[0]))
        edges = np.array(ordered, dtype=np.intp).reshape(len(ordered), 2)
        types = np.array([typed[e] for e in ordered], dtype=np.int8)
        return FusionInput(graph.video_id, features, edges, types)

    @property
    def node_count(self) -> int:
        return self.features.shape[0]


@dataclass
class GatTrace:
    layer: int
    owner: str
    weights: np.ndarray  # per-edge attention, self-loops included
    dst: np.ndarray
    node_count: int
    head: int = 0


@dataclass
class CgaTrace:
    layer: int
    weights: np.ndarray  # (target rows, key rows)
    head: int = 0


@dataclass
class FusionOutput:
    target_tokens: np.ndarray
    related_tokens: list[np.ndarray]
    traces: list = field(default_factory=list)


# -- tape-level blocks -----------------------------------------------------------


def _rms_norm_var(x: Var, gain: Var, eps: float) -> Var:
    width = x.value.shape[1]
    ms = ad.mul(ad.sum_(ad.mul(x, x), axis=1, keepdims=True), 1.0 / width)
    inv = ad.power(ad.add(ms, eps), -0.5)
    return ad.mul(ad.mul(x, inv), gain)


def _edge_groups(
    n: int,
    edges: np.ndarray,
    edge_types: np.ndarray,
    weights: list[Var],
    attns: list[Var],
):
    """Split (self-loops + edges) into parameter groups.

    With one parameter set everything lands in group 0; with per-edge-type
    weights, inter-frame edges use the second set while self-loops stay with
    the intra set."""
    loops = np.arange(n, dtype=np.intp)
    if len(weights) == 1:
        src = np.concatenate([loops, edges[:, 0]]) if len(edges) else loops
        dst = np.concatenate([loops, edges[:, 1]]) if len(edges) else loops
        return [(src, dst, weights[0], attns[0])]
    intra = edges[edge_types == INTRA_EDGE] if len(edges) else edges
    inter = edges[edge_types == INTER_EDGE] if len(edges) else edges
    src0 = np.concatenate([loops, intra[:, 0]]) if len(intra) else loops
    dst0 = np.concatenate([loops, intra[:, 1]]) if len(intra) else loops
    groups = [(src0, dst0, weights[0], attns[0])]
    if len(inter):
        groups.append((inter[:, 0].copy(), inter[:, 1].copy(), weights[1], attns[1]))
    return groups


def _check_heads(d: int, heads: int) -> int:
    if heads < 1 or d % heads != 0:
        raise ShapeMismatchError(f"width {d} is not divisible into {heads} heads")
    return d // heads


def _gat_var(
    x: Var,
    edges: np.ndarray,
    edge_types: np.ndarray,
    weights: list[Var],
    attns: list[Var],
    slope: float,
    heads: int = 1,
) -> tuple[Var, list[np.ndarray], np.ndarray]:
    """One graph-attention application.

    Heads partition the projected width and the attention vector into equal
    blocks, each with its own neighbourhood softmax; head outputs are
    re-concatenated. Returns (output, per-head attention, dst)."""
    n, d = x.value.shape
    head_dim = _check_heads(d, heads)
    groups = _edge_groups(n, edges, edge_types, weights, attns)
    projected = [ad.matmul(x, weight) for _, _, weight, _ in groups]
    dst_parts = [dst for _, dst, _, _ in groups]
    all_dst = np.concatenate(dst_parts) if dst_parts else np.zeros(0, dtype=np.intp)

    head_outputs: list[Var] = []
    head_attention: list[np.ndarray] = []
    for h in range(heads):
        lo, hi = h * head_dim, (h + 1) * head_dim
        score_parts: list[Var] = []
        sliced: list[Var] = []
        for (src, dst, _, attn), wh in zip(groups, projected):
            wh_h = ad.narrow_cols(wh, lo, hi)
            sliced.append(wh_h)
            a_dst = ad.reshape(ad.narrow(attn, lo, hi), (head_dim, 1))
            a_src = ad.reshape(ad.narrow(attn, d + lo, d + hi), (head_dim, 1))
            s_dst = ad.reshape(ad.matmul(wh_h, a_dst), (n,))
            s_src = ad.reshape(ad.matmul(wh_h, a_src), (n,))
            raw = ad.add(ad.take_rows(s_dst, dst), ad.take_rows(s_src, src))
            score_parts.append(ad.leaky_relu(raw, slope))

        scores = score_parts[0] if len(score_parts) == 1 else ad.concat_rows(score_parts)
        attention = ad.segment_softmax(scores, all_dst, n)

        message_parts: list[Var] = []
        offset = 0
        for (src, dst, _, _), wh_h in zip(groups, sliced):
            count = len(src)
            weight_slice = ad.narrow(attention, offset, offset + count)
            offset += count
            messages = ad.mul(
                ad.reshape(weight_slice, (count, 1)), ad.take_rows(wh_h, src)
            )
            message_parts.append(messages)
        merged = (
            message_parts[0] if len(message_parts) == 1 else ad.concat_rows(message_parts)
        )
        head_outputs.append(ad.segment_sum(merged, all_dst, n))
        head_attention.append(attention.value)

    out = head_outputs[0] if heads == 1 else ad.concat_cols(head_outputs)
    return out, head_attention, all_dst


def _cga_var(
    x_tar: Var,
    x_rel: Var | None,
    q_weight: Var,
    k_weight: Var,
    v_weight: Var,
    alpha: Var,
) -> tuple[Var, np.ndarray]:
    """Target-queries attention over target+related keys; returns (O_tar, map)."""
    d = x_tar.value.shape[1]
    ce_tar = ad.sigmoid(alpha)
    ce_rel = ad.sub(1.0, ce_tar)
    q = ad.add(ad.matmul(x_tar, q_weight), ce_tar)
    keys = ad.add(ad.matmul(x_tar, k_weight), ce_tar)
    values = ad.add(ad.matmul(x_tar, v_weight), ce_tar)
    if x_rel is not None and x_rel.value.shape[0] > 0:
        keys = ad.concat_rows([keys, ad.add(ad.matmul(x_rel, k_weight), ce_rel)])
        values = ad.concat_rows([values, ad.add(ad.matmul(x_rel, v_weight), ce_rel)])
    scores = ad.mul(ad.matmul(q, ad.transpose(keys)), 1.0 / math.sqrt(d))
    attention = ad.row_softmax(scores)
    out = ad.matmul(attention, values)
    return out, attention.value


def _layer_tensors(tensors: dict[str, Var], i: int) -> dict[str, Var]:
    prefix = f"layers.{i}."
    return {
        name[len(prefix) :]: var
        for name, var in tensors.items()
        if name.startswith(prefix)
    }


def _build_stack(
    tensors: dict[str, Var],
    target: FusionInput,
    related: list[FusionInput],
    *,
    slope: float = LEAKY_SLOPE,
    eps: float = RMSNORM_EPS,
    traces: list | None = None,
) -> list[Var]:
    """Lift -> L x (per-video GAT block, cross-graph block) -> projection."""
    inputs = [target] + list(related)
    d_node = tensors["lift.weight"].value.shape[0]
    for fi in inputs:
        if fi.features.shape[1] != d_node:
            raise ShapeMismatchError(
                f"{fi.owner}: features are {fi.features.shape[1]}-d, lift expects {d_node}"
            )

    xs = [ad.add(ad.matmul(Var(fi.features), tensors["lift.weight"]), tensors["lift.bias"]) for fi in inputs]

    layer_count = 0
    while f"layers.{layer_count}.gat_weight" in tensors:
        layer_count += 1

    for i in range(layer_count):
        layer = _layer_tensors(tensors, i)
        weights = [layer["gat_weight"]]
        attns = [layer["gat_attn"]]
        if "gat_weight_inter" in layer:
            weights.append(layer["gat_weight_inter"])
            attns.append(layer["gat_attn_inter"])

        for v, fi in enumerate(inputs):
            normed = _rms_norm_var(xs[v], layer["gat_gain"], eps)
            out, attention, dst = _gat_var(
                normed, fi.edges, fi.edge_types, weights, attns, slope
            )
            xs[v] = ad.add(xs[v], out)
            if traces is not None:
                traces.append(GatTrace(i, fi.owner, attention, dst, fi.node_count))

        xt_norm = _rms_norm_var(xs[0], layer["cga_gain"], eps)
        if related:
            xr_norm = ad.concat_rows(
                [_rms_norm_var(x, layer["cga_gain"], eps) for x in xs[1:]]
            )
        else:
            xr_norm = None
        out, attention = _cga_var(
            xt_norm, xr_norm, layer["q_weight"], layer["k_weight"],
            layer["v_weight"], layer["alpha"],
        )
        xs[0] = ad.add(xs[0], out)
        if traces is not None:
            traces.append(CgaTrace(i, attention))

    return [ad.add(ad.matmul(x, tensors["proj.weight"]), tensors["proj.bias"]) for x in xs]


def _wrap_params(params: FusionParams) -> dict[str, Var]:
    return {name: Var(tensor) for name, tensor in params.flatten().items()}


# -- public operations ------------------------------------------------------------


def gat_layer(
    tokens: np.ndarray,
    edges,
    weight: np.ndarray,
    attn: np.ndarray,
    *,
    slope: float = LEAKY_SLOPE,
    edge_types=None,
    weight_inter: np.ndarray | None = None,
    attn_inter: np.ndarray | None = None,
    return_attention: bool = False,
):
    """Graph attention over the merged neighbourhood (implicit self-loops).

    h'_i is the attention-weighted sum of W h_j over in-neighbours j plus i
    itself, with scores LeakyReLU(a . [W h_i || W h_j]) softmaxed per node.
    No output nonlinearity: the layer sits inside a pre-norm residual block.
    """
    tokens = np.asarray(tokens, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    attn = np.asarray(attn, dtype=np.float64)
    n, d = tokens.shape
    if weight.shape != (d, d):
        raise ShapeMismatchError(f"weight shape {weight.shape}, expected ({d}, {d})")
    if attn.shape != (2 * d,):
        raise ShapeMismatchError(f"attention vector shape {attn.shape}, expected ({2 * d},)")
    edges = np.asarray(edges, dtype=np.intp).reshape(-1, 2)
    if edge_types is None:
        edge_types = np.zeros(len(edges), dtype=np.int8)
    edge_types = np.asarray(edge_types)
    # Neighbourhood semantics: duplicate pairs collapse, self-loops are implicit.
    seen: set[tuple[int, int]] = set()
    keep = []
    for k, (s, t) in enumerate(edges):
        if s == t or (int(s), int(t)) in seen:
            continue
        seen.add((int(s), int(t)))
        keep.append(k)
    edges = edges[keep].reshape(-1, 2)
    edge_types = edge_types[keep]
    weights = [Var(weight)]
    attns = [Var(attn)]
    if weight_inter is not None:
        weights.append(Var(np.asarray(weight_inter, dtype=np.float64)))
        attns.append(Var(np.asarray(attn_inter, dtype=np.float64)))
    out, attention, dst = _gat_var(
        Var(tokens), edges, np.asarray(edge_types), weights, attns, slope
    )
    if return_attention:
        return out.value, attention, dst
    return out.value


def cross_graph_attention(
    x_tar: np.ndarray,
    x_rel: np.ndarray | None,
    q_weight: np.ndarray,
    k_weight: np.ndarray,
    v_weight: np.ndarray,
    alpha: np.ndarray,
    *,
    return_attention: bool = False,
):
    """Scaled dot-product attention of target rows over [target, related].

    The class-embedding pair is added to the target's queries, keys and
    values and to the related keys/values. Output rows are the fused target
    followed by the related input rows verbatim. No positional encoding is
    applied across videos: related order must not matter.
    """
    x_tar = np.asarray(x_tar, dtype=np.float64)
    d = x_tar.shape[1]
    for name, m in (("q_weight", q_weight), ("k_weight", k_weight), ("v_weight", v_weight)):
        if np.asarray(m).shape != (d, d):
            raise ShapeMismatchError(f"{name} shape {np.asarray(m).shape}, expected ({d}, {d})")
    if np.asarray(alpha).shape != (d,):
        raise ShapeMismatchError(f"alpha shape {np.asarray(alpha).shape}, expected ({d},)")
    if x_rel is None:
        x_rel = np.zeros((0, d))
    x_rel = np.asarray(x_rel, dtype=np.float64)
    if x_rel.shape[1] != d:
        raise ShapeMismatchError(f"related width {x_rel.shape[1]} != target width {d}")
    out, attention = _cga_var(
        Var(x_tar),
        Var(x_rel) if x_rel.shape[0] else None,
        Var(np.asarray(q_weight, dtype=np.float64)),
        Var(np.asarray(k_weight, dtype=np.float64)),
        Var(np.asarray(v_weight, dtype=np.float64)),
        Var(np.asarray(alpha, dtype=np.float64)),
    )
    stacked = np.concatenate([out.value, x_rel], axis=0)
    if return_attention:
        return stacked, attention
    return stacked


def project_tokens(features: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map rows @ weight + bias to the LLM embedding width."""
    features = np.asarray(features, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != weight.shape[0]:
        raise ShapeMismatchError(
            f"cannot project {features.shape} through {weight.shape}"
        )
    if bias.shape != (weight.shape[1],):
        raise ShapeMismatchError(f"bias shape {bias.shape}, expected ({weight.shape[1]},)")
    return features @ weight + bias


def gfm_forward(
    target: FusionInput,
    related: list[FusionInput],
    params: FusionParams,
    *,
    trace: bool = False,
) -> FusionOutput:
    """Run the full stack; returns projected tokens per video."""
    traces: list | None = [] if trace else None
    outs = _build_stack(_wrap_params(params), target, related, traces=traces)
    return FusionOutput(
        target_tokens=outs[0].value,
        related_tokens=[o.value for o in outs[1:]],
        traces=traces if traces is not None else [],
    )


def loss_sum_squares(
    params: FusionParams, target: FusionInput, related: list[FusionInput]
) -> float:
    """Scalar probe loss: sum of squares of the target's graph tokens."""
    outs = _build_stack(_wrap_params(params), target, related)
    return float(np.sum(outs[0].value ** 2))


def gfm_gradients(
    params: FusionParams, target: FusionInput, related: list[FusionInput]
) -> dict[str, np.ndarray]:
    """Reverse-mode gradients of the sum-of-squares probe loss for every tensor."""
    tensors = _wrap_params(params)
    outs = _build_stack(tensors, target, related)
    loss = ad.sum_(ad.mul(outs[0], outs[0]))
    ad.backward(loss)
    return {
        name: (var.grad if var.grad is not None else np.zeros_like(var.value))
        for name, var in tensors.items()
    }
