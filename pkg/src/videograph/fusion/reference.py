"""Naive loop-based references for the attention kernels.

These deliberately avoid the vectorised segment/softmax machinery: every
score, exponential and weighted sum is materialised one element at a time.
They exist so the optimised kernels can be checked against an implementation
that shares no code with them.
"""

from __future__ import annotations

import math

import numpy as np


def gat_reference(
    tokens: np.ndarray,
    edges,
    weight: np.ndarray,
    attn: np.ndarray,
    slope: float = 0.2,
    edge_types=None,
    weight_inter: np.ndarray | None = None,
    attn_inter: np.ndarray | None = None,
) -> np.ndarray:
    tokens = np.asarray(tokens, dtype=np.float64)
    n, d = tokens.shape
    edges = [(int(s), int(t)) for s, t in np.asarray(edges).reshape(-1, 2)]
    if edge_types is None:
        edge_types = [0] * len(edges)
    params = {0: (np.asarray(weight, dtype=np.float64), np.asarray(attn, dtype=np.float64))}
    if weight_inter is not None:
        params[1] = (
            np.asarray(weight_inter, dtype=np.float64),
            np.asarray(attn_inter, dtype=np.float64),
        )

    out = np.zeros_like(tokens)
    for i in range(n):
        # in-neighbourhood plus the implicit self-loop (self-loop is intra-typed)
        incoming = [(i, 0)]
        for (src, dst), etype in zip(edges, edge_types):
            if dst == i and src != i:
                etype = int(etype) if 1 in params else 0
                if (src, etype) not in incoming:
                    incoming.append((src, etype))
        scores = []
        messages = []
        for j, etype in incoming:
            w, a = params[etype]
            wh_i = w.T @ tokens[i]
            wh_j = w.T @ tokens[j]
            raw = float(np.dot(a[:d], wh_i) + np.dot(a[d:], wh_j))
            scores.append(raw if raw > 0 else slope * raw)
            messages.append(wh_j)
        peak = max(scores)
        exps = [math.exp(s - peak) for s in scores]
        total = sum(exps)
        row = np.zeros(d)
        for e, m in zip(exps, messages):
            row += (e / total) * m
        out[i] = row
    return out


def cga_reference(
    x_tar: np.ndarray,
    x_rel: np.ndarray | None,
    q_weight: np.ndarray,
    k_weight: np.ndarray,
    v_weight: np.ndarray,
    alpha: np.ndarray,
) -> np.ndarray:
    x_tar = np.asarray(x_tar, dtype=np.float64)
    n_tar, d = x_tar.shape
    if x_rel is None:
        x_rel = np.zeros((0, d))
    x_rel = np.asarray(x_rel, dtype=np.float64)

    ce_tar = np.array([1.0 / (1.0 + math.exp(-a)) for a in alpha])
    ce_rel = 1.0 - ce_tar

    keys = []
    values = []
    for row in x_tar:
        keys.append(k_weight.T @ row + ce_tar)
        values.append(v_weight.T @ row + ce_tar)
    for row in x_rel:
        keys.append(k_weight.T @ row + ce_rel)
        values.append(v_weight.T @ row + ce_rel)

    fused = np.zeros((n_tar, d))
    scale = 1.0 / math.sqrt(d)
    for i in range(n_tar):
        q = q_weight.T @ x_tar[i] + ce_tar
        scores = [scale * float(np.dot(q, k)) for k in keys]
        peak = max(scores)
        exps = [math.exp(s - peak) for s in scores]
        total = sum(exps)
        row = np.zeros(d)
        for e, v in zip(exps, values):
            row += (e / total) * v
        fused[i] = row
    return np.concatenate([fused, x_rel], axis=0)
