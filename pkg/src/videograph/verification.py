"""The full invariant suite behind the `verify` subcommand.

Each criterion is a named check returning pass/fail with a one-line detail.
The acceptance test module runs the same functions, so the CLI report and the
test suite can never disagree.
"""

from __future__ import annotations

import filecmp
import math
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import corpus as corpus_io
from . import retrieval
from .config import PipelineConfig
from .fusion import (
    FusionInput,
    FusionParams,
    class_embeddings,
    cross_graph_attention,
    gat_layer,
    gfm_forward,
    gfm_gradients,
    init_params,
    loss_sum_squares,
)
from .fusion.ops import CgaTrace, GatTrace
from .fusion.reference import cga_reference, gat_reference
from .graph import (
    SUBJECT,
    OBJECT,
    BoundingBox,
    InterEdge,
    Tracklet,
    Triplet,
    build_video_graph,
    filter_ungrounded,
    validate_graph,
)
from .pipeline import run_pipeline
from .prompting import (
    TokenBlockRef,
    assemble_naive_prompt,
    assemble_prompt,
    count_tokens,
    default_template,
)
from .structuring import SyntheticFeatureSource, detect_scenes


@dataclass
class CriterionResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name} ({self.seconds:.2f}s): {self.detail}"


# -- shared random instances ---------------------------------------------------------


def random_fusion_instance(
    rng: np.random.Generator,
    *,
    max_nodes: int = 10,
    d_node: int = 8,
    d_model: int = 8,
    d_llm: int = 8,
    layers: int = 2,
    n_related: int = 2,
    separate_edge_weights: bool = False,
    allow_empty_related: bool = True,
) -> tuple[FusionInput, list[FusionInput], FusionParams]:
    """A small random problem: graphs with arbitrary directed edges plus params."""

    def random_input(owner: str, min_nodes: int) -> FusionInput:
        n = int(rng.integers(min_nodes, max_nodes + 1))
        features = rng.standard_normal((n, d_node))
        pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
        count = int(rng.integers(0, len(pairs) + 1)) if pairs else 0
        chosen = sorted(rng.choice(len(pairs), size=count, replace=False)) if count else []
        edges = np.array([pairs[k] for k in chosen], dtype=np.intp).reshape(-1, 2)
        types = rng.integers(0, 2, size=len(edges)).astype(np.int8)
        return FusionInput(owner, features, edges, types)

    target = random_input("target", 1)
    related = [
        random_input(f"rel{k}", 0 if allow_empty_related else 1) for k in range(n_related)
    ]
    params = init_params(
        d_node, d_model, d_llm, layers, rng, separate_edge_weights=separate_edge_weights
    )
    for layer in params.layers:
        layer.alpha[:] = rng.uniform(-1.0, 1.0, size=d_model)
        layer.gat_gain[:] = rng.uniform(0.5, 1.5, size=d_model)
        layer.cga_gain[:] = rng.uniform(0.5, 1.5, size=d_model)
    return target, related, params


def finite_difference_gradients(
    params: FusionParams,
    target: FusionInput,
    related: list[FusionInput],
    h: float = 1e-5,
) -> dict[str, np.ndarray]:
    """Central differences of the probe loss for every parameter entry."""
    grads: dict[str, np.ndarray] = {}
    for name, tensor in params.flatten().items():
        grad = np.zeros_like(tensor)
        flat = tensor.reshape(-1)
        for k in range(flat.size):
            original = flat[k]
            flat[k] = original + h
            plus = loss_sum_squares(params, target, related)
            flat[k] = original - h
            minus = loss_sum_squares(params, target, related)
            flat[k] = original
            grad.reshape(-1)[k] = (plus - minus) / (2.0 * h)
        grads[name] = grad
    return grads


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    """Max of |a - b| / max(1, |a|, |b|) over all entries."""
    if a.size == 0:
        return 0.0
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / denom))


def brute_force_top_n(
    entries: list[retrieval.VideoVector],
    query: np.ndarray,
    n: int,
    exclude: set[str],
) -> list[tuple[str, float]]:
    """Per-entry cosine scan, independent of the index kernel."""
    query = np.asarray(query, dtype=np.float64)
    q_norm = math.sqrt(float(np.dot(query, query)))
    scored = []
    for entry in entries:
        if entry.video_id in exclude:
            continue
        vector = np.asarray(entry.vector, dtype=np.float64)
        v_norm = math.sqrt(float(np.dot(vector, vector)))
        scored.append((entry.video_id, float(np.dot(vector, query)) / (v_norm * q_norm)))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:n]


# -- hand-enumerated construction scenario ---------------------------------------


def hand_scenario():
    """Three keyframes, five triplets, two tracks, with the expected graph
    enumerated by hand from the construction rules."""
    man0 = BoundingBox(10, 10, 50, 100, 0)
    cup0 = BoundingBox(70, 40, 20, 20, 0)
    hat0 = BoundingBox(15, 5, 30, 15, 0)
    man5 = BoundingBox(12, 10, 50, 100, 5)
    cup5 = BoundingBox(72, 42, 20, 20, 5)
    table5 = BoundingBox(60, 80, 80, 40, 5)
    man9 = BoundingBox(14, 10, 50, 100, 9)
    door9 = BoundingBox(0, 0, 40, 120, 9)

    triplets = [
        Triplet("man", "holds", "cup", 0),
        Triplet("man", "wears", "hat", 0),
        Triplet("man", "lifts", "cup", 5),
        Triplet("cup", "on", "table", 5),
        Triplet("man", "opens", "door", 9),
    ]
    groundings = {
        (0, SUBJECT): man0, (0, OBJECT): cup0,
        (1, SUBJECT): man0, (1, OBJECT): hat0,
        (2, SUBJECT): man5, (2, OBJECT): cup5,
        (3, SUBJECT): cup5, (3, OBJECT): table5,
        (4, SUBJECT): man9, (4, OBJECT): door9,
    }
    tracklets = [
        Tracklet(1, ((0, man0), (5, man5), (9, man9))),
        Tracklet(2, ((0, cup0), (5, cup5))),
    ]
    expected_nodes = [
        (0, 0, "man", 1),
        (1, 0, "cup", 2),
        (2, 0, "hat", None),
        (3, 5, "man", 1),
        (4, 5, "cup", 2),
        (5, 5, "table", None),
        (6, 9, "man", 1),
        (7, 9, "door", None),
    ]
    expected_intra = [
        (0, 1, "holds"),
        (0, 2, "wears"),
        (3, 4, "lifts"),
        (4, 5, "on"),
        (6, 7, "opens"),
    ]
    expected_inter = {
        (0, 3, 1), (3, 0, 1), (3, 6, 1), (6, 3, 1), (1, 4, 2), (4, 1, 2),
    }
    return {
        "keyframes": [0, 5, 9],
        "triplets": triplets,
        "groundings": groundings,
        "tracklets": tracklets,
        "expected_nodes": expected_nodes,
        "expected_intra": expected_intra,
        "expected_inter": expected_inter,
    }


# -- criteria ------------------------------------------------------------------------


def check_context_accounting(config: PipelineConfig) -> tuple[bool, str]:
    template = default_template()
    question = "What is the man preparing?"
    video_count = config.frames_per_video * config.tokens_per_frame

    target_video = TokenBlockRef("target", video_count, "video:target")
    related_videos = [
        TokenBlockRef(f"rel{i}", video_count, f"video:rel{i}") for i in range(5)
    ]
    target_graph = TokenBlockRef("target", 60, "tokens:target")
    related_graphs = [TokenBlockRef(f"rel{i}", 40, f"tokens:rel{i}") for i in range(5)]

    single = assemble_prompt(target_video, None, [], question, template)
    naive = assemble_naive_prompt(target_video, related_videos, question, template)
    structured = assemble_prompt(
        target_video, target_graph, related_graphs, question, template,
        graph_token_cap=config.graph_token_cap,
    )

    totals = {
        "single": count_tokens(single, frames_per_video=config.frames_per_video,
                               tokens_per_frame=config.tokens_per_frame).total,
        "naive": count_tokens(naive, frames_per_video=config.frames_per_video,
                              tokens_per_frame=config.tokens_per_frame).total,
        "structured": count_tokens(structured, frames_per_video=config.frames_per_video,
                                   tokens_per_frame=config.tokens_per_frame).total,
    }
    targets = {"single": 2100, "naive": 12500, "structured": 2300}
    ok = all(abs(totals[k] - targets[k]) <= 0.10 * targets[k] for k in targets)
    detail = ", ".join(f"{k}={totals[k]} (target {targets[k]}+-10%)" for k in targets)
    return ok, detail


def check_class_embeddings(rng: np.random.Generator) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(1000):
        width = int(rng.integers(1, 64))
        alpha = rng.standard_normal(width) * rng.uniform(0.1, 20.0)
        ce = class_embeddings(alpha)
        worst = max(worst, float(np.max(np.abs(ce.ce_tar + ce.ce_rel - 1.0))))
    probes = class_embeddings(np.array([0.0, math.log(3.0)]))
    exact = probes.ce_tar[0] == 0.5 and probes.ce_tar[1] == 0.75
    ok = worst <= 1e-15 and exact
    return ok, f"max |ce_tar+ce_rel-1| = {worst:.1e}, probes exact: {exact}"


def check_permutation_invariance(rng: np.random.Generator) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(100):
        n_related = int(rng.integers(2, 6))
        target, related, params = random_fusion_instance(
            rng, n_related=n_related, allow_empty_related=False
        )
        base = gfm_forward(target, related, params).target_tokens
        perm = [related[i] for i in rng.permutation(len(related))]
        permuted = gfm_forward(target, perm, params).target_tokens
        worst = max(worst, float(np.max(np.abs(base - permuted))))
    return worst < 1e-9, f"max |delta| over 100 instances = {worst:.2e}"


def check_related_passthrough(rng: np.random.Generator) -> tuple[bool, str]:
    failures = 0
    for _ in range(50):
        d = int(rng.integers(2, 12))
        n_tar = int(rng.integers(1, 8))
        n_rel = int(rng.integers(0, 10))
        x_tar = rng.standard_normal((n_tar, d))
        x_rel = rng.standard_normal((n_rel, d))
        out = cross_graph_attention(
            x_tar, x_rel,
            rng.standard_normal((d, d)), rng.standard_normal((d, d)),
            rng.standard_normal((d, d)), rng.standard_normal(d),
        )
        if out[n_tar:].tobytes() != x_rel.tobytes():
            failures += 1
    return failures == 0, f"bitwise pass-through failures: {failures}/50"


def check_attention_oracles(rng: np.random.Generator) -> tuple[bool, str]:
    worst = 0.0
    for i in range(200):
        n = int(rng.integers(1, 11))
        d = int(rng.integers(2, 17))
        tokens = rng.standard_normal((n, d))
        pairs = [(a, b) for a in range(n) for b in range(n) if a != b]
        count = int(rng.integers(0, len(pairs) + 1)) if pairs else 0
        chosen = sorted(rng.choice(len(pairs), size=count, replace=False)) if count else []
        edges = np.array([pairs[k] for k in chosen], dtype=np.intp).reshape(-1, 2)
        weight = rng.standard_normal((d, d))
        attn = rng.standard_normal(2 * d)
        got = gat_layer(tokens, edges, weight, attn)
        want = gat_reference(tokens, edges, weight, attn)
        worst = max(worst, float(np.max(np.abs(got - want))))

        n_rel = int(rng.integers(0, 11))
        x_rel = rng.standard_normal((n_rel, d))
        wq, wk, wv = (rng.standard_normal((d, d)) for _ in range(3))
        alpha = rng.standard_normal(d)
        got = cross_graph_attention(tokens, x_rel, wq, wk, wv, alpha)
        want = cga_reference(tokens, x_rel, wq, wk, wv, alpha)
        worst = max(worst, float(np.max(np.abs(got - want))))
    return worst <= 1e-10, f"max |kernel - reference| = {worst:.2e}"


def check_gradients(
    rng: np.random.Generator, inject_fault: bool = False
) -> tuple[bool, str]:
    worst = 0.0
    for i in range(20):
        separate = i % 5 == 4
        target, related, params = random_fusion_instance(
            rng,
            max_nodes=6,
            n_related=int(rng.integers(0, 3)),
            separate_edge_weights=separate,
        )
        grads = gfm_gradients(params, target, related)
        if inject_fault:
            grads["layers.0.q_weight"] = grads["layers.0.q_weight"] + 0.05
        numeric = finite_difference_gradients(params, target, related)
        for name in numeric:
            worst = max(worst, relative_error(grads[name], numeric[name]))
    return worst < 1e-4, f"max relative error vs central differences = {worst:.2e}"


def check_attention_normalization(
    config: PipelineConfig, corpus_dir: Path, workdir: Path
) -> tuple[bool, str]:
    manifest = corpus_io.manifest(corpus_dir)
    target = manifest["videos"][0]
    result = run_pipeline(
        config, target, corpus_dir=corpus_dir,
        output_dir=workdir / "normalization-run", trace=True,
    )
    worst = 0.0
    rows = 0
    for trace in result.traces:
        if isinstance(trace, GatTrace):
            if trace.node_count == 0:
                continue
            sums = np.bincount(trace.dst, weights=trace.weights, minlength=trace.node_count)
            worst = max(worst, float(np.max(np.abs(sums - 1.0))))
            rows += trace.node_count
        elif isinstance(trace, CgaTrace):
            if trace.weights.shape[0] == 0:
                continue
            sums = trace.weights.sum(axis=1)
            worst = max(worst, float(np.max(np.abs(sums - 1.0))))
            rows += trace.weights.shape[0]
    return worst <= 1e-9, f"{rows} attention rows, max |sum - 1| = {worst:.2e}"


def check_graph_construction() -> tuple[bool, str]:
    scenario = hand_scenario()
    source = SyntheticFeatureSource(16, seed=3)
    graph = build_video_graph(
        "hand", scenario["keyframes"], scenario["triplets"], scenario["groundings"],
        scenario["tracklets"], source,
    )
    got_nodes = [(n.node_id, n.keyframe, n.label, n.track_id) for n in graph.nodes]
    nodes_ok = got_nodes == scenario["expected_nodes"]
    intra_ok = [tuple(e) for e in graph.intra_edges] == scenario["expected_intra"]
    inter_ok = set(map(tuple, graph.inter_edges)) == scenario["expected_inter"]
    closed = all(
        InterEdge(e.dst, e.src, e.track_id) in set(graph.inter_edges)
        for e in graph.inter_edges
    )
    report_ok = validate_graph(graph).ok

    partial = dict(scenario["groundings"])
    del partial[(1, OBJECT)]
    kept = filter_ungrounded(scenario["triplets"], partial)
    grounded_ok = all(
        (scenario["triplets"].index(t), SUBJECT) in partial
        and (scenario["triplets"].index(t), OBJECT) in partial
        for t in kept
    ) and len(kept) == len(scenario["triplets"]) - 1

    ok = nodes_ok and intra_ok and inter_ok and closed and report_ok and grounded_ok
    return ok, (
        f"nodes={nodes_ok}, intra={intra_ok}, inter={inter_ok}, "
        f"reversal-closed={closed}, valid={report_ok}, filter={grounded_ok}"
    )


def check_scene_detection() -> tuple[bool, str]:
    constant = np.tile(np.full(8, 0.4), (20, 1))
    single = detect_scenes(constant, 0.15, 8)
    case1 = len(single) == 1 and (single[0].start, single[0].end, single[0].keyframe) == (0, 19, 9)

    jump = constant.copy()
    jump[10:] = 0.9
    two = detect_scenes(jump, 0.15, 8)
    case2 = [(s.start, s.end, s.keyframe) for s in two] == [(0, 9, 4), (10, 19, 14)]

    alternating = np.array([np.full(8, 0.0 if t % 2 == 0 else 1.0) for t in range(12)])
    guarded = detect_scenes(alternating, 0.15, 3)
    case3 = [s.start for s in guarded] == [0, 3, 6, 9]

    ok = case1 and case2 and case3
    return ok, f"constant={case1}, single-jump={case2}, min-length-guard={case3}"


def check_retrieval_exactness(rng: np.random.Generator) -> tuple[bool, str]:
    dim = 32
    entries = [
        retrieval.VideoVector(f"v{i:04d}", rng.standard_normal(dim)) for i in range(500)
    ]
    index = retrieval.build_index(entries)
    mismatches = 0
    scale_violations = 0
    for _ in range(1000):
        query_vec = rng.standard_normal(dim)
        query = retrieval.VideoVector("q", query_vec)
        n = int(rng.integers(1, 12))
        exclude = {entries[int(k)].video_id for k in rng.integers(0, 500, size=3)}
        got = retrieval.query_top_n(index, query, n, exclude)
        want = brute_force_top_n(entries, query_vec, n, exclude)
        if [g[0] for g in got] != [w[0] for w in want]:
            mismatches += 1
        elif any(abs(g[1] - w[1]) > 1e-12 for g, w in zip(got, want)):
            mismatches += 1
        for scale in rng.uniform(0.1, 10.0, size=3):
            scaled = retrieval.query_top_n(
                index, retrieval.VideoVector("q", scale * query_vec), n, exclude
            )
            if [g[0] for g in got] != [s[0] for s in scaled]:
                scale_violations += 1
    ok = mismatches == 0 and scale_violations == 0
    return ok, f"mismatches={mismatches}/1000, scale violations={scale_violations}"


def _tree_bytes(root: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(root)): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file()
    }


def check_pipeline_determinism(
    config: PipelineConfig, corpus_dir: Path, workdir: Path
) -> tuple[bool, str]:
    manifest = corpus_io.manifest(corpus_dir)
    target = manifest["videos"][0]
    out_a = workdir / "determinism-a"
    out_b = workdir / "determinism-b"
    run_pipeline(config, target, corpus_dir=corpus_dir, output_dir=out_a)
    run_pipeline(config, target, corpus_dir=corpus_dir, output_dir=out_b)
    tree_a = _tree_bytes(out_a)
    tree_b = _tree_bytes(out_b)
    same_names = set(tree_a) == set(tree_b)
    diffs = [name for name in tree_a if same_names and tree_a[name] != tree_b[name]]
    ok = same_names and not diffs
    return ok, f"{len(tree_a)} artifacts, identical: {ok}" + (
        f", first diff: {diffs[0]}" if diffs else ""
    )


CRITERIA = (
    "context-accounting",
    "class-embeddings",
    "permutation-invariance",
    "related-passthrough",
    "attention-oracles",
    "gradient-check",
    "attention-normalization",
    "graph-construction",
    "scene-detection",
    "retrieval-exactness",
    "pipeline-determinism",
)

_CORPUS_CRITERIA = {"attention-normalization", "pipeline-determinism"}


def ensure_corpus(config: PipelineConfig, workdir: Path, video_count: int = 20) -> Path:
    corpus_dir = workdir / "corpus"
    if not (corpus_dir / "manifest.json").exists():
        corpus_io.generate_corpus(
            corpus_dir,
            seed=config.seed,
            video_count=video_count,
            d_node=config.d_node,
            min_scene_len=config.min_scene_len,
            scene_threshold=config.scene_threshold,
        )
    return corpus_dir


def verify(
    config: PipelineConfig | None = None,
    criteria: list[str] | None = None,
    *,
    workdir: str | Path | None = None,
    inject_gradient_fault: bool = False,
) -> list[CriterionResult]:
    """Run the requested criteria (all by default) and collect results."""
    config = config or PipelineConfig()
    selected = list(criteria) if criteria else list(CRITERIA)
    unknown = [c for c in selected if c not in CRITERIA]
    if unknown:
        raise ValueError(f"unknown criteria: {unknown}; available: {list(CRITERIA)}")

    workdir = Path(workdir) if workdir is not None else Path(
        tempfile.mkdtemp(prefix="videograph-verify-")
    )
    workdir.mkdir(parents=True, exist_ok=True)
    corpus_dir: Path | None = None
    if any(c in _CORPUS_CRITERIA for c in selected):
        corpus_dir = ensure_corpus(config, workdir)

    results: list[CriterionResult] = []
    for name in CRITERIA:
        if name not in selected:
            continue
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.seed, 77])))
        started = time.perf_counter()
        try:
            if name == "context-accounting":
                passed, detail = check_context_accounting(config)
            elif name == "class-embeddings":
                passed, detail = check_class_embeddings(rng)
            elif name == "permutation-invariance":
                passed, detail = check_permutation_invariance(rng)
            elif name == "related-passthrough":
                passed, detail = check_related_passthrough(rng)
            elif name == "attention-oracles":
                passed, detail = check_attention_oracles(rng)
            elif name == "gradient-check":
                passed, detail = check_gradients(rng, inject_fault=inject_gradient_fault)
            elif name == "attention-normalization":
                passed, detail = check_attention_normalization(config, corpus_dir, workdir)
            elif name == "graph-construction":
                passed, detail = check_graph_construction()
            elif name == "scene-detection":
                passed, detail = check_scene_detection()
            elif name == "retrieval-exactness":
                passed, detail = check_retrieval_exactness(rng)
            else:
                passed, detail = check_pipeline_determinism(config, corpus_dir, workdir)
        except Exception as exc:  # a crashed criterion is a failed criterion
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append(
            CriterionResult(name, passed, detail, time.perf_counter() - started)
        )
    return results
