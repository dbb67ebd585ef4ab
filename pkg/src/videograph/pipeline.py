"""End-to-end driver: retrieval -> structuring -> fusion -> prompt assembly.

All artifacts land under an output directory; running twice with one config
and corpus produces byte-identical files.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import corpus as corpus_io
from . import formats, retrieval
from .config import PipelineConfig
from .fusion import FusionInput, FusionParams, gfm_forward, init_params
from .graph import VideoGraph, save_graph
from .prompting import (
    AssembledPrompt,
    TokenBlockRef,
    assemble_prompt,
    count_tokens,
    default_template,
    PromptTemplate,
    save_prompt,
)
from .structuring import structure_video

log = logging.getLogger(__name__)

DEFAULT_QUESTION = "What is happening in the target video?"


@dataclass
class PipelineResult:
    target_id: str
    related: list[tuple[str, float]]
    graph_paths: list[Path]
    token_paths: list[Path]
    prompt_path: Path
    accounting_path: Path
    summary_path: Path
    prompt: AssembledPrompt
    graphs: dict[str, VideoGraph] = field(default_factory=dict)
    traces: list = field(default_factory=list)


def retrieve_related(
    config: PipelineConfig, corpus_dir: str | Path, target_id: str
) -> list[tuple[str, float]]:
    """Top-N related videos for the target, honouring the similarity band."""
    index = retrieval.load_index(Path(corpus_dir) / "vectors.vvec")
    try:
        position = index.video_ids.index(target_id)
    except ValueError:
        raise KeyError(f"target {target_id!r} is not in the retrieval store") from None
    query = retrieval.VideoVector(target_id, index.matrix[position])
    ranked = retrieval.query_top_n(index, query, len(index), exclude={target_id})
    if config.min_similarity is not None:
        ranked = [r for r in ranked if r[1] >= config.min_similarity]
    if config.max_similarity is not None:
        ranked = [r for r in ranked if r[1] <= config.max_similarity]
    return ranked[: config.n_related]


def fusion_params_for(config: PipelineConfig, checkpoint: str | Path | None = None) -> FusionParams:
    if checkpoint is not None:
        return FusionParams.load(checkpoint)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.fusion_seed)))
    return init_params(
        config.d_node,
        config.d_model,
        config.d_llm,
        config.layer_count,
        rng,
        separate_edge_weights=config.separate_edge_weights,
    )


def run_pipeline(
    config: PipelineConfig,
    target_id: str,
    *,
    corpus_dir: str | Path | None = None,
    output_dir: str | Path | None = None,
    question: str = DEFAULT_QUESTION,
    template: PromptTemplate | None = None,
    checkpoint: str | Path | None = None,
    trace: bool = False,
) -> PipelineResult:
    corpus_dir = Path(corpus_dir if corpus_dir is not None else config.corpus_dir)
    output_dir = Path(output_dir if output_dir is not None else config.output_dir)
    template = template or default_template()

    related = retrieve_related(config, corpus_dir, target_id)
    log.info("retrieved %d related videos for %s", len(related), target_id)

    graph_dir = output_dir / "graphs"
    token_dir = output_dir / "tokens"
    graph_dir.mkdir(parents=True, exist_ok=True)
    token_dir.mkdir(parents=True, exist_ok=True)

    video_ids = [target_id] + [video_id for video_id, _ in related]
    graphs: dict[str, VideoGraph] = {}
    graph_paths = []
    for video_id in video_ids:
        bundle = corpus_io.bundle_from_corpus(corpus_dir, video_id, config)
        graph = structure_video(bundle)
        graphs[video_id] = graph
        graph_paths.append(save_graph(graph, graph_dir / f"{video_id}.graph.json"))
        log.info("structured %s: %d nodes", video_id, len(graph.nodes))

    params = fusion_params_for(config, checkpoint)
    inputs = [FusionInput.from_graph(graphs[v], config.d_node) for v in video_ids]
    output = gfm_forward(inputs[0], inputs[1:], params, trace=trace)

    token_paths = []
    all_tokens = [output.target_tokens] + list(output.related_tokens)
    for video_id, tokens in zip(video_ids, all_tokens):
        path = token_dir / f"{video_id}.tokens.bin"
        formats.write_matrix(path, tokens)
        token_paths.append(path)

    target_block = TokenBlockRef(
        owner=target_id,
        count=config.frames_per_video * config.tokens_per_frame,
        ref=f"video:{target_id}",
    )
    graph_blocks = [
        TokenBlockRef(
            owner=video_id,
            count=tokens.shape[0],
            ref=str(Path("tokens") / f"{video_id}.tokens.bin"),
        )
        for video_id, tokens in zip(video_ids, all_tokens)
    ]
    prompt = assemble_prompt(
        target_video_tokens=target_block,
        target_graph_tokens=graph_blocks[0],
        related_graph_tokens=graph_blocks[1:],
        question=question,
        template=template,
        graph_token_cap=config.graph_token_cap,
        include_cot=config.include_cot,
        one_shot=config.one_shot,
    )
    prompt_path = output_dir / "prompt.json"
    save_prompt(prompt, prompt_path)

    accounting = count_tokens(
        prompt,
        frames_per_video=config.frames_per_video,
        tokens_per_frame=config.tokens_per_frame,
    )
    accounting_path = output_dir / "accounting.json"
    formats.dump_json(
        {
            "breakdown": accounting.as_dict(),
            "frames_per_video": config.frames_per_video,
            "tokens_per_frame": config.tokens_per_frame,
            "graph_token_cap": config.graph_token_cap,
        },
        accounting_path,
    )

    summary_path = output_dir / "run.json"
    formats.dump_json(
        {
            "target": target_id,
            "related": [[video_id, sim] for video_id, sim in related],
            "graphs": [str(p.relative_to(output_dir)) for p in graph_paths],
            "tokens": [str(p.relative_to(output_dir)) for p in token_paths],
            "prompt": "prompt.json",
            "accounting": "accounting.json",
            "node_counts": {v: len(graphs[v].nodes) for v in video_ids},
        },
        summary_path,
    )

    return PipelineResult(
        target_id=target_id,
        related=related,
        graph_paths=graph_paths,
        token_paths=token_paths,
        prompt_path=prompt_path,
        accounting_path=accounting_path,
        summary_path=summary_path,
        prompt=prompt,
        graphs=graphs,
        traces=list(output.traces),
    )
