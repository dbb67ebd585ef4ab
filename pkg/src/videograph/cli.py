"""Command-line driver.

Subcommands: generate-corpus, structure, retrieve, fuse, assemble, run,
verify, inspect. Failures exit non-zero with a machine-readable JSON error
report on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import corpus as corpus_io
from . import formats, retrieval
from .config import PipelineConfig
from .errors import CorruptFileError, VideographError
from .fusion import FusionInput, gfm_forward
from .graph import save_graph
from .pipeline import (
    DEFAULT_QUESTION,
    fusion_params_for,
    retrieve_related,
    run_pipeline,
)
from .structuring import structure_video
from .verification import CRITERIA, verify

log = logging.getLogger("videograph")


def _load_config(args) -> PipelineConfig:
    config = (
        PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    )
    return config.with_overrides(
        seed=getattr(args, "seed", None),
        n_related=getattr(args, "n_related", None),
        layer_count=getattr(args, "layers", None),
        min_similarity=getattr(args, "min_sim", None),
        max_similarity=getattr(args, "max_sim", None),
        one_shot=True if getattr(args, "one_shot", False) else None,
        graph_token_cap=getattr(args, "graph_token_cap", None),
    )


def _cmd_generate_corpus(args) -> int:
    config = _load_config(args)
    corpus_io.generate_corpus(
        args.out,
        seed=config.seed,
        video_count=args.videos,
        frames=args.frames,
        tracks=args.tracks,
        d_node=config.d_node,
        min_scene_len=config.min_scene_len,
        scene_threshold=config.scene_threshold,
    )
    print(f"wrote corpus of {args.videos} videos to {args.out}")
    return 0


def _cmd_structure(args) -> int:
    config = _load_config(args)
    out_dir = Path(args.out)
    video_ids = [args.video] if args.video else corpus_io.manifest(args.corpus)["videos"]
    for video_id in video_ids:
        bundle = corpus_io.bundle_from_corpus(
            args.corpus,
            video_id,
            config,
            use_precomputed_scenes=args.precomputed_scenes,
            use_precomputed_triplets=args.precomputed_triplets,
        )
        graph = structure_video(bundle)
        path = save_graph(graph, out_dir / f"{video_id}.graph.json")
        print(f"{video_id}: {len(graph.nodes)} nodes, "
              f"{len(graph.intra_edges)} intra, {len(graph.inter_edges)} inter -> {path}")
    return 0


def _cmd_retrieve(args) -> int:
    config = _load_config(args)
    ranked = retrieve_related(config, args.corpus, args.target)
    print(json.dumps({"target": args.target, "related": ranked}, indent=2))
    return 0


def _cmd_fuse(args) -> int:
    config = _load_config(args)
    related = retrieve_related(config, args.corpus, args.target)
    video_ids = [args.target] + [video_id for video_id, _ in related]
    out_dir = Path(args.out)
    inputs = []
    for video_id in video_ids:
        bundle = corpus_io.bundle_from_corpus(args.corpus, video_id, config)
        graph = structure_video(bundle)
        save_graph(graph, out_dir / "graphs" / f"{video_id}.graph.json")
        inputs.append(FusionInput.from_graph(graph, config.d_node))
    params = fusion_params_for(config, args.checkpoint)
    output = gfm_forward(inputs[0], inputs[1:], params)
    (out_dir / "tokens").mkdir(parents=True, exist_ok=True)
    for video_id, tokens in zip(
        video_ids, [output.target_tokens] + list(output.related_tokens)
    ):
        formats.write_matrix(out_dir / "tokens" / f"{video_id}.tokens.bin", tokens)
        print(f"{video_id}: {tokens.shape[0]} graph tokens of width {tokens.shape[1]}")
    if args.save_checkpoint:
        params.save(args.save_checkpoint)
        print(f"checkpoint -> {args.save_checkpoint}")
    return 0


def _cmd_run(args, *, command: str) -> int:
    config = _load_config(args)
    result = run_pipeline(
        config,
        args.target,
        corpus_dir=args.corpus,
        output_dir=args.out,
        question=args.question,
        checkpoint=getattr(args, "checkpoint", None),
    )
    totals = result.prompt.recompute_totals()
    print(f"target {result.target_id}, related: {[r[0] for r in result.related]}")
    print(f"prompt -> {result.prompt_path} (total tokens: {totals['total']})")
    if command == "run":
        print(f"artifacts -> {args.out}")
    return 0


def _cmd_verify(args) -> int:
    config = _load_config(args)
    criteria = args.criteria.split(",") if args.criteria else None
    results = verify(
        config,
        criteria,
        workdir=args.workdir,
        inject_gradient_fault=args.inject_gradient_fault,
    )
    for result in results:
        print(result.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def _summary_line(name: str, array: np.ndarray) -> str:
    head = ", ".join(f"{v:.4g}" for v in np.asarray(array).reshape(-1)[:4])
    return f"  {name}: shape {tuple(np.asarray(array).shape)}, head [{head}]"


def _cmd_inspect(args) -> int:
    path = Path(args.file)
    magic = path.open("rb").read(4)
    if magic == formats.MAGIC_MATRIX or magic == formats.MAGIC_DESCRIPTORS:
        reader = (
            formats.read_matrix if magic == formats.MAGIC_MATRIX else formats.read_descriptors
        )
        matrix = reader(path)
        print(f"{path}: {magic.decode()} matrix {matrix.shape}")
        print(_summary_line("rows", matrix))
    elif magic == formats.MAGIC_NODE_FEATURES:
        dimension, entries = formats.read_node_features(path)
        print(f"{path}: node features, dim {dimension}, {len(entries)} entries")
        for keyframe, box, _ in entries[:5]:
            print(f"  keyframe {keyframe}, box {box}")
    elif magic == formats.MAGIC_VECTOR_STORE:
        entries = formats.read_vector_store(path)
        print(f"{path}: vector store, {len(entries)} entries")
        for video_id, vector in entries[:5]:
            print(_summary_line(video_id, vector))
    elif magic == formats.MAGIC_CHECKPOINT:
        tensors = formats.read_checkpoint(path)
        print(f"{path}: fusion checkpoint, {len(tensors)} tensors")
        for name, tensor in tensors.items():
            print(_summary_line(name, tensor))
    else:
        doc = formats.load_json(path)
        print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="videograph",
        description="Structure videos into graphs, fuse them, and assemble prompts.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, corpus=True):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--n-related", type=int, dest="n_related")
        p.add_argument("--layers", type=int)
        p.add_argument("--min-sim", type=float, dest="min_sim")
        p.add_argument("--max-sim", type=float, dest="max_sim")
        p.add_argument("--graph-token-cap", type=int, dest="graph_token_cap")
        if corpus:
            p.add_argument("--corpus", required=True, help="corpus directory")

    p = sub.add_parser("generate-corpus", help="write a synthetic corpus")
    common(p, corpus=False)
    p.add_argument("--out", required=True)
    p.add_argument("--videos", type=int, default=20)
    p.add_argument("--frames", type=int, default=48)
    p.add_argument("--tracks", type=int, default=3)
    p.set_defaults(func=_cmd_generate_corpus)

    p = sub.add_parser("structure", help="build video graphs")
    common(p)
    p.add_argument("--video", help="video id (default: all)")
    p.add_argument("--out", required=True)
    p.add_argument("--precomputed-scenes", action="store_true")
    p.add_argument("--precomputed-triplets", action="store_true")
    p.set_defaults(func=_cmd_structure)

    p = sub.add_parser("retrieve", help="rank related videos")
    common(p)
    p.add_argument("--target", required=True)
    p.set_defaults(func=_cmd_retrieve)

    p = sub.add_parser("fuse", help="fuse target and related graphs into tokens")
    common(p)
    p.add_argument("--target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", help="load fusion parameters")
    p.add_argument("--save-checkpoint", dest="save_checkpoint")
    p.set_defaults(func=_cmd_fuse)

    for name, description in (
        ("assemble", "produce the structured prompt (full pipeline)"),
        ("run", "run the whole pipeline and write all artifacts"),
    ):
        p = sub.add_parser(name, help=description)
        common(p)
        p.add_argument("--target", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--question", default=DEFAULT_QUESTION)
        p.add_argument("--one-shot", action="store_true", dest="one_shot")
        p.add_argument("--checkpoint")
        p.set_defaults(func=lambda args, _name=name: _cmd_run(args, command=_name))

    p = sub.add_parser("verify", help="run the invariant suite")
    common(p, corpus=False)
    p.add_argument("--criteria", help=f"comma-separated subset of {', '.join(CRITERIA)}")
    p.add_argument("--workdir", help="reuse a working directory")
    p.add_argument(
        "--inject-gradient-fault",
        action="store_true",
        help="perturb one gradient to demonstrate a failing criterion",
    )
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("inspect", help="pretty-print any artifact")
    p.add_argument("file")
    p.set_defaults(func=_cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CorruptFileError as exc:
        report = {
            "error": {
                "type": "CorruptFile",
                "message": str(exc),
                "file": exc.path,
                "offset": exc.offset,
            }
        }
        print(json.dumps(report), file=sys.stderr)
        return 1
    except (VideographError, OSError, ValueError, KeyError) as exc:
        report = {"error": {"type": type(exc).__name__, "message": str(exc)}}
        print(json.dumps(report), file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
