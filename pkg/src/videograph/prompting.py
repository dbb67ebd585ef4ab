"""Structured multi-video prompt assembly and exact token accounting.

Prompts are ordered segments: literal text, video-token placeholders and
graph-token placeholders. Token payloads are referenced, never inlined, so
the artifact stays LLM-agnostic. Text is counted with a fixed deterministic
rule (alphanumeric runs and single punctuation marks each count as one
token), which keeps accounting reproducible without a model tokenizer.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from . import formats

TEXT = "text"
VIDEO_TOKENS = "video_tokens"
GRAPH_TOKENS = "graph_tokens"

DEFAULT_GRAPH_TOKEN_CAP = 200

_TOKEN_RE = re.compile(r"[A-Za-z0-9]+|[^\sA-Za-z0-9]")


def count_text_tokens(text: str) -> int:
    """Deterministic text token estimate: one per alphanumeric run or punctuation mark."""
    return len(_TOKEN_RE.findall(text))


@dataclass(frozen=True)
class PromptTemplate:
    system_text: str
    relationship_text: str
    target_video_label: str
    target_graph_label: str
    related_label: str
    question_label: str
    cot_sentence: str
    one_shot_text: str

    @staticmethod
    def from_mapping(data: dict) -> "PromptTemplate":
        return PromptTemplate(**data)

    @staticmethod
    def from_file(path: str | Path) -> "PromptTemplate":
        with open(path, "r", encoding="utf-8") as fh:
            return PromptTemplate.from_mapping(json.load(fh))


def default_template() -> PromptTemplate:
    data = resources.files("videograph.data").joinpath("prompt_template.json")
    return PromptTemplate.from_mapping(json.loads(data.read_text(encoding="utf-8")))


@dataclass(frozen=True)
class TokenBlockRef:
    """A placeholder for a block of non-text tokens.

    `count` is the number of token rows; `ref` resolves to the materialised
    token matrix (a file path or artifact key)."""

    owner: str
    count: int
    ref: str

    def __post_init__(self):
        if self.count < 0:
            raise ValueError("token count must be >= 0")


@dataclass(frozen=True)
class PromptSegment:
    kind: str  # text | video_tokens | graph_tokens
    count: int
    text: str | None = None
    ref: str | None = None
    owner: str | None = None


@dataclass
class AssembledPrompt:
    segments: list[PromptSegment]
    totals: dict[str, int] = field(default_factory=dict)

    def recompute_totals(self) -> dict[str, int]:
        totals = {TEXT: 0, "video": 0, "graph": 0}
        for seg in self.segments:
            if seg.kind == TEXT:
                totals[TEXT] += seg.count
            elif seg.kind == VIDEO_TOKENS:
                totals["video"] += seg.count
            elif seg.kind == GRAPH_TOKENS:
                totals["graph"] += seg.count
        totals["total"] = totals[TEXT] + totals["video"] + totals["graph"]
        return totals


def _text_segment(text: str) -> PromptSegment:
    return PromptSegment(kind=TEXT, count=count_text_tokens(text), text=text)


def _finish(segments: list[PromptSegment]) -> AssembledPrompt:
    prompt = AssembledPrompt(segments=segments)
    prompt.totals = prompt.recompute_totals()
    return prompt


def assemble_prompt(
    target_video_tokens: TokenBlockRef | None,
    target_graph_tokens: TokenBlockRef | None,
    related_graph_tokens: list[TokenBlockRef],
    question: str,
    template: PromptTemplate | None = None,
    *,
    graph_token_cap: int | None = DEFAULT_GRAPH_TOKEN_CAP,
    include_cot: bool = True,
    one_shot: bool = False,
) -> AssembledPrompt:
    """Build the structured prompt in canonical segment order.

    Order: instruction text (with the relationship explanation whenever
    related videos are present), optional one-shot example, the target's
    video tokens, the target's graph tokens, one labelled graph block per
    related video in retrieval order, the question, and the fixed
    chain-of-thought sentence. A shared graph-token budget is spent on the
    target first, then on related videos in order; within one video the kept
    rows are the first in token order.
    """
    template = template or default_template()
    segments: list[PromptSegment] = []

    instruction = template.system_text
    if related_graph_tokens:
        instruction = f"{instruction} {template.relationship_text}"
    segments.append(_text_segment(instruction))
    if one_shot:
        segments.append(_text_segment(template.one_shot_text))

    if target_video_tokens is not None:
        segments.append(_text_segment(template.target_video_label))
        segments.append(
            PromptSegment(
                kind=VIDEO_TOKENS,
                count=target_video_tokens.count,
                ref=target_video_tokens.ref,
                owner=target_video_tokens.owner,
            )
        )

    budget = graph_token_cap
    if target_graph_tokens is not None:
        take = target_graph_tokens.count if budget is None else min(target_graph_tokens.count, budget)
        if budget is not None:
            budget -= take
        segments.append(_text_segment(template.target_graph_label))
        segments.append(
            PromptSegment(
                kind=GRAPH_TOKENS,
                count=take,
                ref=target_graph_tokens.ref,
                owner=target_graph_tokens.owner,
            )
        )
    for i, block in enumerate(related_graph_tokens, start=1):
        take = block.count if budget is None else min(block.count, budget)
        if budget is not None:
            budget -= take
        label = template.related_label.format(index=i, video_id=block.owner)
        segments.append(_text_segment(label))
        segments.append(
            PromptSegment(kind=GRAPH_TOKENS, count=take, ref=block.ref, owner=block.owner)
        )

    segments.append(_text_segment(f"{template.question_label} {question}"))
    if include_cot:
        segments.append(_text_segment(template.cot_sentence))
    return _finish(segments)


def assemble_naive_prompt(
    target_video_tokens: TokenBlockRef,
    related_video_tokens: list[TokenBlockRef],
    question: str,
    template: PromptTemplate | None = None,
    *,
    include_cot: bool = True,
) -> AssembledPrompt:
    """Comparison prompt that keeps full video tokens for every video."""
    template = template or default_template()
    segments: list[PromptSegment] = [_text_segment(template.system_text)]
    segments.append(_text_segment(template.target_video_label))
    segments.append(
        PromptSegment(
            kind=VIDEO_TOKENS,
            count=target_video_tokens.count,
            ref=target_video_tokens.ref,
            owner=target_video_tokens.owner,
        )
    )
    for i, block in enumerate(related_video_tokens, start=1):
        segments.append(_text_segment(f"Related video {i} ({block.owner}):"))
        segments.append(
            PromptSegment(kind=VIDEO_TOKENS, count=block.count, ref=block.ref, owner=block.owner)
        )
    segments.append(_text_segment(f"{template.question_label} {question}"))
    if include_cot:
        segments.append(_text_segment(template.cot_sentence))
    return _finish(segments)


@dataclass(frozen=True)
class TokenAccounting:
    text: int
    video: int
    graph: int

    @property
    def total(self) -> int:
        return self.text + self.video + self.graph

    def as_dict(self) -> dict[str, int]:
        return {"text": self.text, "video": self.video, "graph": self.graph, "total": self.total}


def count_tokens(
    prompt: AssembledPrompt,
    *,
    frames_per_video: int = 8,
    tokens_per_frame: int = 256,
) -> TokenAccounting:
    """Exact accounting: video blocks cost frames x tokens/frame, graph blocks
    their row counts, text the deterministic estimator."""
    if frames_per_video <= 0 or tokens_per_frame <= 0:
        raise ValueError("accounting config must be positive")
    text = video = graph = 0
    for seg in prompt.segments:
        if seg.kind == TEXT:
            text += count_text_tokens(seg.text or "")
        elif seg.kind == VIDEO_TOKENS:
            video += frames_per_video * tokens_per_frame
        elif seg.kind == GRAPH_TOKENS:
            graph += seg.count
        else:
            raise ValueError(f"unknown segment kind {seg.kind!r}")
    return TokenAccounting(text=text, video=video, graph=graph)


def prompt_to_dict(prompt: AssembledPrompt) -> dict:
    segments = []
    for seg in prompt.segments:
        entry: dict = {"kind": seg.kind, "count": seg.count}
        if seg.text is not None:
            entry["text"] = seg.text
        if seg.ref is not None:
            entry["ref"] = seg.ref
        if seg.owner is not None:
            entry["owner"] = seg.owner
        segments.append(entry)
    return {"segments": segments, "totals": prompt.recompute_totals()}


def prompt_from_dict(doc: dict) -> AssembledPrompt:
    segments = [
        PromptSegment(
            kind=entry["kind"],
            count=entry["count"],
            text=entry.get("text"),
            ref=entry.get("ref"),
            owner=entry.get("owner"),
        )
        for entry in doc["segments"]
    ]
    return _finish(segments)


def save_prompt(prompt: AssembledPrompt, path: str | Path) -> None:
    formats.dump_json(prompt_to_dict(prompt), path)


def load_prompt(path: str | Path) -> AssembledPrompt:
    return prompt_from_dict(formats.load_json(path))
