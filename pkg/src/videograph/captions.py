"""Rule-based extraction of <subject, predicate, object> triplets from captions.

The grammar is deliberately small and fully deterministic. Per sentence it
recognises clauses of the shape

    [det] adjectives* noun  VERB [prep]  [det] adjectives* noun

where word categories come from a tunable JSON word list (determiners,
prepositions, conjunctions, auxiliary "stop" verbs). "and" splits a sentence
into clauses that share the first clause's subject. Clauses without a direct
object yield nothing. A verb followed by `NP1 prep NP2` folds the preposition
into the predicate and takes NP2 as the object (longest match), so
"pours juice into a glass" parses as (pours into, glass). The subject/verb
boundary prefers verbs with a finite caption-register shape (-s/-ing/-ed),
falling back to the longest subject with a transitive remainder.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .graph import Triplet

_WORD_RE = re.compile(r"[a-z']+")
_SENTENCE_SPLIT_RE = re.compile(r"[.!?]")


@dataclass(frozen=True)
class Lexicon:
    """Closed word-category lists driving the clause grammar."""

    determiners: frozenset[str]
    conjunctions: frozenset[str]
    prepositions: frozenset[str]
    stop_verbs: frozenset[str]

    @staticmethod
    def from_mapping(data: dict) -> "Lexicon":
        return Lexicon(
            determiners=frozenset(data["determiners"]),
            conjunctions=frozenset(data["conjunctions"]),
            prepositions=frozenset(data["prepositions"]),
            stop_verbs=frozenset(data["stop_verbs"]),
        )

    @staticmethod
    def from_file(path: str | Path) -> "Lexicon":
        with open(path, "r", encoding="utf-8") as fh:
            return Lexicon.from_mapping(json.load(fh))

    def is_plain_word(self, token: str) -> bool:
        """True for tokens that can sit inside a noun phrase."""
        return (
            token not in self.determiners
            and token not in self.conjunctions
            and token not in self.prepositions
            and token not in self.stop_verbs
        )


def default_lexicon() -> Lexicon:
    data = resources.files("videograph.data").joinpath("wordlists.json")
    return Lexicon.from_mapping(json.loads(data.read_text(encoding="utf-8")))


_DEFAULT_LEXICON: Lexicon | None = None


def _lexicon(lexicon: Lexicon | None) -> Lexicon:
    global _DEFAULT_LEXICON
    if lexicon is not None:
        return lexicon
    if _DEFAULT_LEXICON is None:
        _DEFAULT_LEXICON = default_lexicon()
    return _DEFAULT_LEXICON


def normalize_phrase(text: str, lexicon: Lexicon | None = None) -> str:
    """Lowercase, drop determiners, and collapse whitespace. Idempotent."""
    lex = _lexicon(lexicon)
    words = [w for w in text.lower().split() if w not in lex.determiners]
    return " ".join(words)


@dataclass
class TextualSceneGraph:
    """Ordered triplets parsed from one caption."""

    triplets: list[Triplet]
    source_text: str

    def phrase_violations(self, lexicon: Lexicon | None = None) -> list[str]:
        """Phrases whose tokens do not occur in the normalized source text."""
        lex = _lexicon(lexicon)
        normalized_source = normalize_phrase(self.source_text, lex)
        source_tokens = set(_WORD_RE.findall(normalized_source))
        bad = []
        for t in self.triplets:
            for phrase in (t.subject, t.predicate, t.object):
                if any(tok not in source_tokens for tok in phrase.split()):
                    bad.append(phrase)
        return bad


def _noun_phrase(tokens: Sequence[str], start: int, lex: Lexicon) -> tuple[list[str], int]:
    """Parse `det? word+` from tokens[start:]; return (words, next index).

    Returns ([], start) when no phrase begins there."""
    i = start
    if i < len(tokens) and tokens[i] in lex.determiners:
        i += 1
    words = []
    while i < len(tokens) and lex.is_plain_word(tokens[i]):
        words.append(tokens[i])
        i += 1
    if not words:
        return [], start
    return words, i


def _parse_predicate(tokens: Sequence[str], lex: Lexicon) -> tuple[str, str] | None:
    """Parse a verb group plus object from a clause tail.

    Auxiliary stop verbs before the main verb are skipped. Returns
    (predicate, object phrase) or None when the clause is intransitive or
    unparseable."""
    i = 0
    while i < len(tokens) and tokens[i] in lex.stop_verbs:
        i += 1
    if i >= len(tokens) or not lex.is_plain_word(tokens[i]):
        return None
    verb = tokens[i]
    i += 1

    if i < len(tokens) and tokens[i] in lex.prepositions:
        prep = tokens[i]
        obj, j = _noun_phrase(tokens, i + 1, lex)
        if not obj:
            return None
        return f"{verb} {prep}", " ".join(obj)

    first, i = _noun_phrase(tokens, i, lex)
    if not first:
        return None
    if i < len(tokens) and tokens[i] in lex.prepositions:
        prep = tokens[i]
        obj, _ = _noun_phrase(tokens, i + 1, lex)
        if obj:
            return f"{verb} {prep}", " ".join(obj)
        return None
    return verb, " ".join(first)


def _finite_verb(token: str) -> bool:
    """Caption-register finite verb shapes: cuts / holding / lifted."""
    return token.endswith(("s", "ing", "ed"))


def _parse_full_clause(tokens: Sequence[str], lex: Lexicon) -> tuple[str, str, str] | None:
    """Parse `subject predicate object`, choosing the subject span.

    Every split of the leading word run into subject + transitive remainder
    is a candidate. The shortest subject whose verb has a finite shape wins;
    with no such candidate the longest transitive parse is kept."""
    subject_words, after = _noun_phrase(tokens, 0, lex)
    if not subject_words:
        return None
    candidates: list[tuple[str, str, str]] = []
    for k in range(1, len(subject_words) + 1):
        consumed = after - (len(subject_words) - k)
        parsed = _parse_predicate(tokens[consumed:], lex)
        if parsed is not None:
            predicate, obj = parsed
            candidates.append((" ".join(subject_words[:k]), predicate, obj))
    for candidate in candidates:
        if _finite_verb(candidate[1].split()[0]):
            return candidate
    return candidates[-1] if candidates else None


def parse_caption(
    text: str, keyframe: int, lexicon: Lexicon | None = None
) -> TextualSceneGraph:
    """Parse plain caption text into an ordered triplet sequence.

    Sentences are split on ./!/?; unparseable sentences contribute nothing.
    All emitted phrases are normalized."""
    lex = _lexicon(lexicon)
    triplets: list[Triplet] = []
    for sentence in _SENTENCE_SPLIT_RE.split(text):
        tokens = _WORD_RE.findall(sentence.lower())
        if not tokens:
            continue
        clauses: list[list[str]] = [[]]
        for tok in tokens:
            if tok in lex.conjunctions:
                clauses.append([])
            else:
                clauses[-1].append(tok)

        subject: str | None = None
        for idx, clause in enumerate(clauses):
            if not clause:
                continue
            if idx == 0:
                parsed = _parse_full_clause(clause, lex)
                if parsed is None:
                    continue
                subj, predicate, obj = parsed
                subject = subj
            else:
                tail = _parse_predicate(clause, lex) if subject is not None else None
                if tail is not None:
                    predicate, obj = tail
                    subj = subject
                else:
                    parsed = _parse_full_clause(clause, lex)
                    if parsed is None:
                        continue
                    subj, predicate, obj = parsed
            triplets.append(
                Triplet(
                    subject=normalize_phrase(subj, lex),
                    predicate=normalize_phrase(predicate, lex),
                    object=normalize_phrase(obj, lex),
                    source_keyframe=keyframe,
                )
            )
    return TextualSceneGraph(triplets=triplets, source_text=text)


def parse_caption_file(path: str | Path, lexicon: Lexicon | None = None) -> list[Triplet]:
    """Read a caption file: one caption per line, "keyframe<TAB>text"."""
    lex = _lexicon(lexicon)
    triplets: list[Triplet] = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            keyframe_text, sep, caption = line.partition("\t")
            if not sep:
                raise ValueError(f"{path}:{line_no}: missing keyframe<TAB> prefix")
            keyframe = int(keyframe_text)
            triplets.extend(parse_caption(caption, keyframe, lex).triplets)
    return triplets
