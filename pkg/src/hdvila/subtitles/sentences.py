"""Sentence segmentation of raw transcripts with a pluggable punctuator."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

from .words import normalize_token

# A punctuator maps transcript text to candidate sentence spans (character
# offsets). The default is rule-based; a learned one can be plugged in.
Punctuator = Callable[[str], List[Tuple[int, int]]]

_SENTENCE_END = re.compile(r"[.?!]+(?=\s)")
_WORD = re.compile(r"\S+")


@dataclass(frozen=True)
class Sentence:
    """Normalized tokens plus the byte range they came from in the transcript."""

    tokens: Tuple[str, ...]
    source_span: Tuple[int, int]

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("a sentence must contain at least one token")


def rule_punctuator(text: str) -> List[Tuple[int, int]]:
    """Split after runs of ``. ? !`` that are followed by whitespace.

    Lowercase continuations count as boundaries too: transcripts from speech
    recognition rarely carry capitalization, so requiring it would merge
    everything into one sentence.
    """
    spans: List[Tuple[int, int]] = []
    begin = 0
    for m in _SENTENCE_END.finditer(text):
        spans.append((begin, m.end()))
        begin = m.end()
    if text[begin:].strip():
        spans.append((begin, len(text)))
    return [(a, b) for a, b in spans if text[a:b].strip()]


def segment_sentences(
    text: str,
    punctuator: Optional[Punctuator] = None,
    max_tokens: int = 50,
) -> List[Sentence]:
    """Segment a transcript into sentences of normalized tokens.

    Punctuator spans longer than ``max_tokens`` tokens are force-split into
    consecutive chunks of ``max_tokens``. Spans whose tokens all normalize to
    nothing are dropped. ``source_span`` is a byte range into the UTF-8
    encoding of ``text``.
    """
    if punctuator is None:
        punctuator = rule_punctuator
    if not text.strip():
        return []

    # Char offset -> byte offset in the UTF-8 encoding.
    byte_at = [0] * (len(text) + 1)
    acc = 0
    for i, ch in enumerate(text):
        byte_at[i] = acc
        acc += len(ch.encode("utf-8"))
    byte_at[len(text)] = acc

    sentences: List[Sentence] = []
    for a, b in punctuator(text):
        words = [(m.group(), a + m.start(), a + m.end()) for m in _WORD.finditer(text[a:b])]
        normalized = [(normalize_token(w), s, e) for w, s, e in words]
        normalized = [(t, s, e) for t, s, e in normalized if t]
        if not normalized:
            continue
        for i in range(0, len(normalized), max_tokens):
            chunk = normalized[i : i + max_tokens]
            tokens = tuple(t for t, _, _ in chunk)
            span = (byte_at[chunk[0][1]], byte_at[chunk[-1][2]])
            sentences.append(Sentence(tokens, span))
    return sentences
