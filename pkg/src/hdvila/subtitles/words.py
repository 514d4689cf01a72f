"""Word-level timing: spread each cue's words across its time span."""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import List, Sequence

from .cues import Cue

_PUNCT = string.punctuation + "“”‘’…«»"


@dataclass(frozen=True)
class TimedWord:
    """A case-folded token with its interpolated time and containing cue's end."""

    token: str
    time: float
    cue_end: float


def normalize_token(raw: str) -> str:
    """Case-fold and strip surrounding punctuation; may return ''."""
    return raw.casefold().strip(_PUNCT)


def words_with_times(cues: Sequence[Cue]) -> List[TimedWord]:
    """Linear-interpolate word times: word j of m gets start + (j/m)*(end-start).

    Tokens that normalize to nothing (pure punctuation) are dropped. With
    sorted non-overlapping cues the output times are non-decreasing.
    """
    out: List[TimedWord] = []
    for cue in cues:
        raw_words = cue.text.split()
        if not raw_words:
            continue
        span = cue.end - cue.start
        m = len(raw_words)
        for j, raw in enumerate(raw_words):
            token = normalize_token(raw)
            if not token:
                continue
            out.append(TimedWord(token, cue.start + (j / m) * span, cue.end))
    return out
