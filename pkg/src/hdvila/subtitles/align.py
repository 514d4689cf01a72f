"""Monotone alignment of sentence tokens onto timed cue words.

The cost model is a 0/1 token edit distance: matching a pair of equal
tokens is free, substituting costs 1, and skipping a token on either side
costs 1. The alignment with minimal total cost assigns each sentence the
time span of the cue words paired with its tokens.
"""

from __future__ import annotations

from typing import List, Sequence, Tuple

import numpy as np

from .words import TimedWord


def _advance_rows(prev: np.ndarray, neq_row: np.ndarray) -> np.ndarray:
    """One DP row update, vectorized over a leading batch of instances.

    ``prev`` is dp[i-1] shaped [batch, m+1]; ``neq_row`` holds the 0/1
    substitution costs of source token i-1 against every target token.
    The in-row (left) dependency resolves to a running minimum of
    candidate - column, because gaps cost exactly 1 per step.
    """
    m1 = prev.shape[1]
    cols = np.arange(m1, dtype=prev.dtype)
    cand = np.minimum(prev[:, :-1] + neq_row, prev[:, 1:] + 1)
    t = np.concatenate([prev[:, :1] + 1, cand], axis=1) - cols
    return np.minimum.accumulate(t, axis=1) + cols


def _cost_table(neq: np.ndarray) -> np.ndarray:
    """Full [n+1, m+1] DP table for a single instance's 0/1 cost matrix."""
    n, m = neq.shape
    table = np.empty((n + 1, m + 1), dtype=np.int32)
    table[0] = np.arange(m + 1, dtype=np.int32)
    row = table[0][None, :]
    for i in range(n):
        row = _advance_rows(row, neq[i][None, :])
        table[i + 1] = row[0]
    return table


def dtw_cost(a: Sequence, b: Sequence) -> int:
    """Minimal alignment cost between two token sequences."""
    if len(a) == 0 or len(b) == 0:
        raise ValueError("dtw_cost requires two non-empty sequences")
    neq = np.array([[0 if x == y else 1 for y in b] for x in a], dtype=np.int32)
    return int(_cost_table(neq)[-1, -1])


def dtw_cost_many(a_batch: np.ndarray, b_batch: np.ndarray) -> np.ndarray:
    """``dtw_cost`` for many same-shape integer sequence pairs at once.

    ``a_batch`` is [batch, n], ``b_batch`` is [batch, m]; returns [batch]
    costs using the same row recurrence as the single-pair path.
    """
    a_batch = np.asarray(a_batch)
    b_batch = np.asarray(b_batch)
    if a_batch.ndim != 2 or b_batch.ndim != 2 or a_batch.shape[0] != b_batch.shape[0]:
        raise ValueError("expected [batch, n] and [batch, m] with equal batch")
    batch, n = a_batch.shape
    m = b_batch.shape[1]
    if n == 0 or m == 0:
        raise ValueError("dtw_cost_many requires non-empty sequences")
    row = np.broadcast_to(np.arange(m + 1, dtype=np.int32), (batch, m + 1)).copy()
    for i in range(n):
        neq_row = (a_batch[:, i : i + 1] != b_batch).astype(np.int32)
        row = _advance_rows(row, neq_row)
    return row[:, -1]


def dtw_align(
    sentence_tokens: Sequence,
    cue_words: Sequence[TimedWord],
) -> Tuple[List[Tuple[float, float]], int]:
    """Align sentences to cue words; return per-sentence spans and total cost.

    ``sentence_tokens`` is a list of sentences, each either an object with a
    ``tokens`` attribute or a plain token sequence. A sentence's span runs
    from the time of the first cue word paired with any of its tokens to the
    end of the cue containing the last such word; spans are clamped to be
    non-decreasing, and a sentence with no paired words collapses onto the
    previous span's end.
    """
    seqs = [tuple(getattr(s, "tokens", s)) for s in sentence_tokens]
    if not seqs or any(len(s) == 0 for s in seqs):
        raise ValueError("dtw_align requires non-empty sentences")
    if not cue_words:
        raise ValueError("dtw_align requires a non-empty cue word stream")

    flat: List[str] = []
    owner: List[int] = []
    for si, seq in enumerate(seqs):
        flat.extend(seq)
        owner.extend([si] * len(seq))
    targets = [w.token for w in cue_words]
    neq = np.array([[0 if x == y else 1 for y in targets] for x in flat], dtype=np.int32)
    table = _cost_table(neq)
    n, m = len(flat), len(targets)

    # Backtrack; tie order diagonal > up > left keeps pairings maximal.
    first_j = {}
    last_j = {}
    i, j = n, m
    while i > 0 and j > 0:
        here = table[i, j]
        if here == table[i - 1, j - 1] + neq[i - 1, j - 1]:
            si = owner[i - 1]
            first_j[si] = j - 1
            last_j.setdefault(si, j - 1)
            i -= 1
            j -= 1
        elif here == table[i - 1, j] + 1:
            i -= 1
        else:
            j -= 1

    spans: List[Tuple[float, float]] = []
    prev_start = cue_words[0].time
    prev_end = cue_words[0].time
    for si in range(len(seqs)):
        if si in first_j:
            start = cue_words[first_j[si]].time
            end = cue_words[last_j[si]].cue_end
        else:
            start = end = prev_end
        start = max(start, prev_start)
        end = max(end, start)
        spans.append((start, end))
        prev_start, prev_end = start, end
    return spans, int(table[n, m])
