"""Alignment cost and span extraction against an exhaustive oracle."""

import itertools

import numpy as np
import pytest

from hdvila.subtitles import Cue, TimedWord, dtw_align, dtw_cost, dtw_cost_many, words_with_times


def oracle_cost(a, b):
    """Minimum over all strictly increasing matchings of gaps plus mismatches.

    Every monotone alignment decomposes into k matched index pairs (increasing
    on both sides) plus unmatched tokens at unit cost, so enumerating index
    combinations covers every alignment the recurrence can produce.
    """
    n, m = len(a), len(b)
    best = n + m
    for k in range(1, min(n, m) + 1):
        for ia in itertools.combinations(range(n), k):
            for ib in itertools.combinations(range(m), k):
                mismatches = sum(1 for x, y in zip(ia, ib) if a[x] != b[y])
                best = min(best, (n - k) + (m - k) + mismatches)
    return best


def all_sequences(alphabet, max_len):
    for length in range(1, max_len + 1):
        yield from itertools.product(alphabet, repeat=length)


class TestDtwCost:
    def test_identical_sequences_cost_zero(self):
        assert dtw_cost(["a", "b", "c"], ["a", "b", "c"]) == 0

    def test_disjoint_sequences_cost_is_sum_or_subs(self):
        # 3 substitutions beat 6 gaps
        assert dtw_cost(["a", "a", "a"], ["b", "b", "b"]) == 3

    def test_single_insertion(self):
        assert dtw_cost(["a", "b"], ["a", "x", "b"]) == 1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            dtw_cost([], ["a"])
        with pytest.raises(ValueError):
            dtw_cost(["a"], [])

    def test_exhaustive_small_alphabet(self):
        seqs = list(all_sequences("ab", 3))
        for a in seqs:
            for b in seqs:
                assert dtw_cost(a, b) == oracle_cost(a, b), (a, b)

    def test_random_pairs_match_oracle(self):
        rng = np.random.default_rng(3)
        for _ in range(150):
            a = [("a", "b", "c")[i] for i in rng.integers(0, 3, size=rng.integers(1, 7))]
            b = [("a", "b", "c")[i] for i in rng.integers(0, 3, size=rng.integers(1, 7))]
            assert dtw_cost(a, b) == oracle_cost(a, b), (a, b)


class TestDtwCostMany:
    def test_matches_single_pair_path(self):
        rng = np.random.default_rng(4)
        a = rng.integers(0, 3, size=(50, 5))
        b = rng.integers(0, 3, size=(50, 6))
        batch = dtw_cost_many(a, b)
        for i in range(50):
            assert batch[i] == dtw_cost(list(a[i]), list(b[i]))

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            dtw_cost_many(np.zeros((2, 3)), np.zeros((3, 3)))


class TestDtwAlign:
    def test_identity_alignment_spans(self):
        cues = [Cue(0.0, 2.0, "a b"), Cue(2.0, 4.0, "c d")]
        timed = words_with_times(cues)
        spans, cost = dtw_align([["a", "b"], ["c", "d"]], timed)
        assert cost == 0
        assert spans == [(0.0, 2.0), (2.0, 4.0)]

    def test_end_extends_to_cue_end(self):
        timed = [TimedWord("a", 0.0, 2.0), TimedWord("b", 1.0, 2.0)]
        spans, cost = dtw_align([["a", "b"]], timed)
        assert cost == 0
        assert spans == [(0.0, 2.0)]

    def test_total_cost_equals_flat_cost(self):
        rng = np.random.default_rng(5)
        vocab = ["a", "b", "c"]
        for _ in range(25):
            sentences = [
                [vocab[i] for i in rng.integers(0, 3, size=rng.integers(1, 4))]
                for _ in range(rng.integers(1, 4))
            ]
            words = [
                TimedWord(vocab[i], float(t), float(t) + 1.0)
                for t, i in enumerate(rng.integers(0, 3, size=rng.integers(1, 10)))
            ]
            flat = [t for s in sentences for t in s]
            spans, cost = dtw_align(sentences, words)
            assert cost == dtw_cost(flat, [w.token for w in words])
            assert len(spans) == len(sentences)

    def test_spans_non_decreasing_with_noise(self):
        rng = np.random.default_rng(6)
        vocab = ["a", "b", "c", "d"]
        for _ in range(25):
            sentences = [
                [vocab[i] for i in rng.integers(0, 4, size=rng.integers(1, 5))]
                for _ in range(rng.integers(1, 5))
            ]
            words = [
                TimedWord(vocab[i], float(t) * 0.7, float(t) * 0.7 + 0.7)
                for t, i in enumerate(rng.integers(0, 4, size=rng.integers(1, 12)))
            ]
            spans, _ = dtw_align(sentences, words)
            for (s1, e1), (s2, e2) in zip(spans, spans[1:]):
                assert s2 >= s1
                assert e2 >= e1
            for s, e in spans:
                assert e >= s

    def test_unmatched_sentence_collapses(self):
        words = [TimedWord("a", 0.0, 1.0), TimedWord("b", 1.0, 2.0)]
        spans, cost = dtw_align([["a", "b"], ["zzz"]], words)
        assert spans[0] == (0.0, 2.0)
        assert spans[1] == (2.0, 2.0)
        assert cost == 1

    def test_empty_inputs_rejected(self):
        words = [TimedWord("a", 0.0, 1.0)]
        with pytest.raises(ValueError):
            dtw_align([], words)
        with pytest.raises(ValueError):
            dtw_align([["a"]], [])
