"""Tests for the contrastive and MLM objectives and the video embedding."""

import math

import numpy as np
import pytest

from hdvila.model.layers import init_linear
from hdvila.numerics import Tape, Tensor, finite_diff_check, sub
from hdvila.objectives import contrastive_loss, mlm_loss, video_embedding


def ref_log_softmax(x):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(-1, keepdims=True))


def ref_contrastive(v, t, tau):
    sim = np.asarray(v, dtype=np.float64) @ np.asarray(t, dtype=np.float64).T / tau
    b = sim.shape[0]
    l_v2t = -ref_log_softmax(sim)[np.arange(b), np.arange(b)].mean()
    l_t2v = -ref_log_softmax(sim.T)[np.arange(b), np.arange(b)].mean()
    return l_v2t, l_t2v, 0.5 * (l_v2t + l_t2v)


class TestVideoEmbedding:
    def make_params(self, seed, d_in, d_out):
        return {"proj": init_linear(np.random.default_rng(seed), d_in, d_out)}

    def test_single_segment_matches_numpy(self):
        rng = np.random.default_rng(80)
        params = self.make_params(80, 6, 4)
        tokens = rng.normal(0, 1, (5, 6))
        out = video_embedding([Tensor(tokens)], params)
        raw = tokens.mean(0) @ np.asarray(params["proj"]["w"].data, dtype=np.float64)
        raw = raw + np.asarray(params["proj"]["b"].data, dtype=np.float64)
        expected = raw / np.linalg.norm(raw)
        np.testing.assert_allclose(np.asarray(out.data, dtype=np.float64), expected, rtol=1e-4, atol=1e-6)

    def test_unit_norm(self):
        rng = np.random.default_rng(81)
        params = self.make_params(81, 6, 4)
        out = video_embedding([Tensor(rng.normal(0, 1, (3, 6))) for _ in range(2)], params)
        assert abs(np.linalg.norm(out.data) - 1.0) < 1e-5

    def test_duplicate_segment_matches_single(self):
        rng = np.random.default_rng(82)
        params = self.make_params(82, 6, 4)
        tokens = rng.normal(0, 1, (4, 6)).astype(np.float32)
        one = video_embedding([Tensor(tokens)], params)
        two = video_embedding([Tensor(tokens), Tensor(tokens.copy())], params)
        np.testing.assert_allclose(two.data, one.data, rtol=1e-6, atol=1e-7)

    def test_two_segments_match_numpy(self):
        rng = np.random.default_rng(83)
        params = self.make_params(83, 5, 3)
        a = rng.normal(0, 1, (4, 5))
        b = rng.normal(0, 1, (6, 5))
        out = video_embedding([Tensor(a), Tensor(b)], params)
        w = np.asarray(params["proj"]["w"].data, dtype=np.float64)
        bias = np.asarray(params["proj"]["b"].data, dtype=np.float64)
        raw = ((a.mean(0) @ w + bias) + (b.mean(0) @ w + bias)) / 2.0
        expected = raw / np.linalg.norm(raw)
        np.testing.assert_allclose(np.asarray(out.data, dtype=np.float64), expected, rtol=1e-4, atol=1e-6)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            video_embedding([], self.make_params(0, 4, 4))


class TestContrastiveLoss:
    @pytest.mark.parametrize("batch", [2, 8, 64])
    def test_identical_embeddings_give_log_batch(self, batch):
        # All pairs equally similar: every softmax is uniform over the
        # batch, so each direction scores exactly ln(batch).
        rng = np.random.default_rng(90 + batch)
        row = rng.normal(0, 1, 6)
        row /= np.linalg.norm(row)
        emb = Tensor(np.tile(row, (batch, 1)))
        _, _, total = contrastive_loss(emb, emb, tau=0.05)
        assert abs(total.item() - math.log(batch)) < 1e-4

    def test_orthonormal_pair(self):
        eye = Tensor(np.eye(2, dtype=np.float32))
        l_v2t, l_t2v, total = contrastive_loss(eye, eye, tau=1.0)
        expected = math.log(1.0 + math.exp(-1.0))
        assert abs(total.item() - expected) < 1e-4
        assert abs(l_v2t.item() - expected) < 1e-4
        assert abs(l_t2v.item() - expected) < 1e-4

    def test_matches_numpy_oracle(self):
        rng = np.random.default_rng(91)
        v = rng.normal(0, 1, (3, 5))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        t = rng.normal(0, 1, (3, 5))
        t /= np.linalg.norm(t, axis=1, keepdims=True)
        l_v2t, l_t2v, total = contrastive_loss(Tensor(v), Tensor(t), tau=0.1)
        e_v2t, e_t2v, e_total = ref_contrastive(v, t, 0.1)
        assert abs(l_v2t.item() - e_v2t) < 1e-5
        assert abs(l_t2v.item() - e_t2v) < 1e-5
        assert abs(total.item() - e_total) < 1e-5

    def test_same_embeddings_make_directions_agree(self):
        rng = np.random.default_rng(92)
        v = rng.normal(0, 1, (4, 6)).astype(np.float32)
        l_v2t, l_t2v, _ = contrastive_loss(Tensor(v), Tensor(v.copy()), tau=0.05)
        assert abs(l_v2t.item() - l_t2v.item()) < 1e-6

    def test_temperature_scale_absorption(self):
        # Scaling one side by c and the temperature by c leaves the
        # similarity matrix, hence the loss, unchanged.
        rng = np.random.default_rng(93)
        v = rng.normal(0, 1, (3, 4))
        t = rng.normal(0, 1, (3, 4))
        _, _, base = contrastive_loss(Tensor(v), Tensor(t), tau=0.2)
        _, _, scaled = contrastive_loss(Tensor(2.0 * v), Tensor(t), tau=0.4)
        assert abs(base.item() - scaled.item()) < 1e-5

    def test_nonpositive_temperature_rejected(self):
        v = Tensor(np.eye(2))
        for tau in (0.0, -0.1):
            with pytest.raises(ValueError):
                contrastive_loss(v, v, tau=tau)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            contrastive_loss(Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 2))))

    def test_gradient_against_finite_differences(self):
        rng = np.random.default_rng(94)
        t = Tensor(rng.normal(0, 1, (3, 4)))

        def f(v):
            return contrastive_loss(v, t, tau=0.5)[2]

        x = Tensor(rng.normal(0, 1, (3, 4)), requires_grad=True)
        base = Tensor(np.float32(f(x).item()))
        err = finite_diff_check(lambda v: sub(f(v), base), x, eps=1e-2)
        assert err < 1e-2

    def test_loss_decreases_as_matches_sharpen(self):
        # Strengthening the diagonal of an identity-aligned batch drives
        # the loss toward zero.
        losses = []
        for scale in (1.0, 2.0, 4.0):
            emb = Tensor(scale * np.eye(3, dtype=np.float32))
            losses.append(contrastive_loss(emb, emb, tau=1.0)[2].item())
        assert losses[0] > losses[1] > losses[2]


class TestMlmLoss:
    def test_uniform_logits_give_log_vocab(self):
        logits = Tensor(np.zeros((4, 17), dtype=np.float32))
        assert abs(mlm_loss(logits, [0, 5, 16, 3]).item() - math.log(17)) < 1e-5

    def test_matches_cross_entropy_oracle(self):
        rng = np.random.default_rng(95)
        logits = rng.normal(0, 2, (5, 9))
        labels = [1, 0, 8, 4, 4]
        got = mlm_loss(Tensor(logits), labels).item()
        expected = -ref_log_softmax(logits)[np.arange(5), labels].mean()
        assert abs(got - expected) < 1e-5

    def test_confidence_monotonically_lowers_loss(self):
        losses = []
        for magnitude in (1.0, 10.0, 100.0):
            logits = np.zeros((3, 7), dtype=np.float32)
            logits[np.arange(3), [2, 5, 0]] = magnitude
            losses.append(mlm_loss(Tensor(logits), [2, 5, 0]).item())
        assert losses[0] > losses[1] > losses[2]
        assert losses[2] < 1e-5

    def test_empty_labels_rejected(self):
        with pytest.raises(ValueError):
            mlm_loss(Tensor(np.zeros((0, 5))), [])

    def test_row_count_mismatch_rejected(self):
        with pytest.raises(ValueError):
            mlm_loss(Tensor(np.zeros((3, 5))), [0, 1])

    def test_gradient_against_finite_differences(self):
        rng = np.random.default_rng(96)
        x = Tensor(rng.normal(0, 1, (4, 6)), requires_grad=True)
        err = finite_diff_check(lambda t: mlm_loss(t, [1, 5, 0, 3]), x, eps=1e-2)
        assert err < 1e-2
