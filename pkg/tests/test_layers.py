"""Tests for the shared Transformer building blocks."""

import numpy as np
import pytest
from scipy.special import erf

from hdvila.model.layers import (
    additive_mask,
    apply_layer_norm,
    flatten_params,
    init_attention,
    init_block,
    init_layer_norm,
    init_linear,
    load_params,
    named_params,
    self_attention,
    stack_rows,
    transformer_block,
    zero_grads,
)
from hdvila.numerics import ShapeError, Tape, Tensor, finite_diff_check, mul, sub, tensor_sum


def npv(t):
    return np.asarray(t.data, dtype=np.float64)


def ref_layer_norm(x, gamma, beta, eps=1e-5):
    mu = x.mean(-1, keepdims=True)
    var = x.var(-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gamma + beta


def ref_softmax(x):
    e = np.exp(x - x.max(-1, keepdims=True))
    return e / e.sum(-1, keepdims=True)


def ref_gelu(x):
    return x * 0.5 * (1.0 + erf(x / np.sqrt(2.0)))


def ref_mha(x, params, heads, bias=None):
    """Reference multi-head attention on one [s, d] sequence, float64."""
    s, d = x.shape
    dh = d // heads
    q = x @ npv(params["q"]["w"]) + npv(params["q"]["b"])
    k = x @ npv(params["k"]["w"]) + npv(params["k"]["b"])
    v = x @ npv(params["v"]["w"]) + npv(params["v"]["b"])
    qh = q.reshape(s, heads, dh).transpose(1, 0, 2)
    kh = k.reshape(s, heads, dh).transpose(1, 0, 2)
    vh = v.reshape(s, heads, dh).transpose(1, 0, 2)
    scores = qh @ kh.transpose(0, 2, 1) / np.sqrt(dh)
    if bias is not None:
        scores = scores + bias
    ctx = ref_softmax(scores) @ vh
    ctx = ctx.transpose(1, 0, 2).reshape(s, d)
    return ctx @ npv(params["o"]["w"]) + npv(params["o"]["b"])


def ref_block(x, params, heads, bias=None):
    ln1 = ref_layer_norm(x, npv(params["ln1"]["gamma"]), npv(params["ln1"]["beta"]))
    x = x + ref_mha(ln1, params["attn"], heads, bias)
    ln2 = ref_layer_norm(x, npv(params["ln2"]["gamma"]), npv(params["ln2"]["beta"]))
    hidden = ref_gelu(ln2 @ npv(params["mlp"]["fc1"]["w"]) + npv(params["mlp"]["fc1"]["b"]))
    return x + hidden @ npv(params["mlp"]["fc2"]["w"]) + npv(params["mlp"]["fc2"]["b"])


class TestSelfAttention:
    def test_matches_reference(self):
        rng = np.random.default_rng(0)
        params = init_attention(rng, 8)
        x = Tensor(rng.normal(0, 1, (5, 8)))
        out = self_attention(x, params, heads=2)
        np.testing.assert_allclose(npv(out), ref_mha(npv(x), params, 2), rtol=1e-4, atol=1e-5)

    def test_batched_matches_per_sample(self):
        rng = np.random.default_rng(1)
        params = init_attention(rng, 6)
        x = Tensor(rng.normal(0, 1, (3, 4, 6)))
        batched = self_attention(x, params, heads=3)
        for i in range(3):
            single = self_attention(Tensor(x.data[i]), params, heads=3)
            np.testing.assert_allclose(batched.data[i], single.data, rtol=1e-6, atol=1e-7)

    def test_identical_tokens_give_identical_outputs(self):
        # Equal keys make the softmax uniform, so every position sees the
        # same mixed value and the output rows coincide.
        rng = np.random.default_rng(2)
        params = init_attention(rng, 4)
        row = rng.normal(0, 1, 4)
        x = Tensor(np.tile(row, (5, 1)))
        out = self_attention(x, params, heads=2).data
        np.testing.assert_allclose(out, np.tile(out[0], (5, 1)), rtol=1e-6, atol=1e-7)

    def test_indivisible_heads_rejected(self):
        rng = np.random.default_rng(3)
        params = init_attention(rng, 6)
        with pytest.raises(ShapeError):
            self_attention(Tensor(rng.normal(0, 1, (2, 6))), params, heads=4)

    def test_rank_validation(self):
        rng = np.random.default_rng(4)
        params = init_attention(rng, 4)
        with pytest.raises(ShapeError):
            self_attention(Tensor(rng.normal(0, 1, (2, 2, 2, 4))), params, heads=2)


class TestMasking:
    def test_additive_mask_values(self):
        m = additive_mask([1, 0, 1])
        assert m.shape == (1, 1, 1, 3)
        np.testing.assert_array_equal(m.data.reshape(-1), [0.0, -1e9, 0.0])

    def test_masked_keys_cannot_leak(self):
        # Real positions must be bitwise identical no matter what the
        # masked slot holds: the -1e9 bias underflows its weight to 0.0.
        rng = np.random.default_rng(5)
        params = init_block(rng, 8)
        mask = additive_mask([1, 1, 1, 0])
        x1 = rng.normal(0, 1, (4, 8))
        x2 = x1.copy()
        x2[3] = rng.normal(0, 100, 8)
        out1 = transformer_block(Tensor(x1), params, heads=2, mask=mask).data
        out2 = transformer_block(Tensor(x2), params, heads=2, mask=mask).data
        np.testing.assert_array_equal(out1[:3], out2[:3])

    def test_masked_block_matches_reference(self):
        rng = np.random.default_rng(6)
        params = init_block(rng, 4)
        x = rng.normal(0, 1, (3, 4))
        bias = np.array([0.0, 0.0, -1e9])
        out = transformer_block(Tensor(x), params, heads=2, mask=additive_mask([1, 1, 0]))
        np.testing.assert_allclose(npv(out)[:2], ref_block(x, params, 2, bias)[:2], rtol=1e-4, atol=1e-5)


class TestTransformerBlock:
    def test_matches_reference(self):
        rng = np.random.default_rng(7)
        params = init_block(rng, 8, ratio=2)
        x = rng.normal(0, 1, (4, 8))
        out = transformer_block(Tensor(x), params, heads=2)
        np.testing.assert_allclose(npv(out), ref_block(x, params, 2), rtol=1e-4, atol=1e-5)

    def test_gradient_against_finite_differences(self):
        rng = np.random.default_rng(8)
        params = init_block(rng, 8, ratio=2)
        weights = Tensor(0.5 + rng.random((5, 8)))
        x = Tensor(rng.normal(0, 1, (5, 8)))

        def f(t):
            return tensor_sum(mul(transformer_block(t, params, heads=2), weights))

        base = Tensor(np.float32(f(x).item()))
        err = finite_diff_check(lambda t: sub(f(t), base), x, eps=1e-2, max_coords=12)
        assert err < 1e-2

    def test_parameters_receive_gradients(self):
        rng = np.random.default_rng(9)
        params = init_block(rng, 4, ratio=2)
        x = Tensor(rng.normal(0, 1, (3, 4)))
        with Tape() as tape:
            loss = tensor_sum(mul(transformer_block(x, params, heads=2), transformer_block(x, params, heads=2)))
        tape.backward(loss)
        for name, p in named_params(params):
            assert p.grad is not None, name
            assert np.linalg.norm(p.grad) > 0, name


class TestParamTrees:
    def build(self):
        rng = np.random.default_rng(10)
        return {
            "emb": Tensor(rng.normal(0, 1, (3, 2)), requires_grad=True),
            "blocks": [init_linear(rng, 2, 2) for _ in range(2)],
            "head": {"ln": init_layer_norm(2)},
        }

    def test_flatten_names(self):
        flat = flatten_params(self.build())
        assert set(flat) == {
            "emb",
            "blocks.0.w",
            "blocks.0.b",
            "blocks.1.w",
            "blocks.1.b",
            "head.ln.gamma",
            "head.ln.beta",
        }

    def test_named_params_sorted(self):
        names = [n for n, _ in named_params(self.build())]
        assert names == sorted(names)

    def test_load_round_trip(self):
        tree = self.build()
        flat = {name: t.data.copy() * 2.0 for name, t in named_params(tree)}
        load_params(tree, flat)
        for name, t in named_params(tree):
            np.testing.assert_array_equal(t.data, flat[name])

    def test_load_missing_key(self):
        tree = self.build()
        flat = {name: t.data for name, t in named_params(tree)}
        del flat["emb"]
        with pytest.raises(KeyError):
            load_params(tree, flat)

    def test_load_shape_mismatch(self):
        tree = self.build()
        flat = {name: t.data for name, t in named_params(tree)}
        flat["emb"] = np.zeros((4, 4), dtype=np.float32)
        with pytest.raises(ShapeError):
            load_params(tree, flat)

    def test_zero_grads(self):
        tree = self.build()
        for _, t in named_params(tree):
            t.grad = np.ones_like(t.data)
        zero_grads(tree)
        assert all(t.grad is None for _, t in named_params(tree))


class TestStackRows:
    def test_matches_numpy_stack(self):
        rng = np.random.default_rng(11)
        parts = [Tensor(rng.normal(0, 1, (2, 3))) for _ in range(4)]
        out = stack_rows(parts)
        np.testing.assert_array_equal(out.data, np.stack([p.data for p in parts]))

    def test_gradient_splits_back(self):
        parts = [Tensor([1.0, 2.0], requires_grad=True) for _ in range(3)]
        with Tape() as tape:
            loss = tensor_sum(mul(stack_rows(parts), Tensor([[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])))
        tape.backward(loss)
        for i, p in enumerate(parts):
            np.testing.assert_array_equal(p.grad, np.full(2, i + 1.0, dtype=np.float32))
