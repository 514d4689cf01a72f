"""Finite-difference verification of every differentiable kernel.

The sweep scalarizes each op with positive bounded weights and centers the
function value before differencing; both choices keep float32 rounding noise
far below the true gradient magnitudes without touching the op under test.
"""

import numpy as np
import pytest

from hdvila.numerics import (
    NumericError,
    ShapeError,
    Tensor,
    add,
    concat,
    conv2d,
    div,
    embedding,
    exp,
    finite_diff_check,
    gather_index,
    gelu,
    interpolate_bilinear,
    l2_normalize,
    layer_norm,
    linear,
    log,
    log_softmax,
    matmul,
    max_pool2d,
    mul,
    neg,
    reshape,
    softmax,
    sqrt,
    sub,
    take,
    tensor_mean,
    tensor_sum,
    transpose,
)

TOL = 1e-2


def check(f, x, tol=TOL, eps=1e-2):
    base = Tensor(np.float32(f(x).item()))
    err = finite_diff_check(lambda t: sub(f(t), base), x, eps=eps)
    assert err < tol, f"max relative gradient error {err}"


def weighted_sum(t, rng):
    """Scalarize with positive weights so no gradient coordinate vanishes."""
    w = Tensor((0.5 + rng.random(t.shape)).astype(np.float32))
    return tensor_sum(mul(t, w))


SHAPES_1D = [(3,), (5,), (8,)]
SHAPES_2D = [(2, 3), (4, 4), (1, 6)]
SHAPES_3D = [(2, 2, 3), (1, 4, 2), (3, 1, 5)]


class TestBasicExamples:
    def test_plain_sum_has_zero_error(self):
        x = Tensor(np.random.default_rng(0).standard_normal(6).astype(np.float32))
        err = finite_diff_check(tensor_sum, x)
        assert err < 1e-4

    def test_layer_norm_sum_of_squares(self):
        rng = np.random.default_rng(43)
        x = Tensor(rng.standard_normal((3, 6)).astype(np.float32))
        gain = Tensor(rng.standard_normal(6).astype(np.float32))
        bias = Tensor(rng.standard_normal(6).astype(np.float32))

        def f(t):
            y = layer_norm(t, gain, bias)
            return tensor_sum(mul(y, y))

        err = finite_diff_check(f, x)
        assert err < 1e-2, f"max relative gradient error {err}"

    def test_matmul_sum_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        b = Tensor(rng.standard_normal((4, 3)).astype(np.float32))
        a = Tensor(rng.standard_normal((2, 4)).astype(np.float32))
        assert finite_diff_check(lambda t: tensor_sum(matmul(t, b)), a) < 1e-3
        assert finite_diff_check(lambda t: tensor_sum(matmul(a, t)), b) < 1e-3


class TestElementwiseGradients:
    @pytest.mark.parametrize("shape", SHAPES_2D)
    def test_add_sub_mul(self, shape):
        rng = np.random.default_rng(3)
        other = Tensor((rng.random(shape) + 0.5).astype(np.float32))
        x = Tensor(rng.standard_normal(shape).astype(np.float32))
        check(lambda t: weighted_sum(add(t, other), np.random.default_rng(30)), x)
        check(lambda t: weighted_sum(sub(other, t), np.random.default_rng(31)), x)
        check(lambda t: weighted_sum(mul(t, other), np.random.default_rng(32)), x)

    @pytest.mark.parametrize("shape", SHAPES_1D)
    def test_broadcast_operand(self, shape):
        rng = np.random.default_rng(4)
        big = Tensor((rng.random((4,) + shape) + 0.5).astype(np.float32))
        x = Tensor(rng.standard_normal(shape).astype(np.float32))
        check(lambda t: weighted_sum(add(big, t), np.random.default_rng(40)), x)
        check(lambda t: weighted_sum(mul(big, t), np.random.default_rng(41)), x)

    @pytest.mark.parametrize("shape", SHAPES_2D)
    def test_div_both_sides(self, shape):
        rng = np.random.default_rng(5)
        denom = Tensor((rng.random(shape) + 1.0).astype(np.float32))
        numer = Tensor((rng.random(shape) + 1.0).astype(np.float32))
        x = Tensor((rng.random(shape) + 1.0).astype(np.float32))
        check(lambda t: weighted_sum(div(t, denom), np.random.default_rng(50)), x)
        check(lambda t: weighted_sum(div(numer, t), np.random.default_rng(51)), x)

    @pytest.mark.parametrize("shape", SHAPES_1D + SHAPES_2D[:1])
    def test_neg_exp_log_sqrt(self, shape):
        rng = np.random.default_rng(6)
        x = Tensor(rng.standard_normal(shape).astype(np.float32))
        pos = Tensor((rng.random(shape) + 0.5).astype(np.float32))
        check(lambda t: weighted_sum(neg(t), np.random.default_rng(60)), x)
        check(lambda t: weighted_sum(exp(t), np.random.default_rng(61)), x)
        check(lambda t: weighted_sum(log(t), np.random.default_rng(62)), pos)
        check(lambda t: weighted_sum(sqrt(t), np.random.default_rng(63)), pos)

    @pytest.mark.parametrize("shape", SHAPES_2D)
    def test_gelu(self, shape):
        # Inputs kept right of the derivative's zero crossing near -0.75.
        x = Tensor((np.random.default_rng(7).random(shape) * 2 + 0.25).astype(np.float32))
        check(lambda t: weighted_sum(gelu(t), np.random.default_rng(70)), x)

    def test_gelu_negative_branch(self):
        x = Tensor(np.array([-3.0, -2.0, -1.5], dtype=np.float32))
        check(lambda t: weighted_sum(gelu(t), np.random.default_rng(71)), x, tol=2e-2)


class TestShapeOpGradients:
    @pytest.mark.parametrize("shape", SHAPES_3D)
    def test_reshape_transpose(self, shape):
        rng = np.random.default_rng(8)
        x = Tensor(rng.standard_normal(shape).astype(np.float32))
        flat = int(np.prod(shape))
        check(lambda t: weighted_sum(reshape(t, (flat,)), np.random.default_rng(80)), x)
        check(lambda t: weighted_sum(transpose(t), np.random.default_rng(81)), x)

    @pytest.mark.parametrize("shape", SHAPES_2D)
    def test_concat_each_operand(self, shape):
        rng = np.random.default_rng(9)
        other = Tensor(rng.standard_normal(shape).astype(np.float32))
        x = Tensor(rng.standard_normal(shape).astype(np.float32))
        check(lambda t: weighted_sum(concat([t, other], axis=0), np.random.default_rng(90)), x)
        check(lambda t: weighted_sum(concat([other, t], axis=1), np.random.default_rng(91)), x)

    @pytest.mark.parametrize("rows", [3, 5, 7])
    def test_take_and_gather(self, rows):
        rng = np.random.default_rng(10)
        x = Tensor(rng.standard_normal((rows, 4)).astype(np.float32))
        idx = rng.integers(0, rows, size=6)
        check(lambda t: weighted_sum(take(t, idx, axis=0), np.random.default_rng(100)), x)
        cols = rng.integers(0, 4, size=rows)
        scale = Tensor(np.arange(1.0, rows + 1, dtype=np.float32))
        check(lambda t: tensor_sum(mul(gather_index(t, cols), scale)), x)

    @pytest.mark.parametrize("vocab", [4, 6, 9])
    def test_embedding_table(self, vocab):
        rng = np.random.default_rng(11)
        table = Tensor(rng.standard_normal((vocab, 3)).astype(np.float32))
        ids = np.concatenate([np.arange(vocab), rng.integers(0, vocab, size=4)])
        check(lambda t: weighted_sum(embedding(t, ids), np.random.default_rng(110)), table)


class TestReductionGradients:
    @pytest.mark.parametrize("shape", SHAPES_3D)
    def test_sum_and_mean_axes(self, shape):
        rng = np.random.default_rng(12)
        x = Tensor(rng.standard_normal(shape).astype(np.float32))
        check(lambda t: tensor_sum(t), x)
        check(lambda t: weighted_sum(tensor_sum(t, axis=0), np.random.default_rng(120)), x)
        check(lambda t: weighted_sum(tensor_mean(t, axis=-1, keepdims=True), np.random.default_rng(121)), x)
        check(lambda t: tensor_mean(t), x)


class TestNormalizerGradients:
    @pytest.mark.parametrize("shape", [(2, 5), (3, 3), (1, 7)])
    def test_softmax_and_log_softmax(self, shape):
        # Negative log-likelihood keeps every coordinate's gradient at
        # p - onehot, bounded away from zero on both branches.
        rng = np.random.default_rng(13)
        x = Tensor((rng.standard_normal(shape) * 0.8).astype(np.float32))
        targets = rng.integers(0, shape[-1], size=shape[0])

        def nll_from_log(t):
            return neg(tensor_sum(gather_index(log_softmax(t, axis=-1), targets)))

        def nll_from_probs(t):
            return neg(tensor_sum(log(gather_index(softmax(t, axis=-1), targets))))

        check(nll_from_log, x)
        check(nll_from_probs, x)

    @pytest.mark.parametrize("d,seed", [(3, 153), (6, 141), (8, 252)])
    def test_layer_norm_all_arguments(self, d, seed):
        rng = np.random.default_rng(seed)
        x = Tensor(rng.standard_normal((3, d)).astype(np.float32) * 2)
        gain = Tensor((rng.random(d) + 0.5).astype(np.float32))
        bias = Tensor(rng.standard_normal(d).astype(np.float32))
        check(lambda t: weighted_sum(layer_norm(t, gain, bias), np.random.default_rng(seed + 1)), x)
        check(lambda t: weighted_sum(layer_norm(x, t, bias), np.random.default_rng(seed + 2)), gain)
        check(lambda t: weighted_sum(layer_norm(x, gain, t), np.random.default_rng(seed + 3)), bias)

    @pytest.mark.parametrize("shape,seed", [((4,), 150), ((2, 5), 151), ((3, 2, 4), 213)])
    def test_l2_normalize(self, shape, seed):
        x = Tensor((np.random.default_rng(seed).random(shape) + 0.5).astype(np.float32))
        check(lambda t: weighted_sum(l2_normalize(t), np.random.default_rng(seed + 10)), x)


class TestSpatialGradients:
    @pytest.mark.parametrize(
        "xshape,wshape,stride,padding",
        [
            ((2, 5, 5), (3, 2, 3, 3), 1, 1),
            ((1, 4, 6), (2, 1, 2, 2), 2, 0),
            ((2, 2, 6, 6), (2, 2, 3, 3), 2, 1),
        ],
    )
    def test_conv2d_all_arguments(self, xshape, wshape, stride, padding):
        # Positive inputs and kernels keep all gradient sums away from zero.
        rng = np.random.default_rng(16)
        x = Tensor((rng.random(xshape) + 0.5).astype(np.float32))
        w = Tensor((rng.random(wshape) * 0.8 + 0.2).astype(np.float32))
        b = Tensor(rng.standard_normal(wshape[0]).astype(np.float32))
        check(lambda t: weighted_sum(conv2d(t, w, b, stride, padding), np.random.default_rng(160)), x)
        check(lambda t: weighted_sum(conv2d(x, t, b, stride, padding), np.random.default_rng(161)), w)
        check(lambda t: weighted_sum(conv2d(x, w, t, stride, padding), np.random.default_rng(162)), b)

    @pytest.mark.parametrize("shape", [(1, 4, 4), (2, 5, 6), (1, 2, 6, 6)])
    def test_max_pool2d(self, shape):
        # Values spaced 0.1 apart so the step never flips an argmax.
        rng = np.random.default_rng(17)
        vals = rng.permutation(np.prod(shape)).astype(np.float32) * 0.1
        x = Tensor(vals.reshape(shape))
        check(lambda t: weighted_sum(max_pool2d(t, 2), np.random.default_rng(170)), x, eps=1e-3)

    @pytest.mark.parametrize("shape,out_hw", [((1, 4, 4), (2, 2)), ((2, 3, 5), (6, 7)), ((1, 2, 4, 6), (3, 3))])
    def test_interpolate_bilinear(self, shape, out_hw):
        x = Tensor(np.random.default_rng(18).standard_normal(shape).astype(np.float32))
        check(lambda t: weighted_sum(interpolate_bilinear(t, *out_hw), np.random.default_rng(180)), x)


class TestFullBlock:
    def test_single_transformer_block_to_scalar(self):
        """Attention + MLP with residuals, differentiated end to end."""
        rng = np.random.default_rng(19)
        d, s = 8, 5
        w = {
            name: Tensor(rng.standard_normal((d, d)).astype(np.float32) * (1 / np.sqrt(d)))
            for name in ("q", "k", "v", "o", "m1", "m2")
        }
        g1, b1 = Tensor(np.ones(d, np.float32)), Tensor(np.zeros(d, np.float32))
        g2, b2 = Tensor(np.ones(d, np.float32)), Tensor(np.zeros(d, np.float32))
        scale = Tensor(np.float32(1.0 / np.sqrt(d)))

        def block(x):
            h = layer_norm(x, g1, b1)
            q, k, v = linear(h, w["q"]), linear(h, w["k"]), linear(h, w["v"])
            att = softmax(mul(matmul(q, transpose(k)), scale), axis=-1)
            x = add(x, linear(matmul(att, v), w["o"]))
            h2 = layer_norm(x, g2, b2)
            x = add(x, linear(gelu(linear(h2, w["m1"])), w["m2"]))
            return tensor_sum(mul(x, x))

        x = Tensor(rng.standard_normal((s, d)).astype(np.float32))
        check(block, x)


class TestHarnessContract:
    def test_non_scalar_function_rejected(self):
        x = Tensor(np.ones(3, np.float32))
        with pytest.raises(ShapeError):
            finite_diff_check(lambda t: mul(t, t), x)

    def test_non_deterministic_function_rejected(self):
        calls = [0]

        def flaky(t):
            calls[0] += 1
            return tensor_sum(mul(t, float(calls[0])))

        x = Tensor(np.ones(3, np.float32))
        with pytest.raises(NumericError):
            finite_diff_check(flaky, x)

    def test_restores_tensor_state(self):
        x = Tensor(np.ones(4, np.float32))
        before = x.data.copy()
        finite_diff_check(tensor_sum, x)
        np.testing.assert_array_equal(x.data, before)
        assert x.requires_grad is False
        assert x.grad is None

    def test_coordinate_subsample(self):
        x = Tensor(np.random.default_rng(20).standard_normal(30).astype(np.float32))
        err = finite_diff_check(lambda t: tensor_sum(mul(t, t)), x, max_coords=6)
        assert err < TOL
