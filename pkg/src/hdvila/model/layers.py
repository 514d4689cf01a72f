"""Shared Transformer building blocks.

Parameters live in nested dicts of Tensors so model code addresses them by
role ("attn", "mlp", "ln1") while checkpoints and the optimizer see a flat
dotted namespace via flatten_params.
"""

import math
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..numerics import (
    ShapeError,
    Tensor,
    add,
    concat,
    gelu,
    layer_norm,
    linear,
    matmul,
    mul,
    reshape,
    softmax,
    transpose,
)

ParamTree = Dict[str, object]


def init_linear(
    rng: np.random.Generator, d_in: int, d_out: int, std: Optional[float] = None
) -> ParamTree:
    """Linear parameters; the weight std defaults to 1/sqrt(d_in).

    Fan-in scaling keeps activations O(1) at any width, matching the staged
    conv initializers, so residual updates are visible from the first step
    even at toy dims.
    """
    if std is None:
        std = d_in ** -0.5
    w = Tensor(rng.normal(0.0, std, (d_in, d_out)), requires_grad=True)
    b = Tensor(np.zeros(d_out, dtype=np.float32), requires_grad=True)
    return {"w": w, "b": b}


def init_layer_norm(dim: int) -> ParamTree:
    return {
        "gamma": Tensor(np.ones(dim, dtype=np.float32), requires_grad=True),
        "beta": Tensor(np.zeros(dim, dtype=np.float32), requires_grad=True),
    }


def init_attention(rng: np.random.Generator, dim: int) -> ParamTree:
    return {name: init_linear(rng, dim, dim) for name in ("q", "k", "v", "o")}


def init_mlp(rng: np.random.Generator, dim: int, ratio: int = 4) -> ParamTree:
    return {"fc1": init_linear(rng, dim, dim * ratio), "fc2": init_linear(rng, dim * ratio, dim)}


def init_block(rng: np.random.Generator, dim: int, ratio: int = 4) -> ParamTree:
    return {
        "ln1": init_layer_norm(dim),
        "attn": init_attention(rng, dim),
        "ln2": init_layer_norm(dim),
        "mlp": init_mlp(rng, dim, ratio),
    }


def apply_linear(x: Tensor, params: ParamTree) -> Tensor:
    return linear(x, params["w"], params["b"])


def apply_layer_norm(x: Tensor, params: ParamTree) -> Tensor:
    return layer_norm(x, params["gamma"], params["beta"])


def additive_mask(attention_mask) -> Tensor:
    """Turn a 0/1 key mask of length s into an additive [1, 1, 1, s] bias.

    Masked keys get -1e9, which underflows to an exactly zero attention
    weight after the max-subtracted softmax, so padded positions cannot
    leak into real ones.
    """
    m = np.asarray(attention_mask, dtype=np.float32).reshape(-1)
    bias = (m - 1.0) * 1e9
    return Tensor(bias.reshape(1, 1, 1, m.size))


def stack_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack same-shape tensors along a new leading axis."""
    rows = [reshape(t, (1,) + tuple(t.shape)) for t in tensors]
    return concat(rows, axis=0)


def self_attention(x: Tensor, params: ParamTree, heads: int, mask: Optional[Tensor] = None) -> Tensor:
    """Multi-head scaled dot-product self-attention.

    Accepts [s, d] or batched [b, s, d]; `mask` is an additive bias
    broadcastable to the [b, heads, s, s] score tensor.
    """
    squeeze = x.data.ndim == 2
    if squeeze:
        x = reshape(x, (1,) + tuple(x.shape))
    if x.data.ndim != 3:
        raise ShapeError(f"self_attention expects 2-d or 3-d input, got shape {x.shape}")
    b, s, d = x.shape
    if d % heads != 0:
        raise ShapeError(f"hidden size {d} not divisible by {heads} heads")
    dh = d // heads

    def split(t: Tensor) -> Tensor:
        return transpose(reshape(t, (b, s, heads, dh)), (0, 2, 1, 3))

    q = split(apply_linear(x, params["q"]))
    k = split(apply_linear(x, params["k"]))
    v = split(apply_linear(x, params["v"]))
    scores = mul(matmul(q, transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(dh))
    if mask is not None:
        scores = add(scores, mask)
    weights = softmax(scores, axis=-1)
    ctx = reshape(transpose(matmul(weights, v), (0, 2, 1, 3)), (b, s, d))
    out = apply_linear(ctx, params["o"])
    if squeeze:
        out = reshape(out, (s, d))
    return out


def mlp(x: Tensor, params: ParamTree) -> Tensor:
    return apply_linear(gelu(apply_linear(x, params["fc1"])), params["fc2"])


def transformer_block(x: Tensor, params: ParamTree, heads: int, mask: Optional[Tensor] = None) -> Tensor:
    """Pre-norm block: norm -> attention -> residual, norm -> MLP -> residual."""
    x = add(x, self_attention(apply_layer_norm(x, params["ln1"]), params["attn"], heads, mask))
    x = add(x, mlp(apply_layer_norm(x, params["ln2"]), params["mlp"]))
    return x


def flatten_params(tree: ParamTree, prefix: str = "") -> Dict[str, Tensor]:
    """Flatten a nested param dict (dicts and lists) to dotted names."""
    flat: Dict[str, Tensor] = {}
    for name, node in _walk(tree, prefix):
        flat[name] = node
    return flat


def named_params(tree: ParamTree, prefix: str = "") -> List[Tuple[str, Tensor]]:
    """Deterministically ordered (dotted name, tensor) pairs."""
    return sorted(_walk(tree, prefix), key=lambda pair: pair[0])


def _walk(node, prefix: str) -> Iterator[Tuple[str, Tensor]]:
    if isinstance(node, Tensor):
        yield prefix, node
    elif isinstance(node, dict):
        for key, child in node.items():
            yield from _walk(child, f"{prefix}.{key}" if prefix else str(key))
    elif isinstance(node, (list, tuple)):
        for i, child in enumerate(node):
            yield from _walk(child, f"{prefix}.{i}" if prefix else str(i))
    else:
        raise TypeError(f"unexpected node of type {type(node).__name__} at {prefix!r}")


def load_params(tree: ParamTree, flat: Dict[str, np.ndarray], prefix: str = "") -> None:
    """Copy checkpoint arrays into an existing param tree, in place.

    Every tree leaf must be present in `flat` with a matching shape.
    """
    for name, tensor in _walk(tree, prefix):
        if name not in flat:
            raise KeyError(f"checkpoint missing parameter {name!r}")
        arr = np.asarray(flat[name], dtype=np.float32)
        if arr.shape != tensor.data.shape:
            raise ShapeError(
                f"parameter {name!r} has shape {tensor.data.shape}, checkpoint has {arr.shape}"
            )
        tensor.data = np.ascontiguousarray(arr)


def zero_grads(tree: ParamTree) -> None:
    for _, tensor in _walk(tree, ""):
        tensor.grad = None
