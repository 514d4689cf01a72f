"""Training objectives: bidirectional contrastive matching and MLM loss."""

from typing import Sequence, Tuple

import numpy as np

from .model.layers import ParamTree, apply_linear, stack_rows
from .numerics import (
    Tensor,
    add,
    gather_index,
    l2_normalize,
    log_softmax,
    matmul,
    mul,
    neg,
    tensor_mean,
    transpose,
)


def video_embedding(segment_tokens: Sequence[Tensor], params: ParamTree) -> Tensor:
    """Video-level embedding from per-segment fused tokens.

    Each segment's [P, d] tokens are mean-pooled and linearly projected;
    the segment embeddings are averaged and L2-normalized.
    """
    if len(segment_tokens) == 0:
        raise ValueError("no segments to embed")
    projected = [apply_linear(tensor_mean(v, axis=0), params["proj"]) for v in segment_tokens]
    stacked = stack_rows(projected)
    return l2_normalize(tensor_mean(stacked, axis=0))


def contrastive_loss(v: Tensor, t: Tensor, tau: float = 0.05) -> Tuple[Tensor, Tensor, Tensor]:
    """Symmetric InfoNCE over a batch of normalized embedding pairs.

    Row i of `v` matches row i of `t`; every other pairing is a negative.
    Returns (video-to-text loss, text-to-video loss, their mean).
    """
    if tau <= 0:
        raise ValueError(f"temperature must be positive, got {tau}")
    if tuple(v.shape) != tuple(t.shape) or v.data.ndim != 2:
        raise ValueError(f"expected matching [B, d] embeddings, got {v.shape} and {t.shape}")
    b = v.shape[0]
    sim = mul(matmul(v, transpose(t)), 1.0 / tau)
    diag = np.arange(b, dtype=np.int64)
    l_v2t = neg(tensor_mean(gather_index(log_softmax(sim, axis=-1), diag)))
    l_t2v = neg(tensor_mean(gather_index(log_softmax(transpose(sim), axis=-1), diag)))
    total = mul(add(l_v2t, l_t2v), 0.5)
    return l_v2t, l_t2v, total


def mlm_loss(logits: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean negative log-likelihood of the labels under the logits."""
    if len(labels) == 0:
        raise ValueError("no labeled positions")
    if logits.shape[0] != len(labels):
        raise ValueError(f"{logits.shape[0]} logit rows for {len(labels)} labels")
    idx = np.asarray(labels, dtype=np.int64)
    return neg(tensor_mean(gather_index(log_softmax(logits, axis=-1), idx)))
