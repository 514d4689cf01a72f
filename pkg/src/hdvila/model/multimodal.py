"""Joint text-video Transformer, BERT-style masking, and the MLM head."""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..numerics import (
    ShapeError,
    Tensor,
    add,
    concat,
    gelu,
    mul,
    take,
)
from .layers import (
    ParamTree,
    additive_mask,
    apply_linear,
    init_block,
    init_linear,
    transformer_block,
)
from .text import CLS, PAD, RESERVED_TOKENS, TokenSequence, Vocab


@dataclass(frozen=True)
class JointConfig:
    layers: int = 2
    heads: int = 16
    hidden: int = 1024
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ValueError(f"hidden {self.hidden} not divisible by {self.heads} heads")


@dataclass
class JointInput:
    """Text states, fused video tokens, and the masks that join them.

    `text_mask` is the 0/1 attention mask over the padded text slots; video
    tokens are always live. Video tokens receive a learned 2D position
    embedding (one table row per (row, col) grid cell, row-major) before
    the first joint layer.
    """

    text_states: Tensor
    video_tokens: Tensor
    grid: Tuple[int, int]
    text_mask: Tuple[int, ...]

    def __post_init__(self):
        h, w = self.grid
        if self.video_tokens.shape[0] != h * w:
            raise ShapeError(
                f"{self.video_tokens.shape[0]} video tokens do not tile a {h}x{w} grid"
            )
        if len(self.text_mask) != self.text_states.shape[0]:
            raise ShapeError("text mask length must match text states")


@dataclass(frozen=True)
class MlmBatch:
    """Original and corrupted ids plus the positions being predicted.

    `labels[k]` is the original id at `positions[k]`; unlisted positions
    carry no label.
    """

    original: Tuple[int, ...]
    corrupted: Tuple[int, ...]
    positions: Tuple[int, ...]
    labels: Tuple[int, ...]

    def __post_init__(self):
        if len(self.positions) != len(self.labels):
            raise ValueError("one label per masked position")
        for pos, label in zip(self.positions, self.labels):
            if self.original[pos] != label:
                raise ValueError(f"label at {pos} must be the original id")


def init_joint_params(rng: np.random.Generator, config: JointConfig, grid: Tuple[int, int]) -> ParamTree:
    h, w = grid
    return {
        "pos2d": Tensor(rng.normal(0.0, 0.02, (h * w, config.hidden)), requires_grad=True),
        "blocks": [init_block(rng, config.hidden, config.mlp_ratio) for _ in range(config.layers)],
    }


def joint_forward(inp: JointInput, config: JointConfig, params: ParamTree) -> Tensor:
    """Bidirectional attention over [text states; video tokens].

    Returns states for all max_len + h*w positions; text PAD slots are
    masked out as keys, everything else attends everywhere.
    """
    d_text = inp.text_states.shape[-1]
    d_vid = inp.video_tokens.shape[-1]
    if d_text != config.hidden or d_vid != config.hidden:
        raise ShapeError(
            f"hidden sizes disagree: text {d_text}, video {d_vid}, config {config.hidden}"
        )
    if inp.video_tokens.shape[0] != params["pos2d"].shape[0]:
        raise ShapeError(
            f"{inp.video_tokens.shape[0]} video tokens do not match the "
            f"2D position table ({params['pos2d'].shape[0]})"
        )
    vid = add(inp.video_tokens, params["pos2d"])
    x = concat([inp.text_states, vid], axis=0)
    joint_mask = tuple(inp.text_mask) + (1,) * inp.video_tokens.shape[0]
    mask = additive_mask(joint_mask)
    for block in params["blocks"]:
        x = transformer_block(x, block, config.heads, mask)
    return x


def mask_tokens(
    seq: TokenSequence,
    vocab: Vocab,
    rng: np.random.Generator,
    mask_prob: float = 0.15,
) -> MlmBatch:
    """BERT-style corruption of a token sequence.

    Every live non-CLS slot is independently selected with probability
    `mask_prob`; a selected token becomes MASK 80% of the time, a uniform
    random non-reserved token 10%, and stays unchanged 10%. CLS and PAD
    are never selected.
    """
    if not 0.0 <= mask_prob <= 1.0:
        raise ValueError("mask_prob must lie in [0, 1]")
    from .text import MASK as MASK_ID

    n_reserved = len(RESERVED_TOKENS)
    corrupted = list(seq.ids)
    positions: List[int] = []
    labels: List[int] = []
    for i, (tok, live) in enumerate(zip(seq.ids, seq.attention_mask)):
        if live == 0 or tok == CLS:
            continue
        if rng.random() >= mask_prob:
            continue
        positions.append(i)
        labels.append(tok)
        branch = rng.random()
        if branch < 0.8:
            corrupted[i] = MASK_ID
        elif branch < 0.9 and vocab.size > n_reserved:
            corrupted[i] = int(rng.integers(n_reserved, vocab.size))
    return MlmBatch(
        original=tuple(seq.ids),
        corrupted=tuple(corrupted),
        positions=tuple(positions),
        labels=tuple(labels),
    )


def init_mlm_params(rng: np.random.Generator, hidden: int, vocab_size: int) -> ParamTree:
    return {
        "fc1": init_linear(rng, hidden, hidden),
        "fc2": init_linear(rng, hidden, vocab_size),
    }


def mlm_logits(states: Tensor, positions: Sequence[int], params: ParamTree) -> Tensor:
    """Vocabulary logits at the masked text positions: a 2-layer MLP head."""
    if len(positions) == 0:
        raise ValueError("no masked positions to predict")
    picked = take(states, list(positions))
    return apply_linear(gelu(apply_linear(picked, params["fc1"])), params["fc2"])


def aggregate_segments(logits: Sequence[Tensor]) -> Tensor:
    """Consensus over segments: the arithmetic mean of their logits."""
    if len(logits) == 0:
        raise ValueError("no segment logits to aggregate")
    shape = tuple(logits[0].shape)
    for t in logits:
        if tuple(t.shape) != shape:
            raise ShapeError(f"logit shapes differ: {tuple(t.shape)} vs {shape}")
    total = logits[0]
    for t in logits[1:]:
        total = add(total, t)
    return mul(total, 1.0 / len(logits))
