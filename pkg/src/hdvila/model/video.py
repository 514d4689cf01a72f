"""Hybrid video encoder.

A segment's frames arrive as one high-resolution crop plus 2N low-resolution
neighbors. Staged convolutions encode both streams, an adapter and an
interpolation bridge reconcile feature grids, a divided space-time
Transformer mixes the hybrid sequence, and a linear layer fuses the
spatiotemporal tokens with the detailed high-resolution tokens.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..numerics import (
    ShapeError,
    Tensor,
    add,
    concat,
    conv2d,
    gelu,
    interpolate_bilinear,
    max_pool2d,
    reshape,
    take,
    transpose,
)
from .layers import (
    ParamTree,
    apply_layer_norm,
    apply_linear,
    init_attention,
    init_layer_norm,
    init_linear,
    init_mlp,
    mlp,
    self_attention,
    stack_rows,
)


@dataclass(frozen=True)
class StagedEncoderConfig:
    """Channel widths of a staged conv encoder.

    The stem downsamples by 4 and every later stage by 2, so the cumulative
    factor after stage k is 4 * 2**(k-1).
    """

    channels: Tuple[int, ...]

    def __post_init__(self):
        if len(self.channels) < 1:
            raise ValueError("need at least one stage")
        if any(c < 1 for c in self.channels):
            raise ValueError("channel widths must be positive")

    @property
    def stage_count(self) -> int:
        return len(self.channels)

    @property
    def downsample(self) -> int:
        return 4 * 2 ** (self.stage_count - 1)


@dataclass(frozen=True)
class HybridTransformerConfig:
    layers: int = 4
    heads: int = 16
    hidden: int = 1024
    mlp_ratio: int = 4

    def __post_init__(self):
        if self.hidden % self.heads != 0:
            raise ValueError(f"hidden {self.hidden} not divisible by {self.heads} heads")
        if self.layers < 1:
            raise ValueError("need at least one layer")


@dataclass(frozen=True)
class VideoEncoderConfig:
    """Full hybrid encoder: both conv streams plus the space-time Transformer.

    `grid` is the token grid (h, w) the encoder is built for; it sizes the
    learned spatial position table. The last low-resolution channel width
    must equal the Transformer hidden size because those feature maps feed
    the Transformer directly (only the high-resolution bridge has a
    channel projection).
    """

    hr: StagedEncoderConfig = StagedEncoderConfig((64, 128, 256, 512))
    lr: StagedEncoderConfig = StagedEncoderConfig((128, 256, 1024))
    transformer: HybridTransformerConfig = HybridTransformerConfig()
    n_neighbors: int = 3
    grid: Tuple[int, int] = (10, 16)

    def __post_init__(self):
        if self.hr.stage_count != self.lr.stage_count + 1:
            raise ValueError("high-res encoder needs exactly one more stage than low-res")
        if self.lr.channels[-1] != self.transformer.hidden:
            raise ValueError(
                f"last low-res channel width {self.lr.channels[-1]} must equal "
                f"Transformer hidden size {self.transformer.hidden}"
            )
        if self.n_neighbors < 0:
            raise ValueError("n_neighbors must be >= 0")

    @property
    def n_frames(self) -> int:
        return 2 * self.n_neighbors + 1


@dataclass
class SegmentFeatures:
    """Per-segment token features on a shared (h, w) grid."""

    v_hy: Tensor
    v_hr: Tensor
    v: Tensor
    grid: Tuple[int, int]


def init_staged_encoder(rng: np.random.Generator, in_channels: int, config: StagedEncoderConfig) -> ParamTree:
    stages = []
    prev = in_channels
    for width in config.channels:
        w = Tensor(rng.normal(0.0, (prev * 9) ** -0.5, (width, prev, 3, 3)), requires_grad=True)
        b = Tensor(np.zeros(width, dtype=np.float32), requires_grad=True)
        stages.append({"conv": {"w": w, "b": b}, "norm": init_layer_norm(width)})
        prev = width
    return {"stages": stages}


def init_video_params(rng: np.random.Generator, config: VideoEncoderConfig) -> ParamTree:
    d = config.transformer.hidden
    h, w = config.grid
    blocks = []
    for _ in range(config.transformer.layers):
        blocks.append(
            {
                "ln_t": init_layer_norm(d),
                "attn_t": init_attention(rng, d),
                # Additive slot-pair bias on the temporal scores. Zero at
                # init, so attention starts content-driven, but the bias
                # gradient is first order in the slot preference, letting
                # time selectivity emerge without waiting on q/k alignment.
                "bias_t": Tensor(
                    np.zeros((config.n_frames, config.n_frames), dtype=np.float32),
                    requires_grad=True,
                ),
                "ln_s": init_layer_norm(d),
                "attn_s": init_attention(rng, d),
                "ln_m": init_layer_norm(d),
                "mlp": init_mlp(rng, d, config.transformer.mlp_ratio),
            }
        )
    c4 = config.hr.channels[-1]
    adapter_w = Tensor(rng.normal(0.0, c4 ** -0.5, (d, c4, 1, 1)), requires_grad=True)
    adapter_b = Tensor(np.zeros(d, dtype=np.float32), requires_grad=True)
    return {
        "hr": init_staged_encoder(rng, 3, config.hr),
        "lr": init_staged_encoder(rng, 3, config.lr),
        "adapter": {"conv": {"w": adapter_w, "b": adapter_b}},
        "bridge": {"proj": init_linear(rng, config.hr.channels[-2], d)},
        "hybrid": {
            # Position tables start at unit-ish scale: divided attention can
            # only separate time slots (and the fused pooling can only read
            # out cell identity) through these vectors, and a 0.02-std table
            # is invisible next to layer-normed content features.
            "t_pos": Tensor(rng.normal(0.0, 0.5, (config.n_frames, d)), requires_grad=True),
            "s_pos": Tensor(rng.normal(0.0, 0.5, (h * w, d)), requires_grad=True),
            "blocks": blocks,
        },
        "fuse": {"proj": init_linear(rng, 2 * d, d)},
    }


def _channels_last_norm(x: Tensor, params: ParamTree) -> Tensor:
    """Layer norm over the channel axis of [c, h, w] or [b, c, h, w]."""
    if x.data.ndim == 3:
        fwd, back = (1, 2, 0), (2, 0, 1)
    else:
        fwd, back = (0, 2, 3, 1), (0, 3, 1, 2)
    return transpose(apply_layer_norm(transpose(x, fwd), params), back)


def _run_stages(x: Tensor, params: ParamTree) -> List[Tensor]:
    """Apply every stage, returning each stage's output in order."""
    outputs = []
    for i, stage in enumerate(params["stages"]):
        stride = 4 if i == 0 else 2
        x = conv2d(x, stage["conv"]["w"], stage["conv"]["b"], stride=stride, padding=1)
        x = gelu(_channels_last_norm(x, stage["norm"]))
        outputs.append(x)
    return outputs


def _check_divisible(shape: Tuple[int, ...], factor: int, what: str) -> None:
    h, w = shape[-2], shape[-1]
    if h % factor != 0 or w % factor != 0:
        raise ShapeError(f"{what} spatial dims {h}x{w} must be divisible by {factor}")


def encode_lr(frames: Sequence[Tensor], params: ParamTree) -> List[Tensor]:
    """Encode low-resolution frames with shared weights.

    Each [3, h, w] frame (h, w divisible by 16) maps to a [c, h/16, w/16]
    feature map. Frames are stacked into one batch so every frame runs
    through identical conv calls.
    """
    if not frames:
        raise ValueError("no frames to encode")
    shape = tuple(frames[0].shape)
    for f in frames:
        if tuple(f.shape) != shape:
            raise ShapeError(f"frame shapes differ: {tuple(f.shape)} vs {shape}")
    _check_divisible(shape, 16, "low-res frame")
    batch = stack_rows(list(frames))
    out = _run_stages(batch, params)[-1]
    return [take(out, i) for i in range(len(frames))]


def encode_hr(frame: Tensor, params: ParamTree) -> Tuple[Tensor, Tensor]:
    """Encode one high-resolution frame; return (stage3, stage4) features.

    The stage-3 map (spatial /16) feeds the interpolation bridge, the
    stage-4 map (/32) feeds the adapter.
    """
    _check_divisible(tuple(frame.shape), 32, "high-res frame")
    outputs = _run_stages(frame, params)
    return outputs[-2], outputs[-1]


def adapt_hr(stage4: Tensor, params: ParamTree) -> Tensor:
    """1x1 conv to the hidden width, 2x2 max-pool, flatten to [h*w, d] tokens."""
    c, h, w = stage4.shape
    if h % 2 != 0 or w % 2 != 0:
        raise ShapeError(f"adapter input dims {h}x{w} must be even")
    x = conv2d(stage4, params["conv"]["w"], params["conv"]["b"], stride=1, padding=0)
    x = max_pool2d(x, 2)
    d = x.shape[0]
    return reshape(transpose(x, (1, 2, 0)), (h // 2 * (w // 2), d))


def bridge_hr(stage3: Tensor, target_grid: Tuple[int, int], params: ParamTree) -> Tensor:
    """Bilinearly resize the stage-3 map to the token grid, project channels to d."""
    h, w = target_grid
    x = interpolate_bilinear(stage3, h, w)
    tokens = reshape(transpose(x, (1, 2, 0)), (h * w, x.shape[0]))
    return apply_linear(tokens, params["proj"])


def feature_map_tokens(feature_map: Tensor) -> Tensor:
    """Flatten a [c, h, w] feature map to [h*w, c] tokens, row-major."""
    c, h, w = feature_map.shape
    return reshape(transpose(feature_map, (1, 2, 0)), (h * w, c))


def hybrid_transform(
    lr_tokens: Sequence[Tensor],
    hr_tokens: Tensor,
    config: HybridTransformerConfig,
    params: ParamTree,
) -> Tensor:
    """Divided space-time Transformer over the hybrid token sequence.

    `lr_tokens` holds 2N time-ordered [P, d] frames; the high-resolution
    token frame is inserted at temporal slot N. Each block runs temporal
    attention (every spatial location attends across the 2N+1 frames at
    that location, with a learned slot-pair bias on the scores), then
    spatial attention within each frame, then an MLP, all pre-norm with
    residuals. Returns the high-resolution slot's tokens.
    """
    if len(lr_tokens) % 2 != 0:
        raise ShapeError(f"need an even number of low-res frames, got {len(lr_tokens)}")
    n = len(lr_tokens) // 2
    shape = tuple(hr_tokens.shape)
    for t in lr_tokens:
        if tuple(t.shape) != shape:
            raise ShapeError(f"token grids differ: {tuple(t.shape)} vs {shape}")
    p, d = shape
    if d != config.hidden:
        raise ShapeError(f"token width {d} does not match hidden size {config.hidden}")
    t_pos, s_pos = params["t_pos"], params["s_pos"]
    frames = list(lr_tokens[:n]) + [hr_tokens] + list(lr_tokens[n:])
    if len(frames) > t_pos.shape[0]:
        raise ShapeError(
            f"{len(frames)} frames exceed the temporal position table ({t_pos.shape[0]})"
        )
    if p != s_pos.shape[0]:
        raise ShapeError(f"{p} tokens do not match the spatial position table ({s_pos.shape[0]})")

    x = stack_rows(frames)
    slots = list(range(len(frames)))
    x = add(x, reshape(take(t_pos, slots), (len(frames), 1, d)))
    x = add(x, reshape(s_pos, (1, p, d)))
    for block in params["blocks"]:
        t = transpose(x, (1, 0, 2))
        bias = transpose(take(transpose(take(block["bias_t"], slots)), slots))
        t = self_attention(apply_layer_norm(t, block["ln_t"]), block["attn_t"], config.heads, bias)
        x = add(x, transpose(t, (1, 0, 2)))
        x = add(x, self_attention(apply_layer_norm(x, block["ln_s"]), block["attn_s"], config.heads))
        x = add(x, mlp(apply_layer_norm(x, block["ln_m"]), block["mlp"]))
    return take(x, n)


def fuse(v_hr: Tensor, v_hy: Tensor, params: ParamTree) -> Tensor:
    """Concatenate the two token streams per token and project 2d back to d."""
    if tuple(v_hr.shape) != tuple(v_hy.shape):
        raise ShapeError(f"token grids differ: {tuple(v_hr.shape)} vs {tuple(v_hy.shape)}")
    return apply_linear(concat([v_hr, v_hy], axis=-1), params["proj"])


def encode_segment(
    hr_frame: Tensor,
    lr_frames: Sequence[Tensor],
    config: VideoEncoderConfig,
    params: ParamTree,
) -> SegmentFeatures:
    """Run the full hybrid encoder on one segment's frames."""
    stage3, stage4 = encode_hr(hr_frame, params["hr"])
    v_hr = adapt_hr(stage4, params["adapter"])
    grid = (stage4.shape[1] // 2, stage4.shape[2] // 2)
    hr_tokens = bridge_hr(stage3, grid, params["bridge"])
    if lr_frames:
        lr_maps = encode_lr(lr_frames, params["lr"])
        lr_tokens = [feature_map_tokens(m) for m in lr_maps]
        for t in lr_tokens:
            if t.shape[0] != grid[0] * grid[1]:
                raise ShapeError(
                    f"low-res grid yields {t.shape[0]} tokens, high-res path {grid[0] * grid[1]}"
                )
    else:
        lr_tokens = []
    v_hy = hybrid_transform(lr_tokens, hr_tokens, config.transformer, params["hybrid"])
    v = fuse(v_hr, v_hy, params["fuse"])
    return SegmentFeatures(v_hy=v_hy, v_hr=v_hr, v=v, grid=grid)
