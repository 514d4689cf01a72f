"""Segment planning and hybrid high/low-resolution frame sampling.

A clip's frames are divided into contiguous segment windows. From each
window one high-resolution frame at index t is drawn, together with 2N
low-resolution neighbors at t + k*r (k = -N..-1, 1..N) clamped to the
window. The LR neighbors are the same crop at quarter resolution.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .checkpoint import load_checkpoint
from .numerics import Tensor

# A frame source maps a frame index to a [3, H, W] float32 array.
FrameSource = Callable[[int], np.ndarray]


@dataclass(frozen=True)
class SegmentPlan:
    segment_count: int
    frames_per_segment: int
    r: int
    windows: Tuple[Tuple[int, int], ...]

    @property
    def n_neighbors(self) -> int:
        """N in the 2N+1 frames-per-segment layout."""
        return (self.frames_per_segment - 1) // 2


@dataclass
class HybridSequence:
    hr_index: int
    lr_indices: Tuple[int, ...]
    hr_image: Optional[Tensor] = None
    lr_images: List[Tensor] = field(default_factory=list)


def plan_segments(
    clip_frames: int, segment_count: int, frames_per_segment: int, r: int
) -> SegmentPlan:
    """Divide ``clip_frames`` into equal windows, remainder to the last."""
    if segment_count < 1:
        raise ValueError(f"segment_count must be >= 1, got {segment_count}")
    if clip_frames < 1:
        raise ValueError(f"clip_frames must be >= 1, got {clip_frames}")
    if frames_per_segment < 1 or frames_per_segment % 2 == 0:
        raise ValueError(f"frames_per_segment must be odd and >= 1, got {frames_per_segment}")
    if r < 1:
        raise ValueError(f"lr rate r must be >= 1, got {r}")
    if clip_frames < segment_count:
        raise ValueError(f"cannot split {clip_frames} frames into {segment_count} segments")
    base = clip_frames // segment_count
    windows = []
    for i in range(segment_count):
        start = i * base
        end = (i + 1) * base if i < segment_count - 1 else clip_frames
        windows.append((start, end))
    return SegmentPlan(segment_count, frames_per_segment, r, tuple(windows))


def sample_hybrid(
    window: Tuple[int, int], n: int, r: int, rng: np.random.Generator
) -> HybridSequence:
    """Draw the HR index t and its 2N clamped LR neighbor indices.

    t is uniform over the interior [start + n*r, end - n*r) when that range
    is non-empty, otherwise the window midpoint; neighbors are clamped into
    the window, so duplicates appear near the edges.
    """
    start, end = window
    if end <= start:
        raise ValueError(f"window {window} is empty")
    lo, hi = start + n * r, end - n * r
    if lo < hi:
        t = int(rng.integers(lo, hi))
    else:
        t = (start + end) // 2
    offsets = [k for k in range(-n, n + 1) if k != 0]
    lr = tuple(min(max(t + k * r, start), end - 1) for k in offsets)
    return HybridSequence(hr_index=t, lr_indices=lr)


def area_downscale(frame: np.ndarray, factor: int = 4) -> np.ndarray:
    """Exact area-average pooling of a [c, h, w] frame by ``factor``."""
    c, h, w = frame.shape
    if h % factor or w % factor:
        raise ValueError(f"frame {h}x{w} not divisible by {factor}")
    blocks = frame.reshape(c, h // factor, factor, w // factor, factor)
    return blocks.mean(axis=(2, 4), dtype=np.float32)


def load_frames(
    plan: SegmentPlan,
    frame_source: FrameSource,
    rng: np.random.Generator,
    crop_h: int,
    crop_w: int,
) -> List[HybridSequence]:
    """Sample and crop one hybrid sequence per segment window.

    One crop offset is drawn per segment and shared by the HR frame and all
    its LR neighbors; the neighbors are then area-averaged down by 4, so LR
    dims are exactly a quarter of (crop_h, crop_w).
    """
    if crop_h % 4 or crop_w % 4:
        raise ValueError(f"crop {crop_h}x{crop_w} must be divisible by 4")
    sequences = []
    for window in plan.windows:
        seq = sample_hybrid(window, plan.n_neighbors, plan.r, rng)
        hr_frame = np.asarray(frame_source(seq.hr_index), dtype=np.float32)
        c, h, w = hr_frame.shape
        if h < crop_h or w < crop_w:
            raise ValueError(f"source frame {h}x{w} smaller than crop {crop_h}x{crop_w}")
        oy = int(rng.integers(0, h - crop_h + 1))
        ox = int(rng.integers(0, w - crop_w + 1))
        seq.hr_image = Tensor(hr_frame[:, oy : oy + crop_h, ox : ox + crop_w])
        for idx in seq.lr_indices:
            frame = np.asarray(frame_source(idx), dtype=np.float32)
            crop = frame[:, oy : oy + crop_h, ox : ox + crop_w]
            seq.lr_images.append(Tensor(area_downscale(crop, 4)))
        sequences.append(seq)
    return sequences


class TensorFileSource:
    """Frame source backed by the checkpoint tensor container.

    Frames are tensors named ``frame_00000``, ``frame_00001``, ... inside
    one checkpoint-format file.
    """

    def __init__(self, path: Union[str, Path]):
        self._tensors = load_checkpoint(path).tensors
        self._count = sum(1 for name in self._tensors if name.startswith("frame_"))

    def __len__(self) -> int:
        return self._count

    def __call__(self, index: int) -> np.ndarray:
        name = f"frame_{index:05d}"
        if name not in self._tensors:
            raise IndexError(f"frame index {index} not present in source")
        return self._tensors[name]


class ListFrameSource:
    """In-memory frame source over a list of [3, H, W] arrays."""

    def __init__(self, frames: Sequence[np.ndarray]):
        self._frames = [np.asarray(f, dtype=np.float32) for f in frames]

    def __len__(self) -> int:
        return len(self._frames)

    def __call__(self, index: int) -> np.ndarray:
        if not 0 <= index < len(self._frames):
            raise IndexError(f"frame index {index} out of range [0, {len(self._frames)})")
        return self._frames[index]
