"""Procedural moving-shape clips with class-separable captions.

A sample's class fixes its shape, color, and motion direction; the caption
is templated from the same three parameters, so captions and classes are
mutually recoverable. Frames are rendered at quarter resolution (the LR
crop size) and upsampled 4x for the HR stream, keeping both streams
pixel-consistent.
"""

from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

SHAPES = ("square", "bar")
COLORS = ("red", "blue")
DIRECTIONS = ("left", "right")
MAX_CLASSES = len(SHAPES) * len(COLORS) * len(DIRECTIONS)

_COLOR_VALUES = {
    "red": (0.90, 0.15, 0.15),
    "blue": (0.15, 0.25, 0.90),
}


@dataclass(frozen=True)
class SyntheticSample:
    """One clip: base-resolution frames plus its generative parameters."""

    index: int
    class_id: int
    caption: str
    frames: np.ndarray  # [T, 3, h, w] float32 in [0, 1]
    y0: int
    x0: int
    dx: int
    shape_h: int
    shape_w: int

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    def shape_columns(self, t: int) -> np.ndarray:
        """Column indices covered by the shape at frame t (wrapping)."""
        width = self.frames.shape[3]
        return (self.x0 + t * self.dx + np.arange(self.shape_w)) % width


def class_params(class_id: int) -> Tuple[str, str, str]:
    """(shape, color, direction) for one class id."""
    if not 0 <= class_id < MAX_CLASSES:
        raise ValueError(f"class id {class_id} out of range [0, {MAX_CLASSES})")
    shape = SHAPES[class_id % len(SHAPES)]
    color = COLORS[(class_id // len(SHAPES)) % len(COLORS)]
    direction = DIRECTIONS[(class_id // (len(SHAPES) * len(COLORS))) % len(DIRECTIONS)]
    return shape, color, direction


def caption_for(class_id: int) -> str:
    shape, color, direction = class_params(class_id)
    return f"a {color} {shape} moving {direction}"


def render_clip(
    rng: np.random.Generator,
    class_id: int,
    n_frames: int,
    height: int,
    width: int,
) -> Tuple[np.ndarray, dict]:
    """Render one clip; returns (frames, placement dict).

    The background texture is static; only the shape moves, by a fixed
    per-frame pixel offset. The start column is drawn so the whole
    trajectory stays in frame; when the clip is too long for that, the
    shape wraps horizontally instead. Shapes fill their bounding boxes,
    so frame t+1 equals frame t rolled by the offset inside the box.
    """
    if height < 4 or width < 4:
        raise ValueError(f"frames must be at least 4x4, got {height}x{width}")
    shape, color, direction = class_params(class_id)
    if shape == "square":
        shape_h = shape_w = max(2, height // 3)
    else:
        shape_h = max(2, (2 * height) // 3)
        shape_w = max(1, width // 6)
    step = max(1, width // 8)
    dx = -step if direction == "left" else step
    y0 = int(rng.integers(0, height - shape_h + 1))
    travel = (n_frames - 1) * step
    if width - shape_w - travel >= 0:
        lo = travel if dx < 0 else 0
        x0 = int(rng.integers(lo, lo + width - shape_w - travel + 1))
    else:
        x0 = int(rng.integers(0, width))
    background = rng.uniform(0.0, 0.4, (3, height, width)).astype(np.float32)
    rgb = np.array(_COLOR_VALUES[color], dtype=np.float32).reshape(3, 1, 1)

    frames = np.empty((n_frames, 3, height, width), dtype=np.float32)
    for t in range(n_frames):
        frame = background.copy()
        cols = (x0 + t * dx + np.arange(shape_w)) % width
        frame[:, y0 : y0 + shape_h, cols] = rgb
        frames[t] = frame
    placement = {"y0": y0, "x0": x0, "dx": dx, "shape_h": shape_h, "shape_w": shape_w}
    return frames, placement


def generate_synthetic(
    rng: np.random.Generator,
    count: int,
    n_classes: int,
    n_frames: int,
    height: int,
    width: int,
) -> List[SyntheticSample]:
    """Round-robin over classes: sample i belongs to class i % n_classes."""
    if not 2 <= n_classes <= MAX_CLASSES:
        raise ValueError(f"n_classes must lie in [2, {MAX_CLASSES}], got {n_classes}")
    if count < 1 or n_frames < 1:
        raise ValueError("count and n_frames must be >= 1")
    samples = []
    for i in range(count):
        class_id = i % n_classes
        frames, placement = render_clip(rng, class_id, n_frames, height, width)
        samples.append(
            SyntheticSample(
                index=i,
                class_id=class_id,
                caption=caption_for(class_id),
                frames=frames,
                **placement,
            )
        )
    return samples


def upsample_frame(frame: np.ndarray, factor: int = 4) -> np.ndarray:
    """Nearest-neighbor upsample of one [3, h, w] frame."""
    return np.kron(frame, np.ones((1, factor, factor), dtype=np.float32))


def frame_source(sample: SyntheticSample, factor: int = 4) -> Callable[[int], np.ndarray]:
    """Frame-index callable serving the HR (upsampled) view of a clip."""

    def source(index: int) -> np.ndarray:
        if not 0 <= index < sample.n_frames:
            raise IndexError(f"frame index {index} out of range [0, {sample.n_frames})")
        return upsample_frame(sample.frames[index], factor)

    return source
