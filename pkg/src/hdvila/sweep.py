"""Neighbor-count sweep: hybrid frame layout across a range of N values."""

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .config import ConfigError, RunConfig
from .sampling import plan_segments, sample_hybrid


@dataclass(frozen=True)
class SweepRow:
    n_neighbors: int
    frames_per_segment: int
    hr_per_segment: int
    lr_per_segment: int
    segment_count: int
    frames_per_clip: int
    grid_h: int
    grid_w: int
    tokens: int


def frame_count_sweep(config: RunConfig, n_values: Sequence[int]) -> List[SweepRow]:
    """One row per neighbor count, measured off real segment plans.

    Frame counts come from actually planning and sampling a hybrid
    sequence per segment, not from re-deriving the 2N+1 arithmetic.
    """
    if not n_values:
        raise ConfigError("sweep needs at least one neighbor count")
    rows = []
    rng = np.random.default_rng(config.seed)
    grid_h, grid_w = config.grid
    for n in n_values:
        if n < 1:
            raise ConfigError(f"n_neighbors must be >= 1, got {n}")
        frames_per_segment = 2 * n + 1
        plan = plan_segments(
            config.clip_frames, config.segment_count, frames_per_segment, config.frame_stride
        )
        hr_counts = set()
        lr_counts = set()
        for window in plan.windows:
            seq = sample_hybrid(window, plan.n_neighbors, plan.r, rng)
            hr_counts.add(1)
            lr_counts.add(len(seq.lr_indices))
        if lr_counts != {2 * n}:
            raise ConfigError(f"hybrid sampling produced {lr_counts} low-res frames for N={n}")
        rows.append(
            SweepRow(
                n_neighbors=n,
                frames_per_segment=frames_per_segment,
                hr_per_segment=1,
                lr_per_segment=2 * n,
                segment_count=plan.segment_count,
                frames_per_clip=plan.segment_count * frames_per_segment,
                grid_h=grid_h,
                grid_w=grid_w,
                tokens=grid_h * grid_w,
            )
        )
    return rows


def render_sweep_table(rows: Sequence[SweepRow]) -> str:
    """Tab-separated config matrix, one line per neighbor count."""
    header = (
        "n_neighbors\tframes_per_segment\thr_per_segment\tlr_per_segment"
        "\tsegment_count\tframes_per_clip\tgrid\ttokens"
    )
    lines = [header]
    for r in rows:
        lines.append(
            f"{r.n_neighbors}\t{r.frames_per_segment}\t{r.hr_per_segment}\t{r.lr_per_segment}"
            f"\t{r.segment_count}\t{r.frames_per_clip}\t{r.grid_h}x{r.grid_w}\t{r.tokens}"
        )
    return "\n".join(lines) + "\n"
