"""Retrieval metrics: recall at k and median rank."""

import json
from typing import Dict, Sequence, Tuple

import numpy as np


def ranks_of_ground_truth(scores: np.ndarray, gt: Sequence[int]) -> np.ndarray:
    """Rank of each row's ground-truth column, 1-based.

    Ties break in favor of the lower column index, so the rank counts
    strictly greater scores plus equal scores at earlier columns.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValueError(f"expected a 2-d score matrix, got shape {scores.shape}")
    gt = np.asarray(gt, dtype=np.int64)
    if gt.shape != (scores.shape[0],):
        raise ValueError("one ground-truth column per query row")
    if gt.min() < 0 or gt.max() >= scores.shape[1]:
        raise ValueError("ground-truth column out of range")
    target = scores[np.arange(scores.shape[0]), gt]
    greater = (scores > target[:, None]).sum(axis=1)
    cols = np.arange(scores.shape[1])
    tied_earlier = ((scores == target[:, None]) & (cols[None, :] < gt[:, None])).sum(axis=1)
    return (1 + greater + tied_earlier).astype(np.int64)


def retrieval_metrics(
    scores: np.ndarray,
    gt: Sequence[int],
    ks: Tuple[int, ...] = (1, 5, 10),
) -> Dict[str, float]:
    """Recall at each k (percent) plus the median rank.

    The median of an even number of ranks is the mean of the two middle
    values.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[1] < max(ks):
        raise ValueError(f"need at least {max(ks)} columns, got {scores.shape[1]}")
    ranks = ranks_of_ground_truth(scores, gt)
    out = {f"r{k}": float(100.0 * np.mean(ranks <= k)) for k in ks}
    out["medr"] = float(np.median(ranks))
    return out


def metrics_json(metrics: Dict[str, float]) -> str:
    """Serialize metrics with a stable key order."""
    keys = [k for k in ("r1", "r5", "r10", "medr") if k in metrics]
    keys += [k for k in sorted(metrics) if k not in keys]
    return json.dumps({k: metrics[k] for k in keys})
