"""Finite-difference verification of tape gradients."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .tensor import NumericError, ShapeError, Tape, Tensor


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    eps: float = 1e-3,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> float:
    """Return the worst relative error between tape and central-difference grads.

    ``f`` must be a deterministic scalar-valued function of ``x`` that does
    not mutate it. Per coordinate the relative error is
    ``|a - n| / max(1e-8, |a| + |n|)``; the maximum over checked coordinates
    is returned. When ``max_coords`` is given and smaller than ``x.size``, a
    seeded uniform subsample of coordinates is checked instead of all of them
    (the analytic gradient is still the full tape gradient).
    """
    saved_flag, saved_grad = x.requires_grad, x.grad
    x.requires_grad = True
    x.grad = None
    try:
        with Tape() as tape:
            out = f(x)
        if out.shape != ():
            raise ShapeError(f"finite_diff_check requires a scalar-valued f, got shape {out.shape}")
        tape.backward(out)
        analytic = x.grad if x.grad is not None else np.zeros_like(x.data)
        analytic = analytic.copy()
    finally:
        x.requires_grad = saved_flag
        x.grad = saved_grad

    def evaluate() -> float:
        result = f(x)
        if result.shape != ():
            raise ShapeError("finite_diff_check requires a scalar-valued f")
        return float(result.data)

    base_a, base_b = evaluate(), evaluate()
    if base_a != base_b:
        raise NumericError(
            "finite_diff_check requires a deterministic function; two evaluations "
            f"at the same point returned {base_a!r} and {base_b!r}"
        )

    n = x.data.size
    if max_coords is not None and max_coords < n:
        coords = np.random.default_rng(seed).choice(n, size=max_coords, replace=False)
        coords.sort()
    else:
        coords = np.arange(n)

    flat = x.data.reshape(-1)
    worst = 0.0
    for i in coords:
        orig = flat[i]
        plus = np.float32(orig + eps)
        minus = np.float32(orig - eps)
        flat[i] = plus
        f_plus = evaluate()
        flat[i] = minus
        f_minus = evaluate()
        flat[i] = orig
        # Use the realized float32 step, not the nominal eps.
        numeric = (f_plus - f_minus) / (float(plus) - float(minus))
        a = float(analytic.reshape(-1)[i])
        err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
        if err > worst:
            worst = err
    return worst
