"""AdamW with decoupled weight decay, plus the warmup/linear-decay schedule."""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from .numerics import NumericError, Tensor


@dataclass
class AdamState:
    """First/second moment estimates keyed by parameter name."""

    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def init_adam_state(params: Dict[str, Tensor]) -> AdamState:
    state = AdamState()
    for name, tensor in params.items():
        state.m[name] = np.zeros_like(tensor.data)
        state.v[name] = np.zeros_like(tensor.data)
    return state


def adamw_step(
    params: Dict[str, Tensor],
    state: AdamState,
    lr_t: float,
    weight_decay: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected update over every parameter with a gradient.

    Weight decay is decoupled: theta <- theta - lr*wd*theta happens
    separately from the adaptive step. Parameters whose grad is None are
    skipped (frozen); a non-finite gradient aborts, naming the parameter.
    """
    state.t += 1
    correct1 = 1.0 - beta1**state.t
    correct2 = 1.0 - beta2**state.t
    for name in sorted(params):
        tensor = params[name]
        grad = tensor.grad
        if grad is None:
            continue
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        if name not in state.m:
            raise KeyError(f"optimizer state missing parameter {name!r}")
        if weight_decay != 0.0:
            tensor.data = tensor.data - np.float32(lr_t * weight_decay) * tensor.data
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * np.square(grad)
        m_hat = m / correct1
        v_hat = v / correct2
        tensor.data = (tensor.data - lr_t * m_hat / (np.sqrt(v_hat) + eps)).astype(np.float32)


def lr_schedule(step: int, total_steps: int, warmup_steps: int, base_lr: float) -> float:
    """Linear 0 -> base_lr over warmup, then linear base_lr -> 0 at total_steps."""
    if not 0 <= warmup_steps <= total_steps:
        raise ValueError(f"warmup {warmup_steps} must lie in [0, total {total_steps}]")
    if step <= 0:
        return 0.0 if warmup_steps > 0 else (base_lr if total_steps > 0 else 0.0)
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    if step >= total_steps:
        return 0.0
    remainder = total_steps - warmup_steps
    return base_lr * (1.0 - (step - warmup_steps) / remainder)
