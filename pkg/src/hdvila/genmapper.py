"""Embedding-to-latent mapper with a composite loss over pluggable backends.

The mapper turns a 1024-d embedding into an 18x512 latent code through four
linear layers (GELU between them, none after the last). Generator and loss
networks are injected as backends: callables that are gradient-transparent,
so the composite loss backpropagates through them into the mapper while
their own parameters stay frozen.
"""

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .model.layers import ParamTree, apply_linear, init_linear
from .numerics import ShapeError, Tensor, add, gelu, mul, reshape, sub, tensor_mean
from .numerics.tensor import _record


class BackendError(RuntimeError):
    """A pluggable backend raised; the message names which one."""


@dataclass(frozen=True)
class MapperConfig:
    """Layer widths of the mapper and the latent grid it reshapes into.

    `dims` lists the input width followed by each layer's output width;
    the final width must tile `latent_shape` exactly.
    """

    dims: Tuple[int, ...] = (1024, 512, 512, 9216, 9216)
    latent_shape: Tuple[int, int] = (18, 512)

    def __post_init__(self):
        if len(self.dims) < 2:
            raise ValueError("need at least one layer")
        if any(d < 1 for d in self.dims):
            raise ValueError("layer widths must be positive")
        rows, cols = self.latent_shape
        if self.dims[-1] != rows * cols:
            raise ValueError(
                f"final width {self.dims[-1]} does not tile a {rows}x{cols} latent"
            )

    @property
    def layer_count(self) -> int:
        return len(self.dims) - 1


@dataclass(frozen=True)
class LossWeights:
    """Non-negative weights of the composite loss terms.

    The text-matching term is off by default; enable it with
    `use_matching` and a positive `matching` weight.
    """

    l2: float = 0.1
    identity: float = 1.0
    perceptual: float = 0.8
    matching: float = 0.0
    use_matching: bool = False

    def __post_init__(self):
        for name in ("l2", "identity", "perceptual", "matching"):
            if getattr(self, name) < 0:
                raise ValueError(f"weight {name} must be >= 0")


@dataclass
class GenBackends:
    """Frozen networks the mapper trains against.

    generator: latent [rows, cols] -> image tensor
    identity_loss, perceptual_loss: (image, target) -> scalar
    matching_loss: (image, text embedding) -> scalar, optional
    All must be gradient-transparent in their tensor arguments.
    """

    generator: Callable[[Tensor], Tensor]
    identity_loss: Callable[[Tensor, Tensor], Tensor]
    perceptual_loss: Callable[[Tensor, Tensor], Tensor]
    matching_loss: Optional[Callable[[Tensor, Tensor], Tensor]] = None


def init_mapper(rng: np.random.Generator, config: MapperConfig = MapperConfig()) -> ParamTree:
    layers = []
    for d_in, d_out in zip(config.dims[:-1], config.dims[1:]):
        layers.append(init_linear(rng, d_in, d_out))
    return {"layers": layers}


def map_embedding(e: Tensor, params: ParamTree, config: MapperConfig = MapperConfig()) -> Tensor:
    """Map a [dims[0]] embedding to a latent code of shape latent_shape."""
    if tuple(e.shape) != (config.dims[0],):
        raise ShapeError(f"expected a [{config.dims[0]}] embedding, got shape {tuple(e.shape)}")
    x = e
    last = len(params["layers"]) - 1
    for i, layer in enumerate(params["layers"]):
        x = apply_linear(x, layer)
        if i < last:
            x = gelu(x)
    return reshape(x, config.latent_shape)


def combine_latents(w_v: Tensor, w_t: Tensor) -> Tensor:
    """Elementwise sum of two latent codes."""
    if tuple(w_v.shape) != tuple(w_t.shape):
        raise ShapeError(f"latent shapes differ: {tuple(w_v.shape)} vs {tuple(w_t.shape)}")
    return add(w_v, w_t)


def _call_backend(name: str, fn: Callable, *args) -> Tensor:
    try:
        return fn(*args)
    except Exception as err:
        raise BackendError(f"{name} backend failed: {err}") from err


def generate(latent: Tensor, backends: GenBackends) -> Tensor:
    return _call_backend("generator", backends.generator, latent)


def composite_loss(
    i_out: Tensor,
    i_target: Tensor,
    weights: LossWeights,
    backends: GenBackends,
    text_embedding: Optional[Tensor] = None,
) -> Tensor:
    """Weighted sum of reconstruction, identity, and perceptual terms.

    The reconstruction term is a plain mean squared error computed here;
    the other terms come from the backends. With `use_matching` set, a
    fourth term scores the image against a text embedding.
    """
    if tuple(i_out.shape) != tuple(i_target.shape):
        raise ShapeError(f"image shapes differ: {tuple(i_out.shape)} vs {tuple(i_target.shape)}")
    diff = sub(i_out, i_target)
    loss = mul(tensor_mean(mul(diff, diff)), weights.l2)
    loss = add(loss, mul(_call_backend("identity", backends.identity_loss, i_out, i_target), weights.identity))
    loss = add(loss, mul(_call_backend("perceptual", backends.perceptual_loss, i_out, i_target), weights.perceptual))
    if weights.use_matching:
        if backends.matching_loss is None:
            raise BackendError("matching backend requested but not provided")
        if text_embedding is None:
            raise ValueError("matching term needs a text embedding")
        loss = add(loss, mul(_call_backend("matching", backends.matching_loss, i_out, text_embedding), weights.matching))
    return loss


def gradient_transparent(
    forward: Callable[[np.ndarray], np.ndarray],
    vjp: Callable[[np.ndarray, np.ndarray], np.ndarray],
    name: str = "backend",
) -> Callable[[Tensor], Tensor]:
    """Lift a (forward, vector-Jacobian product) callback pair onto the tape.

    `forward` maps an input array to an output array; `vjp(x, g)` returns
    the gradient of sum(forward(x) * g) with respect to x. The result is a
    tensor function usable inside any composite loss.
    """

    def apply(x: Tensor) -> Tensor:
        try:
            y = np.asarray(forward(x.data), dtype=np.float32)
        except Exception as err:
            raise BackendError(f"{name} forward failed: {err}") from err
        out = Tensor(y)

        def bwd(g, needs):
            if not needs[0]:
                return (None,)
            try:
                gx = np.asarray(vjp(x.data, g), dtype=np.float32)
            except Exception as err:
                raise BackendError(f"{name} gradient failed: {err}") from err
            if gx.shape != x.data.shape:
                raise BackendError(
                    f"{name} gradient shape {gx.shape} does not match input {x.data.shape}"
                )
            return (gx,)

        return _record(out, (x,), bwd)

    return apply


def mse_double(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error stand-in for the identity and perceptual nets."""
    diff = sub(a, b)
    return tensor_mean(mul(diff, diff))


def linear_generator(
    rng: np.random.Generator,
    latent_shape: Tuple[int, int],
    image_shape: Tuple[int, ...],
) -> Callable[[Tensor], Tensor]:
    """A frozen random linear map from latents to images.

    Its weight tensor never requires gradients, so optimizing the mapper
    leaves it untouched; gradients still flow through it to the latent.
    """
    rows, cols = latent_shape
    n_out = int(np.prod(image_shape))
    w = Tensor(rng.normal(0.0, (rows * cols) ** -0.5, (rows * cols, n_out)))

    def apply(latent: Tensor) -> Tensor:
        flat = reshape(latent, (1, rows * cols))
        img = apply_linear(flat, {"w": w, "b": Tensor(np.zeros(n_out, dtype=np.float32))})
        return reshape(img, image_shape)

    apply.weight = w
    return apply


def default_backends(
    rng: np.random.Generator,
    latent_shape: Tuple[int, int] = (18, 512),
    image_shape: Tuple[int, ...] = (3, 8, 8),
) -> GenBackends:
    """Analytic test doubles: linear generator plus MSE losses."""
    return GenBackends(
        generator=linear_generator(rng, latent_shape, image_shape),
        identity_loss=mse_double,
        perceptual_loss=mse_double,
        matching_loss=None,
    )
