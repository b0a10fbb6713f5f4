"""SGD, SAM and SANER gradient rules plus the heavy-ball parameter step.

Component ratios are taken between raw loss gradients, before momentum and
weight decay. Where an SGD component is exactly zero its ratio is NaN
("undefined"); NaN fails every comparison, so such components never enter
the down-weighted mask and keep their SAM value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .model import Batch, ModelSpec, NumericalError, backward

MODES = ("sgd", "sam", "saner", "sgd_gr_a", "sgd_gr_b")


@dataclass(frozen=True)
class OptimConfig:
    eta: float = 0.1
    rho: float = 0.1
    alpha_target: float = 0.5
    # epochs of the alpha ramp; None defers to the experiment (a quarter of it)
    k: int | None = None
    momentum: float = 0.9
    weight_decay: float = 5e-4
    mode: str = "saner"
    # adds weight_decay * params to both gradients before the ratio is taken
    decay_in_ratio: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        values = (self.eta, self.rho, self.alpha_target, self.momentum, self.weight_decay)
        if not all(np.isfinite(v) for v in values):
            raise ValueError("optimizer settings must be finite")
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if self.rho < 0 or self.alpha_target < 0 or self.weight_decay < 0 or (self.k or 0) < 0:
            raise ValueError("rho, alpha_target, weight_decay and k must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")

    @property
    def effective_rho(self) -> float:
        return 0.0 if self.mode == "sgd" else self.rho


@dataclass
class OptimizerState:
    momentum_buffer: np.ndarray
    epoch: int = 0
    iteration: int = 0

    @classmethod
    def zeros(cls, d: int) -> "OptimizerState":
        return cls(np.zeros(d))


@dataclass
class GradientBundle:
    g_sgd: np.ndarray
    g_sam: np.ndarray
    ratio: np.ndarray
    mask_b: np.ndarray
    g_final: np.ndarray = field(repr=False)


def sam_perturbation(g_sgd: np.ndarray, rho: float) -> np.ndarray:
    """Ascent step ``rho * g / ||g||``; zero when the gradient vanishes."""
    norm = np.linalg.norm(g_sgd)
    if norm == 0.0:
        return np.zeros_like(g_sgd)
    return (rho / norm) * g_sgd


def sam_gradient(params: np.ndarray, batch: Batch, spec: ModelSpec, rho: float,
                 grad_fn: Callable = backward) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(g_sgd, g_sam)`` for one mini-batch.

    ``g_sam`` is the gradient at ``params + sam_perturbation(g_sgd, rho)``
    on the same batch. ``grad_fn`` defaults to :func:`backward`; any
    callable with that signature works (used for toy losses in tests).
    """
    g_sgd = grad_fn(params, batch, spec)
    g_sam = grad_fn(params + sam_perturbation(g_sgd, rho), batch, spec)
    return g_sgd, g_sam


def component_ratio(g_sam: np.ndarray, g_sgd: np.ndarray) -> np.ndarray:
    """Element-wise ``g_sam / g_sgd``, NaN where ``g_sgd`` is zero."""
    g_sam = np.asarray(g_sam)
    g_sgd = np.asarray(g_sgd)
    if g_sam.shape != g_sgd.shape:
        raise ValueError(f"gradient shapes differ: {g_sam.shape} vs {g_sgd.shape}")
    defined = g_sgd != 0
    ratio = np.full(g_sgd.shape, np.nan)
    with np.errstate(over="ignore"):
        np.divide(g_sam, g_sgd, out=ratio, where=defined)
    return ratio


def mask_b(ratio: np.ndarray) -> np.ndarray:
    """True where SAM shrinks the SGD component without flipping it: ``0 <= r < 1``."""
    with np.errstate(invalid="ignore"):
        return (ratio >= 0) & (ratio < 1)


def saner_combine(g_sam: np.ndarray, mask: np.ndarray, alpha: float) -> np.ndarray:
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if g_sam.shape != mask.shape:
        raise ValueError("mask and gradient lengths differ")
    return np.where(mask, alpha * g_sam, g_sam)


def alpha_schedule(epoch: int, k: int, alpha_target: float) -> float:
    """Linear ramp from 1 down (or up) to ``alpha_target`` over ``k`` epochs."""
    if epoch < 0 or k < 0:
        raise ValueError("epoch and k must be non-negative")
    if k == 0:
        return float(alpha_target)
    return 1.0 - (1.0 - alpha_target) * min(epoch, k) / k


def reweight(g_sgd: np.ndarray, g_star: np.ndarray, alpha: float) -> GradientBundle:
    """Shrink the down-weighted components of ``g_star`` by ``alpha``."""
    ratio = component_ratio(g_star, g_sgd)
    mask = mask_b(ratio)
    return GradientBundle(g_sgd, g_star, ratio, mask, saner_combine(g_star, mask, alpha))


def saner_gradient(params, batch, spec, rho, alpha, grad_fn: Callable = backward) -> GradientBundle:
    g_sgd, g_sam = sam_gradient(params, batch, spec, rho, grad_fn)
    return reweight(g_sgd, g_sam, alpha)


def wrap_variant(two_step_gradient_fn: Callable) -> Callable:
    """Turn any perturbation-based two-step gradient into its reweighted form.

    ``two_step_gradient_fn(params, batch, spec, *args, **kwargs)`` must return
    ``(g_sgd, g_star)`` computed on one batch. The wrapper takes the same
    arguments plus a keyword ``alpha`` and returns a :class:`GradientBundle`.

    >>> wrapped = wrap_variant(sam_gradient)
    >>> # bundle = wrapped(params, batch, spec, 0.1, alpha=0.5)
    """

    def wrapped(params, batch, spec, *args, alpha: float, **kwargs) -> GradientBundle:
        g_sgd, g_star = two_step_gradient_fn(params, batch, spec, *args, **kwargs)
        if np.shape(g_sgd) != np.shape(g_star):
            raise ValueError(f"gradient lengths differ: {np.shape(g_sgd)} vs {np.shape(g_star)}")
        return reweight(np.asarray(g_sgd), np.asarray(g_star), alpha)

    wrapped.__wrapped__ = two_step_gradient_fn
    return wrapped


def apply_update(params: np.ndarray, g_final: np.ndarray, state: OptimizerState,
                 config: OptimConfig, eta: float | None = None) -> np.ndarray:
    """Heavy-ball step with decoupled-from-ratio L2 decay.

    ``buffer <- mu * buffer + (g_final + lambda * params)`` then
    ``params <- params - eta * buffer``. The buffer is updated in place on
    ``state``; a new parameter array is returned.
    """
    if g_final.shape != params.shape or state.momentum_buffer.shape != params.shape:
        raise ValueError("params, gradient and momentum buffer lengths differ")
    eta = config.eta if eta is None else eta
    buf = config.momentum * state.momentum_buffer + (g_final + config.weight_decay * params)
    new_params = params - eta * buf
    if not np.all(np.isfinite(new_params)):
        raise NumericalError("non-finite parameter update")
    state.momentum_buffer = buf
    state.iteration += 1
    return new_params
