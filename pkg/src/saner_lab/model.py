"""Fully-connected softmax classifiers over a flat parameter vector.

Every gradient in this package indexes into the same flat vector, laid out
layer by layer as ``[W_0.ravel(), b_0, W_1.ravel(), b_1, ...]`` where
``W_l`` has shape ``(fan_in, fan_out)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh")


class NumericalError(FloatingPointError):
    """Raised when a forward or backward pass produces a non-finite value."""

    def __init__(self, message: str, layer: int | None = None):
        super().__init__(message)
        self.layer = layer


@dataclass(frozen=True)
class ModelSpec:
    layer_sizes: tuple[int, ...]
    activation: str = "relu"

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        object.__setattr__(self, "layer_sizes", sizes)
        if len(sizes) < 2:
            raise ValueError("layer_sizes needs at least an input and an output size")
        if any(s < 1 for s in sizes):
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if sizes[-1] < 2:
            raise ValueError("a classifier needs at least 2 classes")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}, got {self.activation!r}")

    @property
    def num_params(self) -> int:
        s = self.layer_sizes
        return sum(s[i] * s[i + 1] + s[i + 1] for i in range(len(s) - 1))

    @property
    def num_classes(self) -> int:
        return self.layer_sizes[-1]

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    def unpack(self, params: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """Split a flat vector into per-layer ``(W, b)`` views (no copies)."""
        params = np.asarray(params)
        if params.shape != (self.num_params,):
            raise ValueError(f"expected {self.num_params} parameters, got shape {params.shape}")
        layers = []
        offset = 0
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            w = params[offset:offset + fan_in * fan_out].reshape(fan_in, fan_out)
            offset += fan_in * fan_out
            b = params[offset:offset + fan_out]
            offset += fan_out
            layers.append((w, b))
        return layers


@dataclass
class Batch:
    features: np.ndarray
    observed_labels: np.ndarray
    is_noisy: np.ndarray = field(default=None)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features))
        self.observed_labels = np.asarray(self.observed_labels, dtype=np.int64).ravel()
        m = self.features.shape[0]
        if self.is_noisy is None:
            self.is_noisy = np.zeros(m, dtype=bool)
        self.is_noisy = np.asarray(self.is_noisy, dtype=bool).ravel()
        if m < 1:
            raise ValueError("a batch needs at least one sample")
        if self.observed_labels.shape != (m,) or self.is_noisy.shape != (m,):
            raise ValueError("features, labels and noisy flags disagree on batch size")

    def __len__(self) -> int:
        return self.features.shape[0]


def init_params(spec: ModelSpec, seed: int) -> np.ndarray:
    """He-normal weights (std ``sqrt(2 / fan_in)``), zero biases."""
    rng = np.random.default_rng(seed)
    params = np.zeros(spec.num_params)
    for w, _ in spec.unpack(params):
        w[...] = rng.normal(0.0, np.sqrt(2.0 / w.shape[0]), size=w.shape)
    return params


def _check(values: np.ndarray, layer: int, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericalError(f"non-finite {what} at layer {layer}", layer=layer)


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _forward(params, features, spec):
    """Return the logits and the cached (input, pre-activation) pairs."""
    cache = []
    a = features
    layers = spec.unpack(params)
    for l, (w, b) in enumerate(layers):
        with np.errstate(all="ignore"):
            z = a @ w + b
        _check(z, l, "pre-activation")
        cache.append((a, z))
        a = _activate(z, spec.activation) if l < len(layers) - 1 else z
    return a, cache


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward_loss(params: np.ndarray, batch: Batch, spec: ModelSpec) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy of ``batch`` under ``params``.

    Returns:
        ``(loss, logits)`` with logits of shape ``(m, C)``.

    Raises:
        NumericalError: if an intermediate becomes non-finite; ``.layer``
            names the offending layer.
    """
    logits, _ = _forward(params, batch.features, spec)
    logp = _log_softmax(logits)
    loss = -logp[np.arange(len(batch)), batch.observed_labels].mean()
    if not np.isfinite(loss):
        raise NumericalError("non-finite loss", layer=len(spec.layer_sizes) - 2)
    return float(loss), logits


def predict(params: np.ndarray, features: np.ndarray, spec: ModelSpec) -> np.ndarray:
    logits, _ = _forward(params, np.atleast_2d(features), spec)
    return logits.argmax(axis=1)


def weighted_backward(params, features, labels, weights, spec) -> np.ndarray:
    """Gradient of ``sum_i weights[i] * loss_i`` with respect to ``params``.

    The mean loss uses ``weights = 1/m``; subset gradients zero out the
    remaining samples' weights while keeping the same normalizer.
    """
    logits, cache = _forward(params, features, spec)
    probs = np.exp(_log_softmax(logits))
    delta = probs
    delta[np.arange(len(labels)), labels] -= 1.0
    delta *= weights[:, None]

    grad = np.zeros_like(params)
    layers = spec.unpack(params)
    grad_layers = spec.unpack(grad)
    for l in range(len(layers) - 1, -1, -1):
        a_in, z = cache[l]
        if l < len(layers) - 1:
            if spec.activation == "relu":
                delta = delta * (z > 0)
            else:
                delta = delta * (1.0 - np.tanh(z) ** 2)
        gw, gb = grad_layers[l]
        gw[...] = a_in.T @ delta
        gb[...] = delta.sum(axis=0)
        if l > 0:
            delta = delta @ layers[l][0].T
    _check(grad, 0, "gradient")
    return grad


def backward(params: np.ndarray, batch: Batch, spec: ModelSpec) -> np.ndarray:
    """Exact gradient of :func:`forward_loss` (mean over the batch)."""
    m = len(batch)
    weights = np.full(m, 1.0 / m, dtype=np.result_type(params, 1.0))
    return weighted_backward(params, batch.features, batch.observed_labels, weights, spec)


def split_gradient(params: np.ndarray, batch: Batch, spec: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """Split the batch gradient into clean and noisy contributions.

    Both halves share the full batch's ``1/m`` normalizer, so
    ``g_clean + g_noise`` reproduces :func:`backward`. An empty subset gives
    a zero vector.
    """
    m = len(batch)
    base = np.full(m, 1.0 / m, dtype=np.result_type(params, 1.0))
    noisy = batch.is_noisy
    if noisy.all():
        g_clean = np.zeros_like(params)
    else:
        g_clean = weighted_backward(params, batch.features, batch.observed_labels, base * ~noisy, spec)
    if not noisy.any():
        g_noise = np.zeros_like(params)
    else:
        g_noise = weighted_backward(params, batch.features, batch.observed_labels, base * noisy, spec)
    return g_clean, g_noise
