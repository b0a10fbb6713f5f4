"""Synthetic datasets and label-noise injection.

Noise kinds:

* ``symmetric``: a selected label moves to one of the other ``C - 1``
  classes, uniformly.
* ``asymmetric_circular``: a selected label ``y`` becomes ``(y + 1) % C``.
* ``asymmetric_pairmap``: only classes listed in ``pair_map`` are eligible;
  a selected label ``y`` becomes ``pair_map[y]``.
* ``instance_proxy``: a feature-dependent stand-in for DNN-derived
  instance noise. It is a proxy, not a reproduction of any published
  generator.

Selection is an independent Bernoulli draw per sample, not an exact-count
shuffle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NOISE_KINDS = ("symmetric", "asymmetric_circular", "asymmetric_pairmap", "instance_proxy")
FORMAT_TAG = "saner-ds v1"


class DatasetFormatError(ValueError):
    """A dataset file could not be parsed."""


@dataclass
class LabeledDataset:
    features: np.ndarray
    true_labels: np.ndarray
    observed_labels: np.ndarray
    num_classes: int
    is_noisy: np.ndarray = field(init=False)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.true_labels = np.asarray(self.true_labels, dtype=np.int64).ravel()
        self.observed_labels = np.asarray(self.observed_labels, dtype=np.int64).ravel()
        self.num_classes = int(self.num_classes)
        n = self.features.shape[0]
        if self.true_labels.shape != (n,) or self.observed_labels.shape != (n,):
            raise ValueError("label arrays must have one entry per feature row")
        for name, labels in (("true", self.true_labels), ("observed", self.observed_labels)):
            if n and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise ValueError(f"{name} labels outside [0, {self.num_classes})")
        self.is_noisy = self.observed_labels != self.true_labels

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def noise_rate(self) -> float:
        return float(self.is_noisy.mean()) if len(self) else 0.0

    def with_observed(self, observed: np.ndarray) -> "LabeledDataset":
        return LabeledDataset(self.features.copy(), self.true_labels.copy(), observed, self.num_classes)

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.features[idx], self.true_labels[idx], self.observed_labels[idx], self.num_classes)

    def equals(self, other: "LabeledDataset") -> bool:
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.true_labels, other.true_labels)
            and np.array_equal(self.observed_labels, other.observed_labels)
        )


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "symmetric"
    rate: float = 0.0
    seed: int = 0
    pair_map: dict[int, int] | None = None

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        _check_rate(self.rate)
        if (self.pair_map is not None) != (self.kind == "asymmetric_pairmap"):
            raise ValueError("pair_map is required for asymmetric_pairmap and only for it")
        if self.pair_map is not None:
            for src, dst in self.pair_map.items():
                if src == dst:
                    raise ValueError(f"pair_map sends class {src} to itself")


def _check_rate(rate: float) -> None:
    if not (0.0 <= rate <= 1.0):
        raise ValueError(f"noise rate must lie in [0, 1], got {rate}")


def _require_clean(ds: LabeledDataset) -> None:
    if ds.is_noisy.any():
        raise ValueError("noise must be injected into a clean dataset")


def make_gaussian_blobs(n: int, num_classes: int, dim: int, separation: float, seed: int,
                        max_tries: int = 10_000) -> LabeledDataset:
    """Balanced unit-covariance Gaussian clusters.

    Centers lie on a sphere of radius ``separation`` and are rejection
    sampled until every pair is at least ``separation`` apart (an angular
    gap of 60 degrees or more). Low dimensions run out of room quickly: at
    ``dim=2`` no more than six classes fit.
    """
    if n < num_classes:
        raise ValueError("need at least one sample per class")
    if dim < 2:
        raise ValueError("dim must be at least 2")
    if num_classes < 2:
        raise ValueError("need at least two classes")
    if not separation > 0:
        raise ValueError("separation must be positive")

    rng = np.random.default_rng(seed)
    centers: list[np.ndarray] = []
    tries = 0
    while len(centers) < num_classes:
        if tries >= max_tries:
            raise ValueError(
                f"could not place {num_classes} centers {separation} apart in {dim} dimensions"
            )
        tries += 1
        c = rng.standard_normal(dim)
        c *= separation / np.linalg.norm(c)
        if all(np.linalg.norm(c - other) >= separation for other in centers):
            centers.append(c)
    centers_arr = np.stack(centers)

    labels = np.arange(n) % num_classes
    rng.shuffle(labels)
    features = centers_arr[labels] + rng.standard_normal((n, dim))
    return LabeledDataset(features, labels, labels.copy(), num_classes)


def inject_symmetric(ds: LabeledDataset, rate: float, seed: int) -> LabeledDataset:
    _check_rate(rate)
    _require_clean(ds)
    rng = np.random.default_rng(seed)
    n, c = len(ds), ds.num_classes
    selected = rng.random(n) < rate
    # offset in [1, C-1] never lands back on the true class
    offset = rng.integers(1, c, size=n)
    observed = np.where(selected, (ds.true_labels + offset) % c, ds.true_labels)
    return ds.with_observed(observed)


def inject_asymmetric(ds: LabeledDataset, rate: float, seed: int, spec: NoiseSpec) -> LabeledDataset:
    """Class-conditional flips: circular shift or an explicit pair map."""
    _check_rate(rate)
    _require_clean(ds)
    rng = np.random.default_rng(seed)
    selected = rng.random(len(ds)) < rate
    y = ds.true_labels
    if spec.kind == "asymmetric_circular":
        target = (y + 1) % ds.num_classes
    elif spec.kind == "asymmetric_pairmap":
        if not spec.pair_map:
            raise ValueError("asymmetric_pairmap noise needs a pair_map")
        lookup = np.arange(ds.num_classes)
        for src, dst in spec.pair_map.items():
            lookup[src] = dst
        target = lookup[y]
    else:
        raise ValueError(f"not an asymmetric noise kind: {spec.kind!r}")
    observed = np.where(selected, target, y)
    return ds.with_observed(observed)


def instance_flip_probabilities(features: np.ndarray, rate: float, seed: int) -> np.ndarray:
    """Per-sample flip probability ``rate * s_i / mean(s)`` clipped to 1.

    ``s_i`` is the sigmoid of a fixed random projection of the features, so
    equal feature rows always receive equal probabilities.
    """
    _check_rate(rate)
    rng = np.random.default_rng(seed)
    direction = rng.standard_normal(features.shape[1]) / np.sqrt(features.shape[1])
    s = 1.0 / (1.0 + np.exp(-(features @ direction)))
    return np.minimum(rate * s / s.mean(), 1.0)


def inject_instance_proxy(ds: LabeledDataset, rate: float, seed: int) -> LabeledDataset:
    _check_rate(rate)
    _require_clean(ds)
    q = instance_flip_probabilities(ds.features, rate, seed)
    rng = np.random.default_rng(seed)
    rng.standard_normal(ds.dim)  # skip past the flip-probability projection
    scorer = rng.standard_normal((ds.dim, ds.num_classes))
    selected = rng.random(len(ds)) < q
    scores = ds.features @ scorer
    scores[np.arange(len(ds)), ds.true_labels] = -np.inf
    target = scores.argmax(axis=1)
    observed = np.where(selected, target, ds.true_labels)
    return ds.with_observed(observed)


def apply_noise(ds: LabeledDataset, spec: NoiseSpec) -> LabeledDataset:
    if spec.kind == "symmetric":
        return inject_symmetric(ds, spec.rate, spec.seed)
    if spec.kind == "instance_proxy":
        return inject_instance_proxy(ds, spec.rate, spec.seed)
    return inject_asymmetric(ds, spec.rate, spec.seed, spec)


def _format_float(x: float) -> str:
    return repr(float(x))


def save_dataset(ds: LabeledDataset, path) -> None:
    lines = [f"{FORMAT_TAG} n={len(ds)} d={ds.dim} c={ds.num_classes}"]
    for t, o, row in zip(ds.true_labels, ds.observed_labels, ds.features):
        lines.append(",".join([str(t), str(o), *map(_format_float, row)]))
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def load_dataset(path) -> LabeledDataset:
    """Parse a ``saner-ds v1`` file.

    Raises:
        DatasetFormatError: on any malformed or missing line; the message
            carries the 1-based line number.
    """
    text = Path(path).read_bytes().decode("utf-8")
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise DatasetFormatError("line 1: empty file")
    header = lines[0].split(" ")
    try:
        if " ".join(header[:2]) != FORMAT_TAG or len(header) != 5:
            raise ValueError
        fields = dict(item.split("=", 1) for item in header[2:])
        n, d, c = int(fields["n"]), int(fields["d"]), int(fields["c"])
    except (ValueError, KeyError):
        raise DatasetFormatError(f"line 1: bad header {lines[0]!r}") from None
    if len(lines) - 1 != n:
        raise DatasetFormatError(f"line {len(lines) + 1}: expected {n} samples, found {len(lines) - 1}")

    features = np.empty((n, d))
    true = np.empty(n, dtype=np.int64)
    observed = np.empty(n, dtype=np.int64)
    for i, line in enumerate(lines[1:]):
        parts = line.split(",")
        if len(parts) != d + 2:
            raise DatasetFormatError(f"line {i + 2}: expected {d + 2} fields, found {len(parts)}")
        try:
            true[i], observed[i] = int(parts[0]), int(parts[1])
            features[i] = [float(p) for p in parts[2:]]
        except ValueError as exc:
            raise DatasetFormatError(f"line {i + 2}: {exc}") from None
        if not (0 <= true[i] < c and 0 <= observed[i] < c):
            raise DatasetFormatError(f"line {i + 2}: label outside [0, {c})")
    if not np.all(np.isfinite(features)):
        raise DatasetFormatError("non-finite feature value")
    return LabeledDataset(features, true, observed, c)


def realized_rate_summary(ds: LabeledDataset, spec: NoiseSpec) -> dict:
    """Summary written next to generated datasets."""
    n = len(ds)
    flips = int(ds.is_noisy.sum())
    out = {
        "n": n,
        "classes": ds.num_classes,
        "dim": ds.dim,
        "noise_kind": spec.kind,
        "requested_rate": spec.rate,
        "realized_rate": flips / n if n else 0.0,
        "flips": flips,
    }
    if spec.kind == "symmetric" and n:
        sd = math.sqrt(n * spec.rate * (1 - spec.rate))
        out["binomial_z"] = (flips - n * spec.rate) / sd if sd > 0 else 0.0
    if spec.kind == "instance_proxy":
        out["note"] = "instance_proxy is a feature-projection proxy, not a DNN-derived generator"
    return out
