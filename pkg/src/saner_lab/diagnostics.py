"""Component-wise gradient analytics.

Groups, by ratio ``r = g_sam / g_sgd``: A (``r >= 1``, amplified),
B (``0 <= r < 1``, shrunk) and C (``r < 0``, reversed). Components with an
undefined ratio sit in none of them.

Dominance sets compare the clean-sample and noisy-sample parts of the
batch gradient where they disagree in sign.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HYBRID_KINDS = ("sgd_gr_a", "sgd_gr_b")


@dataclass(frozen=True)
class GroupPartition:
    set_a: np.ndarray
    set_b: np.ndarray
    set_c: np.ndarray
    undefined: np.ndarray
    d: int

    def membership(self) -> np.ndarray:
        """Per-component label: 'A', 'B', 'C' or '?' for undefined."""
        out = np.full(self.d, "?", dtype="<U1")
        out[self.set_a], out[self.set_b], out[self.set_c] = "A", "B", "C"
        return out


@dataclass(frozen=True)
class DominanceReport:
    s_o: np.ndarray
    s_c: np.ndarray
    s_n: np.ndarray
    p_clean: float | None
    p_noise: float | None
    pr: float | None


def partition_groups(ratio: np.ndarray) -> GroupPartition:
    ratio = np.asarray(ratio, dtype=float)
    undefined = np.isnan(ratio)
    with np.errstate(invalid="ignore"):
        a = ratio >= 1
        b = (ratio >= 0) & (ratio < 1)
        c = ratio < 0
    return GroupPartition(
        np.flatnonzero(a), np.flatnonzero(b), np.flatnonzero(c), np.flatnonzero(undefined), ratio.size
    )


def group_fractions(partition: GroupPartition, d: int | None = None) -> tuple[float, float, float, float]:
    d = partition.d if d is None else d
    if d == 0:
        raise ValueError("cannot take group fractions of an empty parameter vector")
    return (
        partition.set_a.size / d,
        partition.set_b.size / d,
        partition.set_c.size / d,
        partition.undefined.size / d,
    )


def hybrid_gradient(g_sgd: np.ndarray, g_sam: np.ndarray, partition: GroupPartition, kind: str) -> np.ndarray:
    """SAM gradient with SGD values swapped in on group A or group B.

    ``sgd_gr_b`` undoes SAM's shrinking (group B); ``sgd_gr_a`` undoes its
    amplification (group A).
    """
    if g_sgd.shape != g_sam.shape:
        raise ValueError("gradient lengths differ")
    if kind == "sgd_gr_b":
        target = partition.set_b
    elif kind == "sgd_gr_a":
        target = partition.set_a
    else:
        raise ValueError(f"kind must be one of {HYBRID_KINDS}, got {kind!r}")
    out = g_sam.copy()
    out[target] = g_sgd[target]
    return out


def dominance_sets(g_clean: np.ndarray, g_noise: np.ndarray, g_sgd: np.ndarray,
                   atol: float = 1e-9) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Opposing, clean-dominated and noise-dominated component indices.

    Raises:
        ValueError: if ``g_sgd`` is not ``g_clean + g_noise`` within
            ``atol`` (scaled by the largest gradient entry when that exceeds 1).
    """
    if not (g_clean.shape == g_noise.shape == g_sgd.shape):
        raise ValueError("gradient lengths differ")
    gap = np.max(np.abs(g_clean + g_noise - g_sgd), initial=0.0)
    if gap > atol * max(1.0, np.max(np.abs(g_sgd), initial=0.0)):
        raise ValueError(f"g_sgd differs from g_clean + g_noise by {gap:.3g}")
    opposed = g_clean * g_noise < 0
    s_c = opposed & (g_clean * g_sgd > 0)
    s_n = opposed & (g_noise * g_sgd > 0)
    return np.flatnonzero(opposed), np.flatnonzero(s_c), np.flatnonzero(s_n)


def pr_ratio(s_c: np.ndarray, s_n: np.ndarray, set_b: np.ndarray,
             s_o: np.ndarray | None = None) -> DominanceReport:
    """Share of group B inside the clean- and noise-dominated sets.

    Undefined values (empty denominators) come back as ``None``.
    """
    s_c, s_n, set_b = (np.asarray(s, dtype=np.int64) for s in (s_c, s_n, set_b))
    p_clean = np.intersect1d(s_c, set_b).size / s_c.size if s_c.size else None
    p_noise = np.intersect1d(s_n, set_b).size / s_n.size if s_n.size else None
    pr = p_noise / p_clean if p_clean and p_noise is not None else None
    if s_o is None:
        s_o = np.union1d(s_c, s_n)
    return DominanceReport(np.asarray(s_o), s_c, s_n, p_clean, p_noise, pr)
