"""Per-class sample statistics and the score-balanced weighting factors.

Two factors are provided. The effective-number weight is
``(1 - beta) / (1 - beta^n)`` for a class with ``n`` samples (1 when the
class is empty), the inverse of the effective number of samples
``(1 - beta^n) / (1 - beta)``. The rank weight is the inverse normalized
rank of the class's sample count: the most populated class ranks highest
and gets weight 1, the sparsest class gets weight up to the class count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .scorebin import NUM_CLASSES, AspectSpec, bin_indices

SCHEMES = ("none", "sb_num", "sb_rank", "sb_num_nopred")


@dataclass(frozen=True)
class WeightConfig:
    """Which re-weighting scheme to apply and its beta hyperparameter.

    ``sb_rank`` ignores beta. ``sb_num_nopred`` is the ablation that bins
    the ground-truth target instead of the prediction.
    """

    scheme: str = "none"
    beta: float = 0.9

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not 0.0 <= self.beta < 1.0:
            raise ValueError(f"beta must be in [0, 1), got {self.beta}")


def rank_with_ties(counts) -> np.ndarray:
    """Ascending 1-based ranks of ``counts``, tied values averaged.

    The smallest count gets rank 1; tied counts all receive the arithmetic
    mean of the positional ranks they span (e.g. counts [2, 2, 100] rank
    as [1.5, 1.5, 3]).
    """
    counts = np.asarray(counts)
    n = len(counts)
    order = np.argsort(counts, kind="stable")
    ranks = np.empty(n, dtype=float)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and counts[order[j + 1]] == counts[order[i]]:
            j += 1
        # positions i..j (0-based) share the average of ranks i+1..j+1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


@dataclass(frozen=True)
class ClassStats:
    """Immutable per-class sample counts for one aspect, with derived ranks."""

    aspect: AspectSpec
    counts: np.ndarray
    ranks: np.ndarray = field(init=False)
    normalized_ranks: np.ndarray = field(init=False)

    def __post_init__(self):
        counts = np.array(self.counts, dtype=int)
        if counts.shape != (NUM_CLASSES,):
            raise ValueError(f"expected {NUM_CLASSES} class counts, got shape {counts.shape}")
        if np.any(counts < 0):
            raise ValueError("class counts must be non-negative")
        ranks = rank_with_ties(counts)
        for arr in (counts, ranks):
            arr.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "ranks", ranks)
        normalized = ranks / NUM_CLASSES
        normalized.flags.writeable = False
        object.__setattr__(self, "normalized_ranks", normalized)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def compute_class_stats(labels, aspect: AspectSpec) -> ClassStats:
    """Count samples per score class over already-rescaled labels in [0, 2]."""
    labels = np.asarray(labels, dtype=float)
    if labels.size == 0:
        raise ValueError(f"aspect {aspect.name!r}: no labels, class stats undefined")
    counts = np.bincount(bin_indices(labels), minlength=NUM_CLASSES)
    return ClassStats(aspect=aspect, counts=counts)


def effective_number(n: int, beta: float) -> float:
    """Effective number of samples (1 - beta^n) / (1 - beta)."""
    _check_beta(beta)
    if n < 0:
        raise ValueError(f"sample count must be non-negative, got {n}")
    return (1.0 - beta**n) / (1.0 - beta)


def sb_num_weight(n: int, beta: float) -> float:
    """Effective-number weight (1 - beta) / (1 - beta^n); exactly 1 when n = 0."""
    _check_beta(beta)
    if n < 0:
        raise ValueError(f"sample count must be non-negative, got {n}")
    if n == 0:
        return 1.0
    return (1.0 - beta) / (1.0 - beta**n)


def sb_num_weights(counts: np.ndarray, beta: float) -> np.ndarray:
    """Vectorized :func:`sb_num_weight` over an array of class counts."""
    _check_beta(beta)
    counts = np.asarray(counts)
    denom = 1.0 - float(beta) ** counts.astype(float)
    return np.where(counts == 0, 1.0, (1.0 - beta) / np.where(counts == 0, 1.0, denom))


def sb_rank_weight(stats: ClassStats, class_index: int) -> float:
    """Inverse normalized rank of the class's sample count, in [1, 11]."""
    return 1.0 / stats.normalized_ranks[class_index]


def _check_beta(beta: float) -> None:
    if not 0.0 <= beta < 1.0:
        raise ValueError(f"beta must be in [0, 1), got {beta}")
