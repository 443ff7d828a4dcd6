"""Score rescaling and the 11-class score lattice.

All aspect scores live on a canonical 0-2 range. Continuous scores are
mapped onto 11 classes {0, 0.2, ..., 2}, where class ``k`` covers the
half-open interval [0.2k, 0.2k + 0.2). Scores outside [0, 2] are clamped
to the edge classes so that unconstrained regressor outputs always bin.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

NUM_CLASSES = 11
BIN_WIDTH = 0.2

# Absorbs binary-fraction representation error before flooring: 0.2 is not
# exactly representable, and e.g. 1.8/3 * 5 lands at 2.9999999999999996.
_BIN_EPS = 1e-9

LEVELS = ("phoneme", "word", "utterance")

# Raw score ranges per granularity level.
DEFAULT_RAW_MAX = {"phoneme": 2.0, "word": 10.0, "utterance": 10.0}


@dataclass(frozen=True)
class ScoreClass:
    """One of the 11 score classes; ``representative`` is its left edge."""

    index: int

    def __post_init__(self):
        if not 0 <= self.index < NUM_CLASSES:
            raise ValueError(f"class index {self.index} outside [0, {NUM_CLASSES - 1}]")

    @property
    def representative(self) -> float:
        return BIN_WIDTH * self.index


@dataclass(frozen=True)
class AspectSpec:
    """One scored aspect: name, granularity level, and raw score range."""

    name: str
    level: str
    raw_max: float | None = None

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"unknown level {self.level!r}; expected one of {LEVELS}")
        if self.raw_max is None:
            object.__setattr__(self, "raw_max", DEFAULT_RAW_MAX[self.level])
        if self.raw_max <= 0:
            raise ValueError(f"aspect {self.name!r}: raw_max must be positive")


def rescale_score(raw: float, spec: AspectSpec) -> float:
    """Map a raw score in [0, raw_max] linearly onto [0, 2]."""
    if not math.isfinite(raw) or raw < 0 or raw > spec.raw_max:
        raise ValueError(
            f"aspect {spec.name!r}: raw score {raw} outside [0, {spec.raw_max}]"
        )
    return raw * (2.0 / spec.raw_max)


def bin_index(score: float) -> int:
    """Index of the score class whose interval [s, s+0.2) contains ``score``.

    Scores below 0 map to class 0 and scores at or above 2 map to class 10.
    """
    if not math.isfinite(score):
        raise ValueError(f"cannot bin non-finite score {score}")
    return min(NUM_CLASSES - 1, max(0, math.floor(score * 5 + _BIN_EPS)))


def bin_of(score: float) -> ScoreClass:
    return ScoreClass(bin_index(score))


def bin_indices(scores: np.ndarray) -> np.ndarray:
    """Vectorized :func:`bin_index` over an array of scores."""
    scores = np.asarray(scores, dtype=float)
    if not np.all(np.isfinite(scores)):
        raise ValueError("cannot bin non-finite scores")
    idx = np.floor(scores * 5 + _BIN_EPS).astype(int)
    return np.clip(idx, 0, NUM_CLASSES - 1)
