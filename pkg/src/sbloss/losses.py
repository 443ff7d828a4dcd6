"""Weighted squared-error losses over multiple aspects, with gradients.

Each aspect's loss is a per-sample-weighted MSE with mean reduction over
the masked-in samples; the multi-aspect total is the plain sum of the
per-aspect losses. The weight factor is piecewise constant in the
prediction (it only changes when the prediction crosses a bin edge), so
gradients treat weights as constants: that is exact almost everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scorebin import bin_indices
from .weighting import ClassStats, WeightConfig, sb_num_weights


@dataclass
class AspectLoss:
    """Loss, d(loss)/d(pred), and per-sample weights for one aspect.

    ``weights`` has one entry per sample; masked-out entries carry the
    neutral placeholder 1.0 and contribute nothing to loss or grad.
    ``active`` is False when every sample was masked out.
    """

    loss: float
    grad: np.ndarray
    weights: np.ndarray
    active: bool


@dataclass
class LossBreakdown:
    """Per-aspect weighted losses, their sum, and per-aspect gradients."""

    per_aspect: dict[str, float]
    total: float
    per_sample_weights: dict[str, np.ndarray]
    grads: dict[str, np.ndarray]
    inactive: tuple[str, ...]


def per_sample_weights(
    preds: np.ndarray, targets: np.ndarray, stats: ClassStats, config: WeightConfig
) -> np.ndarray:
    """Weight of each sample under the configured scheme.

    ``sb_num`` and ``sb_rank`` bin the prediction; ``sb_num_nopred`` bins
    the ground-truth target; ``none`` returns all ones.
    """
    if config.scheme == "none":
        return np.ones(len(preds))
    if config.scheme == "sb_num":
        return sb_num_weights(stats.counts[bin_indices(preds)], config.beta)
    if config.scheme == "sb_rank":
        return 1.0 / stats.normalized_ranks[bin_indices(preds)]
    if config.scheme == "sb_num_nopred":
        return sb_num_weights(stats.counts[bin_indices(targets)], config.beta)
    raise ValueError(f"unknown scheme {config.scheme!r}")


def weighted_loss(
    preds: np.ndarray,
    targets: np.ndarray,
    mask: np.ndarray,
    stats: ClassStats,
    config: WeightConfig,
) -> AspectLoss:
    """Weighted mean squared error over the masked-in samples.

    loss = sum_i w_i (pred_i - target_i)^2 / k over the k masked-in
    samples, with grad_i = 2 w_i (pred_i - target_i) / k. Summation is in
    ascending index order. An all-false mask yields loss 0, zero grad,
    and ``active=False``.
    """
    preds = np.asarray(preds, dtype=float)
    targets = np.asarray(targets, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if not (preds.shape == targets.shape == mask.shape):
        raise ValueError(
            f"aspect {stats.aspect.name!r}: preds/targets/mask shapes differ: "
            f"{preds.shape}, {targets.shape}, {mask.shape}"
        )
    n = len(preds)
    k = int(mask.sum())
    if k == 0:
        return AspectLoss(0.0, np.zeros(n), np.ones(n), active=False)

    weights = np.ones(n)
    weights[mask] = per_sample_weights(preds[mask], targets[mask], stats, config)
    residual = np.where(mask, preds - targets, 0.0)
    loss = float(np.sum(weights[mask] * residual[mask] ** 2) / k)
    grad = np.where(mask, 2.0 * weights * residual / k, 0.0)
    return AspectLoss(loss, grad, weights, active=True)


def total_loss(
    batch_preds: dict[str, np.ndarray],
    batch_targets: dict[str, np.ndarray],
    masks: dict[str, np.ndarray],
    all_stats: dict[str, ClassStats],
    config: WeightConfig,
) -> LossBreakdown:
    """Sum of per-aspect weighted losses, iterated in ``batch_preds`` order."""
    for name in batch_preds:
        if name not in all_stats:
            raise ValueError(f"unknown aspect {name!r}; have stats for {sorted(all_stats)}")
        if name not in batch_targets or name not in masks:
            raise ValueError(f"aspect {name!r} missing from targets or masks")

    per_aspect: dict[str, float] = {}
    weights: dict[str, np.ndarray] = {}
    grads: dict[str, np.ndarray] = {}
    inactive = []
    for name, preds in batch_preds.items():
        result = weighted_loss(preds, batch_targets[name], masks[name], all_stats[name], config)
        per_aspect[name] = result.loss
        weights[name] = result.weights
        grads[name] = result.grad
        if not result.active:
            inactive.append(name)
    total = float(sum(per_aspect.values()))
    return LossBreakdown(per_aspect, total, weights, grads, tuple(inactive))
