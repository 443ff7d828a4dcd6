"""Desk-scale multi-task regressor with hand-written forward/backward.

Two tanh dense layers feed one scalar head per aspect. tanh keeps the
network smooth everywhere, so central finite differences check the
backward pass cleanly. Outputs are unconstrained reals; binning handles
out-of-range predictions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .losses import total_loss
from .weighting import ClassStats, WeightConfig

CHECKPOINT_MAGIC = "sbloss-checkpoint-v1"

PARAM_NAMES = ("w1", "b1", "w2", "b2", "w_out", "b_out")


@dataclass
class RegressorParams:
    """Trunk (in_dim -> hidden -> hidden, tanh) plus M linear head rows."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w_out: np.ndarray  # (hidden, M)
    b_out: np.ndarray  # (M,)

    @property
    def in_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def n_heads(self) -> int:
        return self.w_out.shape[1]

    def arrays(self):
        return [(name, getattr(self, name)) for name in PARAM_NAMES]

    def copy(self) -> "RegressorParams":
        return RegressorParams(**{name: arr.copy() for name, arr in self.arrays()})

    def count(self) -> int:
        return sum(arr.size for _, arr in self.arrays())


def _xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(in_dim: int, hidden: int, n_heads: int, seed: int) -> RegressorParams:
    """Xavier-uniform weights, zero biases; bitwise-reproducible per seed."""
    rng = np.random.default_rng(seed)
    return RegressorParams(
        w1=_xavier_uniform(rng, in_dim, hidden, (in_dim, hidden)),
        b1=np.zeros(hidden),
        w2=_xavier_uniform(rng, hidden, hidden, (hidden, hidden)),
        b2=np.zeros(hidden),
        w_out=_xavier_uniform(rng, hidden, n_heads, (hidden, n_heads)),
        b_out=np.zeros(n_heads),
    )


def _forward_cached(params: RegressorParams, x: np.ndarray):
    h1 = np.tanh(x @ params.w1 + params.b1)
    h2 = np.tanh(h1 @ params.w2 + params.b2)
    preds = h2 @ params.w_out + params.b_out
    return preds, (h1, h2)


def _as_batch(params: RegressorParams, features) -> tuple[np.ndarray, bool]:
    x = np.asarray(features, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != params.in_dim:
        raise ValueError(f"expected features with {params.in_dim} dims, got shape {np.shape(features)}")
    return x, single


def forward(params: RegressorParams, features) -> np.ndarray:
    """Predictions for one feature vector (M,) or a batch (n, M)."""
    x, single = _as_batch(params, features)
    preds, _ = _forward_cached(params, x)
    return preds[0] if single else preds


def backward(params: RegressorParams, features, upstream_grads) -> RegressorParams:
    """Parameter gradients of sum_i upstream_i * pred_i (reverse mode)."""
    x, single = _as_batch(params, features)
    g = np.asarray(upstream_grads, dtype=float)
    if single:
        g = g[None, :]
    if g.shape != (x.shape[0], params.n_heads):
        raise ValueError(
            f"expected upstream grads of shape {(x.shape[0], params.n_heads)}, got {g.shape}"
        )
    _, (h1, h2) = _forward_cached(params, x)

    d_w_out = h2.T @ g
    d_b_out = g.sum(axis=0)
    dh2 = g @ params.w_out.T
    dz2 = dh2 * (1.0 - h2**2)
    d_w2 = h1.T @ dz2
    d_b2 = dz2.sum(axis=0)
    dh1 = dz2 @ params.w2.T
    dz1 = dh1 * (1.0 - h1**2)
    d_w1 = x.T @ dz1
    d_b1 = dz1.sum(axis=0)
    return RegressorParams(w1=d_w1, b1=d_b1, w2=d_w2, b2=d_b2, w_out=d_w_out, b_out=d_b_out)


@dataclass
class AdamState:
    """First/second moment accumulators and step counter."""

    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def for_params(cls, params: RegressorParams, lr: float = 1e-3, **kwargs) -> "AdamState":
        return cls(
            lr=lr,
            m={name: np.zeros_like(arr) for name, arr in params.arrays()},
            v={name: np.zeros_like(arr) for name, arr in params.arrays()},
            **kwargs,
        )


def adam_step(
    params: RegressorParams, grads: RegressorParams, state: AdamState
) -> tuple[RegressorParams, AdamState]:
    """One bias-corrected Adam update; returns new params and state."""
    t = state.step + 1
    new_params = {}
    new_m = {}
    new_v = {}
    for name, arr in params.arrays():
        g = getattr(grads, name)
        if g.shape != arr.shape:
            raise ValueError(f"grad shape mismatch for {name}: {g.shape} vs {arr.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in parameter {name!r}")
        m = state.beta1 * state.m[name] + (1 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1 - state.beta2) * g**2
        m_hat = m / (1 - state.beta1**t)
        v_hat = v / (1 - state.beta2**t)
        new_params[name] = arr - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v
    return RegressorParams(**new_params), replace(state, step=t, m=new_m, v=new_v)


def min_bin_boundary_distance(preds: np.ndarray) -> float:
    """Smallest distance from any prediction to a multiple of 0.2."""
    scaled = np.asarray(preds, dtype=float).ravel() * 5
    frac = np.abs(scaled - np.round(scaled))
    return float(frac.min()) / 5 if len(scaled) else math.inf


def _loss_value(params, x, targets, masks, all_stats, config) -> float:
    preds, _ = _forward_cached(params, x)
    by_aspect = {name: preds[:, j] for j, name in enumerate(all_stats)}
    return total_loss(by_aspect, targets, masks, all_stats, config).total


def grad_check(
    params: RegressorParams,
    features,
    targets: dict[str, np.ndarray],
    masks: dict[str, np.ndarray],
    all_stats: dict[str, ClassStats],
    config: WeightConfig,
    probe: float = 1e-6,
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Valid only while no prediction sits within ~1e-3 of a bin edge: the
    weight factor is constant on that margin, so the probed loss stays
    smooth and the analytic gradient (weights held fixed) is exact.
    """
    x, _ = _as_batch(params, features)
    preds, _ = _forward_cached(params, x)
    by_aspect = {name: preds[:, j] for j, name in enumerate(all_stats)}
    breakdown = total_loss(by_aspect, targets, masks, all_stats, config)
    upstream = np.stack([breakdown.grads[name] for name in all_stats], axis=1)
    analytic = backward(params, x, upstream)

    worst = 0.0
    probed = params.copy()
    for name, arr in probed.arrays():
        a_grad = getattr(analytic, name)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            orig = arr[idx]
            arr[idx] = orig + probe
            up = _loss_value(probed, x, targets, masks, all_stats, config)
            arr[idx] = orig - probe
            down = _loss_value(probed, x, targets, masks, all_stats, config)
            arr[idx] = orig
            numeric = (up - down) / (2 * probe)
            a = float(a_grad[idx])
            err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, err)
    return worst


def save_checkpoint(params: RegressorParams, path, seed: int | None = None, aspects=None) -> None:
    """Write a self-describing JSON checkpoint (dims, seed, flat arrays)."""
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "in_dim": params.in_dim,
        "hidden": params.hidden,
        "n_heads": params.n_heads,
        "seed": seed,
        "aspects": list(aspects) if aspects is not None else None,
        "params": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in params.arrays()
        },
    }
    Path(path).write_text(json.dumps(payload))


def load_checkpoint(path) -> tuple[RegressorParams, dict]:
    """Read a checkpoint; returns params and the metadata dict."""
    payload = json.loads(Path(path).read_text())
    if payload.get("magic") != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a {CHECKPOINT_MAGIC} file")
    arrays = {
        name: np.asarray(entry["data"], dtype=float).reshape(entry["shape"])
        for name, entry in payload["params"].items()
    }
    meta = {k: payload[k] for k in ("in_dim", "hidden", "n_heads", "seed", "aspects")}
    return RegressorParams(**arrays), meta
