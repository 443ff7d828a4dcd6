"""Synthetic imbalanced multi-aspect datasets and score-label ingestion.

The generator draws each aspect's score class from a categorical preset,
jitters the score inside its bin, and emits features as a fixed linear
mix of the per-aspect scores plus Gaussian noise, so every aspect is
recoverable from the features and metric differences are attributable to
the loss. Label files (CSV with header, or JSON lines) carry raw scores
that are rescaled to [0, 2] on load; they may optionally carry feature
vectors.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .scorebin import BIN_WIDTH, NUM_CLASSES, AspectSpec, bin_indices, rescale_score

DATASET_CACHE_MAGIC = "sbloss-dataset-v1"


@dataclass
class Sample:
    """One sample: features plus per-aspect targets and presence flags."""

    features: np.ndarray | None
    targets: dict[str, float]
    present: dict[str, bool]


@dataclass
class Dataset:
    """Column-array container; ``features`` is None for label-only data."""

    aspects: list[AspectSpec]
    features: np.ndarray | None  # (n, in_dim)
    targets: np.ndarray  # (n, M), zeros where absent
    present: np.ndarray  # (n, M) bool

    def __post_init__(self):
        if self.targets.shape != self.present.shape:
            raise ValueError("targets and present must have the same shape")
        if self.targets.shape[1] != len(self.aspects):
            raise ValueError("target columns must match the aspect list")
        if self.features is not None and len(self.features) != len(self.targets):
            raise ValueError("features and targets must have the same sample count")

    def __len__(self) -> int:
        return self.targets.shape[0]

    @property
    def aspect_names(self) -> list[str]:
        return [a.name for a in self.aspects]

    def sample(self, i: int) -> Sample:
        names = self.aspect_names
        return Sample(
            features=None if self.features is None else self.features[i],
            targets={name: float(self.targets[i, j]) for j, name in enumerate(names)},
            present={name: bool(self.present[i, j]) for j, name in enumerate(names)},
        )

    def labels_for(self, aspect_name: str) -> np.ndarray:
        """Targets of one aspect over the samples where it is present."""
        j = self.aspect_names.index(aspect_name)
        return self.targets[self.present[:, j], j]

    def class_counts(self) -> dict[str, list[int]]:
        return {
            name: np.bincount(bin_indices(self.labels_for(name)), minlength=NUM_CLASSES).tolist()
            if self.labels_for(name).size
            else [0] * NUM_CLASSES
            for name in self.aspect_names
        }


class TrainTest(NamedTuple):
    train: Dataset
    test: Dataset


@dataclass
class DistributionPreset:
    """Per-aspect categorical distribution over the 11 score classes.

    ``jitter`` is the within-bin uniform offset width; it must stay below
    the bin width so re-binning a generated target recovers its class.
    The top class is pinned to exactly 2.0 (its bin meets the score range
    only at that point).
    """

    aspects: list[AspectSpec]
    class_probs: dict[str, np.ndarray]
    jitter: float = 0.15

    def __post_init__(self):
        if not 0.0 <= self.jitter < BIN_WIDTH:
            raise ValueError(f"jitter must be in [0, {BIN_WIDTH}), got {self.jitter}")
        for aspect in self.aspects:
            probs = np.asarray(self.class_probs[aspect.name], dtype=float)
            if probs.shape != (NUM_CLASSES,):
                raise ValueError(f"aspect {aspect.name!r}: need {NUM_CLASSES} probabilities")
            if np.any(probs < 0):
                raise ValueError(f"aspect {aspect.name!r}: negative probability")
            if abs(probs.sum() - 1.0) > 1e-9:
                raise ValueError(
                    f"aspect {aspect.name!r}: probabilities sum to {probs.sum()!r}, not 1"
                )
            self.class_probs[aspect.name] = probs


def preset_speechocean_like(jitter: float = 0.15) -> DistributionPreset:
    """Eight word/utterance aspects with skew shaped like real scoring data.

    The utterance completeness-like aspect puts 0.97 of its mass on the
    top class with the remainder thinly spread below; the word
    stress-like aspect lives entirely on classes 5-10 (scores 1-2) with a
    strong top-bin skew; the remaining aspects are moderately top-skewed
    with every class populated.
    """
    # 0.03 below the top bin, thinning toward zero so low classes hold
    # only a handful of samples at n=2500 (some bins may stay empty).
    completeness = [0.001] * 5 + [0.002, 0.003, 0.005, 0.007, 0.008] + [0.97]
    stress = [0.0] * 5 + [0.01, 0.02, 0.05, 0.12, 0.25, 0.55]
    moderate = [0.02, 0.02, 0.03, 0.04, 0.05, 0.07, 0.09, 0.11, 0.13, 0.19, 0.25]

    aspects = [
        AspectSpec("word_accuracy", "word"),
        AspectSpec("word_stress", "word"),
        AspectSpec("word_total", "word"),
        AspectSpec("utt_accuracy", "utterance"),
        AspectSpec("utt_completeness", "utterance"),
        AspectSpec("utt_fluency", "utterance"),
        AspectSpec("utt_prosody", "utterance"),
        AspectSpec("utt_total", "utterance"),
    ]
    probs = {a.name: np.asarray(moderate, dtype=float) for a in aspects}
    probs["word_stress"] = np.asarray(stress, dtype=float)
    probs["utt_completeness"] = np.asarray(completeness, dtype=float)
    return DistributionPreset(aspects=aspects, class_probs=probs, jitter=jitter)


def preset_balanced(n_aspects: int = 3, jitter: float = 0.15) -> DistributionPreset:
    """Uniform class probabilities; the easy, learnable-by-construction case."""
    aspects = [AspectSpec(f"aspect{i}", "utterance") for i in range(n_aspects)]
    probs = {a.name: np.full(NUM_CLASSES, 1.0 / NUM_CLASSES) for a in aspects}
    return DistributionPreset(aspects=aspects, class_probs=probs, jitter=jitter)


PRESETS = {
    "speechocean_like": preset_speechocean_like,
    "balanced": preset_balanced,
}


def generate(
    preset: DistributionPreset,
    n: int,
    in_dim: int,
    noise_sd: float,
    seed: int,
    train_frac: float = 0.5,
    mixing: np.ndarray | None = None,
) -> TrainTest:
    """Draw ``n`` samples from the preset and split them train/test.

    Features are ``scores @ mixing.T + noise``; the mixing matrix is
    drawn once from the seed (or passed in for controlled tests).
    """
    if n < 10:
        raise ValueError(f"need at least 10 samples, got {n}")
    if noise_sd < 0:
        raise ValueError(f"noise_sd must be non-negative, got {noise_sd}")
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must be in (0, 1), got {train_frac}")

    m = len(preset.aspects)
    rng = np.random.default_rng(seed)
    if mixing is None:
        mixing = rng.standard_normal((in_dim, m)) / math.sqrt(m)
    else:
        mixing = np.asarray(mixing, dtype=float)
        if mixing.shape != (in_dim, m):
            raise ValueError(f"mixing must have shape {(in_dim, m)}, got {mixing.shape}")

    targets = np.empty((n, m))
    for j, aspect in enumerate(preset.aspects):
        classes = rng.choice(NUM_CLASSES, size=n, p=preset.class_probs[aspect.name])
        offsets = rng.uniform(0.0, preset.jitter, size=n)
        scores = classes * BIN_WIDTH + offsets
        # the top class meets [0, 2] only at 2.0 itself
        scores[classes == NUM_CLASSES - 1] = 2.0
        targets[:, j] = scores

    features = targets @ mixing.T + rng.normal(0.0, noise_sd, size=(n, in_dim))
    present = np.ones((n, m), dtype=bool)

    perm = rng.permutation(n)
    n_train = int(round(n * train_frac))
    train_idx, test_idx = perm[:n_train], perm[n_train:]

    def subset(idx):
        return Dataset(
            aspects=list(preset.aspects),
            features=features[idx],
            targets=targets[idx],
            present=present[idx],
        )

    return TrainTest(train=subset(train_idx), test=subset(test_idx))


@dataclass
class LabelSchema:
    """Maps label-file columns to aspects with their raw score ranges."""

    columns: dict[str, AspectSpec]

    @classmethod
    def from_file(cls, path) -> "LabelSchema":
        raw = json.loads(Path(path).read_text())
        if "columns" not in raw:
            raise ValueError(f"{path}: schema must contain a 'columns' mapping")
        columns = {}
        for column, entry in raw["columns"].items():
            try:
                columns[column] = AspectSpec(
                    name=entry.get("aspect", column),
                    level=entry["level"],
                    raw_max=entry.get("raw_max"),
                )
            except (KeyError, ValueError) as exc:
                raise ValueError(f"{path}: column {column!r}: {exc}") from exc
        return cls(columns=columns)


def _parse_rows(path) -> tuple[list[dict], str]:
    text = Path(path).read_text()
    first = text.lstrip()[:1]
    if first == "{":
        rows = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rows.append((lineno, json.loads(line)))
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: malformed JSON row: {exc}") from exc
        return rows, "jsonl"
    reader = csv.DictReader(text.splitlines())
    return [(i, row) for i, row in enumerate(reader, start=2)], "csv"


def load_labels(path, schema: LabelSchema) -> Dataset:
    """Parse a CSV or JSON-lines label file into a rescaled dataset.

    Missing or empty aspect values set ``present=False``; out-of-range
    scores are rejected with their line number. If JSON rows carry a
    ``features`` list, a feature matrix is attached.
    """
    rows, kind = _parse_rows(path)
    if not rows:
        raise ValueError(f"{path}: no data rows")

    aspects = list(schema.columns.values())
    names = [a.name for a in aspects]
    if len(set(names)) != len(names):
        raise ValueError(f"schema maps multiple columns to the same aspect: {names}")

    n = len(rows)
    targets = np.zeros((n, len(aspects)))
    present = np.zeros((n, len(aspects)), dtype=bool)
    features: list | None = [] if kind == "jsonl" and "features" in rows[0][1] else None

    for i, (lineno, row) in enumerate(rows):
        for j, (column, aspect) in enumerate(schema.columns.items()):
            value = row.get(column)
            if value is None or value == "":
                continue
            try:
                raw = float(value)
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: column {column!r}: not a number: {value!r}") from exc
            try:
                targets[i, j] = rescale_score(raw, aspect)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            present[i, j] = True
        if features is not None:
            vec = row.get("features")
            if vec is None:
                raise ValueError(f"{path}:{lineno}: row lacks the 'features' list")
            features.append(np.asarray(vec, dtype=float))

    feature_matrix = None
    if features is not None:
        lengths = {len(v) for v in features}
        if len(lengths) != 1:
            raise ValueError(f"{path}: inconsistent feature lengths {sorted(lengths)}")
        feature_matrix = np.stack(features)

    return Dataset(aspects=aspects, features=feature_matrix, targets=targets, present=present)


def save_dataset_cache(split: TrainTest, path) -> None:
    """Write both splits to a versioned .npz cache."""
    meta = {
        "magic": DATASET_CACHE_MAGIC,
        "aspects": [
            {"name": a.name, "level": a.level, "raw_max": a.raw_max}
            for a in split.train.aspects
        ],
        "has_features": split.train.features is not None,
    }
    arrays = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    for tag, ds in (("train", split.train), ("test", split.test)):
        arrays[f"{tag}_targets"] = ds.targets
        arrays[f"{tag}_present"] = ds.present
        if ds.features is not None:
            arrays[f"{tag}_features"] = ds.features
    np.savez(path, **arrays)


def load_dataset_cache(path) -> TrainTest:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("magic") != DATASET_CACHE_MAGIC:
            raise ValueError(f"{path}: not a {DATASET_CACHE_MAGIC} file")
        aspects = [AspectSpec(**entry) for entry in meta["aspects"]]
        splits = []
        for tag in ("train", "test"):
            splits.append(
                Dataset(
                    aspects=aspects,
                    features=data[f"{tag}_features"] if meta["has_features"] else None,
                    targets=data[f"{tag}_targets"],
                    present=data[f"{tag}_present"],
                )
            )
    return TrainTest(train=splits[0], test=splits[1])
