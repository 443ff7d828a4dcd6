"""Experiment orchestration: training runs, beta sweeps, scheme comparisons.

Class statistics are computed once from the training split before the
first epoch and held fixed for the whole run; weights never see test
data. Every (seed, scheme, beta) run is fully deterministic given its
config.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from . import model as model_mod
from .losses import total_loss
from .scorebin import NUM_CLASSES
from .weighting import ClassStats, WeightConfig, compute_class_stats, sb_num_weights

DEFAULT_SEEDS = (0, 1, 2, 3, 4)
DEFAULT_BETA_GRID = (0.5, 0.8, 0.9, 0.99, 0.999)


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


@dataclass(frozen=True)
class DataConfig:
    """Where the dataset comes from: a synthetic preset, a label file, or a cache."""

    source: str = "preset"  # preset | file | cache
    preset: str = "speechocean_like"
    n: int = 5000
    in_dim: int = 16
    noise_sd: float = 0.3
    jitter: float = 0.15
    train_frac: float = 0.5
    data_seed: int = 7
    path: str | None = None
    schema: str | None = None

    def __post_init__(self):
        if self.source not in ("preset", "file", "cache"):
            raise ConfigError(f"unknown dataset source {self.source!r}")
        if self.source == "preset" and self.preset not in data_mod.PRESETS:
            raise ConfigError(
                f"unknown preset {self.preset!r}; available: {sorted(data_mod.PRESETS)}"
            )
        if self.source in ("file", "cache") and not self.path:
            raise ConfigError(f"dataset source {self.source!r} needs a path")


@dataclass(frozen=True)
class TrainConfig:
    """Full experiment configuration; defaults follow the training protocol."""

    scheme: WeightConfig = field(default_factory=WeightConfig)
    lr: float = 1e-3
    batch_size: int = 25
    epochs: int = 100
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    eval_every: int = 1
    hidden: int = 24
    data: DataConfig = field(default_factory=DataConfig)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.eval_every < 1:
            raise ConfigError("epochs, batch_size and eval_every must be >= 1")
        if len(set(self.seeds)) != len(self.seeds) or not self.seeds:
            raise ConfigError(f"seeds must be distinct and non-empty, got {self.seeds}")


def config_to_dict(config: TrainConfig) -> dict:
    return dataclasses.asdict(config)


def config_from_dict(raw: dict) -> TrainConfig:
    """Build a TrainConfig from nested plain dicts (config files, overrides)."""
    raw = dict(raw)
    unknown = set(raw) - {f.name for f in dataclasses.fields(TrainConfig)}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    try:
        if "scheme" in raw:
            raw["scheme"] = WeightConfig(**raw["scheme"])
        if "data" in raw:
            raw["data"] = DataConfig(**raw["data"])
        if "seeds" in raw:
            raw["seeds"] = tuple(raw["seeds"])
        return TrainConfig(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def run_id(config: TrainConfig) -> str:
    """Deterministic short id of the resolved config (no wall-clock state)."""
    blob = json.dumps(config_to_dict(config), sort_keys=True).encode()
    return hashlib.sha1(blob).hexdigest()[:10]


def load_dataset(config: DataConfig) -> data_mod.TrainTest:
    if config.source == "preset":
        preset = data_mod.PRESETS[config.preset](jitter=config.jitter)
        return data_mod.generate(
            preset,
            n=config.n,
            in_dim=config.in_dim,
            noise_sd=config.noise_sd,
            seed=config.data_seed,
            train_frac=config.train_frac,
        )
    if config.source == "cache":
        return data_mod.load_dataset_cache(config.path)
    if not config.schema:
        raise ConfigError("file dataset source needs a schema path")
    dataset = data_mod.load_labels(config.path, data_mod.LabelSchema.from_file(config.schema))
    if dataset.features is None:
        raise ConfigError(f"{config.path}: label file carries no features; training needs them")
    rng = np.random.default_rng(config.data_seed)
    perm = rng.permutation(len(dataset))
    n_train = int(round(len(dataset) * config.train_frac))

    def subset(idx):
        return data_mod.Dataset(
            aspects=dataset.aspects,
            features=dataset.features[idx],
            targets=dataset.targets[idx],
            present=dataset.present[idx],
        )

    return data_mod.TrainTest(subset(perm[:n_train]), subset(perm[n_train:]))


def training_class_stats(train: data_mod.Dataset) -> dict[str, ClassStats]:
    """Fixed per-aspect class counts from the training split; empty aspects are skipped."""
    stats = {}
    for j, aspect in enumerate(train.aspects):
        labels = train.targets[train.present[:, j], j]
        if labels.size:
            stats[aspect.name] = compute_class_stats(labels, aspect)
    return stats


@dataclass
class RunTrace:
    """Per-epoch test PCC per aspect for one seed."""

    seed: int
    epochs: list[int]
    pcc: dict[str, list[float | None]]


@dataclass
class ExperimentResult:
    config: TrainConfig
    report: metrics_mod.EvalReport
    traces: list[RunTrace]
    inactive: tuple[str, ...]

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(
            {
                "run_id": run_id(self.config),
                "config": config_to_dict(self.config),
                "inactive_aspects": list(self.inactive),
                "report": dataclasses.asdict(self.report),
                "traces": [dataclasses.asdict(t) for t in self.traces],
            },
            indent=indent,
        )


def _evaluate(params, dataset: data_mod.Dataset, stats: dict[str, ClassStats]):
    preds = model_mod.forward(params, dataset.features)
    evals = {}
    for j, aspect in enumerate(dataset.aspects):
        if aspect.name not in stats:
            continue
        mask = dataset.present[:, j]
        if mask.sum() < 2:
            continue
        evals[aspect.name] = metrics_mod.evaluate_aspect(preds[mask, j], dataset.targets[mask, j])
    return evals


def run_single(
    config: TrainConfig, split: data_mod.TrainTest, seed: int
) -> tuple[dict[str, metrics_mod.AspectEval], RunTrace]:
    """Train one model with one seed; returns final-epoch evals and the PCC trace."""
    train, test = split
    stats = training_class_stats(train)
    aspects = train.aspects
    names = [a.name for a in aspects]

    params = model_mod.init_params(train.features.shape[1], config.hidden, len(aspects), seed)
    adam = model_mod.AdamState.for_params(params, lr=config.lr)
    rng = np.random.default_rng(seed)
    n_train = len(train)

    trace = RunTrace(seed=seed, epochs=[], pcc={name: [] for name in stats})
    for epoch in range(1, config.epochs + 1):
        perm = rng.permutation(n_train)
        for start in range(0, n_train, config.batch_size):
            batch = perm[start : start + config.batch_size]
            x = train.features[batch]
            preds = model_mod.forward(params, x)
            batch_preds = {name: preds[:, j] for j, name in enumerate(names) if name in stats}
            batch_targets = {
                name: train.targets[batch, j] for j, name in enumerate(names) if name in stats
            }
            masks = {name: train.present[batch, j] for j, name in enumerate(names) if name in stats}
            breakdown = total_loss(batch_preds, batch_targets, masks, stats, config.scheme)
            if not np.isfinite(breakdown.total):
                raise FloatingPointError(
                    f"non-finite loss {breakdown.total} at epoch {epoch}, batch {start // config.batch_size}"
                )
            upstream = np.zeros((len(batch), len(aspects)))
            for j, name in enumerate(names):
                if name in stats:
                    upstream[:, j] = breakdown.grads[name]
            grads = model_mod.backward(params, x, upstream)
            try:
                params, adam = model_mod.adam_step(params, grads, adam)
            except FloatingPointError as exc:
                raise FloatingPointError(
                    f"{exc} at epoch {epoch}, batch {start // config.batch_size}"
                ) from exc
        if epoch % config.eval_every == 0:
            evals = _evaluate(params, test, stats)
            trace.epochs.append(epoch)
            for name in stats:
                trace.pcc[name].append(evals[name].pcc if name in evals else None)

    final = _evaluate(params, test, stats)
    for name, ev in final.items():
        defined = [p for p in trace.pcc[name] if p is not None]
        ev.best_pcc = max(defined) if defined else None
    return final, trace


def run_experiment(config: TrainConfig, split: data_mod.TrainTest | None = None) -> ExperimentResult:
    """Run every seed in the config over one shared dataset and aggregate."""
    if split is None:
        split = load_dataset(config.data)
    stats = training_class_stats(split.train)
    inactive = tuple(name for name in split.train.aspect_names if name not in stats)

    reports = []
    traces = []
    for seed in config.seeds:
        evals, trace = run_single(config, split, seed)
        reports.append(metrics_mod.EvalReport(seeds=[seed], runs=[evals]))
        traces.append(trace)
    report = reports[0] if len(reports) == 1 else metrics_mod.aggregate_runs(reports)
    return ExperimentResult(config=config, report=report, traces=traces, inactive=inactive)


def average_weight_table(
    stats: dict[str, ClassStats], betas=DEFAULT_BETA_GRID
) -> dict[str, dict[float, float]]:
    """Per-aspect average of the effective-number weight over all 11 classes.

    Empty classes contribute their weight of exactly 1; this is the
    strict all-classes reading of the averaged-weight statistic.
    """
    return {
        name: {
            beta: float(np.mean(sb_num_weights(st.counts, beta))) for beta in betas
        }
        for name, st in stats.items()
    }


@dataclass
class SweepResult:
    betas: list[float]
    results: dict[float, ExperimentResult]
    avg_weights: dict[str, dict[float, float]]


def sweep_beta(
    config: TrainConfig,
    betas=DEFAULT_BETA_GRID,
    split: data_mod.TrainTest | None = None,
) -> SweepResult:
    """One multi-seed experiment per beta, plus the averaged-weight table."""
    if config.scheme.scheme not in ("sb_num", "sb_num_nopred"):
        raise ConfigError(f"scheme {config.scheme.scheme!r} ignores beta; nothing to sweep")
    for beta in betas:
        if not 0.0 <= beta < 1.0:
            raise ConfigError(f"beta must be in [0, 1), got {beta}")
    if split is None:
        split = load_dataset(config.data)
    stats = training_class_stats(split.train)

    results = {}
    for beta in betas:
        beta_config = replace(config, scheme=replace(config.scheme, beta=beta))
        results[beta] = run_experiment(beta_config, split)
    return SweepResult(
        betas=list(betas),
        results=results,
        avg_weights=average_weight_table(stats, betas),
    )


@dataclass
class CompareResult:
    schemes: list[WeightConfig]
    results: dict[str, ExperimentResult]


def compare_schemes(
    config: TrainConfig,
    schemes,
    split: data_mod.TrainTest | None = None,
) -> CompareResult:
    """Run each scheme over the same seeds and dataset, side by side."""
    if len(schemes) < 2:
        raise ConfigError("comparison needs at least 2 schemes")
    resolved = [
        s if isinstance(s, WeightConfig) else WeightConfig(scheme=s, beta=config.scheme.beta)
        for s in schemes
    ]
    if split is None:
        split = load_dataset(config.data)
    results = {}
    for scheme in resolved:
        results[scheme.scheme] = run_experiment(replace(config, scheme=scheme), split)
    return CompareResult(schemes=resolved, results=results)


def format_comparison_table(compare: CompareResult) -> str:
    """Aspects in rows, schemes in columns, PCC mean±std cells."""
    names = next(iter(compare.results.values())).report.aspect_names
    cols = [s.scheme for s in compare.schemes]
    width = 18
    header = f"{'aspect':<20}" + "".join(f"{c:>{width}}" for c in cols)
    lines = [header, "-" * len(header)]
    for name in names:
        cells = []
        for col in cols:
            report = compare.results[col].report
            if report.aggregate is not None:
                agg = report.aggregate[name]
                cell = (
                    f"{metrics_mod.fmt_value(agg.pcc_mean)}±{metrics_mod.fmt_value(agg.pcc_std)}"
                    if agg.pcc_mean is not None
                    else "n/a"
                )
            else:
                cell = metrics_mod.fmt_value(report.per_aspect[name].pcc)
            cells.append(f"{cell:>{width}}")
        lines.append(f"{name:<20}" + "".join(cells))
    return "\n".join(lines)


def format_sweep_table(sweep: SweepResult) -> str:
    """One block per beta with PCC rows, then the averaged-weight table."""
    lines = []
    width = 14
    header = f"{'aspect':<20}" + "".join(f"{'b=' + str(b):>{width}}" for b in sweep.betas)
    lines.append("test PCC (mean±std over seeds)")
    lines.append(header)
    lines.append("-" * len(header))
    names = next(iter(sweep.results.values())).report.aspect_names
    for name in names:
        cells = []
        for beta in sweep.betas:
            report = sweep.results[beta].report
            if report.aggregate is not None:
                agg = report.aggregate[name]
                cell = f"{metrics_mod.fmt_value(agg.pcc_mean)}±{metrics_mod.fmt_value(agg.pcc_std)}"
            else:
                cell = metrics_mod.fmt_value(report.per_aspect[name].pcc)
            cells.append(f"{cell:>{width}}")
        lines.append(f"{name:<20}" + "".join(cells))
    lines.append("")
    lines.append(f"average weight over the {NUM_CLASSES} classes (train counts)")
    lines.append(header)
    lines.append("-" * len(header))
    for name, row in sweep.avg_weights.items():
        cells = "".join(f"{row[beta]:>{width}.4f}" for beta in sweep.betas)
        lines.append(f"{name:<20}{cells}")
    return "\n".join(lines)


def save_experiment(result: ExperimentResult, out_dir, prefix: str = "train") -> Path:
    """Write the result JSON under a run-stamped filename; returns the path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = f"{prefix}_{result.config.scheme.scheme}_{run_id(result.config)}"
    path = out / f"{stamp}.json"
    path.write_text(result.to_json())
    return path
