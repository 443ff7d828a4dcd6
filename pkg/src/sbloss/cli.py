"""Command-line entry point: stats, train, sweep-beta, compare, gen-data, grad-check.

Exit codes: 0 ok, 2 config error, 4 grad-check failure, 3 other runtime
errors. Every successful run writes a manifest with the resolved config,
seed list, and package version, so it can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import data as data_mod
from . import metrics as metrics_mod
from . import model as model_mod
from . import trainer as trainer_mod
from .trainer import ConfigError, DEFAULT_BETA_GRID, TrainConfig
from .weighting import WeightConfig, compute_class_stats, sb_num_weights, sb_rank_weight

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_GRADCHECK = 4

GRADCHECK_THRESHOLD = 1e-4


def _parse_override_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _valid_override_keys() -> list[str]:
    keys = []
    for f in dataclasses.fields(TrainConfig):
        if f.name in ("scheme", "data"):
            sub = WeightConfig if f.name == "scheme" else trainer_mod.DataConfig
            keys.extend(f"{f.name}.{g.name}" for g in dataclasses.fields(sub))
        else:
            keys.append(f.name)
    return keys


def _apply_overrides(raw: dict, overrides: list[str]) -> dict:
    valid = _valid_override_keys()
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not KEY=VALUE")
        key, value = item.split("=", 1)
        if key not in valid:
            raise ConfigError(f"unknown override key {key!r}; valid keys: {valid}")
        target = raw
        parts = key.split(".")
        for part in parts[:-1]:
            target = target.setdefault(part, {})
        target[parts[-1]] = _parse_override_value(value)
    return raw


def _resolve_config(args) -> TrainConfig:
    raw = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if getattr(args, "seeds", None):
        raw["seeds"] = [int(s) for s in args.seeds.split(",")]
    raw = _apply_overrides(raw, getattr(args, "set", None) or [])
    return trainer_mod.config_from_dict(raw)


def _write_manifest(out_dir: Path, command: str, config: TrainConfig | None, extra=None) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "artifact_version": __version__,
        "command": command,
        "resolved_config": trainer_mod.config_to_dict(config) if config else None,
        "seeds": list(config.seeds) if config else None,
        "run_id": trainer_mod.run_id(config) if config else None,
    }
    if extra:
        manifest.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2))


def cmd_stats(args) -> int:
    schema = data_mod.LabelSchema.from_file(args.schema)
    dataset = data_mod.load_labels(args.labels, schema)
    betas = DEFAULT_BETA_GRID

    machine = {}
    for j, aspect in enumerate(dataset.aspects):
        labels = dataset.targets[dataset.present[:, j], j]
        if labels.size == 0:
            print(f"{aspect.name}: no labels, skipped")
            continue
        stats = compute_class_stats(labels, aspect)
        avg = trainer_mod.average_weight_table({aspect.name: stats}, betas)[aspect.name]
        gammas = [sb_rank_weight(stats, k) for k in range(len(stats.counts))]
        print(f"\naspect {aspect.name} ({aspect.level}, {stats.total} labels)")
        print(f"  counts: {stats.counts.tolist()}")
        print(f"  ranks:  {stats.ranks.tolist()}")
        print(f"  gamma:  {[round(g, 4) for g in gammas]}")
        for beta in betas:
            w = [round(float(x), 4) for x in sb_num_weights(stats.counts, beta)]
            print(f"  alpha(beta={beta}): {w}  avg={avg[beta]:.4f}")
        machine[aspect.name] = {
            "counts": stats.counts.tolist(),
            "ranks": stats.ranks.tolist(),
            "gamma": gammas,
            "avg_alpha": {str(b): avg[b] for b in betas},
        }

    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "stats.json").write_text(json.dumps(machine, indent=2))
        _write_manifest(out, "stats", None, {"labels": str(args.labels), "schema": str(args.schema)})
    return EXIT_OK


def cmd_train(args) -> int:
    config = _resolve_config(args)
    result = trainer_mod.run_experiment(config)
    print(metrics_mod.format_report_table(result.report))
    if result.inactive:
        print(f"inactive aspects: {', '.join(result.inactive)}")
    if args.out:
        out = Path(args.out)
        path = trainer_mod.save_experiment(result, out)
        _write_manifest(out, "train", config, {"report": path.name})
        print(f"wrote {path}")
    return EXIT_OK


def cmd_sweep_beta(args) -> int:
    config = _resolve_config(args)
    betas = [float(b) for b in args.betas.split(",")] if args.betas else list(DEFAULT_BETA_GRID)
    sweep = trainer_mod.sweep_beta(config, betas)
    print(trainer_mod.format_sweep_table(sweep))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for beta, result in sweep.results.items():
            trainer_mod.save_experiment(result, out, prefix=f"sweep_b{beta}")
        (out / "avg_weights.json").write_text(
            json.dumps({a: {str(b): v for b, v in row.items()} for a, row in sweep.avg_weights.items()}, indent=2)
        )
        _write_manifest(out, "sweep-beta", config, {"betas": betas})
    return EXIT_OK


def cmd_compare(args) -> int:
    config = _resolve_config(args)
    schemes = args.schemes.split(",")
    compare = trainer_mod.compare_schemes(config, schemes)
    print(trainer_mod.format_comparison_table(compare))
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, result in compare.results.items():
            trainer_mod.save_experiment(result, out, prefix=f"compare_{name}")
        _write_manifest(out, "compare", config, {"schemes": schemes})
    return EXIT_OK


def cmd_gen_data(args) -> int:
    config = _resolve_config(args)
    if config.data.source != "preset":
        raise ConfigError("gen-data only generates from a preset source")
    split = trainer_mod.load_dataset(config.data)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    cache = out / "dataset.npz"
    data_mod.save_dataset_cache(split, cache)
    counts = split.train.class_counts()
    print(f"wrote {cache} ({len(split.train)} train / {len(split.test)} test samples)")
    for name, row in counts.items():
        print(f"  {name}: {row}")
    _write_manifest(out, "gen-data", config, {"cache": cache.name})
    return EXIT_OK


def cmd_grad_check(args) -> int:
    worst = 0.0
    rng_seed = args.seed
    for scheme in ("none", "sb_num", "sb_rank", "sb_num_nopred"):
        err = _grad_check_one(scheme, rng_seed)
        print(f"grad-check {scheme:<14} max relative error {err:.3e}")
        worst = max(worst, err)
    if worst >= GRADCHECK_THRESHOLD:
        print(f"FAIL: max relative error {worst:.3e} >= {GRADCHECK_THRESHOLD}")
        return EXIT_GRADCHECK
    print(f"OK: max relative error {worst:.3e} < {GRADCHECK_THRESHOLD}")
    return EXIT_OK


def _grad_check_one(scheme: str, seed: int, in_dim: int = 6, hidden: int = 5, m: int = 3) -> float:
    """Grad-check one scheme on a small random net, away from bin edges."""
    from .scorebin import AspectSpec

    aspects = [AspectSpec(f"a{i}", "utterance") for i in range(m)]
    for attempt in range(100):
        rng = np.random.default_rng(seed + 1000 * attempt)
        params = model_mod.init_params(in_dim, hidden, m, seed + 1000 * attempt)
        x = rng.standard_normal((5, in_dim))
        preds = model_mod.forward(params, x)
        if model_mod.min_bin_boundary_distance(preds) < 1e-3:
            continue
        targets = {a.name: rng.uniform(0, 2, size=5) for a in aspects}
        masks = {a.name: np.ones(5, dtype=bool) for a in aspects}
        stats = {
            a.name: compute_class_stats(rng.uniform(0, 2, size=50), a) for a in aspects
        }
        config = WeightConfig(scheme=scheme, beta=0.9)
        return model_mod.grad_check(params, x, targets, masks, stats, config)
    raise RuntimeError("could not place predictions away from bin boundaries")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sbloss", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_run_flags(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seeds", help="comma-separated seed list")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="config override with dotted keys, e.g. scheme.beta=0.99")

    p = sub.add_parser("stats", help="class counts, ranks and weight tables from a label file")
    p.add_argument("--labels", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="run one multi-seed experiment")
    add_run_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep-beta", help="run the beta sweep")
    add_run_flags(p)
    p.add_argument("--betas", help="comma-separated beta grid")
    p.set_defaults(func=cmd_sweep_beta)

    p = sub.add_parser("compare", help="compare weighting schemes side by side")
    add_run_flags(p)
    p.add_argument("--schemes", default="none,sb_num,sb_rank")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("gen-data", help="generate a synthetic dataset cache")
    add_run_flags(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("grad-check", help="finite-difference check of the full loss gradient")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_grad_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
