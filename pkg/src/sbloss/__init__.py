"""Score-balanced re-weighting losses for imbalanced multi-aspect score regression."""

__version__ = "0.1.0"

from .scorebin import AspectSpec, ScoreClass, bin_index, bin_indices, bin_of, rescale_score
from .weighting import (
    ClassStats,
    WeightConfig,
    compute_class_stats,
    effective_number,
    rank_with_ties,
    sb_num_weight,
    sb_num_weights,
    sb_rank_weight,
)
from .losses import AspectLoss, LossBreakdown, total_loss, weighted_loss
from .metrics import EvalReport, aggregate_runs, distribution_report, mse, pearson
from .data import Dataset, DistributionPreset, TrainTest, generate, load_labels
from .trainer import CompareResult, DataConfig, SweepResult, TrainConfig, compare_schemes, run_experiment, sweep_beta

__all__ = [
    "AspectSpec",
    "ScoreClass",
    "bin_index",
    "bin_indices",
    "bin_of",
    "rescale_score",
    "ClassStats",
    "WeightConfig",
    "compute_class_stats",
    "effective_number",
    "rank_with_ties",
    "sb_num_weight",
    "sb_num_weights",
    "sb_rank_weight",
    "AspectLoss",
    "LossBreakdown",
    "total_loss",
    "weighted_loss",
    "EvalReport",
    "aggregate_runs",
    "distribution_report",
    "mse",
    "pearson",
    "Dataset",
    "DistributionPreset",
    "TrainTest",
    "generate",
    "load_labels",
    "CompareResult",
    "DataConfig",
    "SweepResult",
    "TrainConfig",
    "compare_schemes",
    "run_experiment",
    "sweep_beta",
]
