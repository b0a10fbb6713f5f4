"""Sharpness-aware training with group-B reweighting, on small exact-gradient MLPs."""

from .config import ConfigError, DataConfig, ExperimentConfig, load_config, save_config
from .diagnostics import (
    DominanceReport, GroupPartition, dominance_sets, group_fractions, hybrid_gradient,
    partition_groups, pr_ratio,
)
from .harness import (
    Comparison, MetricsRow, RunRecord, TrainingDiverged, compare_runs, evaluate_split,
    lr_schedule, prepare_data, read_metrics, run_training, write_metrics,
)
from .model import (
    Batch, ModelSpec, NumericalError, backward, forward_loss, init_params, predict, split_gradient,
)
from .noise import (
    LabeledDataset, NoiseSpec, apply_noise, inject_asymmetric, inject_instance_proxy,
    inject_symmetric, load_dataset, make_gaussian_blobs, save_dataset,
)
from .optim import (
    GradientBundle, OptimConfig, OptimizerState, alpha_schedule, apply_update, component_ratio,
    mask_b, sam_gradient, sam_perturbation, saner_combine, saner_gradient, wrap_variant,
)

__version__ = "0.1.0"
