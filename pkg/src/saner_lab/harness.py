"""Training runs, per-epoch metrics, metrics CSV files and run comparisons."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from statistics import median
from typing import Sequence

import numpy as np

from . import diagnostics as diag
from .config import ExperimentConfig
from .model import Batch, ModelSpec, NumericalError, backward, init_params, predict, split_gradient
from .noise import LabeledDataset, apply_noise, load_dataset, make_gaussian_blobs
from .optim import (
    OptimConfig, OptimizerState, alpha_schedule, apply_update, component_ratio, mask_b,
    sam_gradient, saner_combine,
)

log = logging.getLogger(__name__)

DIAGNOSTIC_COLUMNS = ("frac_a", "frac_b", "frac_c", "p_clean", "p_noise", "pr")
METRICS_HEADER = (
    "epoch", "eta", "alpha", "train_acc_overall", "clean_train_acc", "noisy_train_acc",
    "clean_noisy_gap", "test_acc", "generalization_gap", *DIAGNOSTIC_COLUMNS,
)
ASSERTIONS = ("noisy_acc_ordering", "test_acc_ordering", "pr_late_phase")


class MetricsFormatError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    """Training hit a non-finite value; ``record`` holds the rows up to then."""

    def __init__(self, message: str, record: "RunRecord"):
        super().__init__(message)
        self.record = record


@dataclass
class MetricsRow:
    epoch: int
    eta: float | None = None
    alpha: float | None = None
    train_acc_overall: float | None = None
    clean_train_acc: float | None = None
    noisy_train_acc: float | None = None
    clean_noisy_gap: float | None = None
    test_acc: float | None = None
    generalization_gap: float | None = None
    frac_a: float | None = None
    frac_b: float | None = None
    frac_c: float | None = None
    p_clean: float | None = None
    p_noise: float | None = None
    pr: float | None = None

    def __post_init__(self):
        for name in ("train_acc_overall", "clean_train_acc", "noisy_train_acc", "test_acc"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        self.clean_noisy_gap = _diff(self.clean_train_acc, self.noisy_train_acc)
        self.generalization_gap = _diff(self.train_acc_overall, self.test_acc)


def _diff(a, b):
    return None if a is None or b is None else a - b


@dataclass
class RunRecord:
    rows: list[MetricsRow]
    params: np.ndarray | None = None
    config: ExperimentConfig | None = None
    name: str = ""

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.rows]

    @property
    def epochs(self) -> list[int]:
        return [r.epoch for r in self.rows]


def lr_schedule(epoch: int, config: ExperimentConfig) -> float:
    """Step decay: base rate times ``lr_decay`` per milestone already passed."""
    passed = sum(1 for m in (config.lr_milestones or ()) if m <= epoch)
    return config.optim.eta * config.lr_decay ** passed


def evaluate_split(params: np.ndarray, spec: ModelSpec, ds: LabeledDataset,
                   predictions: np.ndarray | None = None) -> tuple[float | None, float | None, float | None]:
    """Accuracy against observed labels on the clean subset, the noisy subset and overall.

    An empty subset yields ``None`` for its accuracy.
    """
    if predictions is None:
        predictions = predict(params, ds.features, spec)
    hit = predictions == ds.observed_labels
    noisy = ds.is_noisy
    clean_acc = float(hit[~noisy].mean()) if (~noisy).any() else None
    noisy_acc = float(hit[noisy].mean()) if noisy.any() else None
    overall = float(hit.mean()) if len(ds) else None
    return clean_acc, noisy_acc, overall


def prepare_data(config: ExperimentConfig) -> tuple[LabeledDataset, LabeledDataset]:
    """Load or synthesize ``(train, test)``; noise touches the training split only."""
    spec = config.model
    data = config.data
    if data.train_path:
        train = load_dataset(data.train_path)
        if data.test_path is None:
            raise ValueError("train_path given without test_path")
        test = load_dataset(data.test_path)
    else:
        full = make_gaussian_blobs(data.n_train + data.n_test, spec.num_classes, spec.input_dim,
                                   data.separation, data.seed)
        train = full.subset(slice(0, data.n_train))
        test = full.subset(slice(data.n_train, None))
        if config.noise.rate > 0:
            train = apply_noise(train, config.noise)
    for name, ds in (("train", train), ("test", test)):
        if ds.dim != spec.input_dim or ds.num_classes != spec.num_classes:
            raise ValueError(
                f"{name} data has dim={ds.dim}, classes={ds.num_classes}; "
                f"model expects {spec.input_dim} and {spec.num_classes}"
            )
    return train, test


def _ratio_pair(g_sgd, g_sam, params, optim: OptimConfig):
    if optim.decay_in_ratio and optim.weight_decay:
        decay = optim.weight_decay * params
        return g_sgd + decay, g_sam + decay
    return g_sgd, g_sam


def step_gradient(params: np.ndarray, batch: Batch, spec: ModelSpec, optim: OptimConfig,
                  alpha: float) -> np.ndarray:
    """The loss gradient each mode feeds to the parameter update."""
    if optim.mode == "sgd":
        return backward(params, batch, spec)
    g_sgd, g_sam = sam_gradient(params, batch, spec, optim.rho)
    if optim.mode == "sam":
        return g_sam
    ratio = component_ratio(*reversed(_ratio_pair(g_sgd, g_sam, params, optim)))
    if optim.mode == "saner":
        return saner_combine(g_sam, mask_b(ratio), alpha)
    return diag.hybrid_gradient(g_sgd, g_sam, diag.partition_groups(ratio), optim.mode)


def probe_diagnostics(params: np.ndarray, probe: Batch, spec: ModelSpec, optim: OptimConfig) -> dict:
    """Group fractions and dominance statistics on one fixed batch."""
    g_sgd, g_sam = sam_gradient(params, probe, spec, optim.effective_rho)
    ratio = component_ratio(*reversed(_ratio_pair(g_sgd, g_sam, params, optim)))
    partition = diag.partition_groups(ratio)
    frac_a, frac_b, frac_c, _ = diag.group_fractions(partition)
    g_clean, g_noise = split_gradient(params, probe, spec)
    s_o, s_c, s_n = diag.dominance_sets(g_clean, g_noise, g_sgd)
    report = diag.pr_ratio(s_c, s_n, partition.set_b, s_o)
    return dict(frac_a=frac_a, frac_b=frac_b, frac_c=frac_c,
                p_clean=report.p_clean, p_noise=report.p_noise, pr=report.pr)


def run_training(config: ExperimentConfig, train: LabeledDataset | None = None,
                 test: LabeledDataset | None = None, evaluate: bool = True,
                 name: str = "") -> RunRecord:
    """Train one model and return its per-epoch metrics.

    Each epoch shuffles the training set, walks it in mini-batches (the
    last one may be short) and records a :class:`MetricsRow` afterwards.
    The ``alpha`` column is the multiplier applied to down-weighted
    components: the ramp value under ``saner`` and 1 for every other mode.

    Diagnostics run on a probe batch drawn once per run and evaluated at
    each epoch's final parameters; they never touch the training RNG, so
    enabling them leaves the trajectory unchanged. With ``evaluate=False``
    the accuracy columns stay empty.

    Raises:
        TrainingDiverged: on a non-finite gradient or update. Rows gathered
            so far are written to ``output_dir`` first, when one is set.
    """
    config = config.resolved()
    spec, optim = config.model, config.optim
    if train is None or test is None:
        train, test = prepare_data(config)

    init_seq, shuffle_seq, probe_seq = np.random.SeedSequence(config.seed).spawn(3)
    params = init_params(spec, init_seq)
    state = OptimizerState.zeros(spec.num_params)
    shuffle_rng = np.random.default_rng(shuffle_seq)

    probe = None
    if config.diagnostics_enabled:
        size = min(config.probe_size, len(train))
        idx = np.sort(np.random.default_rng(probe_seq).choice(len(train), size=size, replace=False))
        probe = Batch(train.features[idx], train.observed_labels[idx], train.is_noisy[idx])
        if not probe.is_noisy.any():
            log.warning("probe batch has no noisy samples; dominance columns will be empty")

    rows: list[MetricsRow] = []
    record = RunRecord(rows, params, config, name)
    n = len(train)
    try:
        for epoch in range(config.epochs):
            eta = lr_schedule(epoch, config)
            alpha = alpha_schedule(epoch, optim.k, optim.alpha_target) if optim.mode == "saner" else 1.0
            order = shuffle_rng.permutation(n)
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                batch = Batch(train.features[idx], train.observed_labels[idx], train.is_noisy[idx])
                g = step_gradient(params, batch, spec, optim, alpha)
                params = apply_update(params, g, state, config.optim, eta)
            state.epoch = epoch + 1

            row = {}
            if evaluate:
                clean_acc, noisy_acc, overall = evaluate_split(params, spec, train)
                _, _, test_acc = evaluate_split(params, spec, test)
                row.update(train_acc_overall=overall, clean_train_acc=clean_acc,
                           noisy_train_acc=noisy_acc, test_acc=test_acc)
            if probe is not None:
                row.update(probe_diagnostics(params, probe, spec, optim))
            rows.append(MetricsRow(epoch=epoch, eta=eta, alpha=alpha, **row))
            record.params = params
    except NumericalError as exc:
        if config.output_dir:
            write_metrics(record, Path(config.output_dir) / "metrics.csv")
        raise TrainingDiverged(f"training diverged in epoch {len(rows)}: {exc}", record) from exc

    if config.output_dir:
        write_metrics(record, Path(config.output_dir) / "metrics.csv")
    return record


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def metrics_text(record: RunRecord, columns: Sequence[str] = METRICS_HEADER) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in record.rows:
        writer.writerow([_fmt(getattr(row, c)) for c in columns])
    return buf.getvalue()


def write_metrics(record: RunRecord, path, columns: Sequence[str] = METRICS_HEADER) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(metrics_text(record, columns).encode("utf-8"))


def read_metrics(path, columns: Sequence[str] = METRICS_HEADER) -> RunRecord:
    """Parse a metrics CSV written by :func:`write_metrics`.

    The two gap columns are recomputed from their source columns.

    Raises:
        MetricsFormatError: on a header mismatch or a malformed row (the
            message names the 1-based row number, header = row 1).
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != tuple(columns):
            raise MetricsFormatError(f"row 1: header mismatch, expected {','.join(columns)}")
        rows = []
        for rownum, cells in enumerate(reader, 2):
            if len(cells) != len(columns):
                raise MetricsFormatError(f"row {rownum}: expected {len(columns)} cells, found {len(cells)}")
            values = {}
            try:
                for col, cell in zip(columns, cells):
                    if col == "epoch":
                        values[col] = int(cell)
                    else:
                        values[col] = float(cell) if cell != "" else None
                for gap in ("clean_noisy_gap", "generalization_gap"):
                    values.pop(gap, None)
                rows.append(MetricsRow(**values))
            except (ValueError, TypeError) as exc:
                raise MetricsFormatError(f"row {rownum}: {exc}") from None
    return RunRecord(rows, name=Path(path).parent.name)


@dataclass
class Comparison:
    assertion: str
    verdict: str  # "pass", "fail" or "inconclusive"
    names: list[str]
    values: list[float | None]
    margins: list[float]

    def __str__(self):
        vals = ", ".join(f"{n}={'n/a' if v is None else f'{v:.4f}'}" for n, v in zip(self.names, self.values))
        margins = ", ".join(f"{m:+.4f}" for m in self.margins)
        return f"{self.assertion}: {self.verdict.upper()} [{vals}] margins [{margins}]"


def _late_median_pr(record: RunRecord) -> float | None:
    prs = record.column("pr")
    tail = prs[len(prs) - len(prs) // 3:] if len(prs) >= 3 else prs
    defined = [p for p in tail if p is not None and math.isfinite(p)]
    return median(defined) if defined else None


def _statistic(record: RunRecord, assertion: str) -> float | None:
    if assertion == "noisy_acc_ordering":
        return record.rows[-1].noisy_train_acc if record.rows else None
    if assertion == "test_acc_ordering":
        accs = [a for a in record.column("test_acc") if a is not None]
        return max(accs) if accs else None
    return _late_median_pr(record)


def compare_runs(records: Sequence, assertion: str, min_margin: float = 0.0,
                 strict: bool | None = None, names: Sequence[str] | None = None) -> Comparison:
    """Check that ``records`` are ordered from highest to lowest statistic.

    Statistics: final-epoch noisy training accuracy, best test accuracy
    over epochs, or the median ``pr`` over the last third of epochs.
    An entry may be a list of seed replicates, whose statistics are
    averaged. Consecutive margins must exceed ``min_margin`` (``strict``,
    default for the accuracy orderings) or reach it (default for
    ``pr_late_phase``). A missing statistic gives an inconclusive verdict.
    """
    if assertion not in ASSERTIONS:
        raise ValueError(f"assertion must be one of {ASSERTIONS}, got {assertion!r}")
    if len(records) < 2:
        raise ValueError("need at least two records to compare")
    groups = [list(r) if isinstance(r, (list, tuple)) else [r] for r in records]
    grid = groups[0][0].epochs
    for group in groups:
        for rec in group:
            if rec.epochs != grid:
                raise ValueError("records have misaligned epoch grids")
    if strict is None:
        strict = assertion != "pr_late_phase"

    values: list[float | None] = []
    for group in groups:
        stats = [_statistic(rec, assertion) for rec in group]
        values.append(None if any(s is None for s in stats) else float(np.mean(stats)))
    names = list(names) if names is not None else [g[0].name or str(i) for i, g in enumerate(groups)]

    if any(v is None for v in values):
        return Comparison(assertion, "inconclusive", names, values, [])
    margins = [a - b for a, b in zip(values, values[1:])]
    ok = all((m > min_margin) if strict else (m >= min_margin) for m in margins)
    return Comparison(assertion, "pass" if ok else "fail", names, values, margins)

