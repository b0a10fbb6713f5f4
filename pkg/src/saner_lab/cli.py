"""Command-line front end: ``saner-lab {make-data,run,sweep,diagnose,plot}``.

Exit codes: 0 success, 2 usage error, 3 runtime or numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from . import config as cfgmod
from .config import ConfigError, ExperimentConfig
from .harness import (
    DIAGNOSTIC_COLUMNS, TrainingDiverged, compare_runs, prepare_data, run_training, write_metrics,
)
from .noise import NoiseSpec, apply_noise, make_gaussian_blobs, realized_rate_summary, save_dataset
from .plotting import line_chart

log = logging.getLogger("saner_lab")

LIST_KEYS = {"layer_sizes", "lr_milestones", "pair_map"}


class UsageError(Exception):
    pass


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file (flags override it)")
    group = p.add_argument_group("config keys")
    for key in cfgmod.KEYS:
        group.add_argument(_flag(key), dest=f"cfg_{key}", metavar="VALUE")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="generic override, may repeat")


def _resolve_config(args, output_dir: str | None = None) -> ExperimentConfig:
    values = {}
    if args.config:
        values.update(cfgmod.parse_config_text(Path(args.config).read_text(encoding="utf-8")))
    for item in args.set:
        key, sep, text = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        values[key.strip()] = cfgmod.parse_value(key.strip(), text)
    for key in cfgmod.KEYS:
        text = getattr(args, f"cfg_{key}", None)
        if text is not None:
            values[key] = cfgmod.parse_value(key, text)
    base = ExperimentConfig(output_dir=output_dir)
    return cfgmod.from_flat(values, base)


def _prepare_output(config: ExperimentConfig, out: Path) -> ExperimentConfig:
    out.mkdir(parents=True, exist_ok=True)
    resolved = config.resolved()
    cfgmod.save_config(resolved, out / "config.txt")
    return replace(resolved, output_dir=str(out))


def cmd_make_data(args) -> int:
    if not 0.0 <= args.rate <= 1.0:
        raise UsageError(f"--rate must lie in [0, 1], got {args.rate}")
    try:
        pair_map = cfgmod.parse_value("pair_map", args.pair_map or "")
        spec = NoiseSpec(args.kind, args.rate, args.seed if args.noise_seed is None else args.noise_seed,
                         pair_map)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    full = make_gaussian_blobs(args.n + args.n_test, args.classes, args.dim, args.separation, args.seed)
    train = full.subset(slice(0, args.n))
    if spec.rate > 0:
        train = apply_noise(train, spec)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(train, out)
    summary = realized_rate_summary(train, spec)
    if args.n_test:
        test_out = Path(args.test_out) if args.test_out else out.with_name(out.stem + ".test" + out.suffix)
        save_dataset(full.subset(slice(args.n, None)), test_out)
        summary["test_path"] = str(test_out)
        summary["n_test"] = args.n_test
    summary_path = out.with_name(out.name + ".summary.json")
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {out} (n={summary['n']}, realized noise rate {summary['realized_rate']:.4f})")
    return 0


def cmd_run(args) -> int:
    config = _prepare_output(_resolve_config(args), Path(args.out))
    record = run_training(config)
    last = record.rows[-1]
    print(f"{config.optim.mode}: final test_acc={last.test_acc:.4f} noisy_train_acc="
          f"{'n/a' if last.noisy_train_acc is None else f'{last.noisy_train_acc:.4f}'} -> {args.out}")
    return 0


def cmd_diagnose(args) -> int:
    config = _prepare_output(_resolve_config(args), Path(args.out))
    config = replace(config, diagnostics_enabled=True, output_dir=None)
    train, test = prepare_data(config)
    if not train.is_noisy.any():
        log.warning("dataset has no flagged noisy samples; p_clean, p_noise and pr will be empty")
    record = run_training(config, train, test, evaluate=False)
    write_metrics(record, Path(args.out) / "diagnostics.csv", ("epoch", *DIAGNOSTIC_COLUMNS))
    print(f"wrote {Path(args.out) / 'diagnostics.csv'}")
    return 0


def _parse_grid(items: list[str]) -> dict[str, list]:
    grid: dict[str, list] = {}
    for item in items:
        key, sep, text = item.partition("=")
        key = key.strip()
        if not sep or not text:
            raise UsageError(f"--grid expects KEY=V1,V2,..., got {item!r}")
        parts = text.split("/") if key in LIST_KEYS else text.split(",")
        grid.setdefault(key, []).extend(cfgmod.parse_value(key, p) for p in parts)
    return grid


def _cell_name(cell: dict) -> str:
    def fmt(v):
        if isinstance(v, (tuple, list)):
            return "-".join(map(str, v))
        if isinstance(v, dict):
            return "-".join(f"{a}to{b}" for a, b in sorted(v.items()))
        return str(v)
    return "_".join(f"{k}={fmt(v)}" for k, v in cell.items()) or "single"


def _run_cell(job):
    config, out = job
    record = run_training(config)
    record.config = None
    record.params = None
    return record


def cmd_sweep(args) -> int:
    base = _resolve_config(args)
    grid = _parse_grid(args.grid)
    keys = list(grid)
    cells = [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]
    if not cells:
        raise UsageError("empty sweep grid")
    root = Path(args.out)
    jobs = []
    for cell in cells:
        config = cfgmod.from_flat(cell, base)
        out = root / _cell_name(cell)
        jobs.append((_prepare_output(config, out), out))

    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            records = list(pool.map(_run_cell, jobs))
    else:
        records = [_run_cell(job) for job in jobs]
    for record, cell in zip(records, cells):
        record.name = _cell_name(cell)

    report = sweep_report(cells, records, [k for k in keys if k != "seed"])
    (root / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    text = format_report(report)
    (root / "report.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def sweep_report(cells, records, group_keys) -> dict:
    """Group seed replicates and rank the groups by final noisy accuracy."""
    groups: dict[str, list] = {}
    for cell, record in zip(cells, records):
        label = _cell_name({k: cell[k] for k in group_keys if k in cell})
        groups.setdefault(label, []).append(record)

    def mean_of(recs, attr):
        vals = [getattr(r.rows[-1], attr) for r in recs]
        return None if any(v is None for v in vals) else sum(vals) / len(vals)

    summary = []
    for label, recs in groups.items():
        best = [max((a for a in r.column("test_acc") if a is not None), default=math.nan) for r in recs]
        summary.append({
            "group": label,
            "runs": len(recs),
            "final_noisy_train_acc": mean_of(recs, "noisy_train_acc"),
            "final_clean_train_acc": mean_of(recs, "clean_train_acc"),
            "best_test_acc": sum(best) / len(best),
        })
    ranking = sorted(summary, key=lambda s: -(s["final_noisy_train_acc"] or 0.0))
    report = {"groups": summary, "ranked_by_final_noisy_train_acc": [s["group"] for s in ranking],
              "comparisons": []}
    if len(groups) >= 2:
        for assertion in ("noisy_acc_ordering", "test_acc_ordering", "pr_late_phase"):
            c = compare_runs(list(groups.values()), assertion, names=list(groups))
            report["comparisons"].append({
                "assertion": c.assertion, "verdict": c.verdict, "names": c.names,
                "values": c.values, "margins": c.margins,
            })
    return report


def format_report(report: dict) -> str:
    def pct(v):
        return "n/a" if v is None else f"{100 * v:6.2f}"

    lines = [f"{'group':40s} {'runs':>4s} {'noisy%':>7s} {'clean%':>7s} {'best test%':>10s}"]
    for s in report["groups"]:
        lines.append(f"{s['group']:40s} {s['runs']:4d} {pct(s['final_noisy_train_acc']):>7s} "
                     f"{pct(s['final_clean_train_acc']):>7s} {pct(s['best_test_acc']):>10s}")
    lines.append("ranked by final noisy_train_acc: " + " > ".join(report["ranked_by_final_noisy_train_acc"]))
    for c in report["comparisons"]:
        margins = ", ".join(f"{m:+.4f}" for m in c["margins"])
        lines.append(f"{c['assertion']} (in grid order): {c['verdict']} [{margins}]")
    return "\n".join(lines) + "\n"


def _read_columns(path: Path) -> tuple[list[str], list[dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        return list(reader.fieldnames or []), rows


def _to_float(text):
    return None if text in ("", None) else float(text)


def cmd_plot(args) -> int:
    tables = []
    for path in map(Path, args.csv):
        header, rows = _read_columns(path)
        if not rows:
            raise UsageError(f"{path} has no data rows")
        tables.append((path, header, rows))
    for column in args.column:
        for path, header, _ in tables:
            if column not in header:
                raise UsageError(f"unknown column {column!r} in {path}; available: {', '.join(header)}")

    names = args.names.split(",") if args.names else _run_names([p for p, _, _ in tables])
    if len(names) != len(tables):
        raise UsageError("--names must give one name per CSV")
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for column in args.column:
        series = {}
        for name, (_, _, rows) in zip(names, tables):
            xs = [float(r["epoch"]) if "epoch" in r else float(i) for i, r in enumerate(rows)]
            series[name] = (xs, [_to_float(r[column]) for r in rows])
        svg = line_chart(series, title=column, ylabel=column)
        (out_dir / f"{column}.svg").write_bytes(svg.encode("utf-8"))
        print(f"wrote {out_dir / (column + '.svg')}")
    return 0


def _run_names(paths: list[Path]) -> list[str]:
    names = [p.parent.name or p.stem for p in paths]
    if len(set(names)) < len(names):
        names = [str(p.with_suffix("")) for p in paths]
    return names


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="saner-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("make-data", help="synthesize a Gaussian-blob dataset with label noise")
    p.add_argument("--kind", default="symmetric", help="symmetric, asymmetric_circular, asymmetric_pairmap, instance_proxy")
    p.add_argument("--rate", type=float, default=0.0)
    p.add_argument("--n", type=int, default=5000)
    p.add_argument("--n-test", type=int, default=0, help="also write this many clean test samples")
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise-seed", type=int, default=None)
    p.add_argument("--pair-map", default=None, help="e.g. 9:1,2:0")
    p.add_argument("--out", default="data.txt")
    p.add_argument("--test-out", default=None)
    p.set_defaults(func=cmd_make_data)

    p = sub.add_parser("run", help="train one model and write metrics.csv")
    _add_config_flags(p)
    p.add_argument("--out", default="run")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="train the cartesian product of --grid values")
    _add_config_flags(p)
    p.add_argument("--grid", action="append", default=[], metavar="KEY=V1,V2",
                   help="list-valued override; list keys separate values with '/'")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="sweep")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("diagnose", help="group fractions and pr per epoch only")
    _add_config_flags(p)
    p.add_argument("--out", default="diagnose")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("plot", help="SVG line charts from metrics CSVs")
    p.add_argument("csv", nargs="+")
    p.add_argument("--column", action="append", required=True)
    p.add_argument("--names", default=None, help="comma-separated legend names")
    p.add_argument("--out-dir", default="plots")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        parser.error(str(exc))  # exits with status 2
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
