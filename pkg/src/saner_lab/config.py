"""Experiment configuration and its flat ``key=value`` file form.

Lines are ``key=value``; blank lines and ``#`` comments are ignored. Lists
are comma separated, ``pair_map`` is ``src:dst`` pairs (``9:1,2:0``). An
empty value means "unset / use the default". Command-line flags override
file values, which override built-in defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .model import ModelSpec
from .noise import NoiseSpec
from .optim import OptimConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class DataConfig:
    """Either a pair of dataset files or parameters for synthetic blobs."""

    train_path: str | None = None
    test_path: str | None = None
    n_train: int = 5000
    n_test: int = 1000
    separation: float = 4.0
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    model: ModelSpec = field(default_factory=lambda: ModelSpec((32, 64, 10)))
    optim: OptimConfig = field(default_factory=OptimConfig)
    data: DataConfig = field(default_factory=DataConfig)
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    epochs: int = 200
    batch_size: int = 128
    # None means "half and three quarters of the way through"
    lr_milestones: tuple[int, ...] | None = None
    lr_decay: float = 0.1
    seed: int = 0
    diagnostics_enabled: bool = True
    probe_size: int = 512
    output_dir: str | None = None

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be at least 1")
        if self.probe_size < 1:
            raise ConfigError("probe_size must be at least 1")
        if not 0 < self.lr_decay:
            raise ConfigError("lr_decay must be positive")
        if self.lr_milestones is not None:
            ms = tuple(int(m) for m in self.lr_milestones)
            object.__setattr__(self, "lr_milestones", ms)
            if any(b <= a for a, b in zip(ms, ms[1:])):
                raise ConfigError(f"lr_milestones must be strictly increasing, got {ms}")
            if ms and (ms[0] < 0 or ms[-1] >= self.epochs):
                raise ConfigError(f"lr_milestones must lie in [0, {self.epochs}), got {ms}")

    def resolved(self) -> "ExperimentConfig":
        """Fill in schedule defaults that depend on the epoch count."""
        ms = self.lr_milestones
        if ms is None:
            ms = tuple(sorted({m for m in (self.epochs // 2, 3 * self.epochs // 4) if 0 < m < self.epochs}))
        k = self.epochs // 4 if self.optim.k is None else self.optim.k
        return replace(self, lr_milestones=ms, optim=replace(self.optim, k=k))


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p.strip())


def _pair_map(text: str) -> dict[int, int] | None:
    if not text.strip():
        return None
    out = {}
    for item in text.split(","):
        src, dst = item.split(":")
        out[int(src)] = int(dst)
    return out


def _fmt_pair_map(pm):
    return "" if not pm else ",".join(f"{k}:{v}" for k, v in sorted(pm.items()))


def _opt(parse):
    return lambda text: None if text.strip() == "" else parse(text)


# key -> (parser, getter)
KEYS = {
    "layer_sizes": (_int_list, lambda c: ",".join(map(str, c.model.layer_sizes))),
    "activation": (str, lambda c: c.model.activation),
    "mode": (str, lambda c: c.optim.mode),
    "eta": (float, lambda c: repr(c.optim.eta)),
    "rho": (float, lambda c: repr(c.optim.rho)),
    "alpha": (float, lambda c: repr(c.optim.alpha_target)),
    "k": (_opt(int), lambda c: "" if c.optim.k is None else str(c.optim.k)),
    "momentum": (float, lambda c: repr(c.optim.momentum)),
    "weight_decay": (float, lambda c: repr(c.optim.weight_decay)),
    "decay_in_ratio": (_bool, lambda c: str(c.optim.decay_in_ratio).lower()),
    "epochs": (int, lambda c: str(c.epochs)),
    "batch_size": (int, lambda c: str(c.batch_size)),
    "lr_milestones": (_opt(_int_list), lambda c: "" if c.lr_milestones is None else ",".join(map(str, c.lr_milestones))),
    "lr_decay": (float, lambda c: repr(c.lr_decay)),
    "seed": (int, lambda c: str(c.seed)),
    "diagnostics": (_bool, lambda c: str(c.diagnostics_enabled).lower()),
    "probe_size": (int, lambda c: str(c.probe_size)),
    "train_path": (_opt(str), lambda c: c.data.train_path or ""),
    "test_path": (_opt(str), lambda c: c.data.test_path or ""),
    "n_train": (int, lambda c: str(c.data.n_train)),
    "n_test": (int, lambda c: str(c.data.n_test)),
    "separation": (float, lambda c: repr(c.data.separation)),
    "data_seed": (int, lambda c: str(c.data.seed)),
    "noise_kind": (str, lambda c: c.noise.kind),
    "noise_rate": (float, lambda c: repr(c.noise.rate)),
    "noise_seed": (int, lambda c: str(c.noise.seed)),
    "pair_map": (_pair_map, lambda c: _fmt_pair_map(c.noise.pair_map)),
}


def to_flat(config: ExperimentConfig) -> dict[str, str]:
    return {key: getter(config) for key, (_, getter) in KEYS.items()}


def parse_value(key: str, text: str):
    if key not in KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    try:
        return KEYS[key][0](text)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from None


def from_flat(values: dict[str, object], base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Apply already-parsed ``values`` on top of ``base`` (defaults if None)."""
    unknown = set(values) - set(KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base = base or ExperimentConfig()
    v = dict(to_flat(base))
    v = {key: parse_value(key, text) for key, text in v.items()}
    v.update(values)
    try:
        return ExperimentConfig(
            model=ModelSpec(tuple(v["layer_sizes"]), v["activation"]),
            optim=OptimConfig(
                eta=v["eta"], rho=v["rho"], alpha_target=v["alpha"], k=v["k"],
                momentum=v["momentum"], weight_decay=v["weight_decay"], mode=v["mode"],
                decay_in_ratio=v["decay_in_ratio"],
            ),
            data=DataConfig(v["train_path"], v["test_path"], v["n_train"], v["n_test"],
                            v["separation"], v["data_seed"]),
            noise=NoiseSpec(v["noise_kind"], v["noise_rate"], v["noise_seed"], v["pair_map"]),
            epochs=v["epochs"], batch_size=v["batch_size"], lr_milestones=v["lr_milestones"],
            lr_decay=v["lr_decay"], seed=v["seed"], diagnostics_enabled=v["diagnostics"],
            probe_size=v["probe_size"], output_dir=base.output_dir,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config_text(text: str) -> dict[str, object]:
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw!r}")
        key, _, val = line.partition("=")
        try:
            values[key.strip()] = parse_value(key.strip(), val.strip())
        except ConfigError as exc:
            raise ConfigError(f"line {lineno}: {exc}") from None
    return values


def load_config(path, base: ExperimentConfig | None = None) -> ExperimentConfig:
    return from_flat(parse_config_text(Path(path).read_text(encoding="utf-8")), base)


def save_config(config: ExperimentConfig, path) -> None:
    lines = [f"{k}={v}" for k, v in to_flat(config).items()]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
