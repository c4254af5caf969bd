"""Flat key-value configuration for the pipeline.

One `section.key = value` pair per line; `#` starts a comment; blank lines
are ignored. Every key ships a default, so a config file only needs to list
the overrides. Unknown keys are rejected rather than silently dropped.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .scoring import METRICS
from .selection import METHODS
from .softmax import ToyTrainerConfig
from .synth import TaskParams

LABELERS = ("self_train", "cluster")


class ConfigError(ValueError):
    """Bad key, bad value, or a value outside its documented domain."""


def _parse_int(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _parse_float(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


def _parse_floats(text: str) -> tuple:
    items = [part.strip() for part in text.split(",") if part.strip()]
    return tuple(_parse_float(part) for part in items)


def _parse_ints(text: str) -> tuple:
    items = [part.strip() for part in text.split(",") if part.strip()]
    return tuple(_parse_int(part) for part in items)


def _parse_str(text: str) -> str:
    return text


# key -> (default string, parser). Order here is the emission order of
# config_text, so round-tripped files stay diffable.
_SCHEMA = {
    "task.n_classes": ("10", _parse_int),
    "task.dim": ("16", _parse_int),
    "task.n_train": ("5000", _parse_int),
    "task.n_val_per_class": ("50", _parse_int),
    "task.n_test_per_class": ("200", _parse_int),
    "task.mean_radius": ("3.0", _parse_float),
    "task.min_separation": ("1.0", _parse_float),
    "task.covariance_scale": ("1.0", _parse_float),
    "task.imbalance_factor": ("1.0", _parse_float),
    "task.corruption_fraction": ("0.0", _parse_float),
    "task.corruption_noise_scale": ("4.0", _parse_float),
    "budget.fraction": ("0.1", _parse_float),
    "labeler.kind": ("self_train", _parse_str),
    "labeler.threshold": ("0.95", _parse_float),
    "labeler.rounds": ("10", _parse_int),
    "trainer.epochs": ("30", _parse_int),
    "trainer.learning_rate": ("0.5", _parse_float),
    "trainer.batch_size": ("64", _parse_int),
    "trainer.l2": ("0.0001", _parse_float),
    "score.metric": ("DUAL", _parse_str),
    "score.J": ("10", _parse_int),
    "score.gamma": ("1.0", _parse_float),
    "score.n_early": ("10", _parse_int),
    "selection.method": ("BETA", _parse_str),
    "selection.cutoff_ratio": ("0.0", _parse_float),
    "selection.C": ("16.0", _parse_float),
    "selection.c_d": ("1.0", _parse_float),
    "selection.q": ("0.01", _parse_float),
    "ratios": ("0.3,0.5,0.7,0.9", _parse_floats),
    "tuning.split_fraction": ("0.1", _parse_float),
    "tuning.t_grid": ("10,20,30", _parse_ints),
    "tuning.c_d_grid": ("1.0,4.0,11.0", _parse_floats),
    "tuning.gamma_grid": ("1.0", _parse_floats),
    "out_dir": ("runs/default", _parse_str),
    "master_seed": ("0", _parse_int),
}


@dataclass(frozen=True)
class PipelineConfig:
    """Resolved configuration for every stage of the pipeline."""

    task: TaskParams
    trainer: ToyTrainerConfig
    budget_fraction: float
    labeler: str
    threshold: float
    rounds: int
    metric: str
    j_window: int
    gamma: float
    n_early: int
    method: str
    cutoff_ratio: float
    concentration: float
    c_d: float
    q: float
    ratios: tuple
    split_fraction: float
    t_grid: tuple
    c_d_grid: tuple
    gamma_grid: tuple
    out_dir: str
    master_seed: int

    def __post_init__(self):
        if self.labeler not in LABELERS:
            raise ConfigError(f"labeler.kind must be one of {LABELERS}, got {self.labeler!r}")
        if self.metric not in METRICS:
            raise ConfigError(f"score.metric must be one of {METRICS}, got {self.metric!r}")
        if self.method not in METHODS:
            raise ConfigError(f"selection.method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 < self.budget_fraction <= 1.0:
            raise ConfigError("budget.fraction must lie in (0, 1]")
        if not 0.0 < self.threshold <= 1.0:
            raise ConfigError("labeler.threshold must lie in (0, 1]")
        if self.rounds < 1:
            raise ConfigError("labeler.rounds must be >= 1")
        if self.j_window < 2:
            raise ConfigError("score.J must be >= 2")
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("score.gamma must lie in (0, 1]")
        if self.n_early < 1:
            raise ConfigError("score.n_early must be >= 1")
        if not 0.0 <= self.cutoff_ratio < 1.0:
            raise ConfigError("selection.cutoff_ratio must lie in [0, 1)")
        if self.concentration <= 0.0:
            raise ConfigError("selection.C must be positive")
        if self.c_d <= 0.0:
            raise ConfigError("selection.c_d must be positive")
        if not 0.0 < self.q <= 1.0:
            raise ConfigError("selection.q must lie in (0, 1]")
        if not self.ratios:
            raise ConfigError("ratios must list at least one pruning ratio")
        if any(not 0.0 <= r < 1.0 for r in self.ratios):
            raise ConfigError("every pruning ratio must lie in [0, 1)")
        if not 0.0 < self.split_fraction <= 0.5:
            raise ConfigError("tuning.split_fraction must lie in (0, 0.5]")
        if not (self.t_grid and self.c_d_grid and self.gamma_grid):
            raise ConfigError("tuning grids must be non-empty")
        if not self.out_dir:
            raise ConfigError("out_dir must be non-empty")
        if self.master_seed < 0:
            raise ConfigError("master_seed must be non-negative")


def build_config(values: Mapping[str, str] | None = None) -> PipelineConfig:
    """Merge string-valued overrides onto the shipped defaults."""
    merged = {key: default for key, (default, _) in _SCHEMA.items()}
    for key, value in (values or {}).items():
        if key not in _SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = value
    parsed = {key: _SCHEMA[key][1](merged[key]) for key in _SCHEMA}

    try:
        task = TaskParams(
            n_classes=parsed["task.n_classes"],
            dim=parsed["task.dim"],
            n_train=parsed["task.n_train"],
            n_val_per_class=parsed["task.n_val_per_class"],
            n_test_per_class=parsed["task.n_test_per_class"],
            mean_radius=parsed["task.mean_radius"],
            min_separation=parsed["task.min_separation"],
            covariance_scale=parsed["task.covariance_scale"],
            imbalance_factor=parsed["task.imbalance_factor"],
            corruption_fraction=parsed["task.corruption_fraction"],
            corruption_noise_scale=parsed["task.corruption_noise_scale"],
        )
        # the trainer seed is never read from a file: stages derive their own
        trainer = ToyTrainerConfig(
            epochs=parsed["trainer.epochs"],
            learning_rate=parsed["trainer.learning_rate"],
            batch_size=parsed["trainer.batch_size"],
            l2=parsed["trainer.l2"],
            seed=0,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    return PipelineConfig(
        task=task,
        trainer=trainer,
        budget_fraction=parsed["budget.fraction"],
        labeler=parsed["labeler.kind"],
        threshold=parsed["labeler.threshold"],
        rounds=parsed["labeler.rounds"],
        metric=parsed["score.metric"],
        j_window=parsed["score.J"],
        gamma=parsed["score.gamma"],
        n_early=parsed["score.n_early"],
        method=parsed["selection.method"],
        cutoff_ratio=parsed["selection.cutoff_ratio"],
        concentration=parsed["selection.C"],
        c_d=parsed["selection.c_d"],
        q=parsed["selection.q"],
        ratios=parsed["ratios"],
        split_fraction=parsed["tuning.split_fraction"],
        t_grid=parsed["tuning.t_grid"],
        c_d_grid=parsed["tuning.c_d_grid"],
        gamma_grid=parsed["tuning.gamma_grid"],
        out_dir=parsed["out_dir"],
        master_seed=parsed["master_seed"],
    )


def parse_config_text(text: str) -> dict:
    """Raw key -> value strings from config-file text (no defaults applied)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected `key = value`, got {raw!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def load_config(path: str | Path | None = None, overrides: Mapping[str, str] | None = None) -> PipelineConfig:
    """Defaults, then the file at `path` (if any), then `overrides`."""
    values = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text()))
    values.update(overrides or {})
    return build_config(values)


def _emit(key: str, cfg: PipelineConfig) -> str:
    section, _, field_name = key.partition(".")
    if section == "task":
        value = getattr(cfg.task, field_name)
    elif section == "trainer":
        value = getattr(cfg.trainer, field_name)
    elif key == "budget.fraction":
        value = cfg.budget_fraction
    elif key == "labeler.kind":
        value = cfg.labeler
    elif key == "labeler.threshold":
        value = cfg.threshold
    elif key == "labeler.rounds":
        value = cfg.rounds
    elif key == "score.metric":
        value = cfg.metric
    elif key == "score.J":
        value = cfg.j_window
    elif key == "score.gamma":
        value = cfg.gamma
    elif key == "score.n_early":
        value = cfg.n_early
    elif key == "selection.method":
        value = cfg.method
    elif key == "selection.cutoff_ratio":
        value = cfg.cutoff_ratio
    elif key == "selection.C":
        value = cfg.concentration
    elif key == "selection.c_d":
        value = cfg.c_d
    elif key == "selection.q":
        value = cfg.q
    elif key == "ratios":
        value = cfg.ratios
    elif key == "tuning.split_fraction":
        value = cfg.split_fraction
    elif key == "tuning.t_grid":
        value = cfg.t_grid
    elif key == "tuning.c_d_grid":
        value = cfg.c_d_grid
    elif key == "tuning.gamma_grid":
        value = cfg.gamma_grid
    elif key == "out_dir":
        value = cfg.out_dir
    elif key == "master_seed":
        value = cfg.master_seed
    else:
        raise KeyError(key)
    if isinstance(value, tuple):
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_text(cfg: PipelineConfig) -> str:
    """Every key, in schema order; load_config on the result round-trips."""
    lines = [f"{key} = {_emit(key, cfg)}" for key in _SCHEMA]
    return "\n".join(lines) + "\n"


def write_config(cfg: PipelineConfig, path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write(config_text(cfg))
