"""Per-example difficulty scores computed from prediction trajectories.

Four metrics over a (TrajectoryLog, LabelPool) pair:

  AUM         mean margin of the assigned label over epochs
  DUAL        windowed (1 - mean) * std^gamma uncertainty-difficulty product
  FORGETTING  count of correct-to-incorrect argmax transitions
  EL2N        mean error-vector norm over the first few epochs

Every score table also carries pred_mean, the mean predicted probability of
the assigned label over the scored epochs, which Beta sampling consumes.
All paths compute in float64 and are deterministic.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pseudoprune.trajectory import InvariantError, LabelPool, TrajectoryLog

METRICS = ("AUM", "DUAL", "FORGETTING", "EL2N")


class DimensionMismatchError(ValueError):
    """Log and pool disagree on n_examples or n_classes."""


@dataclass(frozen=True)
class ScoreTable:
    """Scores plus the label-probability means the samplers need.

    params records the knobs the metric was computed with (T, J, gamma,
    n_early) so a serialized table is self-describing.
    """

    metric: str
    scores: np.ndarray
    pred_mean: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"unknown metric {self.metric!r}, expected one of {METRICS}")
        scores = np.asarray(self.scores, dtype=np.float64)
        pred_mean = np.asarray(self.pred_mean, dtype=np.float64)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "pred_mean", pred_mean)
        self.validate()
        scores.flags.writeable = False
        pred_mean.flags.writeable = False

    @property
    def n_examples(self) -> int:
        return self.scores.shape[0]

    def validate(self) -> None:
        if self.scores.ndim != 1 or self.scores.shape[0] < 1:
            raise InvariantError("scores must be a non-empty 1-d array")
        if self.pred_mean.shape != self.scores.shape:
            raise InvariantError("pred_mean must align with scores")
        if not np.isfinite(self.scores).all() or not np.isfinite(self.pred_mean).all():
            raise InvariantError("scores and pred_mean must be finite")
        if self.pred_mean.min() < 0.0 or self.pred_mean.max() > 1.0:
            raise InvariantError("pred_mean entries must lie in [0, 1]")
        if self.metric == "AUM":
            if self.scores.min() < -1.0 - 1e-9 or self.scores.max() > 1.0 + 1e-9:
                raise InvariantError("AUM scores must lie in [-1, 1]")
        elif self.metric in ("DUAL", "EL2N"):
            if self.scores.min() < 0.0:
                raise InvariantError(f"{self.metric} scores must be non-negative")
        elif self.metric == "FORGETTING":
            if self.scores.min() < 0.0 or np.any(self.scores != np.round(self.scores)):
                raise InvariantError("FORGETTING scores must be non-negative integers")


def _check_aligned(log: TrajectoryLog, pool: LabelPool) -> None:
    if pool.n_examples != log.n_examples:
        raise DimensionMismatchError(f"pool has {pool.n_examples} examples, log has {log.n_examples}")
    if pool.n_classes != log.n_classes:
        raise DimensionMismatchError(f"pool has {pool.n_classes} classes, log has {log.n_classes}")


def _label_probs(log: TrajectoryLog, pool: LabelPool) -> np.ndarray:
    # (n, T) probabilities of each example's assigned label
    idx = pool.labels[:, None, None]
    return np.take_along_axis(log.probs, idx, axis=2)[:, :, 0]


def _clip_unit(values: np.ndarray) -> np.ndarray:
    # guard float residue so downstream [0,1] checks hold exactly
    return np.clip(values, 0.0, 1.0)


def margin(prob_row, label: int) -> float:
    """p[label] minus the largest other-class probability; in [-1, 1]."""
    row = np.asarray(prob_row, dtype=np.float64)
    if row.ndim != 1 or row.shape[0] < 2:
        raise ValueError("prob_row must be a 1-d vector with at least two classes")
    if not 0 <= label < row.shape[0]:
        raise ValueError(f"label {label} out of range for {row.shape[0]} classes")
    others = np.delete(row, label)
    return float(row[label] - others.max())


def aum(log: TrajectoryLog, pool: LabelPool) -> ScoreTable:
    """Mean margin of the assigned label over all stored epochs."""
    _check_aligned(log, pool)
    p_label = _label_probs(log, pool)
    masked = log.probs.copy()
    np.put_along_axis(masked, pool.labels[:, None, None], -1.0, axis=2)
    margins = p_label - masked.max(axis=2)
    return ScoreTable(
        metric="AUM",
        scores=margins.mean(axis=1),
        pred_mean=_clip_unit(p_label.mean(axis=1)),
        params={"T": log.n_epochs},
    )


def dual(log: TrajectoryLog, pool: LabelPool, j: int, gamma: float = 1.0) -> ScoreTable:
    """Windowed (1 - mean) * std^gamma over the assigned label's trajectory.

    Window statistics use the sample standard deviation (J-1 divisor), and
    the per-window products are averaged over all T-J+1 windows. gamma=1
    reproduces the plain difficulty-uncertainty product.
    """
    _check_aligned(log, pool)
    t_total = log.n_epochs
    if not 2 <= j <= t_total:
        raise ValueError(f"window length {j} out of range [2, {t_total}]")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    p_label = _label_probs(log, pool)
    windows = np.lib.stride_tricks.sliding_window_view(p_label, j, axis=1)
    means = windows.mean(axis=2)
    stds = windows.std(axis=2, ddof=1)
    per_window = (1.0 - means) * stds**gamma
    scores = np.maximum(per_window.mean(axis=1), 0.0)
    return ScoreTable(
        metric="DUAL",
        scores=scores,
        pred_mean=_clip_unit(p_label.mean(axis=1)),
        params={"J": j, "gamma": gamma, "T": t_total},
    )


def forgetting(log: TrajectoryLog, pool: LabelPool) -> ScoreTable:
    """Number of epochs where the argmax flips away from the assigned label.

    np.argmax takes the first maximal entry, which matches the lowest-class
    tie rule.
    """
    _check_aligned(log, pool)
    if log.n_epochs < 2:
        raise ValueError("forgetting needs at least two epochs")
    preds = log.probs.argmax(axis=2)
    correct = preds == pool.labels[:, None]
    events = correct[:, :-1] & ~correct[:, 1:]
    p_label = _label_probs(log, pool)
    return ScoreTable(
        metric="FORGETTING",
        scores=events.sum(axis=1).astype(np.float64),
        pred_mean=_clip_unit(p_label.mean(axis=1)),
        params={"T": log.n_epochs},
    )


def el2n(log: TrajectoryLog, pool: LabelPool, n_early: int = 10) -> ScoreTable:
    """Mean Euclidean norm of (probs - one_hot(label)) over the first epochs."""
    _check_aligned(log, pool)
    if not 1 <= n_early <= log.n_epochs:
        raise ValueError(f"n_early {n_early} out of range [1, {log.n_epochs}]")
    err = log.probs[:, :n_early, :].copy()
    np.put_along_axis(
        err,
        pool.labels[:, None, None],
        np.take_along_axis(err, pool.labels[:, None, None], axis=2) - 1.0,
        axis=2,
    )
    norms = np.sqrt((err**2).sum(axis=2))
    p_label = _label_probs(log, pool)[:, :n_early]
    return ScoreTable(
        metric="EL2N",
        scores=norms.mean(axis=1),
        pred_mean=_clip_unit(p_label.mean(axis=1)),
        params={"n_early": n_early, "T": log.n_epochs},
    )


def _format_value(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_value(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def write_scores(table: ScoreTable, path: str | Path) -> None:
    """CSV with a '# metric=... k=v ...' comment line above the header."""
    parts = [f"metric={table.metric}"]
    parts += [f"{k}={_format_value(v)}" for k, v in table.params.items()]
    with open(path, "w", newline="") as fh:
        fh.write("# " + " ".join(parts) + "\n")
        writer = csv.writer(fh)
        writer.writerow(["example_id", "score", "pred_mean"])
        for i in range(table.n_examples):
            writer.writerow([i, repr(float(table.scores[i])), repr(float(table.pred_mean[i]))])


def read_scores(path: str | Path) -> ScoreTable:
    with open(path, newline="") as fh:
        meta_line = fh.readline().strip()
        if not meta_line.startswith("# "):
            raise ValueError(f"missing metadata line in {path}")
        meta = dict(item.split("=", 1) for item in meta_line[2:].split())
        metric = meta.pop("metric")
        params = {k: _parse_value(v) for k, v in meta.items()}
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["example_id", "score", "pred_mean"]:
            raise ValueError(f"unexpected score CSV header {header}")
        scores, pred_mean = [], []
        for row in reader:
            scores.append(float(row[1]))
            pred_mean.append(float(row[2]))
    return ScoreTable(metric=metric, scores=np.array(scores), pred_mean=np.array(pred_mean), params=params)
