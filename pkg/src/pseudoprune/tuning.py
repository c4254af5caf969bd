"""Hyperparameter search against a pseudo-labeled validation split.

The search never touches ground truth: the pool is split 90/10, candidate
coresets are retrained on the 90% part, and validation accuracy is measured
against the held-out part's PSEUDO-labels. Ground truth stays reserved for
final test reports.

Search order for the windowed difficulty score: fix the epoch count T at a
30% pruning ratio first, then the density exponent c_D, then (only when the
grid offers alternatives) the uncertainty exponent gamma.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from pseudoprune.scoring import ScoreTable, dual
from pseudoprune.selection import beta_select, double_end_select, round_half_away
from pseudoprune.softmax import ToyTrainerConfig, sgd_fit
from pseudoprune.trajectory import LabelPool, TrajectoryLog, slice_epochs

DEFAULT_R0 = 0.3


@dataclass(frozen=True)
class SearchSpec:
    method: str = "BETA"
    cutoff_grid: tuple = ()  # empty means: derive 0..r step 0.1 at search time
    t_grid: tuple = (10, 20, 30)
    c_d_grid: tuple = (1.0, 4.0, 11.0)
    gamma_grid: tuple = (1.0,)
    split_fraction: float = 0.1
    seeds: tuple = (0,)

    def __post_init__(self):
        if not self.t_grid or not self.c_d_grid or not self.gamma_grid:
            raise ValueError("t/c_d/gamma grids must be non-empty")
        if not 0.0 < self.split_fraction <= 0.5:
            raise ValueError(f"split_fraction must lie in (0, 0.5], got {self.split_fraction}")
        if not self.seeds:
            raise ValueError("need at least one evaluation seed")


def cutoff_grid_for(r: float, step: float = 0.1) -> tuple:
    """Candidate cutoffs 0, step, ..., up to and including r."""
    grid = [0.0]
    value = step
    while value <= r + 1e-9:
        grid.append(min(value, r))
        value += step
    return tuple(grid)


def split_pool(pool: LabelPool, n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint (train_part, validation_part) index split of range(n)."""
    if not 0.0 < fraction <= 0.5:
        raise ValueError(f"split fraction must lie in (0, 0.5], got {fraction}")
    if pool.n_examples != n:
        raise ValueError(f"pool covers {pool.n_examples} examples, expected {n}")
    n_val = round_half_away(fraction * n)
    perm = np.random.default_rng(seed).permutation(n)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


@dataclass(frozen=True)
class EvalHarness:
    """Everything a candidate evaluation needs, minus any ground truth.

    features covers the full training split; labels are the pool's
    pseudo-labels. Candidate coresets index into train_part.
    """

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    train_part: np.ndarray
    val_part: np.ndarray
    cfg: ToyTrainerConfig = field(default_factory=ToyTrainerConfig)
    seeds: tuple = (0,)
    j_window: int = 10
    concentration: float = 16.0
    q: float = 0.01

    def eval_subset(self, part_positions: np.ndarray) -> float:
        """Mean validation accuracy (percent, against pseudo-labels) of the
        toy model retrained on the chosen train-part examples."""
        chosen = self.train_part[np.asarray(part_positions, dtype=np.int64)]
        val_x = self.features[self.val_part]
        val_y = self.labels[self.val_part]
        accs = []
        for seed in self.seeds:
            model = sgd_fit(
                self.features[chosen], self.labels[chosen], self.n_classes, replace(self.cfg, seed=seed)
            )
            accs.append(100.0 * float((model.predict(val_x) == val_y).mean()))
        return float(np.mean(accs))


def make_harness(
    features: np.ndarray,
    pool: LabelPool,
    train_part: np.ndarray,
    val_part: np.ndarray,
    cfg: ToyTrainerConfig | None = None,
    seeds: tuple = (0,),
    j_window: int = 10,
    concentration: float = 16.0,
    q: float = 0.01,
) -> EvalHarness:
    return EvalHarness(
        features=np.asarray(features, dtype=np.float64),
        labels=pool.labels.copy(),
        n_classes=pool.n_classes,
        train_part=np.asarray(train_part, dtype=np.int64),
        val_part=np.asarray(val_part, dtype=np.int64),
        cfg=cfg or ToyTrainerConfig(),
        seeds=tuple(seeds),
        j_window=j_window,
        concentration=concentration,
        q=q,
    )


@dataclass(frozen=True)
class SearchRecord:
    stage: str
    cutoff_ratio: float | None
    t: int | None
    c_d: float | None
    gamma: float | None
    val_acc: float
    selected: bool


@dataclass(frozen=True)
class CutoffSearchResult:
    best_cutoff: float
    records: tuple


@dataclass(frozen=True)
class DualSearchResult:
    t: int
    c_d: float
    gamma: float
    records: tuple


def tune_cutoff(table: ScoreTable, r: float, grid, harness: EvalHarness) -> CutoffSearchResult:
    """Grid-search the double-end cutoff; ties go to the smaller cutoff."""
    grid = sorted(grid)
    if not grid:
        raise ValueError("cutoff grid is empty")
    if grid[0] < 0 or grid[-1] > r:
        raise ValueError(f"cutoff grid must lie within [0, {r}]")
    best_cutoff, best_acc = None, -np.inf
    rows = []
    for cutoff in grid:
        plan = double_end_select(table, r, cutoff)
        acc = harness.eval_subset(plan.selected)
        if acc > best_acc:
            best_cutoff, best_acc = cutoff, acc
        rows.append([cutoff, acc])
    records = tuple(
        SearchRecord("cutoff", cutoff, None, None, None, acc, cutoff == best_cutoff) for cutoff, acc in rows
    )
    return CutoffSearchResult(best_cutoff=best_cutoff, records=records)


def tune_dual(
    log: TrajectoryLog,
    pool: LabelPool,
    r0: float,
    t_grid,
    c_d_grid,
    gamma_grid,
    harness: EvalHarness,
) -> DualSearchResult:
    """Staged search for the windowed score: T first (at pruning ratio r0),
    then c_D, then gamma when its grid has more than one entry. Stage
    defaults are the first grid entries. Ties go to the smaller value."""
    t_grid, c_d_grid, gamma_grid = sorted(set(t_grid)), sorted(set(c_d_grid)), sorted(set(gamma_grid))
    if not t_grid or not c_d_grid or not gamma_grid:
        raise ValueError("all grids must be non-empty")
    if t_grid[-1] > log.n_epochs:
        raise ValueError(f"T grid exceeds the {log.n_epochs} logged epochs")
    if t_grid[0] < 2:
        raise ValueError("T candidates must be >= 2 so a window fits")

    records = []

    def eval_candidate(stage: str, t: int, c_d: float, gamma: float) -> float:
        head = slice_epochs(log, 1, t)
        table = dual(head, pool, j=min(harness.j_window, t), gamma=gamma)
        plan = beta_select(table, r0, harness.concentration, c_d, harness.q, seed=harness.seeds[0])
        acc = harness.eval_subset(plan.selected)
        records.append([stage, t, c_d, gamma, acc])
        return acc

    def argmax_stage(stage: str, candidates, run) -> float:
        best_value, best_acc = None, -np.inf
        for value in candidates:
            acc = run(value)
            if acc > best_acc:
                best_value, best_acc = value, acc
        for row in records:
            if row[0] == stage:
                row.append(row[{"T": 1, "c_d": 2, "gamma": 3}[stage]] == best_value)
        return best_value

    c_d0, gamma0 = c_d_grid[0], gamma_grid[0]
    best_t = argmax_stage("T", t_grid, lambda t: eval_candidate("T", t, c_d0, gamma0))
    best_c_d = argmax_stage("c_d", c_d_grid, lambda c: eval_candidate("c_d", best_t, c, gamma0))
    if len(gamma_grid) > 1:
        best_gamma = argmax_stage("gamma", gamma_grid, lambda g: eval_candidate("gamma", best_t, best_c_d, g))
    else:
        best_gamma = gamma0

    wrapped = tuple(
        SearchRecord(row[0], None, row[1], row[2], row[3], row[4], bool(row[5]) if len(row) > 5 else False)
        for row in records
    )
    return DualSearchResult(t=best_t, c_d=best_c_d, gamma=best_gamma, records=wrapped)


def write_search(records, path: str | Path) -> None:
    """Search-trace CSV: one row per evaluated candidate."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "cutoff_ratio", "T", "c_d", "gamma", "val_acc", "selected"])
        for rec in records:
            writer.writerow(
                [
                    rec.stage,
                    "" if rec.cutoff_ratio is None else repr(rec.cutoff_ratio),
                    "" if rec.t is None else rec.t,
                    "" if rec.c_d is None else repr(rec.c_d),
                    "" if rec.gamma is None else repr(rec.gamma),
                    repr(rec.val_acc),
                    int(rec.selected),
                ]
            )
