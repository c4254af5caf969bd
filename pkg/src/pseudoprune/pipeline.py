"""Stage orchestration over disk artifacts.

Each stage reads its inputs from the output directory, writes its outputs in
the owning module's format, and returns a one-line summary. Stages compose
into the full pipeline but stay independently runnable, so an externally
produced trajectory log can be dropped in before `score`.

Seed discipline: the master seed fans out to per-stage seeds through
`stage_seed`, a SHA-256 hash of "master:stage". No two stages ever share raw
generator state; replicate runs inside `compare` extend the stage name with
the replicate index.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .labeling import cluster_label, draw_budget, quality, read_pool, self_train, write_pool
from .scoring import ScoreTable, aum, dual, el2n, forgetting, read_scores, write_scores
from .selection import (
    SelectionPlan,
    beta_select,
    bottom_k_select,
    double_end_select,
    random_select,
    read_plan,
    top_k_select,
    write_plan,
)
from .synth import evaluate, fit_on_subset, generate, load_task, save_task, train_toy
from .trajectory import LabelPool, TrajectoryLog, read_log_with_pool, write_log
from .tuning import DEFAULT_R0, cutoff_grid_for, make_harness, split_pool, tune_cutoff, tune_dual, write_search

EXIT_OK = 0
EXIT_MISSING_INPUT = 2
EXIT_FORMAT = 3
EXIT_CONFIG = 4
EXIT_DIMENSION = 5

COMPARE_DEFAULT_SEEDS = (0, 1, 2, 3, 4)


class PipelineError(Exception):
    """Base class for stage failures that map to specific exit codes."""


class MissingInputError(PipelineError):
    """A required input artifact is not on disk."""


class FormatError(PipelineError):
    """An input artifact exists but cannot be parsed."""


def stage_seed(master: int, stage: str) -> int:
    """Per-stage seed: low 4 bytes (little-endian) of sha256(b"master:stage")."""
    digest = hashlib.sha256(f"{master}:{stage}".encode("ascii")).digest()
    return int.from_bytes(digest[:4], "little")


@dataclass(frozen=True)
class Workspace:
    """Artifact layout under one output directory."""

    root: Path

    @property
    def task_dir(self) -> Path:
        return self.root / "task"

    @property
    def pool_path(self) -> Path:
        return self.root / "pool.csv"

    @property
    def log_path(self) -> Path:
        return self.root / "train.trj"

    @property
    def scores_path(self) -> Path:
        return self.root / "scores.csv"

    @property
    def search_path(self) -> Path:
        return self.root / "search.csv"

    @property
    def tuned_path(self) -> Path:
        return self.root / "tuned.txt"

    @property
    def report_path(self) -> Path:
        return self.root / "report.csv"

    @property
    def quality_path(self) -> Path:
        return self.root / "quality.csv"

    @property
    def histograms_path(self) -> Path:
        return self.root / "histograms.csv"

    @property
    def plots_dir(self) -> Path:
        return self.root / "plots"

    def plan_path(self, method: str, ratio: float) -> Path:
        return self.root / f"plan_{method.lower()}_r{ratio:g}.csv"

    def eval_path(self, method: str, ratio: float) -> Path:
        return self.root / f"eval_{method.lower()}_r{ratio:g}.csv"


def workspace(cfg: PipelineConfig) -> Workspace:
    ws = Workspace(root=Path(cfg.out_dir))
    ws.root.mkdir(parents=True, exist_ok=True)
    return ws


def _require(path: Path, what: str, produced_by: str) -> None:
    if not path.exists():
        raise MissingInputError(f"{what} not found at {path}; run the `{produced_by}` stage first")


def _load_task_checked(ws: Workspace):
    _require(ws.task_dir / "spec.txt", "task directory", "gen")
    try:
        return load_task(ws.task_dir)
    except (ValueError, KeyError, OSError) as exc:
        raise FormatError(f"cannot parse task directory {ws.task_dir}: {exc}") from exc


def _read_pool_checked(ws: Workspace, n_classes: int) -> LabelPool:
    _require(ws.pool_path, "label pool", "label")
    try:
        return read_pool(ws.pool_path, n_classes)
    except ValueError as exc:
        raise FormatError(f"cannot parse {ws.pool_path}: {exc}") from exc


def _read_scores_checked(ws: Workspace) -> ScoreTable:
    _require(ws.scores_path, "score table", "score")
    try:
        return read_scores(ws.scores_path)
    except ValueError as exc:
        raise FormatError(f"cannot parse {ws.scores_path}: {exc}") from exc


def _read_plan_checked(path: Path) -> SelectionPlan:
    _require(path, "selection plan", "select")
    try:
        return read_plan(path)
    except ValueError as exc:
        raise FormatError(f"cannot parse {path}: {exc}") from exc


# --- stage commands ---------------------------------------------------------------


def run_gen(cfg: PipelineConfig) -> str:
    ws = workspace(cfg)
    task = generate(cfg.task, seed=stage_seed(cfg.master_seed, "gen"))
    save_task(task, ws.task_dir)
    p = cfg.task
    return f"gen: task n_train={p.n_train} C={p.n_classes} dim={p.dim} -> {ws.task_dir}"


def run_label(cfg: PipelineConfig) -> str:
    ws = workspace(cfg)
    task = _load_task_checked(ws)
    budget = draw_budget(task.params.n_train, cfg.budget_fraction, stage_seed(cfg.master_seed, "budget"))
    label_seed = stage_seed(cfg.master_seed, "label")
    if cfg.labeler == "self_train":
        pool = self_train(task, budget, cfg.threshold, cfg.rounds, replace(cfg.trainer, seed=label_seed))
    else:
        feats = task.features[task.splits["train"]]
        budget_truth = task.truth[task.splits["train"]][budget.labeled_indices]
        pool = cluster_label(feats, task.params.n_classes, budget, budget_truth, seed=label_seed)
    write_pool(pool, ws.pool_path)
    n = len(pool.labels)
    n_budget = int(pool.is_ground_truth.sum())
    return f"label: {cfg.labeler} pool, {n - n_budget}/{n} pseudo-labeled (budget {n_budget}) -> {ws.pool_path}"


def run_trainlog(cfg: PipelineConfig) -> str:
    ws = workspace(cfg)
    task = _load_task_checked(ws)
    pool = _read_pool_checked(ws, cfg.task.n_classes)
    log = train_toy(task, pool, replace(cfg.trainer, seed=stage_seed(cfg.master_seed, "trainlog")))
    write_log(log, ws.log_path, pool)
    return f"trainlog: {log.n_epochs} epochs x {log.n_examples} examples -> {ws.log_path}"


def _score_table(cfg: PipelineConfig, log: TrajectoryLog, pool: LabelPool, metric: str) -> ScoreTable:
    if metric == "AUM":
        return aum(log, pool)
    if metric == "DUAL":
        return dual(log, pool, j=cfg.j_window, gamma=cfg.gamma)
    if metric == "FORGETTING":
        return forgetting(log, pool)
    return el2n(log, pool, n_early=cfg.n_early)


def run_score(cfg: PipelineConfig, metric: str | None = None) -> str:
    ws = workspace(cfg)
    metric = metric or cfg.metric
    _require(ws.log_path, "trajectory log", "trainlog")
    log, pool = read_log_with_pool(ws.log_path)
    if pool is None:
        pool = _read_pool_checked(ws, cfg.task.n_classes)
    table = _score_table(cfg, log, pool, metric)
    write_scores(table, ws.scores_path)
    return f"score: {metric} over {log.n_examples} examples (T={log.n_epochs}) -> {ws.scores_path}"


def _select_plan(
    cfg: PipelineConfig, table: ScoreTable | None, n: int, method: str, ratio: float, seed: int
) -> SelectionPlan:
    if method == "RANDOM":
        return random_select(n, ratio, seed=seed)
    if method == "DOUBLE_END":
        return double_end_select(table, ratio, cfg.cutoff_ratio)
    if method == "BETA":
        return beta_select(table, ratio, cfg.concentration, cfg.c_d, cfg.q, seed=seed)
    if method == "TOP_K":
        return top_k_select(table, ratio)
    return bottom_k_select(table, ratio)


def run_select(cfg: PipelineConfig, ratio: float | None = None, method: str | None = None) -> str:
    ws = workspace(cfg)
    ratio = cfg.ratios[0] if ratio is None else ratio
    method = method or cfg.method
    if method == "RANDOM":
        # no scores needed; size the plan off the pool
        pool = _read_pool_checked(ws, cfg.task.n_classes)
        table, n = None, len(pool.labels)
    else:
        table = _read_scores_checked(ws)
        n = table.scores.size
    plan = _select_plan(cfg, table, n, method, ratio, seed=stage_seed(cfg.master_seed, "select"))
    path = ws.plan_path(method, ratio)
    write_plan(plan, path)
    return f"select: {method} r={ratio:g} kept {plan.selected.size}/{n} -> {path}"


def run_tune(cfg: PipelineConfig) -> str:
    ws = workspace(cfg)
    task = _load_task_checked(ws)
    pool = _read_pool_checked(ws, cfg.task.n_classes)
    _require(ws.log_path, "trajectory log", "trainlog")
    log, _ = read_log_with_pool(ws.log_path)

    train_part, val_part = split_pool(pool, task.params.n_train, cfg.split_fraction, stage_seed(cfg.master_seed, "tune-split"))
    feats = task.features[task.splits["train"]]
    harness = make_harness(
        feats,
        pool,
        train_part,
        val_part,
        cfg=cfg.trainer,
        seeds=(stage_seed(cfg.master_seed, "tune-eval"),),
        j_window=cfg.j_window,
        concentration=cfg.concentration,
        q=cfg.q,
    )
    part_log = TrajectoryLog(probs=log.probs[train_part], epoch_ids=log.epoch_ids)
    part_pool = LabelPool(
        labels=pool.labels[train_part],
        is_ground_truth=pool.is_ground_truth[train_part],
        n_classes=pool.n_classes,
    )

    records = []
    tuned = {}
    if cfg.method == "DOUBLE_END":
        r = cfg.ratios[0]
        result = tune_cutoff(_score_table(cfg, part_log, part_pool, cfg.metric), r, cutoff_grid_for(r), harness)
        records.extend(result.records)
        tuned["cutoff_ratio"] = result.best_cutoff
    if cfg.metric == "DUAL":
        result = tune_dual(part_log, part_pool, DEFAULT_R0, cfg.t_grid, cfg.c_d_grid, cfg.gamma_grid, harness)
        records.extend(result.records)
        tuned.update({"T": result.t, "c_d": result.c_d, "gamma": result.gamma})

    write_search(records, ws.search_path)
    with open(ws.tuned_path, "w") as fh:
        for key, value in tuned.items():
            fh.write(f"{key} = {value!r}\n")
    if not tuned:
        return f"tune: nothing to search for metric={cfg.metric} method={cfg.method} -> {ws.tuned_path}"
    shown = " ".join(f"{k}={v!r}" for k, v in tuned.items())
    return f"tune: {shown} -> {ws.tuned_path}"


def read_tuned(path: str | Path) -> dict:
    values = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition("=")
        values[key.strip()] = float(value.strip())
    return values


def run_eval(cfg: PipelineConfig, ratio: float | None = None, method: str | None = None) -> str:
    ws = workspace(cfg)
    ratio = cfg.ratios[0] if ratio is None else ratio
    method = method or cfg.method
    task = _load_task_checked(ws)
    pool = _read_pool_checked(ws, cfg.task.n_classes)
    plan = _read_plan_checked(ws.plan_path(method, ratio))
    model = fit_on_subset(task, pool, replace(cfg.trainer, seed=stage_seed(cfg.master_seed, "eval")), subset=plan.selected)
    acc, balanced = evaluate(task, model, "test")
    path = ws.eval_path(method, ratio)
    write_report([(method, ratio, str(cfg.master_seed), acc, balanced)], path)
    return f"eval: {method} r={ratio:g} acc={acc:.2f} balanced={balanced:.2f} -> {path}"


# --- comparison protocol ---------------------------------------------------------


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return mean, std


def run_compare(
    cfg: PipelineConfig,
    methods=None,
    ratios=None,
    seeds=None,
    plots: bool = False,
) -> str:
    """Full evaluation protocol: per (method, ratio, seed) cell, select a
    coreset, retrain the toy model on it, score it on the balanced test
    split. Cells are independent and run in a fixed order, so the emitted
    CSVs are byte-identical across runs with the same master seed."""
    ws = workspace(cfg)
    methods = (cfg.method,) if methods is None else tuple(methods)
    ratios = tuple(cfg.ratios) if ratios is None else tuple(ratios)
    seeds = COMPARE_DEFAULT_SEEDS if seeds is None else tuple(seeds)
    if not methods or not ratios or not seeds:
        raise ValueError("compare needs at least one method, ratio, and seed")

    needs_scores = any(m != "RANDOM" for m in methods)
    per_seed = {}
    quality_rows = []
    for s in seeds:
        task = generate(cfg.task, seed=stage_seed(cfg.master_seed, f"gen:{s}"))
        budget = draw_budget(task.params.n_train, cfg.budget_fraction, stage_seed(cfg.master_seed, f"budget:{s}"))
        label_seed = stage_seed(cfg.master_seed, f"label:{s}")
        if cfg.labeler == "self_train":
            pool = self_train(task, budget, cfg.threshold, cfg.rounds, replace(cfg.trainer, seed=label_seed))
        else:
            feats = task.features[task.splits["train"]]
            budget_truth = task.truth[task.splits["train"]][budget.labeled_indices]
            pool = cluster_label(feats, task.params.n_classes, budget, budget_truth, seed=label_seed)
        table = None
        if needs_scores:
            log = train_toy(task, pool, replace(cfg.trainer, seed=stage_seed(cfg.master_seed, f"trainlog:{s}")))
            table = _score_table(cfg, log, pool, cfg.metric)
        rep = quality(pool, task.truth[task.splits["train"]], hungarian=False)
        quality_rows.append((str(s), rep.acc, rep.balanced_acc, rep.nmi, rep.ari))
        per_seed[s] = (task, pool, table)

    report_rows = []
    hist_rows = []
    for method in methods:
        for ratio in ratios:
            accs, bals = [], []
            for s in seeds:
                task, pool, table = per_seed[s]
                n = len(pool.labels)
                plan = _select_plan(
                    cfg, table, n, method, ratio, seed=stage_seed(cfg.master_seed, f"select:{s}:{method}:{ratio:g}")
                )
                model = fit_on_subset(
                    task, pool, replace(cfg.trainer, seed=stage_seed(cfg.master_seed, f"eval:{s}")), subset=plan.selected
                )
                acc, balanced = evaluate(task, model, "test")
                accs.append(acc)
                bals.append(balanced)
                report_rows.append((method, ratio, str(s), acc, balanced))
                counts = np.bincount(pool.labels[plan.selected], minlength=pool.n_classes)
                for cls, count in enumerate(counts):
                    hist_rows.append((method, ratio, str(s), cls, int(count)))
            mean_acc, std_acc = _mean_std(accs)
            mean_bal, std_bal = _mean_std(bals)
            report_rows.append((method, ratio, "mean", mean_acc, mean_bal))
            report_rows.append((method, ratio, "std", std_acc, std_bal))

    agg = []
    for column in range(1, 5):
        values = [row[column] for row in quality_rows]
        agg.append(_mean_std(values))
    quality_rows.append(("mean",) + tuple(a[0] for a in agg))
    quality_rows.append(("std",) + tuple(a[1] for a in agg))

    write_report(report_rows, ws.report_path)
    write_quality_table(quality_rows, ws.quality_path)
    write_histograms(hist_rows, ws.histograms_path)

    if plots:
        _write_compare_plots(ws, per_seed, hist_rows, methods, ratios, seeds)

    cells = f"{len(methods)} methods x {len(ratios)} ratios x {len(seeds)} seeds"
    return f"compare: {cells} -> {ws.report_path}"


def _write_compare_plots(ws: Workspace, per_seed, hist_rows, methods, ratios, seeds) -> None:
    # presentation only; nothing downstream reads these files
    from .plots import plot_class_counts, plot_score_histogram

    ws.plots_dir.mkdir(parents=True, exist_ok=True)
    for s in seeds:
        table = per_seed[s][2]
        if table is not None:
            plot_score_histogram(table, ws.plots_dir / f"scores_seed{s}.svg")
    for method in methods:
        for ratio in ratios:
            cell = [row for row in hist_rows if row[0] == method and row[1] == ratio]
            n_classes = max(row[3] for row in cell) + 1
            counts = np.zeros(n_classes, dtype=np.float64)
            for _, _, _, cls, count in cell:
                counts[cls] += count
            counts /= len(seeds)
            path = ws.plots_dir / f"classes_{method.lower()}_r{ratio:g}.svg"
            plot_class_counts(counts, path, title=f"{method} r={ratio:g}: mean coreset class counts")


# --- CSV emission (all re-parseable by the readers below) -----------------------


def write_report(rows, path: str | Path) -> None:
    """Rows: (method, ratio, seed, acc, balanced_acc); seed is "mean"/"std"
    on aggregate rows. Plain LF and repr floats keep reruns byte-identical."""
    with open(path, "w", newline="") as fh:
        fh.write("method,ratio,seed,acc,balanced_acc\n")
        for method, ratio, seed, acc, balanced in rows:
            fh.write(f"{method},{float(ratio)!r},{seed},{float(acc)!r},{float(balanced)!r}\n")


def read_report(path: str | Path) -> list:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "method,ratio,seed,acc,balanced_acc":
        raise FormatError(f"{path} is not a report CSV")
    rows = []
    for line in lines[1:]:
        method, ratio, seed, acc, balanced = line.split(",")
        rows.append((method, float(ratio), seed, float(acc), float(balanced)))
    return rows


def write_quality_table(rows, path: str | Path) -> None:
    """Rows: (seed, acc, balanced_acc, nmi, ari) per replicate plus
    "mean"/"std" aggregates."""
    with open(path, "w", newline="") as fh:
        fh.write("seed,acc,balanced_acc,nmi,ari\n")
        for seed, acc, balanced, nmi, ari in rows:
            fh.write(f"{seed},{float(acc)!r},{float(balanced)!r},{float(nmi)!r},{float(ari)!r}\n")


def read_quality_table(path: str | Path) -> list:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "seed,acc,balanced_acc,nmi,ari":
        raise FormatError(f"{path} is not a quality CSV")
    rows = []
    for line in lines[1:]:
        seed, acc, balanced, nmi, ari = line.split(",")
        rows.append((seed, float(acc), float(balanced), float(nmi), float(ari)))
    return rows


def write_histograms(rows, path: str | Path) -> None:
    """Rows: (method, ratio, seed, class, count) pseudo-label counts inside
    each selected coreset."""
    with open(path, "w", newline="") as fh:
        fh.write("method,ratio,seed,class,count\n")
        for method, ratio, seed, cls, count in rows:
            fh.write(f"{method},{float(ratio)!r},{seed},{int(cls)},{int(count)}\n")


def read_histograms(path: str | Path) -> list:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "method,ratio,seed,class,count":
        raise FormatError(f"{path} is not a histogram CSV")
    rows = []
    for line in lines[1:]:
        method, ratio, seed, cls, count = line.split(",")
        rows.append((method, float(ratio), seed, int(cls), int(count)))
    return rows
