"""Synthetic Gaussian-mixture classification tasks and the toy trainer glue.

Three regimes, controlled by two knobs:

  clean       imbalance_factor=1, corruption_fraction=0
  corrupted   corruption_fraction rho > 0: that fraction of training
              examples gets heavy additive feature noise
  long-tail   imbalance_factor < 1: training class sizes follow the
              exponential profile n_c = n_max * IF^(c/(C-1)), class 0 largest

Validation and test splits are always class-balanced and clean, so accuracy
comparisons across regimes stay honest.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pseudoprune.selection import round_half_away
from pseudoprune.softmax import SoftmaxModel, ToyTrainerConfig, sgd_fit
from pseudoprune.trajectory import InvariantError, LabelPool, TrajectoryLog

SPLITS = ("train", "validation", "test")

_MEAN_DRAW_ATTEMPTS = 200


@dataclass(frozen=True)
class TaskParams:
    n_classes: int = 10
    dim: int = 16
    n_train: int = 5000
    n_val_per_class: int = 50
    n_test_per_class: int = 200
    mean_radius: float = 3.0
    min_separation: float = 1.0
    covariance_scale: float = 1.0  # isotropic feature covariance is this times I
    imbalance_factor: float = 1.0
    corruption_fraction: float = 0.0
    corruption_noise_scale: float = 4.0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError(f"need n_classes >= 2, got {self.n_classes}")
        if self.dim < 2:
            raise ValueError(f"need dim >= 2, got {self.dim}")
        if not 0.0 < self.imbalance_factor <= 1.0:
            raise ValueError(f"imbalance_factor must lie in (0, 1], got {self.imbalance_factor}")
        if not 0.0 <= self.corruption_fraction < 1.0:
            raise ValueError(f"corruption_fraction must lie in [0, 1), got {self.corruption_fraction}")
        if self.n_train < self.n_classes:
            raise ValueError("n_train must cover at least one example per class")
        if self.covariance_scale <= 0 or self.mean_radius <= 0:
            raise ValueError("covariance_scale and mean_radius must be positive")


@dataclass(frozen=True)
class SyntheticTask:
    params: TaskParams
    means: np.ndarray  # (n_classes, dim)
    features: np.ndarray  # (n_total, dim)
    truth: np.ndarray  # (n_total,)
    splits: dict  # split name -> index array
    corrupted_mask: np.ndarray  # (n_total,) bool
    seed: int

    def __post_init__(self):
        self.validate()
        for arr in (self.means, self.features, self.truth, self.corrupted_mask, *self.splits.values()):
            arr.flags.writeable = False

    @property
    def n_classes(self) -> int:
        return self.params.n_classes

    @property
    def dim(self) -> int:
        return self.params.dim

    @property
    def n_train(self) -> int:
        return len(self.splits["train"])

    def validate(self) -> None:
        c, d = self.params.n_classes, self.params.dim
        if self.means.shape != (c, d):
            raise InvariantError(f"means must be ({c}, {d}), got {self.means.shape}")
        n_total = self.features.shape[0]
        if self.features.shape != (n_total, d) or self.truth.shape != (n_total,):
            raise InvariantError("features and truth must align")
        if set(self.splits) != set(SPLITS):
            raise InvariantError(f"splits must be exactly {SPLITS}")
        all_idx = np.concatenate([self.splits[s] for s in SPLITS])
        if len(np.unique(all_idx)) != len(all_idx) or len(all_idx) != n_total:
            raise InvariantError("splits must be disjoint and cover all examples")
        test_truth = self.truth[self.splits["test"]]
        counts = np.bincount(test_truth, minlength=c)
        if len(set(counts.tolist())) != 1:
            raise InvariantError("test split must be class-balanced")
        if self.corrupted_mask.shape != (n_total,):
            raise InvariantError("corrupted_mask must cover all examples")
        train_mask = np.zeros(n_total, dtype=bool)
        train_mask[self.splits["train"]] = True
        if np.any(self.corrupted_mask & ~train_mask):
            raise InvariantError("only training examples may be corrupted")
        want = round_half_away(self.params.corruption_fraction * self.n_train)
        if int(self.corrupted_mask.sum()) != want:
            raise InvariantError(f"corrupted_mask must mark exactly {want} examples")


def train_class_sizes(n_train: int, n_classes: int, imbalance_factor: float) -> np.ndarray:
    """Exponential long-tail profile summing exactly to n_train, class 0
    largest; the rounding residue lands on the head classes."""
    exponents = np.arange(n_classes) / (n_classes - 1)
    profile = imbalance_factor**exponents
    n_max = n_train / profile.sum()
    sizes = np.array([round_half_away(n_max * p) for p in profile], dtype=np.int64)
    sizes = np.maximum(sizes, 1)
    shift = n_train - int(sizes.sum())
    step = 1 if shift > 0 else -1
    i = 0
    while shift != 0:
        if sizes[i % n_classes] + step >= 1:
            sizes[i % n_classes] += step
            shift -= step
        i += 1
    return sizes


def _draw_means(rng: np.random.Generator, params: TaskParams) -> np.ndarray:
    for _ in range(_MEAN_DRAW_ATTEMPTS):
        raw = rng.normal(size=(params.n_classes, params.dim))
        means = raw * (params.mean_radius / np.linalg.norm(raw, axis=1, keepdims=True))
        gaps = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=2)
        np.fill_diagonal(gaps, np.inf)
        if gaps.min() >= params.min_separation:
            return means
    raise ValueError(
        f"could not place {params.n_classes} class means at least {params.min_separation} apart "
        f"on a radius-{params.mean_radius} sphere after {_MEAN_DRAW_ATTEMPTS} attempts"
    )


def generate(params: TaskParams, seed: int) -> SyntheticTask:
    """Sample a task: spherical class means, Gaussian features, optional
    long-tail train sizes, optional train-time feature corruption."""
    rng = np.random.default_rng(seed)
    means = _draw_means(rng, params)
    std = float(np.sqrt(params.covariance_scale))

    sizes = train_class_sizes(params.n_train, params.n_classes, params.imbalance_factor)
    train_labels = np.repeat(np.arange(params.n_classes), sizes)
    train_feats = means[train_labels] + std * rng.normal(size=(params.n_train, params.dim))
    order = rng.permutation(params.n_train)
    train_labels = train_labels[order]
    train_feats = train_feats[order]

    n_corrupt = round_half_away(params.corruption_fraction * params.n_train)
    corrupt_rows = rng.choice(params.n_train, size=n_corrupt, replace=False) if n_corrupt else np.array([], dtype=np.int64)
    if n_corrupt:
        train_feats[corrupt_rows] += params.corruption_noise_scale * rng.normal(size=(n_corrupt, params.dim))

    def balanced_block(per_class: int) -> tuple[np.ndarray, np.ndarray]:
        labels = np.repeat(np.arange(params.n_classes), per_class)
        feats = means[labels] + std * rng.normal(size=(labels.shape[0], params.dim))
        return feats, labels

    val_feats, val_labels = balanced_block(params.n_val_per_class)
    test_feats, test_labels = balanced_block(params.n_test_per_class)

    features = np.vstack([train_feats, val_feats, test_feats])
    truth = np.concatenate([train_labels, val_labels, test_labels])
    n_val = val_labels.shape[0]
    splits = {
        "train": np.arange(params.n_train),
        "validation": np.arange(params.n_train, params.n_train + n_val),
        "test": np.arange(params.n_train + n_val, truth.shape[0]),
    }
    mask = np.zeros(truth.shape[0], dtype=bool)
    mask[corrupt_rows] = True
    return SyntheticTask(
        params=params, means=means, features=features, truth=truth, splits=splits, corrupted_mask=mask, seed=seed
    )


def train_toy(
    task: SyntheticTask,
    pool: LabelPool,
    cfg: ToyTrainerConfig,
    subset: np.ndarray | None = None,
) -> TrajectoryLog:
    """Fit the toy model on the (optionally subset) training split under the
    pool's labels and log softmax outputs for the FULL training split after
    every epoch. Scoring needs rows for unselected examples too."""
    if pool.n_examples != task.n_train:
        raise InvariantError(f"pool covers {pool.n_examples} examples, train split has {task.n_train}")
    if pool.n_classes != task.n_classes:
        raise InvariantError(f"pool has {pool.n_classes} classes, task has {task.n_classes}")
    train_feats = task.features[task.splits["train"]]
    if subset is None:
        subset = np.arange(task.n_train)
    else:
        subset = np.asarray(subset, dtype=np.int64)
        if subset.size == 0:
            raise ValueError("training subset is empty")
        if subset.min() < 0 or subset.max() >= task.n_train:
            raise ValueError("subset indexes outside the training split")

    snapshots = []

    def snapshot(_epoch: int, model: SoftmaxModel) -> None:
        snapshots.append(model.probabilities(train_feats))

    sgd_fit(train_feats[subset], pool.labels[subset], task.n_classes, cfg, on_epoch=snapshot)
    return TrajectoryLog(
        probs=np.stack(snapshots, axis=1),
        epoch_ids=np.arange(1, cfg.epochs + 1),
        source_tag=f"toy-sgd seed={cfg.seed} subset={subset.shape[0]}/{task.n_train}",
    )


def fit_on_subset(task: SyntheticTask, pool: LabelPool, cfg: ToyTrainerConfig, subset=None) -> SoftmaxModel:
    """Train without trajectory logging, for coreset evaluation runs."""
    if pool.n_examples != task.n_train or pool.n_classes != task.n_classes:
        raise InvariantError("pool does not match the task's training split")
    train_feats = task.features[task.splits["train"]]
    if subset is None:
        subset = np.arange(task.n_train)
    else:
        subset = np.asarray(subset, dtype=np.int64)
        if subset.size == 0:
            raise ValueError("training subset is empty")
    return sgd_fit(train_feats[subset], pool.labels[subset], task.n_classes, cfg)


def evaluate(task: SyntheticTask, model: SoftmaxModel, split: str) -> tuple[float, float]:
    """(accuracy, balanced accuracy) of the model on a split, in percent.

    Balanced accuracy averages per-class recall over the classes present.
    """
    if split not in SPLITS:
        raise ValueError(f"unknown split {split!r}, expected one of {SPLITS}")
    idx = task.splits[split]
    y = task.truth[idx]
    preds = model.predict(task.features[idx])
    acc = 100.0 * float((preds == y).mean())
    recalls = [float((preds[y == c] == c).mean()) for c in np.unique(y)]
    return acc, 100.0 * float(np.mean(recalls))


# --- task directory serialization -------------------------------------------


def _write_matrix(path: Path, rows: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in np.atleast_2d(rows):
            writer.writerow([repr(float(v)) for v in row])


def _read_matrix(path: Path) -> np.ndarray:
    with open(path, newline="") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh)])


def save_task(task: SyntheticTask, out_dir: str | Path) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_matrix(out / "features.csv", task.features)
    _write_matrix(out / "means.csv", task.means)
    (out / "truth.csv").write_text("\n".join(str(int(v)) for v in task.truth) + "\n")
    with open(out / "splits.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["example_id", "split"])
        for name in SPLITS:
            for idx in task.splits[name]:
                writer.writerow([int(idx), name])
    with open(out / "mask.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["example_id", "corrupted"])
        for i, flag in enumerate(task.corrupted_mask):
            writer.writerow([i, int(flag)])
    lines = [f"seed={task.seed}"]
    for key, value in vars(task.params).items():
        lines.append(f"{key}={repr(value) if isinstance(value, float) else value}")
    (out / "spec.txt").write_text("\n".join(lines) + "\n")


def load_task(task_dir: str | Path) -> SyntheticTask:
    src = Path(task_dir)
    kv = {}
    for line in (src / "spec.txt").read_text().splitlines():
        key, value = line.split("=", 1)
        kv[key] = value
    seed = int(kv.pop("seed"))
    fields_by_name = {f.name: f.type for f in TaskParams.__dataclass_fields__.values()}
    typed = {}
    for key, value in kv.items():
        typed[key] = int(value) if fields_by_name[key] == "int" else float(value)
    params = TaskParams(**typed)

    features = _read_matrix(src / "features.csv")
    means = _read_matrix(src / "means.csv")
    truth = np.array([int(v) for v in (src / "truth.csv").read_text().split()], dtype=np.int64)
    splits: dict[str, list[int]] = {name: [] for name in SPLITS}
    with open(src / "splits.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            splits[row[1]].append(int(row[0]))
    mask = np.zeros(truth.shape[0], dtype=bool)
    with open(src / "mask.csv", newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for row in reader:
            mask[int(row[0])] = bool(int(row[1]))
    return SyntheticTask(
        params=params,
        means=means,
        features=features,
        truth=truth,
        splits={k: np.array(v, dtype=np.int64) for k, v in splits.items()},
        corrupted_mask=mask,
        seed=seed,
    )
