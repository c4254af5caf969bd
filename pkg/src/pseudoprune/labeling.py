"""Pseudo-labelers and label-quality metrics.

Two ways to stretch a small labeled budget over a full training pool:

  self_train     confidence-threshold self-training on the toy softmax
                 model; class-anchored by the budget's true labels
  cluster_label  k-means on raw features, clusters mapped to classes by
                 the budget's majority vote; geometry-only apart from the
                 final vote

quality() measures a pool against ground truth with ACC, balanced ACC,
NMI (arithmetic normalization), ARI, and optionally Hungarian-matched ACC
for class-agnostic clusterings.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.metrics import adjusted_rand_score, normalized_mutual_info_score

from pseudoprune.selection import round_half_away
from pseudoprune.softmax import ToyTrainerConfig, sgd_fit
from pseudoprune.synth import SyntheticTask
from pseudoprune.trajectory import InvariantError, LabelPool

KMEANS_MAX_ITER = 100
KMEANS_TOL = 1e-6


@dataclass(frozen=True)
class LabelBudget:
    fraction: float
    seed: int
    n_examples: int
    labeled_indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.labeled_indices, dtype=np.int64)
        object.__setattr__(self, "labeled_indices", idx)
        if not 0.0 < self.fraction <= 1.0:
            raise InvariantError(f"budget fraction must lie in (0, 1], got {self.fraction}")
        want = round_half_away(self.fraction * self.n_examples)
        if idx.shape != (want,):
            raise InvariantError(f"budget must hold exactly {want} indices, got {idx.shape}")
        if want > 0 and (idx[0] < 0 or idx[-1] >= self.n_examples or np.any(np.diff(idx) <= 0)):
            raise InvariantError("budget indices must be sorted, unique, and in range")
        idx.flags.writeable = False

    def mask(self) -> np.ndarray:
        out = np.zeros(self.n_examples, dtype=bool)
        out[self.labeled_indices] = True
        return out


def draw_budget(n: int, fraction: float, seed: int) -> LabelBudget:
    """Uniform sample without replacement of round(fraction * n) indices."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    size = round_half_away(fraction * n)
    idx = np.sort(np.random.default_rng(seed).choice(n, size=size, replace=False))
    return LabelBudget(fraction=fraction, seed=seed, n_examples=n, labeled_indices=idx)


@dataclass(frozen=True)
class QualityReport:
    acc: float
    balanced_acc: float
    nmi: float
    ari: float
    class_histogram: np.ndarray
    hungarian: bool = False

    def __post_init__(self):
        hist = np.asarray(self.class_histogram, dtype=np.int64)
        object.__setattr__(self, "class_histogram", hist)
        if not 0.0 <= self.acc <= 100.0 or not 0.0 <= self.balanced_acc <= 100.0:
            raise InvariantError("accuracies must lie in [0, 100]")
        if not 0.0 <= self.nmi <= 1.0:
            raise InvariantError("nmi must lie in [0, 1]")
        if not -1.0 <= self.ari <= 1.0:
            raise InvariantError("ari must lie in [-1, 1]")
        if hist.min() < 0:
            raise InvariantError("histogram counts must be non-negative")
        hist.flags.writeable = False


def self_train(
    task: SyntheticTask,
    budget: LabelBudget,
    threshold: float = 0.95,
    rounds: int = 10,
    cfg: ToyTrainerConfig | None = None,
) -> LabelPool:
    """Confidence-threshold self-training anchored on the budget's labels.

    Each round fits the toy model on the currently labeled set and adopts
    argmax labels for unlabeled examples whose top probability clears the
    threshold. After the last round, every non-budget example takes the
    final model's argmax, so no example goes unlabeled. threshold=1.0 is
    allowed and simply never adopts between rounds.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must lie in (0, 1], got {threshold}")
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    if budget.n_examples != task.n_train:
        raise InvariantError("budget drawn for a different pool size")
    cfg = cfg or ToyTrainerConfig()

    feats = task.features[task.splits["train"]]
    truth = task.truth[task.splits["train"]]
    budget_mask = budget.mask()
    if np.unique(truth[budget_mask]).size < 2:
        raise ValueError("budget covers a single class; supervised anchoring is impossible")

    labels = np.zeros(task.n_train, dtype=np.int64)
    labels[budget_mask] = truth[budget_mask]
    known = budget_mask.copy()

    model = None
    for round_idx in range(rounds):
        model = sgd_fit(feats[known], labels[known], task.n_classes, cfg)
        if round_idx == rounds - 1:
            break
        open_idx = np.flatnonzero(~known)
        if open_idx.size == 0:
            break
        probs = model.probabilities(feats[open_idx])
        confident = probs.max(axis=1) >= threshold
        adopted = open_idx[confident]
        labels[adopted] = probs[confident].argmax(axis=1)
        known[adopted] = True

    final = labels.copy()
    final[~budget_mask] = model.predict(feats[~budget_mask])
    final[budget_mask] = truth[budget_mask]
    return LabelPool(labels=final, is_ground_truth=budget_mask, n_classes=task.n_classes, ground_truth=truth)


def _kmeans_pp_init(features: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = features.shape[0]
    centers = np.empty((k, features.shape[1]))
    centers[0] = features[rng.integers(n)]
    d2 = ((features - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total > 0:
            pick = rng.choice(n, p=d2 / total)
        else:
            pick = rng.integers(n)
        centers[i] = features[pick]
        d2 = np.minimum(d2, ((features - centers[i]) ** 2).sum(axis=1))
    return centers


def _lloyd(features: np.ndarray, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    for _ in range(KMEANS_MAX_ITER):
        dists = ((features[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = dists.argmin(axis=1)
        moved = 0.0
        new_centers = centers.copy()
        for c in range(centers.shape[0]):
            members = features[assign == c]
            if members.shape[0] > 0:
                new_centers[c] = members.mean(axis=0)
                moved = max(moved, float(np.linalg.norm(new_centers[c] - centers[c])))
        centers = new_centers
        if moved < KMEANS_TOL:
            break
    dists = ((features[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return dists.argmin(axis=1), centers


def cluster_label(
    features: np.ndarray,
    k: int,
    budget: LabelBudget,
    budget_truth: np.ndarray,
    seed: int,
) -> LabelPool:
    """k-means pseudo-labeler: cluster, then name clusters by the budget's
    majority vote; clusters no budget example landed in are named by
    Hungarian completion over the unused classes (centroid-to-class-center
    distance cost)."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] == 0:
        raise ValueError("features must be a non-empty matrix")
    if not np.isfinite(features).all():
        raise ValueError("features must be finite")
    if k < 2:
        raise ValueError(f"need k >= 2, got {k}")
    if budget.n_examples != features.shape[0]:
        raise InvariantError("budget drawn for a different pool size")
    budget_truth = np.asarray(budget_truth, dtype=np.int64)
    if budget_truth.shape != budget.labeled_indices.shape:
        raise ValueError("budget_truth must align with the budget's indices")

    rng = np.random.default_rng(seed)
    assign, centers = _lloyd(features, _kmeans_pp_init(features, k, rng))

    cluster_to_class = np.full(k, -1, dtype=np.int64)
    budget_clusters = assign[budget.labeled_indices]
    for c in range(k):
        votes = budget_truth[budget_clusters == c]
        if votes.size:
            counts = np.bincount(votes, minlength=k)
            cluster_to_class[c] = counts.argmax()  # argmax ties go to the lowest class

    unnamed = np.flatnonzero(cluster_to_class < 0)
    if unnamed.size:
        free_classes = np.setdiff1d(np.arange(k), cluster_to_class[cluster_to_class >= 0])
        class_centers = np.full((k, features.shape[1]), np.nan)
        for cls in free_classes:
            members = features[budget.labeled_indices[budget_truth == cls]]
            if members.shape[0]:
                class_centers[cls] = members.mean(axis=0)
        cost = np.empty((unnamed.size, free_classes.size))
        for i, c in enumerate(unnamed):
            for j, cls in enumerate(free_classes):
                if np.isnan(class_centers[cls]).any():
                    cost[i, j] = 1e12  # class unseen in the budget: no geometry to go on
                else:
                    cost[i, j] = float(np.linalg.norm(centers[c] - class_centers[cls]))
        rows, cols = linear_sum_assignment(cost)
        cluster_to_class[unnamed[rows]] = free_classes[cols]

    labels = cluster_to_class[assign]
    budget_mask = budget.mask()
    # anchor the budget: those labels are known exactly
    labels[budget.labeled_indices] = budget_truth
    return LabelPool(labels=labels, is_ground_truth=budget_mask, n_classes=k, ground_truth=None)


def hungarian_match(pred: np.ndarray, truth: np.ndarray, n_classes: int) -> np.ndarray:
    """Best one-to-one relabeling of pred maximizing agreement with truth."""
    confusion = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(confusion, (pred, truth), 1)
    rows, cols = linear_sum_assignment(confusion, maximize=True)
    mapping = np.arange(n_classes)
    mapping[rows] = cols
    return mapping[pred]


def quality(pool: LabelPool, truth: np.ndarray, hungarian: bool = False) -> QualityReport:
    """Score a pool against ground truth. hungarian=True first applies the
    agreement-maximizing one-to-one class permutation (for clusterings whose
    ids carry no class meaning)."""
    truth = np.asarray(truth, dtype=np.int64)
    if truth.shape != (pool.n_examples,):
        raise ValueError(f"truth length {truth.shape} does not match pool size {pool.n_examples}")
    pred = pool.labels
    if hungarian:
        pred = hungarian_match(pred, truth, pool.n_classes)
    acc = 100.0 * float((pred == truth).mean())
    recalls = [float((pred[truth == c] == c).mean()) for c in np.unique(truth)]
    balanced = 100.0 * float(np.mean(recalls))
    nmi = float(normalized_mutual_info_score(truth, pool.labels, average_method="arithmetic"))
    ari = float(adjusted_rand_score(truth, pool.labels))
    return QualityReport(
        acc=acc,
        balanced_acc=balanced,
        nmi=min(max(nmi, 0.0), 1.0),
        ari=min(max(ari, -1.0), 1.0),
        class_histogram=class_histogram(pool),
        hungarian=hungarian,
    )


def class_histogram(pool: LabelPool) -> np.ndarray:
    """Assigned-label counts per class; sums to the pool size."""
    return np.bincount(pool.labels, minlength=pool.n_classes)


# --- serialization ------------------------------------------------------------


def write_pool(pool: LabelPool, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if pool.ground_truth is None:
            writer.writerow(["example_id", "label", "is_ground_truth"])
            for i in range(pool.n_examples):
                writer.writerow([i, int(pool.labels[i]), int(pool.is_ground_truth[i])])
        else:
            writer.writerow(["example_id", "label", "is_ground_truth", "ground_truth"])
            for i in range(pool.n_examples):
                writer.writerow(
                    [i, int(pool.labels[i]), int(pool.is_ground_truth[i]), int(pool.ground_truth[i])]
                )


def read_pool(path: str | Path, n_classes: int) -> LabelPool:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:3] != ["example_id", "label", "is_ground_truth"]:
            raise ValueError(f"unexpected pool CSV header {header}")
        has_truth = len(header) == 4
        labels, flags, truths = [], [], []
        for row in reader:
            labels.append(int(row[1]))
            flags.append(bool(int(row[2])))
            if has_truth:
                truths.append(int(row[3]))
    return LabelPool(
        labels=np.array(labels, dtype=np.int64),
        is_ground_truth=np.array(flags, dtype=bool),
        n_classes=n_classes,
        ground_truth=np.array(truths, dtype=np.int64) if has_truth else None,
    )


def write_quality(report: QualityReport, text_path: str | Path, histogram_path: str | Path) -> None:
    lines = [
        f"acc={report.acc!r}",
        f"balanced_acc={report.balanced_acc!r}",
        f"nmi={report.nmi!r}",
        f"ari={report.ari!r}",
        f"hungarian={int(report.hungarian)}",
    ]
    Path(text_path).write_text("\n".join(lines) + "\n")
    with open(histogram_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "count"])
        for c, count in enumerate(report.class_histogram):
            writer.writerow([c, int(count)])
