"""Coreset selectors over a ScoreTable.

Two real strategies plus baselines:

  double_end_select  keep a contiguous middle interval of the score ranking,
                     discarding both the hardest and the easiest tails
  beta_select        weighted sampling without replacement, weights shaped
                     by a pruning-ratio-adaptive Beta density over pred_mean
                     times the difficulty score
  top_k / bottom_k / random   reference baselines

All selectors return exactly round(n * (1 - r)) indices (half away from
zero) and break score ties by ascending example index, so cross-method
comparisons always use equal budgets and a total order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from pseudoprune.scoring import ScoreTable
from pseudoprune.trajectory import InvariantError

METHODS = ("DOUBLE_END", "BETA", "TOP_K", "BOTTOM_K", "RANDOM")

BETA_FLOOR = 1e-6  # keeps the Beta density proper as r -> 1


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def coreset_size(n: int, r: float) -> int:
    """Number of examples kept at pruning ratio r."""
    if not 0.0 <= r < 1.0:
        raise ValueError(f"pruning ratio must lie in [0, 1), got {r}")
    return round_half_away(n * (1.0 - r))


@dataclass(frozen=True)
class SelectionPlan:
    method: str
    pruning_ratio: float
    n_examples: int
    selected: np.ndarray
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        selected = np.asarray(self.selected, dtype=np.int64)
        object.__setattr__(self, "selected", selected)
        self.validate()
        selected.flags.writeable = False

    def validate(self) -> None:
        if self.method not in METHODS:
            raise InvariantError(f"unknown method {self.method!r}, expected one of {METHODS}")
        if not 0.0 <= self.pruning_ratio < 1.0:
            raise InvariantError(f"pruning ratio must lie in [0, 1), got {self.pruning_ratio}")
        want = coreset_size(self.n_examples, self.pruning_ratio)
        if self.selected.shape != (want,):
            raise InvariantError(f"plan must select exactly {want} examples, got {self.selected.shape}")
        if want > 0:
            if self.selected[0] < 0 or self.selected[-1] >= self.n_examples:
                raise InvariantError("selected indices out of range")
            if np.any(np.diff(self.selected) <= 0):
                raise InvariantError("selected indices must be sorted and unique")


@dataclass(frozen=True)
class BetaParams:
    """Beta(alpha_r, beta_r) shape pair; alpha_r + beta_r equals the fixed
    concentration C, and the mean alpha_r / C tracks the pruning ratio."""

    alpha_r: float
    beta_r: float
    mu_d: float

    def __post_init__(self):
        if not (self.alpha_r > 0 and self.beta_r > 0):
            raise InvariantError("Beta shape parameters must be positive")
        if not 0.0 < self.mu_d < 1.0:
            raise InvariantError("mu_d must lie in (0, 1)")

    @property
    def mean(self) -> float:
        return self.alpha_r / (self.alpha_r + self.beta_r)

    def log_pdf(self, x: np.ndarray) -> np.ndarray:
        a, b = self.alpha_r, self.beta_r
        log_norm = math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)
        return (a - 1.0) * np.log(x) + (b - 1.0) * np.log1p(-x) - log_norm


def beta_params(r: float, mu_d: float, concentration: float = 16.0, c_d: float = 1.0) -> BetaParams:
    """beta_r = C (1 - mu_d) (1 - r^c_d), alpha_r the complement to C.

    The mean alpha_r / C moves from mu_d at r=0 toward 1 as r -> 1; beta_r
    is floored at BETA_FLOOR because it hits 0 exactly at r=1.
    """
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"r must lie in [0, 1], got {r}")
    if not 0.0 < mu_d < 1.0:
        raise ValueError(f"mu_d must lie in (0, 1), got {mu_d}")
    if concentration <= 0:
        raise ValueError(f"concentration must be positive, got {concentration}")
    if c_d < 1.0:
        raise ValueError(f"c_d must be >= 1, got {c_d}")
    beta_r = max(concentration * (1.0 - mu_d) * (1.0 - r**c_d), BETA_FLOOR)
    return BetaParams(alpha_r=concentration - beta_r, beta_r=beta_r, mu_d=mu_d)


def estimate_mu_d(table: ScoreTable, q: float = 0.01) -> float:
    """Mean pred_mean over the top ceil(q*n) examples by score."""
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    n = table.n_examples
    count = min(max(math.ceil(q * n - 1e-9), 1), n)
    order = np.lexsort((np.arange(n), -table.scores))
    mu = float(table.pred_mean[order[:count]].mean())
    return float(np.clip(mu, 1e-6, 1.0 - 1e-6))


def _ascending_rank(table: ScoreTable) -> np.ndarray:
    return np.lexsort((np.arange(table.n_examples), table.scores))


def _plan(method: str, r: float, n: int, selected: np.ndarray, params: dict) -> SelectionPlan:
    return SelectionPlan(
        method=method,
        pruning_ratio=r,
        n_examples=n,
        selected=np.sort(np.asarray(selected, dtype=np.int64)),
        params=params,
    )


def double_end_select(table: ScoreTable, r: float, cutoff_ratio: float) -> SelectionPlan:
    """Keep the middle rank interval: drop the cutoff_ratio*n lowest-score
    examples and whatever the budget forces off the high end."""
    if not 0.0 <= cutoff_ratio <= r:
        raise ValueError(f"need 0 <= cutoff_ratio <= r, got cutoff_ratio={cutoff_ratio}, r={r}")
    n = table.n_examples
    keep = coreset_size(n, r)
    start = min(round_half_away(cutoff_ratio * n), n - keep)
    order = _ascending_rank(table)
    return _plan("DOUBLE_END", r, n, order[start : start + keep], {"cutoff_ratio": cutoff_ratio})


def top_k_select(table: ScoreTable, r: float) -> SelectionPlan:
    n = table.n_examples
    keep = coreset_size(n, r)
    # not the reverse of the ascending rank: ties must still break by
    # ascending index
    order = np.lexsort((np.arange(n), -table.scores))
    return _plan("TOP_K", r, n, order[:keep], {})


def bottom_k_select(table: ScoreTable, r: float) -> SelectionPlan:
    n = table.n_examples
    keep = coreset_size(n, r)
    return _plan("BOTTOM_K", r, n, _ascending_rank(table)[:keep], {})


def random_select(n: int, r: float, seed: int) -> SelectionPlan:
    keep = coreset_size(n, r)
    if keep == n:
        selected = np.arange(n)
    else:
        selected = np.random.default_rng(seed).choice(n, size=keep, replace=False)
    return _plan("RANDOM", r, n, selected, {"seed": seed})


def beta_select(
    table: ScoreTable,
    r: float,
    concentration: float = 16.0,
    c_d: float = 1.0,
    q: float = 0.01,
    seed: int = 0,
) -> SelectionPlan:
    """Sample the coreset without replacement, weighting each example by
    the Beta density at its pred_mean times its score.

    Draws are iterative with removal (exact weighted sampling). Examples
    with zero weight are only used to fill up the budget, uniformly.
    """
    if table.scores.min() < 0:
        raise ValueError("beta_select needs non-negative scores")
    n = table.n_examples
    keep = coreset_size(n, r)
    mu_d = estimate_mu_d(table, q)
    shape = beta_params(r if r < 1.0 else 1.0, mu_d, concentration, c_d)
    params = {
        "concentration": concentration,
        "c_d": c_d,
        "q": q,
        "seed": seed,
        "mu_d": mu_d,
        "alpha_r": shape.alpha_r,
        "beta_r": shape.beta_r,
    }
    if keep == n:
        return _plan("BETA", r, n, np.arange(n), params)

    x = np.clip(table.pred_mean, 1e-9, 1.0 - 1e-9)
    weights = np.exp(shape.log_pdf(x)) * table.scores

    rng = np.random.default_rng(seed)
    remaining = weights.astype(np.float64).copy()
    picked = np.empty(keep, dtype=np.int64)
    count = 0
    for _ in range(keep):
        total = remaining.sum()
        if total <= 0.0:
            break
        choice = rng.choice(n, p=remaining / total)
        picked[count] = choice
        count += 1
        remaining[choice] = 0.0
    if count < keep:
        mask = np.ones(n, dtype=bool)
        mask[picked[:count]] = False
        filler = rng.choice(np.flatnonzero(mask), size=keep - count, replace=False)
        picked[count:] = filler
    return _plan("BETA", r, n, picked, params)


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


def write_plan(plan: SelectionPlan, path: str | Path) -> None:
    """One selected index per line under a comment header with the knobs."""
    parts = [f"method={plan.method}", f"r={_format_value(plan.pruning_ratio)}", f"n_examples={plan.n_examples}"]
    parts += [f"{k}={_format_value(v)}" for k, v in plan.params.items()]
    lines = ["# " + " ".join(parts)]
    lines += [str(i) for i in plan.selected]
    Path(path).write_text("\n".join(lines) + "\n")


def read_plan(path: str | Path) -> SelectionPlan:
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# "):
        raise ValueError(f"missing plan header in {path}")
    meta = dict(item.split("=", 1) for item in lines[0][2:].split())
    method = meta.pop("method")
    r = float(meta.pop("r"))
    n = int(meta.pop("n_examples"))
    params = {k: _parse_value(v) for k, v in meta.items()}
    selected = np.array([int(line) for line in lines[1:] if line.strip()], dtype=np.int64)
    return SelectionPlan(method=method, pruning_ratio=r, n_examples=n, selected=selected, params=params)
