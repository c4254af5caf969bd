"""Multinomial logistic regression trained by mini-batch SGD.

Small on purpose: the pruning pipeline only needs a fast deterministic
trainer whose per-epoch softmax outputs feed the trajectory log. Anything
heavier should produce TRJ1 files externally instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ToyTrainerConfig:
    epochs: int = 30
    learning_rate: float = 0.5
    batch_size: int = 64
    l2: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        # learning_rate 0 is allowed: it freezes the model, which is a
        # useful degenerate case for tests
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")


@dataclass
class SoftmaxModel:
    weights: np.ndarray  # (n_classes, dim)
    bias: np.ndarray  # (n_classes,)

    @property
    def n_classes(self) -> int:
        return self.weights.shape[0]

    def logits(self, features: np.ndarray) -> np.ndarray:
        return features @ self.weights.T + self.bias

    def probabilities(self, features: np.ndarray) -> np.ndarray:
        z = self.logits(features)
        z -= z.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.logits(features).argmax(axis=1)


def loss_and_grad(
    weights: np.ndarray,
    bias: np.ndarray,
    features: np.ndarray,
    labels: np.ndarray,
    l2: float = 0.0,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus (l2/2)||W||^2, with analytic gradients.

    The bias is not regularized.
    """
    n = features.shape[0]
    z = features @ weights.T + bias
    z_shift = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z_shift).sum(axis=1))
    log_probs = z_shift - log_norm[:, None]
    loss = -log_probs[np.arange(n), labels].mean() + 0.5 * l2 * float((weights**2).sum())

    probs = np.exp(log_probs)
    probs[np.arange(n), labels] -= 1.0
    probs /= n
    grad_w = probs.T @ features + l2 * weights
    grad_b = probs.sum(axis=0)
    return float(loss), grad_w, grad_b


def sgd_fit(
    features: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    cfg: ToyTrainerConfig,
    on_epoch=None,
) -> SoftmaxModel:
    """Train from zero-initialized weights; on_epoch(epoch_index, model) runs
    after each full pass so callers can snapshot predictions."""
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, dim = features.shape
    if labels.shape != (n,):
        raise ValueError("labels must align with features")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels must lie in [0, {n_classes})")

    model = SoftmaxModel(weights=np.zeros((n_classes, dim)), bias=np.zeros(n_classes))
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, grad_w, grad_b = loss_and_grad(model.weights, model.bias, features[batch], labels[batch], cfg.l2)
            model.weights -= cfg.learning_rate * grad_w
            model.bias -= cfg.learning_rate * grad_b
        if on_epoch is not None:
            on_epoch(epoch, model)
    return model
