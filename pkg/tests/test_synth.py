import numpy as np
import pytest

from pseudoprune.softmax import SoftmaxModel, ToyTrainerConfig, loss_and_grad, sgd_fit
from pseudoprune.synth import (
    SyntheticTask,
    TaskParams,
    evaluate,
    fit_on_subset,
    generate,
    load_task,
    save_task,
    train_class_sizes,
    train_toy,
)
from pseudoprune.trajectory import InvariantError, LabelPool


def truth_pool(task):
    y = task.truth[task.splits["train"]]
    return LabelPool(labels=y, is_ground_truth=np.ones(len(y), dtype=bool), n_classes=task.n_classes, ground_truth=y)


def small_task(seed=0, **overrides):
    defaults = dict(n_classes=3, dim=4, n_train=240, n_val_per_class=20, n_test_per_class=40)
    defaults.update(overrides)
    return generate(TaskParams(**defaults), seed=seed)


# --- softmax core -------------------------------------------------------------


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(0)
    eps = 1e-6
    for _ in range(20):
        n, c, d = 5, 3, 4
        x = rng.normal(size=(n, d))
        y = rng.integers(0, c, size=n)
        w = rng.normal(size=(c, d))
        b = rng.normal(size=c)
        l2 = float(rng.uniform(0, 0.1))
        _, grad_w, grad_b = loss_and_grad(w, b, x, y, l2)

        num_w = np.zeros_like(w)
        for i in range(c):
            for k in range(d):
                up, down = w.copy(), w.copy()
                up[i, k] += eps
                down[i, k] -= eps
                num_w[i, k] = (loss_and_grad(up, b, x, y, l2)[0] - loss_and_grad(down, b, x, y, l2)[0]) / (2 * eps)
        num_b = np.zeros_like(b)
        for i in range(c):
            up, down = b.copy(), b.copy()
            up[i] += eps
            down[i] -= eps
            num_b[i] = (loss_and_grad(w, up, x, y, l2)[0] - loss_and_grad(w, down, x, y, l2)[0]) / (2 * eps)

        rel_w = np.linalg.norm(grad_w - num_w) / max(np.linalg.norm(num_w), 1e-12)
        rel_b = np.linalg.norm(grad_b - num_b) / max(np.linalg.norm(num_b), 1e-12)
        assert rel_w < 1e-5
        assert rel_b < 1e-5


def test_full_batch_loss_decreases_monotonically():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(30, 4))
    y = rng.integers(0, 3, size=30)
    losses = []

    def track(_epoch, model):
        losses.append(loss_and_grad(model.weights, model.bias, x, y, 0.0)[0])

    cfg = ToyTrainerConfig(epochs=50, learning_rate=1e-3, batch_size=30, l2=0.0, seed=0)
    sgd_fit(x, y, 3, cfg, on_epoch=track)
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))
    assert losses[-1] < losses[0]


def test_probabilities_normalized():
    rng = np.random.default_rng(2)
    model = SoftmaxModel(weights=rng.normal(size=(4, 6)) * 5, bias=rng.normal(size=4))
    probs = model.probabilities(rng.normal(size=(100, 6)) * 10)
    assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-12
    assert probs.min() >= 0.0


def test_trainer_config_validation():
    with pytest.raises(ValueError):
        ToyTrainerConfig(epochs=0)
    with pytest.raises(ValueError):
        ToyTrainerConfig(learning_rate=-0.1)
    with pytest.raises(ValueError):
        ToyTrainerConfig(batch_size=0)
    ToyTrainerConfig(learning_rate=0.0)  # frozen model is allowed


def test_sgd_rejects_bad_labels():
    with pytest.raises(ValueError):
        sgd_fit(np.zeros((3, 2)), np.array([0, 1, 5]), 3, ToyTrainerConfig(epochs=1))


# --- generate -------------------------------------------------------------------


def test_train_class_sizes_balanced():
    sizes = train_class_sizes(5000, 10, 1.0)
    assert sizes.sum() == 5000
    assert sizes.max() - sizes.min() <= 1


def test_train_class_sizes_longtail_ratio():
    sizes = train_class_sizes(5000, 10, 0.1)
    assert sizes.sum() == 5000
    assert sizes[0] == sizes.max()
    assert np.all(np.diff(sizes) <= 0)
    assert 0.08 <= sizes[-1] / sizes[0] <= 0.12


def test_generate_balanced_clean():
    task = small_task()
    counts = np.bincount(task.truth[task.splits["train"]], minlength=3)
    assert counts.max() - counts.min() <= 1
    assert task.corrupted_mask.sum() == 0


def test_generate_corruption_cardinality():
    task = small_task(corruption_fraction=0.3)
    assert int(task.corrupted_mask.sum()) == 72  # round(0.3 * 240)
    train_set = set(task.splits["train"].tolist())
    assert set(np.flatnonzero(task.corrupted_mask).tolist()) <= train_set


def test_generate_deterministic():
    a = small_task(seed=5)
    b = small_task(seed=5)
    c = small_task(seed=6)
    assert np.array_equal(a.features, b.features)
    assert np.array_equal(a.truth, b.truth)
    assert not np.array_equal(a.features, c.features)


def test_generate_corrupted_examples_sit_farther_out():
    task = small_task(seed=3, n_train=600, corruption_fraction=0.3, corruption_noise_scale=4.0)
    train = task.splits["train"]
    dists = np.linalg.norm(task.features[train] - task.means[task.truth[train]], axis=1)
    corrupted = task.corrupted_mask[train]
    assert dists[corrupted].mean() > dists[~corrupted].mean() + 1.0


def test_generate_separation_failure():
    with pytest.raises(ValueError):
        generate(TaskParams(n_classes=40, dim=3, n_train=80, mean_radius=0.1, min_separation=5.0), seed=0)


def test_generate_param_validation():
    with pytest.raises(ValueError):
        TaskParams(n_classes=1)
    with pytest.raises(ValueError):
        TaskParams(imbalance_factor=0.0)
    with pytest.raises(ValueError):
        TaskParams(corruption_fraction=1.0)


# --- train_toy --------------------------------------------------------------------


def test_train_toy_reaches_high_accuracy_when_separable():
    task = small_task(n_classes=2, dim=4, n_train=200, mean_radius=5.0, covariance_scale=0.25)
    pool = truth_pool(task)
    log = train_toy(task, pool, ToyTrainerConfig(epochs=50, learning_rate=0.5, batch_size=32, seed=0))
    final_preds = log.probs[:, -1, :].argmax(axis=1)
    assert (final_preds == pool.labels).mean() >= 0.99


def test_train_toy_zero_learning_rate_freezes_model():
    task = small_task()
    log = train_toy(task, truth_pool(task), ToyTrainerConfig(epochs=4, learning_rate=0.0, seed=1))
    for t in range(1, 4):
        assert np.array_equal(log.probs[:, t, :], log.probs[:, 0, :])


def test_train_toy_deterministic():
    task = small_task()
    cfg = ToyTrainerConfig(epochs=5, seed=9)
    a = train_toy(task, truth_pool(task), cfg)
    b = train_toy(task, truth_pool(task), cfg)
    assert a.probs.tobytes() == b.probs.tobytes()


def test_train_toy_logs_all_examples_even_with_subset():
    task = small_task()
    log = train_toy(task, truth_pool(task), ToyTrainerConfig(epochs=3, seed=2), subset=np.arange(60))
    assert log.n_examples == task.n_train
    assert log.n_epochs == 3


def test_train_toy_rejects_bad_inputs():
    task = small_task()
    pool = truth_pool(task)
    with pytest.raises(ValueError):
        train_toy(task, pool, ToyTrainerConfig(epochs=1), subset=np.array([], dtype=np.int64))
    with pytest.raises(ValueError):
        train_toy(task, pool, ToyTrainerConfig(epochs=1), subset=np.array([task.n_train]))
    short = LabelPool(labels=[0, 1], is_ground_truth=[True, True], n_classes=3)
    with pytest.raises(InvariantError):
        train_toy(task, short, ToyTrainerConfig(epochs=1))


# --- evaluate ----------------------------------------------------------------------


def constant_classifier(task, cls=0):
    bias = np.zeros(task.n_classes)
    bias[cls] = 10.0
    return SoftmaxModel(weights=np.zeros((task.n_classes, task.dim)), bias=bias)


def test_evaluate_constant_classifier_on_balanced_test():
    task = small_task()
    acc, bal = evaluate(task, constant_classifier(task), "test")
    assert acc == pytest.approx(100.0 / 3)
    assert bal == pytest.approx(100.0 / 3)


def test_evaluate_majority_classifier_on_longtail():
    task = small_task(imbalance_factor=0.1, n_train=600, n_classes=3)
    sizes = np.bincount(task.truth[task.splits["train"]])
    majority = int(sizes.argmax())
    _, bal = evaluate(task, constant_classifier(task, majority), "test")
    assert bal == pytest.approx(100.0 / 3)


def test_evaluate_trained_model_beats_chance():
    task = small_task()
    model = fit_on_subset(task, truth_pool(task), ToyTrainerConfig(epochs=20, seed=0))
    acc, bal = evaluate(task, model, "test")
    assert acc > 60.0
    assert bal > 60.0


def test_evaluate_unknown_split():
    task = small_task()
    with pytest.raises(ValueError):
        evaluate(task, constant_classifier(task), "holdout")


# --- task directory round trip -------------------------------------------------------


def test_task_directory_round_trip(tmp_path):
    task = small_task(seed=7, corruption_fraction=0.25, imbalance_factor=0.5)
    save_task(task, tmp_path / "task")
    back = load_task(tmp_path / "task")
    assert isinstance(back, SyntheticTask)
    assert back.params == task.params
    assert back.seed == task.seed
    assert np.array_equal(back.features, task.features)
    assert np.array_equal(back.means, task.means)
    assert np.array_equal(back.truth, task.truth)
    assert np.array_equal(back.corrupted_mask, task.corrupted_mask)
    for name in ("train", "validation", "test"):
        assert np.array_equal(back.splits[name], task.splits[name])
    expected = {"features.csv", "means.csv", "truth.csv", "splits.csv", "mask.csv", "spec.txt"}
    assert {p.name for p in (tmp_path / "task").iterdir()} == expected
