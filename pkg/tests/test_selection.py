import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pseudoprune.scoring import ScoreTable
from pseudoprune.selection import (
    BetaParams,
    beta_params,
    beta_select,
    bottom_k_select,
    coreset_size,
    double_end_select,
    estimate_mu_d,
    random_select,
    read_plan,
    round_half_away,
    top_k_select,
    write_plan,
)
from pseudoprune.trajectory import InvariantError


def make_table(n, seed=0, scores=None, pred_mean=None):
    rng = np.random.default_rng(seed)
    if scores is None:
        scores = rng.random(n)
    if pred_mean is None:
        pred_mean = rng.uniform(0.05, 0.95, size=n)
    return ScoreTable(metric="DUAL", scores=scores, pred_mean=pred_mean, params={})


# --- rounding and sizes -----------------------------------------------------


def test_round_half_away():
    assert round_half_away(2.5) == 3
    assert round_half_away(3.5) == 4
    assert round_half_away(2.49) == 2
    assert round_half_away(-2.5) == -3
    assert round_half_away(0.0) == 0


def test_coreset_size_grid():
    # half-away rounding: n=7, r=0.5 keeps 4 of 7
    assert coreset_size(7, 0.5) == 4
    assert coreset_size(101, 0.5) == 51
    assert coreset_size(10, 0.0) == 10
    assert coreset_size(1000, 0.9) == 100
    with pytest.raises(ValueError):
        coreset_size(10, 1.0)


# --- double-end --------------------------------------------------------------


def test_double_end_rank_arithmetic():
    scores = np.array([10.0, 1.0, 7.0, 3.0, 9.0, 2.0, 8.0, 5.0, 0.5, 6.0])
    table = make_table(10, scores=scores)
    plan = double_end_select(table, r=0.5, cutoff_ratio=0.2)
    # oracle: sort indices by score, drop 2 lowest ranks, keep the next 5
    expected = sorted(sorted(range(10), key=lambda i: scores[i])[2:7])
    assert plan.selected.tolist() == expected
    assert plan.method == "DOUBLE_END"
    assert plan.params["cutoff_ratio"] == 0.2


def test_double_end_zero_cutoff_equals_bottom_k():
    table = make_table(40, seed=3)
    for r in (0.1, 0.5, 0.8):
        de = double_end_select(table, r=r, cutoff_ratio=0.0)
        bk = bottom_k_select(table, r=r)
        assert np.array_equal(de.selected, bk.selected)


def test_double_end_r_zero_selects_all():
    table = make_table(12, seed=4)
    plan = double_end_select(table, r=0.0, cutoff_ratio=0.0)
    assert plan.selected.tolist() == list(range(12))


def test_double_end_start_clamped_when_both_ends_round_up():
    scores = np.arange(7, dtype=float)
    table = make_table(7, scores=scores)
    plan = double_end_select(table, r=0.5, cutoff_ratio=0.5)
    # keep=4 and round(0.5*7)=4 would overrun; start clamps to 3
    assert plan.selected.tolist() == [3, 4, 5, 6]


def test_double_end_cutoff_above_r_rejected():
    table = make_table(10)
    with pytest.raises(ValueError):
        double_end_select(table, r=0.3, cutoff_ratio=0.4)


# --- beta params -------------------------------------------------------------


def test_beta_params_hand_case():
    p = beta_params(r=0.5, mu_d=0.25, concentration=16.0, c_d=1.0)
    assert p.beta_r == pytest.approx(6.0, abs=1e-12)
    assert p.alpha_r == pytest.approx(10.0, abs=1e-12)
    assert p.mean == pytest.approx(0.625, abs=1e-12)


def test_beta_params_r_zero_mean_is_mu():
    for mu in (0.1, 0.5, 0.9):
        p = beta_params(r=0.0, mu_d=mu)
        assert p.beta_r == pytest.approx(16.0 * (1 - mu), abs=1e-12)
        assert p.mean == pytest.approx(mu, abs=1e-12)


def test_beta_params_r_one_clamped_mean_near_one():
    p = beta_params(r=1.0, mu_d=0.3)
    assert p.beta_r == 1e-6
    assert abs(p.mean - 1.0) < 1e-6


def test_beta_mean_law_on_grid():
    # mean matches 1-(1-mu)(1-r^c) to 1e-12 wherever the floor is inactive,
    # and is non-decreasing in r across the whole grid including r=1
    for mu in np.arange(0.1, 0.95, 0.1):
        for c_d in (1.0, 4.0, 11.0):
            means = []
            for r in np.arange(0.0, 1.05, 0.1):
                r = min(float(r), 1.0)
                p = beta_params(r, float(mu), 16.0, c_d)
                assert p.alpha_r + p.beta_r == pytest.approx(16.0, abs=1e-12)
                if r < 1.0:
                    want = 1.0 - (1.0 - mu) * (1.0 - r**c_d)
                    assert abs(p.mean - want) < 1e-12
                means.append(p.mean)
            assert all(b >= a - 1e-15 for a, b in zip(means, means[1:]))


def test_beta_params_domain_errors():
    with pytest.raises(ValueError):
        beta_params(r=-0.1, mu_d=0.5)
    with pytest.raises(ValueError):
        beta_params(r=1.1, mu_d=0.5)
    with pytest.raises(ValueError):
        beta_params(r=0.5, mu_d=0.0)
    with pytest.raises(ValueError):
        beta_params(r=0.5, mu_d=0.5, concentration=0.0)
    with pytest.raises(ValueError):
        beta_params(r=0.5, mu_d=0.5, c_d=0.5)


def test_beta_params_invariants_enforced():
    with pytest.raises(InvariantError):
        BetaParams(alpha_r=-1.0, beta_r=17.0, mu_d=0.5)
    with pytest.raises(InvariantError):
        BetaParams(alpha_r=8.0, beta_r=8.0, mu_d=1.0)


# --- mu_D estimation ---------------------------------------------------------


def test_estimate_mu_d_rank_then_average():
    table = make_table(4, scores=np.array([4.0, 3.0, 2.0, 1.0]), pred_mean=np.array([0.1, 0.2, 0.9, 0.9]))
    assert estimate_mu_d(table, q=0.5) == pytest.approx(0.15, abs=1e-12)


def test_estimate_mu_d_q_one_is_overall_mean():
    table = make_table(20, seed=9)
    assert estimate_mu_d(table, q=1.0) == pytest.approx(float(table.pred_mean.mean()), abs=1e-12)


def test_estimate_mu_d_constant_field():
    table = make_table(15, seed=2, pred_mean=np.full(15, 0.3))
    for q in (0.01, 0.4, 1.0):
        assert estimate_mu_d(table, q=q) == pytest.approx(0.3, abs=1e-12)


def test_estimate_mu_d_clamps_into_open_interval():
    table = make_table(5, pred_mean=np.ones(5))
    assert estimate_mu_d(table, q=1.0) == 1.0 - 1e-6
    with pytest.raises(ValueError):
        estimate_mu_d(table, q=0.0)


# --- cardinality and rank invariance ------------------------------------------


def test_all_selectors_return_exact_coreset_size():
    for n in (7, 10, 101, 1000):
        table = make_table(n, seed=n)
        for r in [round(0.1 * k, 1) for k in range(10)]:
            want = coreset_size(n, r)
            plans = [
                double_end_select(table, r, cutoff_ratio=0.0),
                double_end_select(table, r, cutoff_ratio=r / 2),
                beta_select(table, r, seed=1),
                top_k_select(table, r),
                bottom_k_select(table, r),
                random_select(n, r, seed=1),
            ]
            for plan in plans:
                assert plan.selected.shape == (want,)
                assert len(set(plan.selected.tolist())) == want


def test_rank_selectors_invariant_under_monotone_transforms():
    rng = np.random.default_rng(21)
    scores = rng.permutation(60).astype(float) * 0.1
    scores[10] = scores[40]  # plant a tie
    table = make_table(60, scores=scores)
    for transform in (lambda x: x**3 + x, np.exp):
        moved = make_table(60, scores=transform(scores), pred_mean=table.pred_mean)
        for r in (0.2, 0.5, 0.8):
            assert np.array_equal(
                double_end_select(table, r, 0.1).selected, double_end_select(moved, r, 0.1).selected
            )
            assert np.array_equal(top_k_select(table, r).selected, top_k_select(moved, r).selected)
            assert np.array_equal(bottom_k_select(table, r).selected, bottom_k_select(moved, r).selected)


# --- baselines ----------------------------------------------------------------


def test_top_k_keeps_highest():
    table = make_table(3, scores=np.array([1.0, 2.0, 3.0]))
    assert top_k_select(table, r=1 / 3).selected.tolist() == [1, 2]


def test_bottom_k_is_top_k_of_negated_scores():
    table = make_table(30, seed=6)
    negated = make_table(30, scores=-table.scores + 2.0, pred_mean=table.pred_mean)
    for r in (0.1, 0.4, 0.7):
        assert np.array_equal(bottom_k_select(table, r).selected, top_k_select(negated, r).selected)


def test_ties_break_by_ascending_index():
    table = make_table(6, scores=np.zeros(6))
    assert top_k_select(table, r=0.5).selected.tolist() == [0, 1, 2]
    assert bottom_k_select(table, r=0.5).selected.tolist() == [0, 1, 2]


def test_random_select_deterministic_per_seed():
    a = random_select(100, 0.5, seed=42)
    b = random_select(100, 0.5, seed=42)
    c = random_select(100, 0.5, seed=43)
    assert np.array_equal(a.selected, b.selected)
    assert not np.array_equal(a.selected, c.selected)


# --- beta sampling -------------------------------------------------------------


def test_beta_select_r_zero_selects_all():
    table = make_table(9, seed=1)
    plan = beta_select(table, r=0.0, seed=5)
    assert plan.selected.tolist() == list(range(9))


def test_beta_select_single_positive_weight_always_wins():
    table = make_table(3, scores=np.array([0.0, 5.0, 0.0]))
    for seed in range(30):
        plan = beta_select(table, r=2 / 3, seed=seed)
        assert plan.selected.tolist() == [1]


def test_beta_select_identical_examples_split_evenly():
    table = make_table(2, scores=np.array([1.0, 1.0]), pred_mean=np.array([0.4, 0.4]))
    hits = 0
    n_seeds = 4000
    for seed in range(n_seeds):
        hits += beta_select(table, r=0.5, seed=seed).selected[0] == 0
    # 3 sigma for a fair coin over 4000 draws is ~0.024
    assert abs(hits / n_seeds - 0.5) < 0.025


def test_beta_select_zero_weights_fall_back_to_uniform():
    table = make_table(10, scores=np.zeros(10))
    plan = beta_select(table, r=0.5, seed=7)
    assert plan.selected.shape == (5,)
    again = beta_select(table, r=0.5, seed=7)
    assert np.array_equal(plan.selected, again.selected)


def test_beta_select_rejects_negative_scores():
    table = ScoreTable(metric="AUM", scores=np.array([-0.5, 0.5]), pred_mean=np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        beta_select(table, r=0.5, seed=0)


def test_beta_select_records_fit_params():
    table = make_table(50, seed=8)
    plan = beta_select(table, r=0.4, c_d=4.0, q=0.1, seed=11)
    assert plan.params["c_d"] == 4.0
    assert plan.params["alpha_r"] + plan.params["beta_r"] == pytest.approx(16.0, abs=1e-12)
    assert 0.0 < plan.params["mu_d"] < 1.0


# --- plan serialization ----------------------------------------------------------


def test_plan_round_trip(tmp_path):
    table = make_table(25, seed=12)
    plan = beta_select(table, r=0.6, seed=3)
    path = tmp_path / "plan.txt"
    write_plan(plan, path)
    back = read_plan(path)
    assert back.method == plan.method
    assert back.pruning_ratio == plan.pruning_ratio
    assert back.n_examples == plan.n_examples
    assert np.array_equal(back.selected, plan.selected)
    assert back.params == plan.params
    assert path.read_text().startswith("# method=BETA")


def test_plan_validation():
    from pseudoprune.selection import SelectionPlan

    with pytest.raises(InvariantError):
        SelectionPlan(method="BETA", pruning_ratio=0.5, n_examples=10, selected=[1, 2])
    with pytest.raises(InvariantError):
        SelectionPlan(method="BETA", pruning_ratio=0.5, n_examples=10, selected=[1, 1, 2, 3, 4])
    with pytest.raises(InvariantError):
        SelectionPlan(method="NOPE", pruning_ratio=0.5, n_examples=4, selected=[0, 1])


@given(st.integers(1, 200), st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75, 0.9]), st.integers(0, 10_000))
@settings(max_examples=60, deadline=None)
def test_random_select_cardinality_property(n, r, seed):
    plan = random_select(n, r, seed)
    assert plan.selected.shape == (coreset_size(n, r),)
    assert len(np.unique(plan.selected)) == plan.selected.shape[0]
