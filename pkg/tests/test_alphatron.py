import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qpr.alphatron import (
    C1,
    C2,
    REJECT,
    QKAModel,
    classify,
    default_iterations,
    empirical_risk,
    kernel_ridge_solve,
    predict,
    smooth_grid,
    success_rate,
    train_qka,
)
from qpr.errors import InvalidThresholdError, SizeMismatchError, TrainingDivergenceError
from qpr.kernel import build_kernel_matrix
from qpr.statevec import StateVector


def random_problem(N, seed, n=4):
    rng = np.random.default_rng(seed)
    K = build_kernel_matrix([StateVector.random(n, int(s)) for s in rng.integers(0, 10**6, N)]).entries
    return K, rng.uniform(0, 1, N)


def test_default_iterations():
    assert default_iterations(1) == 1
    assert default_iterations(15) == 3
    assert default_iterations(40) == 5
    assert default_iterations(60) == 6


def test_single_point_hand_iteration():
    m = train_qka(np.array([[1.0]]), [0.6], lam=1.0, T=2)
    # alpha^1 = 0, alpha^2 = 0.6 reproduces the label, so r = 2
    assert m.selected_iteration == 2
    np.testing.assert_allclose(m.alpha, [0.6])
    assert predict(m, [1.0]) == pytest.approx(0.6)
    np.testing.assert_allclose(m.per_iteration_risk, [0.36, 0.0])


def test_zero_labels_are_a_fixed_point():
    K, _ = random_problem(6, 1)
    m = train_qka(K, np.zeros(6), T=5)
    assert np.all(m.alpha == 0) and np.all(m.per_iteration_risk == 0)
    assert m.selected_iteration == 1


def test_selection_never_worse_than_first_iterate():
    K, b = random_problem(8, 2)
    m = train_qka(K, b)
    assert m.T == default_iterations(8)
    assert m.per_iteration_risk[m.selected_iteration - 1] <= m.per_iteration_risk[0]
    assert m.per_iteration_risk[m.selected_iteration - 1] == m.per_iteration_risk.min()


def test_validation_rows_drive_selection():
    K, b = random_problem(6, 3)
    Kv, yv = K[:2], np.array([0.0, 0.0])
    m = train_qka(K, b, T=6, K_val=Kv, y_val=yv)
    # zero targets are matched best by the untouched first iterate
    assert m.selected_iteration == 1
    with pytest.raises(SizeMismatchError):
        train_qka(K, b, K_val=K[:2, :3], y_val=yv)


def test_input_validation():
    with pytest.raises(SizeMismatchError):
        train_qka(np.eye(3), [0.1, 0.2])
    with pytest.raises(ValueError):
        train_qka(np.eye(2), [0.1, 0.2], T=0)


def test_divergence_is_reported():
    with pytest.raises(TrainingDivergenceError), np.errstate(over="ignore", invalid="ignore"):
        train_qka(np.array([[1e300, 0], [0, 1e300]]), [1.0, 1.0], lam=1e10, T=5)


def test_predict_examples():
    m = QKAModel(np.zeros(3), 1, 1.0, 1, np.zeros((3, 0)), np.zeros(1), np.zeros(1))
    assert predict(m, [0.3, 0.2, 0.9]) == 0.0
    m = QKAModel(np.array([0.0, 0.7, 0.0]), 1, 1.0, 1, np.zeros((3, 0)), np.zeros(1), np.zeros(1))
    assert predict(m, [0.0, 1.0, 0.0]) == pytest.approx(0.7)
    np.testing.assert_allclose(predict(m, np.eye(3)), [0, 0.7, 0])
    with pytest.raises(SizeMismatchError):
        predict(m, [1.0, 0.0])


def test_self_prediction_gap_shrinks():
    # a near-identity kernel is well conditioned, so the update is a contraction
    rng = np.random.default_rng(4)
    states = [StateVector.random(8, s) for s in range(5)]
    K = build_kernel_matrix(states).entries
    b = rng.uniform(0.2, 0.8, 5)
    m = train_qka(K, b, T=10)
    gaps = np.sqrt(m.training_risk)
    assert np.all(np.diff(gaps) < 0)


def test_risk_examples():
    y = np.array([0.2, 0.4, 0.9])
    assert empirical_risk(y, y) == 0
    assert empirical_risk(y + 0.1, y) == pytest.approx(0.01)
    assert empirical_risk(np.zeros(4), np.full(4, 0.5)) == 0.25
    with pytest.raises(SizeMismatchError):
        empirical_risk([1, 2], [1])


def test_classify_examples():
    assert classify(0.9) == C1
    assert classify(0.1) == C2
    assert classify(0.5, 0.6, 0.4) == REJECT
    # with t1 = t2 the boundary value itself is neither above nor below
    assert classify(0.5) == REJECT
    with pytest.raises(InvalidThresholdError):
        classify(0.5, 0.4, 0.6)


def test_success_rate_examples():
    assert success_rate("abc", "abc") == 1.0
    truth = [C1] * 4096
    pred = [C2] * 61 + [C1] * 4035
    assert f"{success_rate(pred, truth):.8f}".startswith("0.98510")
    truth, pred = [C1] * 900, [C2] * 59 + [C1] * 841
    assert f"{success_rate(pred, truth):.8f}".startswith("0.93444")
    with pytest.raises(ValueError):
        success_rate([], [])
    with pytest.raises(SizeMismatchError):
        success_rate([C1], [])


def test_success_rates_agree_with_reported_accuracies():
    # the two experiments report v_s = 0.985 and 0.934 at these error counts
    assert round(1 - 61 / 4096, 3) == 0.985
    assert round(1 - 59 / 900, 3) == 0.934


def test_kernel_ridge_examples():
    b = np.array([0.2, 0.5, 0.1])
    np.testing.assert_allclose(kernel_ridge_solve(np.eye(3), b), b)
    np.testing.assert_allclose(kernel_ridge_solve(np.ones((2, 2)), [1, 1], 1e-6), [0.5, 0.5], atol=1e-6)
    with pytest.raises(ValueError):
        kernel_ridge_solve(np.eye(2), [1, 1], -1)
    with pytest.raises(SizeMismatchError):
        kernel_ridge_solve(np.eye(2), [1, 1, 1])


def test_ridge_interpolates_better_than_alphatron():
    K, b = random_problem(10, 5)
    alpha = kernel_ridge_solve(K, b, 1e-10)
    m = train_qka(K, b)
    ridge_risk = empirical_risk(K.T @ alpha, b)
    qka_risk = empirical_risk(K.T @ m.alpha, b)
    assert ridge_risk <= qka_risk


def test_model_text_round_trip(tmp_path):
    K, b = random_problem(4, 6)
    params = np.arange(8.0).reshape(4, 2) / 3
    m = train_qka(K, b, training_params=params)
    m.save(tmp_path / "m.txt")
    back = QKAModel.load(tmp_path / "m.txt")
    assert np.array_equal(back.alpha, m.alpha)
    assert np.array_equal(back.training_params, params)
    assert (back.selected_iteration, back.lam, back.T) == (m.selected_iteration, m.lam, m.T)


def test_smooth_grid_removes_isolated_flip():
    g = np.ones((5, 5))
    g[2, 2] = 0
    assert np.all(smooth_grid(g) == 1)


# ---------------------------------------------------------------- properties


@given(seed=st.integers(0, 10_000), N=st.integers(2, 9))
def test_permutation_equivariance(seed, N):
    K, b = random_problem(N, seed, n=3)
    perm = np.random.default_rng(seed + 1).permutation(N)
    m = train_qka(K, b, T=4)
    mp = train_qka(K[np.ix_(perm, perm)], b[perm], T=4)
    np.testing.assert_allclose(mp.alpha, m.alpha[perm], atol=1e-12)
    k = np.random.default_rng(seed + 2).uniform(0, 1, N)
    assert predict(mp, k[perm]) == pytest.approx(predict(m, k), abs=1e-12)


@given(seed=st.integers(0, 10_000))
def test_training_is_bit_reproducible_and_selection_dominates(seed):
    K, b = random_problem(6, seed, n=3)
    a, c = train_qka(K, b, T=7), train_qka(K, b, T=7)
    assert np.array_equal(a.alpha, c.alpha)
    assert a.per_iteration_risk[a.selected_iteration - 1] <= a.per_iteration_risk.min()
    assert 1 <= a.selected_iteration <= a.T


@given(k11=st.floats(0.05, 1.0), lam=st.floats(0.1, 1.9), b=st.floats(0.0, 1.0))
def test_single_point_contraction(k11, lam, b):
    m = train_qka(np.array([[k11]]), [b], lam=lam, T=6)
    gaps = np.sqrt(m.training_risk)
    for t in range(5):
        assert gaps[t + 1] == pytest.approx(abs(1 - lam * k11) * gaps[t], abs=1e-12)
