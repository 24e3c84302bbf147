import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpr.errors import SizeMismatchError
from qpr.shadows import (
    LABELS,
    SHADOW_OPERATORS,
    STABILIZER_STATES,
    TRACE_TABLE,
    ShadowKernelParams,
    ShadowRecord,
    direct_kernel,
    kernel_pca,
    leave_one_out_accuracy,
    nearest_centroid_predict,
    reconstruct_single_qubit,
    sample_shadows,
    shadow_kernel,
    shadow_kernel_matrix,
    snapshot_trace_sums,
)
from qpr.statevec import StateVector

PAULIS = [np.array([[1, 0], [0, -1]]), np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]])]


def test_stabilizer_states_are_pauli_eigenstates():
    # basis b (Z, X, Y) owns labels 2b (+1 eigenstate) and 2b+1 (-1 eigenstate)
    for b, P in enumerate(PAULIS):
        for sign, k in ((1, 2 * b), (-1, 2 * b + 1)):
            s = STABILIZER_STATES[k]
            np.testing.assert_allclose(P @ s, sign * s, atol=1e-15)


def test_trace_table_values():
    assert TRACE_TABLE[0, 0] == pytest.approx(5.0)
    assert TRACE_TABLE[0, 1] == pytest.approx(-4.0)
    assert TRACE_TABLE[0, 2] == pytest.approx(0.5)
    np.testing.assert_allclose(np.diag(TRACE_TABLE), 5.0)
    # independent 2x2 algebra: 9 |<a|b>|^2 - 4
    ov = np.abs(STABILIZER_STATES.conj() @ STABILIZER_STATES.T) ** 2
    np.testing.assert_allclose(TRACE_TABLE, 9 * ov - 4, atol=1e-12)
    np.testing.assert_array_equal(TRACE_TABLE, TRACE_TABLE.T)


def random_qubit_state(rng):
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    return v / np.linalg.norm(v)


def enumerated_channel_mean(rho):
    """E over bases (1/3 each) and outcomes (Born probabilities) of 3|s><s| - I."""
    out = np.zeros((2, 2), dtype=complex)
    for k in range(6):
        s = STABILIZER_STATES[k]
        out += (1 / 3) * np.real(s.conj() @ rho @ s) * SHADOW_OPERATORS[k]
    return out


def test_inverse_channel_identity_by_enumeration(rng):
    for _ in range(20):
        v = random_qubit_state(rng)
        rho = np.outer(v, v.conj())
        np.testing.assert_allclose(enumerated_channel_mean(rho), rho, atol=1e-12)
    np.testing.assert_allclose(enumerated_channel_mean(np.eye(2) / 2), np.eye(2) / 2, atol=1e-12)


def test_forced_z_on_zero_state():
    rec = sample_shadows(StateVector.zeros(1), 50, 3, bases=[0])
    assert np.all(rec.outcomes == LABELS.index("0"))


def test_forced_bases_give_eigenstate_labels():
    plus = StateVector.plus(2)
    rec = sample_shadows(plus, 20, 1, bases=[1, 1])
    assert np.all(rec.outcomes == LABELS.index("+"))


def test_single_qubit_unbiasedness(rng):
    v = random_qubit_state(rng)
    rho = np.outer(v, v.conj())
    rec = sample_shadows(StateVector(v), 10_000, 11)
    assert np.linalg.norm(reconstruct_single_qubit(rec, 0) - rho, 2) < 0.1


def test_bell_state_marginals_are_maximally_mixed():
    bell = StateVector(np.array([1, 0, 0, 1]) / np.sqrt(2))
    rec = sample_shadows(bell, 10_000, 2)
    for q in (0, 1):
        assert np.abs(reconstruct_single_qubit(rec, q) - np.eye(2) / 2).max() < 0.05


def test_sequential_collapse_keeps_correlations():
    # measuring both halves of a Bell pair in Z always agrees
    bell = StateVector(np.array([1, 0, 0, 1]) / np.sqrt(2))
    rec = sample_shadows(bell, 500, 4, bases=[0, 0])
    assert np.array_equal(rec.outcomes[:, 0], rec.outcomes[:, 1])
    assert 0 < np.mean(rec.outcomes[:, 0] == 0) < 1


def test_sampling_is_seeded():
    psi = StateVector.random(3, 0)
    a, b, c = sample_shadows(psi, 30, 5), sample_shadows(psi, 30, 5), sample_shadows(psi, 30, 6)
    assert np.array_equal(a.outcomes, b.outcomes) and not np.array_equal(a.outcomes, c.outcomes)
    # snapshot streams are independent of T: a prefix is reproduced exactly
    assert np.array_equal(sample_shadows(psi, 10, 5).outcomes, a.outcomes[:10])
    with pytest.raises(ValueError):
        sample_shadows(psi, 0, 1)


def test_record_validation_and_text_io(tmp_path):
    with pytest.raises(SizeMismatchError):
        ShadowRecord(2, np.zeros((3, 3)))
    with pytest.raises(ValueError):
        ShadowRecord(1, np.array([[6]]))
    rec = sample_shadows(StateVector.random(3, 1), 7, 9)
    rec.save(tmp_path / "s.txt")
    text = (tmp_path / "s.txt").read_text()
    assert text.splitlines()[0] == "n=3 T=7 seed=9"
    assert set(" ".join(text.splitlines()[1:]).split()) <= set(LABELS)
    back = ShadowRecord.load(tmp_path / "s.txt")
    assert np.array_equal(back.outcomes, rec.outcomes) and back.seed == 9


def test_kernel_params_must_be_positive():
    with pytest.raises(ValueError):
        ShadowKernelParams(0.0, 1.0)
    with pytest.raises(ValueError):
        ShadowKernelParams(1.0, -1.0)


def test_single_snapshot_kernel_closed_form():
    rec = ShadowRecord(1, np.array([[3]]))
    p = ShadowKernelParams(0.7, 0.4)
    assert shadow_kernel(rec, rec, p) == pytest.approx(np.exp(0.7 * np.exp(0.4 * 5)))
    other = ShadowRecord(1, np.array([[2]]))
    assert shadow_kernel(rec, other, p) == pytest.approx(np.exp(0.7 * np.exp(0.4 * -4)))


def test_trace_sums_match_loop():
    a = sample_shadows(StateVector.random(3, 1), 6, 1)
    b = sample_shadows(StateVector.random(3, 2), 4, 2)
    S = snapshot_trace_sums(a, b)
    ref = np.array([[sum(TRACE_TABLE[x, y] for x, y in zip(r1, r2)) for r2 in b.outcomes] for r1 in a.outcomes])
    np.testing.assert_allclose(S, ref)
    with pytest.raises(SizeMismatchError):
        snapshot_trace_sums(a, sample_shadows(StateVector.random(2, 0), 2, 0))


def test_direct_kernel_examples():
    psi = StateVector.random(3, 4)
    assert direct_kernel(psi, psi, 1.3) == pytest.approx(np.exp(1.3))
    assert direct_kernel(StateVector.basis(2, 0), StateVector.basis(2, 1)) == 1.0
    assert direct_kernel(StateVector.basis(1, 0), StateVector.plus(1)) == pytest.approx(np.exp(0.5))


def test_pca_identity_kernel():
    res = kernel_pca(np.eye(3), 2)
    np.testing.assert_allclose(res.eigenvalues, [1.0, 1.0], atol=1e-12)
    # the three points form an equilateral triangle of side sqrt(2)
    d = np.linalg.norm(res.coordinates[:, None] - res.coordinates[None], axis=-1)
    np.testing.assert_allclose(d[np.triu_indices(3, 1)], np.sqrt(2), atol=1e-12)
    one = kernel_pca(np.eye(3), 1)
    assert one.coordinates.shape == (3, 1) and one.complete


def test_pca_rank_one_kernel_flags_incomplete():
    v = np.array([1.0, 2.0, -1.0, 0.5])
    res = kernel_pca(np.outer(v, v), 3)
    assert res.coordinates.shape[1] == 1 and not res.complete


def test_pca_validation():
    with pytest.raises(ValueError):
        kernel_pca(np.array([[1.0, 0.2], [0.3, 1.0]]), 1)
    with pytest.raises(ValueError):
        kernel_pca(np.eye(2), 3)
    with pytest.raises(SizeMismatchError):
        kernel_pca(np.ones((2, 3)), 1)


def test_pca_duplicated_point_has_duplicated_coordinates(rng):
    X = rng.normal(size=(5, 3))
    X = np.vstack([X, X[2]])
    K = np.exp(-((X[:, None] - X[None]) ** 2).sum(-1))
    c = kernel_pca(K, 3).coordinates
    np.testing.assert_allclose(c[5], c[2], atol=1e-10)


def test_nearest_centroid_and_loo():
    x = np.array([[0.0], [0.1], [0.2], [5.0], [5.1], [5.2]])
    y = np.array([0, 0, 0, 1, 1, 1])
    assert list(nearest_centroid_predict(x, y, [[0.3], [4.0]])) == [0, 1]
    assert leave_one_out_accuracy(x, y) == 1.0


def test_shadow_kernel_pca_separates_product_states():
    zeros = [sample_shadows(StateVector.zeros(4), 60, s) for s in range(6)]
    pluses = [sample_shadows(StateVector.plus(4), 60, 100 + s) for s in range(6)]
    K = shadow_kernel_matrix(zeros + pluses)
    res = kernel_pca(K, 2)
    assert leave_one_out_accuracy(res.coordinates, [0] * 6 + [1] * 6) == 1.0


# ---------------------------------------------------------------- properties


@settings(max_examples=20)
@given(s1=st.integers(0, 1000), s2=st.integers(0, 1000), tau=st.floats(0.1, 2), gamma=st.floats(0.1, 1))
def test_shadow_kernel_symmetric_and_at_least_one(s1, s2, tau, gamma):
    a = sample_shadows(StateVector.random(3, s1), 8, s1)
    b = sample_shadows(StateVector.random(3, s2), 8, s2)
    p = ShadowKernelParams(tau, gamma)
    assert shadow_kernel(a, b, p) == shadow_kernel(b, a, p)
    assert shadow_kernel(a, b, p) >= 1.0


@settings(max_examples=20)
@given(seed=st.integers(0, 10_000))
def test_pca_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(7, 2))
    K = np.exp(-((X[:, None] - X[None]) ** 2).sum(-1))
    perm = rng.permutation(7)
    a = kernel_pca(K, 2)
    b = kernel_pca(K[np.ix_(perm, perm)], 2)
    if a.eigenvalues.size == 2 and abs(a.eigenvalues[0] - a.eigenvalues[1]) < 1e-8:
        return  # degenerate pair: the basis inside the eigenspace is arbitrary
    for k in range(a.coordinates.shape[1]):
        ca, cb = a.coordinates[perm, k], b.coordinates[:, k]
        sign = np.sign(ca @ cb) or 1.0
        np.testing.assert_allclose(cb, sign * ca, atol=1e-8)


@settings(max_examples=25)
@given(re=st.lists(st.floats(-1, 1), min_size=2, max_size=2), im=st.lists(st.floats(-1, 1), min_size=2, max_size=2))
def test_inverse_channel_identity_property(re, im):
    v = np.array(re) + 1j * np.array(im)
    if np.linalg.norm(v) < 1e-3:
        return
    v = v / np.linalg.norm(v)
    rho = np.outer(v, v.conj())
    np.testing.assert_allclose(enumerated_channel_mean(rho), rho, atol=1e-12)
