import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qpr.ptdist import (
    U_MAX,
    hardness_window_check,
    histogram_distance,
    probability_spectrum,
    pt_bin_masses,
    pt_density,
    pt_trace_distance,
    spectrum_histogram,
)
from qpr.statevec import StateVector
from qpr.varcirc import BrickworkArchitecture, apply_circuit, haar_random_circuit


@pytest.fixture(scope="module")
def haar10():
    return apply_circuit(haar_random_circuit(BrickworkArchitecture(10, 20), 0))


def test_probability_spectrum_examples():
    np.testing.assert_array_equal(probability_spectrum(StateVector.basis(3, 5)), np.eye(8)[5])
    np.testing.assert_allclose(probability_spectrum(StateVector.plus(4)), np.full(16, 1 / 16))
    assert probability_spectrum(StateVector.random(6, 1)).sum() == pytest.approx(1.0, abs=1e-10)


def test_pt_density_examples():
    assert pt_density(0.0) == 1.0
    assert pt_density(math.log(2)) == pytest.approx(0.5)
    np.testing.assert_allclose(pt_density(np.array([0.0, 1.0])), [1.0, math.exp(-1)])
    with pytest.raises(ValueError):
        pt_density(-0.1)
    # bin masses over a long range integrate to one
    assert pt_bin_masses(np.linspace(0, 60, 6001)).sum() == pytest.approx(1.0, abs=1e-12)


def test_histogram_masses_sum_to_one(haar10):
    h = spectrum_histogram(haar10)
    assert h.bins == 50 and np.all(np.diff(h.edges) > 0)
    assert h.masses.sum() + h.overflow == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        spectrum_histogram(haar10, bins=5)


def test_uniform_state_closed_form():
    d = pt_trace_distance(StateVector.plus(8))
    # all mass sits in the bin that holds u = 1, so the distance is 1 minus that bin's PT mass
    candidates = [1 - (math.exp(-0.8) - math.exp(-1.0)), 1 - (math.exp(-1.0) - math.exp(-1.2))]
    assert min(abs(d - c) for c in candidates) < 1e-12
    assert d > 0.5


def test_haar_state_is_closer_than_product_states(haar10):
    d_haar = pt_trace_distance(haar10)
    rng = np.random.default_rng(3)
    products = [StateVector.zeros(10), StateVector.plus(10)]
    products += [StateVector.product([rng.normal(size=2) + 1j * rng.normal(size=2) for _ in range(10)])
                 for _ in range(5)]
    assert d_haar < 0.1
    assert all(d_haar < pt_trace_distance(p) for p in products)


def test_distance_decreases_with_depth():
    arch = lambda d: BrickworkArchitecture(10, d)  # noqa: E731
    shallow = np.mean([pt_trace_distance(apply_circuit(haar_random_circuit(arch(1), s))) for s in range(3)])
    deep = np.mean([pt_trace_distance(apply_circuit(haar_random_circuit(arch(20), s))) for s in range(3)])
    assert deep < shallow


def test_injected_pt_masses_give_zero():
    edges = np.linspace(0, U_MAX, 51)
    assert histogram_distance(pt_bin_masses(edges), edges, math.exp(-U_MAX)) == pytest.approx(0.0, abs=1e-15)
    # without the tail correction only the missing tail mass remains
    assert histogram_distance(pt_bin_masses(edges), edges) == pytest.approx(0.5 * math.exp(-U_MAX))


def test_bin_doubling_is_stable_for_haar_states():
    # n = 14 keeps the finite-sample histogram noise below the tolerance
    for seed in range(2):
        psi = StateVector.random(14, seed)
        assert abs(pt_trace_distance(psi, 50) - pt_trace_distance(psi, 100)) < 0.02


def test_adaptive_range_option():
    psi = StateVector.basis(6, 0)
    h = spectrum_histogram(psi, u_max=None)
    assert h.edges[-1] == 64 and h.overflow == 0.0
    fixed = spectrum_histogram(psi)
    assert fixed.overflow == pytest.approx(1 / 64)


def test_hardness_window():
    assert hardness_window_check(0.05, 10)
    assert not hardness_window_check(0.2, 10)
    assert hardness_window_check(1 / 7, 7)
    with pytest.raises(ValueError):
        hardness_window_check(0.1, 0)


# ---------------------------------------------------------------- properties


@settings(max_examples=25)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 9))
def test_distance_bounded_and_permutation_invariant(seed, n):
    psi = StateVector.random(n, seed)
    d = pt_trace_distance(psi)
    assert 0.0 <= d <= 1.0
    perm = np.random.default_rng(seed).permutation(2**n)
    assert pt_trace_distance(StateVector(psi.amplitudes[perm])) == pytest.approx(d, abs=1e-12)


@settings(max_examples=25)
@given(idx=st.integers(0, 255), phi=st.floats(0, 2 * np.pi))
def test_basis_states_are_far_from_pt(idx, phi):
    psi = StateVector.basis(8, idx).with_phase(phi)
    assert pt_trace_distance(psi) > 0.5
