import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from cavbus.metrics import (
    CoherenceSpec,
    average_fidelity,
    coherence_limited,
    cz_ideal,
    cz_phase_diagnostics,
    gate_report,
    ideal_gate,
    iswap_ideal,
    iswap_phase_diagnostics,
    leakage_fidelity,
    mask_phases,
    pair_mask,
    population_fidelity,
    total_fidelity,
    zz_masked_fidelity,
)


def test_average_fidelity_basic_values():
    for kind in ("iswap", "cz"):
        U = ideal_gate(kind)
        assert average_fidelity(U, U) == pytest.approx(1.0)
        assert average_fidelity(np.exp(0.7j) * U, U) == pytest.approx(1.0)
    assert average_fidelity(np.eye(4), cz_ideal()) == pytest.approx(0.4)
    with pytest.raises(ValueError):
        average_fidelity(np.eye(4), np.eye(2))


def test_population_fidelity_ignores_phases():
    U = np.diag(np.exp(1j * np.array([0.1, -0.4, 0.9, 2.0])))
    assert population_fidelity(U, np.eye(4)) == pytest.approx(1.0)
    W = iswap_ideal() @ np.diag(np.exp(1j * np.array([0.0, 0.3, -0.2, 1.0])))
    assert population_fidelity(W, iswap_ideal()) == pytest.approx(1.0)
    assert average_fidelity(W, iswap_ideal()) < 1.0


def test_population_fidelity_single_leaky_column():
    ell = 0.01
    U = np.diag([1, 1, 1, math.sqrt(1 - ell)])
    hand = ((3 + math.sqrt(1 - ell)) ** 2 + 3 + (1 - ell)) / 20
    assert population_fidelity(U, np.eye(4)) == pytest.approx(hand, rel=1e-14)


def test_leakage_fidelity_values():
    assert leakage_fidelity(iswap_ideal() @ expm(1j * 0.1 * np.diag([0, 1, 2, 3])), iswap_ideal()) == pytest.approx(1.0)
    ell = 1e-4
    U = np.eye(4) * 1.0
    U[3, 3] = math.sqrt(1 - ell - 1e-6)
    U[2, 3] = 1e-3  # population moved inside the subspace is not leakage
    norm = math.sqrt(1 - ell)
    hand = ((3 + norm) ** 2 + 3 + norm**2) / 20
    assert 1 - leakage_fidelity(U, np.eye(4)) == pytest.approx(1 - hand, rel=1e-9)


def test_zz_mask_target_pair_only():
    # a pure conditional phase on the target pair is all eps_gate_ZZ
    phi = 0.05
    U = np.diag(np.exp(1j * phi * pair_mask(4, (0, 1))))
    F_P = population_fidelity(U, np.eye(16))
    F_ZZ = zz_masked_fidelity(U, np.eye(16), pair_mask(4, (0, 1)))
    assert F_ZZ == pytest.approx(F_P)
    assert average_fidelity(U, np.eye(16)) < F_ZZ


def test_zz_mask_spectator_phase():
    S = np.array(list(itertools.product((0, 1), repeat=4)))
    k = int(np.flatnonzero((S == [1, 0, 1, 1]).all(axis=1))[0])
    theta = np.zeros(16)
    theta[k] = 0.05
    U = np.diag(np.exp(1j * theta))
    mask = pair_mask(4, (0, 1))
    F = average_fidelity(U, np.eye(16))
    F_ZZ = zz_masked_fidelity(U, np.eye(16), mask)
    F_P = population_fidelity(U, np.eye(16))
    assert F_ZZ - F == pytest.approx(0.0, abs=1e-15)
    assert F_P - F_ZZ > 0


def test_mask_limits():
    rng = np.random.default_rng(3)
    U = np.diag(np.exp(1j * rng.normal(0, 0.1, 4))) * 0.999
    assert zz_masked_fidelity(U, np.eye(4), np.zeros(4, bool)) == pytest.approx(average_fidelity(U, np.eye(4)))
    assert zz_masked_fidelity(U, np.eye(4), np.ones(4, bool)) == pytest.approx(population_fidelity(U, np.eye(4)))


def test_phase_diagnostics():
    assert cz_phase_diagnostics(cz_ideal())[1] == pytest.approx(0.0)
    U = np.diag(np.exp(1j * np.array([0, 0, 0, math.pi + 0.01])))
    phi, d = cz_phase_diagnostics(U)
    assert d == pytest.approx(0.01)
    W = iswap_ideal() @ np.diag([1, 1, 1, np.exp(0.02j)])
    assert iswap_phase_diagnostics(W) == pytest.approx(0.02)


def random_near_gate(seed, kind, n_qubits, leak_levels=2, scale=0.05):
    rng = np.random.default_rng(seed)
    d = 2**n_qubits
    D = d + leak_levels
    A = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    H = scale * (A + A.conj().T) / 2
    big = np.eye(D, dtype=complex)
    big[:d, :d] = ideal_gate(kind, n_qubits)
    V = expm(-1j * H) @ big
    local = np.diag(np.exp(1j * rng.uniform(-np.pi, np.pi, d)))
    return V[:d, :d] @ local


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["iswap", "cz"]), st.sampled_from([2, 3, 4]))
def test_fidelity_chain_and_budget(seed, kind, n):
    U = random_near_gate(seed, kind, n)
    r = gate_report(U, kind, (0, 1))
    assert r.F <= r.F_ZZ + 1e-9
    assert r.F_ZZ <= r.F_P + 1e-9
    assert r.F_P <= r.F_L + 1e-9
    total = r.eps_L + r.eps_PT + r.eps_ZZ + r.eps_gate_ZZ
    assert total == pytest.approx(1 - r.F, abs=1e-9)
    assert all(v >= 0 for v in r.clipped().values())


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-math.pi, math.pi))
def test_fidelity_global_phase_and_relabeling(seed, phase):
    U = random_near_gate(seed, "iswap", 2)
    Ui = iswap_ideal()
    F = average_fidelity(U, Ui)
    assert average_fidelity(np.exp(1j * phase) * U, Ui) == pytest.approx(F, abs=1e-12)
    P = np.eye(4)[[0, 2, 1, 3]]
    assert average_fidelity(P @ U @ P.T, P @ Ui @ P.T) == pytest.approx(F, abs=1e-12)


def test_report_serialization():
    r = gate_report(iswap_ideal(), "iswap", t_g=45.0)
    d = r.to_dict()
    assert d["F"] == pytest.approx(1.0)
    assert d["phi_ZZ_rad"] == pytest.approx(0.0)
    assert d["pair"] == [1, 2]


# ---- coherence limits -------------------------------------------------------


def test_iswap_coherence_checkpoint():
    spec = CoherenceSpec.uniform(2, 100.0)
    F = coherence_limited("iswap", 45.0, spec)
    assert F == pytest.approx(0.99928, abs=1e-12)
    assert F == pytest.approx(1 - 0.4 * 45e-9 * 4 / 100e-6, abs=1e-12)


def test_cz_coherence_checkpoint():
    F = coherence_limited("cz", 57.0, CoherenceSpec.uniform(2, 80.0), excited=1)
    hand = 1 - (0.5 + 0.3 + 31 / 40 + 3 / 8) * 57e-9 / 80e-6
    assert F == pytest.approx(hand, abs=1e-12)
    assert F == pytest.approx(0.99861, abs=1e-5)


def test_n_qubit_formula_reduces_to_two_qubit_form():
    spec = CoherenceSpec((70.0, 90.0), (40.0, 120.0))
    F = coherence_limited("iswap", 50.0, spec)
    r = lambda T: 50.0 / (1000 * T)
    hand = 1 - 0.4 * (r(70) + r(90) + r(40) + r(120))
    assert F == pytest.approx(hand, abs=1e-12)
    four = coherence_limited("identity", 50.0, CoherenceSpec.uniform(4, 100.0))
    assert four == pytest.approx(1 - 16 / 34 * 8 * r(100), abs=1e-12)


def test_four_qubit_cz_coefficients():
    spec = CoherenceSpec((50.0, 60.0, 70.0, 80.0), (55.0, 65.0, 75.0, 85.0))
    r = lambda T: 60.0 / (1000 * T)
    hand = (
        1
        - 10 / 17 * r(60) - 6 / 17 * r(50)
        - 245 / 272 * r(65) - 117 / 272 * r(55)
        - 8 / 17 * (r(70) + r(75) + r(80) + r(85))
    )
    assert coherence_limited("cz", 60.0, spec, pair=(0, 1), excited=1) == pytest.approx(hand, abs=1e-12)


def test_coherence_limits_and_errors():
    assert coherence_limited("iswap", 45.0, CoherenceSpec.uniform(2, 1e12)) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        coherence_limited("cz", 45.0, CoherenceSpec.uniform(2, 80.0))
    with pytest.raises(ValueError):
        CoherenceSpec((1.0,), (-1.0,))
    assert total_fidelity(0.999, 0.998) == pytest.approx(0.997)
