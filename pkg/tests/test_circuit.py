import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cavbus.circuit import (
    CircuitSpec,
    CircuitValidationError,
    QubitCouplerUnit,
    TransmonParams,
    build_capacitance_matrix,
    capacitance_to_charging_energy,
    charging_energy_to_capacitance,
    coupling_strengths,
    leading_order_inverse,
    mode_names,
    reference_spec,
    resonator_capacitance,
    spec_from_dict,
    spec_to_dict,
    transmon_from_target,
)


def unit(C_QC=3.7, C_QR=1.0, C_CR=37.4, fq=4.0, fc=6.5, a=1.0):
    return QubitCouplerUnit(
        C_QC, C_QR, C_CR, transmon_from_target(fq, -0.220), transmon_from_target(fc, -0.268), a
    )


# ---- resonator and transmon closures -------------------------------------


def test_resonator_capacitance_reference_values():
    assert resonator_capacitance(3.85, 50.0) == pytest.approx(1298.7, rel=1e-4)
    assert resonator_capacitance(5.0, 50.0) == pytest.approx(1000.0, rel=1e-12)
    assert resonator_capacitance(7.7, 50.0) == pytest.approx(resonator_capacitance(3.85, 50.0) / 2)


@pytest.mark.parametrize("f, z", [(0.0, 50.0), (-1.0, 50.0), (3.85, 0.0)])
def test_resonator_capacitance_rejects_nonpositive(f, z):
    with pytest.raises(CircuitValidationError):
        resonator_capacitance(f, z)


@pytest.mark.parametrize("f, alpha, EJ", [(4.0, -0.220, 10.118), (4.3, -0.268, 9.732)])
def test_transmon_inversion_examples(f, alpha, EJ):
    t = transmon_from_target(f, alpha)
    assert t.E_J == pytest.approx(EJ, abs=1e-3)
    assert t.E_C == -alpha
    assert t.anharmonicity == alpha


def test_transmon_inversion_rejects_positive_anharmonicity():
    with pytest.raises(CircuitValidationError):
        transmon_from_target(4.0, 0.1)


@given(st.floats(1.0, 12.0), st.floats(-0.5, -0.05))
def test_transmon_round_trip(f, alpha):
    t = transmon_from_target(f, alpha)
    assert abs(t.frequency - f) / f < 1e-12


def test_self_capacitances_from_anharmonicity():
    assert charging_energy_to_capacitance(0.220) == pytest.approx(88.05, abs=0.05)
    assert charging_energy_to_capacitance(0.268) == pytest.approx(72.28, abs=0.05)
    assert capacitance_to_charging_energy(charging_energy_to_capacitance(0.3)) == pytest.approx(0.3)


def test_zero_point_fluctuations_are_consistent():
    t = transmon_from_target(4.0, -0.22)
    # Phi_zpf * Q_zpf = hbar / 2
    assert t.phi_zpf * t.q_zpf == pytest.approx(1.054571817e-34 / 2, rel=1e-9)


def test_regime_warning_below_transmon_limit():
    assert TransmonParams(E_J=1.0, E_C=0.2).regime_warnings()
    assert not transmon_from_target(4.0, -0.22).regime_warnings()


# ---- capacitance matrix --------------------------------------------------


def test_capacitance_matrix_reference_entries(spec2):
    C = build_capacitance_matrix(spec2)
    names = mode_names(2)
    assert names == ["Q1", "C1", "R", "C2", "Q2"]
    q1, c1, r = 0, 1, 2
    assert C[q1, r] == pytest.approx(-1.0)
    assert C[c1, r] == pytest.approx(-37.4)
    assert C[q1, c1] == pytest.approx(-3.7)
    assert np.allclose(C, C.T)
    # unit-to-unit entries vanish except through the resonator node
    assert C[0, 4] == 0.0 and C[1, 3] == 0.0


def test_capacitance_matrix_decoupled_limit():
    spec = CircuitSpec((unit(0, 0, 0), unit(0, 0, 0, fq=4.3)), 3.85)
    C = build_capacitance_matrix(spec)
    assert np.count_nonzero(C - np.diag(np.diag(C))) == 0
    assert C[0, 0] == pytest.approx(spec.units[0].qubit.capacitance)
    assert C[2, 2] == pytest.approx(spec.C_R)


def test_capacitance_matrix_zero_sampling_coefficient():
    spec = CircuitSpec((unit(a=0.0), unit(fq=4.3)), 3.85)
    C = build_capacitance_matrix(spec)
    assert C[2, 0] == 0.0 and C[2, 1] == 0.0
    assert C[2, 3] != 0.0


def test_spec_validation_errors_name_the_field():
    with pytest.raises(CircuitValidationError) as exc:
        CircuitSpec((unit(C_QC=-1.0),), 3.85)
    assert exc.value.field == "units[0].C_QC"
    with pytest.raises(CircuitValidationError) as exc:
        CircuitSpec((unit(a=1.5),), 3.85)
    assert exc.value.field == "units[0].a"
    with pytest.raises(CircuitValidationError):
        CircuitSpec((), 3.85)
    with pytest.raises(CircuitValidationError):
        CircuitSpec((unit(),), 3.85, fock_levels={"Q": 1})


def test_hierarchy_warning():
    assert not unit(C_QC=2.0, C_QR=0.1, C_CR=5.0).hierarchy_warnings()
    assert unit(C_QC=2.0, C_QR=1.0, C_CR=5.0).hierarchy_warnings()
    # the reference device sits inside a strict 10x hierarchy only loosely
    assert len(unit().hierarchy_warnings()) == 2


# ---- leading-order inverse ----------------------------------------------


def _relative_errors(spec):
    D, keep = leading_order_inverse(spec)
    exact = np.linalg.inv(build_capacitance_matrix(spec))
    return np.abs(D[keep] - exact[keep]) / np.abs(exact[keep])


def test_leading_order_inverse_reference_device(spec2):
    assert _relative_errors(spec2).max() < 0.05


def random_hierarchy_spec(rng, n_units):
    units = []
    for _ in range(n_units):
        units.append(
            QubitCouplerUnit(
                C_QC=rng.uniform(1.0, 5.0),
                C_QR=rng.uniform(0.05, 0.3),
                C_CR=rng.uniform(10.0, 40.0),
                qubit=transmon_from_target(rng.uniform(3.8, 5.0), -rng.uniform(0.18, 0.26)),
                coupler=transmon_from_target(rng.uniform(5.0, 7.0), -rng.uniform(0.22, 0.30)),
            )
        )
    return CircuitSpec(tuple(units), rng.uniform(3.5, 7.0))


def test_leading_order_inverse_random_specs(rng):
    for _ in range(100):
        spec = random_hierarchy_spec(rng, int(rng.integers(1, 5)))
        assert _relative_errors(spec).max() < 0.05


# ---- couplings ------------------------------------------------------------


def test_qubit_coupler_coupling_reference_value():
    m = coupling_strengths(reference_spec([4.0, 4.0], [4.3, 4.3]))
    assert m.g("Q1", "C1") * 1e3 == pytest.approx(96.0, abs=1.0)


def test_couplings_vanish_with_their_capacitance():
    spec = CircuitSpec((unit(C_QC=0.0, C_QR=0.0), unit(fq=4.3)), 3.85)
    m = coupling_strengths(spec)
    assert m.g("Q1", "C1") == 0.0
    assert m.g("Q1", "R") == 0.0
    assert m.g("C1", "R") != 0.0


def test_coupler_coupler_scaling():
    base = CircuitSpec((unit(), unit(fq=4.3)), 3.85)
    m = coupling_strengths(base)
    cc = next(c for c in m.couplings if c.kind == "CC")
    CC = base.units[0].coupler.capacitance
    assert cc.prefactor == pytest.approx(0.5 * 37.4**2 / (CC * base.C_R))
    # doubling C_R (halving f_R) halves the prefactor
    m2 = coupling_strengths(CircuitSpec(base.units, base.f_R / 2))
    cc2 = next(c for c in m2.couplings if c.kind == "CC")
    assert cc2.prefactor == pytest.approx(cc.prefactor / 2)


def test_model_structure(model2):
    assert model2.names == ["Q1", "C1", "R", "C2", "Q2"]
    assert model2.anharmonicities[model2.resonator] == 0.0
    assert abs(model2.g("Q1", "R")) < abs(model2.g("C1", "R"))
    kinds = sorted(c.kind for c in model2.couplings)
    assert kinds == ["CC", "CR", "CR", "QC", "QC", "QR", "QR"]


def test_coupling_prefactors_linear_in_capacitance():
    g1 = coupling_strengths(CircuitSpec((unit(C_QC=2.0),), 3.85)).couplings[0].prefactor
    g2 = coupling_strengths(CircuitSpec((unit(C_QC=4.0),), 3.85)).couplings[0].prefactor
    assert g2 == pytest.approx(2 * g1)


def test_couplings_symmetric_under_unit_relabeling():
    u1, u2 = unit(fq=4.0), unit(C_QC=2.5, fq=4.4)
    m = coupling_strengths(CircuitSpec((u1, u2), 3.85))
    r = coupling_strengths(CircuitSpec((u2, u1), 3.85))
    assert m.g("Q1", "C1") == pytest.approx(r.g("Q2", "C2"))
    assert m.g("Q2", "R") == pytest.approx(r.g("Q1", "R"))
    assert m.g("C1", "C2") == pytest.approx(r.g("C1", "C2"))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_qr_coupling_small_under_hierarchy(seed):
    spec = random_hierarchy_spec(np.random.default_rng(seed), 2)
    m = coupling_strengths(spec)
    for j in (1, 2):
        assert abs(m.g(f"Q{j}", "R")) < abs(m.g(f"C{j}", "R"))


def test_spec_dict_round_trip(spec2):
    again = spec_from_dict(spec_to_dict(spec2))
    assert np.allclose(build_capacitance_matrix(again), build_capacitance_matrix(spec2))
    assert again.fock_levels == spec2.fock_levels


def test_model_dict_round_trip(model2):
    from cavbus.circuit import CoupledModeModel

    again = CoupledModeModel.from_dict(model2.to_dict())
    assert again == model2


def test_with_frequencies_and_unknown_mode(model2):
    m = model2.with_frequencies(C1=5.0)
    assert m.frequencies[1] == 5.0 and model2.frequencies[1] == pytest.approx(6.5)
    with pytest.raises(KeyError):
        model2.index("Q9")
    assert math.isclose(m.g("C1", "R"), m.couplings[1].prefactor * math.sqrt(5.0 * 3.85))
