"""Average-fidelity hierarchy, error budget, phase diagnostics and coherence limits."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .pulses import PhaseUndefinedError, ideal_rows, strip_single_qubit_phases, wrap_phase


def average_fidelity(U: np.ndarray, U_id: np.ndarray) -> float:
    """(|tr(U_id^dag U)|^2 + tr(U^dag U)) / (d (d + 1)), clipped at 1."""
    U = np.asarray(U)
    U_id = np.asarray(U_id)
    if U.shape != U_id.shape or U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise ValueError(f"dimension mismatch: {U.shape} vs {U_id.shape}")
    d = U.shape[0]
    tr = np.trace(U_id.conj().T @ U)
    norm = np.real(np.sum(np.abs(U) ** 2))
    return float(min(1.0, (abs(tr) ** 2 + norm) / (d * (d + 1))))


def population_fidelity(U: np.ndarray, U_id: np.ndarray) -> float:
    return average_fidelity(np.abs(U), np.abs(U_id))


def leakage_matrix(U: np.ndarray, U_id: np.ndarray) -> np.ndarray:
    """U'': each column's retained norm placed at its ideal output row."""
    U = np.asarray(U)
    d = U.shape[0]
    out = np.zeros((d, d))
    out[ideal_rows(U_id), np.arange(d)] = np.sqrt(np.sum(np.abs(U) ** 2, axis=0))
    return out


def leakage_fidelity(U: np.ndarray, U_id: np.ndarray) -> float:
    return average_fidelity(leakage_matrix(U, U_id), np.abs(U_id))


def pair_mask(n_qubits: int, pair_positions: Sequence[int]) -> np.ndarray:
    """Boolean over register states: both target qubits excited."""
    S = np.array(list(itertools.product((0, 1), repeat=n_qubits)), dtype=int)
    return np.all(S[:, list(pair_positions)] == 1, axis=1)


def mask_phases(U: np.ndarray, U_id: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Replace the ideal-row phase of the masked columns by the ideal phase."""
    U = np.array(U, dtype=complex)
    rows = ideal_rows(U_id)
    for j in np.flatnonzero(mask):
        r = rows[j]
        if U[r, j] != 0:
            U[:, j] *= np.exp(-1j * np.angle(U[r, j] / U_id[r, j]))
    return U


def zz_masked_fidelity(U: np.ndarray, U_id: np.ndarray, mask: np.ndarray) -> float:
    return average_fidelity(mask_phases(U, U_id, mask), U_id)


# --------------------------------------------------------------------------
# Ideal gates


def iswap_ideal(n_qubits: int = 2, pair: Sequence[int] = (0, 1)) -> np.ndarray:
    """iSWAP on register positions ``pair``, identity on the rest."""
    d = 2**n_qubits
    S = list(itertools.product((0, 1), repeat=n_qubits))
    index = {s: k for k, s in enumerate(S)}
    a, b = pair
    U = np.zeros((d, d), dtype=complex)
    for j, s in enumerate(S):
        if s[a] != s[b]:
            t = list(s)
            t[a], t[b] = s[b], s[a]
            U[index[tuple(t)], j] = 1j
        else:
            U[j, j] = 1.0
    return U


def cz_ideal(n_qubits: int = 2, pair: Sequence[int] = (0, 1)) -> np.ndarray:
    return np.diag(np.where(pair_mask(n_qubits, pair), -1.0, 1.0)).astype(complex)


def ideal_gate(kind: str, n_qubits: int = 2, pair: Sequence[int] = (0, 1)) -> np.ndarray:
    if kind == "iswap":
        return iswap_ideal(n_qubits, pair)
    if kind == "cz":
        return cz_ideal(n_qubits, pair)
    raise ValueError(f"unknown gate {kind!r}")


# --------------------------------------------------------------------------
# Phase diagnostics


def _both_excited_index(n_qubits: int, pair: Sequence[int]) -> int:
    s = [0] * n_qubits
    for p in pair:
        s[p] = 1
    return int("".join(map(str, s)), 2)


def iswap_phase_diagnostics(U_stripped: np.ndarray, n_qubits: int = 2, pair: Sequence[int] = (0, 1)) -> float:
    """phi_ZZ: conditional phase of |1_a 1_b> after single-qubit phase removal."""
    j = _both_excited_index(n_qubits, pair)
    amp = U_stripped[j, j] / U_stripped[0, 0]
    if abs(U_stripped[j, j]) < 1e-6:
        raise PhaseUndefinedError("vanishing |11> amplitude")
    return wrap_phase(np.angle(amp))


def cz_phase_diagnostics(U_stripped: np.ndarray, n_qubits: int = 2, pair: Sequence[int] = (0, 1)) -> tuple[float, float]:
    """(phi_CZ, delta phi_CZ = phi_CZ - pi), both wrapped to (-pi, pi]."""
    phi = iswap_phase_diagnostics(U_stripped, n_qubits, pair)
    return phi, wrap_phase(phi - math.pi)


# --------------------------------------------------------------------------
# Report


@dataclass
class GateReport:
    gate: str
    pair: tuple[int, int]
    t_g: float
    F: float
    F_P: float
    F_L: float
    F_ZZ: float
    eps_L: float
    eps_PT: float
    eps_ZZ: float
    eps_gate_ZZ: float
    leakage: float  # mean column leakage
    phi_ZZ: float | None = None
    phi_CZ: float | None = None
    delta_phi_CZ: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def infidelity(self) -> float:
        return 1.0 - self.F

    def clipped(self) -> dict:
        return {k: max(0.0, getattr(self, k)) for k in ("eps_L", "eps_PT", "eps_ZZ", "eps_gate_ZZ")}

    def to_dict(self) -> dict:
        d = {
            "gate": self.gate,
            "pair": list(self.pair),
            "t_g_ns": self.t_g,
            "F": self.F,
            "F_P": self.F_P,
            "F_L": self.F_L,
            "F_ZZ": self.F_ZZ,
            "eps_L": self.eps_L,
            "eps_PT": self.eps_PT,
            "eps_ZZ": self.eps_ZZ,
            "eps_gate_ZZ": self.eps_gate_ZZ,
            "eps_clipped": self.clipped(),
            "leakage": self.leakage,
            "phi_ZZ_rad": self.phi_ZZ,
            "phi_CZ_rad": self.phi_CZ,
            "delta_phi_CZ_rad": self.delta_phi_CZ,
        }
        d.update(self.extra)
        return d


def gate_report(
    U: np.ndarray,
    kind: str,
    pair_positions: Sequence[int] = (0, 1),
    pair: tuple[int, int] | None = None,
    t_g: float = float("nan"),
    strip: bool = True,
) -> GateReport:
    """Full metric set for a computational-subspace unitary ``U`` (d x d)."""
    d = U.shape[0]
    n = int(round(math.log2(d)))
    U_id = ideal_gate(kind, n, pair_positions)
    Us = strip_single_qubit_phases(U, U_id).U if strip else np.asarray(U)
    F = average_fidelity(Us, U_id)
    F_P = population_fidelity(Us, U_id)
    F_L = leakage_fidelity(Us, U_id)
    F_ZZ = zz_masked_fidelity(Us, U_id, pair_mask(n, pair_positions))
    leak = float(np.mean(1.0 - np.sum(np.abs(U) ** 2, axis=0)))
    rep = GateReport(
        gate=kind,
        pair=tuple(pair) if pair is not None else tuple(p + 1 for p in pair_positions),
        t_g=float(t_g),
        F=F,
        F_P=F_P,
        F_L=F_L,
        F_ZZ=F_ZZ,
        eps_L=1.0 - F_L,
        eps_PT=F_L - F_P,
        eps_ZZ=F_P - F_ZZ,
        eps_gate_ZZ=F_ZZ - F,
        leakage=leak,
    )
    try:
        if kind == "iswap":
            rep.phi_ZZ = iswap_phase_diagnostics(Us, n, pair_positions)
        else:
            rep.phi_CZ, rep.delta_phi_CZ = cz_phase_diagnostics(Us, n, pair_positions)
    except PhaseUndefinedError:
        pass
    return rep


# --------------------------------------------------------------------------
# Coherence-limited fidelities


@dataclass(frozen=True)
class CoherenceSpec:
    """Per-qubit T1 and T_phi in microseconds."""

    T1: tuple[float, ...]
    Tphi: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "T1", tuple(float(x) for x in self.T1))
        object.__setattr__(self, "Tphi", tuple(float(x) for x in self.Tphi))
        if len(self.T1) != len(self.Tphi):
            raise ValueError("T1 and Tphi need one entry per qubit")
        if any(not x > 0 for x in self.T1 + self.Tphi):
            raise ValueError("coherence times must be positive")

    @classmethod
    def uniform(cls, n: int, T1: float, Tphi: float | None = None) -> "CoherenceSpec":
        return cls((T1,) * n, ((Tphi if Tphi is not None else T1),) * n)

    @property
    def n(self) -> int:
        return len(self.T1)


def _r(t_g_ns: float, T_us: float) -> float:
    return t_g_ns / (1000.0 * T_us)


def coherence_limited(
    kind: str,
    t_g: float,
    spec: CoherenceSpec,
    pair: Sequence[int] = (0, 1),
    excited: int | None = None,
) -> float:
    """Coherence-limited average fidelity; ``t_g`` in ns, coherence times in us.

    ``pair`` are register positions of the target qubits; for CZ, ``excited``
    names the position that transiently occupies its second excited state.
    Identity-like operations (``kind="identity"``) and iSWAP use the
    symmetric d / (2 (d + 1)) coefficient on every qubit.
    """
    n = spec.n
    d = 2**n
    if kind in ("iswap", "identity"):
        coef = d / (2.0 * (d + 1))
        return 1.0 - coef * sum(_r(t_g, a) + _r(t_g, b) for a, b in zip(spec.T1, spec.Tphi))
    if kind != "cz":
        raise ValueError(f"unknown gate kind {kind!r}")
    if excited is None:
        raise ValueError("CZ needs the register position of the doubly excited qubit")
    if excited not in pair:
        raise ValueError("excited qubit must belong to the target pair")
    a = excited
    b = pair[1] if pair[0] == a else pair[0]
    if n == 2:
        return (
            1.0
            - 0.5 * _r(t_g, spec.T1[a])
            - 0.3 * _r(t_g, spec.T1[b])
            - 31.0 / 40.0 * _r(t_g, spec.Tphi[a])
            - 3.0 / 8.0 * _r(t_g, spec.Tphi[b])
        )
    if n == 4:
        rest = [k for k in range(n) if k not in (a, b)]
        return (
            1.0
            - 10.0 / 17.0 * _r(t_g, spec.T1[a])
            - 6.0 / 17.0 * _r(t_g, spec.T1[b])
            - 245.0 / 272.0 * _r(t_g, spec.Tphi[a])
            - 117.0 / 272.0 * _r(t_g, spec.Tphi[b])
            - 8.0 / 17.0 * sum(_r(t_g, spec.T1[k]) + _r(t_g, spec.Tphi[k]) for k in rest)
        )
    raise ValueError(f"CZ coherence limit is only available for 2 or 4 qubits, got {n}")


def total_fidelity(coherent: float, incoherent: float) -> float:
    """Combine errors additively: 1 - (1 - F_coh) - (1 - F_inc)."""
    return 1.0 - (1.0 - coherent) - (1.0 - incoherent)
