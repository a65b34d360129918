"""Lumped-circuit description of qubit-coupler units on a shared bus, and its quantization.

Conventions: capacitances in fF, frequencies and energies in GHz (ordinary
frequency, E/h).  Mode order is ``Q1, C1, R, C2, Q2, C3, Q3, ...``.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.constants import e, h, hbar

DEFAULT_LEVELS = {"Q": 3, "C": 3, "R": 3}


class CircuitValidationError(ValueError):
    """Raised for a physically meaningless circuit description.

    ``field`` names the offending entry (dotted path into the config).
    """

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def charging_energy_to_capacitance(E_C: float) -> float:
    """E_C/h in GHz -> capacitance in fF, from E_C = e^2 / 2C."""
    return e**2 / (2.0 * h * E_C * 1e9) * 1e15


def capacitance_to_charging_energy(C: float) -> float:
    return e**2 / (2.0 * h * C * 1e-15) / 1e9


def resonator_capacitance(f_R: float, Z0: float) -> float:
    """Lumped capacitance (fF) of the fundamental half-wave mode, 1/(4 f_R Z0).

    ``f_R`` in GHz, ``Z0`` in ohm.
    """
    if not f_R > 0:
        raise CircuitValidationError("resonator.frequency", f"must be > 0, got {f_R}")
    if not Z0 > 0:
        raise CircuitValidationError("resonator.impedance", f"must be > 0, got {Z0}")
    return 1.0 / (4.0 * f_R * 1e9 * Z0) * 1e15


@dataclass(frozen=True)
class TransmonParams:
    E_J: float
    E_C: float

    @property
    def capacitance(self) -> float:
        """Self-capacitance in fF."""
        return charging_energy_to_capacitance(self.E_C)

    @property
    def frequency(self) -> float:
        return math.sqrt(8.0 * self.E_J * self.E_C) - self.E_C

    @property
    def anharmonicity(self) -> float:
        return -self.E_C

    @property
    def phi_zpf(self) -> float:
        """Zero-point flux fluctuation (Wb)."""
        omega = 2 * math.pi * self.frequency * 1e9
        return math.sqrt(hbar / (2 * self.capacitance * 1e-15 * omega))

    @property
    def q_zpf(self) -> float:
        """Zero-point charge fluctuation (C)."""
        omega = 2 * math.pi * self.frequency * 1e9
        return math.sqrt(hbar * self.capacitance * 1e-15 * omega / 2)

    def regime_warnings(self) -> list[str]:
        ratio = self.E_J / self.E_C
        if ratio < 20:
            return [f"E_J/E_C = {ratio:.1f} is below the transmon regime (>= 20)"]
        return []


def transmon_from_target(frequency: float, anharmonicity: float) -> TransmonParams:
    """Invert omega = sqrt(8 E_J E_C) - E_C, alpha = -E_C for target values (GHz)."""
    if not frequency > 0:
        raise CircuitValidationError("frequency", f"must be > 0, got {frequency}")
    if not anharmonicity < 0:
        raise CircuitValidationError("anharmonicity", f"must be < 0, got {anharmonicity}")
    E_C = -anharmonicity
    E_J = (frequency + E_C) ** 2 / (8.0 * E_C)
    return TransmonParams(E_J=E_J, E_C=E_C)


@dataclass(frozen=True)
class QubitCouplerUnit:
    C_QC: float
    C_QR: float
    C_CR: float
    qubit: TransmonParams
    coupler: TransmonParams
    a: float = 1.0

    def hierarchy_warnings(self, ratio: float = 10.0) -> list[str]:
        """Flag violations of C_Q, C_C >> C_QC, C_CR >> C_QR (by ``ratio``)."""
        out = []
        C_Q, C_C = self.qubit.capacitance, self.coupler.capacitance
        big = max(self.C_QC, self.C_CR)
        if min(C_Q, C_C) < ratio * big:
            out.append(
                f"self-capacitances ({C_Q:.1f}, {C_C:.1f} fF) not >> coupling "
                f"capacitances (max {big:.1f} fF)"
            )
        if self.C_QR > 0 and min(self.C_QC, self.C_CR) < ratio * self.C_QR:
            out.append(f"C_QR = {self.C_QR} fF not << C_QC, C_CR")
        return out


@dataclass(frozen=True)
class CircuitSpec:
    units: tuple[QubitCouplerUnit, ...]
    f_R: float
    Z0: float = 50.0
    fock_levels: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_LEVELS))

    def __post_init__(self):
        object.__setattr__(self, "units", tuple(self.units))
        levels = dict(DEFAULT_LEVELS)
        levels.update(self.fock_levels or {})
        object.__setattr__(self, "fock_levels", levels)
        self.validate()

    @property
    def n_units(self) -> int:
        return len(self.units)

    @property
    def C_R(self) -> float:
        return resonator_capacitance(self.f_R, self.Z0)

    def validate(self) -> None:
        resonator_capacitance(self.f_R, self.Z0)
        if not self.units:
            raise CircuitValidationError("units", "at least one qubit-coupler unit is required")
        for i, u in enumerate(self.units):
            for name in ("C_QC", "C_QR", "C_CR"):
                val = getattr(u, name)
                if not val >= 0 or not math.isfinite(val):
                    raise CircuitValidationError(f"units[{i}].{name}", f"must be >= 0, got {val}")
            for role in ("qubit", "coupler"):
                tp = getattr(u, role)
                if not (tp.E_J > 0 and tp.E_C > 0):
                    raise CircuitValidationError(f"units[{i}].{role}", "E_J and E_C must be > 0")
            if abs(u.a) > math.sqrt(2) + 1e-12:
                raise CircuitValidationError(f"units[{i}].a", f"|a| must be <= sqrt(2), got {u.a}")
        for role, n in self.fock_levels.items():
            if role not in ("Q", "C", "R") or int(n) < 2:
                raise CircuitValidationError(f"fock_levels.{role}", f"need >= 2 levels, got {n}")

    def warnings(self) -> list[str]:
        out = []
        for i, u in enumerate(self.units):
            out += [f"unit {i + 1}: {w}" for w in u.hierarchy_warnings()]
            out += [f"unit {i + 1} qubit: {w}" for w in u.qubit.regime_warnings()]
            out += [f"unit {i + 1} coupler: {w}" for w in u.coupler.regime_warnings()]
        return out


def mode_names(n_units: int) -> list[str]:
    names = ["Q1", "C1", "R"]
    for j in range(2, n_units + 1):
        names += [f"C{j}", f"Q{j}"]
    return names


def _node_index(n_units: int) -> dict[str, int]:
    return {name: i for i, name in enumerate(mode_names(n_units))}


def build_capacitance_matrix(spec: CircuitSpec) -> np.ndarray:
    """Maxwell capacitance matrix (fF) over the node fluxes, in mode order.

    The resonator node enters through the sampled flux a_j * Phi_R, so its
    diagonal picks up a_j^2 (C_QR + C_CR) from each unit.
    """
    idx = _node_index(spec.n_units)
    C = np.zeros((len(idx), len(idx)))
    r = idx["R"]
    C[r, r] = spec.C_R
    for j, u in enumerate(spec.units, start=1):
        q, c = idx[f"Q{j}"], idx[f"C{j}"]
        C[q, q] = u.qubit.capacitance + u.C_QR + u.C_QC
        C[c, c] = u.coupler.capacitance + u.C_CR + u.C_QC
        C[r, r] += u.a**2 * (u.C_QR + u.C_CR)
        C[q, c] = C[c, q] = -u.C_QC
        C[q, r] = C[r, q] = -u.a * u.C_QR
        C[c, r] = C[r, c] = -u.a * u.C_CR
    return C


def _self_caps(spec: CircuitSpec, self_capacitance: str) -> tuple[list[float], list[float], float]:
    if self_capacitance == "bare":
        CQ = [u.qubit.capacitance for u in spec.units]
        CC = [u.coupler.capacitance for u in spec.units]
        return CQ, CC, spec.C_R
    if self_capacitance == "diagonal":
        C = build_capacitance_matrix(spec)
        idx = _node_index(spec.n_units)
        CQ = [C[idx[f"Q{j}"], idx[f"Q{j}"]] for j in range(1, spec.n_units + 1)]
        CC = [C[idx[f"C{j}"], idx[f"C{j}"]] for j in range(1, spec.n_units + 1)]
        return CQ, CC, C[idx["R"], idx["R"]]
    raise ValueError(f"self_capacitance must be 'bare' or 'diagonal', got {self_capacitance!r}")


def leading_order_inverse(
    spec: CircuitSpec, self_capacitance: str = "diagonal"
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic leading-order inverse capacitance matrix (1/fF).

    Returns ``(D, retained)`` where ``retained`` is a boolean mask of the
    elements kept at leading order; dropped elements (qubit to other-unit
    coupler, qubit to other qubit) are zero in ``D``.
    """
    CQ, CC, CR = _self_caps(spec, self_capacitance)
    idx = _node_index(spec.n_units)
    n = len(idx)
    D = np.zeros((n, n))
    keep = np.zeros((n, n), dtype=bool)
    r = idx["R"]

    def put(i, k, val):
        D[i, k] = D[k, i] = val
        keep[i, k] = keep[k, i] = True

    put(r, r, 1.0 / CR)
    for j, u in enumerate(spec.units, start=1):
        q, c = idx[f"Q{j}"], idx[f"C{j}"]
        cq, cc = CQ[j - 1], CC[j - 1]
        put(q, q, 1.0 / cq)
        put(c, c, 1.0 / cc)
        put(q, c, u.C_QC / (cq * cc))
        put(c, r, u.a * u.C_CR / (cc * CR))
        put(q, r, u.a * (u.C_QR * cc + u.C_QC * u.C_CR) / (cq * cc * CR))
    for i, ui in enumerate(spec.units, start=1):
        for j, uj in enumerate(spec.units, start=1):
            if j <= i:
                continue
            ci, cj = idx[f"C{i}"], idx[f"C{j}"]
            put(ci, cj, ui.a * uj.a * ui.C_CR * uj.C_CR / (CC[i - 1] * CC[j - 1] * CR))
    return D, keep


@dataclass(frozen=True)
class Mode:
    name: str
    role: str  # "Q", "C" or "R"
    unit: int  # 1-based unit index, 0 for the resonator
    frequency: float
    anharmonicity: float
    levels: int


@dataclass(frozen=True)
class Coupling:
    m: int
    n: int
    kind: str  # "QC", "CR", "QR" or "CC"
    prefactor: float  # g = prefactor * sqrt(omega_m omega_n)


@dataclass(frozen=True)
class CoupledModeModel:
    """Quantized model: Duffing modes plus bilinear charge couplings."""

    modes: tuple[Mode, ...]
    couplings: tuple[Coupling, ...]

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.modes]

    @property
    def n_units(self) -> int:
        return sum(1 for m in self.modes if m.role == "Q")

    @property
    def frequencies(self) -> np.ndarray:
        return np.array([m.frequency for m in self.modes])

    @property
    def anharmonicities(self) -> np.ndarray:
        return np.array([m.anharmonicity for m in self.modes])

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(m.levels for m in self.modes)

    def index(self, name: str) -> int:
        for i, m in enumerate(self.modes):
            if m.name == name:
                return i
        raise KeyError(f"no mode named {name!r}")

    def qubit(self, unit: int) -> int:
        return self.index(f"Q{unit}")

    def coupler(self, unit: int) -> int:
        return self.index(f"C{unit}")

    @property
    def resonator(self) -> int:
        return self.index("R")

    def coupling_values(self, frequencies: np.ndarray | None = None) -> np.ndarray:
        w = self.frequencies if frequencies is None else np.asarray(frequencies, dtype=float)
        return np.array([c.prefactor * math.sqrt(w[c.m] * w[c.n]) for c in self.couplings])

    def coupling_map(self) -> dict[str, float]:
        g = self.coupling_values()
        return {
            f"{self.modes[c.m].name}-{self.modes[c.n].name}": float(v)
            for c, v in zip(self.couplings, g)
        }

    def g(self, a: str, b: str) -> float:
        ia, ib = self.index(a), self.index(b)
        for c, v in zip(self.couplings, self.coupling_values()):
            if {c.m, c.n} == {ia, ib}:
                return float(v)
        return 0.0

    def with_frequencies(self, updates: Mapping[str, float] | None = None, **kw: float) -> "CoupledModeModel":
        upd = dict(updates or {})
        upd.update(kw)
        modes = list(self.modes)
        for name, f in upd.items():
            i = self.index(name)
            modes[i] = replace(modes[i], frequency=float(f))
        return replace(self, modes=tuple(modes))

    def with_levels(self, levels: Mapping[str, int]) -> "CoupledModeModel":
        modes = tuple(replace(m, levels=int(levels.get(m.role, m.levels))) for m in self.modes)
        return replace(self, modes=modes)

    def without_couplings(self, kinds: Sequence[str] = ("QC", "CR", "QR", "CC")) -> "CoupledModeModel":
        return replace(self, couplings=tuple(c for c in self.couplings if c.kind not in kinds))

    def scaled_couplings(self, factor: float) -> "CoupledModeModel":
        return replace(
            self,
            couplings=tuple(replace(c, prefactor=c.prefactor * factor) for c in self.couplings),
        )

    def to_dict(self) -> dict:
        return {
            "modes": [
                {
                    "name": m.name,
                    "role": m.role,
                    "unit": m.unit,
                    "frequency_ghz": m.frequency,
                    "anharmonicity_ghz": m.anharmonicity,
                    "levels": m.levels,
                }
                for m in self.modes
            ],
            "couplings": [
                {
                    "modes": [self.modes[c.m].name, self.modes[c.n].name],
                    "kind": c.kind,
                    "prefactor": c.prefactor,
                    "g_ghz": float(v),
                }
                for c, v in zip(self.couplings, self.coupling_values())
            ],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CoupledModeModel":
        modes = tuple(
            Mode(m["name"], m["role"], int(m["unit"]), float(m["frequency_ghz"]),
                 float(m["anharmonicity_ghz"]), int(m["levels"]))
            for m in d["modes"]
        )
        names = [m.name for m in modes]
        couplings = tuple(
            Coupling(names.index(c["modes"][0]), names.index(c["modes"][1]), c["kind"], float(c["prefactor"]))
            for c in d["couplings"]
        )
        return cls(modes, couplings)


def coupling_strengths(
    spec: CircuitSpec,
    include_coupler_coupler: bool = True,
    self_capacitance: str = "bare",
) -> CoupledModeModel:
    """Quantize ``spec`` into a CoupledModeModel at the transmons' own frequencies.

    Every coupling is stored as a capacitance prefactor so that g can be
    re-evaluated at instantaneous frequencies: g = prefactor * sqrt(w_m w_n).
    """
    CQ, CC, CR = _self_caps(spec, self_capacitance)
    idx = _node_index(spec.n_units)
    lv = spec.fock_levels
    modes: list[Mode | None] = [None] * len(idx)
    modes[idx["R"]] = Mode("R", "R", 0, spec.f_R, 0.0, int(lv["R"]))
    couplings = []
    for j, u in enumerate(spec.units, start=1):
        q, c = idx[f"Q{j}"], idx[f"C{j}"]
        modes[q] = Mode(f"Q{j}", "Q", j, u.qubit.frequency, u.qubit.anharmonicity, int(lv["Q"]))
        modes[c] = Mode(f"C{j}", "C", j, u.coupler.frequency, u.coupler.anharmonicity, int(lv["C"]))
        cq, cc = CQ[j - 1], CC[j - 1]
        couplings.append(Coupling(q, c, "QC", 0.5 * u.C_QC / math.sqrt(cq * cc)))
        couplings.append(Coupling(c, idx["R"], "CR", 0.5 * u.a * u.C_CR / math.sqrt(cc * CR)))
        # composite direct qubit-resonator path; the 1/C_C here keeps the
        # prefactor dimensionless (charge-zpf normalization of D_QR)
        couplings.append(
            Coupling(q, idx["R"], "QR", 0.5 * u.a * (u.C_QR * cc + u.C_QC * u.C_CR) / (cc * math.sqrt(cq * CR)))
        )
    if include_coupler_coupler:
        for i, ui in enumerate(spec.units, start=1):
            for j, uj in enumerate(spec.units, start=1):
                if j <= i:
                    continue
                pref = 0.5 * ui.a * uj.a * ui.C_CR * uj.C_CR / (math.sqrt(CC[i - 1] * CC[j - 1]) * CR)
                couplings.append(Coupling(idx[f"C{i}"], idx[f"C{j}"], "CC", pref))
    return CoupledModeModel(tuple(modes), tuple(couplings))


# --------------------------------------------------------------------------
# JSON I/O


def _transmon_from_dict(d: Mapping, where: str) -> TransmonParams:
    if "E_J_ghz" in d and "E_C_ghz" in d:
        return TransmonParams(float(d["E_J_ghz"]), float(d["E_C_ghz"]))
    if "frequency_ghz" in d and "anharmonicity_ghz" in d:
        try:
            return transmon_from_target(float(d["frequency_ghz"]), float(d["anharmonicity_ghz"]))
        except CircuitValidationError as exc:
            raise CircuitValidationError(f"{where}.{exc.field}", str(exc).split(": ", 1)[1]) from None
    raise CircuitValidationError(
        where, "needs either (E_J_ghz, E_C_ghz) or (frequency_ghz, anharmonicity_ghz)"
    )


def spec_from_dict(d: Mapping) -> CircuitSpec:
    res = d.get("resonator", {})
    units = []
    for i, ud in enumerate(d.get("units", [])):
        units.append(
            QubitCouplerUnit(
                C_QC=float(ud["C_QC_fF"]),
                C_QR=float(ud["C_QR_fF"]),
                C_CR=float(ud["C_CR_fF"]),
                qubit=_transmon_from_dict(ud["qubit"], f"units[{i}].qubit"),
                coupler=_transmon_from_dict(ud["coupler"], f"units[{i}].coupler"),
                a=float(ud.get("a", 1.0)),
            )
        )
    return CircuitSpec(
        units=tuple(units),
        f_R=float(res.get("frequency_ghz", 0.0)),
        Z0=float(res.get("impedance_ohm", 50.0)),
        fock_levels=dict(d.get("fock_levels", DEFAULT_LEVELS)),
    )


def spec_to_dict(spec: CircuitSpec) -> dict:
    def tp(t: TransmonParams) -> dict:
        return {"E_J_ghz": t.E_J, "E_C_ghz": t.E_C}

    return {
        "resonator": {"frequency_ghz": spec.f_R, "impedance_ohm": spec.Z0},
        "units": [
            {
                "C_QC_fF": u.C_QC,
                "C_QR_fF": u.C_QR,
                "C_CR_fF": u.C_CR,
                "a": u.a,
                "qubit": tp(u.qubit),
                "coupler": tp(u.coupler),
            }
            for u in spec.units
        ],
        "fock_levels": dict(spec.fock_levels),
    }


def load_spec(path: str | Path) -> CircuitSpec:
    with open(path) as fh:
        return spec_from_dict(json.load(fh))


# --------------------------------------------------------------------------
# Reference device

REFERENCE_CAPACITANCES = (3.7, 1.0, 37.4)  # (C_QC, C_QR, C_CR) in fF
REFERENCE_ALPHA_Q = -0.220
REFERENCE_ALPHA_C = -0.268
REFERENCE_F_R = 3.85
TWO_QUBIT_IDLE = {"qubits": (4.0, 4.3), "couplers": (6.5, 6.5)}
FOUR_QUBIT_IDLE = {"qubits": (4.00, 4.09, 4.18, 4.27), "couplers": (5.849, 5.9227, 5.9991, 6.0782)}


def reference_spec(
    qubit_frequencies: Sequence[float] = TWO_QUBIT_IDLE["qubits"],
    coupler_frequencies: Sequence[float] | None = None,
    Z0: float = 50.0,
    fock_levels: Mapping[str, int] | None = None,
) -> CircuitSpec:
    """Reference device: uniform (3.7, 1.0, 37.4) fF units, f_R = 3.85 GHz."""
    n = len(qubit_frequencies)
    if coupler_frequencies is None:
        coupler_frequencies = [6.5] * n
    if len(coupler_frequencies) != n:
        raise CircuitValidationError("couplers", "need one coupler frequency per qubit")
    C_QC, C_QR, C_CR = REFERENCE_CAPACITANCES
    units = tuple(
        QubitCouplerUnit(
            C_QC, C_QR, C_CR,
            qubit=transmon_from_target(fq, REFERENCE_ALPHA_Q),
            coupler=transmon_from_target(fc, REFERENCE_ALPHA_C),
        )
        for fq, fc in zip(qubit_frequencies, coupler_frequencies)
    )
    return CircuitSpec(units, REFERENCE_F_R, Z0, dict(fock_levels or DEFAULT_LEVELS))


def reference_model(
    qubit_frequencies: Sequence[float] = TWO_QUBIT_IDLE["qubits"],
    coupler_frequencies: Sequence[float] | None = None,
    **kw,
) -> CoupledModeModel:
    return coupling_strengths(reference_spec(qubit_frequencies, coupler_frequencies, **kw))


def check_spec(spec: CircuitSpec) -> None:
    for w in spec.warnings():
        warnings.warn(w, stacklevel=2)
