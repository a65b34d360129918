"""Hamiltonian assembly and the dispersive effective model.

Matrices are returned in angular GHz (2 pi x GHz), i.e. rad/ns.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from .circuit import CoupledModeModel
from .hilbert import Basis, basis_for_model, charge_product, exchange

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class HamiltonianConfig:
    rwa: bool = True
    include_coupler_coupler: bool = True


class HamiltonianTemplate:
    """H(omega) for a fixed model structure and basis.

    Diagonal: sum_m omega_m n_m + alpha_m/2 n_m (n_m - 1).
    Off-diagonal: sum_k prefactor_k sqrt(omega_m omega_n) X_k with X_k either
    the exchange operator (RWA) or -(a_m^dag - a_m)(a_n^dag - a_n).
    """

    def __init__(self, model: CoupledModeModel, basis: Basis | None = None, cfg: HamiltonianConfig | None = None):
        self.model = model
        self.cfg = cfg or HamiltonianConfig()
        self.basis = basis if basis is not None else basis_for_model(model)
        if tuple(self.basis.levels) != tuple(model.levels) or tuple(self.basis.names) != tuple(model.names):
            raise ValueError(
                f"basis modes {self.basis.names}/{self.basis.levels} do not match model "
                f"{tuple(model.names)}/{model.levels}"
            )
        occ = self.basis.labels.astype(float)
        self.occupations = occ
        self.duffing = (occ * (occ - 1) / 2) @ model.anharmonicities
        self.couplings = tuple(
            c for c in model.couplings if self.cfg.include_coupler_coupler or c.kind != "CC"
        )
        self.prefactors = np.array([c.prefactor for c in self.couplings])
        self.pairs = np.array([(c.m, c.n) for c in self.couplings], dtype=int).reshape(-1, 2)
        ops = []
        for c in self.couplings:
            if self.cfg.rwa:
                ops.append(exchange(c.m, c.n, self.basis))
            else:
                ops.append(-charge_product(c.m, c.n, self.basis))
        self.operators = ops
        # shared sparsity pattern so the off-diagonal part is one weighted sum
        dim = self.basis.dim
        if ops:
            mask = np.zeros((dim, dim), dtype=bool)
            for X in ops:
                mask |= X != 0
            rows, cols = np.nonzero(mask)
            self._rows, self._cols = rows, cols
            self._data = np.array([X[rows, cols] for X in ops])  # (n_couplings, nnz)
        else:
            self._rows = self._cols = np.zeros(0, dtype=int)
            self._data = np.zeros((0, 0))

    @property
    def dim(self) -> int:
        return self.basis.dim

    def coupling_values(self, frequencies: np.ndarray) -> np.ndarray:
        w = np.asarray(frequencies, dtype=float)
        if not len(self.couplings):
            return np.zeros(0)
        return self.prefactors * np.sqrt(w[self.pairs[:, 0]] * w[self.pairs[:, 1]])

    def diagonal(self, frequencies: np.ndarray) -> np.ndarray:
        return TWO_PI * (self.occupations @ np.asarray(frequencies, dtype=float) + self.duffing)

    def offdiag_data(self, frequencies: np.ndarray, g: np.ndarray | None = None) -> np.ndarray:
        if g is None:
            g = self.coupling_values(frequencies)
        if not len(g):
            return np.zeros(0)
        return TWO_PI * (g @ self._data)

    def dense(self, frequencies: np.ndarray | None = None, g: np.ndarray | None = None) -> np.ndarray:
        w = self.model.frequencies if frequencies is None else np.asarray(frequencies, dtype=float)
        H = np.diag(self.diagonal(w))
        if len(self._rows):
            H[self._rows, self._cols] += self.offdiag_data(w, g)
        return H

    def sparse(self, frequencies: np.ndarray | None = None, g: np.ndarray | None = None) -> sp.csr_matrix:
        w = self.model.frequencies if frequencies is None else np.asarray(frequencies, dtype=float)
        off = sp.csr_matrix((self.offdiag_data(w, g), (self._rows, self._cols)), shape=(self.dim, self.dim))
        return (off + sp.diags(self.diagonal(w))).tocsr()


def build_hamiltonian(
    model: CoupledModeModel,
    basis: Basis | None = None,
    cfg: HamiltonianConfig | None = None,
    frequencies: np.ndarray | None = None,
) -> np.ndarray:
    """Dense Hamiltonian of ``model`` on ``basis`` (default: full product space)."""
    return HamiltonianTemplate(model, basis, cfg).dense(frequencies)


# --------------------------------------------------------------------------
# Dispersive (Schrieffer-Wolff) model


class EffectiveModelError(ValueError):
    pass


@dataclass(frozen=True)
class EffectiveUnit:
    unit: int
    omega_Q: float  # renormalized qubit frequency (GHz)
    g_QR: float  # effective qubit-resonator coupling (GHz)
    delta_QC: float
    delta_RC: float
    delta_composite: float
    idle: bool


@dataclass(frozen=True)
class EffectiveModel:
    units: tuple[EffectiveUnit, ...]
    omega_R: float
    g_QQ: dict  # {(i, j): GHz} for i < j, 1-based units

    def pair(self, i: int, j: int) -> float:
        return self.g_QQ[(min(i, j), max(i, j))]

    def to_dict(self) -> dict:
        return {
            "omega_R_ghz": self.omega_R,
            "units": [u.__dict__ for u in self.units],
            "g_QQ_ghz": {f"Q{i}-Q{j}": v for (i, j), v in self.g_QQ.items()},
        }


def _inv(delta: float, what: str) -> float:
    if delta == 0.0:
        raise EffectiveModelError(f"exact resonance between {what}")
    return 1.0 / delta


def effective_model(
    model: CoupledModeModel, idle_threshold: float = 1e-3, dispersive_ratio: float = 0.2
) -> EffectiveModel:
    """Second-order elimination of the couplers.

    ``idle_threshold`` (GHz) bounds |g~_QR| for a unit to count as idle.
    A warning is issued when any |g/Delta| exceeds ``dispersive_ratio``.
    """
    n = model.n_units
    w = model.frequencies
    wR = w[model.resonator]
    shifts_R = 0.0
    raw = []
    for i in range(1, n + 1):
        q, c = model.qubit(i), model.coupler(i)
        g_qc = model.g(f"Q{i}", f"C{i}")
        g_cr = model.g(f"C{i}", "R")
        g_qr = model.g(f"Q{i}", "R")
        d_qc = w[q] - w[c]
        d_rc = wR - w[c]
        inv_qc = _inv(d_qc, f"Q{i} and C{i}")
        inv_rc = _inv(d_rc, f"R and C{i}")
        for g, d, what in ((g_qc, d_qc, f"Q{i}-C{i}"), (g_cr, d_rc, f"C{i}-R")):
            if abs(g) > dispersive_ratio * abs(d):
                warnings.warn(f"{what}: |g/Delta| = {abs(g / d):.2f}, outside the dispersive regime", stacklevel=2)
        inv_i = 0.5 * (inv_qc + inv_rc)
        if inv_i == 0.0:
            raise EffectiveModelError(f"composite detuning of unit {i} diverges")
        d_i = 1.0 / inv_i
        wq = w[q] + g_qc**2 * inv_qc
        gt = g_qc * g_cr * inv_i + g_qr
        shifts_R += g_cr**2 * inv_rc
        raw.append((i, wq, gt, d_qc, d_rc, d_i))
    wR_t = wR + shifts_R
    units = tuple(
        EffectiveUnit(i, wq, gt, d_qc, d_rc, d_i, bool(abs(gt) < idle_threshold and d_i < 0))
        for i, wq, gt, d_qc, d_rc, d_i in raw
    )
    gqq = {}
    for a in units:
        for b in units:
            if b.unit <= a.unit:
                continue
            inv_a = _inv(a.omega_Q - wR_t, f"Q{a.unit} and R (renormalized)")
            inv_b = _inv(b.omega_Q - wR_t, f"Q{b.unit} and R (renormalized)")
            gqq[(a.unit, b.unit)] = 0.5 * a.g_QR * b.g_QR * (inv_a + inv_b)
    return EffectiveModel(units, wR_t, gqq)


def decoupling_frequency(model: CoupledModeModel, unit: int, bracket: tuple[float, float] = (4.6, 9.0)) -> float:
    """Coupler frequency (GHz) at which unit ``unit`` has g~_QR = 0.

    Only that unit's coupler is varied; the root is bracketed above the
    qubit, where the coupler path and the direct path have opposite sign.
    """
    name = f"C{unit}"

    def g_tilde(wc: float) -> float:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            m = model.with_frequencies({name: wc})
            return effective_model(m, idle_threshold=0.0).units[unit - 1].g_QR

    lo = max(bracket[0], model.frequencies[model.qubit(unit)] + 0.05)
    hi = bracket[1]
    a, b = g_tilde(lo), g_tilde(hi)
    if a * b > 0:
        raise EffectiveModelError(f"no decoupling point for unit {unit} in [{lo:.3f}, {hi:.3f}] GHz")
    return float(brentq(g_tilde, lo, hi, xtol=1e-9))
