"""Exact diagonalization, adiabatic labeling, avoided crossings and residual ZZ."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .circuit import CoupledModeModel
from .hamiltonian import HamiltonianConfig, HamiltonianTemplate
from .hilbert import Basis, basis_for_model

TWO_PI = 2.0 * math.pi


class SpectrumError(RuntimeError):
    pass


class TrackingWarning(UserWarning):
    pass


def greedy_assignment(overlaps: np.ndarray) -> np.ndarray:
    """Bijective greedy maximal-overlap matching.

    ``overlaps[r, k]`` is the weight of reference r on eigenvector k.  Returns
    for each reference the eigenvector index.  Ties are broken by index order.
    """
    n_ref, n_vec = overlaps.shape
    if n_ref > n_vec:
        raise ValueError("more references than eigenvectors")
    order = np.argsort(-overlaps, axis=None, kind="stable")
    out = np.full(n_ref, -1)
    used_r = np.zeros(n_ref, dtype=bool)
    used_k = np.zeros(n_vec, dtype=bool)
    left = n_ref
    for flat in order:
        r, k = divmod(int(flat), n_vec)
        if used_r[r] or used_k[k]:
            continue
        out[r] = k
        used_r[r] = used_k[k] = True
        left -= 1
        if not left:
            break
    return out


@dataclass
class TrackedSpectrum:
    values: np.ndarray  # sweep parameter
    labels: list[tuple[int, ...]]  # tracked bare labels
    energies: np.ndarray  # (n_points, n_labels) GHz, ground-referenced
    overlaps: np.ndarray  # (n_points, n_labels) weight on the tracking reference
    eigenvalues: np.ndarray  # (n_points, dim) ascending, GHz, ground-referenced
    warnings: list[str] = field(default_factory=list)

    def branch(self, label: Sequence[int]) -> np.ndarray:
        return self.energies[:, self.labels.index(tuple(label))]

    def to_rows(self) -> tuple[list[str], list[list[float]]]:
        header = ["value"] + ["E_" + "".join(map(str, lab)) for lab in self.labels]
        rows = [[float(v)] + [float(e) for e in E] for v, E in zip(self.values, self.energies)]
        return header, rows


def eigen_tracked(
    hamiltonian: Callable[[float], np.ndarray],
    values: Sequence[float],
    basis: Basis,
    labels: Sequence[Sequence[int]] | None = None,
    subtract_ground: bool = True,
    min_overlap: float = 0.5,
) -> TrackedSpectrum:
    """Diagonalize ``hamiltonian(x)`` (angular GHz) along ``values`` and follow branches.

    Step 0 is matched to bare labels; each later step is matched to the
    eigenvectors assigned at the previous step.
    """
    values = np.asarray(values, dtype=float)
    if labels is None:
        labels = [tuple(int(x) for x in lab) for lab in basis.labels]
    labels = [tuple(int(x) for x in lab) for lab in labels]
    idx = np.array([basis.index(lab) for lab in labels])
    ref = np.zeros((basis.dim, len(labels)), dtype=complex)
    ref[idx, np.arange(len(labels))] = 1.0
    E = np.zeros((len(values), len(labels)))
    W = np.zeros_like(E)
    all_ev = np.zeros((len(values), basis.dim))
    notes = []
    for s, x in enumerate(values):
        ev, V = np.linalg.eigh(hamiltonian(float(x)))
        ev = ev / TWO_PI
        ov = np.abs(ref.conj().T @ V) ** 2
        assign = greedy_assignment(ov)
        w = ov[np.arange(len(labels)), assign]
        low = np.flatnonzero(w < min_overlap)
        if len(low):
            msg = f"step {s}: tracking overlap {w[low].min():.3f} below {min_overlap} for label {labels[low[0]]}"
            notes.append(msg)
            warnings.warn(msg, TrackingWarning, stacklevel=2)
        zero = ev[0] if subtract_ground else 0.0
        E[s] = ev[assign] - zero
        W[s] = w
        all_ev[s] = ev - zero
        ref = V[:, assign]
    return TrackedSpectrum(values, labels, E, W, all_ev, notes)


def dressed_energies(
    H: np.ndarray, basis: Basis, labels: Sequence[Sequence[int]]
) -> tuple[np.ndarray, np.ndarray]:
    """Energies (GHz) of the eigenstates with greedy maximal overlap on ``labels``.

    Returns ``(energies, overlaps)``.
    """
    ev, V = np.linalg.eigh(H)
    idx = [basis.index(lab) for lab in labels]
    ov = np.abs(V[idx, :]) ** 2
    assign = greedy_assignment(ov)
    return ev[assign] / TWO_PI, ov[np.arange(len(idx)), assign]


# --------------------------------------------------------------------------
# Avoided crossings


@dataclass(frozen=True)
class SplittingResult:
    coupling: float  # half the minimum gap (GHz)
    gap: float
    location: float  # sweep value of the minimum (GHz)
    sweep_mode: str


def _excite(model: CoupledModeModel, occupations: dict[str, int]) -> tuple[int, ...]:
    lab = [0] * len(model.modes)
    for name, k in occupations.items():
        lab[model.index(name)] = k
    return tuple(lab)


def _pair_gap_function(
    model: CoupledModeModel,
    sweep_mode: str,
    labels: Sequence[tuple[int, ...]],
    rwa: bool,
    manifold: int | None,
) -> Callable[[float], float]:
    cfg = HamiltonianConfig(rwa=rwa)
    basis = basis_for_model(model, manifold=manifold if rwa else None)
    tmpl = HamiltonianTemplate(model, basis, cfg)
    k = model.index(sweep_mode)
    idx = [basis.index(lab) for lab in labels]
    w0 = model.frequencies.copy()

    def gap(x: float) -> float:
        w = w0.copy()
        w[k] = x
        ev, V = np.linalg.eigh(tmpl.dense(w))
        weight = (np.abs(V[idx, :]) ** 2).sum(axis=0)
        top = np.sort(np.argsort(weight)[-2:])
        return float(abs(ev[top[1]] - ev[top[0]]) / TWO_PI)

    return gap


def _minimize_gap(gap, center: float, window: float, n_grid: int, sweep_mode: str) -> SplittingResult:
    xs = np.linspace(center - window, center + window, n_grid)
    gs = np.array([gap(x) for x in xs])
    i = int(np.argmin(gs))
    if i == 0 or i == len(xs) - 1:
        raise SpectrumError(
            f"no local gap minimum inside [{xs[0]:.4f}, {xs[-1]:.4f}] GHz sweeping {sweep_mode}"
        )
    res = minimize_scalar(gap, bounds=(xs[i - 1], xs[i + 1]), method="bounded", options={"xatol": 1e-9})
    x, g = (float(res.x), float(res.fun)) if res.fun <= gs[i] else (float(xs[i]), float(gs[i]))
    return SplittingResult(0.5 * g, g, x, sweep_mode)


def exchange_coupling(
    model: CoupledModeModel,
    pair: tuple[int, int] = (1, 2),
    rwa: bool = False,
    window: float = 0.08,
    n_grid: int = 33,
) -> SplittingResult:
    """Half the minimum |1_i> / |1_j> splitting, sweeping qubit j through qubit i."""
    i, j = pair
    labels = [_excite(model, {f"Q{i}": 1}), _excite(model, {f"Q{j}": 1})]
    gap = _pair_gap_function(model, f"Q{j}", labels, rwa, 1)
    center = model.frequencies[model.qubit(i)]
    return _minimize_gap(gap, center, window, n_grid, f"Q{j}")


def cz_coupling(
    model: CoupledModeModel,
    pair: tuple[int, int] = (1, 2),
    rwa: bool = False,
    window: float = 0.08,
    n_grid: int = 33,
    center: float | None = None,
) -> SplittingResult:
    """Half the minimum |1_i 1_j> / |2_j> splitting, sweeping qubit j.

    Qubit j is the one that is doubly excited; the sweep is centred on
    omega_j = omega_i - alpha_j.
    """
    i, j = pair
    labels = [_excite(model, {f"Q{i}": 1, f"Q{j}": 1}), _excite(model, {f"Q{j}": 2})]
    gap = _pair_gap_function(model, f"Q{j}", labels, rwa, 2)
    if center is None:
        center = model.frequencies[model.qubit(i)] - model.anharmonicities[model.qubit(j)]
    return _minimize_gap(gap, center, window, n_grid, f"Q{j}")


# --------------------------------------------------------------------------
# Residual ZZ


@dataclass(frozen=True)
class ZZReport:
    pair: tuple[int, int]
    zeta_khz: float
    energies: dict  # {"00": GHz, "10": ..., "01": ..., "11": ...}
    min_overlap: float

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "zeta_khz": self.zeta_khz,
            "energies_ghz": self.energies,
            "min_overlap": self.min_overlap,
        }


class ZZCalculator:
    """Reusable ZZ evaluation over frequency settings of a fixed model structure."""

    def __init__(self, model: CoupledModeModel, rwa: bool = False, n_max: int | None = None):
        self.model = model
        self.rwa = rwa
        if n_max is None and rwa:
            n_max = 2
        self.basis = basis_for_model(model, n_max=n_max)
        self.template = HamiltonianTemplate(model, self.basis, HamiltonianConfig(rwa=rwa))
        self._blocks = self.basis.manifold_indices() if rwa else None

    def _eig_subset(self, H: np.ndarray, labels: Sequence[tuple[int, ...]]):
        idx = [self.basis.index(lab) for lab in labels]
        if self._blocks is None:
            ev, V = np.linalg.eigh(H)
            ov = np.abs(V[idx, :]) ** 2
            a = greedy_assignment(ov)
            return ev[a] / TWO_PI, ov[np.arange(len(idx)), a]
        # RWA: diagonalize each manifold separately
        energies = np.zeros(len(idx))
        weights = np.zeros(len(idx))
        N = self.basis.excitations
        for n in sorted({int(N[k]) for k in idx}):
            blk = self._blocks[n]
            sel = [r for r, k in enumerate(idx) if N[k] == n]
            ev, V = np.linalg.eigh(H[np.ix_(blk, blk)])
            pos = {int(b): p for p, b in enumerate(blk)}
            ov = np.abs(V[[pos[idx[r]] for r in sel], :]) ** 2
            a = greedy_assignment(ov)
            energies[sel] = ev[a] / TWO_PI
            weights[sel] = ov[np.arange(len(sel)), a]
        return energies, weights

    def __call__(self, pair: tuple[int, int], frequencies: np.ndarray | None = None, offset: float = 0.0) -> ZZReport:
        i, j = pair
        m = self.model
        keys = ["00", "10", "01", "11"]
        labels = [
            _excite(m, {}),
            _excite(m, {f"Q{i}": 1}),
            _excite(m, {f"Q{j}": 1}),
            _excite(m, {f"Q{i}": 1, f"Q{j}": 1}),
        ]
        H = self.template.dense(frequencies)
        if offset:
            H = H + TWO_PI * offset * np.eye(len(H))
        E, w = self._eig_subset(H, labels)
        zeta = (E[3] - E[1] - E[2] + E[0]) * 1e6
        return ZZReport((i, j), float(zeta), dict(zip(keys, map(float, E))), float(w.min()))


def zz_coefficient(
    model: CoupledModeModel, pair: tuple[int, int] = (1, 2), rwa: bool = False, n_max: int | None = None
) -> ZZReport:
    """zeta = E11 - E10 - E01 + E00 from maximal-overlap dressed energies (kHz)."""
    return ZZCalculator(model, rwa=rwa, n_max=n_max)(pair)


def zz_sweep(
    model: CoupledModeModel,
    coupler_frequencies: Sequence[float],
    pair: tuple[int, int] = (1, 2),
    couplers: Sequence[int] | None = None,
    rwa: bool = False,
    n_max: int | None = None,
) -> np.ndarray:
    """zeta (kHz) with the listed couplers (default: the pair's) set to each value."""
    calc = ZZCalculator(model, rwa=rwa, n_max=n_max)
    couplers = couplers if couplers is not None else pair
    out = []
    for wc in coupler_frequencies:
        w = model.frequencies.copy()
        for c in couplers:
            w[model.coupler(c)] = wc
        out.append(calc(pair, w).zeta_khz)
    return np.array(out)


def zz_map(
    model: CoupledModeModel,
    coupler_frequencies: Sequence[float],
    detunings: Sequence[float],
    pair: tuple[int, int] = (1, 2),
    rwa: bool = False,
    n_max: int | None = None,
) -> np.ndarray:
    """zeta (kHz) on a (coupler frequency, qubit detuning) grid.

    Qubit j stays at its model frequency; qubit i is placed at omega_j + detuning.
    """
    calc = ZZCalculator(model, rwa=rwa, n_max=n_max)
    i, j = pair
    out = np.zeros((len(coupler_frequencies), len(detunings)))
    for a, wc in enumerate(coupler_frequencies):
        for b, d in enumerate(detunings):
            w = model.frequencies.copy()
            w[model.coupler(i)] = w[model.coupler(j)] = wc
            w[model.qubit(i)] = w[model.qubit(j)] + d
            out[a, b] = calc(pair, w).zeta_khz
    return out


def all_pairs(n_units: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(1, n_units + 1) for j in range(i + 1, n_units + 1)]


@dataclass
class SelectivityReport:
    active: tuple[int, int] | None
    spectrum: TrackedSpectrum
    zz: dict  # {(i, j): ZZReport}


def four_qubit_selectivity(
    model: CoupledModeModel,
    active: tuple[int, int] | None,
    active_coupler_frequency: float = 4.3,
    sweep_mode: str = "Q2",
    sweep: Sequence[float] | None = None,
    zz_n_max: int = 2,
) -> SelectivityReport:
    """Single-excitation spectrum with one pair's couplers active, plus all-pair ZZ.

    Both couplers of ``active`` are moved to ``active_coupler_frequency``;
    ``sweep_mode`` is swept through the first active qubit.  Spectra and ZZ
    use the RWA with excitation-manifold restriction.
    """
    upd = {}
    if active is not None:
        upd = {f"C{k}": active_coupler_frequency for k in active}
    m = model.with_frequencies(upd)
    basis = basis_for_model(m, manifold=1)
    tmpl = HamiltonianTemplate(m, basis, HamiltonianConfig(rwa=True))
    k = m.index(sweep_mode)
    if sweep is None:
        ref = m.frequencies[m.qubit(active[0] if active else 1)]
        sweep = np.linspace(ref - 0.1, ref + 0.1, 81)

    def H(x):
        w = m.frequencies.copy()
        w[k] = x
        return tmpl.dense(w)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TrackingWarning)
        spec = eigen_tracked(H, sweep, basis)
    calc = ZZCalculator(m, rwa=True, n_max=zz_n_max)
    zz = {p: calc(p) for p in all_pairs(m.n_units)}
    return SelectivityReport(active, spec, zz)
