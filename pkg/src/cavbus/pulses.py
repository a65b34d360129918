"""Frequency trajectories, time-ordered propagation and computational-subspace extraction."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import jv

from .circuit import CoupledModeModel
from .hamiltonian import HamiltonianConfig, HamiltonianTemplate
from .hilbert import Basis, enumerate_basis
from .spectrum import greedy_assignment

TWO_PI = 2.0 * math.pi

# commutator-free fourth-order Magnus coefficients (two Gauss nodes)
_C = math.sqrt(3.0) / 6.0
_A1 = 0.25 + _C
_A2 = 0.25 - _C


class NonConvergenceError(RuntimeError):
    def __init__(self, message: str, delta: float):
        super().__init__(message)
        self.delta = delta


class PhaseUndefinedError(ValueError):
    pass


@dataclass(frozen=True)
class Trajectory:
    """omega(t) = start - excursion * (1 - (2t/duration - 1)^(2 order))."""

    mode: str
    start: float
    excursion: float
    duration: float
    order: int = 2

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError(f"duration must be > 0, got {self.duration}")
        if int(self.order) != self.order or self.order < 1:
            raise ValueError(f"order must be a positive integer, got {self.order}")

    def value(self, t):
        t = np.asarray(t, dtype=float)
        tol = 1e-12 * self.duration
        if np.any(t < -tol) or np.any(t > self.duration + tol):
            raise ValueError(f"t outside [0, {self.duration}]")
        x = 2.0 * t / self.duration - 1.0
        out = self.start - self.excursion * (1.0 - x ** (2 * self.order))
        return float(out) if out.ndim == 0 else out

    @property
    def minimum(self) -> float:
        return self.start - self.excursion


def trajectory_value(traj: Trajectory, t):
    return traj.value(t)


@dataclass(frozen=True)
class PulseSchedule:
    duration: float
    trajectories: tuple[Trajectory, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "trajectories", tuple(self.trajectories))
        for tr in self.trajectories:
            if abs(tr.duration - self.duration) > 1e-12:
                raise ValueError(f"trajectory for {tr.mode} has duration {tr.duration} != {self.duration}")
        names = [tr.mode for tr in self.trajectories]
        if len(set(names)) != len(names):
            raise ValueError("one trajectory per mode")

    def frequencies(self, model: CoupledModeModel, t) -> np.ndarray:
        """Mode frequencies (GHz), shape (len(t), n_modes)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        w = np.tile(model.frequencies, (len(t), 1))
        for tr in self.trajectories:
            w[:, model.index(tr.mode)] = tr.value(t)
        return w

    def to_dict(self) -> dict:
        return {
            "duration_ns": self.duration,
            "trajectories": [
                {"mode": tr.mode, "start_ghz": tr.start, "excursion_ghz": tr.excursion, "order": tr.order}
                for tr in self.trajectories
            ],
        }


@dataclass(frozen=True)
class PropagationConfig:
    dt: float = 0.01  # ns
    method: str = "cf4"  # "cf4" or "midpoint"
    rwa: bool = True
    reference: str = "dressed"  # or "bare"
    freeze_couplings: bool = False
    converge: bool = False
    tol: float = 1e-8
    max_refinements: int = 4
    chebyshev_min_dim: int = 100
    columns: str = "computational"  # or "all"


def register_labels(model: CoupledModeModel, qubits: Sequence[int]) -> list[tuple[int, ...]]:
    """Computational labels |s_1 ... s_n>, first listed qubit most significant."""
    out = []
    for s in itertools.product((0, 1), repeat=len(qubits)):
        lab = [0] * len(model.modes)
        for q, bit in zip(qubits, s):
            lab[model.qubit(q)] = bit
        out.append(tuple(lab))
    return out


@dataclass
class GateUnitary:
    U: np.ndarray  # (d, d) overlaps <psi_i|U_full|psi_j>
    qubits: tuple[int, ...]
    labels: list[str]  # bit strings for the register
    leakage: np.ndarray  # per column
    dt: float
    steps: int
    method: str
    convergence_delta: float | None = None
    final_states: dict = field(default_factory=dict, repr=False)  # manifold -> (dim, n_cols)
    blocks: dict = field(default_factory=dict, repr=False)  # manifold -> Basis
    block_propagators: dict = field(default_factory=dict, repr=False)  # only for columns="all"

    @property
    def d(self) -> int:
        return self.U.shape[0]

    def population(self, column: str, label: Sequence[int]) -> float:
        """Final population of bare ``label`` starting from register state ``column``."""
        j = self.labels.index(column)
        lab = tuple(int(x) for x in label)
        for key, (cols, states) in self.final_states.items():
            if j in cols:
                basis = self.blocks[key]
                i = basis.get(lab)
                if i is None:
                    return 0.0
                return float(abs(states[i, cols.index(j)]) ** 2)
        raise KeyError(column)


class _Block:
    """One excitation manifold (or the whole space without RWA)."""

    def __init__(self, model, basis: Basis, cfg: PropagationConfig, shift_excitations: int, omega_ref: float):
        self.basis = basis
        self.tmpl = HamiltonianTemplate(model, basis, HamiltonianConfig(rwa=cfg.rwa))
        self.shift = TWO_PI * shift_excitations * omega_ref
        self.dim = basis.dim
        self.use_cheb = self.dim >= cfg.chebyshev_min_dim
        t = self.tmpl
        if self.use_cheb and len(t._rows):
            order = np.lexsort((t._cols, t._rows))
            self._perm = order
            self._csr = sp.csr_matrix(
                (np.ones(len(order)), (t._rows[order], t._cols[order])), shape=(self.dim, self.dim)
            )
            self._csr.sort_indices()
            self._csr_rows = t._rows[order]

    def parts(self, w: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(diag, offdiag data) for a batch of samples, angular GHz."""
        diag = TWO_PI * (w @ self.tmpl.occupations.T + self.tmpl.duffing) - self.shift
        off = TWO_PI * (g @ self.tmpl._data) if len(self.tmpl._rows) else np.zeros((len(w), 0))
        return diag, off

    def dense_batch(self, diag: np.ndarray, off: np.ndarray) -> np.ndarray:
        n = len(diag)
        H = np.zeros((n, self.dim, self.dim))
        ii = np.arange(self.dim)
        H[:, ii, ii] = diag
        if off.shape[1]:
            H[:, self.tmpl._rows, self.tmpl._cols] = off
        return H

    def expm_batch(self, diag: np.ndarray, off: np.ndarray, h: float) -> np.ndarray:
        ev, V = np.linalg.eigh(self.dense_batch(diag, off))
        return (V * np.exp(-1j * h * ev)[:, None, :]) @ np.conj(np.swapaxes(V, 1, 2))

    def cheb_apply(self, diag: np.ndarray, off: np.ndarray, h: float, X: np.ndarray) -> np.ndarray:
        """exp(-i h H) X via a Chebyshev expansion with Gershgorin bounds."""
        A = self._csr
        if off.size:
            A.data[:] = off[self._perm]
            radius = np.bincount(self._csr_rows, weights=np.abs(A.data), minlength=self.dim)
        else:
            radius = np.zeros(self.dim)
        lo = float(np.min(diag - radius))
        hi = float(np.max(diag + radius))
        c = 0.5 * (hi + lo)
        r = 0.5 * (hi - lo)
        if r <= 0:
            return np.exp(-1j * h * c) * X
        x = h * r
        K = int(x + 12.0 * max(x, 1.0) ** (1 / 3) + 12)
        coef = jv(np.arange(K), x)
        keep = np.flatnonzero(np.abs(coef) > 1e-17)
        K = int(keep[-1]) + 1 if len(keep) else 1
        d = ((diag - c) / r)[:, None]

        def Hn(Y):
            return d * Y + (A @ Y) / r

        T0 = X
        T1 = Hn(X)
        out = coef[0] * T0 + 2 * (-1j) * coef[1] * T1
        phase = -1j
        for k in range(2, K):
            T2 = 2 * Hn(T1) - T0
            phase *= -1j
            out = out + 2 * phase * coef[k] * T2
            T0, T1 = T1, T2
        return np.exp(-1j * h * c) * out


class Evolver:
    """Reusable propagator for one model structure and register."""

    def __init__(self, model: CoupledModeModel, qubits: Sequence[int] | None = None, cfg: PropagationConfig | None = None):
        self.model = model
        self.cfg = cfg or PropagationConfig()
        self.qubits = tuple(qubits) if qubits is not None else tuple(range(1, model.n_units + 1))
        self.comp = register_labels(model, self.qubits)
        self.bits = ["".join(str(lab[model.qubit(q)]) for q in self.qubits) for lab in self.comp]
        self.omega_ref = float(np.mean([model.frequencies[model.qubit(q)] for q in self.qubits]))
        self.blocks: dict[int, _Block] = {}
        self.members: dict[int, list[int]] = {}
        if self.cfg.rwa:
            for j, lab in enumerate(self.comp):
                self.members.setdefault(sum(lab), []).append(j)
            for N in sorted(self.members):
                basis = enumerate_basis(model.levels, manifold=N, names=model.names)
                self.blocks[N] = _Block(model, basis, self.cfg, N, self.omega_ref)
        else:
            basis = enumerate_basis(model.levels, names=model.names)
            self.members[-1] = list(range(len(self.comp)))
            self.blocks[-1] = _Block(model, basis, self.cfg, 0, self.omega_ref)

    # reference states ---------------------------------------------------

    def references(self, w0: np.ndarray, g0: np.ndarray) -> dict[int, np.ndarray]:
        refs = {}
        for key, blk in self.blocks.items():
            cols = self.members[key]
            idx = [blk.basis.index(self.comp[j]) for j in cols]
            if self.cfg.reference == "bare":
                R = np.zeros((blk.dim, len(cols)), dtype=complex)
                R[idx, np.arange(len(cols))] = 1.0
            elif self.cfg.reference == "dressed":
                diag, off = blk.parts(w0[None, :], g0[None, :])
                _, V = np.linalg.eigh(blk.dense_batch(diag, off)[0])
                a = greedy_assignment(np.abs(V[idx, :]) ** 2)
                R = V[:, a].astype(complex)
                # fix the eigenvector gauge: positive overlap with the bare label
                R *= np.sign(R[idx, np.arange(len(cols))].real)[None, :]
            else:
                raise ValueError(f"unknown reference policy {self.cfg.reference!r}")
            refs[key] = R
        return refs

    # propagation --------------------------------------------------------

    def _samples(self, schedule: PulseSchedule, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        w = schedule.frequencies(self.model, times)
        tmpl = next(iter(self.blocks.values())).tmpl
        if self.cfg.freeze_couplings:
            g0 = tmpl.coupling_values(w[0])
            g = np.tile(g0, (len(w), 1))
        else:
            p = tmpl.pairs
            g = tmpl.prefactors * np.sqrt(w[:, p[:, 0]] * w[:, p[:, 1]]) if len(p) else np.zeros((len(w), 0))
        return w, g

    def _run_once(self, schedule: PulseSchedule, dt: float) -> GateUnitary:
        cfg = self.cfg
        T = schedule.duration
        steps = max(1, int(math.ceil(T / dt - 1e-9)))
        h = T / steps
        k = np.arange(steps)
        if cfg.method == "cf4":
            t1 = (k + 0.5 - _C) * h
            t2 = (k + 0.5 + _C) * h
        elif cfg.method == "midpoint":
            t1 = t2 = (k + 0.5) * h
        else:
            raise ValueError(f"unknown method {cfg.method!r}")
        w1, g1 = self._samples(schedule, t1)
        w2, g2 = self._samples(schedule, t2)
        w0, g0 = self._samples(schedule, np.array([0.0]))
        refs = self.references(w0[0], g0[0])
        d = len(self.comp)
        U = np.zeros((d, d), dtype=complex)
        finals, props = {}, {}
        for key, blk in self.blocks.items():
            cols = self.members[key]
            if cfg.columns == "all":
                X = np.eye(blk.dim, dtype=complex)
            else:
                X = refs[key].copy()
            D1, O1 = blk.parts(w1, g1)
            D2, O2 = blk.parts(w2, g2)
            if cfg.method == "cf4":
                DA, OA = _A1 * D1 + _A2 * D2, _A1 * O1 + _A2 * O2
                DB, OB = _A2 * D1 + _A1 * D2, _A2 * O1 + _A1 * O2
            else:
                DA, OA = D1, O1
                DB = OB = None
            X = self._evolve(blk, DA, OA, DB, OB, h, X)
            # undo the per-manifold frame shift (a global phase within the block)
            X *= np.exp(-1j * blk.shift * T)
            if cfg.columns == "all":
                props[key] = X
                X = X @ refs[key]
            finals[key] = (cols, X)
            ov = refs[key].conj().T @ X
            U[np.ix_(cols, cols)] = ov
        leak = 1.0 - np.sum(np.abs(U) ** 2, axis=0)
        return GateUnitary(
            U=U,
            qubits=self.qubits,
            labels=list(self.bits),
            leakage=leak,
            dt=h,
            steps=steps,
            method=cfg.method,
            final_states=finals,
            blocks={key: b.basis for key, b in self.blocks.items()},
            block_propagators=props,
        )

    def _evolve(self, blk: _Block, DA, OA, DB, OB, h, X, chunk: int = 512):
        n = len(DA)
        if blk.use_cheb:
            for s in range(n):
                X = blk.cheb_apply(DA[s], OA[s], h, X)
                if DB is not None:
                    X = blk.cheb_apply(DB[s], OB[s], h, X)
            return X
        chunk = max(1, min(chunk, int(4e7 // max(1, blk.dim**2 * 16))))
        for s0 in range(0, n, chunk):
            EA = blk.expm_batch(DA[s0 : s0 + chunk], OA[s0 : s0 + chunk], h)
            EB = blk.expm_batch(DB[s0 : s0 + chunk], OB[s0 : s0 + chunk], h) if DB is not None else None
            for s in range(len(EA)):
                X = EA[s] @ X
                if EB is not None:
                    X = EB[s] @ X
        return X

    def run(self, schedule: PulseSchedule, dt: float | None = None, converge: bool | None = None) -> GateUnitary:
        cfg = self.cfg
        dt = cfg.dt if dt is None else dt
        converge = cfg.converge if converge is None else converge
        res = self._run_once(schedule, dt)
        if not converge:
            return res
        delta = math.inf
        for _ in range(cfg.max_refinements):
            dt /= 2
            fine = self._run_once(schedule, dt)
            delta = float(np.max(np.abs(fine.U - res.U)))
            res = fine
            if delta < cfg.tol:
                res.convergence_delta = delta
                return res
        raise NonConvergenceError(
            f"time step not converged after {cfg.max_refinements} halvings: max |dU| = {delta:.3e}", delta
        )


def propagate(
    model: CoupledModeModel,
    schedule: PulseSchedule,
    qubits: Sequence[int] | None = None,
    cfg: PropagationConfig | None = None,
) -> GateUnitary:
    return Evolver(model, qubits, cfg).run(schedule)


def extract_computational(gate: GateUnitary) -> np.ndarray:
    return gate.U


# --------------------------------------------------------------------------
# Single-qubit phase removal


def wrap_phase(x):
    """Wrap to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2 * np.pi) - np.pi
    y = np.where(y <= -np.pi, y + 2 * np.pi, y)
    return float(y) if np.ndim(y) == 0 else y


def _bits(d: int) -> np.ndarray:
    n = int(round(math.log2(d)))
    if 2**n != d:
        raise ValueError(f"dimension {d} is not a power of two")
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=int)


@dataclass(frozen=True)
class StrippedUnitary:
    U: np.ndarray
    theta: np.ndarray  # relative phase of each column w.r.t. the ideal, wrapped
    single_phases: np.ndarray  # phases removed per qubit


def ideal_rows(ideal: np.ndarray) -> np.ndarray:
    return np.argmax(np.abs(ideal), axis=0)


def strip_single_qubit_phases(U: np.ndarray, ideal: np.ndarray | None = None, min_amplitude: float = 1e-6) -> StrippedUnitary:
    """Remove the phases of |0...0> and the single-excitation columns.

    Column j gets multiplied by exp(-i(phi_0 + sum_k s_k (phi_{e_k} - phi_0))),
    where phi_j is the phase of U relative to ``ideal`` at the ideal output
    row.  ``theta`` then holds the remaining multi-excitation phases.
    """
    U = np.asarray(U, dtype=complex)
    d = U.shape[0]
    if ideal is None:
        ideal = np.eye(d)
    S = _bits(d)
    n = S.shape[1]
    rows = ideal_rows(ideal)
    cols = np.arange(d)
    ratio = U[rows, cols] / ideal[rows, cols]
    singles = [0] + [int(np.flatnonzero((S.sum(axis=1) == 1) & (S[:, k] == 1))[0]) for k in range(n)]
    for j in singles:
        if abs(U[rows[j], j]) < min_amplitude:
            raise PhaseUndefinedError(f"column {j} has vanishing amplitude {abs(U[rows[j], j]):.2e} at its ideal row")
    phi = np.angle(ratio)
    phi0 = phi[0]
    single = np.array([phi[singles[k + 1]] - phi0 for k in range(n)])
    corr = phi0 + S @ single
    Us = U * np.exp(-1j * corr)[None, :]
    theta = wrap_phase(np.angle(Us[rows, cols] / ideal[rows, cols]))
    return StrippedUnitary(Us, np.atleast_1d(theta), single)
