"""Gate calibration: chevrons, iSWAP/CZ tune-up, ZZ-free duration search, idle selection."""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .circuit import CoupledModeModel
from .metrics import GateReport, gate_report
from .pulses import Evolver, PropagationConfig, PulseSchedule, Trajectory


class BoundaryWarning(UserWarning):
    pass


class FlatObjectiveWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# Gate parameterization


@dataclass(frozen=True)
class GateDesign:
    """Which modes move and where.

    The tuned qubit (default: the pair member with the higher idle frequency)
    is brought to the interaction point, both pair couplers dip to
    ``coupler_nominal + dfc``.  For CZ the interaction point puts |11> on
    resonance with the doubly excited state of whichever qubit allows a
    downward excursion.
    """

    kind: str
    pair: tuple[int, int]
    t_g: float
    order: int = 2
    coupler_nominal: float | None = None
    coupler_offset: float = 0.3
    moving: int | None = None

    def __post_init__(self):
        if self.kind not in ("iswap", "cz"):
            raise ValueError(f"gate kind must be 'iswap' or 'cz', got {self.kind!r}")
        if len(set(self.pair)) != 2:
            raise ValueError(f"pair needs two distinct qubits, got {self.pair}")

    def with_duration(self, t_g: float) -> "GateDesign":
        return replace(self, t_g=float(t_g))


@dataclass(frozen=True)
class GatePlan:
    moving: int
    fixed: int
    doubly_excited: int | None
    target: float  # nominal tuned-qubit frequency (GHz) before dfq
    coupler_nominal: float


def gate_plan(model: CoupledModeModel, design: GateDesign) -> GatePlan:
    a, b = design.pair
    w = model.frequencies
    wa, wb = w[model.qubit(a)], w[model.qubit(b)]
    moving = design.moving if design.moving is not None else (b if wb >= wa else a)
    fixed = b if moving == a else a
    wm, wf = w[model.qubit(moving)], w[model.qubit(fixed)]
    alpha = model.anharmonicities
    doubly = None
    if design.kind == "iswap":
        target = wf
    else:
        up = wf - alpha[model.qubit(moving)]  # moving qubit doubly excited
        if wm >= up:
            target, doubly = up, moving
        else:
            target, doubly = wf + alpha[model.qubit(fixed)], fixed
    cn = design.coupler_nominal
    if cn is None:
        cn = max(target, wf) + design.coupler_offset
    return GatePlan(moving, fixed, doubly, float(target), float(cn))


def gate_schedule(model: CoupledModeModel, design: GateDesign, dfc: float = 0.0, dfq: float = 0.0) -> PulseSchedule:
    plan = gate_plan(model, design)
    w = model.frequencies
    tg, n = design.t_g, design.order
    trajs = []
    for q in design.pair:
        c = f"C{q}"
        start = w[model.index(c)]
        trajs.append(Trajectory(c, start, start - (plan.coupler_nominal + dfc), tg, n))
    q = f"Q{plan.moving}"
    start = w[model.index(q)]
    trajs.append(Trajectory(q, start, start - (plan.target + dfq), tg, n))
    return PulseSchedule(tg, trajs)


# --------------------------------------------------------------------------
# Deterministic optimizer


@dataclass
class SearchResult:
    x: np.ndarray
    fun: float
    trace: list  # (x0, x1, ..., f) per evaluation in order
    converged: bool


def pattern_search(
    f: Callable[[np.ndarray], float],
    x0: Sequence[float],
    step: Sequence[float],
    min_step: Sequence[float],
    max_evals: int = 200,
) -> SearchResult:
    """Compass search: poll +/- step per coordinate, halve steps when no poll improves."""
    x = np.asarray(x0, dtype=float).copy()
    step = np.asarray(step, dtype=float).copy()
    min_step = np.asarray(min_step, dtype=float)
    fx = f(x)
    trace = [(*x, fx)]
    evals = 1
    while np.any(step >= min_step) and evals < max_evals:
        improved = False
        for k in range(len(x)):
            if step[k] < min_step[k]:
                continue
            for sgn in (1.0, -1.0):
                y = x.copy()
                y[k] += sgn * step[k]
                fy = f(y)
                evals += 1
                trace.append((*y, fy))
                if fy < fx:
                    x, fx = y, fy
                    improved = True
                    break
                if evals >= max_evals:
                    break
            if evals >= max_evals:
                break
        if not improved:
            step = step / 2
    return SearchResult(x, float(fx), trace, bool(np.all(step < min_step)))


# --------------------------------------------------------------------------
# Calibration


OBJECTIVES = {
    "infidelity": lambda r: 1.0 - r.F,
    "population": lambda r: 1.0 - r.F_P,
    "leakage": lambda r: r.eps_L,
}


@dataclass
class Landscape:
    dfc: np.ndarray
    dfq: np.ndarray
    reports: list  # row-major over (dfc, dfq)

    def values(self, key: str | Callable[[GateReport], float]) -> np.ndarray:
        fn = key if callable(key) else (OBJECTIVES[key] if key in OBJECTIVES else (lambda r: getattr(r, key)))
        return np.array([fn(r) for r in self.reports], dtype=float).reshape(len(self.dfc), len(self.dfq))

    def rows(self) -> tuple[list[str], list[list[float]]]:
        header = ["dfc_ghz", "dfq_ghz", "infidelity", "leakage", "eps_L", "delta_phi_cz", "phi_zz"]
        out = []
        for (c, q), r in zip(itertools.product(self.dfc, self.dfq), self.reports):
            out.append([
                float(c), float(q), 1.0 - r.F, r.leakage, r.eps_L,
                r.delta_phi_CZ if r.delta_phi_CZ is not None else float("nan"),
                r.phi_ZZ if r.phi_ZZ is not None else float("nan"),
            ])
        return header, out


@dataclass
class CalibrationResult:
    design: GateDesign
    dfc: float
    dfq: float
    objective: float
    objective_name: str
    report: GateReport
    grid: Landscape | None
    trace: list
    boundary: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def params(self) -> np.ndarray:
        return np.array([self.dfc, self.dfq])

    def to_dict(self) -> dict:
        d = self.design
        return {
            "gate": d.kind,
            "pair": list(d.pair),
            "t_g_ns": d.t_g,
            "order": d.order,
            "dfc_ghz": self.dfc,
            "dfq_ghz": self.dfq,
            "objective": self.objective_name,
            "objective_value": self.objective,
            "boundary": self.boundary,
            "report": self.report.to_dict(),
            "trace": [list(map(float, t)) for t in self.trace],
            **self.extra,
        }


class GateCalibrator:
    """Evaluate and tune one gate design on a given register."""

    def __init__(
        self,
        model: CoupledModeModel,
        design: GateDesign,
        register: Sequence[int] | None = None,
        cfg: PropagationConfig | None = None,
        objective: str = "infidelity",
        threads: int = 1,
    ):
        self.model = model
        self.design = design
        self.register = tuple(register) if register is not None else tuple(design.pair)
        missing = [q for q in design.pair if q not in self.register]
        if missing:
            raise ValueError(f"register {self.register} lacks target qubits {missing}")
        self.positions = tuple(self.register.index(q) for q in design.pair)
        self.cfg = cfg or PropagationConfig(dt=0.05)
        self.evolver = Evolver(model, self.register, self.cfg)
        self.objective_name = objective
        self.objective_fn = OBJECTIVES[objective]
        self.threads = max(1, int(threads))
        self._cache: dict = {}

    def with_design(self, design: GateDesign) -> "GateCalibrator":
        other = object.__new__(GateCalibrator)
        other.__dict__.update(self.__dict__)
        other.design = design
        other._cache = {}
        return other

    def schedule(self, dfc: float, dfq: float) -> PulseSchedule:
        return gate_schedule(self.model, self.design, dfc, dfq)

    def evaluate(self, dfc: float, dfq: float) -> GateReport:
        key = (round(float(dfc), 12), round(float(dfq), 12))
        if key not in self._cache:
            g = self.evolver.run(self.schedule(dfc, dfq))
            rep = gate_report(g.U, self.design.kind, self.positions, self.design.pair, self.design.t_g)
            rep.extra["column_leakage"] = [float(x) for x in g.leakage]
            self._cache[key] = rep
        return self._cache[key]

    def objective(self, x: Sequence[float]) -> float:
        return float(self.objective_fn(self.evaluate(x[0], x[1])))

    def landscape(self, dfc: Sequence[float], dfq: Sequence[float]) -> Landscape:
        dfc = np.asarray(dfc, dtype=float)
        dfq = np.asarray(dfq, dtype=float)
        points = list(itertools.product(dfc, dfq))
        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                reps = list(pool.map(lambda p: self.evaluate(*p), points))
        else:
            reps = [self.evaluate(*p) for p in points]
        return Landscape(dfc, dfq, reps)

    def calibrate(
        self,
        dfc_grid: Sequence[float] = tuple(np.linspace(-0.15, 0.15, 7)),
        dfq_grid: Sequence[float] = tuple(np.linspace(-0.01, 0.01, 5)),
        step: Sequence[float] = (0.01, 0.002),
        min_step: Sequence[float] = (2e-5, 2e-6),
        max_evals: int = 120,
    ) -> CalibrationResult:
        grid = self.landscape(dfc_grid, dfq_grid)
        vals = grid.values(self.objective_fn)
        i, j = np.unravel_index(int(np.argmin(vals)), vals.shape)
        x0 = np.array([grid.dfc[i], grid.dfq[j]])
        res = pattern_search(self.objective, x0, step, min_step, max_evals)
        boundary = bool(
            res.x[0] <= grid.dfc[0] or res.x[0] >= grid.dfc[-1] or res.x[1] <= grid.dfq[0] or res.x[1] >= grid.dfq[-1]
        )
        if boundary:
            warnings.warn(
                f"{self.design.kind} {self.design.pair} t_g={self.design.t_g}: optimum at grid boundary "
                f"(dfc={res.x[0]:.4f}, dfq={res.x[1]:.4f})",
                BoundaryWarning,
                stacklevel=2,
            )
        rep = self.evaluate(*res.x)
        return CalibrationResult(
            self.design, float(res.x[0]), float(res.x[1]), float(res.fun), self.objective_name, rep, grid,
            res.trace, boundary, {"grid_optimum": [float(x0[0]), float(x0[1])], "converged": res.converged},
        )

    def refine(self, x0: Sequence[float], step=(0.01, 0.002), min_step=(2e-5, 2e-6), max_evals: int = 120) -> CalibrationResult:
        """Local search only, seeded at ``x0`` (used to continue along t_g)."""
        res = pattern_search(self.objective, x0, step, min_step, max_evals)
        rep = self.evaluate(*res.x)
        return CalibrationResult(
            self.design, float(res.x[0]), float(res.x[1]), float(res.fun), self.objective_name, rep, None,
            res.trace, False, {"seed": [float(x0[0]), float(x0[1])], "converged": res.converged},
        )


def calibrate_iswap(model, pair=(1, 2), t_g=45.0, order=2, register=None, cfg=None, **kw) -> CalibrationResult:
    return GateCalibrator(model, GateDesign("iswap", tuple(pair), t_g, order), register, cfg).calibrate(**kw)


def calibrate_cz(model, pair=(1, 2), t_g=58.0, order=2, register=None, cfg=None, **kw) -> CalibrationResult:
    return GateCalibrator(model, GateDesign("cz", tuple(pair), t_g, order), register, cfg).calibrate(**kw)


# --------------------------------------------------------------------------
# Chevron


@dataclass
class Chevron:
    detunings: np.ndarray  # dfq (GHz)
    durations: np.ndarray  # t_g (ns)
    transfer: np.ndarray  # (n_det, n_dur) |<01|U|10>|^2

    def rows(self):
        header = ["detuning_ghz", "t_g_ns", "transfer"]
        return header, [
            [float(d), float(t), float(self.transfer[i, k])]
            for i, d in enumerate(self.detunings)
            for k, t in enumerate(self.durations)
        ]


def chevron(
    model: CoupledModeModel,
    pair: tuple[int, int],
    detunings: Sequence[float],
    durations: Sequence[float],
    dfc: float = 0.0,
    order: int = 2,
    cfg: PropagationConfig | None = None,
) -> Chevron:
    """Exchange |10> -> |01> versus tuned-qubit detuning and pulse duration."""
    design = GateDesign("iswap", tuple(pair), float(durations[0]), order)
    ev = Evolver(model, tuple(pair), cfg or PropagationConfig(dt=0.05))
    out = np.zeros((len(detunings), len(durations)))
    for i, d in enumerate(detunings):
        for k, t in enumerate(durations):
            g = ev.run(gate_schedule(model, design.with_duration(t), dfc, d))
            out[i, k] = abs(g.U[1, 2]) ** 2
    return Chevron(np.asarray(detunings, float), np.asarray(durations, float), out)


# --------------------------------------------------------------------------
# ZZ-free duration search


@dataclass
class ZZFreeScan:
    t_g: np.ndarray
    phi_zz: np.ndarray
    sin_phi: np.ndarray
    leakage: np.ndarray
    infidelity: np.ndarray
    calibrations: list
    compromise: float | None
    crossings: list  # interpolated t_g where phi_zz changes sign
    minimum: float

    def rows(self):
        header = ["t_g_ns", "phi_zz_rad", "sin_abs_phi_zz", "leakage", "infidelity", "dfc_ghz", "dfq_ghz"]
        return header, [
            [float(t), float(p), float(s), float(l), float(f), c.dfc, c.dfq]
            for t, p, s, l, f, c in zip(self.t_g, self.phi_zz, self.sin_phi, self.leakage, self.infidelity, self.calibrations)
        ]


def zz_free_scan(
    calibrator: GateCalibrator,
    t_g: Sequence[float],
    sin_threshold: float = 1e-3,
    leakage_threshold: float = 1e-4,
    calibrate_kw: dict | None = None,
) -> ZZFreeScan:
    """Calibrate an iSWAP at each duration and follow the residual conditional phase.

    The first duration gets a full grid calibration; later ones continue from
    the previous optimum.  The compromise point is the shortest duration with
    sin|phi_ZZ| <= ``sin_threshold`` and leakage <= ``leakage_threshold``.
    """
    cals = []
    prev = None
    for t in t_g:
        cal = calibrator.with_design(calibrator.design.with_duration(float(t)))
        if prev is None:
            res = cal.calibrate(**(calibrate_kw or {}))
        else:
            res = cal.refine(prev)
        prev = res.params
        cals.append(res)
    tg = np.asarray(t_g, dtype=float)
    phi = np.array([c.report.phi_ZZ for c in cals], dtype=float)
    sin_phi = np.abs(np.sin(phi))
    leak = np.array([c.report.eps_L for c in cals])
    infid = np.array([1 - c.report.F for c in cals])
    ok = np.flatnonzero((sin_phi <= sin_threshold) & (leak <= leakage_threshold))
    compromise = float(tg[ok[0]]) if len(ok) else None
    crossings = []
    for k in range(len(tg) - 1):
        if phi[k] == 0:
            crossings.append(float(tg[k]))
        elif phi[k] * phi[k + 1] < 0:
            crossings.append(float(tg[k] - phi[k] * (tg[k + 1] - tg[k]) / (phi[k + 1] - phi[k])))
    return ZZFreeScan(tg, phi, sin_phi, leak, infid, cals, compromise, crossings, float(tg[int(np.argmin(sin_phi))]))


# --------------------------------------------------------------------------
# Frequency planning


@dataclass(frozen=True)
class Collision:
    kind: str  # "degenerate", "anharmonic", "two-photon"
    qubits: tuple[int, ...]  # 1-based
    mismatch: float  # GHz


def check_frequency_collisions(
    frequencies: Sequence[float], anharmonicities: Sequence[float] | float, margin: float = 0.03
) -> list[Collision]:
    """Flag |w_i - w_j|, |w_i - (w_j + a_j)| and |w_i + w_j - (2 w_k + a_k)| below ``margin``."""
    w = np.asarray(frequencies, dtype=float)
    n = len(w)
    if n < 2:
        raise ValueError("need at least two qubits")
    a = np.broadcast_to(np.asarray(anharmonicities, dtype=float), w.shape)
    out = []
    for i, j in itertools.combinations(range(n), 2):
        d = abs(w[i] - w[j])
        if d < margin:
            out.append(Collision("degenerate", (i + 1, j + 1), float(d)))
    for i, j in itertools.permutations(range(n), 2):
        d = abs(w[i] - (w[j] + a[j]))
        if d < margin:
            out.append(Collision("anharmonic", (i + 1, j + 1), float(d)))
    for i, j in itertools.combinations(range(n), 2):
        for k in range(n):
            if k in (i, j):
                continue
            d = abs(w[i] + w[j] - (2 * w[k] + a[k]))
            if d < margin:
                out.append(Collision("two-photon", (i + 1, j + 1, k + 1), float(d)))
    return out


@dataclass
class IdleScan:
    coupler: int
    candidates: np.ndarray
    objective: np.ndarray
    best: float
    flat: bool

    def rows(self):
        return ["coupler_ghz", "leakage"], [[float(c), float(v)] for c, v in zip(self.candidates, self.objective)]


def optimize_idle_frequency(
    model: CoupledModeModel,
    coupler: int,
    probe: GateDesign,
    dfc: float,
    dfq: float,
    candidates: Sequence[float] = tuple(np.linspace(6.0, 7.0, 11)),
    cfg: PropagationConfig | None = None,
) -> IdleScan:
    """Scan the idle frequency of ``coupler`` against probe-gate leakage.

    The objective is the leakage of the register state with both probe
    qubits and Q_coupler excited (e.g. |1110> for C3 under a Q1-Q2 iSWAP).
    """
    if coupler in probe.pair:
        raise ValueError("the probe gate must not target the scanned coupler's qubit")
    register = tuple(probe.pair) + (coupler,)
    vals = []
    for c in candidates:
        m = model.with_frequencies({f"C{coupler}": float(c)})
        g = Evolver(m, register, cfg or PropagationConfig(dt=0.05)).run(gate_schedule(m, probe, dfc, dfq))
        vals.append(float(g.leakage[-1]))  # |111> column
    vals = np.array(vals)
    cands = np.asarray(candidates, dtype=float)
    flat = bool(np.ptp(vals) < 1e-9)
    if flat:
        warnings.warn(f"idle objective for C{coupler} is flat; returning scan midpoint", FlatObjectiveWarning, stacklevel=2)
        best = float(cands[len(cands) // 2])
    else:
        best = float(cands[int(np.argmin(vals))])
    return IdleScan(coupler, cands, vals, best, flat)


# --------------------------------------------------------------------------
# Four-qubit selective-gate suite

# Reference durations (ns) for selective gates on a four-unit register.
REFERENCE_DURATIONS = {
    "iswap": {(1, 2): 55.5, (1, 3): 56.6, (1, 4): 55.7, (2, 3): 57.2, (2, 4): 58.2, (3, 4): 59.1},
    "cz": {(1, 2): 60.9, (1, 3): 62.8, (1, 4): 66.6, (2, 3): 64.2, (2, 4): 68.2, (3, 4): 69.0},
}


@dataclass
class SuiteEntry:
    kind: str
    pair: tuple[int, int]
    t_g: float
    proxy: CalibrationResult  # calibrated on the pair register
    report: GateReport  # evaluated on the full register
    dfc: float
    dfq: float

    def row(self) -> list:
        r = self.report
        return [f"Q{self.pair[0]}-Q{self.pair[1]}", self.t_g, r.F_L, r.F_P, r.F_ZZ, r.F,
                r.eps_L, r.eps_PT, r.eps_ZZ, r.eps_gate_ZZ, self.dfc, self.dfq]


@dataclass
class SuiteResult:
    entries: list
    idle: dict  # coupler -> IdleScan
    frequencies: dict  # final idle frequencies by mode name

    HEADER = ["pair", "t_g_ns", "F_L", "F_P", "F_ZZ", "F", "eps_L", "eps_PT", "eps_ZZ", "eps_gate_ZZ", "dfc_ghz", "dfq_ghz"]

    def table(self, kind: str) -> tuple[list[str], list[list]]:
        return list(self.HEADER), [e.row() for e in self.entries if e.kind == kind]

    def summary(self) -> dict:
        out = {}
        for kind in sorted({e.kind for e in self.entries}):
            es = [e for e in self.entries if e.kind == kind]
            out[kind] = {
                "min_F": min(e.report.F for e in es),
                "max_eps_PT": max(e.report.eps_PT for e in es),
                "max_eps_ZZ": max(e.report.eps_ZZ for e in es),
            }
        return out

    def to_dict(self) -> dict:
        return {
            "frequencies_ghz": self.frequencies,
            "entries": [
                {"gate": e.kind, "pair": list(e.pair), "t_g_ns": e.t_g, "dfc_ghz": e.dfc, "dfq_ghz": e.dfq,
                 "report": e.report.to_dict(), "proxy_report": e.proxy.report.to_dict()}
                for e in self.entries
            ],
            "idle_scans": {f"C{k}": {"best_ghz": s.best, "flat": s.flat} for k, s in self.idle.items()},
            "summary": self.summary(),
        }


def _probe_pair(coupler: int, n_units: int) -> tuple[int, int]:
    others = [q for q in range(1, n_units + 1) if q != coupler]
    return (others[0], others[1])


def four_qubit_suite(
    model: CoupledModeModel,
    kinds: Sequence[str] = ("iswap", "cz"),
    pairs: Sequence[tuple[int, int]] | None = None,
    durations: dict | None = None,
    orders: dict | None = None,
    cfg: PropagationConfig | None = None,
    threads: int = 1,
    calibrate_kw: dict | None = None,
    optimize_idle: bool = False,
    idle_span: float = 0.3,
    idle_steps: int = 7,
    refine_full: int = 0,
) -> SuiteResult:
    """Calibrate every requested selective gate and score it on the full register.

    Each gate is calibrated on its own pair register (spectators stay in the
    basis, in their ground state), then evaluated once on all qubits.  With
    ``refine_full > 0`` a local search on the full register follows, capped
    at that many evaluations.  ``optimize_idle`` first rescans every coupler's
    idle point around its current value, probing with an iSWAP on the first
    pair that excludes it.
    """
    cfg = cfg or PropagationConfig(dt=0.05)
    n = model.n_units
    pairs = [tuple(p) for p in (pairs or [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)])]
    durations = durations or REFERENCE_DURATIONS
    orders = orders or {}
    calibrate_kw = calibrate_kw or {}
    # either one set of grid options or one per gate kind
    per_kind = {k: calibrate_kw[k] for k in ("iswap", "cz") if k in calibrate_kw}
    kw_for = (lambda kind: per_kind.get(kind, {})) if per_kind else (lambda kind: calibrate_kw)
    full = tuple(range(1, n + 1))

    idle = {}
    if optimize_idle:
        for k in range(1, n + 1):
            probe_pair = _probe_pair(k, n)
            probe = GateDesign("iswap", probe_pair, durations["iswap"].get(probe_pair, 55.0), orders.get("iswap", 2))
            base = GateCalibrator(model, probe, probe_pair, cfg, threads=threads).calibrate(**kw_for("iswap"))
            w0 = model.frequencies[model.coupler(k)]
            cands = np.linspace(w0 - idle_span, w0 + idle_span, idle_steps)
            scan = optimize_idle_frequency(model, k, probe, base.dfc, base.dfq, cands, cfg)
            idle[k] = scan
            model = model.with_frequencies({f"C{k}": scan.best})

    entries = []
    for kind in kinds:
        for pair in pairs:
            t_g = float(durations[kind][pair])
            design = GateDesign(kind, pair, t_g, orders.get(kind, 2))
            proxy = GateCalibrator(model, design, pair, cfg, threads=threads).calibrate(**kw_for(kind))
            cal_full = GateCalibrator(model, design, full, cfg, threads=threads)
            dfc, dfq = proxy.dfc, proxy.dfq
            if refine_full > 0:
                ref = cal_full.refine((dfc, dfq), step=(0.002, 0.0005), max_evals=refine_full)
                dfc, dfq = ref.dfc, ref.dfq
            rep = cal_full.evaluate(dfc, dfq)
            entries.append(SuiteEntry(kind, pair, t_g, proxy, rep, dfc, dfq))
    freqs = {name: float(w) for name, w in zip(model.names, model.frequencies)}
    return SuiteResult(entries, idle, freqs)
