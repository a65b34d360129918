"""Experiment runners behind the ``sim`` command.

Each runner takes a validated :class:`RunConfig` and an :class:`Artifacts`
sink and returns a JSON-able summary.  All outputs are deterministic: no
timestamps, sorted JSON keys, floats written with round-trip precision.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import platform
import warnings
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .circuit import build_capacitance_matrix, leading_order_inverse, mode_names
from .config import ConfigError, RunConfig
from .hamiltonian import EffectiveModelError, HamiltonianConfig, HamiltonianTemplate, effective_model
from .hilbert import enumerate_basis
from .metrics import CoherenceSpec, coherence_limited, total_fidelity
from .spectrum import (
    SpectrumError,
    TrackingWarning,
    all_pairs,
    cz_coupling,
    eigen_tracked,
    exchange_coupling,
    zz_map,
    zz_sweep,
)
from .tuneup import (
    GateCalibrator,
    GateDesign,
    check_frequency_collisions,
    chevron,
    four_qubit_suite,
    zz_free_scan,
)


# --------------------------------------------------------------------------
# Output plumbing


def _clean(x: Any) -> Any:
    """JSON-safe copy: numpy scalars/arrays to Python, non-finite floats to None."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def dumps(obj: Any) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def _cell(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


class Artifacts:
    """Collects output files; every CSV gets a ``<name>.json`` sidecar."""

    def __init__(self, out: Path, run: RunConfig, experiment: str):
        self.out = Path(out)
        self.run = run
        self.experiment = experiment
        self.files: dict[str, str] = {}
        self.out.mkdir(parents=True, exist_ok=True)

    def _write(self, name: str, text: str) -> None:
        (self.out / name).write_text(text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()

    def json(self, name: str, obj: Any) -> None:
        self._write(name, dumps(obj))

    def csv(self, name: str, header: Sequence[str], rows: Sequence[Sequence[Any]], description: str = "", units: dict | None = None) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(v) for v in r])
        self._write(name, buf.getvalue())
        side = {
            "file": name,
            "experiment": self.experiment,
            "columns": list(header),
            "rows": len(rows),
            "description": description,
            "units": units or {},
            "inputs_hash": self.run.hash,
            "version": __version__,
        }
        self._write(Path(name).with_suffix(".json").name, dumps(side))

    def manifest(self, summary: Any, threads: int) -> None:
        import scipy

        man = {
            "experiment": self.experiment,
            "inputs_hash": self.run.hash,
            "config": self.run.document,
            "versions": {
                "cavbus": __version__,
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "python": platform.python_version(),
            },
            "numeric_policy": self.run.numeric_policy(),
            "threads": threads,
            "outputs": dict(sorted(self.files.items())),
            "summary": summary,
        }
        (self.out / "manifest.json").write_text(dumps(man))


# --------------------------------------------------------------------------
# Parameter helpers


def _values(p: dict, key: str, default) -> np.ndarray:
    """Accept an explicit list or {"min", "max", "steps"}."""
    v = p.get(key, default)
    if isinstance(v, dict):
        try:
            steps = int(v["steps"])
            lo, hi = float(v["min"]), float(v["max"])
        except (KeyError, TypeError, ValueError):
            raise ConfigError(f"params.{key}", "range needs numeric min, max and steps") from None
        if steps < 2:
            raise ConfigError(f"params.{key}", "a swept range needs at least 2 steps")
        return np.linspace(lo, hi, steps)
    if isinstance(v, (int, float)):
        return np.array([float(v)])
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"params.{key}", "expected a number, a list of numbers or a range object") from None
    if arr.ndim != 1 or len(arr) == 0:
        raise ConfigError(f"params.{key}", "expected a non-empty list")
    return arr


def _pair(p: dict, n_units: int, key: str = "pair", default=(1, 2)) -> tuple[int, int]:
    pr = tuple(int(x) for x in p.get(key, default))
    if len(pr) != 2 or pr[0] == pr[1] or not all(1 <= x <= n_units for x in pr):
        raise ConfigError(f"params.{key}", f"need two distinct qubit indices in 1..{n_units}")
    return pr


def _model(run: RunConfig):
    m = run.model
    upd = run.params.get("set_frequencies_ghz")
    if upd:
        try:
            m = m.with_frequencies({str(k): float(v) for k, v in upd.items()})
        except KeyError as exc:
            raise ConfigError("params.set_frequencies_ghz", f"unknown mode {exc}") from None
    return m


def _design(run: RunConfig, model, default_tg: float = 45.0) -> GateDesign:
    p = run.params
    kind = p.get("gate", "iswap")
    if kind not in ("iswap", "cz"):
        raise ConfigError("params.gate", "must be 'iswap' or 'cz'")
    return GateDesign(
        kind,
        _pair(p, model.n_units),
        float(p.get("t_g_ns", default_tg)),
        int(p.get("order", 2)),
        p.get("coupler_nominal_ghz"),
        float(p.get("coupler_offset_ghz", 0.3)),
        p.get("moving"),
    )


def _register(p: dict, design: GateDesign, n_units: int) -> tuple[int, ...]:
    reg = p.get("register")
    if reg is None:
        return tuple(design.pair)
    if reg == "all":
        return tuple(range(1, n_units + 1))
    reg = tuple(int(x) for x in reg)
    if not all(1 <= x <= n_units for x in reg) or len(set(reg)) != len(reg):
        raise ConfigError("params.register", "register lists distinct qubit indices")
    return reg


def _grid_kw(p: dict) -> dict:
    return {
        "dfc_grid": tuple(_values(p, "dfc_grid_ghz", {"min": -0.2, "max": 0.2, "steps": 9})),
        "dfq_grid": tuple(_values(p, "dfq_grid_ghz", {"min": -0.02, "max": 0.02, "steps": 5})),
        "max_evals": int(p.get("max_evals", 150)),
    }


# --------------------------------------------------------------------------
# Runners


def run_quantize(run: RunConfig, art: Artifacts, threads: int) -> dict:
    spec = run.spec
    names = mode_names(spec.n_units)
    C = build_capacitance_matrix(spec)
    exact = np.linalg.inv(C)
    approx, kept = leading_order_inverse(spec, self_capacitance=run.params.get("self_capacitance", "diagonal"))
    art.csv("capacitance_matrix.csv", ["mode"] + names, [[n] + list(row) for n, row in zip(names, C)],
            "Maxwell capacitance matrix", {"values": "fF"})
    rows = []
    worst = 0.0
    for i in range(len(names)):
        for j in range(i, len(names)):
            rel = abs(approx[i, j] - exact[i, j]) / abs(exact[i, j]) if kept[i, j] else float("nan")
            if kept[i, j]:
                worst = max(worst, rel)
            rows.append([names[i], names[j], exact[i, j], approx[i, j], int(kept[i, j]), rel])
    art.csv("inverse_check.csv", ["mode_i", "mode_j", "exact_per_fF", "leading_order_per_fF", "retained", "relative_error"], rows,
            "exact vs leading-order inverse capacitance elements", {"exact_per_fF": "1/fF"})
    m = run.model
    g = m.coupling_values()
    crow = [[m.names[c.m], m.names[c.n], c.kind, c.prefactor, gv] for c, gv in zip(m.couplings, g)]
    art.csv("couplings.csv", ["mode_a", "mode_b", "kind", "prefactor", "g_ghz"], crow,
            "coupling strengths at the configured frequencies", {"g_ghz": "GHz"})
    art.json("model.json", m.to_dict())
    eff = None
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            eff = effective_model(m).to_dict()
        except EffectiveModelError as exc:
            eff = {"error": str(exc)}
    eff_warn = [str(w.message) for w in caught]
    art.json("effective_model.json", {"effective": eff, "warnings": eff_warn})
    return {"max_relative_error_retained": worst, "spec_warnings": spec.warnings(), "n_modes": len(names)}


def run_spectrum(run: RunConfig, art: Artifacts, threads: int) -> dict:
    p = run.params
    m = _model(run)
    sweep = p.get("sweep_mode", "Q2")
    if sweep not in m.names:
        raise ConfigError("params.sweep_mode", f"unknown mode {sweep!r}")
    k = m.index(sweep)
    values = _values(p, "values_ghz", {"min": m.frequencies[k] - 0.1, "max": m.frequencies[k] + 0.1, "steps": 81})
    manifold = int(p.get("manifold", 1))
    rwa = bool(p.get("rwa", True))
    basis = enumerate_basis(m.levels, manifold=manifold if rwa else None, n_max=None if rwa else manifold, names=m.names)
    tmpl = HamiltonianTemplate(m, basis, HamiltonianConfig(rwa=rwa))

    def H(x):
        w = m.frequencies.copy()
        w[k] = x
        return tmpl.dense(w)

    labels = p.get("labels")
    if labels is not None:
        try:
            labels = [tuple(int(ch) for ch in s) for s in labels]
            [basis.index(lab) for lab in labels]
        except (KeyError, ValueError, TypeError):
            raise ConfigError("params.labels", "labels are digit strings in mode order, inside the chosen manifold") from None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TrackingWarning)
        ts = eigen_tracked(H, values, basis, labels)
    header, rows = ts.to_rows()
    art.csv("spectrum.csv", header, rows, f"tracked dressed energies vs {sweep}", {"value": "GHz", "E_*": "GHz"})
    art.csv("eigenvalues.csv", ["value"] + [f"E{i}" for i in range(basis.dim)],
            [[v] + list(e) for v, e in zip(ts.values, ts.eigenvalues)], "all eigenvalues, ground-referenced", {"E*": "GHz"})
    out = {"sweep_mode": sweep, "points": len(values), "dim": basis.dim, "tracking_warnings": ts.warnings}
    spl = p.get("splitting")
    if spl:
        pair = _pair(spl, m.n_units)
        try:
            if spl.get("kind", "exchange") == "exchange":
                res = exchange_coupling(m, pair, rwa=bool(spl.get("rwa", False)))
            else:
                res = cz_coupling(m, pair, rwa=bool(spl.get("rwa", False)), center=spl.get("center_ghz"))
            out["splitting"] = {"2g_mhz": 2e3 * res.coupling, "gap_ghz": res.gap, "location_ghz": res.location, "sweep_mode": res.sweep_mode}
        except SpectrumError as exc:
            out["splitting"] = {"error": str(exc)}
        art.json("splitting.json", out["splitting"])
    return out


def run_zz_map(run: RunConfig, art: Artifacts, threads: int) -> dict:
    p = run.params
    m = _model(run)
    pair = _pair(p, m.n_units)
    wc = _values(p, "coupler_ghz", {"min": 4.3, "max": 7.0, "steps": 28})
    rwa = bool(p.get("rwa", False))
    n_max = p.get("n_max")
    if "detunings_ghz" in p:
        det = _values(p, "detunings_ghz", None)
        Z = zz_map(m, wc, det, pair, rwa=rwa, n_max=n_max)
        rows = [[c, d, Z[a, b]] for a, c in enumerate(wc) for b, d in enumerate(det)]
        art.csv("zz_map.csv", ["coupler_ghz", "detuning_ghz", "zeta_khz"], rows, f"residual ZZ of Q{pair[0]}-Q{pair[1]}",
                {"coupler_ghz": "GHz", "detuning_ghz": "GHz", "zeta_khz": "kHz"})
        return {"pair": pair, "max_abs_zeta_khz": float(np.max(np.abs(Z)))}
    couplers = p.get("couplers")
    pairs = [tuple(x) for x in p.get("pairs", [])] or [pair]
    cols = {}
    for pr in pairs:
        cols[pr] = zz_sweep(m, wc, pr, couplers=couplers, rwa=rwa, n_max=n_max)
    header = ["coupler_ghz"] + [f"zeta_Q{a}Q{b}_khz" for a, b in pairs]
    rows = [[c] + [cols[pr][i] for pr in pairs] for i, c in enumerate(wc)]
    art.csv("zz_sweep.csv", header, rows, "residual ZZ vs common coupler frequency", {"coupler_ghz": "GHz", "zeta_*": "kHz"})
    return {"pairs": pairs, "max_abs_zeta_khz": {f"Q{a}-Q{b}": float(np.max(np.abs(v))) for (a, b), v in cols.items()}}


def run_chevron(run: RunConfig, art: Artifacts, threads: int) -> dict:
    p = run.params
    m = _model(run)
    pair = _pair(p, m.n_units)
    det = _values(p, "detunings_ghz", {"min": -0.03, "max": 0.03, "steps": 31})
    dur = _values(p, "durations_ns", {"min": 10.0, "max": 100.0, "steps": 31})
    ch = chevron(m, pair, det, dur, float(p.get("dfc_ghz", 0.0)), int(p.get("order", 2)), run.propagation)
    header, rows = ch.rows()
    art.csv("chevron.csv", header, rows, "|<01|U|10>|^2 vs detuning and duration", {"detuning_ghz": "GHz", "t_g_ns": "ns"})
    return {"pair": pair, "max_transfer": float(ch.transfer.max())}


def _evaluate_or_calibrate(run: RunConfig, art: Artifacts, threads: int, force_grid: bool) -> dict:
    p = run.params
    m = _model(run)
    design = _design(run, m)
    reg = _register(p, design, m.n_units)
    cal = GateCalibrator(m, design, reg, run.propagation, p.get("objective", "infidelity"), threads)
    if not force_grid and "dfc_ghz" in p and "dfq_ghz" in p:
        rep = cal.evaluate(float(p["dfc_ghz"]), float(p["dfq_ghz"]))
        art.json("gate_report.json", rep.to_dict())
        art.json("schedule.json", cal.schedule(float(p["dfc_ghz"]), float(p["dfq_ghz"])).to_dict())
        return {"F": rep.F, "leakage": rep.eps_L, "calibrated": False}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        res = cal.calibrate(**_grid_kw(p))
    header, rows = res.grid.rows()
    art.csv("landscape.csv", header, rows, "tune-up landscape keyed by (dfc, dfq)", {"dfc_ghz": "GHz", "dfq_ghz": "GHz"})
    art.json("calibration.json", res.to_dict())
    art.json("gate_report.json", res.report.to_dict())
    art.json("schedule.json", cal.schedule(res.dfc, res.dfq).to_dict())
    return {"F": res.report.F, "leakage": res.report.eps_L, "calibrated": True, "dfc_ghz": res.dfc, "dfq_ghz": res.dfq,
            "boundary": res.boundary, "warnings": [str(w.message) for w in caught]}


def run_gate(run: RunConfig, art: Artifacts, threads: int) -> dict:
    return _evaluate_or_calibrate(run, art, threads, force_grid=False)


def run_tuneup(run: RunConfig, art: Artifacts, threads: int) -> dict:
    return _evaluate_or_calibrate(run, art, threads, force_grid=True)


def run_zz_free(run: RunConfig, art: Artifacts, threads: int) -> dict:
    p = run.params
    m = _model(run)
    design = _design(run, m)
    reg = _register(p, design, m.n_units)
    tg = _values(p, "t_g_ns", {"min": 40.0, "max": 80.0, "steps": 9})
    cal = GateCalibrator(m, design, reg, run.propagation, p.get("objective", "infidelity"), threads)
    scan = zz_free_scan(cal, tg, float(p.get("sin_threshold", 1e-3)), float(p.get("leakage_threshold", 1e-4)), _grid_kw(p))
    header, rows = scan.rows()
    art.csv("zz_free.csv", header, rows, "calibrated iSWAP vs duration", {"t_g_ns": "ns", "phi_zz_rad": "rad"})
    summary = {"compromise_t_g_ns": scan.compromise, "crossings_t_g_ns": scan.crossings, "min_sin_t_g_ns": scan.minimum}
    art.json("zz_free.json", summary)
    return summary


def run_coherence(run: RunConfig, art: Artifacts, threads: int) -> dict:
    p = run.params
    kind = p.get("gate", "iswap")
    n = int(p.get("n_qubits", 2))
    pos = tuple(int(x) for x in p.get("pair_positions", (0, 1)))
    excited = p.get("excited_position")
    t_g = float(p.get("t_g_ns", 45.0))
    T1s = _values(p, "T1_us", {"min": 10.0, "max": 300.0, "steps": 30})
    Tps = _values(p, "Tphi_us", list(T1s)) if "Tphi_us" in p else None
    coherent = p.get("coherent_fidelity")
    rows = []
    try:
        for i, T1 in enumerate(T1s):
            tp_list = Tps if Tps is not None else [T1]
            for Tp in tp_list:
                f = coherence_limited(kind, t_g, CoherenceSpec.uniform(n, T1, Tp), pos, excited)
                tot = total_fidelity(float(coherent), f) if coherent is not None else float("nan")
                rows.append([T1, Tp, f, 1.0 - f, tot])
    except ValueError as exc:
        raise ConfigError("params", str(exc)) from None
    art.csv("coherence.csv", ["T1_us", "Tphi_us", "F_incoherent", "infidelity_incoherent", "F_total"], rows,
            f"coherence-limited fidelity, {kind}, t_g = {t_g} ns, {n} qubits", {"T1_us": "us", "Tphi_us": "us"})
    return {"gate": kind, "t_g_ns": t_g, "points": len(rows)}


def run_four_qubit_suite(run: RunConfig, art: Artifacts, threads: int) -> dict:
    p = run.params
    m = _model(run)
    if m.n_units < 3:
        raise ConfigError("circuit", "the suite needs at least three qubit-coupler units")
    kinds = tuple(p.get("gates", ("iswap", "cz")))
    pairs = [tuple(x) for x in p.get("pairs", all_pairs(m.n_units))]
    durations = p.get("t_g_ns")
    if durations is not None:
        durations = {k: {tuple(int(a) for a in key.split("-")): float(v) for key, v in d.items()} for k, d in durations.items()}
    orders = p.get("order")
    if isinstance(orders, int):
        orders = {k: orders for k in kinds}
    res = four_qubit_suite(
        m, kinds, pairs, durations, orders, run.propagation, threads,
        calibrate_kw=_grid_kw(p),
        optimize_idle=bool(p.get("optimize_idle", False)),
        idle_span=float(p.get("idle_span_ghz", 0.3)),
        idle_steps=int(p.get("idle_steps", 7)),
        refine_full=int(p.get("refine_full_evals", 0)),
    )
    for kind in kinds:
        header, rows = res.table(kind)
        art.csv(f"table_{kind}.csv", header, rows, f"selective {kind} gates on the full register", {"t_g_ns": "ns"})
    if res.idle:
        rows = [[k, c, v] for k, scan in sorted(res.idle.items()) for c, v in zip(scan.candidates, scan.objective)]
        art.csv("idle_scan.csv", ["coupler", "coupler_ghz", "leakage"], rows, "coupler idle-frequency scans", {"coupler_ghz": "GHz"})
    art.json("suite.json", res.to_dict())
    return res.summary()


RUNNERS: dict[str, Callable[[RunConfig, Artifacts, int], dict]] = {
    "quantize": run_quantize,
    "spectrum": run_spectrum,
    "zz-map": run_zz_map,
    "chevron": run_chevron,
    "gate": run_gate,
    "tuneup": run_tuneup,
    "zz-free": run_zz_free,
    "coherence": run_coherence,
    "four-qubit-suite": run_four_qubit_suite,
}


def validation_report(run: RunConfig, margin: float = 0.03) -> dict:
    m = run.model
    q = [m.frequencies[m.qubit(i)] for i in range(1, m.n_units + 1)]
    a = [m.anharmonicities[m.qubit(i)] for i in range(1, m.n_units + 1)]
    collisions = check_frequency_collisions(q, a, margin) if len(q) >= 2 else []
    return {
        "status": "valid",
        "inputs_hash": run.hash,
        "n_units": m.n_units,
        "warnings": run.spec.warnings(),
        "collisions": [{"kind": c.kind, "qubits": list(c.qubits), "mismatch_ghz": c.mismatch} for c in collisions],
        "collision_margin_ghz": margin,
    }

