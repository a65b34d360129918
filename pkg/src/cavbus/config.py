"""Run-configuration loading, validation and presets."""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .circuit import (
    FOUR_QUBIT_IDLE,
    TWO_QUBIT_IDLE,
    CircuitSpec,
    CircuitValidationError,
    CoupledModeModel,
    coupling_strengths,
    reference_spec,
    spec_from_dict,
)
from .pulses import PropagationConfig

EXPERIMENTS = (
    "quantize",
    "spectrum",
    "zz-map",
    "chevron",
    "gate",
    "tuneup",
    "zz-free",
    "coherence",
    "four-qubit-suite",
)


class ConfigError(ValueError):
    """Invalid configuration; ``field`` is a dotted path to the offending entry."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name
        self.message = message


def schema() -> dict:
    text = resources.files("cavbus").joinpath("schemas/run_config.schema.json").read_text()
    return json.loads(text)


def _path(err: jsonschema.ValidationError) -> str:
    parts = [str(p) for p in err.absolute_path]
    return ".".join(parts) if parts else "<root>"


def validate_document(doc: Any) -> None:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    if errors:
        # report the most specific error
        err = max(errors, key=lambda e: len(e.absolute_path))
        best = jsonschema.exceptions.best_match([err])
        raise ConfigError(_path(best), best.message)


def canonical_json(doc: Any) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def inputs_hash(doc: Any) -> str:
    return hashlib.sha256(canonical_json(doc).encode()).hexdigest()


@dataclass
class RunConfig:
    document: dict
    experiment: str | None
    spec: CircuitSpec
    model: CoupledModeModel
    propagation: PropagationConfig
    params: dict
    source: str | None = None

    @property
    def hash(self) -> str:
        return inputs_hash(self.document)

    def numeric_policy(self) -> dict:
        p = self.propagation
        return {
            "fock_levels": dict(self.spec.fock_levels),
            "dt_ns": p.dt,
            "method": p.method,
            "rwa": p.rwa,
            "reference": p.reference,
            "freeze_couplings": p.freeze_couplings,
            "converge": p.converge,
            "tol": p.tol,
            "max_refinements": p.max_refinements,
        }


def _spec_from_circuit(circ: dict, levels: dict | None, base: Path | None = None) -> CircuitSpec:
    if "file" in circ:
        path = Path(circ["file"])
        if not path.is_absolute() and base is not None:
            path = base / path
        try:
            with open(path) as fh:
                ref = json.load(fh)
        except FileNotFoundError:
            raise ConfigError("circuit.file", f"referenced file does not exist: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("circuit.file", f"not valid JSON: {exc}") from None
        validate_document({"circuit": ref})
        return _spec_from_circuit(ref, levels, path.parent)
    if "preset" in circ:
        idle = TWO_QUBIT_IDLE if circ["preset"] == "reference-2q" else FOUR_QUBIT_IDLE
        qf = circ.get("qubit_frequencies_ghz", list(idle["qubits"]))
        cf = circ.get("coupler_frequencies_ghz", list(idle["couplers"]) if len(qf) == len(idle["qubits"]) else None)
        if cf is not None and len(cf) != len(qf):
            raise ConfigError("circuit.coupler_frequencies_ghz", "need one coupler frequency per qubit")
        return reference_spec(qf, cf, Z0=circ.get("impedance_ohm", 50.0), fock_levels=levels)
    d = copy.deepcopy(circ)
    if levels:
        d["fock_levels"] = {**d.get("fock_levels", {}), **levels}
    return spec_from_dict(d)


def load_config(source: str | Path | dict, experiment: str | None = None) -> RunConfig:
    """Parse and validate a run configuration (path or already-loaded dict)."""
    path = None
    if isinstance(source, dict):
        doc = copy.deepcopy(source)
    else:
        path = str(source)
        try:
            with open(source) as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError("config", f"file not found: {source}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"not valid JSON: {exc}") from None
    validate_document(doc)
    exp = experiment or doc.get("experiment")
    if exp is not None and exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {exp!r}")
    if experiment and doc.get("experiment") and doc["experiment"] != experiment:
        raise ConfigError("experiment", f"config is for {doc['experiment']!r}, command asked for {experiment!r}")
    num = doc.get("numerics", {})
    try:
        spec = _spec_from_circuit(doc["circuit"], num.get("fock_levels"), Path(path).parent if path else None)
    except CircuitValidationError as exc:
        raise ConfigError(f"circuit.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    model = coupling_strengths(spec)
    prop = PropagationConfig(
        dt=float(num.get("dt_ns", 0.05)),
        method=num.get("method", "cf4"),
        rwa=bool(num.get("rwa", True)),
        reference=num.get("reference", "dressed"),
        freeze_couplings=bool(num.get("freeze_couplings", False)),
        converge=bool(num.get("converge", False)),
        tol=float(num.get("tol", 1e-8)),
        max_refinements=int(num.get("max_refinements", 4)),
    )
    return RunConfig(doc, exp, spec, model, prop, dict(doc.get("params", {})), path)


def reference_config(four_qubit: bool = False) -> dict:
    """Reference configuration document (the ``paper-params`` preset)."""
    return {
        "notes": "reference device: (C_QC, C_QR, C_CR) = (3.7, 1.0, 37.4) fF, alpha_Q = -220 MHz, "
        "alpha_C = -268 MHz, f_R = 3.85 GHz, Z0 = 50 ohm, a_j = 1",
        "circuit": {"preset": "reference-4q" if four_qubit else "reference-2q"},
        "numerics": {"fock_levels": {"Q": 3, "C": 3, "R": 3}, "dt_ns": 0.05, "method": "cf4", "rwa": True},
    }
