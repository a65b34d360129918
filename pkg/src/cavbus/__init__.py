"""Simulation of cavity-mediated tunable-coupler superconducting qubits.

Layers, bottom up: circuit quantization (``circuit``), truncated Fock
bases and operators (``hilbert``), Hamiltonians and the dispersive
effective model (``hamiltonian``), spectra and ZZ (``spectrum``), pulse
propagation (``pulses``), gate metrics (``metrics``), calibration
(``tuneup``) and the ``sim`` command line (``cli``).
"""

__version__ = "0.1.0"

from .circuit import (  # noqa: E402
    CircuitSpec,
    CircuitValidationError,
    CoupledModeModel,
    QubitCouplerUnit,
    TransmonParams,
    coupling_strengths,
    reference_model,
    reference_spec,
)
from .metrics import GateReport, gate_report  # noqa: E402
from .pulses import PropagationConfig, PulseSchedule, Trajectory, propagate  # noqa: E402

__all__ = [
    "CircuitSpec",
    "CircuitValidationError",
    "CoupledModeModel",
    "GateReport",
    "PropagationConfig",
    "PulseSchedule",
    "QubitCouplerUnit",
    "TransmonParams",
    "Trajectory",
    "coupling_strengths",
    "gate_report",
    "reference_model",
    "reference_spec",
    "propagate",
]
