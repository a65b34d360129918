import numpy as np
import pytest

from cavbus.circuit import FOUR_QUBIT_IDLE, reference_model, reference_spec


@pytest.fixture(scope="session")
def spec2():
    return reference_spec()


@pytest.fixture(scope="session")
def model2():
    return reference_model()


@pytest.fixture(scope="session")
def model4():
    return reference_model(FOUR_QUBIT_IDLE["qubits"], FOUR_QUBIT_IDLE["couplers"])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, filled in by tests/test_acceptance.py
VERDICTS: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(VERDICTS, key=lambda k: int(k.split()[1])):
        ok, detail = VERDICTS[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} {key}: {detail}")
