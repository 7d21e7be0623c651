import numpy as np
import pytest

from endores import DgpSpec, Exogenous, LinearErrorCorrelation, MeasurementError, OmittedVariable, Simultaneity

_CRITERIA: list[tuple[str, bool, str]] = []


@pytest.fixture
def criterion():
    """Record an acceptance criterion outcome for the terminal summary."""

    def record(name: str, ok: bool, detail: str = "") -> bool:
        _CRITERIA.append((name, bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(_CRITERIA):
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


SIGMA2 = np.array([[1.0, 0.3], [0.3, 1.0]])

MECHANISM_SPECS = {
    "exogenous": DgpSpec([1.0, 2.0], SIGMA2, 1.0, Exogenous()),
    "linear": DgpSpec([1.0, 2.0], SIGMA2, 1.0, LinearErrorCorrelation([0.5, -0.2])),
    "omitted": DgpSpec([1.0, 2.0], SIGMA2, 1.0, OmittedVariable(0.8, [0.4, 0.1])),
    "measurement": DgpSpec([1.0, 2.0], SIGMA2, 1.0, MeasurementError([0.5, 0.3])),
    "simultaneity": DgpSpec([0.5], [[1.0]], 1.0, Simultaneity(0.4)),
}


@pytest.fixture(params=sorted(MECHANISM_SPECS))
def mechanism_spec(request):
    return MECHANISM_SPECS[request.param]
