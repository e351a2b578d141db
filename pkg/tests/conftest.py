import sys
from pathlib import Path

import pytest

# Test-local helpers (dense model factories, stacked oracles).
sys.path.insert(0, str(Path(__file__).parent))

# Acceptance-criterion results, filled by tests/test_acceptance.py and
# printed as one line per criterion after the normal pytest summary.
ACCEPTANCE_LABELS = {
    1: "preconditioner inverse, spectrum, and back-map identities",
    2: "Ritz residual identity against dense matvec",
    3: "CG accuracy contract and full-spectrum one-step solve",
    4: "inner-iteration payoff of preconditioner builds",
    5: "multiplicity capture and condition-number decrease",
    6: "propagated-noise estimators against the exact trace",
    7: "stopping-rule study orderings",
    8: "work-precision ordering of the four methods",
    9: "byte-identical rerun of a solve",
}
_acceptance_results = {}


def record_acceptance(number, ok, detail=""):
    _acceptance_results[number] = (bool(ok), detail)


@pytest.fixture
def acceptance():
    """Callable (number, ok, detail) -> None used by the acceptance tests."""
    return record_acceptance


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LABELS):
        label = ACCEPTANCE_LABELS[number]
        if number in _acceptance_results:
            ok, detail = _acceptance_results[number]
            status = "PASS" if ok else "FAIL"
        else:
            ok, detail = False, "test did not run to completion"
            status = "FAIL"
        line = f"criterion {number} {status} - {label}"
        if detail:
            line += f" [{detail}]"
        terminalreporter.write_line(line, green=ok, red=not ok)
