import pytest

ACCEPTANCE_CRITERIA = {
    1: "oracle equivalence (EF = enumeration)",
    2: "McCormick exactness",
    3: "Benders = EF",
    4: "convergence-trace monotonicity",
    5: "scenario-scaling invariance",
    6: "VSS/EVPI ordering",
    7: "VEP properties",
    8: "DDU validity",
    9: "CVaR correctness",
    10: "frontier patterns",
    11: "VMC machinery",
    12: "cut validity",
    13: "LP engine certificates",
}
_results = {}


@pytest.fixture
def record():
    """``record(n, ok, detail)`` stores the outcome of acceptance criterion ``n`` and prints it."""

    def _record(number, ok, detail=""):
        _results[number] = (bool(ok), detail)
        print(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {ACCEPTANCE_CRITERIA[number]}; {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in ACCEPTANCE_CRITERIA.items():
        if n in _results:
            ok, detail = _results[n]
            terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {title}; {detail}")
        else:
            terminalreporter.write_line(f"criterion {n:2d} NOT RUN: {title}; skipped, deselected or errored before reporting")
