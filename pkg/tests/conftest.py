from __future__ import annotations

from pathlib import Path

import pytest

from flashtaint.bytecode import selector_of
from flashtaint.callgraph import ContractRef, SubCallGraph, build_scg
from flashtaint.fixtures import BLOCK, CASES, Case
from flashtaint.state import CachingProvider, fixture_provider

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"
CASE_BY_NAME = {c.name: c for c in CASES}


@pytest.fixture(scope="session")
def state() -> CachingProvider:
    return CachingProvider(fixture_provider(FIXTURES))


_SCGS: dict[str, SubCallGraph] = {}


def case_scg(state, case: Case | str) -> SubCallGraph:
    """Sub-call graph of a corpus case, built once per session."""
    case = CASE_BY_NAME[case] if isinstance(case, str) else case
    if case.name not in _SCGS:
        ref = ContractRef(case.address, case.address, BLOCK)
        _SCGS[case.name] = build_scg(ref, selector_of(case.entry), state)
    return _SCGS[case.name]


# -- one line per acceptance criterion -------------------------------------------

_CRITERIA: dict[int, list[str]] = {}


def pytest_runtest_logreport(report):
    name = report.nodeid.rsplit("::", 1)[-1]
    if "test_acceptance.py" not in report.nodeid or not name.startswith("test_criterion_"):
        return
    if report.when == "call" or report.outcome != "passed":
        _CRITERIA.setdefault(int(name.split("_")[2]), []).append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok = all(o == "passed" for o in _CRITERIA[n])
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}")
