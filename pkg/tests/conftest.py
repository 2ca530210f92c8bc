"""Per-criterion PASS/FAIL summary for the acceptance suite."""

from collections import defaultdict

import pytest

TITLES = {
    1: "top-k optimum: closed form equals enumeration",
    2: "standard conditional-regret bounds, Monte Carlo",
    3: "cost-sensitive conditional-regret bounds, Monte Carlo",
    4: "expectation-level bounds with nonzero minimizability gaps",
    5: "gradients match finite differences",
    6: "analytic optimum and psi inverse",
    7: "realizable consistency on separable data",
    8: "cardinality-aware selector dominates top-k",
    9: "determinism of commands",
}

_OUTCOMES = defaultdict(list)
_NOTES = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _OUTCOMES[mark.args[0]].append((item.name, rep.passed))


@pytest.fixture
def note(request):
    """Attach a detail line to the current test's criterion."""
    mark = request.node.get_closest_marker("criterion")

    def add(text):
        _NOTES[mark.args[0]].append(text)

    return add


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        results = _OUTCOMES[n]
        failed = [name for name, ok in results if not ok]
        status = "PASS" if not failed else "FAIL"
        tr.write_line(f"criterion {n}: {status}  {TITLES.get(n, '')} "
                      f"({len(results) - len(failed)}/{len(results)} checks)")
        for text in _NOTES[n]:
            tr.write_line(f"    {text}")
        for name in failed:
            tr.write_line(f"    failed: {name}")
