import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", parent=settings.get_profile("default"), max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def p16():
    from j1j2anneal.pegasus import build_pegasus
    return build_pegasus(16)


# -- acceptance reporting: one PASS/FAIL line per criterion ----------------------

_criteria: dict[int, list] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        details = [v for k, v in item.user_properties if k == "detail"]
        _criteria.setdefault(marker.args[0], []).append((item.name, rep.outcome, details))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_criteria):
        results = _criteria[n]
        ok = all(outcome == "passed" for _, outcome, _ in results)
        failed = [name for name, outcome, _ in results if outcome != "passed"]
        details = "; ".join(d for _, _, ds in results for d in ds)
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}"
        if failed:
            line += f" (failing: {', '.join(failed)})"
        if details:
            line += f" | {details}"
        tr.write_line(line)
