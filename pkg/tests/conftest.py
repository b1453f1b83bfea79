"""Acceptance reporting: one PASS/FAIL line per criterion in the terminal summary."""

import pytest

CRITERIA = {
    1: "mesh fixtures",
    2: "flat ROF against an unlifted reference",
    3: "global circle mean",
    4: "solver certification",
    5: "projection suite",
    6: "conjugacy suite",
    7: "operator suite",
    8: "Karcher suite",
    9: "end-to-end denoising",
    10: "sublabel vs label-resolution modes",
}

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when == "teardown" or (rep.when == "setup" and rep.passed):
        return
    details = [str(v) for k, v in item.user_properties if k == "detail"]
    ok = rep.passed and rep.when == "call"
    _results.setdefault(marker.args[0], []).append((item.name, ok, details))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in CRITERIA.items():
        recs = _results.get(n)
        if recs is None:
            continue
        ok = all(r[1] for r in recs)
        terminalreporter.write_line(f"criterion {n:2d} ({title}): {'PASS' if ok else 'FAIL'}")
        for name, passed, details in recs:
            terminalreporter.write_line(f"    {'ok  ' if passed else 'FAIL'} {name}: {'; '.join(details)}")
