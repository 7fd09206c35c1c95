import pytest

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number")
    config.addinivalue_line("markers", "slow: runs the end-to-end synthetic benchmark")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        verdict = "PASS" if rep.outcome == "passed" else "FAIL"
        prev = _CRITERIA.get(n)
        if prev is None or prev[0] == "PASS":
            _CRITERIA[n] = (verdict, text)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        verdict, text = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {text}")
