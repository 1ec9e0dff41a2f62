"""Acceptance-criterion summary printed at the end of the run."""
import pytest

_outcomes = {}


@pytest.hookimpl(tryfirst=True)
def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            item.user_properties.append(("criterion", mark.args[0]))


def pytest_runtest_logreport(report):
    names = [v for k, v in report.user_properties if k == "criterion"]
    if not names:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes[report.nodeid] = (names[0], report.outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in _outcomes.values():
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}  ({duration:.1f} s)")
