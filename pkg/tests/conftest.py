"""Collects acceptance outcomes and prints one verdict line per criterion at the end of the run."""

import pytest

_verdicts: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    number, title = marker.args
    detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
    previous = _verdicts.get(number, {"passed": True, "detail": ""})
    _verdicts[number] = {
        "title": title,
        "passed": previous["passed"] and report.passed,
        "detail": detail or previous["detail"],
    }


def pytest_terminal_summary(terminalreporter):
    if not _verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_verdicts):
        v = _verdicts[number]
        status = "PASS" if v["passed"] else "FAIL"
        line = f"[{status}] criterion {number:>2}: {v['title']}"
        if v["detail"]:
            line += f"  ({v['detail']})"
        terminalreporter.write_line(line)
