"""Per-criterion PASS/FAIL summary for the acceptance tests."""
import time

_results = {}  # n -> [title, passed, seconds]


def pytest_runtest_logreport(report):
    marks = dict(report.user_properties).get("criterion")
    if marks is None:
        return
    n, title = marks
    entry = _results.setdefault(n, [title, True, 0.0])
    entry[2] += report.duration
    if report.failed or (report.when == "call" and report.skipped):
        entry[1] = False


def pytest_runtest_setup(item):
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        item.user_properties.append(("criterion", (mark.args[0], mark.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        title, ok, secs = _results[n]
        terminalreporter.write_line(f"CRITERION {n:2d} {'PASS' if ok else 'FAIL'}  {title} ({secs:.1f} s)")
