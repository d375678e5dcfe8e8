"""Shared pytest hooks: per-criterion pass/fail lines for the acceptance suite."""

_RESULTS = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.skipped:
        _RESULTS[report.nodeid] = "SKIP"
    elif report.when == "call":
        _RESULTS[report.nodeid] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_RESULTS):
        short = name.split("::")[-1]
        terminalreporter.write_line(f"{short}: {_RESULTS[name]}")
