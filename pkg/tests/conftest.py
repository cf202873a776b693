import pytest

_criteria = {}


def pytest_runtest_logreport(report):
    marker = report.user_properties and dict(report.user_properties).get("criterion")
    if not marker:
        return
    if report.when == "call" or report.outcome != "passed":
        number, title = marker
        ok = report.outcome == "passed"
        if number not in _criteria or not ok:
            _criteria[number] = (title, ok)


@pytest.fixture(autouse=True)
def _record_criterion(request):
    mark = request.node.get_closest_marker("criterion")
    if mark is not None:
        request.node.user_properties.append(("criterion", (mark.args[0], mark.args[1])))
    yield


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        title, ok = _criteria[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}")
