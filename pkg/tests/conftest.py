import pytest

# criterion number -> [title, detail, outcome]
CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title): acceptance criterion")


@pytest.fixture
def criterion(request):
    marker = request.node.get_closest_marker("criterion")
    num, title = marker.args
    entry = CRITERIA.setdefault(num, [title, "", None])

    def report(ok: bool, detail: str):
        entry[1] = detail
        line = f"criterion {num:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        print(line)
        assert ok, line

    return report


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" and rep.passed:
        return
    num, title = marker.args
    entry = CRITERIA.setdefault(num, [title, "", None])
    if rep.when == "call" or rep.failed:
        entry[2] = "PASS" if rep.passed else "FAIL"
        if rep.failed and not entry[1]:
            entry[1] = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(CRITERIA):
        title, detail, result = CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:>2} {result or 'NOT RUN'}  {title}: {detail}")
