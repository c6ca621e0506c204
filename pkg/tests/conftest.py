import re

import pytest

_CRITERIA: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = re.match(r"test_criterion_(\d+)", item.name)
    if not m or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
    _CRITERIA[int(m.group(1))] = ("PASS" if rep.passed else "FAIL", doc)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        status, doc = _CRITERIA[num]
        terminalreporter.write_line(f"criterion {num:2d}: {status}  {doc}")
