import os

import pytest

_CRITERIA: dict[int, list] = {}


def pytest_collection_modifyitems(config, items):
    if os.environ.get("CMBEC_NIGHTLY") == "1":
        return
    skip = pytest.mark.skip(reason="full-scale run; set CMBEC_NIGHTLY=1")
    for item in items:
        if "nightly" in item.keywords:
            item.add_marker(skip)


@pytest.fixture
def record(request):
    """Attach a one-line measurement summary to the current acceptance test."""

    def _record(text: str) -> None:
        request.node.user_properties.append(("detail", text))
        print(text)

    return _record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or report.outcome != "passed":
        details = [v for k, v in item.user_properties if k == "detail"]
        _CRITERIA.setdefault(marker.args[0], []).append((report.outcome, item.name, details))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entries = _CRITERIA[number]
        outcomes = {o for o, _, _ in entries}
        if "failed" in outcomes:
            verdict = "FAIL"
        elif outcomes == {"skipped"}:
            verdict = "SKIP"
        else:
            verdict = "PASS"
        detail = "; ".join(d for _, _, ds in entries for d in ds[-1:]) or entries[0][1]
        terminalreporter.write_line(f"criterion {number:2d}: {verdict}  {detail}")
