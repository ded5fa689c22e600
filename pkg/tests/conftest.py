import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

# criterion number -> {"title": str, "outcomes": [bool], "details": [str]}
_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        num, title = marker.args
        entry = _CRITERIA.setdefault(num, {"title": title, "outcomes": [], "details": []})
        entry["outcomes"].append(rep.passed)
        entry["details"].extend(getattr(item, "criterion_details", []))


@pytest.fixture
def detail(request):
    """Attach a one-line measurement to the criterion summary."""
    request.node.criterion_details = []
    return request.node.criterion_details.append


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        entry = _CRITERIA[num]
        status = "PASS" if entry["outcomes"] and all(entry["outcomes"]) else "FAIL"
        line = f"criterion {num:>2} {status}  {entry['title']}"
        if entry["details"]:
            line += "  [" + "; ".join(entry["details"]) + "]"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
