import pytest
from hypothesis import settings

# first calls include JIT compilation, so per-example deadlines are meaningless
settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (rep.when != "call" and not rep.failed):
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "details": []})
    entry["ok"] = entry["ok"] and not rep.failed
    if rep.when == "call":
        entry["details"] += [v for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        detail = f" ({'; '.join(e['details'])})" if e["details"] else ""
        terminalreporter.write_line(f"{'PASS' if e['ok'] else 'FAIL'}  criterion {number:2d}: {e['title']}{detail}")
