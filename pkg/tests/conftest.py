"""Collect acceptance outcomes and print one line per criterion at the end."""

from collections import OrderedDict

import pytest

_CRITERIA = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


def pytest_runtest_logreport(report):
    if report.when not in ("setup", "call"):
        return
    if report.when == "setup" and report.passed:
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    key = props["criterion"]
    entry = _CRITERIA.setdefault(key, {"title": props.get("title", ""), "ok": True,
                                       "notes": []})
    entry["ok"] = entry["ok"] and report.passed
    if "measured" in props:
        entry["notes"].append(props["measured"])


@pytest.fixture
def criterion(request, record_property):
    """Tag a test with its criterion number; returns a callback for measured values."""
    mark = request.node.get_closest_marker("criterion")
    record_property("criterion", mark.args[0])
    record_property("title", mark.args[1])

    def note(text):
        record_property("measured", text)

    return note


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        e = _CRITERIA[key]
        status = "PASS" if e["ok"] else "FAIL"
        notes = "; ".join(e["notes"])
        terminalreporter.write_line(f"criterion {key:>2}: {status}  {e['title']}"
                                    + (f"  [{notes}]" if notes else ""))
