"""Shared test infrastructure: the acceptance-criterion scoreboard.

``test_acceptance.py`` records one verdict per numbered criterion; the
terminal summary then prints one [PASS]/[FAIL] line each, so the
acceptance status is readable at the end of any pytest run.  A
criterion whose test crashed before recording shows up as FAIL (did
not run) rather than disappearing.
"""

from __future__ import annotations

import pytest

CRITERIA = {
    1: "single-mode visibility closed forms",
    2: "high-intensity limit matches the two-photon-source limit",
    3: "two-photon-source SNR curve landmarks",
    4: "Monte-Carlo SNR vs closed form across the parameter grid",
    5: "background variance closed form and Monte-Carlo check",
    6: "low- and high-intensity asymptotics",
    7: "plain vs factorial ordering dominance",
    8: "speckle experiment reproduction",
    9: "selftest determinism across reruns and threads",
}

_results: dict[int, tuple[bool, str]] = {}
_acceptance_collected = False


def record_criterion(number: int, passed: bool, detail: str = "") -> None:
    """Record a criterion verdict for the end-of-run scoreboard."""
    if number not in CRITERIA:
        raise ValueError(f"unknown criterion number {number}")
    _results[number] = (bool(passed), detail)


@pytest.fixture
def criterion():
    """Recorder handle bound to this plugin's scoreboard instance."""
    return record_criterion


def pytest_collection_modifyitems(items):
    global _acceptance_collected
    if any("test_acceptance" in item.nodeid for item in items):
        _acceptance_collected = True


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_collected and not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        title = CRITERIA[number]
        if number in _results:
            passed, detail = _results[number]
            tag = "PASS" if passed else "FAIL"
        else:
            tag, detail = "FAIL", "did not run"
        line = f"[{tag}] criterion {number}: {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
