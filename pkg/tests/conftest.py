"""Shared fixtures and the acceptance summary hook.

Acceptance tests register one line per criterion through the `acceptance`
fixture; the summary block prints them after the run so pass/fail status
is visible without scrolling through pytest output.
"""

from __future__ import annotations

import numpy as np
import pytest

_ACCEPTANCE_LINES: list[tuple[int, str, bool, str]] = []


class AcceptanceLog:
    def check(self, num: int, name: str, ok: bool, detail: str = "") -> None:
        """Record one criterion verdict, then assert it."""
        _ACCEPTANCE_LINES.append((num, name, bool(ok), detail))
        assert ok, f"criterion {num} ({name}) failed: {detail}"

    def note(self, num: int, name: str, detail: str) -> None:
        """Record an informational line (values recorded, not asserted)."""
        _ACCEPTANCE_LINES.append((num, name, True, detail))


@pytest.fixture(scope="session")
def acceptance() -> AcceptanceLog:
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_LINES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num, name, ok, detail in sorted(_ACCEPTANCE_LINES, key=lambda r: r[0]):
        verdict = "PASS" if ok else "FAIL"
        suffix = f"  ({detail})" if detail else ""
        tr.write_line(f"[criterion {num:02d}] {name}: {verdict}{suffix}")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)
