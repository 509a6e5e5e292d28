import numpy as np
import pytest

from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

_LINES: dict[str, str] = {}


class CriterionReport:
    """Collects one pass/fail line per acceptance criterion."""

    def __call__(self, key: str, ok: bool, detail: str) -> bool:
        line = f"criterion {key:>3}: {'PASS' if ok else 'FAIL'}  {detail}"
        _LINES[key] = line
        print(line)
        return ok


@pytest.fixture(scope="session")
def report():
    return CriterionReport()


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_LINES, key=lambda k: (int("".join(c for c in k if c.isdigit())), k)):
        terminalreporter.write_line(_LINES[key])


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
