from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parents[1] / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


def fixture_path(name: str) -> Path:
    return FIXTURES / f"{name}.toml"


ACCEPTANCE: list[str] = []


def record(cid: str, desc: str, ok: bool, detail: str) -> None:
    """One pass/fail line per acceptance criterion, echoed in the terminal summary."""
    line = f"{'PASS' if ok else 'FAIL'}  {cid:<4s} {desc}: {detail}"
    ACCEPTANCE.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
