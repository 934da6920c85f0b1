import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(capsys):
    """Print and record one PASS/FAIL line for an acceptance criterion."""

    def report(cid, ok, detail):
        line = f"[{cid}] {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s[2:s.index("]")])):
            terminalreporter.write_line(line)
