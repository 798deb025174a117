import pytest

_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance(capsys):
    """Record one result line per acceptance criterion and echo it live."""

    def report(number: int, passed: bool, detail: str) -> None:
        line = f"ACCEPTANCE {number:>2} {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        with capsys.disabled():
            print("\n" + line)

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
