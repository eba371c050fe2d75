import pytest

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


class Recorder:
    """Collects one verdict per acceptance criterion for the terminal summary."""

    def __call__(self, criterion: int, passed: bool, detail: str) -> None:
        _ACCEPTANCE[criterion] = (bool(passed), detail)
        print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} ({detail})")


@pytest.fixture(scope="session")
def acceptance():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} ({detail})")
