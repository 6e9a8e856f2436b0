import pytest

_ACCEPTANCE = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE] = []


@pytest.fixture
def acceptance(request):
    """Record one line per acceptance criterion: ``acceptance(number, passed, detail)``."""
    lines = request.config.stash[_ACCEPTANCE]

    def record(number, passed, detail):
        line = f"criterion {number:>3}: {'PASS' if passed else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
