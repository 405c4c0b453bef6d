import pytest


@pytest.fixture
def record(request):
    """Store one acceptance verdict; the lines are printed in the terminal summary."""
    store = request.config.stash.setdefault(_KEY, {})

    def _record(criterion: int, ok: bool, detail: str) -> None:
        store[criterion] = f"criterion {criterion:2d}: {'PASS' if ok else 'FAIL'}  {detail}"

    return _record


_KEY = pytest.StashKey[dict]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = config.stash.get(_KEY, {})
    if store:
        terminalreporter.section("acceptance criteria")
        for k in sorted(store):
            terminalreporter.write_line(store[k])
