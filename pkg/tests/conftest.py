import sys
from contextlib import contextmanager
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = pytest.StashKey[dict]()


class Criterion:
    def __init__(self, name):
        self.name = name
        self.detail = ""


@pytest.fixture
def criterion(request):
    """Context manager recording one acceptance line; failures inside are recorded then re-raised."""
    table = request.config.stash.setdefault(_ACCEPTANCE, {})

    @contextmanager
    def record(name):
        c = Criterion(name)
        try:
            yield c
        except BaseException as exc:
            table[name] = (False, c.detail or type(exc).__name__)
            raise
        table[name] = (True, c.detail)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    table = config.stash.get(_ACCEPTANCE, {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(table, key=lambda s: int(s.split()[0])):
        ok, detail = table[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
