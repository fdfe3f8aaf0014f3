import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "GATE", None):
        return
    terminalreporter.section("acceptance gate")
    for n in sorted(mod.GATE):
        terminalreporter.write_line(mod.GATE[n])
