import math

import pytest
from hypothesis import settings

from jumpmetrology import FeedbackConfig, NetworkParams, cavity

settings.register_profile("default", max_examples=100, deadline=None)
settings.load_profile("default")


@pytest.fixture
def crossed_fb():
    return FeedbackConfig.crossed(1.0, 2.0)


@pytest.fixture
def gamma11():
    return cavity(1, 1)


@pytest.fixture
def coarse_params():
    return NetworkParams.reference(phi_tilde=math.pi / 10, dt=0.5)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    """Record one summary line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def log(number: int, title: str, ok: bool, detail: str) -> None:
        line = f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title}: {detail}"
        lines.append(line)
        print(line)

    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
