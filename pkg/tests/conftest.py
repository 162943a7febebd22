from pathlib import Path

import pytest

from isacbf.scene import ArrayGeometry, Scenario, TargetSpec, UserSpec, db_to_linear

CONFIGS = Path(__file__).resolve().parents[1] / "src" / "isacbf" / "configs"
FC = 0.95e9
NOISE = db_to_linear(-75.0)


def make_scenario(n=15, users=((20.0, 20.0),), targets=((-30.0, 20.0),), rate_floor=1.0,
                  beam_width=5.0, noise=NOISE, **kw):
    return Scenario(
        ArrayGeometry(n, FC),
        [UserSpec(a, d, noise) for a, d in users],
        [TargetSpec(a, d) for a, d in targets],
        rate_floor,
        beam_width=beam_width,
        **kw,
    )


@pytest.fixture
def configs():
    return CONFIGS


@pytest.fixture
def fig2():
    return make_scenario()


# Lines collected by the acceptance module, echoed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []


def _criterion_number(line):
    return int(line.split()[1].rstrip("]"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=_criterion_number):
            terminalreporter.write_line(line)
