from __future__ import annotations

from importlib import resources
from pathlib import Path

import pytest

from vtgcurate.data import Sample
from vtgcurate.intervals import IntervalSet, VideoTimeline

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def bundled_corpus() -> Path:
    return Path(str(resources.files("vtgcurate").joinpath("corpora", "synthetic_200")))


def make_sample(sid="s1", duration=60.0, gt=((20.0, 30.0),), query="a person opens the door", tag="") -> Sample:
    return Sample(sid, f"file://{sid}.mp4", VideoTimeline(duration), query, IntervalSet(gt), tag)


@pytest.fixture
def sample() -> Sample:
    return make_sample()


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
