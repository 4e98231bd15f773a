import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).resolve().parent))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=25)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def toy():
    from dcfa.data import load_dataset, toy_paths

    return load_dataset(*toy_paths())


@pytest.fixture
def tiny():
    """6 drugs x 4 microbes from the block model, 2 communities."""
    from dcfa.synth import BlockModelSpec, generate

    return generate(BlockModelSpec(6, 4, 2, 0.8, 0.1, 0.1), seed=1).dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance lines are collected here and echoed in the terminal summary,
# so they show up even when output capture is on
VERDICTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance")
        for n in sorted(VERDICTS):
            terminalreporter.write_line(VERDICTS[n])
