import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ddspvoc.analysis import default_filterbanks
from ddspvoc.signal import FrameConfig, Waveform

settings.register_profile(
    "ddspvoc",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("ddspvoc")


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def cfg():
    return FrameConfig()


@pytest.fixture(scope="session")
def banks(cfg):
    return default_filterbanks(cfg)


def noise(rng, n=16000, scale=0.1, sr=16000):
    return Waveform(scale * rng.standard_normal(n), sr)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report(capsys):
    """Record and echo one PASS/FAIL line for an acceptance criterion."""

    def emit(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print(f"\n    {line}")
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
