import numpy as np
import pytest

from isactrack.pipeline import ExperimentConfig, run_experiment
from isactrack.sensors import OfdmGridConfig, tdd_mask


class RunCache:
    """Memoises end-to-end runs so several tests can share one simulation."""

    def __init__(self):
        self._runs = {}

    def get(self, mode, preset, seed=0, **sections):
        key = (mode, preset, seed, repr(sorted((k, sorted(v.items())) for k, v in sections.items())))
        if key not in self._runs:
            raw = {"sensor_mode": mode, "scenario": {"preset": preset}, "seed": seed, **sections}
            self._runs[key] = run_experiment(ExperimentConfig.from_dict(raw), parallel=1)
        return self._runs[key]


_VERDICTS = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for the terminal summary, then assert."""

    def record(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
        _VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def runs():
    return RunCache()


@pytest.fixture
def desk():
    return OfdmGridConfig.desk(noise_power_db=-np.inf)


@pytest.fixture
def desk_full_mask():
    return OfdmGridConfig.desk(noise_power_db=-np.inf, tdd_mask=np.ones(112, dtype=bool))


def on_grid(cfg, range_bin, doppler_bin):
    """Physical (range, speed) that lands exactly on periodogram bins."""
    return range_bin * cfg.range_resolution, doppler_bin * cfg.speed_resolution


@pytest.fixture
def dddsu_desk_mask():
    return tdd_mask(112, "DDDSU", 3)
