import numpy as np
import pytest

from ncofdm_sync.harness import GS_MAP, NOGS_MAP
from ncofdm_sync.waveform import FrameConfig, Modulation, PreambleKind, SubcarrierMap

N = 256
N_CP = 16

FULL_MAP = SubcarrierMap(N, tuple(range(-N // 2, N // 2)))


def frame_config(sc_map=NOGS_MAP, kind=PreambleKind.SCHMIDL_COX, n_cp=N_CP, n_symbols=3, gap=1,
                 modulation=Modulation.QPSK):
    return FrameConfig(sc_map, n_cp, n_symbols, kind, gap, modulation)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=[PreambleKind.SCHMIDL_COX, PreambleKind.SIMPLE], ids=["sc", "simple"])
def kind(request):
    return request.param


@pytest.fixture(params=[NOGS_MAP, GS_MAP], ids=["nogs", "gs"])
def sc_map(request):
    return request.param


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


@pytest.fixture
def verdict(request):
    """Record one PASS/FAIL line for an acceptance criterion, then assert it."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def record(criterion: int, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
