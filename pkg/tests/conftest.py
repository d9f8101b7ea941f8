import pytest

from fdsic.budget import StageAllocation, SystemParams
from fdsic.waveform import OfdmConfig

SIM_ALLOCATION = StageAllocation(40.0, 28.0, 16.0, 10.0)
REFERENCE_OVERRIDES = {"snr_noise_db": 28.0, "snr_im3_lna_db": 23.0, "snr_si_db": 44.0, "p_im3_lna_plus_noise_dbm": -73.0}


@pytest.fixture
def params():
    return SystemParams()


@pytest.fixture
def short_ofdm():
    # full numerology, few symbols: keeps chain tests quick
    return OfdmConfig(n_symbols=2)


# acceptance verdict lines, printed after the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
