import os
import tempfile

# keep test tables out of the user's cache; set before bfpa.table is imported
os.environ.setdefault("BFPA_CACHE_DIR", os.path.join(tempfile.gettempdir(), "bfpa-test-cache"))

import pytest  # noqa: E402

from bfpa.constellation import GaussianInput, make_psk, make_qam  # noqa: E402
from bfpa.table import GaussianTable, get_table  # noqa: E402


@pytest.fixture(scope="session")
def qpsk():
    return get_table(make_psk(2))


@pytest.fixture(scope="session")
def bpsk():
    return get_table(make_psk(1))


@pytest.fixture(scope="session")
def qam16():
    return get_table(make_qam(4))


@pytest.fixture(scope="session")
def gauss():
    return GaussianTable(GaussianInput())


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
