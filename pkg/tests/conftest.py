import numpy as np
import pytest

from boca import rng_stream

# filled by the acceptance tests, printed at the end of the session
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE:
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return rng_stream(12345, 0)


def random_orthonormal(M, N, rng):
    q, _ = np.linalg.qr(rng.standard_normal((M, N)))
    return q
