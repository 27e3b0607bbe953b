import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from recon.ldpc import ParityCheckMatrix

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# criterion -> (passed, detail, extra lines), filled by test_acceptance
ACCEPTANCE: dict[int, tuple[bool, str, list[str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail, extra = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
        for line in extra:
            terminalreporter.write_line(f"    {line}")


def random_matrix(rng, m, n, max_col_degree=3) -> ParityCheckMatrix:
    """Random sparse matrix with every row and column nonempty."""
    while True:
        h = np.zeros((m, n), dtype=np.uint8)
        for i in range(n):
            d = rng.integers(1, min(max_col_degree, m) + 1)
            h[rng.choice(m, d, replace=False), i] = 1
        if h.sum(axis=1).min() > 0:
            return ParityCheckMatrix.from_dense(h)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
