import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_spd(rng, n, jitter=0.5):
    A = rng.standard_normal((n, n))
    return A @ A.T + jitter * np.eye(n)


def batch_se(x, n_batches=50):
    """Batch-means standard error of the mean along axis 0."""
    x = np.asarray(x, dtype=float)
    m = x.shape[0] // n_batches
    b = x[: m * n_batches].reshape((n_batches, m) + x.shape[1:]).mean(axis=1)
    return b.std(axis=0, ddof=1) / np.sqrt(n_batches)


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects one status line per acceptance criterion for the terminal summary."""
    lines = []
    request.config._acceptance_lines = lines
    return lines


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
