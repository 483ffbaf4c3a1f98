import numpy as np
import pytest

from gpsketch import diagnostics


@pytest.fixture(scope="session")
def table1_matrix():
    """The 1000-point squared-exponential grid matrix used by the studies."""
    return diagnostics.grid_kernel_matrix(1000, 0.1, 100.0, 1.0)


@pytest.fixture(scope="session")
def small_grid_matrix():
    """A 100-point version of the same construction, cheap enough for loops."""
    return diagnostics.grid_kernel_matrix(100, 0.1, 100.0, 1.0)


def random_pd(n, seed, cond=100.0):
    """Random PD matrix with eigenvalues log-spaced over [1/cond, 1]."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    d = np.logspace(-np.log10(cond), 0, n)
    return (q * d) @ q.T
