import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from scalefree_sync.agent import CONTINUOUS, DISCRETE, LtiModel
from scalefree_sync.graphs import DiGraph

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def well_conditioned(rng, n):
    """Random similarity with condition number at most ~4."""
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return U @ np.diag(rng.uniform(0.5, 2.0, n)) @ V


def random_neutral(rng, n, time_domain):
    """Neutrally stable A: stable block plus a semi-simple boundary block under similarity."""
    blocks = []
    k = 0
    n_b = int(rng.integers(1, n + 1))
    while k < n_b:
        if n_b - k >= 2 and rng.random() < 0.6:
            w = rng.uniform(0.2, 3.0)
            if time_domain == CONTINUOUS:
                blocks.append(np.array([[0.0, w], [-w, 0.0]]))
            else:
                blocks.append(np.array([[np.cos(w), -np.sin(w)], [np.sin(w), np.cos(w)]]))
            k += 2
        else:
            blocks.append(np.array([[0.0 if time_domain == CONTINUOUS else rng.choice([-1.0, 1.0])]]))
            k += 1
    n_s = n - k
    if n_s:
        M = rng.standard_normal((n_s, n_s))
        if time_domain == CONTINUOUS:
            M = M - (np.linalg.eigvals(M).real.max() + rng.uniform(0.2, 1.0)) * np.eye(n_s)
        else:
            M = M * rng.uniform(0.1, 0.9) / max(np.abs(np.linalg.eigvals(M)).max(), 1e-3)
        blocks.append(M)
    from scipy.linalg import block_diag

    J = block_diag(*blocks)
    T = well_conditioned(rng, n)
    return T @ J @ np.linalg.inv(T)


def random_spanning_graph(rng, n, extra=0.3, distinct=True):
    """Random rooted tree plus extra edges; random weights keep eigenvalues distinct."""
    w = np.zeros((n, n))
    order = rng.permutation(n)
    for k in range(1, n):
        parent = order[rng.integers(0, k)]
        w[order[k], parent] = rng.uniform(0.5, 2.0) if distinct else 1.0
    for i in range(n):
        for j in range(n):
            if i != j and w[i, j] == 0 and rng.random() < extra:
                w[i, j] = rng.uniform(0.5, 2.0)
    return DiGraph(w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def siso(num, den, time_domain=CONTINUOUS):
    """Controllable canonical realization of num(s)/den(s), den monic, deg num < deg den."""
    den = np.asarray(den, dtype=float)
    den = den / den[0]
    n = len(den) - 1
    num = np.concatenate([np.zeros(n - len(num)), np.asarray(num, dtype=float)])
    A = np.zeros((n, n))
    A[:-1, 1:] = np.eye(n - 1)
    A[-1] = -den[1:][::-1]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = num[::-1].reshape(1, n)
    return LtiModel(A, B, C, time_domain)


__all__ = ["random_neutral", "random_spanning_graph", "siso", "well_conditioned", "DISCRETE"]


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
