import numpy as np
import pytest

from argmin import make_problem


@pytest.fixture
def rng():
    return np.random.default_rng(20240810)


def cubic_power_instance(seed=7, n=5, rows=8, scale=0.5):
    """Full-rank cubic-power problem with a planted minimizer."""
    rng = np.random.default_rng(seed)
    A = scale * rng.standard_normal((rows, n))
    xbar = rng.standard_normal(n)
    prob = make_problem("cubic_power", A=A, b=A @ xbar, estimate_sigma=False)
    x0 = xbar + rng.standard_normal(n)
    return prob, x0, xbar


def quadratic_instance(seed=3, n=8, cond=20.0):
    rng = np.random.default_rng(seed)
    eigs = np.logspace(-np.log10(cond), 0.0, n)
    Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    A = (Q * eigs) @ Q.T
    xbar = rng.standard_normal(n)
    prob = make_problem("quadratic", A=A, b=A @ xbar)
    x0 = xbar + rng.standard_normal(n)
    return prob, x0, xbar
