"""Central finite differences used as the independent derivative oracle."""

import numpy as np


def fd_gradient(fn, x, h=None):
    """Central-difference gradient of a scalar function."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 6e-6 * max(1.0, float(np.linalg.norm(x)))
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return g


def fd_hessian(grad_fn, x, h=None):
    """Central-difference Hessian from a gradient function (symmetrized)."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 6e-6 * max(1.0, float(np.linalg.norm(x)))
    n = x.shape[0]
    H = np.zeros((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        H[:, i] = (grad_fn(x + e) - grad_fn(x - e)) / (2.0 * h)
    return 0.5 * (H + H.T)


def rel_err(approx, exact):
    scale = max(1.0, float(np.linalg.norm(exact)))
    return float(np.linalg.norm(np.asarray(approx) - np.asarray(exact))) / scale
