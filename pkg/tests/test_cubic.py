import math

import numpy as np
import numpy.testing as npt
import pytest
from scipy.optimize import minimize

from argmin.cubic import CubicModel, cubic_step, secular_root
from argmin.linalg import sym_eig, symmetrize


def brute_force_min(g, H, M, box, n_grid=241, seed=0):
    """Independent oracle: dense grid search over a box, then local polish
    with a generic derivative-free minimizer from several starts."""
    m = CubicModel(g, H, M)
    lo, hi = box
    axes = [np.linspace(lo, hi, n_grid)] * len(g)
    best_v, best_x = np.inf, None
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([a.ravel() for a in mesh], axis=1)
    for x in pts:
        v = m.value(x)
        if v < best_v:
            best_v, best_x = v, x
    starts = [best_x]
    rng = np.random.default_rng(seed)
    starts += [best_x + 0.1 * rng.standard_normal(len(g)) for _ in range(3)]
    for s in starts:
        res = minimize(m.value, s, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 8000})
        if res.fun < best_v:
            best_v, best_x = res.fun, res.x
    return best_x, best_v


def test_stationary_anchor():
    res = cubic_step(CubicModel(np.zeros(3), np.diag([1.0, 2.0, 3.0]), 1.0))
    npt.assert_allclose(res.h, np.zeros(3), atol=1e-14)
    assert res.r == 0.0


def test_scalar_root():
    # optimality in 1-D: -4 + 2h + 3h|h| = 0 with positive root of
    # 3h^2 + 2h - 4 = 0
    res = cubic_step(CubicModel(np.array([-4.0]), np.array([[2.0]]), 6.0))
    expected = (-1.0 + math.sqrt(13.0)) / 3.0
    npt.assert_allclose(res.h, [expected], rtol=1e-10)


def test_indefinite_2d_against_brute_force():
    g = np.array([1.0, 1.0])
    H = np.diag([-1.0, 2.0])
    m = CubicModel(g, H, 2.0)
    res = cubic_step(m)
    assert res.r > 1.0          # shifted Hessian must be PD
    x_ref, v_ref = brute_force_min(g, H, 2.0, box=(-3.0, 3.0))
    npt.assert_allclose(res.h, x_ref, atol=1e-5)
    assert m.value(res.h) <= v_ref + 1e-10


def test_secular_zero_gradient():
    E = sym_eig(np.diag([1.0, 2.0]))
    assert secular_root(E, np.zeros(2), 2.0, 1e-12).r == 0.0


def test_secular_analytic_value():
    # 4/(1+r)^2 = r^2 has the root r = 1 (from r^2 (1+r)^2 = 4)
    E = sym_eig(np.array([[1.0]]))
    out = secular_root(E, np.array([2.0]), 2.0, 1e-13)
    npt.assert_allclose(out.r, 1.0, atol=1e-12)
    phi = 4.0 / (1.0 + out.r) ** 2 - out.r**2
    assert abs(phi) <= 1e-12


def test_hard_case_branch_and_value():
    # gradient orthogonal to the bottom eigenspace and too small for an
    # interior root: boundary radius r = -2 lambda_min / M = 1
    H = np.diag([-1.0, 1.0])
    g = np.array([0.0, 0.1])
    out = secular_root(sym_eig(H), g, 2.0, 1e-12)
    assert out.hard_case
    npt.assert_allclose(out.r, 1.0, rtol=1e-12)

    m = CubicModel(g, H, 2.0)
    res = cubic_step(m)
    assert res.hard_case
    npt.assert_allclose(res.r, 1.0, rtol=1e-10)
    x_ref, v_ref = brute_force_min(g, H, 2.0, box=(-2.0, 2.0))
    # the minimizer may be either of two symmetric points; compare values
    assert m.value(res.h) <= v_ref + 1e-8


def test_stationarity_and_certificate(rng):
    for _ in range(300):
        n = int(rng.integers(1, 9))
        H = symmetrize(rng.standard_normal((n, n)))
        g = rng.standard_normal(n)
        M = 10.0 ** rng.uniform(-1, 1)
        res = cubic_step(CubicModel(g, H, M), tol=1e-10)
        gn = np.linalg.norm(g)
        resid = np.linalg.norm(g + H @ res.h + 0.5 * M * res.r * res.h)
        assert resid <= 1e-10 * max(1.0, gn)
        lam_min = np.linalg.eigvalsh(H)[0]
        assert lam_min + 0.5 * M * res.r >= -1e-10
        assert abs(res.r - np.linalg.norm(res.h)) <= 1e-12 * max(1.0, res.r)


def test_radius_monotone_in_M(rng):
    for _ in range(200):
        n = int(rng.integers(1, 8))
        H = symmetrize(rng.standard_normal((n, n)))
        g = rng.standard_normal(n)
        M = 10.0 ** rng.uniform(-2, 2)
        r1 = cubic_step(CubicModel(g, H, M)).r
        r2 = cubic_step(CubicModel(g, H, 2.0 * M)).r
        assert r2 <= r1 * (1 + 1e-9) + 1e-12


def test_model_decrease(rng):
    for _ in range(200):
        n = int(rng.integers(1, 8))
        m = CubicModel(rng.standard_normal(n),
                       symmetrize(rng.standard_normal((n, n))),
                       10.0 ** rng.uniform(-2, 2))
        assert m.value(cubic_step(m).h) <= 1e-12


def test_rejects_bad_inputs():
    with pytest.raises(ValueError, match="positive"):
        CubicModel(np.zeros(2), np.eye(2), 0.0)
    with pytest.raises(ValueError, match="finite"):
        CubicModel(np.array([np.inf, 0.0]), np.eye(2), 1.0)
    with pytest.raises(ValueError, match="tol"):
        cubic_step(CubicModel(np.ones(2), np.eye(2), 1.0), tol=0.0)
