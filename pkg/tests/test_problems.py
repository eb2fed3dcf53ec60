import numpy as np
import numpy.testing as npt
import pytest

from argmin.numdiff import fd_gradient, fd_hessian, rel_err
from argmin.problems import (DistanceUnavailable, dist_to_opt, make_problem)


def test_power_norm_values():
    p = make_problem("power_norm", q=3.0, center=np.zeros(2))
    f, g, _ = p.eval(np.array([0.0, 2.0]), 1)
    npt.assert_allclose(f, 8.0 / 3.0)
    npt.assert_allclose(g, [0.0, 4.0])
    eg = rel_err(fd_gradient(lambda z: p.eval(z, 0)[0], np.array([0.0, 2.0])), g)
    assert eg <= 1e-6


def test_quadratic_values():
    p = make_problem("quadratic", A=np.diag([1.0, 4.0]), b=np.zeros(2))
    f, g, H = p.eval(np.array([1.0, 1.0]), 2)
    npt.assert_allclose(f, 2.5)
    npt.assert_allclose(g, [1.0, 4.0])
    npt.assert_allclose(H, np.diag([1.0, 4.0]))
    npt.assert_allclose(p.known.x_star, np.zeros(2))
    assert p.known.L2 == 4.0 and p.known.L3 == 0.0


def test_cubic_power_single_row():
    A = np.array([[1.0, 0.0]])
    p = make_problem("cubic_power", A=A, b=np.zeros(1), estimate_sigma=False)
    f, g, H = p.eval(np.array([2.0, 0.0]), 2)
    npt.assert_allclose(f, 8.0 / 3.0)
    npt.assert_allclose(g, [4.0, 0.0])
    npt.assert_allclose(H, np.diag([4.0, 0.0]))
    assert p.known.L3 == 2.0
    # the stored constant bounds |H(x) - H(y)| along the sensitive axis
    for x1, y1 in [(2.0, 0.5), (-1.0, 3.0), (0.1, -0.1)]:
        Hx = p.eval(np.array([x1, 0.0]), 2)[2]
        Hy = p.eval(np.array([y1, 0.0]), 2)[2]
        assert np.linalg.norm(Hx - Hy, 2) <= 2.0 * abs(x1 - y1) + 1e-12


def test_cubic_power_planted_solution(rng):
    A = rng.standard_normal((6, 3))
    xbar = rng.standard_normal(3)
    p = make_problem("cubic_power", A=A, b=A @ xbar, estimate_sigma=False)
    npt.assert_allclose(p.known.x_star, xbar, atol=1e-9)
    assert p.known.f_star == 0.0


def test_cubic_power_sigma_estimated_flag(rng):
    A = rng.standard_normal((6, 3))
    p = make_problem("cubic_power", A=A, b=np.zeros(6))
    assert p.known.sigma_q is not None
    assert "sigma_q" in p.known.estimated
    q, sig = p.known.sigma_q
    assert q == 3.0 and sig > 0


def test_logistic_constants(rng):
    A = rng.standard_normal((10, 4))
    y = np.where(rng.standard_normal(10) > 0, 1.0, -1.0)
    p = make_problem("logistic", A=A, y=y, reg=0.05)
    assert p.known.sigma_q == (2.0, 0.05)
    assert "L3" in p.known.estimated
    # analytic L2 dominates the sampled Hessian norm
    for _ in range(20):
        x = rng.standard_normal(4)
        assert np.linalg.norm(p.eval(x, 2)[2], 2) <= p.known.L2 + 1e-9


def test_fd_agreement_all_families(rng):
    A = rng.standard_normal((8, 4))
    y = np.where(rng.standard_normal(8) > 0, 1.0, -1.0)
    problems = [
        make_problem("quadratic", A=np.diag([1.0, 2.0, 3.0, 4.0]), b=np.ones(4)),
        make_problem("cubic_power", A=A, b=rng.standard_normal(8),
                     estimate_sigma=False),
        make_problem("power_norm", q=2.5, center=rng.standard_normal(4)),
        make_problem("logistic", A=A, y=y, reg=0.1, estimate_l3=False),
        make_problem("logsumexp", A=A, b=rng.standard_normal(8), t=0.7,
                     estimate_l3=False),
    ]
    for p in problems:
        for _ in range(100):
            x = rng.standard_normal(p.dim) * 1.5
            f, g, H = p.eval(x, 2)
            assert rel_err(fd_gradient(lambda z: p.eval(z, 0)[0], x), g) <= 1e-5
            assert rel_err(fd_hessian(lambda z: p.eval(z, 1)[1], x), H) <= 1e-5


def test_convexity_sampled(rng):
    A = rng.standard_normal((8, 4))
    p = make_problem("cubic_power", A=A, b=rng.standard_normal(8),
                     estimate_sigma=False)
    for _ in range(1000):
        x = rng.standard_normal(4) * 2
        y = rng.standard_normal(4) * 2
        gx = p.eval(x, 1)[1]
        gy = p.eval(y, 1)[1]
        assert (gx - gy) @ (x - y) >= -1e-10


def test_power_norm_uniform_convexity(rng):
    for q in (2.0, 2.5, 3.0, 4.0):
        c = rng.standard_normal(3)
        p = make_problem("power_norm", q=q, center=c)
        sig = p.known.sigma_q[1]
        assert sig == 2.0 ** (-(q - 2.0))
        for _ in range(1000):
            x = c + rng.standard_normal(3) * 2
            y = c + rng.standard_normal(3) * 2
            fx = p.eval(x, 0)[0]
            fy, gy = p.eval(y, 1)[:2]
            lhs = fx - fy - gy @ (x - y)
            assert lhs >= sig / q * np.linalg.norm(x - y) ** q - 1e-10


def test_counter_orders():
    p = make_problem("power_norm", q=3.0, center=np.zeros(2))
    p.eval(np.ones(2), 2)
    assert p.counter.snapshot() == (1, 1, 1)
    p.eval(np.ones(2), 1)
    assert p.counter.snapshot() == (2, 2, 1)
    p.eval(np.ones(2), 0)
    assert p.counter.snapshot() == (3, 2, 1)


def test_dist_to_opt_known_minimizer():
    p = make_problem("power_norm", q=3.0, center=np.zeros(2))
    assert dist_to_opt(p, np.array([3.0, 4.0])) == 5.0
    q = make_problem("quadratic", A=np.array([[2.0]]), b=np.array([2.0]))
    assert dist_to_opt(q, np.zeros(1)) == 1.0


def test_dist_to_opt_sigma_route():
    # q = 3, sigma = 1/2, grad norm 4 -> (3*4 / (2*0.5))^(1/2) = sqrt(12)
    p = make_problem("power_norm", q=3.0, center=np.zeros(2))
    p.known.x_star = None       # force the uniform-convexity route
    x0 = np.array([0.0, 2.0])     # gradient (0, 4)
    npt.assert_allclose(dist_to_opt(p, x0), np.sqrt(12.0))


def test_dist_to_opt_unavailable(rng):
    p = make_problem("logsumexp", A=rng.standard_normal((5, 3)),
                     b=np.zeros(5), t=1.0, estimate_l3=False)
    with pytest.raises(DistanceUnavailable, match="distance unavailable"):
        dist_to_opt(p, np.zeros(3))


def test_invalid_specs_rejected(rng):
    with pytest.raises(ValueError):
        make_problem("power_norm", q=1.5, center=np.zeros(2))
    with pytest.raises(ValueError, match="empty"):
        make_problem("cubic_power", A=np.zeros((0, 2)), b=np.zeros(0))
    with pytest.raises(ValueError, match="unknown problem family"):
        make_problem("rosenbrock")
