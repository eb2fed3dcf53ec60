import math

import numpy as np
import numpy.testing as npt
import pytest

from argmin.ar import (ar_parameter_free, ar_run, guess_and_check_D,
                       oversolve_reference, schedule_cubic, schedule_general)
from argmin.errors import EpochCapExceeded
from argmin.problems import make_problem
from argmin.regularization import compose, correction_norm_bound
from conftest import cubic_power_instance, quadratic_instance


def test_schedule_cubic_printed_values():
    s = schedule_cubic(1e-3, 1.0, 1.0)
    assert s.S == 6
    npt.assert_allclose(s.sigmas[0], 2.5e-4)
    assert s.epoch_lengths[0] == 498
    npt.assert_allclose(np.diff(np.log(s.sigmas)), math.log(4.0))


def test_schedule_cubic_clamp():
    s = schedule_cubic(1.0, 1.0, 1.0)      # eps = L3 * D^2
    assert s.S == 1
    s2 = schedule_cubic(10.0, 1.0, 1.0)    # coarser than L3 * D^2
    assert s2.S == 1
    assert s2.note is not None


def test_schedule_general_hoelder_ratio():
    s = schedule_general(1e-3, 1.0, 1.0, p=1, nu=1.0, C_A=4.0, regime="hoelder")
    npt.assert_allclose(s.sigmas[1:] / s.sigmas[:-1], 2.0)
    assert np.all(np.diff(s.epoch_lengths) <= 0)


def test_schedule_general_lipschitz_ratio():
    s = schedule_general(1e-4, 1.0, 1.0, p=2, nu=1.0, C_A=2.0, regime="lipschitz")
    npt.assert_allclose(s.sigmas[1:] / s.sigmas[:-1], 2.0**3.5)
    # N_s tracks sigma^(-2/7)
    expected = np.ceil(4.0 * (3.0 * 2.0 * 1.0 / s.sigmas) ** (2.0 / 7.0))
    npt.assert_allclose(s.epoch_lengths, np.maximum(expected, 1))


def test_schedule_general_rejects_bad_orders():
    with pytest.raises(ValueError, match="invalid smoothness"):
        schedule_general(1e-3, 1.0, 1.0, p=1, nu=0.5, C_A=4.0, regime="hoelder")
    with pytest.raises(ValueError, match="regime"):
        schedule_general(1e-3, 1.0, 1.0, p=1, nu=1.0, C_A=4.0, regime="optimal")
    with pytest.raises(ValueError, match="C_A"):
        schedule_general(1e-3, 1.0, 1.0, p=1, nu=1.0, C_A=0.5, regime="hoelder")


def test_ar_run_single_epoch_triangle_inequality():
    from argmin.ar import EpochSchedule
    prob, x0, _ = cubic_power_instance(n=4, rows=6)
    sched = EpochSchedule(np.array([1e-6]), np.array([60]))
    out = ar_run(prob, x0, sched, sub="acnm", p=2, nu=1.0)
    comp = compose(prob, out.stack)
    g_fs = comp.eval(out.x_hat, 1)[1]
    assert out.grad_norm <= (np.linalg.norm(g_fs)
                             + correction_norm_bound(out.stack, out.x_hat)
                             + 1e-12)
    assert len(out.stack.terms) == 1


def test_ar_run_reaches_target_cubic():
    prob, x0, xbar = cubic_power_instance()
    D = float(np.linalg.norm(x0 - xbar))
    sched = schedule_cubic(1e-3, D, prob.known.L3)
    out = ar_run(prob, x0, sched, sub="acnm", p=2, nu=1.0)
    assert out.grad_norm <= 1e-3


def test_ar_run_reaches_target_agd():
    prob, x0, xbar = quadratic_instance()
    D = float(np.linalg.norm(x0 - xbar))
    sched = schedule_general(1e-4, D, prob.known.L2, p=1, nu=1.0, C_A=4.0,
                             regime="hoelder")
    out = ar_run(prob, x0, sched, sub="agd", p=1, nu=1.0)
    assert out.grad_norm <= 1e-4


def test_ar_result_gradient_is_base_reeval():
    prob, x0, xbar = cubic_power_instance(n=4, rows=6)
    D = float(np.linalg.norm(x0 - xbar))
    sched = schedule_cubic(1e-2, D, prob.known.L3)
    out = ar_run(prob, x0, sched, sub="acnm", p=2, nu=1.0)
    g_base = prob.eval(out.x_hat, 1)[1]
    npt.assert_allclose(out.grad_f_at_x_hat, g_base)
    comp = compose(prob, out.stack)
    g_fs = comp.eval(out.x_hat, 1)[1]
    from argmin.regularization import recover_subgradient
    rec = recover_subgradient(out.stack, g_fs, out.x_hat)
    err = np.linalg.norm(rec - out.grad_f_at_x_hat)
    assert err <= 1e-12 * max(1.0, np.linalg.norm(g_base))


def test_ar_run_early_stop():
    prob, x0, xbar = cubic_power_instance()
    D = float(np.linalg.norm(x0 - xbar))
    sched = schedule_cubic(1e-4, D, prob.known.L3)
    out_full = ar_run(prob, x0, sched, sub="acnm", p=2, nu=1.0)
    prob.reset_counter()
    out_stop = ar_run(prob, x0, sched, sub="acnm", p=2, nu=1.0, stop_grad=1e-3)
    assert out_stop.grad_norm <= 1e-3
    assert out_stop.meta["stopped_early"]
    assert out_stop.total_calls[2] < out_full.total_calls[2]


def test_ar_run_validates_subroutine_order():
    prob, x0, _ = cubic_power_instance()
    sched = schedule_cubic(1e-2, 1.0, prob.known.L3)
    with pytest.raises(ValueError, match="order"):
        ar_run(prob, x0, sched, sub="agd", p=2, nu=1.0)


def test_parameter_free_matches_target():
    c = np.array([0.3, -0.7, 0.2])
    prob = make_problem("power_norm", q=3.0, center=c)
    x0 = c + np.array([1.0, 0.5, -0.5])
    dist = float(np.linalg.norm(x0 - c))
    eps = 1e-3
    sigma1 = eps / (3.0 * (9.0 * dist) ** 2)
    out = ar_parameter_free(prob, x0, sigma1, L0=8.0, p=2, nu=1.0)
    assert out.grad_norm <= 3.0 * sigma1 * (9.0 * dist) ** 2
    assert out.grad_norm <= eps


def test_parameter_free_large_sigma_terminates_fast():
    c = np.zeros(3)
    prob = make_problem("power_norm", q=3.0, center=c)
    x0 = np.array([1.0, 0.0, 0.5])
    dist = float(np.linalg.norm(x0))
    with pytest.warns(UserWarning, match="sigma1"):
        out = ar_parameter_free(prob, x0, 100.0, L0=8.0, p=2, nu=1.0, c_A=1.0)
    assert out.meta["epochs_run"] <= 3
    assert out.grad_norm <= 3.0 * 100.0 * (9.0 * dist) ** 2


def test_parameter_free_zero_gradient_start():
    c = np.zeros(3)
    prob = make_problem("power_norm", q=3.0, center=c)
    out = ar_parameter_free(prob, c.copy(), 1e-3, L0=1.0, p=2, nu=1.0)
    assert out.meta.get("trivial")
    npt.assert_allclose(out.x_hat, c)


def test_parameter_free_epoch_cap():
    prob, x0, _ = cubic_power_instance(n=3, rows=5)
    with pytest.raises(EpochCapExceeded):
        ar_parameter_free(prob, x0, 1e-12, L0=1.0, p=2, nu=1.0, epoch_cap=1)


def test_guess_and_check_underestimates_distance():
    for seed in (0, 1, 2):
        rng = np.random.default_rng(seed)
        c = rng.standard_normal(3)
        prob = make_problem("power_norm", q=3.0, center=c)
        x0 = c + rng.standard_normal(3)
        dist = float(np.linalg.norm(x0 - c))
        out = guess_and_check_D(prob, x0, eps=1e-2, L0=4.0, p=2, nu=1.0)
        assert out.meta["D0"] <= dist * (1 + 1e-9)
        assert out.meta["rounds"] <= math.ceil(math.log(dist / out.meta["D0"], 4.0)) + 1
        assert out.grad_norm <= 1e-2


def test_guess_and_check_trivial_target():
    prob, x0, _ = cubic_power_instance(n=3, rows=5)
    g0 = float(np.linalg.norm(prob.grad(x0)))
    out = guess_and_check_D(prob, x0, eps=10.0 * g0, L0=1.0, p=2, nu=1.0)
    assert out.meta["rounds"] == 1


def test_oversolve_reference_reaches_tolerance():
    prob, x0, _ = cubic_power_instance(n=4, rows=6)
    x, f, ok = oversolve_reference(prob, x0, p=2, L=prob.known.L3,
                                   max_iters=2000, grad_tol=1e-11)
    assert ok
    assert np.linalg.norm(prob.grad(x)) <= 1e-11
