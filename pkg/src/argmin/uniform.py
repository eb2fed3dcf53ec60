"""Restart schemes for uniformly convex objectives.

With a degree-q lower curvature bound, the gradient norm at a restart point
bounds the distance to the minimizer, so each restart can re-run the
accumulative-regularization loop on a fresh stack sized for a halved
gradient target.  Depending on q versus p+1 the prescribed epoch lengths are
constant (linear convergence), geometric (sublinear), or collapse to one
step (superlinear).  ``pf_uniform`` removes the need to know the uniform
convexity constant by quartering a running guess whenever halving fails.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .ar import ARResult, ar_parameter_free, ar_run, schedule_general
from .errors import EpochCapExceeded, HalvingFailure
from .problems import ProblemOracle
from .regularization import RegularizerStack
from .subroutines import RunTrace


@dataclass
class RestartState:
    """Mutable state of a restart loop."""

    k: int
    x_k: np.ndarray
    nu_k: np.ndarray
    grad_norm_history: list = field(default_factory=list)
    sigma_estimate: float | None = None


def epoch_length_real(grad_norm, L, sigma_q, p, q) -> float:
    """The prescribed (real-valued) epoch length

    m = max{ (q L / sigma_q)^(2/(3p+1)) *
             (q ||nu|| / (2 sigma_q))^(2(p-q+1)/((3p+1)(q-1))), 1 }.
    """
    if min(grad_norm, L, sigma_q) <= 0 or q < 2:
        raise ValueError("grad_norm, L, sigma_q must be positive and q >= 2")
    a = (q * L / sigma_q) ** (2.0 / (3 * p + 1))
    expo = 2.0 * (p - q + 1.0) / ((3 * p + 1) * (q - 1.0))
    b = (q * grad_norm / (2.0 * sigma_q)) ** expo
    return max(a * b, 1.0)


def epoch_length_mk(grad_norm, L, sigma_q, p, q) -> int:
    """Integer epoch length: the ceiling of ``epoch_length_real``."""
    return math.ceil(epoch_length_real(grad_norm, L, sigma_q, p, q))


def _sub_for(p):
    return "acnm" if p == 2 else "agd"


def restart_uniform(oracle: ProblemOracle, x0, L, sigma_q, p, q, eps,
                    C_A=8.0, cubic_tol=1e-10, epoch_cap=400) -> ARResult:
    """Known-constant restart loop: halve the gradient norm every epoch.

    Each epoch runs the regularization loop on a fresh stack from the
    current point, with the distance bound (q ||nu|| / (2 sigma_q))^(1/(q-1))
    and target ||nu||/2, stopping as soon as the recovered gradient meets the
    target.  A halving failure after one doubled retry aborts with a
    diagnostic (the usual cause is an overestimated sigma_q).
    """
    x0 = np.asarray(x0, dtype=float)
    nu0 = oracle.grad(x0)
    gn = float(np.linalg.norm(nu0))
    state = RestartState(k=0, x_k=x0, nu_k=nu0, grad_norm_history=[gn])
    trace = RunTrace()
    m_real_hist, m_hist, inner_iters = [], [], []

    if gn <= eps:
        return ARResult(x0, nu0, RegularizerStack(power=p + 1.0), None,
                        oracle.counter.snapshot(), trace,
                        meta={"epochs_run": 0, "trivial": True,
                              "m_real": [], "m_k": [], "grad_norms": [gn]})

    last = None
    for k in range(1, epoch_cap + 1):
        m_real = epoch_length_real(gn, L, sigma_q, p, q)
        m_real_hist.append(m_real)
        m_hist.append(math.ceil(m_real))
        D_k = (q * gn / (2.0 * sigma_q)) ** (1.0 / (q - 1.0))
        target = 0.5 * gn

        res = None
        for attempt_eps in (target, 0.5 * target):
            sched = schedule_general(attempt_eps, D_k, L, p, 1.0, C_A, "hoelder")
            cand = ar_run(oracle, state.x_k, sched, sub=_sub_for(p), p=p,
                          nu=1.0, L=L, cubic_tol=cubic_tol, stop_grad=target)
            if cand.grad_norm <= target:
                res = cand
                break
        if res is None:
            raise HalvingFailure(
                f"gradient norm failed to halve at restart {k} "
                f"({gn:.3e} -> {cand.grad_norm:.3e}); sigma_q likely "
                "overestimated", trace)
        trace.extend(res.trace.rows)
        inner_iters.append(len(res.trace))
        state = RestartState(k=k, x_k=res.x_hat, nu_k=res.grad_f_at_x_hat,
                             grad_norm_history=state.grad_norm_history)
        gn = res.grad_norm
        state.grad_norm_history.append(gn)
        last = res
        if gn <= eps:
            return ARResult(
                state.x_k, state.nu_k, last.stack, last.schedule_used,
                oracle.counter.snapshot(), trace,
                meta={"epochs_run": k, "m_real": m_real_hist, "m_k": m_hist,
                      "grad_norms": state.grad_norm_history,
                      "inner_iters": inner_iters, "p": p, "q": q})
    raise EpochCapExceeded(f"restart cap {epoch_cap} reached", trace)


def pf_uniform(oracle: ProblemOracle, x0, sigma0, L0, p, eps,
               cubic_tol=1e-10, epoch_cap=200, inner_epoch_cap=200) -> ARResult:
    """Parameter-free restart loop for degree-(p+1) uniformly convex f.

    Runs the parameter-free regularization loop with initial weight
    sigma_est / (3 (p+1) 9^p); quarters the running convexity guess whenever
    the gradient fails to halve, and stops at the target accuracy.
    """
    if sigma0 <= 0 or L0 <= 0 or eps <= 0:
        raise ValueError("sigma0, L0, eps must be positive")
    x0 = np.asarray(x0, dtype=float)
    nu0 = oracle.grad(x0)
    gn = float(np.linalg.norm(nu0))
    trace = RunTrace()
    state = RestartState(k=0, x_k=x0, nu_k=nu0, grad_norm_history=[gn],
                         sigma_estimate=float(sigma0))
    sigma_hist = [float(sigma0)]
    quarterings = 0
    halvings = 0

    if gn <= eps:
        return ARResult(x0, nu0, RegularizerStack(power=p + 1.0), None,
                        oracle.counter.snapshot(), trace,
                        meta={"epochs_run": 0, "trivial": True,
                              "quarterings": 0, "halvings": 0,
                              "sigma_history": sigma_hist,
                              "grad_norms": [gn]})

    L_carry = float(L0)
    denom = 3.0 * (p + 1) * 9.0**p
    last = None
    for t in range(1, epoch_cap + 1):
        res = ar_parameter_free(oracle, state.x_k, state.sigma_estimate / denom,
                                L_carry, p, nu=1.0, cubic_tol=cubic_tol,
                                epoch_cap=inner_epoch_cap)
        trace.extend(res.trace.rows)
        gn_new = res.grad_norm
        if gn_new > 0.5 * gn:
            state.sigma_estimate /= 4.0
            quarterings += 1
        else:
            halvings += 1
        sigma_hist.append(state.sigma_estimate)
        state = RestartState(k=t, x_k=res.x_hat, nu_k=res.grad_f_at_x_hat,
                             grad_norm_history=state.grad_norm_history,
                             sigma_estimate=state.sigma_estimate)
        gn = gn_new
        state.grad_norm_history.append(gn)
        L_carry = res.meta.get("L_out", L_carry)
        last = res
        if gn <= eps:
            return ARResult(
                state.x_k, state.nu_k, last.stack, last.schedule_used,
                oracle.counter.snapshot(), trace,
                meta={"epochs_run": t, "quarterings": quarterings,
                      "halvings": halvings, "sigma_history": sigma_hist,
                      "grad_norms": state.grad_norm_history, "p": p})
    raise EpochCapExceeded(f"parameter-free restart cap {epoch_cap} reached",
                           trace)
