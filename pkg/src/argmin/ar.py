"""Epoch-restarted accumulative regularization for gradient-norm minimization.

Each epoch s pushes a fresh power-prox term centered at the previous epoch's
output onto the regularizer stack (weights sigma_s increase geometrically)
and runs an inner accelerated subroutine on the composed objective f_s.
Because the regularizer gradient is analytic, the plain-objective gradient is
recovered exactly at every iterate, so the loop can both select its output by
measured gradient norm and certify the decomposition bound at the end.

``ar_run`` executes a precomputed schedule; ``ar_parameter_free`` derives the
epoch lengths online from the backtracking estimate and needs no smoothness
constant; ``guess_and_check_D`` additionally removes the initial-distance
input by geometric retries.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import AlgorithmAbort, EpochCapExceeded
from .problems import ProblemOracle
from .regularization import (RegularizerStack, compose, correction_norm_bound,
                             derivative_lipschitz_addon, recover_subgradient)
from .subroutines import (FixedN, RunTrace, SmallestK, SubroutineResult,
                          acnm_run, adaptive_run, agd_run)

_C_RATIO = 12.0 / (math.sqrt(2.0) - 1.0) ** 2   # estimating C per unit L3

_SUB_ORDER = {"acnm": 2, "agd": 1, "adaptive_acnm": 2, "adaptive_agd": 1}


@dataclass(frozen=True)
class EpochSchedule:
    """Regularization weights and inner iteration counts per epoch."""

    sigmas: np.ndarray
    epoch_lengths: np.ndarray
    note: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "sigmas", np.asarray(self.sigmas, dtype=float))
        object.__setattr__(self, "epoch_lengths",
                           np.asarray(self.epoch_lengths, dtype=int))
        if self.sigmas.shape != self.epoch_lengths.shape or self.sigmas.ndim != 1:
            raise ValueError("sigmas and epoch_lengths must be 1-d and aligned")
        if self.S < 1:
            raise ValueError("schedule needs at least one epoch")
        if self.sigmas[0] <= 0 or np.any(np.diff(self.sigmas) <= 0):
            raise ValueError("sigmas must be positive and strictly increasing")
        if np.any(self.epoch_lengths < 1):
            raise ValueError("epoch lengths must be >= 1")

    @property
    def S(self):
        return int(self.sigmas.shape[0])


def schedule_cubic(eps, D, L3) -> EpochSchedule:
    """Third-order schedule: sigma_s = 4^(s-2) eps / D^2 over
    S = ceil(log4(L3 D^2 / eps)) + 1 epochs, with
    N_s = ceil(4 (480 (L3 + 4 sigma_s) / sigma_s)^(1/3)).
    """
    if eps <= 0 or D <= 0 or L3 <= 0:
        raise ValueError("eps, D, L3 must all be positive")
    note = None
    S = math.ceil(math.log(L3 * D * D / eps, 4.0)) + 1
    if S < 1:
        S = 1
        note = "coarse target: eps >= L3 * D^2, epoch count clamped to 1"
    s = np.arange(1, S + 1)
    sigmas = 4.0 ** (s - 2) * eps / D**2
    lengths = np.ceil(4.0 * (480.0 * (L3 + 4.0 * sigmas) / sigmas) ** (1.0 / 3.0))
    return EpochSchedule(sigmas, lengths.astype(int), note)


def schedule_general(eps, D, L, p, nu, C_A, regime) -> EpochSchedule:
    """Generic schedule for a subroutine of order p on a nu-Holder problem.

    ``hoelder`` uses the degree-(p+nu) epoch law (ratio 2^(p+nu-1), length
    exponent 1/(p+nu)); ``lipschitz`` the accelerated-optimal law (ratio
    2^((3p+1)/2), length exponent 2/(3p+1)).
    """
    if eps <= 0 or D <= 0 or L <= 0:
        raise ValueError("eps, D, L must all be positive")
    p = int(p)
    nu = float(nu)
    if p < 1 or not (0.0 <= nu <= 1.0) or p + nu < 2:
        raise ValueError(f"invalid smoothness orders (p={p}, nu={nu})")
    if C_A < 1:
        raise ValueError("C_A must be >= 1")
    kappa = p + nu
    note = None
    if regime == "hoelder":
        base = C_A * 4.0 ** (kappa - 2.0) * D ** (kappa - 1.0) * L
        S = math.ceil(math.log(base / eps, 2.0 ** (kappa - 1.0))) + 1
        if S < 1:
            S = 1
            note = "coarse target: epoch count clamped to 1"
        s = np.arange(1, S + 1)
        sigmas = 2.0 ** ((kappa - 1.0) * (s - 1)) * eps / (
            C_A * 4.0 ** (kappa - 2.0) * D ** (kappa - 1.0))
        lengths = np.ceil(4.0 * (2.0 ** (kappa - 2.0) * kappa * C_A * L / sigmas)
                          ** (1.0 / kappa)) + 1
    elif regime == "lipschitz":
        base = C_A * D**p * L
        S = math.ceil(2.0 / (3 * p + 1) * math.log2(base / eps)) + 1
        if S < 1:
            S = 1
            note = "coarse target: epoch count clamped to 1"
        s = np.arange(1, S + 1)
        sigmas = 2.0 ** ((s - 1) * (3 * p + 1) / 2.0) * eps / (C_A * D**p)
        lengths = np.ceil(4.0 * ((p + 1) * C_A * L / sigmas) ** (2.0 / (3 * p + 1)))
    else:
        raise ValueError(f"unknown regime {regime!r}")
    return EpochSchedule(sigmas, np.maximum(lengths, 1).astype(int), note)


@dataclass
class ARResult:
    x_hat: np.ndarray
    grad_f_at_x_hat: np.ndarray
    stack: RegularizerStack
    schedule_used: EpochSchedule | None
    total_calls: tuple
    trace: object
    meta: dict = field(default_factory=dict)

    @property
    def grad_norm(self):
        return float(np.linalg.norm(self.grad_f_at_x_hat))


def _run_epoch(sub, composed, x_start, N, L_eff, cubic_tol, L_carry,
               window, stop) -> SubroutineResult:
    if sub == "acnm":
        return acnm_run(composed, x_start, M=2.0 * L_eff, C=_C_RATIO * L_eff,
                        N=N, cubic_tol=cubic_tol, window=window, stop=stop)
    if sub == "agd":
        return agd_run(composed, x_start, L=L_eff, N=N, window=window, stop=stop)
    if sub in ("adaptive_acnm", "adaptive_agd"):
        p = _SUB_ORDER[sub]
        return adaptive_run(composed, x_start, L_init=L_carry, p=p,
                            stop_rule=FixedN(N), cubic_tol=cubic_tol,
                            window=window, stop=stop)
    raise ValueError(f"unknown subroutine kind {sub!r}")


def _stamp(trace_out, res, stack, epoch, sigma):
    for row in res.trace:
        row.epoch = epoch
        row.sigma = sigma
        if row.x is not None and row.grad is not None:
            row.grad_base_norm = float(np.linalg.norm(
                recover_subgradient(stack, row.grad, row.x)))
        trace_out.append(row)


def ar_run(oracle: ProblemOracle, x0, sched: EpochSchedule, sub="acnm",
           p=2, nu=1.0, L=None, cubic_tol=1e-10, stop_grad=None,
           final_window=True, L_init=None) -> ARResult:
    """Run the accumulative-regularization loop over a fixed schedule.

    In the last epoch the subroutine continues for a second window of the
    same length and the output is the window iterate with the smallest
    recovered plain-objective gradient (ties to the earliest); the output
    gradient is re-evaluated on the base oracle.  ``stop_grad`` stops the
    whole loop early as soon as the recovered gradient falls below it.
    """
    if sub not in _SUB_ORDER:
        raise ValueError(f"unknown subroutine kind {sub!r}")
    if _SUB_ORDER[sub] != p:
        raise ValueError(f"subroutine {sub} has order {_SUB_ORDER[sub]}, not p={p}")
    x0 = np.asarray(x0, dtype=float)
    kappa = p + nu
    if L is None:
        L = oracle.known.L3 if p == 2 else oracle.known.L2
        if L is None:
            raise ValueError("no smoothness constant available; pass L explicitly")
    addon = derivative_lipschitz_addon(p, nu)

    trace = RunTrace()
    stack = RegularizerStack(power=kappa)
    x_prev = x0
    L_carry = L_init if L_init is not None else L
    stopped = False
    x_hat = None
    epochs_run = 0

    def make_stop(stack):
        if stop_grad is None:
            return None
        def _stop(k, x, g):
            base = recover_subgradient(stack, g, x)
            return float(np.linalg.norm(base)) <= stop_grad
        return _stop

    sigma_prev = 0.0
    for s in range(1, sched.S + 1):
        sigma_s = float(sched.sigmas[s - 1])
        N_s = int(sched.epoch_lengths[s - 1])
        stack.push(x_prev, sigma_s - sigma_prev)
        composed = compose(oracle, stack)
        L_eff = L + addon * sigma_s
        is_final = s == sched.S
        window = (N_s + 1, 2 * N_s) if (is_final and final_window) else None
        N_run = 2 * N_s if (is_final and final_window) else N_s
        res = _run_epoch(sub, composed, x_prev, N_run, L_eff, cubic_tol,
                         L_carry, window, make_stop(stack))
        _stamp(trace, res, stack, s, sigma_s)
        if res.L_out is not None:
            L_carry = res.L_out
        epochs_run = s
        if res.stopped_early:
            x_hat = res.x_out
            stopped = True
            break
        if is_final and final_window and res.window:
            norms = [float(np.linalg.norm(recover_subgradient(stack, pt.grad, pt.x)))
                     for pt in res.window]
            x_hat = res.window[int(np.argmin(norms))].x
        else:
            x_hat = res.x_out
        x_prev = res.x_out
        sigma_prev = sigma_s

    grad_base = oracle.grad(x_hat)
    return ARResult(
        x_hat=x_hat, grad_f_at_x_hat=grad_base, stack=stack,
        schedule_used=sched, total_calls=oracle.counter.snapshot(), trace=trace,
        meta={"sub": sub, "p": p, "nu": nu, "epochs_run": epochs_run,
              "stopped_early": stopped, "L_carry": L_carry,
              "correction_bound": correction_norm_bound(stack, x_hat)},
    )


def ar_parameter_free(oracle: ProblemOracle, x0, sigma1, L0, p, nu=1.0,
                      cubic_tol=1e-10, epoch_cap=200, c_A=1.0) -> ARResult:
    """Accumulative regularization with online epoch lengths and no
    smoothness constant: sigma_s = 2^(p+nu-1) sigma_{s-1}; each epoch runs
    the order-p backtracking subroutine until the smallest k satisfying
    k >= 8 [L_{s,k}(p+nu)/(4 sigma_s)]^(1/(p+nu)) + 1, then an equal extra
    window; terminates once sigma_s >= L_{s,2N}^((p+nu)^2) /
    L_{s,N}^((p+nu-1)(p+nu+1)) and outputs the window point of smallest
    recovered gradient among the best-value iterates.
    """
    if sigma1 <= 0 or L0 <= 0:
        raise ValueError("sigma1 and L0 must be positive")
    if sigma1 > c_A:
        warnings.warn(
            f"initial regularization sigma1={sigma1:.3e} exceeds the "
            f"configured subroutine constant c_A={c_A:.3e}; the output "
            "guarantee may degrade", stacklevel=2)
    x0 = np.asarray(x0, dtype=float)
    kappa = p + nu

    g0 = oracle.grad(x0)
    if float(np.linalg.norm(g0)) == 0.0:
        stack = RegularizerStack(power=kappa)
        return ARResult(x0, g0, stack, None, oracle.counter.snapshot(),
                        RunTrace(), meta={"epochs_run": 0, "trivial": True})

    trace = RunTrace()
    stack = RegularizerStack(power=kappa)
    x_prev = x0
    L_carry = float(L0)
    sigma_prev = 0.0
    sigma_s = float(sigma1)
    sig_hist, n_hist, l_rule_hist, l_end_hist = [], [], [], []

    for s in range(1, epoch_cap + 1):
        stack.push(x_prev, sigma_s - sigma_prev)
        composed = compose(oracle, stack)
        res = adaptive_run(composed, x_prev, L_init=L_carry,
                           p=p, stop_rule=SmallestK(sigma=sigma_s, pnu=kappa),
                           cubic_tol=cubic_tol)
        _stamp(trace, res, stack, s, sigma_s)
        sig_hist.append(sigma_s)
        n_hist.append(res.N_rule)
        l_rule_hist.append(res.L_at_rule)
        l_end_hist.append(res.L_at_window_end)

        log_ratio = (kappa**2 * math.log(res.L_at_window_end)
                     - (kappa - 1.0) * (kappa + 1.0) * math.log(res.L_at_rule))
        terminate = math.log(sigma_s) >= log_ratio
        if terminate:
            norms = [float(np.linalg.norm(recover_subgradient(stack, pt.grad, pt.x)))
                     for pt in res.z_window]
            best = int(np.argmin(norms))
            x_hat = res.z_window[best].x
            grad_base = oracle.grad(x_hat)
            sched = EpochSchedule(np.array(sig_hist), np.array(n_hist, dtype=int))
            return ARResult(
                x_hat=x_hat, grad_f_at_x_hat=grad_base, stack=stack,
                schedule_used=sched, total_calls=oracle.counter.snapshot(),
                trace=trace,
                meta={"epochs_run": s, "sub": f"adaptive_p{p}",
                      "L_out": res.L_at_rule, "sigma_final": sigma_s,
                      "N_rule": n_hist, "L_at_rule": l_rule_hist,
                      "L_at_window_end": l_end_hist,
                      "correction_bound": correction_norm_bound(stack, x_hat)},
            )
        x_prev = res.x_at_rule
        L_carry = res.L_at_rule
        sigma_prev = sigma_s
        sigma_s = 2.0 ** (kappa - 1.0) * sigma_s

    raise EpochCapExceeded(f"no termination within {epoch_cap} epochs", trace)


def guess_and_check_D(oracle: ProblemOracle, x0, eps, L0, p, nu=1.0,
                      cubic_tol=1e-10, round_cap=60, epoch_cap=200,
                      probe_sigma=None) -> ARResult:
    """Fully parameter-free driver: probes an initial-distance underestimate
    D0 from two backtracking iterations, then reruns the parameter-free loop
    with D_t = 4 D_{t-1} until the measured gradient meets eps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x0 = np.asarray(x0, dtype=float)
    kappa = p + nu
    if probe_sigma is None:
        probe_sigma = 1e-6 * L0

    probe_stack = RegularizerStack(power=kappa)
    probe_stack.push(x0, probe_sigma)
    probe = adaptive_run(compose(oracle, probe_stack), x0, L_init=L0, p=p,
                         stop_rule=FixedN(2), cubic_tol=cubic_tol)
    gn_probe = float(np.linalg.norm(probe.grad_fs_at_out))
    D0 = (gn_probe / probe.L_out) ** (1.0 / (kappa - 1.0))
    if D0 <= 0 or not math.isfinite(D0):
        D0 = max(1e-8, float(np.linalg.norm(probe.x_out - x0)))

    D_t = D0
    for t in range(1, round_cap + 1):
        D_t = 4.0 * D_t
        sigma1 = eps / (3.0 * (9.0 * D_t) ** (kappa - 1.0))
        res = ar_parameter_free(oracle, x0, sigma1, L0, p, nu=nu,
                                cubic_tol=cubic_tol, epoch_cap=epoch_cap)
        if res.grad_norm <= eps:
            res.meta.update({"D0": D0, "D_final": D_t, "rounds": t,
                             "probe_L": probe.L_out})
            return res
    raise AlgorithmAbort(f"no round met eps within {round_cap} retries", None)


def oversolve_reference(oracle, x0, p, L, max_iters, grad_tol=1e-11,
                        cubic_tol=1e-12):
    """Reference minimizer for invariant checks, segregated from anything
    measured: an accelerated phase to get near the solution, then plain
    adaptive cubic-Newton polish steps for the superlinear tail.
    Returns (x, f, ok).
    """
    coarse = max(grad_tol, 1e-6)
    stop = lambda k, x, g: float(np.linalg.norm(g)) <= coarse
    if p == 2:
        res = acnm_run(oracle, x0, M=2.0 * L, C=_C_RATIO * L, N=max_iters,
                       cubic_tol=cubic_tol, stop=stop)
    else:
        res = agd_run(oracle, x0, L=L, N=max_iters, stop=stop)
    x, gn = _polish_newton(oracle, res.x_best, grad_tol, cubic_tol)
    f = oracle.eval(x, 0)[0]
    return x, f, gn <= grad_tol


def _polish_newton(oracle, x, grad_tol, cubic_tol, max_steps=400):
    """Greedy cubic-Newton polish: accept steps that shrink the gradient,
    quadruple the cubic weight otherwise."""
    from .cubic import CubicModel, cubic_step
    f, g, H = oracle.eval(np.asarray(x, dtype=float), 2)
    gn = float(np.linalg.norm(g))
    M = 1e-8
    for _ in range(max_steps):
        if gn <= grad_tol:
            break
        try:
            step = cubic_step(CubicModel(g, H, M), cubic_tol)
        except Exception:
            M *= 4.0
            continue
        x_new = x + step.h
        f2, g2, H2 = oracle.eval(x_new, 2)
        gn2 = float(np.linalg.norm(g2))
        if gn2 < gn:
            x, f, g, H, gn = x_new, f2, g2, H2, gn2
            M = max(0.25 * M, 1e-10)
        else:
            M *= 4.0
            if M > 1e12:
                break
    return x, gn
