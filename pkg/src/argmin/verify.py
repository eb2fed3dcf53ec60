"""Runtime verification suite: every module's invariants as executable checks.

Each check returns a ``CheckResult`` whose ``margin`` is the worst observed
quantity divided by its allowance, so a check passes iff margin <= 1.  The
suite is deterministic (seeded sampling) and runnable from the CLI
(``argmin verify``) or programmatically via ``run_all``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import regularization as reg
from .ar import ar_parameter_free, ar_run, oversolve_reference, schedule_cubic
from .cubic import CubicModel, cubic_step, secular_root
from .harness import ExperimentConfig, emit_csv, run_experiment
from .linalg import solve_shifted, sym_eig, symmetrize
from .numdiff import fd_gradient, fd_hessian, rel_err
from .problems import make_problem
from .regularization import (RegularizerStack, compose, correction_norm_bound,
                             recover_subgradient)
from .subroutines import acnm_run, adaptive_run, agd_run, FixedN

_C = 12.0 / (math.sqrt(2.0) - 1.0) ** 2


@dataclass
class CheckResult:
    module: str
    name: str
    passed: bool
    margin: float
    detail: str = ""


def _result(module, name, margin, detail="", allowed=1.0):
    return CheckResult(module, name, margin <= allowed, margin, detail)


# ---------------------------------------------------------------- core_linalg

def check_eig_reconstruct(rng):
    worst = 0.0
    worst_orth = 0.0
    for _ in range(1000):
        n = int(rng.integers(1, 17))
        H = symmetrize(rng.standard_normal((n, n)) * 10.0 ** rng.uniform(-2, 2))
        E = sym_eig(H)
        resid = np.linalg.norm(E.reconstruct() - H) / max(1.0, np.linalg.norm(H))
        orth = np.abs(E.eigvecs.T @ E.eigvecs - np.eye(n)).max()
        worst = max(worst, resid / 1e-10)
        worst_orth = max(worst_orth, orth / 1e-12)
    return _result("core_linalg", "eig_reconstruct_1000", max(worst, worst_orth),
                   f"worst residual ratio {worst:.3g}, orth ratio {worst_orth:.3g}")


def check_solve_shifted(rng):
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 9))
        H = symmetrize(rng.standard_normal((n, n)))
        E = sym_eig(H)
        shift = -float(E.eigvals[0]) + 10.0 ** rng.uniform(-3, 1)
        g = rng.standard_normal(n)
        h = solve_shifted(E, shift, g)
        resid = np.linalg.norm((H + shift * np.eye(n)) @ h + g)
        worst = max(worst, resid / (1e-12 * max(1.0, np.linalg.norm(g))))
    return _result("core_linalg", "shifted_solve_residual", worst)


# --------------------------------------------------------------- cubic_solver

def check_cubic_monotone_m(rng):
    bad = 0
    for _ in range(200):
        n = int(rng.integers(1, 8))
        H = symmetrize(rng.standard_normal((n, n)))
        g = rng.standard_normal(n)
        M = 10.0 ** rng.uniform(-2, 2)
        r1 = cubic_step(CubicModel(g, H, M)).r
        r2 = cubic_step(CubicModel(g, H, 2 * M)).r
        if r2 > r1 * (1 + 1e-9) + 1e-12:
            bad += 1
    return _result("cubic_solver", "radius_monotone_in_M", float(bad),
                   f"{bad} violations of 200", allowed=0.0)


def check_cubic_model_decrease(rng):
    worst = -math.inf
    for _ in range(200):
        n = int(rng.integers(1, 8))
        H = symmetrize(rng.standard_normal((n, n)))
        g = rng.standard_normal(n)
        m = CubicModel(g, H, 10.0 ** rng.uniform(-2, 2))
        worst = max(worst, m.value(cubic_step(m).h))
    return _result("cubic_solver", "model_decrease", worst / 1e-12,
                   f"max model value {worst:.3g}")


def _diag_secular_reference(lam, gh, M):
    """Independent root of ||h(r)|| - r = 0 via bracketed brentq."""
    def width(r):
        return float(np.linalg.norm(gh / (lam + 0.5 * M * r))) - r
    lo = max(0.0, -2.0 * lam.min() / M) + 1e-13
    hi = math.sqrt(2.0 * np.linalg.norm(gh) / M) + 2.0 * abs(lam.min()) / M + 1.0
    while width(hi) > 0:
        hi *= 2.0
    return brentq(width, lo, hi, xtol=1e-13)


def check_cubic_diag_agreement(rng):
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(1, 8))
        lam = rng.standard_normal(n) * 2.0
        gh = rng.standard_normal(n)
        gh[np.abs(gh) < 1e-3] = 1e-3       # keep away from the hard case
        M = 10.0 ** rng.uniform(-1, 1)
        r_ref = _diag_secular_reference(lam, gh, M)
        res = cubic_step(CubicModel(gh, np.diag(lam), M))
        worst = max(worst, abs(res.r - r_ref) / 1e-8)
    return _result("cubic_solver", "diagonal_secular_agreement", worst)


# ------------------------------------------------------------------- problems

def _sample_problems(rng):
    A = rng.standard_normal((8, 4))
    xbar = rng.standard_normal(4)
    w = rng.standard_normal(4)
    y = np.sign(A @ w + 0.1 * rng.standard_normal(8))
    y[y == 0] = 1.0
    return {
        "quadratic": make_problem("quadratic", A=np.diag([1.0, 2.0, 3.0, 4.0]),
                                  b=np.arange(4.0)),
        "cubic_power": make_problem("cubic_power", A=A, b=A @ xbar,
                                    estimate_sigma=False),
        "power_norm": make_problem("power_norm", q=3.0, center=xbar),
        "logistic": make_problem("logistic", A=A, y=y, reg=0.1,
                                 estimate_l3=False),
        "logsumexp": make_problem("logsumexp", A=A, b=rng.standard_normal(8),
                                  t=1.0, estimate_l3=False),
    }


def check_derivative_hygiene(rng):
    worst = 0.0
    worst_name = ""
    for name, p in _sample_problems(rng).items():
        for _ in range(100):
            x = rng.standard_normal(p.dim) * 1.5
            f, g, H = p.eval(x, 2)
            eg = rel_err(fd_gradient(lambda z: p.eval(z, 0)[0], x), g)
            eh = rel_err(fd_hessian(lambda z: p.eval(z, 1)[1], x), H)
            m = max(eg, eh) / 1e-5
            if m > worst:
                worst, worst_name = m, name
    return _result("problems", "fd_agreement_100pts", worst,
                   f"worst family {worst_name}")


def check_convexity(rng):
    worst = -math.inf
    for name, p in _sample_problems(rng).items():
        for _ in range(200):
            x = rng.standard_normal(p.dim) * 2.0
            y = rng.standard_normal(p.dim) * 2.0
            gx = p.eval(x, 1)[1]
            gy = p.eval(y, 1)[1]
            worst = max(worst, -float((gx - gy) @ (x - y)))
    return _result("problems", "monotone_gradient_pairs", worst / 1e-10,
                   f"most negative inner product {-worst:.3g}")


def check_power_norm_uniform_convexity(rng):
    worst = -math.inf
    for q in (2.0, 2.5, 3.0, 4.0):
        c = rng.standard_normal(3)
        p = make_problem("power_norm", q=q, center=c)
        sig = p.known.sigma_q[1]
        for _ in range(250):
            x = c + rng.standard_normal(3) * 2.0
            y = c + rng.standard_normal(3) * 2.0
            fx = p.eval(x, 0)[0]
            fy, gy = p.eval(y, 1)[:2]
            lhs = fx - fy - gy @ (x - y)
            rhs = sig / q * np.linalg.norm(x - y) ** q
            worst = max(worst, rhs - lhs)
    return _result("problems", "power_norm_uniform_convexity", worst / 1e-10,
                   f"max deficit {worst:.3g}")


def check_cubic_power_hessian_lipschitz(rng):
    A = rng.standard_normal((8, 4))
    p = make_problem("cubic_power", A=A, b=rng.standard_normal(8),
                     estimate_sigma=False)
    L3 = p.known.L3
    worst = 0.0
    for _ in range(1000):
        x = rng.standard_normal(4) * 2.0
        y = rng.standard_normal(4) * 2.0
        Hx = p.eval(x, 2)[2]
        Hy = p.eval(y, 2)[2]
        num = np.linalg.norm(Hx - Hy, 2)
        worst = max(worst, num / (L3 * np.linalg.norm(x - y)))
    return _result("problems", "cubic_power_hessian_lipschitz", worst,
                   f"max ratio to stored L3: {worst:.4f}")


# ------------------------------------------------------------- regularization

def check_prox_fd(rng):
    worst = 0.0
    for kappa in (2.0, 2.5, 3.0, 4.0):
        t = reg.PowerProxTerm(center=rng.standard_normal(3),
                              weight=10.0 ** rng.uniform(-1, 1), power=kappa)
        for _ in range(50):
            x = t.center + rng.standard_normal(3) * 2.0
            v, g, H = reg.prox_eval(t, x, 2)
            eg = rel_err(fd_gradient(lambda z: reg.prox_eval(t, z, 0)[0], x), g)
            eh = rel_err(fd_hessian(lambda z: reg.prox_eval(t, z, 1)[1], x), H)
            worst = max(worst, max(eg, eh) / 1e-5)
    return _result("regularization", "prox_fd_agreement", worst)


def check_recover_exactness(rng):
    worst = 0.0
    base = make_problem("quadratic", A=np.diag([1.0, 3.0, 0.5]),
                        b=np.array([1.0, -1.0, 0.5]))
    for _ in range(300):
        stack = RegularizerStack(power=float(rng.choice([2.0, 2.5, 3.0])))
        for _ in range(int(rng.integers(0, 5))):
            stack.push(rng.standard_normal(3), 10.0 ** rng.uniform(-2, 1))
        comp = compose(base, stack)
        x = rng.standard_normal(3) * 2.0
        g_fs = comp.eval(x, 1)[1]
        g_rec = recover_subgradient(stack, g_fs, x)
        g_true = base.eval(x, 1)[1]
        err = np.linalg.norm(g_rec - g_true) / max(1.0, np.linalg.norm(g_true))
        worst = max(worst, err / 1e-13)
    return _result("regularization", "recover_inverts_compose", worst)


def check_prox_uniform_convexity(rng):
    worst = -math.inf
    for kappa in (2.0, 2.5, 3.0, 4.0):
        t = reg.PowerProxTerm(center=rng.standard_normal(3), weight=1.0,
                              power=kappa)
        for _ in range(250):
            x = t.center + rng.standard_normal(3) * 2.0
            y = t.center + rng.standard_normal(3) * 2.0
            vx = reg.prox_eval(t, x, 0)[0]
            vy, gy, _ = reg.prox_eval(t, y, 1)
            lhs = vx - vy - gy @ (x - y)
            rhs = (1.0 / kappa) * 0.5 ** (kappa - 2.0) * np.linalg.norm(x - y) ** kappa
            worst = max(worst, rhs - lhs)
    return _result("regularization", "power_prox_uniform_convexity",
                   worst / 1e-10, f"max deficit {worst:.3g}")


def check_d3_hessian_holder(rng):
    t = reg.PowerProxTerm(center=np.zeros(3), weight=1.0, power=3.0)
    worst = 0.0
    for _ in range(1000):
        x = rng.standard_normal(3) * 2.0
        y = rng.standard_normal(3) * 2.0
        Hx = reg.prox_eval(t, x, 2)[2]
        Hy = reg.prox_eval(t, y, 2)[2]
        worst = max(worst, np.linalg.norm(Hx - Hy, 2)
                    / (4.0 * np.linalg.norm(x - y)))
    return _result("regularization", "cubic_prox_hessian_lipschitz_4", worst)


def check_counter_discipline(rng):
    base = make_problem("power_norm", q=3.0, center=np.zeros(3))
    stack = RegularizerStack(power=3.0)
    stack.push(np.ones(3), 0.5)
    stack.push(-np.ones(3), 0.7)
    comp = compose(base, stack)
    before = base.counter.snapshot()
    comp.eval(np.ones(3), 2)
    comp.eval(np.zeros(3), 1)
    comp.eval(np.zeros(3), 0)
    after = base.counter.snapshot()
    delta = tuple(a - b for a, b in zip(after, before))
    ok = delta == (3, 2, 1)
    return _result("regularization", "compose_counts_once",
                   0.0 if ok else 1.0, f"deltas {delta}", allowed=0.5)


# ----------------------------------------------------------------- subroutines

def _cubic_power_instance(rng, n=5, rows=8, scale=0.5):
    A = scale * rng.standard_normal((rows, n))
    xbar = rng.standard_normal(n)
    p = make_problem("cubic_power", A=A, b=A @ xbar, estimate_sigma=False)
    x0 = xbar + rng.standard_normal(n)
    return p, x0, xbar


def check_estimating_relations(rng):
    p, x0, xbar = _cubic_power_instance(rng)
    L3 = p.known.L3
    res = acnm_run(p, x0, M=2 * L3, C=_C * L3, N=60, r2_samples=10, rng=rng)
    worst = -math.inf
    for row in res.trace.rows:
        scale = max(1.0, abs(row.f))
        worst = max(worst, row.lower_relation_residual / (1e-8 * scale))
        if math.isfinite(row.upper_relation_residual):
            worst = max(worst, row.upper_relation_residual / (1e-8 * scale))
    return _result("subroutines", "estimating_relations", worst)


def check_acnm_composite_bound(rng):
    p, x0, xbar = _cubic_power_instance(rng)
    L3 = p.known.L3
    D = float(np.linalg.norm(x0 - xbar))
    res = acnm_run(p, x0, M=2 * L3, C=_C * L3, N=100)
    worst = 0.0
    for row in res.trace.rows:
        k = row.k
        lhs = row.f + row.grad_norm**1.5 / math.sqrt(3 * L3)
        rhs = 80.0 * L3 * D**3 / (k * (k + 1) * (k + 2))
        worst = max(worst, lhs / (rhs * (1.0 + 1e-6)))
    return _result("subroutines", "acnm_composite_bound", worst)


def check_adaptive_estimate_bounded(rng):
    Q = np.diag(np.linspace(0.5, 2.0, 6))
    p = make_problem("quadratic", A=Q, b=np.zeros(6))
    x0 = rng.standard_normal(6)
    L = p.known.L2
    worst = 0.0
    for L0 in (L, L / 64, 64 * L):
        p.reset_counter()
        res = adaptive_run(p, x0, L_init=L0, p=1, stop_rule=FixedN(40))
        max_est = max(r.L_est for r in res.trace.rows)
        worst = max(worst, max_est / (4.0 * max(L, L0)))
    return _result("subroutines", "adaptive_estimate_bounded", worst)


def check_strict_decrease(rng):
    p, x0, _ = _cubic_power_instance(rng)
    L3 = p.known.L3
    f0 = p.eval(x0, 0)[0]
    res = acnm_run(p, x0, M=2 * L3, C=_C * L3, N=10)
    ok_acnm = res.trace.rows[-1].f < f0
    q = make_problem("quadratic", A=np.diag([1.0, 4.0]), b=np.zeros(2))
    xq = np.array([1.0, 1.0])
    fq = q.eval(xq, 0)[0]
    res2 = agd_run(q, xq, L=4.0, N=10)
    ok_agd = res2.trace.rows[-1].f < fq
    bad = (0 if ok_acnm else 1) + (0 if ok_agd else 1)
    return _result("subroutines", "strict_decrease_from_start", float(bad),
                   allowed=0.0)


# ----------------------------------------------------------------ar_framework

def check_epoch_contraction(rng):
    p, x0, xbar = _cubic_power_instance(rng, n=4, rows=6)
    L3 = p.known.L3
    D = float(np.linalg.norm(x0 - xbar))
    sched = schedule_cubic(1e-2, D, L3)
    stack = RegularizerStack(power=3.0)
    x_prev = x0
    sigma_prev = 0.0
    worst_mono = 0.0
    worst_contr = 0.0
    floor = 1e-6 * D        # below this the reference accuracy dominates
    prev_err = None
    for s in range(1, sched.S + 1):
        sigma = float(sched.sigmas[s - 1])
        stack.push(x_prev, sigma - sigma_prev)
        comp = compose(p, stack)
        L_eff = L3 + 4.0 * sigma
        xs_star, _, ok = oversolve_reference(comp, x_prev, p=2, L=L_eff,
                                             max_iters=3000, grad_tol=1e-11)
        if not ok:
            return _result("ar_framework", "epoch_monotonicity_and_contraction",
                           math.inf, f"reference solve stalled at epoch {s}")
        if prev_err is not None and prev_err > floor:
            # distance from the epoch start to the new epoch minimizer never
            # exceeds the distance to the previous epoch minimizer
            worst_mono = max(worst_mono,
                             np.linalg.norm(x_prev - xs_star)
                             / (prev_err * (1 + 1e-9)))
        res = acnm_run(comp, x_prev, M=2 * L_eff, C=_C * L_eff,
                       N=int(sched.epoch_lengths[s - 1]))
        err = float(np.linalg.norm(res.x_out - xs_star))
        if prev_err is not None and prev_err > floor:
            worst_contr = max(worst_contr, err / (0.25 * prev_err))
        prev_err = err          # = ||x_s - x_s*|| for the next round
        x_prev = res.x_out
        sigma_prev = sigma
    margin = max(worst_mono, worst_contr)
    return _result("ar_framework", "epoch_monotonicity_and_contraction",
                   margin, f"mono {worst_mono:.3f}, contraction {worst_contr:.3f}")


def check_decomposition_consistency(rng):
    p, x0, xbar = _cubic_power_instance(rng, n=4, rows=6)
    L3 = p.known.L3
    D = float(np.linalg.norm(x0 - xbar))
    sched = schedule_cubic(1e-2, D, L3)
    out = ar_run(p, x0, sched, sub="acnm", p=2, nu=1.0)
    g_fs = compose(p, out.stack).eval(out.x_hat, 1)[1]
    lhs = out.grad_norm
    rhs = float(np.linalg.norm(g_fs)) + correction_norm_bound(out.stack, out.x_hat)
    return _result("ar_framework", "gradient_decomposition_bound",
                   lhs / (rhs * (1 + 1e-12) + 1e-300),
                   f"|grad f|={lhs:.3e} vs bound {rhs:.3e}")


def check_pf_output_bound(rng):
    c = rng.standard_normal(3)
    p = make_problem("power_norm", q=3.0, center=c)
    x0 = c + np.array([0.8, -0.6, 0.4])
    dist = float(np.linalg.norm(x0 - c))
    worst = 0.0
    for sigma1 in (1e-2, 1e-4):
        p.reset_counter()
        res = ar_parameter_free(p, x0, sigma1, L0=8.0, p=2, nu=1.0)
        bound = 3.0 * sigma1 * (9.0 * dist) ** 2
        worst = max(worst, res.grad_norm / bound)
    return _result("ar_framework", "parameter_free_output_bound", worst)


# -------------------------------------------------------------------- uniform

def check_grad_to_dist(rng):
    c = rng.standard_normal(4)
    p = make_problem("power_norm", q=3.0, center=c)
    worst = 0.0
    for _ in range(200):
        x = c + rng.standard_normal(4)
        g = p.eval(x, 1)[1]
        lhs = np.linalg.norm(x - c)
        rhs = (3.0 * np.linalg.norm(g) / (2.0 * 0.5)) ** 0.5
        worst = max(worst, lhs / rhs)
    return _result("uniform_convex", "gradient_distance_bound", worst)


def check_restart_halving(rng):
    from .uniform import restart_uniform
    A = 0.6 * rng.standard_normal((8, 5))
    xbar = rng.standard_normal(5)
    p = make_problem("cubic_power", A=A, b=A @ xbar)
    x0 = xbar + rng.standard_normal(5)
    res = restart_uniform(p, x0, L=p.known.L3, sigma_q=p.known.sigma_q[1],
                          p=2, q=3.0, eps=1e-6)
    g = res.meta["grad_norms"]
    worst = max(g[i + 1] / (0.5 * g[i]) for i in range(len(g) - 1))
    return _result("uniform_convex", "restart_halving", worst)


def check_pf_sigma_monotone(rng):
    from .uniform import pf_uniform
    c = rng.standard_normal(3)
    p = make_problem("power_norm", q=3.0, center=c)
    x0 = c + rng.standard_normal(3)
    res = pf_uniform(p, x0, sigma0=32.0, L0=8.0, p=2, eps=1e-5)
    sig = res.meta["sigma_history"]
    monotone = all(b <= a for a, b in zip(sig, sig[1:]))
    return _result("uniform_convex", "sigma_estimate_monotone",
                   0.0 if monotone else 1.0, f"history {sig}", allowed=0.5)


# -------------------------------------------------------------------- harness

def check_determinism(rng, tmpdir=None):
    import tempfile, os
    cfg = ExperimentConfig(
        problem={"family": "cubic_power", "dim": 3, "rows": 5, "scale": 0.6},
        algorithm="ar_cubic", eps_grid=[1e-2], seed=4)
    rec1 = run_experiment(cfg, 1e-2)
    rec2 = run_experiment(cfg, 1e-2)
    with tempfile.TemporaryDirectory() as td:
        p1 = os.path.join(td, "a.csv")
        p2 = os.path.join(td, "b.csv")
        emit_csv(rec1, p1)
        emit_csv(rec2, p2)
        same = open(p1, "rb").read() == open(p2, "rb").read()
    return _result("harness_cli", "byte_determinism", 0.0 if same else 1.0,
                   allowed=0.5)


def check_counter_integrity(rng):
    cfg = ExperimentConfig(
        problem={"family": "cubic_power", "dim": 3, "rows": 5, "scale": 0.6},
        algorithm="ar_cubic", eps_grid=[1e-2], seed=4)
    rec = run_experiment(cfg, 1e-2)
    rows = rec.rows
    monotone = all(
        (a.calls0 <= b.calls0 and a.calls1 <= b.calls1 and a.calls2 <= b.calls2)
        for a, b in zip(rows, rows[1:]))
    last = rows[-1]
    totals_ok = (last.calls0 <= rec.summary["calls0"]
                 and last.calls1 <= rec.summary["calls1"]
                 and last.calls2 <= rec.summary["calls2"])
    ok = monotone and totals_ok
    return _result("harness_cli", "counter_integrity", 0.0 if ok else 1.0,
                   allowed=0.5)


CHECKS = [
    check_eig_reconstruct,
    check_solve_shifted,
    check_cubic_monotone_m,
    check_cubic_model_decrease,
    check_cubic_diag_agreement,
    check_derivative_hygiene,
    check_convexity,
    check_power_norm_uniform_convexity,
    check_cubic_power_hessian_lipschitz,
    check_prox_fd,
    check_recover_exactness,
    check_prox_uniform_convexity,
    check_d3_hessian_holder,
    check_counter_discipline,
    check_estimating_relations,
    check_acnm_composite_bound,
    check_adaptive_estimate_bounded,
    check_strict_decrease,
    check_epoch_contraction,
    check_decomposition_consistency,
    check_pf_output_bound,
    check_grad_to_dist,
    check_restart_halving,
    check_pf_sigma_monotone,
    check_determinism,
    check_counter_integrity,
]


def run_all(module_filter=None, seed=20240801):
    """Run every registered check (optionally filtered by module name)."""
    results = []
    for fn in CHECKS:
        rng = np.random.default_rng(seed)
        res = fn(rng)
        if module_filter and module_filter not in res.module:
            continue
        results.append(res)
    return results


def format_table(results):
    lines = []
    width = max(len(f"{r.module}.{r.name}") for r in results) + 2
    for r in results:
        tag = "PASS" if r.passed else "FAIL"
        name = f"{r.module}.{r.name}"
        lines.append(f"[{tag}] {name:<{width}} margin={r.margin:10.4g}  {r.detail}")
    n_fail = sum(not r.passed for r in results)
    lines.append(f"{len(results) - n_fail}/{len(results)} checks passed")
    return "\n".join(lines)
