"""Inner solvers driving each regularized epoch.

Two fixed-parameter methods and their backtracking variants:

* ``acnm_run``   -- accelerated cubic-regularized Newton (second order) with
  an explicit estimating sequence, so the lower/upper estimating relations
  can be checked at every iteration,
* ``agd_run``    -- Nesterov accelerated gradient with constant step,
* ``adaptive_run`` -- the same two accelerations with a halve-once /
  double-until-accept line search on the smoothness estimate, including the
  smallest-k epoch-length rule used by the parameter-free outer loop.

Every run owns its state; runs on the same (immutable) oracle may proceed
concurrently.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .cubic import CubicModel, cubic_step
from .errors import AlgorithmAbort, DivergenceError, LineSearchRunaway

_NAN = float("nan")

# Estimating-sequence cubic coefficient per unit of the step coefficient M,
# matching C = 12 L3 / (sqrt(2)-1)^2 at M = 2 L3.
_C_PER_M = 6.0 / (math.sqrt(2.0) - 1.0) ** 2


@dataclass
class TraceRow:
    k: int
    f: float
    grad_norm: float
    calls0: int
    calls1: int
    calls2: int
    epoch: int = 0
    sigma: float = 0.0
    grad_base_norm: float = _NAN
    L_est: float = _NAN
    lower_relation_residual: float = _NAN
    upper_relation_residual: float = _NAN
    wall_ns: int = 0
    x: np.ndarray | None = None
    grad: np.ndarray | None = None


@dataclass
class RunTrace:
    rows: list = field(default_factory=list)

    def append(self, row):
        self.rows.append(row)

    def extend(self, rows):
        self.rows.extend(rows)

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)


@dataclass
class IteratePoint:
    k: int
    x: np.ndarray
    grad: np.ndarray
    f: float


@dataclass
class EstimatingState:
    """Accumulators of the auxiliary lower-model f_k used for acceleration.

    f_k(x) = const_k + <c_k, x - x0> + (C/6) ||x - x0||^3, with A_k the
    running weight sum, grad_norm_terms the accumulated scaled gradient
    powers entering the lower estimating relation, and first_grad_term the
    scaled first-iterate gradient power entering the upper relation.
    """

    A_k: float
    c_k: np.ndarray
    const_k: float
    C: float
    x0: np.ndarray
    grad_norm_terms: float = 0.0
    first_grad_term: float = 0.0

    def value(self, x):
        d = np.asarray(x, dtype=float) - self.x0
        return float(self.const_k + self.c_k @ d
                     + self.C / 6.0 * np.linalg.norm(d) ** 3)


def estimating_min(state: EstimatingState):
    """Closed-form global minimizer of the auxiliary cubic lower model."""
    if state.C <= 0:
        raise ValueError("estimating coefficient C must be positive")
    cn = float(np.linalg.norm(state.c_k))
    if cn == 0.0:
        return state.x0.copy()
    t = math.sqrt(2.0 / (state.C * cn))
    return state.x0 - t * state.c_k


def estimating_opt_value(state: EstimatingState) -> float:
    """min_x f_k(x) in closed form."""
    cn = float(np.linalg.norm(state.c_k))
    return state.const_k - (2.0 / 3.0) * math.sqrt(2.0 / state.C) * cn**1.5


@dataclass
class SubroutineResult:
    x_out: np.ndarray
    grad_fs_at_out: np.ndarray
    x_best: np.ndarray
    grad_fs_at_best: np.ndarray
    best_iter: int
    L_out: float | None
    trace: RunTrace
    n_iters: int
    window: list = field(default_factory=list)     # IteratePoint per window k
    z_window: list = field(default_factory=list)   # best-f point as of window k
    L_at_rule: float | None = None                 # estimate when the k-rule fired
    L_at_window_end: float | None = None           # estimate after the extra window
    N_rule: int | None = None
    x_at_rule: np.ndarray | None = None            # iterate when the k-rule fired
    stopped_early: bool = False


@dataclass(frozen=True)
class FixedN:
    """Run exactly N iterations."""

    N: int


@dataclass(frozen=True)
class SmallestK:
    """Stop at the smallest k with k >= 8 [L_k (p+nu) / (4 sigma)]^(1/(p+nu)) + 1,
    then run that many extra iterations to record the window estimate."""

    sigma: float
    pnu: float


class _Recorder:
    """Shared bookkeeping: trace rows, best/min-gradient iterate, window."""

    def __init__(self, oracle, window=None, stop=None):
        self.oracle = oracle
        self.window = window
        self.stop = stop
        self.trace = RunTrace()
        self.best = None          # (grad_norm, k, x, grad)
        self.z = None             # (f, k, x, grad)
        self.window_pts = []
        self.z_pts = []
        self.f_ref = None

    def guard(self, f):
        if self.f_ref is None:
            self.f_ref = f
        if not math.isfinite(f):
            raise DivergenceError("objective became non-finite", self.trace)
        if f > self.f_ref + 1e6 * max(1.0, abs(self.f_ref)):
            raise DivergenceError(
                f"objective increased by more than 1e6 x initial scale "
                f"({self.f_ref:.3e} -> {f:.3e})", self.trace)

    def record(self, k, x, f, g, L_est=_NAN, lower=_NAN, upper=_NAN):
        gn = float(np.linalg.norm(g))
        in_window = self.window is None or (self.window[0] <= k <= self.window[1])
        if in_window and (self.best is None or gn < self.best[0]):
            self.best = (gn, k, x.copy(), g.copy())
        if self.z is None or f < self.z[0]:
            self.z = (f, k, x.copy(), g.copy())
        if self.window is not None and self.window[0] <= k <= self.window[1]:
            self.window_pts.append(IteratePoint(k, x.copy(), g.copy(), f))
            zf, zk, zx, zg = self.z
            self.z_pts.append(IteratePoint(k, zx.copy(), zg.copy(), zf))
        c = self.oracle.counter.snapshot()
        self.trace.append(TraceRow(
            k=k, f=f, grad_norm=gn, calls0=c[0], calls1=c[1], calls2=c[2],
            L_est=L_est, lower_relation_residual=lower,
            upper_relation_residual=upper, wall_ns=time.perf_counter_ns(),
            x=x.copy(), grad=g.copy(),
        ))
        return bool(self.stop is not None and self.stop(k, x, g))

    def result(self, x_out, g_out, n_iters, L_out=None, stopped=False,
               L_at_rule=None, L_at_window_end=None, N_rule=None,
               x_at_rule=None):
        if self.best is None:
            # run ended (early stop) before its selection window opened
            if self.z is not None:
                zf, zk, zx, zg = self.z
                self.best = (float(np.linalg.norm(zg)), zk, zx, zg)
            else:
                self.best = (float(np.linalg.norm(g_out)), n_iters,
                             np.asarray(x_out), np.asarray(g_out))
        gn, k, xb, gb = self.best
        g_best = self.oracle.grad(xb)   # re-evaluated, never stale
        return SubroutineResult(
            x_out=x_out, grad_fs_at_out=g_out, x_best=xb,
            grad_fs_at_best=g_best, best_iter=k, L_out=L_out,
            trace=self.trace, n_iters=n_iters, window=self.window_pts,
            z_window=self.z_pts, L_at_rule=L_at_rule,
            L_at_window_end=L_at_window_end, N_rule=N_rule,
            x_at_rule=x_at_rule, stopped_early=stopped,
        )


def acnm_run(oracle, x0, M, C, N, cubic_tol=1e-10, r2_samples=0, rng=None,
             window=None, stop=None) -> SubroutineResult:
    """Accelerated cubic Newton: first a plain cubic step with coefficient
    M/2, then accelerated steps with coefficient M, weights
    a_k = (k+1)(k+2)/2.

    When ``r2_samples`` > 0 the upper estimating relation is checked at that
    many random points per iteration; the lower relation is always traced.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if M <= 0 or C <= 0:
        raise ValueError("M and C must be positive")
    x0 = np.asarray(x0, dtype=float)
    rng = np.random.default_rng(0) if rng is None else rng
    L3 = 0.5 * M
    inv_sqrt_lm = 1.0 / math.sqrt(L3 + M)
    rec = _Recorder(oracle, window=window, stop=stop)

    f0, g0, H0 = oracle.eval(x0, 2)
    rec.guard(f0)
    step = cubic_step(CubicModel(g0, H0, L3), cubic_tol)
    x = x0 + step.h
    f, g = oracle.eval(x, 1)[:2]
    rec.guard(f)
    gn = float(np.linalg.norm(g))

    state = EstimatingState(
        A_k=1.0, c_k=np.zeros_like(x0),
        const_k=f + gn**1.5 * inv_sqrt_lm, C=C, x0=x0,
        grad_norm_terms=gn**1.5 * inv_sqrt_lm,
        first_grad_term=gn**1.5 * inv_sqrt_lm,
    )
    lower, upper = _estimating_residuals(
        oracle, state, x, f, L3, M, inv_sqrt_lm, r2_samples, rng)
    stopped = rec.record(1, x, f, g, lower=lower, upper=upper)

    k = 1
    while k < N and not stopped:
        nu = estimating_min(state)
        a = 0.5 * (k + 1) * (k + 2)
        A_next = state.A_k + a
        alpha = a / A_next
        y = (1.0 - alpha) * x + alpha * nu
        fy, gy, Hy = oracle.eval(y, 2)
        step = cubic_step(CubicModel(gy, Hy, M), cubic_tol)
        x = y + step.h
        f, g = oracle.eval(x, 1)[:2]
        rec.guard(f)
        gn = float(np.linalg.norm(g))
        state.const_k += a * (f + g @ (x0 - x))
        state.c_k = state.c_k + a * g
        state.A_k = A_next
        state.grad_norm_terms += A_next * gn**1.5 * inv_sqrt_lm
        k += 1
        lower, upper = _estimating_residuals(
            oracle, state, x, f, L3, M, inv_sqrt_lm, r2_samples, rng)
        stopped = rec.record(k, x, f, g, lower=lower, upper=upper)

    return rec.result(x, g, n_iters=k, stopped=stopped)


def _estimating_residuals(oracle, state, x_k, f_k, L3, M, inv_sqrt_lm,
                          r2_samples, rng):
    """Slack of the lower and (sampled) upper estimating relations at step k.

    Lower: A_k f(x_k) + sum_j A_j ||grad f(x_j)||^{3/2} / sqrt(L3+M) - min f_k,
    nonpositive in exact arithmetic.  Upper: f_k(x) minus its cubic majorant,
    sampled at random points, likewise nonpositive.
    """
    lower = state.A_k * f_k + state.grad_norm_terms - estimating_opt_value(state)
    upper = _NAN
    if r2_samples > 0:
        upper = -math.inf
        radius = max(1.0, 2.0 * float(np.linalg.norm(x_k - state.x0)))
        for _ in range(r2_samples):
            xs = state.x0 + radius * rng.standard_normal(state.x0.shape[0])
            fx = oracle.eval(xs, 0)[0]
            d3 = float(np.linalg.norm(xs - state.x0)) ** 3
            rhs = (state.A_k * fx + (2.0 * L3 + state.C) / 6.0 * d3
                   + state.first_grad_term)
            upper = max(upper, state.value(xs) - rhs)
    return lower, upper


def agd_run(oracle, x0, L, N, window=None, stop=None) -> SubroutineResult:
    """Nesterov accelerated gradient with constant step 1/L.

    Weight recursion L a^2 = A + a, so the function gap decays like
    2 L ||x0 - x*||^2 / k^2 on problems with a valid gradient-Lipschitz L.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if L <= 0:
        raise ValueError("L must be positive")
    x0 = np.asarray(x0, dtype=float)
    rec = _Recorder(oracle, window=window, stop=stop)

    f0 = oracle.eval(x0, 0)[0]
    rec.guard(f0)
    x = x0
    v = x0.copy()
    A = 0.0
    stopped = False
    k = 0
    while k < N and not stopped:
        a = (1.0 + math.sqrt(1.0 + 4.0 * L * A)) / (2.0 * L)
        A_next = A + a
        y = (A * x + a * v) / A_next
        gy = oracle.eval(y, 1)[1]
        if not np.all(np.isfinite(gy)):
            raise DivergenceError("non-finite gradient: L too small?", rec.trace)
        x = y - gy / L
        v = v - a * gy
        A = A_next
        f, g = oracle.eval(x, 1)[:2]
        rec.guard(f)
        k += 1
        stopped = rec.record(k, x, f, g)

    return rec.result(x, g, n_iters=k, stopped=stopped)


def adaptive_run(oracle, x0, L_init, p, stop_rule, cubic_tol=1e-10,
                 window=None, stop=None, runaway_factor=1e12,
                 max_iters=2_000_000) -> SubroutineResult:
    """Backtracking accelerated method of order p in {1, 2}.

    Per iteration the running estimate is halved once, then doubled until
    the order-p sufficient-decrease test accepts the trial step.  With a
    ``SmallestK`` stop rule the run also performs the extra recording window
    and reports the estimates at the rule iteration and at the window end.
    """
    if p not in (1, 2):
        raise ValueError("adaptive subroutine implemented for p in {1, 2}")
    if L_init <= 0:
        raise ValueError("L_init must be positive")
    x0 = np.asarray(x0, dtype=float)
    rec = _Recorder(oracle, window=window, stop=stop)
    runner = _AdaptiveAGD(oracle, x0, L_init) if p == 1 else \
        _AdaptiveACNM(oracle, x0, L_init, cubic_tol)

    pnu = stop_rule.pnu if isinstance(stop_rule, SmallestK) else None
    n_rule = None
    L_at_rule = None
    x_at_rule = None
    n_total = stop_rule.N if isinstance(stop_rule, FixedN) else None

    k = 0
    stopped = False
    while not stopped:
        k += 1
        if k > max_iters:
            raise AlgorithmAbort(f"iteration cap {max_iters} exceeded", rec.trace)
        x, f, g, L_est = runner.step(k)
        if rec.f_ref is None and runner.f_start is not None:
            rec.guard(runner.f_start)   # anchor the divergence guard at x0
        rec.guard(f)
        if L_est > runaway_factor * L_init:
            raise LineSearchRunaway(
                f"line-search estimate {L_est:.3e} exceeds "
                f"{runaway_factor:.1e} x initial value", rec.trace)
        stopped = rec.record(k, x, f, g, L_est=L_est)
        if isinstance(stop_rule, SmallestK) and n_rule is None:
            if k >= 8.0 * (L_est * pnu / (4.0 * stop_rule.sigma)) ** (1.0 / pnu) + 1.0:
                n_rule = k
                L_at_rule = L_est
                x_at_rule = x.copy()
                n_total = 2 * k
                if rec.window is None:
                    rec.window = (k + 1, 2 * k)
                    rec.best = None   # min-gradient selection restricted to window
        if n_total is not None and k >= n_total:
            break

    L_end = runner.L_est
    return rec.result(x, g, n_iters=k, L_out=L_end, stopped=stopped,
                      L_at_rule=L_at_rule, L_at_window_end=L_end, N_rule=n_rule,
                      x_at_rule=x_at_rule)


class _AdaptiveAGD:
    """Accelerated gradient with per-iteration backtracking on L."""

    def __init__(self, oracle, x0, L_init):
        self.oracle = oracle
        self.L_est = float(L_init)
        self.x = x0.copy()
        self.v = x0.copy()
        self.A = 0.0
        self.f_start = None
        self.floor = 2.2e-16 * float(L_init)

    def step(self, k):
        L_prev = self.L_est
        self.L_est = max(0.5 * self.L_est, self.floor)
        for _ in range(200):
            a = (1.0 + math.sqrt(1.0 + 4.0 * self.L_est * self.A)) / (2.0 * self.L_est)
            A_next = self.A + a
            y = (self.A * self.x + a * self.v) / A_next
            fy, gy = self.oracle.eval(y, 1)[:2]
            if self.f_start is None:
                self.f_start = fy
            x_trial = y - gy / self.L_est
            f_trial = self.oracle.eval(x_trial, 0)[0]
            d = x_trial - y
            quad = 0.5 * self.L_est * float(d @ d)
            # rounding floor of the comparison; below it the test is
            # uninformative and the estimate is left where it was
            noise = 4e-16 * (abs(fy) + abs(float(gy @ d)) + quad + 1.0)
            if quad <= noise:
                self.L_est = max(self.L_est, L_prev)
                break
            if f_trial <= fy + gy @ d + quad + noise:
                break
            self.L_est *= 2.0
        else:
            raise LineSearchRunaway("sufficient-decrease test never accepted", None)
        self.x = x_trial
        self.v = self.v - a * gy
        self.A = A_next
        f, g = self.oracle.eval(self.x, 1)[:2]
        return self.x, f, g, self.L_est


class _AdaptiveACNM:
    """Accelerated cubic Newton with per-iteration backtracking on M."""

    def __init__(self, oracle, x0, M_init, cubic_tol):
        self.oracle = oracle
        self.L_est = float(M_init)
        self.M_bar = 0.0
        self.cubic_tol = cubic_tol
        self.x0 = x0
        self.x = x0.copy()
        self.state = None
        self.f_start = None
        self.floor = 2.2e-16 * float(M_init)

    def _line_search(self, anchor):
        """Halve once, then double until the Taylor remainder fits the
        M-band: |f(x+h) - T2(h)| <= (M/6)||h||^3.

        The two-sided band keeps the estimate anchored to the local
        third-order variation; a one-sided test would let it collapse on
        directions where the quadratic model overestimates, starving the
        epoch-length and termination rules of a meaningful scale.
        """
        self.L_est = max(0.5 * self.L_est, self.floor)
        fy, gy, Hy = self.oracle.eval(anchor, 2)
        if self.f_start is None:
            self.f_start = fy
        for _ in range(200):
            step = cubic_step(CubicModel(gy, Hy, self.L_est), self.cubic_tol)
            x_trial = anchor + step.h
            taylor2 = fy + gy @ step.h + 0.5 * step.h @ (Hy @ step.h)
            f_trial = self.oracle.eval(x_trial, 0)[0]
            band = self.L_est / 6.0 * step.r**3 + 1e-12 * max(1.0, abs(fy))
            if abs(f_trial - taylor2) <= band:
                return x_trial
            self.L_est *= 2.0
        raise LineSearchRunaway("cubic sufficient-decrease test never accepted", None)

    def step(self, k):
        if k == 1:
            x_new = self._line_search(self.x0)
        else:
            nu = estimating_min(self.state)
            a = 0.5 * k * (k + 1)
            A_next = self.state.A_k + a
            alpha = a / A_next
            y = (1.0 - alpha) * self.x + alpha * nu
            x_new = self._line_search(y)
        self.x = x_new
        f, g = self.oracle.eval(self.x, 1)[:2]
        gn = float(np.linalg.norm(g))
        if self.L_est > self.M_bar:
            self.M_bar = self.L_est
        C_run = _C_PER_M * self.M_bar
        if k == 1:
            term = gn**1.5 / math.sqrt(1.5 * self.M_bar)
            self.state = EstimatingState(
                A_k=1.0, c_k=np.zeros_like(self.x0), const_k=f + term,
                C=C_run, x0=self.x0, grad_norm_terms=term, first_grad_term=term,
            )
        else:
            a = 0.5 * k * (k + 1)
            self.state.C = C_run
            self.state.const_k += a * (f + g @ (self.x0 - self.x))
            self.state.c_k = self.state.c_k + a * g
            self.state.A_k += a
            self.state.grad_norm_terms += (
                self.state.A_k * gn**1.5 / math.sqrt(1.5 * self.M_bar))
        return self.x, f, g, self.L_est


@dataclass
class ContractClause:
    name: str
    measured_constant: float
    violations: list
    checked: int

    @property
    def holds(self):
        return not self.violations


@dataclass
class ContractReport:
    contract: str
    clauses: list

    @property
    def all_hold(self):
        return all(c.holds for c in self.clauses)


def check_contract(trace, contract, constants) -> ContractReport:
    """Measure a subroutine trace against one of the performance contracts.

    ``constants`` supplies reference data: ``f_star`` and ``dist`` (from an
    over-solved run), the smoothness constant ``L``, the contract constant
    ``C_A`` against which violations are counted, and for the window clause
    the (lo, hi) iteration window.  The report lists the iterations that
    violated each clause at the supplied constant, plus the smallest
    constant that would have made the clause hold everywhere.
    """
    rows = list(trace)
    if not rows:
        return ContractReport(contract, [])
    L = constants["L"]
    dist = constants["dist"]
    C_A = constants.get("C_A", 1.0)
    clauses = []

    if contract in ("A3.1", "A3.2"):
        f_star = constants["f_star"]
        if contract == "A3.1":
            kappa = constants["pnu"]
            gap_exp, gap_pow, off = kappa, kappa, 1.0
            grad_exp, grad_pow, grad_off = kappa - 1.0, kappa - 1.0, 1.0
        else:
            p = constants["p"]
            gap_exp, gap_pow, off = (3 * p + 1) / 2.0, p + 1.0, 0.0
            grad_exp, grad_pow, grad_off = 3 * p / 2.0, float(p), 0.0

        measured = 0.0
        violations = []
        checked = 0
        for row in rows:
            den = row.k - off
            if den <= 0:
                continue
            checked += 1
            unit = L * dist**gap_pow / den**gap_exp
            measured = max(measured, (row.f - f_star) / unit)
            if row.f - f_star > C_A * unit:
                violations.append(row.k)
        clauses.append(ContractClause("function-gap", measured, violations, checked))

        window = constants.get("window")
        if window is not None:
            lo, hi = window
            in_win = [r for r in rows if lo <= r.k <= hi]
            if in_win:
                n_ref = max(lo - 1.0 - grad_off, 1.0)
                min_grad = min(r.grad_norm for r in in_win)
                unit = L * dist**grad_pow / n_ref**grad_exp
                viol = [] if min_grad <= C_A * unit else [lo]
                clauses.append(ContractClause("min-gradient", min_grad / unit, viol, 1))

    elif contract == "A4.1":
        kappa = constants["pnu"]
        f_star = constants["f_star"]
        L_true = constants.get("L_true", L)
        L0 = constants.get("L0", L)
        measured = 0.0
        violations = []
        checked = 0
        for row in rows:
            if row.k <= 1 or not math.isfinite(row.L_est):
                continue
            checked += 1
            unit = row.L_est * dist**kappa / (row.k - 1.0) ** kappa
            gap = row.f - f_star
            if unit > 0:
                measured = max(measured, gap / unit)
            if gap > C_A * unit:
                violations.append(row.k)
        clauses.append(ContractClause("function-gap", measured, violations, checked))

        ests = [row.L_est for row in rows if math.isfinite(row.L_est)]
        if ests:
            ref = max(constants.get("p", 1) * L_true, L0)
            viol = [] if max(ests) <= C_A * ref else [rows[-1].k]
            clauses.append(ContractClause("estimate-bounded", max(ests) / ref, viol, len(ests)))
    else:
        raise ValueError(f"unknown contract {contract!r}")

    return ContractReport(contract, clauses)

