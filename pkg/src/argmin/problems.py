"""Convex test problems with known smoothness and curvature constants.

Each oracle evaluates f and its first two derivatives and carries whatever
constants are available in closed form (gradient/Hessian Lipschitz bounds,
uniform-convexity parameters, minimizers).  Constants obtained by sampling
rather than analysis are tagged in ``known.estimated`` and must not gate
exact-bound checks.

Oracles are pure; the attached call counter is owned by the run using the
oracle and is not meant to be shared across threads.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, logsumexp


class DistanceUnavailable(ValueError):
    """Neither a minimizer nor a uniform-convexity constant is known."""


@dataclass
class OracleCounter:
    """Evaluation counts by derivative order; an order-k call bumps 0..k."""

    counts: list = field(default_factory=lambda: [0, 0, 0])

    def record(self, order):
        for i in range(order + 1):
            self.counts[i] += 1

    def snapshot(self):
        return tuple(self.counts)

    @property
    def order0(self):
        return self.counts[0]

    @property
    def order1(self):
        return self.counts[1]

    @property
    def order2(self):
        return self.counts[2]


@dataclass
class KnownConstants:
    L2: float | None = None
    L3: float | None = None
    sigma_q: tuple | None = None          # (q, value)
    x_star: np.ndarray | None = None
    f_star: float | None = None
    estimated: frozenset = frozenset()    # names of sampled (non-analytic) fields


class ProblemOracle:
    """Base oracle: subclasses implement ``_eval(x, order)``."""

    def __init__(self, dim, known=None):
        self.dim = int(dim)
        self.known = known if known is not None else KnownConstants()
        self.counter = OracleCounter()

    def eval(self, x, order=0):
        """Return (f, grad, hess) with entries beyond `order` set to None."""
        if order not in (0, 1, 2):
            raise ValueError(f"order must be 0, 1 or 2, got {order}")
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected point of shape ({self.dim},), got {x.shape}")
        self.counter.record(order)
        return self._eval(x, order)

    def f(self, x):
        return self.eval(x, 0)[0]

    def grad(self, x):
        return self.eval(x, 1)[1]

    def hess(self, x):
        return self.eval(x, 2)[2]

    def reset_counter(self):
        self.counter = OracleCounter()


class QuadraticProblem(ProblemOracle):
    """f(x) = 1/2 x^T A x - b^T x with symmetric A >= 0."""

    def __init__(self, A, b):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.size == 0:
            raise ValueError("empty A")
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        A = 0.5 * (A + A.T)
        eigs = np.linalg.eigvalsh(A)
        if eigs[0] < -1e-12 * max(1.0, abs(eigs[-1])):
            raise ValueError("quadratic problem requires A >= 0")
        x_star = None
        f_star = None
        sigma = None
        if eigs[0] > 1e-12 * max(1.0, eigs[-1]):
            x_star = np.linalg.solve(A, b)
            f_star = float(0.5 * x_star @ (A @ x_star) - b @ x_star)
            sigma = (2.0, float(eigs[0]))
        known = KnownConstants(L2=float(eigs[-1]), L3=0.0, sigma_q=sigma,
                               x_star=x_star, f_star=f_star)
        super().__init__(A.shape[0], known)
        self.A = A
        self.b = b

    def _eval(self, x, order):
        Ax = self.A @ x
        f = float(0.5 * x @ Ax - self.b @ x)
        g = Ax - self.b if order >= 1 else None
        H = self.A.copy() if order >= 2 else None
        return f, g, H


class CubicPowerProblem(ProblemOracle):
    """f(x) = 1/3 sum_i |a_i^T x - b_i|^3.

    The Hessian-Lipschitz bound 2 sum_i ||a_i||^3 is exact arithmetic; the
    degree-3 uniform convexity constant (full column rank only) comes from a
    one-time minimization of sum_i |a_i^T u|^3 over the unit sphere and is
    tagged estimated.
    """

    def __init__(self, A, b, estimate_sigma=True):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.size == 0:
            raise ValueError("empty A")
        if A.ndim != 2:
            raise ValueError("A must be a matrix (rows are the a_i)")
        if b.shape != (A.shape[0],):
            raise ValueError("b must have one entry per row of A")
        L3 = float(2.0 * np.sum(np.linalg.norm(A, axis=1) ** 3))
        x_star = None
        f_star = None
        sigma = None
        estimated = set()
        full_rank = np.linalg.matrix_rank(A) == A.shape[1]
        if full_rank:
            xh, *_ = np.linalg.lstsq(A, b, rcond=None)
            if np.max(np.abs(A @ xh - b)) <= 1e-12 * max(1.0, float(np.abs(b).max())):
                x_star = xh
                f_star = 0.0
            if estimate_sigma:
                sigma = (3.0, 0.5 * _min_cubic_form_on_sphere(A))
                estimated.add("sigma_q")
        known = KnownConstants(L3=L3, sigma_q=sigma, x_star=x_star,
                               f_star=f_star, estimated=frozenset(estimated))
        super().__init__(A.shape[1], known)
        self.A = A
        self.b = b

    def _eval(self, x, order):
        r = self.A @ x - self.b
        f = float(np.sum(np.abs(r) ** 3) / 3.0)
        g = None
        H = None
        if order >= 1:
            g = self.A.T @ (np.abs(r) * r)
        if order >= 2:
            H = 2.0 * (self.A.T * np.abs(r)) @ self.A
        return f, g, H


class PowerNormProblem(ProblemOracle):
    """f(x) = (1/q) ||x - c||^q for q >= 2.

    Uniformly convex of degree q with parameter 2^{-(q-2)}.
    """

    def __init__(self, q, center):
        q = float(q)
        if q < 2:
            raise ValueError(f"power must satisfy q >= 2, got {q}")
        center = np.asarray(center, dtype=float)
        known = KnownConstants(
            sigma_q=(q, 2.0 ** (-(q - 2.0))),
            x_star=center.copy(),
            f_star=0.0,
            L2=1.0 if q == 2.0 else None,
            L3=4.0 if q == 3.0 else None,
        )
        super().__init__(center.shape[0], known)
        self.q = q
        self.center = center

    def _eval(self, x, order):
        d = x - self.center
        r = float(np.linalg.norm(d))
        q = self.q
        f = r**q / q
        g = None
        H = None
        if order >= 1:
            g = r ** (q - 2.0) * d if r > 0 else np.zeros_like(d)
        if order >= 2:
            n = self.dim
            if r == 0.0:
                H = np.eye(n) if q == 2.0 else np.zeros((n, n))
            else:
                u = d / r
                H = r ** (q - 2.0) * (np.eye(n) + (q - 2.0) * np.outer(u, u))
        return f, g, H


class LogisticProblem(ProblemOracle):
    """Regularized logistic loss sum_i log(1+exp(-y_i a_i^T x)) + reg/2 ||x||^2."""

    def __init__(self, A, y, reg, estimate_l3=True, rng=None):
        A = np.asarray(A, dtype=float)
        y = np.asarray(y, dtype=float)
        if A.size == 0:
            raise ValueError("empty A")
        if not np.all(np.abs(y) == 1.0):
            raise ValueError("labels must be +-1")
        if reg < 0:
            raise ValueError("reg must be nonnegative")
        L2 = float(0.25 * np.linalg.eigvalsh(A.T @ A)[-1] + reg)
        known = KnownConstants(
            L2=L2,
            sigma_q=(2.0, float(reg)) if reg > 0 else None,
        )
        super().__init__(A.shape[1], known)
        self.A = A
        self.y = y
        self.reg = float(reg)
        if estimate_l3:
            l3 = estimate_hessian_lipschitz(self, rng=rng)
            self.known = KnownConstants(
                L2=L2, L3=l3, sigma_q=known.sigma_q,
                estimated=frozenset({"L3"}),
            )

    def _eval(self, x, order):
        t = self.y * (self.A @ x)
        f = float(np.sum(np.logaddexp(0.0, -t)) + 0.5 * self.reg * x @ x)
        g = None
        H = None
        if order >= 1:
            s = expit(-t)
            g = -self.A.T @ (s * self.y) + self.reg * x
        if order >= 2:
            s = expit(-t)
            w = s * (1.0 - s)
            H = (self.A.T * w) @ self.A + self.reg * np.eye(self.dim)
        return f, g, H


class LogSumExpProblem(ProblemOracle):
    """f(x) = t * log sum_i exp((a_i^T x - b_i)/t), a smoothed max."""

    def __init__(self, A, b, t, estimate_l3=True, rng=None):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.size == 0:
            raise ValueError("empty A")
        if t <= 0:
            raise ValueError("temperature t must be positive")
        L2 = float(np.linalg.eigvalsh(A.T @ A)[-1] / t)
        known = KnownConstants(L2=L2)
        super().__init__(A.shape[1], known)
        self.A = A
        self.b = b
        self.t = float(t)
        if estimate_l3:
            l3 = estimate_hessian_lipschitz(self, rng=rng)
            self.known = KnownConstants(L2=L2, L3=l3, estimated=frozenset({"L3"}))

    def _eval(self, x, order):
        z = (self.A @ x - self.b) / self.t
        f = float(self.t * logsumexp(z))
        g = None
        H = None
        if order >= 1:
            p = np.exp(z - logsumexp(z))
            g = self.A.T @ p
        if order >= 2:
            p = np.exp(z - logsumexp(z))
            Ap = self.A.T @ p
            H = ((self.A.T * p) @ self.A - np.outer(Ap, Ap)) / self.t
        return f, g, H


_FAMILIES = {
    "quadratic": QuadraticProblem,
    "cubic_power": CubicPowerProblem,
    "power_norm": PowerNormProblem,
    "logistic": LogisticProblem,
    "logsumexp": LogSumExpProblem,
}


def make_problem(family, **params) -> ProblemOracle:
    """Construct a problem oracle by family name.

    Families: quadratic(A, b), cubic_power(A, b), power_norm(q, center),
    logistic(A, y, reg), logsumexp(A, b, t).
    """
    try:
        cls = _FAMILIES[family]
    except KeyError:
        raise ValueError(
            f"unknown problem family {family!r}; expected one of {sorted(_FAMILIES)}"
        ) from None
    return cls(**params)


def dist_to_opt(p: ProblemOracle, x0) -> float:
    """Upper bound on the distance from x0 to the optimal set.

    Exact when the minimizer is known; otherwise derived from uniform
    convexity as (q ||grad f(x0)|| / (2 sigma_q))^(1/(q-1)).
    """
    x0 = np.asarray(x0, dtype=float)
    if p.known.x_star is not None:
        return float(np.linalg.norm(x0 - p.known.x_star))
    if p.known.sigma_q is not None:
        q, sig = p.known.sigma_q
        if sig > 0:
            gn = float(np.linalg.norm(p.grad(x0)))
            return (q * gn / (2.0 * sig)) ** (1.0 / (q - 1.0))
    raise DistanceUnavailable("distance unavailable: no minimizer or sigma_q known")


def _min_cubic_form_on_sphere(A, restarts=12, seed=0):
    """min_{||u||=1} sum_i |a_i^T u|^3 by multi-start local minimization."""
    rng = np.random.default_rng(seed)
    n = A.shape[1]

    def val(v):
        nv = np.linalg.norm(v)
        if nv == 0:
            return np.inf
        return float(np.sum(np.abs(A @ (v / nv)) ** 3))

    best = np.inf
    starts = [np.eye(n)[i] for i in range(n)]
    starts += [rng.standard_normal(n) for _ in range(restarts)]
    for v0 in starts:
        res = minimize(val, v0, method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
        best = min(best, float(res.fun))
    return best


def estimate_hessian_lipschitz(p: ProblemOracle, radius=2.0, samples=200, rng=None):
    """Sampled bound on ||H(x)-H(y)|| / ||x-y||, tagged `estimated` by callers."""
    rng = np.random.default_rng(0) if rng is None else rng
    best = 0.0
    for _ in range(samples):
        x = radius * rng.standard_normal(p.dim)
        y = x + 10.0 ** rng.uniform(-3, 0) * rng.standard_normal(p.dim)
        Hx = p._eval(x, 2)[2]
        Hy = p._eval(y, 2)[2]
        num = float(np.linalg.norm(Hx - Hy, 2))
        den = float(np.linalg.norm(x - y))
        if den > 0:
            best = max(best, num / den)
    return 1.5 * best
