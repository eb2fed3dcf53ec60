"""Global minimization of the cubically regularized quadratic model.

The model at an anchor point is

    xi(h) = <g, h> + 1/2 <H h, h> + (M/6) ||h||^3,

and its global minimizer satisfies the first-order system
g + H h + (M/2)||h|| h = 0 together with H + (M/2)||h|| I >= 0.
Through the eigendecomposition H = Q diag(lam) Q^T the problem reduces to
a scalar secular equation in r = ||h||:

    phi(r) = sum_i  (q_i^T g)^2 / (lam_i + M r / 2)^2  -  r^2  = 0,

which is strictly decreasing on (max(0, -2 lam_min / M), inf).  The
degenerate "hard case" (g orthogonal to the bottom eigenspace, no interior
root) is resolved by moving to the boundary r = -2 lam_min / M and adding a
multiple of the bottom eigenvector.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .linalg import EigDecomp, sym_eig, symmetrize


class SecularNonConvergence(RuntimeError):
    """Secular root-find failed; carries the last bracket examined."""

    def __init__(self, msg, bracket):
        super().__init__(f"{msg} (last bracket: [{bracket[0]:.6e}, {bracket[1]:.6e}])")
        self.bracket = bracket


@dataclass(frozen=True)
class CubicModel:
    """Anchor data (gradient, Hessian, cubic weight M) of the model."""

    g: np.ndarray
    H: np.ndarray
    M: float

    def __post_init__(self):
        object.__setattr__(self, "g", np.asarray(self.g, dtype=float))
        object.__setattr__(self, "H", symmetrize(self.H))
        if not (self.M > 0):
            raise ValueError(f"cubic weight must be positive, got M={self.M}")
        if not (np.all(np.isfinite(self.g)) and np.all(np.isfinite(self.H))):
            raise ValueError("cubic model requires finite g and H")

    def value(self, h):
        h = np.asarray(h, dtype=float)
        return float(
            self.g @ h + 0.5 * h @ (self.H @ h)
            + self.M / 6.0 * np.linalg.norm(h) ** 3
        )


@dataclass(frozen=True)
class CubicStepResult:
    h: np.ndarray
    r: float
    stationarity_residual: float
    secular_iters: int
    hard_case: bool = False


@dataclass(frozen=True)
class SecularResult:
    r: float
    hard_case: bool
    iters: int


def _phi(r, lam, c2, M):
    """phi(r); +inf when any shifted eigenvalue is nonpositive."""
    d = lam + 0.5 * M * r
    if np.any(d <= 0.0):
        return math.inf
    with np.errstate(over="ignore"):
        s = float(np.sum(c2 / d**2))
    return s - r * r


def _phi_prime(r, lam, c2, M):
    d = lam + 0.5 * M * r
    with np.errstate(over="ignore"):
        s = float(np.sum(c2 / d**3))
    return -M * s - 2.0 * r


def secular_root(E: EigDecomp, g_coeffs, M, tol) -> SecularResult:
    """Root of the secular equation, or the boundary value in the hard case.

    `g_coeffs` are the eigenbasis coefficients Q^T g.  Returns r together
    with a flag for which branch was taken; the interior branch satisfies
    |phi(r)| <= tol, the boundary branch returns r = max(0, -2 lam_min / M)
    with the bottom-eigenspace coefficients certified negligible.
    """
    if M <= 0:
        raise ValueError("M must be positive")
    lam = E.eigvals
    gh = np.asarray(g_coeffs, dtype=float)
    c2 = gh**2
    gnorm = math.sqrt(float(np.sum(c2)))
    lam_min = float(lam[0])
    r_lb = max(0.0, -2.0 * lam_min / M)

    scale = max(1.0, abs(lam_min), float(np.abs(lam).max()))
    bottom = lam <= lam_min + 1e-10 * scale
    coeff_bottom = math.sqrt(float(np.sum(c2[bottom])))

    if gnorm == 0.0 and lam_min >= 0.0:
        return SecularResult(0.0, False, 0)

    # Interior phi with the bottom eigenspace removed decides the branch:
    # no interior root there means the solution sits on the boundary.
    phi_ex_lb = _phi(r_lb, lam[~bottom], c2[~bottom], M) if np.any(~bottom) else -r_lb**2
    if coeff_bottom <= 1e-11 * max(1.0, gnorm) and phi_ex_lb <= 0.0:
        return SecularResult(r_lb, True, 0)

    # Bracket [lo, hi] with phi(lo) > 0 > phi(hi).
    delta = 1e-8 * max(1.0, r_lb)
    lo = r_lb + delta
    for _ in range(40):
        if _phi(lo, lam, c2, M) > 0.0:
            break
        delta *= 1e-2
        lo = r_lb + delta
    else:
        # Root indistinguishable from the boundary at double precision.
        return SecularResult(r_lb, True, 0)

    hi = math.sqrt(2.0 * gnorm / M) + 2.0 * abs(lam_min) / M + delta
    for _ in range(64):
        if _phi(hi, lam, c2, M) < 0.0:
            break
        hi *= 2.0
    else:
        raise SecularNonConvergence("no upper bracket for the secular equation", (lo, hi))

    r = 0.5 * (lo + hi)
    for it in range(1, 201):
        d = lam + 0.5 * M * r
        if np.any(d <= 0.0):
            lo = max(lo, r)
            r = 0.5 * (lo + hi)
            continue
        with np.errstate(over="ignore"):
            ssum = float(np.sum(c2 / d**2))
        f = ssum - r * r
        if math.isfinite(f):
            if f > 0.0:
                lo = max(lo, r)
            else:
                hi = min(hi, r)
            # cannot resolve phi below its own rounding floor
            noise = 4e-16 * max(ssum, r * r)
            if abs(f) <= max(tol, noise):
                return SecularResult(r, False, it)
        else:
            lo = max(lo, r)
        if hi - lo <= 4.5e-16 * max(1.0, hi):
            return SecularResult(0.5 * (lo + hi), False, it)
        fp = _phi_prime(r, lam, c2, M) if math.isfinite(f) else 0.0
        if math.isfinite(f) and fp < 0.0:
            r_new = r - f / fp
        else:
            r_new = 0.5 * (lo + hi)
        if not (lo < r_new < hi):
            r_new = 0.5 * (lo + hi)
        r = r_new
    raise SecularNonConvergence("secular iteration cap reached", (lo, hi))


def cubic_step(m: CubicModel, tol=1e-10) -> CubicStepResult:
    """Global minimizer of the cubic model to stationarity tol*max(1,||g||).

    The returned step h carries a global-optimality certificate: the shifted
    Hessian H + (M/2)||h|| I is positive semidefinite up to the tolerance.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    E = sym_eig(m.H)
    gh = E.eigvecs.T @ m.g
    gnorm = float(np.linalg.norm(m.g))
    res_budget = tol * max(1.0, gnorm)

    # residual scales like (M/4) * phi near the root
    sec = secular_root(E, gh, m.M, tol=0.25 * res_budget / m.M)
    r = sec.r
    d = E.eigvals + 0.5 * m.M * r
    scale = max(1.0, float(np.abs(E.eigvals).max()), 0.5 * m.M * r)

    def _assemble(cliff):
        """Step in the eigenbasis; cliff coordinates get the norm-matched
        boundary construction instead of the ill-conditioned division."""
        h_hat = np.zeros_like(gh)
        safe = ~cliff
        h_hat[safe] = -gh[safe] / d[safe]
        if np.any(cliff):
            need2 = r * r - float(np.sum(h_hat[safe] ** 2))
            if need2 < 0.0:
                return None
            raw = -gh[cliff] / np.maximum(d[cliff], 1e-300)
            rn = float(np.linalg.norm(raw))
            fill = np.zeros(int(np.sum(cliff)))
            if rn > 0.0:
                fill = raw * (math.sqrt(need2) / rn)
            else:
                fill[0] = math.sqrt(need2)
            h_hat[cliff] = fill
        return h_hat

    def _residual(h_hat):
        h = E.eigvecs @ h_hat
        hn = float(np.linalg.norm(h))
        res = float(np.linalg.norm(m.g + m.H @ h + 0.5 * m.M * hn * h))
        return h, hn, res

    cliff = d <= (1e-8 * scale if sec.hard_case else 0.0)
    if sec.hard_case and not np.any(cliff):
        cliff = d <= d[0]
    h_hat = _assemble(cliff)
    if h_hat is None:
        h_hat = _assemble(np.zeros_like(cliff))
    h, hn, resid = _residual(h_hat)
    if resid > res_budget:
        # near-degenerate bottom eigenspace: the division by d is a precision
        # cliff; re-assemble with bottom prefixes norm-matched instead
        for j in range(len(d) - 1):
            if d[j] > 1e-2 * scale:
                break
            alt = _assemble(d <= d[j])
            if alt is None:
                continue
            h2, hn2, resid2 = _residual(alt)
            if resid2 < resid:
                h, hn, resid = h2, hn2, resid2
            if resid <= res_budget:
                break
    if resid > res_budget:
        raise SecularNonConvergence(
            f"stationarity residual {resid:.3e} above budget {res_budget:.3e}",
            (r, hn),
        )
    return CubicStepResult(
        h=h, r=hn, stationarity_residual=resid,
        secular_iters=sec.iters, hard_case=sec.hard_case,
    )
