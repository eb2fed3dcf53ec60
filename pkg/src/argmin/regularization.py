"""Accumulated power-prox regularization.

An epoch-restarted run keeps a stack of terms

    (w_i / kappa) * ||x - c_i||^kappa,      w_i = sigma_i - sigma_{i-1},

and minimizes the composition f_s = f + sum of terms.  The stack's analytic
gradient lets the plain-objective gradient be recovered exactly from the
composed one, and the per-term norms give an upper bound on the recovery
correction.
"""

from dataclasses import dataclass, field

import numpy as np

from .problems import ProblemOracle


@dataclass(frozen=True)
class PowerProxTerm:
    center: np.ndarray
    weight: float          # sigma increment, >= 0
    power: float           # kappa = p + nu >= 2

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.weight < 0:
            raise ValueError(f"weight must be nonnegative, got {self.weight}")
        if self.power < 2:
            raise ValueError(f"power must be >= 2, got {self.power}")

    def eval(self, x, order=0):
        return prox_eval(self, x, order)


def prox_eval(t: PowerProxTerm, x, order=0):
    """Value/gradient/Hessian of (w/kappa)||x-c||^kappa.

    At x = c the gradient is 0; the Hessian is w*I for kappa = 2 and the
    zero matrix for kappa > 2 (the continuous limit).
    """
    x = np.asarray(x, dtype=float)
    d = x - t.center
    r = float(np.linalg.norm(d))
    k = t.power
    w = t.weight
    value = w * r**k / k
    grad = None
    hess = None
    if order >= 1:
        grad = w * r ** (k - 2.0) * d if r > 0 else np.zeros_like(d)
    if order >= 2:
        n = d.shape[0]
        if r == 0.0:
            hess = w * np.eye(n) if k == 2.0 else np.zeros((n, n))
        else:
            u = d / r
            hess = w * r ** (k - 2.0) * (np.eye(n) + (k - 2.0) * np.outer(u, u))
    return value, grad, hess


@dataclass
class RegularizerStack:
    """Ordered power-prox terms; treated as immutable between epoch pushes."""

    power: float
    terms: list = field(default_factory=list)

    def push(self, center, weight):
        if self.terms and weight <= 0:
            raise ValueError("weights after the first push must be strictly positive")
        self.terms.append(PowerProxTerm(center=center, weight=weight, power=self.power))

    @property
    def sigma_current(self):
        """Running sum of weights, recomputed to avoid drift."""
        return float(sum(t.weight for t in self.terms))

    def eval(self, x, order=0):
        x = np.asarray(x, dtype=float)
        n = x.shape[0]
        value = 0.0
        grad = np.zeros(n) if order >= 1 else None
        hess = np.zeros((n, n)) if order >= 2 else None
        for t in self.terms:
            v, g, H = prox_eval(t, x, order)
            value += v
            if order >= 1:
                grad += g
            if order >= 2:
                hess += H
        return value, grad, hess

    def grad(self, x):
        return self.eval(x, 1)[1]


class ComposedOracle(ProblemOracle):
    """Oracle for f_s = base + stack; counts against the base oracle only."""

    def __init__(self, base: ProblemOracle, stack: RegularizerStack):
        self.dim = base.dim
        self.known = None
        self.base = base
        self.stack = stack

    @property
    def counter(self):
        return self.base.counter

    def eval(self, x, order=0):
        f, g, H = self.base.eval(x, order)
        v, gv, Hv = self.stack.eval(np.asarray(x, dtype=float), order)
        f = f + v
        if order >= 1:
            g = g + gv
        if order >= 2:
            H = H + Hv
        return f, g, H

    def reset_counter(self):
        self.base.reset_counter()


def compose(base: ProblemOracle, stack: RegularizerStack) -> ComposedOracle:
    """Oracle evaluating f_s; each call forwards exactly once to the base."""
    return ComposedOracle(base, stack)


def recover_subgradient(stack: RegularizerStack, grad_fs, x):
    """Exact gradient of the plain objective given the composed gradient."""
    grad_fs = np.asarray(grad_fs, dtype=float)
    if not stack.terms:
        return grad_fs
    return grad_fs - stack.grad(x)


def correction_norm_bound(stack: RegularizerStack, x) -> float:
    """sum_i w_i ||x - c_i||^(kappa-1); dominates ||grad f - grad f_s|| at x."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for t in stack.terms:
        r = float(np.linalg.norm(x - t.center))
        total += t.weight * r ** (t.power - 1.0)
    return total


def derivative_lipschitz_addon(p, nu):
    """Per-unit-weight increase of the order-p Holder constant from one term.

    Generic bound (2/kappa) * prod_{i<=p} (i+nu); exact values are used for
    the two flat cases kappa = 2.
    """
    kappa = p + nu
    if kappa < 2:
        raise ValueError("p + nu must be >= 2")
    if p == 1 and nu == 1.0:
        return 1.0          # quadratic term: exact gradient-Lipschitz addon
    if p == 2 and nu == 0.0:
        return 0.0          # constant Hessian: no Holder-0 variation
    prod = 1.0
    for i in range(1, int(p) + 1):
        prod *= i + nu
    return 2.0 / kappa * prod
