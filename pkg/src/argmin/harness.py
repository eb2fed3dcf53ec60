"""Experiment runner: reproducible problem generation, algorithm dispatch,
CSV trace emission, and empirical rate fitting.

A configuration is a flat JSON document (see README for the schema).  The
same configuration always produces byte-identical CSV output: problem
generation is seeded, algorithms are deterministic, and wall-clock columns
are only written when explicitly enabled.
"""

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import ar, uniform
from .errors import AlgorithmAbort
from .problems import dist_to_opt, make_problem

ALGORITHMS = ("acnm", "ar_cubic", "ar_general", "ar_pf", "guess_d",
              "uniform_restart", "uniform_pf")

_CSV_COLUMNS = ("epoch", "iter", "calls0", "calls1", "calls2", "f",
                "grad_norm", "grad_fs_norm", "sigma", "L_est",
                "lower_resid", "upper_resid")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    problem: dict
    algorithm: str
    eps_grid: list
    p: int = 2
    nu: float = 1.0
    seed: int = 0
    C_A: float = 80.0
    regime: str = "hoelder"
    L0: float = 1.0
    sigma0: float = 1.0
    q: float | None = None
    sigma_q: float | None = None
    iters: int = 100
    cubic_tol: float = 1e-10
    epoch_cap: int = 200
    r2_samples: int = 0
    timing: bool = False
    out: str = "runs"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; "
                              f"choose from {ALGORITHMS}")
        if not isinstance(self.problem, dict) or "family" not in self.problem:
            raise ConfigError("problem must be a mapping with a 'family' key")
        eps = [float(e) for e in self.eps_grid]
        if not eps or any(e <= 0 for e in eps):
            raise ConfigError("eps_grid must contain positive values")
        if len(eps) > 1 and not all(b < a for a, b in zip(eps, eps[1:])):
            raise ConfigError("eps_grid must be strictly decreasing")
        self.eps_grid = eps
        if self.p not in (1, 2):
            raise ConfigError("p must be 1 or 2")

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    @classmethod
    def from_file(cls, path):
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from None
        return cls.from_dict(data)

    def canonical(self, eps=None):
        d = {
            "problem": self.problem, "algorithm": self.algorithm,
            "p": self.p, "nu": self.nu, "seed": self.seed, "C_A": self.C_A,
            "regime": self.regime, "L0": self.L0, "sigma0": self.sigma0,
            "q": self.q, "sigma_q": self.sigma_q, "iters": self.iters,
            "cubic_tol": self.cubic_tol, "epoch_cap": self.epoch_cap,
            "r2_samples": self.r2_samples,
        }
        if eps is not None:
            d["eps"] = eps
        else:
            d["eps_grid"] = self.eps_grid
        return d

    def config_hash(self, eps=None):
        blob = json.dumps(self.canonical(eps), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def build_problem(spec, seed):
    """Generate a problem instance and a start point from a seeded RNG.

    Returns (oracle, x0, info) where info holds whatever reference data the
    generation makes exact (minimizer-based distance, planted solution).
    """
    rng = np.random.default_rng(seed)
    family = spec["family"]
    dim = int(spec.get("dim", 5))
    offset = float(spec.get("offset", 1.0))
    info = {}

    if family == "quadratic":
        cond = float(spec.get("cond", 10.0))
        eigs = np.logspace(-math.log10(cond), 0.0, dim)
        Q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        A = (Q * eigs) @ Q.T
        xbar = rng.standard_normal(dim)
        oracle = make_problem("quadratic", A=A, b=A @ xbar)
    elif family == "cubic_power":
        rows = int(spec.get("rows", 2 * dim))
        scale = float(spec.get("scale", 1.0))
        A = scale * rng.standard_normal((rows, dim))
        xbar = rng.standard_normal(dim)
        oracle = make_problem("cubic_power", A=A, b=A @ xbar)
    elif family == "power_norm":
        q = float(spec.get("q", 3.0))
        xbar = rng.standard_normal(dim)
        oracle = make_problem("power_norm", q=q, center=xbar)
    elif family == "logistic":
        rows = int(spec.get("rows", 4 * dim))
        reg = float(spec.get("reg", 0.1))
        A = rng.standard_normal((rows, dim))
        w = rng.standard_normal(dim)
        y = np.sign(A @ w + 0.1 * rng.standard_normal(rows))
        y[y == 0] = 1.0
        oracle = make_problem("logistic", A=A, y=y, reg=reg)
        xbar = w
    elif family == "logsumexp":
        rows = int(spec.get("rows", 4 * dim))
        t = float(spec.get("t", 1.0))
        A = rng.standard_normal((rows, dim))
        A -= A.mean(axis=0)
        b = rng.standard_normal(rows)
        oracle = make_problem("logsumexp", A=A, b=b, t=t)
        xbar = np.zeros(dim)
    else:
        raise ConfigError(f"unknown problem family {family!r}")

    u = rng.standard_normal(dim)
    x0 = xbar + offset * u / np.linalg.norm(u)
    info["planted"] = xbar
    return oracle, x0, info


@dataclass
class RunRecord:
    config_hash: str
    eps: float
    rows: list
    summary: dict


def run_experiment(cfg: ExperimentConfig, eps=None) -> RunRecord:
    """Execute the configured algorithm for one accuracy target."""
    eps = float(eps if eps is not None else cfg.eps_grid[0])
    oracle, x0, info = build_problem(cfg.problem, cfg.seed)
    h = cfg.config_hash(eps)
    summary = {"algorithm": cfg.algorithm, "eps": eps, "termination": "ok"}
    rows = []

    try:
        if cfg.algorithm == "acnm":
            L3 = oracle.known.L3
            if L3 is None:
                raise ConfigError("acnm requires a problem with a known L3")
            from .subroutines import acnm_run
            res = acnm_run(oracle, x0, M=2 * L3,
                           C=12 * L3 / (math.sqrt(2) - 1) ** 2, N=cfg.iters,
                           cubic_tol=cfg.cubic_tol, r2_samples=cfg.r2_samples,
                           rng=np.random.default_rng(cfg.seed + 1))
            rows = res.trace.rows
            final_grad = float(np.linalg.norm(res.grad_fs_at_out))
        elif cfg.algorithm in ("ar_cubic", "ar_general"):
            D = dist_to_opt(oracle, x0)
            if cfg.algorithm == "ar_cubic":
                sched = ar.schedule_cubic(eps, D, oracle.known.L3)
                out = ar.ar_run(oracle, x0, sched, sub="acnm", p=2, nu=1.0,
                                cubic_tol=cfg.cubic_tol)
            else:
                L = oracle.known.L3 if cfg.p == 2 else oracle.known.L2
                sched = ar.schedule_general(eps, D, L, cfg.p, cfg.nu, cfg.C_A,
                                            cfg.regime)
                sub = "acnm" if cfg.p == 2 else "agd"
                out = ar.ar_run(oracle, x0, sched, sub=sub, p=cfg.p, nu=cfg.nu,
                                cubic_tol=cfg.cubic_tol)
            rows = out.trace.rows
            final_grad = out.grad_norm
            summary["epochs"] = out.meta["epochs_run"]
        elif cfg.algorithm == "ar_pf":
            D = dist_to_opt(oracle, x0)
            sigma1 = eps / (3.0 * (9.0 * D) ** (cfg.p + cfg.nu - 1.0))
            out = ar.ar_parameter_free(oracle, x0, sigma1, cfg.L0, cfg.p,
                                       nu=cfg.nu, cubic_tol=cfg.cubic_tol,
                                       epoch_cap=cfg.epoch_cap)
            rows = out.trace.rows
            final_grad = out.grad_norm
            summary["epochs"] = out.meta["epochs_run"]
        elif cfg.algorithm == "guess_d":
            out = ar.guess_and_check_D(oracle, x0, eps, cfg.L0, cfg.p,
                                       nu=cfg.nu, cubic_tol=cfg.cubic_tol,
                                       epoch_cap=cfg.epoch_cap)
            rows = out.trace.rows
            final_grad = out.grad_norm
            summary["rounds"] = out.meta["rounds"]
            summary["D0"] = out.meta["D0"]
        elif cfg.algorithm == "uniform_restart":
            q, sq = _uniform_constants(cfg, oracle)
            L = oracle.known.L3 if cfg.p == 2 else oracle.known.L2
            out = uniform.restart_uniform(oracle, x0, L=L, sigma_q=sq,
                                          p=cfg.p, q=q, eps=eps,
                                          cubic_tol=cfg.cubic_tol)
            rows = out.trace.rows
            final_grad = out.grad_norm
            summary["epochs"] = out.meta["epochs_run"]
            summary["m_k"] = out.meta["m_k"]
        elif cfg.algorithm == "uniform_pf":
            out = uniform.pf_uniform(oracle, x0, cfg.sigma0, cfg.L0, cfg.p,
                                     eps, cubic_tol=cfg.cubic_tol,
                                     epoch_cap=cfg.epoch_cap)
            rows = out.trace.rows
            final_grad = out.grad_norm
            summary["quarterings"] = out.meta["quarterings"]
            summary["halvings"] = out.meta["halvings"]
    except AlgorithmAbort as e:
        summary["termination"] = f"abort: {type(e).__name__}: {e}"
        rows = e.trace.rows if e.trace is not None else []
        final_grad = math.nan

    calls = _total_calls(rows, oracle)
    summary.update({
        "final_grad": final_grad,
        "calls0": calls[0], "calls1": calls[1], "calls2": calls[2],
        "calls_p": calls[cfg.p if cfg.algorithm != "acnm" else 2],
    })
    return RunRecord(config_hash=h, eps=eps, rows=rows, summary=summary)


def _uniform_constants(cfg, oracle):
    if cfg.q is not None and cfg.sigma_q is not None:
        return float(cfg.q), float(cfg.sigma_q)
    if oracle.known.sigma_q is not None:
        return oracle.known.sigma_q
    raise ConfigError("uniform_restart needs q and sigma_q (config or problem)")


def _total_calls(rows, oracle):
    if rows:
        last = rows[-1]
        base = (last.calls0, last.calls1, last.calls2)
    else:
        base = (0, 0, 0)
    # the oracle counter includes post-run re-evaluations; prefer it
    snap = oracle.counter.snapshot()
    return tuple(max(a, b) for a, b in zip(base, snap))


def _fmt(x):
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        return format(x, ".17g")
    return str(x)


def emit_csv(rec: RunRecord, path, timing=False):
    """Write the per-iteration trace; floats carry 17 significant digits."""
    cols = list(_CSV_COLUMNS) + (["wall_ns"] if timing else [])
    try:
        with open(path, "w") as fh:
            fh.write(",".join(cols) + "\n")
            for r in rec.rows:
                vals = [r.epoch, r.k, r.calls0, r.calls1, r.calls2, r.f,
                        r.grad_norm if math.isnan(r.grad_base_norm)
                        else r.grad_base_norm,
                        r.grad_norm, r.sigma, r.L_est,
                        r.lower_relation_residual, r.upper_relation_residual]
                if timing:
                    vals.append(r.wall_ns)
                fh.write(",".join(_fmt(v) for v in vals) + "\n")
    except OSError as e:
        raise OSError(f"cannot write CSV to {path}: {e}") from None


def write_summary(records, path):
    """One summary row per record, sorted by config hash for determinism."""
    cols = ("config_hash", "eps", "algorithm", "final_grad",
            "calls0", "calls1", "calls2", "calls_p", "termination")
    recs = sorted(records, key=lambda r: r.config_hash)
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for r in recs:
            s = r.summary
            row = [r.config_hash, _fmt(r.eps), s["algorithm"],
                   _fmt(s["final_grad"]), s["calls0"], s["calls1"],
                   s["calls2"], s["calls_p"],
                   str(s["termination"]).replace(",", ";")]
            fh.write(",".join(str(v) for v in row) + "\n")


def read_summary(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        out = []
        for line in fh:
            parts = line.rstrip("\n").split(",")
            out.append(dict(zip(header, parts)))
    return out


def estimate_rate(records):
    """Least-squares slope of log(calls_p) against log(1/eps).

    Needs at least 4 records spanning two decades of eps; returns
    (slope, r_squared).
    """
    pts = []
    for r in records:
        if isinstance(r, RunRecord):
            eps, calls = r.eps, r.summary["calls_p"]
        else:
            eps, calls = float(r["eps"]), float(r["calls_p"])
        pts.append((eps, calls))
    if len(pts) < 4:
        raise ValueError("insufficient eps range: need >= 4 records")
    epss = np.array([p[0] for p in pts])
    if epss.max() / epss.min() < 99.0:
        raise ValueError("insufficient eps range: need >= 2 decades")
    x = np.log(1.0 / epss)
    y = np.log(np.array([p[1] for p in pts], dtype=float))
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return float(coef[0]), r2


def run_sweep(cfg: ExperimentConfig, out_dir=None, timing=None):
    """Run every grid point, write per-point CSVs and a merged summary."""
    out_dir = out_dir or cfg.out
    timing = cfg.timing if timing is None else timing
    os.makedirs(out_dir, exist_ok=True)
    records = []
    for eps in cfg.eps_grid:
        rec = run_experiment(cfg, eps)
        emit_csv(rec, os.path.join(out_dir, f"run_{rec.config_hash[:12]}.csv"),
                 timing=timing)
        records.append(rec)
    write_summary(records, os.path.join(out_dir, "summary.csv"))
    return records
