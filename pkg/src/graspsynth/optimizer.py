"""Levenberg-Marquardt for residual problems on a manifold.

A problem exposes ``linearize(x) -> (r, J)``, ``residuals(x) -> r`` and
``retract(x, delta) -> x'``.  :class:`GraspObjective` satisfies this with
hand poses; :class:`VectorProblem` wraps plain functions on R^n.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

log = logging.getLogger(__name__)

STOP_REASONS = ("step", "objective", "gradient", "max_iters", "solver_error")


@dataclass(frozen=True)
class LmParams:
    max_iters: int = 100
    mu0: float = 1e-3
    mu_up: float = 10.0
    mu_down: float = 0.3
    eps_x: float = 1e-8
    eps_f: float = 1e-10
    eps_g: float = 1e-8
    mu_max: float = 1e16

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if min(self.mu0, self.eps_x, self.eps_f, self.eps_g) <= 0:
            raise ValueError("mu0 and tolerances must be > 0")
        if self.mu_up <= 1.0 or self.mu_down >= 1.0 or self.mu_down <= 0:
            raise ValueError("need mu_up > 1 and 0 < mu_down < 1")


@dataclass
class LmResult:
    x: Any
    cost: float
    iterations: int
    reason: str
    trace: list[float] = field(default_factory=list)
    records: list[dict] = field(default_factory=list, repr=False)

    @property
    def accepted(self) -> int:
        return len(self.trace) - 1

    def write_trace(self, path) -> None:
        with open(path, "w") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec) + "\n")


class VectorProblem:
    """Residuals over flat parameter vectors, with an optional analytic Jacobian."""

    def __init__(self, fun: Callable, jac: Callable | None = None, fd_step: float = 1e-7):
        self.fun = fun
        self.jac = jac
        self.fd_step = fd_step

    def residuals(self, x):
        return np.asarray(self.fun(x), dtype=np.float64)

    def linearize(self, x):
        r = self.residuals(x)
        if self.jac is not None:
            return r, np.asarray(self.jac(x), dtype=np.float64)
        J = np.empty((len(r), len(x)))
        for i in range(len(x)):
            e = np.zeros(len(x))
            e[i] = self.fd_step
            J[:, i] = (self.residuals(x + e) - self.residuals(x - e)) / (2 * self.fd_step)
        return r, J

    def retract(self, x, delta):
        return np.asarray(x, dtype=np.float64) + delta


def _norm_x(x) -> float:
    if hasattr(x, "t"):
        return float(np.sqrt(x.t @ x.t + x.d @ x.d))
    return float(np.linalg.norm(x))


def _stationary(g, J, cost: float, eps: float) -> bool:
    """Cosine between r and every Jacobian column at most ``eps`` (invariant to residual scale)."""
    if cost <= 0.0:
        return True
    cols = np.sqrt(np.einsum("ij,ij->j", J, J))
    cos = np.abs(g[cols > 0]) / (cols[cols > 0] * np.sqrt(cost))
    return float(cos.max(initial=0.0)) <= eps


def lm_minimize(problem, init, params: LmParams | None = None) -> LmResult:
    """Minimize sum(r**2).  Steps are accepted only if the true cost drops."""
    p = params or LmParams()
    x = init
    r, J = problem.linearize(x)
    cost = float(r @ r)
    trace = [cost]
    records = [{"iter": 0, "L": cost, "mu": p.mu0, "step": 0.0, "accepted": True}]
    mu = p.mu0
    reason = "max_iters"
    it = 0
    while it < p.max_iters:
        g = J.T @ r
        if not np.all(np.isfinite(g)):
            reason = "solver_error"
            break
        if _stationary(g, J, cost, p.eps_g):
            reason = "gradient"
            break
        it += 1
        A = J.T @ J
        diag = np.diag(A).copy()
        floor = float(diag.max(initial=0.0)) * 1e-12
        diag = np.maximum(diag, floor)
        try:
            delta = np.linalg.solve(A + mu * np.diag(diag), -g)
        except np.linalg.LinAlgError:
            reason = "solver_error"
            break
        if not np.all(np.isfinite(delta)):
            reason = "solver_error"
            break
        step = float(np.linalg.norm(delta))
        if step <= p.eps_x * (_norm_x(x) + p.eps_x):
            reason = "step"
            break
        x_new = problem.retract(x, delta)
        r_new = problem.residuals(x_new)
        cost_new = float(r_new @ r_new)
        ok = np.isfinite(cost_new) and cost_new < cost
        records.append({"iter": it, "L": cost_new, "mu": mu, "step": step, "accepted": bool(ok)})
        if ok:
            rel = (cost - cost_new) / max(cost, 1e-300)
            x, cost = x_new, cost_new
            trace.append(cost)
            mu = max(mu * p.mu_down, 1e-20)
            if rel <= p.eps_f:
                reason = "objective"
                break
            r, J = problem.linearize(x)
        else:
            mu *= p.mu_up
            if mu > p.mu_max:
                reason = "step"
                break
    return LmResult(x, cost, it, reason, trace, records)
