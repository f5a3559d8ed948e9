"""Gauss-Newton for whitened nonlinear least squares."""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import linalg

from models.errors import SingularSystemError

logger = logging.getLogger(__name__)

ResidualFn = Callable[[np.ndarray], Tuple[np.ndarray, np.ndarray]]

MAX_CONDITION = 1e14
MAX_DAMPING_TRIES = 20


@dataclass(frozen=True, eq=False)
class SolveResult:
    state: np.ndarray
    cost: float
    iterations: int
    converged: bool
    history: List[float] = field(default_factory=list)


def _cost(r: np.ndarray) -> float:
    return 0.5 * float(r @ r)


def _condition(h: np.ndarray) -> float:
    try:
        return float(np.linalg.cond(h))
    except np.linalg.LinAlgError:
        return float("inf")


def gauss_newton_solve(
    residual: ResidualFn,
    x0,
    max_iters: int = 50,
    tol: float = 1e-10,
    levenberg: bool = False,
    project: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> SolveResult:
    """Minimize 0.5 |r(x)|^2 from `x0`; `residual` returns (r, J).

    Each step solves (J^T J) d = -J^T r. The loop stops once |d| < tol, or
    after `max_iters` applied steps. A rank-deficient normal matrix raises
    SingularSystemError unless `levenberg` is set, in which case lambda*I is
    added, and grown while a step would increase the cost. `project` maps
    every accepted state back onto its feasible set.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    r, jac = residual(x)
    cost = _cost(r)
    history = [cost]
    iterations = 0
    converged = False
    lam = 0.0
    n = x.size
    while iterations < max_iters:
        h = jac.T @ jac
        g = jac.T @ r
        cond = _condition(h)
        if not np.isfinite(cond) or cond > MAX_CONDITION:
            if not levenberg:
                raise SingularSystemError("Normal matrix is rank deficient", condition=cond)
            lam = max(lam, 1e-9 * max(float(np.trace(h)) / n, 1.0))
        for _ in range(MAX_DAMPING_TRIES):
            delta = linalg.solve(h + lam * np.eye(n), -g, assume_a="sym")
            if np.linalg.norm(delta) < tol:
                break
            candidate = x + delta
            if project is not None:
                candidate = project(candidate)
            r_new, jac_new = residual(candidate)
            cost_new = _cost(r_new)
            if not levenberg or cost_new <= cost:
                break
            lam = max(10.0 * lam, 1e-9 * max(float(np.trace(h)) / n, 1.0))
        else:
            logger.debug("Damping did not find a descent step; stopping")
            break
        if np.linalg.norm(delta) < tol:
            converged = True
            break
        x, r, jac, cost = candidate, r_new, jac_new, cost_new
        history.append(cost)
        iterations += 1
        if levenberg:
            lam *= 0.1
    return SolveResult(state=x, cost=cost, iterations=iterations, converged=converged, history=history)
