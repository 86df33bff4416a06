"""Levenberg-Marquardt for small dense nonlinear least squares.

Minimizes ``sum(residual_fn(x)**2)``. Damping follows Marquardt's diagonal
scaling: each trial step solves

    (J^T J + lam * diag(J^T J)) dx = -J^T r

with ``lam`` starting at 1e-3, divided by 10 after an accepted step and
multiplied by 10 after a rejected one. Without an analytic Jacobian, forward
differences with step ``max(1e-7, 1e-7 * |x_i|)`` are used.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import NonFiniteResidual

log = logging.getLogger(__name__)

ResidualFn = Callable[[np.ndarray], np.ndarray]
JacobianFn = Callable[[np.ndarray], np.ndarray]

TERMINATION_REASONS = ("gradient_tol", "step_tol", "cost_tol", "max_iter")


@dataclass(frozen=True)
class LsqProblem:
    residual_fn: ResidualFn
    jacobian_fn: Optional[JacobianFn] = None


@dataclass(frozen=True)
class LmOptions:
    gradient_tol: float = 1e-10
    step_tol: float = 1e-12
    cost_tol: float = 1e-15
    max_iter: int = 200
    initial_damping: float = 1e-3
    max_damping: float = 1e16


@dataclass(frozen=True)
class SolveReport:
    solution: np.ndarray
    final_cost: float
    iterations: int
    converged: bool
    termination_reason: str
    gradient_norm: float
    initial_cost: float
    cost_history: tuple = ()


def _checked(fn, x, what):
    r = np.asarray(fn(x), dtype=float).reshape(-1)
    if not np.all(np.isfinite(r)):
        raise NonFiniteResidual(f"non-finite {what} at parameters {x.tolist()}", params=x.copy())
    return r


def forward_difference_jacobian(fn: ResidualFn, x: np.ndarray, r0: np.ndarray | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if r0 is None:
        r0 = np.asarray(fn(x), dtype=float).reshape(-1)
    J = np.empty((r0.size, x.size))
    for i in range(x.size):
        h = max(1e-7, 1e-7 * abs(x[i]))
        xp = x.copy()
        xp[i] += h
        # the step actually taken after rounding
        h = xp[i] - x[i]
        J[:, i] = (np.asarray(fn(xp), dtype=float).reshape(-1) - r0) / h
    return J


def solve_lm(problem: LsqProblem, x0, options: LmOptions | None = None) -> SolveReport:
    opts = options or LmOptions()
    fn = problem.residual_fn
    x = np.array(x0, dtype=float).reshape(-1)

    def jacobian(x, r):
        if problem.jacobian_fn is not None:
            J = np.asarray(problem.jacobian_fn(x), dtype=float)
        else:
            J = forward_difference_jacobian(fn, x, r)
        if not np.all(np.isfinite(J)):
            raise NonFiniteResidual(f"non-finite Jacobian at parameters {x.tolist()}", params=x.copy())
        return J

    r = _checked(fn, x, "residual")
    cost = float(r @ r)
    initial_cost = cost
    history = [cost]
    lam = opts.initial_damping
    iterations = 0
    reason = "max_iter"
    J = jacobian(x, r)
    g = J.T @ r
    gnorm = float(np.max(np.abs(g))) if g.size else 0.0

    while True:
        if gnorm < opts.gradient_tol:
            reason = "gradient_tol"
            break
        if cost == 0.0:
            reason = "cost_tol"
            break
        if iterations >= opts.max_iter:
            reason = "max_iter"
            break
        iterations += 1

        JtJ = J.T @ J
        diag = np.diag(JtJ).copy()
        diag[diag <= 0.0] = max(float(diag.max(initial=0.0)) * 1e-12, 1e-300)
        accepted = False
        while True:
            A = JtJ + lam * np.diag(diag)
            try:
                dx = -np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                dx = -np.linalg.lstsq(A, g, rcond=None)[0]
            step_small = np.linalg.norm(dx) <= opts.step_tol * (np.linalg.norm(x) + opts.step_tol)
            x_new = x + dx
            r_new = _checked(fn, x_new, "residual")
            cost_new = float(r_new @ r_new)
            if cost_new < cost:
                accepted = True
                break
            if step_small or lam >= opts.max_damping:
                break
            lam *= 10.0

        if not accepted:
            reason = "step_tol"
            break

        rel_drop = (cost - cost_new) / cost
        x, r, cost = x_new, r_new, cost_new
        history.append(cost)
        lam = max(lam / 10.0, 1e-300)
        J = jacobian(x, r)
        g = J.T @ r
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if step_small:
            reason = "step_tol"
            break
        if rel_drop < opts.cost_tol:
            reason = "cost_tol"
            break

    converged = reason != "max_iter"
    log.debug("LM: %s after %d iterations, cost %.6g -> %.6g", reason, iterations, initial_cost, cost)
    return SolveReport(
        solution=x,
        final_cost=cost,
        iterations=iterations,
        converged=converged,
        termination_reason=reason,
        gradient_norm=gnorm,
        initial_cost=initial_cost,
        cost_history=tuple(history),
    )
