"""Nonlinear-program solving behind a backend-neutral interface.

A problem is anything with the dense evaluation interface produced by the
transcription (objective/gradient, vector constraints with lower/upper
bounds and Jacobian, variable boxes).  The reference backend is a dense
SQP (scipy's SLSQP: L1-merit line search and damped BFGS updates) wrapped
with a wall-clock budget, an equality-feasibility polish, and post-hoc
optimality verification from estimated multipliers, so a returned
"optimal" status never merely trusts the inner solver.  An interior-point
adapter (trust-constr) ships as a second backend; third-party solvers can
register through the same hook.
"""
from __future__ import annotations

import enum
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.optimize as sopt

log = logging.getLogger(__name__)

_BACKEND_ENV = "UGVPLAN_NLP_BACKEND"


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    MAX_TIME = "max_time"
    MAX_ITER = "max_iter"
    INFEASIBLE = "infeasible"
    # honest catch-all for solver exits that verify as neither optimal nor
    # infeasible (e.g. a stalled line search at a feasible point)
    NOT_OPTIMAL = "not_optimal"


@dataclass(frozen=True)
class NlpSolveOptions:
    feasibility_tol: float = 1e-6
    optimality_tol: float = 1e-4
    max_wall_time: float = 300.0
    max_iterations: int = 500
    backend: str | None = None  # None -> env var -> "reference"
    ftol: float | None = None  # inner-solver convergence tolerance (auto)
    polish: bool = True
    retry_from_cold: bool = True
    active_tol: float = 1e-4
    verbose: bool = False

    def __post_init__(self):
        if min(self.feasibility_tol, self.optimality_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_wall_time <= 0:
            raise ValueError("max_wall_time must be positive")

    @property
    def inner_ftol(self) -> float:
        if self.ftol is not None:
            return self.ftol
        return 1e-2 * min(self.feasibility_tol, self.optimality_tol)


@dataclass
class WarmStart:
    variables: np.ndarray
    multipliers: np.ndarray | None = None


@dataclass
class NlpSolution:
    variables: np.ndarray
    objective: float
    status: SolveStatus
    kkt_stationarity_residual: float
    max_constraint_violation: float
    solve_time: float
    iterations: int = 0
    multipliers: np.ndarray | None = None  # signed, one per constraint row
    bound_multipliers: np.ndarray | None = None
    message: str = ""


@dataclass(frozen=True)
class KktResiduals:
    stationarity: float
    feasibility: float
    complementarity: float
    partial: bool = False


class DenseNlp:
    """Small adapter giving plain callables the transcription interface.

    Used for generic NLPs (tests, examples); derivative fallbacks are
    central differences.
    """

    def __init__(self, n, objective, gradient=None, constraints=None,
                 jacobian=None, c_lower=None, c_upper=None,
                 lower=None, upper=None):
        self.n_variables = n
        self._objective = objective
        self._gradient = gradient
        self._constraints = constraints
        self._jacobian = jacobian
        m = 0 if constraints is None else np.atleast_1d(
            np.asarray(constraints(np.zeros(n)), dtype=float)).size
        self.n_constraints = m
        self.constraint_lower = (np.zeros(m) if c_lower is None
                                 else np.broadcast_to(c_lower, (m,)).astype(float))
        self.constraint_upper = (np.zeros(m) if c_upper is None
                                 else np.broadcast_to(c_upper, (m,)).astype(float))
        self.equality_mask = self.constraint_lower == self.constraint_upper
        self.lower_bounds = (np.full(n, -np.inf) if lower is None
                             else np.broadcast_to(lower, (n,)).astype(float))
        self.upper_bounds = (np.full(n, np.inf) if upper is None
                             else np.broadcast_to(upper, (n,)).astype(float))

    def objective(self, z):
        return float(self._objective(np.asarray(z, dtype=float)))

    def objective_gradient(self, z):
        if self._gradient is not None:
            return np.asarray(self._gradient(np.asarray(z, dtype=float)), dtype=float)
        return finite_diff_jacobian(self._objective, z)[0]

    def constraint_values(self, z):
        if self._constraints is None:
            return np.empty(0)
        return np.atleast_1d(np.asarray(self._constraints(np.asarray(z, dtype=float)),
                                        dtype=float))

    def constraint_jacobian(self, z):
        if self._constraints is None:
            return np.empty((0, self.n_variables))
        if self._jacobian is not None:
            return np.atleast_2d(np.asarray(self._jacobian(np.asarray(z, dtype=float)),
                                            dtype=float))
        return finite_diff_jacobian(self._constraints, z)

    def constraint_violation(self, z):
        z = np.asarray(z, dtype=float)
        c = self.constraint_values(z)
        parts = [
            np.maximum(c - self.constraint_upper, 0.0),
            np.maximum(self.constraint_lower - c, 0.0),
            np.maximum(z - self.upper_bounds, 0.0),
            np.maximum(self.lower_bounds - z, 0.0),
        ]
        return float(max(p.max(initial=0.0) for p in parts))

    def default_initial_guess(self):
        lo = np.where(np.isfinite(self.lower_bounds), self.lower_bounds, 0.0)
        hi = np.where(np.isfinite(self.upper_bounds), self.upper_bounds, 0.0)
        return 0.5 * (lo + hi)


def finite_diff_jacobian(fn: Callable, point, step: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of fn at point.

    fn may return a scalar or a vector; the result is always 2-D with one
    row per output.  Non-finite evaluations raise with the offending
    coordinate named.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    point = np.asarray(point, dtype=float).ravel()
    base = np.atleast_1d(np.asarray(fn(point), dtype=float))
    jac = np.zeros((base.size, point.size))
    for j in range(point.size):
        zp, zm = point.copy(), point.copy()
        zp[j] += step
        zm[j] -= step
        fp = np.atleast_1d(np.asarray(fn(zp), dtype=float))
        fm = np.atleast_1d(np.asarray(fn(zm), dtype=float))
        if not (np.all(np.isfinite(fp)) and np.all(np.isfinite(fm))):
            raise ValueError(f"non-finite evaluation while perturbing coordinate {j}")
        jac[:, j] = (fp - fm) / (2.0 * step)
    return jac


def estimate_multipliers(problem, z, active_tol: float = 1e-4):
    """Least-squares multipliers at z and the resulting stationarity residual.

    Active inequality and bound columns enter a nonnegative least-squares
    fit of the objective gradient; equalities enter with free sign.
    Returns (row_multipliers, bound_multipliers, stationarity, complementarity).
    """
    z = np.asarray(z, dtype=float)
    g = problem.objective_gradient(z)
    c = problem.constraint_values(z)
    jac = problem.constraint_jacobian(z)
    n = z.size

    cols: list[np.ndarray] = []
    meta: list[tuple[str, int, float]] = []  # (kind, index, sign)
    for i in range(c.size):
        lo, hi = problem.constraint_lower[i], problem.constraint_upper[i]
        if problem.equality_mask[i]:
            cols.append(jac[i])
            meta.append(("row", i, 1.0))
            cols.append(-jac[i])
            meta.append(("row", i, -1.0))
        else:
            if np.isfinite(hi) and c[i] >= hi - active_tol:
                cols.append(jac[i])
                meta.append(("row", i, 1.0))
            if np.isfinite(lo) and c[i] <= lo + active_tol:
                cols.append(-jac[i])
                meta.append(("row", i, -1.0))
    lb, ub = problem.lower_bounds, problem.upper_bounds
    for j in range(n):
        if np.isfinite(ub[j]) and z[j] >= ub[j] - active_tol:
            e = np.zeros(n)
            e[j] = 1.0
            cols.append(e)
            meta.append(("bound", j, 1.0))
        if np.isfinite(lb[j]) and z[j] <= lb[j] + active_tol:
            e = np.zeros(n)
            e[j] = -1.0
            cols.append(e)
            meta.append(("bound", j, -1.0))

    row_mult = np.zeros(c.size)
    bound_mult = np.zeros(n)
    if not cols:
        return row_mult, bound_mult, float(np.abs(g).max(initial=0.0)), 0.0

    a = np.stack(cols, axis=1)
    coeff, _ = sopt.nnls(a, -g)
    residual = g + a @ coeff
    for (kind, idx, sign), w in zip(meta, coeff):
        if kind == "row":
            row_mult[idx] += sign * w
        else:
            bound_mult[idx] += sign * w

    compl = 0.0
    for i in range(c.size):
        if problem.equality_mask[i] or row_mult[i] == 0.0:
            continue
        lo, hi = problem.constraint_lower[i], problem.constraint_upper[i]
        slack = (hi - c[i]) if row_mult[i] > 0 else (c[i] - lo)
        compl = max(compl, abs(row_mult[i]) * abs(slack))
    return row_mult, bound_mult, float(np.abs(residual).max(initial=0.0)), compl


def check_kkt(problem, solution: NlpSolution, tol: float = 1e-6) -> KktResiduals:
    """Recompute KKT residuals for a solution against its problem.

    Without stored multipliers only feasibility can be assessed; the
    result is then flagged partial.
    """
    z = np.asarray(solution.variables, dtype=float)
    feas = problem.constraint_violation(z)
    if solution.multipliers is None:
        return KktResiduals(float("nan"), feas, float("nan"), partial=True)
    g = problem.objective_gradient(z)
    jac = problem.constraint_jacobian(z)
    stat_vec = g + jac.T @ solution.multipliers
    if solution.bound_multipliers is not None:
        stat_vec = stat_vec + solution.bound_multipliers
    c = problem.constraint_values(z)
    compl = 0.0
    for i in range(c.size):
        if problem.equality_mask[i] or solution.multipliers[i] == 0.0:
            continue
        lo, hi = problem.constraint_lower[i], problem.constraint_upper[i]
        slack = (hi - c[i]) if solution.multipliers[i] > 0 else (c[i] - lo)
        compl = max(compl, abs(solution.multipliers[i]) * abs(slack))
    return KktResiduals(float(np.abs(stat_vec).max(initial=0.0)), feas, compl)


def _polish_equalities(problem, z, feas_tol, max_steps=4):
    """Gauss-Newton projection onto the equality manifold (defect cleanup)."""
    eq = np.flatnonzero(problem.equality_mask)
    if eq.size == 0:
        return z
    target = problem.constraint_lower[eq]
    best = z
    for _ in range(max_steps):
        r = problem.constraint_values(best)[eq] - target
        if np.abs(r).max(initial=0.0) <= 0.25 * feas_tol:
            break
        jac = problem.constraint_jacobian(best)[eq]
        step, *_ = np.linalg.lstsq(jac, -r, rcond=None)
        cand = np.clip(best + step, problem.lower_bounds, problem.upper_bounds)
        if problem.constraint_violation(cand) > problem.constraint_violation(best):
            break
        best = cand
    return best


class _TimeBudgetExceeded(Exception):
    pass


def _finalize(problem, z, opts, status_hint, n_iter, t_start, message=""):
    """Clip, polish, verify and assemble the solution record."""
    z = np.clip(np.asarray(z, dtype=float), problem.lower_bounds,
                problem.upper_bounds)
    if status_hint == "nonfinite":
        return NlpSolution(
            variables=z, objective=float("nan"), status=SolveStatus.INFEASIBLE,
            kkt_stationarity_residual=float("inf"),
            max_constraint_violation=float("inf"),
            solve_time=time.perf_counter() - t_start, iterations=n_iter,
            message=message,
        )
    if opts.polish and status_hint == "success":
        z = _polish_equalities(problem, z, opts.feasibility_tol)
    viol = problem.constraint_violation(z)
    row_mult, bound_mult, stationarity, _ = estimate_multipliers(
        problem, z, opts.active_tol)

    if status_hint == "timeout":
        status = SolveStatus.MAX_TIME
    elif status_hint == "maxiter":
        status = SolveStatus.MAX_ITER
    elif viol > opts.feasibility_tol:
        status = SolveStatus.INFEASIBLE
    elif status_hint == "success" and stationarity <= opts.optimality_tol:
        status = SolveStatus.OPTIMAL
    else:
        status = SolveStatus.NOT_OPTIMAL

    return NlpSolution(
        variables=z,
        objective=problem.objective(z),
        status=status,
        kkt_stationarity_residual=stationarity,
        max_constraint_violation=viol,
        solve_time=time.perf_counter() - t_start,
        iterations=n_iter,
        multipliers=row_mult,
        bound_multipliers=bound_mult,
        message=message,
    )


def _start_point(problem, warm):
    if warm is not None:
        z0 = np.asarray(warm.variables, dtype=float)
        if z0.size != problem.n_variables:
            raise ValueError(
                f"warm start length {z0.size} != problem size {problem.n_variables}")
    else:
        z0 = problem.default_initial_guess()
    return np.clip(z0, problem.lower_bounds, problem.upper_bounds)


def _solve_slsqp(problem, warm, opts):
    t_start = time.perf_counter()
    z0 = _start_point(problem, warm)

    f0 = problem.objective(z0)
    c0 = problem.constraint_values(z0)
    if not (np.isfinite(f0) and np.all(np.isfinite(c0))):
        return _finalize(problem, z0, opts, "nonfinite", 0, t_start,
                         "non-finite objective/constraints at the start point")

    eq_idx = np.flatnonzero(problem.equality_mask)
    ineq_up = np.flatnonzero(~problem.equality_mask
                             & np.isfinite(problem.constraint_upper))
    ineq_lo = np.flatnonzero(~problem.equality_mask
                             & np.isfinite(problem.constraint_lower))

    constraints = []
    if eq_idx.size:
        target = problem.constraint_lower[eq_idx]
        constraints.append({
            "type": "eq",
            "fun": lambda z: problem.constraint_values(z)[eq_idx] - target,
            "jac": lambda z: problem.constraint_jacobian(z)[eq_idx],
        })
    if ineq_up.size or ineq_lo.size:
        ub = problem.constraint_upper[ineq_up]
        lb = problem.constraint_lower[ineq_lo]

        def ineq_fun(z):
            c = problem.constraint_values(z)
            return np.concatenate([ub - c[ineq_up], c[ineq_lo] - lb])

        def ineq_jac(z):
            jac = problem.constraint_jacobian(z)
            return np.vstack([-jac[ineq_up], jac[ineq_lo]])

        constraints.append({"type": "ineq", "fun": ineq_fun, "jac": ineq_jac})

    state = {"iters": 0, "last": z0.copy()}

    def callback(zk):
        state["iters"] += 1
        state["last"] = np.asarray(zk, dtype=float).copy()
        if opts.verbose:
            log.info("slsqp iter %d: f=%.6g viol=%.3g", state["iters"],
                     problem.objective(zk), problem.constraint_violation(zk))
        if time.perf_counter() - t_start > opts.max_wall_time:
            raise _TimeBudgetExceeded

    try:
        res = sopt.minimize(
            problem.objective, z0, jac=problem.objective_gradient,
            bounds=sopt.Bounds(problem.lower_bounds, problem.upper_bounds),
            constraints=constraints, method="SLSQP", callback=callback,
            options={"maxiter": opts.max_iterations, "ftol": opts.inner_ftol},
        )
    except _TimeBudgetExceeded:
        return _finalize(problem, state["last"], opts, "timeout",
                         state["iters"], t_start, "wall-clock budget exhausted")

    hint = "success" if res.success else (
        "maxiter" if res.status == 9 else "failed")
    sol = _finalize(problem, res.x, opts, hint, int(res.nit), t_start,
                    str(res.message))
    if (sol.status in (SolveStatus.INFEASIBLE, SolveStatus.NOT_OPTIMAL)
            and warm is not None and opts.retry_from_cold):
        log.debug("retrying from the cold-start point (status %s)", sol.status)
        retry = _solve_slsqp(problem, None, opts)
        retry.solve_time = time.perf_counter() - t_start
        retry.iterations += sol.iterations
        if _better(retry, sol):
            return retry
    return sol


def _better(a: NlpSolution, b: NlpSolution) -> bool:
    rank = {SolveStatus.OPTIMAL: 0, SolveStatus.NOT_OPTIMAL: 1,
            SolveStatus.MAX_ITER: 2, SolveStatus.MAX_TIME: 3,
            SolveStatus.INFEASIBLE: 4}
    if rank[a.status] != rank[b.status]:
        return rank[a.status] < rank[b.status]
    return (a.max_constraint_violation, a.objective) < \
        (b.max_constraint_violation, b.objective)


def _solve_trust_constr(problem, warm, opts):
    t_start = time.perf_counter()
    z0 = _start_point(problem, warm)
    f0 = problem.objective(z0)
    c0 = problem.constraint_values(z0)
    if not (np.isfinite(f0) and np.all(np.isfinite(c0))):
        return _finalize(problem, z0, opts, "nonfinite", 0, t_start,
                         "non-finite objective/constraints at the start point")

    constraints = []
    if problem.constraint_lower.size:
        constraints.append(sopt.NonlinearConstraint(
            problem.constraint_values, problem.constraint_lower,
            problem.constraint_upper, jac=problem.constraint_jacobian))

    def callback(zk, _state):
        return time.perf_counter() - t_start > opts.max_wall_time

    res = sopt.minimize(
        problem.objective, z0, jac=problem.objective_gradient,
        bounds=sopt.Bounds(problem.lower_bounds, problem.upper_bounds),
        constraints=constraints, method="trust-constr", callback=callback,
        options={"maxiter": opts.max_iterations, "gtol": opts.optimality_tol,
                 "xtol": 1e-12, "verbose": 0},
    )
    if res.status == 0 and time.perf_counter() - t_start > opts.max_wall_time:
        hint = "timeout"
    elif res.status == 0:
        hint = "maxiter"
    else:
        hint = "success" if res.status in (1, 2) else "failed"
    return _finalize(problem, res.x, opts, hint, int(res.nit), t_start,
                     str(res.message))


_BACKENDS: dict[str, Callable] = {
    "reference": _solve_slsqp,
    "slsqp": _solve_slsqp,
    "trust-constr": _solve_trust_constr,
}


def register_backend(name: str, solver: Callable) -> None:
    """Register a third-party solver adapter under a backend name."""
    _BACKENDS[name.lower()] = solver


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def solve(problem, warm: WarmStart | None = None,
          opts: NlpSolveOptions | None = None) -> NlpSolution:
    """Solve the problem from an optional warm start, honestly reporting status.

    The backend comes from opts.backend, then the UGVPLAN_NLP_BACKEND
    environment variable, then the reference SQP.
    """
    opts = opts or NlpSolveOptions()
    name = (opts.backend or os.environ.get(_BACKEND_ENV) or "reference").lower()
    if name not in _BACKENDS:
        raise ValueError(f"unknown NLP backend {name!r}; "
                         f"available: {available_backends()}")
    return _BACKENDS[name](problem, warm, opts)
