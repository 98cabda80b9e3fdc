"""Network-operation mathematics: covariance-evolution prediction, the
threshold activation rule, and measurement-count allocation.

The allocation solver works on the continuous relaxation of the integer
program (minimize the predicted position-covariance trace subject to a
measurement budget) with projected gradient descent, then rounds. An exact
enumeration oracle is provided for small instances.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGeometryError, InvalidArgumentError, NumericFailureError
from .model import MotionModel, motion_matrices, symmetrize


def unit_direction(mu_j, mu_k) -> np.ndarray:
    """Unit vector from mu_j toward mu_k."""
    d = np.asarray(mu_k, dtype=float) - np.asarray(mu_j, dtype=float)
    n = np.linalg.norm(d)
    if n <= 1e-9:
        raise DegenerateGeometryError("coincident position means")
    return d / n


@dataclass(frozen=True)
class LinkInfo:
    """Per-link quantities needed by the operation algorithms."""

    neighbor: object  # NodeId
    u: np.ndarray  # unit direction (3,)
    xi: float  # ranging coefficient, 1/m^2
    c_pk: np.ndarray  # neighbor position covariance (3, 3)

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float)
        c = np.asarray(self.c_pk, dtype=float)
        if abs(np.linalg.norm(u) - 1.0) > 1e-9:
            raise InvalidArgumentError("direction vector must be unit norm")
        if self.xi < 0:
            raise InvalidArgumentError("ranging coefficient must be >= 0")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "c_pk", c)

    @property
    def rho(self) -> float:
        """xi * u^T C_pk u; directional neighbor uncertainty scaled by channel quality."""
        return float(self.xi * self.u @ self.c_pk @ self.u)


def info_intensity(m: float, link: LinkInfo) -> float:
    """Information intensity of m measurements over a link.

    c(m) = m xi / (1 + m xi u^T C_pk u); equals m xi for anchors (C_pk = 0).
    """
    if m < 0:
        raise InvalidArgumentError("measurement count must be >= 0")
    mx = m * link.xi
    return mx / (1.0 + m * link.rho)


@dataclass(frozen=True)
class AllocationProblem:
    c_pj: np.ndarray  # own position covariance (3, 3)
    links: tuple[LinkInfo, ...]
    budget: int

    def __post_init__(self):
        c = symmetrize(np.asarray(self.c_pj, dtype=float))
        if c.shape != (3, 3):
            raise InvalidArgumentError("own position covariance must be 3x3")
        if self.budget < 0:
            raise InvalidArgumentError("budget must be >= 0")
        links = tuple(self.links)
        ids = [l.neighbor for l in links]
        if len(set(ids)) != len(ids):
            raise InvalidArgumentError("links must address distinct neighbors")
        object.__setattr__(self, "c_pj", c)
        object.__setattr__(self, "links", links)


@dataclass(frozen=True)
class AllocationResult:
    m: np.ndarray  # integer counts per link
    objective: float  # predicted covariance trace at m
    relaxed_m: np.ndarray | None = None
    relaxed_objective: float | None = None
    converged: bool = True
    fallback: bool = False

    def __post_init__(self):
        m = np.asarray(self.m)
        if np.any(m < 0):
            raise InvalidArgumentError("allocation counts must be >= 0")
        object.__setattr__(self, "m", m)

    @property
    def total(self) -> int:
        return int(np.sum(self.m))


def _inverse_prior(c_pj: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.inv(c_pj)
    except np.linalg.LinAlgError:
        if np.trace(c_pj) <= 0:
            raise NumericFailureError("own position covariance is singular") from None
        try:
            return np.linalg.inv(c_pj + 1e-12 * np.eye(3))
        except np.linalg.LinAlgError:
            raise NumericFailureError(
                "own position covariance singular after regularization"
            ) from None


def predicted_covariance(problem: AllocationProblem, m) -> np.ndarray:
    """Position covariance predicted after performing the allocation m.

    C(m) = [C_pj^-1 + sum_k c_k(m_k) u_k u_k^T]^-1.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (len(problem.links),):
        raise InvalidArgumentError("allocation length must match number of links")
    j = _inverse_prior(problem.c_pj)
    for mk, link in zip(m, problem.links):
        c = info_intensity(float(mk), link)
        j = j + c * np.outer(link.u, link.u)
    try:
        out = np.linalg.inv(j)
    except np.linalg.LinAlgError:
        raise NumericFailureError("predicted information matrix is singular") from None
    return symmetrize(out)


def trace_reduction(problem: AllocationProblem, m) -> float:
    """Potential trace reduction of the own position covariance under m."""
    return float(np.trace(problem.c_pj) - np.trace(predicted_covariance(problem, m)))


def trace_increase(covariances, model: MotionModel, dt: float) -> float:
    """Total position-trace growth of the given subnetwork beliefs over dt seconds.

    Sums tr of the upper-left 3x3 block of A C A^T + Cw - C over the supplied
    (non-anchor) member covariances. Negative per-member terms are kept as-is.
    """
    if dt < 0:
        raise InvalidArgumentError("dt must be >= 0")
    a, cw = motion_matrices(model, dt)
    total = 0.0
    for c in covariances:
        c = np.asarray(c, dtype=float)
        growth = a @ c @ a.T + cw - c
        total += float(np.trace(growth[:3, :3]))
    return total


@dataclass(frozen=True)
class ActivationInputs:
    """Inputs to the activation decision for one agent at one epoch."""

    proposal: AllocationResult
    covariances: tuple  # own + non-anchor neighbor full-state covariances
    motion: MotionModel
    dt_s: float  # assumed channel access time for the proposal


def htna_decide(inputs: ActivationInputs, problem: AllocationProblem) -> bool:
    """Activate iff the own trace reduction exceeds the subnetwork trace increase."""
    reduction = trace_reduction(problem, inputs.proposal.m)
    increase = trace_increase(inputs.covariances, inputs.motion, inputs.dt_s)
    return reduction > increase


# --- allocation solvers ------------------------------------------------------


@dataclass(frozen=True)
class SolverOptions:
    max_iters: int = 2000
    tol: float = 1e-7  # on projected-gradient norm
    warm_start: np.ndarray | None = None


def _project_capped_simplex(x: np.ndarray, budget: float) -> np.ndarray:
    """Euclidean projection onto {y >= 0, sum(y) <= budget}."""
    y = np.maximum(x, 0.0)
    if y.sum() <= budget:
        return y
    # Project onto the simplex {y >= 0, sum(y) = budget}.
    u = np.sort(x)[::-1]
    css = np.cumsum(u)
    ks = np.arange(1, len(x) + 1)
    cond = u - (css - budget) / ks > 0
    k = ks[cond][-1]
    tau = (css[k - 1] - budget) / k
    return np.maximum(x - tau, 0.0)


def _objective_and_gradient(problem: AllocationProblem, m: np.ndarray):
    c = predicted_covariance(problem, m)
    obj = float(np.trace(c))
    grad = np.empty(len(problem.links))
    for i, link in enumerate(problem.links):
        # d tr(C)/dm_i = -c'(m_i) * u^T C^2 u
        denom = 1.0 + m[i] * link.rho
        dci = link.xi / (denom * denom)
        cu = c @ link.u
        grad[i] = -dci * float(cu @ cu)
    return obj, grad


def _pg_solve(problem: AllocationProblem, options: SolverOptions):
    n = len(problem.links)
    budget = float(problem.budget)
    if options.warm_start is not None and options.warm_start.shape == (n,):
        m = _project_capped_simplex(np.asarray(options.warm_start, dtype=float), budget)
    else:
        m = np.full(n, budget / n)
    obj, grad = _objective_and_gradient(problem, m)
    step = 1.0
    converged = False
    for _ in range(options.max_iters):
        pg = m - _project_capped_simplex(m - grad, budget)
        # Relative tolerance: the projected-gradient norm bottoms out at
        # round-off proportional to the gradient magnitude.
        if np.linalg.norm(pg) <= options.tol * (1.0 + np.linalg.norm(grad)):
            converged = True
            break
        # Backtracking line search on the projected step.
        improved = False
        for _ in range(60):
            cand = _project_capped_simplex(m - step * grad, budget)
            cand_obj, cand_grad = _objective_and_gradient(problem, cand)
            if cand_obj <= obj - 1e-4 * float(grad @ (m - cand)):
                m, obj, grad = cand, cand_obj, cand_grad
                step = min(step * 2.0, 1e6)
                improved = True
                break
            step *= 0.5
        if not improved:
            # The objective is convex, so a fully stalled line search means the
            # iterate is stationary to float precision.
            converged = True
            break
    return m, obj, converged


def _round_largest_remainder(m: np.ndarray, budget: int) -> np.ndarray:
    base = np.floor(m).astype(int)
    spare = min(budget, int(round(m.sum()))) - int(base.sum())
    if spare > 0:
        order = np.argsort(-(m - base), kind="stable")
        for idx in order[:spare]:
            base[idx] += 1
    return base


def _greedy_polish(problem: AllocationProblem, m: np.ndarray) -> np.ndarray:
    m = m.copy()
    n = len(m)

    def obj(v):
        return float(np.trace(predicted_covariance(problem, v)))

    current = obj(m)
    # Fill any remaining budget with the best single units.
    while m.sum() < problem.budget:
        best, best_obj = None, current
        for i in range(n):
            m[i] += 1
            o = obj(m)
            m[i] -= 1
            if o < best_obj - 1e-15:
                best, best_obj = i, o
        if best is None:
            break
        m[best] += 1
        current = best_obj
    # Single-unit exchanges that strictly improve, repeated to a fixed point.
    for _ in range(25):
        changed = False
        for a in range(n):
            for b in range(n):
                if a == b or m[a] == 0:
                    continue
                m[a] -= 1
                m[b] += 1
                o = obj(m)
                if o < current - 1e-15:
                    current = o
                    changed = True
                else:
                    m[a] += 1
                    m[b] -= 1
        if not changed:
            break
    return m


def cpnp_allocate(
    problem: AllocationProblem, options: SolverOptions = SolverOptions()
) -> AllocationResult:
    """Measurement-count allocation minimizing the predicted covariance trace.

    Solves the continuous relaxation by projected gradient descent, rounds by
    largest remainder under the budget, then applies a greedy single-unit
    improvement pass. Falls back to uniform allocation on non-convergence.
    """
    n = len(problem.links)
    if n < 1:
        raise InvalidArgumentError("allocation requires at least one link")
    if problem.budget == 0:
        zero = np.zeros(n, dtype=int)
        obj = float(np.trace(predicted_covariance(problem, zero)))
        return AllocationResult(zero, obj, zero.astype(float), obj, True, False)
    relaxed, relaxed_obj, converged = _pg_solve(problem, options)
    fallback = False
    if not converged or not np.all(np.isfinite(relaxed)):
        per = problem.budget // n
        relaxed = np.full(n, float(per))
        relaxed[: problem.budget - per * n] += 1.0
        relaxed_obj = float(np.trace(predicted_covariance(problem, relaxed)))
        fallback = True
    m = _round_largest_remainder(relaxed, problem.budget)
    m = _greedy_polish(problem, m)
    obj = float(np.trace(predicted_covariance(problem, m)))
    return AllocationResult(m, obj, relaxed, relaxed_obj, converged, fallback)


def brute_force_allocate(problem: AllocationProblem) -> AllocationResult:
    """Exact argmin over nonnegative integer allocations with sum <= budget.

    Enumeration only; limited to <= 5 links and budget <= 10. Ties broken
    lexicographically (first enumerated optimum kept).
    """
    n = len(problem.links)
    if n > 5 or problem.budget > 10:
        raise InvalidArgumentError("brute force limited to <= 5 links and budget <= 10")
    if n < 1:
        raise InvalidArgumentError("allocation requires at least one link")
    best_m = None
    best_obj = math.inf
    for combo in itertools.product(range(problem.budget + 1), repeat=n):
        if sum(combo) > problem.budget:
            continue
        obj = float(np.trace(predicted_covariance(problem, np.array(combo, dtype=float))))
        if obj < best_obj - 1e-15:
            best_obj = obj
            best_m = np.array(combo, dtype=int)
    return AllocationResult(best_m, best_obj)
