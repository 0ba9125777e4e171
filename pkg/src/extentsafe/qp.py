"""Euclidean projection onto halfspaces intersected with a norm ball.

Solves min |u - k|^2 subject to a_i' u >= b_i for finitely many rows and
|u|_2 <= M. Two solvers share the contract: an exact active-set enumeration
(default up to 16 rows, input dimension <= 3) and Dykstra's cyclic
projection for the many-row regime. A brute-force grid search over the ball
serves as an independent test oracle.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np


class ContractViolation(ValueError):
    pass


OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max_iterations"

ACTIVE_SET_ROW_LIMIT = 16


@dataclass(frozen=True)
class HalfspaceQP:
    target: np.ndarray           # k, shape (m,)
    rows_a: np.ndarray           # (n_rows, m)
    rows_b: np.ndarray           # (n_rows,)
    ball_radius: float

    @classmethod
    def build(cls, target, rows, ball_radius: float) -> "HalfspaceQP":
        target = np.asarray(target, dtype=float)
        if target.ndim != 1 or target.size < 1:
            raise ContractViolation("target must be a vector")
        m = target.size
        if rows:
            A = np.array([np.asarray(a, dtype=float) for a, _ in rows])
            b = np.array([float(bi) for _, bi in rows])
            if A.shape[1] != m:
                raise ContractViolation("constraint row dimension mismatch")
        else:
            A = np.zeros((0, m))
            b = np.zeros(0)
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))
                and np.all(np.isfinite(target))):
            raise ContractViolation("non-finite QP data")
        if ball_radius <= 0:
            raise ContractViolation("ball radius must be positive")
        return cls(target=target, rows_a=A, rows_b=b, ball_radius=float(ball_radius))

    @property
    def dim(self) -> int:
        return self.target.size

    @property
    def n_rows(self) -> int:
        return self.rows_a.shape[0]


@dataclass
class QPSolution:
    status: str
    u: np.ndarray
    objective: float
    iterations: int
    residual: float


def max_violation(problem: HalfspaceQP, u: np.ndarray) -> float:
    """Largest constraint violation at u (0 when feasible)."""
    viol = max(0.0, float(np.linalg.norm(u)) - problem.ball_radius)
    if problem.n_rows:
        slack = problem.rows_a @ u - problem.rows_b
        viol = max(viol, float(np.maximum(0.0, -slack).max()))
    return viol


def _split_degenerate_rows(problem: HalfspaceQP):
    """Zero rows with b > 0 are infeasible by construction; with b <= 0 vacuous."""
    norms = np.linalg.norm(problem.rows_a, axis=1) if problem.n_rows else np.zeros(0)
    zero = norms == 0.0
    if np.any(zero & (problem.rows_b > 0)):
        return None
    keep = ~zero
    return problem.rows_a[keep], problem.rows_b[keep]


def solve(problem: HalfspaceQP, tol: float = 1e-8, max_iter: int = 50_000) -> QPSolution:
    """Project the target onto the constraint set.

    Dispatches to the exact active-set enumeration at small row counts and to
    Dykstra's algorithm beyond that.
    """
    if tol <= 0:
        raise ContractViolation("tolerance must be positive")
    if problem.n_rows <= ACTIVE_SET_ROW_LIMIT and problem.dim <= 3:
        return solve_active_set(problem, tol)
    return solve_dykstra(problem, tol, max_iter)


# ---------------------------------------------------------------------------
# Dykstra's cyclic projection
# ---------------------------------------------------------------------------


def solve_dykstra(problem: HalfspaceQP, tol: float = 1e-8,
                  max_iter: int = 50_000) -> QPSolution:
    split = _split_degenerate_rows(problem)
    if split is None:
        return QPSolution(INFEASIBLE, problem.target.copy(), np.inf, 0, np.inf)
    A, b = split
    k = problem.target
    M = problem.ball_radius

    u = k.copy()
    if max_violation(problem, u) <= tol:
        return QPSolution(OPTIMAL, u, 0.0, 1, max_violation(problem, u))

    n_rows = A.shape[0]
    sq_norms = (A * A).sum(axis=1)
    corrections = np.zeros((n_rows + 1, problem.dim))  # one per halfspace + ball
    prev_end = u.copy()
    for cycle in range(1, max_iter + 1):
        for i in range(n_rows):
            w = u + corrections[i]
            gap = b[i] - A[i] @ w
            proj = w + (gap / sq_norms[i]) * A[i] if gap > 0 else w
            corrections[i] = w - proj
            u = proj
        w = u + corrections[n_rows]
        nrm = np.linalg.norm(w)
        proj = w * (M / nrm) if nrm > M else w
        corrections[n_rows] = w - proj
        u = proj

        moved = float(np.linalg.norm(u - prev_end))
        prev_end = u.copy()
        viol = max_violation(problem, u)
        if viol <= tol and moved <= tol:
            return QPSolution(OPTIMAL, u, float(np.sum((u - k) ** 2)), cycle, viol)
        # stalled iterate that stays violated certifies an empty intersection
        if cycle > 10 and moved < tol / 10.0 and viol > 10.0 * tol:
            return QPSolution(INFEASIBLE, u, np.inf, cycle, viol)

    viol = max_violation(problem, u)
    if viol > 10.0 * tol:
        return QPSolution(INFEASIBLE, u, np.inf, max_iter, viol)
    return QPSolution(MAX_ITERATIONS, u, float(np.sum((u - k) ** 2)), max_iter, viol)


# ---------------------------------------------------------------------------
# exact active-set enumeration (small instances)
# ---------------------------------------------------------------------------


def _equality_candidates(k, A_act, b_act, M, ball_active):
    """Minimizers of |u - k|^2 with the given rows tight (and the sphere, if asked)."""
    out = []
    if A_act.shape[0] == 0:
        if ball_active:
            nk = np.linalg.norm(k)
            out.append(k * (M / nk) if nk > 0 else
                       np.concatenate([[M], np.zeros(k.size - 1)]))
        else:
            out.append(k.copy())
        return out
    G = A_act @ A_act.T
    try:
        if not ball_active:
            u_eq = k - A_act.T @ np.linalg.solve(G, A_act @ k - b_act)
            out.append(u_eq)
            return out
        # sphere also tight: split into the affine particular solution and its null space
        u0 = A_act.T @ np.linalg.solve(G, b_act)
    except np.linalg.LinAlgError:
        return out
    r2 = M * M - float(u0 @ u0)
    if r2 < -1e-12:
        return out
    r = np.sqrt(max(r2, 0.0))
    _, s, vt = np.linalg.svd(A_act)
    rank = int(np.sum(s > 1e-12 * max(1.0, s[0] if s.size else 1.0)))
    Z = vt[rank:].T
    if Z.shape[1] == 0:
        out.append(u0)
        return out
    w = Z.T @ (k - u0)
    nw = np.linalg.norm(w)
    if nw > 1e-14:
        out.append(u0 + Z @ (r * w / nw))
    else:
        out.append(u0 + r * Z[:, 0])
    return out


def solve_active_set(problem: HalfspaceQP, tol: float = 1e-8) -> QPSolution:
    """Exact projection by enumerating candidate active sets.

    The optimum is the equality-constrained minimizer of some independent
    subset of at most dim tight rows (plus optionally the sphere), so the
    feasible candidate with the smallest objective is exact. Intended for
    dim <= 3 and modest row counts.
    """
    if problem.dim > 3:
        raise ContractViolation("active-set enumeration supports dimension <= 3")
    split = _split_degenerate_rows(problem)
    if split is None:
        return QPSolution(INFEASIBLE, problem.target.copy(), np.inf, 0, np.inf)
    A, b = split
    k, M = problem.target, problem.ball_radius

    best = None
    n_rows = A.shape[0]
    tried = 0
    for size in range(0, min(problem.dim, n_rows) + 1):
        for rows in itertools.combinations(range(n_rows), size):
            idx = list(rows)
            for ball_active in (False, True):
                tried += 1
                for cand in _equality_candidates(k, A[idx], b[idx], M, ball_active):
                    if max_violation(problem, cand) > tol:
                        continue
                    obj = float(np.sum((cand - k) ** 2))
                    if best is None or obj < best[1] - 1e-15:
                        best = (cand, obj)
    if best is None:
        return QPSolution(INFEASIBLE, k.copy(), np.inf, tried, np.inf)
    u = best[0]
    return QPSolution(OPTIMAL, u, best[1], tried, max_violation(problem, u))


# ---------------------------------------------------------------------------
# independent oracles (test-side)
# ---------------------------------------------------------------------------


def oracle_solve(problem: HalfspaceQP, grid_resolution: int = 500) -> QPSolution:
    """Best feasible grid point over the ball, refined around the winner twice.

    Exhaustive and solver-independent; only meant for verification at
    dimension <= 3.
    """
    if problem.dim > 3:
        raise ContractViolation("grid oracle supports dimension <= 3")
    M = problem.ball_radius
    k = problem.target

    def best_on_grid(lo, hi):
        axes = [np.linspace(lo[d], hi[d], grid_resolution) for d in range(problem.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([mm.ravel() for mm in mesh], axis=1)
        feas = (pts * pts).sum(axis=1) <= M * M
        if problem.n_rows:
            feas &= np.all(pts @ problem.rows_a.T >= problem.rows_b - 1e-12, axis=1)
        if not np.any(feas):
            return None
        pts = pts[feas]
        obj = ((pts - k) ** 2).sum(axis=1)
        j = int(np.argmin(obj))
        return pts[j], float(obj[j])

    lo = np.full(problem.dim, -M)
    hi = np.full(problem.dim, M)
    found = best_on_grid(lo, hi)
    if found is None:
        return QPSolution(INFEASIBLE, k.copy(), np.inf, 0, np.inf)
    u, obj = found
    width = 2.0 * M / (grid_resolution - 1)
    for _ in range(2):
        found = best_on_grid(u - 3 * width, u + 3 * width)
        if found is not None and found[1] <= obj:
            u, obj = found
        width = 6.0 * width / (grid_resolution - 1)
    return QPSolution(OPTIMAL, u, obj, grid_resolution, max_violation(problem, u))


def nonneg_lstsq(A: np.ndarray, b: np.ndarray, max_iter: int = 200):
    """Lawson-Hanson NNLS: min |Ax - b| with x >= 0. Returns (x, residual)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    n = A.shape[1]
    x = np.zeros(n)
    passive: list = []
    w = A.T @ (b - A @ x)
    for _ in range(max_iter):
        candidates = [j for j in range(n) if j not in passive and w[j] > 1e-12]
        if not candidates:
            break
        passive.append(max(candidates, key=lambda j: w[j]))
        while True:
            sub = A[:, passive]
            z, *_ = np.linalg.lstsq(sub, b, rcond=None)
            if np.all(z > 0):
                x = np.zeros(n)
                x[passive] = z
                break
            mask = z <= 0
            ratios = np.array([x[passive[i]] / (x[passive[i]] - z[i]) if mask[i] else np.inf
                               for i in range(len(passive))])
            alpha = float(ratios.min())
            for i, j in enumerate(passive):
                x[j] += alpha * (z[i] - x[j])
            passive = [j for j in passive if x[j] > 1e-14]
            if not passive:
                x = np.zeros(n)
                break
        w = A.T @ (b - A @ x)
    return x, float(np.linalg.norm(A @ x - b))


def kkt_certificate_residual(problem: HalfspaceQP, u: np.ndarray,
                             tol: float = 1e-6) -> float:
    """Stationarity check: (u - k) must lie in the cone of active-row normals
    plus -u when the ball is active. Returns the NNLS residual (0 = certified)."""
    cols = []
    if problem.n_rows:
        slack = problem.rows_a @ u - problem.rows_b
        for i in range(problem.n_rows):
            if slack[i] <= tol:
                cols.append(problem.rows_a[i])
    if np.linalg.norm(u) >= problem.ball_radius - tol:
        cols.append(-u)
    target = u - problem.target
    if not cols:
        return float(np.linalg.norm(target))
    _, res = nonneg_lstsq(np.stack(cols, axis=1), target)
    return res
