"""Admissible-input sets and minimally invasive safety filters.

Three constraint generators: the classic barrier condition on the state
point alone, the pointwise footprint condition at a chosen point y, and the
sampled-boundary condition that inflates each row by (B + gamma*A) * tau to
cover the discretization gap. Filters project the nominal input onto the
admissible set via the qp module; an infeasible projection is surfaced as an
explicit status, never papered over with a fallback input.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import qp
from .dynamics import ControlAffineSystem
from .geometry import BoundaryNet, ExtentFunction, SafeFunction, sample_boundary, transport_net


class ContractViolation(ValueError):
    pass


class ClassKFunction:
    """Continuous, strictly increasing, zero at zero."""

    def __call__(self, s: float) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class LinearK(ClassKFunction):
    gain: float = 1.0

    def __post_init__(self):
        if self.gain <= 0:
            raise ContractViolation("class-K gain must be positive")

    def __call__(self, s: float) -> float:
        return self.gain * float(s)


@dataclass(frozen=True)
class CubicK(ClassKFunction):
    gain: float = 1.0

    def __post_init__(self):
        if self.gain <= 0:
            raise ContractViolation("class-K gain must be positive")

    def __call__(self, s: float) -> float:
        return self.gain * float(s) ** 3


@dataclass(frozen=True)
class LipschitzConstants:
    """A bounds |dh/dy|; B bounds |dE/dx (f + g u)| over the admissible inputs."""

    A: float
    B: float
    provenance: str = "user"

    def __post_init__(self):
        if self.A < 0 or self.B < 0:
            raise ContractViolation("Lipschitz constants must be nonnegative")


@dataclass(frozen=True)
class LinearInputConstraint:
    """a' u >= b."""

    a: np.ndarray
    b: float

    def margin(self, u) -> float:
        return float(self.a @ np.asarray(u, dtype=float)) - self.b


@dataclass(frozen=True)
class Box:
    """Axis-aligned state-domain box used for constant estimation."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def build(cls, lo, hi) -> "Box":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ContractViolation("box must have hi > lo per axis")
        return cls(lo, hi)

    def grid(self, resolution: int) -> np.ndarray:
        if resolution < 2:
            raise ContractViolation("grid resolution must be at least 2 per axis")
        axes = [np.linspace(l, h, resolution) for l, h in zip(self.lo, self.hi)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([mm.ravel() for mm in mesh], axis=1)


def zcbf_constraint(h: SafeFunction, alpha: ClassKFunction, sys: ControlAffineSystem,
                    x) -> LinearInputConstraint:
    """Barrier condition on the state point: dh/dx (f + g u) + alpha(h) >= 0.

    h acts on the position coordinates; its state gradient is padded with
    zeros on non-position coordinates (heading does not move the point).
    """
    x = np.asarray(x, dtype=float)
    pos = x[: h.dim]
    grad_h = np.zeros(sys.n)
    grad_h[: h.dim] = h.gradient(pos)
    f = sys.drift(x)
    g = sys.actuation(x)
    a = g.T @ grad_h
    b = -float(grad_h @ f) - alpha(h.value(pos))
    return LinearInputConstraint(a=a, b=b)


def eccbf_pointwise(E: ExtentFunction, h: SafeFunction, alpha1: ClassKFunction,
                    alpha2: ClassKFunction, sys: ControlAffineSystem, x,
                    y) -> LinearInputConstraint:
    """Footprint condition at one point: dE/dx (f + g u) + a1(E) + a2(h(y)) >= 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    grad = E.gradient_x(x, y)
    f = sys.drift(x)
    g = sys.actuation(x)
    a = g.T @ grad
    b = -float(grad @ f) - alpha1(E.value(x, y)) - alpha2(h.value(y))
    return LinearInputConstraint(a=a, b=b)


def estimate_constants(E: ExtentFunction, h: SafeFunction, sys: ControlAffineSystem,
                       domain: Box, resolution: int, *, margin: float = 1.1,
                       boundary_samples: int = 64) -> LipschitzConstants:
    """Grid-maximize the two Lipschitz bounds over the domain box.

    A maximizes |dh/dy| over the position coordinates of the box. B maximizes
    |dE/dx . f| + M * |(dE/dx . g)|, the exact inner supremum over |u| <= M,
    with x on the box grid and y on the footprint boundary at x (the sampled
    rows only ever evaluate dE/dx there, and the extent derivative of the
    built-in shapes grows without bound far from the footprint).
    """
    if resolution < 2:
        raise ContractViolation("resolution must be at least 2 per axis")
    if domain.lo.size != sys.n:
        raise ContractViolation("domain box must match the state dimension")

    pos_box = Box(domain.lo[: h.dim], domain.hi[: h.dim])
    A = 0.0
    for y in pos_box.grid(resolution):
        A = max(A, float(np.linalg.norm(h.gradient(y))))

    M = sys.input_bound
    angles = np.linspace(0.0, 2.0 * np.pi, boundary_samples, endpoint=False)
    B = 0.0
    for x in domain.grid(resolution):
        f = sys.drift(x)
        g = sys.actuation(x)
        for y in E.boundary_points(x, angles):
            grad = E.gradient_x(x, y)
            B = max(B, abs(float(grad @ f)) + M * float(np.linalg.norm(g.T @ grad)))

    return LipschitzConstants(A=A * margin, B=B * margin,
                              provenance=f"grid(resolution={resolution}, margin={margin})")


def sampled_constraints(E: ExtentFunction, h: SafeFunction, net: BoundaryNet,
                        consts: LipschitzConstants, gamma: float,
                        sys: ControlAffineSystem, x) -> list:
    """One inflated row per net sample:

    dE(x, y*)/dx (f + g u) + gamma * h(y*) >= (B + gamma * A) * tau.
    """
    if gamma <= 0:
        raise ContractViolation("gamma must be positive")
    if net.covering_radius > net.tau / 2 + 1e-12:
        raise ContractViolation("net is not certified: covering radius exceeds tau/2")
    x = np.asarray(x, dtype=float)
    f = sys.drift(x)
    g = sys.actuation(x)
    inflation = (consts.B + gamma * consts.A) * net.tau
    rows = []
    for y in net.samples:
        grad = E.gradient_x(x, y)
        a = g.T @ grad
        b = inflation - float(grad @ f) - gamma * h.value(y)
        rows.append(LinearInputConstraint(a=a, b=b))
    return rows


def filter_input(constraints, k_input, M: float, tol: float = 1e-8,
                 max_iter: int = 50_000) -> qp.QPSolution:
    """Minimally invasive projection of the nominal input onto the admissible set."""
    k_input = np.asarray(k_input, dtype=float)
    if not np.all(np.isfinite(k_input)):
        raise ContractViolation("nominal input must be finite")
    problem = qp.HalfspaceQP.build(k_input, [(c.a, c.b) for c in constraints], M)
    return qp.solve(problem, tol=tol, max_iter=max_iter)


# ---------------------------------------------------------------------------
# filter front-ends used by the simulation loop
# ---------------------------------------------------------------------------


@dataclass
class FilterStep:
    u: np.ndarray
    status: str
    active: bool
    solve_ms: float


class SafetyFilter:
    """Per-step input filter; implementations are immutable after construction."""

    name = "none"

    def apply(self, x, u_nom) -> FilterStep:
        raise NotImplementedError


class NoFilter(SafetyFilter):
    name = "none"

    def apply(self, x, u_nom) -> FilterStep:
        return FilterStep(u=np.asarray(u_nom, dtype=float), status=qp.OPTIMAL,
                          active=False, solve_ms=0.0)


class ZcbfFilter(SafetyFilter):
    name = "zcbf"

    def __init__(self, h: SafeFunction, alpha: ClassKFunction, sys: ControlAffineSystem,
                 qp_tol: float = 1e-8):
        self.h = h
        self.alpha = alpha
        self.sys = sys
        self.qp_tol = qp_tol

    def apply(self, x, u_nom) -> FilterStep:
        start = time.perf_counter()
        row = zcbf_constraint(self.h, self.alpha, self.sys, x)
        sol = filter_input([row], u_nom, self.sys.input_bound, tol=self.qp_tol)
        ms = (time.perf_counter() - start) * 1e3
        active = bool(np.linalg.norm(sol.u - u_nom) > 1e-9)
        return FilterStep(u=sol.u, status=sol.status, active=active, solve_ms=ms)


class SampledExtentFilter(SafetyFilter):
    """Sampled-boundary footprint filter.

    The net is certified once at the canonical state and transported to the
    current state by the footprint's rigid motion each step (isometries
    preserve the covering radius); non-rigid extents are re-certified per
    step. Requires the QP tolerance to sit far below the safety inflation.
    """

    name = "sampled"

    def __init__(self, E: ExtentFunction, h: SafeFunction, consts: LipschitzConstants,
                 gamma: float, n_samples: int, sys: ControlAffineSystem, *,
                 start_angle: float = 0.0, qp_tol: float = 1e-8):
        if gamma <= 0:
            raise ContractViolation("gamma must be positive")
        self.E = E
        self.h = h
        self.consts = consts
        self.gamma = gamma
        self.n_samples = n_samples
        self.sys = sys
        self.start_angle = start_angle
        self.qp_tol = qp_tol
        self._base_state = E.canonical_state()
        self._base_net = sample_boundary(E, self._base_state, n_samples,
                                         start_angle=start_angle)
        inflation = (consts.B + gamma * consts.A) * self._base_net.tau
        if inflation > 0 and qp_tol > inflation / 100.0:
            raise ContractViolation(
                f"QP tolerance {qp_tol} is not far below the safety inflation {inflation}")

    def net_at(self, x) -> BoundaryNet:
        if self.E.rigid:
            return transport_net(self.E, self._base_net, self._base_state, x)
        return sample_boundary(self.E, x, self.n_samples, start_angle=self.start_angle)

    def apply(self, x, u_nom) -> FilterStep:
        start = time.perf_counter()
        net = self.net_at(x)
        rows = sampled_constraints(self.E, self.h, net, self.consts, self.gamma,
                                   self.sys, x)
        sol = filter_input(rows, u_nom, self.sys.input_bound, tol=self.qp_tol)
        ms = (time.perf_counter() - start) * 1e3
        active = bool(np.linalg.norm(sol.u - u_nom) > 1e-9)
        return FilterStep(u=sol.u, status=sol.status, active=active, solve_ms=ms)
