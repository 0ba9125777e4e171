"""Control-affine system models, nominal controllers, and fixed-step integration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class DynamicsError(RuntimeError):
    pass


class ContractViolation(ValueError):
    pass


def wrap_angle(a: float) -> float:
    """Wrap to [-pi, pi)."""
    return float((a + math.pi) % (2.0 * math.pi) - math.pi)


class ControlAffineSystem:
    """xdot = f(x) + g(x) u with an explicit 2-norm input bound."""

    n: int
    m: int
    input_bound: float

    def drift(self, x) -> np.ndarray:
        raise NotImplementedError

    def actuation(self, x) -> np.ndarray:
        raise NotImplementedError

    def wrap_state(self, x: np.ndarray) -> np.ndarray:
        return x

    def _check_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ContractViolation(f"state must have shape ({self.n},), got {x.shape}")
        return x


class SingleIntegrator(ControlAffineSystem):
    """xdot = u."""

    def __init__(self, n: int = 2, input_bound: float = 1.0):
        if input_bound <= 0:
            raise ContractViolation("input bound must be positive")
        self.n = n
        self.m = n
        self.input_bound = float(input_bound)

    def drift(self, x) -> np.ndarray:
        self._check_state(x)
        return np.zeros(self.n)

    def actuation(self, x) -> np.ndarray:
        self._check_state(x)
        return np.eye(self.n)


class Unicycle(ControlAffineSystem):
    """Planar unicycle: state (x1, x2, phi), input (v, omega)."""

    n = 3
    m = 2

    def __init__(self, input_bound: float = 1.0):
        if input_bound <= 0:
            raise ContractViolation("input bound must be positive")
        self.input_bound = float(input_bound)

    def drift(self, x) -> np.ndarray:
        self._check_state(x)
        return np.zeros(3)

    def actuation(self, x) -> np.ndarray:
        x = self._check_state(x)
        phi = x[2]
        return np.array([[math.cos(phi), 0.0],
                         [math.sin(phi), 0.0],
                         [0.0, 1.0]])

    def wrap_state(self, x: np.ndarray) -> np.ndarray:
        out = x.copy()
        out[2] = wrap_angle(out[2])
        return out


class CustomSystem(ControlAffineSystem):
    def __init__(self, n: int, m: int, f, g, input_bound: float = 1.0):
        self.n, self.m = n, m
        self.input_bound = float(input_bound)
        self._f, self._g = f, g

    def drift(self, x) -> np.ndarray:
        return np.asarray(self._f(self._check_state(x)), dtype=float)

    def actuation(self, x) -> np.ndarray:
        g = np.asarray(self._g(self._check_state(x)), dtype=float)
        if g.shape != (self.n, self.m):
            raise ContractViolation(f"g(x) must have shape ({self.n},{self.m})")
        return g


def step(sys: ControlAffineSystem, x, u, dt: float) -> np.ndarray:
    """Classical RK4 update under zero-order-hold input."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if dt <= 0:
        raise ContractViolation("dt must be positive")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
        raise DynamicsError("non-finite state or input")
    if np.linalg.norm(u) > sys.input_bound + 1e-9:
        raise ContractViolation("input magnitude exceeds the system bound")

    def xdot(z):
        return sys.drift(z) + sys.actuation(z) @ u

    k1 = xdot(x)
    k2 = xdot(x + 0.5 * dt * k1)
    k3 = xdot(x + 0.5 * dt * k2)
    k4 = xdot(x + dt * k3)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return sys.wrap_state(out)


def clip_to_ball(u: np.ndarray, bound: float) -> np.ndarray:
    nrm = np.linalg.norm(u)
    if nrm > bound:
        return u * (bound / nrm)
    return u


class NominalController:
    def input(self, x) -> np.ndarray:
        raise NotImplementedError


class GoToGoal(NominalController):
    """Proportional drive toward a fixed goal, clipped to the input bound.

    Single integrator: u = gain * (goal - x). Unicycle: v = gain * dist * cos(e),
    omega = heading_gain * e with e the wrapped heading error, which keeps the
    law continuous away from the goal and lets the speed drop to zero when the
    goal sits behind the robot.
    """

    def __init__(self, sys: ControlAffineSystem, goal, gain: float = 1.0,
                 heading_gain: float = 2.0):
        self.sys = sys
        self.goal = np.asarray(goal, dtype=float)
        self.gain = float(gain)
        self.heading_gain = float(heading_gain)

    def input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if isinstance(self.sys, Unicycle):
            delta = self.goal - x[:2]
            dist = float(np.linalg.norm(delta))
            if dist < 1e-12:
                return np.zeros(2)
            err = wrap_angle(math.atan2(delta[1], delta[0]) - x[2])
            u = np.array([self.gain * dist * math.cos(err), self.heading_gain * err])
        else:
            u = self.gain * (self.goal - x)
        return clip_to_ball(u, self.sys.input_bound)


class WaypointCycle(NominalController):
    """GoToGoal through a list of goals, advancing when within switch_radius.

    Holds the current waypoint index as per-run state; use one instance per
    simulation run.
    """

    def __init__(self, sys: ControlAffineSystem, goals, switch_radius: float = 0.1,
                 gain: float = 1.0, heading_gain: float = 2.0):
        self.sys = sys
        self.goals = [np.asarray(g, dtype=float) for g in goals]
        if not self.goals:
            raise ContractViolation("waypoint list must be nonempty")
        self.switch_radius = float(switch_radius)
        self.gain = float(gain)
        self.heading_gain = float(heading_gain)
        self.index = 0

    def input(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        pos = x[:2] if self.sys.n >= 2 else x
        if np.linalg.norm(self.goals[self.index] - pos[: len(self.goals[self.index])]) \
                < self.switch_radius:
            self.index = (self.index + 1) % len(self.goals)
        inner = GoToGoal(self.sys, self.goals[self.index], self.gain, self.heading_gain)
        return inner.input(x)


class ConstantInput(NominalController):
    def __init__(self, sys: ControlAffineSystem, u0):
        self.sys = sys
        self.u0 = clip_to_ball(np.asarray(u0, dtype=float), sys.input_bound)

    def input(self, x) -> np.ndarray:
        return self.u0.copy()


@dataclass
class Trajectory:
    """One row per control step; the post-step state lives in ``terminal_state``."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    min_boundary_h: np.ndarray
    filter_active: np.ndarray
    solve_ms: np.ndarray
    status: list
    terminal_state: np.ndarray = field(default=None)

    def __post_init__(self):
        n = len(self.times)
        for name in ("states", "inputs", "min_boundary_h", "filter_active",
                     "solve_ms", "status"):
            if len(getattr(self, name)) != n:
                raise ContractViolation(f"trajectory field {name} length mismatch")
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise ContractViolation("timestamps must be strictly increasing")

    def __len__(self):
        return len(self.times)
